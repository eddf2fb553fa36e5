//! Gauss–Legendre rules on [−1, 1].

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_{n−1}(x)
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Tensor-product rule over the rectangle [a₁, b₁] × [a₂, b₂].
pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(mut f: F, n: usize, x: (f64, f64), y: (f64, f64)) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let (hx, cx) = (0.5 * (x.1 - x.0), 0.5 * (x.1 + x.0));
    let (hy, cy) = (0.5 * (y.1 - y.0), 0.5 * (y.1 + y.0));
    let mut total = 0.0;
    for (xi, wi) in nodes.iter().zip(&weights) {
        for (yj, wj) in nodes.iter().zip(&weights) {
            total += wi * wj * f(cx + hx * xi, cy + hy * yj);
        }
    }
    total * hx * hy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tensor_rule() {
        let v = integrate_2d(|x, y| x * y, 8, (0.0, 1.0), (0.0, 2.0));
        assert!((v - 1.0).abs() < 1e-14);
    }
}
