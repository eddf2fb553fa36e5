//! First-order Debye function D₁(x) = (1/x) ∫₀ˣ t/(eᵗ − 1) dt.
//!
//! Two evaluation routes are provided. [`debye1`] is the fast one used inside
//! likelihood loops: a Bernoulli power series for |x| ≤ 2 and an exponentially
//! convergent tail series beyond. [`debye1_quadrature`] integrates the
//! definition directly with adaptive Simpson and serves as a reference.

use std::f64::consts::PI;

/// B₂ₖ / ((2k + 1)(2k)!), k = 1, 2, …
const SERIES: [f64; 16] = [
    2.777_777_777_777_777_62e-2,
    -2.777_777_777_777_777_78e-4,
    4.724_111_866_969_009_78e-6,
    -9.185_773_074_661_964_08e-8,
    1.897_886_998_897_100_05e-9,
    -4.064_761_645_144_225_60e-11,
    8.921_691_020_456_452_30e-13,
    -1.993_929_586_072_107_44e-14,
    4.518_980_029_619_918_25e-16,
    -1.035_651_761_218_124_72e-17,
    2.395_218_621_026_186_98e-19,
    -5.581_785_874_325_008_98e-21,
    1.309_150_755_418_321_25e-22,
    -3.087_419_802_426_740_29e-24,
    7.315_975_652_702_202_93e-26,
    -1.740_845_657_234_000_88e-27,
];

const SERIES_LIMIT: f64 = 2.0;
const QUADRATURE_SERIES_LIMIT: f64 = 1e-4;

/// Σₖ cₖ x^(2k−2), the even series shared by D₁ and the Frank τ map.
fn even_series(x: f64) -> f64 {
    let x2 = x * x;
    SERIES.iter().rev().fold(0.0, |acc, &c| acc * x2 + c)
}

/// ∫ₓ^∞ t/(eᵗ − 1) dt for x > 0, via Σₖ e^(−kx) (x/k + 1/k²).
fn upper_tail(x: f64) -> f64 {
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-kf * x).exp() * (x / kf + 1.0 / (kf * kf));
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// D₁(x) for any real x; D₁(0) = 1.
pub fn debye1(x: f64) -> f64 {
    if x < 0.0 {
        // D₁(−a) = D₁(a) + a/2
        return debye1(-x) - x / 2.0;
    }
    if x <= SERIES_LIMIT {
        1.0 - x / 4.0 + x * x * even_series(x)
    } else {
        (PI * PI / 6.0 - upper_tail(x)) / x
    }
}

/// 4(1 − D₁(θ))/θ written without cancellation: 1 − τ_Frank(θ).
pub(crate) fn frank_tau(theta: f64) -> f64 {
    let a = theta.abs();
    let tau = if a <= SERIES_LIMIT {
        4.0 * a * even_series(a)
    } else {
        1.0 - 4.0 / a * (1.0 - debye1(a))
    };
    tau.copysign(theta)
}

fn integrand(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 - t / 2.0
    } else {
        t / t.exp_m1()
    }
}

/// D₁ by adaptive Simpson quadrature with absolute tolerance `tol` on the integral.
///
/// Falls back to the two-term series below |x| < 1e-4.
pub fn debye1_quadrature(x: f64, tol: f64) -> f64 {
    if x.abs() < QUADRATURE_SERIES_LIMIT {
        return 1.0 - x / 4.0 + x * x / 36.0;
    }
    let integral = adaptive_simpson(integrand, 0.0, x, tol);
    integral / x
}

/// Adaptive Simpson on [a, b] (b may be below a).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
