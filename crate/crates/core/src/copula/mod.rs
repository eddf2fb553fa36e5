//! Bivariate Archimedean copulas (Clayton, Frank, Gumbel).
//!
//! Each family is a one-parameter model indexed by `theta`. The parameter is
//! in bijection with Kendall's τ, which is the coordinate used for likelihood
//! maximization (see [`fit`]). Evaluation goes through log-space formulas so
//! that parameters close to the comonotone limit do not overflow.

mod debye;
pub mod fit;

use std::fmt;
use std::str::FromStr;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect_increasing, brent_root};

pub use debye::{adaptive_simpson, debye1, debye1_quadrature};
pub use fit::{fit_mle, fit_mle_with, FitOptions, FitResult, DEFAULT_MIN_FIT_N};

/// |τ| below this is evaluated as the independence copula.
pub const INDEPENDENCE_TAU: f64 = 1e-7;

const FRANK_BRACKET: f64 = 50.0;
const GUMBEL_INVERSE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Clayton,
    Frank,
    Gumbel,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Clayton, Family::Frank, Family::Gumbel];

    pub fn name(self) -> &'static str {
        match self {
            Family::Clayton => "clayton",
            Family::Frank => "frank",
            Family::Gumbel => "gumbel",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clayton" => Ok(Family::Clayton),
            "frank" => Ok(Family::Frank),
            "gumbel" => Ok(Family::Gumbel),
            other => Err(Error::Config(format!("unknown copula family `{other}`"))),
        }
    }
}

/// An open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// A point strictly inside the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitPair {
    u: f64,
    v: f64,
}

impl UnitPair {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0 {
            Ok(Self { u, v })
        } else {
            Err(Error::Boundary { u, v })
        }
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn v(&self) -> f64 {
        self.v
    }
}

/// Per-point logarithms reused across likelihood evaluations.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PreparedPair {
    pub u: f64,
    pub v: f64,
    pub ln_u: f64,
    pub ln_v: f64,
    /// ln(−ln u)
    pub lln_u: f64,
    /// ln(−ln v)
    pub lln_v: f64,
}

impl PreparedPair {
    pub fn new(p: UnitPair) -> Self {
        let ln_u = p.u.ln();
        let ln_v = p.v.ln();
        Self { u: p.u, v: p.v, ln_u, ln_v, lln_u: (-ln_u).ln(), lln_v: (-ln_v).ln() }
    }
}

/// ln(eᵃ + eᵇ − 1) for a, b ≥ 0.
#[inline]
fn ln_sum_exp_minus_one(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let rest = if lo < 1.0 { (-hi).exp() * lo.exp_m1() } else { (lo - hi).exp() - (-hi).exp() };
    hi + rest.ln_1p()
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// A copula family together with its admissible parameter ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CopulaSpec {
    family: Family,
}

impl CopulaSpec {
    pub fn new(family: Family) -> Self {
        Self { family }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta_domain(&self) -> Interval {
        match self.family {
            Family::Clayton => Interval { lo: 0.0, hi: f64::INFINITY },
            Family::Frank => Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
            Family::Gumbel => Interval { lo: 1.0, hi: f64::INFINITY },
        }
    }

    pub fn tau_domain(&self) -> Interval {
        match self.family {
            Family::Clayton | Family::Gumbel => Interval { lo: 0.0, hi: 1.0 },
            Family::Frank => Interval { lo: -1.0, hi: 1.0 },
        }
    }

    /// Parameter value of the independence copula.
    pub fn independence_theta(&self) -> f64 {
        match self.family {
            Family::Clayton | Family::Frank => 0.0,
            Family::Gumbel => 1.0,
        }
    }

    /// Whether `theta` is close enough to independence that |τ| < 1e-7.
    pub fn is_independence(&self, theta: f64) -> bool {
        match self.family {
            Family::Clayton => theta < 2.0 * INDEPENDENCE_TAU,
            Family::Frank => theta.abs() < 9.0 * INDEPENDENCE_TAU,
            Family::Gumbel => theta - 1.0 < INDEPENDENCE_TAU,
        }
    }

    /// Accepts the open domain plus its independence endpoint.
    pub fn check_theta(&self, theta: f64) -> Result<()> {
        let ok = theta.is_finite()
            && match self.family {
                Family::Clayton => theta >= 0.0,
                Family::Frank => true,
                Family::Gumbel => theta >= 1.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain { family: self.family.name(), value: theta })
        }
    }

    fn check_tau(&self, tau: f64) -> Result<()> {
        let d = self.tau_domain();
        let ok = tau.is_finite()
            && tau < d.hi
            && match self.family {
                Family::Clayton | Family::Gumbel => tau >= 0.0,
                Family::Frank => tau > d.lo,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain { family: self.family.name(), value: tau })
        }
    }

    pub fn theta_to_tau(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(match self.family {
            Family::Clayton => theta / (theta + 2.0),
            Family::Gumbel => 1.0 - 1.0 / theta,
            Family::Frank => debye::frank_tau(theta),
        })
    }

    pub fn tau_to_theta(&self, tau: f64) -> Result<f64> {
        self.check_tau(tau)?;
        if tau.abs() < INDEPENDENCE_TAU {
            return Ok(self.independence_theta());
        }
        Ok(match self.family {
            Family::Clayton => 2.0 * tau / (1.0 - tau),
            Family::Gumbel => 1.0 / (1.0 - tau),
            Family::Frank => frank_theta(tau)?,
        })
    }

    /// log c_θ(u, v).
    pub fn log_density(&self, theta: f64, p: UnitPair) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.log_density_prepared(theta, &PreparedPair::new(p)))
    }

    pub fn density(&self, theta: f64, p: UnitPair) -> Result<f64> {
        self.log_density(theta, p).map(f64::exp)
    }

    /// Unchecked log-density; `theta` must already be admissible.
    #[inline]
    pub(crate) fn log_density_prepared(&self, theta: f64, p: &PreparedPair) -> f64 {
        if self.is_independence(theta) {
            return 0.0;
        }
        match self.family {
            Family::Clayton => {
                let ln_s = ln_sum_exp_minus_one(-theta * p.ln_u, -theta * p.ln_v);
                theta.ln_1p() - (1.0 + theta) * (p.ln_u + p.ln_v) - (2.0 + 1.0 / theta) * ln_s
            }
            Family::Frank => {
                if theta > 0.0 {
                    frank_log_density_pos(theta, p.u, p.v)
                } else {
                    // c_θ(u, v) = c_{−θ}(u, 1 − v)
                    frank_log_density_pos(-theta, p.u, 1.0 - p.v)
                }
            }
            Family::Gumbel => {
                let ln_a = log_add_exp(theta * p.lln_u, theta * p.lln_v);
                let ln_m = ln_a / theta;
                let m = ln_m.exp();
                -m + (theta - 1.0) * (p.lln_u + p.lln_v) - p.ln_u - p.ln_v
                    + (2.0 / theta - 2.0) * ln_a
                    + (m + theta - 1.0).ln()
                    - ln_m
            }
        }
    }

    /// C_θ(u, v) on the closed unit square.
    pub fn cdf(&self, theta: f64, u: f64, v: f64) -> Result<f64> {
        self.check_theta(theta)?;
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(Error::Input(format!("cdf argument ({u}, {v}) outside [0, 1]²")));
        }
        if u == 0.0 || v == 0.0 {
            return Ok(0.0);
        }
        if u == 1.0 {
            return Ok(v);
        }
        if v == 1.0 {
            return Ok(u);
        }
        if self.is_independence(theta) {
            return Ok(u * v);
        }
        let c = match self.family {
            Family::Clayton => {
                let ln_s = ln_sum_exp_minus_one(-theta * u.ln(), -theta * v.ln());
                (-ln_s / theta).exp()
            }
            Family::Frank => {
                if theta > 0.0 {
                    frank_cdf_pos(theta, u, v)
                } else {
                    u - frank_cdf_pos(-theta, u, 1.0 - v)
                }
            }
            Family::Gumbel => {
                let ln_a = log_add_exp(theta * (-u.ln()).ln(), theta * (-v.ln()).ln());
                (-(ln_a / theta).exp()).exp()
            }
        };
        Ok(c.clamp((u + v - 1.0).max(0.0), u.min(v)))
    }

    /// Conditional distribution ∂C/∂u evaluated at (u, v): P(V ≤ v | U = u).
    pub fn h_function(&self, theta: f64, u: f64, v: f64) -> Result<f64> {
        self.check_theta(theta)?;
        let p = UnitPair::new(u, v)?;
        Ok(self.h_unchecked(theta, p.u, p.v))
    }

    fn h_unchecked(&self, theta: f64, u: f64, v: f64) -> f64 {
        if self.is_independence(theta) {
            return v;
        }
        match self.family {
            Family::Clayton => {
                let ln_s = ln_sum_exp_minus_one(-theta * u.ln(), -theta * v.ln());
                (-(theta + 1.0) * u.ln() - (1.0 + 1.0 / theta) * ln_s).exp()
            }
            Family::Frank => {
                if theta > 0.0 {
                    frank_h_pos(theta, u, v)
                } else {
                    1.0 - frank_h_pos(-theta, u, 1.0 - v)
                }
            }
            Family::Gumbel => {
                let x = -u.ln();
                let y = -v.ln();
                let ln_a = log_add_exp(theta * x.ln(), theta * y.ln());
                let m = (ln_a / theta).exp();
                (-m + (1.0 / theta - 1.0) * ln_a + (theta - 1.0) * x.ln() + x).exp()
            }
        }
    }

    /// Solves ∂C/∂u(u, v) = w for v.
    pub fn h_inverse(&self, theta: f64, u: f64, w: f64) -> Result<f64> {
        self.check_theta(theta)?;
        let p = UnitPair::new(u, w)?;
        Ok(self.h_inverse_unchecked(theta, p.u, p.v))
    }

    fn h_inverse_unchecked(&self, theta: f64, u: f64, w: f64) -> f64 {
        if self.is_independence(theta) {
            return w;
        }
        let v = match self.family {
            Family::Clayton => {
                let alpha = -theta / (1.0 + theta) * w.ln();
                let beta = -theta * u.ln();
                let ln_x = alpha.exp_m1().ln() + beta;
                let ln_1p_x = if ln_x > 35.0 { ln_x + (-ln_x).exp().ln_1p() } else { ln_x.exp().ln_1p() };
                (-ln_1p_x / theta).exp()
            }
            Family::Frank => {
                if theta > 0.0 {
                    frank_h_inverse_pos(theta, u, w)
                } else {
                    1.0 - frank_h_inverse_pos(-theta, u, 1.0 - w)
                }
            }
            Family::Gumbel => bisect_increasing(
                |v| {
                    let v = v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                    self.h_unchecked(theta, u, v) - w
                },
                0.0,
                1.0,
                GUMBEL_INVERSE_TOL,
            ),
        };
        clamp_open(v)
    }

    /// Draws one pair by conditional inversion.
    pub fn sample_pair<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> UnitPair {
        let u: f64 = rng.sample(Open01);
        let w: f64 = rng.sample(Open01);
        let v = self.h_inverse_unchecked(theta, u, w);
        UnitPair { u, v }
    }

    /// `n` pairs from C_θ, deterministic in `seed`.
    pub fn sample(&self, theta: f64, n: usize, seed: u64) -> Result<Vec<UnitPair>> {
        self.check_theta(theta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| self.sample_pair(theta, &mut rng)).collect())
    }
}

fn clamp_open(x: f64) -> f64 {
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn frank_theta(tau: f64) -> Result<f64> {
    let target = tau.abs();
    let mut hi = FRANK_BRACKET;
    while debye::frank_tau(hi) < target {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Domain { family: "frank", value: tau });
        }
    }
    let theta = brent_root(|t| debye::frank_tau(t) - target, 0.0, hi, 1e-14 * hi.max(1.0), 300)
        .ok_or(Error::Domain { family: "frank", value: tau })?;
    Ok(theta.copysign(tau))
}

/// Frank log-density for θ > 0, factored so no term overflows or cancels.
#[inline]
fn frank_log_density_pos(theta: f64, u: f64, v: f64) -> f64 {
    let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
    let gap = hi - lo;
    let denom = -(-theta * hi).exp_m1() - (-theta * gap).exp() * (-theta * (1.0 - hi)).exp_m1();
    theta.ln() + (-(-theta).exp_m1()).ln() - theta * gap - 2.0 * denom.ln()
}

fn frank_cdf_pos(theta: f64, u: f64, v: f64) -> f64 {
    let r = (-theta * u).exp_m1() * (-theta * v).exp_m1() / (-theta).exp_m1();
    if r > -0.5 {
        return -r.ln_1p() / theta;
    }
    // 1 + r as a sum of non-negative terms; avoids cancellation near r = -1.
    let num = -(-theta * u).exp() * (-theta * v).exp_m1() - (-theta * v).exp() * (-theta * (1.0 - v)).exp_m1();
    -(num.ln() - (-(-theta).exp_m1()).ln()) / theta
}

fn frank_h_pos(theta: f64, u: f64, v: f64) -> f64 {
    let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
    let denom = -(-theta * hi).exp_m1() - (-theta * (hi - lo)).exp() * (-theta * (1.0 - hi)).exp_m1();
    -(-theta * v).exp_m1() * (-theta * (u - lo)).exp() / denom
}

fn frank_h_inverse_pos(theta: f64, u: f64, w: f64) -> f64 {
    let r = w * (-theta).exp_m1() / (w + (1.0 - w) * (-theta * u).exp());
    if r > -0.5 {
        return -r.ln_1p() / theta;
    }
    let num = log_add_exp(w.ln() - theta, (1.0 - w).ln() - theta * u);
    let den = log_add_exp(w.ln(), (1.0 - w).ln() - theta * u);
    -(num - den) / theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    fn pair(u: f64, v: f64) -> UnitPair {
        UnitPair::new(u, v).unwrap()
    }

    fn spec(f: Family) -> CopulaSpec {
        CopulaSpec::new(f)
    }

    /// ∂²C/∂u∂v by central differences with step h.
    fn fd_density(s: &CopulaSpec, theta: f64, u: f64, v: f64, h: f64) -> f64 {
        let c = |a, b| s.cdf(theta, a, b).unwrap();
        (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h)) / (4.0 * h * h)
    }

    #[test]
    fn frank_near_zero_is_independence() {
        let ld = spec(Family::Frank).log_density(1e-8, pair(0.3, 0.7)).unwrap();
        assert!(ld.abs() < 1e-6);
    }

    #[test]
    fn gumbel_one_is_independence() {
        assert_eq!(spec(Family::Gumbel).log_density(1.0, pair(0.5, 0.5)).unwrap(), 0.0);
    }

    #[test]
    fn clayton_density_matches_cdf_differences() {
        let s = spec(Family::Clayton);
        let exact = s.density(2.0, pair(0.5, 0.5)).unwrap();
        let fd = fd_density(&s, 2.0, 0.5, 0.5, 1e-4);
        assert!((exact - fd).abs() < 1e-4, "{exact} vs {fd}");
    }

    #[test]
    fn density_matches_cdf_on_grid() {
        let grid = [0.2, 0.5, 0.8];
        for f in Family::ALL {
            let s = spec(f);
            for tau in [-0.5, 0.1, 0.5, 0.8] {
                if !s.tau_domain().contains(tau) {
                    continue;
                }
                let theta = s.tau_to_theta(tau).unwrap();
                for &u in &grid {
                    for &v in &grid {
                        let exact = s.density(theta, pair(u, v)).unwrap();
                        let fd = fd_density(&s, theta, u, v, 1e-4);
                        assert!((exact - fd).abs() < 1e-4 * exact.max(1.0), "{f} τ={tau} ({u},{v}): {exact} vs {fd}");
                    }
                }
            }
        }
    }

    #[test]
    fn independence_cdf_is_product() {
        for f in Family::ALL {
            let s = spec(f);
            let c = s.cdf(s.independence_theta(), 0.2, 0.4).unwrap();
            assert!((c - 0.08).abs() < 1e-6);
        }
    }

    #[test]
    fn uniform_margin_at_upper_edge() {
        let s = spec(Family::Clayton);
        let u = 1.0 - f64::EPSILON;
        assert!((s.cdf(2.0, u, 0.37).unwrap() - 0.37).abs() < 1e-9);
        assert_eq!(s.cdf(2.0, 1.0, 0.37).unwrap(), 0.37);
        assert_eq!(s.cdf(2.0, 0.37, 1.0).unwrap(), 0.37);
    }

    #[test]
    fn frank_cdf_matches_density_quadrature() {
        let s = spec(Family::Frank);
        let (nodes, weights) = gauss_legendre(64);
        let mut integral = 0.0;
        for (xi, wi) in nodes.iter().zip(&weights) {
            for (xj, wj) in nodes.iter().zip(&weights) {
                let u = 0.25 * (xi + 1.0);
                let v = 0.25 * (xj + 1.0);
                integral += wi * wj * 0.0625 * s.density(5.0, pair(u, v)).unwrap();
            }
        }
        let c = s.cdf(5.0, 0.5, 0.5).unwrap();
        assert!((c - integral).abs() < 1e-5, "{c} vs {integral}");
    }

    #[test]
    fn closed_form_tau() {
        assert_eq!(spec(Family::Clayton).theta_to_tau(2.0).unwrap(), 0.5);
        assert_eq!(spec(Family::Gumbel).tau_to_theta(0.75).unwrap(), 4.0);
    }

    #[test]
    fn frank_inverse_against_quadrature_bisection() {
        // Oracle: bisection on θ with D₁ from adaptive Simpson.
        let tau_quad = |t: f64| 1.0 - 4.0 / t * (1.0 - debye1_quadrature(t, 1e-12));
        let oracle = bisect_increasing(|t| tau_quad(t) - 0.5, 0.1, 50.0, 1e-11);
        let s = spec(Family::Frank);
        let theta = s.tau_to_theta(0.5).unwrap();
        assert!((theta - oracle).abs() < 1e-8, "{theta} vs {oracle}");
        assert!((s.theta_to_tau(theta).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn domain_errors() {
        assert!(spec(Family::Clayton).log_density(-0.5, pair(0.5, 0.5)).is_err());
        assert!(spec(Family::Gumbel).cdf(0.5, 0.5, 0.5).is_err());
        assert!(spec(Family::Clayton).tau_to_theta(-0.2).is_err());
        assert!(spec(Family::Frank).tau_to_theta(1.0).is_err());
        assert!(UnitPair::new(0.0, 0.5).is_err());
        assert!(UnitPair::new(0.5, 1.0).is_err());
    }

    #[test]
    fn h_inverse_round_trips() {
        for f in Family::ALL {
            let s = spec(f);
            for tau in [-0.7, 0.2, 0.9] {
                if !s.tau_domain().contains(tau) {
                    continue;
                }
                let theta = s.tau_to_theta(tau).unwrap();
                for &(u, w) in &[(0.1, 0.9), (0.5, 0.5), (0.93, 0.07)] {
                    let v = s.h_inverse(theta, u, w).unwrap();
                    let back = s.h_function(theta, u, v).unwrap();
                    assert!((back - w).abs() < 1e-8, "{f} τ={tau}: {back} vs {w}");
                }
            }
        }
    }

    #[test]
    fn extreme_parameters_stay_finite() {
        for f in Family::ALL {
            let s = spec(f);
            for tau in [0.9999, 1e-4, -0.9999] {
                if s.check_tau(tau).is_err() {
                    continue;
                }
                let theta = s.tau_to_theta(tau).unwrap();
                for &(u, v) in &[(1e-6, 0.999_999), (0.5, 0.5), (0.999, 0.998), (1e-5, 2e-5)] {
                    let ld = s.log_density(theta, pair(u, v)).unwrap();
                    assert!(!ld.is_nan() && ld < f64::INFINITY, "{f} θ={theta} ({u},{v}) -> {ld}");
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = spec(Family::Gumbel);
        assert_eq!(s.sample(2.0, 50, 9).unwrap(), s.sample(2.0, 50, 9).unwrap());
    }
}
