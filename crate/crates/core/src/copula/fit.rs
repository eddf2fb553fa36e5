//! Maximum-likelihood fitting of a single copula parameter.
//!
//! The search runs over Kendall's τ, whose domain is bounded for every
//! family, and maps each trial point back to θ. The τ interval is the family
//! domain shrunk by [`TAU_MARGIN`] on each side.

use serde::{Deserialize, Serialize};

use super::{CopulaSpec, PreparedPair, UnitPair};
use crate::error::{Error, Result};
use crate::numeric::brent_minimize;

pub const DEFAULT_MIN_FIT_N: usize = 10;
pub const TAU_MARGIN: f64 = 1e-4;
pub const TAU_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: f64,
    pub tau_hat: f64,
    /// Summed (not averaged) log-likelihood at `theta_hat`.
    pub loglik: f64,
    pub n_obs: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub min_fit_n: usize,
    pub tau_tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { min_fit_n: DEFAULT_MIN_FIT_N, tau_tol: TAU_TOL, max_iter: 200 }
    }
}

pub fn fit_mle(spec: &CopulaSpec, data: &[UnitPair]) -> Result<FitResult> {
    fit_mle_with(spec, data, &FitOptions::default())
}

pub fn fit_mle_with(spec: &CopulaSpec, data: &[UnitPair], opts: &FitOptions) -> Result<FitResult> {
    let prepared: Vec<PreparedPair> = data.iter().map(|&p| PreparedPair::new(p)).collect();
    fit_prepared(spec, &prepared, opts)
}

pub(crate) fn fit_prepared(spec: &CopulaSpec, rows: &[PreparedPair], opts: &FitOptions) -> Result<FitResult> {
    fit_by_loglik(spec, rows.len(), opts, |theta| {
        rows.iter().map(|p| spec.log_density_prepared(theta, p)).sum()
    })
}

pub(crate) fn fit_indexed(
    spec: &CopulaSpec,
    all: &[PreparedPair],
    idx: &[usize],
    opts: &FitOptions,
) -> Result<FitResult> {
    fit_by_loglik(spec, idx.len(), opts, |theta| {
        idx.iter().map(|&i| spec.log_density_prepared(theta, &all[i])).sum()
    })
}

/// Maximizes `loglik(θ)` over the shrunk τ interval.
pub(crate) fn fit_by_loglik<F: FnMut(f64) -> f64>(
    spec: &CopulaSpec,
    n: usize,
    opts: &FitOptions,
    mut loglik: F,
) -> Result<FitResult> {
    if n < opts.min_fit_n.max(1) {
        return Err(Error::InsufficientData { required: opts.min_fit_n.max(1), got: n });
    }
    let domain = spec.tau_domain();
    let lo = domain.lo + TAU_MARGIN;
    let hi = domain.hi - TAU_MARGIN;
    let min = brent_minimize(
        |tau| match spec.tau_to_theta(tau) {
            Ok(theta) => -loglik(theta),
            Err(_) => f64::INFINITY,
        },
        lo,
        hi,
        opts.tau_tol,
        opts.max_iter,
    );
    if !min.fx.is_finite() {
        return Err(Error::Fit(format!("log-likelihood not finite anywhere on [{lo}, {hi}]")));
    }
    let theta_hat = spec.tau_to_theta(min.x)?;
    Ok(FitResult {
        theta_hat,
        tau_hat: spec.theta_to_tau(theta_hat)?,
        loglik: -min.fx,
        n_obs: n,
        converged: min.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::Family;

    #[test]
    fn recovers_clayton_tau() {
        let spec = CopulaSpec::new(Family::Clayton);
        let data = spec.sample(2.0, 2000, 11).unwrap();
        let fit = fit_mle(&spec, &data).unwrap();
        assert!(fit.converged);
        assert!((fit.tau_hat - 0.5).abs() < 0.04, "{}", fit.tau_hat);
        assert_eq!(fit.n_obs, 2000);
    }

    #[test]
    fn near_independence_gumbel() {
        let spec = CopulaSpec::new(Family::Gumbel);
        let data = spec.sample(1.0 + 1e-6, 500, 3).unwrap();
        let fit = fit_mle(&spec, &data).unwrap();
        assert!(fit.tau_hat < 0.08, "{}", fit.tau_hat);
    }

    #[test]
    fn permutation_invariant() {
        let spec = CopulaSpec::new(Family::Frank);
        let data = spec.sample(3.0, 300, 5).unwrap();
        let mut rev = data.clone();
        rev.reverse();
        let a = fit_mle(&spec, &data).unwrap();
        let b = fit_mle(&spec, &rev).unwrap();
        assert!((a.theta_hat - b.theta_hat).abs() < 1e-6);
    }

    #[test]
    fn too_few_points() {
        let spec = CopulaSpec::new(Family::Clayton);
        let data = spec.sample(2.0, 5, 1).unwrap();
        assert!(matches!(fit_mle(&spec, &data), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn loglik_is_sum_at_estimate() {
        let spec = CopulaSpec::new(Family::Gumbel);
        let data = spec.sample(2.5, 400, 8).unwrap();
        let fit = fit_mle(&spec, &data).unwrap();
        let direct: f64 = data.iter().map(|&p| spec.log_density(fit.theta_hat, p).unwrap()).sum();
        assert!((fit.loglik - direct).abs() < 1e-9);
        assert!(fit.loglik > 0.0);
    }
}
