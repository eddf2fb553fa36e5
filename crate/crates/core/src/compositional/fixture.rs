//! Synthetic weekly surveillance counts with a planted change of dependence
//! between the two log-ratio coordinates from one season onwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ilr_inverse, IlrPoint, IsoWeek, WeeklyRecord};
use crate::copula::{CopulaSpec, Family};
use crate::error::Result;
use crate::stats::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub units: usize,
    pub seasons: usize,
    pub first_season: i32,
    pub zones: usize,
    pub family: Family,
    /// Kendall's τ before and after `shift_season` (an index into the seasons).
    pub tau_before: f64,
    pub tau_after: f64,
    pub shift_season: usize,
    /// Range of cases per unit-season; totals under 50 are later filtered out.
    pub min_cases: u64,
    pub max_cases: u64,
    /// Spread of the latent log-ratio coordinates.
    pub scale: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            units: 80,
            seasons: 9,
            first_season: 2010,
            zones: 8,
            family: Family::Frank,
            tau_before: 0.0,
            tau_after: 0.45,
            shift_season: 5,
            min_cases: 30,
            max_cases: 400,
            scale: 0.5,
        }
    }
}

/// Weeks 48 to 52 of the start year and 1 to 7 of the next one.
fn season_weeks(start: i32) -> Vec<IsoWeek> {
    (48..=52).map(|w| IsoWeek { year: start, week: w }).chain((1..=7).map(|w| IsoWeek { year: start + 1, week: w })).collect()
}

/// Weekly records sorted by unit then week; weeks without cases are omitted.
pub fn synthetic_fixture(cfg: &FixtureConfig, seed: u64) -> Result<Vec<WeeklyRecord>> {
    let spec = CopulaSpec::new(cfg.family);
    let theta_before = spec.tau_to_theta(cfg.tau_before)?;
    let theta_after = spec.tau_to_theta(cfg.tau_after)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = cfg.units.to_string().len().max(2);
    let mut out = Vec::new();
    for unit in 0..cfg.units {
        let zone = unit % cfg.zones.max(1);
        let unit_id = format!("U{:0width$}", unit + 1);
        let group = Some(format!("Z{}", zone + 1));
        for s in 0..cfg.seasons {
            let theta = if s < cfg.shift_season { theta_before } else { theta_after };
            let pair = spec.sample_pair(theta, &mut rng);
            // Season drives the first coordinate, zone the second.
            let mu1 = 0.4 * ((s % 3) as f64 - 1.0);
            let mu2 = 0.25 * (zone as f64 / cfg.zones.max(1) as f64 - 0.5);
            let y = IlrPoint { y1: mu1 + cfg.scale * normal_quantile(pair.u()), y2: mu2 + cfg.scale * normal_quantile(pair.v()) };
            let c = ilr_inverse(&y);
            let total = rng.gen_range(cfg.min_cases..=cfg.max_cases);
            let weeks = season_weeks(cfg.first_season + s as i32);
            let mut counts = vec![[0u64; 3]; weeks.len()];
            for _ in 0..total {
                let w = rng.gen_range(0..weeks.len());
                let r: f64 = rng.gen();
                let k = if r < c.p1 { 0 } else if r < c.p1 + c.p2 { 1 } else { 2 };
                counts[w][k] += 1;
            }
            for (week, counts) in weeks.into_iter().zip(counts) {
                if counts.iter().any(|&c| c > 0) {
                    out.push(WeeklyRecord { unit: unit_id.clone(), week, counts, group: group.clone() });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositional::{aggregate_counts, AggregationConfig};

    #[test]
    fn fixture_shape_and_determinism() {
        let cfg = FixtureConfig::default();
        let a = synthetic_fixture(&cfg, 3).unwrap();
        assert_eq!(a, synthetic_fixture(&cfg, 3).unwrap());
        assert_ne!(a, synthetic_fixture(&cfg, 4).unwrap());
        let rows = aggregate_counts(&a, &AggregationConfig::default()).unwrap();
        assert!(rows.len() > 600 && rows.len() < 720, "{}", rows.len());
        assert!(rows.iter().all(|r| (2010..2019).contains(&r.season_start)));
    }
}
