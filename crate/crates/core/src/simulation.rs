//! Monte Carlo study of the tree estimator on synthetic data.
//!
//! Covariates are two independent uniforms. Kendall's τ follows one of three
//! surfaces over the covariate square; each row draws a copula pair with that
//! τ and turns it into responses with unit-variance normal margins whose means
//! are linear in the covariates. The conditional tree and the constant
//! benchmark are then fitted on the true copula sample (U), on parametric
//! normal pseudo-observations (V) and on kernel pseudo-observations (W).

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{CopulaSpec, Family, UnitPair};
use crate::dataset::{Covariate, Dataset, PseudoMethod, PseudoObservations};
use crate::error::{Error, Result};
use crate::margins::{pseudo_kernel, pseudo_parametric_normal};
use crate::pruning::{cross_validate, CvConfig, SelectionRule};
use crate::stats::{normal_quantile, quantile};
use crate::tree::{StoppingConfig, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSurface {
    Step,
    SteepSigmoid,
    GentleSigmoid,
}

impl TauSurface {
    pub const ALL: [TauSurface; 3] = [TauSurface::Step, TauSurface::SteepSigmoid, TauSurface::GentleSigmoid];

    pub fn name(self) -> &'static str {
        match self {
            TauSurface::Step => "step",
            TauSurface::SteepSigmoid => "steep_sigmoid",
            TauSurface::GentleSigmoid => "gentle_sigmoid",
        }
    }
}

impl fmt::Display for TauSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TauSurface {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "step" => Ok(Self::Step),
            "steep_sigmoid" | "steep" => Ok(Self::SteepSigmoid),
            "gentle_sigmoid" | "gentle" => Ok(Self::GentleSigmoid),
            _ => Err(Error::Config(format!("unknown tau surface `{s}`"))),
        }
    }
}

/// τ(x1, x2) as defined, before any clamping to the family domain.
pub fn tau_surface(kind: TauSurface, x1: f64, x2: f64) -> f64 {
    let sigmoid = |s: f64| 0.3 - 0.2 / (1.0 + (-s * (x1 - 0.4)).exp()) - 0.4 / (1.0 + (-s * (x2 - 0.75)).exp());
    match kind {
        TauSurface::Step => match (x1 < 0.4, x2 < 0.75) {
            (true, true) => 0.3,
            (false, true) => 0.5,
            (true, false) => 0.7,
            (false, false) => 0.9,
        },
        TauSurface::SteepSigmoid => sigmoid(40.0),
        TauSurface::GentleSigmoid => sigmoid(15.0),
    }
}

/// τ range used for families that only allow positive dependence.
pub const POSITIVE_TAU_RANGE: (f64, f64) = (0.01, 0.9);

pub fn margin_means(x1: f64, x2: f64) -> (f64, f64) {
    (1.0 + 0.2 * x1 + 0.05 * x2, 1.0 - 0.1 * x1 + 0.2 * x2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub family: Family,
    pub surface: TauSurface,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub tau_true: Vec<f64>,
    pub theta_true: Vec<f64>,
    pub u: Vec<UnitPair>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    /// Rows whose surface value was moved into the family's τ range.
    pub clamped: usize,
}

impl SimulatedDataset {
    pub fn n(&self) -> usize {
        self.x1.len()
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::with_names(
            vec![self.y1.clone(), self.y2.clone()],
            vec!["y1".into(), "y2".into()],
            vec![Covariate::numeric("x1", self.x1.clone()), Covariate::numeric("x2", self.x2.clone())],
        )
    }

    pub fn true_pseudo(&self) -> PseudoObservations {
        PseudoObservations::from_pairs(&self.u, PseudoMethod::Known)
    }
}

pub fn generate(spec: &ScenarioSpec) -> Result<SimulatedDataset> {
    if spec.n == 0 {
        return Err(Error::Scenario("scenario needs n > 0".into()));
    }
    let copula = CopulaSpec::new(spec.family);
    let positive_only = copula.tau_domain().lo >= 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut d = SimulatedDataset {
        x1: Vec::with_capacity(spec.n),
        x2: Vec::with_capacity(spec.n),
        tau_true: Vec::with_capacity(spec.n),
        theta_true: Vec::with_capacity(spec.n),
        u: Vec::with_capacity(spec.n),
        y1: Vec::with_capacity(spec.n),
        y2: Vec::with_capacity(spec.n),
        clamped: 0,
    };
    for _ in 0..spec.n {
        let x1: f64 = rng.gen();
        let x2: f64 = rng.gen();
        let raw = tau_surface(spec.surface, x1, x2);
        let tau = if positive_only { raw.clamp(POSITIVE_TAU_RANGE.0, POSITIVE_TAU_RANGE.1) } else { raw };
        if tau != raw {
            d.clamped += 1;
        }
        let theta = copula.tau_to_theta(tau).map_err(|e| Error::Scenario(format!("τ = {tau}: {e}")))?;
        let u = copula.sample_pair(theta, &mut rng);
        let (m1, m2) = margin_means(x1, x2);
        d.y1.push(normal_quantile(u.u()) + m1);
        d.y2.push(normal_quantile(u.v()) + m2);
        d.x1.push(x1);
        d.x2.push(x2);
        d.tau_true.push(tau);
        d.theta_true.push(theta);
        d.u.push(u);
    }
    if d.clamped > 0 {
        log::info!(
            "{} {}: clamped τ into [{}, {}] on {} of {} rows",
            spec.family,
            spec.surface,
            POSITIVE_TAU_RANGE.0,
            POSITIVE_TAU_RANGE.1,
            d.clamped,
            spec.n
        );
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    /// True copula sample.
    U,
    /// Normal-linear margins.
    V,
    /// Kernel-smoothed margins.
    W,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::U => "U",
            Source::V => "V",
            Source::W => "W",
        })
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "U" | "u" => Ok(Self::U),
            "V" | "v" => Ok(Self::V),
            "W" | "w" => Ok(Self::W),
            _ => Err(Error::Config(format!("unknown pseudo-observation source `{s}` (expected U, V or W)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Conditional,
    Benchmark,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Conditional => "conditional",
            Model::Benchmark => "benchmark",
        })
    }
}

/// Kernel bandwidth used for the W source when none is configured.
pub fn default_bandwidth(family: Family) -> f64 {
    match family {
        Family::Clayton | Family::Frank => 0.4,
        Family::Gumbel => 0.3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stopping: StoppingConfig,
    pub folds: usize,
    pub repeats: usize,
    pub rule: SelectionRule,
    pub sources: Vec<Source>,
    /// Overrides [`default_bandwidth`].
    pub bandwidth: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stopping: StoppingConfig::default(),
            folds: 3,
            repeats: 5,
            rule: SelectionRule::MaxMean,
            sources: vec![Source::U, Source::V, Source::W],
            bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse_tau: f64,
    pub mse_copula: f64,
    pub loglik: f64,
}

/// Errors of a fitted parameter per row against the truth. `pseudo` is the
/// sample the model was fitted on; the copula CDFs are compared at the true U.
pub fn evaluate(
    family: Family,
    theta_hat: &[f64],
    data: &SimulatedDataset,
    pseudo: &PseudoObservations,
) -> Result<Metrics> {
    let spec = CopulaSpec::new(family);
    let n = data.n() as f64;
    let (mut mse_tau, mut mse_copula, mut loglik) = (0.0, 0.0, 0.0);
    for i in 0..data.n() {
        let t = theta_hat[i];
        mse_tau += (spec.theta_to_tau(t)? - data.tau_true[i]).powi(2);
        let (u, v) = (data.u[i].u(), data.u[i].v());
        mse_copula += (spec.cdf(t, u, v)? - spec.cdf(data.theta_true[i], u, v)?).powi(2);
        loglik += spec.log_density(t, pseudo.pair(i))?;
    }
    Ok(Metrics { mse_tau: mse_tau / n, mse_copula: mse_copula / n, loglik })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub scenario: TauSurface,
    pub family: Family,
    pub source: Source,
    pub model: Model,
    pub rep: usize,
    pub mse_tau: f64,
    pub mse_copula: f64,
    pub loglik: f64,
    pub n_splits: usize,
}

fn pseudo_for(source: Source, sim: &SimulatedDataset, data: &Dataset, family: Family, cfg: &PipelineConfig) -> Result<PseudoObservations> {
    match source {
        Source::U => Ok(sim.true_pseudo()),
        Source::V => pseudo_parametric_normal(data, &[0, 1]),
        Source::W => pseudo_kernel(data, cfg.bandwidth.unwrap_or_else(|| default_bandwidth(family)), None),
    }
}

/// Generates one dataset and fits both models on every configured source.
pub fn run_replication(spec: &ScenarioSpec, cfg: &PipelineConfig, rep: usize) -> Result<Vec<Record>> {
    let sim = generate(spec)?;
    let data = sim.dataset()?;
    let copula = CopulaSpec::new(spec.family);
    let cv = CvConfig { folds: cfg.folds, repeats: cfg.repeats, seed: spec.seed, rule: cfg.rule };
    let mut out = Vec::with_capacity(2 * cfg.sources.len());
    for &source in &cfg.sources {
        let pseudo = pseudo_for(source, &sim, &data, spec.family, cfg)?;
        let fit = cross_validate(&copula, &pseudo, &data, &cfg.stopping, &cv)?;
        let tree = &fit.selected;
        let cond_theta: Vec<f64> = (0..sim.n())
            .map(|i| tree.tree().node(tree.leaf_of_row(&data, i)).expect("leaf").fit.theta_hat)
            .collect();
        let bench_theta = vec![fit.maximal.root_fit().theta_hat; sim.n()];
        for (model, theta, splits) in
            [(Model::Conditional, &cond_theta, tree.leaf_count() - 1), (Model::Benchmark, &bench_theta, 0)]
        {
            let m = evaluate(spec.family, theta, &sim, &pseudo)?;
            out.push(Record {
                scenario: spec.surface,
                family: spec.family,
                source,
                model,
                rep,
                mse_tau: m.mse_tau,
                mse_copula: m.mse_copula,
                loglik: m.loglik,
                n_splits: splits,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub families: Vec<Family>,
    pub surfaces: Vec<TauSurface>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub pipeline: PipelineConfig,
}

impl StudyConfig {
    /// 50 replications of n = 1000 per cell.
    pub fn desk() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            surfaces: TauSurface::ALL.to_vec(),
            n: 1000,
            reps: 50,
            seed: 1,
            pipeline: PipelineConfig::default(),
        }
    }

    /// 500 replications of n = 1000 per cell.
    pub fn full() -> Self {
        Self { reps: 500, ..Self::desk() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" | "paper" => Ok(Self::full()),
            _ => Err(Error::Config(format!("unknown study preset `{name}` (expected desk or full)"))),
        }
    }
}

/// Seed of replication `rep`; shared across cells so that cells see the same covariates.
pub fn replication_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add(rep as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub records: Vec<Record>,
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    let mut jobs = Vec::new();
    for &family in &cfg.families {
        for &surface in &cfg.surfaces {
            for rep in 0..cfg.reps {
                jobs.push((ScenarioSpec { family, surface, n: cfg.n, seed: replication_seed(cfg.seed, rep) }, rep));
            }
        }
    }
    let chunks: Vec<Vec<Record>> =
        jobs.par_iter().map(|(spec, rep)| run_replication(spec, &cfg.pipeline, *rep)).collect::<Result<_>>()?;
    let mut records: Vec<Record> = chunks.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        (a.scenario, a.family, a.source, a.model, a.rep).cmp(&(b.scenario, b.family, b.source, b.model, b.rep))
    });
    Ok(StudyResult { records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub scenario: TauSurface,
    pub family: Family,
    pub source: Source,
    pub model: Model,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub format_version: u32,
    pub cells: Vec<MetricSummary>,
}

impl Record {
    pub fn metrics(&self) -> [(&'static str, f64); 4] {
        [
            ("mse_tau", self.mse_tau),
            ("mse_copula", self.mse_copula),
            ("loglik", self.loglik),
            ("n_splits", self.n_splits as f64),
        ]
    }
}

impl StudyResult {
    /// Long format: one line per (record, metric).
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# format_version: {FORMAT_VERSION}")?;
        writeln!(w, "scenario\tfamily\tsource\tmodel\tmetric\tvalue\trep")?;
        for r in &self.records {
            for (metric, value) in r.metrics() {
                writeln!(w, "{}\t{}\t{}\t{}\t{metric}\t{value}\t{}", r.scenario, r.family, r.source, r.model, r.rep)?;
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> StudySummary {
        let mut groups: BTreeMap<(TauSurface, Family, Source, Model, &'static str), Vec<f64>> = BTreeMap::new();
        for r in &self.records {
            for (metric, value) in r.metrics() {
                groups.entry((r.scenario, r.family, r.source, r.model, metric)).or_default().push(value);
            }
        }
        let cells = groups
            .into_iter()
            .map(|((scenario, family, source, model, metric), vals)| MetricSummary {
                scenario,
                family,
                source,
                model,
                metric: metric.to_string(),
                count: vals.len(),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                q1: quantile(&vals, 0.25),
                median: quantile(&vals, 0.5),
                q3: quantile(&vals, 0.75),
            })
            .collect();
        StudySummary { format_version: FORMAT_VERSION, cells }
    }

    pub fn select(&self, scenario: TauSurface, family: Family, source: Source, model: Model) -> Vec<&Record> {
        self.records
            .iter()
            .filter(|r| r.scenario == scenario && r.family == family && r.source == source && r.model == model)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_surface_cells() {
        assert_eq!(tau_surface(TauSurface::Step, 0.39, 0.74), 0.3);
        assert_eq!(tau_surface(TauSurface::Step, 0.41, 0.74), 0.5);
        assert_eq!(tau_surface(TauSurface::Step, 0.39, 0.76), 0.7);
        assert_eq!(tau_surface(TauSurface::Step, 0.41, 0.76), 0.9);
    }

    #[test]
    fn sigmoid_center() {
        assert!((tau_surface(TauSurface::SteepSigmoid, 0.4, 0.75) - 0.0).abs() < 1e-15);
        assert!((tau_surface(TauSurface::GentleSigmoid, 0.4, 0.75) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn generation_is_deterministic_and_clamps() {
        let spec = ScenarioSpec { family: Family::Clayton, surface: TauSurface::SteepSigmoid, n: 300, seed: 5 };
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        assert!(a.clamped > 0);
        assert!(a.tau_true.iter().all(|&t| (0.01..=0.9).contains(&t)));
        let frank = generate(&ScenarioSpec { family: Family::Frank, ..spec }).unwrap();
        assert_eq!(frank.clamped, 0);
        assert!(frank.tau_true.iter().any(|&t| t < 0.0));
    }

    #[test]
    fn oracle_model_has_zero_error() {
        let spec = ScenarioSpec { family: Family::Gumbel, surface: TauSurface::Step, n: 200, seed: 2 };
        let d = generate(&spec).unwrap();
        let m = evaluate(spec.family, &d.theta_true, &d, &d.true_pseudo()).unwrap();
        assert!(m.mse_tau < 1e-28);
        assert_eq!(m.mse_copula, 0.0);
    }
}
