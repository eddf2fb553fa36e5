//! `copula-tree` command-line interface.
//!
//! Every option can also come from a TOML file given with `--config`; keys use
//! the long flag names (dashes or underscores) and flags win. Failures print a
//! single `error<TAB>code=N<TAB>kind=K<TAB>message` line on stderr and exit with
//! 2 (schema or input), 3 (fit) or 4 (configuration).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use copula_tree::compositional::{
    read_weekly_csv, run_flu, synthetic_fixture, write_ilr_csv, write_weekly_csv, AggregationConfig, FixtureConfig,
    FluConfig, SeasonBoundary,
};
use copula_tree::copula::{CopulaSpec, Family};
use copula_tree::dataset::{read_csv, CovariateKind, CovariateValue, Dataset, PseudoMethod, PseudoObservations};
use copula_tree::margins::{
    modality_label, pseudo_discrete, pseudo_empirical, pseudo_kernel, pseudo_margin_tree, pseudo_parametric_normal,
    MarginTreeConfig,
};
use copula_tree::pruning::{cross_validate, CvConfig, SelectionRule};
use copula_tree::simulation::{run_study, Source, StudyConfig, TauSurface};
use copula_tree::tree::{CopulaTree, StoppingConfig, FORMAT_VERSION};
use copula_tree::{Error, Result};

#[derive(Parser)]
#[command(name = "copula-tree", version, about = "Regression trees for conditional copulas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit, prune and cross-validate a copula tree on a CSV table.
    Fit(FitArgs),
    /// Route covariate rows through a fitted tree.
    Predict(PredictArgs),
    /// Run the Monte Carlo study.
    Simulate(SimulateArgs),
    /// Weekly subtype counts to a seasonal conditional copula tree.
    Flu(FluArgs),
    /// Write a synthetic weekly-count file.
    GenFixture(FixtureArgs),
}

#[derive(Args, Default)]
struct TreeOpts {
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    min_gain: Option<f64>,
    #[arg(long)]
    max_leaves: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// max-mean or one-se.
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Header: `y_<name>` responses, `x_<name>:num|cat` covariates.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// empirical, kernel, normal, margin-tree, discrete or known.
    #[arg(long)]
    pseudo: Option<String>,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Comma-separated numeric covariates for the normal margins (default: all numeric).
    #[arg(long)]
    design: Option<String>,
    #[command(flatten)]
    tree: TreeOpts,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// desk (50 replications) or full (500; `paper` is an alias).
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated families.
    #[arg(long)]
    families: Option<String>,
    /// Comma-separated surfaces: step, steep_sigmoid, gentle_sigmoid.
    #[arg(long)]
    surfaces: Option<String>,
    /// Comma-separated sources among U, V, W.
    #[arg(long)]
    sources: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Only write the resolved configuration.
    #[arg(long)]
    dry_run: bool,
    #[command(flatten)]
    tree: TreeOpts,
}

#[derive(Args)]
struct FluArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Columns: unit_id, iso_week, count_h1, count_h3, count_b[, itz].
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    min_total: Option<u64>,
    /// Season start as MM-DD.
    #[arg(long)]
    boundary: Option<String>,
    #[arg(long)]
    pseudo_count: Option<f64>,
    #[command(flatten)]
    tree: TreeOpts,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Flag values backed by an optional TOML table.
struct Settings {
    table: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut table = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            let parsed: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
            for (k, v) in parsed {
                let s = match v {
                    toml::Value::String(s) => s,
                    toml::Value::Array(items) => items
                        .into_iter()
                        .map(|i| match i {
                            toml::Value::String(s) => s,
                            other => other.to_string(),
                        })
                        .collect::<Vec<_>>()
                        .join(","),
                    other => other.to_string(),
                };
                table.insert(k.replace('-', "_"), s);
            }
        }
        Ok(Self { table })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.table
            .get(key)
            .map(|s| s.parse().map_err(|_| Error::Config(format!("config key `{key}` has invalid value `{s}`"))))
            .transpose()
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        self.get(flag, key)?.ok_or_else(|| Error::Config(format!("`--{}` is required", key.replace('_', "-"))))
    }
}

fn parse_list<T: FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(T::from_str).collect()
}

fn tree_settings(s: &Settings, o: &TreeOpts, defaults: StoppingConfig) -> Result<StoppingConfig> {
    Ok(StoppingConfig {
        min_leaf: s.or(o.min_leaf, "min_leaf", defaults.min_leaf)?,
        min_gain: s.or(o.min_gain, "min_gain", defaults.min_gain)?,
        max_leaves: s.or(o.max_leaves, "max_leaves", defaults.max_leaves)?,
    })
}

fn rule_setting(s: &Settings, o: &TreeOpts, default: SelectionRule) -> Result<SelectionRule> {
    match s.get(o.rule.clone(), "rule")? {
        Some(r) => r.parse(),
        None => Ok(default),
    }
}

fn family_setting(s: &Settings, o: &TreeOpts, default: Option<Family>) -> Result<Family> {
    match (s.get(o.family.clone(), "family")?, default) {
        (Some(f), _) => f.parse(),
        (None, Some(f)) => Ok(f),
        (None, None) => Err(Error::Config("`--family` is required".into())),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn pseudo_observations(data: &Dataset, method: &str, bandwidth: Option<f64>, design: Option<&str>, seed: u64) -> Result<PseudoObservations> {
    match method {
        "empirical" => pseudo_empirical(data),
        "kernel" => {
            let h = bandwidth.ok_or_else(|| Error::Config("kernel pseudo-observations need `--bandwidth`".into()))?;
            pseudo_kernel(data, h, None)
        }
        "normal" => {
            let cols: Vec<usize> = match design {
                Some(names) => names
                    .split(',')
                    .map(str::trim)
                    .map(|n| {
                        data.covariates()
                            .iter()
                            .position(|c| c.name == n)
                            .ok_or_else(|| Error::Schema(format!("design covariate `{n}` not found")))
                    })
                    .collect::<Result<_>>()?,
                None => (0..data.d()).filter(|&j| data.covariate(j).kind() == CovariateKind::Numeric).collect(),
            };
            pseudo_parametric_normal(data, &cols)
        }
        "margin-tree" | "margin_tree" => Ok(pseudo_margin_tree(data, &MarginTreeConfig { seed, ..Default::default() })?.pseudo),
        "discrete" => {
            let grouping = (0..data.n())
                .map(|i| modality_label(data, i).map(|l| (l.clone(), l)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            pseudo_discrete(data, &grouping)
        }
        "known" => PseudoObservations::new(data.responses().to_vec(), PseudoMethod::Known),
        other => Err(Error::Config(format!("unknown pseudo-observation method `{other}`"))),
    }
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let input: PathBuf = s.required(a.input, "input")?;
    let out: PathBuf = s.required(a.out, "out")?;
    let family = family_setting(&s, &a.tree, None)?;
    let stopping = tree_settings(&s, &a.tree, StoppingConfig::default())?;
    let cv = CvConfig {
        folds: s.or(a.tree.folds, "folds", 3)?,
        repeats: s.or(a.tree.repeats, "repeats", 50)?,
        seed: s.required(a.tree.seed, "seed")?,
        rule: rule_setting(&s, &a.tree, SelectionRule::OneSe)?,
    };
    let method: String = s.or(a.pseudo, "pseudo", "empirical".to_string())?;
    let bandwidth = s.get(a.bandwidth, "bandwidth")?;
    let design: Option<String> = s.get(a.design, "design")?;

    let data = read_csv(File::open(&input)?)?;
    if data.k() != 2 {
        return Err(Error::Schema(format!("expected 2 response columns, found {}", data.k())));
    }
    let pseudo = pseudo_observations(&data, &method, bandwidth, design.as_deref(), cv.seed)?;
    let fit = cross_validate(&CopulaSpec::new(family), &pseudo, &data, &stopping, &cv)?;

    fs::create_dir_all(&out)?;
    fit.selected.write_json(&out.join("tree.json"))?;
    fit.maximal.write_json(&out.join("maximal_tree.json"))?;
    fit.path.write_tsv(data.n(), create(&out, "prune_path.tsv")?)?;
    fit.report.write_tsv(create(&out, "cv.tsv")?)?;
    fs::write(out.join("cv.json"), fit.report.to_json()? + "\n")?;
    let mut w = create(&out, "predictions.csv")?;
    writeln!(w, "# format_version: {FORMAT_VERSION}")?;
    writeln!(w, "row_id,leaf,tau_hat")?;
    for i in 0..data.n() {
        let leaf = fit.selected.leaf_of_row(&data, i);
        let tau = fit.selected.tree().node(leaf).expect("leaf exists").fit.tau_hat;
        writeln!(w, "{i},{leaf},{tau}")?;
    }
    w.flush()?;
    println!("fit\tleaves={}\tn={}\tout={}", fit.selected.leaf_count(), data.n(), out.display());
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let tree = CopulaTree::read_json(&s.required::<PathBuf>(a.tree, "tree")?)?;
    let data = read_csv(File::open(s.required::<PathBuf>(a.input, "input")?)?)?;
    let output: PathBuf = s.required(a.output, "output")?;
    let mut columns = Vec::with_capacity(tree.schema().len());
    for info in tree.schema() {
        let j = data
            .covariates()
            .iter()
            .position(|c| c.name == info.name)
            .ok_or_else(|| Error::Schema(format!("missing covariate column `x_{}`", info.name)))?;
        if data.covariate(j).kind() != info.kind {
            return Err(Error::Schema(format!("covariate `{}` has the wrong type", info.name)));
        }
        columns.push(j);
    }
    let mut w = BufWriter::new(File::create(&output)?);
    writeln!(w, "# format_version: {FORMAT_VERSION}")?;
    writeln!(w, "row_id,leaf,theta,tau")?;
    for i in 0..data.n() {
        let x: Vec<CovariateValue> = columns.iter().map(|&j| data.covariate(j).value(i)).collect();
        let p = tree.predict(&x)?;
        writeln!(w, "{i},{},{},{}", p.leaf, p.theta, p.tau)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let out: PathBuf = s.required(a.out, "out")?;
    let preset: String = s.or(a.preset, "preset", "desk".to_string())?;
    let mut cfg = StudyConfig::preset(&preset)?;
    cfg.seed = s.required(a.tree.seed, "seed")?;
    if let Some(f) = s.get(a.families, "families")? {
        cfg.families = parse_list(&f)?;
    }
    if let Some(f) = s.get(a.surfaces, "surfaces")? {
        cfg.surfaces = parse_list::<TauSurface>(&f)?;
    }
    if let Some(f) = s.get(a.sources, "sources")? {
        cfg.pipeline.sources = parse_list::<Source>(&f)?;
    }
    cfg.n = s.or(a.n, "n", cfg.n)?;
    cfg.reps = s.or(a.reps, "reps", cfg.reps)?;
    cfg.pipeline.bandwidth = s.get(a.bandwidth, "bandwidth")?.or(cfg.pipeline.bandwidth);
    cfg.pipeline.stopping = tree_settings(&s, &a.tree, cfg.pipeline.stopping)?;
    cfg.pipeline.folds = s.or(a.tree.folds, "folds", cfg.pipeline.folds)?;
    cfg.pipeline.repeats = s.or(a.tree.repeats, "repeats", cfg.pipeline.repeats)?;
    cfg.pipeline.rule = rule_setting(&s, &a.tree, cfg.pipeline.rule)?;
    if cfg.families.is_empty() || cfg.surfaces.is_empty() || cfg.pipeline.sources.is_empty() || cfg.reps == 0 {
        return Err(Error::Config("families, surfaces, sources and reps must be non-empty".into()));
    }

    fs::create_dir_all(&out)?;
    #[derive(serde::Serialize)]
    struct Echo<'a> {
        format_version: u32,
        preset: &'a str,
        #[serde(flatten)]
        study: &'a StudyConfig,
    }
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&Echo { format_version: FORMAT_VERSION, preset: &preset, study: &cfg })? + "\n")?;
    if a.dry_run {
        return Ok(());
    }
    let result = run_study(&cfg)?;
    result.write_tsv(create(&out, "records.tsv")?)?;
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&result.summary())? + "\n")?;
    println!("simulate\trecords={}\tout={}", result.records.len(), out.display());
    Ok(())
}

fn parse_boundary(s: &str) -> Result<SeasonBoundary> {
    let bad = || Error::Config(format!("season boundary `{s}` is not MM-DD"));
    let (m, d) = s.split_once('-').ok_or_else(bad)?;
    Ok(SeasonBoundary { month: m.parse().map_err(|_| bad())?, day: d.parse().map_err(|_| bad())? })
}

fn cmd_flu(a: FluArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let input: PathBuf = s.required(a.input, "input")?;
    let out: PathBuf = s.required(a.out, "out")?;
    let d = FluConfig::default();
    let boundary = match s.get(a.boundary, "boundary")? {
        Some(b) => parse_boundary(&b)?,
        None => d.aggregation.boundary,
    };
    let cfg = FluConfig {
        aggregation: AggregationConfig {
            boundary,
            min_total: s.or(a.min_total, "min_total", d.aggregation.min_total)?,
            pseudo_count: s.or(a.pseudo_count, "pseudo_count", d.aggregation.pseudo_count)?,
        },
        family: family_setting(&s, &a.tree, Some(d.family))?,
        stopping: tree_settings(&s, &a.tree, d.stopping)?,
        folds: s.or(a.tree.folds, "folds", d.folds)?,
        repeats: s.or(a.tree.repeats, "repeats", d.repeats)?,
        rule: rule_setting(&s, &a.tree, d.rule)?,
        margins: d.margins,
        seed: s.required(a.tree.seed, "seed")?,
    };
    let records = read_weekly_csv(File::open(&input)?)?;
    let report = run_flu(&records, &cfg)?;

    fs::create_dir_all(&out)?;
    write_ilr_csv(&report.rows, create(&out, "ilr.csv")?)?;
    report.selected.write_json(&out.join("tree.json"))?;
    report.cv.write_tsv(create(&out, "cv.tsv")?)?;
    fs::write(out.join("cv.json"), report.cv.to_json()? + "\n")?;
    report.write_leaf_tsv(create(&out, "leaves.tsv")?)?;
    fs::write(out.join("summary.json"), report.summary_json()? + "\n")?;
    println!(
        "flu\tn={}\tleaves={}\tloglik={:.3}\tsingle_loglik={:.3}\tout={}",
        report.rows.len(),
        report.leaves.len(),
        report.conditional_loglik,
        report.single_loglik,
        out.display()
    );
    Ok(())
}

fn cmd_gen_fixture(a: FixtureArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let output: PathBuf = s.required(a.output, "output")?;
    let records = synthetic_fixture(&FixtureConfig::default(), s.required(a.seed, "seed")?)?;
    let mut w = BufWriter::new(File::create(output)?);
    write_weekly_csv(&records, &mut w)?;
    w.flush()?;
    Ok(())
}

fn classify(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Schema(_) => (2, "schema"),
        Error::Ingestion { .. } | Error::Input(_) | Error::Csv(_) | Error::Json(_) | Error::Io(_) => (2, "input"),
        Error::Config(_) | Error::Scenario(_) => (4, "config"),
        Error::NoData(_) => (3, "no_data"),
        _ => (3, "fit"),
    }
}

fn report_error(code: u8, kind: &str, msg: &str) -> ExitCode {
    eprintln!("error\tcode={code}\tkind={kind}\t{}", msg.split_whitespace().collect::<Vec<_>>().join(" "));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error(4, "config", e.to_string().lines().next().unwrap_or("invalid arguments")),
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Flu(a) => cmd_flu(a),
        Command::GenFixture(a) => cmd_gen_fixture(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            report_error(code, kind, &e.to_string())
        }
    }
}
