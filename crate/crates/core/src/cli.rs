//! Command-line front end. Every flag can also be set in a TOML file passed
//! with `--config`, under a table named after the subcommand; flags given on
//! the command line win. `HISTOWAS_THREADS` caps the worker pool.
//!
//! Exit codes: 0 success, 1 runtime or I/O error, 2 usage or config error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::assoc::{self, Aggregation, FeatureColumn, FeatureMatrix, StudyConfig};
use crate::error::Error;
use crate::features::{self, FeatureConfig, FeatureDictionary, WindowParams};
use crate::geometry::{DEFAULT_EPS, DEFAULT_MIN_SAMPLES};
use crate::io::{self, DEFAULT_TOP_BELOW};
use crate::ppstats::{DistanceGrid, EdgeCorrection};
use crate::simulate::{self, Corrections, CsrConfig, Rect};
use crate::svg;

pub const THREADS_ENV: &str = "HISTOWAS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "histowas", version, about = "Spatial point-pattern features and mass-univariate association studies")]
pub struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate windows and extract spatial features, one row per slide.
    Extract(ExtractArgs),
    /// Run the CSR validation protocol and write envelope plot data.
    Simulate(SimulateArgs),
    /// Test every feature for association with a phenotype.
    Associate(AssociateArgs),
    /// Render plot data or results as SVG.
    #[command(subcommand)]
    Plot(PlotCommand),
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractArgs {
    #[arg(long)]
    pub centroids: Option<PathBuf>,
    /// Object type to analyse; required when the table has several.
    #[arg(long)]
    pub object_type: Option<String>,
    /// DBSCAN neighbourhood radius (µm).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub min_samples: Option<usize>,
    /// Comma-separated radii (µm), e.g. "25,50,75".
    #[arg(long, conflicts_with = "auto_grid")]
    pub radii: Option<String>,
    /// 64 radii up to a quarter of the square root of each slide's area.
    #[arg(long)]
    #[serde(skip)]
    pub auto_grid: bool,
    /// Edge corrections to apply: `isotropic` (K, L, g), `km` (G, F, J) or
    /// `none`. Repeatable; defaults to both.
    #[arg(long = "correction")]
    pub corrections: Vec<String>,
    #[arg(long)]
    pub g_bandwidth: Option<f64>,
    /// Number of F-function sample locations.
    #[arg(long)]
    pub quadrats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV with `observation_id,subject_id`; default subject is the slide.
    #[arg(long)]
    pub subjects: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Intensity (points/µm²).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Base window, e.g. 5000x5000.
    #[arg(long)]
    pub base: Option<String>,
    /// Sub-window, e.g. 1000x1000.
    #[arg(long)]
    pub sub: Option<String>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also score this many fresh sub-windows against the envelopes.
    #[arg(long)]
    pub held_out: Option<usize>,
    #[arg(long)]
    pub held_out_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociateArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Further feature matrices joined on observation_id. Repeatable.
    #[arg(long = "extra-features")]
    pub extra_features: Vec<PathBuf>,
    #[arg(long)]
    pub phenotype: Option<PathBuf>,
    /// `mean` or `median`.
    #[arg(long)]
    pub aggregate: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub fdr_q: Option<f64>,
    #[arg(long)]
    pub min_subjects: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for `manhattan.json` and `effect_size.json`.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    #[arg(long)]
    pub top_below: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum PlotCommand {
    Manhattan(PlotArgs),
    EffectSize(PlotArgs),
    Envelope(PlotArgs),
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotArgs {
    /// Results TSV from `associate`.
    #[arg(long, conflicts_with = "data")]
    pub results: Option<PathBuf>,
    /// Plot-data JSON.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub top_below: Option<usize>,
    /// Significance level used with --results.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Also write the plot data used for the figure.
    #[arg(long)]
    pub data_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    threads: Option<usize>,
    extract: ExtractArgs,
    simulate: SimulateArgs,
    associate: AssociateArgs,
    plot: PlotArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Usage(m),
            other => CliError::Runtime(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| usage(format!("missing required flag --{flag}")))
}

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(Error::io(path, e)))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parse_rect(s: &str) -> CliResult<Rect> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("`{s}` is not WIDTHxHEIGHT")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("`{s}` is not WIDTHxHEIGHT")))
    };
    Ok(Rect::new(parse(w)?, parse(h)?))
}

fn parse_radii(s: &str) -> CliResult<DistanceGrid> {
    let radii = s
        .split(',')
        .map(|r| r.trim().parse::<f64>().map_err(|_| usage(format!("bad radius `{r}`"))))
        .collect::<CliResult<Vec<_>>>()?;
    DistanceGrid::new(radii).map_err(|e| usage(e.to_string()))
}

fn parse_corrections(values: &[String]) -> CliResult<(EdgeCorrection, EdgeCorrection)> {
    if values.is_empty() {
        return Ok((EdgeCorrection::RipleyIsotropic, EdgeCorrection::KaplanMeier));
    }
    let mut set = BTreeSet::new();
    for v in values {
        let c: EdgeCorrection = v.parse().map_err(|e: Error| usage(e.to_string()))?;
        set.insert(c.to_string());
    }
    if set.contains("none") && set.len() > 1 {
        return Err(usage("--correction none cannot be combined with other corrections"));
    }
    let pair = if set.contains("isotropic") {
        EdgeCorrection::RipleyIsotropic
    } else {
        EdgeCorrection::None
    };
    let nn = if set.contains("km") {
        EdgeCorrection::KaplanMeier
    } else {
        EdgeCorrection::None
    };
    Ok((pair, nn))
}

fn positive(v: f64, flag: &str) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(usage(format!("--{flag} must be positive, got {v}")))
    }
}

fn extract(a: ExtractArgs, f: ExtractArgs) -> CliResult<()> {
    let centroids = required(a.centroids.or(f.centroids), "centroids")?;
    let out = required(a.out.or(f.out), "out")?;
    let eps = positive(a.eps.or(f.eps).unwrap_or(DEFAULT_EPS), "eps")?;
    let min_samples = a.min_samples.or(f.min_samples).unwrap_or(DEFAULT_MIN_SAMPLES);
    if min_samples == 0 {
        return Err(usage("--min-samples must be at least 1"));
    }
    let grid = match (a.radii.or(f.radii), a.auto_grid) {
        (Some(r), false) => Some(parse_radii(&r)?),
        _ => None,
    };
    let corrections = if a.corrections.is_empty() { f.corrections } else { a.corrections };
    let (pair, nn) = parse_corrections(&corrections)?;
    let g_bandwidth = a.g_bandwidth.or(f.g_bandwidth).map(|b| positive(b, "g-bandwidth")).transpose()?;
    let n_quadrats = a.quadrats.or(f.quadrats);
    if n_quadrats == Some(0) {
        return Err(usage("--quadrats must be at least 1"));
    }
    let config = FeatureConfig {
        grid,
        pair_correction: pair,
        nn_correction: nn,
        g_bandwidth,
        n_quadrats,
        seed: a.seed.or(f.seed).unwrap_or(0),
        dictionary: FeatureDictionary::default_spatial(),
    };

    let patterns = io::read_centroids(&centroids)?;
    let types: BTreeSet<&str> = patterns.iter().map(|p| p.object_type.as_str()).collect();
    let object_type = match a.object_type.or(f.object_type) {
        Some(t) => {
            if !types.contains(t.as_str()) {
                return Err(usage(format!(
                    "object type `{t}` not found; available: {}",
                    types.into_iter().collect::<Vec<_>>().join(", ")
                )));
            }
            t
        }
        None if types.len() == 1 => types.iter().next().expect("one type").to_string(),
        None => {
            return Err(usage(format!(
                "several object types present ({}); choose one with --object-type",
                types.into_iter().collect::<Vec<_>>().join(", ")
            )))
        }
    };
    let selected: Vec<_> = patterns.into_iter().filter(|p| p.object_type == object_type).collect();
    let params = WindowParams { eps, min_samples };
    let extractions = features::extract_batch(&selected, params, &config);

    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (p, e) in selected.iter().zip(&extractions) {
        let area = e.window_area.map_or("no window".to_string(), |a| format!("window area {a:.1} µm²"));
        eprintln!("slide {}: {} points, {area}", p.slide_id, p.len());
        for d in &e.diagnostics {
            eprintln!("slide {}: {d}", p.slide_id);
        }
        ids.push(p.slide_id.clone());
        rows.push(e.vector.values.iter().map(|(_, v)| *v).collect());
    }
    let subjects = match a.subjects.or(f.subjects) {
        Some(path) => {
            let map = io::read_subject_map(&path)?;
            ids.iter()
                .map(|id| {
                    map.get(id)
                        .cloned()
                        .ok_or_else(|| CliError::Runtime(Error::invalid(format!("{}: no subject for `{id}`", path.display()))))
                })
                .collect::<CliResult<Vec<_>>>()?
        }
        None => ids.clone(),
    };
    let columns = config
        .dictionary
        .descriptors()
        .iter()
        .map(|d| FeatureColumn::new(d.name.clone(), d.category.to_string()))
        .collect();
    let matrix = FeatureMatrix::new(ids, subjects, columns, rows)?;
    io::write_feature_matrix(&out, &matrix, &io::dictionary_metadata(&config.dictionary))?;
    eprintln!(
        "wrote {} rows x {} features to {}",
        matrix.n_rows(),
        matrix.n_features(),
        out.display()
    );
    Ok(())
}

fn simulate(a: SimulateArgs, f: SimulateArgs) -> CliResult<()> {
    let defaults = CsrConfig::default();
    let config = CsrConfig {
        lambda: a.lambda.or(f.lambda).unwrap_or(defaults.lambda),
        base_window: a.base.or(f.base).map(|s| parse_rect(&s)).transpose()?.unwrap_or(defaults.base_window),
        sub_window: a.sub.or(f.sub).map(|s| parse_rect(&s)).transpose()?.unwrap_or(defaults.sub_window),
        n_samples: a.n_samples.or(f.n_samples).unwrap_or(defaults.n_samples),
        seed: a.seed.or(f.seed).unwrap_or(defaults.seed),
        level: defaults.level,
    };
    config.validate()?;
    let out = required(a.out.or(f.out), "out")?;
    let grid = config.default_grid()?;
    let run = simulate::run_validation(&config, &grid, Corrections::default())?;
    if run.skipped > 0 {
        eprintln!("skipped {} sub-window(s) with fewer than 2 points", run.skipped);
    }
    for c in &run.coverage {
        println!("coverage {} {:.4} (n={})", c.function, c.fraction, c.n_values);
    }
    if let Some(n) = a.held_out.or(f.held_out) {
        let seed = a.held_out_seed.or(f.held_out_seed).unwrap_or(config.seed + 1);
        for c in simulate::held_out_coverage(&run, n, seed, Corrections::default())? {
            println!("held-out coverage {} {:.4} (n={})", c.function, c.fraction, c.n_values);
        }
    }
    let data = io::emit_envelope_data(&run, &run.coverage);
    io::write_plot_data(&out, &data)?;
    if let Some(path) = a.svg.or(f.svg) {
        write_text(&path, &svg::render(&data))?;
    }
    Ok(())
}

fn associate(a: AssociateArgs, f: AssociateArgs) -> CliResult<()> {
    let features = required(a.features.or(f.features), "features")?;
    let phenotype = required(a.phenotype.or(f.phenotype), "phenotype")?;
    let out = required(a.out.or(f.out), "out")?;
    let defaults = StudyConfig::default();
    let aggregation: Aggregation = match a.aggregate.or(f.aggregate) {
        Some(s) => s.parse()?,
        None => defaults.aggregation,
    };
    let config = StudyConfig {
        alpha: a.alpha.or(f.alpha).unwrap_or(defaults.alpha),
        fdr_q: a.fdr_q.or(f.fdr_q).unwrap_or(defaults.fdr_q),
        aggregation,
        min_subjects: a.min_subjects.or(f.min_subjects).unwrap_or(defaults.min_subjects),
    };
    config.validate()?;
    let top_below = a.top_below.or(f.top_below).unwrap_or(DEFAULT_TOP_BELOW);

    let mut matrix = io::read_feature_matrix(&features)?;
    let extras = if a.extra_features.is_empty() { f.extra_features } else { a.extra_features };
    for path in &extras {
        matrix = matrix.merge(&io::read_feature_matrix(path)?)?;
    }
    let y = io::read_phenotype(&phenotype)?;
    let study = assoc::run_study(&matrix, &y, &config)?;
    for s in &study.skipped {
        eprintln!("skipped {}: {}", s.feature, s.reason);
    }
    io::write_results(&out, &study.results)?;
    if let Some(dir) = a.plot_data.or(f.plot_data) {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(Error::io(&dir, e)))?;
        let n = study.n_tests();
        io::write_plot_data(
            dir.join("manhattan.json"),
            &io::emit_manhattan_data(&study.results, config.alpha, n, top_below),
        )?;
        io::write_plot_data(dir.join("effect_size.json"), &io::emit_effect_size_data(&study.results))?;
    }
    let bh = study.bh_critical_p.map_or("none".to_string(), io::format_real);
    println!(
        "subjects={} n_tests={} skipped={} bonferroni={} bh_critical_p={} significant_bonferroni={} significant_fdr={}",
        study.n_subjects,
        study.n_tests(),
        study.skipped.len(),
        io::format_real(study.bonferroni_threshold),
        bh,
        study.results.iter().filter(|r| r.sig_bonferroni).count(),
        study.results.iter().filter(|r| r.sig_fdr).count(),
    );
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(Error::io(path, e)))
}

fn plot(cmd: PlotCommand, f: PlotArgs) -> CliResult<()> {
    let (kind, a) = match cmd {
        PlotCommand::Manhattan(a) => ("manhattan", a),
        PlotCommand::EffectSize(a) => ("effect_size", a),
        PlotCommand::Envelope(a) => ("envelope", a),
    };
    let out = required(a.out.or(f.out), "out")?;
    let top_below = a.top_below.or(f.top_below).unwrap_or(DEFAULT_TOP_BELOW);
    let alpha = a.alpha.or(f.alpha).unwrap_or(StudyConfig::default().alpha);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage("--alpha must lie in (0, 1)"));
    }
    let data = match (a.results.or(f.results), a.data.or(f.data)) {
        (Some(results), None) => {
            let rs = io::read_results(&results)?;
            match kind {
                "manhattan" => {
                    if rs.is_empty() {
                        return Err(CliError::Runtime(Error::invalid("results file is empty")));
                    }
                    io::emit_manhattan_data(&rs, alpha, rs.len(), top_below)
                }
                "effect_size" => io::emit_effect_size_data(&rs),
                _ => return Err(usage("envelope plots take --data")),
            }
        }
        (None, Some(path)) => {
            let d = io::read_plot_data(&path)?;
            if d.kind() != kind {
                return Err(usage(format!("{} holds `{}` plot data, not `{kind}`", path.display(), d.kind())));
            }
            d
        }
        (Some(_), Some(_)) => return Err(usage("give either --results or --data")),
        (None, None) => return Err(usage("missing --results or --data")),
    };
    if let Some(path) = a.data_out.or(f.data_out) {
        io::write_plot_data(&path, &data)?;
    }
    write_text(&out, &svg::render(&data))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Extract(a) => extract(a, file.extract),
        Command::Simulate(a) => simulate(a, file.simulate),
        Command::Associate(a) => associate(a, file.associate),
        Command::Plot(cmd) => plot(cmd, file.plot),
    }
}

fn threads_from_config(cli: &Cli) -> Option<usize> {
    load_config(cli.config.as_deref()).ok().and_then(|f| f.threads)
}

fn report(result: CliResult<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Parses `args` (including the program name) and runs the command on a
/// pool of `threads` workers, or the global pool when `None`. Returns the
/// exit code.
pub fn run_with_threads<I, T>(args: I, threads: Option<usize>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = threads.or_else(|| threads_from_config(&cli));
    match threads {
        Some(0) => report(Err(usage("thread count must be at least 1"))),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| report(dispatch(cli))),
            Err(e) => report(Err(CliError::Runtime(Error::invalid(e.to_string())))),
        },
        None => report(dispatch(cli)),
    }
}

/// Like [`run_with_threads`], honouring `HISTOWAS_THREADS`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) => Some(n),
            Err(_) => {
                eprintln!("error: {THREADS_ENV}=`{v}` is not a thread count");
                return 2;
            }
        },
        Err(_) => None,
    };
    run_with_threads(args, threads)
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(std::env::args_os())
}
