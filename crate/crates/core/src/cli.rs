//! The `bsc` command line.
//!
//! Every command resolves its settings as built-in defaults, then the
//! `BSC_SEED` environment variable (seed only), then the JSON file given by
//! `--config`, then command-line flags. A config file holds shared keys at
//! the top level and per-command keys in an object named after the
//! command, e.g. `{"seed": 3, "cluster": {"k_c": 2}}`.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 no clustering result.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::clustering::{cluster_forest, ForestClusterParams};
use crate::data::{gen_synthetic, iris, read_csv_file, write_csv_file, Dataset, GaussianMixture, SyntheticKind, DEFAULT_N};
use crate::density::{fit_forest, ForestParams};
use crate::error::{Error, Result};
use crate::eval::{ari, benchmark, write_reports_csv, BenchmarkOptions, BenchmarkReport, DbscanGrid, KMeansGrid, MethodGrid, OursGrid, Scaling};
use crate::partition::{HyperBox, SplitMode};
use crate::setops::{check_uncertainty_control, default_resolution, GridDensity, Lattice};
use crate::svg::scatter_svg;

pub const SEED_ENV: &str = "BSC_SEED";

#[derive(Debug, Parser)]
#[command(name = "bsc", version, about = "Random-forest density estimation and level-set clustering")]
struct Cli {
    /// JSON file with settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic data set as CSV.
    Gen(GenArgs),
    /// Fit a density forest and write it as JSON.
    Fit(FitArgs),
    /// Cluster a CSV data set.
    Cluster(ClusterArgs),
    /// Grid-search benchmark against ground-truth labels.
    Benchmark(BenchmarkArgs),
    /// Compare estimated and true level sets of a Gaussian mixture on a grid.
    Validate(ValidateArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    /// circles, moons, varied or aniso.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Noise level; defaults depend on the kind.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GenConfig {
    kind: String,
    n: usize,
    noise: Option<f64>,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            kind: "moons".into(),
            n: DEFAULT_N,
            noise: None,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct ForestArgs {
    /// Trees in the forest.
    #[arg(long)]
    m: Option<usize>,
    /// Candidate partitions per tree.
    #[arg(long)]
    k: Option<usize>,
    /// pure or adaptive.
    #[arg(long)]
    mode: Option<String>,
    /// Fraction of points held out to score candidates.
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Splits per tree; defaults to floor(n * r_ratio).
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    r_ratio: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    forest: ForestArgs,
}

#[derive(Debug, Serialize, Deserialize)]
struct FitConfig {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    p: Option<usize>,
    r_ratio: f64,
    m: usize,
    k: usize,
    mode: SplitMode,
    holdout: f64,
    seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let c = ForestClusterParams::default();
        FitConfig {
            input: None,
            out: None,
            p: None,
            r_ratio: c.r_ratio,
            m: c.m,
            k: c.k,
            mode: c.mode,
            holdout: c.holdout_fraction,
            seed: 0,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct ClusterArgs {
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Output CSV of `index,label`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output JSON with the level scan and, when the input has labels, the ARI.
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Optional scatter plot of the result.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Splits per tree as a fraction of n.
    #[arg(long)]
    r_ratio: Option<f64>,
    /// Density quantile marking background points.
    #[arg(long)]
    q: Option<f64>,
    /// Neighbours used to label background points.
    #[arg(long)]
    k_n: Option<usize>,
    /// Number of clusters.
    #[arg(long)]
    k_c: Option<usize>,
    /// Pairwise-distance quantile used as graph radius.
    #[arg(long)]
    q_eps: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    forest: ForestArgs,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterConfig {
    input: Option<PathBuf>,
    labels: Option<PathBuf>,
    meta: Option<PathBuf>,
    svg: Option<PathBuf>,
    m: usize,
    k: usize,
    mode: SplitMode,
    holdout: f64,
    seed: u64,
    r_ratio: f64,
    q: f64,
    k_n: usize,
    k_c: usize,
    q_eps: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let c = ForestClusterParams::default();
        ClusterConfig {
            input: None,
            labels: None,
            meta: None,
            svg: None,
            m: c.m,
            k: c.k,
            mode: c.mode,
            holdout: c.holdout_fraction,
            seed: 0,
            r_ratio: c.r_ratio,
            q: c.q,
            k_n: c.k_n,
            k_c: c.k_c,
            q_eps: c.q_eps,
        }
    }
}

impl ClusterConfig {
    fn params(&self) -> ForestClusterParams {
        ForestClusterParams {
            m: self.m,
            r_ratio: self.r_ratio,
            q: self.q,
            k: self.k,
            k_n: self.k_n,
            k_c: self.k_c,
            q_eps: self.q_eps,
            mode: self.mode,
            holdout_fraction: self.holdout,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct BenchmarkArgs {
    /// synthetic, iris, all (synthetic and iris) or csv.
    #[arg(long)]
    suite: Option<String>,
    /// CSV files for the csv suite (comma separated).
    #[arg(long, value_delimiter = ',')]
    inputs: Option<Vec<PathBuf>>,
    /// Methods to run: ours, dbscan, kmeans (comma separated).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    methods: Option<Vec<String>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Points per synthetic data set.
    #[arg(long)]
    n: Option<usize>,
    /// Small grids for smoke runs.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    quick: Option<bool>,
    /// Record wall-clock times (makes reports differ between runs).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    timings: Option<bool>,
    /// method-default, raw or z-score.
    #[arg(long)]
    scaling: Option<String>,
    /// Background quantiles searched by the forest method (comma separated).
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
    /// DBSCAN minimum neighbourhood size.
    #[arg(long)]
    min_pts: Option<usize>,
    /// Output prefix: writes PREFIX.json, PREFIX.csv and PREFIX_table.csv.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchmarkConfig {
    suite: String,
    inputs: Vec<PathBuf>,
    methods: Vec<String>,
    repeats: usize,
    seed: u64,
    n: usize,
    quick: bool,
    timings: bool,
    scaling: String,
    q: Option<Vec<f64>>,
    min_pts: usize,
    out: PathBuf,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            suite: "synthetic".into(),
            inputs: Vec::new(),
            methods: vec!["ours".into(), "dbscan".into(), "kmeans".into()],
            repeats: 10,
            seed: 0,
            n: DEFAULT_N,
            quick: false,
            timings: false,
            scaling: "method-default".into(),
            q: None,
            min_pts: crate::eval::DEFAULT_MIN_PTS,
            out: PathBuf::from("benchmark"),
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    /// Dimension of the default two-mode mixture (at most 2).
    #[arg(long)]
    dim: Option<usize>,
    /// JSON Gaussian mixture to use instead of the default two-mode one.
    #[arg(long)]
    mixture: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Splits per tree.
    #[arg(long)]
    p: Option<usize>,
    /// Levels as fractions of the density maximum (comma separated).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// eps as a fraction of the density maximum.
    #[arg(long)]
    eps_frac: Option<f64>,
    /// Dilation radius; defaults to sigma_factor times the median leaf diameter.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma_factor: Option<f64>,
    /// Grid cells per axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// The grid covers [-half_width, half_width]^d.
    #[arg(long)]
    half_width: Option<f64>,
    /// Directory for binary grid snapshots.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    forest: ForestArgs,
}

#[derive(Debug, Serialize, Deserialize)]
struct ValidateConfig {
    dim: usize,
    mixture: Option<PathBuf>,
    n: usize,
    p: usize,
    m: usize,
    k: usize,
    mode: SplitMode,
    holdout: f64,
    seed: u64,
    levels: Vec<f64>,
    eps_frac: f64,
    sigma: Option<f64>,
    sigma_factor: f64,
    resolution: Option<usize>,
    half_width: f64,
    snapshots: Option<PathBuf>,
    out: PathBuf,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            dim: 2,
            mixture: None,
            n: 5000,
            p: 2000,
            m: 20,
            k: 5,
            mode: SplitMode::Adaptive,
            holdout: 0.3,
            seed: 0,
            levels: vec![0.3, 0.5, 0.7],
            eps_frac: 0.1,
            sigma: None,
            sigma_factor: 2.0,
            resolution: None,
            half_width: 4.0,
            snapshots: None,
            out: PathBuf::from("validate.json"),
        }
    }
}

/// Overlays the non-null entries of `layer` onto `base`. Keys absent from
/// `base` are errors when `strict`, skipped otherwise.
fn overlay(base: &mut Map<String, Value>, layer: &Map<String, Value>, strict: bool, origin: &str) -> Result<()> {
    for (k, v) in layer {
        if v.is_null() {
            continue;
        }
        if !base.contains_key(k) {
            if strict {
                return Err(Error::invalid(format!("{origin}: unknown setting '{k}'")));
            }
            continue;
        }
        base.insert(k.clone(), v.clone());
    }
    Ok(())
}

const COMMANDS: [&str; 5] = ["gen", "fit", "cluster", "benchmark", "validate"];

fn resolve<C: Default + Serialize + DeserializeOwned>(
    command: &str,
    config: Option<&Value>,
    flags: &impl Serialize,
) -> Result<C> {
    let Value::Object(mut merged) = serde_json::to_value(C::default())? else {
        unreachable!("settings serialize to objects");
    };
    if let Ok(s) = std::env::var(SEED_ENV) {
        if merged.contains_key("seed") {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{SEED_ENV} must be an unsigned integer, got '{s}'")))?;
            merged.insert("seed".into(), json!(seed));
        }
    }
    if let Some(cfg) = config {
        let Value::Object(top) = cfg else {
            return Err(Error::invalid("config file must hold a JSON object"));
        };
        let shared: Map<String, Value> = top
            .iter()
            .filter(|(k, _)| !COMMANDS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        overlay(&mut merged, &shared, false, "config")?;
        match top.get(command) {
            Some(Value::Object(section)) => overlay(&mut merged, section, true, &format!("config.{command}"))?,
            Some(_) => return Err(Error::invalid(format!("config.{command} must be an object"))),
            None => {}
        }
    }
    let Value::Object(flags) = serde_json::to_value(flags)? else {
        unreachable!("flags serialize to objects");
    };
    overlay(&mut merged, &flags, true, "flags")?;
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::invalid(format!("settings: {e}")))
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::invalid(format!("missing required setting --{flag}")))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json_bytes(v: &impl Serialize) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn cmd_gen(cfg: GenConfig) -> Result<()> {
    let kind: SyntheticKind = cfg.kind.parse()?;
    let noise = cfg.noise.unwrap_or_else(|| kind.default_noise());
    let ds = gen_synthetic(kind, cfg.n, noise, cfg.seed)?;
    write_csv_file(require(&cfg.out, "out")?, &ds.points, ds.truth.as_deref())
}

fn cmd_fit(cfg: FitConfig) -> Result<()> {
    let ds = read_csv_file(require(&cfg.input, "input")?)?;
    let p = cfg
        .p
        .unwrap_or_else(|| (ds.len() as f64 * cfg.r_ratio).floor() as usize);
    let params = ForestParams {
        m: cfg.m,
        k: cfg.k,
        p,
        mode: cfg.mode,
        holdout_fraction: cfg.holdout,
        seed: cfg.seed,
    };
    let forest = fit_forest(&ds.points, &params)?;
    let mut json = forest.to_json()?;
    json.push('\n');
    write_file(require(&cfg.out, "out")?, json.as_bytes())
}

fn cmd_cluster(cfg: ClusterConfig) -> Result<()> {
    let input = require(&cfg.input, "input")?;
    let labels_path = require(&cfg.labels, "labels")?;
    let meta_path = require(&cfg.meta, "meta")?;
    let ds = read_csv_file(input)?;
    let params = cfg.params();
    let result = cluster_forest(&ds.points, &params)?;
    let mut buf = Vec::new();
    result.write_labels_csv(&mut buf)?;
    write_file(labels_path, &buf)?;
    let score = ds.truth.as_ref().map(|t| ari(&result.labels, t)).transpose()?;
    let meta = json!({
        "input": input,
        "n": ds.len(),
        "dim": ds.points.dim(),
        "params": params,
        "rho_out": result.rho_out,
        "n_clusters": result.n_clusters,
        "scan_log": result.scan_log,
        "ari": score,
    });
    write_file(meta_path, &to_json_bytes(&meta)?)?;
    if let Some(svg_path) = &cfg.svg {
        let title = format!("k_c = {}, rho_out = {:.6}", params.k_c, result.rho_out);
        write_file(svg_path, scatter_svg(&ds.points, &result.labels, Some(&title))?.as_bytes())?;
    }
    if let Some(s) = score {
        log::info!("ARI against truth: {s}");
    }
    Ok(())
}

fn method_grid(name: &str, cfg: &BenchmarkConfig) -> Result<MethodGrid> {
    let mut grid = MethodGrid::by_name(name)?;
    match &mut grid {
        MethodGrid::Ours(g) => {
            if cfg.quick {
                *g = OursGrid {
                    m: 10,
                    r: vec![0.1, 0.3],
                    q: vec![0.1],
                    q_eps: vec![0.03, 0.05],
                    k_n: vec![1],
                    k_c: vec![2, 3],
                    ..OursGrid::default()
                };
            }
            if let Some(q) = &cfg.q {
                g.q = q.clone();
            }
        }
        MethodGrid::Dbscan(g) => {
            if cfg.quick {
                *g = DbscanGrid {
                    eps: vec![0.1, 0.2, 0.3],
                    ..DbscanGrid::default()
                };
            }
            g.min_pts = cfg.min_pts;
        }
        MethodGrid::Kmeans(g) => {
            if cfg.quick {
                *g = KMeansGrid {
                    k: vec![2, 3],
                    n_init: 2,
                    ..KMeansGrid::default()
                };
            }
        }
    }
    Ok(grid)
}

fn suite_datasets(cfg: &BenchmarkConfig) -> Result<Vec<Dataset>> {
    let synthetic = || -> Result<Vec<Dataset>> {
        SyntheticKind::ALL
            .into_iter()
            .map(|k| gen_synthetic(k, cfg.n, k.default_noise(), cfg.seed))
            .collect()
    };
    match cfg.suite.as_str() {
        "synthetic" => synthetic(),
        "iris" => Ok(vec![iris()]),
        "all" => {
            let mut v = synthetic()?;
            v.push(iris());
            Ok(v)
        }
        "csv" => {
            if cfg.inputs.is_empty() {
                return Err(Error::invalid("the csv suite needs --inputs"));
            }
            cfg.inputs.iter().map(|p| read_csv_file(p)).collect()
        }
        other => Err(Error::invalid(format!(
            "unknown suite '{other}' (valid: synthetic, iris, all, csv)"
        ))),
    }
}

/// Mean ARI per dataset (rows) and method (columns).
fn table_csv(reports: &[BenchmarkReport]) -> Result<Vec<u8>> {
    let mut methods: Vec<&str> = reports.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let mut datasets: Vec<&str> = reports.iter().map(|r| r.dataset.as_str()).collect();
    datasets.dedup();
    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["dataset"];
    header.extend(&methods);
    wr.write_record(&header)?;
    for d in datasets {
        let mut row = vec![d.to_string()];
        for m in &methods {
            let cell = reports
                .iter()
                .find(|r| r.dataset == d && r.method == *m)
                .map(|r| r.mean_ari.to_string())
                .unwrap_or_default();
            row.push(cell);
        }
        wr.write_record(&row)?;
    }
    wr.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))
}

fn cmd_benchmark(cfg: BenchmarkConfig) -> Result<()> {
    if cfg.methods.is_empty() {
        return Err(Error::invalid("method list is empty"));
    }
    let grids = cfg
        .methods
        .iter()
        .map(|m| method_grid(m, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let options = BenchmarkOptions {
        repeats: cfg.repeats,
        seed: cfg.seed,
        scaling: cfg.scaling.parse::<Scaling>()?,
        timings: cfg.timings,
    };
    let datasets = suite_datasets(&cfg)?;
    let mut reports = Vec::new();
    for ds in &datasets {
        for grid in &grids {
            log::info!("benchmark {} / {} ({} grid points)", ds.name, grid.name(), grid.grid_size());
            let report = benchmark(ds, grid, &options)?;
            if report.failed_grid_points > 0 {
                log::warn!(
                    "{} / {}: {} grid points had failed runs",
                    ds.name,
                    grid.name(),
                    report.failed_grid_points
                );
            }
            reports.push(report);
        }
    }
    reports.sort_by(|a, b| (&a.dataset, &a.method).cmp(&(&b.dataset, &b.method)));
    let prefix = cfg.out.as_os_str().to_owned();
    let with_suffix = |s: &str| {
        let mut p = prefix.clone();
        p.push(s);
        PathBuf::from(p)
    };
    write_file(&with_suffix(".json"), &to_json_bytes(&json!({ "reports": reports }))?)?;
    let mut flat = Vec::new();
    write_reports_csv(&mut flat, &reports)?;
    write_file(&with_suffix(".csv"), &flat)?;
    let table = table_csv(&reports)?;
    write_file(&with_suffix("_table.csv"), &table)?;
    let _ = std::io::stdout().write_all(&table);
    Ok(())
}

fn cmd_validate(cfg: ValidateConfig) -> Result<()> {
    let mixture = match &cfg.mixture {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<GaussianMixture>(&text)?
        }
        None => {
            if cfg.dim == 0 {
                return Err(Error::invalid("dim must be >= 1"));
            }
            GaussianMixture::two_modes(cfg.dim)
        }
    };
    mixture.validate()?;
    let dim = mixture.dim();
    if dim > 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    let resolution = cfg.resolution.unwrap_or_else(|| default_resolution(dim));
    let lattice = Lattice::new(HyperBox::cube(dim, cfg.half_width)?, resolution)?;
    let gd = GridDensity::from_fn(lattice, |x| mixture.pdf(x))?;
    let data = mixture.sample(cfg.n, cfg.seed);
    let params = ForestParams {
        m: cfg.m,
        k: cfg.k,
        p: cfg.p,
        mode: cfg.mode,
        holdout_fraction: cfg.holdout,
        seed: cfg.seed,
    };
    let forest = fit_forest(&data, &params)?;
    let mut diam = forest.leaf_diameters();
    diam.sort_by(f64::total_cmp);
    let median = diam[diam.len() / 2];
    let sigma = cfg.sigma.unwrap_or(cfg.sigma_factor * median);
    let f_max = gd.max();
    let eps = cfg.eps_frac * f_max;
    if let Some(dir) = &cfg.snapshots {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut buf = Vec::new();
        gd.write_binary(&mut buf)?;
        write_file(&dir.join("density.bin"), &buf)?;
    }
    let mut reports = Vec::new();
    for (li, &frac) in cfg.levels.iter().enumerate() {
        let (report, sets) = check_uncertainty_control(&gd, &data, &forest, frac * f_max, eps, sigma)?;
        if let Some(dir) = &cfg.snapshots {
            for (name, set) in [("inner", &sets.inner), ("estimate", &sets.estimate), ("outer", &sets.outer)] {
                let mut buf = Vec::new();
                set.write_binary(&mut buf)?;
                write_file(&dir.join(format!("level{li}_{name}.bin")), &buf)?;
            }
        }
        reports.push(report);
    }
    let max_fraction = reports.iter().map(|r| r.violation_fraction()).fold(0.0, f64::max);
    let out = json!({
        "dim": dim,
        "n": cfg.n,
        "forest": params,
        "resolution": resolution,
        "half_width": cfg.half_width,
        "f_max": f_max,
        "eps": eps,
        "median_leaf_diameter": median,
        "sigma": sigma,
        "levels": cfg.levels,
        "reports": reports,
        "max_violation_fraction": max_fraction,
    });
    write_file(&cfg.out, &to_json_bytes(&out)?)?;
    println!("max violation fraction: {max_fraction}");
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Some(serde_json::from_str::<Value>(&text)?)
        }
        None => None,
    };
    let config = config.as_ref();
    match &cli.command {
        Command::Gen(a) => cmd_gen(resolve("gen", config, a)?),
        Command::Fit(a) => cmd_fit(resolve("fit", config, a)?),
        Command::Cluster(a) => cmd_cluster(resolve("cluster", config, a)?),
        Command::Benchmark(a) => cmd_benchmark(resolve("benchmark", config, a)?),
        Command::Validate(a) => cmd_validate(resolve("validate", config, a)?),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Error::NoValidLevel { k_c, scan_log }) => {
            eprintln!("error: no level yields {k_c} components; scan log (level, components):");
            for (level, m) in scan_log {
                eprintln!("{level}\t{m}");
            }
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
