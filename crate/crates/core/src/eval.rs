//! Clustering evaluation: adjusted Rand index, the DBSCAN and k-means
//! baselines and a grid-search benchmark harness.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clustering::{ClusterResult, ForestClusterParams, PreparedData};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::RadiusIndex;
use crate::partition::SplitMode;
use crate::points::{lex_cmp, sq_dist, Points};
use crate::rng::seeded;

fn comb2(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// Adjusted Rand index of two labelings, from their contingency table.
///
/// Every label value, including `-1`, is an ordinary class. When the
/// index is undefined (both labelings put all points together, or both
/// keep all points apart) the result is 1.
pub fn ari(a: &[i64], b: &[i64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "labelings differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as u64;
    let mut table: HashMap<(i64, i64), u64> = HashMap::new();
    let mut rows: HashMap<i64, u64> = HashMap::new();
    let mut cols: HashMap<i64, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: u128 = table.values().map(|&c| comb2(c)).sum();
    let sum_a: u128 = rows.values().map(|&c| comb2(c)).sum();
    let sum_b: u128 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    if total == 0 {
        return Ok(1.0);
    }
    let expected = sum_a as f64 * sum_b as f64 / total as f64;
    let max = 0.5 * (sum_a + sum_b) as f64;
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index as f64 - expected) / denom)
}

/// Minimum neighbourhood size used for DBSCAN unless stated otherwise.
pub const DEFAULT_MIN_PTS: usize = 5;

/// DBSCAN with closed `eps`-balls; a neighbourhood counts its centre.
///
/// Clusters are grown from core points in lexicographic order of the
/// coordinates, so labels depend only on the point set, not on its order
/// (duplicate points are broken by index). Noise is `-1`.
pub fn dbscan(points: &Points, eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be positive and finite, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::invalid("min_pts must be >= 1"));
    }
    let n = points.len();
    let mut canon: Vec<usize> = (0..n).collect();
    canon.sort_by(|&a, &b| lex_cmp(points.row(a), points.row(b)).then(a.cmp(&b)));
    let mut rank = vec![0usize; n];
    for (r, &i) in canon.iter().enumerate() {
        rank[i] = r;
    }
    let index = RadiusIndex::new(points, eps);
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut nb = Vec::new();
            index.for_each_within(points.row(i), true, |j, _| nb.push(j));
            nb.sort_unstable_by_key(|&j| rank[j]);
            nb
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![-1i64; n];
    let mut next = 0i64;
    let mut queue = std::collections::VecDeque::new();
    for &p in &canon {
        if labels[p] != -1 || !core[p] {
            continue;
        }
        labels[p] = next;
        queue.push_back(p);
        while let Some(c) = queue.pop_front() {
            for &q in &neighbors[c] {
                if labels[q] == -1 {
                    labels[q] = next;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labels: Vec<i64>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
}

fn nearest_centroid(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = sq_dist(x, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm from k-means++ seeding, run until the assignment stops
/// changing or `max_iter` rounds have passed. An emptied cluster is
/// re-seeded at the point farthest from its nearest centroid.
pub fn kmeans(points: &Points, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k-means needs 1 <= k <= n = {n}, got k = {k}")));
    }
    let mut rng = seeded(seed);
    let mut centroids: Vec<Vec<f64>> = vec![points.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = points.rows().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            // Guard against rounding landing on a zero-weight point.
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points.row(pick).to_vec();
        for (i, x) in points.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, &c));
        }
        centroids.push(c);
    }

    let dim = points.dim();
    let mut assign = vec![usize::MAX; n];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let fresh: Vec<usize> = points
            .rows()
            .map(|x| nearest_centroid(x, &centroids).0)
            .collect();
        let changed = fresh != assign;
        assign = fresh;
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, x) in points.rows().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = nearest_centroid(points.row(a), &centroids).1;
                        let db = nearest_centroid(points.row(b), &centroids).1;
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("n >= 1");
                centroids[c] = points.row(far).to_vec();
                counts[c] = 1;
            }
        }
    }
    let mut inertia = 0.0;
    let labels = points
        .rows()
        .map(|x| {
            let (c, d) = nearest_centroid(x, &centroids);
            inertia += d;
            c as i64
        })
        .collect();
    Ok(KMeansResult {
        labels,
        centroids,
        inertia,
        iterations,
    })
}

/// Lowest-inertia result of `n_init` k-means runs with seeds derived from
/// `seed`.
pub fn kmeans_restarts(
    points: &Points,
    k: usize,
    seed: u64,
    max_iter: usize,
    n_init: usize,
) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for r in 0..n_init.max(1) {
        let run = kmeans(points, k, crate::rng::stream_seed(seed, r as u64, 0), max_iter)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Parameter grid of the forest clustering method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OursGrid {
    pub m: usize,
    pub k: usize,
    pub mode: SplitMode,
    pub holdout_fraction: f64,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    pub q_eps: Vec<f64>,
    pub k_n: Vec<usize>,
    pub k_c: Vec<usize>,
}

impl Default for OursGrid {
    fn default() -> Self {
        OursGrid {
            m: 100,
            k: 5,
            mode: SplitMode::Adaptive,
            holdout_fraction: 0.3,
            r: vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            q: vec![0.05, 0.1, 0.2, 0.3],
            q_eps: vec![0.01, 0.03, 0.05, 0.07, 0.09, 0.12, 0.15, 0.20],
            k_n: vec![1, 2, 5],
            k_c: vec![2, 3, 4, 5, 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbscanGrid {
    pub eps: Vec<f64>,
    pub min_pts: usize,
}

impl Default for DbscanGrid {
    fn default() -> Self {
        DbscanGrid {
            eps: (1..=30).map(|i| i as f64 / 100.0).collect(),
            min_pts: DEFAULT_MIN_PTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansGrid {
    pub k: Vec<usize>,
    pub max_iter: usize,
    pub n_init: usize,
}

impl Default for KMeansGrid {
    fn default() -> Self {
        KMeansGrid {
            k: (2..=10).collect(),
            max_iter: 300,
            n_init: 10,
        }
    }
}

/// A clustering method together with the parameter grid to search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum MethodGrid {
    Ours(OursGrid),
    Dbscan(DbscanGrid),
    Kmeans(KMeansGrid),
}

impl MethodGrid {
    pub fn name(&self) -> &'static str {
        match self {
            MethodGrid::Ours(_) => "ours",
            MethodGrid::Dbscan(_) => "dbscan",
            MethodGrid::Kmeans(_) => "kmeans",
        }
    }

    /// Default grid for a method name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "ours" => Ok(MethodGrid::Ours(OursGrid::default())),
            "dbscan" => Ok(MethodGrid::Dbscan(DbscanGrid::default())),
            "kmeans" => Ok(MethodGrid::Kmeans(KMeansGrid::default())),
            _ => Err(Error::invalid(format!(
                "unknown method '{name}' (valid: ours, dbscan, kmeans)"
            ))),
        }
    }

    pub fn grid_size(&self) -> usize {
        match self {
            MethodGrid::Ours(g) => g.r.len() * g.q.len() * g.q_eps.len() * g.k_n.len() * g.k_c.len(),
            MethodGrid::Dbscan(g) => g.eps.len(),
            MethodGrid::Kmeans(g) => g.k.len(),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, MethodGrid::Dbscan(_))
    }
}

/// Coordinate preprocessing applied before a method runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// Raw coordinates for the forest method (it rescales internally),
    /// z-scores for the distance-threshold baselines.
    #[default]
    MethodDefault,
    Raw,
    ZScore,
}

impl std::str::FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "method-default" => Ok(Scaling::MethodDefault),
            "raw" => Ok(Scaling::Raw),
            "z-score" => Ok(Scaling::ZScore),
            _ => Err(Error::invalid(format!(
                "unknown scaling '{s}' (valid: method-default, raw, z-score)"
            ))),
        }
    }
}

impl Scaling {
    fn standardize(self, method: &MethodGrid) -> bool {
        match self {
            Scaling::MethodDefault => !matches!(method, MethodGrid::Ours(_)),
            Scaling::Raw => false,
            Scaling::ZScore => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    /// Seeded runs per grid point for stochastic methods.
    pub repeats: usize,
    pub seed: u64,
    pub scaling: Scaling,
    /// Record wall-clock time in the report.
    pub timings: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            repeats: 10,
            seed: 0,
            scaling: Scaling::MethodDefault,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub dataset: String,
    pub method: String,
    pub n: usize,
    pub grid_size: usize,
    pub repeats: usize,
    pub standardized: bool,
    pub best_params: Value,
    /// Mean ARI over the runs at `best_params`, failed runs counting 0.
    pub mean_ari: f64,
    pub std_ari: f64,
    /// ARI of each run at `best_params`; `None` marks a failed run.
    pub runs: Vec<Option<f64>>,
    /// Grid points with at least one failed run.
    pub failed_grid_points: usize,
    pub runtime_ms: Option<f64>,
}

/// Per-run outcomes of one grid point.
struct GridPoint {
    params: Value,
    runs: Vec<Option<f64>>,
}

impl GridPoint {
    fn mean_std(&self) -> (f64, f64) {
        let v: Vec<f64> = self.runs.iter().map(|r| r.unwrap_or(0.0)).collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// Grid search: every grid point is run `repeats` times (once for
/// deterministic methods) and the point with the highest mean ARI against
/// the dataset's ground truth is reported; ties go to the earlier point.
/// Failed runs score 0 and are counted, never fatal.
pub fn benchmark(dataset: &Dataset, method: &MethodGrid, options: &BenchmarkOptions) -> Result<BenchmarkReport> {
    let truth = dataset
        .truth
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("dataset '{}' has no truth labels", dataset.name)))?;
    if method.grid_size() == 0 {
        return Err(Error::invalid("parameter grid is empty"));
    }
    if options.repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    let started = Instant::now();
    let points = if options.scaling.standardize(method) {
        dataset.points.standardized()
    } else {
        dataset.points.clone()
    };
    let repeats = if method.is_stochastic() { options.repeats } else { 1 };
    let score = |labels: Result<Vec<i64>>| labels.and_then(|l| ari(&l, truth)).ok();

    let grid: Vec<GridPoint> = match method {
        MethodGrid::Dbscan(g) => g
            .eps
            .par_iter()
            .map(|&eps| GridPoint {
                params: json!({ "eps": eps, "min_pts": g.min_pts }),
                runs: vec![score(dbscan(&points, eps, g.min_pts))],
            })
            .collect(),
        MethodGrid::Kmeans(g) => g
            .k
            .par_iter()
            .map(|&k| GridPoint {
                params: json!({ "k": k }),
                runs: (0..repeats)
                    .map(|rep| {
                        let seed = crate::rng::stream_seed(options.seed, rep as u64, k as u64);
                        score(kmeans_restarts(&points, k, seed, g.max_iter, g.n_init).map(|r| r.labels))
                    })
                    .collect(),
            })
            .collect(),
        MethodGrid::Ours(g) => ours_grid(&points, truth, g, repeats, options.seed)?,
    };

    let mut best = 0;
    let mut best_mean = f64::NEG_INFINITY;
    for (i, gp) in grid.iter().enumerate() {
        let (mean, _) = gp.mean_std();
        if mean > best_mean {
            best = i;
            best_mean = mean;
        }
    }
    let (mean_ari, std_ari) = grid[best].mean_std();
    Ok(BenchmarkReport {
        dataset: dataset.name.clone(),
        method: method.name().to_string(),
        n: points.len(),
        grid_size: grid.len(),
        repeats,
        standardized: options.scaling.standardize(method),
        best_params: grid[best].params.clone(),
        mean_ari,
        std_ari,
        runs: grid[best].runs.clone(),
        failed_grid_points: grid.iter().filter(|gp| gp.runs.iter().any(Option::is_none)).count(),
        runtime_ms: options.timings.then(|| started.elapsed().as_secs_f64() * 1e3),
    })
}

/// Runs the forest method over its grid. One forest is fitted per
/// (r, repeat) and shared by all downstream parameters.
fn ours_grid(points: &Points, truth: &[i64], g: &OursGrid, repeats: usize, seed: u64) -> Result<Vec<GridPoint>> {
    let prepared = PreparedData::new(points);
    let base = ForestClusterParams {
        m: g.m,
        k: g.k,
        mode: g.mode,
        holdout_fraction: g.holdout_fraction,
        ..Default::default()
    };
    base.forest_params(points.len()).validate()?;
    let tail = g.q.len() * g.q_eps.len() * g.k_n.len() * g.k_c.len();
    let tasks: Vec<(usize, usize)> = (0..g.r.len())
        .flat_map(|ri| (0..repeats).map(move |rep| (ri, rep)))
        .collect();
    // outcome[ri * repeats + rep] holds the ARIs of all downstream points.
    let outcome: Vec<Vec<Option<f64>>> = tasks
        .par_iter()
        .map(|&(ri, rep)| {
            let params = ForestClusterParams {
                r_ratio: g.r[ri],
                seed: crate::rng::stream_seed(seed, rep as u64, 0),
                ..base
            };
            let mut out = vec![None; tail];
            let Ok(densities) = prepared.densities(&params) else {
                return out;
            };
            let mut slot = 0;
            for &q in &g.q {
                for &q_eps in &g.q_eps {
                    let scan = prepared.scan(&densities, q, q_eps);
                    let selected: Vec<Option<ClusterResult>> = g
                        .k_c
                        .iter()
                        .map(|&k_c| scan.as_ref().ok().and_then(|s| s.select(k_c).ok()))
                        .collect();
                    for &k_n in &g.k_n {
                        for sel in &selected {
                            if let Some(sel) = sel {
                                out[slot] = prepared
                                    .assign(sel.clone(), k_n)
                                    .and_then(|r| ari(&r.labels, truth))
                                    .ok();
                            }
                            slot += 1;
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut grid = Vec::with_capacity(g.r.len() * tail);
    for (ri, &r) in g.r.iter().enumerate() {
        let mut slot = 0;
        for &q in &g.q {
            for &q_eps in &g.q_eps {
                for &k_n in &g.k_n {
                    for &k_c in &g.k_c {
                        grid.push(GridPoint {
                            params: json!({
                                "m": g.m, "k": g.k, "r": r, "q": q,
                                "q_eps": q_eps, "k_n": k_n, "k_c": k_c,
                            }),
                            runs: (0..repeats).map(|rep| outcome[ri * repeats + rep][slot]).collect(),
                        });
                        slot += 1;
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// `key=value` pairs of a flat JSON object joined by `;`, keys sorted.
pub fn params_string(params: &Value) -> String {
    let mut s = String::new();
    if let Some(obj) = params.as_object() {
        let mut keys: Vec<&String> = obj.keys().collect();
        keys.sort();
        for (i, k) in keys.into_iter().enumerate() {
            if i > 0 {
                s.push(';');
            }
            let _ = write!(s, "{k}={}", obj[k]);
        }
    }
    s
}

/// Writes reports as CSV with columns
/// `dataset,method,params,mean_ari,std_ari,runtime_ms`.
pub fn write_reports_csv<W: std::io::Write>(w: W, reports: &[BenchmarkReport]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["dataset", "method", "params", "mean_ari", "std_ari", "runtime_ms"])?;
    for r in reports {
        wr.write_record([
            r.dataset.clone(),
            r.method.clone(),
            params_string(&r.best_params),
            r.mean_ari.to_string(),
            r.std_ari.to_string(),
            r.runtime_ms.map(|t| format!("{t:.1}")).unwrap_or_default(),
        ])?;
    }
    wr.flush().map_err(|e| Error::Format(format!("csv: {e}")))?;
    Ok(())
}
