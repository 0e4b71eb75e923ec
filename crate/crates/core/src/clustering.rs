//! Level-set clustering.
//!
//! Two procedures live here. [`algorithm1_scan`] is the generic level scan
//! over a decreasing family of sets: it raises the level in steps of `eps`
//! while exactly one τ-component persists two steps up, then reports the
//! persisting components two steps higher. [`cluster_forest`] is the
//! practical pipeline: fit a best-scored forest, drop low-density points,
//! connect the rest with a radius graph and scan the distinct density
//! values upwards until the graph falls into `k_c` components; background
//! points are then labelled by k-NN.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{fit_forest, DensityForest, ForestParams};
use crate::error::{Error, Result};
use crate::graph::{eps_graph, knn_classify, tau_components, ComponentLabels, EpsGraph, NeighborTable, UnionFind};
use crate::partition::SplitMode;
use crate::points::{dist, Points};

/// Label of points not (yet) assigned to a cluster.
pub const BACKGROUND: i64 = -1;

const MAX_SCAN_STEPS: usize = 10_000_000;

/// Sample-supported level set `{x_i : f(x_i) >= rho}`; its `sigma`
/// dilation is carried by downstream graph radii.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetPoints {
    pub rho: f64,
    pub foreground: Vec<usize>,
    pub sigma: f64,
}

/// Indices with `values[i] >= rho`.
pub fn level_points_from(values: &[f64], rho: f64, sigma: f64) -> LevelSetPoints {
    LevelSetPoints {
        rho,
        foreground: (0..values.len()).filter(|&i| values[i] >= rho).collect(),
        sigma,
    }
}

pub fn level_points(data: &Points, forest: &DensityForest, rho: f64) -> Result<LevelSetPoints> {
    if !(rho >= 0.0) {
        return Err(Error::invalid(format!("level must be >= 0, got {rho}")));
    }
    Ok(level_points_from(&forest.eval_many(data), rho, 0.0))
}

/// A decreasing family `rho -> L_rho` over a fixed ground set of elements.
pub trait LevelFamily {
    /// Size of the ground set.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements of `L_rho`, ascending. Must shrink as `rho` grows.
    fn members(&self, rho: f64) -> Vec<usize>;

    /// τ-components of the given members; labels index into `members`.
    fn tau_components(&self, members: &[usize], tau: f64) -> Result<ComponentLabels>;
}

/// Level family of points carrying values: `L_rho = {x_i : v_i >= rho}`.
///
/// Covers both sample level sets (values = estimated densities) and grid
/// level sets (points = lattice nodes, values = density on the lattice).
#[derive(Debug, Clone)]
pub struct PointLevelFamily {
    points: Points,
    values: Vec<f64>,
}

impl PointLevelFamily {
    pub fn new(points: Points, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::invalid("one value per point required"));
        }
        Ok(PointLevelFamily { points, values })
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl LevelFamily for PointLevelFamily {
    fn len(&self) -> usize {
        self.values.len()
    }

    fn members(&self, rho: f64) -> Vec<usize> {
        level_points_from(&self.values, rho, 0.0).foreground
    }

    fn tau_components(&self, members: &[usize], tau: f64) -> Result<ComponentLabels> {
        tau_components(&self.points.select(members), tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub level: f64,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Per-point label; [`BACKGROUND`] marks unassigned points.
    pub labels: Vec<i64>,
    pub rho_out: f64,
    pub n_clusters: usize,
    pub scan_log: Vec<ScanEntry>,
    /// The scan found no split and fell back to the start level.
    #[serde(default)]
    pub single_cluster: bool,
    /// The fallback happened because the level sets ran empty.
    #[serde(default)]
    pub exhausted: bool,
}

impl ClusterResult {
    pub fn background_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == BACKGROUND).count()
    }

    /// `index,label` CSV.
    pub fn write_labels_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "label"])?;
        for (i, l) in self.labels.iter().enumerate() {
            wr.write_record([i.to_string(), l.to_string()])?;
        }
        wr.flush().map_err(|e| Error::Format(format!("csv: {e}")))?;
        Ok(())
    }
}

/// τ-components of `L_rho` that meet `L_{rho + 2 eps}`, as element lists.
pub fn persistent_components<F: LevelFamily + ?Sized>(
    family: &F,
    rho: f64,
    tau: f64,
    eps: f64,
) -> Result<Vec<Vec<usize>>> {
    let members = family.members(rho);
    if members.is_empty() {
        return Ok(Vec::new());
    }
    let comps = family.tau_components(&members, tau)?;
    let mut upper = vec![false; family.len()];
    for i in family.members(rho + 2.0 * eps) {
        upper[i] = true;
    }
    Ok(comps
        .members()
        .into_iter()
        .map(|c| c.into_iter().map(|l| members[l]).collect::<Vec<_>>())
        .filter(|c| c.iter().any(|&i| upper[i]))
        .collect())
}

/// Generic level scan with a persistence check.
///
/// Starting at `rho0`, counts the τ-components of `L_rho` that still meet
/// `L_{rho+2eps}` and raises `rho` by `eps` after each count, stopping once
/// the count differs from one. The level is then raised by another `2 eps`
/// and the persisting components there are returned if there are several.
/// Otherwise the result is the single cluster `L_{rho0}` at level `rho0`;
/// `exhausted` records that the scan ended because the sets ran empty.
pub fn algorithm1_scan<F: LevelFamily + ?Sized>(
    family: &F,
    tau: f64,
    eps: f64,
    rho0: f64,
) -> Result<ClusterResult> {
    if !(tau > 0.0) || !(eps > 0.0) || !(rho0 >= 0.0) {
        return Err(Error::invalid(format!(
            "need tau > 0, eps > 0, rho0 >= 0 (got {tau}, {eps}, {rho0})"
        )));
    }
    let mut scan_log = Vec::new();
    let mut rho = rho0;
    let mut steps = 0usize;
    loop {
        let m = persistent_components(family, rho, tau, eps)?.len();
        scan_log.push(ScanEntry { level: rho, components: m });
        rho += eps;
        if m != 1 {
            break;
        }
        steps += 1;
        if steps > MAX_SCAN_STEPS {
            return Err(Error::InvalidState("level scan did not terminate".into()));
        }
    }
    rho += 2.0 * eps;
    let comps = persistent_components(family, rho, tau, eps)?;
    scan_log.push(ScanEntry { level: rho, components: comps.len() });

    let mut labels = vec![BACKGROUND; family.len()];
    if comps.len() > 1 {
        for (c, members) in comps.iter().enumerate() {
            for &i in members {
                labels[i] = c as i64;
            }
        }
        return Ok(ClusterResult {
            labels,
            rho_out: rho,
            n_clusters: comps.len(),
            scan_log,
            single_cluster: false,
            exhausted: false,
        });
    }
    for i in family.members(rho0) {
        labels[i] = 0;
    }
    Ok(ClusterResult {
        labels,
        rho_out: rho0,
        n_clusters: 1,
        scan_log,
        single_cluster: true,
        exhausted: comps.is_empty(),
    })
}

/// Empirical quantile by the nearest-rank rule: the `ceil(q n)`-th smallest
/// value of `sorted`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Sorted pairwise distances `{‖x_i - x_j‖ : i < j}` of a point set.
#[derive(Debug, Clone)]
pub struct PairwiseDistances {
    sorted: Vec<f64>,
}

impl PairwiseDistances {
    pub fn new(points: &Points) -> Self {
        let n = points.len();
        let mut sorted: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (i + 1..n).map(move |j| dist(points.row(i), points.row(j))))
            .collect();
        sorted.par_sort_unstable_by(f64::total_cmp);
        PairwiseDistances { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if self.sorted.is_empty() {
            return Err(Error::invalid("pairwise distances need at least two points"));
        }
        Ok(nearest_rank(&self.sorted, q))
    }
}

/// Component counts of the radius graph on the high-density points, at
/// every distinct density level.
#[derive(Debug, Clone)]
pub struct LevelScan {
    n: usize,
    /// Data indices of the retained points, ascending.
    foreground: Vec<usize>,
    fg_density: Vec<f64>,
    graph: EpsGraph,
    /// Distinct retained densities, ascending.
    levels: Vec<f64>,
    counts: Vec<usize>,
}

/// Keeps the points whose density is strictly above the nearest-rank
/// `q`-quantile, links them by the radius-`eps` graph and counts the
/// components of the subgraph induced by `{density >= level}` for every
/// distinct retained level.
pub fn scan_levels(data: &Points, densities: &[f64], q: f64, eps: f64) -> Result<LevelScan> {
    if densities.len() != data.len() || data.is_empty() {
        return Err(Error::invalid("one density per (nonempty) data point required"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q must lie in (0,1), got {q}")));
    }
    let mut sorted = densities.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let cut = nearest_rank(&sorted, q);
    let foreground: Vec<usize> = (0..data.len()).filter(|&i| densities[i] > cut).collect();
    let fg_density: Vec<f64> = foreground.iter().map(|&i| densities[i]).collect();
    let graph = eps_graph(&data.select(&foreground), eps)?;

    // Add vertices from the highest level down; the component count after
    // each block of equal densities is the count at that level.
    let mut order: Vec<usize> = (0..foreground.len()).collect();
    order.sort_by(|&a, &b| fg_density[b].total_cmp(&fg_density[a]));
    let mut uf = UnionFind::new(foreground.len());
    let mut active = vec![false; foreground.len()];
    let (mut added, mut merges) = (0usize, 0usize);
    let mut levels = Vec::new();
    let mut counts = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let level = fg_density[order[i]];
        while i < order.len() && fg_density[order[i]] == level {
            let v = order[i];
            active[v] = true;
            added += 1;
            for &w in graph.neighbors(v) {
                if active[w] && uf.union(v, w) {
                    merges += 1;
                }
            }
            i += 1;
        }
        levels.push(level);
        counts.push(added - merges);
    }
    levels.reverse();
    counts.reverse();
    Ok(LevelScan {
        n: data.len(),
        foreground,
        fg_density,
        graph,
        levels,
        counts,
    })
}

impl LevelScan {
    pub fn foreground(&self) -> &[usize] {
        &self.foreground
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn eps(&self) -> f64 {
        self.graph.eps
    }

    /// Index of the lowest level with exactly `k_c` components.
    pub fn first_level_with(&self, k_c: usize) -> Option<usize> {
        self.counts.iter().position(|&m| m == k_c)
    }

    /// Scan entries for levels `0..=upto` (all levels when `None`).
    pub fn scan_log(&self, upto: Option<usize>) -> Vec<ScanEntry> {
        let end = upto.map_or(self.levels.len(), |j| j + 1);
        self.levels[..end]
            .iter()
            .zip(&self.counts)
            .map(|(&level, &components)| ScanEntry { level, components })
            .collect()
    }

    /// Component labels of the points with density `>= levels[j]`, numbered
    /// by smallest data index; every other point is background.
    pub fn labels_at(&self, j: usize) -> Vec<i64> {
        let level = self.levels[j];
        let active: Vec<bool> = self.fg_density.iter().map(|&f| f >= level).collect();
        let mut uf = UnionFind::new(self.foreground.len());
        for v in 0..self.foreground.len() {
            if !active[v] {
                continue;
            }
            for &w in self.graph.neighbors(v) {
                if w > v && active[w] {
                    uf.union(v, w);
                }
            }
        }
        let mut labels = vec![BACKGROUND; self.n];
        let mut root_label = vec![BACKGROUND; self.foreground.len()];
        let mut next = 0;
        for v in 0..self.foreground.len() {
            if !active[v] {
                continue;
            }
            let r = uf.find(v);
            if root_label[r] == BACKGROUND {
                root_label[r] = next;
                next += 1;
            }
            labels[self.foreground[v]] = root_label[r];
        }
        labels
    }

    /// Stops the scan at the first level with `k_c` components.
    pub fn select(&self, k_c: usize) -> Result<ClusterResult> {
        let Some(j) = self.first_level_with(k_c) else {
            return Err(Error::NoValidLevel {
                k_c,
                scan_log: self.scan_log(None).into_iter().map(|e| (e.level, e.components)).collect(),
            });
        };
        Ok(ClusterResult {
            labels: self.labels_at(j),
            rho_out: self.levels[j],
            n_clusters: k_c,
            scan_log: self.scan_log(Some(j)),
            single_cluster: false,
            exhausted: false,
        })
    }
}

/// Labels every background point by `k_n`-NN vote among the labelled points.
pub fn assign_background(data: &Points, mut result: ClusterResult, k_n: usize) -> Result<ClusterResult> {
    if result.labels.len() != data.len() {
        return Err(Error::invalid("labels do not match data"));
    }
    let (refs, queries): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| result.labels[i] != BACKGROUND);
    if refs.is_empty() {
        return Err(Error::InvalidState("no labelled foreground points".into()));
    }
    if queries.is_empty() {
        return Ok(result);
    }
    let ref_labels: Vec<i64> = refs.iter().map(|&i| result.labels[i]).collect();
    let assigned = knn_classify(&data.select(&queries), &data.select(&refs), &ref_labels, k_n)?;
    for (q, l) in queries.into_iter().zip(assigned) {
        result.labels[q] = l;
    }
    Ok(result)
}

/// Same as [`assign_background`] using precomputed neighbour orderings.
pub fn assign_background_indexed(
    data: &Points,
    table: &NeighborTable,
    mut result: ClusterResult,
    k_n: usize,
) -> Result<ClusterResult> {
    let labels: Vec<Option<i64>> = result
        .labels
        .iter()
        .map(|&l| (l != BACKGROUND).then_some(l))
        .collect();
    if labels.iter().all(Option::is_none) {
        return Err(Error::InvalidState("no labelled foreground points".into()));
    }
    let queries: Vec<usize> = (0..data.len()).filter(|&i| labels[i].is_none()).collect();
    if queries.is_empty() {
        return Ok(result);
    }
    let assigned = table.classify(data, &queries, &labels, k_n)?;
    for (q, l) in queries.into_iter().zip(assigned) {
        result.labels[q] = l;
    }
    Ok(result)
}

/// Parameters of the forest clustering pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestClusterParams {
    /// Trees in the forest.
    pub m: usize,
    /// Splits per tree as a fraction of the sample size.
    pub r_ratio: f64,
    /// Density quantile below which points are background.
    pub q: f64,
    /// Candidates per best-scored tree.
    pub k: usize,
    /// Neighbours used to label background points.
    pub k_n: usize,
    /// Requested number of clusters.
    pub k_c: usize,
    /// Quantile of pairwise distances used as graph radius.
    pub q_eps: f64,
    pub mode: SplitMode,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ForestClusterParams {
    fn default() -> Self {
        ForestClusterParams {
            m: 100,
            r_ratio: 0.2,
            q: 0.1,
            k: 5,
            k_n: 5,
            k_c: 2,
            q_eps: 0.05,
            mode: SplitMode::Adaptive,
            holdout_fraction: 0.3,
            seed: 0,
        }
    }
}

impl ForestClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid(format!("q must lie in (0,1), got {}", self.q)));
        }
        if !(self.q_eps > 0.0 && self.q_eps <= 1.0) {
            return Err(Error::invalid(format!("q_eps must lie in (0,1], got {}", self.q_eps)));
        }
        if !(self.r_ratio > 0.0) {
            return Err(Error::invalid(format!("r_ratio must be > 0, got {}", self.r_ratio)));
        }
        if self.k_c == 0 || self.k_n == 0 {
            return Err(Error::invalid("k_c and k_n must be >= 1"));
        }
        self.forest_params(2).validate()
    }

    /// `floor(n * r_ratio)` splits per tree.
    pub fn splits(&self, n: usize) -> usize {
        (n as f64 * self.r_ratio).floor() as usize
    }

    pub fn forest_params(&self, n: usize) -> ForestParams {
        ForestParams {
            m: self.m,
            k: self.k,
            p: self.splits(n),
            mode: self.mode,
            holdout_fraction: self.holdout_fraction,
            seed: self.seed,
        }
    }
}

/// Forest-based clustering with background assignment.
///
/// Fails with [`Error::NoValidLevel`] when no level splits the retained
/// points into exactly `k_c` components.
pub fn cluster_forest(data: &Points, params: &ForestClusterParams) -> Result<ClusterResult> {
    params.validate()?;
    if data.len() < 2 {
        return Err(Error::invalid("clustering needs at least two points"));
    }
    let forest = fit_forest(data, &params.forest_params(data.len()))?;
    let densities = forest.eval_many(data);
    let eps = PairwiseDistances::new(data).quantile(params.q_eps)?;
    let scan = scan_levels(data, &densities, params.q, eps)?;
    let result = scan.select(params.k_c)?;
    assign_background(data, result, params.k_n)
}

/// Per-dataset caches for running the pipeline many times on one data set.
pub struct PreparedData<'a> {
    data: &'a Points,
    pairs: PairwiseDistances,
    neighbors: NeighborTable,
}

/// Neighbour orderings kept per point by [`PreparedData`]: complete while
/// the table stays below `FULL_TABLE_ENTRIES`, truncated otherwise.
const NEIGHBOR_DEPTH: usize = 64;
const FULL_TABLE_ENTRIES: usize = 1 << 24;

fn neighbor_depth(n: usize) -> usize {
    if n.saturating_mul(n) <= FULL_TABLE_ENTRIES {
        n
    } else {
        NEIGHBOR_DEPTH
    }
}

impl<'a> PreparedData<'a> {
    pub fn new(data: &'a Points) -> Self {
        PreparedData {
            data,
            pairs: PairwiseDistances::new(data),
            neighbors: NeighborTable::new(data, neighbor_depth(data.len())),
        }
    }

    pub fn data(&self) -> &Points {
        self.data
    }

    pub fn pairs(&self) -> &PairwiseDistances {
        &self.pairs
    }

    pub fn neighbors(&self) -> &NeighborTable {
        &self.neighbors
    }

    /// Forest densities at the data points.
    pub fn densities(&self, params: &ForestClusterParams) -> Result<Vec<f64>> {
        let forest = fit_forest(self.data, &params.forest_params(self.data.len()))?;
        Ok(forest.eval_many(self.data))
    }

    pub fn scan(&self, densities: &[f64], q: f64, q_eps: f64) -> Result<LevelScan> {
        scan_levels(self.data, densities, q, self.pairs.quantile(q_eps)?)
    }

    /// Labels the background of a selected level.
    pub fn assign(&self, selected: ClusterResult, k_n: usize) -> Result<ClusterResult> {
        assign_background_indexed(self.data, &self.neighbors, selected, k_n)
    }

    pub fn finish(&self, scan: &LevelScan, k_c: usize, k_n: usize) -> Result<ClusterResult> {
        self.assign(scan.select(k_c)?, k_n)
    }

    /// Equivalent to [`cluster_forest`].
    pub fn run(&self, params: &ForestClusterParams) -> Result<ClusterResult> {
        params.validate()?;
        let densities = self.densities(params)?;
        let scan = self.scan(&densities, params.q, params.q_eps)?;
        self.finish(&scan, params.k_c, params.k_n)
    }
}
