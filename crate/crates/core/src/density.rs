//! Histogram density trees on random partitions and the best-scored forest.
//!
//! A tree assigns every leaf its empirical mass divided by its volume. The
//! density is zero outside the root box; mass falling outside is kept only
//! for the normalisation audit. A best-scored tree is the lowest holdout
//! ANLL tree among `k` random candidates, refitted on all data. The forest
//! averages `m` such trees.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{scale_to_box, AffineTransform};
use crate::error::{Error, Result};
use crate::partition::{HyperBox, Partition, SplitMode, SplitRecord};
use crate::points::Points;
use crate::rng::{stream, HOLDOUT_STREAM};

/// Density floor applied before taking logs in [`anll`].
pub const ANLL_FLOOR: f64 = 1e-12;

/// Margin used when mapping training data into the root `[-1, 1]^d`.
pub const ROOT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityTree {
    partition: Partition,
    cell_mass: Vec<f64>,
    cell_density: Vec<f64>,
    outside_mass: f64,
    n_fit: usize,
}

impl DensityTree {
    /// Fits empirical cell masses of `data` on `partition`.
    pub fn fit(partition: Partition, data: &Points) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot fit a density tree on empty data"));
        }
        if data.dim() != partition.root().dim() {
            return Err(Error::invalid("data dimension does not match partition"));
        }
        let mut counts = vec![0usize; partition.cells().len()];
        let mut outside = 0usize;
        for x in data.rows() {
            match partition.locate(x) {
                Some(c) => counts[c] += 1,
                None => outside += 1,
            }
        }
        Ok(Self::from_counts(partition, &counts, outside))
    }

    fn from_counts(partition: Partition, counts: &[usize], outside: usize) -> Self {
        let n = counts.iter().sum::<usize>() + outside;
        let nf = n as f64;
        let cell_mass: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
        let cell_density = cell_mass
            .iter()
            .zip(partition.cells())
            .map(|(m, c)| m / c.volume())
            .collect();
        DensityTree {
            partition,
            cell_mass,
            cell_density,
            outside_mass: outside as f64 / nf,
            n_fit: n,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.partition
            .locate(x)
            .map_or(0.0, |c| self.cell_density[c])
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn cell_mass(&self) -> &[f64] {
        &self.cell_mass
    }

    pub fn cell_density(&self) -> &[f64] {
        &self.cell_density
    }

    pub fn outside_mass(&self) -> f64 {
        self.outside_mass
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }
}

/// Average negative log-likelihood of `density` on `points`, with densities
/// floored at [`ANLL_FLOOR`].
pub fn anll<F: Fn(&[f64]) -> f64>(density: F, points: &Points) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("ANLL needs a nonempty validation set"));
    }
    let total: f64 = points
        .rows()
        .map(|x| -density(x).max(ANLL_FLOOR).ln())
        .sum();
    Ok(total / points.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    /// Number of trees.
    pub m: usize,
    /// Candidate partitions per tree.
    pub k: usize,
    /// Splits per tree.
    pub p: usize,
    pub mode: SplitMode,
    /// Fraction of the data held out for scoring candidates.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            m: 100,
            k: 5,
            p: 100,
            mode: SplitMode::Adaptive,
            holdout_fraction: 0.3,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("forest needs m >= 1 trees"));
        }
        if self.k == 0 {
            return Err(Error::invalid("best-scored tree needs k >= 1 candidates"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "holdout fraction must lie in (0,1), got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Outcome of a best-scored tree selection.
#[derive(Debug, Clone)]
pub struct BestScored {
    /// Winning partition refitted on all data.
    pub tree: DensityTree,
    /// Holdout ANLL of every candidate, in draw order.
    pub candidate_anll: Vec<f64>,
    pub winner: usize,
}

/// Draws `k` candidate partitions of `root`, scores each by holdout ANLL and
/// refits the winner on all of `data`.
///
/// The holdout split is drawn from stream `(seed, tree_index, HOLDOUT)` and
/// shared by all candidates; candidate `c` uses stream `(seed, tree_index, c)`.
/// Adaptive candidates are steered by the training part only.
pub fn best_scored_tree(
    data: &Points,
    root: &HyperBox,
    params: &ForestParams,
    tree_index: u64,
) -> Result<BestScored> {
    params.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::invalid("best-scored tree needs at least 2 points"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(params.seed, tree_index, HOLDOUT_STREAM));
    let n_hold = ((n as f64 * params.holdout_fraction).round() as usize).clamp(1, n - 1);
    let (hold_idx, train_idx) = idx.split_at(n_hold);
    let train = data.select(train_idx);
    let hold = data.select(hold_idx);

    let mut best: Option<(usize, f64, Partition)> = None;
    let mut scores = Vec::with_capacity(params.k);
    for c in 0..params.k {
        let mut rng = stream(params.seed, tree_index, c as u64);
        let part = Partition::build(root.clone(), params.p, params.mode, Some(&train), &mut rng)?;
        let cand = DensityTree::fit(part, &train)?;
        let score = anll(|x| cand.eval(x), &hold)?;
        scores.push(score);
        if best.as_ref().is_none_or(|b| score < b.1) {
            best = Some((c, score, cand.partition));
        }
    }
    let (winner, _, part) = best.expect("k >= 1");
    Ok(BestScored {
        tree: DensityTree::fit(part, data)?,
        candidate_anll: scores,
        winner,
    })
}

/// Average of `m` best-scored density trees, fitted in a scaled copy of the
/// data space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityForest {
    trees: Vec<DensityTree>,
    root: HyperBox,
    transform: AffineTransform,
}

impl DensityForest {
    /// Assembles a forest from fitted trees sharing one root.
    pub fn from_trees(
        trees: Vec<DensityTree>,
        transform: AffineTransform,
    ) -> Result<Self> {
        let root = trees
            .first()
            .ok_or_else(|| Error::invalid("forest needs at least one tree"))?
            .partition()
            .root()
            .clone();
        if trees.iter().any(|t| t.partition().root() != &root) {
            return Err(Error::invalid("forest trees must share their root"));
        }
        if transform.dim() != root.dim() {
            return Err(Error::invalid("transform dimension does not match root"));
        }
        Ok(DensityForest {
            trees,
            root,
            transform,
        })
    }

    /// Density at a raw data-space point.
    ///
    /// The scaled-space average is multiplied by the Jacobian of the scaling
    /// map, so the result is a density with respect to raw coordinates.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let y = self.transform.apply(x);
        self.eval_scaled(&y) * self.transform.jacobian()
    }

    /// Density at a point already mapped into the root.
    pub fn eval_scaled(&self, y: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.eval(y)).sum::<f64>() / self.trees.len() as f64
    }

    /// Evaluates every row of `points` in parallel.
    pub fn eval_many(&self, points: &Points) -> Vec<f64> {
        (0..points.len())
            .into_par_iter()
            .map(|i| self.eval(points.row(i)))
            .collect()
    }

    pub fn trees(&self) -> &[DensityTree] {
        &self.trees
    }

    pub fn root(&self) -> &HyperBox {
        &self.root
    }

    pub fn transform(&self) -> &AffineTransform {
        &self.transform
    }

    /// The root box expressed in raw coordinates.
    pub fn raw_root(&self) -> Result<HyperBox> {
        HyperBox::new(
            self.transform.inverse(self.root.lower()),
            self.transform.inverse(self.root.upper()),
        )
    }

    /// Diameters of every leaf of every tree, in raw coordinates.
    pub fn leaf_diameters(&self) -> Vec<f64> {
        let s = &self.transform.scale;
        self.trees
            .iter()
            .flat_map(|t| t.partition().cells())
            .map(|c| {
                (0..c.dim())
                    .map(|i| (c.side(i) / s[i]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ForestFile {
            format: FOREST_FORMAT.into(),
            version: FOREST_VERSION,
            dim: self.root.dim(),
            root: self.root.clone(),
            transform: self.transform.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| TreeFile {
                    splits: t.partition().splits().to_vec(),
                    cell_mass: t.cell_mass.clone(),
                    outside_mass: t.outside_mass,
                    n_fit: t.n_fit,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ForestFile = serde_json::from_str(s)?;
        if file.format != FOREST_FORMAT || file.version != FOREST_VERSION {
            return Err(Error::Format(format!(
                "unsupported forest file {} v{}",
                file.format, file.version
            )));
        }
        if file.root.dim() != file.dim {
            return Err(Error::Format("root dimension mismatch".into()));
        }
        let trees = file
            .trees
            .into_iter()
            .map(|t| {
                let part = Partition::from_splits(file.root.clone(), &t.splits)?;
                if t.cell_mass.len() != part.cells().len() {
                    return Err(Error::Format("cell mass count does not match splits".into()));
                }
                let cell_density = t
                    .cell_mass
                    .iter()
                    .zip(part.cells())
                    .map(|(m, c)| m / c.volume())
                    .collect();
                Ok(DensityTree {
                    partition: part,
                    cell_mass: t.cell_mass,
                    cell_density,
                    outside_mass: t.outside_mass,
                    n_fit: t.n_fit,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DensityForest::from_trees(trees, file.transform)
    }
}

const FOREST_FORMAT: &str = "bsc-forest";
const FOREST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    dim: usize,
    root: HyperBox,
    transform: AffineTransform,
    trees: Vec<TreeFile>,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    splits: Vec<SplitRecord>,
    cell_mass: Vec<f64>,
    outside_mass: f64,
    n_fit: usize,
}

/// Fits a best-scored forest on raw data.
///
/// Data is min-max scaled into `[-1, 1]^d` with [`ROOT_MARGIN`]; trees are
/// built in parallel from independent random streams.
pub fn fit_forest(data: &Points, params: &ForestParams) -> Result<DensityForest> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot fit a forest on empty data"));
    }
    let (scaled, transform) = scale_to_box(data, ROOT_MARGIN)?;
    let root = HyperBox::cube(data.dim(), 1.0)?;
    let trees = (0..params.m)
        .into_par_iter()
        .map(|t| best_scored_tree(&scaled, &root, params, t as u64).map(|b| b.tree))
        .collect::<Result<Vec<_>>>()?;
    DensityForest::from_trees(trees, transform)
}
