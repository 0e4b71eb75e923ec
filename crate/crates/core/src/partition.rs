//! Purely random and adaptive axis-parallel partitions of a box.
//!
//! A partition starts as the root box and grows by repeatedly splitting one
//! leaf along one coordinate at a random fraction of its side. Cells are
//! half-open `[lo, hi)` in every coordinate, except that the root's upper
//! faces are closed, so every point of the closed root lies in exactly one
//! leaf.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;

/// Minimum child side, relative to the root side in the same coordinate.
pub const MIN_RELATIVE_SIDE: f64 = 1e-9;

const MAX_CELL_DRAWS: usize = 64;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl HyperBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::invalid("box must have dimension >= 1"));
        }
        if lower.len() != upper.len() {
            return Err(Error::invalid("box bounds have different dimensions"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::invalid(format!(
                    "degenerate box in dimension {i}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(HyperBox { lower, upper })
    }

    /// The centred cube `[-half, half]^dim`.
    pub fn cube(dim: usize, half: f64) -> Result<Self> {
        HyperBox::new(vec![-half; dim], vec![half; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.side(i).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Closed containment `lower <= x <= upper`.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Leaf chosen uniformly among all leaves.
    Pure,
    /// Leaf chosen as the one holding a uniformly drawn data point.
    #[default]
    Adaptive,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure" => Ok(SplitMode::Pure),
            "adaptive" => Ok(SplitMode::Adaptive),
            other => Err(Error::invalid(format!(
                "unknown split mode {other:?} (expected pure or adaptive)"
            ))),
        }
    }
}

/// One split: leaf `cell` cut along `dim` at fraction `ratio` of its side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub cell: usize,
    pub dim: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf,
    Split {
        dim: usize,
        cut: f64,
        left: usize,
        right: usize,
    },
}

/// A recursive axis-parallel subdivision of a root box into `p + 1` leaves.
///
/// Splitting leaf `c` keeps the lower child at index `c` and appends the
/// upper child as leaf `p + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    root: HyperBox,
    cells: Vec<HyperBox>,
    splits: Vec<SplitRecord>,
    nodes: Vec<Node>,
    /// Node index for every node; `node_cell[n]` is the leaf index of leaf nodes.
    node_cell: Vec<usize>,
    leaf_node: Vec<usize>,
}

impl Partition {
    /// The trivial partition with the root as its only cell.
    pub fn new(root: HyperBox) -> Self {
        Partition {
            cells: vec![root.clone()],
            root,
            splits: Vec::new(),
            nodes: vec![Node::Leaf],
            node_cell: vec![0],
            leaf_node: vec![0],
        }
    }

    /// Builds a partition with exactly `p` splits.
    pub fn build<R: Rng + ?Sized>(
        root: HyperBox,
        p: usize,
        mode: SplitMode,
        data: Option<&Points>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut part = Partition::new(root);
        let steering = match mode {
            SplitMode::Pure => None,
            SplitMode::Adaptive => Some(Steering::new(&part.root, data)?),
        };
        part.cells.reserve(p);
        for _ in 0..p {
            part.split_drawn(steering.as_ref(), rng)?;
        }
        Ok(part)
    }

    /// Performs one random split.
    ///
    /// Adaptive mode needs `data` with at least one point inside the root.
    pub fn split_once<R: Rng + ?Sized>(
        &mut self,
        mode: SplitMode,
        data: Option<&Points>,
        rng: &mut R,
    ) -> Result<()> {
        let steering = match mode {
            SplitMode::Pure => None,
            SplitMode::Adaptive => Some(Steering::new(&self.root, data)?),
        };
        self.split_drawn(steering.as_ref(), rng)
    }

    /// Draws a leaf (uniformly, or through a steering sample) and splits it.
    ///
    /// A leaf too narrow to split in every coordinate is redrawn; after
    /// `MAX_CELL_DRAWS` failures the leaf is drawn uniformly among the leaves
    /// that can still be split.
    fn split_drawn<R: Rng + ?Sized>(
        &mut self,
        steering: Option<&Steering<'_>>,
        rng: &mut R,
    ) -> Result<()> {
        for _ in 0..MAX_CELL_DRAWS {
            let cell = match steering {
                None => rng.random_range(0..self.cells.len()),
                Some(s) => self.cell_of_draw(s, rng),
            };
            if self.split_cell(cell, rng)? {
                return Ok(());
            }
        }
        let wide: Vec<usize> = (0..self.cells.len()).filter(|&c| self.is_wide(c)).collect();
        if wide.is_empty() {
            return Err(Error::InvalidState("no leaf is wide enough to split".into()));
        }
        let cell = wide[rng.random_range(0..wide.len())];
        self.split_cell(cell, rng).map(|_| ())
    }

    fn wide_in(&self, cell: usize, k: usize) -> bool {
        // At least half of (0,1) is an admissible cut fraction.
        self.cells[cell].side(k) >= 4.0 * MIN_RELATIVE_SIDE * self.root.side(k)
    }

    fn is_wide(&self, cell: usize) -> bool {
        (0..self.root.dim()).any(|k| self.wide_in(cell, k))
    }

    fn cell_of_draw<R: Rng + ?Sized>(&self, s: &Steering<'_>, rng: &mut R) -> usize {
        loop {
            let i = rng.random_range(0..s.data.len());
            if let Some(c) = self.locate(s.data.row(i)) {
                return c;
            }
        }
    }

    /// Splits `cell` along a uniformly drawn admissible coordinate, with the
    /// cut fraction drawn from `Unif(0,1)` and rejected while either child
    /// would be narrower than [`MIN_RELATIVE_SIDE`] of the root. Returns
    /// false when no coordinate is wide enough.
    fn split_cell<R: Rng + ?Sized>(&mut self, cell: usize, rng: &mut R) -> Result<bool> {
        let d = self.root.dim();
        let wide: Vec<bool> = (0..d).map(|k| self.wide_in(cell, k)).collect();
        if !wide.iter().any(|&w| w) {
            return Ok(false);
        }
        let dim = loop {
            let k = rng.random_range(0..d);
            if wide[k] {
                break k;
            }
        };
        let min_side = MIN_RELATIVE_SIDE * self.root.side(dim);
        let side = self.cells[cell].side(dim);
        loop {
            let ratio: f64 = rng.random();
            let left = ratio * side;
            if ratio > 0.0 && left >= min_side && side - left >= min_side {
                self.apply_split(SplitRecord { cell, dim, ratio })?;
                return Ok(true);
            }
        }
    }

    /// Applies a recorded split. Used for replaying serialised partitions.
    pub fn apply_split(&mut self, rec: SplitRecord) -> Result<()> {
        if rec.cell >= self.cells.len() || rec.dim >= self.root.dim() {
            return Err(Error::invalid(format!("split {rec:?} out of range")));
        }
        if !(rec.ratio > 0.0 && rec.ratio < 1.0) {
            return Err(Error::invalid(format!("split ratio {} not in (0,1)", rec.ratio)));
        }
        let parent = self.cells[rec.cell].clone();
        let cut = parent.lower[rec.dim] + rec.ratio * parent.side(rec.dim);
        if !(cut > parent.lower[rec.dim] && cut < parent.upper[rec.dim]) {
            return Err(Error::InvalidState(format!("split {rec:?} produces an empty cell")));
        }
        let mut left = parent.clone();
        left.upper[rec.dim] = cut;
        let mut right = parent;
        right.lower[rec.dim] = cut;

        let new_cell = self.cells.len();
        let node = self.leaf_node[rec.cell];
        let left_node = self.nodes.len();
        let right_node = left_node + 1;
        self.nodes.push(Node::Leaf);
        self.nodes.push(Node::Leaf);
        self.node_cell.push(rec.cell);
        self.node_cell.push(new_cell);
        self.nodes[node] = Node::Split {
            dim: rec.dim,
            cut,
            left: left_node,
            right: right_node,
        };
        self.leaf_node[rec.cell] = left_node;
        self.leaf_node.push(right_node);
        self.cells[rec.cell] = left;
        self.cells.push(right);
        self.splits.push(rec);
        Ok(())
    }

    /// Leaf containing `x`, or `None` when `x` lies outside the root.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if !self.root.contains(x) {
            return None;
        }
        let mut node = 0;
        loop {
            match self.nodes[node] {
                Node::Leaf => return Some(self.node_cell[node]),
                Node::Split {
                    dim,
                    cut,
                    left,
                    right,
                } => node = if x[dim] < cut { left } else { right },
            }
        }
    }

    pub fn root(&self) -> &HyperBox {
        &self.root
    }

    pub fn cells(&self) -> &[HyperBox] {
        &self.cells
    }

    pub fn splits(&self) -> &[SplitRecord] {
        &self.splits
    }

    /// Number of splits performed.
    pub fn p(&self) -> usize {
        self.splits.len()
    }

    /// Replays `splits` on a fresh partition of `root`.
    pub fn from_splits(root: HyperBox, splits: &[SplitRecord]) -> Result<Self> {
        let mut part = Partition::new(root);
        for s in splits {
            part.apply_split(*s)?;
        }
        Ok(part)
    }
}

struct Steering<'a> {
    data: &'a Points,
}

impl<'a> Steering<'a> {
    fn new(root: &HyperBox, data: Option<&'a Points>) -> Result<Self> {
        let data = data.ok_or_else(|| Error::invalid("adaptive splitting needs data"))?;
        if data.dim() != root.dim() {
            return Err(Error::invalid("data dimension does not match root"));
        }
        if !data.rows().any(|x| root.contains(x)) {
            return Err(Error::invalid("adaptive splitting needs a data point inside the root"));
        }
        Ok(Steering { data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn square() -> HyperBox {
        HyperBox::cube(2, 1.0).unwrap()
    }

    #[test]
    fn trivial_partition() {
        let p = Partition::new(square());
        assert_eq!(p.cells().len(), 1);
        assert_eq!(p.p(), 0);
        assert_eq!(p.cells()[0].volume(), 4.0);
        assert_eq!(Partition::new(HyperBox::cube(3, 1.0).unwrap()).cells()[0].volume(), 8.0);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(matches!(
            HyperBox::new(vec![0.0, -1.0], vec![0.0, 1.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(HyperBox::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn one_split_conserves_volume() {
        let mut p = Partition::new(square());
        p.split_once(SplitMode::Pure, None, &mut seeded(1)).unwrap();
        assert_eq!(p.p(), 1);
        assert_eq!(p.cells().len(), 2);
        let v: f64 = p.cells().iter().map(HyperBox::volume).sum();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn leaf_count_and_volume() {
        let p = Partition::build(square(), 100, SplitMode::Pure, None, &mut seeded(3)).unwrap();
        assert_eq!(p.cells().len(), 101);
        let v: f64 = p.cells().iter().map(HyperBox::volume).sum();
        assert!((v - 4.0).abs() / 4.0 < 1e-9);
        let p3 = Partition::build(square(), 3, SplitMode::Pure, None, &mut seeded(3)).unwrap();
        assert_eq!(p3.cells().len(), 4);
        let mut p4 = p3.clone();
        let pts = Points::from_rows(&[[0.1, 0.2]]).unwrap();
        p4.split_once(SplitMode::Adaptive, Some(&pts), &mut seeded(4)).unwrap();
        assert_eq!(p4.cells().len(), 5);
    }

    #[test]
    fn build_is_deterministic() {
        let a = Partition::build(square(), 7, SplitMode::Pure, None, &mut seeded(42)).unwrap();
        let b = Partition::build(square(), 7, SplitMode::Pure, None, &mut seeded(42)).unwrap();
        assert_eq!(a, b);
        let p0 = Partition::build(square(), 0, SplitMode::Pure, None, &mut seeded(42)).unwrap();
        assert_eq!(p0, Partition::new(square()));
    }

    #[test]
    fn adaptive_requires_in_box_data() {
        let mut p = Partition::new(square());
        let outside = Points::from_rows(&[[5.0, 5.0]]).unwrap();
        assert!(matches!(
            p.split_once(SplitMode::Adaptive, Some(&outside), &mut seeded(0)),
            Err(Error::InvalidInput(_))
        ));
        assert!(p.split_once(SplitMode::Adaptive, None, &mut seeded(0)).is_err());
    }

    #[test]
    fn locate_center_and_outside() {
        let p = Partition::new(square());
        assert_eq!(p.locate(&[0.0, 0.0]), Some(0));
        assert_eq!(p.locate(&[1.5, 0.0]), None);
        // Closed upper face of the root.
        assert_eq!(p.locate(&[1.0, 1.0]), Some(0));
    }

    #[test]
    fn locate_uses_half_open_cells() {
        let mut p = Partition::new(square());
        p.apply_split(SplitRecord { cell: 0, dim: 0, ratio: 0.5 }).unwrap();
        assert_eq!(p.locate(&[-0.0, 0.3]), Some(1));
        assert_eq!(p.locate(&[-1e-12, 0.3]), Some(0));
        assert_eq!(p.locate(&[1.0, 1.0]), Some(1));
        assert_eq!(p.locate(&[-1.0, -1.0]), Some(0));
    }

    #[test]
    fn located_cell_contains_point() {
        let mut rng = seeded(9);
        let p = Partition::build(square(), 200, SplitMode::Pure, None, &mut rng).unwrap();
        for _ in 0..1000 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let c = p.locate(&x).unwrap();
            assert!(p.cells()[c].contains(&x));
        }
    }

    #[test]
    fn adaptive_never_splits_empty_leaves() {
        let mut rng = seeded(5);
        let rows: Vec<[f64; 2]> = (0..50)
            .map(|_| [rng.random_range(-1.0..-0.5), rng.random_range(-1.0..1.0)])
            .collect();
        let pts = Points::from_rows(&rows).unwrap();
        let mut p = Partition::new(square());
        for _ in 0..200 {
            let before = p.clone();
            p.split_once(SplitMode::Adaptive, Some(&pts), &mut rng).unwrap();
            let split = *p.splits().last().unwrap();
            let parent = &before.cells()[split.cell];
            assert!(pts.rows().any(|x| before.locate(x) == Some(split.cell)), "{parent:?}");
        }
    }

    #[test]
    fn adaptive_refines_more_occupied_cells() {
        // 100 points in the left half, 1000 splits; compare occupied leaves.
        let occupied = |mode: SplitMode, seed: u64| {
            let mut rng = seeded(seed);
            let rows: Vec<[f64; 2]> = (0..100)
                .map(|_| [rng.random_range(-1.0..0.0), rng.random_range(-1.0..1.0)])
                .collect();
            let pts = Points::from_rows(&rows).unwrap();
            let p = Partition::build(square(), 1000, mode, Some(&pts), &mut rng).unwrap();
            let mut seen = vec![false; p.cells().len()];
            for x in pts.rows() {
                seen[p.locate(x).unwrap()] = true;
            }
            seen.iter().filter(|&&s| s).count() as f64
        };
        let pure: f64 = (0..50).map(|s| occupied(SplitMode::Pure, s)).sum::<f64>() / 50.0;
        let adaptive: f64 = (0..50).map(|s| occupied(SplitMode::Adaptive, s)).sum::<f64>() / 50.0;
        assert!(adaptive > pure, "adaptive {adaptive} vs pure {pure}");
    }

    #[test]
    fn replay_reproduces_partition() {
        let a = Partition::build(square(), 50, SplitMode::Pure, None, &mut seeded(11)).unwrap();
        let b = Partition::from_splits(square(), a.splits()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn leaves_tile_the_root(seed in any::<u64>(), p in 0usize..2000, d in 1usize..4, adaptive in any::<bool>()) {
            let root = HyperBox::cube(d, 1.0).unwrap();
            let mut rng = seeded(seed);
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..d).map(|_| rng.random_range(-0.2..0.3)).collect())
                .collect();
            let pts = Points::from_rows(&rows).unwrap();
            let mode = if adaptive { SplitMode::Adaptive } else { SplitMode::Pure };
            let part = Partition::build(root.clone(), p, mode, Some(&pts), &mut rng).unwrap();
            prop_assert_eq!(part.cells().len(), p + 1);
            let v: f64 = part.cells().iter().map(HyperBox::volume).sum();
            prop_assert!((v - root.volume()).abs() <= 1e-9 * root.volume());
            prop_assert!(part.cells().iter().all(|c| c.volume() > 0.0));
            for (i, c) in part.cells().iter().enumerate() {
                // Interior point of each leaf locates back to it.
                prop_assert_eq!(part.locate(&c.center()), Some(i));
            }
        }
    }
}
