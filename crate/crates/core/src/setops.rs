//! Geometry of level sets on a regular lattice.
//!
//! Sets and densities live on the nodes of a node-centred lattice over a
//! box: with `res` cells per axis, nodes sit at the cell centres and a set
//! of `c` nodes has measure `c` times the cell volume. Distances are exact
//! Euclidean distances between nodes, found by brute force.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityForest;
use crate::error::{Error, Result};
use crate::partition::HyperBox;
use crate::points::{sq_dist, Points};

/// Highest dimension the lattice oracles support.
pub const MAX_GRID_DIM: usize = 3;

pub fn default_resolution(dim: usize) -> usize {
    if dim <= 2 {
        256
    } else {
        64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    bbox: HyperBox,
    resolution: usize,
}

impl Lattice {
    pub fn new(bbox: HyperBox, resolution: usize) -> Result<Self> {
        let d = bbox.dim();
        if d == 0 || d > MAX_GRID_DIM {
            return Err(Error::UnsupportedDimension(d));
        }
        if resolution < 2 {
            return Err(Error::invalid(format!("resolution must be >= 2, got {resolution}")));
        }
        if resolution.checked_pow(d as u32).is_none_or(|n| n > u32::MAX as usize) {
            return Err(Error::invalid("lattice too large"));
        }
        Ok(Lattice { bbox, resolution })
    }

    pub fn bbox(&self) -> &HyperBox {
        &self.bbox
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing along axis `j`.
    pub fn step(&self, j: usize) -> f64 {
        self.bbox.side(j) / self.resolution as f64
    }

    /// Largest node spacing.
    pub fn max_step(&self) -> f64 {
        (0..self.dim()).map(|j| self.step(j)).fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.step(j)).product()
    }

    /// Per-axis indices of node `i`; the first axis varies slowest.
    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            idx[j] = i % self.resolution;
            i /= self.resolution;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &k| acc * self.resolution + k)
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .into_iter()
            .enumerate()
            .map(|(j, k)| self.bbox.lower()[j] + (k as f64 + 0.5) * self.step(j))
            .collect()
    }

    /// All node positions.
    pub fn nodes(&self) -> Points {
        let mut data = Vec::with_capacity(self.len() * self.dim());
        for i in 0..self.len() {
            data.extend(self.node(i));
        }
        Points::new(self.dim(), data).expect("finite lattice")
    }

    /// Face neighbours of node `i`.
    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let idx = self.multi_index(i);
        let mut stride = 1;
        for j in (0..self.dim()).rev() {
            if idx[j] > 0 {
                out.push(i - stride);
            }
            if idx[j] + 1 < self.resolution {
                out.push(i + stride);
            }
            stride *= self.resolution;
        }
    }

    /// Index range of nodes along axis `j` whose coordinate lies in `[lo, hi]`.
    fn axis_range(&self, j: usize, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let h = self.step(j);
        let l = self.bbox.lower()[j];
        let a = ((lo - l) / h - 0.5).ceil().max(0.0);
        let b = ((hi - l) / h - 0.5).floor() + 1.0;
        let b = b.min(self.resolution as f64);
        if !(b > a) {
            return 0..0;
        }
        a as usize..b as usize
    }
}

/// A density sampled at the lattice nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    lattice: Lattice,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::invalid("one value per lattice node required"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("densities must be finite and >= 0"));
        }
        Ok(GridDensity { lattice, values })
    }

    pub fn from_fn(lattice: Lattice, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let values = (0..lattice.len())
            .into_par_iter()
            .map(|i| f(&lattice.node(i)))
            .collect();
        Self::new(lattice, values)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// A set of lattice nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    lattice: Lattice,
    mask: Vec<bool>,
}

impl GridSet {
    pub fn new(lattice: Lattice, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != lattice.len() {
            return Err(Error::invalid("one flag per lattice node required"));
        }
        Ok(GridSet { lattice, mask })
    }

    pub fn from_fn(lattice: Lattice, f: impl Fn(&[f64]) -> bool) -> Self {
        let mask = (0..lattice.len()).map(|i| f(&lattice.node(i))).collect();
        GridSet { lattice, mask }
    }

    pub fn empty(lattice: Lattice) -> Self {
        let n = lattice.len();
        GridSet { lattice, mask: vec![false; n] }
    }

    pub fn full(lattice: Lattice) -> Self {
        let n = lattice.len();
        GridSet { lattice, mask: vec![true; n] }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.lattice.cell_volume()
    }

    pub fn complement(&self) -> GridSet {
        GridSet {
            lattice: self.lattice.clone(),
            mask: self.mask.iter().map(|b| !b).collect(),
        }
    }

    fn same_lattice(&self, other: &GridSet) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(Error::invalid("sets live on different lattices"));
        }
        Ok(())
    }

    pub fn is_subset(&self, other: &GridSet) -> Result<bool> {
        self.same_lattice(other)?;
        Ok(self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b))
    }

    /// Members with a face neighbour outside the set.
    pub fn boundary(&self) -> Vec<usize> {
        let mut nb = Vec::new();
        (0..self.mask.len())
            .filter(|&i| {
                self.mask[i] && {
                    self.lattice.neighbors(i, &mut nb);
                    nb.iter().any(|&j| !self.mask[j])
                }
            })
            .collect()
    }
}

/// Distance from every node to the nearest member of `set`; infinite when
/// the set is empty.
///
/// The nearest member of a non-member node always has a face neighbour
/// outside the set (stepping from it towards the query would otherwise
/// reach a closer member), so only boundary members are scanned.
pub fn distance_field(set: &GridSet) -> Vec<f64> {
    let lat = &set.lattice;
    let targets: Vec<Vec<f64>> = set.boundary().into_iter().map(|i| lat.node(i)).collect();
    (0..lat.len())
        .into_par_iter()
        .map(|i| {
            if set.mask[i] {
                return 0.0;
            }
            let x = lat.node(i);
            targets
                .iter()
                .map(|t| sq_dist(&x, t))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

pub fn grid_level_set(gd: &GridDensity, rho: f64) -> Result<GridSet> {
    if !(rho >= 0.0) {
        return Err(Error::invalid(format!("level must be >= 0, got {rho}")));
    }
    Ok(GridSet {
        lattice: gd.lattice.clone(),
        mask: gd.values.iter().map(|&v| v >= rho).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TubeSign {
    Plus,
    Minus,
}

/// `A^{+δ} = {x : d(x, A) <= δ}` and `A^{-δ} = X \ (X \ A)^{+δ}`.
pub fn tube(set: &GridSet, delta: f64, sign: TubeSign) -> Result<GridSet> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("tube radius must be > 0, got {delta}")));
    }
    Ok(match sign {
        TubeSign::Plus => dilate(set, delta),
        TubeSign::Minus => dilate(&set.complement(), delta).complement(),
    })
}

fn dilate(set: &GridSet, delta: f64) -> GridSet {
    let d = distance_field(set);
    GridSet {
        lattice: set.lattice.clone(),
        mask: d.into_iter().map(|v| v <= delta).collect(),
    }
}

/// Thickness `sup_{x in A} d(x, A^{-δ})`; infinite when the erosion is empty.
pub fn psi_star(set: &GridSet, delta: f64) -> Result<f64> {
    let eroded = tube(set, delta, TubeSign::Minus)?;
    if eroded.is_empty() {
        return Ok(f64::INFINITY);
    }
    let d = distance_field(&eroded);
    Ok((0..d.len())
        .filter(|&i| set.mask[i])
        .map(|i| d[i])
        .fold(0.0, f64::max))
}

/// Face-connected components: per-node label (`-1` outside the set) and
/// the number of components, numbered in node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridComponents {
    pub labels: Vec<i64>,
    pub count: usize,
}

impl GridComponents {
    pub fn component(&self, lattice: &Lattice, c: usize) -> GridSet {
        GridSet {
            lattice: lattice.clone(),
            mask: self.labels.iter().map(|&l| l == c as i64).collect(),
        }
    }
}

pub fn grid_components(set: &GridSet) -> GridComponents {
    let n = set.mask.len();
    let mut labels = vec![-1i64; n];
    let mut count = 0;
    let mut stack = Vec::new();
    let mut nb = Vec::new();
    for s in 0..n {
        if !set.mask[s] || labels[s] >= 0 {
            continue;
        }
        labels[s] = count as i64;
        stack.push(s);
        while let Some(v) = stack.pop() {
            set.lattice.neighbors(v, &mut nb);
            for &w in &nb {
                if set.mask[w] && labels[w] < 0 {
                    labels[w] = count as i64;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    GridComponents { labels, count }
}

/// Smallest distance between members of two nonempty sets.
pub fn set_distance(a: &GridSet, b: &GridSet) -> Result<f64> {
    a.same_lattice(b)?;
    let lat = &a.lattice;
    let pa: Vec<Vec<f64>> = a.boundary().into_iter().map(|i| lat.node(i)).collect();
    let pb: Vec<Vec<f64>> = b.boundary().into_iter().map(|i| lat.node(i)).collect();
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::invalid("distance to an empty set"));
    }
    Ok(pa
        .par_iter()
        .map(|x| pb.iter().map(|y| sq_dist(x, y)).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min)
        .sqrt())
}

/// One third of the distance between the two components of the level set
/// at `rho_star + eps`.
pub fn tau_star(gd: &GridDensity, rho_star: f64, eps: f64) -> Result<f64> {
    let level = grid_level_set(gd, rho_star + eps)?;
    let comps = grid_components(&level);
    if comps.count != 2 {
        return Err(Error::InvalidState(format!(
            "level {} has {} components, expected 2",
            rho_star + eps,
            comps.count
        )));
    }
    let lat = gd.lattice();
    Ok(set_distance(&comps.component(lat, 0), &comps.component(lat, 1))? / 3.0)
}

/// Measure of the symmetric difference.
pub fn sym_diff_measure(a: &GridSet, b: &GridSet) -> Result<f64> {
    a.same_lattice(b)?;
    let xor = a.mask.iter().zip(&b.mask).filter(|(x, y)| x != y).count();
    Ok(xor as f64 * a.lattice.cell_volume())
}

/// Nodes within distance `sigma` (closed) of any of `points`.
pub fn rasterize_dilation(lattice: &Lattice, points: &Points, sigma: f64) -> Result<GridSet> {
    if points.dim() != lattice.dim() {
        return Err(Error::invalid("point and lattice dimensions differ"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("dilation radius must be >= 0, got {sigma}")));
    }
    let d = lattice.dim();
    let s2 = sigma * sigma;
    let mut mask = vec![false; lattice.len()];
    let mut idx = vec![0usize; d];
    for x in points.rows() {
        let ranges: Vec<std::ops::Range<usize>> =
            (0..d).map(|j| lattice.axis_range(j, x[j] - sigma, x[j] + sigma)).collect();
        if ranges.iter().any(|r| r.is_empty()) {
            continue;
        }
        for (j, r) in ranges.iter().enumerate() {
            idx[j] = r.start;
        }
        'nodes: loop {
            let i = lattice.flat_index(&idx);
            if !mask[i] && sq_dist(&lattice.node(i), x) <= s2 {
                mask[i] = true;
            }
            let mut j = d;
            while j > 0 {
                j -= 1;
                idx[j] += 1;
                if idx[j] < ranges[j].end {
                    continue 'nodes;
                }
                idx[j] = ranges[j].start;
            }
            break;
        }
    }
    GridSet::new(lattice.clone(), mask)
}

/// Outcome of comparing an estimated level set with true level sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub rho: f64,
    pub eps: f64,
    pub sigma: f64,
    pub nodes: usize,
    /// Sample points with estimated density at least `rho`.
    pub level_points: usize,
    /// Nodes of the eroded upper level set `M_{rho+eps}^{-2 sigma}` missing
    /// from the estimate.
    pub inner_violations: usize,
    /// Nodes of the estimate outside the dilated lower level set
    /// `M_{rho-eps}^{+2 sigma}`.
    pub outer_violations: usize,
    pub inner_fraction: f64,
    pub outer_fraction: f64,
    pub inner_count: usize,
    pub estimate_count: usize,
    pub outer_count: usize,
}

impl UncertaintyReport {
    pub fn violation_fraction(&self) -> f64 {
        (self.inner_violations + self.outer_violations) as f64 / self.nodes as f64
    }
}

/// The three sets of an uncertainty check, on the density's lattice.
#[derive(Debug, Clone)]
pub struct UncertaintySets {
    pub inner: GridSet,
    pub estimate: GridSet,
    pub outer: GridSet,
}

/// Checks `M_{rho+eps}^{-2 sigma} ⊆ L ⊆ M_{rho-eps}^{+2 sigma}` on the
/// lattice, where `L` is the `sigma`-dilation of the sample points whose
/// forest density is at least `rho`. Tubes with zero radius are the sets
/// themselves and levels below zero are clamped to zero.
pub fn check_uncertainty_control(
    gd: &GridDensity,
    data: &Points,
    forest: &DensityForest,
    rho: f64,
    eps: f64,
    sigma: f64,
) -> Result<(UncertaintyReport, UncertaintySets)> {
    if !(rho >= 0.0) || !(eps >= 0.0) || !(sigma >= 0.0) {
        return Err(Error::invalid("rho, eps and sigma must be >= 0"));
    }
    let lat = gd.lattice();
    let sized_tube = |s: &GridSet, sign| if sigma > 0.0 { tube(s, 2.0 * sigma, sign) } else { Ok(s.clone()) };
    let inner = sized_tube(&grid_level_set(gd, rho + eps)?, TubeSign::Minus)?;
    let outer = sized_tube(&grid_level_set(gd, (rho - eps).max(0.0))?, TubeSign::Plus)?;
    let densities = forest.eval_many(data);
    let keep: Vec<usize> = (0..data.len()).filter(|&i| densities[i] >= rho).collect();
    let estimate = rasterize_dilation(lat, &data.select(&keep), sigma)?;
    let inner_violations = (0..lat.len()).filter(|&i| inner.mask[i] && !estimate.mask[i]).count();
    let outer_violations = (0..lat.len()).filter(|&i| estimate.mask[i] && !outer.mask[i]).count();
    let nodes = lat.len();
    let report = UncertaintyReport {
        rho,
        eps,
        sigma,
        nodes,
        level_points: keep.len(),
        inner_violations,
        outer_violations,
        inner_fraction: inner_violations as f64 / nodes as f64,
        outer_fraction: outer_violations as f64 / nodes as f64,
        inner_count: inner.count(),
        estimate_count: estimate.count(),
        outer_count: outer.count(),
    };
    Ok((report, UncertaintySets { inner, estimate, outer }))
}

const MAGIC: &[u8; 4] = b"BSCG";
const KIND_DENSITY: u8 = 0;
const KIND_SET: u8 = 1;

fn write_header<W: Write>(w: &mut W, kind: u8, lat: &Lattice) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[kind])?;
    w.write_all(&(lat.dim() as u32).to_le_bytes())?;
    w.write_all(&(lat.resolution as u32).to_le_bytes())?;
    for &v in lat.bbox.lower().iter().chain(lat.bbox.upper()) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_header<R: Read>(r: &mut R, kind: u8) -> Result<Lattice> {
    let fmt = |m: &str| Error::Format(format!("grid file: {m}"));
    let mut head = [0u8; 13];
    r.read_exact(&mut head).map_err(|_| fmt("truncated header"))?;
    if &head[..4] != MAGIC {
        return Err(fmt("bad magic"));
    }
    if head[4] != kind {
        return Err(fmt("unexpected payload kind"));
    }
    let dim = u32::from_le_bytes(head[5..9].try_into().expect("4 bytes")) as usize;
    let res = u32::from_le_bytes(head[9..13].try_into().expect("4 bytes")) as usize;
    if dim == 0 || dim > MAX_GRID_DIM {
        return Err(Error::UnsupportedDimension(dim));
    }
    let mut bounds = vec![0f64; 2 * dim];
    for b in bounds.iter_mut() {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf).map_err(|_| fmt("truncated box"))?;
        *b = f64::from_le_bytes(buf);
    }
    let upper = bounds.split_off(dim);
    Lattice::new(HyperBox::new(bounds, upper)?, res)
}

impl GridDensity {
    /// Header (`BSCG`, kind byte, dim and resolution as u32, box lower then
    /// upper as f64) followed by the values in node order, little endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::Format(format!("grid file: {e}"));
        write_header(&mut w, KIND_DENSITY, &self.lattice).map_err(io)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let lattice = read_header(&mut r, KIND_DENSITY)?;
        let mut values = vec![0f64; lattice.len()];
        for v in values.iter_mut() {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("grid file: truncated values".into()))?;
            *v = f64::from_le_bytes(buf);
        }
        Self::new(lattice, values)
    }

    /// `x1..xd,value` per node.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_grid_csv(w, &self.lattice, |i| self.values[i].to_string())
    }
}

impl GridSet {
    /// Same header as [`GridDensity::write_binary`], then one byte per node.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::Format(format!("grid file: {e}"));
        write_header(&mut w, KIND_SET, &self.lattice).map_err(io)?;
        let bytes: Vec<u8> = self.mask.iter().map(|&b| b as u8).collect();
        w.write_all(&bytes).map_err(io)
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let lattice = read_header(&mut r, KIND_SET)?;
        let mut bytes = vec![0u8; lattice.len()];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Format("grid file: truncated mask".into()))?;
        Self::new(lattice, bytes.into_iter().map(|b| b != 0).collect())
    }

    /// `x1..xd,value` per node with value 0 or 1.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_grid_csv(w, &self.lattice, |i| (self.mask[i] as u8).to_string())
    }
}

fn write_grid_csv<W: Write>(w: W, lat: &Lattice, value: impl Fn(usize) -> String) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=lat.dim()).map(|j| format!("x{j}")).collect();
    header.push("value".into());
    wr.write_record(&header)?;
    for i in 0..lat.len() {
        let mut rec: Vec<String> = lat.node(i).iter().map(|v| v.to_string()).collect();
        rec.push(value(i));
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(|e| Error::Format(format!("csv: {e}")))?;
    Ok(())
}
