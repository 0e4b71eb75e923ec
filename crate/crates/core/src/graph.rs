//! Radius graphs, connected components and k-NN classification.
//!
//! Two points are adjacent when their Euclidean distance is strictly below
//! the radius, matching the chain definition of τ-connectivity.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::points::{lex_cmp, sq_dist, Points};

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when `a` and `b` were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn set_count(&self) -> usize {
        self.sets
    }

    /// Dense labels `0..sets`, numbered by smallest member.
    pub fn labels(&mut self) -> ComponentLabels {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut labels = Vec::with_capacity(n);
        let mut count = 0;
        for i in 0..n {
            let r = self.find(i);
            if map[r] == usize::MAX {
                map[r] = count;
                count += 1;
            }
            labels.push(map[r]);
        }
        ComponentLabels { labels, count }
    }
}

/// Component label per node, numbered in order of each component's
/// smallest node index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabels {
    pub labels: Vec<usize>,
    pub count: usize,
}

impl ComponentLabels {
    /// Member lists, one per component.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Uniform bucketing of points on their first (up to) three coordinates,
/// for exact radius queries.
pub struct RadiusIndex<'a> {
    points: &'a Points,
    radius: f64,
    keys: usize,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> RadiusIndex<'a> {
    pub fn new(points: &'a Points, radius: f64) -> Self {
        let keys = points.dim().min(3);
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, x) in points.rows().enumerate() {
            buckets.entry(Self::key(x, radius, keys)).or_default().push(i);
        }
        RadiusIndex {
            points,
            radius,
            keys,
            buckets,
        }
    }

    fn key(x: &[f64], radius: f64, keys: usize) -> [i64; 3] {
        let mut k = [0i64; 3];
        for j in 0..keys {
            let c = (x[j] / radius).floor();
            k[j] = if c.is_finite() { c as i64 } else { 0 };
        }
        k
    }

    /// Calls `f(j, squared_distance)` for every indexed point `j` with
    /// `‖x - x_j‖² < radius²`, or `<=` when `closed`.
    pub fn for_each_within(&self, x: &[f64], closed: bool, mut f: impl FnMut(usize, f64)) {
        let r2 = self.radius * self.radius;
        let base = Self::key(x, self.radius, self.keys);
        let span = |j: usize| if j < self.keys { -1..=1 } else { 0..=0 };
        for a in span(0) {
            for b in span(1) {
                for c in span(2) {
                    let key = [base[0].wrapping_add(a), base[1].wrapping_add(b), base[2].wrapping_add(c)];
                    let Some(list) = self.buckets.get(&key) else { continue };
                    for &j in list {
                        let d2 = sq_dist(x, self.points.row(j));
                        if d2 < r2 || (closed && d2 <= r2) {
                            f(j, d2);
                        }
                    }
                }
            }
        }
    }
}

/// Radius graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsGraph {
    pub eps: f64,
    adjacency: Vec<Vec<usize>>,
}

impl EpsGraph {
    /// Builds a graph from an explicit undirected edge list.
    pub fn from_edges(n: usize, eps: f64, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (i, j) in edges {
            if i != j {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for a in &mut adjacency {
            a.sort_unstable();
            a.dedup();
        }
        EpsGraph { eps, adjacency }
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, a) in self.adjacency.iter().enumerate() {
            out.extend(a.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }
}

fn check_radius(r: f64, what: &str) -> Result<()> {
    if r > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be > 0, got {r}")))
    }
}

/// Exact ε-graph: `i ~ j` iff `‖x_i - x_j‖ < eps`, `i != j`.
pub fn eps_graph(points: &Points, eps: f64) -> Result<EpsGraph> {
    check_radius(eps, "eps")?;
    let index = RadiusIndex::new(points, eps);
    let mut adjacency: Vec<Vec<usize>> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut nb = Vec::new();
            index.for_each_within(points.row(i), false, |j, _| {
                if j != i {
                    nb.push(j);
                }
            });
            nb
        })
        .collect();
    adjacency.par_iter_mut().for_each(|a| a.sort_unstable());
    Ok(EpsGraph { eps, adjacency })
}

/// Union-find components of `graph`.
pub fn connected_components(graph: &EpsGraph) -> ComponentLabels {
    let mut uf = UnionFind::new(graph.n());
    for i in 0..graph.n() {
        for &j in graph.neighbors(i) {
            if j > i {
                uf.union(i, j);
            }
        }
    }
    uf.labels()
}

/// τ-connected components: classes of points linked by chains whose
/// consecutive gaps are `< tau`.
pub fn tau_components(points: &Points, tau: f64) -> Result<ComponentLabels> {
    check_radius(tau, "tau")?;
    let index = RadiusIndex::new(points, tau);
    let mut uf = UnionFind::new(points.len());
    for i in 0..points.len() {
        index.for_each_within(points.row(i), false, |j, _| {
            if j > i {
                uf.union(i, j);
            }
        });
    }
    Ok(uf.labels())
}

fn majority(labels: impl Iterator<Item = i64>) -> i64 {
    let mut votes: Vec<(i64, usize)> = Vec::new();
    for l in labels {
        match votes.iter_mut().find(|v| v.0 == l) {
            Some(v) => v.1 += 1,
            None => votes.push((l, 1)),
        }
    }
    // Highest count, then smallest label.
    votes
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|v| v.0)
        .expect("at least one vote")
}

/// Majority label among the `k` nearest references of each query.
///
/// References are put in canonical order (coordinates, then label) and
/// distance ties go to the earlier one; vote ties go to the smallest label.
/// Both rules make the result independent of the order of `refs`.
pub fn knn_classify(
    queries: &Points,
    refs: &Points,
    ref_labels: &[i64],
    k: usize,
) -> Result<Vec<i64>> {
    if refs.is_empty() {
        return Err(Error::invalid("k-NN needs at least one reference point"));
    }
    if ref_labels.len() != refs.len() {
        return Err(Error::invalid("reference labels do not match references"));
    }
    if k == 0 || k > refs.len() {
        return Err(Error::invalid(format!(
            "k-NN needs 1 <= k <= {} references, got k = {k}",
            refs.len()
        )));
    }
    if queries.dim() != refs.dim() {
        return Err(Error::invalid("query and reference dimensions differ"));
    }
    let mut order: Vec<usize> = (0..refs.len()).collect();
    order.sort_by(|&a, &b| {
        lex_cmp(refs.row(a), refs.row(b)).then(ref_labels[a].cmp(&ref_labels[b]))
    });
    let canon = refs.select(&order);
    let canon_labels: Vec<i64> = order.iter().map(|&i| ref_labels[i]).collect();
    Ok((0..queries.len())
        .into_par_iter()
        .map(|q| {
            let x = queries.row(q);
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for (r, y) in canon.rows().enumerate() {
                let d = sq_dist(x, y);
                if best.len() == k && d >= best[k - 1].0 {
                    continue;
                }
                let pos = best.partition_point(|b| b.0 <= d);
                best.insert(pos, (d, r));
                best.truncate(k);
            }
            majority(best.iter().map(|b| canon_labels[b.1]))
        })
        .collect())
}

/// Per-point nearest-neighbour orderings over a fixed point set, truncated
/// at `depth` entries, for repeated k-NN queries against changing
/// reference subsets of the same points.
///
/// Ordering is by distance, then by canonical (lexicographic) rank, so
/// answers coincide with [`knn_classify`] whenever duplicated coordinates
/// carry the same label.
pub struct NeighborTable {
    depth: usize,
    canon_rank: Vec<usize>,
    order: Vec<Vec<u32>>,
}

impl NeighborTable {
    pub fn new(points: &Points, depth: usize) -> Self {
        let n = points.len();
        let mut canon: Vec<usize> = (0..n).collect();
        canon.sort_by(|&a, &b| lex_cmp(points.row(a), points.row(b)).then(a.cmp(&b)));
        let mut canon_rank = vec![0; n];
        for (r, &i) in canon.iter().enumerate() {
            canon_rank[i] = r;
        }
        let depth = depth.min(n);
        let order = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = points.row(i);
                let mut all: Vec<(f64, usize, u32)> = (0..n)
                    .map(|j| (sq_dist(x, points.row(j)), canon_rank[j], j as u32))
                    .collect();
                let cmp = |a: &(f64, usize, u32), b: &(f64, usize, u32)| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                };
                if depth < n {
                    all.select_nth_unstable_by(depth, cmp);
                    all.truncate(depth);
                }
                all.sort_unstable_by(cmp);
                all.into_iter().map(|t| t.2).collect()
            })
            .collect();
        NeighborTable {
            depth,
            canon_rank,
            order,
        }
    }

    /// Labels `queries` (indices into the table's points) by the `k`
    /// nearest points with `labels[j] = Some(_)`. Queries whose truncated
    /// ordering holds fewer than `k` labelled points fall back to a full
    /// scan.
    pub fn classify(
        &self,
        points: &Points,
        queries: &[usize],
        labels: &[Option<i64>],
        k: usize,
    ) -> Result<Vec<i64>> {
        let n_refs = labels.iter().filter(|l| l.is_some()).count();
        if n_refs == 0 {
            return Err(Error::invalid("k-NN needs at least one reference point"));
        }
        if k == 0 || k > n_refs {
            return Err(Error::invalid(format!(
                "k-NN needs 1 <= k <= {n_refs} references, got k = {k}"
            )));
        }
        Ok(queries
            .par_iter()
            .map(|&q| {
                let near: Vec<i64> = self.order[q]
                    .iter()
                    .filter_map(|&j| labels[j as usize])
                    .take(k)
                    .collect();
                if near.len() == k {
                    return majority(near.into_iter());
                }
                debug_assert!(self.depth < labels.len());
                let x = points.row(q);
                let mut all: Vec<(f64, usize, i64)> = labels
                    .iter()
                    .enumerate()
                    .filter_map(|(j, l)| {
                        l.map(|l| (sq_dist(x, points.row(j)), self.canon_rank[j], l))
                    })
                    .collect();
                all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                majority(all.into_iter().take(k).map(|t| t.2))
            })
            .collect())
    }
}
