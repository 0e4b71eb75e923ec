//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use bsc_core::points::Points;

/// ARI from pair counts: every unordered pair is classified by whether the
/// two labelings put it together.
pub fn ari_pairs(a: &[i64], b: &[i64]) -> f64 {
    let n = a.len();
    let (mut n11, mut n10, mut n01, mut n00) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    let denom = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if denom == 0.0 {
        return 1.0;
    }
    2.0 * (n00 * n11 - n01 * n10) / denom
}

/// Relabels by order of first appearance so partitions compare with `==`.
pub fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                return -1;
            }
            let next = map.len() as i64;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

pub fn canonical_usize(labels: &[usize]) -> Vec<i64> {
    canonical(&labels.iter().map(|&l| l as i64).collect::<Vec<_>>())
}

/// Breadth-first component labels of an undirected graph.
pub fn bfs_components(n: usize, edges: &[(usize, usize)]) -> Vec<i64> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut label = vec![-1i64; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] >= 0 {
            continue;
        }
        label[s] = next;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                if label[w] < 0 {
                    label[w] = next;
                    q.push_back(w);
                }
            }
        }
        next += 1;
    }
    label
}

/// All pairs `i < j` closer than `eps`.
pub fn brute_edges(points: &Points, eps: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < eps * eps {
                out.push((i, j));
            }
        }
    }
    out
}

/// k-NN majority vote by fully sorting the references on (squared
/// distance, coordinates, label); vote ties go to the smallest label.
pub fn knn_full_sort(queries: &Points, refs: &Points, labels: &[i64], k: usize) -> Vec<i64> {
    queries
        .rows()
        .map(|x| {
            let mut all: Vec<(f64, Vec<f64>, i64)> = refs
                .rows()
                .zip(labels)
                .map(|(y, &l)| {
                    let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, y.to_vec(), l)
                })
                .collect();
            all.sort_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then_with(|| {
                        a.1.iter()
                            .zip(&b.1)
                            .map(|(u, v)| u.total_cmp(v))
                            .find(|o| o.is_ne())
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .then(a.2.cmp(&b.2))
            });
            let mut votes: HashMap<i64, usize> = HashMap::new();
            for t in &all[..k] {
                *votes.entry(t.2).or_default() += 1;
            }
            let best = *votes.values().max().unwrap();
            *votes.iter().filter(|(_, &c)| c == best).map(|(l, _)| l).min().unwrap()
        })
        .collect()
}

/// DBSCAN clusters from the definitions: core points are those with at
/// least `min_pts` points (itself included) within closed radius `eps`;
/// clusters are the connected components of core points under the
/// radius relation; a non-core point within reach of a core point is a
/// border point of that core point's cluster(s); everything else is noise.
///
/// Returns the core flags, the core-point component of each core point,
/// and for every point the set of clusters it is reachable from.
pub struct DbscanOracle {
    pub core: Vec<bool>,
    pub reachable: Vec<Vec<i64>>,
}

pub fn dbscan_oracle(points: &Points, eps: f64, min_pts: usize) -> DbscanOracle {
    let n = points.len();
    let close = |i: usize, j: usize| {
        let d: f64 = points
            .row(i)
            .iter()
            .zip(points.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d <= eps * eps
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_pts)
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if core[i] && core[j] && close(i, j) {
                edges.push((i, j));
            }
        }
    }
    let comp = bfs_components(n, &edges);
    let reachable = (0..n)
        .map(|i| {
            let mut c: Vec<i64> = (0..n)
                .filter(|&j| core[j] && close(i, j))
                .map(|j| comp[j])
                .collect();
            c.sort_unstable();
            c.dedup();
            c
        })
        .collect();
    DbscanOracle { core, reachable }
}
