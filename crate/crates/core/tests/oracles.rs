//! Property tests against independent reference implementations.

mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use bsc_core::clustering::{
    algorithm1_scan, nearest_rank, persistent_components, scan_levels, PointLevelFamily, BACKGROUND,
};
use bsc_core::density::{fit_forest, DensityTree, ForestParams};
use bsc_core::eval::{ari, dbscan, kmeans};
use bsc_core::graph::{knn_classify, tau_components};
use bsc_core::partition::{HyperBox, Partition, SplitMode};
use bsc_core::points::Points;
use bsc_core::rng::seeded;
use bsc_core::setops::{
    grid_components, grid_level_set, psi_star, tube, GridDensity, GridSet, Lattice, TubeSign,
};

use common::*;

fn labels(n: std::ops::Range<usize>, k: i64) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(0..k, n)
}

fn points(n: std::ops::Range<usize>, d: usize, span: f64) -> impl Strategy<Value = Points> {
    prop::collection::vec(prop::collection::vec(-span..span, d), n)
        .prop_map(|rows| Points::from_rows(&rows).unwrap())
}

/// Points on a coarse integer lattice, so distance ties are common.
fn lattice_points(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Points> {
    prop::collection::vec(prop::collection::vec(0i32..6, d), n).prop_map(|rows| {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
        Points::from_rows(&rows).unwrap()
    })
}

fn mask_set(lat: &Lattice, mask: Vec<bool>) -> GridSet {
    GridSet::new(lat.clone(), mask).unwrap()
}

/// Face-neighbour edges of a lattice mask.
fn grid_edges(res: usize, mask: &[bool]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..res {
        for c in 0..res {
            let i = r * res + c;
            if !mask[i] {
                continue;
            }
            if c + 1 < res && mask[i + 1] {
                edges.push((i, i + 1));
            }
            if r + 1 < res && mask[i + res] {
                edges.push((i, i + res));
            }
        }
    }
    edges
}

fn same_partition(a: &[i64], b: &[i64]) -> bool {
    canonical(a) == canonical(b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ari_matches_pair_counts(a in labels(2..120, 6), seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let b: Vec<i64> = a.iter().map(|&l| if rng.random::<f64>() < 0.3 { rng.random_range(0..6) } else { l }).collect();
        let got = ari(&a, &b).unwrap();
        prop_assert!((got - ari_pairs(&a, &b)).abs() <= 1e-12);
        prop_assert_eq!(got, ari(&b, &a).unwrap());
    }

    #[test]
    fn ari_ignores_label_names(a in labels(2..100, 5), b in labels(2..100, 5), shift in 1i64..50) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let renamed: Vec<i64> = a.iter().map(|&l| (4 - l) * 7 + shift).collect();
        prop_assert!((ari(a, b).unwrap() - ari(&renamed, b).unwrap()).abs() <= 1e-12);
        if a.iter().any(|&l| l != a[0]) {
            prop_assert_eq!(ari(a, a).unwrap(), 1.0);
        }
    }

    #[test]
    fn dbscan_agrees_with_definitions(pts in lattice_points(1..60, 2), eps in 0.5f64..2.5, min_pts in 1usize..6) {
        let got = dbscan(&pts, eps, min_pts).unwrap();
        let oracle = dbscan_oracle(&pts, eps, min_pts);
        let n = pts.len();
        // Core points: the partition must be the oracle's core components.
        let core: Vec<usize> = (0..n).filter(|&i| oracle.core[i]).collect();
        let got_core: Vec<i64> = core.iter().map(|&i| got[i]).collect();
        let want_core: Vec<i64> = core.iter().map(|&i| oracle.reachable[i][0]).collect();
        prop_assert!(got_core.iter().all(|&l| l >= 0));
        prop_assert!(same_partition(&got_core, &want_core));
        // Everything else: noise exactly when no core point is in reach,
        // otherwise one of the clusters in reach.
        for i in (0..n).filter(|&i| !oracle.core[i]) {
            if oracle.reachable[i].is_empty() {
                prop_assert_eq!(got[i], -1);
            } else {
                let j = core.iter().position(|&c| got[c] == got[i]);
                prop_assert!(j.is_some());
                prop_assert!(oracle.reachable[i].contains(&want_core[j.unwrap()]));
            }
        }
    }

    #[test]
    fn dbscan_ignores_input_order(pts in points(2..80, 2, 3.0), seed in any::<u64>()) {
        let labels = dbscan(&pts, 0.8, 4).unwrap();
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut seeded(seed));
        let shuffled = dbscan(&pts.select(&perm), 0.8, 4).unwrap();
        let mut back = vec![0; pts.len()];
        for (k, &i) in perm.iter().enumerate() {
            back[i] = shuffled[k];
        }
        prop_assert!(same_partition(&labels, &back));
    }

    #[test]
    fn kmeans_output_is_consistent(pts in points(3..80, 3, 5.0), k in 1usize..4, seed in any::<u64>()) {
        let r = kmeans(&pts, k, seed, 100).unwrap();
        prop_assert_eq!(r.centroids.len(), k);
        let mut inertia = 0.0;
        for (x, &l) in pts.rows().zip(&r.labels) {
            prop_assert!((0..k as i64).contains(&l));
            let own: f64 = x.iter().zip(&r.centroids[l as usize]).map(|(a, b)| (a - b) * (a - b)).sum();
            for c in &r.centroids {
                let d: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                prop_assert!(own <= d + 1e-9);
            }
            inertia += own;
        }
        prop_assert!((inertia - r.inertia).abs() <= 1e-9 * inertia.max(1.0));
        if k == 1 {
            for j in 0..3 {
                let mean = pts.rows().map(|x| x[j]).sum::<f64>() / pts.len() as f64;
                prop_assert!((r.centroids[0][j] - mean).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn knn_matches_full_sort_and_ignores_order(
        refs in lattice_points(1..60, 2),
        queries in lattice_points(1..20, 2),
        seed in any::<u64>(),
        k in 1usize..8,
    ) {
        let mut rng = seeded(seed);
        let k = k.min(refs.len());
        let labels: Vec<i64> = (0..refs.len()).map(|_| rng.random_range(0..3)).collect();
        let got = knn_classify(&queries, &refs, &labels, k).unwrap();
        prop_assert_eq!(&got, &knn_full_sort(&queries, &refs, &labels, k));
        let mut perm: Vec<usize> = (0..refs.len()).collect();
        perm.shuffle(&mut rng);
        let plabels: Vec<i64> = perm.iter().map(|&i| labels[i]).collect();
        prop_assert_eq!(got, knn_classify(&queries, &refs.select(&perm), &plabels, k).unwrap());
    }

    #[test]
    fn tau_partitions_refine(pts in points(1..80, 2, 2.0), t1 in 0.05f64..1.0, dt in 0.0f64..1.0) {
        let fine = tau_components(&pts, t1).unwrap();
        let coarse = tau_components(&pts, t1 + dt).unwrap();
        prop_assert!(coarse.count <= fine.count);
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if fine.labels[i] == fine.labels[j] {
                    prop_assert_eq!(coarse.labels[i], coarse.labels[j]);
                }
            }
        }
    }

    #[test]
    fn partition_cells_tile_the_root(p in 0usize..300, seed in any::<u64>(), adaptive in any::<bool>()) {
        let root = HyperBox::new(vec![-1.0, 0.0, 2.0], vec![1.0, 3.0, 2.5]).unwrap();
        let mut rng = seeded(seed);
        let data = Points::from_rows(&(0..40).map(|_| [rng.random_range(-1.0..0.0), rng.random_range(0.0..1.0), 2.2]).collect::<Vec<_>>()).unwrap();
        let mode = if adaptive { SplitMode::Adaptive } else { SplitMode::Pure };
        let part = Partition::build(root.clone(), p, mode, Some(&data), &mut seeded(seed)).unwrap();
        prop_assert_eq!(part.cells().len(), p + 1);
        let total: f64 = part.cells().iter().map(HyperBox::volume).sum();
        prop_assert!((total - root.volume()).abs() <= 1e-9 * root.volume());
        for (c, cell) in part.cells().iter().enumerate() {
            prop_assert!(cell.volume() > 0.0);
            let x: Vec<f64> = (0..3).map(|j| cell.lower()[j] + rng.random_range(0.01..0.99) * cell.side(j)).collect();
            prop_assert_eq!(part.locate(&x), Some(c));
        }
        let again = Partition::build(root, p, mode, Some(&data), &mut seeded(seed)).unwrap();
        prop_assert_eq!(part.splits(), again.splits());
        if adaptive {
            // Replay the splits: each one must cut a leaf holding data.
            let mut replay = Partition::new(part.root().clone());
            for rec in part.splits() {
                let leaf = &replay.cells()[rec.cell];
                prop_assert!(data.rows().any(|x| leaf.contains(x)));
                replay.apply_split(*rec).unwrap();
            }
        }
    }

    #[test]
    fn density_tree_properties(pts in points(5..60, 2, 1.0), p in 0usize..40, seed in any::<u64>()) {
        let root = HyperBox::cube(2, 1.5).unwrap();
        let part = Partition::build(root, p, SplitMode::Adaptive, Some(&pts), &mut seeded(seed)).unwrap();
        let tree = DensityTree::fit(part.clone(), &pts).unwrap();
        let mass: f64 = tree.cell_mass().iter().sum::<f64>() + tree.outside_mass();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
        for (j, cell) in part.cells().iter().enumerate() {
            let count = pts.rows().filter(|x| part.locate(x) == Some(j)).count();
            prop_assert!((tree.cell_mass()[j] - count as f64 / pts.len() as f64).abs() <= 1e-15);
            prop_assert!((tree.cell_density()[j] - tree.cell_mass()[j] / cell.volume()).abs() <= 1e-9 * tree.cell_density()[j].max(1.0));
            let c = cell.center();
            prop_assert_eq!(tree.eval(&c), tree.cell_density()[j]);
        }
        // Duplicating every point leaves the densities unchanged.
        let doubled = Points::from_rows(&pts.rows().chain(pts.rows()).collect::<Vec<_>>()).unwrap();
        let tree2 = DensityTree::fit(part, &doubled).unwrap();
        for (a, b) in tree.cell_density().iter().zip(tree2.cell_density()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn nearest_rank_is_smallest_covering_value(mut v in prop::collection::vec(-10.0f64..10.0, 1..50), q in 0.001f64..1.0) {
        v.sort_by(f64::total_cmp);
        let got = nearest_rank(&v, q);
        let n = v.len() as f64;
        let covering = |x: f64| v.iter().filter(|&&y| y <= x).count() as f64 >= q * n;
        let want = v.iter().copied().find(|&x| covering(x)).unwrap();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn level_scan_matches_brute_force(
        pts in points(3..60, 2, 2.0),
        seed in any::<u64>(),
        q in 0.05f64..0.6,
        eps in 0.2f64..1.2,
    ) {
        let mut rng = seeded(seed);
        // Few distinct density values so several points share a level.
        let dens: Vec<f64> = (0..pts.len()).map(|_| rng.random_range(1..8) as f64).collect();
        let scan = scan_levels(&pts, &dens, q, eps).unwrap();
        let mut sorted = dens.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = nearest_rank(&sorted, q);
        let fg: Vec<usize> = (0..pts.len()).filter(|&i| dens[i] > cut).collect();
        prop_assert_eq!(scan.foreground(), &fg[..]);
        let mut prev: Option<Vec<i64>> = None;
        for (j, &level) in scan.levels().iter().enumerate() {
            let members: Vec<usize> = fg.iter().copied().filter(|&i| dens[i] >= level).collect();
            let sub = pts.select(&members);
            let comps = bfs_components(members.len(), &brute_edges(&sub, eps));
            let count = comps.iter().max().map_or(0, |&m| m as usize + 1);
            prop_assert_eq!(scan.counts()[j], count);
            let labels = scan.labels_at(j);
            let got: Vec<i64> = members.iter().map(|&i| labels[i]).collect();
            prop_assert!(same_partition(&got, &comps));
            prop_assert_eq!(labels.iter().filter(|&&l| l != BACKGROUND).count(), members.len());
            // Each component at this level sits inside one component of
            // the level below.
            if let Some(lower) = &prev {
                for a in &members {
                    for b in &members {
                        if labels[*a] == labels[*b] {
                            prop_assert_eq!(lower[*a], lower[*b]);
                        }
                    }
                }
            }
            prev = Some(labels);
        }
    }

    #[test]
    fn persistent_components_meet_the_upper_level(
        pts in points(2..80, 1, 3.0),
        seed in any::<u64>(),
        rho in 0.0f64..0.8,
        eps in 0.01f64..0.2,
    ) {
        let mut rng = seeded(seed);
        let values: Vec<f64> = (0..pts.len()).map(|_| rng.random::<f64>()).collect();
        let fam = PointLevelFamily::new(pts.clone(), values.clone()).unwrap();
        for comp in persistent_components(&fam, rho, 0.3, eps).unwrap() {
            prop_assert!(comp.iter().all(|&i| values[i] >= rho));
            prop_assert!(comp.iter().any(|&i| values[i] >= rho + 2.0 * eps));
        }
        let a = algorithm1_scan(&fam, 0.3, eps, rho).unwrap();
        let b = algorithm1_scan(&fam, 0.3, eps, rho).unwrap();
        prop_assert_eq!(&a, &b);
        if !a.single_cluster {
            prop_assert!(a.n_clusters >= 2);
            for c in 0..a.n_clusters as i64 {
                prop_assert!((0..values.len()).any(|i| a.labels[i] == c && values[i] >= a.rho_out + 2.0 * eps));
            }
        }
    }

    #[test]
    fn tubes_are_monotone_and_dual(
        mask in prop::collection::vec(prop::bool::weighted(0.4), 24 * 24),
        d1 in 0.0f64..0.3,
        dd in 0.0f64..0.3,
    ) {
        let lat = Lattice::new(HyperBox::cube(2, 1.0).unwrap(), 24).unwrap();
        let a = mask_set(&lat, mask);
        let d2 = d1 + dd;
        let p1 = tube(&a, d1, TubeSign::Plus).unwrap();
        let p2 = tube(&a, d2, TubeSign::Plus).unwrap();
        let m1 = tube(&a, d1, TubeSign::Minus).unwrap();
        let m2 = tube(&a, d2, TubeSign::Minus).unwrap();
        prop_assert!(p1.is_subset(&p2).unwrap());
        prop_assert!(m2.is_subset(&m1).unwrap());
        prop_assert!(m1.is_subset(&a).unwrap() && a.is_subset(&p1).unwrap());
        prop_assert_eq!(&m2, &tube(&a.complement(), d2, TubeSign::Plus).unwrap().complement());
        if !m1.is_empty() && d1 > 0.0 {
            prop_assert!(psi_star(&a, d1).unwrap() >= d1 - lat.max_step());
        }
    }

    #[test]
    fn grid_components_match_bfs(mask in prop::collection::vec(prop::bool::weighted(0.55), 32 * 32)) {
        let lat = Lattice::new(HyperBox::cube(2, 1.0).unwrap(), 32).unwrap();
        let got = grid_components(&mask_set(&lat, mask.clone()));
        let want = bfs_components(mask.len(), &grid_edges(32, &mask));
        let members: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        prop_assert!(mask.iter().zip(&got.labels).all(|(&m, &l)| m == (l >= 0)));
        let g: Vec<i64> = members.iter().map(|&i| got.labels[i]).collect();
        let w: Vec<i64> = members.iter().map(|&i| want[i]).collect();
        prop_assert!(same_partition(&g, &w));
    }

    #[test]
    fn components_of_subsets_nest(
        small in prop::collection::vec(prop::bool::weighted(0.3), 20 * 20),
        extra in prop::collection::vec(prop::bool::weighted(0.3), 20 * 20),
    ) {
        let lat = Lattice::new(HyperBox::cube(2, 1.0).unwrap(), 20).unwrap();
        let big: Vec<bool> = small.iter().zip(&extra).map(|(a, b)| *a || *b).collect();
        let ca = grid_components(&mask_set(&lat, small.clone()));
        let cb = grid_components(&mask_set(&lat, big));
        let mut host = vec![-1i64; ca.count];
        for i in (0..small.len()).filter(|&i| small[i]) {
            let a = ca.labels[i] as usize;
            prop_assert!(cb.labels[i] >= 0);
            if host[a] < 0 {
                host[a] = cb.labels[i];
            }
            prop_assert_eq!(host[a], cb.labels[i]);
        }
    }

    #[test]
    fn grid_level_sets_nest(seed in any::<u64>(), r1 in 0.0f64..1.0, dr in 0.0f64..1.0) {
        let lat = Lattice::new(HyperBox::cube(2, 1.0).unwrap(), 40).unwrap();
        let mut rng = seeded(seed);
        let values: Vec<f64> = (0..lat.len()).map(|_| rng.random::<f64>()).collect();
        let gd = GridDensity::new(lat, values).unwrap();
        let low = grid_level_set(&gd, r1).unwrap();
        let high = grid_level_set(&gd, r1 + dr).unwrap();
        prop_assert!(high.is_subset(&low).unwrap());
    }
}

#[test]
fn ten_thousand_splits_keep_the_volume() {
    let root = HyperBox::new(vec![0.0, -2.0], vec![3.0, 5.0]).unwrap();
    for mode in [SplitMode::Pure, SplitMode::Adaptive] {
        let mut rng = seeded(17);
        let data = Points::from_rows(&(0..500).map(|_| [rng.random_range(0.0..0.5), rng.random_range(-2.0..-1.0)]).collect::<Vec<_>>()).unwrap();
        let part = Partition::build(root.clone(), 10_000, mode, Some(&data), &mut rng).unwrap();
        let total: f64 = part.cells().iter().map(HyperBox::volume).sum();
        assert!((total - root.volume()).abs() <= 1e-9 * root.volume(), "{mode:?}: {total}");
        assert_eq!(part.cells().len(), 10_001);
    }
}

#[test]
fn dumbbell_erosion_needs_more_than_its_radius() {
    // Two disks joined by a thin bar: eroding past the bar's half-width
    // disconnects the disks, so the recovery radius exceeds the erosion.
    let lat = Lattice::new(HyperBox::new(vec![-2.0, -1.0], vec![2.0, 1.0]).unwrap(), 256).unwrap();
    let a = GridSet::from_fn(lat.clone(), |x| {
        (x[0] + 1.2).hypot(x[1]) <= 0.6 || (x[0] - 1.2).hypot(x[1]) <= 0.6 || x[1].abs() <= 0.05
    });
    let delta = 0.1;
    let eroded = tube(&a, delta, TubeSign::Minus).unwrap();
    assert_eq!(grid_components(&eroded).count, 2);
    assert!(psi_star(&a, delta).unwrap() > 3.0 * delta);
}

#[test]
fn forest_is_deterministic_and_nonnegative() {
    let pts = Points::from_rows(&(0..200).map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect::<Vec<_>>()).unwrap();
    let params = ForestParams { m: 4, k: 3, p: 30, seed: 9, ..Default::default() };
    let a = fit_forest(&pts, &params).unwrap();
    let b = fit_forest(&pts, &params).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let mut rng = seeded(1);
    for _ in 0..2000 {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        assert!(a.eval(&x) >= 0.0);
    }
}
