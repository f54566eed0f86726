mod common;

use common::{dot, vertices};
use envforge::redundancy::{remove_redundant_rows, QHandling};
use envforge::region::RegionRow;
use envforge::FeasibleRegion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random rows `a x <= h` with the origin strictly inside.
fn random_rows(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Vec<(Vec<f64>, f64)> {
    (0..m)
        .map(|_| {
            let a: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (a, rng.gen_range(0.5..2.0))
        })
        .collect()
}

/// Row `i` is redundant when its maximum over the other rows, clipped to a
/// far box, stays below its bound. The maximum is read off the vertices.
fn oracle_redundant(rows: &[(Vec<f64>, f64)], i: usize) -> bool {
    let d = rows[0].0.len();
    let far = 1e3;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (j, (g, h)) in rows.iter().enumerate() {
        if j != i {
            a.push(g.clone());
            b.push(*h);
        }
    }
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[k] = s;
            a.push(e);
            b.push(far);
        }
    }
    let best = vertices(&a, &b)
        .iter()
        .map(|x| dot(&rows[i].0, x))
        .fold(f64::NEG_INFINITY, f64::max);
    best <= rows[i].1 + 1e-7
}

#[test]
fn matches_vertex_enumeration_in_2d_and_3d() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..40 {
        let d = if trial % 2 == 0 { 2 } else { 3 };
        let m = rng.gen_range(5..12);
        let rows = random_rows(&mut rng, d, m);
        let fr = FeasibleRegion::from_rows(
            d,
            rows.iter()
                .enumerate()
                .map(|(j, (g, h))| RegionRow::generic(format!("r{j}"), g.clone(), vec![0.0; d], *h))
                .collect(),
        )
        .unwrap();
        let kept = remove_redundant_rows(&fr, &QHandling::Free).unwrap();
        let expected: Vec<String> = (0..m)
            .filter(|&i| !oracle_redundant(&rows, i))
            .map(|i| format!("r{i}"))
            .collect();
        let got: Vec<String> = kept.rows.iter().map(|r| r.label.clone()).collect();
        assert_eq!(got, expected, "trial {trial} (d = {d}, m = {m})");
    }
}

#[test]
fn pruned_region_has_the_same_vertices() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        // box keeps everything bounded
        let mut rows = random_rows(&mut rng, 2, 8);
        for (g, h) in [([1.0, 0.0], 3.0), ([-1.0, 0.0], 3.0), ([0.0, 1.0], 3.0), ([0.0, -1.0], 3.0)] {
            rows.push((g.to_vec(), h));
        }
        let fr = FeasibleRegion::from_rows(
            2,
            rows.iter()
                .map(|(g, h)| RegionRow::generic("r", g.clone(), vec![0.0; 2], *h))
                .collect(),
        )
        .unwrap();
        let kept = remove_redundant_rows(&fr, &QHandling::Fixed(vec![0.0; 2])).unwrap();
        let split = |f: &FeasibleRegion| -> (Vec<Vec<f64>>, Vec<f64>) {
            (f.rows.iter().map(|r| r.g_p.clone()).collect(), f.rows.iter().map(|r| r.h).collect())
        };
        let (a0, b0) = split(&fr);
        let (a1, b1) = split(&kept);
        let v0 = vertices(&a0, &b0);
        let v1 = vertices(&a1, &b1);
        for x in &v1 {
            assert!(v0.iter().any(|y| (x[0] - y[0]).abs() + (x[1] - y[1]).abs() < 1e-7));
        }
        for y in &v0 {
            assert!(v1.iter().any(|x| (x[0] - y[0]).abs() + (x[1] - y[1]).abs() < 1e-7));
        }
    }
}

#[test]
fn network_region_keeps_a_nonempty_subset() {
    let net = common::network("feeder-4bus.json");
    let (fr, _) = envforge::region::feasible_region_from_network(&net, &Default::default()).unwrap();
    let kept = remove_redundant_rows(&fr, &QHandling::Free).unwrap();
    assert!(kept.m() > 0 && kept.m() <= fr.m());
    assert!(kept.rows.iter().all(|r| fr.rows.iter().any(|s| s == r)));
}
