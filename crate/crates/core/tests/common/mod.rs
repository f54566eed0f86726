//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use envforge::region::RegionRow;
use envforge::{FeasibleRegion, NetworkModel, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn network(name: &str) -> NetworkModel {
    envforge::load_network(fixture(name)).expect("fixture loads")
}

pub const FIXTURES: [&str; 5] = [
    "twb-2bus.json",
    "feeder-4bus.json",
    "feeder-20.json",
    "single-bus.json",
    "single-phase.json",
];

/// Random bounded polytope around the origin: a box of per-axis limits plus
/// `coupling` rows with coefficients of mixed sign, every row with the origin
/// strictly inside.
pub fn random_region(seed: u64, v: usize, coupling: usize) -> FeasibleRegion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for i in 0..v {
        let mut up = vec![0.0; v];
        up[i] = 1.0;
        let mut down = vec![0.0; v];
        down[i] = -1.0;
        rows.push(RegionRow::generic(format!("up[{i}]"), up, vec![0.0; v], rng.gen_range(2.0..10.0)));
        rows.push(RegionRow::generic(format!("down[{i}]"), down, vec![0.0; v], rng.gen_range(2.0..10.0)));
    }
    for m in 0..coupling {
        let g: Vec<f64> = (0..v).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = rng.gen_range(1.0..8.0);
        rows.push(RegionRow::generic(format!("couple[{m}]"), g, vec![0.0; v], h));
    }
    FeasibleRegion::from_rows(v, rows).expect("valid region")
}

pub fn random_statuses(seed: u64, v: usize) -> Vec<Status> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..v)
        .map(|_| match rng.gen_range(0..3) {
            0 => Status::Import,
            1 => Status::Export,
            _ => Status::Unknown,
        })
        .collect()
}

/// Every vertex of `{x : a x <= b}` in 2 or 3 dimensions, by solving all
/// square subsystems.
pub fn vertices(a: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    let d = a[0].len();
    let m = a.len();
    let mut out = Vec::new();
    let mut pick = |idx: &[usize]| {
        let mat = nalgebra::DMatrix::from_fn(d, d, |r, c| a[idx[r]][c]);
        let rhs = nalgebra::DVector::from_iterator(d, idx.iter().map(|&i| b[i]));
        if let Some(x) = mat.lu().solve(&rhs) {
            let x: Vec<f64> = x.iter().copied().collect();
            let ok = a
                .iter()
                .zip(b)
                .all(|(row, &bi)| row.iter().zip(&x).map(|(g, x)| g * x).sum::<f64>() <= bi + 1e-9);
            if ok && x.iter().all(|v| v.is_finite()) {
                out.push(x);
            }
        }
    };
    match d {
        2 => {
            for i in 0..m {
                for j in i + 1..m {
                    pick(&[i, j]);
                }
            }
        }
        3 => {
            for i in 0..m {
                for j in i + 1..m {
                    for k in j + 1..m {
                        pick(&[i, j, k]);
                    }
                }
            }
        }
        _ => panic!("vertex oracle only handles 2 or 3 dimensions"),
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
