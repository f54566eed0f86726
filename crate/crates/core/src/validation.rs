//! Checks of allocated envelopes: Monte-Carlo stress testing through the
//! exact power flow, geometric certification against the region, and a
//! numeric probe of the inner worst-case problem and its dual.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::EnvelopeAllocation;
use crate::error::{Error, Result};
use crate::network::{solve_exact_power_flow, MonitorSet, NetworkModel, PowerFlowOptions, PowerInjection};
use crate::region::FeasibleRegion;
use crate::superellipsoid::{Superellipsoid, TowerSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub draws: usize,
    pub seed: u64,
    /// A draw counts as a violation only when some voltage leaves
    /// `[v_min, v_max]` by more than this many p.u.
    pub threshold_pu: f64,
    pub power_flow: PowerFlowOptions,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            draws: 10_000,
            seed: 0,
            threshold_pu: 0.0,
            power_flow: PowerFlowOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub index: usize,
    /// Voltage magnitude furthest outside (or closest to) the limits.
    pub worst_v_pu: f64,
    /// `bus.phase` of `worst_v_pu`.
    pub location: String,
    /// Distance outside the limits, 0 when inside.
    pub overshoot_pu: f64,
    pub violated: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub draws: usize,
    pub violations: usize,
    /// Draws whose power flow did not converge; not counted as violations.
    pub diverged: usize,
    /// Largest overshoot among violating draws (0 when there are none).
    pub max_overshoot_pu: f64,
    /// Largest overshoot over all draws, regardless of the threshold.
    pub max_raw_overshoot_pu: f64,
    pub threshold_pu: f64,
    pub seed: u64,
    pub records: Vec<DrawRecord>,
}

impl ViolationReport {
    /// One line per draw: `index,worst_v_pu,location,overshoot_pu,violated,diverged`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("index,worst_v_pu,location,overshoot_pu,violated,diverged\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.9},{},{:.9e},{},{}\n",
                r.index, r.worst_v_pu, r.location, r.overshoot_pu, r.violated as u8, r.diverged as u8
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Powers of the active customers drawn uniformly inside their envelopes.
fn draw_powers(lower: &[f64], upper: &[f64], seed: u64, index: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    lower
        .iter()
        .zip(upper)
        .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
        .collect()
}

/// Runs `draws` exact power flows with active powers sampled uniformly inside
/// the envelopes, reactive powers at the dispatch and passive customers at
/// their forecast. Draw `k` uses its own stream of a ChaCha generator seeded
/// with `seed`, so the report does not depend on thread scheduling.
pub fn monte_carlo_validate(
    net: &NetworkModel,
    allocation: &EnvelopeAllocation,
    opts: &MonteCarloOptions,
) -> Result<ViolationReport> {
    if opts.draws == 0 {
        return Err(Error::InvalidConfig("need at least one draw".into()));
    }
    allocation.validate()?;
    let active = net.active_customers();
    if active.len() != allocation.customers.len() {
        return Err(Error::InvalidConfig(format!(
            "allocation covers {} customers but the network has {} active",
            allocation.customers.len(),
            active.len()
        )));
    }
    // allocation entry for each active customer, matched by id
    let slots: Vec<usize> = active
        .iter()
        .map(|&c| {
            let id = &net.customers[c].id;
            allocation
                .customers
                .iter()
                .position(|e| &e.id == id)
                .ok_or_else(|| Error::InvalidConfig(format!("allocation has no envelope for customer `{id}`")))
        })
        .collect::<Result<_>>()?;
    let lower: Vec<f64> = slots.iter().map(|&s| allocation.customers[s].lower_kw).collect();
    let upper: Vec<f64> = slots.iter().map(|&s| allocation.customers[s].upper_kw).collect();
    let q: Vec<f64> = slots.iter().map(|&s| allocation.q_dispatch_kvar[s]).collect();

    let nodes = net.monitored_node_phases(MonitorSet::AllNodes);
    let limits = net.limits;
    let base = net.base_injections();

    let records: Vec<DrawRecord> = (0..opts.draws)
        .into_par_iter()
        .map(|index| {
            let p = draw_powers(&lower, &upper, opts.seed, index);
            let mut inj = base.clone();
            for (j, &c) in active.iter().enumerate() {
                inj[c] = PowerInjection {
                    p_kw: p[j],
                    q_kvar: q[j],
                };
            }
            match solve_exact_power_flow(net, &inj, &opts.power_flow) {
                Err(_) => DrawRecord {
                    index,
                    worst_v_pu: f64::NAN,
                    location: String::new(),
                    overshoot_pu: 0.0,
                    violated: false,
                    diverged: true,
                },
                Ok(op) => {
                    // score = overshoot, or minus the margin when inside
                    let (score, mag, np) = nodes
                        .iter()
                        .map(|np| {
                            let m = op.magnitude(np.bus, np.phase);
                            ((limits.v_min_pu - m).max(m - limits.v_max_pu), m, np)
                        })
                        .fold((f64::NEG_INFINITY, f64::NAN, &nodes[0]), |a, b| if b.0 > a.0 { b } else { a });
                    let overshoot = score.max(0.0);
                    DrawRecord {
                        index,
                        worst_v_pu: mag,
                        location: format!("{}.{}", net.buses[np.bus].id, np.phase),
                        overshoot_pu: overshoot,
                        violated: overshoot > opts.threshold_pu,
                        diverged: false,
                    }
                }
            }
        })
        .collect();

    let violations = records.iter().filter(|r| r.violated).count();
    let diverged = records.iter().filter(|r| r.diverged).count();
    let max_raw = records.iter().map(|r| r.overshoot_pu).fold(0.0, f64::max);
    let max_violating = records
        .iter()
        .filter(|r| r.violated)
        .map(|r| r.overshoot_pu)
        .fold(0.0, f64::max);
    Ok(ViolationReport {
        draws: opts.draws,
        violations,
        diverged,
        max_overshoot_pu: max_violating,
        max_raw_overshoot_pu: max_raw,
        threshold_pu: opts.threshold_pu,
        seed: opts.seed,
        records,
    })
}

/// Vertex count up to which certification is exhaustive.
pub const EXHAUSTIVE_MAX_V: usize = 10;
pub const CERTIFY_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub exhaustive: bool,
    pub points_checked: usize,
    /// Smallest `h - G_p p - G_q q` over the checked points.
    pub min_slack: f64,
    pub worst_row: String,
    pub worst_point: Vec<f64>,
}

impl Certification {
    pub fn is_robust(&self, tol: f64) -> bool {
        self.min_slack >= -tol
    }
}

/// Minimum row slack over the box `[lower, upper]` at reactive dispatch `q`.
///
/// Up to [`EXHAUSTIVE_MAX_V`] customers every vertex is checked. Beyond that
/// the check uses [`CERTIFY_SAMPLES`] Latin-hypercube points pushed toward
/// the corners, plus the worst vertex of each row (the corner picking
/// `upper` where the row coefficient is positive and `lower` elsewhere).
pub fn certify_box_in_polyhedron(fr: &FeasibleRegion, allocation: &EnvelopeAllocation, q: &[f64]) -> Certification {
    let lower = allocation.lower();
    let upper = allocation.upper();
    let v = lower.len();
    assert_eq!(v, fr.v(), "allocation and region disagree on customer count");
    let corner = |mask: u64| -> Vec<f64> {
        (0..v)
            .map(|i| if mask >> i & 1 == 1 { upper[i] } else { lower[i] })
            .collect()
    };
    let points: Vec<Vec<f64>> = if v <= EXHAUSTIVE_MAX_V {
        (0..1u64 << v).map(corner).collect()
    } else {
        let mut pts = corner_biased_lhs(&lower, &upper, CERTIFY_SAMPLES, 0);
        pts.extend(fr.rows.iter().map(|row| {
            (0..v)
                .map(|i| if row.g_p[i] > 0.0 { upper[i] } else { lower[i] })
                .collect()
        }));
        pts
    };
    let (min_slack, worst_row, worst_point) = points
        .par_iter()
        .map(|p| {
            let (s, r) = fr.min_slack(p, q);
            (s, r, p)
        })
        .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && b.2 < a.2) { b } else { a })
        .map(|(s, r, p)| (s, fr.rows.get(r).map(|row| row.label.clone()).unwrap_or_default(), p.clone()))
        .unwrap_or((f64::INFINITY, String::new(), Vec::new()));
    Certification {
        exhaustive: v <= EXHAUSTIVE_MAX_V,
        points_checked: points.len(),
        min_slack,
        worst_row,
        worst_point,
    }
}

/// Latin-hypercube points in the box with each coordinate mapped through
/// `(1 - cos(pi u)) / 2`, which piles samples near the faces.
fn corner_biased_lhs(lower: &[f64], upper: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = lower.len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(v);
    for i in 0..v {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        columns.push(
            strata
                .into_iter()
                .map(|s| {
                    let u = (s as f64 + rng.gen::<f64>()) / n as f64;
                    let x = 0.5 * (1.0 - (std::f64::consts::PI * u).cos());
                    lower[i] + x * (upper[i] - lower[i])
                })
                .collect(),
        );
    }
    (0..n).map(|k| (0..v).map(|i| columns[i][k]).collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualProbe {
    /// Numeric maximum of `x . y_1` over the tower set.
    pub primal: f64,
    /// Numeric minimum of the dual objective.
    pub dual: f64,
}

/// Maximizes `x . y_1` over the tower set of squareness `k` and minimizes its
/// dual
///
/// ```text
/// a_K + sum_i x_i^2 / (4 a_{1,i}) + sum_{k=2}^{K-1} sum_i a_{k-1,i}^2 / (4 a_{k,i})
/// ```
///
/// over `a > 0` with `a_K = ||a_{K-1}||`. Both sides are computed
/// numerically; neither uses the closed-form optimum.
pub fn dual_gap_probe(x: &[f64], k: u32) -> DualProbe {
    assert!(!x.is_empty() && k >= 1);
    DualProbe {
        primal: primal_probe(x, k),
        dual: dual_probe(x, k),
    }
}

fn primal_probe(x: &[f64], k: u32) -> f64 {
    let dim = x.len();
    let shape = Superellipsoid::new(vec![0.0; dim], vec![1.0; dim], k).expect("unit shape");
    let tower = TowerSpec::new(k, dim);
    let n = shape.exponent();
    // scale a direction onto the boundary sum |y_i|^n = 1
    let to_boundary = |d: &[f64]| -> Option<Vec<f64>> {
        let s = shape.membership(d).sum;
        if !(s > 0.0 && s.is_finite()) {
            return None;
        }
        let f = s.powf(-1.0 / n);
        Some(d.iter().map(|v| v * f).collect())
    };
    let value = |y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();

    // coarse grid of directions
    let steps = match dim {
        1 => 2,
        2 => 720,
        3 => 60,
        _ => 16,
    };
    let mut best: (f64, Vec<f64>) = (0.0, vec![0.0; dim]);
    let consider = |y: Vec<f64>, best: &mut (f64, Vec<f64>)| {
        let val = value(&y);
        if val > best.0 && tower.is_feasible(&tower.lift(&y), 1e-12) {
            *best = (val, y);
        }
    };
    let grid = (0..steps).map(|j| -1.0 + 2.0 * j as f64 / (steps - 1).max(1) as f64);
    let axes: Vec<f64> = grid.collect();
    let mut idx = vec![0usize; dim];
    loop {
        let d: Vec<f64> = idx.iter().map(|&j| axes[j]).collect();
        if let Some(y) = to_boundary(&d) {
            consider(y, &mut best);
        }
        let mut pos = 0;
        loop {
            if pos == dim {
                break;
            }
            idx[pos] += 1;
            if idx[pos] < axes.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == dim {
            break;
        }
    }

    // pattern search on the boundary
    let mut step = 0.1;
    while step > 1e-13 {
        let mut improved = false;
        for i in 0..dim {
            for s in [step, -step] {
                let mut d = best.1.clone();
                d[i] += s;
                if let Some(y) = to_boundary(&d) {
                    let before = best.0;
                    consider(y, &mut best);
                    improved |= best.0 > before;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best.0
}

fn dual_probe(x: &[f64], k: u32) -> f64 {
    let dim = x.len();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if k == 1 {
        // max x.y over the unit ball: min a s.t. ||x|| <= a
        return norm;
    }
    if norm == 0.0 {
        return 0.0;
    }
    let levels = k as usize - 1;
    let floor = 1e-300;
    // a[l][i] for l = 0..levels (links 1..K-1); a_K = ||a[levels-1]||
    let mut a = vec![vec![norm; dim]; levels];
    let objective = |a: &[Vec<f64>]| -> f64 {
        let top = a[levels - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut f = top;
        for i in 0..dim {
            f += x[i] * x[i] / (4.0 * a[0][i]);
            for l in 1..levels {
                f += a[l - 1][i] * a[l - 1][i] / (4.0 * a[l][i]);
            }
        }
        f
    };
    let mut prev = objective(&a);
    for _ in 0..200_000 {
        for l in 0..levels {
            for i in 0..dim {
                // numerator of the term this variable divides
                let num = if l == 0 { x[i] * x[i] / 4.0 } else { a[l - 1][i] * a[l - 1][i] / 4.0 };
                if l + 1 < levels {
                    // num / a + a^2 / (4 a_next): minimize in closed form
                    let next = a[l + 1][i];
                    a[l][i] = (2.0 * num * next).cbrt().max(floor);
                } else {
                    // num / a + sqrt(a^2 + rest): 1-d convex, bisection on the derivative
                    let rest: f64 = (0..dim).filter(|&j| j != i).map(|j| a[l][j] * a[l][j]).sum();
                    let grad = |t: f64| -num / (t * t) + t / (t * t + rest).sqrt();
                    if num == 0.0 {
                        a[l][i] = floor;
                        continue;
                    }
                    let (mut lo, mut hi) = (floor, a[l][i].max(1e-300));
                    while grad(hi) < 0.0 {
                        hi *= 2.0;
                    }
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if grad(mid) < 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                        if hi - lo <= 1e-16 * hi {
                            break;
                        }
                    }
                    a[l][i] = 0.5 * (lo + hi);
                }
            }
        }
        let f = objective(&a);
        if prev - f <= 1e-15 * f.abs().max(1e-300) {
            prev = f.min(prev);
            break;
        }
        prev = f;
    }
    prev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{CustomerEnvelope, Method};
    use crate::region::RegionRow;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Hölder closed form: max x.y over ||y||_n <= 1 is ||x||_q, 1/n + 1/q = 1.
    fn holder(x: &[f64], k: u32) -> f64 {
        let n = 2f64.powi(k as i32);
        let q = n / (n - 1.0);
        x.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }

    #[test]
    fn probe_zero_vector() {
        for k in 1..=3 {
            let p = dual_gap_probe(&[0.0, 0.0], k);
            assert_eq!(p.primal, 0.0);
            assert!(p.dual.abs() <= 1e-4);
        }
    }

    #[test]
    fn probe_cauchy_schwarz() {
        let p = dual_gap_probe(&[-2.5], 1);
        assert_abs_diff_eq!(p.primal, 2.5, epsilon = 1e-9);
        assert_abs_diff_eq!(p.dual, 2.5, epsilon = 1e-12);
        let p = dual_gap_probe(&[3.0, 4.0], 1);
        assert_abs_diff_eq!(p.primal, 5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.dual, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn probe_matches_holder() {
        for (x, k) in [(vec![1.0, -0.5], 2u32), (vec![0.3, 0.2, -0.9], 3), (vec![2.0, 1.0, 0.5], 2)] {
            let p = dual_gap_probe(&x, k);
            let exact = holder(&x, k);
            assert!((p.primal - exact).abs() <= 1e-6, "{x:?} {k}: {} vs {exact}", p.primal);
            assert!((p.dual - exact).abs() <= 1e-6, "{x:?} {k}: {} vs {exact}", p.dual);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn weak_and_strong_duality(x in prop::collection::vec(-3.0f64..3.0, 1..4), k in 1u32..4) {
            let p = dual_gap_probe(&x, k);
            prop_assert!(p.dual >= p.primal - 1e-9);
            prop_assert!((p.dual - p.primal).abs() <= 1e-3);
        }
    }

    fn alloc(bounds: &[(f64, f64)], method: Method) -> EnvelopeAllocation {
        EnvelopeAllocation::new(
            method,
            bounds
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| CustomerEnvelope { id: format!("{}", i + 1), lower_kw: lo, upper_kw: hi })
                .collect(),
            vec![0.0; bounds.len()],
        )
    }

    #[test]
    fn certification_on_coupled_region() {
        let rows = vec![
            RegionRow::generic("a", vec![1.0, 0.0], vec![0.0; 2], 7.0),
            RegionRow::generic("b", vec![0.0, 1.0], vec![0.0; 2], 7.0),
            RegionRow::generic("c", vec![1.0, -1.0], vec![0.0; 2], 2.0),
        ];
        let fr = FeasibleRegion::from_rows(2, rows).unwrap();
        let bad = certify_box_in_polyhedron(&fr, &alloc(&[(0.0, 7.0), (0.0, 7.0)], Method::Dmtd), &[0.0, 0.0]);
        assert!(bad.exhaustive);
        assert_eq!(bad.points_checked, 4);
        assert_abs_diff_eq!(bad.min_slack, -5.0, epsilon = 1e-12);
        assert_eq!(bad.worst_row, "c");
        let good = certify_box_in_polyhedron(&fr, &alloc(&[(0.0, 2.0), (0.0, 7.0)], Method::So), &[0.0, 0.0]);
        assert!(good.is_robust(1e-6));
    }

    #[test]
    fn sampled_certification_finds_worst_vertex() {
        let v = 12;
        let mut g = vec![1.0; v];
        g[0] = -1.0;
        let fr = FeasibleRegion::from_rows(v, vec![RegionRow::generic("sum", g, vec![0.0; v], 10.0)]).unwrap();
        let a = alloc(&vec![(0.0, 1.0); v], Method::So);
        let c = certify_box_in_polyhedron(&fr, &a, &vec![0.0; v]);
        assert!(!c.exhaustive);
        assert_eq!(c.points_checked, CERTIFY_SAMPLES + 1);
        assert_abs_diff_eq!(c.min_slack, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn lhs_is_stratified_and_in_box() {
        let pts = corner_biased_lhs(&[-1.0, 2.0], &[1.0, 3.0], 100, 3);
        assert_eq!(pts.len(), 100);
        for p in &pts {
            assert!((-1.0..=1.0).contains(&p[0]) && (2.0..=3.0).contains(&p[1]));
        }
        // one sample per stratum in u
        let mut strata: Vec<usize> = pts
            .iter()
            .map(|p| {
                let x = (p[0] + 1.0) / 2.0;
                let u = (1.0 - 2.0 * x).acos() / std::f64::consts::PI;
                ((u * 100.0).floor() as usize).min(99)
            })
            .collect();
        strata.sort();
        assert_eq!(strata, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn draws_are_reproducible_and_in_range() {
        let a = draw_powers(&[0.0, -2.0, 1.0], &[1.0, 2.0, 1.0], 9, 17);
        assert_eq!(a, draw_powers(&[0.0, -2.0, 1.0], &[1.0, 2.0, 1.0], 9, 17));
        assert_ne!(a, draw_powers(&[0.0, -2.0, 1.0], &[1.0, 2.0, 1.0], 9, 18));
        assert!((0.0..=1.0).contains(&a[0]) && (-2.0..=2.0).contains(&a[1]));
        assert_eq!(a[2], 1.0);
    }
}
