mod common;

use common::{random_region, random_statuses};
use envforge::baselines::{so_enumeration, BaselineConfig};
use envforge::conic::{parse_text, solve, write_text, SolveStatus};
use envforge::rdoe::{
    build_rdoe_problem, extract_envelopes, solve_rdoe, PwlAnchors, PwlLog, RdoeConfig,
};
use envforge::region::{feasible_region_from_network, RegionRow};
use envforge::superellipsoid::select_k;
use envforge::validation::certify_box_in_polyhedron;
use envforge::FeasibleRegion;

fn fixed_anchors(scale: f64) -> PwlAnchors {
    PwlAnchors::Fixed(PwlLog::log_spaced(15, 0.05 * scale, 20.0 * scale).unwrap())
}

#[test]
fn scaling_the_power_axes_scales_the_envelopes() {
    for seed in 0..4 {
        let fr = random_region(seed, 3, 3);
        let c = 2.5;
        let mut wider = fr.clone();
        wider.rows.iter_mut().for_each(|r| r.h *= c);
        let mut cfg = RdoeConfig::new(4);
        cfg.pwl = fixed_anchors(1.0);
        let a = extract_envelopes(&solve_rdoe(&fr, &cfg).unwrap());
        cfg.pwl = fixed_anchors(c);
        let b = extract_envelopes(&solve_rdoe(&wider, &cfg).unwrap());
        for (x, y) in a.customers.iter().zip(&b.customers) {
            assert!((c * x.lower_kw - y.lower_kw).abs() < 1e-4, "{x:?} vs {y:?}");
            assert!((c * x.upper_kw - y.upper_kw).abs() < 1e-4, "{x:?} vs {y:?}");
        }
    }
}

#[test]
fn rescaling_rows_leaves_the_solution_alone() {
    let fr = random_region(7, 3, 4);
    let a = solve_rdoe(&fr, &RdoeConfig::new(3)).unwrap();
    let b = solve_rdoe(&fr.scaled(40.0), &RdoeConfig::new(3)).unwrap();
    for i in 0..3 {
        assert!((a.scale[i] - b.scale[i]).abs() < 1e-5);
        assert!((a.center[i] - b.center[i]).abs() < 1e-5);
    }
}

#[test]
fn relabelling_customers_permutes_the_solution() {
    let perm = [2usize, 0, 3, 1];
    for seed in 10..13 {
        let fr = random_region(seed, 4, 4).with_statuses(&random_statuses(seed, 4));
        let rows = fr
            .rows
            .iter()
            .map(|r| {
                RegionRow::generic(
                    r.label.clone(),
                    perm.iter().map(|&j| r.g_p[j]).collect(),
                    vec![0.0; 4],
                    r.h,
                )
            })
            .collect();
        let statuses: Vec<_> = perm.iter().map(|&j| fr.customers[j].status).collect();
        let permuted = FeasibleRegion::from_rows(4, rows).unwrap().with_statuses(&statuses);
        let mut cfg = RdoeConfig::new(3);
        cfg.pwl = fixed_anchors(1.0);
        let a = solve_rdoe(&fr, &cfg).unwrap();
        let b = solve_rdoe(&permuted, &cfg).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-6);
        for (i, &j) in perm.iter().enumerate() {
            assert!((b.scale[i] - a.scale[j]).abs() < 1e-4);
            assert!((b.center[i] - a.center[j]).abs() < 1e-4);
        }
    }
}

#[test]
fn random_allocations_are_certified_and_bounded_by_so() {
    for seed in 20..30 {
        let v = 2 + (seed as usize % 4);
        let fr = random_region(seed, v, 3).with_statuses(&random_statuses(seed, v));
        let k = select_k(v, 0.01).unwrap();
        let a = extract_envelopes(&solve_rdoe(&fr, &RdoeConfig::new(k)).unwrap());
        let cert = certify_box_in_polyhedron(&fr, &a, &a.q_dispatch_kvar);
        assert!(cert.exhaustive && cert.is_robust(1e-6), "seed {seed}: {cert:?}");
        let so = so_enumeration(&fr, &BaselineConfig::default()).unwrap();
        assert!(a.total_doe_kw <= so.total_doe_kw + 1e-6, "seed {seed}");
    }
}

#[test]
fn larger_squareness_never_shrinks_the_fixture_totals() {
    for name in ["twb-2bus.json", "feeder-4bus.json"] {
        let net = common::network(name);
        let (fr, _) = feasible_region_from_network(&net, &Default::default()).unwrap();
        let mut last = 0.0;
        for k in 1..=7 {
            let total = extract_envelopes(&solve_rdoe(&fr, &RdoeConfig::new(k)).unwrap()).total_doe_kw;
            assert!(total >= last - 1e-6, "{name}: K = {k} gives {total} < {last}");
            last = total;
        }
    }
}

#[test]
fn text_round_trip_solves_to_the_same_optimum() {
    let fr = random_region(40, 3, 4);
    let built = build_rdoe_problem(&fr, &RdoeConfig::new(3)).unwrap();
    let text = write_text(&built.problem);
    let reparsed = parse_text(&text).unwrap();
    let a = solve(&built.problem, &Default::default()).unwrap();
    let b = solve(&reparsed, &Default::default()).unwrap();
    assert_eq!(a.status, SolveStatus::Optimal);
    assert!((a.objective.unwrap() - b.objective.unwrap()).abs() < 1e-9);
}
