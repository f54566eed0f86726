use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use envforge::region::{ActiveCustomer, RegionRow};
use envforge::superellipsoid::relative_gap;
use envforge::{EnvelopeAllocation, FeasibleRegion, Status};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn envforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_envforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn solve(net: &str, extra: &[&str], out: &Path) -> EnvelopeAllocation {
    let net = fixture(net);
    let mut args = vec!["solve", "--network", net.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = envforge(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let written = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("wrote ").map(PathBuf::from))
        .expect("solve reports the result file");
    EnvelopeAllocation::load(written).unwrap()
}

/// Data rows of a rendered table: everything after the dashed rule up to
/// the first blank line.
fn table_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip_while(|l| !l.starts_with('-'))
        .skip(1)
        .take_while(|l| !l.trim().is_empty())
        .map(|l| l.split("  ").map(str::trim).filter(|c| !c.is_empty()).map(String::from).collect())
        .collect()
}

#[test]
fn theta_picks_k7_on_the_two_customer_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let a = solve("twb-2bus.json", &["--method", "sesd", "--theta", "0.01"], dir.path());
    assert_eq!(a.squareness, Some(7));
    // result files re-parse into the same allocation
    let again = EnvelopeAllocation::from_json(&a.to_json()).unwrap();
    assert_eq!(again, a);
}

#[test]
fn so_above_the_cap_fails_citing_exponential_growth() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture("feeder-20.json");
    let o = envforge(&["solve", "--network", net.to_str().unwrap(), "--method", "so", "--out", dir.path().to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("2^20"), "{}", stderr(&o));
}

#[test]
fn larger_k_gives_more_but_never_beats_so() {
    let dir = tempfile::tempdir().unwrap();
    for net in ["twb-2bus.json", "feeder-4bus.json"] {
        let k2 = solve(net, &["--method", "sesd", "--K", "2"], dir.path()).total_doe_kw;
        let k7 = solve(net, &["--method", "sesd", "--K", "7"], dir.path()).total_doe_kw;
        let so = solve(net, &["--method", "so"], dir.path()).total_doe_kw;
        assert!(k7 >= k2 - 1e-6 && k7 <= so + 1e-6 && k2 <= so + 1e-6, "{net}: {k2} {k7} {so}");
    }
}

#[test]
fn sweep_gap_column_is_the_formula() {
    let net = fixture("twb-2bus.json");
    let o = envforge(&["sweep-k", "--network", net.to_str().unwrap(), "--k-min", "1", "--k-max", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = table_rows(&stdout(&o));
    assert_eq!(rows.len(), 7);
    let gaps: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    for (k, g) in (1..=7).zip(&gaps) {
        assert_eq!(*g, format!("{:.6}", relative_gap(2, k)).parse::<f64>().unwrap());
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    assert!(*gaps.last().unwrap() <= 0.01);
}

#[test]
fn sweep_at_k10_on_500_customers_is_within_one_percent() {
    let v = 500;
    let customers = (0..v)
        .map(|i| ActiveCustomer {
            id: format!("c{i}"),
            p_limits_kw: [-1.0, 1.0],
            q_limits_kvar: [0.0, 0.0],
            status: Status::Unknown,
        })
        .collect();
    let rows = vec![
        RegionRow::generic("sum_up", vec![1.0; v], vec![0.0; v], 100.0),
        RegionRow::generic("sum_down", vec![-1.0; v], vec![0.0; v], 100.0),
    ];
    let fr = FeasibleRegion { customers, rows };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("region.json");
    std::fs::write(&path, fr.to_json()).unwrap();
    let o = envforge(&["sweep-k", "--region", path.to_str().unwrap(), "--k-min", "10", "--k-max", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = table_rows(&stdout(&o));
    let gap: f64 = rows[0][2].parse().unwrap();
    assert!(gap <= 0.01, "{gap}");
}

#[test]
fn empty_sweep_range_is_a_usage_error() {
    let net = fixture("twb-2bus.json");
    let o = envforge(&["sweep-k", "--network", net.to_str().unwrap(), "--k-min", "4", "--k-max", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validation_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let net = fixture("twb-2bus.json");
    let net = net.to_str().unwrap();
    solve("twb-2bus.json", &["--method", "sesd", "--theta", "0.01"], dir.path());
    solve("twb-2bus.json", &["--method", "dmtd"], dir.path());
    let sesd = dir.path().join("sesd-k7.json");
    let dmtd = dir.path().join("dmtd.json");

    let o = envforge(&["validate", "--network", net, "--allocation", sesd.to_str().unwrap(), "--draws", "10000", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(dir.path().join("report.json").exists());
    let table = std::fs::read_to_string(dir.path().join("draws.csv")).unwrap();
    assert_eq!(table.lines().count(), 10_001);

    let o = envforge(&["validate", "--network", net, "--allocation", dmtd.to_str().unwrap(), "--draws", "10000"]);
    assert_eq!(o.status.code(), Some(1));
    let violations: usize = table_rows(&stdout(&o))[0][2].parse().unwrap();
    assert!(violations >= 1);

    let o = envforge(&["validate", "--network", net, "--allocation", sesd.to_str().unwrap(), "--draws", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_orders_the_methods() {
    let net = fixture("twb-2bus.json");
    let o = envforge(&["compare", "--network", net.to_str().unwrap(), "--methods", "dmtd,so,sesd:7,sesd:2,ellipsoid"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = table_rows(&stdout(&o));
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["dmtd", "so", "sesd (K=7)", "sesd (K=2)", "ellipsoid"]);
    let totals: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(totals.windows(2).all(|w| w[0] >= w[1] - 1e-4), "{totals:?}");
    // gap column only on superellipsoid rows
    assert_eq!(rows[2].len(), 5);
    assert_eq!(rows[0].len(), 4);
}

#[test]
fn compare_with_one_method_prints_one_row() {
    let net = fixture("feeder-4bus.json");
    let o = envforge(&["compare", "--network", net.to_str().unwrap(), "--methods", "dmtd"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(table_rows(&stdout(&o)).len(), 1);
}

#[test]
fn k_and_theta_together_are_rejected() {
    let net = fixture("twb-2bus.json");
    let o = envforge(&["solve", "--network", net.to_str().unwrap(), "--method", "sesd", "--K", "3", "--theta", "0.01"]);
    assert_eq!(o.status.code(), Some(2));
}
