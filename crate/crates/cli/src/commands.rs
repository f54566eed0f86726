use std::path::{Path, PathBuf};
use std::time::Instant;

use envforge::baselines::{deterministic_doe, so_enumeration, BaselineConfig};
use envforge::rdoe::{extract_envelopes, solve_rdoe, PwlAnchors, RdoeConfig, DEFAULT_PWL_LOWER_KW};
use envforge::region::{feasible_region_from_network, RegionOptions};
use envforge::superellipsoid::{relative_gap, select_k, MAX_SQUARENESS};
use envforge::validation::{monte_carlo_validate, MonteCarloOptions};
use envforge::{EnvelopeAllocation, FeasibleRegion, Method, NetworkModel};
use log::info;

use crate::table::Table;
use crate::{Command, Failure, InputArgs, SolverArgs};

type Outcome<T> = Result<T, Failure>;

const DEFAULT_THETA: f64 = 0.01;

/// How the squareness of a superellipsoid run is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Squareness {
    Fixed(u32),
    Target(f64),
}

/// Everything one method run needs besides the region.
#[derive(Debug, Clone)]
struct RunManifest {
    method: Method,
    squareness: Squareness,
    eps_md: f64,
    pwl_points: usize,
    so_cap: usize,
}

impl RunManifest {
    fn new(method: Method, solver: &SolverArgs) -> Outcome<Self> {
        let squareness = match (solver.k, solver.theta) {
            (Some(k), None) => Squareness::Fixed(k),
            (None, Some(t)) => Squareness::Target(t),
            (None, None) => Squareness::Target(DEFAULT_THETA),
            (Some(_), Some(_)) => return Err(Failure::usage("give either --K or --theta, not both")),
        };
        if let Squareness::Target(t) = squareness {
            if !(t > 0.0 && t < 1.0) {
                return Err(Failure::usage(format!("--theta must lie in (0, 1), got {t}")));
            }
        }
        Ok(RunManifest {
            method,
            squareness,
            eps_md: solver.eps_md,
            pwl_points: solver.pwl_points,
            so_cap: solver.so_cap,
        })
    }

    fn squareness_for(&self, v: usize) -> Outcome<Option<u32>> {
        Ok(match self.method {
            Method::Sesd => Some(match self.squareness {
                Squareness::Fixed(k) => k,
                Squareness::Target(t) => select_k(v, t)?,
            }),
            Method::Ellipsoid => Some(1),
            _ => None,
        })
    }

    fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            so_cap: self.so_cap,
            eps_md: self.eps_md,
            ..Default::default()
        }
    }

    fn rdoe_config(&self, k: u32) -> RdoeConfig {
        let mut cfg = RdoeConfig::new(k);
        cfg.eps_md = self.eps_md;
        cfg.pwl = PwlAnchors::LogSpaced {
            count: self.pwl_points,
            lower_kw: DEFAULT_PWL_LOWER_KW,
        };
        cfg
    }

    fn run(&self, fr: &FeasibleRegion) -> Outcome<EnvelopeAllocation> {
        let start = Instant::now();
        let mut a = match self.method {
            Method::Dmtd => deterministic_doe(fr, &self.baseline_config())?,
            Method::So => so_enumeration(fr, &self.baseline_config())?,
            Method::Ellipsoid => extract_envelopes(&solve_rdoe(fr, &self.rdoe_config(1))?),
            Method::Sesd => {
                let k = self.squareness_for(fr.v())?.expect("sesd has a squareness");
                extract_envelopes(&solve_rdoe(fr, &self.rdoe_config(k))?)
            }
        };
        a.solve_time_s = start.elapsed().as_secs_f64();
        for note in &a.notes {
            log::warn!("{}: {note}", self.method);
        }
        Ok(a)
    }
}

fn load_network(path: &Path, vmin: Option<f64>, vmax: Option<f64>) -> Outcome<NetworkModel> {
    let mut net = envforge::load_network(path)?;
    if let Some(v) = vmin {
        net.limits.v_min_pu = v;
    }
    if let Some(v) = vmax {
        net.limits.v_max_pu = v;
    }
    if !(net.limits.v_min_pu < net.limits.v_max_pu) {
        return Err(Failure::usage(format!(
            "voltage limits [{}, {}] are not ordered",
            net.limits.v_min_pu, net.limits.v_max_pu
        )));
    }
    Ok(net)
}

fn load_region(input: &InputArgs) -> Outcome<FeasibleRegion> {
    match (&input.source.network, &input.source.region) {
        (Some(path), None) => {
            let net = load_network(path, input.vmin, input.vmax)?;
            let (fr, _) = feasible_region_from_network(&net, &RegionOptions::default())?;
            info!("region from {}: {} customers, {} rows", path.display(), fr.v(), fr.m());
            Ok(fr)
        }
        (None, Some(path)) => {
            if input.vmin.is_some() || input.vmax.is_some() {
                return Err(Failure::usage("--vmin/--vmax only apply with --network"));
            }
            Ok(FeasibleRegion::load(path)?)
        }
        _ => Err(Failure::usage("give exactly one of --network or --region")),
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Outcome<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn result_name(a: &EnvelopeAllocation) -> String {
    match (a.method, a.squareness) {
        (Method::Sesd, Some(k)) => format!("sesd-k{k}.json"),
        (m, _) => format!("{m}.json"),
    }
}

fn label(a: &EnvelopeAllocation) -> String {
    match (a.method, a.squareness) {
        (Method::Sesd, Some(k)) => format!("sesd (K={k})"),
        (m, _) => m.to_string(),
    }
}

pub fn run(command: Command) -> Outcome<u8> {
    match command {
        Command::Solve { input, solver, method, out } => solve(&input, &solver, method, &out),
        Command::SweepK { input, solver, k_min, k_max, out } => sweep_k(&input, &solver, k_min, k_max, out.as_deref()),
        Command::Validate { network, allocation, draws, seed, budget, vmin, vmax, out } => {
            validate(&network, &allocation, draws, seed, budget, vmin, vmax, out.as_deref())
        }
        Command::Compare { input, solver, methods, out } => compare(&input, &solver, &methods, out.as_deref()),
    }
}

fn solve(input: &InputArgs, solver: &SolverArgs, method: Method, out: &Path) -> Outcome<u8> {
    let manifest = RunManifest::new(method, solver)?;
    let fr = load_region(input)?;
    let a = manifest.run(&fr)?;
    let path = write_file(out, &result_name(&a), &a.to_json())?;

    let mut t = Table::new(&["method", "total DOE (kW)", "time (s)"]);
    t.push(vec![label(&a), format!("{:.4}", a.total_doe_kw), format!("{:.3}", a.solve_time_s)]);
    print!("{}", t.render());
    let mut env = Table::new(&["customer", "lower (kW)", "upper (kW)", "q (kvar)"]);
    for (c, q) in a.customers.iter().zip(&a.q_dispatch_kvar) {
        env.push(vec![c.id.clone(), format!("{:.4}", c.lower_kw), format!("{:.4}", c.upper_kw), format!("{q:.4}")]);
    }
    print!("\n{}", env.render());
    println!("\nwrote {}", path.display());
    Ok(0)
}

fn sweep_k(input: &InputArgs, solver: &SolverArgs, k_min: u32, k_max: u32, out: Option<&Path>) -> Outcome<u8> {
    if k_min == 0 || k_min > k_max || k_max > MAX_SQUARENESS {
        return Err(Failure::usage(format!(
            "squareness range {k_min}..={k_max} is empty or outside 1..={MAX_SQUARENESS}"
        )));
    }
    let base = RunManifest::new(Method::Sesd, solver)?;
    let fr = load_region(input)?;
    let mut t = Table::new(&["K", "total DOE (kW)", "gap", "time (s)"]);
    for k in k_min..=k_max {
        let manifest = RunManifest {
            squareness: Squareness::Fixed(k),
            ..base.clone()
        };
        let a = manifest.run(&fr)?;
        t.push(vec![
            k.to_string(),
            format!("{:.4}", a.total_doe_kw),
            format!("{:.6}", relative_gap(fr.v(), k)),
            format!("{:.3}", a.solve_time_s),
        ]);
    }
    print!("{}", t.render());
    if let Some(dir) = out {
        let path = write_file(dir, "sweep.csv", &t.to_csv())?;
        println!("\nwrote {}", path.display());
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn validate(
    network: &Path,
    allocation: &Path,
    draws: usize,
    seed: u64,
    budget: f64,
    vmin: Option<f64>,
    vmax: Option<f64>,
    out: Option<&Path>,
) -> Outcome<u8> {
    if draws == 0 {
        return Err(Failure::usage("--draws must be at least 1"));
    }
    if !(budget >= 0.0) {
        return Err(Failure::usage(format!("--budget must be non-negative, got {budget}")));
    }
    let net = load_network(network, vmin, vmax)?;
    let a = EnvelopeAllocation::load(allocation)?;
    let opts = MonteCarloOptions {
        draws,
        seed,
        threshold_pu: budget,
        ..Default::default()
    };
    let rep = monte_carlo_validate(&net, &a, &opts)?;

    let mut t = Table::new(&["method", "draws", "violations", "diverged", "max overshoot (p.u.)", "raw max overshoot (p.u.)"]);
    t.push(vec![
        label(&a),
        rep.draws.to_string(),
        rep.violations.to_string(),
        rep.diverged.to_string(),
        format!("{:.3e}", rep.max_overshoot_pu),
        format!("{:.3e}", rep.max_raw_overshoot_pu),
    ]);
    print!("{}", t.render());
    println!("violation threshold {budget} p.u., seed {seed}");
    if let Some(dir) = out {
        write_file(dir, "report.json", &rep.to_json())?;
        let path = write_file(dir, "draws.csv", &rep.to_table())?;
        println!("wrote {}", path.display());
    }
    // a diverged draw cannot be vouched for either
    Ok(if rep.violations == 0 && rep.diverged == 0 { 0 } else { 1 })
}

fn parse_entry(entry: &str, solver: &SolverArgs) -> Outcome<RunManifest> {
    let (name, k) = match entry.split_once(':') {
        Some((name, k)) => {
            let k: u32 = k
                .parse()
                .map_err(|_| Failure::usage(format!("bad squareness in `{entry}`")))?;
            (name, Some(k))
        }
        None => (entry, None),
    };
    let method: Method = name.trim().parse().map_err(|e: envforge::Error| Failure::usage(e.to_string()))?;
    let mut manifest = RunManifest::new(method, solver)?;
    if let Some(k) = k {
        if method != Method::Sesd {
            return Err(Failure::usage(format!("only sesd takes a squareness, got `{entry}`")));
        }
        manifest.squareness = Squareness::Fixed(k);
    }
    Ok(manifest)
}

fn compare(input: &InputArgs, solver: &SolverArgs, methods: &[String], out: Option<&Path>) -> Outcome<u8> {
    if methods.is_empty() {
        return Err(Failure::usage("--methods is empty"));
    }
    let manifests = methods
        .iter()
        .map(|m| parse_entry(m, solver))
        .collect::<Outcome<Vec<_>>>()?;
    let fr = load_region(input)?;

    // methods run side by side; rows keep the order they were asked in
    let results: Vec<Outcome<EnvelopeAllocation>> = std::thread::scope(|s| {
        let handles: Vec<_> = manifests.iter().map(|m| s.spawn(|| m.run(&fr))).collect();
        handles.into_iter().map(|h| h.join().expect("method thread panicked")).collect()
    });

    let mut t = Table::new(&["method", "total DOE (kW)", "time (s)", "gap", "status"]);
    let mut failed = false;
    for (m, r) in manifests.iter().zip(&results) {
        match r {
            Ok(a) => t.push(vec![
                label(a),
                format!("{:.4}", a.total_doe_kw),
                format!("{:.3}", a.solve_time_s),
                match (a.method, a.squareness) {
                    (Method::Sesd, Some(k)) => format!("{:.6}", relative_gap(fr.v(), k)),
                    _ => String::new(),
                },
                a.solver_status.clone(),
            ]),
            Err(e) => {
                failed = true;
                t.push(vec![m.method.to_string(), "-".into(), "-".into(), String::new(), format!("failed: {}", e.message)]);
            }
        }
    }
    print!("{}", t.render());
    if let Some(dir) = out {
        for a in results.iter().flatten() {
            write_file(dir, &result_name(a), &a.to_json())?;
        }
        let path = write_file(dir, "compare.csv", &t.to_csv())?;
        println!("\nwrote {}", path.display());
    }
    Ok(if failed { 3 } else { 0 })
}
