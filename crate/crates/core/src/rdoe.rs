//! Robust envelopes from a maximum-volume inscribed superellipsoid.
//!
//! For each region row `g_p p + g_q q <= h` the constraint must hold for every
//! `p = u_c + L y` with `y` in the unit `2^K`-norm ball. The worst case over
//! `y` is replaced by its conic dual (a tower of rotated cones ending in a
//! ball), so the whole robust program is a single SOCP:
//!
//! ```text
//! max  sum_i gamma_i - eps * sum_i delta_i
//! s.t. a_{m,K} + sum_{k<K,i} t_{m,k,i} + g_p,m u_c + g_q,m q <= h_m
//!      (g_p,mi L_i)^2 <= 4 a_{m,1,i} t_{m,1,i}
//!      a_{m,k-1,i}^2  <= 4 a_{m,k,i} t_{m,k,i}          2 <= k <= K-1
//!      ||a_{m,K-1}||  <= a_{m,K}
//!      -delta_i <= u_c,i - status_i w L_i <= delta_i
//!      gamma_i  <= tangent cuts of log L_i
//! ```
//!
//! With `K = 1` the tower vanishes and the row reads
//! `||(g_p,mi L_i)_i|| + g_p,m u_c + g_q,m q <= h_m`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::conic::{
    self, AffineExpr, ConeBlock, ConicBackend, ConicProblem, Sense, SolveOptions, SolveStatus, VarId,
};
use crate::envelope::{CustomerEnvelope, EnvelopeAllocation, Method};
use crate::error::{Error, Result};
use crate::network::Status;
use crate::region::FeasibleRegion;
use crate::superellipsoid::{corner_factor, MAX_SQUARENESS};

pub const DEFAULT_EPS_MD: f64 = 1e3;
pub const DEFAULT_PWL_POINTS: usize = 15;
pub const DEFAULT_PWL_LOWER_KW: f64 = 0.05;
/// Status slack above which a warning is reported.
pub const STATUS_SLACK_WARN_KW: f64 = 1e-3;

/// Tangent cuts of `ln` at a set of anchors. The pointwise minimum of the
/// cuts overestimates `ln` and touches it at each anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlLog {
    anchors: Vec<f64>,
}

impl PwlLog {
    pub fn new(anchors: Vec<f64>) -> Result<Self> {
        if anchors.len() < 2 {
            return Err(Error::InvalidConfig("log surrogate needs at least 2 anchors".into()));
        }
        if anchors.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidConfig("log anchors must be positive and finite".into()));
        }
        if anchors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("log anchors must be strictly increasing".into()));
        }
        Ok(PwlLog { anchors })
    }

    /// `count` geometrically spaced anchors from `lo` to `hi`.
    pub fn log_spaced(count: usize, lo: f64, hi: f64) -> Result<Self> {
        if count < 2 || !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidConfig(format!(
                "cannot place {count} log-spaced anchors on [{lo}, {hi}]"
            )));
        }
        let ratio = (hi / lo).ln() / (count - 1) as f64;
        let mut anchors: Vec<f64> = (0..count).map(|k| lo * (ratio * k as f64).exp()).collect();
        anchors[count - 1] = hi;
        Self::new(anchors)
    }

    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }

    /// `(slope, intercept)` of each cut `gamma <= slope * L + intercept`.
    pub fn cuts(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.anchors.iter().map(|&a| (1.0 / a, a.ln() - 1.0))
    }

    pub fn surrogate(&self, l: f64) -> f64 {
        self.cuts().map(|(s, c)| s * l + c).fold(f64::INFINITY, f64::min)
    }
}

/// `surrogate(L) - ln L`; never negative.
pub fn pwl_gap(l: f64, pwl: &PwlLog) -> f64 {
    pwl.surrogate(l) - l.ln()
}

/// How per-axis log anchors are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PwlAnchors {
    /// `count` log-spaced anchors from `lower_kw` up to the axis span: the
    /// customer's p-limit span, or the region's extent along that axis when
    /// the limits are open.
    LogSpaced { count: usize, lower_kw: f64 },
    /// The same anchors on every axis.
    Fixed(PwlLog),
}

impl Default for PwlAnchors {
    fn default() -> Self {
        PwlAnchors::LogSpaced {
            count: DEFAULT_PWL_POINTS,
            lower_kw: DEFAULT_PWL_LOWER_KW,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdoeConfig {
    pub squareness: u32,
    pub eps_md: f64,
    pub pwl: PwlAnchors,
    /// Overrides the statuses stored in the region.
    pub statuses: Option<Vec<Status>>,
    /// Overrides the reactive bounds stored in the region.
    pub q_bounds: Option<Vec<[f64; 2]>>,
    pub solve: SolveOptions,
}

impl RdoeConfig {
    pub fn new(squareness: u32) -> Self {
        RdoeConfig {
            squareness,
            eps_md: DEFAULT_EPS_MD,
            pwl: PwlAnchors::default(),
            statuses: None,
            q_bounds: None,
            solve: SolveOptions::default(),
        }
    }

    pub fn validate(&self, v: usize) -> Result<()> {
        if self.squareness == 0 || self.squareness > MAX_SQUARENESS {
            return Err(Error::InvalidConfig(format!(
                "squareness K must lie in 1..={MAX_SQUARENESS}, got {}",
                self.squareness
            )));
        }
        if !(self.eps_md > 0.0 && self.eps_md.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps_md must be positive, got {}", self.eps_md)));
        }
        if let Some(s) = &self.statuses {
            if s.len() != v {
                return Err(Error::InvalidConfig(format!("{} statuses for {v} customers", s.len())));
            }
        }
        if let Some(q) = &self.q_bounds {
            if q.len() != v || q.iter().any(|b| !(b[0] <= b[1])) {
                return Err(Error::InvalidConfig("reactive bounds must be v ordered pairs".into()));
            }
        }
        if let PwlAnchors::LogSpaced { count, lower_kw } = self.pwl {
            if count < 2 || !(lower_kw > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "need at least 2 positive log anchors, got {count} from {lower_kw}"
                )));
            }
        }
        Ok(())
    }
}

/// Built program with handles to the variables of interest.
#[derive(Debug, Clone)]
pub struct RdoeProblem {
    pub problem: ConicProblem,
    pub center: Vec<VarId>,
    pub scale: Vec<VarId>,
    pub q: Vec<VarId>,
    pub delta: Vec<VarId>,
    pub gamma: Vec<VarId>,
    pub pwl: Vec<PwlLog>,
    pub squareness: u32,
    /// Number of robust rows (one per region row).
    pub robust_rows: usize,
}

/// Cone block for `x^2 <= 4 y z`, `y, z >= 0`.
pub fn soc_encode(x: AffineExpr, y: &AffineExpr, z: &AffineExpr) -> ConeBlock {
    ConeBlock::rotated("rotated", x, y, z)
}

fn resolved_statuses(fr: &FeasibleRegion, cfg: &RdoeConfig) -> Vec<Status> {
    cfg.statuses.clone().unwrap_or_else(|| fr.statuses())
}

fn resolved_q_bounds(fr: &FeasibleRegion, cfg: &RdoeConfig) -> Vec<[f64; 2]> {
    cfg.q_bounds
        .clone()
        .unwrap_or_else(|| fr.customers.iter().map(|c| c.q_limits_kvar).collect())
}

/// Extent `max p_i - min p_i` of the region along `axis`, reactive powers
/// free within `q_bounds`.
pub fn axis_extent(fr: &FeasibleRegion, axis: usize, q_bounds: &[[f64; 2]]) -> Result<f64> {
    let mut ends = [0.0; 2];
    for (k, sense) in [Sense::Maximize, Sense::Minimize].into_iter().enumerate() {
        let mut lp = ConicProblem::new(sense);
        let p = lp.add_vars("p", fr.v(), f64::NEG_INFINITY, f64::INFINITY);
        let q: Vec<VarId> = q_bounds
            .iter()
            .enumerate()
            .map(|(j, b)| lp.add_var(format!("q[{j}]"), b[0], b[1]))
            .collect();
        for row in &fr.rows {
            let mut e = AffineExpr::new();
            for j in 0..fr.v() {
                e.push(p[j], row.g_p[j]);
                e.push(q[j], row.g_q[j]);
            }
            lp.add_le(row.label.clone(), e, row.h);
        }
        lp.objective = AffineExpr::var(p[axis]);
        let what = format!("extent of axis {} ({})", axis, fr.customers[axis].id);
        ends[k] = lp.objective_value(&conic::solve_lp(&lp)?.into_primal(&what)?);
    }
    Ok(ends[0] - ends[1])
}

fn anchors_for(fr: &FeasibleRegion, cfg: &RdoeConfig, q_bounds: &[[f64; 2]]) -> Result<Vec<PwlLog>> {
    (0..fr.v())
        .map(|i| match &cfg.pwl {
            PwlAnchors::Fixed(pwl) => Ok(pwl.clone()),
            PwlAnchors::LogSpaced { count, lower_kw } => {
                let [lo, hi] = fr.customers[i].p_limits_kw;
                let span = if lo.is_finite() && hi.is_finite() {
                    hi - lo
                } else {
                    axis_extent(fr, i, q_bounds)?
                };
                let top = span.max(2.0 * lower_kw);
                PwlLog::log_spaced(*count, *lower_kw, top)
            }
        })
        .collect()
}

/// Builds the robust SOCP.
pub fn build_rdoe_problem(fr: &FeasibleRegion, cfg: &RdoeConfig) -> Result<RdoeProblem> {
    fr.validate()?;
    let v = fr.v();
    cfg.validate(v)?;
    let k = cfg.squareness as usize;
    let statuses = resolved_statuses(fr, cfg);
    let q_bounds = resolved_q_bounds(fr, cfg);
    let pwl = anchors_for(fr, cfg, &q_bounds)?;
    let w = corner_factor(v, cfg.squareness);

    let mut p = ConicProblem::new(Sense::Maximize);
    let center = p.add_vars("u_c", v, f64::NEG_INFINITY, f64::INFINITY);
    let scale = p.add_vars("L", v, 0.0, f64::INFINITY);
    let q: Vec<VarId> = q_bounds
        .iter()
        .enumerate()
        .map(|(j, b)| p.add_var(format!("q[{j}]"), b[0], b[1]))
        .collect();
    let delta = p.add_vars("delta", v, 0.0, f64::INFINITY);
    let gamma = p.add_vars("gamma", v, f64::NEG_INFINITY, f64::INFINITY);

    for (m, row) in fr.rows.iter().enumerate() {
        // rows are normalized to unit infinity norm; the robust row is
        // positively homogeneous so this changes nothing but conditioning
        let norm = row
            .g_p
            .iter()
            .chain(&row.g_q)
            .fold(0.0f64, |a, g| a.max(g.abs()));
        let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        let mut robust = AffineExpr::new();
        for i in 0..v {
            robust.push(center[i], s * row.g_p[i]);
            robust.push(q[i], s * row.g_q[i]);
        }
        let x = |i: usize| AffineExpr::term(scale[i], s * row.g_p[i]);

        if k == 1 {
            let a = p.add_var(format!("alpha[{m}]"), 0.0, f64::INFINITY);
            robust.push(a, 1.0);
            p.add_soc(format!("ball[{m}]"), AffineExpr::var(a), (0..v).map(x).collect());
        } else {
            // alpha[k][i], t[k][i] for k = 1..K-1
            let alpha: Vec<Vec<VarId>> = (1..k)
                .map(|lvl| p.add_vars(&format!("alpha[{m}][{lvl}]"), v, 0.0, f64::INFINITY))
                .collect();
            let t: Vec<Vec<VarId>> = (1..k)
                .map(|lvl| p.add_vars(&format!("t[{m}][{lvl}]"), v, 0.0, f64::INFINITY))
                .collect();
            let top = p.add_var(format!("alpha[{m}][{k}]"), 0.0, f64::INFINITY);
            robust.push(top, 1.0);
            for level in &t {
                for &ti in level {
                    robust.push(ti, 1.0);
                }
            }
            for i in 0..v {
                let lhs = if row.g_p[i] != 0.0 { x(i) } else { AffineExpr::new() };
                p.cones.push(ConeBlock::rotated(
                    format!("link[{m}][1][{i}]"),
                    lhs,
                    &AffineExpr::var(alpha[0][i]),
                    &AffineExpr::var(t[0][i]),
                ));
            }
            for lvl in 1..k - 1 {
                for i in 0..v {
                    p.cones.push(ConeBlock::rotated(
                        format!("link[{m}][{}][{i}]", lvl + 1),
                        AffineExpr::var(alpha[lvl - 1][i]),
                        &AffineExpr::var(alpha[lvl][i]),
                        &AffineExpr::var(t[lvl][i]),
                    ));
                }
            }
            p.add_soc(
                format!("ball[{m}]"),
                AffineExpr::var(top),
                alpha[k - 2].iter().map(|&a| AffineExpr::var(a)).collect(),
            );
        }
        p.add_le(format!("robust[{m}] {}", row.label), robust, s * row.h);
    }

    for i in 0..v {
        let lam = statuses[i].sign();
        // u_c - lam w L - delta <= 0 and -(u_c - lam w L) - delta <= 0
        let dev = AffineExpr::var(center[i]).add(scale[i], -lam * w);
        let mut upper = dev.clone();
        upper.push(delta[i], -1.0);
        p.add_le(format!("status+[{i}]"), upper, 0.0);
        let mut lower = AffineExpr::new();
        for &(var, c) in &dev.terms {
            lower.push(var, -c);
        }
        lower.push(delta[i], -1.0);
        p.add_le(format!("status-[{i}]"), lower, 0.0);

        for (j, (slope, intercept)) in pwl[i].cuts().enumerate() {
            p.add_le(
                format!("log[{i}][{j}]"),
                AffineExpr::var(gamma[i]).add(scale[i], -slope),
                intercept,
            );
        }
    }

    let mut objective = AffineExpr::new();
    for i in 0..v {
        objective.push(gamma[i], 1.0);
        objective.push(delta[i], -cfg.eps_md);
    }
    p.objective = objective;

    Ok(RdoeProblem {
        problem: p,
        center,
        scale,
        q,
        delta,
        gamma,
        pwl,
        squareness: cfg.squareness,
        robust_rows: fr.m(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdoeSolution {
    pub customer_ids: Vec<String>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub q: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub squareness: u32,
    pub status: SolveStatus,
    pub objective: f64,
    pub solve_time: Duration,
    pub backend: &'static str,
    pub warnings: Vec<String>,
}

/// Builds and solves with the backend selected by `ENVFORGE_BACKEND`.
pub fn solve_rdoe(fr: &FeasibleRegion, cfg: &RdoeConfig) -> Result<RdoeSolution> {
    let built = build_rdoe_problem(fr, cfg)?;
    let report = conic::solve(&built.problem, &cfg.solve)?;
    finish(fr, built, report)
}

pub fn solve_rdoe_with(fr: &FeasibleRegion, cfg: &RdoeConfig, backend: &dyn ConicBackend) -> Result<RdoeSolution> {
    let built = build_rdoe_problem(fr, cfg)?;
    let report = backend.solve(&built.problem, &cfg.solve)?;
    finish(fr, built, report)
}

fn finish(fr: &FeasibleRegion, built: RdoeProblem, report: conic::SolveReport) -> Result<RdoeSolution> {
    let status = report.status;
    let solve_time = report.solve_time;
    let backend = report.backend;
    let x = report.into_primal("robust envelope program")?;
    let pick = |ids: &[VarId]| ids.iter().map(|v| x[v.0]).collect::<Vec<f64>>();
    let delta = pick(&built.delta);
    let warnings = delta
        .iter()
        .zip(&fr.customers)
        .filter(|(d, _)| **d > STATUS_SLACK_WARN_KW)
        .map(|(d, c)| {
            let msg = format!("status of customer `{}` is violated by {d:.4} kW", c.id);
            log::warn!("{msg}");
            msg
        })
        .collect();
    Ok(RdoeSolution {
        customer_ids: fr.customers.iter().map(|c| c.id.clone()).collect(),
        center: pick(&built.center),
        scale: pick(&built.scale).into_iter().map(|l| l.max(0.0)).collect(),
        q: pick(&built.q),
        delta,
        gamma: pick(&built.gamma),
        squareness: built.squareness,
        status,
        objective: built.problem.objective_value(&x),
        solve_time,
        backend,
        warnings,
    })
}

/// Box `u_c ± L w` inscribed in the solved superellipsoid.
pub fn extract_envelopes(sol: &RdoeSolution) -> EnvelopeAllocation {
    let v = sol.center.len();
    let w = corner_factor(v, sol.squareness);
    let customers = sol
        .customer_ids
        .iter()
        .zip(sol.center.iter().zip(&sol.scale))
        .map(|(id, (&c, &l))| CustomerEnvelope {
            id: id.clone(),
            lower_kw: c - l * w,
            upper_kw: c + l * w,
        })
        .collect();
    let mut a = EnvelopeAllocation::new(
        if sol.squareness == 1 { Method::Ellipsoid } else { Method::Sesd },
        customers,
        sol.q.clone(),
    );
    a.total_doe_kw = 2.0 * w * sol.scale.iter().sum::<f64>();
    a.squareness = Some(sol.squareness);
    a.objective = Some(sol.objective);
    a.solve_time_s = sol.solve_time.as_secs_f64();
    a.solver_status = sol.status.to_string();
    a.notes = sol.warnings.clone();
    a
}
