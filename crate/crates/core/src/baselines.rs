//! Comparison methods: deterministic single-point allocation, globally
//! optimal box by vertex enumeration, and the inscribed-ellipsoid box.

use std::time::Instant;

use rayon::prelude::*;

use crate::conic::{solve_lp, AffineExpr, ConicProblem, Sense, VarId};
use crate::envelope::{CustomerEnvelope, EnvelopeAllocation, Method};
use crate::error::{Error, Result};
use crate::network::Status;
use crate::rdoe::{extract_envelopes, solve_rdoe, RdoeConfig, DEFAULT_EPS_MD};
use crate::region::FeasibleRegion;

pub const DEFAULT_SO_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub so_cap: usize,
    pub eps_md: f64,
    /// Overrides the statuses stored in the region.
    pub statuses: Option<Vec<Status>>,
    /// Overrides the reactive bounds stored in the region.
    pub q_bounds: Option<Vec<[f64; 2]>>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            so_cap: DEFAULT_SO_CAP,
            eps_md: DEFAULT_EPS_MD,
            statuses: None,
            q_bounds: None,
        }
    }
}

impl BaselineConfig {
    fn statuses(&self, fr: &FeasibleRegion) -> Result<Vec<Status>> {
        let s = self.statuses.clone().unwrap_or_else(|| fr.statuses());
        if s.len() != fr.v() {
            return Err(Error::InvalidConfig(format!("{} statuses for {} customers", s.len(), fr.v())));
        }
        Ok(s)
    }

    fn q_bounds(&self, fr: &FeasibleRegion) -> Result<Vec<[f64; 2]>> {
        let q = self
            .q_bounds
            .clone()
            .unwrap_or_else(|| fr.customers.iter().map(|c| c.q_limits_kvar).collect());
        if q.len() != fr.v() || q.iter().any(|b| !(b[0] <= b[1])) {
            return Err(Error::InvalidConfig("reactive bounds must be v ordered pairs".into()));
        }
        Ok(q)
    }
}

fn add_q(lp: &mut ConicProblem, bounds: &[[f64; 2]]) -> Vec<VarId> {
    bounds
        .iter()
        .enumerate()
        .map(|(j, b)| lp.add_var(format!("q[{j}]"), b[0], b[1]))
        .collect()
}

/// Deterministic allocation at one operating point.
///
/// Maximizes `sum_i status_i p_i` at a single feasible `(p, q)`. Customers
/// with unknown status get a symmetric half-width `s_i`: the two points that
/// differ only in `p_i = ±s_i` must both be feasible. Envelopes are
/// `[0, p_i]` or `[p_i, 0]` by sign, and `[-s_i, s_i]` for unknown status.
pub fn deterministic_doe(fr: &FeasibleRegion, cfg: &BaselineConfig) -> Result<EnvelopeAllocation> {
    fr.validate()?;
    let start = Instant::now();
    let statuses = cfg.statuses(fr)?;
    let q_bounds = cfg.q_bounds(fr)?;
    let v = fr.v();

    let mut lp = ConicProblem::new(Sense::Maximize);
    let p = lp.add_vars("p", v, f64::NEG_INFINITY, f64::INFINITY);
    let q = add_q(&mut lp, &q_bounds);
    let unknown: Vec<usize> = (0..v).filter(|&i| statuses[i] == Status::Unknown).collect();
    let sides: &[f64] = if unknown.is_empty() { &[1.0] } else { &[1.0, -1.0] };
    for (m, row) in fr.rows.iter().enumerate() {
        for &side in sides {
            let mut e = AffineExpr::new();
            for i in 0..v {
                // unknown-status customers move with p_i = side * s_i
                e.push(p[i], if statuses[i] == Status::Unknown { side } else { 1.0 } * row.g_p[i]);
                e.push(q[i], row.g_q[i]);
            }
            lp.add_le(format!("{}[{m}]{side:+}", row.label), e, row.h);
        }
    }
    for &i in &unknown {
        lp.add_le(format!("half-width[{i}]"), AffineExpr::term(p[i], -1.0), 0.0);
    }
    let mut objective = AffineExpr::new();
    for i in 0..v {
        let weight = match statuses[i] {
            Status::Unknown => 2.0,
            s => s.sign(),
        };
        objective.push(p[i], weight);
    }
    lp.objective = objective;

    let report = solve_lp(&lp)?;
    let objective = report.objective;
    let x = report.into_primal("deterministic allocation")?;
    let customers = fr
        .customers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let pi = x[p[i].0];
            let (lower_kw, upper_kw) = match statuses[i] {
                Status::Unknown => (-pi, pi),
                _ => (pi.min(0.0), pi.max(0.0)),
            };
            CustomerEnvelope {
                id: c.id.clone(),
                lower_kw,
                upper_kw,
            }
        })
        .collect();
    let mut a = EnvelopeAllocation::new(Method::Dmtd, customers, q.iter().map(|v| x[v.0]).collect());
    a.objective = objective;
    a.solve_time_s = start.elapsed().as_secs_f64();
    a.notes.push(
        "single operating point maximizing the status-signed power sum; not robust".into(),
    );
    Ok(a)
}

/// Coefficient pattern of one vertex constraint: for each customer in the
/// row's support, whether the vertex sits on the upper end.
type VertexKey = Vec<(usize, bool)>;

/// Globally optimal box by enumerating its `2^v` vertices.
///
/// LP over `(lower, upper, q)`: maximize `sum(upper - lower)` minus the
/// status penalty, with every box vertex constrained into the region. The
/// penalty is `|lower_i|` for importers, `|upper_i|` for exporters and
/// `|(lower_i + upper_i) / 2|` for unknown status.
pub fn so_enumeration(fr: &FeasibleRegion, cfg: &BaselineConfig) -> Result<EnvelopeAllocation> {
    fr.validate()?;
    let v = fr.v();
    if v > cfg.so_cap {
        return Err(Error::TooManyCustomers { v, cap: cfg.so_cap });
    }
    let start = Instant::now();
    let statuses = cfg.statuses(fr)?;
    let q_bounds = cfg.q_bounds(fr)?;

    let mut lp = ConicProblem::new(Sense::Maximize);
    let lower = lp.add_vars("lower", v, f64::NEG_INFINITY, f64::INFINITY);
    let upper = lp.add_vars("upper", v, f64::NEG_INFINITY, f64::INFINITY);
    let q = add_q(&mut lp, &q_bounds);
    let pen = lp.add_vars("penalty", v, 0.0, f64::INFINITY);

    for i in 0..v {
        lp.add_le(
            format!("order[{i}]"),
            AffineExpr::var(lower[i]).add(upper[i], -1.0),
            0.0,
        );
        let dev = match statuses[i] {
            Status::Import => AffineExpr::var(lower[i]),
            Status::Export => AffineExpr::var(upper[i]),
            Status::Unknown => AffineExpr::term(lower[i], 0.5).add(upper[i], 0.5),
        };
        for s in [1.0, -1.0] {
            let mut e = AffineExpr::new();
            for &(var, c) in &dev.terms {
                e.push(var, s * c);
            }
            e.push(pen[i], -1.0);
            lp.add_le(format!("status{s:+}[{i}]"), e, 0.0);
        }
    }

    // vertex rows per region row; vertices that differ only off the row's
    // support give the same row, so only the support is enumerated.
    // Generated in parallel, appended in a fixed order.
    let per_row: Vec<Vec<VertexKey>> = fr
        .rows
        .par_iter()
        .map(|row| {
            let support: Vec<usize> = (0..v).filter(|&i| row.g_p[i] != 0.0).collect();
            (0u64..(1u64 << support.len()))
                .map(|mask| {
                    support
                        .iter()
                        .enumerate()
                        .map(|(bit, &i)| (i, mask >> bit & 1 == 1))
                        .collect::<VertexKey>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut vertex_rows = 0usize;
    for (m, (row, keys)) in fr.rows.iter().zip(&per_row).enumerate() {
        for (n, key) in keys.iter().enumerate() {
            let mut e = AffineExpr::new();
            for &(i, at_upper) in key {
                e.push(if at_upper { upper[i] } else { lower[i] }, row.g_p[i]);
            }
            for i in 0..v {
                e.push(q[i], row.g_q[i]);
            }
            lp.add_le(format!("vertex[{m}][{n}]"), e, row.h);
            vertex_rows += 1;
        }
    }
    log::debug!("SO baseline: {vertex_rows} vertex rows for {} region rows", fr.m());

    let mut objective = AffineExpr::new();
    for i in 0..v {
        objective.push(upper[i], 1.0);
        objective.push(lower[i], -1.0);
        objective.push(pen[i], -cfg.eps_md);
    }
    lp.objective = objective;

    let report = solve_lp(&lp)?;
    let objective = report.objective;
    let x = report.into_primal("vertex-enumeration box")?;
    let customers = fr
        .customers
        .iter()
        .enumerate()
        .map(|(i, c)| CustomerEnvelope {
            id: c.id.clone(),
            lower_kw: x[lower[i].0],
            upper_kw: x[upper[i].0].max(x[lower[i].0]),
        })
        .collect();
    let mut a = EnvelopeAllocation::new(Method::So, customers, q.iter().map(|v| x[v.0]).collect());
    a.objective = objective;
    a.solve_time_s = start.elapsed().as_secs_f64();
    Ok(a)
}

/// Box inscribed in the maximum-volume ellipsoid (`K = 1`).
pub fn ellipsoid_rdoe(fr: &FeasibleRegion, cfg: &BaselineConfig) -> Result<EnvelopeAllocation> {
    let mut rcfg = RdoeConfig::new(1);
    rcfg.eps_md = cfg.eps_md;
    rcfg.statuses = cfg.statuses.clone();
    rcfg.q_bounds = cfg.q_bounds.clone();
    let sol = solve_rdoe(fr, &rcfg)?;
    let mut a = extract_envelopes(&sol);
    a.method = Method::Ellipsoid;
    a.notes.push(format!(
        "ellipsoid centre {:?} kW, semi-axes {:?} kW",
        sol.center, sol.scale
    ));
    Ok(a)
}
