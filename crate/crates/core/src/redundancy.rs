//! Redundant-row removal for feasible regions.

use crate::conic::{solve_lp, AffineExpr, ConicProblem, Sense, SolveStatus, VarId};
use crate::error::{Error, Result};
use crate::region::FeasibleRegion;

/// How reactive powers enter the redundancy LPs.
#[derive(Debug, Clone, PartialEq)]
pub enum QHandling {
    /// Reactive powers fixed at the given dispatch.
    Fixed(Vec<f64>),
    /// Reactive powers free within each customer's q-limits.
    Free,
}

/// Tolerance on `max_row - h`, measured after scaling the row to unit
/// infinity norm.
pub const REDUNDANCY_TOL: f64 = 1e-9;

/// Drops every row implied by the others.
///
/// Rows are visited in order; row `i` is dropped when maximizing its left-hand
/// side over the rows still kept (excluding `i`) cannot exceed `h_i`. Exact
/// duplicates therefore lose all copies but the last one visited.
pub fn remove_redundant_rows(fr: &FeasibleRegion, q: &QHandling) -> Result<FeasibleRegion> {
    fr.validate()?;
    let v = fr.v();
    if let QHandling::Fixed(q) = q {
        if q.len() != v {
            return Err(Error::InvalidConfig(format!(
                "fixed reactive dispatch has {} entries for {v} customers",
                q.len()
            )));
        }
    }
    let mut keep = vec![true; fr.m()];
    // an empty region would make every row look necessary
    if fr.m() > 0 {
        let mut lp = ConicProblem::new(Sense::Maximize);
        let p = lp.add_vars("p", v, f64::NEG_INFINITY, f64::INFINITY);
        let qs: Vec<AffineExpr> = match q {
            QHandling::Fixed(q) => q.iter().map(|&x| AffineExpr::constant(x)).collect(),
            QHandling::Free => fr
                .customers
                .iter()
                .enumerate()
                .map(|(j, c)| AffineExpr::var(lp.add_var(format!("q[{j}]"), c.q_limits_kvar[0], c.q_limits_kvar[1])))
                .collect(),
        };
        for row in &fr.rows {
            let mut e = AffineExpr::new();
            for j in 0..v {
                e.push(p[j], row.g_p[j]);
                for &(var, c) in &qs[j].terms {
                    e.push(var, c * row.g_q[j]);
                }
                e.constant += qs[j].constant * row.g_q[j];
            }
            lp.add_le(row.label.clone(), e, row.h);
        }
        if solve_lp(&lp)?.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible("feasible region is empty".into()));
        }
    }
    for i in 0..fr.m() {
        let row = &fr.rows[i];
        let scale = row
            .g_p
            .iter()
            .chain(&row.g_q)
            .fold(0.0f64, |m, g| m.max(g.abs()));
        if scale == 0.0 {
            if row.h < 0.0 {
                return Err(Error::Infeasible(format!("row `{}` reads 0 <= {}", row.label, row.h)));
            }
            keep[i] = false;
            continue;
        }

        let mut lp = ConicProblem::new(Sense::Maximize);
        let p = lp.add_vars("p", v, f64::NEG_INFINITY, f64::INFINITY);
        let qv: Option<Vec<VarId>> = match q {
            QHandling::Fixed(_) => None,
            QHandling::Free => Some(
                fr.customers
                    .iter()
                    .enumerate()
                    .map(|(j, c)| lp.add_var(format!("q[{j}]"), c.q_limits_kvar[0], c.q_limits_kvar[1]))
                    .collect(),
            ),
        };
        let lhs = |r: usize, scale: f64| -> AffineExpr {
            let row = &fr.rows[r];
            let mut e = AffineExpr::new();
            for j in 0..v {
                e.push(p[j], row.g_p[j] / scale);
                match (&qv, q) {
                    (Some(qv), _) => e.push(qv[j], row.g_q[j] / scale),
                    (None, QHandling::Fixed(q)) => e.constant += row.g_q[j] * q[j] / scale,
                    _ => unreachable!(),
                }
            }
            e
        };
        lp.objective = lhs(i, scale);
        for r in (0..fr.m()).filter(|&r| r != i && keep[r]) {
            let other = &fr.rows[r];
            let s = other
                .g_p
                .iter()
                .chain(&other.g_q)
                .fold(0.0f64, |m, g| m.max(g.abs()));
            if s == 0.0 {
                continue;
            }
            lp.add_le(other.label.clone(), lhs(r, s), other.h / s);
        }

        let report = solve_lp(&lp)?;
        match report.status {
            SolveStatus::Optimal => {
                let best = report.objective.expect("optimal report has an objective");
                if best <= row.h / scale + REDUNDANCY_TOL {
                    keep[i] = false;
                }
            }
            SolveStatus::Unbounded => {}
            SolveStatus::Infeasible => {
                return Err(Error::Infeasible(format!(
                    "feasible region is empty (while testing row `{}`)",
                    row.label
                )))
            }
            SolveStatus::NumericalLimit => {
                return Err(Error::Numerical(format!("redundancy LP for row `{}`", row.label)))
            }
        }
    }
    let rows = fr
        .rows
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.clone())
        .collect();
    Ok(FeasibleRegion {
        customers: fr.customers.clone(),
        rows,
    })
}
