use std::time::Instant;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, SolveOutcome};

use super::{ConicBackend, ConicProblem, Relation, Sense, SolveOptions, SolveReport, SolveStatus};
use crate::error::{Error, Result};

/// Revised-simplex LP backend (`microlp`). Returns vertex solutions, which
/// the redundancy and baseline LPs rely on. Rejects problems with cones.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimplexBackend;

impl ConicBackend for SimplexBackend {
    fn name(&self) -> &'static str {
        "simplex"
    }

    fn supports_cones(&self) -> bool {
        false
    }

    fn solve(&self, problem: &ConicProblem, options: &SolveOptions) -> Result<SolveReport> {
        problem.validate()?;
        if !problem.is_linear() {
            return Err(Error::MalformedProblem(
                "the simplex backend cannot handle cone blocks".into(),
            ));
        }
        let start = Instant::now();
        let direction = match problem.sense {
            Sense::Minimize => OptimizationDirection::Minimize,
            Sense::Maximize => OptimizationDirection::Maximize,
        };
        let mut lp = Problem::new(direction);
        if let Some(limit) = options.time_limit {
            lp.set_time_limit(limit);
        }
        let mut obj = vec![0.0; problem.num_vars()];
        for &(v, c) in &problem.objective.terms {
            obj[v.0] += c;
        }
        let vars: Vec<_> = problem
            .variables
            .iter()
            .zip(&obj)
            .map(|(v, &c)| lp.add_var(c, (v.lower, v.upper)))
            .collect();
        for row in &problem.rows {
            let e = row.expr.compacted();
            let expr: LinearExpr = e.terms.iter().map(|&(v, c)| (vars[v.0], c)).collect();
            let op = match row.relation {
                Relation::LessEq => ComparisonOp::Le,
                Relation::Equal => ComparisonOp::Eq,
            };
            lp.add_constraint(expr, op, row.rhs - e.constant);
        }

        let outcome = lp.solve();
        let elapsed = start.elapsed();
        let status = match &outcome {
            Ok(SolveOutcome::Solution(_)) => SolveStatus::Optimal,
            Ok(SolveOutcome::Interrupted(_)) => SolveStatus::NumericalLimit,
            Err(microlp::Error::Infeasible) => SolveStatus::Infeasible,
            Err(microlp::Error::Unbounded) => SolveStatus::Unbounded,
            Err(e) => {
                log::warn!("simplex backend failed: {e}");
                SolveStatus::NumericalLimit
            }
        };
        match outcome {
            Ok(SolveOutcome::Solution(sol)) => {
                let x: Vec<f64> = vars.iter().map(|&v| sol.var_value_raw(v)).collect();
                Ok(SolveReport {
                    status,
                    objective: Some(problem.objective_value(&x)),
                    dual_objective: None,
                    primal: Some(x),
                    iterations: 0,
                    solve_time: elapsed,
                    backend: self.name(),
                })
            }
            _ => Ok(SolveReport::failed(status, 0, elapsed, self.name())),
        }
    }
}
