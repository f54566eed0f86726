use std::time::{Duration, Instant};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{AffineExpr, ConicBackend, ConicProblem, Relation, Sense, SolveOptions, SolveReport, SolveStatus};
use crate::error::{Error, Result};

/// Interior-point backend built on the Clarabel conic solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

/// Rows of `A x + s = b` in triplet form, grouped by cone.
struct Staged {
    rows: usize,
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Staged {
    /// Appends the row `s = expr`, i.e. `A = -coeffs`, `b = constant`.
    fn push_affine(&mut self, e: &AffineExpr) {
        for &(var, c) in &e.terms {
            self.i.push(self.rows);
            self.j.push(var.0);
            self.v.push(-c);
        }
        self.b.push(e.constant);
        self.rows += 1;
    }
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn supports_cones(&self) -> bool {
        true
    }

    fn solve(&self, problem: &ConicProblem, options: &SolveOptions) -> Result<SolveReport> {
        problem.validate()?;
        let start = Instant::now();
        let n = problem.num_vars();
        let mut st = Staged {
            rows: 0,
            i: Vec::new(),
            j: Vec::new(),
            v: Vec::new(),
            b: Vec::new(),
        };
        let mut cones = Vec::new();

        let eq: Vec<_> = problem.rows.iter().filter(|r| r.relation == Relation::Equal).collect();
        for r in &eq {
            // s = rhs - expr = 0
            let mut e = r.expr.clone();
            e.constant = r.rhs - e.constant;
            e.terms.iter_mut().for_each(|t| t.1 = -t.1);
            st.push_affine(&e);
        }
        if !eq.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(eq.len()));
        }

        let before = st.rows;
        for r in problem.rows.iter().filter(|r| r.relation == Relation::LessEq) {
            let mut e = r.expr.clone();
            e.constant = r.rhs - e.constant;
            e.terms.iter_mut().for_each(|t| t.1 = -t.1);
            st.push_affine(&e);
        }
        for (k, var) in problem.variables.iter().enumerate() {
            let x = super::VarId(k);
            if var.upper.is_finite() {
                st.push_affine(&AffineExpr::term(x, -1.0).add_const(var.upper));
            }
            if var.lower.is_finite() {
                st.push_affine(&AffineExpr::term(x, 1.0).add_const(-var.lower));
            }
        }
        if st.rows > before {
            cones.push(SupportedConeT::NonnegativeConeT(st.rows - before));
        }

        for cone in &problem.cones {
            st.push_affine(&cone.head);
            for t in &cone.tail {
                st.push_affine(t);
            }
            cones.push(SupportedConeT::SecondOrderConeT(1 + cone.tail.len()));
        }

        let sign = match problem.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut q = vec![0.0; n];
        for &(var, c) in &problem.objective.terms {
            q[var.0] += sign * c;
        }
        let p_mat = CscMatrix::<f64>::zeros((n, n));
        let a_mat = CscMatrix::new_from_triplets(st.rows, n, st.i, st.j, st.v);

        let mut builder = DefaultSettingsBuilder::default();
        builder
            .verbose(false)
            .max_iter(options.max_iterations)
            .tol_feas(options.feasibility_tol)
            .tol_gap_rel(options.gap_tol)
            .tol_gap_abs(options.gap_tol)
            .presolve_enable(false);
        if let Some(limit) = options.time_limit {
            builder.time_limit(limit.as_secs_f64());
        }
        let settings = builder
            .build()
            .map_err(|e| Error::InvalidConfig(format!("clarabel settings: {e}")))?;

        let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &st.b, &cones, settings)
            .map_err(|e| Error::MalformedProblem(format!("clarabel rejected the problem: {e}")))?;
        solver.solve();
        let sol = &solver.solution;
        let elapsed = start.elapsed();

        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => {
                let tol = 1e-6 * (1.0 + sol.x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                if problem.max_row_violation(&sol.x) <= tol && problem.max_cone_violation(&sol.x) <= tol {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::NumericalLimit
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            _ => SolveStatus::NumericalLimit,
        };
        log::debug!(
            "clarabel: {:?} after {} iterations in {:.3}s",
            sol.status,
            sol.iterations,
            elapsed.as_secs_f64()
        );
        if status != SolveStatus::Optimal {
            return Ok(SolveReport::failed(status, sol.iterations, elapsed, self.name()));
        }
        let x = sol.x.clone();
        let const_term = problem.objective.constant;
        Ok(SolveReport {
            status,
            objective: Some(problem.objective_value(&x)),
            dual_objective: Some(sign * sol.obj_val_dual + const_term),
            primal: Some(x),
            iterations: sol.iterations,
            solve_time: Duration::from_secs_f64(sol.solve_time.max(0.0)).max(elapsed),
            backend: self.name(),
        })
    }
}

impl AffineExpr {
    fn add_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }
}
