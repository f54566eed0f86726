//! Solver-agnostic conic problem representation.
//!
//! A [`ConicProblem`] holds scalar variables with optional bounds, a linear
//! objective, linear rows (`<=` or `=`) and second-order cone blocks
//! `||tail||_2 <= head` whose entries are affine expressions. Backends
//! translate it to their native form; [`solve`] picks one from the
//! `ENVFORGE_BACKEND` environment variable and [`solve_lp`] uses the simplex
//! backend for purely linear problems.

mod clarabel;
mod simplex;
mod text;

use std::time::Duration;

use crate::error::{Error, Result};

pub use self::clarabel::ClarabelBackend;
pub use self::simplex::SimplexBackend;
pub use self::text::{parse_text, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        AffineExpr {
            terms: vec![(v, coef)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        AffineExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn add(mut self, v: VarId, coef: f64) -> Self {
        self.push(v, coef);
        self
    }

    pub fn push(&mut self, v: VarId, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    /// Merges repeated variables, dropping zero coefficients.
    pub fn compacted(&self) -> AffineExpr {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|t| t.0);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        AffineExpr {
            terms: out,
            constant: self.constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    LessEq,
    Equal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub label: String,
    pub expr: AffineExpr,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    SecondOrder,
}

/// `||tail||_2 <= head`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    pub label: String,
    pub kind: ConeKind,
    pub head: AffineExpr,
    pub tail: Vec<AffineExpr>,
}

impl ConeBlock {
    /// `x^2 <= 4 y z` with `y, z >= 0`, written as `||(x, y - z)||_2 <= y + z`.
    pub fn rotated(label: impl Into<String>, x: AffineExpr, y: &AffineExpr, z: &AffineExpr) -> Self {
        ConeBlock {
            label: label.into(),
            kind: ConeKind::SecondOrder,
            head: sum(y, z, 1.0),
            tail: vec![x, sum(y, z, -1.0)],
        }
    }

    /// `||tail|| - head` at `x`, clamped at zero.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let norm = self.tail.iter().map(|t| t.eval(x).powi(2)).sum::<f64>().sqrt();
        (norm - self.head.eval(x)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub sense: Sense,
    pub variables: Vec<Variable>,
    pub objective: AffineExpr,
    pub rows: Vec<LinearRow>,
    pub cones: Vec<ConeBlock>,
}

impl ConicProblem {
    pub fn new(sense: Sense) -> Self {
        ConicProblem {
            sense,
            variables: Vec::new(),
            objective: AffineExpr::new(),
            rows: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_vars(&mut self, name: &str, n: usize, lower: f64, upper: f64) -> Vec<VarId> {
        (0..n)
            .map(|i| self.add_var(format!("{name}[{i}]"), lower, upper))
            .collect()
    }

    pub fn add_row(
        &mut self,
        label: impl Into<String>,
        expr: AffineExpr,
        relation: Relation,
        rhs: f64,
    ) {
        self.rows.push(LinearRow {
            label: label.into(),
            expr,
            relation,
            rhs,
        });
    }

    pub fn add_le(&mut self, label: impl Into<String>, expr: AffineExpr, rhs: f64) {
        self.add_row(label, expr, Relation::LessEq, rhs);
    }

    pub fn add_soc(&mut self, label: impl Into<String>, head: AffineExpr, tail: Vec<AffineExpr>) {
        self.cones.push(ConeBlock {
            label: label.into(),
            kind: ConeKind::SecondOrder,
            head,
            tail,
        });
    }

    /// Adds `x^2 <= 4 y z` with `y, z >= 0` as `||(x, y - z)||_2 <= y + z`.
    pub fn add_rotated(&mut self, label: impl Into<String>, x: AffineExpr, y: &AffineExpr, z: &AffineExpr) {
        self.cones.push(ConeBlock::rotated(label, x, y, z));
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn is_linear(&self) -> bool {
        self.cones.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        let check = |e: &AffineExpr, what: &str| -> Result<()> {
            if !e.constant.is_finite() {
                return Err(Error::MalformedProblem(format!("{what}: non-finite constant")));
            }
            for &(v, c) in &e.terms {
                if v.0 >= n {
                    return Err(Error::MalformedProblem(format!(
                        "{what}: references variable {} but only {n} exist",
                        v.0
                    )));
                }
                if !c.is_finite() {
                    return Err(Error::MalformedProblem(format!(
                        "{what}: non-finite coefficient on `{}`",
                        self.variables[v.0].name
                    )));
                }
            }
            Ok(())
        };
        for var in &self.variables {
            if var.lower.is_nan() || var.upper.is_nan() || var.lower > var.upper {
                return Err(Error::MalformedProblem(format!(
                    "variable `{}` has bounds [{}, {}]",
                    var.name, var.lower, var.upper
                )));
            }
        }
        check(&self.objective, "objective")?;
        for row in &self.rows {
            check(&row.expr, &format!("row `{}`", row.label))?;
            if !row.rhs.is_finite() {
                return Err(Error::MalformedProblem(format!("row `{}`: non-finite rhs", row.label)));
            }
        }
        for cone in &self.cones {
            if cone.tail.is_empty() {
                return Err(Error::MalformedProblem(format!("cone `{}` has an empty tail", cone.label)));
            }
            check(&cone.head, &format!("cone `{}`", cone.label))?;
            for t in &cone.tail {
                check(t, &format!("cone `{}`", cone.label))?;
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Largest violation of bounds and linear rows at `x`.
    pub fn max_row_violation(&self, x: &[f64]) -> f64 {
        let bounds = self
            .variables
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lower - xi).max(xi - v.upper).max(0.0));
        let rows = self.rows.iter().map(|r| {
            let lhs = r.expr.eval(x);
            match r.relation {
                Relation::LessEq => (lhs - r.rhs).max(0.0),
                Relation::Equal => (lhs - r.rhs).abs(),
            }
        });
        bounds.chain(rows).fold(0.0, f64::max)
    }

    /// Largest `||tail|| - head` over all cones at `x` (0 when all hold).
    pub fn max_cone_violation(&self, x: &[f64]) -> f64 {
        self.cones.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
    }
}

fn sum(a: &AffineExpr, b: &AffineExpr, sign: f64) -> AffineExpr {
    let mut out = a.clone();
    out.constant += sign * b.constant;
    for &(v, c) in &b.terms {
        out.push(v, sign * c);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub max_iterations: u32,
    pub time_limit: Option<Duration>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feasibility_tol: 1e-8,
            gap_tol: 1e-8,
            max_iterations: 200,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalLimit => "numerical-limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Present iff `status == Optimal`.
    pub primal: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Dual bound on the objective, when the backend reports one.
    pub dual_objective: Option<f64>,
    pub iterations: u32,
    pub solve_time: Duration,
    pub backend: &'static str,
}

impl SolveReport {
    pub(crate) fn failed(status: SolveStatus, iterations: u32, solve_time: Duration, backend: &'static str) -> Self {
        SolveReport {
            status,
            primal: None,
            objective: None,
            dual_objective: None,
            iterations,
            solve_time,
            backend,
        }
    }

    /// Primal values, or the matching error for a non-optimal status.
    pub fn into_primal(self, what: &str) -> Result<Vec<f64>> {
        match self.status {
            SolveStatus::Optimal => Ok(self.primal.expect("optimal report carries primal values")),
            SolveStatus::Infeasible => Err(Error::Infeasible(what.to_string())),
            SolveStatus::Unbounded => Err(Error::Unbounded(what.to_string())),
            SolveStatus::NumericalLimit => Err(Error::Numerical(what.to_string())),
        }
    }
}

pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn supports_cones(&self) -> bool;

    fn solve(&self, problem: &ConicProblem, options: &SolveOptions) -> Result<SolveReport>;
}

/// Backend named by `ENVFORGE_BACKEND` (`clarabel` or `simplex`), defaulting
/// to Clarabel.
pub fn backend_from_env() -> Result<Box<dyn ConicBackend>> {
    match std::env::var("ENVFORGE_BACKEND").ok().as_deref() {
        None | Some("") | Some("clarabel") => Ok(Box::new(ClarabelBackend)),
        Some("simplex") => Ok(Box::new(SimplexBackend)),
        Some(other) => Err(Error::InvalidConfig(format!(
            "unknown ENVFORGE_BACKEND `{other}` (expected `clarabel` or `simplex`)"
        ))),
    }
}

/// Solves with the environment-selected backend. Linear problems fall back
/// to Clarabel if the selected backend cannot handle cones.
pub fn solve(problem: &ConicProblem, options: &SolveOptions) -> Result<SolveReport> {
    let backend = backend_from_env()?;
    if !problem.is_linear() && !backend.supports_cones() {
        return ClarabelBackend.solve(problem, options);
    }
    backend.solve(problem, options)
}

/// Solves a purely linear problem with the simplex backend.
pub fn solve_lp(problem: &ConicProblem) -> Result<SolveReport> {
    if !problem.is_linear() {
        return Err(Error::MalformedProblem(format!(
            "solve_lp called on a problem with {} cone blocks",
            problem.cones.len()
        )));
    }
    SimplexBackend.solve(problem, &SolveOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lp_max_x_below_three() {
        let mut p = ConicProblem::new(Sense::Maximize);
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        p.objective = AffineExpr::var(x);
        p.add_le("cap", AffineExpr::var(x), 3.0);
        for report in [solve(&p, &Default::default()).unwrap(), solve_lp(&p).unwrap()] {
            assert_eq!(report.status, SolveStatus::Optimal);
            assert_abs_diff_eq!(report.primal.unwrap()[0], 3.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn soc_three_four_five() {
        let mut p = ConicProblem::new(Sense::Minimize);
        let t = p.add_var("t", f64::NEG_INFINITY, f64::INFINITY);
        p.objective = AffineExpr::var(t);
        p.add_soc("ball", AffineExpr::var(t), vec![AffineExpr::constant(3.0), AffineExpr::constant(4.0)]);
        let r = solve(&p, &Default::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(r.objective.unwrap(), 5.0, epsilon = 1e-7);
    }

    #[test]
    fn lp_unit_box_and_infeasible_pair() {
        let mut p = ConicProblem::new(Sense::Maximize);
        let x = p.add_vars("p", 2, -1.0, 1.0);
        p.objective = AffineExpr::var(x[0]).add(x[1], 1.0);
        assert_abs_diff_eq!(solve_lp(&p).unwrap().objective.unwrap(), 2.0, epsilon = 1e-9);

        let mut p = ConicProblem::new(Sense::Maximize);
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        p.add_le("a", AffineExpr::var(x), 0.0);
        p.add_le("b", AffineExpr::term(x, -1.0), -1.0);
        assert_eq!(solve_lp(&p).unwrap().status, SolveStatus::Infeasible);
        assert_eq!(solve(&p, &Default::default()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_reported() {
        let mut p = ConicProblem::new(Sense::Maximize);
        let x = p.add_var("x", 0.0, f64::INFINITY);
        p.objective = AffineExpr::var(x);
        assert_eq!(solve_lp(&p).unwrap().status, SolveStatus::Unbounded);
        assert_eq!(solve(&p, &Default::default()).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn malformed_problems_are_rejected() {
        let mut p = ConicProblem::new(Sense::Maximize);
        p.add_le("bad", AffineExpr::var(VarId(3)), 1.0);
        assert!(matches!(solve(&p, &Default::default()), Err(Error::MalformedProblem(_))));
        let mut p = ConicProblem::new(Sense::Maximize);
        let x = p.add_var("x", 0.0, 1.0);
        p.add_soc("c", AffineExpr::var(x), vec![]);
        assert!(p.validate().is_err());
        p.cones.clear();
        p.add_le("nan", AffineExpr::term(x, f64::NAN), 1.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn rotated_cone_encoding() {
        // x^2 <= 4 y z: minimize z with x = 2, y = 1 gives z = 1
        let mut p = ConicProblem::new(Sense::Minimize);
        let z = p.add_var("z", 0.0, f64::INFINITY);
        p.objective = AffineExpr::var(z);
        p.add_rotated("r", AffineExpr::constant(2.0), &AffineExpr::constant(1.0), &AffineExpr::var(z));
        let r = solve(&p, &Default::default()).unwrap();
        assert_abs_diff_eq!(r.objective.unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn solve_lp_rejects_cones() {
        let mut p = ConicProblem::new(Sense::Minimize);
        let t = p.add_var("t", 0.0, f64::INFINITY);
        p.add_soc("c", AffineExpr::var(t), vec![AffineExpr::constant(1.0)]);
        assert!(solve_lp(&p).is_err());
    }
}
