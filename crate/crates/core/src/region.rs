//! Polyhedral feasible region over active-customer powers.
//!
//! The linearized network is the unreduced system
//!
//! ```text
//! A p + B q + C x = d,    E x <= f
//! ```
//!
//! where `x` holds monitored voltage magnitudes. With `C = -I` the voltages
//! are eliminated directly, giving rows `G_p p + G_q q <= h` with
//! `G_p = E A`, `G_q = E B` and `h = f + E d`. Customer power limits are
//! appended as plain bound rows.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    build_voltage_sensitivities, solve_exact_power_flow, CustomerKind, NetworkModel, Phase,
    SensitivityOptions, Status, VoltageSensitivities,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RowKind {
    VoltageMax { bus: String, phase: Phase },
    VoltageMin { bus: String, phase: Phase },
    PowerMax { customer: String },
    PowerMin { customer: String },
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub label: String,
    pub kind: RowKind,
    /// Coefficients on active power, one per active customer.
    pub g_p: Vec<f64>,
    /// Coefficients on reactive power, one per active customer.
    pub g_q: Vec<f64>,
    pub h: f64,
}

impl RegionRow {
    pub fn generic(label: impl Into<String>, g_p: Vec<f64>, g_q: Vec<f64>, h: f64) -> Self {
        RegionRow {
            label: label.into(),
            kind: RowKind::Generic,
            g_p,
            g_q,
            h,
        }
    }

    /// `h - G_p p - G_q q`; negative means violated.
    pub fn slack(&self, p: &[f64], q: &[f64]) -> f64 {
        self.h - dot(&self.g_p, p) - dot(&self.g_q, q)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveCustomer {
    pub id: String,
    pub p_limits_kw: [f64; 2],
    pub q_limits_kvar: [f64; 2],
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    pub customers: Vec<ActiveCustomer>,
    pub rows: Vec<RegionRow>,
}

impl FeasibleRegion {
    /// Region with no power limits, unbounded reactive range and unknown
    /// statuses. Mostly useful for synthetic polytopes.
    pub fn from_rows(v: usize, rows: Vec<RegionRow>) -> Result<Self> {
        let customers = (0..v)
            .map(|i| ActiveCustomer {
                id: format!("{}", i + 1),
                p_limits_kw: [f64::NEG_INFINITY, f64::INFINITY],
                q_limits_kvar: [0.0, 0.0],
                status: Status::Unknown,
            })
            .collect();
        let fr = FeasibleRegion { customers, rows };
        fr.validate()?;
        Ok(fr)
    }

    /// Builds `G_p p <= h` with no reactive columns in use.
    pub fn from_matrix(g_p: &DMatrix<f64>, h: &[f64]) -> Result<Self> {
        let v = g_p.ncols();
        let rows = (0..g_p.nrows())
            .map(|m| {
                RegionRow::generic(
                    format!("row[{m}]"),
                    g_p.row(m).iter().copied().collect(),
                    vec![0.0; v],
                    h[m],
                )
            })
            .collect();
        Self::from_rows(v, rows)
    }

    pub fn v(&self) -> usize {
        self.customers.len()
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn statuses(&self) -> Vec<Status> {
        self.customers.iter().map(|c| c.status).collect()
    }

    pub fn with_statuses(mut self, statuses: &[Status]) -> Self {
        assert_eq!(statuses.len(), self.v());
        for (c, &s) in self.customers.iter_mut().zip(statuses) {
            c.status = s;
        }
        self
    }

    pub fn g_p(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m(), self.v(), |r, c| self.rows[r].g_p[c])
    }

    pub fn g_q(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m(), self.v(), |r, c| self.rows[r].g_q[c])
    }

    pub fn h(&self) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.rows.iter().map(|r| r.h))
    }

    pub fn q_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.customers.iter().map(|c| c.q_limits_kvar[0]).collect();
        let hi = self.customers.iter().map(|c| c.q_limits_kvar[1]).collect();
        (lo, hi)
    }

    /// Smallest row slack at `(p, q)` with the row index.
    pub fn min_slack(&self, p: &[f64], q: &[f64]) -> (f64, usize) {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.slack(p, q), i))
            .fold((f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 { b } else { a })
    }

    pub fn contains(&self, p: &[f64], q: &[f64], tol: f64) -> bool {
        self.rows.iter().all(|r| r.slack(p, q) >= -tol)
    }

    /// Every row multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0);
        let mut out = self.clone();
        for r in &mut out.rows {
            r.g_p.iter_mut().for_each(|g| *g *= factor);
            r.g_q.iter_mut().for_each(|g| *g *= factor);
            r.h *= factor;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.v();
        if v == 0 {
            return Err(Error::InvalidConfig("feasible region has no active customers".into()));
        }
        for r in &self.rows {
            if r.g_p.len() != v || r.g_q.len() != v {
                return Err(Error::InvalidConfig(format!(
                    "row `{}` has {}/{} coefficients for {v} customers",
                    r.label,
                    r.g_p.len(),
                    r.g_q.len()
                )));
            }
            if !r.h.is_finite() || r.g_p.iter().chain(&r.g_q).any(|g| !g.is_finite()) {
                return Err(Error::InvalidConfig(format!("row `{}` is not finite", r.label)));
            }
        }
        for c in &self.customers {
            let [lo, hi] = c.q_limits_kvar;
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(Error::InvalidConfig(format!(
                    "customer `{}` has q limits [{lo}, {hi}]",
                    c.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("feasible region serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fr: FeasibleRegion = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        fr.validate()?;
        Ok(fr)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// `A p + B q + C x = d`, `E x <= f` over monitored voltages `x`.
#[derive(Debug, Clone)]
pub struct UnreducedSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
    pub e: DMatrix<f64>,
    pub f: DVector<f64>,
}

impl UnreducedSystem {
    /// Linearization `x = x0 + A p + B q` written with `C = -I`, `d = -x0`,
    /// and limits `x <= v_max`, `-x <= -v_min`.
    pub fn from_sensitivities(sens: &VoltageSensitivities, v_min: f64, v_max: f64) -> Self {
        let n = sens.monitored.len();
        let mut e = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            e[(i, i)] = 1.0;
            e[(n + i, i)] = -1.0;
        }
        let f = DVector::from_iterator(
            2 * n,
            std::iter::repeat_n(v_max, n).chain(std::iter::repeat_n(-v_min, n)),
        );
        UnreducedSystem {
            a: sens.dv_dp.clone(),
            b: sens.dv_dq.clone(),
            c: -DMatrix::identity(n, n),
            d: -DVector::from_column_slice(&sens.base_magnitudes),
            e,
            f,
        }
    }

    /// `(G_p, G_q, h)` with `Ē = -E C⁻¹`. Only `C = -I` is supported, where
    /// `Ē = E`.
    pub fn reduce(&self) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
        let n = self.c.nrows();
        if self.c != -DMatrix::<f64>::identity(n, n) {
            return Err(Error::InvalidConfig("reduction requires C = -I".into()));
        }
        let e_bar = &self.e;
        Ok((e_bar * &self.a, e_bar * &self.b, &self.f + e_bar * &self.d))
    }

    /// Voltages implied by `(p, q)`: `x = C⁻¹ (d - A p - B q)` with `C = -I`.
    pub fn voltages(&self, p: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
        &self.a * p + &self.b * q - &self.d
    }

    pub fn is_satisfied(&self, p: &DVector<f64>, q: &DVector<f64>, x: &DVector<f64>, tol: f64) -> bool {
        let eq = &self.a * p + &self.b * q + &self.c * x - &self.d;
        let ineq = &self.e * x - &self.f;
        eq.amax() <= tol && ineq.iter().all(|&r| r <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOptions {
    pub sensitivity: SensitivityOptions,
    /// Append each active customer's p-limits as rows.
    pub power_limit_rows: bool,
}

impl Default for RegionOptions {
    fn default() -> Self {
        RegionOptions {
            sensitivity: SensitivityOptions::default(),
            power_limit_rows: true,
        }
    }
}

/// Assembles the reduced region from sensitivities taken around a base with
/// active customers at zero.
pub fn assemble_feasible_region(
    net: &NetworkModel,
    sens: &VoltageSensitivities,
    power_limit_rows: bool,
) -> Result<FeasibleRegion> {
    for &c in &sens.active {
        let inj = sens.base.injections[c];
        if inj.p_kw != 0.0 || inj.q_kvar != 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sensitivities were taken with active customer `{}` away from zero",
                net.customers[c].id
            )));
        }
    }
    let limits = net.limits;
    let system = UnreducedSystem::from_sensitivities(sens, limits.v_min_pu, limits.v_max_pu);
    let (g_p, g_q, h) = system.reduce()?;
    let n = sens.monitored.len();
    let v = sens.active.len();

    let mut rows = Vec::with_capacity(2 * n + 2 * v);
    for r in 0..2 * n {
        let np = sens.monitored[r % n];
        let bus = net.buses[np.bus].id.clone();
        let (kind, label) = if r < n {
            (RowKind::VoltageMax { bus: bus.clone(), phase: np.phase }, format!("v_max[{bus}.{}]", np.phase))
        } else {
            (RowKind::VoltageMin { bus: bus.clone(), phase: np.phase }, format!("v_min[{bus}.{}]", np.phase))
        };
        rows.push(RegionRow {
            label,
            kind,
            g_p: g_p.row(r).iter().copied().collect(),
            g_q: g_q.row(r).iter().copied().collect(),
            h: h[r],
        });
    }

    let mut customers = Vec::with_capacity(v);
    for (j, &c) in sens.active.iter().enumerate() {
        let cust = &net.customers[c];
        let CustomerKind::Active {
            p_limits_kw,
            q_limits_kvar,
            status,
        } = cust.kind
        else {
            unreachable!("sensitivity columns are active customers");
        };
        customers.push(ActiveCustomer {
            id: cust.id.clone(),
            p_limits_kw,
            q_limits_kvar,
            status,
        });
        if power_limit_rows {
            let unit = |s: f64| {
                let mut g = vec![0.0; v];
                g[j] = s;
                g
            };
            if p_limits_kw[1].is_finite() {
                rows.push(RegionRow {
                    label: format!("p_max[{}]", cust.id),
                    kind: RowKind::PowerMax { customer: cust.id.clone() },
                    g_p: unit(1.0),
                    g_q: vec![0.0; v],
                    h: p_limits_kw[1],
                });
            }
            if p_limits_kw[0].is_finite() {
                rows.push(RegionRow {
                    label: format!("p_min[{}]", cust.id),
                    kind: RowKind::PowerMin { customer: cust.id.clone() },
                    g_p: unit(-1.0),
                    g_q: vec![0.0; v],
                    h: -p_limits_kw[0],
                });
            }
        }
    }

    let fr = FeasibleRegion { customers, rows };
    fr.validate()?;
    if let Some(r) = fr.rows.iter().find(|r| r.h < 0.0) {
        return Err(Error::BaseInfeasible {
            row: r.label.clone(),
            slack: r.h,
        });
    }
    Ok(fr)
}

/// Base power flow, sensitivities and assembly in one call.
pub fn feasible_region_from_network(
    net: &NetworkModel,
    opts: &RegionOptions,
) -> Result<(FeasibleRegion, VoltageSensitivities)> {
    let base = solve_exact_power_flow(net, &net.base_injections(), &opts.sensitivity.power_flow)?;
    let sens = build_voltage_sensitivities(net, &base, &opts.sensitivity)?;
    let fr = assemble_feasible_region(net, &sens, opts.power_limit_rows)?;
    Ok((fr, sens))
}
