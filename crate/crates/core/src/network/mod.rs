//! Feeder model, file loading and validation.
//!
//! Network files are JSON documents with five top-level keys: `source`,
//! `buses`, `lines`, `customers` and `limits`. Impedances are given in ohms as
//! a 3x3 array of `[re, im]` pairs indexed by phase `a, b, c`; customer powers
//! are in kW/kvar using the load convention (positive = import from the grid).

mod powerflow;
mod sensitivity;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use powerflow::{
    solve_exact_power_flow, OperatingPoint, PowerFlowOptions, PowerInjection,
};
pub use sensitivity::{
    build_voltage_sensitivities, MonitorSet, NodePhase, SensitivityOptions, VoltageSensitivities,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        };
        f.write_str(s)
    }
}

/// Operational status of an active customer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Status {
    Import,
    Export,
    #[default]
    Unknown,
}

impl Status {
    /// Signed multiplier used in the status rows: +1, -1 or 0.
    pub fn sign(self) -> f64 {
        match self {
            Status::Import => 1.0,
            Status::Export => -1.0,
            Status::Unknown => 0.0,
        }
    }
}

impl TryFrom<i8> for Status {
    type Error = String;

    fn try_from(value: i8) -> std::result::Result<Self, Self::Error> {
        match value {
            1 => Ok(Status::Import),
            -1 => Ok(Status::Export),
            0 => Ok(Status::Unknown),
            other => Err(format!("status must be 1, -1 or 0, got {other}")),
        }
    }
}

impl From<Status> for i8 {
    fn from(s: Status) -> i8 {
        match s {
            Status::Import => 1,
            Status::Export => -1,
            Status::Unknown => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub phases: Vec<Phase>,
}

impl Bus {
    pub fn has_phase(&self, phase: Phase) -> bool {
        self.phases.contains(&phase)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: String,
    pub to: String,
    /// Series impedance in ohms, `[row][col] = [re, im]`.
    pub impedance_ohm: [[[f64; 2]; 3]; 3],
}

impl Line {
    pub fn impedance(&self) -> [[Complex64; 3]; 3] {
        let mut z = [[Complex64::new(0.0, 0.0); 3]; 3];
        for (r, row) in self.impedance_ohm.iter().enumerate() {
            for (c, &[re, im]) in row.iter().enumerate() {
                z[r][c] = Complex64::new(re, im);
            }
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub bus: String,
    /// Per-phase source voltage in p.u. as `[re, im]`; balanced 1.0 p.u. if absent.
    #[serde(default = "balanced_source")]
    pub voltage_pu: [[f64; 2]; 3],
    /// Phase-to-neutral base voltage in volts.
    pub base_voltage_v: f64,
    /// Per-phase base power in kVA.
    pub base_power_kva: f64,
}

fn balanced_source() -> [[f64; 2]; 3] {
    let s3 = 3f64.sqrt() / 2.0;
    [[1.0, 0.0], [-0.5, -s3], [-0.5, s3]]
}

impl Source {
    pub fn voltage(&self, phase: Phase) -> Complex64 {
        let [re, im] = self.voltage_pu[phase.index()];
        Complex64::new(re, im)
    }

    /// Impedance base in ohms.
    pub fn impedance_base(&self) -> f64 {
        self.base_voltage_v * self.base_voltage_v / (self.base_power_kva * 1000.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CustomerKind {
    Active {
        p_limits_kw: [f64; 2],
        q_limits_kvar: [f64; 2],
        #[serde(default)]
        status: Status,
    },
    Passive {
        p_kw: f64,
        q_kvar: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: String,
    pub bus: String,
    pub phase: Phase,
    #[serde(flatten)]
    pub kind: CustomerKind,
}

impl Customer {
    pub fn is_active(&self) -> bool {
        matches!(self.kind, CustomerKind::Active { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageLimits {
    pub v_min_pu: f64,
    pub v_max_pu: f64,
}

impl Default for VoltageLimits {
    fn default() -> Self {
        VoltageLimits {
            v_min_pu: 0.95,
            v_max_pu: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    #[serde(default)]
    pub name: String,
    pub source: Source,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    pub customers: Vec<Customer>,
    #[serde(default)]
    pub limits: VoltageLimits,
}

/// Reads and validates a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    NetworkModel::from_json(&text)
}

impl NetworkModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let net: NetworkModel =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        net.validate()?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network model serializes")
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Indices (into `customers`) of the active customers, in file order.
    pub fn active_customers(&self) -> Vec<usize> {
        (0..self.customers.len())
            .filter(|&i| self.customers[i].is_active())
            .collect()
    }

    /// Injections with every active customer at zero and passive customers at
    /// their fixed forecast.
    pub fn base_injections(&self) -> Vec<PowerInjection> {
        self.customers
            .iter()
            .map(|c| match c.kind {
                CustomerKind::Active { .. } => PowerInjection::default(),
                CustomerKind::Passive { p_kw, q_kvar } => PowerInjection { p_kw, q_kvar },
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, bus) in self.buses.iter().enumerate() {
            if seen.insert(bus.id.as_str(), i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate bus id `{}`", bus.id)));
            }
            if bus.phases.is_empty() {
                return Err(Error::InvalidNetwork(format!("bus `{}` has no phases", bus.id)));
            }
        }
        let src = &self.source;
        let src_bus = self.bus_index(&src.bus).ok_or_else(|| Error::UnknownBus {
            context: "source".into(),
            bus: src.bus.clone(),
        })?;
        if !(src.base_voltage_v > 0.0 && src.base_power_kva > 0.0) {
            return Err(Error::Schema(
                "source.base_voltage_v and source.base_power_kva must be positive".into(),
            ));
        }
        for &ph in &self.buses[src_bus].phases {
            let v = src.voltage(ph);
            if !(v.re.is_finite() && v.im.is_finite()) || v.norm() == 0.0 {
                return Err(Error::Schema(format!(
                    "source.voltage_pu for phase {ph} must be finite and nonzero"
                )));
            }
        }
        let lim = self.limits;
        if !(lim.v_min_pu.is_finite() && lim.v_max_pu.is_finite() && lim.v_min_pu < lim.v_max_pu)
        {
            return Err(Error::Schema(format!(
                "limits: v_min_pu ({}) must be below v_max_pu ({})",
                lim.v_min_pu, lim.v_max_pu
            )));
        }

        for (k, line) in self.lines.iter().enumerate() {
            let ctx = format!("line {k}");
            let from = self.bus_index(&line.from).ok_or_else(|| Error::UnknownBus {
                context: ctx.clone(),
                bus: line.from.clone(),
            })?;
            let to = self.bus_index(&line.to).ok_or_else(|| Error::UnknownBus {
                context: ctx.clone(),
                bus: line.to.clone(),
            })?;
            if from == to {
                return Err(Error::InvalidNetwork(format!("{ctx} is a self-loop")));
            }
            if line.impedance_ohm.iter().flatten().flatten().any(|x| !x.is_finite()) {
                return Err(Error::Schema(format!("{ctx}: impedance_ohm must be finite")));
            }
        }

        let mut ids = HashMap::new();
        for c in &self.customers {
            if ids.insert(c.id.as_str(), ()).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate customer id `{}`", c.id)));
            }
            let bus = self.bus_index(&c.bus).ok_or_else(|| Error::UnknownBus {
                context: format!("customer `{}`", c.id),
                bus: c.bus.clone(),
            })?;
            if !self.buses[bus].has_phase(c.phase) {
                return Err(Error::UnknownPhase {
                    customer: c.id.clone(),
                    bus: c.bus.clone(),
                    phase: c.phase.to_string(),
                });
            }
            match c.kind {
                CustomerKind::Active {
                    p_limits_kw: [p_lo, p_hi],
                    q_limits_kvar: [q_lo, q_hi],
                    ..
                } => {
                    if !(p_lo.is_finite() && p_hi.is_finite() && p_lo <= p_hi) {
                        return Err(Error::Schema(format!(
                            "customer `{}`: p_limits_kw must be finite with lower <= upper",
                            c.id
                        )));
                    }
                    if !(q_lo.is_finite() && q_hi.is_finite() && q_lo <= q_hi) {
                        return Err(Error::Schema(format!(
                            "customer `{}`: q_limits_kvar must be finite with lower <= upper",
                            c.id
                        )));
                    }
                }
                CustomerKind::Passive { p_kw, q_kvar } => {
                    if !(p_kw.is_finite() && q_kvar.is_finite()) {
                        return Err(Error::Schema(format!(
                            "customer `{}`: p_kw and q_kvar must be finite",
                            c.id
                        )));
                    }
                }
            }
        }

        Feeder::new(self).map(|_| ())
    }
}

/// Radial topology derived from a [`NetworkModel`]: buses in breadth-first
/// order from the source and, for every non-source bus, its parent line.
#[derive(Debug, Clone)]
pub(crate) struct Feeder {
    pub order: Vec<usize>,
    /// `parent[b] = Some((parent bus, line index))`.
    pub parent: Vec<Option<(usize, usize)>>,
}

impl Feeder {
    pub fn new(net: &NetworkModel) -> Result<Self> {
        let n = net.buses.len();
        let root = net
            .bus_index(&net.source.bus)
            .ok_or_else(|| Error::UnknownBus {
                context: "source".into(),
                bus: net.source.bus.clone(),
            })?;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, line) in net.lines.iter().enumerate() {
            let a = net.bus_index(&line.from).ok_or_else(|| Error::UnknownBus {
                context: format!("line {k}"),
                bus: line.from.clone(),
            })?;
            let b = net.bus_index(&line.to).ok_or_else(|| Error::UnknownBus {
                context: format!("line {k}"),
                bus: line.to.clone(),
            })?;
            adj[a].push((b, k));
            adj[b].push((a, k));
        }

        let mut parent = vec![None; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(b) = queue.pop_front() {
            order.push(b);
            for &(nb, k) in &adj[b] {
                if !visited[nb] {
                    visited[nb] = true;
                    parent[nb] = Some((b, k));
                    queue.push_back(nb);
                }
            }
        }
        if let Some(b) = visited.iter().position(|v| !v) {
            return Err(Error::Disconnected(net.buses[b].id.clone()));
        }
        if net.lines.len() != n - 1 {
            return Err(Error::Meshed {
                buses: n,
                lines: net.lines.len(),
            });
        }
        for &b in &order[1..] {
            let (p, _) = parent[b].expect("non-root bus has a parent");
            for &ph in &net.buses[b].phases {
                if !net.buses[p].has_phase(ph) {
                    return Err(Error::InvalidNetwork(format!(
                        "bus `{}` has phase {ph} but its upstream bus `{}` does not",
                        net.buses[b].id, net.buses[p].id
                    )));
                }
            }
        }
        Ok(Feeder { order, parent })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> String {
        r#"{
          "source": {"bus": "1", "base_voltage_v": 230.0, "base_power_kva": 10.0},
          "buses": [{"id": "1", "phases": ["a","b","c"]}, {"id": "2", "phases": ["a","b","c"]}],
          "lines": [{"from": "1", "to": "2", "impedance_ohm": [
             [[0.2,0.2],[0.05,0.05],[0.05,0.05]],
             [[0.05,0.05],[0.2,0.2],[0.05,0.05]],
             [[0.05,0.05],[0.05,0.05],[0.2,0.2]]]}],
          "customers": [
            {"id": "1", "bus": "2", "phase": "b", "kind": "active", "p_limits_kw": [-7,7], "q_limits_kvar": [-3,3], "status": 1},
            {"id": "2", "bus": "2", "phase": "a", "kind": "passive", "p_kw": 2.0, "q_kvar": 0.5},
            {"id": "3", "bus": "2", "phase": "c", "kind": "active", "p_limits_kw": [-7,7], "q_limits_kvar": [-3,3], "status": 1}
          ],
          "limits": {"v_min_pu": 0.95, "v_max_pu": 1.05}
        }"#
        .to_string()
    }

    #[test]
    fn loads_two_bus_with_active_and_passive() {
        let net = NetworkModel::from_json(&two_bus()).unwrap();
        let active: Vec<_> = net
            .active_customers()
            .iter()
            .map(|&i| net.customers[i].id.clone())
            .collect();
        assert_eq!(active, ["1", "3"]);
        assert_eq!(net.customers.iter().filter(|c| !c.is_active()).count(), 1);
        assert_eq!(net.source.voltage(Phase::B).norm(), 1.0);
    }

    #[test]
    fn rejects_customer_on_absent_phase() {
        let text = two_bus().replace(
            r#"{"id": "2", "phases": ["a","b","c"]}"#,
            r#"{"id": "2", "phases": ["a","b"]}"#,
        );
        let err = NetworkModel::from_json(&text).unwrap_err();
        assert!(matches!(err, Error::UnknownPhase { .. }), "{err}");
        assert!(err.to_string().contains("unknown phase"));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = two_bus().replace(r#""phase": "b", "#, "");
        let err = NetworkModel::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("phase"), "{err}");
    }

    #[test]
    fn rejects_unknown_bus_and_bad_limits() {
        let text = two_bus().replace(r#""to": "2""#, r#""to": "9""#);
        assert!(matches!(
            NetworkModel::from_json(&text).unwrap_err(),
            Error::UnknownBus { .. }
        ));
        let text = two_bus().replace(r#""v_min_pu": 0.95"#, r#""v_min_pu": 1.10"#);
        assert!(matches!(NetworkModel::from_json(&text).unwrap_err(), Error::Schema(_)));
        let text = two_bus().replace(r#""q_limits_kvar": [-3,3], "status": 1}"#, r#""q_limits_kvar": [3,-3], "status": 1}"#);
        assert!(matches!(NetworkModel::from_json(&text).unwrap_err(), Error::Schema(_)));
    }

    #[test]
    fn single_bus_network_is_valid() {
        let text = r#"{
          "source": {"bus": "s", "base_voltage_v": 230.0, "base_power_kva": 10.0},
          "buses": [{"id": "s", "phases": ["a"]}],
          "customers": [{"id": "1", "bus": "s", "phase": "a", "kind": "active", "p_limits_kw": [-5,5], "q_limits_kvar": [-1,1]}]
        }"#;
        let net = NetworkModel::from_json(text).unwrap();
        assert_eq!(net.active_customers(), vec![0]);
        assert_eq!(net.customers.len(), 1);
    }

    #[test]
    fn rejects_disconnected_and_meshed() {
        let text = r#"{
          "source": {"bus": "s", "base_voltage_v": 230.0, "base_power_kva": 10.0},
          "buses": [{"id": "s", "phases": ["a"]}, {"id": "x", "phases": ["a"]}],
          "customers": [{"id": "1", "bus": "x", "phase": "a", "kind": "active", "p_limits_kw": [-5,5], "q_limits_kvar": [-1,1]}]
        }"#;
        assert!(matches!(NetworkModel::from_json(text).unwrap_err(), Error::Disconnected(b) if b == "x"));

        let z = "[[[0.1,0.1],[0,0],[0,0]],[[0,0],[0.1,0.1],[0,0]],[[0,0],[0,0],[0.1,0.1]]]";
        let text = format!(
            r#"{{
          "source": {{"bus": "s", "base_voltage_v": 230.0, "base_power_kva": 10.0}},
          "buses": [{{"id": "s", "phases": ["a"]}}, {{"id": "x", "phases": ["a"]}}, {{"id": "y", "phases": ["a"]}}],
          "lines": [{{"from":"s","to":"x","impedance_ohm":{z}}},{{"from":"x","to":"y","impedance_ohm":{z}}},{{"from":"y","to":"s","impedance_ohm":{z}}}],
          "customers": []
        }}"#
        );
        assert!(matches!(NetworkModel::from_json(&text).unwrap_err(), Error::Meshed { .. }));
    }

    #[test]
    fn status_round_trips_as_integer() {
        for s in [Status::Import, Status::Export, Status::Unknown] {
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<Status>(&j).unwrap(), s);
        }
        assert!(serde_json::from_str::<Status>("2").is_err());
    }
}
