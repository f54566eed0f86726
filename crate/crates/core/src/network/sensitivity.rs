use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_exact_power_flow, NetworkModel, OperatingPoint, Phase, PowerFlowOptions};
use crate::error::Result;

/// Which node-phases receive voltage rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitorSet {
    /// Connection node-phases of every customer.
    #[default]
    CustomerNodes,
    /// Every phase of every bus.
    AllNodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePhase {
    pub bus: usize,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityOptions {
    pub step_kw: f64,
    pub step_kvar: f64,
    pub monitor: MonitorSet,
    pub power_flow: PowerFlowOptions,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        SensitivityOptions {
            step_kw: 0.1,
            step_kvar: 0.1,
            monitor: MonitorSet::CustomerNodes,
            power_flow: PowerFlowOptions::default(),
        }
    }
}

/// Voltage-magnitude sensitivities around a base operating point.
///
/// Rows follow `monitored`, columns follow `active` (indices into
/// `NetworkModel::customers`). Units are p.u. per kW and p.u. per kvar.
#[derive(Debug, Clone)]
pub struct VoltageSensitivities {
    pub monitored: Vec<NodePhase>,
    pub active: Vec<usize>,
    pub base: OperatingPoint,
    pub base_magnitudes: Vec<f64>,
    pub dv_dp: DMatrix<f64>,
    pub dv_dq: DMatrix<f64>,
}

impl NetworkModel {
    pub fn monitored_node_phases(&self, monitor: MonitorSet) -> Vec<NodePhase> {
        let mut out: Vec<NodePhase> = match monitor {
            MonitorSet::AllNodes => self
                .buses
                .iter()
                .enumerate()
                .flat_map(|(b, bus)| bus.phases.iter().map(move |&phase| NodePhase { bus: b, phase }))
                .collect(),
            MonitorSet::CustomerNodes => self
                .customers
                .iter()
                .map(|c| NodePhase {
                    bus: self.bus_index(&c.bus).expect("validated customer bus"),
                    phase: c.phase,
                })
                .collect(),
        };
        out.sort();
        out.dedup();
        out
    }
}

/// Central-difference sensitivities of every monitored |V| to each active
/// customer's p and q, evaluated around `base`.
///
/// Columns are computed in parallel; every column is an independent pair of
/// power flows so the result does not depend on scheduling.
pub fn build_voltage_sensitivities(
    net: &NetworkModel,
    base: &OperatingPoint,
    opts: &SensitivityOptions,
) -> Result<VoltageSensitivities> {
    let monitored = net.monitored_node_phases(opts.monitor);
    let active = net.active_customers();
    let magnitudes = |op: &OperatingPoint| -> Vec<f64> {
        monitored.iter().map(|np| op.magnitude(np.bus, np.phase)).collect()
    };

    // (customer, is_q) pairs, p columns first
    let jobs: Vec<(usize, bool)> = active
        .iter()
        .map(|&c| (c, false))
        .chain(active.iter().map(|&c| (c, true)))
        .collect();
    let columns: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(c, is_q)| {
            let step = if is_q { opts.step_kvar } else { opts.step_kw };
            let solve_at = |delta: f64| -> Result<Vec<f64>> {
                let mut inj = base.injections.clone();
                if is_q {
                    inj[c].q_kvar += delta;
                } else {
                    inj[c].p_kw += delta;
                }
                Ok(magnitudes(&solve_exact_power_flow(net, &inj, &opts.power_flow)?))
            };
            let plus = solve_at(step)?;
            let minus = solve_at(-step)?;
            Ok(plus
                .iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect())
        })
        .collect::<Result<_>>()?;

    let (m, v) = (monitored.len(), active.len());
    let dv_dp = DMatrix::from_fn(m, v, |r, c| columns[c][r]);
    let dv_dq = DMatrix::from_fn(m, v, |r, c| columns[v + c][r]);
    Ok(VoltageSensitivities {
        base_magnitudes: magnitudes(base),
        monitored,
        active,
        base: base.clone(),
        dv_dp,
        dv_dq,
    })
}
