use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Feeder, NetworkModel, Phase};
use crate::error::{Error, Result};

/// Complex power drawn by a customer, load convention (kW / kvar).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerInjection {
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Maximum nodal current mismatch in p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

/// A converged power-flow solution.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    /// Per-bus, per-phase voltage in p.u.; zero on phases the bus lacks.
    pub voltages: Vec<[Complex64; 3]>,
    pub residual: f64,
    pub iterations: usize,
    /// The customer injections this point was solved for.
    pub injections: Vec<PowerInjection>,
}

impl OperatingPoint {
    pub fn magnitude(&self, bus: usize, phase: Phase) -> f64 {
        self.voltages[bus][phase.index()].norm()
    }
}

/// Solves the unbalanced three-phase power flow of a radial feeder with a
/// backward/forward current sweep and constant-power loads.
///
/// `injections` is aligned with `net.customers`. Fails with
/// [`Error::PowerFlowDiverged`] when the sweep has not reached
/// `opts.tolerance` after `opts.max_iterations` iterations, which in practice
/// means the loading is beyond what the feeder can transfer.
pub fn solve_exact_power_flow(
    net: &NetworkModel,
    injections: &[PowerInjection],
    opts: &PowerFlowOptions,
) -> Result<OperatingPoint> {
    if injections.len() != net.customers.len() {
        return Err(Error::InvalidConfig(format!(
            "{} injections given for {} customers",
            injections.len(),
            net.customers.len()
        )));
    }
    let feeder = Feeder::new(net)?;
    let n = net.buses.len();
    let zero = Complex64::new(0.0, 0.0);
    let z_base = net.source.impedance_base();
    let s_base = net.source.base_power_kva;

    let mut load = vec![[zero; 3]; n];
    for (c, inj) in net.customers.iter().zip(injections) {
        let b = net.bus_index(&c.bus).expect("validated customer bus");
        load[b][c.phase.index()] += Complex64::new(inj.p_kw, inj.q_kvar) / s_base;
    }

    let z_pu: Vec<[[Complex64; 3]; 3]> = net
        .lines
        .iter()
        .map(|l| {
            let mut z = l.impedance();
            z.iter_mut().flatten().for_each(|x| *x /= z_base);
            z
        })
        .collect();

    let root = feeder.order[0];
    let mut present = vec![[false; 3]; n];
    for (b, bus) in net.buses.iter().enumerate() {
        for &ph in &bus.phases {
            present[b][ph.index()] = true;
        }
    }
    let mut v = vec![[zero; 3]; n];
    for b in 0..n {
        for ph in Phase::ALL {
            if present[b][ph.index()] {
                v[b][ph.index()] = net.source.voltage(ph);
            }
        }
    }

    let load_current = |v: &[[Complex64; 3]]| -> Vec<[Complex64; 3]> {
        (0..n)
            .map(|b| {
                let mut i = [zero; 3];
                for p in 0..3 {
                    if present[b][p] && load[b][p] != zero {
                        i[p] = (load[b][p] / v[b][p]).conj();
                    }
                }
                i
            })
            .collect()
    };

    let mut current = load_current(&v);
    let mut residual = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        // backward sweep: branch current into each bus
        let mut branch = current.clone();
        for &b in feeder.order.iter().rev() {
            if let Some((p, _)) = feeder.parent[b] {
                let jb = branch[b];
                for ph in 0..3 {
                    branch[p][ph] += jb[ph];
                }
            }
        }
        // forward sweep
        for &b in &feeder.order {
            if b == root {
                continue;
            }
            let (p, k) = feeder.parent[b].expect("non-root bus has a parent");
            let z = &z_pu[k];
            for r in 0..3 {
                if !present[b][r] {
                    continue;
                }
                let mut drop = zero;
                for c in 0..3 {
                    if present[b][c] {
                        drop += z[r][c] * branch[b][c];
                    }
                }
                v[b][r] = v[p][r] - drop;
            }
        }

        let next = load_current(&v);
        residual = next
            .iter()
            .zip(&current)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max);
        let healthy = v
            .iter()
            .zip(&present)
            .all(|(vb, pb)| (0..3).all(|p| !pb[p] || (vb[p].norm().is_finite() && vb[p].norm() > 1e-6)));
        if !healthy || !residual.is_finite() {
            return Err(Error::PowerFlowDiverged {
                iterations: iteration,
                residual,
            });
        }
        current = next;
        if residual <= opts.tolerance {
            return Ok(OperatingPoint {
                voltages: v,
                residual,
                iterations: iteration,
                injections: injections.to_vec(),
            });
        }
    }
    Err(Error::PowerFlowDiverged {
        iterations: opts.max_iterations,
        residual,
    })
}
