//! Envelope allocations and their result-file schema.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Single-point deterministic allocation.
    Dmtd,
    /// Globally optimal box by vertex enumeration.
    So,
    /// Box inscribed in the maximum-volume ellipsoid.
    Ellipsoid,
    /// Box inscribed in the maximum-volume superellipsoid.
    Sesd,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dmtd, Method::So, Method::Ellipsoid, Method::Sesd];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dmtd => "dmtd",
            Method::So => "so",
            Method::Ellipsoid => "ellipsoid",
            Method::Sesd => "sesd",
        }
    }

    /// Whether every point of the allocated box is meant to be feasible.
    pub fn is_robust(self) -> bool {
        self != Method::Dmtd
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerEnvelope {
    pub id: String,
    pub lower_kw: f64,
    pub upper_kw: f64,
}

impl CustomerEnvelope {
    pub fn width(&self) -> f64 {
        self.upper_kw - self.lower_kw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeAllocation {
    pub method: Method,
    pub customers: Vec<CustomerEnvelope>,
    pub q_dispatch_kvar: Vec<f64>,
    pub total_doe_kw: f64,
    #[serde(default)]
    pub squareness: Option<u32>,
    #[serde(default)]
    pub objective: Option<f64>,
    #[serde(default)]
    pub solve_time_s: f64,
    pub solver_status: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EnvelopeAllocation {
    /// Allocation whose total is the sum of widths.
    pub fn new(method: Method, customers: Vec<CustomerEnvelope>, q_dispatch_kvar: Vec<f64>) -> Self {
        let total_doe_kw = customers.iter().map(CustomerEnvelope::width).sum();
        EnvelopeAllocation {
            method,
            customers,
            q_dispatch_kvar,
            total_doe_kw,
            squareness: None,
            objective: None,
            solve_time_s: 0.0,
            solver_status: "optimal".into(),
            notes: Vec::new(),
        }
    }

    pub fn lower(&self) -> Vec<f64> {
        self.customers.iter().map(|c| c.lower_kw).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.customers.iter().map(|c| c.upper_kw).collect()
    }

    /// Copy with every envelope scaled about its midpoint by `factor`.
    pub fn shrunk(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.customers {
            let mid = 0.5 * (c.lower_kw + c.upper_kw);
            let half = 0.5 * c.width() * factor;
            c.lower_kw = mid - half;
            c.upper_kw = mid + half;
        }
        out.total_doe_kw = out.customers.iter().map(CustomerEnvelope::width).sum();
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_dispatch_kvar.len() != self.customers.len() {
            return Err(Error::Schema(format!(
                "q_dispatch_kvar has {} entries for {} customers",
                self.q_dispatch_kvar.len(),
                self.customers.len()
            )));
        }
        for c in &self.customers {
            if !(c.lower_kw.is_finite() && c.upper_kw.is_finite()) || c.lower_kw > c.upper_kw {
                return Err(Error::Schema(format!(
                    "customer `{}` has envelope [{}, {}]",
                    c.id, c.lower_kw, c.upper_kw
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("allocation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: EnvelopeAllocation = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        a.validate()?;
        Ok(a)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> EnvelopeAllocation {
        EnvelopeAllocation::new(
            Method::Sesd,
            vec![
                CustomerEnvelope { id: "1".into(), lower_kw: 0.0, upper_kw: 6.25 },
                CustomerEnvelope { id: "3".into(), lower_kw: -1.5, upper_kw: 4.0 },
            ],
            vec![0.3, -0.1],
        )
    }

    #[test]
    fn total_is_sum_of_widths() {
        assert_eq!(sample().total_doe_kw, 11.75);
        assert_eq!(sample().shrunk(0.5).total_doe_kw, 5.875);
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
        assert!(!Method::Dmtd.is_robust());
    }

    #[test]
    fn rejects_inverted_envelope() {
        let mut a = sample();
        a.customers[0].lower_kw = 10.0;
        assert!(EnvelopeAllocation::from_json(&a.to_json()).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip(
            bounds in prop::collection::vec((-1e4f64..1e4, 0f64..1e4, -50f64..50.0), 1..8),
            k in prop::option::of(1u32..16),
        ) {
            let customers = bounds
                .iter()
                .enumerate()
                .map(|(i, &(lo, w, _))| CustomerEnvelope { id: format!("c{i}"), lower_kw: lo, upper_kw: lo + w })
                .collect();
            let mut a = EnvelopeAllocation::new(Method::So, customers, bounds.iter().map(|b| b.2).collect());
            a.squareness = k;
            a.objective = Some(1.25);
            a.notes.push("note".into());
            prop_assert_eq!(EnvelopeAllocation::from_json(&a.to_json()).unwrap(), a);
        }
    }
}
