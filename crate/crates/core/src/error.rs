use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("unknown bus `{bus}` referenced by {context}")]
    UnknownBus { context: String, bus: String },

    #[error("unknown phase `{phase}` for customer `{customer}` at bus `{bus}`")]
    UnknownPhase {
        customer: String,
        bus: String,
        phase: String,
    },

    #[error("network is disconnected: bus `{0}` is not reachable from the source")]
    Disconnected(String),

    #[error("network is meshed ({lines} lines for {buses} buses); only radial feeders are supported")]
    Meshed { buses: usize, lines: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("power flow did not converge after {iterations} iterations (residual {residual:.3e} p.u.)")]
    PowerFlowDiverged { iterations: usize, residual: f64 },

    #[error("feasible region is empty at the base point: row `{row}` has slack {slack:.6}")]
    BaseInfeasible { row: String, slack: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed conic problem: {0}")]
    MalformedProblem(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("problem is unbounded: {0}")]
    Unbounded(String),

    #[error("solver hit a numerical limit: {0}")]
    Numerical(String),

    #[error(
        "vertex enumeration needs 2^{v} vertices per row for {v} customers, above the cap of {cap}"
    )]
    TooManyCustomers { v: usize, cap: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}
