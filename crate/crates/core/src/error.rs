use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("cannot parse distribution spec `{spec}`: {reason}")]
    SpecParse { spec: String, reason: String },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("Monte Carlo budget is zero")]
    ZeroBudget,

    #[error("E[min of {k}] is infinite for {spec}")]
    InfiniteMean { spec: String, k: usize },

    #[error("infeasible capacity: {cap} x {machines} machines < {jobs} jobs")]
    InfeasibleCapacity {
        cap: usize,
        machines: usize,
        jobs: usize,
    },

    #[error("no machines available")]
    NoMachines,

    #[error("instance too large for enumeration ({assignments} assignments > {limit})")]
    TooLarge { assignments: f64, limit: usize },

    #[error("Clarke pivot infeasible for machine {machine}")]
    PivotInfeasible { machine: usize },

    #[error("invalid mechanism parameters: {0}")]
    InvalidParameters(String),

    #[error("reference machine count rounds below 1 (delta * m = {0})")]
    ReferenceTooSmall(f64),

    #[error("configuration conflict: {0}")]
    Config(String),

    #[error("{0} requires a monotone hazard rate distribution")]
    NotMhr(String),

    #[error("no closed-form hazard rate for {0}")]
    NoClosedFormHazard(String),

    #[error("sampling budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
