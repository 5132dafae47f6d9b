use thiserror::Error;

use crate::grid::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("case parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("unsupported schema {found:?}, expected {expected:?}")]
    Schema { expected: &'static str, found: String },

    #[error("invalid case: {}", join_violations(.0))]
    InvalidCase(Vec<Violation>),

    #[error("case cannot form a spanning tree with these switches (required closed count {required}, switches {switches})")]
    NoSpanningTree { required: i64, switches: usize },

    #[error("switch configuration has length {found}, expected {expected}")]
    ConfigLength { expected: usize, found: usize },

    #[error("switch string {0:?} must contain only '0' and '1'")]
    SwitchString(String),

    #[error("infeasible configuration")]
    InfeasibleConfiguration,

    #[error(
        "{switches} switches is too many to enumerate 2^w configurations (limit {limit}); use sampling mode"
    )]
    TooManySwitches { switches: usize, limit: usize },

    #[error("initial topology infeasible")]
    InitialTopologyInfeasible,

    #[error("scenario has {found} steps, expected {expected}")]
    ScenarioLength { expected: usize, found: usize },

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("input shape {found:?} does not match network input {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("replay not ready")]
    ReplayNotReady,

    #[error("no feasible configuration")]
    NoFeasibleConfiguration,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid training config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
