use thiserror::Error;

use crate::optimizer::ScheduleSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The scheduling window admits no feasible start assignment.
    #[error("infeasible window starting at step {start_step}: {reason}")]
    InfeasibleWindow { start_step: usize, reason: String },

    /// Exact branch-and-bound ran out of nodes before proving optimality.
    /// The best schedule found so far is returned with its relative gap.
    #[error("node budget of {nodes} exhausted with relative gap {:.3e}", .incumbent.gap)]
    EffortExceeded { nodes: usize, incumbent: Box<ScheduleSolution> },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
