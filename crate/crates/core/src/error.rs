use thiserror::Error;

use crate::instance::Violation;
use crate::tree::TreeViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid instance: {}", join(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("invalid tree: {}", join(.0))]
    InvalidTree(Vec<TreeViolation>),

    #[error("query {query} does not split the node (one child would be empty)")]
    DegenerateSplit { query: usize },

    /// No remaining query separates the objects of a heterogeneous node.
    #[error("objects {objects:?} cannot be separated by any available query")]
    NotIdentifiable { objects: Vec<usize> },

    #[error("answers are inconsistent: no object matches every recorded response")]
    InconsistentAnswers,

    #[error("regime {0} is not supported by this operation")]
    UnsupportedRegime(String),

    #[error("memo budget of {budget} subsets exceeded ({explored} explored)")]
    BudgetExceeded { budget: usize, explored: usize },

    #[error("instance generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
