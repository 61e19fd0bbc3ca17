use thiserror::Error;

use crate::scenario::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid scenario: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    /// The scenario's shape does not fit the requested model.
    #[error("model not applicable: {0}")]
    Applicability(String),

    #[error(
        "exact multi-reservoir solve refused for {reservoirs} reservoirs: the product grid grows \
         as the power of the reservoir count (curse of dimensionality); limit is 3 unless overridden"
    )]
    Dimensionality { reservoirs: usize },

    #[error("enumeration size {size} exceeds budget {budget}")]
    BudgetExceeded { size: u128, budget: u128 },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
