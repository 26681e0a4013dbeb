//! Shared failure modes.

use thiserror::Error;

/// Every fallible operation in the crate returns one of these.
///
/// `Malformed` means an input table is structurally broken (dangling ids,
/// wrong lengths, duplicate names); `Axiom` means the tables are well shaped
/// but violate a law the structure is supposed to satisfy. The distinction
/// matters to callers that validate user supplied data.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// The step guard ran out of budget.
    #[error("step budget exhausted: limit {limit} steps")]
    Resource { limit: u64 },
    /// Structurally broken input data.
    #[error("malformed {kind} `{context}`: {detail}")]
    Malformed {
        kind: &'static str,
        context: String,
        detail: String,
    },
    /// Well shaped data violating a law (identity, associativity,
    /// functoriality, naturality, cocycle, topology axioms).
    #[error("axiom violation in `{context}`: {detail}")]
    Axiom { context: String, detail: String },
    /// A required piece of structure does not exist (terminal object,
    /// fiber product, covering sieve).
    #[error("missing structure in `{context}`: {detail}")]
    Missing { context: String, detail: String },
    /// The input is valid but outside what the operation supports.
    #[error("unsupported input for {operation}: {detail}")]
    Unsupported {
        operation: &'static str,
        detail: String,
    },
}

impl Error {
    pub fn malformed(
        kind: &'static str,
        context: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Error::Malformed {
            kind,
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn axiom(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Axiom {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn missing(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Missing {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn unsupported(operation: &'static str, detail: impl Into<String>) -> Self {
        Error::Unsupported {
            operation,
            detail: detail.into(),
        }
    }
}
