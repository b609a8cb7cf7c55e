use thiserror::Error;

/// Errors raised by the estimators and their building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid privacy parameter: {0}")]
    InvalidBudget(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("budget overspend: {label} would bring the total to {total} of the declared budget")]
    BudgetOverspend { label: String, total: String },

    #[error("ledger does not close: charged {charged} of the declared budget")]
    LedgerUnbalanced { charged: String },

    #[error("charge of kind {got} does not match declared budget kind {declared}")]
    BudgetKindMismatch { declared: &'static str, got: &'static str },

    #[error("integer overflow in {0}")]
    Overflow(&'static str),

    #[error("oracle exhausted: {max} queries allowed")]
    OracleExhausted { max: u32 },

    #[error("value {value} outside the declared range {range}")]
    OutOfRange { value: String, range: String },

    #[error("aggregate wrapped around modulus {modulus}: decoded {decoded}")]
    Wraparound { modulus: u64, decoded: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
