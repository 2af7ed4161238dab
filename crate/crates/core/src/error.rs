use thiserror::Error;

/// Errors raised across the library.
///
/// The split between configuration-type failures and numerical failures is
/// what the CLI maps onto exit codes 1 and 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("{field}: {message}")]
    Invalid { field: String, message: String },

    #[error("operators do not commute: max commutator norm {max_norm:.3e}")]
    NonCommuting { max_norm: f64 },

    #[error("generator {index} is not normal: ‖[G, G*]‖ = {norm:.3e}")]
    NonNormal { index: usize, norm: f64 },

    #[error("operator is not in the commutant of the algebra: max ‖[A, P_k]‖ = {max_norm:.3e}")]
    NotInCommutant { max_norm: f64 },

    #[error("filter collapse: trace {trace:.3e} vanished (step size too large?)")]
    FilterCollapse { trace: f64 },

    #[error("jump requested at zero rate {rate:.3e}; record is inconsistent with the model")]
    ZeroRateJump { rate: f64 },

    #[error("jump probability {prob:.3e} per step exceeds {limit}; decrease dt")]
    RateBoundExceeded { prob: f64, limit: f64 },

    #[error("positivity breach: min eigenvalue {min_eig:.3e} at step {step}")]
    PositivityBreach { min_eig: f64, step: usize },

    #[error(
        "causality violation: control law at t = {t} was handed {len} record entries (at most {allowed} precede t)"
    )]
    Causality { t: f64, len: usize, allowed: usize },

    #[error("truncation radius exceeded: |x|·|α| = {value:.3e} > {radius}")]
    TruncationRadius { value: f64, radius: f64 },

    #[error("{0}")]
    Numerical(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures that come from the numerics rather than from the
    /// inputs the caller supplied.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::FilterCollapse { .. }
                | Error::PositivityBreach { .. }
                | Error::Numerical(_)
                | Error::ZeroRateJump { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
