use thiserror::Error;

/// Errors raised by the geometry kernel, samplers and simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid geodesic: {0}")]
    InvalidGeodesic(String),

    #[error("argument `{name}` out of range: {value} ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("minimizer did not converge after {iterations} iterations (best distance {best})")]
    NonConvergence { iterations: usize, best: f64 },

    #[error("center budget exceeded: more than {budget} centers required")]
    BudgetExceeded { budget: usize },

    #[error("expected line count {expected:.1} exceeds cap {cap}")]
    CapExceeded { expected: f64, cap: f64 },

    #[error("population cap {cap} exceeded in generation {generation} (supercritical blow-up?)")]
    PopulationCap { cap: usize, generation: usize },

    #[error("region not enclosed by window of radius {enclosing_r}")]
    NotEnclosed { enclosing_r: f64 },

    #[error("unsupported functional form: {0}")]
    Unsupported(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("insufficient range for fit: {0}")]
    InsufficientRange(String),

    #[error("task on stream {stream_id} failed: {message}")]
    TaskFailed { stream_id: u64, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            expected,
        })
    }
}
