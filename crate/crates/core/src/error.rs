use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("plant diverged at step {step}")]
    Diverged { step: usize, last_state: Vec<f64> },
    #[error("transmission power must be positive, got {0}")]
    InvalidPower(f64),
    #[error("power bisection failed to bracket outage target {target} in [{lo}, {hi}] W")]
    Bracketing { target: f64, lo: f64, hi: f64 },
    #[error("forward cache does not match this network")]
    StaleCache,
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr = {lr})")]
    NonFiniteLoss { lr: f64, epoch: usize, batch: usize },
    #[error("horizon {horizon} needs {needed} samples but trajectory has {available}")]
    HorizonTooLong {
        horizon: usize,
        needed: usize,
        available: usize,
    },
    #[error(
        "riccati iteration failed after {iterations} iterations \
         (update norm {residual:e}, open-loop spectral radius {open_loop_radius:.4})"
    )]
    Unstabilizable {
        iterations: usize,
        residual: f64,
        open_loop_radius: f64,
        closed_loop_radius: Option<f64>,
    },
    #[error("least-squares normal equations are singular even with ridge {ridge:e}")]
    RankDeficient { ridge: f64 },
    #[error("prediction requires {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("operation not supported by the {0} model variant")]
    Variant(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
