use thiserror::Error;

use crate::sim::Abort;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model evaluation produced a non-finite value at x = {x:?}")]
    ModelEvaluation { x: Vec<f64> },

    #[error("observer evaluation produced a non-finite value at x_hat = {x_hat:?}")]
    ObserverEvaluation { x_hat: Vec<f64> },

    #[error("input component {index} = {value} lies outside the saturation box |u| <= {u_bar}")]
    Saturation { index: usize, value: f64, u_bar: f64 },

    #[error("input penalty undefined: |u| = {value} is not strictly below u_bar = {u_bar}")]
    PenaltyDomain { value: f64, u_bar: f64 },

    #[error("barrier domain: robustified barrier value {h_r} is not positive")]
    BarrierDomain { h_r: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid observer gains: {0}")]
    InvalidGains(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("integration produced a non-finite state at t = {t}")]
    Integration { t: f64 },

    #[error("run aborted at t = {} by monitor: {}", .0.t, .0.reason)]
    Aborted(Box<Abort>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_dim(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what}: expected {want}, got {got}")))
    }
}
