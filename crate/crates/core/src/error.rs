use thiserror::Error;

/// Errors produced by the synthesis, verification and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("in-degree bound too small at node {node}: bound {bound} < in-degree {in_degree}")]
    BoundTooSmall {
        node: usize,
        bound: f64,
        in_degree: f64,
    },

    #[error("eigenvalue {target} is not simple (multiplicity {multiplicity})")]
    ZeroNotSimple { target: f64, multiplicity: usize },

    #[error("matrix is not neutrally stable: {0}")]
    NotNeutrallyStable(String),

    #[error("matrix is not Schur stable (spectral radius {0})")]
    NotSchur(f64),

    #[error("matrix is not Hurwitz stable (spectral abscissa {0})")]
    NotHurwitz(f64),

    #[error("system is not uniform rank one: rank(CB) = {rank_cb}, inputs = {inputs}")]
    NotUniformRankOne { rank_cb: usize, inputs: usize },

    #[error("system is not left-invertible: normal rank {normal_rank} < inputs {inputs}")]
    NotLeftInvertible { normal_rank: usize, inputs: usize },

    #[error("(A11, Cbar) is not detectable: unobservable mode {0}")]
    DetectabilityLost(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("observer design failed: {0}")]
    ObserverDesignFailed(String),

    #[error("invalid gain: {0}")]
    InvalidGain(String),

    #[error("epsilon {epsilon} exceeds certified bound {bound}")]
    EpsilonTooLarge { epsilon: f64, bound: f64 },

    #[error("delta {delta} exceeds certified bound {bound}")]
    DeltaTooLarge { delta: f64, bound: f64 },

    #[error("supplied certificate rejected: {0}")]
    InvalidCertificate(String),

    #[error("simulation diverged at t = {time} (sync error {sync_error:e})")]
    Divergence { time: f64, sync_error: f64 },

    #[error("stacked spectrum does not match decoupled blocks (worst mismatch {0:e})")]
    SpectrumMismatch(f64),

    #[error("model is not single-input single-output ({inputs} inputs, {outputs} outputs)")]
    NotSiso { inputs: usize, outputs: usize },

    #[error("time domain mismatch: {0}")]
    TimeDomainMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
