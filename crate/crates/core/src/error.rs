use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rank-deficient problem: {0}")]
    RankDeficient(String),

    #[error("flat data: cannot initialize {model} from constant observations")]
    FlatData { model: String },

    #[error("steady state is not unique: kernel dimension {dimension} (expected 1)")]
    DegenerateSteadyState { dimension: usize },

    #[error("zero-power extrapolation invalid: intercept {intercept} Hz is not positive")]
    ExtrapolationInvalid { intercept: f64 },

    #[error("pmf tail mass {tail:.3e} exceeds 1e-9 at n_max = {n_max}; increase n_max")]
    TailMass { tail: f64, n_max: usize },

    #[error("fit failed at power {power} W: {source}")]
    FitAtPower {
        power: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("calibration: {0}")]
    Calibration(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
