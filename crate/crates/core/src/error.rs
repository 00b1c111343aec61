use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter outside its mathematical domain (non-positive gain, n0, ...).
    #[error("{name} must be {requirement}, got {value}")]
    Domain {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error(
        "the signed validation model is only accepted by the Lyapunov estimator in validation mode"
    )]
    ValidationOnly,

    #[error("invalid model spec `{spec}`: {reason}")]
    ModelSpec { spec: String, reason: String },

    #[error("configuration error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error(
        "series of length {len} is too short for burn-in {burn_in} (need at least {needed} points)"
    )]
    SeriesTooShort {
        len: usize,
        burn_in: usize,
        needed: usize,
    },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error(
        "no sign change of the Lyapunov exponent within {doublings} doublings from g = {g_init}"
    )]
    Unbracketable { g_init: f64, doublings: u32 },

    #[error("estimator `{kind}` requires {requirement}")]
    Estimator {
        kind: &'static str,
        requirement: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Unbracketable { .. } | Error::Degenerate(_))
    }
}

/// Checks `value > 0` and finite.
pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            requirement: "strictly positive and finite",
            value,
        })
    }
}
