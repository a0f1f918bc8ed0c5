use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimension or index mismatch between collaborating values.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid model, experiment or filter configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("simulation diverged at substep {substep}")]
    Diverged { substep: usize },

    #[error("optimizer received non-finite gradients; update skipped")]
    NonFiniteGradient,

    #[error("non-finite loss in {0}; update aborted")]
    NonFiniteLoss(&'static str),

    #[error("action sampling produced a non-finite value: {0}")]
    Sampling(String),

    #[error("inverse kinematics failed at frame {frame}: {source}")]
    Ik {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no complete cycles found: {0}")]
    NoCycles(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse { path: path.into(), message: message.to_string() }
    }
}

macro_rules! ensure_dim {
    ($got:expr, $want:expr, $what:expr) => {
        if $got != $want {
            return Err($crate::Error::Contract(format!(
                "{}: expected {}, got {}",
                $what, $want, $got
            )));
        }
    };
}
pub(crate) use ensure_dim;
