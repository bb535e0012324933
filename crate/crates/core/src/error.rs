use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid token {token} (vocab size {vocab_size})")]
    InvalidToken { token: u32, vocab_size: usize },
    #[error("position {0} is already decoded")]
    DoubleDecode(usize),
    #[error("state still has {0} masked positions")]
    IncompleteState(usize),
    #[error("non-finite activation in layer {layer}")]
    NumericalOverflow { layer: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("schedule asks for {requested} positions but only {available} are masked in the active region")]
    ScheduleOverrun { requested: usize, available: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("trajectory record corrupt: {0}")]
    TrajectoryCorrupt(String),
    #[error("prompt contains a mask token at position {0}")]
    PromptMasked(usize),
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
