use thiserror::Error;

/// Errors produced by the toolkit.
///
/// Variants map onto distinct failure classes so front-ends can assign exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("impulse response of length {len} does not fit in an FFT of size {fft_size}")]
    Truncation { len: usize, fft_size: usize },

    #[error("format error at `{path}`: {message}")]
    Format { path: String, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("FFT size {fft_size} too small: {required} samples required")]
    Sizing { required: usize, fft_size: usize },

    #[error("infeasible acoustics: {0}")]
    InfeasibleAcoustics(String),

    #[error("cannot realize SIR: {0}")]
    CannotRealizeSir(String),

    #[error("degenerate metric input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
