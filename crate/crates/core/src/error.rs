use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("kernel {kernel_width}x{kernel_height} does not fit image {width}x{height}")]
    KernelTooLarge {
        kernel_width: usize,
        kernel_height: usize,
        width: usize,
        height: usize,
    },

    #[error("kernel sides must be odd, got {0}x{1}")]
    EvenKernelSize(usize, usize),

    #[error("empty sequence")]
    EmptySequence,

    #[error("linear solver diverged: {0}")]
    SolverDiverged(String),

    #[error("kernel projection clipped every weight")]
    DegenerateProjection,

    #[error("spectrum has a non-positive coefficient at index {0}")]
    NonpositiveSpectrum(usize),

    #[error("registration made no progress at the first iteration")]
    NoDecrease,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_frame(self, index: usize) -> Self {
        Error::Frame {
            index,
            source: Box::new(self),
        }
    }
}
