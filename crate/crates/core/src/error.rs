use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    /// Pool indices that point outside the tensor they are supposed to address.
    #[error("corrupt pooling indices: {0}")]
    Corruption(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no counterpart for stem `{stem}` in {dir}")]
    Pairing { stem: String, dir: PathBuf },

    #[error("cannot decode {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("size error: {0}")]
    Size(String),

    #[error("sample {id}: {reason}")]
    Sample { id: usize, reason: String },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:?}, expected \"HCNN\"")]
    Magic([u8; 4]),

    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),

    #[error("parameter `{name}` has shape {found:?}, network expects {expected:?}")]
    ShapeMismatch {
        name: String,
        found: [usize; 4],
        expected: [usize; 4],
    },

    #[error("parameter set mismatch: {0}")]
    Layout(String),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
