use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate rotation: quaternion has zero norm")]
    DegenerateRotation,

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("dimension mismatch for {what}: expected {expected_w}x{expected_h}, found {found_w}x{found_h}")]
    DimensionMismatch {
        what: String,
        expected_w: u32,
        expected_h: u32,
        found_w: u32,
        found_h: u32,
    },

    #[error("malformed PLY at byte {offset}: {message}")]
    MalformedPly { offset: usize, message: String },

    #[error("initial point cloud is empty")]
    EmptyInit,

    #[error("unknown synthetic preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),

    #[error("config error at line {line}, column {column}: {message}")]
    Config {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid override `{0}`")]
    Override(String),

    #[error("non-finite loss at iteration {iter}")]
    NonFiniteLoss {
        iter: u64,
        snapshot: Box<crate::cloud::GaussianCloud>,
    },

    #[error("image error: {0}")]
    Image(#[from] ::image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
