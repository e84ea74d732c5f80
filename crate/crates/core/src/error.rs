use std::path::PathBuf;

use thiserror::Error;

/// Counts of candidates rejected at each planning stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RejectionStats {
    pub evaluated: usize,
    pub invalid_pose: usize,
    pub unclosed: usize,
    pub object_penetration: usize,
    pub table_collision: usize,
    pub scored: usize,
}

impl std::fmt::Display for RejectionStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "evaluated={} invalid_pose={} unclosed={} penetration={} table_collision={} scored={}",
            self.evaluated,
            self.invalid_pose,
            self.unclosed,
            self.object_penetration,
            self.table_collision,
            self.scored
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("grazing ray: incidence {theta:.4} rad exceeds limit {limit:.4} rad")]
    GrazingRay { theta: f64, limit: f64 },
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("volume contains no zero crossing")]
    EmptySurface,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("keypoint frame undefined: {0}")]
    FrameUndefined(String),
    #[error("direction undefined for coincident points")]
    UndefinedDirection,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("invalid contact: {0}")]
    InvalidContact(String),
    #[error("no grasp found ({0})")]
    NoGraspFound(RejectionStats),
    #[error("shape `{0}` has no skeleton definition")]
    UnsupportedShape(String),
    #[error("degenerate view: {0}")]
    DegenerateView(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {message}")]
    Parse { what: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Coarse failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    NoResult,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::EmptySurface | Error::NoGraspFound(_) => ErrorKind::NoResult,
            Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
