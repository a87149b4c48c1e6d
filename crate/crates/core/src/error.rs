use thiserror::Error;

pub type Result<T> = std::result::Result<T, CalibError>;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Rendering and actual slopes are equal, so the two line families do
    /// not intersect in isolated points.
    #[error("degenerate lattice: rendering slope equals actual slope")]
    DegenerateLattice,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("ill-conditioned homography: {0}")]
    IllConditioned(String),

    #[error("point out of frame: {0}")]
    OutOfFrame(String),

    #[error("unreliable peak: {0}")]
    UnreliablePeak(String),

    #[error("no candidates: {0}")]
    NoCandidates(String),

    #[error("ambiguous calibration: best candidate match distance {distance:.3e} exceeds {threshold:.3e}")]
    AmbiguousCalibration { distance: f64, threshold: f64 },

    #[error("degenerate observations: {0}")]
    DegenerateObservation(String),

    #[error("offset undetectable: node phase coherence {ratio:.3}")]
    OffsetUndetectable { ratio: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<CalibError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl CalibError {
    /// Wrap an error with the pipeline stage that produced it.
    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        CalibError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage labels.
    pub fn root(&self) -> &CalibError {
        match self {
            CalibError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_config_error(&self) -> bool {
        matches!(
            self.root(),
            CalibError::Config(_) | CalibError::InvalidParameter(_)
        )
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
