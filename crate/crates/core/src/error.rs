use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate chart at {0}")]
    DegenerateChart(String),
    #[error("point outside the tubular neighbourhood: |t| = {t} >= {delta}")]
    OutOfTube { t: f64, delta: f64 },
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("invalid roughness profile: {0}")]
    InvalidProfile(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("solver breakdown after {iterations} iterations: {reason}")]
    SolverBreakdown { iterations: usize, reason: String },
    #[error("tolerance not reached after {iterations} iterations (relative residual {residual:e})")]
    ToleranceNotReached { iterations: usize, residual: f64 },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("ill-posed boundary condition: {0}")]
    IllPosed(String),
    #[error("compatibility error: {0}")]
    Compatibility(String),
    #[error("decomposition error: {0}")]
    Decomposition(String),
    #[error("slip field assembly failed at sample {index} (s = {location}): {reason}")]
    SlipAssembly { index: usize, location: f64, reason: String },
    #[error("slip field corrupt: {0}")]
    FieldCorrupt(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn at_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}
