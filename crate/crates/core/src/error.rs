use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate density: no component has a finite weight")]
    DegenerateDensity,
    #[error("numeric failure: {0}")]
    Numeric(&'static str),
    #[error("invalid reference template")]
    InvalidTemplate,
    #[error("instance too large to enumerate ({rows} rows, {detections} detections)")]
    EnumerationBound { rows: usize, detections: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
