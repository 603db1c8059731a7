use thiserror::Error;

/// Crate-wide error type. Every validated constructor and fallible
/// operation reports through this enum.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),

    #[error("invalid gaussian: {0}")]
    InvalidGaussian(String),

    #[error("invalid feature point: {0}")]
    InvalidFeaturePoint(String),

    #[error("invalid pyramid spec: {0}")]
    InvalidPyramid(String),

    #[error("invalid assigner config: {0}")]
    InvalidConfig(String),

    #[error("invalid distance value: {0}")]
    InvalidDistance(String),

    #[error("invalid regression target: {0}")]
    InvalidTarget(String),

    #[error("invalid trial config: {0}")]
    InvalidTrial(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
