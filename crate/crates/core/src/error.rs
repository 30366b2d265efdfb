use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("landmark {label} has non-finite coordinates")]
    InvalidLandmark { label: u8 },
    #[error("landmark label {0} is outside 0..=54")]
    LabelOutOfRange(u8),
    #[error("duplicate landmark label {0}")]
    DuplicateLabel(u8),
    #[error("landmark set is missing label {0}")]
    IncompleteLandmarkSet(u8),
    #[error("a full landmark set needs 55 points, got {0}")]
    WrongLandmarkCount(usize),
    #[error("expected a {expected_w}x{expected_h} frame, got {width}x{height}")]
    SizeMismatch {
        expected_w: u32,
        expected_h: u32,
        width: u32,
        height: u32,
    },
    #[error("component d{0} is not finite")]
    NonFinite(usize),
    #[error("component d{0} must be strictly positive")]
    NonPositive(usize),
    #[error("landmark bounding box has zero area")]
    DegenerateBox,
    #[error("calibration is degenerate on d{0}: the pixel distance must be positive")]
    CalibrationDegenerate(usize),
    #[error("no calibration records")]
    EmptyCalibration,
    #[error("reference points coincide")]
    CoincidentReferencePoints,
    #[error("reference length must be positive and finite")]
    InvalidReferenceLength,
    #[error("database is empty")]
    EmptyDatabase,
    #[error("duplicate record for subject {subject_id} ({side})")]
    DuplicateRecord {
        subject_id: String,
        side: &'static str,
    },
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("triangle {triangle} references vertex {index}, mesh has {vertex_count}")]
    VertexIndexOutOfRange {
        triangle: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("triangle {0} repeats a vertex index")]
    DegenerateTriangle(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("shape error at {layer}: {detail}")]
    Shape { layer: String, detail: String },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
