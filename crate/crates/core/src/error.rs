use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),

    #[error("unsupported PGM bit depth (maxval {maxval}); expected 16-bit samples")]
    BitDepth { maxval: u32 },

    #[error("frame has zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },

    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },

    #[error("sample {value} at index {index} cannot be stored as a 16-bit millimeter value")]
    NonIntegralSample { index: usize, value: f64 },

    #[error("no mm_per_pixel available for {0}: provide a sidecar .meta.json or an explicit scale")]
    MissingScale(PathBuf),

    #[error("malformed PLY: {0}")]
    MalformedPly(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("rectangle ({row},{col},{height}x{width}) is outside the {frame_height}x{frame_width} frame")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
        frame_height: usize,
        frame_width: usize,
    },

    #[error("frames differ in shape or scale: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("template {template_height}x{template_width} is not strictly smaller than image {image_height}x{image_width}")]
    TemplateTooLarge {
        template_height: usize,
        template_width: usize,
        image_height: usize,
        image_width: usize,
    },

    #[error("degenerate match: {0}")]
    DegenerateMatch(String),

    #[error("too few points: need more than {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },

    #[error("no row produced two derivative peaks")]
    NoEdges,

    #[error("row {row} has no valid depth on its {side} half")]
    EmptyHalfRow { row: usize, side: &'static str },

    #[error("row {row}: gap of {gap} invalid samples between the bounds")]
    DepthGap { row: usize, gap: usize },

    #[error("no interior local minimum in the area profile")]
    NoLocalMinimum,

    #[error("neck minimum has zero prominence")]
    ZeroProminence,

    #[error("voxel size {voxel_mm} mm is too coarse for a slice extent of {extent_mm} mm")]
    VoxelTooCoarse { voxel_mm: f64, extent_mm: f64 },

    #[error("phantom does not fit the frame: {0}")]
    PhantomOutOfFrame(String),

    #[error("run {run} ({condition}) with seed {seed:#018x} failed: {source}")]
    RunFailed {
        run: usize,
        condition: &'static str,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("reports were produced with different parameters: {}", .0.join(", "))]
    ParameterMismatch(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether this error came from the filesystem or a file format rather than
    /// from the measurement pipeline itself.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::MalformedHeader(_)
                | Error::BitDepth { .. }
                | Error::TruncatedData { .. }
                | Error::MissingScale(_)
                | Error::MalformedPly(_)
                | Error::Json(_)
        )
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedHeader(_) => "malformed_header",
            Error::BitDepth { .. } => "bit_depth",
            Error::ZeroDimension { .. } => "zero_dimension",
            Error::TruncatedData { .. } => "truncated_data",
            Error::NonIntegralSample { .. } => "non_integral_sample",
            Error::MissingScale(_) => "missing_scale",
            Error::MalformedPly(_) => "malformed_ply",
            Error::Json(_) => "json",
            Error::InvalidFrame(_) => "invalid_frame",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Empty(_) => "empty",
            Error::InvalidConfig(_) => "invalid_config",
            Error::TemplateTooLarge { .. } => "template_too_large",
            Error::DegenerateMatch(_) => "degenerate_match",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::NoEdges => "no_edges",
            Error::EmptyHalfRow { .. } => "empty_half_row",
            Error::DepthGap { .. } => "depth_gap",
            Error::NoLocalMinimum => "no_local_minimum",
            Error::ZeroProminence => "zero_prominence",
            Error::VoxelTooCoarse { .. } => "voxel_too_coarse",
            Error::PhantomOutOfFrame(_) => "phantom_out_of_frame",
            Error::RunFailed { .. } => "run_failed",
            Error::ParameterMismatch(_) => "parameter_mismatch",
        }
    }
}
