use thiserror::Error;

use crate::validate::Violation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("box track has no keyframes")]
    EmptyTrack,
    #[error("keyframe timestamps must be strictly increasing")]
    UnorderedKeyframes,
    #[error("bounding box must have finite coordinates and positive width/height")]
    InvalidBox,
    #[error("invalid color {0:?}, expected #RRGGBB")]
    InvalidColor(String),
    #[error("label name must not be empty")]
    EmptyLabelName,
    #[error("timestamp {ts} ms outside annotation span [{start}, {end}]")]
    OutOfSpan { ts: u64, start: u64, end: u64 },
    #[error("split point {at} ms must lie strictly inside ({start}, {end})")]
    InvalidSplitPoint { at: u64, start: u64, end: u64 },
    #[error("annotations do not share one (video, group, label) scope")]
    MixedScope,
    #[error("unsupported export format version {0:?}")]
    UnknownFormatVersion(String),
    #[error("annotation ending at {end_ms} ms exceeds target video duration {video_ms} ms")]
    DurationMismatch { end_ms: u64, video_ms: u64 },
    #[error("annotation references label ({name:?}, {kind}) absent from the document")]
    UnresolvedLabel { name: String, kind: crate::LabelKind },
    #[error("label {0} is not part of the supplied ontology")]
    UnknownLabel(crate::LabelId),
    #[error("invalid annotation: {0:?}")]
    ValidationFailed(Vec<Violation>),
}
