//! Annotation domain model for collaborative video annotation.
//!
//! Everything here is a pure value type or a pure function: labels and their
//! taxonomy, keyframed bounding-box tracks with linear interpolation, split,
//! occurrence numbering, validation and the JSON exchange document.

pub mod annotation;
pub mod error;
pub mod exchange;
pub mod geometry;
pub mod ids;
pub mod label;
pub mod occurrence;
pub mod validate;

pub use annotation::{split_annotation, Annotation};
pub use error::CoreError;
pub use exchange::{export_document, import_document, ExportDocument, ImportPlan, VideoInfo};
pub use geometry::{interpolate_box, BoundingBox, BoxTrack, Interpolation, Keyframe, TimeSpan};
pub use ids::{AnnotationId, GroupId, JobId, LabelId, UserId, VideoId};
pub use label::{Color, Label, LabelKind};
pub use occurrence::{compute_occurrences, occurrences_by_label, OccurrenceAssignment};
pub use validate::{validate_annotation, Violation};
