//! Self-contained JSON export/import of a video's annotation set.
//!
//! Labels travel by `(name, kind)` rather than by id, so a document exported
//! from one platform can be imported into another.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotation::Annotation;
use crate::error::CoreError;
use crate::geometry::BoxTrack;
use crate::ids::{AnnotationId, GroupId, LabelId, UserId, VideoId};
use crate::label::{Color, Label, LabelKind};
use crate::occurrence::occurrences_by_label;
use crate::validate::validate_annotation;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExportDocument {
    pub format_version: String,
    pub video_name: String,
    pub video_duration_ms: u64,
    pub labels: Vec<ExportLabel>,
    pub annotations: Vec<ExportAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportLabel {
    pub name: String,
    pub color: Color,
    pub kind: LabelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExportAnnotation {
    pub id: AnnotationId,
    pub label_name: String,
    pub label_kind: LabelKind,
    pub start_ms: u64,
    pub duration_ms: u64,
    pub is_false_positive: bool,
    pub created_by: UserId,
    /// Advisory; recomputed after import.
    #[serde(default)]
    pub occurrence: u32,
    #[serde(default)]
    pub track: Option<BoxTrack>,
    #[serde(default)]
    pub show_label_on_viewer: bool,
}

/// Video metadata needed on either side of an export.
#[derive(Debug, Clone)]
pub struct VideoInfo {
    pub id: VideoId,
    pub name: String,
    pub duration_ms: u64,
}

pub fn export_document(video: &VideoInfo, labels: &[Label], anns: &[Annotation]) -> Result<ExportDocument, CoreError> {
    if anns.iter().any(|a| a.video_id != video.id) {
        return Err(CoreError::MixedScope);
    }
    let by_id: HashMap<LabelId, &Label> = labels.iter().map(|l| (l.id, l)).collect();

    let mut sorted: Vec<Annotation> = anns.to_vec();
    sorted.sort_by_key(|a| (a.start_ms, a.created_seq, a.id));
    let occurrences = occurrences_by_label(&sorted);

    let mut used: Vec<&Label> = Vec::new();
    let mut annotations = Vec::with_capacity(sorted.len());
    for (a, occurrence) in sorted.iter().zip(occurrences) {
        let label = *by_id.get(&a.label_id).ok_or(CoreError::UnknownLabel(a.label_id))?;
        if !used.iter().any(|l| l.id == label.id) {
            used.push(label);
        }
        annotations.push(ExportAnnotation {
            id: a.id,
            label_name: label.name.clone(),
            label_kind: label.kind,
            start_ms: a.start_ms,
            duration_ms: a.duration_ms,
            is_false_positive: a.is_false_positive,
            created_by: a.created_by,
            occurrence,
            track: a.track.clone(),
            show_label_on_viewer: a.show_label_on_viewer,
        });
    }
    used.sort_by(|a, b| (a.kind, &a.name).cmp(&(b.kind, &b.name)));

    Ok(ExportDocument {
        format_version: FORMAT_VERSION.to_string(),
        video_name: video.name.clone(),
        video_duration_ms: video.duration_ms,
        labels: used
            .into_iter()
            .map(|l| ExportLabel { name: l.name.clone(), color: l.color.clone(), kind: l.kind })
            .collect(),
        annotations,
    })
}

/// Outcome of resolving a document against a target video and the platform
/// ontology. Nothing is persisted; the caller commits both lists together.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportPlan {
    /// Labels absent from the platform, created with the document's color.
    pub new_labels: Vec<Label>,
    /// Annotations with fresh ids, in document order.
    pub annotations: Vec<Annotation>,
}

pub fn import_document(
    doc: &ExportDocument,
    target: &VideoInfo,
    group_id: Option<GroupId>,
    platform_labels: &[Label],
) -> Result<ImportPlan, CoreError> {
    if doc.format_version != FORMAT_VERSION {
        return Err(CoreError::UnknownFormatVersion(doc.format_version.clone()));
    }

    let doc_labels: HashMap<(&str, LabelKind), &ExportLabel> =
        doc.labels.iter().map(|l| ((l.name.as_str(), l.kind), l)).collect();
    let mut resolved: HashMap<(String, LabelKind), Label> = platform_labels
        .iter()
        .map(|l| ((l.name.clone(), l.kind), l.clone()))
        .collect();
    let mut new_labels = Vec::new();
    let mut annotations = Vec::with_capacity(doc.annotations.len());

    for (seq, ea) in doc.annotations.iter().enumerate() {
        let key = (ea.label_name.as_str(), ea.label_kind);
        let doc_label = doc_labels.get(&key).ok_or_else(|| CoreError::UnresolvedLabel {
            name: ea.label_name.clone(),
            kind: ea.label_kind,
        })?;

        let end_ms = ea.start_ms.saturating_add(ea.duration_ms);
        if end_ms > target.duration_ms {
            return Err(CoreError::DurationMismatch { end_ms, video_ms: target.duration_ms });
        }

        let label = match resolved.get(&(ea.label_name.clone(), ea.label_kind)) {
            Some(l) => l.clone(),
            None => {
                let l = Label::new(doc_label.name.clone(), doc_label.color.clone(), doc_label.kind)?;
                resolved.insert((l.name.clone(), l.kind), l.clone());
                new_labels.push(l.clone());
                l
            }
        };

        let ann = Annotation {
            id: AnnotationId::new(),
            video_id: target.id,
            label_id: label.id,
            start_ms: ea.start_ms,
            duration_ms: ea.duration_ms,
            is_false_positive: ea.is_false_positive,
            created_by: ea.created_by,
            group_id,
            track: ea.track.clone(),
            show_label_on_viewer: ea.show_label_on_viewer,
            created_seq: seq as u64,
        };
        validate_annotation(&ann, &label, target.duration_ms).map_err(CoreError::ValidationFailed)?;
        annotations.push(ann);
    }

    Ok(ImportPlan { new_labels, annotations })
}
