//! Occurrence numbering: the sequence number of each appearance of a label
//! along a video. Always derived on read.

use serde::{Deserialize, Serialize};

use crate::annotation::Annotation;
use crate::error::CoreError;
use crate::ids::AnnotationId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OccurrenceAssignment {
    pub annotation_id: AnnotationId,
    pub occurrence: u32,
}

/// Numbers annotations of a single (video, group, label) scope `1..=n` by
/// start time, then creation order, then id.
pub fn compute_occurrences(anns: &[Annotation]) -> Result<Vec<OccurrenceAssignment>, CoreError> {
    if let Some(first) = anns.first() {
        let mixed = anns.iter().any(|a| {
            a.video_id != first.video_id || a.group_id != first.group_id || a.label_id != first.label_id
        });
        if mixed {
            return Err(CoreError::MixedScope);
        }
    }
    let mut order: Vec<&Annotation> = anns.iter().collect();
    order.sort_by_key(|a| (a.start_ms, a.created_seq, a.id));
    Ok(order
        .into_iter()
        .zip(1u32..)
        .map(|(a, occurrence)| OccurrenceAssignment { annotation_id: a.id, occurrence })
        .collect())
}

/// Occurrence numbers for an arbitrary set of annotations of one (video, group)
/// scope, grouped by label internally. Output follows input order.
pub fn occurrences_by_label(anns: &[Annotation]) -> Vec<u32> {
    use std::collections::HashMap;

    let mut by_label: HashMap<_, Vec<Annotation>> = HashMap::new();
    for a in anns {
        by_label.entry((a.video_id, a.group_id, a.label_id)).or_default().push(a.clone());
    }
    let mut numbers = HashMap::new();
    for group in by_label.values() {
        for oa in compute_occurrences(group).expect("grouped by scope") {
            numbers.insert(oa.annotation_id, oa.occurrence);
        }
    }
    anns.iter().map(|a| numbers[&a.id]).collect()
}
