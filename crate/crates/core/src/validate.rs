use serde::{Deserialize, Serialize};

use crate::annotation::Annotation;
use crate::label::Label;

/// One broken annotation rule. Validation reports all of them at once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation")]
pub enum Violation {
    SpanOutOfVideo { end_ms: u64, video_ms: u64 },
    NonPositiveDuration,
    /// Structure label without a box track.
    TrackRequired,
    /// Temporal label carrying a box track.
    TrackForbidden,
    KeyframeOutOfSpan { ts: u64 },
    FirstKeyframeNotAtStart { ts: u64, start_ms: u64 },
}

pub fn validate_annotation(ann: &Annotation, label: &Label, video_duration_ms: u64) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();

    if ann.duration_ms == 0 {
        out.push(Violation::NonPositiveDuration);
    }
    let end = ann.start_ms.saturating_add(ann.duration_ms);
    if end > video_duration_ms {
        out.push(Violation::SpanOutOfVideo { end_ms: end, video_ms: video_duration_ms });
    }

    match (&ann.track, label.kind.is_spatial()) {
        (None, true) => out.push(Violation::TrackRequired),
        (Some(_), false) => out.push(Violation::TrackForbidden),
        (Some(track), true) => {
            let span = ann.span();
            for k in track.keyframes().iter().filter(|k| !span.contains(k.ts)) {
                out.push(Violation::KeyframeOutOfSpan { ts: k.ts });
            }
            let first = track.first().ts;
            if first != ann.start_ms && span.contains(first) {
                out.push(Violation::FirstKeyframeNotAtStart { ts: first, start_ms: ann.start_ms });
            }
        }
        (None, false) => {}
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
