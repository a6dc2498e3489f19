use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geometry::{BoundingBox, BoxTrack, Keyframe, TimeSpan};
use crate::ids::{AnnotationId, GroupId, LabelId, UserId, VideoId};

/// A labeled time interval on a video, optionally carrying a keyframed box
/// track (spatio-temporal labels only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Annotation {
    pub id: AnnotationId,
    pub video_id: VideoId,
    pub label_id: LabelId,
    pub start_ms: u64,
    pub duration_ms: u64,
    #[serde(default)]
    pub is_false_positive: bool,
    pub created_by: UserId,
    #[serde(default)]
    pub group_id: Option<GroupId>,
    #[serde(default)]
    pub track: Option<BoxTrack>,
    #[serde(default)]
    pub show_label_on_viewer: bool,
    /// Monotonic creation order, assigned on persist; breaks ties between
    /// annotations with equal start times.
    #[serde(default)]
    pub created_seq: u64,
}

impl Annotation {
    pub fn end_ms(&self) -> u64 {
        self.start_ms.saturating_add(self.duration_ms)
    }

    pub fn span(&self) -> TimeSpan {
        TimeSpan::new(self.start_ms, self.duration_ms)
    }

    /// Box at time `t`, if this annotation carries a track.
    pub fn box_at(&self, t: u64) -> Option<BoundingBox> {
        self.track.as_ref().map(|tr| tr.interpolate(t))
    }

    pub fn insert_keyframe(&self, t: u64, bbox: BoundingBox) -> Result<Annotation, CoreError> {
        let track = match &self.track {
            Some(tr) => tr.with_keyframe(self.span(), t, bbox)?,
            None => {
                let span = self.span();
                if !span.contains(t) {
                    return Err(CoreError::OutOfSpan { ts: t, start: span.start, end: span.end });
                }
                BoxTrack::single(t, bbox)
            }
        };
        Ok(Annotation { track: Some(track), ..self.clone() })
    }
}

/// Splits `ann` at `at` into `[start, at)` and `[at, end)`.
///
/// Both halves receive fresh ids and inherit every other property. A track is
/// partitioned by timestamp and the interpolated box at `at` is duplicated as
/// the last keyframe of the left half and the first of the right half, so the
/// geometry at every instant is unchanged.
pub fn split_annotation(ann: &Annotation, at: u64) -> Result<(Annotation, Annotation), CoreError> {
    let (start, end) = (ann.start_ms, ann.end_ms());
    if at <= start || at >= end {
        return Err(CoreError::InvalidSplitPoint { at, start, end });
    }

    let (left_track, right_track) = match &ann.track {
        None => (None, None),
        Some(track) => {
            let boundary = Keyframe::new(at, track.interpolate(at));
            let kfs = track.keyframes();
            let cut = kfs.partition_point(|k| k.ts < at);

            let mut left: Vec<Keyframe> = kfs[..cut].to_vec();
            left.push(boundary);
            let mut right = vec![boundary];
            right.extend(kfs[cut..].iter().copied().filter(|k| k.ts != at));

            (Some(BoxTrack::new(left)?), Some(BoxTrack::new(right)?))
        }
    };

    let left = Annotation {
        id: AnnotationId::new(),
        duration_ms: at - start,
        track: left_track,
        ..ann.clone()
    };
    let right = Annotation {
        id: AnnotationId::new(),
        start_ms: at,
        duration_ms: end - at,
        track: right_track,
        ..ann.clone()
    };
    Ok((left, right))
}
