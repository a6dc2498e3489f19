use serde::{Deserialize, Serialize};
use tracing::debug;

use vidnote_core::{Annotation, AnnotationId, BoxTrack, Keyframe};

use crate::error::TrackJobError;
use crate::frame::FrameSource;
use crate::kcf::{kcf_init, TrackerParams};

/// Minimum change in any box component, in pixels, before a new keyframe is emitted.
pub const EMIT_THRESHOLD_PX: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrackJobReport {
    pub annotation_id: AnnotationId,
    pub frames_processed: u32,
    pub keyframes_emitted: u32,
    pub min_confidence: f64,
    /// Inclusive `[from_ms, to_ms]` runs of frames below the confidence floor.
    pub low_confidence_spans: Vec<[u64; 2]>,
}

impl TrackJobReport {
    fn new(annotation_id: AnnotationId) -> Self {
        Self {
            annotation_id,
            frames_processed: 0,
            keyframes_emitted: 0,
            min_confidence: 1.0,
            low_confidence_spans: Vec::new(),
        }
    }

    fn record(&mut self, ts: u64, confidence: f64, floor: f64, previous_low: bool) {
        self.frames_processed += 1;
        self.min_confidence = self.min_confidence.min(confidence);
        if confidence < floor {
            match self.low_confidence_spans.last_mut() {
                Some(span) if previous_low => span[1] = ts,
                _ => self.low_confidence_spans.push([ts, ts]),
            }
        }
    }
}

fn median_interval(ts: &[u64]) -> Option<u64> {
    let mut d: Vec<u64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_unstable();
    Some(d[d.len() / 2])
}

/// Tracks the annotation's seed box through `frames`, sampling one frame
/// every `stride_ms`.
///
/// The returned track starts with the annotation's original first keyframe,
/// followed by a keyframe at each processed frame whose proposed box moved
/// more than [`EMIT_THRESHOLD_PX`] from the last emitted one. Later keyframes
/// of the input track are not kept.
pub fn run_track_job(
    frames: &dyn FrameSource,
    ann: &Annotation,
    params: &TrackerParams,
    stride_ms: u64,
) -> Result<(BoxTrack, TrackJobReport), TrackJobError> {
    let seed = *ann.track.as_ref().ok_or(TrackJobError::NoSeed)?.first();
    let stride = stride_ms.max(1);
    let (start, end) = (ann.start_ms, ann.end_ms());
    let ts = frames.timestamps();
    let mut report = TrackJobReport::new(ann.id);

    let gap = |at_ms: u64, reason: &str, partial: &TrackJobReport| TrackJobError::FrameSourceGap {
        at_ms,
        reason: reason.to_string(),
        partial: partial.clone(),
    };

    let max_gap = median_interval(ts).unwrap_or(stride).max(1) * 2;
    let init = match ts.partition_point(|&t| t <= start) {
        0 => return Err(gap(start, "no frame at or before the annotation start", &report)),
        i => i - 1,
    };
    if start - ts[init] > max_gap {
        return Err(gap(start, "nearest frame before the annotation start is too far", &report));
    }
    let frame = frames.frame(init).map_err(|e| gap(ts[init], &e.to_string(), &report))?;
    let mut state = kcf_init(&frame, seed.bbox, *params)?;

    let mut emitted: Vec<Keyframe> = vec![seed];
    let mut last_box = seed.bbox;
    let mut due = ts[init] + stride;
    let mut last_seen = ts[init];
    let mut previous_low = false;

    for (j, &t) in ts.iter().enumerate().skip(init + 1) {
        if t > end {
            break;
        }
        if t - last_seen > max_gap {
            return Err(gap(last_seen, "missing frames", &report));
        }
        last_seen = t;
        if t < due {
            continue;
        }
        while due <= t {
            due += stride;
        }

        let frame = frames.frame(j).map_err(|e| gap(t, &e.to_string(), &report))?;
        let det = state.update(&frame);
        report.record(t, det.confidence, params.confidence_floor, previous_low);
        previous_low = det.confidence < params.confidence_floor;

        if det.bbox.max_component_delta(&last_box) > EMIT_THRESHOLD_PX {
            emitted.push(Keyframe::new(t, det.bbox));
            last_box = det.bbox;
            report.keyframes_emitted += 1;
        }
    }
    if end - last_seen > max_gap {
        return Err(gap(last_seen, "frames end before the annotation does", &report));
    }

    debug!(
        annotation = %ann.id,
        processed = report.frames_processed,
        emitted = report.keyframes_emitted,
        "track job finished"
    );
    let track = BoxTrack::new(emitted).expect("emitted timestamps strictly increase");
    Ok((track, report))
}
