//! Request and response bodies of the REST surface.

use serde::{Deserialize, Deserializer, Serialize};

use vidnote_core::{AnnotationId, BoxTrack, Color, GroupId, JobId, Keyframe, Label, LabelId, LabelKind, UserId, VideoId};
use vidnote_realtime::VersionedAnnotation;
use vidnote_store::{
    GroupRecord, JobRecord, JobState, Role, UserRecord, Versioned, VideoRecord, VideoStatus,
};
use vidnote_tracker::TrackJobReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserView {
    pub id: UserId,
    pub email: String,
    pub display_name: String,
    pub role: Role,
    pub is_activated: bool,
}

impl From<&UserRecord> for UserView {
    fn from(u: &UserRecord) -> Self {
        Self {
            id: u.id,
            email: u.email.clone(),
            display_name: u.display_name.clone(),
            role: u.role,
            is_activated: u.is_activated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VideoView {
    pub id: VideoId,
    pub name: String,
    pub duration_ms: u64,
    pub frame_rate: f64,
    pub width: u32,
    pub height: u32,
    pub blob_ref: String,
    pub mime_type: Option<String>,
    pub thumbnail_ref: Option<String>,
    pub status: VideoStatus,
    pub uploaded_by: Option<UserId>,
    /// Whether the requesting user bookmarked the video.
    pub bookmarked: bool,
    pub version: u64,
}

impl VideoView {
    pub fn new(v: &Versioned<VideoRecord>, viewer: Option<UserId>) -> Self {
        let r = &v.record;
        Self {
            id: r.id,
            name: r.name.clone(),
            duration_ms: r.duration_ms,
            frame_rate: r.frame_rate,
            width: r.width,
            height: r.height,
            blob_ref: r.blob_ref.clone(),
            mime_type: r.mime_type.clone(),
            thumbnail_ref: r.thumbnail_ref.clone(),
            status: r.status,
            uploaded_by: r.uploaded_by,
            bookmarked: viewer.is_some_and(|u| r.bookmarked_by.contains(&u)),
            version: v.version,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupView {
    #[serde(flatten)]
    pub group: GroupRecord,
    pub version: u64,
}

impl From<Versioned<GroupRecord>> for GroupView {
    fn from(v: Versioned<GroupRecord>) -> Self {
        Self { group: v.record, version: v.version }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JobView {
    pub id: JobId,
    pub annotation_id: AnnotationId,
    pub state: JobState,
    pub report: Option<TrackJobReport>,
    pub error: Option<String>,
    pub version: u64,
}

impl From<Versioned<JobRecord>> for JobView {
    fn from(v: Versioned<JobRecord>) -> Self {
        let r = v.record;
        Self { id: r.id, annotation_id: r.annotation_id, state: r.state, report: r.report, error: r.error, version: v.version }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignupRequest {
    pub email: String,
    pub display_name: String,
    pub password: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LoginRequest {
    pub email: String,
    pub password: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoginResponse {
    pub token: String,
    /// Seconds since the Unix epoch.
    pub expires_at: u64,
    pub user: UserView,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserPatch {
    pub role: Option<Role>,
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VideoQuery {
    pub search: Option<String>,
    /// Only videos bookmarked by the caller.
    pub bookmarked: Option<bool>,
    pub status: Option<VideoStatus>,
    pub group_id: Option<GroupId>,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VideoPatch {
    pub name: Option<String>,
    pub status: Option<VideoStatus>,
    pub version: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NewLabel {
    pub name: String,
    pub color: Color,
    pub kind: LabelKind,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScopeQuery {
    pub group_id: Option<GroupId>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NewAnnotation {
    pub video_id: VideoId,
    pub label_id: LabelId,
    pub start_ms: u64,
    pub duration_ms: u64,
    #[serde(default)]
    pub is_false_positive: bool,
    #[serde(default)]
    pub group_id: Option<GroupId>,
    #[serde(default)]
    pub track: Option<BoxTrack>,
    #[serde(default)]
    pub show_label_on_viewer: bool,
}

fn present<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    T::deserialize(d).map(Some)
}

/// Keyframe edits applied after any whole-track replacement.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct KeyframeEdits {
    #[serde(default)]
    pub remove: Vec<u64>,
    /// Inserted, or replacing the keyframe at the same timestamp.
    #[serde(default)]
    pub set: Vec<Keyframe>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnnotationPatch {
    /// Version the edit was based on.
    pub version: u64,
    pub label_id: Option<LabelId>,
    pub start_ms: Option<u64>,
    pub duration_ms: Option<u64>,
    pub is_false_positive: Option<bool>,
    pub show_label_on_viewer: Option<bool>,
    /// Absent leaves the track alone, `null` removes it, an object replaces it.
    #[serde(default, deserialize_with = "present")]
    pub track: Option<Option<BoxTrack>>,
    pub keyframes: Option<KeyframeEdits>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct VersionQuery {
    pub version: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitRequest {
    pub at_ms: u64,
    pub version: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrackRequest {
    pub stride_ms: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ImportResult {
    pub labels_created: Vec<Label>,
    pub annotations: Vec<VersionedAnnotation>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NewGroup {
    pub name: String,
}
