use std::collections::BTreeSet;
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use vidnote_core::{Annotation, AnnotationId, GroupId, JobId, Label, LabelId, UserId, VideoId};
use vidnote_tracker::TrackJobReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Collection {
    Users,
    Videos,
    Labels,
    Groups,
    Annotations,
    Jobs,
    Idempotency,
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Users => "users",
            Self::Videos => "videos",
            Self::Labels => "labels",
            Self::Groups => "groups",
            Self::Annotations => "annotations",
            Self::Jobs => "jobs",
            Self::Idempotency => "idempotency",
        };
        f.write_str(s)
    }
}

/// A value stored in one collection under a string key.
pub trait Record: Serialize + DeserializeOwned + Clone {
    const COLLECTION: Collection;
    fn key(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Admin,
    Moderator,
    Annotator,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Admin, Role::Moderator, Role::Annotator];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserRecord {
    pub id: UserId,
    pub email: String,
    pub display_name: String,
    pub password_hash: String,
    pub role: Role,
    pub is_activated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VideoStatus {
    ToAnnotate,
    Annotating,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VideoRecord {
    pub id: VideoId,
    pub name: String,
    pub duration_ms: u64,
    pub frame_rate: f64,
    pub width: u32,
    pub height: u32,
    pub blob_ref: String,
    #[serde(default)]
    pub mime_type: Option<String>,
    #[serde(default)]
    pub thumbnail_ref: Option<String>,
    pub status: VideoStatus,
    #[serde(default)]
    pub uploaded_by: Option<UserId>,
    #[serde(default)]
    pub bookmarked_by: BTreeSet<UserId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupRecord {
    pub id: GroupId,
    pub name: String,
    #[serde(default)]
    pub video_ids: BTreeSet<VideoId>,
    #[serde(default)]
    pub label_ids: BTreeSet<LabelId>,
    #[serde(default)]
    pub member_ids: BTreeSet<UserId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Done | Self::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JobRecord {
    pub id: JobId,
    pub annotation_id: AnnotationId,
    pub state: JobState,
    #[serde(default)]
    pub report: Option<TrackJobReport>,
    #[serde(default)]
    pub error: Option<String>,
}

/// Maps a client-chosen idempotency key to the annotation it created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IdempotencyRecord {
    pub user_id: UserId,
    pub key: String,
    pub annotation_id: AnnotationId,
}

impl IdempotencyRecord {
    pub fn storage_key(user: UserId, key: &str) -> String {
        format!("{user}:{key}")
    }
}

impl Record for UserRecord {
    const COLLECTION: Collection = Collection::Users;
    fn key(&self) -> String {
        self.id.to_string()
    }
}

impl Record for VideoRecord {
    const COLLECTION: Collection = Collection::Videos;
    fn key(&self) -> String {
        self.id.to_string()
    }
}

impl Record for Label {
    const COLLECTION: Collection = Collection::Labels;
    fn key(&self) -> String {
        self.id.to_string()
    }
}

impl Record for GroupRecord {
    const COLLECTION: Collection = Collection::Groups;
    fn key(&self) -> String {
        self.id.to_string()
    }
}

impl Record for Annotation {
    const COLLECTION: Collection = Collection::Annotations;
    fn key(&self) -> String {
        self.id.to_string()
    }
}

impl Record for JobRecord {
    const COLLECTION: Collection = Collection::Jobs;
    fn key(&self) -> String {
        self.id.to_string()
    }
}

impl Record for IdempotencyRecord {
    const COLLECTION: Collection = Collection::Idempotency;
    fn key(&self) -> String {
        Self::storage_key(self.user_id, &self.key)
    }
}
