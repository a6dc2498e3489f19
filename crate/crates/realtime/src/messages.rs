use serde::{Deserialize, Serialize};

use vidnote_core::{Annotation, AnnotationId, GroupId, UserId, VideoId};

/// Close code sent to a consumer that fell too far behind; it must resubscribe.
pub const CLOSE_RESYNC_REQUIRED: u16 = 4001;

/// An annotation with its store version, as served over REST and in events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VersionedAnnotation {
    #[serde(flatten)]
    pub annotation: Annotation,
    pub version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelKey {
    pub video_id: VideoId,
    pub group_id: Option<GroupId>,
}

impl ChannelKey {
    pub fn new(video_id: VideoId, group_id: Option<GroupId>) -> Self {
        Self { video_id, group_id }
    }

    pub fn of(a: &Annotation) -> Self {
        Self::new(a.video_id, a.group_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Created,
    Updated,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventPayload {
    Annotation(VersionedAnnotation),
    Deleted { id: AnnotationId },
}

impl EventPayload {
    pub fn id(&self) -> AnnotationId {
        match self {
            Self::Annotation(a) => a.annotation.id,
            Self::Deleted { id } => *id,
        }
    }
}

/// An event before the hub assigns it a sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDraft {
    pub key: ChannelKey,
    pub kind: EventKind,
    pub payload: EventPayload,
}

impl EventDraft {
    pub fn created(a: VersionedAnnotation) -> Self {
        Self { key: ChannelKey::of(&a.annotation), kind: EventKind::Created, payload: EventPayload::Annotation(a) }
    }

    pub fn updated(a: VersionedAnnotation) -> Self {
        Self { key: ChannelKey::of(&a.annotation), kind: EventKind::Updated, payload: EventPayload::Annotation(a) }
    }

    pub fn deleted(a: &Annotation) -> Self {
        Self { key: ChannelKey::of(a), kind: EventKind::Deleted, payload: EventPayload::Deleted { id: a.id } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventBody {
    pub seq: u64,
    pub video_id: VideoId,
    #[serde(default)]
    pub group_id: Option<GroupId>,
    pub origin_user_id: UserId,
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    #[serde(rename = "snapshot", rename_all = "camelCase")]
    Snapshot {
        seq: u64,
        video_id: VideoId,
        #[serde(default)]
        group_id: Option<GroupId>,
        annotations: Vec<VersionedAnnotation>,
    },
    #[serde(rename = "annotation.created")]
    Created(EventBody),
    #[serde(rename = "annotation.updated")]
    Updated(EventBody),
    #[serde(rename = "annotation.deleted")]
    Deleted(EventBody),
    #[serde(rename = "unsubscribed", rename_all = "camelCase")]
    Unsubscribed {
        video_id: VideoId,
        #[serde(default)]
        group_id: Option<GroupId>,
    },
    #[serde(rename = "error")]
    Error { code: String, message: String },
}

impl ServerMessage {
    pub fn event(kind: EventKind, body: EventBody) -> Self {
        match kind {
            EventKind::Created => Self::Created(body),
            EventKind::Updated => Self::Updated(body),
            EventKind::Deleted => Self::Deleted(body),
        }
    }

    pub fn as_event(&self) -> Option<(EventKind, &EventBody)> {
        match self {
            Self::Created(b) => Some((EventKind::Created, b)),
            Self::Updated(b) => Some((EventKind::Updated, b)),
            Self::Deleted(b) => Some((EventKind::Deleted, b)),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum ClientMessage {
    #[serde(rename_all = "camelCase")]
    Subscribe {
        video_id: VideoId,
        #[serde(default)]
        group_id: Option<GroupId>,
    },
    #[serde(rename_all = "camelCase")]
    Unsubscribe {
        video_id: VideoId,
        #[serde(default)]
        group_id: Option<GroupId>,
    },
}

impl ClientMessage {
    pub fn key(&self) -> ChannelKey {
        match self {
            Self::Subscribe { video_id, group_id } | Self::Unsubscribe { video_id, group_id } => {
                ChannelKey::new(*video_id, *group_id)
            }
        }
    }
}
