//! Per-channel event hub for annotation lifecycle events.
//!
//! A channel is one video within one group scope (or the default scope).
//! Transport is left to the caller: connections expose an outbox of
//! serialized JSON messages and a close signal.

pub mod hub;
pub mod messages;
pub mod replay;

pub use hub::{Connection, Hub, Outbound, Outbox, EVENT_BUFFER};
pub use messages::{
    ChannelKey, ClientMessage, EventBody, EventDraft, EventKind, EventPayload, ServerMessage, VersionedAnnotation,
    CLOSE_RESYNC_REQUIRED,
};
pub use replay::{Replica, ReplayError};
