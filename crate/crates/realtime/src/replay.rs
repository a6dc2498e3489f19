use std::collections::BTreeMap;

use thiserror::Error;

use vidnote_core::AnnotationId;

use crate::messages::{EventKind, EventPayload, ServerMessage, VersionedAnnotation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("event before snapshot")]
    NoSnapshot,
    #[error("expected seq {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("{kind:?} event carries the wrong payload shape")]
    BadPayload { kind: EventKind },
}

/// Client-side state of one channel rebuilt from a snapshot and the events after it.
#[derive(Debug, Clone, Default)]
pub struct Replica {
    seq: Option<u64>,
    annotations: BTreeMap<AnnotationId, VersionedAnnotation>,
}

impl Replica {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn seq(&self) -> Option<u64> {
        self.seq
    }

    /// Applies one message. Events must arrive with consecutive sequence numbers.
    pub fn apply(&mut self, msg: &ServerMessage) -> Result<(), ReplayError> {
        if let ServerMessage::Snapshot { seq, annotations, .. } = msg {
            self.seq = Some(*seq);
            self.annotations = annotations.iter().map(|a| (a.annotation.id, a.clone())).collect();
            return Ok(());
        }
        let Some((kind, body)) = msg.as_event() else { return Ok(()) };
        let last = self.seq.ok_or(ReplayError::NoSnapshot)?;
        if body.seq != last + 1 {
            return Err(ReplayError::OutOfOrder { expected: last + 1, got: body.seq });
        }
        self.seq = Some(body.seq);
        match (kind, &body.payload) {
            (EventKind::Deleted, p) => {
                self.annotations.remove(&p.id());
            }
            (_, EventPayload::Annotation(a)) => {
                self.annotations.insert(a.annotation.id, a.clone());
            }
            (kind, EventPayload::Deleted { .. }) => return Err(ReplayError::BadPayload { kind }),
        }
        Ok(())
    }

    /// Current annotations ordered by id.
    pub fn annotations(&self) -> Vec<VersionedAnnotation> {
        self.annotations.values().cloned().collect()
    }
}
