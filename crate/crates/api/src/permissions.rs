use serde::{Deserialize, Serialize};

use vidnote_store::Role;

/// Actions gated by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PermissionAction {
    AnnotateVideo,
    AddVideo,
    DeleteVideo,
    AddUser,
    DeleteUser,
}

impl PermissionAction {
    pub const ALL: [PermissionAction; 5] =
        [Self::AnnotateVideo, Self::AddVideo, Self::DeleteVideo, Self::AddUser, Self::DeleteUser];
}

pub fn authorize(role: Role, action: PermissionAction) -> bool {
    use PermissionAction::*;
    match role {
        Role::Admin => true,
        Role::Moderator => matches!(action, AnnotateVideo | AddVideo | DeleteVideo),
        Role::Annotator => action == AnnotateVideo,
    }
}
