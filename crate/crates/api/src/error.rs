use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};
use thiserror::Error;
use tracing::error;

use vidnote_core::{CoreError, LabelId};
use vidnote_store::StoreError;

use crate::permissions::PermissionAction;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("missing, malformed, tampered or expired session token")]
    Unauthorized,
    #[error("invalid email or password")]
    InvalidCredentials,
    #[error("account is not activated yet")]
    AccountNotActivated,
    #[error("role may not {0:?}")]
    PermissionDenied(PermissionAction),
    #[error("not a member of group {0}")]
    NotGroupMember(String),
    #[error("{0}")]
    NotFound(String),
    #[error("email already registered")]
    EmailTaken,
    #[error("password must have at least {0} characters")]
    WeakPassword(usize),
    #[error("{kind} {key}: expected version {expected}, current {actual:?}")]
    VersionConflict { kind: String, key: String, expected: u64, actual: Option<u64> },
    #[error("a tracking job is already active")]
    JobAlreadyActive,
    #[error("tracking requires a STRUCTURE label")]
    NotStructure,
    #[error("no decoded frames for this video")]
    FramesUnavailable,
    #[error("label {0} is referenced by annotations")]
    LabelInUse(LabelId),
    #[error("a label with this name and kind already exists")]
    LabelExists,
    #[error("label {0} is outside the group's ontology")]
    LabelNotInGroupOntology(LabelId),
    #[error("video is not part of the group")]
    VideoNotInGroup,
    #[error("video could not be decoded: {0}")]
    ProbeFailed(String),
    #[error(transparent)]
    Core(CoreError),
    #[error("{0}")]
    BadRequest(String),
    #[error("page size {0} outside [1, 200]")]
    InvalidPageSize(usize),
    #[error("requested range not satisfiable")]
    RangeNotSatisfiable { size: u64 },
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::Internal(e.to_string())
    }

    pub fn status(&self) -> StatusCode {
        use ApiError::*;
        match self {
            Unauthorized | InvalidCredentials => StatusCode::UNAUTHORIZED,
            AccountNotActivated | PermissionDenied(_) | NotGroupMember(_) => StatusCode::FORBIDDEN,
            NotFound(_) => StatusCode::NOT_FOUND,
            EmailTaken | VersionConflict { .. } | JobAlreadyActive | FramesUnavailable | LabelInUse(_)
            | LabelExists => StatusCode::CONFLICT,
            WeakPassword(_) | LabelNotInGroupOntology(_) | VideoNotInGroup | NotStructure | ProbeFailed(_)
            | Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
            BadRequest(_) | InvalidPageSize(_) => StatusCode::BAD_REQUEST,
            RangeNotSatisfiable { .. } => StatusCode::RANGE_NOT_SATISFIABLE,
            Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Stable machine-readable code carried in the `error` field.
    pub fn code(&self) -> &'static str {
        use ApiError::*;
        match self {
            Unauthorized => "Unauthorized",
            InvalidCredentials => "InvalidCredentials",
            AccountNotActivated => "AccountNotActivated",
            // Non-membership is a permission failure from the client's point of view.
            PermissionDenied(_) | NotGroupMember(_) => "PermissionDenied",
            NotFound(_) => "NotFound",
            EmailTaken => "EmailTaken",
            WeakPassword(_) => "WeakPassword",
            VersionConflict { .. } => "VersionConflict",
            JobAlreadyActive => "JobAlreadyActive",
            NotStructure => "NotStructure",
            FramesUnavailable => "FramesUnavailable",
            LabelInUse(_) => "LabelInUse",
            LabelExists => "LabelExists",
            LabelNotInGroupOntology(_) => "LabelNotInGroupOntology",
            VideoNotInGroup => "VideoNotInGroup",
            ProbeFailed(_) => "ProbeFailed",
            Core(CoreError::ValidationFailed(_)) => "ValidationFailed",
            Core(CoreError::InvalidSplitPoint { .. }) => "InvalidSplitPoint",
            Core(CoreError::UnknownFormatVersion(_)) => "UnknownFormatVersion",
            Core(CoreError::DurationMismatch { .. }) => "DurationMismatch",
            Core(CoreError::UnresolvedLabel { .. }) => "UnresolvedLabel",
            Core(_) => "InvalidInput",
            BadRequest(_) => "BadRequest",
            InvalidPageSize(_) => "InvalidPageSize",
            RangeNotSatisfiable { .. } => "RangeNotSatisfiable",
            Internal(_) => "Internal",
        }
    }

    fn details(&self) -> Value {
        match self {
            Self::VersionConflict { expected, actual, .. } => json!({ "expected": expected, "actual": actual }),
            Self::Core(CoreError::ValidationFailed(v)) => json!(v),
            Self::PermissionDenied(action) => json!({ "action": action }),
            _ => Value::Null,
        }
    }

    pub fn body(&self) -> Value {
        json!({ "error": self.code(), "message": self.to_string(), "details": self.details() })
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::VersionConflict { collection, key, expected, actual } => {
                Self::VersionConflict { kind: collection.to_string(), key, expected, actual }
            }
            StoreError::NotFound { collection, key } => Self::NotFound(format!("{collection}/{key} not found")),
            StoreError::LabelInUse(id) => Self::LabelInUse(id),
            StoreError::InvalidPageSize(n) => Self::InvalidPageSize(n),
            StoreError::BlobMissing(r) => Self::NotFound(format!("blob {r} missing")),
            other => Self::Internal(other.to_string()),
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        Self::Core(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            error!(error = %self, "request failed");
        }
        let mut resp = (status, Json(self.body())).into_response();
        if let Self::RangeNotSatisfiable { size } = self {
            if let Ok(v) = format!("bytes */{size}").parse() {
                resp.headers_mut().insert(axum::http::header::CONTENT_RANGE, v);
            }
        }
        resp
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
