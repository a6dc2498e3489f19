//! Axum handlers. Each one extracts its inputs and runs the matching
//! [`App`] operation on the blocking pool.

use std::io::{Read, Seek, SeekFrom};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Multipart, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::io::AsyncWriteExt;
use tokio::net::TcpListener;

use vidnote_core::{AnnotationId, ExportDocument, GroupId, JobId, LabelId, UserId, VideoId};

use crate::error::{ApiError, ApiResult};
use crate::model::*;
use crate::service::{Actor, App, GroupEdit};

type AppState = State<Arc<App>>;

const STREAM_CHUNK: usize = 64 * 1024;
const JSON_LIMIT: usize = 64 * 1024 * 1024;

/// JSON body whose rejection is reported in the API error format.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| Self(v))
            .map_err(|e: JsonRejection| ApiError::BadRequest(e.body_text()))
    }
}

pub struct PathArg<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned + Send> FromRequestParts<S> for PathArg<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        Path::<T>::from_request_parts(parts, state)
            .await
            .map(|Path(v)| Self(v))
            .map_err(|e: PathRejection| ApiError::BadRequest(e.body_text()))
    }
}

pub struct QueryArg<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for QueryArg<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| Self(v))
            .map_err(|e: QueryRejection| ApiError::BadRequest(e.body_text()))
    }
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

/// Bearer token from the `Authorization` header or, for media elements and
/// websockets, the `token` query parameter.
fn bearer(parts: &Parts) -> Option<String> {
    let from_header = parts
        .headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string());
    from_header.or_else(|| {
        let q = parts.uri.query()?;
        query_token(q)
    })
}

fn query_token(q: &str) -> Option<String> {
    Query::<TokenQuery>::try_from_uri(&format!("/?{q}").parse().ok()?).ok()?.0.token
}

impl FromRequestParts<Arc<App>> for Actor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, app: &Arc<App>) -> Result<Self, ApiError> {
        let token = bearer(parts).ok_or(ApiError::Unauthorized)?;
        app.authenticate(&token)
    }
}

async fn blocking<T, F>(app: &Arc<App>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&App) -> ApiResult<T> + Send + 'static,
{
    let app = Arc::clone(app);
    tokio::task::spawn_blocking(move || f(&app)).await.map_err(ApiError::internal)?
}

pub fn router(app: Arc<App>) -> Router {
    let api = Router::new()
        .route("/auth/signup", post(signup))
        .route("/auth/login", post(login))
        .route("/users", get(list_users))
        .route("/users/{id}", patch(update_user).delete(delete_user))
        .route("/users/{id}/activate", post(activate_user))
        .route("/videos", get(list_videos).post(upload_video).layer(DefaultBodyLimit::disable()))
        .route("/videos/{id}", get(get_video).patch(patch_video).delete(delete_video))
        .route("/videos/{id}/bookmark", put(add_bookmark).delete(remove_bookmark))
        .route("/videos/{id}/thumbnail", get(thumbnail))
        .route("/videos/{id}/stream", get(stream))
        .route("/videos/{id}/annotations", get(list_annotations))
        .route("/videos/{id}/annotations/export", get(export))
        .route("/videos/{id}/annotations/import", post(import))
        .route("/labels", get(list_labels).post(create_label))
        .route("/labels/{id}", axum::routing::delete(delete_label))
        .route("/annotations", post(create_annotation))
        .route("/annotations/{id}", get(get_annotation).patch(update_annotation).delete(delete_annotation))
        .route("/annotations/{id}/split", post(split))
        .route("/annotations/{id}/track", post(track))
        .route("/groups", get(list_groups).post(create_group))
        .route("/groups/{id}", axum::routing::delete(delete_group))
        .route("/groups/{id}/videos/{video}", post(group_add_video).delete(group_remove_video))
        .route("/groups/{id}/labels/{label}", post(group_add_label).delete(group_remove_label))
        .route("/groups/{id}/members/{user}", post(group_add_member).delete(group_remove_member))
        .route("/jobs/{id}", get(get_job))
        .layer(DefaultBodyLimit::max(JSON_LIMIT));
    Router::new()
        .nest("/api/v1", api)
        .route("/ws", get(crate::ws::upgrade))
        .fallback(|| async { ApiError::NotFound("no such route".into()) })
        .with_state(app)
}

/// Serves until ctrl-c.
pub async fn serve(app: Arc<App>, listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

// ---- auth and users ----

async fn signup(State(app): AppState, JsonBody(req): JsonBody<SignupRequest>) -> ApiResult<(StatusCode, Json<UserView>)> {
    let user = blocking(&app, move |app| app.signup(&req)).await?;
    Ok((StatusCode::CREATED, Json(user)))
}

async fn login(State(app): AppState, JsonBody(req): JsonBody<LoginRequest>) -> ApiResult<Json<LoginResponse>> {
    blocking(&app, move |app| app.login(&req)).await.map(Json)
}

async fn list_users(State(app): AppState, actor: Actor) -> ApiResult<Json<Vec<UserView>>> {
    blocking(&app, move |app| app.list_users(actor)).await.map(Json)
}

async fn activate_user(State(app): AppState, actor: Actor, PathArg(id): PathArg<UserId>) -> ApiResult<Json<UserView>> {
    blocking(&app, move |app| app.activate_user(actor, id)).await.map(Json)
}

async fn update_user(
    State(app): AppState,
    actor: Actor,
    PathArg(id): PathArg<UserId>,
    JsonBody(p): JsonBody<UserPatch>,
) -> ApiResult<Json<UserView>> {
    blocking(&app, move |app| app.update_user(actor, id, &p)).await.map(Json)
}

async fn delete_user(State(app): AppState, actor: Actor, PathArg(id): PathArg<UserId>) -> ApiResult<StatusCode> {
    blocking(&app, move |app| app.delete_user(actor, id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

// ---- videos ----

async fn upload_video(State(app): AppState, actor: Actor, mut form: Multipart) -> ApiResult<(StatusCode, Json<VideoView>)> {
    actor.require(crate::PermissionAction::AddVideo)?;
    let spool = tempfile::NamedTempFile::new_in(app.config().tmp_dir()).map_err(ApiError::internal)?;
    let (std_file, path) = spool.into_parts();
    let mut file = tokio::fs::File::from_std(std_file);
    let (mut name, mut mime, mut got_file) = (None, None, false);
    let bad = |e: axum::extract::multipart::MultipartError| ApiError::BadRequest(e.body_text());
    while let Some(mut field) = form.next_field().await.map_err(bad)? {
        match field.name() {
            Some("name") => name = Some(field.text().await.map_err(bad)?),
            Some("file") => {
                if name.is_none() {
                    name = field.file_name().map(str::to_string);
                }
                mime = field.content_type().map(str::to_string);
                while let Some(chunk) = field.chunk().await.map_err(bad)? {
                    file.write_all(&chunk).await.map_err(ApiError::internal)?;
                }
                got_file = true;
            }
            _ => {}
        }
    }
    file.flush().await.map_err(ApiError::internal)?;
    drop(file);
    if !got_file {
        return Err(ApiError::BadRequest("multipart field `file` is required".into()));
    }
    let name = name.ok_or_else(|| ApiError::BadRequest("multipart field `name` is required".into()))?;
    let video = blocking(&app, move |app| app.upload_video(actor, &path, &name, mime)).await?;
    Ok((StatusCode::CREATED, Json(video)))
}

async fn list_videos(
    State(app): AppState,
    actor: Actor,
    QueryArg(q): QueryArg<VideoQuery>,
) -> ApiResult<Json<vidnote_store::Page<VideoView>>> {
    blocking(&app, move |app| app.query_videos(actor, &q)).await.map(Json)
}

async fn get_video(State(app): AppState, actor: Actor, PathArg(id): PathArg<VideoId>) -> ApiResult<Json<VideoView>> {
    blocking(&app, move |app| app.get_video(actor, id)).await.map(Json)
}

async fn patch_video(
    State(app): AppState,
    actor: Actor,
    PathArg(id): PathArg<VideoId>,
    JsonBody(p): JsonBody<VideoPatch>,
) -> ApiResult<Json<VideoView>> {
    blocking(&app, move |app| app.patch_video(actor, id, &p)).await.map(Json)
}

async fn delete_video(State(app): AppState, actor: Actor, PathArg(id): PathArg<VideoId>) -> ApiResult<StatusCode> {
    blocking(&app, move |app| app.delete_video(actor, id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn add_bookmark(State(app): AppState, actor: Actor, PathArg(id): PathArg<VideoId>) -> ApiResult<Json<VideoView>> {
    blocking(&app, move |app| app.set_bookmark(actor, id, true)).await.map(Json)
}

async fn remove_bookmark(State(app): AppState, actor: Actor, PathArg(id): PathArg<VideoId>) -> ApiResult<Json<VideoView>> {
    blocking(&app, move |app| app.set_bookmark(actor, id, false)).await.map(Json)
}

async fn thumbnail(State(app): AppState, _actor: Actor, PathArg(id): PathArg<VideoId>) -> ApiResult<Response> {
    let png = blocking(&app, move |app| app.thumbnail(id)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// Parses a single `bytes=` range against a resource of `size` bytes into an
/// inclusive `(first, last)` pair. `Ok(None)` means no usable range header.
pub fn parse_range(value: &str, size: u64) -> Result<Option<(u64, u64)>, ApiError> {
    let Some(spec) = value.trim().strip_prefix("bytes=") else { return Ok(None) };
    if spec.contains(',') {
        return Ok(None);
    }
    let unsatisfiable = ApiError::RangeNotSatisfiable { size };
    let (start, end) = spec.split_once('-').ok_or(ApiError::BadRequest("malformed range".into()))?;
    let (start, end) = (start.trim(), end.trim());
    let parse = |s: &str| s.parse::<u64>().map_err(|_| ApiError::BadRequest("malformed range".into()));
    let range = match (start.is_empty(), end.is_empty()) {
        (true, true) => return Err(ApiError::BadRequest("malformed range".into())),
        (true, false) => {
            let n = parse(end)?;
            if n == 0 || size == 0 {
                return Err(unsatisfiable);
            }
            (size.saturating_sub(n), size - 1)
        }
        (false, _) => {
            let first = parse(start)?;
            let last = if end.is_empty() { size.saturating_sub(1) } else { parse(end)?.min(size.saturating_sub(1)) };
            if first >= size || last < first {
                return Err(unsatisfiable);
            }
            (first, last)
        }
    };
    Ok(Some(range))
}

async fn stream(State(app): AppState, _actor: Actor, PathArg(id): PathArg<VideoId>, headers: HeaderMap) -> ApiResult<Response> {
    let (mut reader, size, mime) = blocking(&app, move |app| app.open_video(id)).await?;
    let range = match headers.get(header::RANGE).and_then(|v| v.to_str().ok()) {
        Some(v) => parse_range(v, size)?,
        None => None,
    };
    let (first, last) = range.unwrap_or((0, size.saturating_sub(1)));
    let len = if size == 0 { 0 } else { last - first + 1 };

    let (tx, mut rx) = tokio::sync::mpsc::channel::<std::io::Result<Bytes>>(4);
    tokio::task::spawn_blocking(move || {
        if let Err(e) = reader.seek(SeekFrom::Start(first)) {
            let _ = tx.blocking_send(Err(e));
            return;
        }
        let mut remaining = len;
        let mut buf = vec![0u8; STREAM_CHUNK];
        while remaining > 0 {
            let want = remaining.min(STREAM_CHUNK as u64) as usize;
            match reader.read(&mut buf[..want]) {
                Ok(0) => break,
                Ok(n) => {
                    remaining -= n as u64;
                    if tx.blocking_send(Ok(Bytes::copy_from_slice(&buf[..n]))).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.blocking_send(Err(e));
                    break;
                }
            }
        }
    });
    let body = Body::from_stream(futures::stream::poll_fn(move |cx| rx.poll_recv(cx)));

    let mut resp = Response::new(body);
    let h = resp.headers_mut();
    let content_type = mime.unwrap_or_else(|| "application/octet-stream".into());
    h.insert(header::CONTENT_TYPE, HeaderValue::from_str(&content_type).map_err(ApiError::internal)?);
    h.insert(header::ACCEPT_RANGES, HeaderValue::from_static("bytes"));
    h.insert(header::CONTENT_LENGTH, HeaderValue::from(len));
    if range.is_some() {
        *resp.status_mut() = StatusCode::PARTIAL_CONTENT;
        let v = format!("bytes {first}-{last}/{size}");
        resp.headers_mut().insert(header::CONTENT_RANGE, HeaderValue::from_str(&v).map_err(ApiError::internal)?);
    }
    Ok(resp)
}

// ---- labels ----

async fn list_labels(State(app): AppState, _actor: Actor) -> ApiResult<Json<Vec<vidnote_core::Label>>> {
    blocking(&app, |app| app.list_labels()).await.map(Json)
}

async fn create_label(
    State(app): AppState,
    actor: Actor,
    JsonBody(req): JsonBody<NewLabel>,
) -> ApiResult<(StatusCode, Json<vidnote_core::Label>)> {
    let label = blocking(&app, move |app| app.create_label(actor, &req)).await?;
    Ok((StatusCode::CREATED, Json(label)))
}

async fn delete_label(State(app): AppState, actor: Actor, PathArg(id): PathArg<LabelId>) -> ApiResult<StatusCode> {
    blocking(&app, move |app| app.delete_label(actor, id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

// ---- annotations ----

type AnnotationJson = Json<vidnote_realtime::VersionedAnnotation>;

async fn list_annotations(
    State(app): AppState,
    actor: Actor,
    PathArg(id): PathArg<VideoId>,
    QueryArg(q): QueryArg<ScopeQuery>,
) -> ApiResult<Json<Vec<vidnote_realtime::VersionedAnnotation>>> {
    blocking(&app, move |app| app.list_annotations(actor, id, q.group_id)).await.map(Json)
}

async fn get_annotation(State(app): AppState, _actor: Actor, PathArg(id): PathArg<AnnotationId>) -> ApiResult<AnnotationJson> {
    blocking(&app, move |app| app.get_annotation(id)).await.map(Json)
}

async fn create_annotation(
    State(app): AppState,
    actor: Actor,
    headers: HeaderMap,
    JsonBody(req): JsonBody<NewAnnotation>,
) -> ApiResult<(StatusCode, AnnotationJson)> {
    let key = headers.get("idempotency-key").map(|v| v.to_str().map(str::to_string));
    let key = key.transpose().map_err(|_| ApiError::BadRequest("Idempotency-Key must be visible ASCII".into()))?;
    let (ann, created) = blocking(&app, move |app| app.create_annotation(actor, &req, key.as_deref())).await?;
    Ok((if created { StatusCode::CREATED } else { StatusCode::OK }, Json(ann)))
}

async fn update_annotation(
    State(app): AppState,
    actor: Actor,
    PathArg(id): PathArg<AnnotationId>,
    JsonBody(p): JsonBody<AnnotationPatch>,
) -> ApiResult<AnnotationJson> {
    blocking(&app, move |app| app.update_annotation(actor, id, &p)).await.map(Json)
}

async fn delete_annotation(
    State(app): AppState,
    actor: Actor,
    PathArg(id): PathArg<AnnotationId>,
    QueryArg(q): QueryArg<VersionQuery>,
) -> ApiResult<StatusCode> {
    blocking(&app, move |app| app.delete_annotation(actor, id, q.version)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn split(
    State(app): AppState,
    actor: Actor,
    PathArg(id): PathArg<AnnotationId>,
    JsonBody(req): JsonBody<SplitRequest>,
) -> ApiResult<(StatusCode, Json<Vec<vidnote_realtime::VersionedAnnotation>>)> {
    let halves = blocking(&app, move |app| app.split(actor, id, &req)).await?;
    Ok((StatusCode::CREATED, Json(halves)))
}

async fn track(
    State(app): AppState,
    actor: Actor,
    PathArg(id): PathArg<AnnotationId>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<JobView>)> {
    let req: TrackRequest = if body.iter().all(u8::is_ascii_whitespace) {
        TrackRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?
    };
    let job = blocking(&app, move |app| app.start_track_job(actor, id, &req)).await?;
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn get_job(State(app): AppState, _actor: Actor, PathArg(id): PathArg<JobId>) -> ApiResult<Json<JobView>> {
    blocking(&app, move |app| app.get_job(id)).await.map(Json)
}

// ---- export and import ----

async fn export(
    State(app): AppState,
    actor: Actor,
    PathArg(id): PathArg<VideoId>,
    QueryArg(q): QueryArg<ScopeQuery>,
) -> ApiResult<Json<ExportDocument>> {
    blocking(&app, move |app| app.export(actor, id, q.group_id)).await.map(Json)
}

async fn import(
    State(app): AppState,
    actor: Actor,
    PathArg(id): PathArg<VideoId>,
    QueryArg(q): QueryArg<ScopeQuery>,
    JsonBody(doc): JsonBody<ExportDocument>,
) -> ApiResult<(StatusCode, Json<ImportResult>)> {
    let out = blocking(&app, move |app| app.import(actor, id, q.group_id, &doc)).await?;
    Ok((StatusCode::CREATED, Json(out)))
}

// ---- groups ----

async fn list_groups(State(app): AppState, _actor: Actor) -> ApiResult<Json<Vec<GroupView>>> {
    blocking(&app, |app| app.list_groups()).await.map(Json)
}

async fn create_group(
    State(app): AppState,
    actor: Actor,
    JsonBody(req): JsonBody<NewGroup>,
) -> ApiResult<(StatusCode, Json<GroupView>)> {
    let g = blocking(&app, move |app| app.create_group(actor, &req)).await?;
    Ok((StatusCode::CREATED, Json(g)))
}

async fn delete_group(State(app): AppState, actor: Actor, PathArg(id): PathArg<GroupId>) -> ApiResult<StatusCode> {
    blocking(&app, move |app| app.delete_group(actor, id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn edit_group(app: Arc<App>, actor: Actor, id: GroupId, edit: GroupEdit) -> ApiResult<Json<GroupView>> {
    blocking(&app, move |app| app.edit_group(actor, id, edit)).await.map(Json)
}

async fn group_add_video(State(app): AppState, actor: Actor, PathArg((id, v)): PathArg<(GroupId, VideoId)>) -> ApiResult<Json<GroupView>> {
    edit_group(app, actor, id, GroupEdit::AddVideo(v)).await
}

async fn group_remove_video(State(app): AppState, actor: Actor, PathArg((id, v)): PathArg<(GroupId, VideoId)>) -> ApiResult<Json<GroupView>> {
    edit_group(app, actor, id, GroupEdit::RemoveVideo(v)).await
}

async fn group_add_label(State(app): AppState, actor: Actor, PathArg((id, l)): PathArg<(GroupId, LabelId)>) -> ApiResult<Json<GroupView>> {
    edit_group(app, actor, id, GroupEdit::AddLabel(l)).await
}

async fn group_remove_label(State(app): AppState, actor: Actor, PathArg((id, l)): PathArg<(GroupId, LabelId)>) -> ApiResult<Json<GroupView>> {
    edit_group(app, actor, id, GroupEdit::RemoveLabel(l)).await
}

async fn group_add_member(State(app): AppState, actor: Actor, PathArg((id, u)): PathArg<(GroupId, UserId)>) -> ApiResult<Json<GroupView>> {
    edit_group(app, actor, id, GroupEdit::AddMember(u)).await
}

async fn group_remove_member(State(app): AppState, actor: Actor, PathArg((id, u)): PathArg<(GroupId, UserId)>) -> ApiResult<Json<GroupView>> {
    edit_group(app, actor, id, GroupEdit::RemoveMember(u)).await
}
