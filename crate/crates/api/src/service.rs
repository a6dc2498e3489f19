//! Synchronous domain operations shared by the HTTP handlers and the CLI.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock, RwLockWriteGuard};

use tracing::{info, warn};

use vidnote_core::{
    export_document, import_document, split_annotation, validate_annotation, Annotation, AnnotationId, BoxTrack,
    ExportDocument, GroupId, JobId, Label, LabelId, LabelKind, UserId, VideoId, VideoInfo,
};
use vidnote_realtime::{ChannelKey, Connection, EventDraft, Hub, VersionedAnnotation};
use vidnote_store::{
    BlobStore, FsBlobStore, GroupRecord, IdempotencyRecord, JobRecord, JobState, Page, ReadSeek, Role, Store,
    StoreError, Tx, UserRecord, Versioned, VideoFilter, VideoRecord, VideoStatus,
};
use vidnote_tracker::{run_track_job, FrameDir, TrackJobError, TrackerParams, WorkerPool};

use crate::auth::{check_password_strength, normalize_email, Passwords, TokenSigner};
use crate::config::Config;
use crate::error::{ApiError, ApiResult};
use crate::media::{decode_video, thumbnail_png, Probe};
use crate::model::*;
use crate::permissions::{authorize, PermissionAction};

/// The authenticated caller of an operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Actor {
    pub id: UserId,
    pub role: Role,
}

impl Actor {
    pub fn require(&self, action: PermissionAction) -> ApiResult<()> {
        if authorize(self.role, action) {
            Ok(())
        } else {
            Err(ApiError::PermissionDenied(action))
        }
    }
}

fn versioned(v: Versioned<Annotation>) -> VersionedAnnotation {
    VersionedAnnotation { annotation: v.record, version: v.version }
}

fn not_found(what: &str, id: impl std::fmt::Display) -> ApiError {
    ApiError::NotFound(format!("{what} {id} not found"))
}

fn require<T: vidnote_store::Record>(tx: &Tx<'_>, what: &str, key: impl std::fmt::Display) -> ApiResult<Versioned<T>> {
    let key = key.to_string();
    tx.get::<T>(&key)?.ok_or_else(|| not_found(what, key))
}

/// Checks that `actor` may work on `video` within `group`, returning the group.
fn check_scope(tx: &Tx<'_>, actor: Actor, video: VideoId, group: Option<GroupId>) -> ApiResult<Option<GroupRecord>> {
    let Some(gid) = group else { return Ok(None) };
    let g = require::<GroupRecord>(tx, "group", gid)?.record;
    if !g.member_ids.contains(&actor.id) {
        return Err(ApiError::NotGroupMember(gid.to_string()));
    }
    if !g.video_ids.contains(&video) {
        return Err(ApiError::VideoNotInGroup);
    }
    Ok(Some(g))
}

fn check_ontology(group: Option<&GroupRecord>, label: LabelId) -> ApiResult<()> {
    match group {
        Some(g) if !g.label_ids.contains(&label) => Err(ApiError::LabelNotInGroupOntology(label)),
        _ => Ok(()),
    }
}

fn validate(tx: &Tx<'_>, ann: &Annotation) -> ApiResult<Label> {
    let label = require::<Label>(tx, "label", ann.label_id)?.record;
    let video = require::<VideoRecord>(tx, "video", ann.video_id)?.record;
    validate_annotation(ann, &label, video.duration_ms).map_err(|v| ApiError::Core(vidnote_core::CoreError::ValidationFailed(v)))?;
    Ok(label)
}

fn scoped_annotations(tx: &Tx<'_>, key: ChannelKey) -> ApiResult<Vec<Versioned<Annotation>>> {
    Ok(tx.filter::<Annotation>(|a| a.video_id == key.video_id && a.group_id == key.group_id)?)
}

/// What a tracking job needs, shared with worker threads.
#[derive(Clone)]
struct JobContext {
    store: Arc<Store>,
    hub: Arc<Hub>,
    params: TrackerParams,
    gate: Arc<RwLock<()>>,
}

/// Holds tracking jobs after they are marked RUNNING until dropped.
pub struct TrackingPause<'a> {
    _guard: RwLockWriteGuard<'a, ()>,
}

pub struct App {
    config: Config,
    store: Arc<Store>,
    blobs: Arc<dyn BlobStore>,
    hub: Arc<Hub>,
    tokens: TokenSigner,
    passwords: Passwords,
    jobs: JobContext,
    pool: WorkerPool,
}

impl App {
    /// Opens the store and blob directory under `config.data_dir`.
    pub fn open(config: Config) -> ApiResult<Self> {
        let store = Store::open(config.db_path())?;
        let blobs = FsBlobStore::new(config.blob_dir())?;
        Self::with_backends(config, Arc::new(store), Arc::new(blobs))
    }

    pub fn with_backends(config: Config, store: Arc<Store>, blobs: Arc<dyn BlobStore>) -> ApiResult<Self> {
        for dir in [config.frames_dir(), config.tmp_dir()] {
            fs::create_dir_all(&dir).map_err(ApiError::internal)?;
        }
        let tokens = match &config.token_secret {
            Some(key) => TokenSigner::new(key.clone(), config.token_ttl),
            None => TokenSigner::random(config.token_ttl),
        };
        let passwords = Passwords::new(config.password_cost)?;
        let hub = Hub::new();
        let jobs = JobContext {
            store: Arc::clone(&store),
            hub: Arc::clone(&hub),
            params: config.tracker,
            gate: Arc::new(RwLock::new(())),
        };
        let pool = WorkerPool::new(config.tracker_workers);
        Ok(Self { config, store, blobs, hub, tokens, passwords, jobs, pool })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }

    pub fn tokens(&self) -> &TokenSigner {
        &self.tokens
    }

    pub fn pause_tracking(&self) -> TrackingPause<'_> {
        TrackingPause { _guard: self.jobs.gate.write().unwrap_or_else(|p| p.into_inner()) }
    }

    fn frames_path(&self, blob_ref: &str) -> PathBuf {
        self.config.frames_dir().join(blob_ref)
    }

    /// Marks jobs left unfinished by a previous process as failed.
    pub fn recover_jobs(&self) -> ApiResult<usize> {
        self.store.transact(|tx| {
            let stale = tx.filter::<JobRecord>(|j| !j.state.is_terminal())?;
            for mut j in stale.iter().cloned() {
                j.record.state = JobState::Failed;
                j.record.error = Some("interrupted by a service restart".into());
                tx.update(&j.record, j.version)?;
            }
            Ok::<_, ApiError>(stale.len())
        })
    }

    // ---- authentication and users ----

    pub fn authenticate(&self, token: &str) -> ApiResult<Actor> {
        let claims = self.tokens.verify(token)?;
        let user = self.store.find::<UserRecord>(claims.sub)?.ok_or(ApiError::Unauthorized)?.record;
        if !user.is_activated {
            return Err(ApiError::Unauthorized);
        }
        Ok(Actor { id: user.id, role: user.role })
    }

    fn create_user(&self, email: &str, display_name: &str, password: &str, role: Role, active: bool) -> ApiResult<UserView> {
        let email = normalize_email(email)?;
        check_password_strength(password)?;
        let display_name = display_name.trim();
        if display_name.is_empty() {
            return Err(ApiError::BadRequest("displayName must not be empty".into()));
        }
        let password_hash = self.passwords.hash(password)?;
        self.store.transact(|tx| {
            if tx.find_user_by_email(&email)?.is_some() {
                return Err(ApiError::EmailTaken);
            }
            let user = UserRecord {
                id: UserId::new(),
                email: email.clone(),
                display_name: display_name.to_string(),
                password_hash,
                role,
                is_activated: active,
            };
            tx.insert(&user)?;
            Ok(UserView::from(&user))
        })
    }

    pub fn signup(&self, req: &SignupRequest) -> ApiResult<UserView> {
        self.create_user(&req.email, &req.display_name, &req.password, Role::Annotator, false)
    }

    pub fn create_admin(&self, email: &str, password: &str, display_name: &str) -> ApiResult<UserView> {
        self.create_user(email, display_name, password, Role::Admin, true)
    }

    pub fn login(&self, req: &LoginRequest) -> ApiResult<LoginResponse> {
        let found = self.store.read(|tx| tx.find_user_by_email(&req.email))??;
        let Some(user) = found.map(|v| v.record) else {
            self.passwords.verify_dummy(&req.password);
            return Err(ApiError::InvalidCredentials);
        };
        if !self.passwords.verify(&req.password, &user.password_hash) {
            return Err(ApiError::InvalidCredentials);
        }
        if !user.is_activated {
            return Err(ApiError::AccountNotActivated);
        }
        let (token, claims) = self.tokens.issue(user.id, user.role);
        Ok(LoginResponse { token, expires_at: claims.exp, user: UserView::from(&user) })
    }

    pub fn list_users(&self, actor: Actor) -> ApiResult<Vec<UserView>> {
        actor.require(PermissionAction::AddUser)?;
        let mut users: Vec<UserView> = self.store.scan::<UserRecord>()?.iter().map(|u| UserView::from(&u.record)).collect();
        users.sort_by(|a, b| a.email.cmp(&b.email));
        Ok(users)
    }

    fn edit_user(&self, id: UserId, f: impl FnOnce(&mut UserRecord)) -> ApiResult<UserView> {
        self.store.transact(|tx| {
            let mut u = require::<UserRecord>(tx, "user", id)?;
            f(&mut u.record);
            tx.update(&u.record, u.version)?;
            Ok(UserView::from(&u.record))
        })
    }

    pub fn activate_user(&self, actor: Actor, id: UserId) -> ApiResult<UserView> {
        actor.require(PermissionAction::AddUser)?;
        self.edit_user(id, |u| u.is_activated = true)
    }

    /// Activation without an actor, for the admin CLI.
    pub fn activate_by_email(&self, email: &str) -> ApiResult<UserView> {
        let user = self.store.read(|tx| tx.find_user_by_email(email))??.ok_or_else(|| not_found("user", email))?;
        self.edit_user(user.record.id, |u| u.is_activated = true)
    }

    pub fn update_user(&self, actor: Actor, id: UserId, patch: &UserPatch) -> ApiResult<UserView> {
        actor.require(PermissionAction::AddUser)?;
        if patch.display_name.as_deref().is_some_and(|n| n.trim().is_empty()) {
            return Err(ApiError::BadRequest("displayName must not be empty".into()));
        }
        self.edit_user(id, |u| {
            if let Some(role) = patch.role {
                u.role = role;
            }
            if let Some(name) = &patch.display_name {
                u.display_name = name.trim().to_string();
            }
        })
    }

    pub fn delete_user(&self, actor: Actor, id: UserId) -> ApiResult<()> {
        actor.require(PermissionAction::DeleteUser)?;
        self.store.transact(|tx| {
            require::<UserRecord>(tx, "user", id)?;
            Ok::<_, ApiError>(tx.delete_user(id)?)
        })
    }

    // ---- videos ----

    /// Stores `path` as a blob, decodes it once per distinct content and
    /// records a new video.
    pub fn ingest_video(
        &self,
        path: &Path,
        name: &str,
        mime_type: Option<String>,
        uploaded_by: Option<UserId>,
    ) -> ApiResult<VideoView> {
        let name = name.trim();
        if name.is_empty() {
            return Err(ApiError::BadRequest("video name must not be empty".into()));
        }
        let mut file = fs::File::open(path).map_err(ApiError::internal)?;
        let blob = self.blobs.put(&mut file)?;
        let frames = self.ensure_frames(&blob.blob_ref, path)?;
        let probe = Probe::of(&frames)?;
        let thumb = thumbnail_png(&frames)?;
        let thumb_ref = self.blobs.put(&mut thumb.as_slice())?.blob_ref;
        let video = VideoRecord {
            id: VideoId::new(),
            name: name.to_string(),
            duration_ms: probe.duration_ms,
            frame_rate: probe.frame_rate,
            width: probe.width,
            height: probe.height,
            blob_ref: blob.blob_ref,
            mime_type,
            thumbnail_ref: Some(thumb_ref),
            status: VideoStatus::ToAnnotate,
            uploaded_by,
            bookmarked_by: Default::default(),
        };
        let version = self.store.insert(&video)?;
        info!(video = %video.id, blob = %video.blob_ref, "ingested video");
        Ok(VideoView::new(&Versioned { version, record: video }, uploaded_by))
    }

    fn ensure_frames(&self, blob_ref: &str, source: &Path) -> ApiResult<FrameDir> {
        let target = self.frames_path(blob_ref);
        if let Ok(dir) = FrameDir::open(&target) {
            return Ok(dir);
        }
        let staging = tempfile::tempdir_in(self.config.tmp_dir()).map_err(ApiError::internal)?;
        let out = staging.path().join("frames");
        decode_video(source, &out, self.config.decoder_cmd.as_deref())?;
        match fs::rename(&out, &target) {
            Ok(()) => {}
            // Another ingest of the same bytes finished first.
            Err(_) if FrameDir::open(&target).is_ok() => {}
            Err(e) => return Err(ApiError::internal(e)),
        }
        FrameDir::open(&target).map_err(ApiError::internal)
    }

    pub fn upload_video(&self, actor: Actor, path: &Path, name: &str, mime_type: Option<String>) -> ApiResult<VideoView> {
        actor.require(PermissionAction::AddVideo)?;
        self.ingest_video(path, name, mime_type, Some(actor.id))
    }

    pub fn query_videos(&self, actor: Actor, q: &VideoQuery) -> ApiResult<Page<VideoView>> {
        let filter = VideoFilter {
            name_substring: q.search.clone().filter(|s| !s.is_empty()),
            bookmarked_by: q.bookmarked.unwrap_or(false).then_some(actor.id),
            status: q.status,
            group_id: q.group_id,
        };
        let page = self.store.read(|tx| tx.query_videos(&filter, q.page.unwrap_or(1), q.page_size.unwrap_or(50)))??;
        Ok(Page {
            items: page.items.iter().map(|v| VideoView::new(v, Some(actor.id))).collect(),
            page: page.page,
            page_size: page.page_size,
            total: page.total,
        })
    }

    pub fn get_video(&self, actor: Actor, id: VideoId) -> ApiResult<VideoView> {
        let v = self.store.read(|tx| require::<VideoRecord>(tx, "video", id))??;
        Ok(VideoView::new(&v, Some(actor.id)))
    }

    fn edit_video(&self, actor: Actor, id: VideoId, expected: Option<u64>, f: impl FnOnce(&mut VideoRecord)) -> ApiResult<VideoView> {
        self.store.transact(|tx| {
            let mut v = require::<VideoRecord>(tx, "video", id)?;
            f(&mut v.record);
            v.version = tx.update(&v.record, expected.unwrap_or(v.version))?;
            Ok(VideoView::new(&v, Some(actor.id)))
        })
    }

    pub fn patch_video(&self, actor: Actor, id: VideoId, patch: &VideoPatch) -> ApiResult<VideoView> {
        actor.require(PermissionAction::AddVideo)?;
        let name = patch.name.as_deref().map(str::trim);
        if name.is_some_and(str::is_empty) {
            return Err(ApiError::BadRequest("video name must not be empty".into()));
        }
        self.edit_video(actor, id, patch.version, |v| {
            if let Some(n) = name {
                v.name = n.to_string();
            }
            if let Some(s) = patch.status {
                v.status = s;
            }
        })
    }

    pub fn set_bookmark(&self, actor: Actor, id: VideoId, on: bool) -> ApiResult<VideoView> {
        actor.require(PermissionAction::AnnotateVideo)?;
        self.edit_video(actor, id, None, |v| {
            if on {
                v.bookmarked_by.insert(actor.id);
            } else {
                v.bookmarked_by.remove(&actor.id);
            }
        })
    }

    /// Deletes a video with its annotations, publishing one deletion per annotation.
    pub fn delete_video(&self, actor: Actor, id: VideoId) -> ApiResult<()> {
        actor.require(PermissionAction::DeleteVideo)?;
        let keys = self.hub.channels_of_video(id);
        self.hub.publish_with(&keys, actor.id, || {
            self.store.transact(|tx| {
                require::<VideoRecord>(tx, "video", id)?;
                let removed = tx.delete_video(id)?;
                Ok::<_, ApiError>(((), removed.iter().map(EventDraft::deleted).collect()))
            })
        })
    }

    pub fn thumbnail(&self, id: VideoId) -> ApiResult<Vec<u8>> {
        let v = self.store.get::<VideoRecord>(id)?.record;
        let r = v.thumbnail_ref.ok_or_else(|| not_found("thumbnail of video", id))?;
        Ok(self.blobs.get(&r)?)
    }

    pub fn open_video(&self, id: VideoId) -> ApiResult<(Box<dyn ReadSeek>, u64, Option<String>)> {
        let v = self.store.get::<VideoRecord>(id)?.record;
        let (reader, len) = self.blobs.open(&v.blob_ref)?;
        Ok((reader, len, v.mime_type))
    }

    // ---- labels ----

    pub fn list_labels(&self) -> ApiResult<Vec<Label>> {
        let mut labels: Vec<Label> = self.store.scan::<Label>()?.into_iter().map(|l| l.record).collect();
        labels.sort_by(|a, b| (a.kind, &a.name).cmp(&(b.kind, &b.name)));
        Ok(labels)
    }

    pub fn create_label(&self, actor: Actor, req: &NewLabel) -> ApiResult<Label> {
        actor.require(PermissionAction::AnnotateVideo)?;
        let label = Label::new(req.name.trim(), req.color.clone(), req.kind)?;
        self.store.transact(|tx| {
            if !tx.filter::<Label>(|l| l.identity() == label.identity())?.is_empty() {
                return Err(ApiError::LabelExists);
            }
            tx.insert(&label)?;
            Ok(label.clone())
        })
    }

    pub fn delete_label(&self, actor: Actor, id: LabelId) -> ApiResult<()> {
        actor.require(PermissionAction::AddVideo)?;
        self.store.transact(|tx| {
            require::<Label>(tx, "label", id)?;
            Ok::<_, ApiError>(tx.delete_label(id)?)
        })
    }

    // ---- annotations ----

    pub fn list_annotations(&self, actor: Actor, video: VideoId, group: Option<GroupId>) -> ApiResult<Vec<VersionedAnnotation>> {
        self.store.read(|tx| {
            require::<VideoRecord>(tx, "video", video)?;
            check_scope(tx, actor, video, group)?;
            let mut anns = scoped_annotations(tx, ChannelKey::new(video, group))?;
            anns.sort_by_key(|a| (a.record.start_ms, a.record.created_seq, a.record.id));
            Ok(anns.into_iter().map(versioned).collect())
        })?
    }

    pub fn get_annotation(&self, id: AnnotationId) -> ApiResult<VersionedAnnotation> {
        Ok(versioned(self.store.get::<Annotation>(id)?))
    }

    /// Creates an annotation. Returns `false` alongside it when the
    /// idempotency key replayed an earlier create.
    pub fn create_annotation(
        &self,
        actor: Actor,
        req: &NewAnnotation,
        idempotency_key: Option<&str>,
    ) -> ApiResult<(VersionedAnnotation, bool)> {
        actor.require(PermissionAction::AnnotateVideo)?;
        let key = ChannelKey::new(req.video_id, req.group_id);
        self.hub.publish_with(&[key], actor.id, || {
            self.store.transact(|tx| {
                if let Some(k) = idempotency_key {
                    if let Some(prior) = tx.get::<IdempotencyRecord>(IdempotencyRecord::storage_key(actor.id, k))? {
                        let a = require::<Annotation>(tx, "annotation", prior.record.annotation_id)?;
                        return Ok(((versioned(a), false), Vec::new()));
                    }
                }
                require::<VideoRecord>(tx, "video", req.video_id)?;
                let group = check_scope(tx, actor, req.video_id, req.group_id)?;
                check_ontology(group.as_ref(), req.label_id)?;
                let ann = Annotation {
                    id: AnnotationId::new(),
                    video_id: req.video_id,
                    label_id: req.label_id,
                    start_ms: req.start_ms,
                    duration_ms: req.duration_ms,
                    is_false_positive: req.is_false_positive,
                    created_by: actor.id,
                    group_id: req.group_id,
                    track: req.track.clone(),
                    show_label_on_viewer: req.show_label_on_viewer,
                    created_seq: tx.next_created_seq()?,
                };
                validate(tx, &ann)?;
                let version = tx.insert(&ann)?;
                if let Some(k) = idempotency_key {
                    tx.insert(&IdempotencyRecord { user_id: actor.id, key: k.to_string(), annotation_id: ann.id })?;
                }
                let out = VersionedAnnotation { annotation: ann, version };
                Ok(((out.clone(), true), vec![EventDraft::created(out)]))
            })
        })
    }

    fn channel_of(&self, id: AnnotationId) -> ApiResult<ChannelKey> {
        Ok(ChannelKey::of(&self.store.get::<Annotation>(id)?.record))
    }

    fn current(tx: &Tx<'_>, actor: Actor, id: AnnotationId, expected: Option<u64>) -> ApiResult<(Versioned<Annotation>, Option<GroupRecord>)> {
        let cur = require::<Annotation>(tx, "annotation", id)?;
        let group = check_scope(tx, actor, cur.record.video_id, cur.record.group_id)?;
        if let Some(e) = expected.filter(|e| *e != cur.version) {
            return Err(ApiError::VersionConflict {
                kind: "annotations".into(),
                key: id.to_string(),
                expected: e,
                actual: Some(cur.version),
            });
        }
        Ok((cur, group))
    }

    pub fn update_annotation(&self, actor: Actor, id: AnnotationId, patch: &AnnotationPatch) -> ApiResult<VersionedAnnotation> {
        actor.require(PermissionAction::AnnotateVideo)?;
        let key = self.channel_of(id)?;
        self.hub.publish_with(&[key], actor.id, || {
            self.store.transact(|tx| {
                let (cur, group) = Self::current(tx, actor, id, Some(patch.version))?;
                let mut a = cur.record.clone();
                if let Some(l) = patch.label_id {
                    check_ontology(group.as_ref(), l)?;
                    a.label_id = l;
                }
                if let Some(s) = patch.start_ms {
                    a.start_ms = s;
                }
                if let Some(d) = patch.duration_ms {
                    a.duration_ms = d;
                }
                if let Some(f) = patch.is_false_positive {
                    a.is_false_positive = f;
                }
                if let Some(s) = patch.show_label_on_viewer {
                    a.show_label_on_viewer = s;
                }
                if let Some(t) = &patch.track {
                    a.track = t.clone();
                }
                if let Some(edits) = &patch.keyframes {
                    a.track = apply_keyframe_edits(&a, edits)?;
                }
                validate(tx, &a)?;
                let version = tx.update(&a, cur.version)?;
                let out = VersionedAnnotation { annotation: a, version };
                Ok((out.clone(), vec![EventDraft::updated(out)]))
            })
        })
    }

    pub fn delete_annotation(&self, actor: Actor, id: AnnotationId, expected: Option<u64>) -> ApiResult<()> {
        actor.require(PermissionAction::AnnotateVideo)?;
        let key = self.channel_of(id)?;
        self.hub.publish_with(&[key], actor.id, || {
            self.store.transact(|tx| {
                let (cur, _) = Self::current(tx, actor, id, expected)?;
                let gone = tx.delete_annotation(id, Some(cur.version))?;
                Ok(((), vec![EventDraft::deleted(&gone)]))
            })
        })
    }

    /// Splits an annotation, publishing its deletion and the two halves in that order.
    pub fn split(&self, actor: Actor, id: AnnotationId, req: &SplitRequest) -> ApiResult<Vec<VersionedAnnotation>> {
        actor.require(PermissionAction::AnnotateVideo)?;
        let key = self.channel_of(id)?;
        self.hub.publish_with(&[key], actor.id, || {
            self.store.transact(|tx| {
                let (cur, _) = Self::current(tx, actor, id, req.version)?;
                let (left, right) = split_annotation(&cur.record, req.at_ms)?;
                let gone = tx.delete_annotation(id, Some(cur.version))?;
                let mut drafts = vec![EventDraft::deleted(&gone)];
                let mut out = Vec::with_capacity(2);
                for half in [left, right] {
                    let version = tx.insert(&half)?;
                    let v = VersionedAnnotation { annotation: half, version };
                    drafts.push(EventDraft::created(v.clone()));
                    out.push(v);
                }
                Ok((out, drafts))
            })
        })
    }

    // ---- tracking ----

    pub fn start_track_job(&self, actor: Actor, id: AnnotationId, req: &TrackRequest) -> ApiResult<JobView> {
        actor.require(PermissionAction::AnnotateVideo)?;
        let (ann, video) = self.store.read(|tx| {
            let (cur, _) = Self::current(tx, actor, id, None)?;
            let label = require::<Label>(tx, "label", cur.record.label_id)?.record;
            if label.kind != LabelKind::Structure {
                return Err(ApiError::NotStructure);
            }
            let video = require::<VideoRecord>(tx, "video", cur.record.video_id)?.record;
            Ok((cur.record, video))
        })??;
        let frames = FrameDir::open(self.frames_path(&video.blob_ref)).map_err(|_| ApiError::FramesUnavailable)?;
        if self.pool.is_active(&id) {
            return Err(ApiError::JobAlreadyActive);
        }
        let job = JobRecord { id: JobId::new(), annotation_id: id, state: JobState::Queued, report: None, error: None };
        let version = self.store.insert(&job)?;
        let ctx = self.jobs.clone();
        let (job_id, stride) = (job.id, req.stride_ms.unwrap_or(0));
        let key = ChannelKey::of(&ann);
        match self.pool.submit(id, move || ctx.run(job_id, id, key, frames, stride, actor.id)) {
            Ok(()) => Ok(JobView::from(Versioned { version, record: job })),
            Err(e) => {
                if let Err(err) = self.store.delete::<JobRecord>(job.id, None) {
                    warn!(job = %job.id, error = %err, "could not remove rejected job");
                }
                match e {
                    vidnote_tracker::PoolError::AlreadyActive(_) => Err(ApiError::JobAlreadyActive),
                    other => Err(ApiError::internal(other)),
                }
            }
        }
    }

    pub fn get_job(&self, id: JobId) -> ApiResult<JobView> {
        Ok(self.store.get::<JobRecord>(id)?.into())
    }

    // ---- export and import ----

    pub fn export(&self, actor: Actor, video: VideoId, group: Option<GroupId>) -> ApiResult<ExportDocument> {
        self.export_scope(Some(actor), video, group)
    }

    /// Export without membership checks, for the admin CLI.
    pub fn export_unchecked(&self, video: VideoId, group: Option<GroupId>) -> ApiResult<ExportDocument> {
        self.export_scope(None, video, group)
    }

    fn export_scope(&self, actor: Option<Actor>, video: VideoId, group: Option<GroupId>) -> ApiResult<ExportDocument> {
        self.store.read(|tx| {
            let v = require::<VideoRecord>(tx, "video", video)?.record;
            match actor {
                Some(actor) => {
                    check_scope(tx, actor, video, group)?;
                }
                None => {
                    if let Some(g) = group {
                        require::<GroupRecord>(tx, "group", g)?;
                    }
                }
            }
            let labels: Vec<Label> = tx.scan::<Label>()?.into_iter().map(|l| l.record).collect();
            let anns: Vec<Annotation> =
                scoped_annotations(tx, ChannelKey::new(video, group))?.into_iter().map(|a| a.record).collect();
            let info = VideoInfo { id: v.id, name: v.name, duration_ms: v.duration_ms };
            Ok(export_document(&info, &labels, &anns)?)
        })?
    }

    pub fn import(&self, actor: Actor, video: VideoId, group: Option<GroupId>, doc: &ExportDocument) -> ApiResult<ImportResult> {
        actor.require(PermissionAction::AnnotateVideo)?;
        let key = ChannelKey::new(video, group);
        self.hub.publish_with(&[key], actor.id, || {
            self.store.transact(|tx| {
                let v = require::<VideoRecord>(tx, "video", video)?.record;
                let g = check_scope(tx, actor, video, group)?;
                let labels: Vec<Label> = tx.scan::<Label>()?.into_iter().map(|l| l.record).collect();
                let info = VideoInfo { id: v.id, name: v.name, duration_ms: v.duration_ms };
                let plan = import_document(doc, &info, group, &labels)?;
                for a in &plan.annotations {
                    check_ontology(g.as_ref(), a.label_id)?;
                }
                for l in &plan.new_labels {
                    tx.insert(l)?;
                }
                let base = tx.next_created_seq()?;
                let mut out = Vec::with_capacity(plan.annotations.len());
                for (i, mut a) in plan.annotations.into_iter().enumerate() {
                    a.created_seq = base + i as u64;
                    let version = tx.insert(&a)?;
                    out.push(VersionedAnnotation { annotation: a, version });
                }
                let drafts = out.iter().cloned().map(EventDraft::created).collect();
                Ok((ImportResult { labels_created: plan.new_labels, annotations: out }, drafts))
            })
        })
    }

    // ---- groups ----

    pub fn list_groups(&self) -> ApiResult<Vec<GroupView>> {
        let mut groups: Vec<GroupView> = self.store.scan::<GroupRecord>()?.into_iter().map(GroupView::from).collect();
        groups.sort_by(|a, b| (&a.group.name, a.group.id).cmp(&(&b.group.name, b.group.id)));
        Ok(groups)
    }

    pub fn create_group(&self, actor: Actor, req: &NewGroup) -> ApiResult<GroupView> {
        actor.require(PermissionAction::AddVideo)?;
        let name = req.name.trim();
        if name.is_empty() {
            return Err(ApiError::BadRequest("group name must not be empty".into()));
        }
        let group = GroupRecord {
            id: GroupId::new(),
            name: name.to_string(),
            video_ids: Default::default(),
            label_ids: Default::default(),
            member_ids: [actor.id].into(),
        };
        let version = self.store.insert(&group)?;
        Ok(GroupView { group, version })
    }

    pub fn edit_group(&self, actor: Actor, id: GroupId, edit: GroupEdit) -> ApiResult<GroupView> {
        actor.require(PermissionAction::AddVideo)?;
        self.store.transact(|tx| {
            let mut g = require::<GroupRecord>(tx, "group", id)?;
            let r = &mut g.record;
            match edit {
                GroupEdit::AddVideo(v) => {
                    require::<VideoRecord>(tx, "video", v)?;
                    r.video_ids.insert(v);
                }
                GroupEdit::RemoveVideo(v) => {
                    r.video_ids.remove(&v);
                }
                GroupEdit::AddLabel(l) => {
                    require::<Label>(tx, "label", l)?;
                    r.label_ids.insert(l);
                }
                GroupEdit::RemoveLabel(l) => {
                    r.label_ids.remove(&l);
                }
                GroupEdit::AddMember(u) => {
                    require::<UserRecord>(tx, "user", u)?;
                    r.member_ids.insert(u);
                }
                GroupEdit::RemoveMember(u) => {
                    r.member_ids.remove(&u);
                }
            }
            g.version = tx.update(&g.record, g.version)?;
            Ok(GroupView::from(g))
        })
    }

    pub fn delete_group(&self, actor: Actor, id: GroupId) -> ApiResult<()> {
        actor.require(PermissionAction::AddVideo)?;
        let g = self.store.get::<GroupRecord>(id)?.record;
        let keys: Vec<ChannelKey> = g.video_ids.iter().map(|v| ChannelKey::new(*v, Some(id))).collect();
        self.hub.publish_with(&keys, actor.id, || {
            self.store.transact(|tx| {
                let removed = tx.delete_group(id)?;
                Ok::<_, ApiError>(((), removed.iter().map(EventDraft::deleted).collect()))
            })
        })
    }

    // ---- realtime ----

    /// Subscribes `conn` to one channel after the same scope checks as a read.
    pub fn subscribe(&self, actor: Actor, conn: &Connection, key: ChannelKey) -> ApiResult<()> {
        self.store.read(|tx| {
            require::<VideoRecord>(tx, "video", key.video_id)?;
            check_scope(tx, actor, key.video_id, key.group_id).map(|_| ())
        })??;
        self.hub.subscribe(conn, key, || {
            let anns = self.store.read(|tx| scoped_annotations(tx, key))??;
            Ok::<_, ApiError>(anns.into_iter().map(versioned).collect())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupEdit {
    AddVideo(VideoId),
    RemoveVideo(VideoId),
    AddLabel(LabelId),
    RemoveLabel(LabelId),
    AddMember(UserId),
    RemoveMember(UserId),
}

fn apply_keyframe_edits(ann: &Annotation, edits: &KeyframeEdits) -> ApiResult<Option<BoxTrack>> {
    let mut track = ann.track.clone();
    for ts in &edits.remove {
        let t = track.as_ref().ok_or_else(|| ApiError::BadRequest("annotation has no track".into()))?;
        track = Some(t.without_keyframe(*ts)?);
    }
    for k in &edits.set {
        track = Some(match &track {
            Some(t) => t.with_keyframe(ann.span(), k.ts, k.bbox)?,
            None => BoxTrack::single(k.ts, k.bbox),
        });
    }
    Ok(track)
}

impl JobContext {
    fn set_state(&self, job: JobId, f: impl FnOnce(&mut JobRecord)) {
        let r = self.store.transact(|tx| {
            if let Some(mut j) = tx.get::<JobRecord>(job)? {
                f(&mut j.record);
                tx.update(&j.record, j.version)?;
            }
            Ok::<_, StoreError>(())
        });
        if let Err(e) = r {
            warn!(%job, error = %e, "could not record job state");
        }
    }

    fn fail(&self, job: JobId, error: String, report: Option<vidnote_tracker::TrackJobReport>) {
        warn!(%job, %error, "tracking job failed");
        self.set_state(job, |j| {
            j.state = JobState::Failed;
            j.error = Some(error);
            j.report = report;
        });
    }

    fn run(&self, job: JobId, id: AnnotationId, key: ChannelKey, frames: FrameDir, stride_ms: u64, origin: UserId) {
        self.set_state(job, |j| j.state = JobState::Running);
        let _gate = self.gate.read().unwrap_or_else(|p| p.into_inner());
        let ann = match self.store.get::<Annotation>(id) {
            Ok(a) => a.record,
            Err(e) => return self.fail(job, e.to_string(), None),
        };
        let (track, report) = match run_track_job(&frames, &ann, &self.params, stride_ms) {
            Ok(r) => r,
            Err(TrackJobError::FrameSourceGap { at_ms, reason, partial }) => {
                return self.fail(job, format!("frame source gap at {at_ms} ms: {reason}"), Some(partial))
            }
            Err(e) => return self.fail(job, e.to_string(), None),
        };
        let committed = self.hub.publish_with(&[key], origin, || {
            self.store.transact(|tx| {
                let cur = require::<Annotation>(tx, "annotation", id)?;
                let mut a = cur.record.clone();
                a.track = Some(track);
                validate(tx, &a)?;
                let version = tx.update(&a, cur.version)?;
                if let Some(mut j) = tx.get::<JobRecord>(job)? {
                    j.record.state = JobState::Done;
                    j.record.report = Some(report.clone());
                    tx.update(&j.record, j.version)?;
                }
                Ok::<_, ApiError>(((), vec![EventDraft::updated(VersionedAnnotation { annotation: a, version })]))
            })
        });
        match committed {
            Ok(()) => info!(%job, annotation = %id, keyframes = report.keyframes_emitted, "tracking job done"),
            Err(e) => self.fail(job, e.to_string(), Some(report)),
        }
    }
}
