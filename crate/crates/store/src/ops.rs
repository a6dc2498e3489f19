//! Multi-record operations: cascades, lookups and video queries.

use serde::{Deserialize, Serialize};

use vidnote_core::{Annotation, AnnotationId, GroupId, Label, LabelId, UserId, VideoId};

use crate::db::{Tx, Versioned};
use crate::error::StoreError;
use crate::records::{GroupRecord, IdempotencyRecord, JobRecord, Record, UserRecord, VideoRecord, VideoStatus};

pub const MAX_PAGE_SIZE: usize = 200;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VideoFilter {
    pub name_substring: Option<String>,
    pub bookmarked_by: Option<UserId>,
    pub status: Option<VideoStatus>,
    pub group_id: Option<GroupId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Page<T> {
    pub items: Vec<T>,
    /// 1-based.
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
}

impl Tx<'_> {
    pub fn find_user_by_email(&self, email: &str) -> Result<Option<Versioned<UserRecord>>, StoreError> {
        let email = email.trim().to_lowercase();
        Ok(self.filter::<UserRecord>(|u| u.email.to_lowercase() == email)?.into_iter().next())
    }

    /// Videos matching every set filter, ordered by `(name, id)`.
    pub fn query_videos(
        &self,
        filter: &VideoFilter,
        page: usize,
        page_size: usize,
    ) -> Result<Page<Versioned<VideoRecord>>, StoreError> {
        if !(1..=MAX_PAGE_SIZE).contains(&page_size) {
            return Err(StoreError::InvalidPageSize(page_size));
        }
        let page = page.max(1);
        let group = match filter.group_id {
            Some(g) => Some(self.get::<GroupRecord>(g)?.map(|v| v.record.video_ids).unwrap_or_default()),
            None => None,
        };
        let needle = filter.name_substring.as_ref().map(|s| s.to_lowercase());
        let mut hits = self.filter::<VideoRecord>(|v| {
            needle.as_ref().is_none_or(|n| v.name.to_lowercase().contains(n))
                && filter.bookmarked_by.is_none_or(|u| v.bookmarked_by.contains(&u))
                && filter.status.is_none_or(|s| v.status == s)
                && group.as_ref().is_none_or(|g| g.contains(&v.id))
        })?;
        hits.sort_by(|a, b| (&a.record.name, a.record.id).cmp(&(&b.record.name, b.record.id)));
        let total = hits.len();
        let items = hits.into_iter().skip((page - 1) * page_size).take(page_size).collect();
        Ok(Page { items, page, page_size, total })
    }

    pub fn annotations_of_video(&self, video: VideoId) -> Result<Vec<Versioned<Annotation>>, StoreError> {
        self.filter::<Annotation>(|a| a.video_id == video)
    }

    /// Deletes an annotation with its jobs and idempotency entries.
    pub fn delete_annotation(&mut self, id: AnnotationId, expected: Option<u64>) -> Result<Annotation, StoreError> {
        let ann = self.require::<Annotation>(id)?;
        self.delete::<Annotation>(id, expected)?;
        for job in self.filter::<JobRecord>(|j| j.annotation_id == id)? {
            self.delete::<JobRecord>(job.record.id, None)?;
        }
        for idem in self.filter::<IdempotencyRecord>(|r| r.annotation_id == id)? {
            self.delete::<IdempotencyRecord>(idem.record.key(), None)?;
        }
        Ok(ann.record)
    }

    /// Deletes a video, its annotations and their jobs, and removes it from every group.
    /// Returns the deleted annotations.
    pub fn delete_video(&mut self, id: VideoId) -> Result<Vec<Annotation>, StoreError> {
        self.delete::<VideoRecord>(id, None)?;
        let mut removed = Vec::new();
        for ann in self.annotations_of_video(id)? {
            removed.push(self.delete_annotation(ann.record.id, None)?);
        }
        for mut g in self.filter::<GroupRecord>(|g| g.video_ids.contains(&id))? {
            g.record.video_ids.remove(&id);
            self.update(&g.record, g.version)?;
        }
        Ok(removed)
    }

    /// Deletes a label unless an annotation still uses it; drops it from group ontologies.
    pub fn delete_label(&mut self, id: LabelId) -> Result<(), StoreError> {
        self.require::<Label>(id)?;
        if !self.filter::<Annotation>(|a| a.label_id == id)?.is_empty() {
            return Err(StoreError::LabelInUse(id));
        }
        self.delete::<Label>(id, None)?;
        for mut g in self.filter::<GroupRecord>(|g| g.label_ids.contains(&id))? {
            g.record.label_ids.remove(&id);
            self.update(&g.record, g.version)?;
        }
        Ok(())
    }

    /// Deletes a group and the annotations scoped to it. Videos are untouched.
    pub fn delete_group(&mut self, id: GroupId) -> Result<Vec<Annotation>, StoreError> {
        self.delete::<GroupRecord>(id, None)?;
        let mut removed = Vec::new();
        for ann in self.filter::<Annotation>(|a| a.group_id == Some(id))? {
            removed.push(self.delete_annotation(ann.record.id, None)?);
        }
        Ok(removed)
    }

    /// Deletes a user, dropping memberships and bookmarks. Their annotations stay,
    /// keeping the creator id.
    pub fn delete_user(&mut self, id: UserId) -> Result<(), StoreError> {
        self.delete::<UserRecord>(id, None)?;
        for mut g in self.filter::<GroupRecord>(|g| g.member_ids.contains(&id))? {
            g.record.member_ids.remove(&id);
            self.update(&g.record, g.version)?;
        }
        for mut v in self.filter::<VideoRecord>(|v| v.bookmarked_by.contains(&id))? {
            v.record.bookmarked_by.remove(&id);
            self.update(&v.record, v.version)?;
        }
        Ok(())
    }

    /// Next creation ordinal for annotations.
    pub fn next_created_seq(&self) -> Result<u64, StoreError> {
        Ok(self.scan::<Annotation>()?.iter().map(|a| a.record.created_seq + 1).max().unwrap_or(0))
    }
}
