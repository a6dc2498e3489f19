use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use tokio::sync::Notify;
use tracing::debug;

use vidnote_core::UserId;

use crate::messages::{ChannelKey, EventBody, EventDraft, ServerMessage, VersionedAnnotation, CLOSE_RESYNC_REQUIRED};

/// Messages a connection may have queued before it is disconnected.
pub const EVENT_BUFFER: usize = 1024;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outbound {
    Text(Arc<str>),
    Close { code: u16, reason: &'static str },
}

struct OutboxState {
    queue: VecDeque<Outbound>,
    closed: bool,
}

/// Single-consumer queue of serialized messages for one connection.
pub struct Outbox {
    state: Mutex<OutboxState>,
    notify: Notify,
    capacity: usize,
}

impl Outbox {
    fn new(capacity: usize) -> Self {
        Self { state: Mutex::new(OutboxState { queue: VecDeque::new(), closed: false }), notify: Notify::new(), capacity }
    }

    /// Queues `text`; on overflow drops the backlog and queues a resync close instead.
    /// Returns false once the outbox is closed.
    fn push(&self, text: Arc<str>) -> bool {
        let mut st = lock(&self.state);
        if st.closed {
            return false;
        }
        if st.queue.len() >= self.capacity {
            st.queue.clear();
            st.queue.push_back(Outbound::Close { code: CLOSE_RESYNC_REQUIRED, reason: "resync required" });
            st.closed = true;
            drop(st);
            self.notify.notify_one();
            return false;
        }
        st.queue.push_back(Outbound::Text(text));
        drop(st);
        self.notify.notify_one();
        true
    }

    fn close(&self) {
        lock(&self.state).closed = true;
        self.notify.notify_one();
    }

    pub fn try_recv(&self) -> Option<Outbound> {
        lock(&self.state).queue.pop_front()
    }

    pub fn is_closed(&self) -> bool {
        lock(&self.state).closed
    }

    /// Next message, or `None` once closed and drained.
    pub async fn recv(&self) -> Option<Outbound> {
        loop {
            {
                let mut st = lock(&self.state);
                if let Some(m) = st.queue.pop_front() {
                    return Some(m);
                }
                if st.closed {
                    return None;
                }
            }
            self.notify.notified().await;
        }
    }
}

#[derive(Default)]
struct Channel {
    seq: u64,
    subscribers: BTreeMap<u64, Arc<Outbox>>,
}

/// Event fan-out keyed by `(video, group)` channel.
///
/// Each channel has its own sequencer. Sequence numbers are assigned while the
/// channel is locked around the store commit that produced the events, so a
/// subscription snapshot is always consistent with the events that follow it.
pub struct Hub {
    channels: Mutex<HashMap<ChannelKey, Arc<Mutex<Channel>>>>,
    next_connection: AtomicU64,
    capacity: usize,
}

impl Default for Hub {
    fn default() -> Self {
        Self::with_capacity(EVENT_BUFFER)
    }
}

impl Hub {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self { channels: Mutex::new(HashMap::new()), next_connection: AtomicU64::new(1), capacity: capacity.max(1) }
    }

    fn channel(&self, key: ChannelKey) -> Arc<Mutex<Channel>> {
        Arc::clone(lock(&self.channels).entry(key).or_default())
    }

    pub fn connect(self: &Arc<Self>) -> Connection {
        Connection {
            id: self.next_connection.fetch_add(1, Ordering::Relaxed),
            outbox: Arc::new(Outbox::new(self.capacity)),
            hub: Arc::clone(self),
            subscriptions: Mutex::new(BTreeSet::new()),
        }
    }

    /// Latest sequence number assigned on `key`, 0 before any event.
    pub fn current_seq(&self, key: ChannelKey) -> u64 {
        lock(&self.channels).get(&key).map_or(0, |c| lock(c).seq)
    }

    pub fn subscriber_count(&self, key: ChannelKey) -> usize {
        lock(&self.channels).get(&key).map_or(0, |c| lock(c).subscribers.len())
    }

    /// Subscribes `conn` to `key`. `snapshot` runs under the channel lock and its
    /// result is queued as the snapshot message ahead of any later event.
    pub fn subscribe<E>(
        &self,
        conn: &Connection,
        key: ChannelKey,
        snapshot: impl FnOnce() -> Result<Vec<VersionedAnnotation>, E>,
    ) -> Result<(), E> {
        let channel = self.channel(key);
        let mut ch = lock(&channel);
        let annotations = snapshot()?;
        let msg = ServerMessage::Snapshot { seq: ch.seq, video_id: key.video_id, group_id: key.group_id, annotations };
        if conn.outbox.push(msg.to_json().into()) {
            ch.subscribers.insert(conn.id, Arc::clone(&conn.outbox));
            lock(&conn.subscriptions).insert(key);
        }
        Ok(())
    }

    pub fn unsubscribe(&self, conn: &Connection, key: ChannelKey) -> bool {
        lock(&conn.subscriptions).remove(&key);
        self.detach(conn.id, key)
    }

    fn detach(&self, id: u64, key: ChannelKey) -> bool {
        let channel = lock(&self.channels).get(&key).cloned();
        channel.is_some_and(|c| lock(&c).subscribers.remove(&id).is_some())
    }

    /// Runs `commit` with every channel in `keys` locked and publishes the events
    /// it returns. Nothing is published when `commit` fails.
    ///
    /// Events addressed to channels outside `keys` are published after the
    /// listed channels are released.
    pub fn publish_with<R, E>(
        &self,
        keys: &[ChannelKey],
        origin: UserId,
        commit: impl FnOnce() -> Result<(R, Vec<EventDraft>), E>,
    ) -> Result<R, E> {
        let mut keys = keys.to_vec();
        keys.sort();
        keys.dedup();
        let channels: Vec<Arc<Mutex<Channel>>> = keys.iter().map(|k| self.channel(*k)).collect();
        let mut guards: Vec<MutexGuard<'_, Channel>> = channels.iter().map(|c| lock(c)).collect();

        let (out, drafts) = commit()?;
        let mut late = Vec::new();
        for draft in drafts {
            match keys.binary_search(&draft.key) {
                Ok(i) => deliver(&mut guards[i], draft, origin),
                Err(_) => late.push(draft),
            }
        }
        drop(guards);
        for draft in late {
            let channel = self.channel(draft.key);
            deliver(&mut lock(&channel), draft, origin);
        }
        Ok(out)
    }

    pub fn publish(&self, origin: UserId, drafts: Vec<EventDraft>) {
        let keys: Vec<ChannelKey> = drafts.iter().map(|d| d.key).collect();
        let _ = self.publish_with(&keys, origin, || Ok::<_, ()>(((), drafts)));
    }

    /// Existing channels of one video.
    pub fn channels_of_video(&self, video: vidnote_core::VideoId) -> Vec<ChannelKey> {
        lock(&self.channels).keys().filter(|k| k.video_id == video).copied().collect()
    }
}

fn deliver(ch: &mut Channel, draft: EventDraft, origin: UserId) {
    ch.seq += 1;
    let body = EventBody {
        seq: ch.seq,
        video_id: draft.key.video_id,
        group_id: draft.key.group_id,
        origin_user_id: origin,
        payload: draft.payload,
    };
    let text: Arc<str> = ServerMessage::event(draft.kind, body).to_json().into();
    ch.subscribers.retain(|id, outbox| {
        let kept = outbox.push(Arc::clone(&text));
        if !kept {
            debug!(connection = id, "dropping subscriber that fell behind");
        }
        kept
    });
}

/// One client's view of the hub: its outbox and the channels it follows.
pub struct Connection {
    id: u64,
    outbox: Arc<Outbox>,
    hub: Arc<Hub>,
    subscriptions: Mutex<BTreeSet<ChannelKey>>,
}

impl Connection {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn outbox(&self) -> &Outbox {
        &self.outbox
    }

    pub async fn recv(&self) -> Option<Outbound> {
        self.outbox.recv().await
    }

    /// Queues a message outside any channel, such as an error reply.
    pub fn send(&self, msg: &ServerMessage) -> bool {
        self.outbox.push(msg.to_json().into())
    }

    pub fn subscriptions(&self) -> Vec<ChannelKey> {
        lock(&self.subscriptions).iter().copied().collect()
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.outbox.close();
        for key in std::mem::take(&mut *lock(&self.subscriptions)) {
            self.hub.detach(self.id, key);
        }
    }
}
