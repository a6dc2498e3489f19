use std::collections::HashSet;
use std::panic::{self, AssertUnwindSafe};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use thiserror::Error;
use tracing::error;

use vidnote_core::AnnotationId;

type Task = Box<dyn FnOnce() + Send + 'static>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("a job for annotation {0} is already queued or running")]
    AlreadyActive(AnnotationId),
    #[error("worker pool is shut down")]
    ShutDown,
}

/// Bounded pool of tracker workers with at most one job per annotation.
pub struct WorkerPool {
    sender: Option<Sender<(AnnotationId, Task)>>,
    active: Arc<Mutex<HashSet<AnnotationId>>>,
    workers: Vec<JoinHandle<()>>,
}

struct Release {
    active: Arc<Mutex<HashSet<AnnotationId>>>,
    key: AnnotationId,
}

impl Drop for Release {
    fn drop(&mut self) {
        self.active.lock().unwrap_or_else(|p| p.into_inner()).remove(&self.key);
    }
}

impl WorkerPool {
    pub fn new(workers: usize) -> Self {
        let (sender, receiver) = mpsc::channel::<(AnnotationId, Task)>();
        let receiver = Arc::new(Mutex::new(receiver));
        let active = Arc::new(Mutex::new(HashSet::new()));
        let workers = (0..workers.max(1))
            .map(|i| {
                let receiver = Arc::clone(&receiver);
                let active = Arc::clone(&active);
                thread::Builder::new()
                    .name(format!("tracker-{i}"))
                    .spawn(move || worker_loop(&receiver, &active))
                    .expect("spawn tracker worker")
            })
            .collect();
        Self { sender: Some(sender), active, workers }
    }

    pub fn submit<F>(&self, key: AnnotationId, task: F) -> Result<(), PoolError>
    where
        F: FnOnce() + Send + 'static,
    {
        let sender = self.sender.as_ref().ok_or(PoolError::ShutDown)?;
        let mut active = self.active.lock().unwrap_or_else(|p| p.into_inner());
        if !active.insert(key) {
            return Err(PoolError::AlreadyActive(key));
        }
        if sender.send((key, Box::new(task))).is_err() {
            active.remove(&key);
            return Err(PoolError::ShutDown);
        }
        Ok(())
    }

    pub fn is_active(&self, key: &AnnotationId) -> bool {
        self.active.lock().unwrap_or_else(|p| p.into_inner()).contains(key)
    }

    pub fn active_count(&self) -> usize {
        self.active.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn worker_count(&self) -> usize {
        self.workers.len()
    }
}

fn worker_loop(receiver: &Mutex<Receiver<(AnnotationId, Task)>>, active: &Arc<Mutex<HashSet<AnnotationId>>>) {
    loop {
        let next = receiver.lock().unwrap_or_else(|p| p.into_inner()).recv();
        let Ok((key, task)) = next else { return };
        let _release = Release { active: Arc::clone(active), key };
        if panic::catch_unwind(AssertUnwindSafe(task)).is_err() {
            error!(annotation = %key, "tracker job panicked");
        }
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.sender.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
