use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::StoreError;
use crate::log::LogFile;
use crate::records::{Collection, Record};

#[derive(Debug, Clone, PartialEq)]
pub struct Versioned<T> {
    pub version: u64,
    pub record: T,
}

#[derive(Debug, Clone)]
struct Stored {
    version: u64,
    value: Arc<Value>,
}

#[derive(Debug, Default)]
struct State {
    tables: BTreeMap<Collection, BTreeMap<String, Stored>>,
}

/// One record write inside a committed transaction; `value: None` deletes.
#[derive(Debug, Serialize, Deserialize)]
struct Op {
    c: Collection,
    k: String,
    v: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<Value>,
}

impl State {
    fn apply(&mut self, ops: Vec<Op>) {
        for op in ops {
            let table = self.tables.entry(op.c).or_default();
            match op.value {
                Some(value) => {
                    table.insert(op.k, Stored { version: op.v, value: Arc::new(value) });
                }
                None => {
                    table.remove(&op.k);
                }
            }
        }
    }

    fn replay(&mut self, path: &Path, payloads: Vec<Vec<u8>>) -> Result<(), StoreError> {
        for p in payloads {
            let ops: Vec<Op> = serde_json::from_slice(&p)
                .map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), reason: e.to_string() })?;
            self.apply(ops);
        }
        Ok(())
    }
}

/// Transactional record store with optimistic per-record versions.
///
/// Versions start at 1 on insert and increase by one on every update. All
/// writes of one transaction become visible together, both in memory and in
/// the log. With a log file, several processes may share one store: each
/// commit takes an exclusive file lock and first replays what others appended.
pub struct Store {
    state: RwLock<State>,
    log: Mutex<Option<LogFile>>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self { state: RwLock::new(State::default()), log: Mutex::new(None) }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
        }
        let (log, payloads) = LogFile::open(path)?;
        let mut state = State::default();
        state.replay(path, payloads)?;
        Ok(Self { state: RwLock::new(state), log: Mutex::new(Some(log)) })
    }

    fn refresh(&self) -> Result<(), StoreError> {
        let mut guard = self.log.lock().unwrap_or_else(|p| p.into_inner());
        let Some(log) = guard.as_mut() else { return Ok(()) };
        let on_disk = std::fs::metadata(log.path()).map_err(|e| StoreError::io(log.path(), e))?.len();
        if on_disk == log.offset() {
            return Ok(());
        }
        let payloads = log.catch_up()?;
        let path = log.path().to_path_buf();
        self.state.write().unwrap_or_else(|p| p.into_inner()).replay(&path, payloads)
    }

    /// Runs `f` against a consistent snapshot of committed state.
    pub fn read<R>(&self, f: impl FnOnce(&Tx<'_>) -> R) -> Result<R, StoreError> {
        self.refresh()?;
        let state = self.state.read().unwrap_or_else(|p| p.into_inner());
        Ok(f(&Tx::new(&state)))
    }

    /// Runs `f` and commits its writes atomically if it returns `Ok`.
    /// Transactions are serialized, so reads inside `f` see the latest commit.
    pub fn transact<R, E>(&self, f: impl FnOnce(&mut Tx<'_>) -> Result<R, E>) -> Result<R, E>
    where
        E: From<StoreError>,
    {
        let mut guard = self.log.lock().unwrap_or_else(|p| p.into_inner());
        let run = |state: &State| -> Result<(Vec<Op>, R), E> {
            let mut tx = Tx::new(state);
            let out = f(&mut tx)?;
            Ok((tx.into_ops(), out))
        };
        match guard.as_mut() {
            None => {
                let (ops, out) = run(&self.state.read().unwrap_or_else(|p| p.into_inner()))?;
                self.state.write().unwrap_or_else(|p| p.into_inner()).apply(ops);
                Ok(out)
            }
            Some(log) => {
                let path = log.path().to_path_buf();
                log.commit_with(|behind| {
                    self.state.write().unwrap_or_else(|p| p.into_inner()).replay(&path, behind)?;
                    let (ops, out) = run(&self.state.read().unwrap_or_else(|p| p.into_inner()))?;
                    if ops.is_empty() {
                        return Ok((None, (ops, out)));
                    }
                    let payload = serde_json::to_vec(&ops).expect("ops serialize");
                    Ok((Some(payload), (ops, out)))
                })
                .map(|(ops, out)| {
                    self.state.write().unwrap_or_else(|p| p.into_inner()).apply(ops);
                    out
                })
            }
        }
    }

    pub fn get<T: Record>(&self, key: impl Display) -> Result<Versioned<T>, StoreError> {
        self.read(|tx| tx.require(key))?
    }

    pub fn find<T: Record>(&self, key: impl Display) -> Result<Option<Versioned<T>>, StoreError> {
        self.read(|tx| tx.get(key))?
    }

    pub fn scan<T: Record>(&self) -> Result<Vec<Versioned<T>>, StoreError> {
        self.read(|tx| tx.scan())?
    }

    pub fn insert<T: Record>(&self, record: &T) -> Result<u64, StoreError> {
        self.transact(|tx| tx.insert(record))
    }

    pub fn update<T: Record>(&self, record: &T, expected: u64) -> Result<u64, StoreError> {
        self.transact(|tx| tx.update(record, expected))
    }

    pub fn delete<T: Record>(&self, key: impl Display, expected: Option<u64>) -> Result<(), StoreError> {
        self.transact(|tx| tx.delete::<T>(key, expected))
    }
}

/// View of committed state plus the pending writes of one transaction.
pub struct Tx<'a> {
    base: &'a State,
    writes: BTreeMap<(Collection, String), Option<Stored>>,
}

fn decode<T: Record>(key: &str, s: &Stored) -> Result<Versioned<T>, StoreError> {
    let record = T::deserialize(&*s.value)
        .map_err(|source| StoreError::Decode { collection: T::COLLECTION, key: key.to_string(), source })?;
    Ok(Versioned { version: s.version, record })
}

impl<'a> Tx<'a> {
    fn new(base: &'a State) -> Self {
        Self { base, writes: BTreeMap::new() }
    }

    fn into_ops(self) -> Vec<Op> {
        self.writes
            .into_iter()
            .map(|((c, k), w)| match w {
                Some(s) => Op { c, k, v: s.version, value: Some((*s.value).clone()) },
                None => Op { c, k, v: 0, value: None },
            })
            .collect()
    }

    fn lookup(&self, c: Collection, key: &str) -> Option<&Stored> {
        match self.writes.get(&(c, key.to_string())) {
            Some(w) => w.as_ref(),
            None => self.base.tables.get(&c).and_then(|t| t.get(key)),
        }
    }

    pub fn get<T: Record>(&self, key: impl Display) -> Result<Option<Versioned<T>>, StoreError> {
        let key = key.to_string();
        self.lookup(T::COLLECTION, &key).map(|s| decode(&key, s)).transpose()
    }

    pub fn require<T: Record>(&self, key: impl Display) -> Result<Versioned<T>, StoreError> {
        let key = key.to_string();
        self.get(&key)?.ok_or(StoreError::NotFound { collection: T::COLLECTION, key })
    }

    /// Every record of `T`'s collection in key order.
    pub fn scan<T: Record>(&self) -> Result<Vec<Versioned<T>>, StoreError> {
        let c = T::COLLECTION;
        let mut merged: BTreeMap<&str, &Stored> =
            self.base.tables.get(&c).into_iter().flatten().map(|(k, s)| (k.as_str(), s)).collect();
        for ((wc, k), w) in &self.writes {
            if *wc != c {
                continue;
            }
            match w {
                Some(s) => merged.insert(k.as_str(), s),
                None => merged.remove(k.as_str()),
            };
        }
        merged.into_iter().map(|(k, s)| decode(k, s)).collect()
    }

    pub fn filter<T: Record>(&self, mut pred: impl FnMut(&T) -> bool) -> Result<Vec<Versioned<T>>, StoreError> {
        Ok(self.scan::<T>()?.into_iter().filter(|v| pred(&v.record)).collect())
    }

    fn current_version(&self, c: Collection, key: &str) -> Option<u64> {
        self.lookup(c, key).map(|s| s.version)
    }

    fn write<T: Record>(&mut self, record: &T, version: u64) -> u64 {
        let value = serde_json::to_value(record).expect("records serialize");
        self.writes.insert((T::COLLECTION, record.key()), Some(Stored { version, value: Arc::new(value) }));
        version
    }

    pub fn insert<T: Record>(&mut self, record: &T) -> Result<u64, StoreError> {
        let key = record.key();
        if self.current_version(T::COLLECTION, &key).is_some() {
            return Err(StoreError::AlreadyExists { collection: T::COLLECTION, key });
        }
        Ok(self.write(record, 1))
    }

    /// Replaces the record if its current version is `expected`.
    pub fn update<T: Record>(&mut self, record: &T, expected: u64) -> Result<u64, StoreError> {
        let key = record.key();
        match self.current_version(T::COLLECTION, &key) {
            None => Err(StoreError::NotFound { collection: T::COLLECTION, key }),
            Some(v) if v != expected => {
                Err(StoreError::VersionConflict { collection: T::COLLECTION, key, expected, actual: Some(v) })
            }
            Some(v) => Ok(self.write(record, v + 1)),
        }
    }

    /// Inserts or replaces without a version check.
    pub fn put<T: Record>(&mut self, record: &T) -> u64 {
        let next = self.current_version(T::COLLECTION, &record.key()).map_or(1, |v| v + 1);
        self.write(record, next)
    }

    pub fn delete<T: Record>(&mut self, key: impl Display, expected: Option<u64>) -> Result<(), StoreError> {
        let key = key.to_string();
        match self.current_version(T::COLLECTION, &key) {
            None => Err(StoreError::NotFound { collection: T::COLLECTION, key }),
            Some(v) if expected.is_some_and(|e| e != v) => Err(StoreError::VersionConflict {
                collection: T::COLLECTION,
                key,
                expected: expected.unwrap(),
                actual: Some(v),
            }),
            Some(_) => {
                self.writes.insert((T::COLLECTION, key), None);
                Ok(())
            }
        }
    }
}
