//! Append-only node tables: in memory, or as a single binary log file.
//!
//! File layout: the 10-byte magic `CTEGSTORE1`, then records framed by a
//! `u32` little-endian body length. A body starts with a kind byte:
//!
//! * `1` registers a session: session id (16 bytes).
//! * `2` appends a node: node id (16), session id (16), parent flag (1) and
//!   parent id (16, only when the flag is 1), timestamp (`i64` LE), event
//!   type and payload each as a `u32` LE length followed by the bytes.
//!
//! Identifiers are written in the byte order of their hex rendering.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use super::{assemble, records_of, NodeRecord};
use crate::clock::{IdSource, RandomIds};
use crate::cteg::Cteg;
use crate::error::{GraphError, StoreError};
use crate::types::{ActionId, EventType, SessionId, Timestamp};

pub const MAGIC: &[u8; 10] = b"CTEGSTORE1";
pub const DEFAULT_PAYLOAD_LIMIT: usize = 1 << 20;

const KIND_SESSION: u8 = 1;
const KIND_NODE: u8 = 2;

/// The relational interface. There is deliberately no update or delete.
pub trait Store: Send + Sync {
    fn register_session(&self) -> Result<SessionId, StoreError>;
    fn append_node(&self, rec: NodeRecord) -> Result<(), StoreError>;
    fn load_session(&self, id: SessionId) -> Result<Cteg, StoreError>;
    /// Registered sessions in registration order.
    fn sessions(&self) -> Vec<SessionId>;
}

/// Registers a fresh session and appends every node of `c` to it.
pub fn persist_cteg(store: &dyn Store, c: &Cteg) -> Result<SessionId, StoreError> {
    let id = store.register_session()?;
    for rec in records_of(c, id) {
        store.append_node(rec)?;
    }
    Ok(id)
}

#[derive(Debug, Default)]
struct SessionRows {
    rows: Vec<NodeRecord>,
    times: HashMap<ActionId, Timestamp>,
    root: Option<ActionId>,
}

#[derive(Debug)]
struct Table {
    order: Vec<SessionId>,
    sessions: BTreeMap<SessionId, SessionRows>,
    payload_limit: usize,
}

impl Table {
    fn new(payload_limit: usize) -> Self {
        Self {
            order: Vec::new(),
            sessions: BTreeMap::new(),
            payload_limit,
        }
    }

    fn fresh_id(&self, ids: &dyn IdSource) -> SessionId {
        loop {
            let id = ids.session_id();
            if !self.sessions.contains_key(&id) {
                return id;
            }
        }
    }

    fn register(&mut self, id: SessionId) {
        if self.sessions.insert(id, SessionRows::default()).is_none() {
            self.order.push(id);
        }
    }

    fn check(&self, rec: &NodeRecord) -> Result<(), StoreError> {
        let session = rec.session_id;
        let s = self
            .sessions
            .get(&session)
            .ok_or(StoreError::UnknownSession(session))?;
        if rec.payload.len() > self.payload_limit {
            return Err(StoreError::PayloadTooLarge {
                size: rec.payload.len(),
                limit: self.payload_limit,
            });
        }
        if s.times.contains_key(&rec.node_id) {
            return Err(StoreError::DuplicateNode {
                session,
                node: rec.node_id,
            });
        }
        match rec.parent_id {
            None => match s.root {
                Some(existing) => Err(StoreError::DuplicateRoot {
                    session,
                    existing,
                    node: rec.node_id,
                }),
                None => Ok(()),
            },
            Some(parent) => {
                let parent_time = *s.times.get(&parent).ok_or(StoreError::UnknownParent {
                    session,
                    node: rec.node_id,
                    parent,
                })?;
                if rec.timestamp <= parent_time {
                    return Err(StoreError::Timestamp {
                        session,
                        source: GraphError::TimestampViolation {
                            parent,
                            parent_time,
                            child: rec.node_id,
                            child_time: rec.timestamp,
                        },
                    });
                }
                Ok(())
            }
        }
    }

    /// Inserts without checks; used for rows already checked or replayed
    /// from disk, where faults surface at load time instead.
    fn insert(&mut self, rec: NodeRecord) -> Result<(), StoreError> {
        let s = self
            .sessions
            .get_mut(&rec.session_id)
            .ok_or(StoreError::UnknownSession(rec.session_id))?;
        if rec.parent_id.is_none() && s.root.is_none() {
            s.root = Some(rec.node_id);
        }
        s.times.insert(rec.node_id, rec.timestamp);
        s.rows.push(rec);
        Ok(())
    }

    fn load(&self, id: SessionId) -> Result<Cteg, StoreError> {
        let s = self
            .sessions
            .get(&id)
            .ok_or(StoreError::UnknownSession(id))?;
        if s.rows.is_empty() {
            return Err(StoreError::EmptySession(id));
        }
        assemble(&s.rows)
            .into_cteg()
            .map_err(|diagnostics| StoreError::Corrupted {
                session: id,
                diagnostics,
            })
    }
}

pub struct MemoryStore {
    table: RwLock<Table>,
    ids: Arc<dyn IdSource>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::with_ids(Arc::new(RandomIds))
    }

    pub fn with_ids(ids: Arc<dyn IdSource>) -> Self {
        Self {
            table: RwLock::new(Table::new(DEFAULT_PAYLOAD_LIMIT)),
            ids,
        }
    }

    pub fn with_payload_limit(self, limit: usize) -> Self {
        self.table
            .write()
            .expect("store lock poisoned")
            .payload_limit = limit;
        self
    }
}

impl Default for MemoryStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Store for MemoryStore {
    fn register_session(&self) -> Result<SessionId, StoreError> {
        let mut t = self.table.write().expect("store lock poisoned");
        let id = t.fresh_id(self.ids.as_ref());
        t.register(id);
        Ok(id)
    }

    fn append_node(&self, rec: NodeRecord) -> Result<(), StoreError> {
        let mut t = self.table.write().expect("store lock poisoned");
        t.check(&rec)?;
        t.insert(rec)
    }

    fn load_session(&self, id: SessionId) -> Result<Cteg, StoreError> {
        self.table.read().expect("store lock poisoned").load(id)
    }

    fn sessions(&self) -> Vec<SessionId> {
        self.table
            .read()
            .expect("store lock poisoned")
            .order
            .clone()
    }
}

struct FileInner {
    file: File,
    table: Table,
}

/// A store persisted as one append-only log file.
pub struct FileStore {
    path: PathBuf,
    inner: Mutex<FileInner>,
    ids: Arc<dyn IdSource>,
}

impl FileStore {
    /// Opens or creates the log at `path`. A torn final record, as left by
    /// a crash mid-append, is truncated away.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(path, Arc::new(RandomIds), DEFAULT_PAYLOAD_LIMIT)
    }

    pub fn open_with(
        path: impl AsRef<Path>,
        ids: Arc<dyn IdSource>,
        payload_limit: usize,
    ) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let mut table = Table::new(payload_limit);
        if bytes.is_empty() {
            file.write_all(MAGIC)?;
            file.sync_data()?;
        } else {
            let (records, end) = scan(&bytes)?;
            for body in records {
                match decode(body.bytes, body.offset)? {
                    Decoded::Session(id) => table.register(id),
                    Decoded::Node(rec) => {
                        table.insert(rec).map_err(|_| StoreError::MalformedRecord {
                            offset: body.offset,
                            reason: "node record for an unregistered session".into(),
                        })?
                    }
                }
            }
            if end < bytes.len() {
                file.set_len(end as u64)?;
                file.sync_data()?;
            }
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Self {
            path,
            inner: Mutex::new(FileInner { file, table }),
            ids,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_record(file: &mut File, body: &[u8]) -> Result<(), StoreError> {
        let len = u32::try_from(body.len()).map_err(|_| StoreError::MalformedRecord {
            offset: 0,
            reason: "record exceeds 4 GiB".into(),
        })?;
        let mut frame = Vec::with_capacity(4 + body.len());
        frame.extend_from_slice(&len.to_le_bytes());
        frame.extend_from_slice(body);
        file.write_all(&frame)?;
        file.sync_data()?;
        Ok(())
    }
}

impl Store for FileStore {
    fn register_session(&self) -> Result<SessionId, StoreError> {
        let mut inner = self.inner.lock().expect("store lock poisoned");
        let id = inner.table.fresh_id(self.ids.as_ref());
        let mut body = vec![KIND_SESSION];
        body.extend_from_slice(&id.to_bytes());
        Self::write_record(&mut inner.file, &body)?;
        inner.table.register(id);
        Ok(id)
    }

    fn append_node(&self, rec: NodeRecord) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().expect("store lock poisoned");
        inner.table.check(&rec)?;
        Self::write_record(&mut inner.file, &encode_node(&rec))?;
        inner.table.insert(rec)
    }

    fn load_session(&self, id: SessionId) -> Result<Cteg, StoreError> {
        self.inner
            .lock()
            .expect("store lock poisoned")
            .table
            .load(id)
    }

    fn sessions(&self) -> Vec<SessionId> {
        self.inner
            .lock()
            .expect("store lock poisoned")
            .table
            .order
            .clone()
    }
}

/// Byte offsets at which the log can be cut without tearing a record: the
/// end of the magic header and the end of every complete record.
pub fn record_boundaries(bytes: &[u8]) -> Result<Vec<u64>, StoreError> {
    let (records, _) = scan(bytes)?;
    let mut out = vec![MAGIC.len() as u64];
    out.extend(records.iter().map(|r| r.offset + 4 + r.bytes.len() as u64));
    Ok(out)
}

struct Frame<'a> {
    offset: u64,
    bytes: &'a [u8],
}

/// Complete record bodies and the offset where the complete prefix ends.
fn scan(bytes: &[u8]) -> Result<(Vec<Frame<'_>>, usize), StoreError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let mut pos = MAGIC.len();
    let mut frames = Vec::new();
    while pos + 4 <= bytes.len() {
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        let Some(body) = bytes.get(pos + 4..pos + 4 + len) else {
            break;
        };
        frames.push(Frame {
            offset: pos as u64,
            bytes: body,
        });
        pos += 4 + len;
    }
    Ok((frames, pos))
}

enum Decoded {
    Session(SessionId),
    Node(NodeRecord),
}

fn encode_node(rec: &NodeRecord) -> Vec<u8> {
    let ty = rec.event_type.as_str().as_bytes();
    let mut b = Vec::with_capacity(64 + ty.len() + rec.payload.len());
    b.push(KIND_NODE);
    b.extend_from_slice(&rec.node_id.to_bytes());
    b.extend_from_slice(&rec.session_id.to_bytes());
    match rec.parent_id {
        Some(p) => {
            b.push(1);
            b.extend_from_slice(&p.to_bytes());
        }
        None => b.push(0),
    }
    b.extend_from_slice(&rec.timestamp.micros().to_le_bytes());
    b.extend_from_slice(&(ty.len() as u32).to_le_bytes());
    b.extend_from_slice(ty);
    b.extend_from_slice(&(rec.payload.len() as u32).to_le_bytes());
    b.extend_from_slice(&rec.payload);
    b
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    offset: u64,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let out = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| self.error("record body too short"))?;
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], StoreError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn sized(&mut self) -> Result<&'a [u8], StoreError> {
        let n = u32::from_le_bytes(self.array()?) as usize;
        self.take(n)
    }

    fn error(&self, reason: &str) -> StoreError {
        StoreError::MalformedRecord {
            offset: self.offset,
            reason: reason.into(),
        }
    }
}

fn decode(bytes: &[u8], offset: u64) -> Result<Decoded, StoreError> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        offset,
    };
    let out = match c.take(1)?[0] {
        KIND_SESSION => Decoded::Session(SessionId::from_bytes(c.array()?)),
        KIND_NODE => {
            let node_id = ActionId::from_bytes(c.array()?);
            let session_id = SessionId::from_bytes(c.array()?);
            let parent_id = match c.take(1)?[0] {
                0 => None,
                1 => Some(ActionId::from_bytes(c.array()?)),
                _ => return Err(c.error("bad parent flag")),
            };
            let timestamp = Timestamp::from_micros(i64::from_le_bytes(c.array()?));
            let ty =
                std::str::from_utf8(c.sized()?).map_err(|_| c.error("event type is not UTF-8"))?;
            let event_type = EventType::new(ty).map_err(|e| c.error(&e.to_string()))?;
            let payload = c.sized()?.to_vec();
            Decoded::Node(NodeRecord {
                node_id,
                session_id,
                parent_id,
                timestamp,
                event_type,
                payload,
            })
        }
        _ => return Err(c.error("unknown record kind")),
    };
    if c.pos != bytes.len() {
        return Err(c.error("trailing bytes in record"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SeededIds;

    fn ty() -> EventType {
        EventType::new("x").unwrap()
    }

    fn rec(s: SessionId, n: u128, p: Option<u128>, t: i64) -> NodeRecord {
        NodeRecord {
            node_id: ActionId::from_u128(n),
            session_id: s,
            parent_id: p.map(ActionId::from_u128),
            timestamp: Timestamp::from_micros(t),
            event_type: ty(),
            payload: vec![1, 2, 3],
        }
    }

    fn exercise(store: &dyn Store) {
        let s = store.register_session().unwrap();
        let s2 = store.register_session().unwrap();
        assert_ne!(s, s2);
        assert_eq!(store.sessions(), vec![s, s2]);
        assert!(matches!(
            store.load_session(s),
            Err(StoreError::EmptySession(_))
        ));
        store.append_node(rec(s, 1, None, 0)).unwrap();
        assert!(matches!(
            store.append_node(rec(s, 3, Some(2), 5)),
            Err(StoreError::UnknownParent { .. })
        ));
        store.append_node(rec(s, 2, Some(1), 1)).unwrap();
        assert!(matches!(
            store.append_node(rec(s, 4, None, 2)),
            Err(StoreError::DuplicateRoot { .. })
        ));
        assert!(matches!(
            store.append_node(rec(s, 2, Some(1), 3)),
            Err(StoreError::DuplicateNode { .. })
        ));
        assert!(matches!(
            store.append_node(rec(s, 5, Some(2), 1)),
            Err(StoreError::Timestamp { .. })
        ));
        let unknown = SessionId::from_u128(0);
        assert!(matches!(
            store.append_node(rec(unknown, 1, None, 0)),
            Err(StoreError::UnknownSession(_))
        ));
        assert!(matches!(
            store.load_session(unknown),
            Err(StoreError::UnknownSession(_))
        ));
        let c = store.load_session(s).unwrap();
        assert_eq!(c.node_count(), 2);
        assert_eq!(
            c.graph().node(ActionId::from_u128(2)).unwrap().payload,
            vec![1, 2, 3]
        );
    }

    #[test]
    fn memory_store_contract() {
        exercise(&MemoryStore::with_ids(Arc::new(SeededIds::new(1))));
    }

    #[test]
    fn file_store_contract_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log");
        let store = FileStore::open(&path).unwrap();
        exercise(&store);
        let sessions = store.sessions();
        let before = store.load_session(sessions[0]).unwrap();
        drop(store);
        let again = FileStore::open(&path).unwrap();
        assert_eq!(again.sessions(), sessions);
        assert_eq!(again.load_session(sessions[0]).unwrap(), before);
    }

    #[test]
    fn payload_cap() {
        let store = MemoryStore::new().with_payload_limit(2);
        let s = store.register_session().unwrap();
        assert!(matches!(
            store.append_node(rec(s, 1, None, 0)),
            Err(StoreError::PayloadTooLarge { size: 3, limit: 2 })
        ));
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log");
        let store = FileStore::open(&path).unwrap();
        let s = store.register_session().unwrap();
        store.append_node(rec(s, 1, None, 0)).unwrap();
        store.append_node(rec(s, 2, Some(1), 1)).unwrap();
        drop(store);
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 3]).unwrap();
        let store = FileStore::open(&path).unwrap();
        assert_eq!(store.load_session(s).unwrap().node_count(), 1);
        store.append_node(rec(s, 3, Some(1), 2)).unwrap();
        drop(store);
        let store = FileStore::open(&path).unwrap();
        assert_eq!(store.load_session(s).unwrap().node_count(), 2);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log");
        std::fs::write(&path, b"NOTASTORE!").unwrap();
        assert!(matches!(FileStore::open(&path), Err(StoreError::BadMagic)));
    }

    #[test]
    fn boundaries_cover_every_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log");
        let store = FileStore::open(&path).unwrap();
        let s = store.register_session().unwrap();
        store.append_node(rec(s, 1, None, 0)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let b = record_boundaries(&bytes).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(*b.last().unwrap(), bytes.len() as u64);
    }
}
