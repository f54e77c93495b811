//! Causal-temporal event graphs for multi-agent execution traces.
//!
//! A trace is a rooted tree of typed, timestamped events in which every
//! edge strictly increases time. Parents build traces through direct
//! emissions and by grafting the finished traces of subagents.

pub mod clock;
pub mod commitment;
pub mod cteg;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod persistence;
pub mod session;
pub mod simulate;
pub mod types;

pub use clock::{Clock, IdSource, ManualClock, RandomIds, Runtime, SeededIds, SystemClock};
pub use commitment::{merkle_root, node_digest, verify_commitment, Digest};
pub use cteg::{
    causal_path, e0_normalize, graft_cteg, height, temporal_projection, validate_causal_graph,
    validate_cteg, Cteg, Diagnostics, Violation,
};
pub use dynamics::{is_member_e_infinity, ExecutionSequence, Membership, StepLabel};
pub use error::{FormatError, GraphError, InvalidConfig, OracleError, SessionError, StoreError};
pub use graph::{graft, NodeData, TypedTemporalGraph};
pub use persistence::store::{FileStore, MemoryStore, Store};
pub use persistence::trace_format::{export_trace, import_trace};
pub use persistence::NodeRecord;
pub use session::{FailurePolicy, Session, SessionStatus, SubagentHandle};
pub use types::{ActionId, EventType, SessionId, Timestamp};
