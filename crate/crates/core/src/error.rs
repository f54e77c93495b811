use std::io;

use thiserror::Error;

use crate::cteg::Diagnostics;
use crate::session::SessionStatus;
use crate::types::{ActionId, SessionId, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid event type name {0:?}: must be non-empty without control characters")]
pub struct InvalidEventType(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed identifier {0:?}: expected 32 lowercase hex digits")]
pub struct ParseIdError(pub String);

/// Structural failures of graph construction, grafting and step application.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(ActionId),
    #[error("node sets are not disjoint: {0:?} already present")]
    NodeCollision(Vec<ActionId>),
    #[error("self-loop on node {0}")]
    SelfLoop(ActionId),
    #[error("edge ({0}, {1}) has an endpoint outside the node set")]
    DanglingEdge(ActionId, ActionId),
    #[error(
        "causal-temporal compatibility violated: t({parent}) = {parent_time} is not before t({root}) = {root_time}"
    )]
    Compatibility {
        parent: ActionId,
        parent_time: Timestamp,
        root: ActionId,
        root_time: Timestamp,
    },
    #[error("emission set is empty")]
    EmptyEmission,
    #[error(
        "timestamp violation: t({parent}) = {parent_time} is not before t({child}) = {child_time}"
    )]
    TimestampViolation {
        parent: ActionId,
        parent_time: Timestamp,
        child: ActionId,
        child_time: Timestamp,
    },
    #[error("final graph of the subtrace has no node of in-degree zero")]
    NoAttachNode,
    #[error("final graph of the subtrace has several in-degree-zero nodes {0:?}; designate one")]
    AmbiguousAttachNode(Vec<ActionId>),
    #[error("attach node {0} has non-zero in-degree in the subtrace's final graph")]
    AttachNotSource(ActionId),
    #[error("execution sequence is empty")]
    EmptySequence,
    #[error("graph {0} of the sequence does not extend its predecessor")]
    NotAnExtension(usize),
    #[error("expected {expected} step labels, got {found}")]
    StepCount { expected: usize, found: usize },
    #[error("not a valid CTEG: {0}")]
    NotACteg(Diagnostics),
    #[error("step is not an invocation")]
    NotAnInvocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("universe bounds invalid: {0}")]
    InvalidBounds(&'static str),
    #[error("sequence outside universe bounds: {0}")]
    OutOfBounds(String),
    #[error("state budget of {budget} sequences exceeded; completed level sizes {completed:?}")]
    BudgetExceeded {
        budget: usize,
        completed: Vec<usize>,
    },
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session {0} is {1:?}, not active")]
    Inactive(SessionId, SessionStatus),
    #[error("unknown parent node {0}")]
    UnknownParent(ActionId),
    #[error("event list is empty")]
    EmptyEvents,
    #[error("handle for child session {0} was not issued by this session")]
    UnknownHandle(SessionId),
    #[error("handle for child session {0} was already consumed")]
    ConsumedHandle(SessionId),
    #[error("session mismatch: handle names {expected}, got {found}")]
    SessionMismatch {
        expected: SessionId,
        found: SessionId,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O failed: {0}")]
    Io(#[from] io::Error),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {0} has no nodes")]
    EmptySession(SessionId),
    #[error("node {node} in session {session} references unknown parent {parent}")]
    UnknownParent {
        session: SessionId,
        node: ActionId,
        parent: ActionId,
    },
    #[error("node {node} already appended to session {session}")]
    DuplicateNode { session: SessionId, node: ActionId },
    #[error("session {session} already has root {existing}; {node} has no parent")]
    DuplicateRoot {
        session: SessionId,
        existing: ActionId,
        node: ActionId,
    },
    #[error("timestamp violation in session {session}: {source}")]
    Timestamp {
        session: SessionId,
        #[source]
        source: GraphError,
    },
    #[error("payload of {size} bytes exceeds the {limit}-byte cap")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("session {session} failed reconstruction: {diagnostics}")]
    Corrupted {
        session: SessionId,
        diagnostics: Diagnostics,
    },
    #[error("not a store file: bad magic header")]
    BadMagic,
    #[error("malformed record at byte offset {offset}: {reason}")]
    MalformedRecord { offset: u64, reason: String },
}

/// Errors reading the line-delimited trace format.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("trace fails validation: {0}")]
    Invalid(Diagnostics),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid simulation config: {0}")]
pub struct InvalidConfig(pub &'static str);
