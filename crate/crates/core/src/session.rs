//! Trace-building sessions for a parent agent and its subagents.
//!
//! A [`Session`] owns one CTEG and only ever grows it. Subagents run in their
//! own sessions and reach the parent as a single graft of their final trace.

use std::collections::{BTreeMap, BTreeSet};

use crate::clock::Runtime;
use crate::cteg::Cteg;
use crate::dynamics::{emit_in_place, ExecutionSequence};
use crate::error::{GraphError, SessionError};
use crate::graph::{NodeData, TypedTemporalGraph};
use crate::types::{ActionId, EventType, SessionId, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SessionStatus {
    Active,
    Completed,
    Failed,
}

/// What a parent does with the partial trace of a failed subagent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FailurePolicy {
    Discard,
    GraftPartial,
}

/// Ties a running child session to the parent node it was invoked from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubagentHandle {
    pub parent_node: ActionId,
    pub child_session: SessionId,
}

/// A step as recorded by a session; node attributes live in the trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoggedStep {
    Emission {
        root: ActionId,
        emitted: Vec<ActionId>,
    },
    Invocation {
        root: ActionId,
        attach: ActionId,
        child: ChildLog,
    },
}

/// The construction history of a grafted child.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChildLog {
    pub root: ActionId,
    pub steps: Vec<LoggedStep>,
}

#[derive(Debug)]
pub struct Session {
    id: SessionId,
    trace: Cteg,
    runtime: Runtime,
    last_issued: Timestamp,
    lower_bound: Option<Timestamp>,
    status: SessionStatus,
    pending: BTreeSet<SessionId>,
    consumed: BTreeSet<SessionId>,
    log: Vec<LoggedStep>,
}

impl Session {
    /// Starts a session whose trace is a single root. The root timestamp is
    /// strictly above `lower_bound` when one is given.
    pub fn begin(
        runtime: Runtime,
        root_type: EventType,
        payload: impl Into<Vec<u8>>,
        lower_bound: Option<Timestamp>,
    ) -> Self {
        let mut t = runtime.clock.now();
        if let Some(lb) = lower_bound {
            t = t.max(lb.successor());
        }
        let root = runtime.ids.action_id();
        let data = NodeData::new(t, root_type).with_payload(payload);
        Self {
            id: runtime.ids.session_id(),
            trace: Cteg::trivial(root, data),
            runtime,
            last_issued: t,
            lower_bound,
            status: SessionStatus::Active,
            pending: BTreeSet::new(),
            consumed: BTreeSet::new(),
            log: Vec::new(),
        }
    }

    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn root(&self) -> ActionId {
        self.trace.root()
    }

    pub fn lower_bound(&self) -> Option<Timestamp> {
        self.lower_bound
    }

    pub fn trace(&self) -> &Cteg {
        &self.trace
    }

    pub fn snapshot(&self) -> Cteg {
        self.trace.clone()
    }

    pub fn log(&self) -> &[LoggedStep] {
        &self.log
    }

    /// Marks an active session completed without a parent. Further mutation
    /// is rejected.
    pub fn finish(&mut self) -> Result<(), SessionError> {
        self.ensure_active()?;
        self.status = SessionStatus::Completed;
        Ok(())
    }

    /// One direct emission under `parent`. Every event gets its own
    /// timestamp, strictly increasing in argument order.
    pub fn emit(
        &mut self,
        parent: ActionId,
        events: Vec<(EventType, Vec<u8>)>,
    ) -> Result<Vec<ActionId>, SessionError> {
        self.ensure_active()?;
        let parent_time = self
            .trace
            .graph()
            .timestamp(parent)
            .ok_or(SessionError::UnknownParent(parent))?;
        if events.is_empty() {
            return Err(SessionError::EmptyEvents);
        }
        let mut ids = Vec::with_capacity(events.len());
        let mut new = BTreeMap::new();
        for (ty, payload) in events {
            let mut id = self.runtime.ids.action_id();
            while self.trace.contains(id) || new.contains_key(&id) {
                id = self.runtime.ids.action_id();
            }
            let t = self.issue(parent_time);
            new.insert(id, NodeData::new(t, ty).with_payload(payload));
            ids.push(id);
        }
        emit_in_place(self.trace.graph_mut(), parent, new)?;
        self.log.push(LoggedStep::Emission {
            root: parent,
            emitted: ids.clone(),
        });
        Ok(ids)
    }

    /// Opens a child session rooted after `t(parent)`. The parent trace is
    /// not touched until the child is completed or failed.
    pub fn invoke_subagent(
        &mut self,
        parent: ActionId,
        root_type: EventType,
        payload: impl Into<Vec<u8>>,
    ) -> Result<(SubagentHandle, Session), SessionError> {
        self.ensure_active()?;
        let parent_time = self
            .trace
            .graph()
            .timestamp(parent)
            .ok_or(SessionError::UnknownParent(parent))?;
        let child = Session::begin(self.runtime.clone(), root_type, payload, Some(parent_time));
        self.pending.insert(child.id);
        let handle = SubagentHandle {
            parent_node: parent,
            child_session: child.id,
        };
        Ok((handle, child))
    }

    /// Grafts the child's trace at the handle's parent node and marks the
    /// child completed.
    pub fn complete_subagent(
        &mut self,
        handle: &SubagentHandle,
        child: &mut Session,
    ) -> Result<(), SessionError> {
        self.check_handle(handle, child)?;
        self.graft_child(handle, child)?;
        child.status = SessionStatus::Completed;
        Ok(())
    }

    /// Retires a failed child. Under [`FailurePolicy::GraftPartial`] its
    /// partial trace is grafted exactly as on completion.
    pub fn fail_subagent(
        &mut self,
        handle: &SubagentHandle,
        child: &mut Session,
        policy: FailurePolicy,
    ) -> Result<(), SessionError> {
        self.check_handle(handle, child)?;
        match policy {
            FailurePolicy::Discard => {
                self.pending.remove(&handle.child_session);
                self.consumed.insert(handle.child_session);
            }
            FailurePolicy::GraftPartial => self.graft_child(handle, child)?,
        }
        child.status = SessionStatus::Failed;
        Ok(())
    }

    /// Rebuilds the labelled execution sequence that produced the current
    /// trace, including the histories of grafted children.
    pub fn execution_sequence(&self) -> ExecutionSequence {
        replay(self.trace.graph(), self.trace.root(), &self.log)
    }

    fn ensure_active(&self) -> Result<(), SessionError> {
        match self.status {
            SessionStatus::Active => Ok(()),
            other => Err(SessionError::Inactive(self.id, other)),
        }
    }

    fn issue(&mut self, parent_time: Timestamp) -> Timestamp {
        let mut t = self
            .runtime
            .clock
            .now()
            .max(self.last_issued.successor())
            .max(parent_time.successor());
        if let Some(lb) = self.lower_bound {
            t = t.max(lb.successor());
        }
        self.last_issued = t;
        t
    }

    fn check_handle(&self, handle: &SubagentHandle, child: &Session) -> Result<(), SessionError> {
        self.ensure_active()?;
        if self.consumed.contains(&handle.child_session) {
            return Err(SessionError::ConsumedHandle(handle.child_session));
        }
        if !self.pending.contains(&handle.child_session) {
            return Err(SessionError::UnknownHandle(handle.child_session));
        }
        if child.id != handle.child_session {
            return Err(SessionError::SessionMismatch {
                expected: handle.child_session,
                found: child.id,
            });
        }
        child.ensure_active()
    }

    fn graft_child(
        &mut self,
        handle: &SubagentHandle,
        child: &Session,
    ) -> Result<(), SessionError> {
        let parent = handle.parent_node;
        let parent_time = self
            .trace
            .graph()
            .timestamp(parent)
            .ok_or(SessionError::UnknownParent(parent))?;
        let attach = child.trace.root();
        let attach_time = child
            .trace
            .graph()
            .timestamp(attach)
            .expect("root has a timestamp");
        if parent_time >= attach_time {
            return Err(GraphError::Compatibility {
                parent,
                parent_time,
                root: attach,
                root_time: attach_time,
            }
            .into());
        }
        let g = self.trace.graph_mut();
        g.absorb(child.trace.graph())?;
        g.insert_edge_unchecked(parent, attach);
        self.last_issued = self.last_issued.max(child.last_issued);
        self.pending.remove(&handle.child_session);
        self.consumed.insert(handle.child_session);
        self.log.push(LoggedStep::Invocation {
            root: parent,
            attach,
            child: ChildLog {
                root: attach,
                steps: child.log.clone(),
            },
        });
        Ok(())
    }
}

fn replay(source: &TypedTemporalGraph, root: ActionId, log: &[LoggedStep]) -> ExecutionSequence {
    let data = source
        .node(root)
        .cloned()
        .expect("logged root is in the trace");
    let mut seq = ExecutionSequence::start(TypedTemporalGraph::trivial(root, data));
    for step in log {
        match step {
            LoggedStep::Emission { root, emitted } => {
                let new = emitted
                    .iter()
                    .map(|&a| {
                        (
                            a,
                            source
                                .node(a)
                                .cloned()
                                .expect("logged node is in the trace"),
                        )
                    })
                    .collect();
                seq.push_emission(*root, new)
                    .expect("logged emission replays");
            }
            LoggedStep::Invocation {
                root,
                attach,
                child,
            } => {
                let sub = replay(source, child.root, &child.steps);
                seq.push_invocation(*root, sub, Some(*attach))
                    .expect("logged invocation replays");
            }
        }
    }
    seq
}
