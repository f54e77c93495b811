//! Relational encoding of traces: one row per node with a parent pointer.
//!
//! [`store`] keeps rows in an append-only table and [`trace_format`] is the
//! canonical text rendering of one session.

pub mod store;
pub mod trace_format;

use crate::cteg::{find_cycles, temporal_projection, validate_cteg, Cteg, Diagnostics, Violation};
use crate::graph::{NodeData, TypedTemporalGraph};
use crate::types::{ActionId, EventType, SessionId, Timestamp};

/// A row of the node table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeRecord {
    pub node_id: ActionId,
    pub session_id: SessionId,
    pub parent_id: Option<ActionId>,
    pub timestamp: Timestamp,
    pub event_type: EventType,
    pub payload: Vec<u8>,
}

impl NodeRecord {
    pub fn data(&self) -> NodeData {
        NodeData::new(self.timestamp, self.event_type.clone()).with_payload(self.payload.clone())
    }
}

/// The rows of `c` in temporal-projection order, so parents precede children.
pub fn records_of(c: &Cteg, session: SessionId) -> Vec<NodeRecord> {
    let parents = c.parent_map();
    temporal_projection(c)
        .into_iter()
        .map(|n| {
            let d = c.graph().node(n).expect("projected node exists");
            NodeRecord {
                node_id: n,
                session_id: session,
                parent_id: parents.get(&n).copied(),
                timestamp: d.timestamp,
                event_type: d.event_type.clone(),
                payload: d.payload.clone(),
            }
        })
        .collect()
}

/// A graph rebuilt from rows by resolving parent pointers.
#[derive(Clone, Debug)]
pub struct Assembled {
    pub graph: TypedTemporalGraph,
    pub root: Option<ActionId>,
    pub diagnostics: Diagnostics,
}

impl Assembled {
    pub fn into_cteg(self) -> Result<Cteg, Diagnostics> {
        match (self.root, self.diagnostics.is_ok()) {
            (Some(root), true) => Ok(Cteg::new_unchecked(self.graph, root)),
            _ => Err(self.diagnostics),
        }
    }
}

/// Rebuilds the graph described by `records` in any order and reports every
/// way it fails to be a CTEG.
pub fn assemble<'a>(records: impl IntoIterator<Item = &'a NodeRecord>) -> Assembled {
    let mut graph = TypedTemporalGraph::new();
    let mut out = Vec::new();
    let mut pointers = Vec::new();
    let mut roots = Vec::new();
    for r in records {
        if graph.add_node(r.node_id, r.data()).is_err() {
            out.push(Violation::DuplicateNode(r.node_id));
            continue;
        }
        match r.parent_id {
            Some(p) => pointers.push((p, r.node_id)),
            None => roots.push(r.node_id),
        }
    }
    for (p, n) in pointers {
        if p == n {
            out.push(Violation::Cycle(vec![n]));
        } else if graph.add_edge(p, n).is_err() {
            out.push(Violation::UnknownParent { node: n, parent: p });
        }
    }
    let root = match roots.as_slice() {
        [r] => Some(*r),
        [] => {
            out.push(Violation::NoRoot);
            out.extend(find_cycles(&graph).into_iter().map(Violation::Cycle));
            None
        }
        many => {
            out.push(Violation::MultipleRoots(many.to_vec()));
            out.extend(find_cycles(&graph).into_iter().map(Violation::Cycle));
            None
        }
    };
    if let Some(r) = root {
        out.extend(validate_cteg(&graph, r).0);
    }
    Assembled {
        graph,
        root,
        diagnostics: Diagnostics(out),
    }
}
