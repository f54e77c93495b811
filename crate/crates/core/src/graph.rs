//! Typed temporal graphs: directed graphs over action identifiers carrying a
//! timestamp, an event type and an opaque payload on every node.
//!
//! No rootedness or temporal compatibility is assumed here; see
//! [`crate::cteg`] for the validated refinement.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;

use crate::error::GraphError;
use crate::types::{ActionId, EventType, Timestamp};

/// Per-node attributes. Keeping them in one record makes the timestamp and
/// type maps total on the node set by construction.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeData {
    pub timestamp: Timestamp,
    pub event_type: EventType,
    pub payload: Vec<u8>,
}

impl NodeData {
    pub fn new(timestamp: Timestamp, event_type: EventType) -> Self {
        Self {
            timestamp,
            event_type,
            payload: Vec::new(),
        }
    }

    pub fn with_payload(mut self, payload: impl Into<Vec<u8>>) -> Self {
        self.payload = payload.into();
        self
    }
}

/// A directed graph with timestamp, type and payload maps.
///
/// Invariants upheld by every constructor: edge endpoints are nodes, there
/// are no self-loops, and every node's type belongs to `type_set`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypedTemporalGraph {
    nodes: BTreeMap<ActionId, NodeData>,
    edges: BTreeSet<(ActionId, ActionId)>,
    type_set: BTreeSet<EventType>,
}

impl TypedTemporalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// The graph with a single node and no edges.
    pub fn trivial(root: ActionId, data: NodeData) -> Self {
        let mut g = Self::new();
        g.type_set.insert(data.event_type.clone());
        g.nodes.insert(root, data);
        g
    }

    /// Adds a type to the declared type set without using it.
    pub fn declare_type(&mut self, ty: EventType) {
        self.type_set.insert(ty);
    }

    pub fn add_node(&mut self, id: ActionId, data: NodeData) -> Result<(), GraphError> {
        if self.nodes.contains_key(&id) {
            return Err(GraphError::NodeCollision(vec![id]));
        }
        self.type_set.insert(data.event_type.clone());
        self.nodes.insert(id, data);
        Ok(())
    }

    pub fn add_edge(&mut self, from: ActionId, to: ActionId) -> Result<(), GraphError> {
        if from == to {
            return Err(GraphError::SelfLoop(from));
        }
        if !self.nodes.contains_key(&from) || !self.nodes.contains_key(&to) {
            return Err(GraphError::DanglingEdge(from, to));
        }
        self.edges.insert((from, to));
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: ActionId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn node(&self, id: ActionId) -> Option<&NodeData> {
        self.nodes.get(&id)
    }

    pub fn timestamp(&self, id: ActionId) -> Option<Timestamp> {
        self.nodes.get(&id).map(|d| d.timestamp)
    }

    pub fn event_type(&self, id: ActionId) -> Option<&EventType> {
        self.nodes.get(&id).map(|d| &d.event_type)
    }

    /// Nodes in ascending identifier order.
    pub fn nodes(&self) -> impl ExactSizeIterator<Item = (ActionId, &NodeData)> + '_ {
        self.nodes.iter().map(|(id, d)| (*id, d))
    }

    pub fn node_ids(&self) -> impl ExactSizeIterator<Item = ActionId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn edges(&self) -> impl ExactSizeIterator<Item = (ActionId, ActionId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: ActionId, to: ActionId) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn type_set(&self) -> &BTreeSet<EventType> {
        &self.type_set
    }

    /// Direct successors of `id`, in ascending identifier order.
    pub fn children(&self, id: ActionId) -> impl Iterator<Item = ActionId> + '_ {
        let lo = Bound::Included((id, ActionId::from_u128(0)));
        let hi = Bound::Included((id, ActionId::from_u128(u128::MAX)));
        self.edges.range((lo, hi)).map(|&(_, to)| to)
    }

    /// In-degree of every node (zero entries included).
    pub fn in_degrees(&self) -> BTreeMap<ActionId, usize> {
        let mut deg: BTreeMap<ActionId, usize> = self.nodes.keys().map(|&n| (n, 0)).collect();
        for &(_, to) in &self.edges {
            *deg.entry(to).or_default() += 1;
        }
        deg
    }

    /// Predecessor lists keyed by target node.
    pub fn parents(&self) -> BTreeMap<ActionId, Vec<ActionId>> {
        let mut map: BTreeMap<ActionId, Vec<ActionId>> = BTreeMap::new();
        for &(from, to) in &self.edges {
            map.entry(to).or_default().push(from);
        }
        map
    }

    /// Nodes without incoming edges, ascending.
    pub fn sources(&self) -> Vec<ActionId> {
        self.in_degrees()
            .into_iter()
            .filter_map(|(n, d)| (d == 0).then_some(n))
            .collect()
    }

    /// True iff the graph consists of exactly one node and no edges.
    pub fn is_trivial(&self) -> bool {
        self.nodes.len() == 1 && self.edges.is_empty()
    }

    /// The extension order: `self` is a subgraph of `other` and the node
    /// attributes of `other` restrict to those of `self`.
    pub fn is_subgraph_of(&self, other: &TypedTemporalGraph) -> bool {
        self.nodes.len() <= other.nodes.len()
            && self.edges.is_subset(&other.edges)
            && self
                .nodes
                .iter()
                .all(|(id, d)| other.nodes.get(id) == Some(d))
    }

    /// The subgraph induced on `keep`; unknown identifiers are ignored. The
    /// type set is narrowed to the types in use.
    pub fn induced(&self, keep: &BTreeSet<ActionId>) -> TypedTemporalGraph {
        let mut g = TypedTemporalGraph::new();
        for (&id, d) in &self.nodes {
            if keep.contains(&id) {
                g.type_set.insert(d.event_type.clone());
                g.nodes.insert(id, d.clone());
            }
        }
        g.edges = self
            .edges
            .iter()
            .filter(|(a, b)| keep.contains(a) && keep.contains(b))
            .copied()
            .collect();
        g
    }

    /// Applies an injective node renaming. Identifiers missing from `map`
    /// keep their names.
    pub fn renamed(&self, map: &BTreeMap<ActionId, ActionId>) -> TypedTemporalGraph {
        let f = |id: &ActionId| *map.get(id).unwrap_or(id);
        TypedTemporalGraph {
            nodes: self
                .nodes
                .iter()
                .map(|(id, d)| (f(id), d.clone()))
                .collect(),
            edges: self.edges.iter().map(|(a, b)| (f(a), f(b))).collect(),
            type_set: self.type_set.clone(),
        }
    }

    /// Node-disjoint union without connecting edges.
    pub(crate) fn disjoint_union(&self, other: &TypedTemporalGraph) -> Result<Self, GraphError> {
        let mut g = self.clone();
        g.absorb(other)?;
        Ok(g)
    }

    /// In-place node-disjoint union; `self` is untouched on error.
    pub(crate) fn absorb(&mut self, other: &TypedTemporalGraph) -> Result<(), GraphError> {
        let collisions: Vec<ActionId> = other
            .nodes
            .keys()
            .filter(|id| self.nodes.contains_key(id))
            .copied()
            .collect();
        if !collisions.is_empty() {
            return Err(GraphError::NodeCollision(collisions));
        }
        self.nodes
            .extend(other.nodes.iter().map(|(id, d)| (*id, d.clone())));
        self.edges.extend(other.edges.iter().copied());
        self.type_set.extend(other.type_set.iter().cloned());
        Ok(())
    }

    pub(crate) fn insert_edge_unchecked(&mut self, from: ActionId, to: ActionId) {
        debug_assert!(from != to && self.contains(from) && self.contains(to));
        self.edges.insert((from, to));
    }
}

/// Attaches `second` below `attach`: node and edge union plus the single
/// edge `(attach, second_root)`. Type sets are merged.
pub fn graft(
    first: &TypedTemporalGraph,
    attach: ActionId,
    second: &TypedTemporalGraph,
    second_root: ActionId,
) -> Result<TypedTemporalGraph, GraphError> {
    if !first.contains(attach) {
        return Err(GraphError::UnknownNode(attach));
    }
    if !second.contains(second_root) {
        return Err(GraphError::UnknownNode(second_root));
    }
    let mut g = first.disjoint_union(second)?;
    g.insert_edge_unchecked(attach, second_root);
    Ok(g)
}
