//! Causal-temporal event graphs: rooted arborescences whose timestamps
//! strictly increase along every edge.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::dynamics::ExecutionSequence;
use crate::error::GraphError;
use crate::graph::{graft, NodeData, TypedTemporalGraph};
use crate::types::{ActionId, Timestamp};

/// One way in which a graph fails to be a CTEG.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// The designated root is not a node of the graph.
    MissingRoot(ActionId),
    /// An edge enters the root.
    EdgeIntoRoot { from: ActionId, root: ActionId },
    /// A non-root node does not have exactly one incoming edge.
    InDegree { node: ActionId, found: usize },
    /// A non-root node cannot be reached from the root.
    Unreachable(ActionId),
    /// A directed cycle, listed from its smallest node in edge order.
    Cycle(Vec<ActionId>),
    /// `t(from) < t(to)` fails on an edge.
    NonStrictEdge {
        from: ActionId,
        to: ActionId,
        from_time: Timestamp,
        to_time: Timestamp,
    },
    /// A parent pointer names a node that does not exist.
    UnknownParent { node: ActionId, parent: ActionId },
    /// The same node identifier was recorded twice.
    DuplicateNode(ActionId),
    /// No record lacks a parent.
    NoRoot,
    /// More than one record lacks a parent.
    MultipleRoots(Vec<ActionId>),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingRoot(r) => write!(f, "root {r} is not a node of the graph"),
            Violation::EdgeIntoRoot { from, root } => {
                write!(f, "edge ({from}, {root}) enters the root")
            }
            Violation::InDegree { node, found } => {
                write!(f, "node {node} has in-degree {found}, expected 1")
            }
            Violation::Unreachable(n) => write!(f, "node {n} is unreachable from the root"),
            Violation::Cycle(nodes) => {
                write!(f, "cycle ")?;
                for n in nodes {
                    write!(f, "{n} -> ")?;
                }
                match nodes.first() {
                    Some(first) => write!(f, "{first}"),
                    None => Ok(()),
                }
            }
            Violation::NonStrictEdge {
                from,
                to,
                from_time,
                to_time,
            } => write!(
                f,
                "edge ({from}, {to}) is not strictly increasing in time ({from_time} >= {to_time})"
            ),
            Violation::UnknownParent { node, parent } => {
                write!(f, "node {node} names unknown parent {parent}")
            }
            Violation::DuplicateNode(n) => write!(f, "node {n} is recorded more than once"),
            Violation::NoRoot => write!(f, "no node is parentless"),
            Violation::MultipleRoots(roots) => {
                write!(f, "{} parentless nodes:", roots.len())?;
                for r in roots {
                    write!(f, " {r}")?;
                }
                Ok(())
            }
        }
    }
}

/// The outcome of a validation: empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics(pub Vec<Violation>);

impl Diagnostics {
    pub fn is_ok(&self) -> bool {
        self.0.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.0
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks that `g` is an arborescence rooted at `root`: no edges into the
/// root, in-degree one elsewhere, every node reachable, no cycles.
pub fn validate_causal_graph(g: &TypedTemporalGraph, root: ActionId) -> Diagnostics {
    let mut out = Vec::new();
    if !g.contains(root) {
        out.push(Violation::MissingRoot(root));
        out.extend(find_cycles(g).into_iter().map(Violation::Cycle));
        return Diagnostics(out);
    }
    for (from, to) in g.edges() {
        if to == root {
            out.push(Violation::EdgeIntoRoot { from, root });
        }
    }
    for (node, found) in g.in_degrees() {
        if node != root && found != 1 {
            out.push(Violation::InDegree { node, found });
        }
    }
    let reachable = reachable_from(g, root);
    for n in g.node_ids() {
        if !reachable.contains(&n) {
            out.push(Violation::Unreachable(n));
        }
    }
    out.extend(find_cycles(g).into_iter().map(Violation::Cycle));
    Diagnostics(out)
}

/// [`validate_causal_graph`] plus edge-wise timestamp strictness.
pub fn validate_cteg(g: &TypedTemporalGraph, root: ActionId) -> Diagnostics {
    let mut diag = validate_causal_graph(g, root);
    for (from, to) in g.edges() {
        let (Some(from_time), Some(to_time)) = (g.timestamp(from), g.timestamp(to)) else {
            continue;
        };
        if from_time >= to_time {
            diag.0.push(Violation::NonStrictEdge {
                from,
                to,
                from_time,
                to_time,
            });
        }
    }
    diag
}

fn reachable_from(g: &TypedTemporalGraph, root: ActionId) -> BTreeSet<ActionId> {
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(n) = queue.pop_front() {
        for c in g.children(n) {
            if seen.insert(c) {
                queue.push_back(c);
            }
        }
    }
    seen
}

/// Every node left after Kahn's algorithm has a predecessor that is also
/// left, so walking predecessors from it must close a cycle.
pub(crate) fn find_cycles(g: &TypedTemporalGraph) -> Vec<Vec<ActionId>> {
    let mut indeg = g.in_degrees();
    let mut queue: VecDeque<ActionId> = indeg
        .iter()
        .filter_map(|(&n, &d)| (d == 0).then_some(n))
        .collect();
    while let Some(n) = queue.pop_front() {
        indeg.remove(&n);
        for c in g.children(n) {
            if let Some(d) = indeg.get_mut(&c) {
                *d -= 1;
                if *d == 0 {
                    queue.push_back(c);
                }
            }
        }
    }
    let residual: BTreeSet<ActionId> = indeg.keys().copied().collect();
    if residual.is_empty() {
        return Vec::new();
    }
    let mut preds: BTreeMap<ActionId, ActionId> = BTreeMap::new();
    for (from, to) in g.edges() {
        if residual.contains(&from) && residual.contains(&to) {
            preds
                .entry(to)
                .and_modify(|p| *p = (*p).min(from))
                .or_insert(from);
        }
    }
    let mut cycles = Vec::new();
    let mut visited = BTreeSet::new();
    for &start in &residual {
        let mut path = Vec::new();
        let mut pos = BTreeMap::new();
        let mut cur = start;
        loop {
            if visited.contains(&cur) {
                if let Some(&i) = pos.get(&cur) {
                    let mut cycle: Vec<ActionId> = path[i..].to_vec();
                    cycle.reverse();
                    let min_at = cycle
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, n)| **n)
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    cycle.rotate_left(min_at);
                    cycles.push(cycle);
                }
                break;
            }
            visited.insert(cur);
            pos.insert(cur, path.len());
            path.push(cur);
            cur = preds[&cur];
        }
    }
    cycles
}

/// A validated causal-temporal event graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cteg {
    graph: TypedTemporalGraph,
    root: ActionId,
}

impl Cteg {
    pub fn new(graph: TypedTemporalGraph, root: ActionId) -> Result<Self, GraphError> {
        let diag = validate_cteg(&graph, root);
        if !diag.is_ok() {
            return Err(GraphError::NotACteg(diag));
        }
        Ok(Self { graph, root })
    }

    /// Like [`Cteg::new`], locating the root as the unique in-degree-zero node.
    pub fn from_graph(graph: TypedTemporalGraph) -> Result<Self, GraphError> {
        match graph.sources().as_slice() {
            [root] => {
                let root = *root;
                Self::new(graph, root)
            }
            [] => Err(GraphError::NoAttachNode),
            many => Err(GraphError::AmbiguousAttachNode(many.to_vec())),
        }
    }

    pub fn trivial(root: ActionId, data: NodeData) -> Self {
        Self {
            graph: TypedTemporalGraph::trivial(root, data),
            root,
        }
    }

    /// Skips validation. Callers must already know the invariants hold.
    pub(crate) fn new_unchecked(graph: TypedTemporalGraph, root: ActionId) -> Self {
        debug_assert!(validate_cteg(&graph, root).is_ok());
        Self { graph, root }
    }

    pub fn graph(&self) -> &TypedTemporalGraph {
        &self.graph
    }

    /// Mutable access for in-place steps that preserve the invariants.
    pub(crate) fn graph_mut(&mut self) -> &mut TypedTemporalGraph {
        &mut self.graph
    }

    pub fn root(&self) -> ActionId {
        self.root
    }

    pub fn into_graph(self) -> TypedTemporalGraph {
        self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn contains(&self, id: ActionId) -> bool {
        self.graph.contains(id)
    }

    /// The unique causal parent of each non-root node.
    pub fn parent_map(&self) -> BTreeMap<ActionId, ActionId> {
        self.graph.edges().map(|(from, to)| (to, from)).collect()
    }

    pub fn parent(&self, id: ActionId) -> Option<ActionId> {
        self.graph
            .edges()
            .find_map(|(from, to)| (to == id).then_some(from))
    }
}

/// The unique directed path from the root to `node`, both ends included.
pub fn causal_path(c: &Cteg, node: ActionId) -> Result<Vec<ActionId>, GraphError> {
    if !c.contains(node) {
        return Err(GraphError::UnknownNode(node));
    }
    let parents = c.parent_map();
    let mut path = vec![node];
    let mut cur = node;
    while let Some(&p) = parents.get(&cur) {
        path.push(p);
        cur = p;
    }
    path.reverse();
    Ok(path)
}

/// Grafts `second` at `attach`. Succeeds exactly when
/// `t(attach) < t(root(second))`; the result is rooted at `first`'s root and
/// typed over the union of both type sets.
pub fn graft_cteg(first: &Cteg, attach: ActionId, second: &Cteg) -> Result<Cteg, GraphError> {
    let parent_time = first
        .graph
        .timestamp(attach)
        .ok_or(GraphError::UnknownNode(attach))?;
    let root_time = second.graph.timestamp(second.root).expect("root is a node");
    let graph = graft(&first.graph, attach, &second.graph, second.root)?;
    if parent_time >= root_time {
        return Err(GraphError::Compatibility {
            parent: attach,
            parent_time,
            root: second.root,
            root_time,
        });
    }
    Ok(Cteg::new_unchecked(graph, first.root))
}

/// All nodes ordered by timestamp, ties broken by ascending identifier.
pub fn temporal_projection(c: &Cteg) -> Vec<ActionId> {
    let mut order: Vec<(Timestamp, ActionId)> =
        c.graph.nodes().map(|(id, d)| (d.timestamp, id)).collect();
    order.sort_unstable();
    order.into_iter().map(|(_, id)| id).collect()
}

/// Edge count of the longest root-to-leaf path.
pub fn height(c: &Cteg) -> usize {
    let mut best = 0;
    let mut queue = VecDeque::from([(c.root, 0usize)]);
    while let Some((n, depth)) = queue.pop_front() {
        best = best.max(depth);
        for child in c.graph.children(n) {
            queue.push_back((child, depth + 1));
        }
    }
    best
}

/// The single-node emission schedule that rebuilds `c` from its root:
/// `(parent, node)` pairs in temporal-projection order.
pub fn e0_schedule(c: &Cteg) -> Vec<(ActionId, ActionId)> {
    let parents = c.parent_map();
    temporal_projection(c)
        .into_iter()
        .filter(|&n| n != c.root)
        .map(|n| (parents[&n], n))
        .collect()
}

/// Builds an emission-only execution sequence whose last element is `c`.
///
/// The first element is the root alone (carrying `c`'s declared type set) and
/// each step emits one node from its parent, in temporal-projection order.
pub fn e0_normalize(c: &Cteg) -> ExecutionSequence {
    let mut start =
        TypedTemporalGraph::trivial(c.root, c.graph.node(c.root).cloned().expect("root"));
    for ty in c.graph.type_set() {
        start.declare_type(ty.clone());
    }
    let mut seq = ExecutionSequence::start(start);
    for (parent, node) in e0_schedule(c) {
        let data = c.graph.node(node).cloned().expect("scheduled node exists");
        seq.push_emission(parent, BTreeMap::from([(node, data)]))
            .expect("a parent precedes its children in temporal order");
    }
    seq
}
