//! Execution dynamics: direct emissions, subagent invocations, execution
//! sequences, and membership in the recursive closure.
//!
//! The bounded enumeration of the depth hierarchy lives in [`oracle`].

pub mod oracle;

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::cteg::{e0_normalize, validate_cteg, Cteg};
use crate::error::GraphError;
use crate::graph::{NodeData, TypedTemporalGraph};
use crate::types::ActionId;

/// The witness attached to each step of an [`ExecutionSequence`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepLabel {
    Emission {
        root: ActionId,
        emitted: BTreeSet<ActionId>,
    },
    Invocation {
        root: ActionId,
        subtrace: ExecutionSequence,
        attach: ActionId,
    },
}

impl StepLabel {
    pub fn root(&self) -> ActionId {
        match self {
            StepLabel::Emission { root, .. } | StepLabel::Invocation { root, .. } => *root,
        }
    }

    pub fn is_invocation(&self) -> bool {
        matches!(self, StepLabel::Invocation { .. })
    }
}

/// A non-empty chain `G0 ⊑ G1 ⊑ … ⊑ Gn` with one label per step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionSequence {
    graphs: Vec<TypedTemporalGraph>,
    steps: Vec<StepLabel>,
}

impl ExecutionSequence {
    pub fn start(first: TypedTemporalGraph) -> Self {
        Self {
            graphs: vec![first],
            steps: Vec::new(),
        }
    }

    /// Reassembles a sequence, checking lengths and the extension order.
    pub fn from_parts(
        graphs: Vec<TypedTemporalGraph>,
        steps: Vec<StepLabel>,
    ) -> Result<Self, GraphError> {
        if graphs.is_empty() {
            return Err(GraphError::EmptySequence);
        }
        if steps.len() + 1 != graphs.len() {
            return Err(GraphError::StepCount {
                expected: graphs.len() - 1,
                found: steps.len(),
            });
        }
        if let Some(k) = graphs.windows(2).position(|w| !w[0].is_subgraph_of(&w[1])) {
            return Err(GraphError::NotAnExtension(k + 1));
        }
        Ok(Self { graphs, steps })
    }

    pub fn graphs(&self) -> &[TypedTemporalGraph] {
        &self.graphs
    }

    pub fn steps(&self) -> &[StepLabel] {
        &self.steps
    }

    pub fn first(&self) -> &TypedTemporalGraph {
        &self.graphs[0]
    }

    pub fn last(&self) -> &TypedTemporalGraph {
        self.graphs.last().expect("sequences are non-empty")
    }

    /// Number of graphs (one more than the number of steps).
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The first `len` graphs with their steps.
    pub fn prefix(&self, len: usize) -> Self {
        let len = len.clamp(1, self.graphs.len());
        Self {
            graphs: self.graphs[..len].to_vec(),
            steps: self.steps[..len - 1].to_vec(),
        }
    }

    pub fn push_emission(
        &mut self,
        root: ActionId,
        new: BTreeMap<ActionId, NodeData>,
    ) -> Result<&TypedTemporalGraph, GraphError> {
        let emitted = new.keys().copied().collect();
        let next = apply_emission(self.last(), root, new)?;
        self.graphs.push(next);
        self.steps.push(StepLabel::Emission { root, emitted });
        Ok(self.last())
    }

    /// Grafts the final graph of `subtrace` at `root`. The attach node is
    /// designated as in [`designated_attach`] unless given explicitly.
    pub fn push_invocation(
        &mut self,
        root: ActionId,
        subtrace: ExecutionSequence,
        attach: Option<ActionId>,
    ) -> Result<&TypedTemporalGraph, GraphError> {
        let attach = match attach {
            Some(a) => a,
            None => designated_attach(&subtrace)?,
        };
        let next = apply_invocation_at(self.last(), root, subtrace.last(), attach)?;
        self.graphs.push(next);
        self.steps.push(StepLabel::Invocation {
            root,
            subtrace,
            attach,
        });
        Ok(self.last())
    }

    /// Replays a labelled step on the current last graph. Emitted node
    /// attributes are read from `source`.
    pub fn push_step(
        &mut self,
        step: StepLabel,
        source: &TypedTemporalGraph,
    ) -> Result<&TypedTemporalGraph, GraphError> {
        let next = apply_step(self.last(), &step, source)?;
        self.graphs.push(next);
        self.steps.push(step);
        Ok(self.last())
    }
}

/// Applies a label to `g`, reading emitted node attributes from `source`.
pub fn apply_step(
    g: &TypedTemporalGraph,
    step: &StepLabel,
    source: &TypedTemporalGraph,
) -> Result<TypedTemporalGraph, GraphError> {
    match step {
        StepLabel::Emission { root, emitted } => {
            let new = emitted
                .iter()
                .map(|&a| {
                    source
                        .node(a)
                        .cloned()
                        .map(|d| (a, d))
                        .ok_or(GraphError::UnknownNode(a))
                })
                .collect::<Result<BTreeMap<_, _>, _>>()?;
            apply_emission(g, *root, new)
        }
        StepLabel::Invocation {
            root,
            subtrace,
            attach,
        } => apply_invocation_at(g, *root, subtrace.last(), *attach),
    }
}

/// `g ⊕_p A`: adds every new node with an edge from `parent`.
pub fn apply_emission(
    g: &TypedTemporalGraph,
    parent: ActionId,
    new: BTreeMap<ActionId, NodeData>,
) -> Result<TypedTemporalGraph, GraphError> {
    let mut out = g.clone();
    emit_in_place(&mut out, parent, new)?;
    Ok(out)
}

/// [`apply_emission`] without the copy; `g` is untouched on error.
pub(crate) fn emit_in_place(
    g: &mut TypedTemporalGraph,
    parent: ActionId,
    new: BTreeMap<ActionId, NodeData>,
) -> Result<(), GraphError> {
    let parent_time = g.timestamp(parent).ok_or(GraphError::UnknownNode(parent))?;
    if new.is_empty() {
        return Err(GraphError::EmptyEmission);
    }
    let collisions: Vec<ActionId> = new.keys().filter(|a| g.contains(**a)).copied().collect();
    if !collisions.is_empty() {
        return Err(GraphError::NodeCollision(collisions));
    }
    if let Some((&child, d)) = new.iter().find(|(_, d)| d.timestamp <= parent_time) {
        return Err(GraphError::TimestampViolation {
            parent,
            parent_time,
            child,
            child_time: d.timestamp,
        });
    }
    for (a, d) in new {
        g.add_node(a, d)?;
        g.insert_edge_unchecked(parent, a);
    }
    Ok(())
}

/// The attach node of a subtrace: its starting root if that is still a
/// source of the final graph, otherwise the final graph's unique source.
pub fn designated_attach(subtrace: &ExecutionSequence) -> Result<ActionId, GraphError> {
    let last = subtrace.last();
    let sources = last.sources();
    let first = subtrace.first();
    if first.is_trivial() {
        let r = first.node_ids().next().expect("trivial graph has a node");
        if sources.contains(&r) {
            return Ok(r);
        }
    }
    match sources.as_slice() {
        [q] => Ok(*q),
        [] => Err(GraphError::NoAttachNode),
        many => Err(GraphError::AmbiguousAttachNode(many.to_vec())),
    }
}

/// `g ⊕_p (H_m, q_m)` for the final graph `H_m` of `subtrace`. Only the final
/// graph is read.
pub fn apply_invocation(
    g: &TypedTemporalGraph,
    parent: ActionId,
    subtrace: &ExecutionSequence,
) -> Result<TypedTemporalGraph, GraphError> {
    let attach = designated_attach(subtrace)?;
    apply_invocation_at(g, parent, subtrace.last(), attach)
}

/// Grafts `sub` at `parent` through its in-degree-zero node `attach`.
pub fn apply_invocation_at(
    g: &TypedTemporalGraph,
    parent: ActionId,
    sub: &TypedTemporalGraph,
    attach: ActionId,
) -> Result<TypedTemporalGraph, GraphError> {
    let parent_time = g.timestamp(parent).ok_or(GraphError::UnknownNode(parent))?;
    let attach_time = sub
        .timestamp(attach)
        .ok_or(GraphError::UnknownNode(attach))?;
    if sub.edges().any(|(_, to)| to == attach) {
        return Err(GraphError::AttachNotSource(attach));
    }
    let mut out = g.disjoint_union(sub)?;
    if parent_time >= attach_time {
        return Err(GraphError::Compatibility {
            parent,
            parent_time,
            root: attach,
            root_time: attach_time,
        });
    }
    out.insert_edge_unchecked(parent, attach);
    Ok(out)
}

type Delta = (BTreeSet<ActionId>, Vec<(ActionId, ActionId)>);

/// Nodes and edges present in `after` but not in `before`, provided
/// `before ⊑ after`.
fn delta(before: &TypedTemporalGraph, after: &TypedTemporalGraph) -> Option<Delta> {
    if !before.is_subgraph_of(after) {
        return None;
    }
    let new_nodes: BTreeSet<ActionId> = after.node_ids().filter(|n| !before.contains(*n)).collect();
    let new_edges = after
        .edges()
        .filter(|&(a, b)| !before.has_edge(a, b))
        .collect();
    Some((new_nodes, new_edges))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmissionWitness {
    pub root: ActionId,
    pub emitted: BTreeSet<ActionId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvocationWitness {
    pub root: ActionId,
    /// The subgraph induced on the new nodes.
    pub grafted: TypedTemporalGraph,
    pub attach: ActionId,
}

/// Recognises `before ⊑ after` by a direct emission.
pub fn is_emission_step(
    before: &TypedTemporalGraph,
    after: &TypedTemporalGraph,
) -> Option<EmissionWitness> {
    let (new_nodes, new_edges) = delta(before, after)?;
    if new_nodes.is_empty() || new_edges.len() != new_nodes.len() {
        return None;
    }
    let root = new_edges[0].0;
    if !before.contains(root) {
        return None;
    }
    let root_time = before.timestamp(root)?;
    let mut covered = BTreeSet::new();
    for &(from, to) in &new_edges {
        if from != root || !new_nodes.contains(&to) || after.timestamp(to)? <= root_time {
            return None;
        }
        covered.insert(to);
    }
    (covered == new_nodes).then_some(EmissionWitness {
        root,
        emitted: new_nodes,
    })
}

/// Recognises `before ⊑ after` by grafting the induced subgraph on the new
/// nodes through exactly one crossing edge `(p, q)` with `t(p) < t(q)`.
pub fn is_invocation_step(
    before: &TypedTemporalGraph,
    after: &TypedTemporalGraph,
) -> Option<InvocationWitness> {
    let (new_nodes, new_edges) = delta(before, after)?;
    if new_nodes.is_empty() {
        return None;
    }
    let mut crossing = None;
    for &(from, to) in &new_edges {
        match (new_nodes.contains(&from), new_nodes.contains(&to)) {
            (true, true) => {}
            (false, true) if crossing.is_none() => crossing = Some((from, to)),
            _ => return None,
        }
    }
    let (root, attach) = crossing?;
    let grafted = after.induced(&new_nodes);
    if grafted.edges().any(|(_, to)| to == attach) {
        return None;
    }
    if before.timestamp(root)? >= after.timestamp(attach)? {
        return None;
    }
    Some(InvocationWitness {
        root,
        grafted,
        attach,
    })
}

/// Verdict of [`is_member_e_infinity`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Membership {
    Member,
    NotMember {
        /// Index of the offending step (`None` when the start is at fault).
        step: Option<usize>,
        reason: String,
    },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member)
    }
}

impl fmt::Display for Membership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Membership::Member => write!(f, "member"),
            Membership::NotMember { step: None, reason } => write!(f, "not a member: {reason}"),
            Membership::NotMember {
                step: Some(k),
                reason,
            } => write!(f, "not a member: step {k}: {reason}"),
        }
    }
}

/// Decides membership of a graph sequence in the recursive closure by delta
/// analysis: the start is a single node and every step is an emission or
/// the graft of a CTEG rooted at its attach node.
pub fn check_graph_sequence<G: Borrow<TypedTemporalGraph>>(graphs: &[G]) -> Membership {
    let Some(first) = graphs.first() else {
        return Membership::NotMember {
            step: None,
            reason: "empty sequence".into(),
        };
    };
    if !first.borrow().is_trivial() {
        return Membership::NotMember {
            step: None,
            reason: "first graph is not a single root".into(),
        };
    }
    for (k, w) in graphs.windows(2).enumerate() {
        let (before, after) = (w[0].borrow(), w[1].borrow());
        if is_emission_step(before, after).is_some() {
            continue;
        }
        let reason = match is_invocation_step(before, after) {
            Some(inv) => {
                let diag = validate_cteg(&inv.grafted, inv.attach);
                if diag.is_ok() {
                    continue;
                }
                format!("grafted subgraph is not a CTEG: {diag}")
            }
            None if !before.is_subgraph_of(after) => "graph does not extend its predecessor".into(),
            None => "neither an emission nor an invocation".into(),
        };
        return Membership::NotMember {
            step: Some(k),
            reason,
        };
    }
    Membership::Member
}

pub fn is_member_e_infinity(seq: &ExecutionSequence) -> Membership {
    check_graph_sequence(seq.graphs())
}

/// Swaps an invocation's subtrace for the emission-only construction of the
/// same final graph.
pub fn replicate_as_e0_invocation(step: &StepLabel) -> Result<StepLabel, GraphError> {
    let StepLabel::Invocation {
        root,
        subtrace,
        attach,
    } = step
    else {
        return Err(GraphError::NotAnInvocation);
    };
    let fin = Cteg::new(subtrace.last().clone(), *attach)?;
    Ok(StepLabel::Invocation {
        root: *root,
        subtrace: e0_normalize(&fin),
        attach: *attach,
    })
}
