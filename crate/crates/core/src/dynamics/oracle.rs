//! Exhaustive enumeration of the depth hierarchy inside a finite universe.
//!
//! A [`UniverseBounds`] fixes a finite pool of action identifiers,
//! timestamps and event types, a maximum sequence length (counted in
//! graphs) and a maximum emission size. [`phi`] maps a set of candidate
//! subagent sequences to every bounded sequence that starts at a single
//! root and evolves by direct emissions or invocations of that set.
//! Iterating from the empty set yields `E_0 ⊆ E_1 ⊆ …` restricted to the
//! universe.
//!
//! Invocations read only the final graph of a candidate sequence, and that
//! graph may be renamed injectively into unused identifiers of the pool so
//! that it is disjoint from the parent graph.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::dynamics::{apply_emission, apply_invocation_at, ExecutionSequence};
use crate::error::OracleError;
use crate::graph::{NodeData, TypedTemporalGraph};
use crate::types::{ActionId, EventType, Timestamp};

/// The finite universe the oracle enumerates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniverseBounds {
    actions: Vec<ActionId>,
    timestamps: Vec<Timestamp>,
    types: BTreeSet<EventType>,
    max_len: usize,
    max_step_emit: usize,
}

impl UniverseBounds {
    pub fn new(
        actions: impl IntoIterator<Item = ActionId>,
        timestamps: impl IntoIterator<Item = Timestamp>,
        types: impl IntoIterator<Item = EventType>,
        max_len: usize,
        max_step_emit: usize,
    ) -> Result<Self, OracleError> {
        let actions: BTreeSet<ActionId> = actions.into_iter().collect();
        let timestamps: BTreeSet<Timestamp> = timestamps.into_iter().collect();
        let types: BTreeSet<EventType> = types.into_iter().collect();
        if actions.is_empty() {
            return Err(OracleError::InvalidBounds("no actions"));
        }
        if timestamps.is_empty() {
            return Err(OracleError::InvalidBounds("no timestamps"));
        }
        if types.is_empty() {
            return Err(OracleError::InvalidBounds("no event types"));
        }
        if max_len == 0 {
            return Err(OracleError::InvalidBounds("max_len must be at least 1"));
        }
        if max_step_emit == 0 {
            return Err(OracleError::InvalidBounds(
                "max_step_emit must be at least 1",
            ));
        }
        Ok(Self {
            actions: actions.into_iter().collect(),
            timestamps: timestamps.into_iter().collect(),
            types,
            max_len,
            max_step_emit,
        })
    }

    /// Actions `1..=actions`, timestamps `0..timestamps` µs, types
    /// `t0, t1, …`, and no cap on emission size beyond the action pool.
    pub fn small(
        actions: usize,
        timestamps: usize,
        types: usize,
        max_len: usize,
    ) -> Result<Self, OracleError> {
        Self::new(
            (1..=actions as u128).map(ActionId::from_u128),
            (0..timestamps as i64).map(Timestamp::from_micros),
            (0..types).map(|i| EventType::new(format!("t{i}")).expect("valid name")),
            max_len,
            actions.max(1),
        )
    }

    pub fn with_max_step_emit(mut self, max_step_emit: usize) -> Result<Self, OracleError> {
        if max_step_emit == 0 {
            return Err(OracleError::InvalidBounds(
                "max_step_emit must be at least 1",
            ));
        }
        self.max_step_emit = max_step_emit;
        Ok(self)
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.actions
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn types(&self) -> &BTreeSet<EventType> {
        &self.types
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn max_step_emit(&self) -> usize {
        self.max_step_emit
    }

    /// Whether a height-two graft fits in one step: three actions, three
    /// distinct timestamps and room for two graphs.
    pub fn separates_levels(&self) -> bool {
        self.actions.len() >= 3 && self.timestamps.len() >= 3 && self.max_len >= 2
    }

    /// Whether every graftable CTEG of the pool (at most `|actions| - 1`
    /// nodes) has a single-node emission schedule short enough to be a
    /// bounded `E_0` sequence. Under this condition the bounded hierarchy
    /// stabilises at level one; without it, truncation by `max_len` can
    /// separate higher levels.
    pub fn stabilizes_at_level_one(&self) -> bool {
        self.max_len + 1 >= self.actions.len()
    }

    /// Checks that every graph of `seq` draws from the pool and that the
    /// sequence is short enough.
    pub fn admits<G: Borrow<TypedTemporalGraph>>(&self, seq: &[G]) -> Result<(), OracleError> {
        if seq.is_empty() || seq.len() > self.max_len {
            return Err(OracleError::OutOfBounds(format!(
                "sequence length {} outside 1..={}",
                seq.len(),
                self.max_len
            )));
        }
        for g in seq {
            for (id, d) in g.borrow().nodes() {
                if self.actions.binary_search(&id).is_err() {
                    return Err(OracleError::OutOfBounds(format!("action {id} not in pool")));
                }
                if self.timestamps.binary_search(&d.timestamp).is_err() {
                    return Err(OracleError::OutOfBounds(format!(
                        "timestamp {} not in pool",
                        d.timestamp
                    )));
                }
                if !self.types.contains(&d.event_type) {
                    return Err(OracleError::OutOfBounds(format!(
                        "type {} not in pool",
                        d.event_type
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every single-node graph of the universe, typed over the full pool.
    pub fn trivial_graphs(&self) -> Vec<TypedTemporalGraph> {
        let mut out = Vec::new();
        for &a in &self.actions {
            for &t in &self.timestamps {
                for ty in &self.types {
                    let mut g = TypedTemporalGraph::trivial(a, NodeData::new(t, ty.clone()));
                    for other in &self.types {
                        g.declare_type(other.clone());
                    }
                    out.push(g);
                }
            }
        }
        out
    }
}

/// A label-free execution sequence: the element of the ambient space the
/// hierarchy is made of. Two sequences with the same graphs are the same
/// element regardless of which step witnesses were recorded.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trajectory(Vec<Arc<TypedTemporalGraph>>);

impl Trajectory {
    pub fn new(graphs: impl IntoIterator<Item = TypedTemporalGraph>) -> Self {
        Self(graphs.into_iter().map(Arc::new).collect())
    }

    pub fn graphs(&self) -> &[Arc<TypedTemporalGraph>] {
        &self.0
    }

    pub fn last(&self) -> Option<&TypedTemporalGraph> {
        self.0.last().map(|g| g.as_ref())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&ExecutionSequence> for Trajectory {
    fn from(seq: &ExecutionSequence) -> Self {
        Self::new(seq.graphs().iter().cloned())
    }
}

pub type SequenceSet = BTreeSet<Trajectory>;

/// Ceiling on the number of sequences the oracle may materialise.
#[derive(Clone, Copy, Debug)]
pub struct Budget {
    limit: usize,
    used: usize,
}

impl Budget {
    pub fn new(limit: usize) -> Self {
        Self { limit, used: 0 }
    }

    pub fn unlimited() -> Self {
        Self::new(usize::MAX)
    }

    pub fn used(&self) -> usize {
        self.used
    }

    fn charge(&mut self, n: usize) -> Result<(), OracleError> {
        self.used = self.used.saturating_add(n);
        if self.used > self.limit {
            return Err(OracleError::BudgetExceeded {
                budget: self.limit,
                completed: Vec::new(),
            });
        }
        Ok(())
    }
}

pub fn phi(candidates: &SequenceSet, bounds: &UniverseBounds) -> Result<SequenceSet, OracleError> {
    phi_with_budget(candidates, bounds, &mut Budget::unlimited())
}

pub fn phi_with_budget(
    candidates: &SequenceSet,
    bounds: &UniverseBounds,
    budget: &mut Budget,
) -> Result<SequenceSet, OracleError> {
    for seq in candidates {
        bounds.admits(seq.graphs())?;
    }
    let mut successors = Successors {
        bounds,
        templates: templates(candidates, bounds),
        cache: HashMap::new(),
    };
    let mut out = SequenceSet::new();
    let mut frontier: Vec<Trajectory> = bounds
        .trivial_graphs()
        .into_iter()
        .map(|g| Trajectory::new([g]))
        .collect();
    let mut len = 1;
    while !frontier.is_empty() {
        budget.charge(frontier.len())?;
        let mut next = Vec::new();
        if len < bounds.max_len {
            for seq in &frontier {
                let last = seq.0.last().expect("non-empty");
                for s in successors.of(last).iter() {
                    let mut graphs = seq.0.clone();
                    graphs.push(Arc::clone(s));
                    next.push(Trajectory(graphs));
                }
            }
        }
        out.extend(frontier);
        frontier = next;
        len += 1;
    }
    Ok(out)
}

/// `[E_0, …, E_{d_max}]` within `bounds`.
pub fn hierarchy(bounds: &UniverseBounds, d_max: usize) -> Result<Vec<SequenceSet>, OracleError> {
    hierarchy_with_budget(bounds, d_max, &mut Budget::unlimited())
}

pub fn hierarchy_with_budget(
    bounds: &UniverseBounds,
    d_max: usize,
    budget: &mut Budget,
) -> Result<Vec<SequenceSet>, OracleError> {
    let mut levels: Vec<SequenceSet> = Vec::with_capacity(d_max + 1);
    let mut current = SequenceSet::new();
    for _ in 0..=d_max {
        current =
            phi_with_budget(&current, bounds, budget).map_err(|e| with_completed(e, &levels))?;
        levels.push(current.clone());
    }
    Ok(levels)
}

fn with_completed(err: OracleError, levels: &[SequenceSet]) -> OracleError {
    match err {
        OracleError::BudgetExceeded { budget, .. } => OracleError::BudgetExceeded {
            budget,
            completed: levels.iter().map(BTreeSet::len).collect(),
        },
        other => other,
    }
}

/// A graftable final graph, relabelled onto placeholder identifiers
/// `0..k` in a canonical way, with its in-degree-zero nodes.
struct Template {
    graph: TypedTemporalGraph,
    sources: Vec<ActionId>,
}

fn templates(candidates: &SequenceSet, bounds: &UniverseBounds) -> Vec<Template> {
    let max_nodes = bounds.actions.len().saturating_sub(1);
    let finals: BTreeSet<&TypedTemporalGraph> = candidates
        .iter()
        .filter_map(Trajectory::last)
        .filter(|g| !g.is_empty() && g.node_count() <= max_nodes)
        .collect();
    let canonical: BTreeSet<TypedTemporalGraph> = finals.into_iter().map(canonical_form).collect();
    canonical
        .into_iter()
        .filter_map(|graph| {
            let sources = graph.sources();
            (!sources.is_empty()).then_some(Template { graph, sources })
        })
        .collect()
}

/// The least relabelling of `g` onto `0..k` over all bijections. Two graphs
/// share a canonical form iff they differ by an injective renaming.
fn canonical_form(g: &TypedTemporalGraph) -> TypedTemporalGraph {
    let ids: Vec<ActionId> = g.node_ids().collect();
    let mut best: Option<TypedTemporalGraph> = None;
    for perm in permutations(ids.len()) {
        let map: BTreeMap<ActionId, ActionId> = ids
            .iter()
            .zip(perm)
            .map(|(&id, slot)| (id, ActionId::from_u128(slot as u128)))
            .collect();
        let candidate = g.renamed(&map);
        if best.as_ref().is_none_or(|b| candidate < *b) {
            best = Some(candidate);
        }
    }
    best.expect("at least one permutation")
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    arrangements(&(0..n).collect::<Vec<_>>(), n)
}

/// All ordered selections of `k` distinct items.
fn arrangements<T: Copy>(items: &[T], k: usize) -> Vec<Vec<T>> {
    fn go<T: Copy>(
        items: &[T],
        k: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<T>,
        out: &mut Vec<Vec<T>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in 0..items.len() {
            if !used[i] {
                used[i] = true;
                cur.push(items[i]);
                go(items, k, used, cur, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    if k <= items.len() {
        go(
            items,
            k,
            &mut vec![false; items.len()],
            &mut Vec::with_capacity(k),
            &mut out,
        );
    }
    out
}

struct Successors<'a> {
    bounds: &'a UniverseBounds,
    templates: Vec<Template>,
    cache: HashMap<Arc<TypedTemporalGraph>, Arc<Vec<Arc<TypedTemporalGraph>>>>,
}

impl Successors<'_> {
    fn of(&mut self, g: &Arc<TypedTemporalGraph>) -> Arc<Vec<Arc<TypedTemporalGraph>>> {
        if let Some(hit) = self.cache.get(g) {
            return Arc::clone(hit);
        }
        let mut out = BTreeSet::new();
        self.emissions(g, &mut out);
        self.invocations(g, &mut out);
        let list = Arc::new(out.into_iter().map(Arc::new).collect::<Vec<_>>());
        self.cache.insert(Arc::clone(g), Arc::clone(&list));
        list
    }

    fn free_actions(&self, g: &TypedTemporalGraph) -> Vec<ActionId> {
        self.bounds
            .actions
            .iter()
            .copied()
            .filter(|&a| !g.contains(a))
            .collect()
    }

    fn emissions(&self, g: &TypedTemporalGraph, out: &mut BTreeSet<TypedTemporalGraph>) {
        let free = self.free_actions(g);
        if free.is_empty() {
            return;
        }
        for (parent, pd) in g.nodes() {
            let choices: Vec<NodeData> = self
                .bounds
                .timestamps
                .iter()
                .filter(|&&t| t > pd.timestamp)
                .flat_map(|&t| {
                    self.bounds
                        .types
                        .iter()
                        .map(move |ty| NodeData::new(t, ty.clone()))
                })
                .collect();
            if choices.is_empty() {
                continue;
            }
            for mask in 1u64..(1u64 << free.len()) {
                if mask.count_ones() as usize > self.bounds.max_step_emit {
                    continue;
                }
                let chosen: Vec<ActionId> = (0..free.len())
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| free[i])
                    .collect();
                // odometer over choices^|chosen|
                let mut digits = vec![0usize; chosen.len()];
                loop {
                    let new: BTreeMap<ActionId, NodeData> = chosen
                        .iter()
                        .zip(&digits)
                        .map(|(&a, &d)| (a, choices[d].clone()))
                        .collect();
                    if let Ok(next) = apply_emission(g, parent, new) {
                        out.insert(next);
                    }
                    let mut i = 0;
                    while i < digits.len() {
                        digits[i] += 1;
                        if digits[i] < choices.len() {
                            break;
                        }
                        digits[i] = 0;
                        i += 1;
                    }
                    if i == digits.len() {
                        break;
                    }
                }
            }
        }
    }

    fn invocations(&self, g: &TypedTemporalGraph, out: &mut BTreeSet<TypedTemporalGraph>) {
        let free = self.free_actions(g);
        for tpl in &self.templates {
            let k = tpl.graph.node_count();
            if k > free.len() {
                continue;
            }
            let slots: Vec<ActionId> = tpl.graph.node_ids().collect();
            for image in arrangements(&free, k) {
                let map: BTreeMap<ActionId, ActionId> =
                    slots.iter().copied().zip(image.iter().copied()).collect();
                let sub = tpl.graph.renamed(&map);
                for q in &tpl.sources {
                    let attach = map[q];
                    let attach_time = sub.timestamp(attach).expect("renamed source");
                    for (parent, pd) in g.nodes() {
                        if pd.timestamp < attach_time {
                            if let Ok(next) = apply_invocation_at(g, parent, &sub, attach) {
                                out.insert(next);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Outcome of one assertion in an [`OracleReport`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Check {
    Passed,
    Failed,
    NotApplicable(&'static str),
}

impl Check {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Check::Passed
        } else {
            Check::Failed
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Check::Failed)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Check::Passed => write!(f, "pass"),
            Check::Failed => write!(f, "FAIL"),
            Check::NotApplicable(why) => write!(f, "skipped ({why})"),
        }
    }
}

/// Level sizes and hierarchy checks for one bounded universe.
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub level_sizes: Vec<usize>,
    /// `E_0 ⊆ E_1 ⊆ … ⊆ E_{d_max}`.
    pub ascending: Check,
    /// `E_0 ≠ E_1`.
    pub separation: Check,
    /// `E_1 = E_d` for every computed `d ≥ 1`.
    pub stabilization: Check,
    /// `phi(S) = S` for the first level `S` that repeats.
    pub fixed_point: Check,
    pub stable_level: Option<usize>,
    pub sequences_enumerated: usize,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        ![
            &self.ascending,
            &self.separation,
            &self.stabilization,
            &self.fixed_point,
        ]
        .iter()
        .any(|c| c.is_failure())
    }
}

/// Computes the hierarchy up to `d_max` and checks the ascending chain,
/// separation of the first two levels, stabilisation at level one, and the
/// fixed-point equation for the stable set.
pub fn run_oracle(
    bounds: &UniverseBounds,
    d_max: usize,
    budget: &mut Budget,
) -> Result<(OracleReport, Vec<SequenceSet>), OracleError> {
    let levels = hierarchy_with_budget(bounds, d_max, budget)?;
    let level_sizes: Vec<usize> = levels.iter().map(BTreeSet::len).collect();
    let ascending = Check::from_bool(levels.windows(2).all(|w| w[0].is_subset(&w[1])));

    let separation = if d_max < 1 {
        Check::NotApplicable("d_max < 1")
    } else if !bounds.separates_levels() {
        Check::NotApplicable("bounds cannot express a height-two graft")
    } else {
        Check::from_bool(levels[0] != levels[1])
    };

    let stabilization = if d_max < 2 {
        Check::NotApplicable("d_max < 2")
    } else if !bounds.stabilizes_at_level_one() {
        Check::NotApplicable("max_len < |actions| - 1")
    } else {
        Check::from_bool(levels[2..].iter().all(|l| *l == levels[1]))
    };

    let mut stable_level = levels.windows(2).position(|w| w[0] == w[1]);
    let fixed_point = if d_max < 1 {
        Check::NotApplicable("d_max < 1")
    } else {
        let candidate = &levels[stable_level.unwrap_or(d_max)];
        let image =
            phi_with_budget(candidate, bounds, budget).map_err(|e| with_completed(e, &levels))?;
        if image == *candidate {
            stable_level.get_or_insert(d_max);
            Check::Passed
        } else if bounds.stabilizes_at_level_one() || stable_level.is_some() {
            Check::Failed
        } else {
            Check::NotApplicable("no repeated level within d_max")
        }
    };

    let report = OracleReport {
        level_sizes,
        ascending,
        separation,
        stabilization,
        fixed_point,
        stable_level,
        sequences_enumerated: budget.used(),
    };
    Ok((report, levels))
}
