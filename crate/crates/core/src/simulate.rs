//! Seeded recursive agent workflows driven through [`Session`].

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::collections::{BTreeMap, BTreeSet};

use crate::clock::{ManualClock, Runtime, SeededIds};
use crate::cteg::Cteg;
use crate::error::InvalidConfig;
use crate::graph::{NodeData, TypedTemporalGraph};
use crate::session::{FailurePolicy, Session};
use crate::types::{ActionId, EventType, Timestamp};

/// Start of the simulated clock, in microseconds since the Unix epoch.
pub const SIMULATION_EPOCH: i64 = 1_700_000_000_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub seed: u64,
    pub max_depth: usize,
    pub branching: usize,
    pub steps: usize,
    pub fail_prob: f64,
    pub types: Vec<EventType>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        if self.branching == 0 {
            return Err(InvalidConfig("branching must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.fail_prob) {
            return Err(InvalidConfig("fail_prob must lie in [0, 1]"));
        }
        if self.types.is_empty() {
            return Err(InvalidConfig("at least one event type is required"));
        }
        Ok(())
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_depth: 2,
            branching: 2,
            steps: 6,
            fail_prob: 0.0,
            types: ["plan", "tool", "observe"]
                .iter()
                .map(|s| EventType::new(*s).expect("static type name"))
                .collect(),
        }
    }
}

#[derive(Debug)]
pub struct SimulationOutcome {
    pub session: Session,
    pub invocations: usize,
    pub failures: usize,
}

pub fn simulate(config: &SimulationConfig) -> Result<SimulationOutcome, InvalidConfig> {
    simulate_observed(config, |_| {})
}

/// Runs the workflow, calling `observe` with every session (top-level or
/// subagent) right after each of its mutations.
pub fn simulate_observed(
    config: &SimulationConfig,
    mut observe: impl FnMut(&Session),
) -> Result<SimulationOutcome, InvalidConfig> {
    config.validate()?;
    let clock = Arc::new(ManualClock::new(Timestamp::from_micros(SIMULATION_EPOCH)));
    let runtime = Runtime::new(clock.clone(), Arc::new(SeededIds::new(config.seed)));
    let mut sim = Simulator {
        config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        clock,
        invocations: 0,
        failures: 0,
        observe: &mut observe,
    };
    let root_type = sim.pick_type();
    let mut session = Session::begin(runtime, root_type, b"session".to_vec(), None);
    sim.observe_session(&session);
    sim.run(&mut session, 0, config.steps);
    session.finish().expect("top-level session is active");
    Ok(SimulationOutcome {
        session,
        invocations: sim.invocations,
        failures: sim.failures,
    })
}

struct Simulator<'a, F: FnMut(&Session)> {
    config: &'a SimulationConfig,
    rng: ChaCha8Rng,
    clock: Arc<ManualClock>,
    invocations: usize,
    failures: usize,
    observe: &'a mut F,
}

impl<F: FnMut(&Session)> Simulator<'_, F> {
    fn pick_type(&mut self) -> EventType {
        self.config
            .types
            .choose(&mut self.rng)
            .expect("validated non-empty")
            .clone()
    }

    fn payload(&mut self, step: usize) -> Vec<u8> {
        let mut p = format!("step-{step}:").into_bytes();
        let extra = self.rng.gen_range(0..8);
        p.extend((0..extra).map(|_| self.rng.gen::<u8>()));
        p
    }

    fn tick(&mut self) {
        self.clock.advance(self.rng.gen_range(0..=2));
    }

    fn observe_session(&mut self, s: &Session) {
        (self.observe)(s);
    }

    fn run(&mut self, session: &mut Session, depth: usize, steps: usize) {
        for step in 0..steps {
            self.tick();
            let nodes: Vec<_> = session.trace().graph().node_ids().collect();
            let parent = *nodes.choose(&mut self.rng).expect("trace has a root");
            if depth < self.config.max_depth && self.rng.gen_ratio(1, 3) {
                self.invoke(session, parent, depth, step);
            } else {
                let n = self.rng.gen_range(1..=self.config.branching);
                let events = (0..n)
                    .map(|_| {
                        let ty = self.pick_type();
                        (ty, self.payload(step))
                    })
                    .collect();
                session
                    .emit(parent, events)
                    .expect("emission at an existing node of an active session");
            }
            self.observe_session(session);
        }
    }

    fn invoke(&mut self, session: &mut Session, parent: ActionId, depth: usize, step: usize) {
        self.invocations += 1;
        let ty = self.pick_type();
        let payload = self.payload(step);
        let (handle, mut child) = session
            .invoke_subagent(parent, ty, payload)
            .expect("invocation at an existing node");
        self.observe_session(&child);
        let fails = self.rng.gen_bool(self.config.fail_prob);
        let child_steps = if fails {
            self.rng.gen_range(0..=self.config.steps)
        } else {
            self.config.steps
        };
        self.run(&mut child, depth + 1, child_steps);
        if fails {
            self.failures += 1;
            session
                .fail_subagent(&handle, &mut child, FailurePolicy::GraftPartial)
                .expect("child graft is compatible by construction");
        } else {
            session
                .complete_subagent(&handle, &mut child)
                .expect("child graft is compatible by construction");
        }
    }
}

/// A random recursive tree on `nodes` fresh identifiers. Each child is
/// 1 to 3 µs later than its parent, so siblings and unrelated nodes often
/// share timestamps.
pub fn random_cteg<R: Rng + ?Sized>(
    rng: &mut R,
    nodes: usize,
    types: &[EventType],
    root_time: Timestamp,
) -> Cteg {
    assert!(nodes >= 1 && !types.is_empty());
    let mut seen = BTreeSet::new();
    let mut ids = Vec::with_capacity(nodes);
    while ids.len() < nodes {
        let id = ActionId::random(rng);
        if seen.insert(id) {
            ids.push(id);
        }
    }
    let mut g = TypedTemporalGraph::new();
    let mut times: Vec<i64> = Vec::with_capacity(nodes);
    for (i, &id) in ids.iter().enumerate() {
        let parent = (i > 0).then(|| rng.gen_range(0..i));
        let t = match parent {
            None => root_time.micros(),
            Some(p) => times[p] + rng.gen_range(1..=3),
        };
        let payload: Vec<u8> = (0..rng.gen_range(0..8)).map(|_| rng.gen()).collect();
        let ty = types.choose(rng).expect("non-empty").clone();
        g.add_node(
            id,
            NodeData::new(Timestamp::from_micros(t), ty).with_payload(payload),
        )
        .expect("fresh id");
        if let Some(p) = parent {
            g.add_edge(ids[p], id).expect("both endpoints exist");
        }
        times.push(t);
    }
    Cteg::new_unchecked(g, ids[0])
}

/// A single-field edit of a CTEG that keeps it valid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mutation {
    TimestampShift,
    TypeChange,
    PayloadBitFlip,
    LeafAdd,
    LeafRemove,
    Reparent,
}

impl Mutation {
    pub const ALL: [Mutation; 6] = [
        Mutation::TimestampShift,
        Mutation::TypeChange,
        Mutation::PayloadBitFlip,
        Mutation::LeafAdd,
        Mutation::LeafRemove,
        Mutation::Reparent,
    ];
}

/// Applies `kind` at a random applicable site, or returns `None` when `c`
/// has no such site (no payload bytes, a single node, no legal new parent).
pub fn mutate<R: Rng + ?Sized>(rng: &mut R, c: &Cteg, kind: Mutation) -> Option<Cteg> {
    let g = c.graph();
    let parents = c.parent_map();
    let mut nodes: BTreeMap<ActionId, NodeData> = g.nodes().map(|(n, d)| (n, d.clone())).collect();
    let mut edges: BTreeMap<ActionId, ActionId> = parents.clone();
    let ids: Vec<ActionId> = g.node_ids().collect();
    let time = |n: ActionId| g.timestamp(n).expect("node exists").micros();
    match kind {
        Mutation::TimestampShift => {
            let mut sites: Vec<(ActionId, i64)> = Vec::new();
            for &n in &ids {
                for delta in [-1i64, 1] {
                    let t = time(n) + delta;
                    let above = parents.get(&n).is_none_or(|&p| time(p) < t);
                    let below = g.children(n).all(|k| t < time(k));
                    if above && below {
                        sites.push((n, delta));
                    }
                }
            }
            let &(n, delta) = sites.choose(rng)?;
            let d = nodes.get_mut(&n).expect("node exists");
            d.timestamp = Timestamp::from_micros(d.timestamp.micros() + delta);
        }
        Mutation::TypeChange => {
            let n = *ids.choose(rng)?;
            let d = nodes.get_mut(&n).expect("node exists");
            let name = format!("{}'", d.event_type.as_str());
            d.event_type = EventType::new(name).expect("non-empty printable name");
        }
        Mutation::PayloadBitFlip => {
            let candidates: Vec<ActionId> = ids
                .iter()
                .copied()
                .filter(|n| !nodes[n].payload.is_empty())
                .collect();
            let n = *candidates.choose(rng)?;
            let d = nodes.get_mut(&n).expect("node exists");
            let i = rng.gen_range(0..d.payload.len());
            d.payload[i] ^= 1 << rng.gen_range(0..8);
        }
        Mutation::LeafAdd => {
            let p = *ids.choose(rng)?;
            let mut fresh = ActionId::random(rng);
            while nodes.contains_key(&fresh) {
                fresh = ActionId::random(rng);
            }
            let data = nodes[&p].clone();
            let t = Timestamp::from_micros(data.timestamp.micros() + 1);
            nodes.insert(fresh, NodeData::new(t, data.event_type));
            edges.insert(fresh, p);
        }
        Mutation::LeafRemove => {
            let leaves: Vec<ActionId> = ids
                .iter()
                .copied()
                .filter(|&n| n != c.root() && g.children(n).next().is_none())
                .collect();
            let n = *leaves.choose(rng)?;
            nodes.remove(&n);
            edges.remove(&n);
        }
        Mutation::Reparent => {
            let mut sites = Vec::new();
            for &n in &ids {
                let Some(&old) = parents.get(&n) else {
                    continue;
                };
                let below = descendants(c, n);
                for &q in &ids {
                    if q != old && !below.contains(&q) && time(q) < time(n) {
                        sites.push((n, q));
                    }
                }
            }
            let &(n, q) = sites.choose(rng)?;
            edges.insert(n, q);
        }
    }
    let mut out = TypedTemporalGraph::new();
    for (n, d) in nodes {
        out.add_node(n, d).expect("distinct ids");
    }
    for (child, parent) in edges {
        out.add_edge(parent, child).expect("endpoints exist");
    }
    Some(Cteg::new(out, c.root()).expect("mutation preserves validity"))
}

fn descendants(c: &Cteg, n: ActionId) -> BTreeSet<ActionId> {
    let mut seen = BTreeSet::from([n]);
    let mut stack = vec![n];
    while let Some(m) = stack.pop() {
        for k in c.graph().children(m) {
            if seen.insert(k) {
                stack.push(k);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cteg::validate_cteg;
    use crate::dynamics::is_member_e_infinity;

    fn config(seed: u64) -> SimulationConfig {
        SimulationConfig {
            seed,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = simulate(&config(1)).unwrap();
        let b = simulate(&config(1)).unwrap();
        assert_eq!(a.session.snapshot(), b.session.snapshot());
        assert_eq!(a.session.id(), b.session.id());
    }

    #[test]
    fn depth_zero_has_no_invocations() {
        let out = simulate(&SimulationConfig {
            max_depth: 0,
            steps: 20,
            ..config(3)
        })
        .unwrap();
        assert_eq!(out.invocations, 0);
        assert!(out
            .session
            .log()
            .iter()
            .all(|s| matches!(s, crate::session::LoggedStep::Emission { .. })));
    }

    #[test]
    fn total_failure_still_valid() {
        for seed in 0..20 {
            let out = simulate(&SimulationConfig {
                fail_prob: 1.0,
                ..config(seed)
            })
            .unwrap();
            let c = out.session.snapshot();
            assert!(validate_cteg(c.graph(), c.root()).is_ok());
            assert_eq!(out.failures, out.invocations);
            assert!(is_member_e_infinity(&out.session.execution_sequence()).is_member());
        }
    }

    #[test]
    fn random_ctegs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let types = SimulationConfig::default().types;
        for n in 1..40 {
            let c = random_cteg(&mut rng, n, &types, Timestamp::from_micros(-3));
            assert_eq!(c.node_count(), n);
            assert!(validate_cteg(c.graph(), c.root()).is_ok());
        }
    }

    #[test]
    fn mutations_keep_validity_and_change_the_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let types = SimulationConfig::default().types;
        for n in 1..30 {
            let c = random_cteg(&mut rng, n, &types, Timestamp::from_micros(0));
            for kind in Mutation::ALL {
                if let Some(m) = mutate(&mut rng, &c, kind) {
                    assert_ne!(m, c, "{kind:?}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(SimulationConfig {
            branching: 0,
            ..config(0)
        }
        .validate()
        .is_err());
        assert!(SimulationConfig {
            fail_prob: 1.5,
            ..config(0)
        }
        .validate()
        .is_err());
        assert!(SimulationConfig {
            types: vec![],
            ..config(0)
        }
        .validate()
        .is_err());
    }
}
