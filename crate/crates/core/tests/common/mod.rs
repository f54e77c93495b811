#![allow(dead_code)]

use std::collections::BTreeSet;

use cteg::dynamics::oracle::{Trajectory, UniverseBounds};
use cteg::{ActionId, Cteg, EventType, NodeData, Timestamp, TypedTemporalGraph};
use proptest::prelude::*;

pub fn id(n: u128) -> ActionId {
    ActionId::from_u128(n)
}

pub fn ts(t: i64) -> Timestamp {
    Timestamp::from_micros(t)
}

pub fn ty(s: &str) -> EventType {
    EventType::new(s).unwrap()
}

/// Random CTEGs described as parent indices, time gaps, types and payloads.
/// Identifiers are arbitrary distinct `u128`s, so the root is not
/// necessarily the smallest.
pub fn cteg_strategy(max_nodes: usize) -> impl Strategy<Value = Cteg> {
    (1..=max_nodes).prop_flat_map(|n| {
        (
            prop::collection::btree_set(any::<u128>(), n),
            Just(n),
            prop::collection::vec(
                (
                    any::<prop::sample::Index>(),
                    1i64..4,
                    0usize..3,
                    prop::collection::vec(any::<u8>(), 0..4),
                ),
                n,
            ),
            -10i64..10,
            any::<prop::sample::Index>(),
        )
            .prop_map(|(ids, n, shape, t0, rot)| {
                let mut ids: Vec<u128> = ids.into_iter().collect();
                ids.rotate_left(rot.index(n));
                build_tree(&ids, &shape, t0)
            })
    })
}

fn build_tree(ids: &[u128], shape: &[(prop::sample::Index, i64, usize, Vec<u8>)], t0: i64) -> Cteg {
    let types = ["a", "b", "c"];
    let mut g = TypedTemporalGraph::new();
    let mut times = Vec::new();
    for (i, (pidx, gap, tyi, payload)) in shape.iter().enumerate() {
        let t = if i == 0 {
            t0
        } else {
            times[pidx.index(i)] + gap
        };
        g.add_node(
            id(ids[i]),
            NodeData::new(ts(t), ty(types[*tyi])).with_payload(payload.clone()),
        )
        .unwrap();
        if i > 0 {
            g.add_edge(id(ids[pidx.index(i)]), id(ids[i])).unwrap();
        }
        times.push(t);
    }
    Cteg::new(g, id(ids[0])).unwrap()
}

/// Every CTEG drawing identifiers, timestamps and types from `bounds`,
/// enumerated from parent functions and checked without the library
/// validator. Every graph declares the full type pool.
pub fn brute_ctegs(bounds: &UniverseBounds) -> Vec<TypedTemporalGraph> {
    let actions = bounds.actions().to_vec();
    let times = bounds.timestamps().to_vec();
    let types: Vec<EventType> = bounds.types().iter().cloned().collect();
    let mut out = Vec::new();
    for mask in 1u32..(1 << actions.len()) {
        let nodes: Vec<ActionId> = (0..actions.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| actions[i])
            .collect();
        let k = nodes.len();
        for root in 0..k {
            for parents in product(k, k) {
                if parents[root] != root || !is_tree(&parents, root) {
                    continue;
                }
                for time in product(k, times.len()) {
                    if (0..k).any(|i| i != root && times[time[parents[i]]] >= times[time[i]]) {
                        continue;
                    }
                    for tys in product(k, types.len()) {
                        let mut g = TypedTemporalGraph::new();
                        for t in &types {
                            g.declare_type(t.clone());
                        }
                        for i in 0..k {
                            g.add_node(
                                nodes[i],
                                NodeData::new(times[time[i]], types[tys[i]].clone()),
                            )
                            .unwrap();
                        }
                        for i in 0..k {
                            if i != root {
                                g.add_edge(nodes[parents[i]], nodes[i]).unwrap();
                            }
                        }
                        out.push(g);
                    }
                }
            }
        }
    }
    out
}

/// All functions `0..k -> 0..m` as vectors.
fn product(k: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..m).map(move |x| {
                    let mut w = v.clone();
                    w.push(x);
                    w
                })
            })
            .collect();
    }
    out
}

/// `parents[i]` for `i != root` must lead to `root` without revisiting.
fn is_tree(parents: &[usize], root: usize) -> bool {
    (0..parents.len()).all(|start| {
        let mut cur = start;
        for _ in 0..parents.len() {
            if cur == root {
                return true;
            }
            if parents[cur] == cur {
                return false;
            }
            cur = parents[cur];
        }
        cur == root
    })
}

/// Step kinds between consecutive CTEGs, decided from the new edges alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    /// All new nodes hang directly off one old node.
    Emission,
    /// One new subtree hangs off one old node; `internal` counts its
    /// non-leaf nodes.
    Graft {
        internal: usize,
    },
    Invalid,
}

pub fn step_kind(before: &TypedTemporalGraph, after: &TypedTemporalGraph) -> StepKind {
    if after.node_count() <= before.node_count() || !before.is_subgraph_of(after) {
        return StepKind::Invalid;
    }
    if before.edge_count() + after.node_count() - before.node_count() != after.edge_count() {
        return StepKind::Invalid;
    }
    if after
        .edges()
        .any(|(a, b)| !before.has_edge(a, b) && before.contains(b))
    {
        return StepKind::Invalid;
    }
    let crossing: Vec<(ActionId, ActionId)> = after
        .edges()
        .filter(|&(a, b)| before.contains(a) && !before.contains(b))
        .collect();
    let sources: BTreeSet<ActionId> = crossing.iter().map(|e| e.0).collect();
    if sources.len() != 1 {
        return StepKind::Invalid;
    }
    let inner: Vec<(ActionId, ActionId)> = after
        .edges()
        .filter(|&(a, _)| !before.contains(a))
        .collect();
    if inner.is_empty() {
        return StepKind::Emission;
    }
    if crossing.len() != 1 {
        return StepKind::Invalid;
    }
    let internal: BTreeSet<ActionId> = inner.iter().map(|e| e.0).collect();
    StepKind::Graft {
        internal: internal.len(),
    }
}

/// Bounded sequences of CTEGs from a single root, extended only by steps
/// accepted by `accept`.
pub fn brute_chains(
    bounds: &UniverseBounds,
    ctegs: &[TypedTemporalGraph],
    accept: impl Fn(StepKind) -> bool,
) -> BTreeSet<Trajectory> {
    let succ: Vec<Vec<usize>> = ctegs
        .iter()
        .map(|g| {
            (0..ctegs.len())
                .filter(|&j| accept(step_kind(g, &ctegs[j])))
                .collect()
        })
        .collect();
    let mut out = BTreeSet::new();
    let mut stack: Vec<Vec<usize>> = (0..ctegs.len())
        .filter(|&i| ctegs[i].node_count() == 1)
        .map(|i| vec![i])
        .collect();
    while let Some(chain) = stack.pop() {
        if chain.len() < bounds.max_len() {
            for &j in &succ[*chain.last().unwrap()] {
                let mut c = chain.clone();
                c.push(j);
                stack.push(c);
            }
        }
        out.insert(Trajectory::new(chain.iter().map(|&i| ctegs[i].clone())));
    }
    out
}
