//! The ten acceptance criteria, one pass/fail line each.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cteg::cteg::e0_schedule;
use cteg::dynamics::oracle::{
    hierarchy, phi, run_oracle, Budget, Check, SequenceSet, Trajectory, UniverseBounds,
};
use cteg::dynamics::{
    apply_emission, apply_step, check_graph_sequence, replicate_as_e0_invocation,
};
use cteg::persistence::records_of;
use cteg::persistence::store::record_boundaries;
use cteg::simulate::{
    mutate, random_cteg, simulate, simulate_observed, Mutation, SimulationConfig,
};
use cteg::{
    e0_normalize, export_trace, graft, graft_cteg, import_trace, is_member_e_infinity, merkle_root,
    validate_cteg, ActionId, Cteg, EventType, ExecutionSequence, FileStore, GraphError, NodeData,
    SessionId, StepLabel, Store, Timestamp, TypedTemporalGraph, Violation,
};
use cteg_cli::{cmd_oracle, cmd_project, OracleArgs, EXIT_BUDGET, EXIT_OK};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn types() -> Vec<EventType> {
    ["plan", "tool", "observe"]
        .iter()
        .map(|s| EventType::new(*s).unwrap())
        .collect()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || {
        format!("took {elapsed:.2?}, limit {limit:?}")
    })
}

fn graft_compatibility() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut ok, mut rejected) = (0, 0);
    for _ in 0..10_000 {
        let n1 = rng.gen_range(1..12);
        let n2 = rng.gen_range(1..12);
        let a = random_cteg(&mut rng, n1, &types(), Timestamp::from_micros(0));
        let t2 = Timestamp::from_micros(rng.gen_range(0..12));
        let b = random_cteg(&mut rng, n2, &types(), t2);
        let nodes: Vec<ActionId> = a.graph().node_ids().collect();
        let p = *nodes.choose(&mut rng).unwrap();
        let compatible = a.graph().timestamp(p) < b.graph().timestamp(b.root());
        match graft_cteg(&a, p, &b) {
            Ok(c) => {
                check(compatible, || "graft accepted an incompatible pair".into())?;
                check(validate_cteg(c.graph(), c.root()).is_ok(), || {
                    "graft result invalid".into()
                })?;
                ok += 1;
            }
            Err(GraphError::Compatibility { .. }) => {
                check(!compatible, || "graft rejected a compatible pair".into())?;
                let forced = graft(a.graph(), p, b.graph(), b.root()).unwrap();
                let diag = validate_cteg(&forced, a.root());
                let names_edge = diag.violations().iter().any(|v| {
                    matches!(v, Violation::NonStrictEdge { from, to, .. } if *from == p && *to == b.root())
                });
                check(names_edge, || {
                    format!("forced graft diagnostics miss the edge: {diag}")
                })?;
                rejected += 1;
            }
            Err(e) => return Err(format!("unexpected error {e}")),
        }
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    check(ok > 0 && rejected > 0, || {
        "one side of the equivalence never exercised".into()
    })?;
    Ok(format!(
        "{ok} accepted, {rejected} rejected, {:.2?}",
        start.elapsed()
    ))
}

fn characterisation() -> Verdict {
    let start = Instant::now();
    let (mut snapshots, mut invocations, mut failures) = (0usize, 0, 0);
    for seed in 0..1_000 {
        let config = SimulationConfig {
            seed,
            max_depth: 3,
            branching: 3,
            steps: 5,
            fail_prob: 0.25,
            types: types(),
        };
        let mut history: BTreeMap<SessionId, Vec<TypedTemporalGraph>> = BTreeMap::new();
        let mut invalid = 0;
        let out = simulate_observed(&config, |s| {
            let snap = s.snapshot();
            if !validate_cteg(snap.graph(), snap.root()).is_ok() {
                invalid += 1;
            }
            history.entry(s.id()).or_default().push(snap.into_graph());
        })
        .map_err(|e| e.to_string())?;
        check(invalid == 0, || format!("seed {seed}: invalid snapshot"))?;
        for (id, graphs) in &history {
            let m = check_graph_sequence(graphs);
            check(m.is_member(), || format!("seed {seed} session {id}: {m}"))?;
            snapshots += graphs.len();
        }
        let seq = out.session.execution_sequence();
        check(is_member_e_infinity(&seq).is_member(), || {
            format!("seed {seed}: labelled sequence rejected")
        })?;
        invocations += out.invocations;
        failures += out.failures;
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    check(failures > 0, || "no failures injected".into())?;
    Ok(format!(
        "1000 scripts, {snapshots} snapshots, {invocations} invocations, {failures} partial grafts, {:.2?}",
        start.elapsed()
    ))
}

fn oracle_args(actions: usize, timestamps: usize, max_len: usize) -> OracleArgs {
    OracleArgs {
        actions,
        timestamps,
        types: 1,
        max_len,
        d_max: 2,
        budget: 1_000_000,
        max_step_emit: None,
        listing: false,
    }
}

fn fixed_point() -> Verdict {
    let start = Instant::now();
    let mut chosen = (4, 4, 3);
    let mut outcome = cmd_oracle(&oracle_args(4, 4, 3));
    if outcome.code == EXIT_BUDGET {
        chosen = (3, 3, 2);
        outcome = cmd_oracle(&oracle_args(3, 3, 2));
    }
    check(outcome.code == EXIT_OK, || {
        format!("oracle exit {}: {}", outcome.code, outcome.stdout)
    })?;
    let bounds =
        UniverseBounds::small(chosen.0, chosen.1, 1, chosen.2).map_err(|e| e.to_string())?;
    let (report, levels) =
        run_oracle(&bounds, 2, &mut Budget::new(1_000_000)).map_err(|e| e.to_string())?;
    for (name, c) in [
        ("E0 ⊆ E1 ⊆ E2", &report.ascending),
        ("E0 ≠ E1", &report.separation),
        ("E1 = E2", &report.stabilization),
        ("phi(S) = S", &report.fixed_point),
    ] {
        check(*c == Check::Passed, || format!("{name}: {c}"))?;
    }
    check(
        levels[0].is_subset(&levels[1]) && levels[1].is_subset(&levels[2]),
        || "chain".into(),
    )?;
    check(levels[0] != levels[1] && levels[1] == levels[2], || {
        "levels".into()
    })?;
    check(
        phi(&levels[2], &bounds).map_err(|e| e.to_string())? == levels[2],
        || "phi".into(),
    )?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "bounds {:?}, |E_d| = {:?}, {:.2?}",
        chosen,
        report.level_sizes,
        start.elapsed()
    ))
}

fn monotonicity() -> Verdict {
    let bounds = UniverseBounds::small(3, 3, 1, 2).map_err(|e| e.to_string())?;
    let mut pool: Vec<Trajectory> = hierarchy(&bounds, 1)
        .map_err(|e| e.to_string())?
        .pop()
        .unwrap()
        .into_iter()
        .collect();
    let ty = bounds.types().iter().next().unwrap().clone();
    let [a, b, c] = [
        bounds.actions()[0],
        bounds.actions()[1],
        bounds.actions()[2],
    ];
    let [t0, t1, t2] = [
        bounds.timestamps()[0],
        bounds.timestamps()[1],
        bounds.timestamps()[2],
    ];
    let graph = |nodes: &[(ActionId, Timestamp)], edges: &[(ActionId, ActionId)]| {
        let mut g = TypedTemporalGraph::new();
        for &(n, t) in nodes {
            g.add_node(n, NodeData::new(t, ty.clone())).unwrap();
        }
        for &(x, y) in edges {
            g.add_edge(x, y).unwrap();
        }
        g
    };
    pool.push(Trajectory::new([graph(&[(a, t1), (b, t1)], &[])]));
    pool.push(Trajectory::new([graph(
        &[(a, t0), (b, t2), (c, t1)],
        &[(a, b), (b, c)],
    )]));
    pool.push(Trajectory::new([
        graph(&[(c, t0), (b, t1)], &[(c, b)]),
        graph(&[(c, t0), (b, t1), (a, t2)], &[(c, b), (b, a)]),
    ]));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut strict = 0;
    for i in 0..100 {
        let p_small = rng.gen_range(0.0..0.5);
        let small: SequenceSet = pool
            .iter()
            .filter(|_| rng.gen_bool(p_small))
            .cloned()
            .collect();
        let mut large = small.clone();
        large.extend(pool.iter().filter(|_| rng.gen_bool(0.3)).cloned());
        let (ps, pl) = (
            phi(&small, &bounds).map_err(|e| e.to_string())?,
            phi(&large, &bounds).map_err(|e| e.to_string())?,
        );
        check(ps.is_subset(&pl), || format!("pair {i}: phi(E) ⊄ phi(E')"))?;
        strict += (ps != pl) as usize;
    }
    Ok(format!(
        "100 pairs over a pool of {}, {strict} with phi(E) ≠ phi(E')",
        pool.len()
    ))
}

fn normalization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1_000 {
        let n = rng.gen_range(1..=50);
        let t0 = Timestamp::from_micros(rng.gen_range(-100..100));
        let c = random_cteg(&mut rng, n, &types(), t0);
        let seq = e0_normalize(&c);
        check(seq.last() == c.graph(), || {
            format!("trace {i}: final element differs")
        })?;
        let mut g = seq.first().clone();
        for (parent, node) in e0_schedule(&c) {
            let data = c.graph().node(node).cloned().unwrap();
            g = apply_emission(&g, parent, BTreeMap::from([(node, data)]))
                .map_err(|e| e.to_string())?;
        }
        check(g == *c.graph(), || format!("trace {i}: replay differs"))?;
    }
    Ok("1000 traces up to 50 nodes".into())
}

fn collect_invocations(seq: &ExecutionSequence, out: &mut Vec<(TypedTemporalGraph, StepLabel)>) {
    for (k, step) in seq.steps().iter().enumerate() {
        if let StepLabel::Invocation { subtrace, .. } = step {
            out.push((seq.graphs()[k].clone(), step.clone()));
            collect_invocations(subtrace, out);
        }
    }
}

fn opacity() -> Verdict {
    let mut steps = Vec::new();
    let mut seed = 0;
    while steps.len() < 200 {
        let config = SimulationConfig {
            seed,
            max_depth: 3,
            branching: 2,
            steps: 5,
            fail_prob: 0.2,
            types: types(),
        };
        collect_invocations(
            &simulate(&config)
                .map_err(|e| e.to_string())?
                .session
                .execution_sequence(),
            &mut steps,
        );
        seed += 1;
    }
    let nested = steps
        .iter()
        .filter(|(_, s)| matches!(s, StepLabel::Invocation { subtrace, .. } if subtrace.steps().iter().any(StepLabel::is_invocation)))
        .count();
    check(nested > 0, || "no nested subtraces".into())?;
    let empty = TypedTemporalGraph::new();
    for (i, (before, step)) in steps.iter().enumerate() {
        let replica = replicate_as_e0_invocation(step).map_err(|e| e.to_string())?;
        let original = apply_step(before, step, &empty).map_err(|e| e.to_string())?;
        let replayed = apply_step(before, &replica, &empty).map_err(|e| e.to_string())?;
        check(original == replayed, || format!("step {i}: graphs differ"))?;
    }
    Ok(format!(
        "{} invocation steps, {nested} with nested subtraces",
        steps.len()
    ))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn projection_counterexample() -> Verdict {
    let g = fixtures().join("fan.cteg");
    let g2 = fixtures().join("chain4.cteg");
    let (a, b) = (cmd_project(&g), cmd_project(&g2));
    check(a.code == EXIT_OK && b.code == EXIT_OK, || {
        format!("{}{}", a.stderr, b.stderr)
    })?;
    check(a.stdout.as_bytes() == b.stdout.as_bytes(), || {
        "projections differ".into()
    })?;
    let edges = |p: &Path| -> Result<BTreeSet<(ActionId, ActionId)>, String> {
        let (c, _) = import_trace(&std::fs::read(p).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        Ok(c.graph().edges().collect())
    };
    check(edges(&g)? != edges(&g2)?, || "edge sets coincide".into())?;
    let order: Vec<&str> = a
        .stdout
        .lines()
        .map(|l| l.split('\t').nth(2).unwrap())
        .collect();
    check(order == ["r", "a", "b", "c"], || {
        format!("projection {order:?}")
    })?;
    Ok("fan and chain4 project to (r, a, b, c) with different edge sets".into())
}

fn persistence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..1_000 {
        let n = rng.gen_range(1..40);
        let t0 = Timestamp::from_micros(rng.gen_range(-5..5));
        let c = random_cteg(&mut rng, n, &types(), t0);
        let sid = SessionId::from_u128(rng.gen());
        let bytes = export_trace(&c, sid);
        let (back, s) = import_trace(&bytes).map_err(|e| e.to_string())?;
        check(back == c && s == sid, || {
            format!("trace {i}: round trip differs")
        })?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("store");
    let store = FileStore::open(&path).map_err(|e| e.to_string())?;
    let traces: Vec<Cteg> = [30, 25, 20, 21]
        .iter()
        .map(|&n| random_cteg(&mut rng, n, &types(), Timestamp::from_micros(0)))
        .collect();
    let mut queues: Vec<Vec<_>> = traces
        .iter()
        .map(|c| {
            let id = store.register_session().unwrap();
            let mut rows = records_of(c, id);
            rows.reverse();
            rows
        })
        .collect();
    while queues.iter().any(|q| !q.is_empty()) {
        let live: Vec<usize> = (0..queues.len())
            .filter(|&i| !queues[i].is_empty())
            .collect();
        let q = *live.choose(&mut rng).unwrap();
        store
            .append_node(queues[q].pop().unwrap())
            .map_err(|e| e.to_string())?;
    }
    drop(store);
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let bounds = record_boundaries(&bytes).map_err(|e| e.to_string())?;
    check(bounds.len() == 101, || {
        format!("{} records, expected 100", bounds.len() - 1)
    })?;
    let cut = dir.path().join("cut");
    let mut loaded = 0;
    for &b in &bounds {
        std::fs::write(&cut, &bytes[..b as usize]).map_err(|e| e.to_string())?;
        let store = FileStore::open(&cut).map_err(|e| e.to_string())?;
        for id in store.sessions() {
            match store.load_session(id) {
                Ok(c) => {
                    check(validate_cteg(c.graph(), c.root()).is_ok(), || {
                        format!("cut {b}: invalid")
                    })?;
                    loaded += 1;
                }
                Err(cteg::StoreError::EmptySession(_)) => {}
                Err(e) => return Err(format!("cut {b}: {e}")),
            }
        }
    }
    Ok(format!(
        "1000 round trips, {} cuts, {loaded} session loads",
        bounds.len()
    ))
}

fn tamper_evidence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut per_kind: BTreeMap<Mutation, usize> = BTreeMap::new();
    for i in 0..1_000 {
        let n = rng.gen_range(1..40);
        let c = random_cteg(&mut rng, n, &types(), Timestamp::from_micros(0));
        let (kind, m) = loop {
            let kind = *Mutation::ALL.choose(&mut rng).unwrap();
            if let Some(m) = mutate(&mut rng, &c, kind) {
                break (kind, m);
            }
        };
        let d = merkle_root(&c);
        check(merkle_root(&m) != d, || {
            format!("trace {i}: {kind:?} kept the root")
        })?;
        check(!cteg::verify_commitment(&m, &d), || {
            format!("trace {i}: verify accepted")
        })?;
        *per_kind.entry(kind).or_default() += 1;
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "1000 of 1000 mutations detected {per_kind:?}, {:.2?}",
        start.elapsed()
    ))
}

fn simulate_twice(dir: &Path, tag: &str) -> Result<(Vec<u8>, String, String), String> {
    let out = dir.join(format!("{tag}.cteg"));
    let run = Command::new(env!("CARGO_BIN_EXE_cteg"))
        .args([
            "simulate",
            "--seed",
            "1",
            "--max-depth",
            "2",
            "--branching",
            "2",
            "--steps",
            "6",
        ])
        .args(["--fail-prob", "0.3", "--out"])
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    check(run.status.success(), || {
        String::from_utf8_lossy(&run.stderr).into_owned()
    })?;
    let commit = Command::new(env!("CARGO_BIN_EXE_cteg"))
        .arg("commit")
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    check(commit.status.success(), || {
        String::from_utf8_lossy(&commit.stderr).into_owned()
    })?;
    Ok((
        std::fs::read(&out).map_err(|e| e.to_string())?,
        String::from_utf8_lossy(&run.stdout).into_owned(),
        String::from_utf8_lossy(&commit.stdout).into_owned(),
    ))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, sa, da) = simulate_twice(dir.path(), "first")?;
    let (b, sb, db) = simulate_twice(dir.path(), "second")?;
    check(a == b, || "trace files differ".into())?;
    check(sa == sb && da == db, || {
        "summaries or digests differ".into()
    })?;
    Ok(format!("{} bytes, digest {}", a.len(), da.trim()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("graft compatibility iff", graft_compatibility),
        ("characterisation on simulated sessions", characterisation),
        ("bounded fixed point and stabilisation", fixed_point),
        ("phi monotonicity", monotonicity),
        ("E0 normalisation round trip", normalization),
        ("E0 replication of invocations", opacity),
        (
            "temporal projection counterexample",
            projection_counterexample,
        ),
        ("persistence round trip and crash prefix", persistence),
        ("tamper evidence", tamper_evidence),
        ("seeded simulation determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
