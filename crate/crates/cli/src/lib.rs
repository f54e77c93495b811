//! Command implementations for the `cteg` binary. Each command returns an
//! [`Outcome`] instead of printing, so tests can call them directly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cteg::cteg::e0_schedule;
use cteg::dynamics::oracle::{run_oracle, Budget, OracleReport, SequenceSet, UniverseBounds};
use cteg::simulate::{simulate, SimulationConfig};
use cteg::{
    export_trace, height, import_trace, merkle_root, temporal_projection, Cteg, EventType,
    FileStore, FormatError, OracleError, SessionId, Store,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cteg", version, about = "Causal-temporal event graph traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a seeded recursive agent workflow and write its trace.
    Simulate(SimulateArgs),
    /// Check that a trace file is a valid CTEG.
    Verify { file: PathBuf },
    /// Print the Merkle root of a trace.
    Commit { file: PathBuf },
    /// Print a single-node emission schedule that rebuilds the trace.
    Normalize { file: PathBuf },
    /// Print the nodes in temporal order.
    Project { file: PathBuf },
    /// Enumerate the depth hierarchy in a bounded universe and check it.
    Oracle(OracleArgs),
    /// Append a trace file to a store as a new session.
    Import {
        #[arg(long)]
        store: PathBuf,
        file: PathBuf,
    },
    /// Write a stored session as a trace file.
    Export {
        #[arg(long)]
        store: PathBuf,
        session: SessionId,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub branching: usize,
    #[arg(long, default_value_t = 6)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.0)]
    pub fail_prob: f64,
    /// Comma-separated event types.
    #[arg(long, value_delimiter = ',', default_value = "plan,tool,observe")]
    pub types: Vec<EventType>,
    /// Trace destination; the trace goes to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub actions: usize,
    #[arg(long)]
    pub timestamps: usize,
    #[arg(long, default_value_t = 1)]
    pub types: usize,
    #[arg(long)]
    pub max_len: usize,
    #[arg(long, default_value_t = 2)]
    pub d_max: usize,
    /// Ceiling on the number of sequences enumerated.
    #[arg(long, default_value_t = 1_000_000)]
    pub budget: usize,
    /// Largest emission per step; defaults to the number of actions.
    #[arg(long)]
    pub max_step_emit: Option<usize>,
    /// Also print every sequence of every level.
    #[arg(long)]
    pub listing: bool,
}

/// Exit status and the text destined for each stream.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self {
            code: EXIT_OK,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(code: i32, stderr: String) -> Self {
        Self {
            code,
            stdout: String::new(),
            stderr,
        }
    }
}

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Verify { file } => cmd_verify(&file),
        Command::Commit { file } => cmd_commit(&file),
        Command::Normalize { file } => cmd_normalize(&file),
        Command::Project { file } => cmd_project(&file),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Import { store, file } => cmd_import(&store, &file),
        Command::Export {
            store,
            session,
            out,
        } => cmd_export(&store, session, out.as_deref()),
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Outcome {
    let config = SimulationConfig {
        seed: args.seed,
        max_depth: args.max_depth,
        branching: args.branching,
        steps: args.steps,
        fail_prob: args.fail_prob,
        types: args.types.clone(),
    };
    let outcome = match simulate(&config) {
        Ok(o) => o,
        Err(e) => return Outcome::fail(EXIT_PARSE, format!("{e}\n")),
    };
    let trace = outcome.session.snapshot();
    let bytes = export_trace(&trace, outcome.session.id());
    let summary = format!(
        "nodes={} height={} merkle={} invocations={} failures={}\n",
        trace.node_count(),
        height(&trace),
        merkle_root(&trace),
        outcome.invocations,
        outcome.failures
    );
    match &args.out {
        Some(path) => match fs::write(path, &bytes) {
            Ok(()) => Outcome::ok(summary),
            Err(e) => Outcome::fail(
                EXIT_PARSE,
                format!("cannot write {}: {e}\n", path.display()),
            ),
        },
        None => Outcome {
            code: EXIT_OK,
            stdout: String::from_utf8(bytes).expect("trace text is UTF-8"),
            stderr: summary,
        },
    }
}

/// Reads and validates a trace, or produces the failing outcome.
fn load(path: &Path) -> Result<(Cteg, SessionId), Outcome> {
    let bytes = fs::read(path)
        .map_err(|e| Outcome::fail(EXIT_PARSE, format!("cannot read {}: {e}\n", path.display())))?;
    import_trace(&bytes).map_err(|e| match e {
        FormatError::Malformed { line, reason } => {
            Outcome::fail(EXIT_PARSE, format!("{}:{line}: {reason}\n", path.display()))
        }
        FormatError::Invalid(diag) => {
            let mut msg = format!("{}: not a valid CTEG\n", path.display());
            for v in diag.violations() {
                let _ = writeln!(msg, "  {v}");
            }
            Outcome {
                code: EXIT_INVALID,
                stdout: String::new(),
                stderr: msg,
            }
        }
    })
}

pub fn cmd_verify(path: &Path) -> Outcome {
    match load(path) {
        Ok((c, session)) => {
            let root_t = c.graph().timestamp(c.root()).expect("root exists");
            Outcome::ok(format!(
                "ok session={session} nodes={} height={} root_timestamp={root_t}\n",
                c.node_count(),
                height(&c)
            ))
        }
        Err(o) => o,
    }
}

pub fn cmd_commit(path: &Path) -> Outcome {
    match load(path) {
        Ok((c, _)) => Outcome::ok(format!("{}\n", merkle_root(&c))),
        Err(o) => o,
    }
}

pub fn cmd_normalize(path: &Path) -> Outcome {
    match load(path) {
        Ok((c, _)) => {
            let mut out = String::new();
            for (parent, node) in e0_schedule(&c) {
                let t = c.graph().timestamp(node).expect("scheduled node exists");
                let _ = writeln!(out, "({parent}, {node}, {t})");
            }
            Outcome::ok(out)
        }
        Err(o) => o,
    }
}

pub fn cmd_project(path: &Path) -> Outcome {
    match load(path) {
        Ok((c, _)) => {
            let mut out = String::new();
            for n in temporal_projection(&c) {
                let d = c.graph().node(n).expect("projected node exists");
                let _ = writeln!(out, "{n}\t{}\t{}", d.timestamp, d.event_type);
            }
            Outcome::ok(out)
        }
        Err(o) => o,
    }
}

pub fn cmd_oracle(args: &OracleArgs) -> Outcome {
    let bounds = UniverseBounds::small(args.actions, args.timestamps, args.types, args.max_len)
        .and_then(|b| match args.max_step_emit {
            Some(k) => b.with_max_step_emit(k),
            None => Ok(b),
        });
    let bounds = match bounds {
        Ok(b) => b,
        Err(e) => return Outcome::fail(EXIT_PARSE, format!("{e}\n")),
    };
    let mut out = format!(
        "bounds actions={} timestamps={} types={} max_len={} max_step_emit={} d_max={} budget={}\n",
        args.actions,
        args.timestamps,
        args.types,
        args.max_len,
        bounds.max_step_emit(),
        args.d_max,
        args.budget
    );
    let mut budget = Budget::new(args.budget);
    match run_oracle(&bounds, args.d_max, &mut budget) {
        Ok((report, levels)) => {
            render_report(&mut out, &report);
            if args.listing {
                render_listing(&mut out, &levels);
            }
            let code = if report.passed() {
                EXIT_OK
            } else {
                EXIT_INVALID
            };
            Outcome {
                code,
                stdout: out,
                stderr: String::new(),
            }
        }
        Err(OracleError::BudgetExceeded { budget, completed }) => {
            for (d, n) in completed.iter().enumerate() {
                let _ = writeln!(out, "|E_{d}| = {n}");
            }
            let _ = writeln!(
                out,
                "budget of {budget} sequences exceeded after {} complete levels",
                completed.len()
            );
            Outcome {
                code: EXIT_BUDGET,
                stdout: out,
                stderr: String::new(),
            }
        }
        Err(e) => Outcome::fail(EXIT_PARSE, format!("{e}\n")),
    }
}

fn render_report(out: &mut String, r: &OracleReport) {
    for (d, n) in r.level_sizes.iter().enumerate() {
        let _ = writeln!(out, "|E_{d}| = {n}");
    }
    let _ = writeln!(out, "ascending chain: {}", r.ascending);
    let _ = writeln!(out, "E_0 != E_1: {}", r.separation);
    let _ = writeln!(out, "E_1 = E_d for d >= 1: {}", r.stabilization);
    let _ = writeln!(out, "phi(S) = S: {}", r.fixed_point);
    match r.stable_level {
        Some(d) => {
            let _ = writeln!(out, "stable at level {d}");
        }
        None => {
            let _ = writeln!(out, "no stable level found");
        }
    }
    let _ = writeln!(out, "sequences enumerated: {}", r.sequences_enumerated);
    let verdict = if r.passed() { "pass" } else { "FAIL" };
    let _ = writeln!(out, "result: {verdict}");
}

/// One line per sequence: graphs separated by ` | `, each graph as its
/// nodes `id@t:type` followed by its edges `a>b`. Identifiers are the
/// decimal pool indices.
fn render_listing(out: &mut String, levels: &[SequenceSet]) {
    for (d, level) in levels.iter().enumerate() {
        let _ = writeln!(out, "E_{d}:");
        for seq in level {
            let graphs: Vec<String> = seq
                .graphs()
                .iter()
                .map(|g| {
                    let mut parts: Vec<String> = g
                        .nodes()
                        .map(|(n, d)| format!("{}@{}:{}", n.as_u128(), d.timestamp, d.event_type))
                        .collect();
                    parts.extend(
                        g.edges()
                            .map(|(a, b)| format!("{}>{}", a.as_u128(), b.as_u128())),
                    );
                    parts.join(" ")
                })
                .collect();
            let _ = writeln!(out, "  {}", graphs.join(" | "));
        }
    }
}

pub fn cmd_import(store: &Path, file: &Path) -> Outcome {
    let (c, _) = match load(file) {
        Ok(v) => v,
        Err(o) => return o,
    };
    let result =
        FileStore::open(store).and_then(|s| cteg::persistence::store::persist_cteg(&s, &c));
    match result {
        Ok(id) => Outcome::ok(format!("{id}\n")),
        Err(e) => Outcome::fail(EXIT_INVALID, format!("{e}\n")),
    }
}

pub fn cmd_export(store: &Path, session: SessionId, out: Option<&Path>) -> Outcome {
    if !store.is_file() {
        return Outcome::fail(EXIT_PARSE, format!("no store at {}\n", store.display()));
    }
    let c = match FileStore::open(store).and_then(|s| s.load_session(session)) {
        Ok(c) => c,
        Err(e) => return Outcome::fail(EXIT_INVALID, format!("{e}\n")),
    };
    let bytes = export_trace(&c, session);
    match out {
        Some(path) => match fs::write(path, &bytes) {
            Ok(()) => Outcome::ok(String::new()),
            Err(e) => Outcome::fail(
                EXIT_PARSE,
                format!("cannot write {}: {e}\n", path.display()),
            ),
        },
        None => Outcome::ok(String::from_utf8(bytes).expect("trace text is UTF-8")),
    }
}
