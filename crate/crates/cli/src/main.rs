use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::json;

use teamreach::almost_sure::{encode, solve_almost_sure, AlmostSureAnswer, EncodeOptions};
use teamreach::bench::{self, Digraph, Graph, RobotGoal};
use teamreach::game::merge_team;
use teamreach::io::{format_valuation, parse_game, parse_valuation, profile_to_document, serialize_game};
use teamreach::iratl::{parse_formula, satisfying_states, CheckConfig, Verdict};
use teamreach::one_shot::{build_local_game, SearchConfig};
use teamreach::rational::{format_rational, parse_rational, to_f64};
use teamreach::sat::{ExternalSat, SatBackend};
use teamreach::smt::{self, bisect_value, emit_local_game_query, emit_threshold_formula, SolverEndpoint};
use teamreach::vi::{certify, value_iteration, Backend, Mode, StopConfig, ViConfig};
use teamreach::Game;

const EXIT_NO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_UNKNOWN: u8 = 10;

#[derive(Parser)]
#[command(name = "teamreach", version, about = "Team reachability games with independent randomisation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark or built-in game.
    Gen(GenArgs),
    /// Check a game file and list problems.
    Validate { game: PathBuf },
    /// Value iteration with certified lower bounds.
    SolveThreshold(ThresholdArgs),
    /// Decide almost-sure reachability through SAT.
    SolveAlmostSure(AlmostSureArgs),
    /// Write the SMT-LIB threshold formula or a local one-shot query.
    ExportSmt(ExportSmtArgs),
    /// Write the almost-sure CNF in DIMACS format.
    ExportCnf(ExportCnfArgs),
    /// Model-check an IRATL formula.
    Check(CheckArgs),
    /// Bracket the value at the initial state with exact SMT queries.
    Bisect(BisectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Builtin,
    Pursuit,
    Robot,
    Jamming,
    Clique,
}

#[derive(Clone, Copy, ValueEnum)]
enum GoalKind {
    /// Some robot stands on the target cell.
    Any,
    /// The first robot stands on the target cell.
    First,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Built-in game name (door, memory, door-merged).
    #[arg(long)]
    name: Option<String>,
    /// Numbered scenario for pursuit (1-6) or robot (1-4).
    #[arg(long)]
    scenario: Option<usize>,
    /// Graph file: {"nodes": n, "edges": [[u, v], ...]}.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Cycle graph on this many nodes (pursuit).
    #[arg(long)]
    cycle: Option<usize>,
    /// Complete graph on this many nodes.
    #[arg(long)]
    complete: Option<usize>,
    /// Path graph on this many nodes (clique).
    #[arg(long)]
    path: Option<usize>,
    /// Team start nodes (pursuit), comma separated.
    #[arg(long, value_delimiter = ',')]
    team: Vec<usize>,
    /// Opponent start node (pursuit).
    #[arg(long)]
    opponent: Option<usize>,
    /// Grid height and width (robot), e.g. 2x3.
    #[arg(long)]
    grid: Option<String>,
    /// Robot starts as x,y pairs separated by `;`.
    #[arg(long)]
    starts: Option<String>,
    /// Robot target cell x,y.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum, default_value = "any")]
    goal: GoalKind,
    /// Channels (jamming).
    #[arg(long = "C")]
    channels: Option<usize>,
    /// Buffer sizes (jamming), comma separated.
    #[arg(long = "B", value_delimiter = ',')]
    buffers: Vec<usize>,
    /// Clique size (clique).
    #[arg(long)]
    k: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum ModeArg {
    Ind,
    Sh,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Opt,
    Smt,
    Hybrid,
}

#[derive(Args, Clone)]
struct SmtFlags {
    /// SMT solver program (falls back to TEAMREACH_SMT_SOLVER).
    #[arg(long)]
    solver: Option<PathBuf>,
    /// Solver arguments, whitespace separated (falls back to TEAMREACH_SMT_ARGS).
    #[arg(long, allow_hyphen_values = true)]
    solver_args: Option<String>,
    /// Per-query timeout in seconds (falls back to TEAMREACH_SMT_TIMEOUT).
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct ThresholdArgs {
    game: PathBuf,
    #[arg(long, value_enum, default_value = "ind")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "opt")]
    backend: BackendArg,
    /// Threshold; the exit code then reports the decision.
    #[arg(long)]
    t: Option<String>,
    /// Stop once the largest change in a sweep is below this.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Local-search restarts per state.
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Precision of exact local queries (smt and hybrid backends).
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    smt: SmtFlags,
    /// Write the extracted profile (JSON).
    #[arg(long)]
    profile_out: Option<PathBuf>,
    /// Write the certified valuation.
    #[arg(long)]
    values_out: Option<PathBuf>,
    /// Machine-readable report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SatFlags {
    /// External SAT solver reading DIMACS; the embedded solver otherwise.
    #[arg(long)]
    sat_solver: Option<PathBuf>,
    /// Arguments for the external solver; `{file}` marks the CNF path.
    #[arg(long, allow_hyphen_values = true)]
    sat_args: Option<String>,
    #[arg(long, default_value_t = 600.0)]
    sat_timeout: f64,
}

#[derive(Args)]
struct AlmostSureArgs {
    game: PathBuf,
    /// Merge the team first (shared randomisation).
    #[arg(long)]
    merge: bool,
    /// One-hot rank encoding.
    #[arg(long)]
    unary: bool,
    #[command(flatten)]
    sat: SatFlags,
    /// Write the certificate (JSON) on a positive answer.
    #[arg(long)]
    certificate: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ExportSmtArgs {
    game: PathBuf,
    /// Threshold for the global formula.
    #[arg(long)]
    t: Option<String>,
    /// Emit the local query at this state instead.
    #[arg(long)]
    local: Option<String>,
    /// Level for the local query.
    #[arg(long)]
    c: Option<f64>,
    /// Valuation for the local query; the target indicator by default.
    #[arg(long)]
    valuation: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExportCnfArgs {
    game: PathBuf,
    #[arg(long)]
    merge: bool,
    #[arg(long)]
    unary: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    game: PathBuf,
    #[arg(long)]
    formula: String,
    #[command(flatten)]
    smt: SmtFlags,
    #[command(flatten)]
    sat: SatFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BisectArgs {
    game: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[command(flatten)]
    smt: SmtFlags,
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Backend(String),
}

type Outcome = Result<u8, Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn backend(msg: impl std::fmt::Display) -> Failure {
    Failure::Backend(msg.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Validate { game } => validate(&game),
        Command::SolveThreshold(a) => solve_threshold(a),
        Command::SolveAlmostSure(a) => almost_sure(a),
        Command::ExportSmt(a) => export_smt(a),
        Command::ExportCnf(a) => export_cnf(a),
        Command::Check(a) => check(a),
        Command::Bisect(a) => bisect(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Backend(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_BACKEND)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_game(path: &Path) -> Result<Game, Failure> {
    parse_game(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_report(path: Option<&Path>, report: serde_json::Value) -> Result<(), Failure> {
    if let Some(p) = path {
        let text = serde_json::to_string_pretty(&report).expect("report is valid JSON") + "\n";
        fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn parse_cell(text: &str) -> Result<(usize, usize), Failure> {
    let (x, y) = text.split_once(',').ok_or_else(|| usage(format!("cell `{text}` is not x,y")))?;
    let n = |s: &str| s.trim().parse::<usize>().map_err(|_| usage(format!("cell `{text}` is not x,y")));
    Ok((n(x)?, n(y)?))
}

fn gen(a: GenArgs) -> Outcome {
    let game = match a.family {
        Family::Builtin => {
            let name = a.name.as_deref().ok_or_else(|| usage("--name is required for built-in games"))?;
            bench::builtin(name).map_err(usage)?
        }
        Family::Pursuit => {
            let (graph, team, opp) = if let Some(i) = a.scenario {
                let sc = bench::pursuit_scenario(i).map_err(usage)?;
                (sc.graph, sc.team, sc.opponent)
            } else {
                let graph = if let Some(n) = a.cycle {
                    Digraph::cycle(n)
                } else if let Some(n) = a.complete {
                    Digraph::complete(n)
                } else if let Some(p) = &a.graph {
                    serde_json::from_str(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?
                } else {
                    return Err(usage("pursuit needs --scenario, --cycle, --complete or --graph"));
                };
                let opp = a.opponent.ok_or_else(|| usage("--opponent is required"))?;
                if a.team.is_empty() {
                    return Err(usage("--team is required"));
                }
                (graph, a.team.clone(), opp)
            };
            bench::gen_pursuit(&graph, &team, opp).map_err(usage)?
        }
        Family::Robot => {
            let (h, w, starts, target) = if let Some(i) = a.scenario {
                bench::robot_scenario(i).map_err(usage)?
            } else {
                let grid = a.grid.as_deref().ok_or_else(|| usage("robot needs --scenario or --grid"))?;
                let (h, w) = grid
                    .split_once('x')
                    .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
                    .ok_or_else(|| usage(format!("grid `{grid}` is not HxW")))?;
                let starts = a
                    .starts
                    .as_deref()
                    .ok_or_else(|| usage("--starts is required"))?
                    .split(';')
                    .map(parse_cell)
                    .collect::<Result<Vec<_>, _>>()?;
                let target = parse_cell(a.target.as_deref().ok_or_else(|| usage("--target is required"))?)?;
                (h, w, starts, target)
            };
            let goal = match a.goal {
                GoalKind::Any => RobotGoal::AnyAt(target),
                GoalKind::First => RobotGoal::FirstAt(target),
            };
            bench::gen_robot(h, w, &starts, &goal).map_err(usage)?
        }
        Family::Jamming => {
            let c = a.channels.ok_or_else(|| usage("--C is required"))?;
            if a.buffers.is_empty() {
                return Err(usage("--B is required"));
            }
            bench::gen_jamming(c, &a.buffers).map_err(usage)?
        }
        Family::Clique => {
            let graph = if let Some(n) = a.complete {
                Graph::complete(n)
            } else if let Some(n) = a.path {
                Graph::path(n)
            } else if let Some(p) = &a.graph {
                serde_json::from_str(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?
            } else {
                return Err(usage("clique needs --complete, --path or --graph"));
            };
            let k = a.k.ok_or_else(|| usage("--k is required"))?;
            bench::gen_clique(&graph, k).map_err(usage)?
        }
    };
    emit(a.output.as_deref(), &serialize_game(&game))?;
    if a.output.is_some() {
        eprintln!("{} states, {} transitions", game.num_states(), game.transition_count());
    }
    Ok(0)
}

fn validate(path: &Path) -> Outcome {
    let text = read(path)?;
    match teamreach::io::decode_game(&text) {
        Ok(game) => {
            let report = game.validate();
            if !report.issues.is_empty() {
                println!("{report}");
            }
            if report.ok {
                println!("ok: {} states, {} transitions", game.num_states(), game.transition_count());
                Ok(0)
            } else {
                Ok(EXIT_NO)
            }
        }
        Err(e) => {
            println!("error: {e}");
            Ok(EXIT_NO)
        }
    }
}

fn endpoint(flags: &SmtFlags) -> Result<Option<SolverEndpoint>, Failure> {
    SolverEndpoint::from_env_or(flags.solver.clone(), flags.solver_args.clone(), flags.timeout).map_err(usage)
}

/// Like `endpoint`, but falls back to a z3 found on PATH.
fn discovered_endpoint(flags: &SmtFlags) -> Result<Option<SolverEndpoint>, Failure> {
    Ok(endpoint(flags)?.or_else(smt::discover_solver))
}

fn sat_backend(flags: &SatFlags) -> Result<SatBackend, Failure> {
    Ok(match &flags.sat_solver {
        None => SatBackend::Embedded,
        Some(p) => {
            if !(flags.sat_timeout > 0.0) {
                return Err(usage("--sat-timeout must be positive"));
            }
            SatBackend::External(ExternalSat {
                program: p.clone(),
                args: flags.sat_args.as_deref().unwrap_or("").split_whitespace().map(String::from).collect(),
                timeout: Duration::from_secs_f64(flags.sat_timeout),
            })
        }
    })
}

fn threshold(text: &str) -> Result<BigRational, Failure> {
    let t = parse_rational(text).map_err(|e| usage(format!("threshold `{text}`: {e}")))?;
    if t < BigRational::zero() || t > BigRational::one() {
        return Err(usage("threshold must lie in [0, 1]"));
    }
    Ok(t)
}

fn solve_threshold(a: ThresholdArgs) -> Outcome {
    let game = load_game(&a.game)?;
    if !(a.tolerance > 0.0) || !(a.eps > 0.0) {
        return Err(usage("tolerances must be positive"));
    }
    if a.restarts == 0 {
        return Err(usage("--restarts must be at least 1"));
    }
    let t = a.t.as_deref().map(threshold).transpose()?;
    let backend_kind = match a.backend {
        BackendArg::Opt => Backend::Opt,
        BackendArg::Smt => Backend::Smt,
        BackendArg::Hybrid => Backend::Hybrid,
    };
    let solver = match backend_kind {
        Backend::Opt => None,
        _ => discovered_endpoint(&a.smt)?,
    };
    if matches!(backend_kind, Backend::Smt) && solver.is_none() {
        return Err(backend("the smt backend needs --solver or TEAMREACH_SMT_SOLVER"));
    }
    let cfg = ViConfig {
        mode: if a.mode == ModeArg::Sh { Mode::Shared } else { Mode::Independent },
        backend: backend_kind,
        stop: StopConfig { tolerance: a.tolerance, max_iters: a.max_iters },
        search: SearchConfig { restarts: a.restarts, seed: a.seed, ..SearchConfig::default() },
        jobs: a.jobs,
        solver,
        keep_trace: false,
        smt_precision: a.eps,
    };
    let started = Instant::now();
    let r = value_iteration(&game, &cfg).map_err(backend)?;
    let vi_time = started.elapsed();
    let certified = certify(&r.game, &r.profile, &StopConfig::certification()).map_err(backend)?;
    let total_time = started.elapsed();
    let g = &r.game;

    println!(
        "mode {} backend {} iterations {}{}",
        if cfg.mode == Mode::Shared { "shared" } else { "independent" },
        match r.backend {
            Backend::Opt => "opt",
            Backend::Smt => "smt",
            Backend::Hybrid => "hybrid",
        },
        r.iterations,
        if r.converged { "" } else { " (iteration cap reached)" }
    );
    println!("state value certified");
    for s in 0..g.num_states() {
        println!("{} {:.6} {:.6}", g.states[s], r.values[s], certified[s]);
    }
    println!("profile");
    for p in 0..g.team_size() {
        for s in 0..g.num_states() {
            if g.is_target(s) {
                continue;
            }
            let row: Vec<String> = r.profile.probs[p][s]
                .iter()
                .enumerate()
                .map(|(i, x)| format!("{}={x:.6}", g.local_action_name(s, p, i)))
                .collect();
            println!("  {} {} {}", g.players[p], g.states[s], row.join(" "));
        }
    }
    let init = certified[g.initial];
    let (code, verdict) = match &t {
        None => (0, None),
        Some(t) => {
            let yes = init > to_f64(t);
            let word = if yes { "yes" } else { "unknown" };
            println!("verdict {word} (certified {init:.6} vs threshold {})", format_rational(t));
            (if yes { 0 } else { EXIT_UNKNOWN }, Some(word))
        }
    };
    if let Some(p) = &a.profile_out {
        let doc = profile_to_document(g, &r.profile);
        emit(Some(p), &(serde_json::to_string_pretty(&doc).expect("profile is valid JSON") + "\n"))?;
    }
    if let Some(p) = &a.values_out {
        emit(Some(p), &format_valuation(g, &certified))?;
    }
    write_report(
        a.report.as_deref(),
        json!({
            "command": "solve-threshold",
            "game": a.game.display().to_string(),
            "mode": r.mode,
            "backend": r.backend,
            "iterations": r.iterations,
            "converged": r.converged,
            "history": r.history,
            "values": named(g, &r.values),
            "certified": named(g, &certified),
            "initial": g.states[g.initial],
            "threshold": t.as_ref().map(format_rational),
            "verdict": verdict,
            "profile": profile_to_document(g, &r.profile).profile,
            "timings_ms": {
                "iteration": vi_time.as_secs_f64() * 1e3,
                "total": total_time.as_secs_f64() * 1e3,
            },
        }),
    )?;
    Ok(code)
}

fn named(g: &Game, v: &[f64]) -> serde_json::Map<String, serde_json::Value> {
    g.states.iter().zip(v).map(|(s, x)| (s.clone(), json!(format!("{x:.6}").parse::<f64>().unwrap_or(*x)))).collect()
}

fn maybe_merge(game: Game, merge: bool) -> Result<Game, Failure> {
    if merge {
        merge_team(&game).map_err(usage)
    } else {
        Ok(game)
    }
}

fn almost_sure(a: AlmostSureArgs) -> Outcome {
    let game = maybe_merge(load_game(&a.game)?, a.merge)?;
    let sat = sat_backend(&a.sat)?;
    let opts = EncodeOptions { unary: a.unary };
    let started = Instant::now();
    let answer = solve_almost_sure(&game, &sat, opts).map_err(backend)?;
    let elapsed = started.elapsed();
    let (code, cert_doc) = match &answer {
        AlmostSureAnswer::Yes(cert) => {
            println!("yes");
            let doc = cert.to_document(&game);
            for s in &cert.winning {
                println!("  {} rank {}", game.states[*s], cert.rank[s]);
            }
            if let Some(p) = &a.certificate {
                emit(Some(p), &(serde_json::to_string_pretty(&doc).expect("certificate is valid JSON") + "\n"))?;
            }
            (0, Some(doc))
        }
        AlmostSureAnswer::No => {
            println!("no");
            (EXIT_NO, None)
        }
    };
    let cnf = encode(&game, opts);
    write_report(
        a.report.as_deref(),
        json!({
            "command": "solve-almost-sure",
            "game": a.game.display().to_string(),
            "merged": a.merge,
            "encoding": if a.unary { "unary" } else { "binary" },
            "backend": sat,
            "variables": cnf.num_vars,
            "clauses": cnf.clauses.len(),
            "answer": if code == 0 { "yes" } else { "no" },
            "certificate": cert_doc,
            "timings_ms": { "total": elapsed.as_secs_f64() * 1e3 },
        }),
    )?;
    Ok(code)
}

fn export_smt(a: ExportSmtArgs) -> Outcome {
    let game = load_game(&a.game)?;
    let script = match (&a.t, &a.local) {
        (Some(t), None) => emit_threshold_formula(&game, &threshold(t)?),
        (None, Some(state)) => {
            let s = game.state_index(state).ok_or_else(|| usage(format!("unknown state `{state}`")))?;
            let c = a.c.ok_or_else(|| usage("--c is required with --local"))?;
            let v = match &a.valuation {
                Some(p) => parse_valuation(&game, &read(p)?).map_err(usage)?,
                None => (0..game.num_states()).map(|s| if game.is_target(s) { 1.0 } else { 0.0 }).collect(),
            };
            emit_local_game_query(&build_local_game(&game, s, &v).map_err(usage)?, c)
        }
        _ => return Err(usage("give exactly one of --t and --local")),
    };
    emit(a.output.as_deref(), &script.render())?;
    Ok(0)
}

fn export_cnf(a: ExportCnfArgs) -> Outcome {
    let game = maybe_merge(load_game(&a.game)?, a.merge)?;
    let cnf = encode(&game, EncodeOptions { unary: a.unary });
    emit(a.output.as_deref(), &cnf.to_dimacs())?;
    Ok(0)
}

fn check(a: CheckArgs) -> Outcome {
    let game = load_game(&a.game)?;
    let formula = parse_formula(&a.formula).map_err(|e| usage(format!("formula: {e}")))?;
    let cfg = CheckConfig {
        solver: endpoint(&a.smt)?,
        sat: sat_backend(&a.sat)?,
        vi: ViConfig {
            search: SearchConfig { seed: a.seed, ..SearchConfig::default() },
            jobs: a.jobs,
            ..ViConfig::default()
        },
    };
    let started = Instant::now();
    let result = satisfying_states(&game, &formula, &cfg).map_err(|e| match e {
        teamreach::iratl::CheckError::Formula(_) | teamreach::iratl::CheckError::UnknownPlayer(_) => usage(e),
        other => backend(other),
    })?;
    let elapsed = started.elapsed();
    println!("formula {formula}");
    for (s, v) in result.verdicts.iter().enumerate() {
        let mark = if s == game.initial { " (initial)" } else { "" };
        println!("{} {v}{mark}", game.states[s]);
    }
    let at_init = result.verdicts[game.initial];
    write_report(
        a.report.as_deref(),
        json!({
            "command": "check",
            "game": a.game.display().to_string(),
            "formula": formula.to_string(),
            "verdicts": game.states.iter().cloned().zip(result.verdicts.iter().map(|v| json!(v.to_string()))).collect::<serde_json::Map<_, _>>(),
            "initial": at_init,
            "provenance": result.provenance,
            "timings_ms": { "total": elapsed.as_secs_f64() * 1e3 },
        }),
    )?;
    Ok(match at_init {
        Verdict::True => 0,
        Verdict::False => EXIT_NO,
        Verdict::Unknown => EXIT_UNKNOWN,
    })
}

fn bisect(a: BisectArgs) -> Outcome {
    let game = load_game(&a.game)?;
    if !(a.eps > 0.0) {
        return Err(usage("--eps must be positive"));
    }
    let endpoint = discovered_endpoint(&a.smt)?.ok_or_else(|| backend("bisect needs --solver or TEAMREACH_SMT_SOLVER"))?;
    let started = Instant::now();
    let r = bisect_value(&game, a.eps, &endpoint).map_err(backend)?;
    let elapsed = started.elapsed();
    println!("lo {:.6} hi {:.6} queries {}{}", r.lo, r.hi, r.queries, if r.partial { " (partial)" } else { "" });
    let profile = r.best_model.as_ref().map(|m| profile_to_document(&game, &smt::profile_from_model(&game, m)).profile);
    write_report(
        a.report.as_deref(),
        json!({
            "command": "bisect",
            "game": a.game.display().to_string(),
            "lo": r.lo,
            "hi": r.hi,
            "partial": r.partial,
            "queries": r.queries,
            "profile": profile,
            "timings_ms": { "total": elapsed.as_secs_f64() * 1e3 },
        }),
    )?;
    Ok(if r.partial { EXIT_UNKNOWN } else { 0 })
}
