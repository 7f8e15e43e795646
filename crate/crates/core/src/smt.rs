//! SMT-LIB 2 encodings of the threshold problem and of local one-shot games,
//! plus a subprocess driver for an external nonlinear real arithmetic solver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::game::{Game, MemorylessProfile, StateId};
use crate::one_shot::{LocalGame, ProductSelector};
use crate::rational::to_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Real,
}

/// A declared-variables-plus-assertions script.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmtScript {
    pub logic: String,
    /// Optional comment lines emitted before the declarations.
    pub comments: Vec<String>,
    pub decls: Vec<(String, Sort)>,
    pub assertions: Vec<String>,
}

impl SmtScript {
    fn new() -> Self {
        SmtScript { logic: "QF_NRA".into(), comments: Vec::new(), decls: Vec::new(), assertions: Vec::new() }
    }

    fn declare(&mut self, name: String) -> String {
        self.decls.push((name.clone(), Sort::Real));
        name
    }

    fn assert(&mut self, term: String) {
        self.assertions.push(term);
    }

    /// Script text without `check-sat`.
    pub fn render_body(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "; {c}");
        }
        let _ = writeln!(out, "(set-logic {})", self.logic);
        for (name, sort) in &self.decls {
            let sort = match sort {
                Sort::Real => "Real",
            };
            let _ = writeln!(out, "(declare-fun {name} () {sort})");
        }
        for a in &self.assertions {
            let _ = writeln!(out, "(assert {a})");
        }
        out
    }

    /// Full script with a single `check-sat`.
    pub fn render(&self) -> String {
        let mut out = self.render_body();
        out.push_str("(check-sat)\n");
        out
    }
}

/// Exact rational as an SMT-LIB real term.
pub fn rational_term(q: &BigRational) -> String {
    let num = q.numer().abs();
    let body = if q.denom().is_one() {
        format!("{num}.0")
    } else {
        format!("(/ {num}.0 {}.0)", q.denom())
    };
    if q.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

/// Exact value of the shortest decimal representation of a float.
pub fn decimal_of_f64(x: f64) -> BigRational {
    let text = format!("{x}");
    let (neg, body) = match text.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, text.as_str()),
    };
    let (i, f) = body.split_once('.').unwrap_or((body, ""));
    let num: BigInt = format!("{i}{f}").parse().unwrap_or_default();
    let q = BigRational::new(num, num_traits::pow(BigInt::from(10), f.len()));
    if neg {
        -q
    } else {
        q
    }
}

fn sum(terms: Vec<String>) -> String {
    match terms.len() {
        0 => "0.0".into(),
        1 => terms.into_iter().next().unwrap(),
        _ => format!("(+ {})", terms.join(" ")),
    }
}

fn product(factors: Vec<String>) -> String {
    match factors.len() {
        0 => "1.0".into(),
        1 => factors.into_iter().next().unwrap(),
        _ => format!("(* {})", factors.join(" ")),
    }
}

pub fn strategy_var(s: StateId, p: usize, a: usize) -> String {
    format!("x_{s}_{p}_{a}")
}

pub fn value_var(s: StateId) -> String {
    format!("v_{s}")
}

pub const LAMBDA: &str = "lam";

/// The discounted existential formula: satisfiable iff the team can reach
/// the targets from the initial state with probability strictly above `t`.
pub fn emit_threshold_formula(game: &Game, t: &BigRational) -> SmtScript {
    let mut sc = SmtScript::new();
    sc.comments.push(format!("threshold {} for initial state {}", rational_term(t), game.states[game.initial]));
    let n = game.num_states();
    let team = game.team_size();
    // strategy variables, omitted where the team has no influence or a
    // player has a single available action
    let mut xvars: Vec<Vec<Option<Vec<String>>>> = vec![vec![None; team]; n];
    for s in 0..n {
        if game.is_target(s) || !game.team_influences(s) {
            continue;
        }
        for p in 0..team {
            let k = game.available[s][p].len();
            if k < 2 {
                continue;
            }
            let vars: Vec<String> = (0..k).map(|a| sc.declare(strategy_var(s, p, a))).collect();
            for (a, v) in vars.iter().enumerate() {
                sc.comments.push(format!(
                    "{v}: state {} player {} action {}",
                    game.states[s],
                    game.players[p],
                    game.local_action_name(s, p, a)
                ));
                sc.assert(format!("(and (<= 0.0 {v}) (<= {v} 1.0))"));
            }
            sc.assert(format!("(= {} 1.0)", sum(vars.clone())));
            xvars[s][p] = Some(vars);
        }
    }
    let vvars: Vec<String> = (0..n).map(|s| sc.declare(value_var(s))).collect();
    for (s, v) in vvars.iter().enumerate() {
        sc.comments.push(format!("{v}: state {}", game.states[s]));
    }
    sc.declare(LAMBDA.into());
    for v in &vvars {
        sc.assert(format!("(and (<= 0.0 {v}) (<= {v} 1.0))"));
    }
    for s in 0..n {
        if game.is_target(s) {
            sc.assert(format!("(= {} 1.0)", vvars[s]));
        }
    }
    for s in 0..n {
        if game.is_target(s) {
            continue;
        }
        let influenced = xvars[s].iter().any(Option::is_some);
        for b in 0..game.opp_count(s) {
            let succ = |tj: usize| {
                sum(game
                    .dist(s, tj, b)
                    .entries()
                    .iter()
                    .map(|(t, p)| if p.is_one() { vvars[*t].clone() } else { format!("(* {} {})", rational_term(p), vvars[*t]) })
                    .collect())
            };
            let rhs = if influenced {
                let terms: Vec<String> = (0..game.team_joint_count(s))
                    .map(|tj| {
                        let local = game.decode_team_joint(s, tj);
                        let mut factors: Vec<String> = local
                            .iter()
                            .enumerate()
                            .filter_map(|(p, &a)| xvars[s][p].as_ref().map(|vars| vars[a].clone()))
                            .collect();
                        factors.push(succ(tj));
                        product(factors)
                    })
                    .collect();
                sum(terms)
            } else {
                succ(0)
            };
            sc.assert(format!("(<= {} (* {LAMBDA} {rhs}))", vvars[s]));
        }
    }
    sc.assert(format!("(and (< 0.0 {LAMBDA}) (< {LAMBDA} 1.0))"));
    sc.assert(format!("(> {} {})", vvars[game.initial], rational_term(t)));
    sc
}

pub fn local_var(p: usize, a: usize) -> String {
    format!("y_{p}_{a}")
}

/// Satisfiable iff some product selector guarantees at least `c` in the
/// local game.
pub fn emit_local_game_query(local: &LocalGame, c: f64) -> SmtScript {
    let mut sc = SmtScript::new();
    let vars: Vec<Vec<String>> = local
        .team_sizes
        .iter()
        .enumerate()
        .map(|(p, &k)| (0..k).map(|a| sc.declare(local_var(p, a))).collect())
        .collect();
    for vs in &vars {
        for v in vs {
            sc.assert(format!("(and (<= 0.0 {v}) (<= {v} 1.0))"));
        }
        sc.assert(format!("(= {} 1.0)", sum(vs.clone())));
    }
    let c_term = rational_term(&decimal_of_f64(c));
    for b in 0..local.opp {
        let mut terms = Vec::new();
        let mut tj = 0;
        crate::game::for_each_index(&local.team_sizes, |idx| {
            let v = local.entry(tj, b);
            tj += 1;
            if v == 0.0 {
                return;
            }
            let mut factors: Vec<String> = idx.iter().enumerate().map(|(p, &a)| vars[p][a].clone()).collect();
            factors.push(rational_term(&decimal_of_f64(v)));
            terms.push(product(factors));
        });
        sc.assert(format!("(>= {} {c_term})", sum(terms)));
    }
    sc
}

/// External solver configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SolverEndpoint {
    pub program: PathBuf,
    /// Arguments; `{timeout}` and `{timeout_ms}` are substituted.
    pub args: Vec<String>,
    pub timeout: Duration,
}

pub const ENV_SOLVER: &str = "TEAMREACH_SMT_SOLVER";
pub const ENV_ARGS: &str = "TEAMREACH_SMT_ARGS";
pub const ENV_TIMEOUT: &str = "TEAMREACH_SMT_TIMEOUT";
pub const DEFAULT_TIMEOUT_SECS: u64 = 60;

impl SolverEndpoint {
    /// Builds an endpoint; z3 gets `-in -smt2` when no arguments are given.
    pub fn new(program: impl Into<PathBuf>, args: Option<Vec<String>>, timeout: Duration) -> Self {
        let program = program.into();
        let args = args.unwrap_or_else(|| {
            let is_z3 = program.file_stem().is_some_and(|s| s == "z3");
            if is_z3 {
                vec!["-in".into(), "-smt2".into()]
            } else {
                Vec::new()
            }
        });
        SolverEndpoint { program, args, timeout }
    }

    /// Explicit values win over the environment.
    pub fn from_env_or(
        program: Option<PathBuf>,
        args: Option<String>,
        timeout_secs: Option<f64>,
    ) -> Result<Option<Self>, SmtError> {
        let program = program.or_else(|| std::env::var_os(ENV_SOLVER).map(PathBuf::from));
        let Some(program) = program else { return Ok(None) };
        let args = args.or_else(|| std::env::var(ENV_ARGS).ok()).map(|a| a.split_whitespace().map(String::from).collect());
        let timeout = match timeout_secs {
            Some(t) => t,
            None => match std::env::var(ENV_TIMEOUT) {
                Ok(t) => t.trim().parse().map_err(|_| SmtError::Config(format!("{ENV_TIMEOUT}={t} is not a number")))?,
                Err(_) => DEFAULT_TIMEOUT_SECS as f64,
            },
        };
        if !(timeout > 0.0) || !timeout.is_finite() {
            return Err(SmtError::Config("timeout must be positive".into()));
        }
        Ok(Some(Self::new(program, args, Duration::from_secs_f64(timeout))))
    }

    fn expanded_args(&self) -> Vec<String> {
        let secs = self.timeout.as_secs().max(1).to_string();
        let ms = self.timeout.as_millis().to_string();
        self.args.iter().map(|a| a.replace("{timeout_ms}", &ms).replace("{timeout}", &secs)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SatStatus {
    Sat,
    Unsat,
    Unknown,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverVerdict {
    pub status: SatStatus,
    pub model: Option<BTreeMap<String, BigRational>>,
}

#[derive(Debug, thiserror::Error)]
pub enum SmtError {
    #[error("solver `{0}` could not be started: {1}")]
    NotFound(String, String),
    #[error("solver protocol violation: {0}")]
    Protocol(String),
    #[error("solver configuration: {0}")]
    Config(String),
}

/// Runs one `check-sat` query, fetching the model on `sat`.
pub fn run_solver(endpoint: &SolverEndpoint, script: &SmtScript) -> Result<SolverVerdict, SmtError> {
    let mut child = Command::new(&endpoint.program)
        .args(endpoint.expanded_args())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| SmtError::NotFound(endpoint.program.display().to_string(), e.to_string()))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel::<String>();
    let reader = std::thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let deadline = Instant::now() + endpoint.timeout;
    let text = script.render();
    // A solver that exits early closes the pipe; its answer (if any) is
    // still read below.
    let _ = stdin.write_all(text.as_bytes()).and_then(|_| stdin.flush());

    let first = loop {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok(line) if line.trim().is_empty() => continue,
            Ok(line) => break Some(line.trim().to_string()),
            Err(mpsc::RecvTimeoutError::Timeout) => break None,
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(SmtError::Protocol("solver closed its output without an answer".into()));
            }
        }
    };
    let Some(first) = first else {
        let _ = child.kill();
        let _ = child.wait();
        return Ok(SolverVerdict { status: SatStatus::Timeout, model: None });
    };
    let status = match first.as_str() {
        "sat" => SatStatus::Sat,
        "unsat" => SatStatus::Unsat,
        "unknown" => SatStatus::Unknown,
        "timeout" => SatStatus::Timeout,
        other => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SmtError::Protocol(format!("unexpected answer `{other}`")));
        }
    };
    if status != SatStatus::Sat {
        let _ = stdin.write_all(b"(exit)\n");
        drop(stdin);
        let _ = child.kill();
        let _ = child.wait();
        return Ok(SolverVerdict { status, model: None });
    }
    let _ = stdin.write_all(b"(get-model)\n(exit)\n");
    drop(stdin);
    let mut rest = String::new();
    loop {
        let left = deadline.saturating_duration_since(Instant::now()).max(Duration::from_secs(5));
        match rx.recv_timeout(left) {
            Ok(line) => {
                rest.push_str(&line);
                rest.push('\n');
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => break,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                let _ = child.kill();
                break;
            }
        }
    }
    let _ = child.wait();
    let _ = reader.join();
    let model = parse_model(&rest)?;
    Ok(SolverVerdict { status, model: Some(model) })
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn parse_sexps(text: &str) -> Result<Vec<Sexp>, SmtError> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' => stack.push(Vec::new()),
            ')' => {
                let done = stack.pop().ok_or_else(|| SmtError::Protocol("unbalanced `)`".into()))?;
                stack.last_mut().ok_or_else(|| SmtError::Protocol("unbalanced `)`".into()))?.push(Sexp::List(done));
            }
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '|' => {
                let mut atom = String::new();
                for c in chars.by_ref() {
                    if c == '|' {
                        break;
                    }
                    atom.push(c);
                }
                stack.last_mut().unwrap().push(Sexp::Atom(atom));
            }
            c if c.is_whitespace() => {}
            c => {
                let mut atom = c.to_string();
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || n == '(' || n == ')' {
                        break;
                    }
                    atom.push(n);
                    chars.next();
                }
                stack.last_mut().unwrap().push(Sexp::Atom(atom));
            }
        }
    }
    if stack.len() != 1 {
        return Err(SmtError::Protocol("unbalanced `(` in model".into()));
    }
    Ok(stack.pop().unwrap())
}

fn eval_real(e: &Sexp) -> Option<BigRational> {
    match e {
        Sexp::Atom(a) => {
            let (i, f) = a.split_once('.').unwrap_or((a, ""));
            if i.is_empty() || !i.chars().all(|c| c.is_ascii_digit()) || !f.chars().all(|c| c.is_ascii_digit()) {
                return None;
            }
            let num: BigInt = format!("{i}{f}").parse().ok()?;
            Some(BigRational::new(num, num_traits::pow(BigInt::from(10), f.len())))
        }
        Sexp::List(items) => {
            let Some(Sexp::Atom(op)) = items.first() else { return None };
            let args: Option<Vec<BigRational>> = items[1..].iter().map(eval_real).collect();
            let args = args?;
            match (op.as_str(), args.len()) {
                ("-", 1) => Some(-args[0].clone()),
                ("-", _) => Some(args[1..].iter().fold(args[0].clone(), |a, b| a - b)),
                ("+", _) => Some(args.iter().fold(BigRational::zero(), |a, b| a + b)),
                ("*", _) => Some(args.iter().fold(BigRational::one(), |a, b| a * b)),
                ("/", 2) if !args[1].is_zero() => Some(&args[0] / &args[1]),
                _ => None,
            }
        }
    }
}

/// Parses a `(get-model)` response. Values that are not rational terms
/// (algebraic numbers, for instance) are skipped.
pub fn parse_model(text: &str) -> Result<BTreeMap<String, BigRational>, SmtError> {
    let mut out = BTreeMap::new();
    let top = parse_sexps(text)?;
    let mut defs: Vec<&Sexp> = Vec::new();
    for e in &top {
        if let Sexp::List(items) = e {
            if matches!(items.first(), Some(Sexp::Atom(a)) if a == "define-fun") {
                defs.push(e);
            } else {
                defs.extend(items.iter().filter(|x| matches!(x, Sexp::List(_))));
                if matches!(items.first(), Some(Sexp::Atom(a)) if a == "model") {
                    defs.retain(|x| !matches!(x, Sexp::Atom(_)));
                }
            }
        }
    }
    for d in defs {
        let Sexp::List(items) = d else { continue };
        if items.len() == 5 {
            if let (Sexp::Atom(kw), Sexp::Atom(name)) = (&items[0], &items[1]) {
                if kw == "define-fun" {
                    if let Some(v) = eval_real(&items[4]) {
                        out.insert(name.clone(), v);
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn decide_threshold_exact(game: &Game, t: &BigRational, endpoint: &SolverEndpoint) -> Result<SolverVerdict, SmtError> {
    run_solver(endpoint, &emit_threshold_formula(game, t))
}

/// Team profile read from a model of the threshold formula. Omitted
/// variables mean a single action or no team influence; those states get the
/// uniform distribution.
pub fn profile_from_model(game: &Game, model: &BTreeMap<String, BigRational>) -> MemorylessProfile {
    let mut profile = MemorylessProfile::uniform(game);
    for p in 0..game.team_size() {
        for s in 0..game.num_states() {
            let k = game.available[s][p].len();
            let vals: Option<Vec<f64>> =
                (0..k).map(|a| model.get(&strategy_var(s, p, a)).map(|q| to_f64(q).max(0.0))).collect();
            if let Some(vals) = vals {
                let total: f64 = vals.iter().sum();
                if total > 0.0 {
                    profile.probs[p][s] = vals.into_iter().map(|x| x / total).collect();
                }
            }
        }
    }
    profile
}

/// Selector read from a model of a local query.
pub fn selector_from_model(local: &LocalGame, model: &BTreeMap<String, BigRational>) -> Option<ProductSelector> {
    local
        .team_sizes
        .iter()
        .enumerate()
        .map(|(p, &k)| {
            let v: Option<Vec<f64>> = (0..k).map(|a| model.get(&local_var(p, a)).map(|q| to_f64(q).max(0.0))).collect();
            let v = v?;
            let total: f64 = v.iter().sum();
            (total > 0.0).then(|| v.into_iter().map(|x| x / total).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BisectResult {
    pub lo: f64,
    pub hi: f64,
    /// Set when an unknown or timeout verdict stopped the search early.
    pub partial: bool,
    pub queries: usize,
    /// Model of the best satisfiable query.
    #[serde(skip)]
    pub best_model: Option<BTreeMap<String, BigRational>>,
}

/// Binary search for the value at the initial state with exact queries.
pub fn bisect_value(game: &Game, eps: f64, endpoint: &SolverEndpoint) -> Result<BisectResult, SmtError> {
    if !(eps > 0.0) {
        return Err(SmtError::Config("precision must be positive".into()));
    }
    let mut r = BisectResult { lo: 0.0, hi: 1.0, partial: false, queries: 0, best_model: None };
    while r.hi - r.lo > eps {
        let mid = (r.lo + r.hi) / 2.0;
        let t = decimal_of_f64(mid);
        let verdict = decide_threshold_exact(game, &t, endpoint)?;
        r.queries += 1;
        match verdict.status {
            SatStatus::Sat => {
                r.lo = mid;
                r.best_model = verdict.model;
            }
            SatStatus::Unsat => r.hi = mid,
            SatStatus::Unknown | SatStatus::Timeout => {
                r.partial = true;
                break;
            }
        }
    }
    Ok(r)
}

/// Exact local value by bisection above a known-achievable level `lo`.
/// Returns the best selector found from satisfiable models (if any).
pub fn bisect_local(
    local: &LocalGame,
    lo: f64,
    eps: f64,
    endpoint: &SolverEndpoint,
) -> Result<(f64, Option<ProductSelector>), SmtError> {
    let (mut lo, mut hi) = (lo, 1.0f64);
    let mut best = None;
    while hi - lo > eps {
        let mid = (lo + hi) / 2.0;
        let v = run_solver(endpoint, &emit_local_game_query(local, mid))?;
        match v.status {
            SatStatus::Sat => {
                lo = mid;
                if let Some(sel) = v.model.as_ref().and_then(|m| selector_from_model(local, m)) {
                    best = Some(sel);
                }
            }
            SatStatus::Unsat => hi = mid,
            _ => break,
        }
    }
    Ok((lo, best))
}

/// Locates an SMT solver: the environment first, then `z3` on `PATH`.
pub fn discover_solver() -> Option<SolverEndpoint> {
    if let Ok(Some(e)) = SolverEndpoint::from_env_or(None, None, None) {
        return Some(e);
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join("z3")).find(|p| p.is_file()).map(|p| {
        SolverEndpoint::new(p, None, Duration::from_secs(DEFAULT_TIMEOUT_SECS))
    })
}
