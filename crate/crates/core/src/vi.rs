//! Value iteration for the max-min reachability value, profile extraction,
//! certification and the threshold semi-decision.

use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::game::{induced_mdp, merge_team, Game, GameError, MemorylessProfile, StateId};
use crate::one_shot::{
    best_response_value, build_local_game, solve_independent, solve_shared, LocalGame, OneShotError, ProductSelector,
    SearchConfig, Selector,
};
use crate::rational::to_f64;
use crate::smt::{self, SatStatus, SmtError, SolverEndpoint};

/// Per-state values in `[0, 1]`.
pub type Valuation = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Independent,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Opt,
    Smt,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct StopConfig {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig { tolerance: 1e-4, max_iters: 10_000 }
    }
}

impl StopConfig {
    /// Tighter settings used for certification.
    pub fn certification() -> Self {
        StopConfig { tolerance: 1e-10, max_iters: 1_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct ViConfig {
    pub mode: Mode,
    pub backend: Backend,
    pub stop: StopConfig,
    pub search: SearchConfig,
    /// Worker threads for a sweep; `None` means available parallelism.
    pub jobs: Option<usize>,
    pub solver: Option<SolverEndpoint>,
    /// Keep every iterate in [`VIResult::trace`].
    pub keep_trace: bool,
    /// Exact-query precision for the smt and hybrid backends.
    pub smt_precision: f64,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig {
            mode: Mode::Independent,
            backend: Backend::Opt,
            stop: StopConfig::default(),
            search: SearchConfig::default(),
            jobs: None,
            solver: None,
            keep_trace: false,
            smt_precision: 1e-4,
        }
    }
}

impl ViConfig {
    pub fn new(mode: Mode) -> Self {
        ViConfig { mode, ..Default::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VIResult {
    pub values: Valuation,
    pub iterations: usize,
    /// Max change per sweep.
    pub history: Vec<f64>,
    /// Profile from the last sweep, for [`VIResult::game`].
    pub profile: MemorylessProfile,
    pub mode: Mode,
    pub backend: Backend,
    pub converged: bool,
    /// The game that was iterated on: the input in independent mode, the
    /// merged game in shared mode.
    #[serde(skip)]
    pub game: Game,
    /// `v_0, v_1, …` when requested.
    #[serde(skip)]
    pub trace: Vec<Valuation>,
}

#[derive(Debug, thiserror::Error)]
pub enum ViError {
    #[error("invalid game:\n{0}")]
    Invalid(String),
    #[error("stop tolerance must be positive and finite")]
    Tolerance,
    #[error("the smt backend needs an external solver")]
    NoSolver,
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Local(#[from] OneShotError),
    #[error(transparent)]
    Smt(#[from] SmtError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Seed for one local solve.
pub fn state_seed(seed: u64, iteration: usize, state: StateId) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ iteration as u64) ^ state as u64)
}

struct Step {
    value: f64,
    selector: Selector,
}

fn solve_state(
    game: &Game,
    s: StateId,
    v: &[f64],
    cfg: &ViConfig,
    backend: Backend,
    iteration: usize,
    incumbent: Option<&Selector>,
) -> Result<Step, ViError> {
    let local = build_local_game(game, s, v)?;
    let step = solve_fresh(&local, s, cfg, backend, iteration)?;
    let Some(old) = incumbent else { return Ok(step) };
    let old_value = match old {
        Selector::Product(x) => best_response_value(&local, x)?,
        Selector::Joint(w) => crate::lp::guaranteed(&local.payoff, local.rows(), local.opp, w),
    };
    // Switching on ties can trade a selector that makes progress for one
    // that only stays put, which certifies to nothing.
    if old_value >= step.value - KEEP_SLACK {
        Ok(Step { value: step.value.max(old_value), selector: old.clone() })
    } else {
        Ok(step)
    }
}

/// Improvement below which a state keeps its previous selector.
pub const KEEP_SLACK: f64 = 1e-12;

fn solve_fresh(local: &LocalGame, s: StateId, cfg: &ViConfig, backend: Backend, iteration: usize) -> Result<Step, ViError> {
    if cfg.mode == Mode::Shared {
        let sol = solve_shared(local)?;
        return Ok(Step { value: sol.value, selector: sol.selector });
    }
    let search = SearchConfig { seed: state_seed(cfg.search.seed, iteration, s), ..cfg.search };
    match backend {
        Backend::Opt => {
            let sol = solve_independent(local, &search)?;
            Ok(Step { value: sol.value, selector: sol.selector })
        }
        Backend::Smt => {
            let endpoint = cfg.solver.as_ref().ok_or(ViError::NoSolver)?;
            let (_, sel) = smt::bisect_local(local, 0.0, cfg.smt_precision, endpoint)?;
            exact_step(local, sel)
        }
        Backend::Hybrid => {
            let sol = solve_independent(local, &search)?;
            let Selector::Product(start) = sol.selector else { unreachable!("independent selector") };
            let endpoint = cfg.solver.as_ref().ok_or(ViError::NoSolver)?;
            let probe = sol.value + cfg.smt_precision;
            if probe > 1.0 || local.spread() == 0.0 {
                return Ok(Step { value: sol.value, selector: Selector::Product(start) });
            }
            let verdict = smt::run_solver(endpoint, &smt::emit_local_game_query(local, probe))?;
            if verdict.status != SatStatus::Sat {
                return Ok(Step { value: sol.value, selector: Selector::Product(start) });
            }
            let first = verdict.model.as_ref().and_then(|m| smt::selector_from_model(local, m));
            let (_, better) = smt::bisect_local(local, probe, cfg.smt_precision, endpoint)?;
            let mut best = exact_step(local, Some(start))?;
            for cand in [first, better].into_iter().flatten() {
                let step = exact_step(local, Some(cand))?;
                if step.value > best.value {
                    best = step;
                }
            }
            Ok(best)
        }
    }
}

/// Reported value is always what the selector guarantees.
fn exact_step(local: &LocalGame, sel: Option<ProductSelector>) -> Result<Step, ViError> {
    let sel = sel.unwrap_or_else(|| crate::one_shot::uniform_selector(&local.team_sizes));
    let value = best_response_value(local, &sel)?;
    Ok(Step { value, selector: Selector::Product(sel) })
}

fn build_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, ViError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j.max(1));
    }
    b.build().map_err(|e| ViError::Pool(e.to_string()))
}

/// Runs `v_{n+1} = Pre(v_n)` from the target indicator.
pub fn value_iteration(game: &Game, cfg: &ViConfig) -> Result<VIResult, ViError> {
    let report = game.validate();
    if !report.ok {
        return Err(ViError::Invalid(report.to_string()));
    }
    if !(cfg.stop.tolerance > 0.0) || !cfg.stop.tolerance.is_finite() {
        return Err(ViError::Tolerance);
    }
    let mut backend = cfg.backend;
    if cfg.mode == Mode::Independent && cfg.solver.is_none() {
        match backend {
            Backend::Smt => return Err(ViError::NoSolver),
            Backend::Hybrid => {
                log::warn!("no SMT solver configured; the hybrid backend falls back to local search");
                backend = Backend::Opt;
            }
            Backend::Opt => {}
        }
    }
    let g = match cfg.mode {
        Mode::Independent => game.clone(),
        Mode::Shared => merge_team(game)?,
    };
    let n = g.num_states();
    let mut v: Valuation = (0..n).map(|s| if g.is_target(s) { 1.0 } else { 0.0 }).collect();
    let mut selectors: Vec<Option<Selector>> = vec![None; n];
    let mut history = Vec::new();
    let mut trace = Vec::new();
    if cfg.keep_trace {
        trace.push(v.clone());
    }
    let pool = build_pool(cfg.jobs)?;
    let mut converged = false;
    let active: Vec<StateId> = (0..n).filter(|&s| !g.is_target(s)).collect();
    for iteration in 0..cfg.stop.max_iters {
        let steps: Vec<Result<Step, ViError>> =
            pool.install(|| active.par_iter().map(|&s| solve_state(&g, s, &v, cfg, backend, iteration, selectors[s].as_ref())).collect());
        let mut next = v.clone();
        let mut delta = 0.0f64;
        for (&s, step) in active.iter().zip(steps) {
            let step = step?;
            let value = step.value.clamp(0.0, 1.0);
            delta = delta.max((value - v[s]).abs());
            next[s] = value;
            selectors[s] = Some(step.selector);
        }
        v = next;
        history.push(delta);
        if cfg.keep_trace {
            trace.push(v.clone());
        }
        if delta < cfg.stop.tolerance {
            converged = true;
            break;
        }
    }
    let profile = extract_profile(&g, &selectors);
    Ok(VIResult {
        values: v,
        iterations: history.len(),
        history,
        profile,
        mode: cfg.mode,
        backend,
        converged,
        game: g,
        trace,
    })
}

fn extract_profile(game: &Game, selectors: &[Option<Selector>]) -> MemorylessProfile {
    let mut profile = MemorylessProfile::uniform(game);
    for (s, sel) in selectors.iter().enumerate() {
        match sel {
            Some(Selector::Product(sel)) => {
                for (p, x) in sel.iter().enumerate() {
                    profile.probs[p][s] = x.clone();
                }
            }
            Some(Selector::Joint(w)) => {
                if game.team_size() == 1 {
                    profile.probs[0][s] = w.clone();
                }
            }
            None => {}
        }
    }
    profile
}

/// Min-reachability iteration from zero on the Markov decision process the
/// profile induces. Each iterate is the exact-in-rationals minimum
/// probability of reaching a target within `n` steps, evaluated in floats.
pub fn certify(game: &Game, profile: &MemorylessProfile, stop: &StopConfig) -> Result<Valuation, ViError> {
    let mdp = induced_mdp(game, profile)?;
    Ok(min_reachability(&mdp, stop))
}

/// Opponent-minimised reachability iteration on a game without team choice.
pub fn min_reachability(mdp: &Game, stop: &StopConfig) -> Valuation {
    let n = mdp.num_states();
    let mut u: Valuation = (0..n).map(|s| if mdp.is_target(s) { 1.0 } else { 0.0 }).collect();
    for _ in 0..stop.max_iters {
        let mut delta = 0.0f64;
        let next: Valuation = (0..n)
            .map(|s| {
                if mdp.is_target(s) {
                    return 1.0;
                }
                let rows = mdp.team_joint_count(s);
                (0..mdp.opp_count(s))
                    .map(|b| (0..rows).map(|tj| mdp.dist(s, tj, b).expect(&u)).fold(f64::INFINITY, f64::min))
                    .fold(f64::INFINITY, f64::min)
                    .clamp(0.0, 1.0)
            })
            .collect();
        for s in 0..n {
            delta = delta.max(next[s] - u[s]);
        }
        u = next;
        if delta < stop.tolerance {
            break;
        }
    }
    u
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum ThresholdDecision {
    Yes { certified: f64, profile: MemorylessProfile },
    Unknown { certified: f64 },
}

impl ThresholdDecision {
    pub fn certified(&self) -> f64 {
        match self {
            ThresholdDecision::Yes { certified, .. } | ThresholdDecision::Unknown { certified } => *certified,
        }
    }

    pub fn is_yes(&self) -> bool {
        matches!(self, ThresholdDecision::Yes { .. })
    }
}

/// Semi-decision: `Yes` iff the certified bound at the initial state
/// strictly exceeds `t`. The profile refers to [`VIResult::game`].
pub fn decide_threshold_vi(game: &Game, t: &BigRational, cfg: &ViConfig) -> Result<ThresholdDecision, ViError> {
    let t = to_f64(t);
    if game.is_target(game.initial) {
        let report = game.validate();
        if !report.ok {
            return Err(ViError::Invalid(report.to_string()));
        }
        let profile = MemorylessProfile::uniform(game);
        return Ok(if t < 1.0 {
            ThresholdDecision::Yes { certified: 1.0, profile }
        } else {
            ThresholdDecision::Unknown { certified: 1.0 }
        });
    }
    let r = value_iteration(game, cfg)?;
    let certified = certify(&r.game, &r.profile, &StopConfig::certification())?[r.game.initial];
    Ok(if certified > t {
        ThresholdDecision::Yes { certified, profile: r.profile }
    } else {
        ThresholdDecision::Unknown { certified }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::builtin;
    use crate::rational::ratio;

    fn run(game: &Game, mode: Mode) -> VIResult {
        let cfg = ViConfig { keep_trace: true, jobs: Some(2), ..ViConfig::new(mode) };
        value_iteration(game, &cfg).unwrap()
    }

    #[test]
    fn door_independent() {
        let g = builtin("door").unwrap();
        let r = run(&g, Mode::Independent);
        let s0 = g.initial;
        assert!((r.trace[1][s0] - 0.25).abs() < 1e-9);
        assert!((r.values[s0] - 1.0 / 3.0).abs() < 3e-3, "{}", r.values[s0]);
        assert!(r.converged);
        assert_eq!(r.history.len(), r.iterations);
        let c = certify(&g, &r.profile, &StopConfig::certification()).unwrap();
        assert!(c[s0] >= 0.32 && c[s0] <= r.values[s0] + 1e-4);
    }

    #[test]
    fn door_shared() {
        let g = builtin("door").unwrap();
        let r = run(&g, Mode::Shared);
        let s0 = r.game.initial;
        assert!((r.trace[1][s0] - 0.5).abs() < 1e-12);
        assert!(r.values[s0] >= 0.99);
        for w in r.trace.windows(2) {
            for s in 0..w[0].len() {
                assert!(w[1][s] >= w[0][s] - 1e-12);
            }
        }
    }

    #[test]
    fn certify_uniform_door() {
        let g = builtin("door").unwrap();
        let c = certify(&g, &MemorylessProfile::uniform(&g), &StopConfig::certification()).unwrap();
        assert!((c[g.initial] - 1.0 / 3.0).abs() < 1e-9);
        let fail = MemorylessProfile::pure(&g, |p, _| p);
        let c = certify(&g, &fail, &StopConfig::certification()).unwrap();
        assert_eq!(c[g.initial], 0.0);
    }

    #[test]
    fn threshold_semidecision() {
        let g = builtin("door").unwrap();
        let cfg = ViConfig::default();
        assert!(decide_threshold_vi(&g, &ratio(3, 10), &cfg).unwrap().is_yes());
        assert!(!decide_threshold_vi(&g, &ratio(34, 100), &cfg).unwrap().is_yes());
        let mut h = g.clone();
        h.initial = h.state_index("s_goal").unwrap();
        assert!(decide_threshold_vi(&h, &ratio(99, 100), &cfg).unwrap().is_yes());
    }

    #[test]
    fn memory_game_quarter() {
        let g = builtin("memory").unwrap();
        let r = run(&g, Mode::Independent);
        let s = g.state_index("S").unwrap();
        assert!((r.values[s] - 0.25).abs() < 2e-3, "{}", r.values[s]);
    }

    #[test]
    fn seeds_are_deterministic() {
        let g = builtin("door").unwrap();
        let a = run(&g, Mode::Independent);
        let b = value_iteration(&g, &ViConfig { jobs: Some(1), ..ViConfig::default() }).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(state_seed(1, 0, 0), state_seed(1, 0, 1));
        assert_ne!(state_seed(1, 0, 0), state_seed(1, 1, 0));
    }

    #[test]
    fn smt_without_solver_is_an_error() {
        let g = builtin("door").unwrap();
        let cfg = ViConfig { backend: Backend::Smt, ..ViConfig::default() };
        assert!(matches!(value_iteration(&g, &cfg), Err(ViError::NoSolver)));
        let cfg = ViConfig { backend: Backend::Hybrid, ..ViConfig::default() };
        assert_eq!(value_iteration(&g, &cfg).unwrap().backend, Backend::Opt);
    }
}
