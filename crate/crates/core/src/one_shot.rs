//! One-shot local games at a single state and their solvers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Gamma};
use serde::{Deserialize, Serialize};

use crate::game::{for_each_index, Game, GameError, StateId};
use crate::lp;

/// Payoff tensor of the one-step game at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGame {
    /// `|Av_p(s)|` for each team player.
    pub team_sizes: Vec<usize>,
    /// `|Av_O(s)|`.
    pub opp: usize,
    /// Row-major `[team_joint * opp + b]`.
    pub payoff: Vec<f64>,
}

impl LocalGame {
    pub fn new(team_sizes: Vec<usize>, opp: usize, payoff: Vec<f64>) -> Self {
        let rows: usize = team_sizes.iter().product();
        assert_eq!(payoff.len(), rows * opp, "payoff tensor shape");
        LocalGame { team_sizes, opp, payoff }
    }

    pub fn rows(&self) -> usize {
        self.team_sizes.iter().product()
    }

    pub fn entry(&self, team_joint: usize, b: usize) -> f64 {
        self.payoff[team_joint * self.opp + b]
    }

    pub fn spread(&self) -> f64 {
        let min = self.payoff.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.payoff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max - min
    }
}

/// One probability vector per team player.
pub type ProductSelector = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Selector {
    Product(ProductSelector),
    Joint(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Exact,
    LocalSearch,
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub value: f64,
    pub selector: Selector,
    pub status: SolveStatus,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum OneShotError {
    #[error("selector shape does not match the local game")]
    Shape,
    #[error("payoff tensor contains NaN")]
    NaN,
    #[error("restart count must be at least 1")]
    NoRestarts,
    #[error("brute-force guard exceeded: {0}")]
    Guard(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Local search settings for the independent case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// One uniform start plus `restarts - 1` Dirichlet(1) starts.
    pub restarts: usize,
    /// Ascent step cap per start.
    pub max_steps: usize,
    /// A temperature phase ends once the smoothed objective moves less than this.
    pub stagnation_tol: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { restarts: 16, max_steps: 500, stagnation_tol: 1e-9, seed: 0 }
    }
}

/// `V(ā, b) = Σ_t δ(s, ā, b)(t) · v(t)`.
pub fn build_local_game(game: &Game, s: StateId, v: &[f64]) -> Result<LocalGame, GameError> {
    if s >= game.num_states() {
        return Err(GameError::StateOutOfRange(s));
    }
    let team_sizes: Vec<usize> = (0..game.team_size()).map(|p| game.available[s][p].len()).collect();
    let opp = game.opp_count(s);
    let rows = game.team_joint_count(s);
    let mut payoff = Vec::with_capacity(rows * opp);
    for tj in 0..rows {
        for b in 0..opp {
            payoff.push(game.try_dist(s, tj, b)?.expect(v));
        }
    }
    Ok(LocalGame { team_sizes, opp, payoff })
}

/// Weight of every team joint action under a product selector.
pub fn joint_weights(sizes: &[usize], sel: &[Vec<f64>]) -> Vec<f64> {
    let mut w = vec![1.0];
    for (p, &k) in sizes.iter().enumerate() {
        let mut next = Vec::with_capacity(w.len() * k);
        for &x in &w {
            for a in 0..k {
                next.push(x * sel[p][a]);
            }
        }
        w = next;
    }
    w
}

fn check_shape(local: &LocalGame, sel: &[Vec<f64>]) -> Result<(), OneShotError> {
    if sel.len() != local.team_sizes.len() || sel.iter().zip(&local.team_sizes).any(|(v, &k)| v.len() != k) {
        return Err(OneShotError::Shape);
    }
    Ok(())
}

/// Expected payoff per opponent action under joint weights `w`.
fn column_values(local: &LocalGame, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; local.opp];
    for (tj, &x) in w.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let row = &local.payoff[tj * local.opp..(tj + 1) * local.opp];
        for (o, &p) in out.iter_mut().zip(row) {
            *o += x * p;
        }
    }
    out
}

/// Minimum and its lowest index.
fn argmin(values: &[f64]) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (i, &v) in values.iter().enumerate() {
        if v < best.0 {
            best = (v, i);
        }
    }
    best
}

/// Value the team guarantees with `sel`: the minimum over pure opponent
/// actions of the expected payoff.
pub fn best_response_value(local: &LocalGame, sel: &[Vec<f64>]) -> Result<f64, OneShotError> {
    Ok(best_response(local, sel)?.0)
}

/// As [`best_response_value`], also returning the minimising opponent action
/// (lowest index on ties).
pub fn best_response(local: &LocalGame, sel: &[Vec<f64>]) -> Result<(f64, usize), OneShotError> {
    check_shape(local, sel)?;
    Ok(argmin(&column_values(local, &joint_weights(&local.team_sizes, sel))))
}

/// Value of a joint (correlated) team distribution.
pub fn joint_value(local: &LocalGame, w: &[f64]) -> f64 {
    argmin(&column_values(local, w)).0
}

fn check_nan(local: &LocalGame) -> Result<(), OneShotError> {
    if local.payoff.iter().any(|x| x.is_nan()) {
        Err(OneShotError::NaN)
    } else {
        Ok(())
    }
}

/// Exact solution when the team randomises jointly: a matrix game over team
/// joint actions.
pub fn solve_shared(local: &LocalGame) -> Result<LocalSolution, OneShotError> {
    check_nan(local)?;
    let (_, x) = lp::maximin(&local.payoff, local.rows(), local.opp);
    let value = joint_value(local, &x);
    Ok(LocalSolution { value, selector: Selector::Joint(x), status: SolveStatus::Exact })
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    let mut x: Vec<f64> = y.iter().map(|&yi| (yi - theta).max(0.0)).collect();
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        for v in &mut x {
            *v /= s;
        }
    }
    x
}

/// Soft-min `-τ log Σ_b exp(-E_b/τ)` and the soft-min weights.
fn soft_min(values: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    let ex: Vec<f64> = values.iter().map(|&e| (-(e - m) / tau).exp()).collect();
    let z: f64 = ex.iter().sum();
    (m - tau * z.ln(), ex.into_iter().map(|e| e / z).collect())
}

/// Gradient of `Σ_b c_b E_b(ξ̄)` with respect to every player's vector.
fn gradient(local: &LocalGame, sel: &[Vec<f64>], c: &[f64]) -> Vec<Vec<f64>> {
    let n = local.team_sizes.len();
    let mut g: Vec<Vec<f64>> = local.team_sizes.iter().map(|&k| vec![0.0; k]).collect();
    let mut tj = 0;
    for_each_index(&local.team_sizes, |idx| {
        let row = &local.payoff[tj * local.opp..(tj + 1) * local.opp];
        let r: f64 = row.iter().zip(c).map(|(v, w)| v * w).sum();
        tj += 1;
        if r == 0.0 {
            return;
        }
        for p in 0..n {
            let mut prod = r;
            for q in 0..n {
                if q != p {
                    prod *= sel[q][idx[q]];
                }
            }
            g[p][idx[p]] += prod;
        }
    });
    g
}

fn smoothed(local: &LocalGame, sel: &[Vec<f64>], tau: f64) -> (f64, Vec<f64>) {
    soft_min(&column_values(local, &joint_weights(&local.team_sizes, sel)), tau)
}

const TAUS: [f64; 7] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

/// One start of annealed soft-min projected ascent; returns the best
/// selector seen under the exact objective.
fn ascend(local: &LocalGame, start: ProductSelector, cfg: &SearchConfig) -> (f64, ProductSelector) {
    let mut x = start;
    let mut best_val = best_response_value(local, &x).expect("shape");
    let mut best = x.clone();
    let per_phase = (cfg.max_steps / TAUS.len()).max(1);
    let mut eta = 1.0;
    for &tau in &TAUS {
        let (mut f, mut w) = smoothed(local, &x, tau);
        for _ in 0..per_phase {
            let g = gradient(local, &x, &w);
            let mut accepted = None;
            let mut step = eta;
            while step > 1e-12 {
                let cand: ProductSelector = x
                    .iter()
                    .zip(&g)
                    .map(|(xp, gp)| project_simplex(&xp.iter().zip(gp).map(|(a, b)| a + step * b).collect::<Vec<_>>()))
                    .collect();
                let (fc, wc) = smoothed(local, &cand, tau);
                if fc > f {
                    accepted = Some((cand, fc, wc));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, fc, wc)) = accepted else { break };
            eta = (step * 2.0).min(1e3);
            let gain = fc - f;
            x = cand;
            f = fc;
            w = wc;
            let v = best_response_value(local, &x).expect("shape");
            if v > best_val {
                best_val = v;
                best = x.clone();
            }
            if gain < cfg.stagnation_tol {
                break;
            }
        }
    }
    polish(local, best, best_val)
}

/// Block-coordinate improvement: each player in turn plays an exact LP best
/// response against the others fixed.
fn polish(local: &LocalGame, mut x: ProductSelector, mut val: f64) -> (f64, ProductSelector) {
    let n = local.team_sizes.len();
    for _ in 0..50 {
        let mut improved = false;
        for p in 0..n {
            let k = local.team_sizes[p];
            let mut m = vec![0.0; k * local.opp];
            let mut tj = 0;
            for_each_index(&local.team_sizes, |idx| {
                let mut w = 1.0;
                for q in 0..n {
                    if q != p {
                        w *= x[q][idx[q]];
                    }
                }
                if w != 0.0 {
                    for b in 0..local.opp {
                        m[idx[p] * local.opp + b] += w * local.payoff[tj * local.opp + b];
                    }
                }
                tj += 1;
            });
            let (_, xp) = lp::maximin(&m, k, local.opp);
            let mut cand = x.clone();
            cand[p] = xp;
            let v = best_response_value(local, &cand).expect("shape");
            if v > val + 1e-13 {
                val = v;
                x = cand;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    (val, x)
}

fn dirichlet_start(sizes: &[usize], rng: &mut ChaCha8Rng) -> ProductSelector {
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    sizes
        .iter()
        .map(|&k| {
            let raw: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
            let s: f64 = raw.iter().sum();
            if s > 0.0 {
                raw.into_iter().map(|x| x / s).collect()
            } else {
                vec![1.0 / k as f64; k]
            }
        })
        .collect()
}

pub fn uniform_selector(sizes: &[usize]) -> ProductSelector {
    sizes.iter().map(|&k| vec![1.0 / k as f64; k]).collect()
}

/// Multi-start local search over the product of simplices. The returned
/// value is always the exact guarantee of the returned selector.
pub fn solve_independent(local: &LocalGame, cfg: &SearchConfig) -> Result<LocalSolution, OneShotError> {
    if cfg.restarts == 0 {
        return Err(OneShotError::NoRestarts);
    }
    check_nan(local)?;
    let uniform = uniform_selector(&local.team_sizes);
    if local.spread() == 0.0 || local.rows() == 1 {
        let value = best_response_value(local, &uniform)?;
        return Ok(LocalSolution { value, selector: Selector::Product(uniform), status: SolveStatus::LocalSearch });
    }
    if local.team_sizes.len() == 1 {
        // One player: the product simplex is the joint simplex.
        let (_, x) = lp::maximin(&local.payoff, local.rows(), local.opp);
        let sel = vec![x];
        let value = best_response_value(local, &sel)?;
        return Ok(LocalSolution { value, selector: Selector::Product(sel), status: SolveStatus::LocalSearch });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, ProductSelector)> = None;
    for r in 0..cfg.restarts {
        let start = if r == 0 { uniform.clone() } else { dirichlet_start(&local.team_sizes, &mut rng) };
        let (v, x) = ascend(local, start, cfg);
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, x));
        }
    }
    let (_, sel) = best.expect("at least one restart");
    let value = best_response_value(local, &sel)?;
    Ok(LocalSolution { value, selector: Selector::Product(sel), status: SolveStatus::LocalSearch })
}

/// Limit on `∏ |Av_p|` for the brute-force oracle.
pub const BRUTE_FORCE_MAX_JOINT: usize = 64;
/// Limit on the number of grid points for the brute-force oracle.
pub const BRUTE_FORCE_MAX_POINTS: u128 = 10_000_000;

fn binomial(n: u128, k: u128) -> u128 {
    let mut r = 1u128;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// All points of the simplex of dimension `k` with coordinates in
/// multiples of `1/res`.
fn simplex_grid(k: usize, res: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; k];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, res: usize, out: &mut Vec<Vec<f64>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.iter().map(|&c| c as f64 / res as f64).collect());
            return;
        }
        for c in 0..=left {
            cur[i] = c;
            rec(i + 1, left - c, cur, res, out);
        }
    }
    rec(0, res, &mut cur, res, &mut out);
    out
}

/// Exhaustive grid search over product selectors (test oracle).
pub fn brute_force_independent(local: &LocalGame, resolution: usize) -> Result<f64, OneShotError> {
    Ok(brute_force_selector(local, resolution)?.0)
}

/// As [`brute_force_independent`], also returning the best grid selector.
pub fn brute_force_selector(local: &LocalGame, resolution: usize) -> Result<(f64, ProductSelector), OneShotError> {
    if resolution == 0 {
        return Err(OneShotError::Guard("resolution must be positive".into()));
    }
    if local.rows() > BRUTE_FORCE_MAX_JOINT {
        return Err(OneShotError::Guard(format!("{} joint actions > {BRUTE_FORCE_MAX_JOINT}", local.rows())));
    }
    let points: u128 = local
        .team_sizes
        .iter()
        .map(|&k| binomial((resolution + k - 1) as u128, (k - 1) as u128))
        .product();
    if points > BRUTE_FORCE_MAX_POINTS {
        return Err(OneShotError::Guard(format!("{points} grid points > {BRUTE_FORCE_MAX_POINTS}")));
    }
    if local.spread() == 0.0 {
        return Ok((local.payoff[0], uniform_selector(&local.team_sizes)));
    }
    let grids: Vec<Vec<Vec<f64>>> = local.team_sizes.iter().map(|&k| simplex_grid(k, resolution)).collect();
    let sizes: Vec<usize> = grids.iter().map(Vec::len).collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut sel: ProductSelector = local.team_sizes.iter().map(|&k| vec![0.0; k]).collect();
    for_each_index(&sizes, |idx| {
        for (p, &i) in idx.iter().enumerate() {
            sel[p].clone_from(&grids[p][i]);
        }
        let v = best_response_value(local, &sel).expect("shape");
        if v > best.0 {
            best = (v, sel.clone());
        }
    });
    Ok(best)
}

/// Bound on how far the grid optimum can lie below the true supremum.
pub fn grid_slack(local: &LocalGame, resolution: usize) -> f64 {
    let dim: usize = local.team_sizes.iter().map(|k| k - 1).sum();
    local.spread() * dim as f64 / resolution as f64
}
