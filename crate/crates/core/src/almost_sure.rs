//! Almost-sure reachability: SAT encoding over winning set, ranks and
//! supports, certificate decoding and exact verification, and a brute-force
//! oracle over support assignments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::game::{Game, StateId};
use crate::sat::{self, bslt, rank_width, CnfInstance, Lit, SatBackend, SatError, SatOutcome};

/// Support per team player and state: sorted local action indices. Empty
/// outside the winning set and at targets.
pub type Supports = Vec<Vec<Vec<usize>>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankCertificate {
    pub winning: BTreeSet<StateId>,
    pub rank: BTreeMap<StateId, usize>,
    pub supports: Supports,
}

/// Name-based form of a certificate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateDocument {
    pub winning: Vec<String>,
    pub rank: BTreeMap<String, usize>,
    /// player → state → actions
    pub supports: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl RankCertificate {
    pub fn to_document(&self, game: &Game) -> CertificateDocument {
        let mut supports: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
        for (p, per_state) in self.supports.iter().enumerate() {
            for (s, acts) in per_state.iter().enumerate() {
                if acts.is_empty() {
                    continue;
                }
                supports
                    .entry(game.players[p].clone())
                    .or_default()
                    .insert(game.states[s].clone(), acts.iter().map(|&a| game.local_action_name(s, p, a).to_string()).collect());
            }
        }
        CertificateDocument {
            winning: self.winning.iter().map(|&s| game.states[s].clone()).collect(),
            rank: self.rank.iter().map(|(&s, &r)| (game.states[s].clone(), r)).collect(),
            supports,
        }
    }

    pub fn from_document(game: &Game, doc: &CertificateDocument) -> Result<Self, String> {
        let state = |name: &str| game.state_index(name).ok_or_else(|| format!("unknown state `{name}`"));
        let winning = doc.winning.iter().map(|n| state(n)).collect::<Result<BTreeSet<_>, _>>()?;
        let rank = doc.rank.iter().map(|(n, &r)| Ok((state(n)?, r))).collect::<Result<BTreeMap<_, _>, String>>()?;
        let mut supports = vec![vec![Vec::new(); game.num_states()]; game.team_size()];
        for (pname, per_state) in &doc.supports {
            let p = game
                .player_index(pname)
                .filter(|&p| p < game.team_size())
                .ok_or_else(|| format!("unknown team player `{pname}`"))?;
            for (sname, acts) in per_state {
                let s = state(sname)?;
                let mut idx = Vec::new();
                for a in acts {
                    let local = (0..game.available[s][p].len())
                        .find(|&i| game.local_action_name(s, p, i) == a)
                        .ok_or_else(|| format!("action `{a}` not available to {pname} at {sname}"))?;
                    idx.push(local);
                }
                idx.sort_unstable();
                idx.dedup();
                supports[p][s] = idx;
            }
        }
        Ok(RankCertificate { winning, rank, supports })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeOptions {
    /// One-hot ranks instead of binary rank bits.
    pub unary: bool,
}

pub fn win_var(s: StateId) -> String {
    format!("w[{s}]")
}

pub fn rank_bit_var(s: StateId, j: usize) -> String {
    format!("b[{s},{j}]")
}

pub fn rank_unary_var(s: StateId, k: usize) -> String {
    format!("r[{s},{k}]")
}

pub fn support_var(s: StateId, p: usize, a: usize) -> String {
    format!("u[{s},{p},{a}]")
}

fn cartesian(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &k in sizes {
        out = out.into_iter().flat_map(|prefix| (0..k).map(move |a| [prefix.clone(), vec![a]].concat())).collect();
    }
    out
}

struct Ranks {
    unary: bool,
    vars: Vec<Vec<Lit>>,
    lt: BTreeMap<(StateId, StateId), Lit>,
}

impl Ranks {
    /// Literal for `rank(t) < rank(s)`.
    fn less(&mut self, cnf: &mut CnfInstance, t: StateId, s: StateId) -> Lit {
        if let Some(&l) = self.lt.get(&(t, s)) {
            return l;
        }
        let name = format!("lt[{t},{s}]");
        let l = if self.unary {
            let l = cnf.fresh(name.clone());
            let mut options = vec![-l];
            for k in 1..self.vars[s].len() {
                let z = cnf.fresh(format!("{name}.at{k}"));
                cnf.add(vec![-z, self.vars[s][k]]);
                let mut lower = vec![-z];
                lower.extend(&self.vars[t][..k]);
                cnf.add(lower);
                options.push(z);
            }
            cnf.add(options);
            l
        } else {
            bslt(cnf, &self.vars[t].clone(), &self.vars[s].clone(), &name)
        };
        self.lt.insert((t, s), l);
        l
    }
}

/// CNF that is satisfiable iff the team wins almost surely from the initial
/// state.
pub fn encode(game: &Game, opts: EncodeOptions) -> CnfInstance {
    let mut cnf = CnfInstance::new();
    let n = game.num_states();
    let team = game.team_size();
    let w: Vec<Lit> = (0..n).map(|s| cnf.fresh(win_var(s))).collect();
    let rank_vars: Vec<Vec<Lit>> = if opts.unary {
        (0..n).map(|s| (0..=n).map(|k| cnf.fresh(rank_unary_var(s, k))).collect()).collect()
    } else {
        let width = rank_width(n);
        (0..n).map(|s| (0..width).map(|j| cnf.fresh(rank_bit_var(s, j))).collect()).collect()
    };
    let u: Vec<Vec<Vec<Lit>>> = (0..n)
        .map(|s| {
            (0..team)
                .map(|p| {
                    if game.is_target(s) {
                        Vec::new()
                    } else {
                        (0..game.available[s][p].len()).map(|a| cnf.fresh(support_var(s, p, a))).collect()
                    }
                })
                .collect()
        })
        .collect();

    cnf.add(vec![w[game.initial]]);
    for s in 0..n {
        if opts.unary {
            let mut some = vec![-w[s]];
            some.extend(&rank_vars[s]);
            cnf.add(some);
            for i in 0..rank_vars[s].len() {
                for j in i + 1..rank_vars[s].len() {
                    cnf.add(vec![-rank_vars[s][i], -rank_vars[s][j]]);
                }
            }
        }
        if game.is_target(s) {
            cnf.add(vec![w[s]]);
            if opts.unary {
                cnf.add(vec![rank_vars[s][0]]);
            } else {
                for &bit in &rank_vars[s] {
                    cnf.add(vec![-bit]);
                }
            }
        } else if opts.unary {
            cnf.add(vec![-rank_vars[s][0]]);
        }
    }

    let mut ranks = Ranks { unary: opts.unary, vars: rank_vars, lt: BTreeMap::new() };
    for s in 0..n {
        if game.is_target(s) {
            continue;
        }
        for p in 0..team {
            let mut c = vec![-w[s]];
            c.extend(&u[s][p]);
            cnf.add(c);
        }
        let joints = game.team_joint_count(s);
        let mut choose: Vec<Vec<Lit>> = vec![Vec::new(); game.opp_count(s)];
        for tj in 0..joints {
            let local = game.decode_team_joint(s, tj);
            let guard: Vec<Lit> = local.iter().enumerate().map(|(p, &a)| u[s][p][a]).collect();
            for (b, options) in choose.iter_mut().enumerate() {
                let dist = game.dist(s, tj, b);
                let mut progress = Vec::new();
                for t in dist.support() {
                    if t == s {
                        continue;
                    }
                    let mut c = vec![-w[s]];
                    c.extend(guard.iter().map(|&l| -l));
                    c.push(w[t]);
                    cnf.add(c);
                    progress.push(t);
                }
                if progress.is_empty() {
                    continue;
                }
                let y = cnf.fresh(format!("y[{s},{tj},{b}]"));
                for &g in &guard {
                    cnf.add(vec![-y, g]);
                }
                let mut reach = vec![-y];
                for t in progress {
                    reach.push(ranks.less(&mut cnf, t, s));
                }
                cnf.add(reach);
                options.push(y);
            }
        }
        for options in choose {
            let mut c = vec![-w[s]];
            c.extend(options);
            cnf.add(c);
        }
    }
    cnf
}

/// Reads a certificate from a model of [`encode`], restricted to what the
/// supports can reach from the initial state, with ranks renumbered densely.
pub fn decode(game: &Game, cnf: &CnfInstance, model: &[bool], opts: EncodeOptions) -> RankCertificate {
    let n = game.num_states();
    let team = game.team_size();
    let val = |name: String| cnf.var(&name).is_some_and(|v| model[v as usize]);
    let raw_rank = |s: StateId| -> usize {
        if opts.unary {
            (0..=n).find(|&k| val(rank_unary_var(s, k))).unwrap_or(0)
        } else {
            let width = rank_width(n);
            (0..width).fold(0, |acc, j| acc << 1 | usize::from(val(rank_bit_var(s, j))))
        }
    };
    let in_w: Vec<bool> = (0..n).map(|s| val(win_var(s))).collect();
    let mut supports: Supports = vec![vec![Vec::new(); n]; team];
    for s in (0..n).filter(|&s| in_w[s] && !game.is_target(s)) {
        for (p, per_state) in supports.iter_mut().enumerate() {
            per_state[s] = (0..game.available[s][p].len()).filter(|&a| val(support_var(s, p, a))).collect();
        }
    }
    // keep what is reachable under the supports
    let mut keep = BTreeSet::new();
    let mut stack = vec![game.initial];
    while let Some(s) = stack.pop() {
        if !keep.insert(s) || game.is_target(s) || !in_w[s] {
            continue;
        }
        let sizes: Vec<usize> = (0..team).map(|p| supports[p][s].len()).collect();
        for choice in cartesian(&sizes) {
            let local: Vec<usize> = choice.iter().enumerate().map(|(p, &i)| supports[p][s][i]).collect();
            let tj = game.encode_team_joint(s, &local);
            for b in 0..game.opp_count(s) {
                stack.extend(game.dist(s, tj, b).support());
            }
        }
    }
    for per_state in supports.iter_mut() {
        for (s, acts) in per_state.iter_mut().enumerate() {
            if !keep.contains(&s) {
                acts.clear();
            }
        }
    }
    let raw: BTreeMap<StateId, usize> = keep.iter().map(|&s| (s, raw_rank(s))).collect();
    let distinct: BTreeSet<usize> = raw.values().copied().collect();
    let offset = usize::from(!distinct.contains(&0));
    let rank = raw.iter().map(|(&s, &r)| (s, distinct.range(..r).count() + offset)).collect();
    RankCertificate { winning: keep, rank, supports }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Structure,
    Initial,
    Safety,
    Progress,
    RankConsistency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub state: Option<StateId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ViolationKind::Structure => "structure",
            ViolationKind::Initial => "initial",
            ViolationKind::Safety => "safety",
            ViolationKind::Progress => "progress",
            ViolationKind::RankConsistency => "rank-consistency",
        };
        match self.state {
            Some(s) => write!(f, "{kind} violated at state {s}: {}", self.detail),
            None => write!(f, "{kind} violated: {}", self.detail),
        }
    }
}

fn violation(kind: ViolationKind, state: Option<StateId>, detail: impl Into<String>) -> Violation {
    Violation { kind, state, detail: detail.into() }
}

/// Checks a certificate against the game with exact probabilities.
pub fn verify_certificate(game: &Game, cert: &RankCertificate) -> Result<(), Violation> {
    use ViolationKind::*;
    let n = game.num_states();
    let team = game.team_size();
    if cert.supports.len() != team || cert.supports.iter().any(|v| v.len() != n) {
        return Err(violation(Structure, None, "support table has the wrong shape"));
    }
    if let Some(&s) = cert.winning.iter().find(|&&s| s >= n) {
        return Err(violation(Structure, None, format!("state {s} out of range")));
    }
    if !cert.winning.contains(&game.initial) {
        return Err(violation(Initial, Some(game.initial), "initial state not in the winning set"));
    }
    for &s in &cert.winning {
        let Some(&r) = cert.rank.get(&s) else {
            return Err(violation(Structure, Some(s), "no rank"));
        };
        if (r == 0) != game.is_target(s) {
            return Err(violation(RankConsistency, Some(s), format!("rank {r} but target = {}", game.is_target(s))));
        }
        if game.is_target(s) {
            continue;
        }
        for p in 0..team {
            let sup = &cert.supports[p][s];
            if sup.is_empty() {
                return Err(violation(Structure, Some(s), format!("empty support for player {p}")));
            }
            if sup.iter().any(|&a| a >= game.available[s][p].len()) {
                return Err(violation(Structure, Some(s), format!("unavailable action for player {p}")));
            }
        }
    }
    for &s in cert.winning.iter().filter(|&&s| !game.is_target(s)) {
        let r = cert.rank[&s];
        let sizes: Vec<usize> = (0..team).map(|p| cert.supports[p][s].len()).collect();
        let joints: Vec<usize> = cartesian(&sizes)
            .into_iter()
            .map(|c| {
                let local: Vec<usize> = c.iter().enumerate().map(|(p, &i)| cert.supports[p][s][i]).collect();
                game.encode_team_joint(s, &local)
            })
            .collect();
        for b in 0..game.opp_count(s) {
            let mut progress = false;
            for &tj in &joints {
                for (t, prob) in game.dist(s, tj, b).entries() {
                    if prob.is_zero() {
                        continue;
                    }
                    if !cert.winning.contains(t) {
                        return Err(violation(
                            Safety,
                            Some(s),
                            format!("{} leads to {} outside the winning set", game.describe_joint(s, tj, b), game.states[*t]),
                        ));
                    }
                    if cert.rank[t] < r {
                        progress = true;
                    }
                }
            }
            if !progress {
                return Err(violation(
                    Progress,
                    Some(s),
                    format!("opponent action {} admits no move to a lower rank", game.local_action_name(s, game.opponent(), b)),
                ));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RankFailure {
    #[error("support of player {player} at state {state} is empty or uses an unavailable action")]
    InvalidSupport { player: usize, state: StateId },
    #[error("state {state} can move to {successor} outside the candidate set")]
    Safety { state: StateId, successor: StateId },
    #[error("state {state} never acquires a finite rank")]
    NoRank { state: StateId },
}

/// Successor sets of the support joint actions, one per opponent action.
fn support_successors(game: &Game, supports: &Supports, s: StateId) -> Vec<BTreeSet<StateId>> {
    let team = game.team_size();
    let sizes: Vec<usize> = (0..team).map(|p| supports[p][s].len()).collect();
    let mut out = vec![BTreeSet::new(); game.opp_count(s)];
    for c in cartesian(&sizes) {
        let local: Vec<usize> = c.iter().enumerate().map(|(p, &i)| supports[p][s][i]).collect();
        let tj = game.encode_team_joint(s, &local);
        for (b, set) in out.iter_mut().enumerate() {
            set.extend(game.dist(s, tj, b).support());
        }
    }
    out
}

/// Layered ranks inside `within` under fixed supports. Only the supports
/// matter, not the probabilities placed on them.
pub fn compute_ranks(game: &Game, supports: &Supports, within: &[bool]) -> Result<Vec<Option<usize>>, RankFailure> {
    let n = game.num_states();
    let team = game.team_size();
    let active: Vec<StateId> = (0..n).filter(|&s| within[s] && !game.is_target(s)).collect();
    for &s in &active {
        for p in 0..team {
            let sup = &supports[p][s];
            if sup.is_empty() || sup.iter().any(|&a| a >= game.available[s][p].len()) {
                return Err(RankFailure::InvalidSupport { player: p, state: s });
            }
        }
    }
    let succ: Vec<Vec<BTreeSet<StateId>>> =
        (0..n).map(|s| if active.contains(&s) { support_successors(game, supports, s) } else { Vec::new() }).collect();
    for &s in &active {
        for set in &succ[s] {
            if let Some(&t) = set.iter().find(|&&t| !within[t]) {
                return Err(RankFailure::Safety { state: s, successor: t });
            }
        }
    }
    let rank = rank_layers(game, &succ, within);
    if let Some(&s) = active.iter().find(|&&s| rank[s].is_none()) {
        return Err(RankFailure::NoRank { state: s });
    }
    Ok(rank)
}

/// Layer `k` holds the states that, whatever the opponent does, reach a
/// lower layer with positive probability.
fn rank_layers(game: &Game, succ: &[Vec<BTreeSet<StateId>>], within: &[bool]) -> Vec<Option<usize>> {
    let n = game.num_states();
    let mut rank: Vec<Option<usize>> = (0..n).map(|s| (within[s] && game.is_target(s)).then_some(0)).collect();
    for k in 1.. {
        let layer: Vec<StateId> = (0..n)
            .filter(|&s| within[s] && rank[s].is_none())
            .filter(|&s| succ[s].iter().all(|set| set.iter().any(|&t| rank[t].is_some())))
            .collect();
        if layer.is_empty() {
            break;
        }
        for s in layer {
            rank[s] = Some(k);
        }
    }
    rank
}

/// Limit on the number of support assignments the oracle enumerates.
pub const BRUTE_FORCE_GUARD: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0} support assignments exceed the brute-force limit")]
pub struct GuardExceeded(pub u128);

/// Enumerates support assignments; for each, shrinks the candidate winning
/// set until it is closed under the supports and fully ranked.
pub fn brute_force_almost_sure(game: &Game) -> Result<bool, GuardExceeded> {
    let n = game.num_states();
    let team = game.team_size();
    if game.is_target(game.initial) {
        return Ok(true);
    }
    // (state, player) slots whose support matters
    let slots: Vec<(StateId, usize)> = (0..n)
        .filter(|&s| !game.is_target(s) && game.team_influences(s))
        .flat_map(|s| (0..team).map(move |p| (s, p)))
        .collect();
    let radices: Vec<u128> = slots.iter().map(|&(s, p)| (1u128 << game.available[s][p].len()) - 1).collect();
    let total = radices.iter().try_fold(1u128, |acc, &r| acc.checked_mul(r)).unwrap_or(u128::MAX);
    if total > BRUTE_FORCE_GUARD {
        return Err(GuardExceeded(total));
    }
    let mut supports: Supports =
        (0..team).map(|p| (0..n).map(|s| (0..game.available[s][p].len()).collect()).collect()).collect();
    for mut code in 0..total {
        for (&(s, p), &r) in slots.iter().zip(&radices) {
            let mask = (code % r) as usize + 1;
            code /= r;
            supports[p][s] = (0..game.available[s][p].len()).filter(|a| mask >> a & 1 == 1).collect();
        }
        if wins_with(game, &supports) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn wins_with(game: &Game, supports: &Supports) -> bool {
    let n = game.num_states();
    let succ: Vec<Vec<BTreeSet<StateId>>> =
        (0..n).map(|s| if game.is_target(s) { Vec::new() } else { support_successors(game, supports, s) }).collect();
    let mut inside = vec![true; n];
    loop {
        // largest subset closed under the supports
        loop {
            let leaking: Vec<StateId> = (0..n)
                .filter(|&s| inside[s] && !game.is_target(s))
                .filter(|&s| succ[s].iter().any(|set| set.iter().any(|&t| !inside[t])))
                .collect();
            if leaking.is_empty() {
                break;
            }
            for s in leaking {
                inside[s] = false;
            }
        }
        let ranked: Vec<bool> = rank_layers(game, &succ, &inside).iter().map(Option::is_some).collect();
        if ranked == inside {
            return inside[game.initial];
        }
        inside = ranked;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlmostSureAnswer {
    Yes(RankCertificate),
    No,
}

#[derive(Debug, thiserror::Error)]
pub enum AlmostSureError {
    #[error("invalid game:\n{0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] SatError),
    #[error("decoded certificate fails verification ({0}); this is an encoder bug")]
    Certificate(Violation),
}

pub fn solve_almost_sure(
    game: &Game,
    backend: &SatBackend,
    opts: EncodeOptions,
) -> Result<AlmostSureAnswer, AlmostSureError> {
    let report = game.validate();
    if !report.ok {
        return Err(AlmostSureError::Invalid(report.to_string()));
    }
    let cnf = encode(game, opts);
    match sat::solve(&cnf, backend)? {
        SatOutcome::Unsat => Ok(AlmostSureAnswer::No),
        SatOutcome::Sat(model) => {
            let cert = decode(game, &cnf, &model, opts);
            verify_certificate(game, &cert).map_err(AlmostSureError::Certificate)?;
            Ok(AlmostSureAnswer::Yes(cert))
        }
    }
}
