//! Concurrent game structures with a team and a single opponent.
//!
//! Players are stored team first, in declaration order, with the opponent
//! last. Transitions are keyed by a flat joint index: the team's joint action
//! is a mixed-radix number over the *local* indices into each player's
//! available list (first player most significant), and the opponent's local
//! index is the least significant digit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::rational::{format_rational, to_f64};

pub type StateId = usize;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("unknown player `{0}`")]
    UnknownPlayer(String),
    #[error("no transition for state `{state}` and joint action {joint}")]
    MissingTransition { state: String, joint: String },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid game: {0}")]
    Invalid(String),
}

/// A probability distribution over states with exact weights.
#[derive(Clone)]
pub struct Distribution {
    entries: Vec<(StateId, BigRational)>,
    floats: Vec<f64>,
}

impl Distribution {
    /// Builds a distribution, merging duplicate states and dropping zero
    /// weights. Does not check that the weights sum to one.
    pub fn new(entries: impl IntoIterator<Item = (StateId, BigRational)>) -> Self {
        let mut merged: BTreeMap<StateId, BigRational> = BTreeMap::new();
        for (s, p) in entries {
            *merged.entry(s).or_insert_with(BigRational::zero) += p;
        }
        let entries: Vec<_> = merged.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        Self::from_sorted(entries)
    }

    /// Keeps entries as given (duplicates and zeros included) so that
    /// validation can report them.
    pub fn raw(entries: Vec<(StateId, BigRational)>) -> Self {
        Self::from_sorted(entries)
    }

    fn from_sorted(entries: Vec<(StateId, BigRational)>) -> Self {
        let floats = entries.iter().map(|(_, p)| to_f64(p)).collect();
        Distribution { entries, floats }
    }

    pub fn point(state: StateId) -> Self {
        Self::from_sorted(vec![(state, BigRational::one())])
    }

    pub fn entries(&self) -> &[(StateId, BigRational)] {
        &self.entries
    }

    pub fn floats(&self) -> &[f64] {
        &self.floats
    }

    /// `(state, float probability)` pairs.
    pub fn iter_f64(&self) -> impl Iterator<Item = (StateId, f64)> + '_ {
        self.entries.iter().zip(&self.floats).map(|((s, _), p)| (*s, *p))
    }

    /// States with positive probability.
    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.entries.iter().filter(|(_, p)| p.is_positive()).map(|(s, _)| *s)
    }

    pub fn prob(&self, state: StateId) -> BigRational {
        self.entries
            .iter()
            .filter(|(s, _)| *s == state)
            .fold(BigRational::zero(), |acc, (_, p)| acc + p)
    }

    pub fn sum(&self) -> BigRational {
        self.entries.iter().fold(BigRational::zero(), |acc, (_, p)| acc + p)
    }

    /// Expected value of `v` under this distribution.
    pub fn expect(&self, v: &[f64]) -> f64 {
        self.iter_f64().map(|(s, p)| p * v[s]).sum()
    }

    pub fn is_point(&self, state: StateId) -> bool {
        self.entries.len() == 1 && self.entries[0].0 == state && self.entries[0].1.is_one()
    }
}

impl PartialEq for Distribution {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for Distribution {}

impl fmt::Debug for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.entries.iter().map(|(s, p)| (s, format_rational(p))))
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn push(&mut self, severity: Severity, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue { severity, location: location.into(), message: message.into() });
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "ok");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            let tag = match issue.severity {
                Severity::Warning => "warning",
                Severity::Error => "error",
            };
            write!(f, "{tag}: {}: {}", issue.location, issue.message)?;
        }
        Ok(())
    }
}

/// A finite concurrent game structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Game {
    /// Player names, team first, opponent last.
    pub players: Vec<String>,
    pub states: Vec<String>,
    /// Action alphabet per player.
    pub actions: Vec<Vec<String>>,
    /// `available[s][p]`: sorted indices into `actions[p]`.
    pub available: Vec<Vec<Vec<usize>>>,
    /// `transitions[s][joint]`, see [`Game::joint_index`].
    pub transitions: Vec<Vec<Option<Distribution>>>,
    pub targets: Vec<bool>,
    pub initial: StateId,
    pub labels: Vec<BTreeSet<String>>,
}

/// Per team player, per state, a probability vector over the player's
/// available actions (in the order of `Game::available`).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MemorylessProfile {
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl MemorylessProfile {
    /// Uniform distribution over available actions everywhere.
    pub fn uniform(game: &Game) -> Self {
        let probs = (0..game.team_size())
            .map(|p| {
                (0..game.num_states())
                    .map(|s| {
                        let n = game.available[s][p].len();
                        vec![1.0 / n as f64; n]
                    })
                    .collect()
            })
            .collect();
        MemorylessProfile { probs }
    }

    /// The same action (by local index) everywhere; out-of-range indices clamp.
    pub fn pure(game: &Game, pick: impl Fn(usize, StateId) -> usize) -> Self {
        let probs = (0..game.team_size())
            .map(|p| {
                (0..game.num_states())
                    .map(|s| {
                        let n = game.available[s][p].len();
                        let mut v = vec![0.0; n];
                        v[pick(p, s).min(n - 1)] = 1.0;
                        v
                    })
                    .collect()
            })
            .collect();
        MemorylessProfile { probs }
    }

    pub fn check(&self, game: &Game) -> Result<(), GameError> {
        if self.probs.len() != game.team_size() {
            return Err(GameError::InvalidProfile(format!(
                "expected {} team players, got {}",
                game.team_size(),
                self.probs.len()
            )));
        }
        for (p, per_state) in self.probs.iter().enumerate() {
            if per_state.len() != game.num_states() {
                return Err(GameError::InvalidProfile(format!("player {p}: wrong number of states")));
            }
            for (s, v) in per_state.iter().enumerate() {
                if v.len() != game.available[s][p].len() {
                    return Err(GameError::InvalidProfile(format!(
                        "player `{}` at `{}`: {} entries for {} available actions",
                        game.players[p],
                        game.states[s],
                        v.len(),
                        game.available[s][p].len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite() || *x < -1e-12) {
                    return Err(GameError::InvalidProfile(format!(
                        "player `{}` at `{}`: negative or non-finite entry",
                        game.players[p], game.states[s]
                    )));
                }
                let sum: f64 = v.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(GameError::InvalidProfile(format!(
                        "player `{}` at `{}`: entries sum to {sum}",
                        game.players[p], game.states[s]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Denominator used when snapping float profile entries to rationals.
const PROFILE_DENOM_BITS: u32 = 32;

/// Converts a float probability vector into exact rationals with a common
/// power-of-two denominator, summing to exactly one.
pub fn rationalize_vector(v: &[f64]) -> Vec<BigRational> {
    let denom = BigInt::from(1u64 << PROFILE_DENOM_BITS);
    let scale = (1u64 << PROFILE_DENOM_BITS) as f64;
    let mut nums: Vec<i64> = v.iter().map(|x| (x.max(0.0) * scale).floor() as i64).collect();
    let total: i64 = nums.iter().sum();
    let target = 1i64 << PROFILE_DENOM_BITS;
    // Hand the rounding remainder to the largest entry.
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bx), (i, x)| if *x > bx { (i, *x) } else { (bi, bx) });
    nums[imax] += target - total;
    nums.into_iter().map(|n| BigRational::new(BigInt::from(n), denom.clone())).collect()
}

impl Game {
    /// Assembles a game without validating it.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        players: Vec<String>,
        states: Vec<String>,
        actions: Vec<Vec<String>>,
        available: Vec<Vec<Vec<usize>>>,
        transitions: Vec<Vec<Option<Distribution>>>,
        targets: Vec<bool>,
        initial: StateId,
        labels: Vec<BTreeSet<String>>,
    ) -> Self {
        Game { players, states, actions, available, transitions, targets, initial, labels }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn team_size(&self) -> usize {
        self.players.len() - 1
    }

    pub fn opponent(&self) -> usize {
        self.players.len() - 1
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name)
    }

    pub fn player_index(&self, name: &str) -> Option<usize> {
        self.players.iter().position(|p| p == name)
    }

    pub fn is_target(&self, s: StateId) -> bool {
        self.targets[s]
    }

    pub fn target_states(&self) -> Vec<StateId> {
        (0..self.num_states()).filter(|&s| self.targets[s]).collect()
    }

    pub fn team_joint_count(&self, s: StateId) -> usize {
        self.available[s][..self.team_size()].iter().map(Vec::len).product()
    }

    pub fn opp_count(&self, s: StateId) -> usize {
        self.available[s][self.opponent()].len()
    }

    pub fn joint_count(&self, s: StateId) -> usize {
        self.team_joint_count(s) * self.opp_count(s)
    }

    /// Number of transitions, counted as `Σ_s ∏_p |Av_p(s)|`.
    pub fn transition_count(&self) -> usize {
        (0..self.num_states()).map(|s| self.joint_count(s)).sum()
    }

    /// Local action indices of every team player for a team joint index.
    pub fn decode_team_joint(&self, s: StateId, mut j: usize) -> Vec<usize> {
        let n = self.team_size();
        let mut out = vec![0; n];
        for p in (0..n).rev() {
            let k = self.available[s][p].len();
            out[p] = j % k;
            j /= k;
        }
        out
    }

    pub fn encode_team_joint(&self, s: StateId, local: &[usize]) -> usize {
        local
            .iter()
            .enumerate()
            .fold(0, |acc, (p, &a)| acc * self.available[s][p].len() + a)
    }

    pub fn joint_index(&self, s: StateId, team_joint: usize, opp: usize) -> usize {
        team_joint * self.opp_count(s) + opp
    }

    /// Transition lookup; a missing entry is a structural error.
    pub fn try_dist(&self, s: StateId, team_joint: usize, opp: usize) -> Result<&Distribution, GameError> {
        let idx = self.joint_index(s, team_joint, opp);
        self.transitions[s].get(idx).and_then(Option::as_ref).ok_or_else(|| {
            GameError::MissingTransition { state: self.states[s].clone(), joint: self.describe_joint(s, team_joint, opp) }
        })
    }

    /// Transition lookup on a validated game.
    pub fn dist(&self, s: StateId, team_joint: usize, opp: usize) -> &Distribution {
        match self.try_dist(s, team_joint, opp) {
            Ok(d) => d,
            Err(e) => panic!("{e}"),
        }
    }

    /// Human-readable joint action, e.g. `(L,R,L)`.
    pub fn describe_joint(&self, s: StateId, team_joint: usize, opp: usize) -> String {
        let mut names: Vec<&str> = self
            .decode_team_joint(s, team_joint)
            .iter()
            .enumerate()
            .map(|(p, &a)| self.local_action_name(s, p, a))
            .collect();
        names.push(self.local_action_name(s, self.opponent(), opp));
        format!("({})", names.join(","))
    }

    pub fn local_action_name(&self, s: StateId, p: usize, local: usize) -> &str {
        self.available[s]
            .get(p)
            .and_then(|av| av.get(local))
            .and_then(|&a| self.actions[p].get(a))
            .map(String::as_str)
            .unwrap_or("?")
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// States satisfying an atomic proposition.
    pub fn label_set(&self, atom: &str) -> Vec<bool> {
        self.labels.iter().map(|l| l.contains(atom)).collect()
    }

    /// Whether the team's choice can change the successor distribution at `s`.
    pub fn team_influences(&self, s: StateId) -> bool {
        let rows = self.team_joint_count(s);
        (0..self.opp_count(s)).any(|b| (1..rows).any(|tj| self.dist(s, tj, b) != self.dist(s, 0, b)))
    }
}

/// Checks every structural invariant of a game.
pub fn validate(game: &Game) -> ValidationReport {
    let mut r = ValidationReport::default();
    let n = game.states.len();
    if game.players.is_empty() {
        r.push(Severity::Error, "players", "no players (an opponent is required)");
    }
    if n == 0 {
        r.push(Severity::Error, "states", "no states");
    }
    if game.actions.len() != game.players.len() {
        r.push(Severity::Error, "actions", "action alphabets do not match the player list");
    }
    let mut seen = BTreeSet::new();
    for s in &game.states {
        if !seen.insert(s) {
            r.push(Severity::Error, format!("states.{s}"), "duplicate state");
        }
    }
    let mut seen = BTreeSet::new();
    for p in &game.players {
        if !seen.insert(p) {
            r.push(Severity::Error, format!("players.{p}"), "duplicate player");
        }
    }
    for (p, alphabet) in game.actions.iter().enumerate() {
        let name = game.players.get(p).map(String::as_str).unwrap_or("?");
        if alphabet.is_empty() {
            r.push(Severity::Error, format!("actions.{name}"), "empty action alphabet");
        }
        let mut seen = BTreeSet::new();
        for a in alphabet {
            if !seen.insert(a) {
                r.push(Severity::Error, format!("actions.{name}"), format!("duplicate action `{a}`"));
            }
        }
    }
    if game.initial >= n && n > 0 {
        r.push(Severity::Error, "initial", "initial state out of range");
    }
    if game.targets.len() != n {
        r.push(Severity::Error, "targets", "target vector does not match the state list");
    }
    if game.labels.len() != n {
        r.push(Severity::Error, "labels", "label vector does not match the state list");
    }
    if game.available.len() != n || game.transitions.len() != n {
        r.push(Severity::Error, "available", "availability or transition table does not match the state list");
    }
    if !r.issues.is_empty() {
        r.ok = false;
        return r;
    }

    let mut shape_ok = vec![true; n];
    for s in 0..n {
        let sname = &game.states[s];
        if game.available[s].len() != game.players.len() {
            r.push(Severity::Error, format!("available.{sname}"), "availability does not list every player");
            shape_ok[s] = false;
            continue;
        }
        for (p, av) in game.available[s].iter().enumerate() {
            let pname = &game.players[p];
            if av.is_empty() {
                r.push(Severity::Error, format!("available.{sname}.{pname}"), "empty available action set");
                shape_ok[s] = false;
            }
            if av.iter().any(|&a| a >= game.actions[p].len()) {
                r.push(Severity::Error, format!("available.{sname}.{pname}"), "unknown action");
                shape_ok[s] = false;
            }
            if av.windows(2).any(|w| w[0] >= w[1]) {
                r.push(Severity::Error, format!("available.{sname}.{pname}"), "available actions not sorted or duplicated");
                shape_ok[s] = false;
            }
        }
        if !shape_ok[s] {
            continue;
        }
        if game.transitions[s].len() != game.joint_count(s) {
            r.push(
                Severity::Error,
                format!("transitions.{sname}"),
                format!("expected {} joint actions, found {}", game.joint_count(s), game.transitions[s].len()),
            );
            shape_ok[s] = false;
        }
    }

    for s in 0..n {
        if !shape_ok[s] {
            continue;
        }
        let sname = &game.states[s];
        for tj in 0..game.team_joint_count(s) {
            for b in 0..game.opp_count(s) {
                let loc = format!("transitions.{sname}{}", game.describe_joint(s, tj, b));
                let Some(d) = &game.transitions[s][game.joint_index(s, tj, b)] else {
                    r.push(Severity::Error, loc, "missing transition");
                    continue;
                };
                let mut states_seen = BTreeSet::new();
                let mut bad = false;
                for (t, p) in d.entries() {
                    if *t >= n {
                        r.push(Severity::Error, loc.clone(), format!("successor index {t} out of range"));
                        bad = true;
                    }
                    if p.is_negative() {
                        r.push(Severity::Error, loc.clone(), format!("negative probability {}", format_rational(p)));
                        bad = true;
                    }
                    if !states_seen.insert(*t) {
                        r.push(Severity::Error, loc.clone(), format!("duplicate successor {t}"));
                        bad = true;
                    }
                }
                let sum = d.sum();
                if !sum.is_one() {
                    r.push(
                        Severity::Error,
                        loc.clone(),
                        format!("distribution sum ≠ 1 (sum is {})", sum.to_f64().unwrap_or(f64::NAN)),
                    );
                    bad = true;
                }
                if !bad && game.targets[s] && !d.prob(s).is_one() {
                    r.push(Severity::Error, loc, "target not absorbing");
                }
            }
        }
    }
    let ok = r.errors().next().is_none();
    r.ok = ok;
    r
}

fn require_valid(game: &Game) -> Result<(), GameError> {
    let report = validate(game);
    if report.ok {
        Ok(())
    } else {
        Err(GameError::Invalid(report.to_string()))
    }
}

fn tuple_name(parts: &[&str]) -> String {
    format!("({})", parts.join(","))
}

/// Regroups players: `team` becomes the new team (in the given order) and
/// every other player is folded into a single opponent whose actions are
/// tuples. With nobody left over, the opponent is a dummy with one action.
fn regroup_indices(game: &Game, team: &[usize], team_name: Option<String>) -> Game {
    let others: Vec<usize> = (0..game.num_players()).filter(|p| !team.contains(p)).collect();
    let n = game.num_states();

    // New player list: either each team member, or one merged player.
    let merged_team = team_name.is_some();
    let groups: Vec<Vec<usize>> = if merged_team {
        if team.is_empty() { vec![] } else { vec![team.to_vec()] }
    } else {
        team.iter().map(|&p| vec![p]).collect()
    };
    let mut all_groups = groups.clone();
    all_groups.push(others.clone());

    let mut players: Vec<String> = Vec::new();
    if let Some(name) = &team_name {
        if !team.is_empty() {
            players.push(name.clone());
        }
    } else {
        players.extend(team.iter().map(|&p| game.players[p].clone()));
    }
    players.push(if others.len() == 1 {
        game.players[others[0]].clone()
    } else if others.is_empty() {
        "nobody".to_string()
    } else {
        others.iter().map(|&p| game.players[p].as_str()).collect::<Vec<_>>().join("+")
    });

    // Alphabet per group: sorted set of used global action tuples.
    let mut alphabets: Vec<Vec<Vec<usize>>> = Vec::new();
    for g in &all_groups {
        let mut used: BTreeSet<Vec<usize>> = BTreeSet::new();
        for s in 0..n {
            for_each_tuple(g.iter().map(|&p| game.available[s][p].as_slice()).collect(), |t| {
                used.insert(t.to_vec());
            });
        }
        alphabets.push(used.into_iter().collect());
    }
    let actions: Vec<Vec<String>> = all_groups
        .iter()
        .zip(&alphabets)
        .map(|(g, alpha)| {
            alpha
                .iter()
                .map(|t| {
                    if g.len() == 1 {
                        game.actions[g[0]][t[0]].clone()
                    } else {
                        let names: Vec<&str> = g.iter().zip(t).map(|(&p, &a)| game.actions[p][a].as_str()).collect();
                        tuple_name(&names)
                    }
                })
                .collect()
        })
        .collect();

    let mut available = Vec::with_capacity(n);
    let mut transitions = Vec::with_capacity(n);
    for s in 0..n {
        // Per group: list of global tuples available at s, in sorted order.
        let group_tuples: Vec<Vec<Vec<usize>>> = all_groups
            .iter()
            .map(|g| {
                let mut ts = Vec::new();
                for_each_tuple(g.iter().map(|&p| game.available[s][p].as_slice()).collect(), |t| ts.push(t.to_vec()));
                ts
            })
            .collect();
        let av: Vec<Vec<usize>> = group_tuples
            .iter()
            .zip(&alphabets)
            .map(|(ts, alpha)| ts.iter().map(|t| alpha.binary_search(t).expect("tuple in alphabet")).collect())
            .collect();
        // Global -> local index per original player at s.
        let local_of = |p: usize, a: usize| game.available[s][p].binary_search(&a).expect("available action");
        let mut trans = Vec::new();
        let mut original_local = vec![0usize; game.num_players()];
        let sizes: Vec<usize> = group_tuples.iter().map(Vec::len).collect();
        for_each_index(&sizes, |choice| {
            for (gi, g) in all_groups.iter().enumerate() {
                let t = &group_tuples[gi][choice[gi]];
                for (&p, &a) in g.iter().zip(t) {
                    original_local[p] = local_of(p, a);
                }
            }
            let team_local = &original_local[..game.team_size()];
            let tj = game.encode_team_joint(s, team_local);
            let b = original_local[game.opponent()];
            trans.push(game.transitions[s][game.joint_index(s, tj, b)].clone());
        });
        available.push(av);
        transitions.push(trans);
    }

    Game {
        players,
        states: game.states.clone(),
        actions,
        available,
        transitions,
        targets: game.targets.clone(),
        initial: game.initial,
        labels: game.labels.clone(),
    }
}

/// Calls `f` with every tuple of the cartesian product, lexicographic order.
fn for_each_tuple(lists: Vec<&[usize]>, mut f: impl FnMut(&[usize])) {
    let sizes: Vec<usize> = lists.iter().map(|l| l.len()).collect();
    let mut tuple = vec![0; lists.len()];
    for_each_index(&sizes, |idx| {
        for (i, &k) in idx.iter().enumerate() {
            tuple[i] = lists[i][k];
        }
        f(&tuple);
    });
}

/// Mixed-radix enumeration, last position fastest.
pub fn for_each_index(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let mut idx = vec![0; sizes.len()];
    loop {
        f(&idx);
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < sizes[i] {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// Merges the team into a single player choosing joint actions. The identity
/// for teams of at most one player.
pub fn merge_team(game: &Game) -> Result<Game, GameError> {
    require_valid(game)?;
    if game.team_size() <= 1 {
        return Ok(game.clone());
    }
    let team: Vec<usize> = (0..game.team_size()).collect();
    let name = game.players[..game.team_size()].join("+");
    Ok(regroup_indices(game, &team, Some(name)))
}

/// Re-partitions the players: `coalition` becomes the team (one player each,
/// in the structure's player order) and everyone else becomes the opponent.
pub fn regroup(game: &Game, coalition: &[String]) -> Result<Game, GameError> {
    require_valid(game)?;
    let mut idx = Vec::new();
    for name in coalition {
        let p = game.player_index(name).ok_or_else(|| GameError::UnknownPlayer(name.clone()))?;
        if !idx.contains(&p) {
            idx.push(p);
        }
    }
    idx.sort_unstable();
    Ok(regroup_indices(game, &idx, None))
}

/// Every state outside `keep` self-loops under all joint actions.
pub fn restrict_absorbing(game: &Game, keep: &[StateId]) -> Result<Game, GameError> {
    let n = game.num_states();
    if let Some(&bad) = keep.iter().find(|&&s| s >= n) {
        return Err(GameError::StateOutOfRange(bad));
    }
    let mut kept = vec![false; n];
    for &s in keep {
        kept[s] = true;
    }
    Ok(restrict_absorbing_mask(game, &kept))
}

pub(crate) fn restrict_absorbing_mask(game: &Game, kept: &[bool]) -> Game {
    let mut out = game.clone();
    for (s, row) in out.transitions.iter_mut().enumerate() {
        if !kept[s] {
            for d in row.iter_mut() {
                *d = Some(Distribution::point(s));
            }
        }
    }
    out
}

/// Restricts by state names.
pub fn restrict_absorbing_names(game: &Game, keep: &[&str]) -> Result<Game, GameError> {
    let ids = keep
        .iter()
        .map(|name| game.state_index(name).ok_or_else(|| GameError::UnknownState(name.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    restrict_absorbing(game, &ids)
}

/// The opponent-only game obtained by fixing the team profile, with exact
/// mixture probabilities. Float entries are snapped to rationals with a
/// power-of-two denominator first.
pub fn induced_mdp(game: &Game, profile: &MemorylessProfile) -> Result<Game, GameError> {
    profile.check(game)?;
    let exact: Vec<Vec<Vec<BigRational>>> = profile
        .probs
        .iter()
        .map(|per_state| per_state.iter().map(|v| rationalize_vector(v)).collect())
        .collect();
    induced_mdp_exact(game, &exact)
}

/// As [`induced_mdp`] with an exact rational profile `[player][state][local]`.
pub fn induced_mdp_exact(game: &Game, profile: &[Vec<Vec<BigRational>>]) -> Result<Game, GameError> {
    if profile.len() != game.team_size() {
        return Err(GameError::InvalidProfile("wrong number of team players".into()));
    }
    for (p, per_state) in profile.iter().enumerate() {
        if per_state.len() != game.num_states() {
            return Err(GameError::InvalidProfile(format!("player {p}: wrong number of states")));
        }
        for (s, v) in per_state.iter().enumerate() {
            if v.len() != game.available[s][p].len() {
                return Err(GameError::InvalidProfile(format!(
                    "player `{}` at `{}`: references unavailable actions",
                    game.players[p], game.states[s]
                )));
            }
            if v.iter().any(Signed::is_negative) || !v.iter().fold(BigRational::zero(), |a, x| a + x).is_one() {
                return Err(GameError::InvalidProfile(format!(
                    "player `{}` at `{}`: not a distribution",
                    game.players[p], game.states[s]
                )));
            }
        }
    }
    let opp = game.opponent();
    let n = game.num_states();
    let mut transitions = Vec::with_capacity(n);
    for s in 0..n {
        let mut row = Vec::with_capacity(game.opp_count(s));
        for b in 0..game.opp_count(s) {
            let mut acc: BTreeMap<StateId, BigRational> = BTreeMap::new();
            for tj in 0..game.team_joint_count(s) {
                let local = game.decode_team_joint(s, tj);
                let mut weight = BigRational::one();
                for (p, &a) in local.iter().enumerate() {
                    weight *= &profile[p][s][a];
                    if weight.is_zero() {
                        break;
                    }
                }
                if weight.is_zero() {
                    continue;
                }
                for (t, pr) in game.try_dist(s, tj, b)?.entries() {
                    *acc.entry(*t).or_insert_with(BigRational::zero) += &weight * pr;
                }
            }
            row.push(Some(Distribution::new(acc)));
        }
        transitions.push(row);
    }
    Ok(Game {
        players: vec![game.players[opp].clone()],
        states: game.states.clone(),
        actions: vec![game.actions[opp].clone()],
        available: game.available.iter().map(|av| vec![av[opp].clone()]).collect(),
        transitions,
        targets: game.targets.clone(),
        initial: game.initial,
        labels: game.labels.clone(),
    })
}
