//! Benchmark families and the small named example games.
//!
//! Every generator is a pure function of its parameters.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::game::{merge_team, Distribution, Game, StateId};
use crate::rational::ratio;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum BenchError {
    #[error("unknown builtin `{0}` (expected door, memory, door-merged)")]
    UnknownBuiltin(String),
    #[error("invalid parameters: {0}")]
    Params(String),
}

fn params(msg: impl Into<String>) -> BenchError {
    BenchError::Params(msg.into())
}

/// Helper that collects transitions by joint action names.
struct Builder {
    players: Vec<String>,
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    available: Vec<Vec<Vec<usize>>>,
    transitions: Vec<Vec<Option<Distribution>>>,
    targets: Vec<bool>,
    labels: Vec<BTreeSet<String>>,
}

impl Builder {
    fn new(players: &[&str], actions: Vec<Vec<String>>, states: Vec<String>) -> Self {
        let n = states.len();
        let full: Vec<Vec<usize>> = actions.iter().map(|a| (0..a.len()).collect()).collect();
        let mut b = Builder {
            players: players.iter().map(|s| s.to_string()).collect(),
            states,
            actions,
            available: vec![full; n],
            transitions: Vec::new(),
            targets: vec![false; n],
            labels: vec![BTreeSet::new(); n],
        };
        b.reset_transitions();
        b
    }

    fn reset_transitions(&mut self) {
        self.transitions = self
            .available
            .iter()
            .map(|av| vec![None; av.iter().map(Vec::len).product()])
            .collect();
    }

    fn restrict(&mut self, s: StateId, p: usize, local: Vec<usize>) {
        self.available[s][p] = local;
    }

    /// Fills state `s` by calling `f` with global action indices (team
    /// players first, opponent last).
    fn fill(&mut self, s: StateId, mut f: impl FnMut(&[usize]) -> Distribution) {
        let sizes: Vec<usize> = self.available[s].iter().map(Vec::len).collect();
        let mut joint = vec![0; sizes.len()];
        let mut k = 0;
        crate::game::for_each_index(&sizes, |idx| {
            for (p, &i) in idx.iter().enumerate() {
                joint[p] = self.available[s][p][i];
            }
            self.transitions[s][k] = Some(f(&joint));
            k += 1;
        });
    }

    fn absorbing(&mut self, s: StateId) {
        self.fill(s, |_| Distribution::point(s));
    }

    fn finish(self, initial: StateId) -> Game {
        Game::from_parts(
            self.players,
            self.states,
            self.actions,
            self.available,
            self.transitions,
            self.targets,
            initial,
            self.labels,
        )
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// The fixed example games: `door`, `memory` and `door-merged`.
pub fn builtin(name: &str) -> Result<Game, BenchError> {
    match name {
        "door" => Ok(door()),
        "memory" => Ok(memory()),
        "door-merged" => Ok(merge_team(&door()).expect("door is valid")),
        other => Err(BenchError::UnknownBuiltin(other.to_string())),
    }
}

pub const BUILTINS: [&str; 3] = ["door", "memory", "door-merged"];

fn door() -> Game {
    let lr = names(&["L", "R"]);
    let mut b = Builder::new(&["1", "2", "env"], vec![lr.clone(), lr.clone(), lr], names(&["s0", "s_goal", "s_fail"]));
    let (s0, goal, fail) = (0, 1, 2);
    b.fill(s0, |a| {
        if a[0] != a[1] {
            Distribution::point(fail)
        } else if a[0] == a[2] {
            Distribution::point(goal)
        } else {
            Distribution::point(s0)
        }
    });
    b.absorbing(goal);
    b.absorbing(fail);
    b.targets[goal] = true;
    b.labels[goal].insert("goal".into());
    b.labels[fail].insert("fail".into());
    b.finish(s0)
}

fn memory() -> Game {
    let mut b = Builder::new(
        &["P1", "P2", "O"],
        vec![names(&["a", "b", "wait"]), names(&["a", "b"]), names(&["a", "b"])],
        names(&["S", "S_a", "S_b", "top", "bot"]),
    );
    let (s, sa, sb, top, bot) = (0, 1, 2, 3, 4);
    b.fill(s, |a| {
        if a[0] == 2 {
            Distribution::point(if a[2] == 0 { sa } else { sb })
        } else if a[0] == a[2] && a[1] == a[2] {
            Distribution::point(top)
        } else {
            Distribution::point(bot)
        }
    });
    b.fill(sa, |_| Distribution::point(s));
    b.fill(sb, |_| Distribution::point(s));
    b.absorbing(top);
    b.absorbing(bot);
    b.targets[top] = true;
    b.labels[top].insert("goal".into());
    b.labels[bot].insert("fail".into());
    b.finish(s)
}

/// A directed graph on nodes `0..nodes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Digraph {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Digraph {
    /// Closed out-neighbourhood, sorted.
    pub fn closed_neighbourhood(&self, u: usize) -> Vec<usize> {
        let mut out: BTreeSet<usize> = self.edges.iter().filter(|(a, _)| *a == u).map(|(_, b)| *b).collect();
        out.insert(u);
        out.into_iter().collect()
    }

    /// Undirected cycle: each node links to both neighbours.
    pub fn cycle(n: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in [(u + 1) % n, (u + n - 1) % n] {
                if v != u && !edges.contains(&(u, v)) {
                    edges.push((u, v));
                }
            }
        }
        Digraph { nodes: n, edges }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v))).collect();
        Digraph { nodes: n, edges }
    }
}

/// A pursuit scenario: a graph plus start positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PursuitScenario {
    pub graph: Digraph,
    pub team: Vec<usize>,
    pub opponent: usize,
}

const PURSUIT_FIXTURES: [&str; 6] = [
    include_str!("../fixtures/pursuit1.json"),
    include_str!("../fixtures/pursuit2.json"),
    include_str!("../fixtures/pursuit3.json"),
    include_str!("../fixtures/pursuit4.json"),
    include_str!("../fixtures/pursuit5.json"),
    include_str!("../fixtures/pursuit6.json"),
];

/// Pursuit scenarios 1 to 6, transcribed from the benchmark figures.
pub fn pursuit_scenario(index: usize) -> Result<PursuitScenario, BenchError> {
    let text = PURSUIT_FIXTURES
        .get(index.wrapping_sub(1))
        .ok_or_else(|| params(format!("pursuit scenario {index} does not exist (1..=6)")))?;
    serde_json::from_str(text).map_err(|e| params(format!("fixture: {e}")))
}

fn pursuit_state_name(pos: &[usize]) -> String {
    let (team, opp) = pos.split_at(pos.len() - 1);
    let team: Vec<String> = team.iter().map(usize::to_string).collect();
    format!("({};{})", team.join(","), opp[0])
}

/// Pursuit-evasion with rendezvous. States are position vectors, the opponent
/// last; capture is an absorbing loss and takes precedence over the absorbing
/// rendezvous target.
pub fn gen_pursuit(graph: &Digraph, team_start: &[usize], opp_start: usize) -> Result<Game, BenchError> {
    let v = graph.nodes;
    if v == 0 {
        return Err(params("empty graph"));
    }
    let k = team_start.len();
    if k == 0 {
        return Err(params("team must have at least one member"));
    }
    if graph.edges.iter().any(|&(a, b)| a >= v || b >= v) || team_start.iter().chain([&opp_start]).any(|&u| u >= v) {
        return Err(params("node out of range"));
    }
    let mut player_names: Vec<String> = (1..=k).map(|i| format!("t{i}")).collect();
    player_names.push("opp".into());
    let players: Vec<&str> = player_names.iter().map(String::as_str).collect();
    let node_names: Vec<String> = (0..v).map(|u| u.to_string()).collect();

    let positions: Vec<Vec<usize>> = {
        let mut all = Vec::new();
        crate::game::for_each_index(&vec![v; k + 1], |p| all.push(p.to_vec()));
        all
    };
    let index_of = |pos: &[usize]| pos.iter().fold(0, |acc, &x| acc * v + x);
    let states = positions.iter().map(|p| pursuit_state_name(p)).collect();
    let mut b = Builder::new(&players, vec![node_names; k + 1], states);
    let hoods: Vec<Vec<usize>> = (0..v).map(|u| graph.closed_neighbourhood(u)).collect();
    for (s, pos) in positions.iter().enumerate() {
        for (p, &u) in pos.iter().enumerate() {
            b.restrict(s, p, hoods[u].clone());
        }
    }
    b.reset_transitions();
    for (s, pos) in positions.iter().enumerate() {
        let opp = pos[k];
        let captured = pos[..k].contains(&opp);
        let rendezvous = pos[..k].iter().all(|&l| l == pos[0]) && pos[0] != opp;
        if captured {
            b.labels[s].insert("capture".into());
            b.absorbing(s);
        } else if rendezvous {
            b.labels[s].insert("goal".into());
            b.targets[s] = true;
            b.absorbing(s);
        } else {
            b.fill(s, |a| Distribution::point(index_of(a)));
        }
    }
    let mut start = team_start.to_vec();
    start.push(opp_start);
    Ok(b.finish(index_of(&start)))
}

/// A grid cell `(x, y)`: column `x` from the left, row `y` from the bottom.
pub type Cell = (usize, usize);

/// Which robot configurations count as reaching the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RobotGoal {
    /// Robot `i` stands on cell `i` of the list.
    Configuration(Vec<Cell>),
    /// The first robot stands on the cell.
    FirstAt(Cell),
    /// Some robot stands on the cell.
    AnyAt(Cell),
}

impl RobotGoal {
    fn holds(&self, pos: &[Cell]) -> bool {
        match self {
            RobotGoal::Configuration(cells) => cells.as_slice() == pos,
            RobotGoal::FirstAt(c) => pos[0] == *c,
            RobotGoal::AnyAt(c) => pos.contains(c),
        }
    }
}

/// Robot scenarios 1 to 4: grid height, width, robot starts and target cell.
pub fn robot_scenario(index: usize) -> Result<(usize, usize, Vec<Cell>, Cell), BenchError> {
    match index {
        1 => Ok((2, 2, vec![(0, 0), (1, 1)], (1, 0))),
        2 => Ok((2, 3, vec![(0, 0), (1, 1)], (2, 0))),
        3 => Ok((3, 3, vec![(1, 2), (0, 1)], (2, 0))),
        4 => Ok((4, 3, vec![(1, 3), (0, 2)], (2, 0))),
        _ => Err(params(format!("robot scenario {index} does not exist (1..=4)"))),
    }
}

const DIRS: [&str; 4] = ["N", "S", "E", "W"];

fn step(cell: Cell, dir: usize, h: usize, w: usize) -> Cell {
    let (x, y) = cell;
    match dir {
        0 => (x, (y + 1).min(h - 1)),
        1 => (x, y.saturating_sub(1)),
        2 => ((x + 1).min(w - 1), y),
        3 => (x.saturating_sub(1), y),
        _ => cell,
    }
}

/// Outcome distribution of one robot: action 0..4 are N,S,E,W, 4 is Wait;
/// wind 0..4 are N,S,E,W, 4 is Calm.
fn robot_move(cell: Cell, action: usize, wind: usize, h: usize, w: usize) -> Vec<(Cell, BigRational)> {
    if wind == 4 {
        return vec![(step(cell, action, h, w), BigRational::one())];
    }
    if action == 4 || action == wind {
        let dir = if action == 4 { wind } else { action };
        return vec![(step(cell, dir, h, w), BigRational::one())];
    }
    vec![(step(cell, action, h, w), ratio(1, 2)), (step(cell, wind, h, w), ratio(1, 2))]
}

/// Robot coordination under adversarial wind. With probability 1/2 each
/// round ends in the loss sink, which for two or more robots is the collision
/// state with every robot at `(0, 0)`.
pub fn gen_robot(h: usize, w: usize, starts: &[Cell], goal: &RobotGoal) -> Result<Game, BenchError> {
    if h == 0 || w == 0 {
        return Err(params("empty grid"));
    }
    let k = starts.len();
    if k == 0 {
        return Err(params("at least one robot"));
    }
    let in_grid = |c: &Cell| c.0 < w && c.1 < h;
    if !starts.iter().all(in_grid) {
        return Err(params("start outside the grid"));
    }
    if distinct(starts).is_none() {
        return Err(params("starts collide"));
    }
    match goal {
        RobotGoal::Configuration(cells) => {
            if cells.len() != k || !cells.iter().all(in_grid) {
                return Err(params("target configuration must give one in-grid cell per robot"));
            }
            if distinct(cells).is_none() {
                return Err(params("target collides"));
            }
        }
        RobotGoal::FirstAt(c) | RobotGoal::AnyAt(c) => {
            if !in_grid(c) {
                return Err(params("target outside the grid"));
            }
        }
    }
    let cells: Vec<Cell> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
    let cell_index = |c: Cell| c.1 * w + c.0;
    let mut configs: Vec<Vec<Cell>> = Vec::new();
    crate::game::for_each_index(&vec![cells.len(); k], |idx| configs.push(idx.iter().map(|&i| cells[i]).collect()));
    let config_index = |pos: &[Cell]| pos.iter().fold(0, |acc, &c| acc * cells.len() + cell_index(c));
    let mut states: Vec<String> = configs
        .iter()
        .map(|pos| pos.iter().map(|(x, y)| format!("{x}.{y}")).collect::<Vec<_>>().join("|"))
        .collect();
    let sink = if k == 1 {
        states.push("sink".into());
        states.len() - 1
    } else {
        config_index(&vec![(0, 0); k])
    };

    let mut player_names: Vec<String> = (1..=k).map(|i| format!("r{i}")).collect();
    player_names.push("wind".into());
    let players: Vec<&str> = player_names.iter().map(String::as_str).collect();
    let mut team_actions = names(&DIRS);
    team_actions.push("Wait".into());
    let mut wind_actions = names(&DIRS);
    wind_actions.push("Calm".into());
    let mut alphabets = vec![team_actions; k];
    alphabets.push(wind_actions);
    let mut b = Builder::new(&players, alphabets, states);

    for (s, pos) in configs.iter().enumerate() {
        if distinct(pos).is_none() {
            b.labels[s].insert("crash".into());
            b.absorbing(s);
        } else if goal.holds(pos) {
            b.labels[s].insert("goal".into());
            b.targets[s] = true;
            b.absorbing(s);
        } else {
            b.fill(s, |a| {
                let wind = a[k];
                let mut outcomes: BTreeMap<StateId, BigRational> = BTreeMap::new();
                outcomes.insert(sink, ratio(1, 2));
                let per_robot: Vec<Vec<(Cell, BigRational)>> =
                    (0..k).map(|i| robot_move(pos[i], a[i], wind, h, w)).collect();
                let sizes: Vec<usize> = per_robot.iter().map(Vec::len).collect();
                crate::game::for_each_index(&sizes, |choice| {
                    let mut p = ratio(1, 2);
                    let mut next = Vec::with_capacity(k);
                    for (i, &c) in choice.iter().enumerate() {
                        p *= &per_robot[i][c].1;
                        next.push(per_robot[i][c].0);
                    }
                    *outcomes.entry(config_index(&next)).or_insert_with(BigRational::zero) += p;
                });
                Distribution::new(outcomes)
            });
        }
    }
    if k == 1 {
        b.labels[sink].insert("crash".into());
        b.absorbing(sink);
    }
    Ok(b.finish(config_index(starts)))
}

fn distinct<T: Ord>(items: &[T]) -> Option<()> {
    let set: BTreeSet<&T> = items.iter().collect();
    (set.len() == items.len()).then_some(())
}

/// Multi-channel jamming. Sensors pick a channel or wait; the jammer picks a
/// channel or idles. A sensor with an empty buffer never transmits.
pub fn gen_jamming(channels: usize, buffers: &[usize]) -> Result<Game, BenchError> {
    if channels == 0 {
        return Err(params("at least one channel"));
    }
    if buffers.is_empty() || buffers.contains(&0) {
        return Err(params("every buffer size must be at least 1"));
    }
    let k = buffers.len();
    let mut configs: Vec<Vec<usize>> = Vec::new();
    let sizes: Vec<usize> = buffers.iter().map(|b| b + 1).collect();
    crate::game::for_each_index(&sizes, |idx| configs.push(idx.to_vec()));
    let config_index = |c: &[usize]| c.iter().zip(&sizes).fold(0, |acc, (&x, &m)| acc * m + x);
    let mut states: Vec<String> =
        configs.iter().map(|c| format!("[{}]", c.iter().map(usize::to_string).collect::<Vec<_>>().join(","))).collect();
    states.push("sink".into());
    let sink = states.len() - 1;

    let mut player_names: Vec<String> = (1..=k).map(|i| format!("sensor{i}")).collect();
    player_names.push("jammer".into());
    let players: Vec<&str> = player_names.iter().map(String::as_str).collect();
    let channel_names: Vec<String> = (1..=channels).map(|c| c.to_string()).collect();
    let mut sensor_actions = channel_names.clone();
    sensor_actions.push("Wait".into());
    let mut jammer_actions = channel_names;
    jammer_actions.push("Idle".into());
    let mut alphabets = vec![sensor_actions; k];
    alphabets.push(jammer_actions);
    let mut b = Builder::new(&players, alphabets, states);

    for (s, buf) in configs.iter().enumerate() {
        if buf.iter().all(|&x| x == 0) {
            b.targets[s] = true;
            b.labels[s].insert("goal".into());
            b.absorbing(s);
            continue;
        }
        b.fill(s, |a| {
            let jam = a[k];
            let attempts: Vec<usize> = (0..k).filter(|&i| a[i] < channels && buf[i] > 0).collect();
            let mut next = buf.clone();
            for &i in &attempts {
                let clash = attempts.iter().any(|&j| j != i && a[j] == a[i]);
                if a[i] == jam || clash {
                    return Distribution::point(sink);
                }
                next[i] -= 1;
            }
            Distribution::point(config_index(&next))
        });
    }
    b.labels[sink].insert("fail".into());
    b.absorbing(sink);
    Ok(b.finish(config_index(buffers)))
}

/// An undirected simple graph on nodes `0..nodes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn complete(n: usize) -> Self {
        Graph { nodes: n, edges: (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect() }
    }

    pub fn path(n: usize) -> Self {
        Graph { nodes: n, edges: (1..n).map(|v| (v - 1, v)).collect() }
    }

    fn adjacent(&self, u: usize, v: usize) -> bool {
        self.edges.iter().any(|&(a, b)| (a, b) == (u, v) || (b, a) == (u, v))
    }
}

/// The clique game: a k-clique exists iff the team wins almost surely.
pub fn gen_clique(graph: &Graph, k: usize) -> Result<Game, BenchError> {
    if k == 0 {
        return Err(params("k must be at least 1"));
    }
    if graph.edges.iter().any(|&(u, v)| u == v || u >= graph.nodes || v >= graph.nodes) {
        return Err(params("graph must be simple with nodes in range"));
    }
    let team_actions: Vec<String> =
        (1..=k).flat_map(|i| (0..graph.nodes).map(move |v| format!("({i},{v})"))).collect();
    if team_actions.is_empty() {
        return Err(params("graph has no vertices"));
    }
    let opp_actions: Vec<String> = (1..=k).flat_map(|i| (1..=k).map(move |j| format!("({i},{j})"))).collect();
    let mut b = Builder::new(
        &["1", "2", "env"],
        vec![team_actions.clone(), team_actions, opp_actions],
        names(&["s", "top", "bot"]),
    );
    let (s, top, bot) = (0, 1, 2);
    for t in [top, bot] {
        for p in 0..3 {
            b.restrict(t, p, vec![0]);
        }
    }
    b.reset_transitions();
    let n = graph.nodes;
    b.fill(s, |a| {
        let (i1, u) = (a[0] / n, a[0] % n);
        let (i2, v) = (a[1] / n, a[1] % n);
        let (is, js) = (a[2] / k, a[2] % k);
        if i1 != is || i2 != js {
            return Distribution::point(s);
        }
        let pass = if is == js { u == v } else { graph.adjacent(u, v) };
        Distribution::point(if pass { top } else { bot })
    });
    b.absorbing(top);
    b.absorbing(bot);
    b.targets[top] = true;
    b.labels[top].insert("goal".into());
    b.labels[bot].insert("fail".into());
    Ok(b.finish(s))
}

/// Shape of random games used by the property suites.
#[derive(Debug, Clone, Copy)]
pub struct FuzzConfig {
    pub max_states: usize,
    pub team: usize,
    pub max_actions: usize,
    pub max_opp_actions: usize,
    /// Largest denominator used for transition weights.
    pub max_weight: i64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig { max_states: 3, team: 2, max_actions: 2, max_opp_actions: 2, max_weight: 4 }
    }
}

/// A random valid game with rational probabilities. One extra absorbing
/// target state and one absorbing trap state are always added.
pub fn fuzz_game(seed: u64, cfg: &FuzzConfig) -> Game {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = rng.random_range(1..=cfg.max_states.max(1));
    let n = inner + 2;
    let (target, trap) = (inner, inner + 1);
    let mut player_names: Vec<String> = (1..=cfg.team).map(|i| format!("p{i}")).collect();
    player_names.push("o".into());
    let players: Vec<&str> = player_names.iter().map(String::as_str).collect();
    let mut alphabets: Vec<Vec<String>> =
        (0..cfg.team).map(|_| (0..cfg.max_actions).map(|a| format!("a{a}")).collect()).collect();
    alphabets.push((0..cfg.max_opp_actions).map(|b| format!("b{b}")).collect());
    let mut states: Vec<String> = (0..inner).map(|s| format!("s{s}")).collect();
    states.push("goal".into());
    states.push("trap".into());
    let mut b = Builder::new(&players, alphabets, states);
    for s in 0..inner {
        for p in 0..cfg.team {
            let count = rng.random_range(1..=cfg.max_actions);
            b.restrict(s, p, (0..count).collect());
        }
        let count = rng.random_range(1..=cfg.max_opp_actions);
        b.restrict(s, cfg.team, (0..count).collect());
    }
    for t in [target, trap] {
        for p in 0..=cfg.team {
            b.restrict(t, p, vec![0]);
        }
    }
    b.reset_transitions();
    for s in 0..inner {
        b.fill(s, |_| {
            let support = rng.random_range(1..=n.min(3));
            let mut succ: Vec<StateId> = Vec::new();
            while succ.len() < support {
                let t = rng.random_range(0..n);
                if !succ.contains(&t) {
                    succ.push(t);
                }
            }
            let weights: Vec<i64> = succ.iter().map(|_| rng.random_range(1..=cfg.max_weight)).collect();
            let total: i64 = weights.iter().sum();
            Distribution::new(succ.into_iter().zip(weights).map(|(t, w)| (t, ratio(w, total))))
        });
    }
    b.absorbing(target);
    b.absorbing(trap);
    b.targets[target] = true;
    b.labels[target].insert("goal".into());
    b.labels[trap].insert("trap".into());
    for s in 0..inner {
        if rng.random_bool(0.5) {
            b.labels[s].insert("q".into());
        }
    }
    b.finish(0)
}

/// Random positive perturbation of every transition weight, keeping supports.
pub fn perturb(game: &Game, seed: u64) -> Game {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = game.clone();
    for row in out.transitions.iter_mut() {
        for d in row.iter_mut().flatten() {
            if d.entries().len() < 2 {
                continue;
            }
            let weights: Vec<i64> = d.entries().iter().map(|_| rng.random_range(1..=9)).collect();
            let total: i64 = weights.iter().sum();
            *d = Distribution::new(d.entries().iter().zip(&weights).map(|((t, _), &w)| (*t, ratio(w, total))));
        }
    }
    out
}
