//! JSON game documents, valuation files and profile documents.
//!
//! A game document looks like this:
//!
//! ```json
//! {
//!   "version": 1,
//!   "players": [{"name": "1"}, {"name": "2"}, {"name": "env", "opponent": true}],
//!   "team": ["1", "2"],
//!   "states": ["s0", "s_goal", "s_fail"],
//!   "actions": {"1": ["L", "R"], "2": ["L", "R"], "env": ["L", "R"]},
//!   "available": {"s_goal": {"1": ["L"]}},
//!   "transitions": [
//!     {"state": "s0", "actions": ["L", "L", "L"], "to": [["s_goal", "1"]]}
//!   ],
//!   "targets": ["s_goal"],
//!   "initial": "s0",
//!   "labels": {"s_goal": ["goal"]}
//! }
//! ```
//!
//! `actions` inside a transition lists one action per player in the order of
//! `players`. Availability defaults to the full alphabet. Probabilities are
//! strings holding `"p/q"` or a decimal literal.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::game::{Distribution, Game, MemorylessProfile, StateId};
use crate::rational::{format_rational, parse_rational};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Semantic { path: String, message: String },
    #[error("validation failed:\n{0}")]
    Validation(String),
}

fn sem(path: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::Semantic { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct PlayerDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub opponent: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(untagged)]
pub enum ProbDoc {
    Text(String),
    Number(serde_json::Number),
}

impl ProbDoc {
    fn text(&self) -> String {
        match self {
            ProbDoc::Text(t) => t.clone(),
            ProbDoc::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct TransitionDoc {
    pub state: String,
    pub actions: Vec<String>,
    pub to: Vec<(String, ProbDoc)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct GameDocument {
    pub version: u32,
    pub players: Vec<PlayerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub team: Option<Vec<String>>,
    pub states: Vec<String>,
    pub actions: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub available: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    pub transitions: Vec<TransitionDoc>,
    pub targets: Vec<String>,
    pub initial: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, Vec<String>>,
}

/// Parses and validates a game document.
pub fn parse_game(text: &str) -> Result<Game, IoError> {
    let game = decode_game(text)?;
    let report = game.validate();
    if !report.ok {
        return Err(IoError::Validation(report.to_string()));
    }
    Ok(game)
}

/// Parses a game document without running validation.
pub fn decode_game(text: &str) -> Result<Game, IoError> {
    let doc: GameDocument = serde_json::from_str(text)
        .map_err(|e| IoError::Syntax { line: e.line(), column: e.column(), message: e.to_string() })?;
    document_to_game(&doc)
}

pub fn document_to_game(doc: &GameDocument) -> Result<Game, IoError> {
    if doc.version != FORMAT_VERSION {
        return Err(sem("version", format!("unsupported version {}", doc.version)));
    }
    let opponents: Vec<&PlayerDoc> = doc.players.iter().filter(|p| p.opponent).collect();
    if opponents.len() != 1 {
        return Err(sem("players", format!("exactly one opponent required, found {}", opponents.len())));
    }
    // Team in declaration order, opponent last.
    let mut order: Vec<usize> = (0..doc.players.len()).filter(|&i| !doc.players[i].opponent).collect();
    order.push(doc.players.iter().position(|p| p.opponent).unwrap());
    let players: Vec<String> = order.iter().map(|&i| doc.players[i].name.clone()).collect();
    let mut seen = BTreeSet::new();
    for p in &players {
        if !seen.insert(p) {
            return Err(sem("players", format!("duplicate player `{p}`")));
        }
    }
    if let Some(team) = &doc.team {
        let declared: BTreeSet<&String> = team.iter().collect();
        let actual: BTreeSet<&String> = players[..players.len() - 1].iter().collect();
        if declared != actual || declared.len() != team.len() {
            return Err(sem("team", "team list must name exactly the non-opponent players"));
        }
    }

    let mut state_ids: BTreeMap<&str, StateId> = BTreeMap::new();
    for (i, s) in doc.states.iter().enumerate() {
        if state_ids.insert(s.as_str(), i).is_some() {
            return Err(sem(format!("states[{i}]"), format!("duplicate state `{s}`")));
        }
    }
    let state = |path: String, name: &str| -> Result<StateId, IoError> {
        state_ids.get(name).copied().ok_or_else(|| sem(path, format!("unknown state `{name}`")))
    };

    for name in doc.actions.keys() {
        if !players.contains(name) {
            return Err(sem(format!("actions.{name}"), format!("unknown player `{name}`")));
        }
    }
    let mut actions = Vec::new();
    let mut action_ids: Vec<BTreeMap<&str, usize>> = Vec::new();
    for p in &players {
        let alpha = doc.actions.get(p).ok_or_else(|| sem("actions", format!("no alphabet for player `{p}`")))?;
        let mut ids = BTreeMap::new();
        for (i, a) in alpha.iter().enumerate() {
            if ids.insert(a.as_str(), i).is_some() {
                return Err(sem(format!("actions.{p}"), format!("duplicate action `{a}`")));
            }
        }
        actions.push(alpha.clone());
        action_ids.push(ids);
    }

    let n = doc.states.len();
    let mut available: Vec<Vec<Vec<usize>>> =
        (0..n).map(|_| actions.iter().map(|alpha| (0..alpha.len()).collect()).collect()).collect();
    for (sname, per_player) in &doc.available {
        let s = state(format!("available.{sname}"), sname)?;
        for (pname, list) in per_player {
            let p = players
                .iter()
                .position(|x| x == pname)
                .ok_or_else(|| sem(format!("available.{sname}"), format!("unknown player `{pname}`")))?;
            let mut idx = Vec::new();
            for a in list {
                let id = action_ids[p]
                    .get(a.as_str())
                    .copied()
                    .ok_or_else(|| sem(format!("available.{sname}.{pname}"), format!("unknown action `{a}`")))?;
                idx.push(id);
            }
            idx.sort_unstable();
            idx.dedup();
            available[s][p] = idx;
        }
    }

    let mut transitions: Vec<Vec<Option<Distribution>>> = (0..n)
        .map(|s| {
            let count: usize = available[s].iter().map(Vec::len).product();
            vec![None; count]
        })
        .collect();
    for (ti, t) in doc.transitions.iter().enumerate() {
        let path = format!("transitions[{ti}]");
        let s = state(format!("{path}.state"), &t.state)?;
        if t.actions.len() != players.len() {
            return Err(sem(&path, format!("expected {} actions, found {}", players.len(), t.actions.len())));
        }
        // Document order -> internal order, then to local indices.
        let mut local = vec![0usize; players.len()];
        for p in 0..players.len() {
            let name = &t.actions[order[p]];
            let a = action_ids[p]
                .get(name.as_str())
                .copied()
                .ok_or_else(|| sem(&path, format!("unknown action `{name}` for player `{}`", players[p])))?;
            local[p] = available[s][p]
                .binary_search(&a)
                .map_err(|_| sem(&path, format!("action `{name}` not available to `{}` at `{}`", players[p], t.state)))?;
        }
        let team = players.len() - 1;
        let tj = local[..team].iter().enumerate().fold(0, |acc, (p, &a)| acc * available[s][p].len() + a);
        let idx = tj * available[s][team].len() + local[team];
        if transitions[s][idx].is_some() {
            return Err(sem(&path, format!("duplicate transition for `{}` {:?}", t.state, t.actions)));
        }
        let mut entries = Vec::new();
        for (k, (target, prob)) in t.to.iter().enumerate() {
            let tid = state(format!("{path}.to[{k}]"), target)?;
            let p = parse_rational(&prob.text()).map_err(|e| sem(format!("{path}.to[{k}]"), e.to_string()))?;
            entries.push((tid, p));
        }
        entries.sort_by_key(|(s, _)| *s);
        transitions[s][idx] = Some(Distribution::raw(entries));
    }

    let mut targets = vec![false; n];
    for (i, t) in doc.targets.iter().enumerate() {
        targets[state(format!("targets[{i}]"), t)?] = true;
    }
    let initial = state("initial".into(), &doc.initial)?;
    let mut labels = vec![BTreeSet::new(); n];
    for (sname, props) in &doc.labels {
        let s = state(format!("labels.{sname}"), sname)?;
        labels[s].extend(props.iter().cloned());
    }
    Ok(Game::from_parts(players, doc.states.clone(), actions, available, transitions, targets, initial, labels))
}

pub fn game_to_document(game: &Game) -> GameDocument {
    let opp = game.opponent();
    let players = game
        .players
        .iter()
        .enumerate()
        .map(|(p, name)| PlayerDoc { name: name.clone(), opponent: p == opp })
        .collect();
    let actions = game.players.iter().cloned().zip(game.actions.iter().cloned()).collect();
    let mut available = BTreeMap::new();
    for s in 0..game.num_states() {
        let mut per = BTreeMap::new();
        for p in 0..game.num_players() {
            if game.available[s][p].len() != game.actions[p].len() {
                per.insert(
                    game.players[p].clone(),
                    game.available[s][p].iter().map(|&a| game.actions[p][a].clone()).collect(),
                );
            }
        }
        if !per.is_empty() {
            available.insert(game.states[s].clone(), per);
        }
    }
    let mut transitions = Vec::new();
    for s in 0..game.num_states() {
        for tj in 0..game.team_joint_count(s) {
            let local = game.decode_team_joint(s, tj);
            for b in 0..game.opp_count(s) {
                let Some(d) = &game.transitions[s][game.joint_index(s, tj, b)] else { continue };
                let mut names: Vec<String> =
                    local.iter().enumerate().map(|(p, &a)| game.local_action_name(s, p, a).to_string()).collect();
                names.push(game.local_action_name(s, opp, b).to_string());
                transitions.push(TransitionDoc {
                    state: game.states[s].clone(),
                    actions: names,
                    to: d
                        .entries()
                        .iter()
                        .map(|(t, p)| (game.states[*t].clone(), ProbDoc::Text(format_rational(p))))
                        .collect(),
                });
            }
        }
    }
    let labels = (0..game.num_states())
        .filter(|&s| !game.labels[s].is_empty())
        .map(|s| (game.states[s].clone(), game.labels[s].iter().cloned().collect()))
        .collect();
    GameDocument {
        version: FORMAT_VERSION,
        players,
        team: Some(game.players[..opp].to_vec()),
        states: game.states.clone(),
        actions,
        available,
        transitions,
        targets: game.target_states().iter().map(|&s| game.states[s].clone()).collect(),
        initial: game.states[game.initial].clone(),
        labels,
    }
}

/// Canonical text of a game. Transitions are written one per line.
pub fn serialize_game(game: &Game) -> String {
    let doc = game_to_document(game);
    let mut out = String::from("{\n");
    let field = |out: &mut String, key: &str, value: String, last: bool| {
        out.push_str(&format!("  \"{key}\": {value}{}\n", if last { "" } else { "," }));
    };
    fn json<T: serde::Serialize>(v: &T) -> String {
        serde_json::to_string(v).expect("serializable")
    }
    field(&mut out, "version", doc.version.to_string(), false);
    field(&mut out, "players", json(&doc.players), false);
    if let Some(team) = &doc.team {
        field(&mut out, "team", json(team), false);
    }
    field(&mut out, "states", json(&doc.states), false);
    field(&mut out, "actions", json(&doc.actions), false);
    if !doc.available.is_empty() {
        field(&mut out, "available", json(&doc.available), false);
    }
    let lines: Vec<String> = doc.transitions.iter().map(|t| format!("    {}", json(t))).collect();
    if lines.is_empty() {
        field(&mut out, "transitions", "[]".into(), false);
    } else {
        field(&mut out, "transitions", format!("[\n{}\n  ]", lines.join(",\n")), false);
    }
    field(&mut out, "targets", json(&doc.targets), false);
    field(&mut out, "initial", json(&doc.initial), doc.labels.is_empty());
    if !doc.labels.is_empty() {
        field(&mut out, "labels", json(&doc.labels), true);
    }
    out.push_str("}\n");
    out
}

/// Valuation export: one `state value` line per state, six decimals.
pub fn format_valuation(game: &Game, values: &[f64]) -> String {
    game.states
        .iter()
        .zip(values)
        .map(|(s, v)| format!("{s} {v:.6}\n"))
        .collect()
}

/// Parses a valuation file written by [`format_valuation`].
pub fn parse_valuation(game: &Game, text: &str) -> Result<Vec<f64>, IoError> {
    let mut values = vec![None; game.num_states()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let path = format!("line {}", lineno + 1);
        let (name, value) = line.rsplit_once(char::is_whitespace).ok_or_else(|| sem(&path, "expected `state value`"))?;
        let s = game.state_index(name.trim()).ok_or_else(|| sem(&path, format!("unknown state `{name}`")))?;
        let v: f64 = value.parse().map_err(|_| sem(&path, format!("bad value `{value}`")))?;
        values[s] = Some(v);
    }
    values
        .into_iter()
        .enumerate()
        .map(|(s, v)| v.ok_or_else(|| sem("valuation", format!("no value for `{}`", game.states[s]))))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProfileDocument {
    /// player -> state -> action -> probability
    pub profile: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
}

pub fn profile_to_document(game: &Game, profile: &MemorylessProfile) -> ProfileDocument {
    let mut out = BTreeMap::new();
    for (p, per_state) in profile.probs.iter().enumerate() {
        let mut states = BTreeMap::new();
        for (s, v) in per_state.iter().enumerate() {
            let row = v
                .iter()
                .enumerate()
                .map(|(a, x)| (game.local_action_name(s, p, a).to_string(), *x))
                .collect();
            states.insert(game.states[s].clone(), row);
        }
        out.insert(game.players[p].clone(), states);
    }
    ProfileDocument { profile: out }
}

/// Exact probabilities of a distribution as canonical strings.
pub fn distribution_strings(game: &Game, d: &Distribution) -> Vec<(String, String)> {
    d.entries().iter().map(|(t, p): &(StateId, BigRational)| (game.states[*t].clone(), format_rational(p))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{builtin, gen_jamming};
    use crate::game::merge_team;
    use crate::rational::ratio;

    #[test]
    fn door_round_trip_is_bit_identical() {
        let g = builtin("door").unwrap();
        let text = serialize_game(&g);
        let back = parse_game(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(serialize_game(&back), text);
    }

    #[test]
    fn rational_literal_is_exact() {
        let g = builtin("door").unwrap();
        let text = serialize_game(&g).replacen(
            "\"to\":[[\"s0\",\"1\"]]",
            "\"to\":[[\"s0\",\"1/3\"],[\"s_fail\",\"2/3\"]]",
            1,
        );
        let back = parse_game(&text).unwrap();
        let s0 = back.state_index("s0").unwrap();
        let found = back.transitions[s0].iter().flatten().any(|d| d.prob(s0) == ratio(1, 3));
        assert!(found);
        let d = back.transitions[s0].iter().flatten().find(|d| d.prob(s0) == ratio(1, 3)).unwrap();
        assert!((d.iter_f64().find(|(s, _)| *s == s0).unwrap().1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_transition_names_the_key() {
        let g = builtin("door").unwrap();
        let text = serialize_game(&g);
        let mut lines: Vec<&str> = text.lines().collect();
        let pos = lines.iter().position(|l| l.contains("\"actions\":[\"L\",\"R\",\"L\"]")).unwrap();
        lines.remove(pos);
        let err = parse_game(&lines.join("\n")).unwrap_err().to_string();
        assert!(err.contains("s0(L,R,L)") && err.contains("missing transition"), "{err}");
    }

    #[test]
    fn duplicate_transition_is_rejected() {
        let g = builtin("door").unwrap();
        let text = serialize_game(&g);
        let line = text.lines().find(|l| l.contains("\"state\":\"s0\"")).unwrap().trim().trim_end_matches(',');
        let doubled = text.replacen(line, &format!("{line},\n    {line}"), 1);
        let err = parse_game(&doubled).unwrap_err().to_string();
        assert!(err.contains("duplicate transition"), "{err}");
    }

    #[test]
    fn syntax_error_has_location() {
        let err = parse_game("{\n  \"version\": 1,\n  oops }").unwrap_err();
        assert!(matches!(err, IoError::Syntax { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_identifier_is_rejected() {
        let g = builtin("door").unwrap();
        let text = serialize_game(&g).replace("\"initial\": \"s0\"", "\"initial\": \"nowhere\"");
        assert!(parse_game(&text).unwrap_err().to_string().contains("unknown state `nowhere`"));
    }

    #[test]
    fn jamming_document_has_five_states() {
        let g = gen_jamming(2, &[1, 1]).unwrap();
        let doc: GameDocument = serde_json::from_str(&serialize_game(&g)).unwrap();
        assert_eq!(doc.states.len(), 5);
        assert_eq!(parse_game(&serialize_game(&g)).unwrap(), g);
    }

    #[test]
    fn merged_door_document_has_four_team_actions() {
        let m = merge_team(&builtin("door").unwrap()).unwrap();
        let doc = game_to_document(&m);
        assert_eq!(doc.actions[&m.players[0]].len(), 4);
        assert_eq!(parse_game(&serialize_game(&m)).unwrap(), m);
    }

    #[test]
    fn opponent_may_be_declared_first() {
        let g = builtin("door").unwrap();
        let mut doc = game_to_document(&g);
        doc.players.rotate_right(1);
        for t in &mut doc.transitions {
            t.actions.rotate_right(1);
        }
        let back = document_to_game(&doc).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn valuation_round_trip() {
        let g = builtin("door").unwrap();
        let text = format_valuation(&g, &[1.0 / 3.0, 1.0, 0.0]);
        assert_eq!(text, "s0 0.333333\ns_goal 1.000000\ns_fail 0.000000\n");
        let v = parse_valuation(&g, &text).unwrap();
        assert_eq!(v[1], 1.0);
    }
}
