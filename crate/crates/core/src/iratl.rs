//! IRATL formulas: parser and a three-valued model checker for the fragment
//! without limit quantifiers and without threshold safety.
//!
//! Grammar:
//!
//! ```text
//! formula := disj
//! disj    := unary ("|" unary)*
//! unary   := "!" unary | "(" formula ")" | "true" | atom | quant
//! quant   := "<<" ids ">>" "^" ("sh"|"ind") "_" ("sure"|"almost"|">" rational) path
//! path    := "X" unary | "G" unary | "F" unary | unary "U" unary
//! ```
//!
//! `X`, `G`, `F`, `U` and `true` are reserved and cannot name atoms.

use std::fmt;

use num_rational::BigRational;
use num_traits::One;

use crate::almost_sure::{solve_almost_sure, AlmostSureAnswer, AlmostSureError, EncodeOptions};
use crate::game::{merge_team, regroup, restrict_absorbing_mask, Distribution, Game, GameError, StateId};
use crate::rational::{format_rational, parse_rational};
use crate::sat::SatBackend;
use crate::smt::{decide_threshold_exact, SatStatus, SmtError, SolverEndpoint};
use crate::vi::{decide_threshold_vi, ViConfig, ViError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Randomisation {
    Shared,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Winning {
    Sure,
    Almost,
    Above(BigRational),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathFormula {
    Next(Box<Formula>),
    Always(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    True,
    Atom(String),
    Not(Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Quant { coalition: Vec<String>, rand: Randomisation, win: Winning, path: PathFormula },
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(x) => write!(f, "!{}", Paren(x)),
            Formula::Or(a, b) => write!(f, "{} | {}", Paren(a), Paren(b)),
            Formula::Quant { coalition, rand, win, path } => {
                let r = match rand {
                    Randomisation::Shared => "sh",
                    Randomisation::Independent => "ind",
                };
                let w = match win {
                    Winning::Sure => "sure".to_string(),
                    Winning::Almost => "almost".to_string(),
                    Winning::Above(t) => format!(">{}", format_rational(t)),
                };
                write!(f, "<<{}>>^{r}_{w} ", coalition.join(","))?;
                match path {
                    PathFormula::Next(x) => write!(f, "X {}", Paren(x)),
                    PathFormula::Always(x) => write!(f, "G {}", Paren(x)),
                    PathFormula::Until(a, b) if **a == Formula::True => write!(f, "F {}", Paren(b)),
                    PathFormula::Until(a, b) => write!(f, "{} U {}", Paren(a), Paren(b)),
                }
            }
        }
    }
}

struct Paren<'a>(&'a Formula);

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Formula::True | Formula::Atom(_) | Formula::Not(_) => write!(f, "{}", self.0),
            other => write!(f, "({other})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormulaError {
    #[error("column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("column {column}: outside the decidable fragment: {message}")]
    Fragment { column: usize, message: String },
}

const RESERVED: [&str; 5] = ["X", "G", "F", "U", "true"];

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '+' | '-' | '\'')
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn column(&self) -> usize {
        self.text[..self.pos].chars().count() + 1
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax { column: self.column(), message: message.into() })
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), FormulaError> {
        if self.eat(token) {
            Ok(())
        } else {
            self.syntax(format!("expected `{token}`"))
        }
    }

    fn peek_ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let rest = self.rest();
        let len: usize = rest.chars().take_while(|&c| is_ident_char(c)).map(char::len_utf8).sum();
        (len > 0).then(|| &rest[..len])
    }

    fn ident(&mut self) -> Result<&'a str, FormulaError> {
        match self.peek_ident() {
            Some(id) => {
                self.pos += id.len();
                Ok(id)
            }
            None => self.syntax("expected an identifier"),
        }
    }

    fn formula(&mut self) -> Result<Formula, FormulaError> {
        let mut left = self.unary()?;
        while self.eat("|") {
            let right = self.unary()?;
            left = Formula::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        self.skip_ws();
        if self.eat("!") {
            return Ok(Formula::Not(Box::new(self.unary()?)));
        }
        if self.eat("(") {
            let f = self.formula()?;
            self.expect(")")?;
            return Ok(f);
        }
        if self.rest().starts_with("<<") {
            return self.quant();
        }
        match self.peek_ident() {
            Some("true") => {
                self.pos += 4;
                Ok(Formula::True)
            }
            Some(id) if RESERVED.contains(&id) => self.syntax(format!("`{id}` is reserved")),
            Some(id) => {
                self.pos += id.len();
                Ok(Formula::Atom(id.to_string()))
            }
            None if self.rest().is_empty() => self.syntax("unexpected end of formula"),
            None => self.syntax(format!("unexpected `{}`", self.rest().chars().next().unwrap())),
        }
    }

    fn quant(&mut self) -> Result<Formula, FormulaError> {
        let start = self.column();
        self.expect("<<")?;
        let mut coalition = Vec::new();
        self.skip_ws();
        if !self.rest().starts_with(">>") {
            loop {
                let id = self.ident()?;
                if !coalition.iter().any(|c| c == id) {
                    coalition.push(id.to_string());
                }
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(">>")?;
        self.expect("^")?;
        let rand = if self.eat("sh_") {
            Randomisation::Shared
        } else if self.eat("ind_") {
            Randomisation::Independent
        } else {
            return self.syntax("expected `sh_` or `ind_`");
        };
        let win_col = self.column();
        let win = if self.eat("sure") {
            Winning::Sure
        } else if self.eat("almost") {
            Winning::Almost
        } else if self.eat("limit") {
            return Err(FormulaError::Fragment { column: win_col, message: "limit quantifiers are not supported".into() });
        } else if self.eat(">") {
            self.skip_ws();
            let len: usize =
                self.rest().chars().take_while(|c| c.is_ascii_digit() || matches!(c, '.' | '/')).map(char::len_utf8).sum();
            let text = &self.rest()[..len];
            let t = match parse_rational(text) {
                Ok(t) => t,
                Err(e) => return self.syntax(format!("bad threshold `{text}`: {e}")),
            };
            if t > BigRational::one() {
                return self.syntax("threshold must lie in [0, 1]");
            }
            self.pos += len;
            Winning::Above(t)
        } else {
            return self.syntax("expected `sure`, `almost` or `>` threshold");
        };
        let path = match self.peek_ident() {
            Some("X") => {
                self.pos += 1;
                PathFormula::Next(Box::new(self.unary()?))
            }
            Some("G") => {
                if matches!(win, Winning::Above(_)) {
                    return Err(FormulaError::Fragment {
                        column: start,
                        message: "threshold quantifiers cannot be combined with G".into(),
                    });
                }
                self.pos += 1;
                PathFormula::Always(Box::new(self.unary()?))
            }
            Some("F") => {
                self.pos += 1;
                PathFormula::Until(Box::new(Formula::True), Box::new(self.unary()?))
            }
            _ => {
                let left = self.unary()?;
                match self.peek_ident() {
                    Some("U") => self.pos += 1,
                    _ => return self.syntax("expected `X`, `G`, `F` or `U`"),
                }
                PathFormula::Until(Box::new(left), Box::new(self.unary()?))
            }
        };
        Ok(Formula::Quant { coalition, rand, win, path })
    }
}

pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let mut p = Parser { text, pos: 0 };
    let f = p.formula()?;
    p.skip_ws();
    if !p.rest().is_empty() {
        return p.syntax(format!("unexpected `{}`", p.rest()));
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    True,
    False,
    Unknown,
}

impl Verdict {
    fn not(self) -> Self {
        match self {
            Verdict::True => Verdict::False,
            Verdict::False => Verdict::True,
            Verdict::Unknown => Verdict::Unknown,
        }
    }

    fn or(self, other: Self) -> Self {
        match (self, other) {
            (Verdict::True, _) | (_, Verdict::True) => Verdict::True,
            (Verdict::False, Verdict::False) => Verdict::False,
            _ => Verdict::Unknown,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::True => "true",
            Verdict::False => "false",
            Verdict::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Provenance {
    pub subformula: String,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct CheckResult {
    pub verdicts: Vec<Verdict>,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, Default)]
pub struct CheckConfig {
    /// Exact threshold decisions; without it thresholds use value iteration.
    pub solver: Option<SolverEndpoint>,
    pub sat: SatBackend,
    pub vi: ViConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("unknown player `{0}` in coalition")]
    UnknownPlayer(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    AlmostSure(#[from] AlmostSureError),
    #[error(transparent)]
    Smt(#[from] SmtError),
    #[error(transparent)]
    Vi(#[from] ViError),
}

/// Controllable predecessor: states where some pure team joint action keeps
/// every positive-probability successor inside `x`, whatever the opponent does.
pub fn cpre(game: &Game, x: &[bool]) -> Vec<bool> {
    (0..game.num_states())
        .map(|s| {
            (0..game.team_joint_count(s))
                .any(|tj| (0..game.opp_count(s)).all(|b| game.dist(s, tj, b).support().all(|t| x[t])))
        })
        .collect()
}

/// Sure winning for the team of `game` (already regrouped to the coalition).
pub fn solve_sure(game: &Game, path: &SurePath<'_>) -> Vec<bool> {
    let n = game.num_states();
    match path {
        SurePath::Next(psi) => cpre(game, psi),
        SurePath::Always(psi) => {
            let mut x = psi.to_vec();
            loop {
                let pre = cpre(game, &x);
                let next: Vec<bool> = (0..n).map(|s| psi[s] && pre[s]).collect();
                if next == x {
                    return x;
                }
                x = next;
            }
        }
        SurePath::Until(phi, psi) => {
            let mut x = psi.to_vec();
            loop {
                let pre = cpre(game, &x);
                let next: Vec<bool> = (0..n).map(|s| psi[s] || (phi[s] && pre[s])).collect();
                if next == x {
                    return x;
                }
                x = next;
            }
        }
    }
}

pub enum SurePath<'a> {
    Next(&'a [bool]),
    Always(&'a [bool]),
    Until(&'a [bool], &'a [bool]),
}

struct Checker<'a> {
    game: &'a Game,
    cfg: &'a CheckConfig,
    provenance: Vec<Provenance>,
}

/// Lower (definitely true) and upper (possibly true) state sets.
fn bounds(v: &[Verdict]) -> (Vec<bool>, Vec<bool>) {
    (v.iter().map(|&x| x == Verdict::True).collect(), v.iter().map(|&x| x != Verdict::False).collect())
}

impl Checker<'_> {
    fn eval(&mut self, f: &Formula) -> Result<Vec<Verdict>, CheckError> {
        let n = self.game.num_states();
        Ok(match f {
            Formula::True => vec![Verdict::True; n],
            Formula::Atom(a) => {
                self.game.label_set(a).into_iter().map(|b| if b { Verdict::True } else { Verdict::False }).collect()
            }
            Formula::Not(x) => self.eval(x)?.into_iter().map(Verdict::not).collect(),
            Formula::Or(a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                a.into_iter().zip(b).map(|(x, y)| x.or(y)).collect()
            }
            Formula::Quant { coalition, rand, win, path } => {
                let (phi, psi) = match path {
                    PathFormula::Next(x) | PathFormula::Always(x) => (None, self.eval(x)?),
                    PathFormula::Until(a, b) => (Some(self.eval(a)?), self.eval(b)?),
                };
                let g = self.coalition_game(coalition, *rand, win)?;
                let (psi_lo, psi_hi) = bounds(&psi);
                let (phi_lo, phi_hi) = match &phi {
                    Some(p) => bounds(p),
                    None => (vec![true; n], vec![true; n]),
                };
                let mut backend = String::new();
                // every path operator is monotone, so evaluating on both
                // bounds brackets the answer
                let lo = self.quantify(&g, win, path, &phi_lo, &psi_lo, &mut backend)?;
                let hi = if phi_lo == phi_hi && psi_lo == psi_hi {
                    lo.clone()
                } else {
                    self.quantify(&g, win, path, &phi_hi, &psi_hi, &mut backend)?
                };
                self.provenance.push(Provenance { subformula: f.to_string(), backend });
                lo.into_iter()
                    .zip(hi)
                    .map(|(l, h)| {
                        if l == Verdict::True {
                            Verdict::True
                        } else if h == Verdict::False {
                            Verdict::False
                        } else {
                            Verdict::Unknown
                        }
                    })
                    .collect()
            }
        })
    }

    fn coalition_game(&self, coalition: &[String], rand: Randomisation, win: &Winning) -> Result<Game, CheckError> {
        for c in coalition {
            if self.game.player_index(c).is_none() {
                return Err(CheckError::UnknownPlayer(c.clone()));
            }
        }
        let g = regroup(self.game, coalition)?;
        // sure winning needs no randomisation, so sh and ind coincide there
        if rand == Randomisation::Shared && *win != Winning::Sure {
            Ok(merge_team(&g)?)
        } else {
            Ok(g)
        }
    }

    fn quantify(
        &mut self,
        g: &Game,
        win: &Winning,
        path: &PathFormula,
        phi: &[bool],
        psi: &[bool],
        backend: &mut String,
    ) -> Result<Vec<Verdict>, CheckError> {
        let n = g.num_states();
        let lift = |v: Vec<bool>| v.into_iter().map(|b| if b { Verdict::True } else { Verdict::False }).collect();
        match (win, path) {
            (Winning::Sure, p) => {
                *backend = "cpre".into();
                Ok(lift(match p {
                    PathFormula::Next(_) => solve_sure(g, &SurePath::Next(psi)),
                    PathFormula::Always(_) => solve_sure(g, &SurePath::Always(psi)),
                    PathFormula::Until(..) => solve_sure(g, &SurePath::Until(phi, psi)),
                }))
            }
            (Winning::Almost, PathFormula::Always(_)) => {
                *backend = "cpre (almost-sure safety as sure safety)".into();
                Ok(lift(solve_sure(g, &SurePath::Always(psi))))
            }
            (Winning::Above(_), PathFormula::Always(_)) => Err(FormulaError::Fragment {
                column: 1,
                message: "threshold quantifiers cannot be combined with G".into(),
            }
            .into()),
            (_, PathFormula::Next(_)) => {
                (0..n).map(|s| self.decide(&one_step_game(g, s, psi), win, backend)).collect()
            }
            (_, PathFormula::Until(..)) => {
                let absorbing: Vec<bool> = (0..n).map(|s| psi[s] || !phi[s]).collect();
                let mut base = restrict_absorbing_mask(g, &(0..n).map(|s| !absorbing[s]).collect::<Vec<_>>());
                base.targets = psi.to_vec();
                (0..n)
                    .map(|s| {
                        if psi[s] {
                            return Ok(Verdict::True);
                        }
                        if !phi[s] {
                            return Ok(Verdict::False);
                        }
                        let mut h = base.clone();
                        h.initial = s;
                        self.decide(&h, win, backend)
                    })
                    .collect()
            }
        }
    }

    /// Almost-sure or threshold reachability of the targets of `h` from its
    /// initial state.
    fn decide(&mut self, h: &Game, win: &Winning, backend: &mut String) -> Result<Verdict, CheckError> {
        match win {
            Winning::Almost => {
                *backend = "sat".into();
                Ok(match solve_almost_sure(h, &self.cfg.sat, EncodeOptions::default())? {
                    AlmostSureAnswer::Yes(_) => Verdict::True,
                    AlmostSureAnswer::No => Verdict::False,
                })
            }
            Winning::Above(t) => match &self.cfg.solver {
                Some(endpoint) => {
                    *backend = "smt".into();
                    Ok(match decide_threshold_exact(h, t, endpoint)?.status {
                        SatStatus::Sat => Verdict::True,
                        SatStatus::Unsat => Verdict::False,
                        SatStatus::Unknown | SatStatus::Timeout => Verdict::Unknown,
                    })
                }
                None => {
                    *backend = "value iteration".into();
                    if !can_reach_target(h) {
                        // value is exactly 0
                        return Ok(Verdict::False);
                    }
                    Ok(if decide_threshold_vi(h, t, &self.cfg.vi)?.is_yes() { Verdict::True } else { Verdict::Unknown })
                }
            },
            Winning::Sure => unreachable!("sure objectives use cpre"),
        }
    }
}

/// Whether some positive-probability path leads from the initial state into
/// the targets.
fn can_reach_target(g: &Game) -> bool {
    let mut seen = vec![false; g.num_states()];
    let mut stack = vec![g.initial];
    seen[g.initial] = true;
    while let Some(s) = stack.pop() {
        if g.is_target(s) {
            return true;
        }
        for d in g.transitions[s].iter().flatten() {
            for t in d.support() {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    false
}

/// A game whose only move is the first step from `s`; the target is the
/// state standing for "landed in ψ".
fn one_step_game(g: &Game, s: StateId, psi: &[bool]) -> Game {
    let players = g.num_players();
    let inside = 1;
    let outside = 2;
    let transitions: Vec<Option<Distribution>> = g.transitions[s]
        .iter()
        .map(|d| {
            d.as_ref().map(|d| {
                Distribution::new(d.entries().iter().map(|(t, p)| (if psi[*t] { inside } else { outside }, p.clone())))
            })
        })
        .collect();
    let single: Vec<Vec<usize>> = (0..players).map(|p| vec![g.available[s][p][0]]).collect();
    Game::from_parts(
        g.players.clone(),
        vec![g.states[s].clone(), "inside".into(), "outside".into()],
        g.actions.clone(),
        vec![g.available[s].clone(), single.clone(), single],
        vec![transitions, vec![Some(Distribution::point(inside))], vec![Some(Distribution::point(outside))]],
        vec![false, true, false],
        0,
        vec![Default::default(); 3],
    )
}

/// Per-state verdicts of `formula` on a labelled structure.
pub fn satisfying_states(game: &Game, formula: &Formula, cfg: &CheckConfig) -> Result<CheckResult, CheckError> {
    let report = game.validate();
    if !report.ok {
        return Err(GameError::Invalid(report.to_string()).into());
    }
    let mut c = Checker { game, cfg, provenance: Vec::new() };
    let verdicts = c.eval(formula)?;
    Ok(CheckResult { verdicts, provenance: c.provenance })
}
