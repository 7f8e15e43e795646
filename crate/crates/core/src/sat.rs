//! CNF construction helpers, the binary strict-less-than comparator, DIMACS
//! text and SAT backends (embedded or external process).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::Serialize;

/// A DIMACS literal: `+v` or `-v` with `v ≥ 1`.
pub type Lit = i32;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CnfInstance {
    pub num_vars: u32,
    pub clauses: Vec<Vec<Lit>>,
    /// Variable name → index.
    pub names: BTreeMap<String, u32>,
}

impl CnfInstance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self, name: impl Into<String>) -> Lit {
        self.num_vars += 1;
        let v = self.num_vars;
        let name = name.into();
        debug_assert!(!self.names.contains_key(&name), "duplicate variable {name}");
        self.names.insert(name, v);
        v as Lit
    }

    pub fn var(&self, name: &str) -> Option<Lit> {
        self.names.get(name).map(|&v| v as Lit)
    }

    pub fn add(&mut self, clause: Vec<Lit>) {
        debug_assert!(clause.iter().all(|&l| l != 0 && l.unsigned_abs() <= self.num_vars));
        self.clauses.push(clause);
    }

    /// `out ↔ (a ∧ b)`.
    pub fn define_and(&mut self, out: Lit, a: Lit, b: Lit) {
        self.add(vec![-out, a]);
        self.add(vec![-out, b]);
        self.add(vec![out, -a, -b]);
    }

    /// `out ↔ (a ∨ b)`.
    pub fn define_or(&mut self, out: Lit, a: Lit, b: Lit) {
        self.add(vec![out, -a]);
        self.add(vec![out, -b]);
        self.add(vec![-out, a, b]);
    }

    /// `out ↔ (a ↔ b)`.
    pub fn define_eq(&mut self, out: Lit, a: Lit, b: Lit) {
        self.add(vec![-out, -a, b]);
        self.add(vec![-out, a, -b]);
        self.add(vec![out, a, b]);
        self.add(vec![out, -a, -b]);
    }

    /// True when every clause has a true literal under `model`
    /// (`model[v]` for variable `v`, index 0 unused).
    pub fn satisfied_by(&self, model: &[bool]) -> bool {
        self.clauses.iter().all(|c| c.iter().any(|&l| model[l.unsigned_abs() as usize] == (l > 0)))
    }

    /// DIMACS text; the variable map goes into `c` comment lines.
    pub fn to_dimacs(&self) -> String {
        let mut out = String::new();
        for (name, v) in &self.names {
            let _ = writeln!(out, "c var {v} {name}");
        }
        let _ = writeln!(out, "p cnf {} {}", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                let _ = write!(out, "{l} ");
            }
            out.push_str("0\n");
        }
        out
    }
}

/// Adds a fresh `lt` with `lt ↔ (a < b)`, both vectors most significant bit
/// first and of equal width.
pub fn bslt(cnf: &mut CnfInstance, a: &[Lit], b: &[Lit], name: &str) -> Lit {
    assert_eq!(a.len(), b.len(), "comparator widths differ");
    let width = a.len();
    // suffix comparison, least significant bit first
    let mut below: Option<Lit> = None;
    for j in (0..width).rev() {
        let here = cnf.fresh(format!("{name}.lt{j}"));
        // a_j = 0 ∧ b_j = 1
        let strict = cnf.fresh(format!("{name}.gt{j}"));
        cnf.define_and(strict, -a[j], b[j]);
        match below {
            None => {
                cnf.add(vec![-here, strict]);
                cnf.add(vec![here, -strict]);
            }
            Some(rest) => {
                let eq = cnf.fresh(format!("{name}.eq{j}"));
                cnf.define_eq(eq, a[j], b[j]);
                let carry = cnf.fresh(format!("{name}.carry{j}"));
                cnf.define_and(carry, eq, rest);
                cnf.define_or(here, strict, carry);
            }
        }
        below = Some(here);
    }
    match below {
        Some(l) => l,
        None => {
            // zero-width vectors are equal
            let l = cnf.fresh(format!("{name}.lt"));
            cnf.add(vec![-l]);
            l
        }
    }
}

/// Bits needed for the values `0..=n`.
pub fn rank_width(n: usize) -> usize {
    let mut w = 0;
    while (1usize << w) < n + 1 {
        w += 1;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatOutcome {
    /// `model[v]` for variable `v`; index 0 unused.
    Sat(Vec<bool>),
    Unsat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExternalSat {
    pub program: PathBuf,
    /// `{file}` is replaced by the DIMACS path; without it the path is
    /// appended.
    pub args: Vec<String>,
    pub timeout: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub enum SatBackend {
    #[default]
    Embedded,
    External(ExternalSat),
}

#[derive(Debug, thiserror::Error)]
pub enum SatError {
    #[error("SAT solver `{0}` could not be started: {1}")]
    NotFound(String, String),
    #[error("SAT solver timed out")]
    Timeout,
    #[error("SAT solver output: {0}")]
    Protocol(String),
    #[error("embedded SAT solver: {0}")]
    Embedded(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub fn solve(cnf: &CnfInstance, backend: &SatBackend) -> Result<SatOutcome, SatError> {
    match backend {
        SatBackend::Embedded => solve_embedded(cnf),
        SatBackend::External(ext) => solve_external(cnf, ext),
    }
}

fn solve_embedded(cnf: &CnfInstance) -> Result<SatOutcome, SatError> {
    use varisat::ExtendFormula;
    let mut solver = varisat::Solver::new();
    // make sure every variable exists even when it occurs in no clause
    for v in 1..=cnf.num_vars as isize {
        let l = varisat::Lit::from_dimacs(v);
        solver.add_clause(&[l, !l]);
    }
    let mut buf = Vec::new();
    for c in &cnf.clauses {
        buf.clear();
        buf.extend(c.iter().map(|&l| varisat::Lit::from_dimacs(l as isize)));
        solver.add_clause(&buf);
    }
    let sat = solver.solve().map_err(|e| SatError::Embedded(e.to_string()))?;
    if !sat {
        return Ok(SatOutcome::Unsat);
    }
    let mut model = vec![false; cnf.num_vars as usize + 1];
    for l in solver.model().unwrap_or_default() {
        let v = l.var().to_dimacs() as usize;
        if v < model.len() {
            model[v] = l.is_positive();
        }
    }
    Ok(SatOutcome::Sat(model))
}

fn solve_external(cnf: &CnfInstance, ext: &ExternalSat) -> Result<SatOutcome, SatError> {
    let mut file = tempfile::Builder::new().suffix(".cnf").tempfile()?;
    file.write_all(cnf.to_dimacs().as_bytes())?;
    file.flush()?;
    let path = file.path().display().to_string();
    let mut args: Vec<String> = ext.args.iter().map(|a| a.replace("{file}", &path)).collect();
    if !ext.args.iter().any(|a| a.contains("{file}")) {
        args.push(path);
    }
    let mut child = Command::new(&ext.program)
        .args(&args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| SatError::NotFound(ext.program.display().to_string(), e.to_string()))?;
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let lines: Vec<String> = BufReader::new(stdout).lines().map_while(Result::ok).collect();
        let _ = tx.send(lines);
    });
    let lines = match rx.recv_timeout(ext.timeout) {
        Ok(lines) => lines,
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SatError::Timeout);
        }
    };
    let _ = child.wait();
    parse_solver_output(&lines.join("\n"), cnf.num_vars)
}

/// Reads the competition output format: an `s` status line and `v` lines.
pub fn parse_solver_output(text: &str, num_vars: u32) -> Result<SatOutcome, SatError> {
    let mut status = None;
    let mut model = vec![false; num_vars as usize + 1];
    for line in text.lines() {
        let line = line.trim();
        if let Some(s) = line.strip_prefix("s ") {
            status = Some(s.trim().to_string());
        } else if let Some(v) = line.strip_prefix("v ") {
            for tok in v.split_whitespace() {
                let l: i64 = tok.parse().map_err(|_| SatError::Protocol(format!("bad literal `{tok}`")))?;
                let idx = l.unsigned_abs() as usize;
                if idx != 0 && idx < model.len() {
                    model[idx] = l > 0;
                }
            }
        }
    }
    match status.as_deref() {
        Some("SATISFIABLE") => Ok(SatOutcome::Sat(model)),
        Some("UNSATISFIABLE") => Ok(SatOutcome::Unsat),
        Some(other) => Err(SatError::Protocol(format!("status `{other}`"))),
        None => Err(SatError::Protocol("no status line".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        assert_eq!(rank_width(0), 0);
        assert_eq!(rank_width(1), 1);
        assert_eq!(rank_width(2), 2);
        assert_eq!(rank_width(3), 2);
        assert_eq!(rank_width(4), 3);
        assert_eq!(rank_width(64), 7);
    }

    fn fixed(bits: &[Lit], value: usize) -> Vec<Vec<Lit>> {
        let w = bits.len();
        (0..w).map(|j| if value >> (w - 1 - j) & 1 == 1 { vec![bits[j]] } else { vec![-bits[j]] }).collect()
    }

    #[test]
    fn comparator_small_widths() {
        for w in 0..=3 {
            let mut cnf = CnfInstance::new();
            let a: Vec<Lit> = (0..w).map(|j| cnf.fresh(format!("a{j}"))).collect();
            let b: Vec<Lit> = (0..w).map(|j| cnf.fresh(format!("b{j}"))).collect();
            let lt = bslt(&mut cnf, &a, &b, "cmp");
            for x in 0..1usize << w {
                for y in 0..1usize << w {
                    for want in [true, false] {
                        let mut c = cnf.clone();
                        for cl in fixed(&a, x).into_iter().chain(fixed(&b, y)) {
                            c.add(cl);
                        }
                        c.add(vec![if want { lt } else { -lt }]);
                        let sat = matches!(solve(&c, &SatBackend::Embedded).unwrap(), SatOutcome::Sat(_));
                        assert_eq!(sat, (x < y) == want, "w={w} {x}<{y} want={want}");
                    }
                }
            }
        }
    }

    #[test]
    fn dimacs_round_trip_of_output() {
        let mut cnf = CnfInstance::new();
        let a = cnf.fresh("a");
        let b = cnf.fresh("b");
        cnf.add(vec![a, b]);
        cnf.add(vec![-a]);
        let text = cnf.to_dimacs();
        assert!(text.contains("p cnf 2 2\n"));
        assert!(text.contains("c var 1 a\n"));
        assert!(text.ends_with("1 2 0\n-1 0\n"));
        let out = parse_solver_output("c hi\ns SATISFIABLE\nv -1 2\nv 0\n", 2).unwrap();
        assert_eq!(out, SatOutcome::Sat(vec![false, false, true]));
        assert_eq!(parse_solver_output("s UNSATISFIABLE", 2).unwrap(), SatOutcome::Unsat);
        assert!(parse_solver_output("", 2).is_err());
    }

    #[test]
    fn embedded_model_satisfies() {
        let mut cnf = CnfInstance::new();
        let x: Vec<Lit> = (0..5).map(|i| cnf.fresh(format!("x{i}"))).collect();
        cnf.add(vec![x[0], x[1]]);
        cnf.add(vec![-x[0], x[2]]);
        cnf.add(vec![-x[2], -x[1]]);
        cnf.add(vec![x[3], -x[4]]);
        match solve(&cnf, &SatBackend::Embedded).unwrap() {
            SatOutcome::Sat(m) => assert!(cnf.satisfied_by(&m)),
            SatOutcome::Unsat => panic!("satisfiable"),
        }
        cnf.add(vec![-x[0]]);
        cnf.add(vec![-x[1]]);
        assert_eq!(solve(&cnf, &SatBackend::Embedded).unwrap(), SatOutcome::Unsat);
    }
}
