//! Solvers for team concurrent stochastic reachability games in which team
//! members randomise independently.
//!
//! The crate covers value iteration with certified lower bounds, almost-sure
//! reachability through a SAT encoding, exact SMT-LIB encodings of the
//! threshold problem, and model checking of a fragment of IRATL.

pub mod almost_sure;
pub mod bench;
pub mod game;
pub mod io;
pub mod iratl;
pub mod lp;
pub mod one_shot;
pub mod rational;
pub mod sat;
pub mod smt;
pub mod vi;

pub use game::{Distribution, Game, GameError, MemorylessProfile, StateId, ValidationReport};
