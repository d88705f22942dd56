//! Maximization of `f(Φ(x))` subject to `c(Φ(x)) ≤ 0` when `Φ` is a neural
//! network reachable only through evaluation and backpropagation.
//!
//! The crate combines two families of local moves:
//!
//! * directional attacks ([`attack`]), which perturb the input of `Φ` so that
//!   its output moves along `∇f(Φ(x))`, solved with FGSM- or PGD-style sign
//!   steps on a box-scaled differential network;
//! * the covering direct search method ([`dsm`]), a derivative-free
//!   covering/search/poll scheme with local convergence guarantees.
//!
//! [`hybrid`] interleaves both (attack first, direct search when the attack
//! does not give a sufficient increase) and also hosts the attack-only and
//! random-line-search baselines.

pub mod attack;
pub mod dsm;
pub mod error;
pub mod hybrid;
pub mod losses;
pub mod netdiff;
pub mod problem;
pub mod trace;

pub(crate) mod vecops;

pub use error::{Error, Result};
pub use netdiff::{DifferentiableMap, MlpNetwork};
pub use problem::{EvalRecord, Goal, Mode, ProblemSpec, TrialHistory};
pub use trace::{RunResult, RunTrace};
