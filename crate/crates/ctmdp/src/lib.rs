//! Finite-horizon continuous-time Markov decision process toolkit.
//!
//! Solves the Hamilton-Jacobi-Bellman equation for the value function on
//! a finite state truncation, simulates the controlled jump process under
//! randomized delay-dependent policies by exact thinning, and runs
//! structural verification experiments: dynamic programming principle,
//! time-Lipschitz bound, Lyapunov/jump tightness bounds, comparison
//! principle, and the delay-no-gain property of the value function.

pub mod error;
pub mod hjb;
pub mod instances;
pub mod io;
pub mod model;
pub mod policy;
pub mod simulate;
pub mod verify;

pub use error::{CtmdpError, Result};
