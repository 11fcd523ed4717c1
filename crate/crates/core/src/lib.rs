//! Learning verified finite-state controllers for POMDPs.
//!
//! Controllers are learned L*-style from an action oracle that answers
//! "which action after this history", and each hypothesis is model checked
//! on its product Markov chain. Failed checks yield probabilistic
//! counterexamples that refine the observation table.

pub mod checker;
pub mod driver;
pub mod fsc;
pub mod learner;
pub mod model;
pub mod oracle;
pub mod transform;
