//! Action oracles: "which action after history h".

mod belief_vi;
mod cache;
mod sampler;

use std::cell::Cell;

use thiserror::Error;

use crate::fsc::Fsc;
use crate::model::{Action, Belief, History, Pomdp, State};

pub use belief_vi::BeliefViOracle;
pub use cache::{answer_action_query, Answer, QueryCache};
pub use sampler::{SamplerConfig, SamplerDiagnostics, SparseSampler};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("history {0} is not realisable in the model")]
    InvalidHistory(String),
    #[error("no action is enabled in every state consistent with history {0}")]
    NoCommonAction(String),
    #[error("cache file line {line}: {message}")]
    CacheFormat { line: usize, message: String },
    #[error("cache file: {0}")]
    Io(String),
}

pub trait ActionOracle {
    /// Best action after `h`, enabled in every state consistent with `h`.
    fn best_action(&self, h: &History) -> Result<Action, OracleError>;
}

impl<T: ActionOracle + ?Sized> ActionOracle for &T {
    fn best_action(&self, h: &History) -> Result<Action, OracleError> {
        (**self).best_action(h)
    }
}

impl<T: ActionOracle + ?Sized> ActionOracle for Box<T> {
    fn best_action(&self, h: &History) -> Result<Action, OracleError> {
        (**self).best_action(h)
    }
}

/// Follows a fixed controller.
#[derive(Clone, Debug)]
pub struct FscOracle {
    fsc: Fsc,
}

impl FscOracle {
    pub fn new(fsc: Fsc) -> Self {
        Self { fsc }
    }

    pub fn fsc(&self) -> &Fsc {
        &self.fsc
    }
}

impl ActionOracle for FscOracle {
    fn best_action(&self, h: &History) -> Result<Action, OracleError> {
        Ok(self.fsc.action_after(h))
    }
}

/// Counts calls to the wrapped oracle.
pub struct CountingOracle<O> {
    inner: O,
    calls: Cell<usize>,
}

impl<O: ActionOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<O: ActionOracle> ActionOracle for CountingOracle<O> {
    fn best_action(&self, h: &History) -> Result<Action, OracleError> {
        self.calls.set(self.calls.get() + 1);
        self.inner.best_action(h)
    }
}

/// Belief-VI first; the sampler when the belief support exceeds `support_cap`.
pub struct CompositeOracle {
    exact: BeliefViOracle,
    sampler: SparseSampler,
    support_cap: usize,
}

impl CompositeOracle {
    pub fn new(exact: BeliefViOracle, sampler: SparseSampler, support_cap: usize) -> Self {
        Self {
            exact,
            sampler,
            support_cap,
        }
    }
}

impl ActionOracle for CompositeOracle {
    fn best_action(&self, h: &History) -> Result<Action, OracleError> {
        let b = belief_after(self.exact.model(), h)?;
        if b.support_size() > self.support_cap {
            self.sampler.best_action(h)
        } else {
            self.exact.best_action(h)
        }
    }
}

/// Belief after `h`. States where a played action is disabled are dropped,
/// as no path through them realises `h`.
pub(crate) fn belief_after(m: &Pomdp, h: &History) -> Result<Belief, OracleError> {
    let invalid = || OracleError::InvalidHistory(h.display(m).to_string());
    if h.observations()[0] != m.observation(m.initial()) {
        return Err(invalid());
    }
    let mut b = Belief::initial(m);
    for (&a, &z) in h.actions().iter().zip(&h.observations()[1..]) {
        let mut weights: Vec<(State, f64)> = Vec::new();
        for &(s, p) in b.entries() {
            for &(t, q) in m.transition(s, a).into_iter().flatten() {
                if m.observation(t) == z {
                    weights.push((t, p * q));
                }
            }
        }
        b = Belief::from_weights(weights).ok_or_else(invalid)?;
    }
    Ok(b)
}

pub(crate) fn common_actions(m: &Pomdp, h: &History, b: &Belief) -> Result<Vec<Action>, OracleError> {
    let support: Vec<State> = b.support().collect();
    let actions = m.common_actions(&support);
    if actions.is_empty() {
        return Err(OracleError::NoCommonAction(h.display(m).to_string()));
    }
    Ok(actions)
}
