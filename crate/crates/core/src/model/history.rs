use std::collections::BTreeSet;
use std::fmt;

use super::{Action, Obs, Pomdp, State};

/// An observation/action history `z0 a0 z1 ... a(k-1) zk`.
///
/// Always starts and ends with an observation; the empty history of a model is
/// its initial observation alone.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct History {
    observations: Vec<Obs>,
    actions: Vec<Action>,
}

impl History {
    pub fn new(first: Obs) -> Self {
        Self {
            observations: vec![first],
            actions: Vec::new(),
        }
    }

    /// Builds a history from its parts; `None` unless there is exactly one
    /// more observation than actions.
    pub fn from_parts(observations: Vec<Obs>, actions: Vec<Action>) -> Option<Self> {
        (observations.len() == actions.len() + 1).then_some(Self {
            observations,
            actions,
        })
    }

    /// `steps` (each an observation followed by the action played there) then `last`.
    pub fn from_steps(steps: &[(Obs, Action)], last: Obs) -> Self {
        let mut observations: Vec<Obs> = steps.iter().map(|&(z, _)| z).collect();
        observations.push(last);
        Self {
            observations,
            actions: steps.iter().map(|&(_, a)| a).collect(),
        }
    }

    pub fn push(&mut self, action: Action, obs: Obs) {
        self.actions.push(action);
        self.observations.push(obs);
    }

    pub fn extended(&self, action: Action, obs: Obs) -> Self {
        let mut h = self.clone();
        h.push(action, obs);
        h
    }

    pub fn observations(&self) -> &[Obs] {
        &self.observations
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn last_observation(&self) -> Obs {
        *self.observations.last().expect("history is never empty")
    }

    /// Number of actions played.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// The prefix ending at observation index `k`.
    pub fn prefix(&self, k: usize) -> Self {
        Self {
            observations: self.observations[..=k].to_vec(),
            actions: self.actions[..k].to_vec(),
        }
    }

    /// Observation/action pairs of every step except the final observation.
    pub fn steps(&self) -> impl Iterator<Item = (Obs, Action)> + '_ {
        self.observations
            .iter()
            .copied()
            .zip(self.actions.iter().copied())
    }

    /// Renders the history with the model's symbols, e.g. `gray right gray`.
    pub fn display<'a>(&'a self, m: &'a Pomdp) -> impl fmt::Display + 'a {
        HistoryDisplay { h: self, m }
    }
}

struct HistoryDisplay<'a> {
    h: &'a History,
    m: &'a Pomdp,
}

impl fmt::Display for HistoryDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (z, a) in self.h.steps() {
            write!(f, "{} {} ", self.m.obs_name(z), self.m.action_name(a))?;
        }
        write!(f, "{}", self.m.obs_name(self.h.last_observation()))
    }
}

/// States consistent with a history: the last states of finite paths realising it.
pub fn consistent_states(m: &Pomdp, h: &History) -> BTreeSet<State> {
    let mut current = BTreeSet::new();
    if m.observation(m.initial()) == h.observations()[0] {
        current.insert(m.initial());
    }
    for (&a, &z) in h.actions().iter().zip(&h.observations()[1..]) {
        if current.is_empty() {
            break;
        }
        current = successors(m, &current, a, z);
    }
    current
}

/// One step of forward subset propagation.
pub(crate) fn successors(m: &Pomdp, from: &BTreeSet<State>, a: Action, z: Obs) -> BTreeSet<State> {
    from.iter()
        .filter_map(|&s| m.transition(s, a))
        .flatten()
        .filter(|&&(t, p)| p > 0.0 && m.observation(t) == z)
        .map(|&(t, _)| t)
        .collect()
}

/// Whether some finite path of `m` realises `h`.
pub fn validate_history(m: &Pomdp, h: &History) -> bool {
    !consistent_states(m, h).is_empty()
}
