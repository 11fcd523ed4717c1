use std::collections::BTreeMap;

use super::{Action, ModelError, Obs, Pomdp, State};

/// A sparse belief: strictly positive probabilities over states sharing one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    probs: Vec<(State, f64)>,
}

impl Belief {
    pub fn point(s: State) -> Self {
        Self {
            probs: vec![(s, 1.0)],
        }
    }

    /// Normalises `weights`, dropping non-positive entries. `None` if nothing is left.
    pub fn from_weights(weights: impl IntoIterator<Item = (State, f64)>) -> Option<Self> {
        let mut acc: BTreeMap<State, f64> = BTreeMap::new();
        for (s, w) in weights {
            if w > 0.0 {
                *acc.entry(s).or_default() += w;
            }
        }
        let total: f64 = acc.values().sum();
        if total <= 0.0 {
            return None;
        }
        Some(Self {
            probs: acc.into_iter().map(|(s, w)| (s, w / total)).collect(),
        })
    }

    pub fn initial(m: &Pomdp) -> Self {
        Self::point(m.initial())
    }

    pub fn support(&self) -> impl Iterator<Item = State> + '_ {
        self.probs.iter().map(|&(s, _)| s)
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn entries(&self) -> &[(State, f64)] {
        &self.probs
    }

    pub fn prob(&self, s: State) -> f64 {
        self.probs
            .binary_search_by_key(&s, |&(t, _)| t)
            .map(|i| self.probs[i].1)
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().map(|&(_, p)| p).sum()
    }

    /// Unnormalised successor weights grouped by observation, in observation order.
    pub fn split_by_observation(&self, m: &Pomdp, a: Action) -> Vec<(Obs, f64, Vec<(State, f64)>)> {
        let mut by_obs: BTreeMap<Obs, BTreeMap<State, f64>> = BTreeMap::new();
        for &(s, p) in &self.probs {
            if let Some(dist) = m.transition(s, a) {
                for &(t, q) in dist {
                    *by_obs
                        .entry(m.observation(t))
                        .or_default()
                        .entry(t)
                        .or_default() += p * q;
                }
            }
        }
        by_obs
            .into_iter()
            .map(|(z, w)| {
                let mass = w.values().sum();
                (z, mass, w.into_iter().collect())
            })
            .collect()
    }
}

/// Bayesian belief update after playing `a` and observing `z`.
pub fn belief_update(m: &Pomdp, b: &Belief, a: Action, z: Obs) -> Result<Belief, ModelError> {
    if let Some(s) = b.support().find(|&s| !m.is_enabled(s, a)) {
        return Err(ModelError::ActionNotEnabled { state: s, action: a });
    }
    let mut weights: BTreeMap<State, f64> = BTreeMap::new();
    for &(s, p) in b.entries() {
        for &(t, q) in m.transition(s, a).expect("checked above") {
            if m.observation(t) == z {
                *weights.entry(t).or_default() += p * q;
            }
        }
    }
    Belief::from_weights(weights).ok_or(ModelError::InconsistentObservation { action: a, obs: z })
}
