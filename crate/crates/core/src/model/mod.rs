//! POMDPs, Markov chains, histories and beliefs.

mod belief;
mod history;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use belief::{belief_update, Belief};
pub use history::{validate_history, History};
pub use parse::{parse_model, serialize_model};

/// Tolerance for probability mass bookkeeping on validated models.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

macro_rules! index_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        pub struct $name(pub usize);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

index_type!(
    /// Index of a POMDP state.
    State
);
index_type!(
    /// Index of a POMDP action.
    Action
);
index_type!(
    /// Index of a POMDP observation.
    Obs
);

/// A sparse distribution over states, sorted by state index, without zero entries.
pub type Distribution = Vec<(State, f64)>;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown {kind} `{name}`")]
    UnknownIdentifier {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("line {line}: distribution sum of `{state}` under `{action}` is {sum}, expected 1")]
    DistributionSum {
        line: usize,
        state: String,
        action: String,
        sum: f64,
    },
    #[error("state `{0}` has no enabled action")]
    NoEnabledAction(String),
    #[error("state `{0}` has no observation")]
    MissingObservation(String),
    #[error("initial observation `{0}` is bad")]
    InitialStateBad(String),
    #[error("observation {obs} is impossible after action {action} from the current belief")]
    InconsistentObservation { action: Action, obs: Obs },
    #[error("action {action} is not enabled in state {state}")]
    ActionNotEnabled { state: State, action: Action },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// A finite POMDP with partial transition function and labelled bad/good observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Pomdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    obs_names: Vec<String>,
    /// `transitions[s][a]` is `None` when `a` is not enabled in `s`.
    transitions: Vec<Vec<Option<Distribution>>>,
    initial: State,
    obs_of: Vec<Obs>,
    obs_states: Vec<Vec<State>>,
    bad: BTreeSet<Obs>,
    good: Option<BTreeSet<Obs>>,
}

impl Pomdp {
    /// Builds and validates a POMDP.
    ///
    /// Distributions are normalised when they are off by more than
    /// [`STOCHASTIC_TOLERANCE`] and rejected when off by more than `1e-9`.
    /// States carrying a bad observation become absorbing under every action.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_names: Vec<String>,
        action_names: Vec<String>,
        obs_names: Vec<String>,
        transitions: Vec<Vec<Option<Distribution>>>,
        initial: State,
        obs_of: Vec<Obs>,
        bad: BTreeSet<Obs>,
        good: Option<BTreeSet<Obs>>,
    ) -> Result<Self, ModelError> {
        let n = state_names.len();
        if n == 0 {
            return Err(ModelError::Invalid("no states".into()));
        }
        if action_names.is_empty() || obs_names.is_empty() {
            return Err(ModelError::Invalid("no actions or no observations".into()));
        }
        if transitions.len() != n || obs_of.len() != n {
            return Err(ModelError::Invalid("per-state tables have the wrong length".into()));
        }
        if initial.0 >= n {
            return Err(ModelError::Invalid("initial state out of range".into()));
        }
        if let Some(o) = obs_of.iter().find(|o| o.0 >= obs_names.len()) {
            return Err(ModelError::Invalid(format!("observation {o} out of range")));
        }
        if let Some(o) = bad
            .iter()
            .chain(good.iter().flatten())
            .find(|o| o.0 >= obs_names.len())
        {
            return Err(ModelError::Invalid(format!("observation {o} out of range")));
        }
        let mut transitions = transitions;
        for (s, row) in transitions.iter_mut().enumerate() {
            if row.len() != action_names.len() {
                return Err(ModelError::Invalid(format!(
                    "state `{}` has {} action slots",
                    state_names[s],
                    row.len()
                )));
            }
            if bad.contains(&obs_of[s]) {
                for slot in row.iter_mut() {
                    *slot = Some(vec![(State(s), 1.0)]);
                }
                continue;
            }
            for (a, slot) in row.iter_mut().enumerate() {
                if let Some(dist) = slot {
                    *dist = canonical_distribution(std::mem::take(dist), n).map_err(|sum| {
                        ModelError::DistributionSum {
                            line: 0,
                            state: state_names[s].clone(),
                            action: action_names[a].clone(),
                            sum,
                        }
                    })?;
                }
            }
            if row.iter().all(Option::is_none) {
                return Err(ModelError::NoEnabledAction(state_names[s].clone()));
            }
        }
        if bad.contains(&obs_of[initial.0]) {
            return Err(ModelError::InitialStateBad(
                obs_names[obs_of[initial.0].0].clone(),
            ));
        }
        let mut obs_states = vec![Vec::new(); obs_names.len()];
        for (s, o) in obs_of.iter().enumerate() {
            obs_states[o.0].push(State(s));
        }
        Ok(Self {
            state_names,
            action_names,
            obs_names,
            transitions,
            initial,
            obs_of,
            obs_states,
            bad,
            good,
        })
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_observations(&self) -> usize {
        self.obs_names.len()
    }

    pub fn initial(&self) -> State {
        self.initial
    }

    pub fn observation(&self, s: State) -> Obs {
        self.obs_of[s.0]
    }

    /// States sharing observation `z`.
    pub fn states_with(&self, z: Obs) -> &[State] {
        &self.obs_states[z.0]
    }

    pub fn transition(&self, s: State, a: Action) -> Option<&Distribution> {
        self.transitions[s.0][a.0].as_ref()
    }

    pub fn is_enabled(&self, s: State, a: Action) -> bool {
        self.transitions[s.0][a.0].is_some()
    }

    pub fn enabled_actions(&self, s: State) -> impl Iterator<Item = Action> + '_ {
        self.transitions[s.0]
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_some())
            .map(|(a, _)| Action(a))
    }

    /// Actions enabled in every state of `states` (all actions for an empty set).
    pub fn common_actions<'a>(
        &'a self,
        states: impl IntoIterator<Item = &'a State> + Clone,
    ) -> Vec<Action> {
        self.actions()
            .filter(|&a| states.clone().into_iter().all(|&s| self.is_enabled(s, a)))
            .collect()
    }

    /// Fallback action for an observation no query ever answered: the lowest
    /// action enabled in all states carrying `z`, else the lowest enabled in any.
    pub fn default_action(&self, z: Obs) -> Action {
        let states = self.states_with(z);
        if let Some(&a) = self.common_actions(states).first() {
            if !states.is_empty() {
                return a;
            }
        }
        states
            .iter()
            .flat_map(|&s| self.enabled_actions(s))
            .min()
            .unwrap_or(Action(0))
    }

    pub fn states(&self) -> impl Iterator<Item = State> {
        (0..self.num_states()).map(State)
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> {
        (0..self.num_actions()).map(Action)
    }

    pub fn observations(&self) -> impl Iterator<Item = Obs> {
        (0..self.num_observations()).map(Obs)
    }

    pub fn state_name(&self, s: State) -> &str {
        &self.state_names[s.0]
    }

    pub fn action_name(&self, a: Action) -> &str {
        &self.action_names[a.0]
    }

    pub fn obs_name(&self, z: Obs) -> &str {
        &self.obs_names[z.0]
    }

    pub fn state_by_name(&self, name: &str) -> Option<State> {
        self.state_names.iter().position(|n| n == name).map(State)
    }

    pub fn action_by_name(&self, name: &str) -> Option<Action> {
        self.action_names.iter().position(|n| n == name).map(Action)
    }

    pub fn obs_by_name(&self, name: &str) -> Option<Obs> {
        self.obs_names.iter().position(|n| n == name).map(Obs)
    }

    pub fn bad_observations(&self) -> &BTreeSet<Obs> {
        &self.bad
    }

    pub fn good_observations(&self) -> Option<&BTreeSet<Obs>> {
        self.good.as_ref()
    }

    pub fn is_bad(&self, z: Obs) -> bool {
        self.bad.contains(&z)
    }

    pub fn is_bad_state(&self, s: State) -> bool {
        self.is_bad(self.observation(s))
    }

    pub(crate) fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub(crate) fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub(crate) fn obs_names(&self) -> &[String] {
        &self.obs_names
    }

    /// Same dynamics with a different bad label (states newly labelled bad become sinks).
    pub fn with_bad(&self, bad: BTreeSet<Obs>) -> Result<Self, ModelError> {
        Self::new(
            self.state_names.clone(),
            self.action_names.clone(),
            self.obs_names.clone(),
            self.transitions.clone(),
            self.initial,
            self.obs_of.clone(),
            bad,
            self.good.clone(),
        )
    }

    /// Safety objective over the model's bad label.
    pub fn safety_spec(&self, alpha: f64) -> Result<ObjectiveSpec, ModelError> {
        ObjectiveSpec::safety(self.bad.clone(), alpha)
    }
}

fn canonical_distribution(mut dist: Distribution, n: usize) -> Result<Distribution, f64> {
    dist.retain(|&(_, p)| p > 0.0);
    dist.sort_by_key(|&(s, _)| s);
    // merge duplicate successors
    let mut merged: Distribution = Vec::with_capacity(dist.len());
    for (s, p) in dist {
        match merged.last_mut() {
            Some((last, q)) if *last == s => *q += p,
            _ => merged.push((s, p)),
        }
    }
    if merged.iter().any(|&(s, p)| s.0 >= n || !p.is_finite()) {
        return Err(f64::NAN);
    }
    let sum: f64 = merged.iter().map(|&(_, p)| p).sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(sum);
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
        for (_, p) in &mut merged {
            *p /= sum;
        }
    }
    Ok(merged)
}

/// A finite Markov chain with sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    rows: Vec<Vec<(usize, f64)>>,
    initial: usize,
}

impl MarkovChain {
    pub fn new(rows: Vec<Vec<(usize, f64)>>, initial: usize) -> Result<Self, ModelError> {
        let n = rows.len();
        if initial >= n {
            return Err(ModelError::Invalid("initial state out of range".into()));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.iter().any(|&(t, p)| t >= n || !(0.0..=1.0).contains(&p)) {
                return Err(ModelError::Invalid(format!("row {s} is malformed")));
            }
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ModelError::Invalid(format!("row {s} sums to {sum}")));
            }
        }
        Ok(Self { rows, initial })
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn prob(&self, s: usize, t: usize) -> f64 {
        self.rows[s]
            .iter()
            .filter(|&&(u, _)| u == t)
            .map(|&(_, p)| p)
            .sum()
    }

    /// Same chain with states renumbered by `perm` (old index -> new index).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut rows = vec![Vec::new(); self.rows.len()];
        for (s, row) in self.rows.iter().enumerate() {
            rows[perm[s]] = row.iter().map(|&(t, p)| (perm[t], p)).collect();
        }
        Self {
            rows,
            initial: perm[self.initial],
        }
    }
}

/// Probability of a finite path: product of consecutive transition probabilities.
pub fn path_probability(mc: &MarkovChain, path: &[usize]) -> f64 {
    path.windows(2).map(|w| mc.prob(w[0], w[1])).product()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    Safety,
    BoundedReachAvoid,
}

/// Threshold objective: avoid `bad` (and, for reach-avoid, reach `good` within `horizon`)
/// with probability strictly above `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub bad: BTreeSet<Obs>,
    pub good: Option<BTreeSet<Obs>>,
    pub horizon: Option<usize>,
    pub alpha: f64,
}

impl ObjectiveSpec {
    pub fn safety(bad: BTreeSet<Obs>, alpha: f64) -> Result<Self, ModelError> {
        let spec = Self {
            kind: ObjectiveKind::Safety,
            bad,
            good: None,
            horizon: None,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bounded_reach_avoid(
        bad: BTreeSet<Obs>,
        good: BTreeSet<Obs>,
        horizon: usize,
        alpha: f64,
    ) -> Result<Self, ModelError> {
        let spec = Self {
            kind: ObjectiveKind::BoundedReachAvoid,
            bad,
            good: Some(good),
            horizon: Some(horizon),
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(ModelError::Invalid(format!(
                "threshold {} outside [0, 1)",
                self.alpha
            )));
        }
        if self.kind == ObjectiveKind::BoundedReachAvoid
            && (self.horizon.is_none() || self.good.is_none())
        {
            return Err(ModelError::Invalid(
                "bounded reach-avoid needs a horizon and good observations".into(),
            ));
        }
        Ok(())
    }
}
