//! Finite-state controllers (Mealy machines over observations).

mod dot;
mod product;
mod simulate;

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{Action, History, Obs, Pomdp, State};

pub use dot::{export_dot, parse_dot};
pub use product::{build_product, Product};
pub use simulate::{run_fsc, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum FscError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown {kind} `{name}`")]
    UnknownIdentifier {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error(
        "action {action} is not enabled in state {state} reached at node {node} (observation {obs})"
    )]
    DisabledAction {
        state: State,
        node: usize,
        obs: Obs,
        action: Action,
    },
    #[error("controller is malformed: {0}")]
    Malformed(String),
}

/// A deterministic finite-state controller: γ (action map) and δ (node update)
/// are total on nodes × observations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fsc {
    num_obs: usize,
    actions: Vec<Action>,
    next: Vec<usize>,
    initial: usize,
}

impl Fsc {
    /// `actions[n][z]` and `next[n][z]` for every node `n` and observation `z`.
    pub fn from_tables(
        actions: Vec<Vec<Action>>,
        next: Vec<Vec<usize>>,
        initial: usize,
    ) -> Result<Self, FscError> {
        let nodes = actions.len();
        if nodes == 0 || next.len() != nodes || initial >= nodes {
            return Err(FscError::Malformed("node tables disagree".into()));
        }
        let num_obs = actions[0].len();
        if actions.iter().any(|r| r.len() != num_obs)
            || next.iter().any(|r| r.len() != num_obs || r.iter().any(|&n| n >= nodes))
        {
            return Err(FscError::Malformed("rows must cover every observation".into()));
        }
        Ok(Self {
            num_obs,
            actions: actions.into_iter().flatten().collect(),
            next: next.into_iter().flatten().collect(),
            initial,
        })
    }

    /// Memoryless controller playing `action_for(z)` on every observation.
    pub fn memoryless(num_obs: usize, action_for: impl Fn(Obs) -> Action) -> Self {
        Self {
            num_obs,
            actions: (0..num_obs).map(|z| action_for(Obs(z))).collect(),
            next: vec![0; num_obs],
            initial: 0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.actions.len() / self.num_obs.max(1)
    }

    pub fn num_observations(&self) -> usize {
        self.num_obs
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn action(&self, node: usize, z: Obs) -> Action {
        self.actions[node * self.num_obs + z.0]
    }

    pub fn next(&self, node: usize, z: Obs) -> usize {
        self.next[node * self.num_obs + z.0]
    }

    /// Node reached after reading `observations` from the initial node.
    pub fn node_after(&self, observations: &[Obs]) -> usize {
        observations
            .iter()
            .fold(self.initial, |n, &z| self.next(n, z))
    }

    /// Action chosen after the observations of `h` (its actions are ignored).
    pub fn action_after(&self, h: &History) -> Action {
        let obs = h.observations();
        let (last, before) = obs.split_last().expect("history is never empty");
        self.action(self.node_after(before), *last)
    }

    /// Same controller over a larger observation alphabet; new observations
    /// play `fill(z)` and keep the node.
    pub fn extend_observations(&self, num_obs: usize, fill: impl Fn(Obs) -> Action) -> Self {
        assert!(num_obs >= self.num_obs);
        let nodes = self.num_nodes();
        let mut actions = Vec::with_capacity(nodes * num_obs);
        let mut next = Vec::with_capacity(nodes * num_obs);
        for n in 0..nodes {
            for z in 0..num_obs {
                if z < self.num_obs {
                    actions.push(self.action(n, Obs(z)));
                    next.push(self.next(n, Obs(z)));
                } else {
                    actions.push(fill(Obs(z)));
                    next.push(n);
                }
            }
        }
        Self {
            num_obs,
            actions,
            next,
            initial: self.initial,
        }
    }
}

/// Parses `node obs -> action node` lines against `m`'s symbols.
///
/// An optional `init: <node>` line picks the initial node (default: the first
/// node mentioned). Unlisted (node, observation) pairs keep their node and
/// play the model's default action for that observation.
pub fn parse_fsc(text: &str, m: &Pomdp) -> Result<Fsc, FscError> {
    let mut node_index: HashMap<String, usize> = HashMap::new();
    let intern = |name: &str, index: &mut HashMap<String, usize>| {
        let len = index.len();
        *index.entry(name.to_string()).or_insert(len)
    };
    let mut init = None;
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix("init:") {
            let name = rest.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(FscError::Parse {
                    line,
                    message: "expected `init: <node>`".into(),
                });
            }
            init = Some(intern(name, &mut node_index));
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let [from, z, "->", a, to] = tokens[..] else {
            return Err(FscError::Parse {
                line,
                message: "expected `node observation -> action node`".into(),
            });
        };
        let z = m.obs_by_name(z).ok_or_else(|| FscError::UnknownIdentifier {
            line,
            kind: "observation",
            name: z.to_string(),
        })?;
        let a = m.action_by_name(a).ok_or_else(|| FscError::UnknownIdentifier {
            line,
            kind: "action",
            name: a.to_string(),
        })?;
        let from = intern(from, &mut node_index);
        let to = intern(to, &mut node_index);
        edges.push((line, from, z, a, to));
    }
    let nodes = node_index.len();
    if nodes == 0 {
        return Err(FscError::Malformed("no nodes".into()));
    }
    let num_obs = m.num_observations();
    let mut actions: Vec<Vec<Option<Action>>> = vec![vec![None; num_obs]; nodes];
    let mut next: Vec<Vec<usize>> = (0..nodes).map(|n| vec![n; num_obs]).collect();
    for (line, from, z, a, to) in edges {
        if actions[from][z.0].replace(a).is_some() {
            return Err(FscError::Parse {
                line,
                message: "duplicate (node, observation) entry".into(),
            });
        }
        next[from][z.0] = to;
    }
    let actions = actions
        .into_iter()
        .map(|row| {
            row.into_iter()
                .enumerate()
                .map(|(z, a)| a.unwrap_or_else(|| m.default_action(Obs(z))))
                .collect()
        })
        .collect();
    Fsc::from_tables(actions, next, init.unwrap_or(0))
}

/// Writes every (node, observation) entry as `n<i> obs -> action n<j>`.
pub fn serialize_fsc(f: &Fsc, m: &Pomdp) -> String {
    let mut out = format!("init: n{}\n", f.initial());
    for n in 0..f.num_nodes() {
        for z in (0..f.num_observations()).map(Obs) {
            let _ = writeln!(
                out,
                "n{n} {} -> {} n{}",
                m.obs_name(z),
                m.action_name(f.action(n, z)),
                f.next(n, z)
            );
        }
    }
    out
}
