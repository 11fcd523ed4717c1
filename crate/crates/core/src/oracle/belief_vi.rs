use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Mutex;

use super::{belief_after, common_actions, ActionOracle, OracleError};
use crate::model::{Action, History, Obs, Pomdp, State};

const TIE_EPS: f64 = 1e-12;
const QUANTUM: f64 = 1e9;

type Key = (Vec<(usize, u64)>, usize);

/// Exact finite-lookahead planner on the belief MDP: maximises the probability
/// of seeing no bad observation during the next `horizon` steps.
pub struct BeliefViOracle {
    m: Pomdp,
    bad: BTreeSet<Obs>,
    horizon: usize,
    /// States from which no action sequence reaches a bad observation.
    safe: Vec<bool>,
    memo: Mutex<HashMap<Key, f64>>,
}

impl BeliefViOracle {
    pub fn new(m: Pomdp, bad: BTreeSet<Obs>, horizon: usize) -> Self {
        let safe = never_bad(&m, &bad);
        Self {
            m,
            bad,
            horizon,
            safe,
            memo: Mutex::new(HashMap::new()),
        }
    }

    /// Lookahead of three times the state count.
    pub fn with_default_horizon(m: Pomdp, bad: BTreeSet<Obs>) -> Self {
        let horizon = 3 * m.num_states();
        Self::new(m, bad, horizon)
    }

    pub fn model(&self) -> &Pomdp {
        &self.m
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Probability of avoiding bad for `horizon` steps after `a`, then acting optimally.
    pub fn q_values(&self, h: &History) -> Result<Vec<(Action, f64)>, OracleError> {
        let b = belief_after(&self.m, h)?;
        let actions = common_actions(&self.m, h, &b)?;
        let mut memo = self.memo.lock().expect("memo lock");
        Ok(actions
            .into_iter()
            .map(|a| (a, self.q(b.entries(), a, self.horizon, f64::NEG_INFINITY, &mut memo)))
            .collect())
    }

    fn q(
        &self,
        b: &[(State, f64)],
        a: Action,
        depth: usize,
        floor: f64,
        memo: &mut HashMap<Key, f64>,
    ) -> f64 {
        if depth == 0 {
            return 1.0;
        }
        let mut split: Vec<(Obs, f64, Vec<(State, f64)>)> = Vec::new();
        for &(s, p) in b {
            for &(t, q) in self.m.transition(s, a).into_iter().flatten() {
                let z = self.m.observation(t);
                let idx = match split.iter().position(|e| e.0 == z) {
                    Some(i) => i,
                    None => {
                        split.push((z, 0.0, Vec::new()));
                        split.len() - 1
                    }
                };
                split[idx].1 += p * q;
                split[idx].2.push((t, p * q));
            }
        }
        split.sort_by_key(|e| e.0);
        let mut remaining: f64 = split
            .iter()
            .filter(|e| !self.bad.contains(&e.0))
            .map(|e| e.1)
            .sum();
        let mut total = 0.0;
        for (z, mass, weights) in split {
            if self.bad.contains(&z) {
                continue;
            }
            if total + remaining <= floor {
                // cannot beat the floor any more
                return total + remaining;
            }
            remaining -= mass;
            let child = normalise(weights, mass);
            total += mass * self.value(&child, depth - 1, memo);
        }
        total
    }

    fn value(&self, b: &[(State, f64)], depth: usize, memo: &mut HashMap<Key, f64>) -> f64 {
        if depth == 0 || b.iter().all(|&(s, _)| self.safe[s.0]) {
            return 1.0;
        }
        let key = (quantise(b), depth);
        if let Some(&v) = memo.get(&key) {
            return v;
        }
        let actions = self
            .m
            .actions()
            .filter(|&a| b.iter().all(|&(s, _)| self.m.is_enabled(s, a)));
        let mut best = 0.0;
        for a in actions {
            let v = self.q(b, a, depth, best, memo);
            if v > best {
                best = v;
            }
        }
        memo.insert(key, best);
        best
    }
}

impl ActionOracle for BeliefViOracle {
    fn best_action(&self, h: &History) -> Result<Action, OracleError> {
        let b = belief_after(&self.m, h)?;
        let actions = common_actions(&self.m, h, &b)?;
        let mut memo = self.memo.lock().expect("memo lock");
        let mut best: Option<(Action, f64)> = None;
        for a in actions {
            let floor = best.map_or(f64::NEG_INFINITY, |(_, v)| v + TIE_EPS);
            let v = self.q(b.entries(), a, self.horizon, floor, &mut memo);
            if best.map_or(true, |(_, bv)| v > bv + TIE_EPS) {
                best = Some((a, v));
            }
        }
        Ok(best.expect("at least one common action").0)
    }
}

fn normalise(mut weights: Vec<(State, f64)>, mass: f64) -> Vec<(State, f64)> {
    weights.sort_by_key(|&(s, _)| s);
    let mut merged: Vec<(State, f64)> = Vec::with_capacity(weights.len());
    for (s, w) in weights {
        match merged.last_mut() {
            Some((t, acc)) if *t == s => *acc += w,
            _ => merged.push((s, w)),
        }
    }
    for (_, w) in &mut merged {
        *w /= mass;
    }
    merged
}

fn quantise(b: &[(State, f64)]) -> Vec<(usize, u64)> {
    b.iter()
        .map(|&(s, p)| (s.0, (p * QUANTUM).round() as u64))
        .collect()
}

fn never_bad(m: &Pomdp, bad: &BTreeSet<Obs>) -> Vec<bool> {
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); m.num_states()];
    for s in m.states() {
        for a in m.actions() {
            for &(t, _) in m.transition(s, a).into_iter().flatten() {
                preds[t.0].push(s.0);
            }
        }
    }
    let mut reaches: Vec<bool> = m.states().map(|s| bad.contains(&m.observation(s))).collect();
    let mut queue: VecDeque<usize> = (0..m.num_states()).filter(|&s| reaches[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t] {
            if !reaches[s] {
                reaches[s] = true;
                queue.push_back(s);
            }
        }
    }
    reaches.into_iter().map(|r| !r).collect()
}
