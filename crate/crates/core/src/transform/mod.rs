//! Objective reductions: discounted-reward recasting of safety and bounded
//! reach-avoid unrolling.

use std::collections::BTreeSet;

use crate::fsc::{build_product, Fsc, FscError};
use crate::model::{
    Action, Distribution, ModelError, ObjectiveKind, ObjectiveSpec, Obs, Pomdp, State,
};

pub const DEFAULT_DISCOUNT: f64 = 0.95;

/// Safety instance recast for discounted planners: bad states lead to a fresh
/// absorbing sink and every (bad observation, action) pair costs one unit.
#[derive(Clone, Debug)]
pub struct RewardPomdp {
    pub base: Pomdp,
    pub sink: State,
    pub sink_obs: Obs,
    pub bad: BTreeSet<Obs>,
    pub discount: f64,
}

impl RewardPomdp {
    /// −1 on bad observations, 0 elsewhere.
    pub fn reward(&self, z: Obs, _a: Action) -> i8 {
        if self.bad.contains(&z) {
            -1
        } else {
            0
        }
    }
}

fn fresh_name(taken: &[String], base: &str) -> String {
    let mut name = base.to_string();
    while taken.iter().any(|t| *t == name) {
        name.push('_');
    }
    name
}

fn transition_table(m: &Pomdp) -> Vec<Vec<Option<Distribution>>> {
    m.states()
        .map(|s| m.actions().map(|a| m.transition(s, a).cloned()).collect())
        .collect()
}

pub fn make_reward_pomdp(
    m: &Pomdp,
    bad: &BTreeSet<Obs>,
    discount: f64,
) -> Result<RewardPomdp, ModelError> {
    if bad.is_empty() {
        return Err(ModelError::Invalid("reward construction needs bad observations".into()));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(ModelError::Invalid(format!("discount {discount} outside (0, 1)")));
    }
    let sink = State(m.num_states());
    let sink_obs = Obs(m.num_observations());
    let mut state_names = m.state_names().to_vec();
    state_names.push(fresh_name(m.state_names(), "sink"));
    let mut obs_names = m.obs_names().to_vec();
    obs_names.push(fresh_name(m.obs_names(), "sink"));
    let mut transitions = transition_table(m);
    for s in m.states() {
        if bad.contains(&m.observation(s)) {
            transitions[s.0] = vec![Some(vec![(sink, 1.0)]); m.num_actions()];
        }
    }
    transitions.push(vec![Some(vec![(sink, 1.0)]); m.num_actions()]);
    let mut obs_of: Vec<Obs> = m.states().map(|s| m.observation(s)).collect();
    obs_of.push(sink_obs);
    let base = Pomdp::new(
        state_names,
        m.action_names().to_vec(),
        obs_names,
        transitions,
        m.initial(),
        obs_of,
        BTreeSet::new(),
        None,
    )?;
    Ok(RewardPomdp {
        base,
        sink,
        sink_obs,
        bad: bad.clone(),
        discount,
    })
}

/// Expected discounted reward of `policy` (over the original observations),
/// to absolute error `tol`.
pub fn discounted_value(rm: &RewardPomdp, policy: &Fsc, tol: f64) -> Result<f64, FscError> {
    let policy = if policy.num_observations() < rm.base.num_observations() {
        policy.extend_observations(rm.base.num_observations(), |z| rm.base.default_action(z))
    } else {
        policy.clone()
    };
    let product = build_product(&rm.base, &policy)?;
    let rewards: Vec<f64> = product
        .pairs
        .iter()
        .map(|&(s, n)| {
            let z = rm.base.observation(s);
            f64::from(rm.reward(z, policy.action(n, z)))
        })
        .collect();
    let lambda = rm.discount;
    let stop = tol * (1.0 - lambda) / (2.0 * lambda);
    let mut v = vec![0.0; product.pairs.len()];
    loop {
        let next: Vec<f64> = (0..v.len())
            .map(|i| {
                let future: f64 = product.chain.row(i).iter().map(|&(j, p)| p * v[j]).sum();
                rewards[i] + lambda * future
            })
            .collect();
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if delta <= stop {
            break;
        }
    }
    Ok(v[product.chain.initial()])
}

/// Reduces bounded reach-avoid to safety on the product with a step counter.
///
/// State `(s, t)` keeps the observation of `s`. A good observation moves to a
/// fresh absorbing `done` state; a bad observation or an exhausted counter
/// moves to a fresh absorbing `fail` state with its own bad observation. The
/// returned set is the original bad set plus that observation.
pub fn unroll_reach_avoid(
    m: &Pomdp,
    spec: &ObjectiveSpec,
) -> Result<(Pomdp, BTreeSet<Obs>), ModelError> {
    spec.validate()?;
    if spec.kind != ObjectiveKind::BoundedReachAvoid {
        return Err(ModelError::Invalid("expected a bounded reach-avoid objective".into()));
    }
    let horizon = spec.horizon.expect("validated");
    let good = spec.good.as_ref().expect("validated");
    let n = m.num_states();
    let layer = |s: State, t: usize| State(t * n + s.0);
    let done = State(n * (horizon + 1));
    let fail = State(done.0 + 1);
    let done_obs = Obs(m.num_observations());
    let fail_obs = Obs(done_obs.0 + 1);

    let mut state_names = Vec::with_capacity(fail.0 + 1);
    let mut obs_of = Vec::with_capacity(fail.0 + 1);
    let mut transitions = Vec::with_capacity(fail.0 + 1);
    for t in 0..=horizon {
        for s in m.states() {
            state_names.push(format!("{}@{t}", m.state_name(s)));
            let z = m.observation(s);
            obs_of.push(z);
            let jump = if good.contains(&z) {
                Some(done)
            } else if spec.bad.contains(&z) || t == horizon {
                Some(fail)
            } else {
                None
            };
            let row = m
                .actions()
                .map(|a| {
                    let dist = m.transition(s, a)?;
                    Some(match jump {
                        Some(sink) => vec![(sink, 1.0)],
                        None => dist.iter().map(|&(u, p)| (layer(u, t + 1), p)).collect(),
                    })
                })
                .collect();
            transitions.push(row);
        }
    }
    let taken: Vec<String> = state_names.clone();
    state_names.push(fresh_name(&taken, "done"));
    state_names.push(fresh_name(&taken, "fail"));
    obs_of.push(done_obs);
    obs_of.push(fail_obs);
    transitions.push(vec![Some(vec![(done, 1.0)]); m.num_actions()]);
    transitions.push(vec![Some(vec![(fail, 1.0)]); m.num_actions()]);
    let mut obs_names = m.obs_names().to_vec();
    let done_name = fresh_name(&obs_names, "done");
    obs_names.push(done_name);
    let fail_name = fresh_name(&obs_names, "fail");
    obs_names.push(fail_name);

    let mut bad = spec.bad.clone();
    bad.insert(fail_obs);
    let unrolled = Pomdp::new(
        state_names,
        m.action_names().to_vec(),
        obs_names,
        transitions,
        layer(m.initial(), 0),
        obs_of,
        bad.clone(),
        None,
    )?;
    Ok((unrolled, bad))
}
