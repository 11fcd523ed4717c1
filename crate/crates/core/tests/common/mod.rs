//! Generators and independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use cplus::fsc::{parse_fsc, Fsc};
use cplus::model::{Action, MarkovChain, Obs, Pomdp, State};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRID: &str = include_str!("../../models/grid4x3.pom");
pub const FOUR_NODE: &str = include_str!("../../models/four_node.fsc");
pub const ALWAYS_RIGHT: &str = include_str!("../../models/always_right.fsc");

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `parts` positive multiples of 1/16 summing to exactly 1.
pub fn dyadic_split(rng: &mut impl Rng, parts: usize) -> Vec<f64> {
    let units = 16;
    let parts = parts.clamp(1, units);
    let mut cuts: Vec<usize> = (1..units).collect::<Vec<_>>();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts[..parts - 1].to_vec();
    cuts.sort_unstable();
    let mut prev = 0;
    let mut out = Vec::with_capacity(parts);
    for c in cuts.into_iter().chain([units]) {
        out.push((c - prev) as f64 / units as f64);
        prev = c;
    }
    out
}

fn random_row(rng: &mut impl Rng, n: usize, max_succ: usize) -> Vec<(usize, f64)> {
    let k = rng.gen_range(1..=max_succ.min(n));
    let mut targets: Vec<usize> = (0..n).collect();
    targets.shuffle(rng);
    targets.truncate(k);
    targets.into_iter().zip(dyadic_split(rng, k)).collect()
}

/// Random chain on `n` states; bad states are absorbing and at least one is
/// reachable from the initial state 0.
pub fn random_mc(rng: &mut impl Rng, n: usize, num_bad: usize) -> (MarkovChain, Vec<bool>) {
    random_mc_with_leak(rng, n, num_bad, false)
}

/// As [`random_mc`]; with `leak`, every transient state also has a direct
/// edge to some bad state, which keeps first-visit paths short.
pub fn random_mc_with_leak(rng: &mut impl Rng, n: usize, num_bad: usize, leak: bool) -> (MarkovChain, Vec<bool>) {
    assert!(n >= 2 && num_bad >= 1 && num_bad < n);
    let mut bad = vec![false; n];
    for s in n - num_bad..n {
        bad[s] = true;
    }
    loop {
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|s| {
                if bad[s] {
                    return vec![(s, 1.0)];
                }
                let mut row = random_row(rng, n, 3);
                if leak && row.iter().all(|&(t, _)| !bad[t]) {
                    let target = rng.gen_range(n - num_bad..n);
                    let k = rng.gen_range(0..row.len());
                    row[k].1 /= 2.0;
                    row.push((target, row[k].1));
                }
                row
            })
            .collect();
        let mc = MarkovChain::new(rows, 0).unwrap();
        if reachable(&mc).iter().zip(&bad).any(|(&r, &b)| r && b) {
            return (mc, bad);
        }
    }
}

pub fn reachable(mc: &MarkovChain) -> Vec<bool> {
    let mut seen = vec![false; mc.num_states()];
    let mut queue = VecDeque::from([mc.initial()]);
    seen[mc.initial()] = true;
    while let Some(s) = queue.pop_front() {
        for &(t, p) in mc.row(s) {
            if p > 0.0 && !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    seen
}

/// Pr(◇bad) from every state by Gaussian elimination over exact rationals.
pub fn exact_reach(mc: &MarkovChain, bad: &[bool]) -> Vec<BigRational> {
    let n = mc.num_states();
    let mut can = bad.to_vec();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if !can[s] && mc.row(s).iter().any(|&(t, p)| p > 0.0 && can[t]) {
                can[s] = true;
                changed = true;
            }
        }
    }
    let unknown: Vec<usize> = (0..n).filter(|&s| can[s] && !bad[s]).collect();
    let index = |s: usize| unknown.iter().position(|&u| u == s);
    let k = unknown.len();
    let rat = decimal;
    // rows of [I - A | b]
    let mut a: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); k + 1]; k];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] = BigRational::one();
        for &(t, p) in mc.row(s) {
            if bad[t] {
                a[i][k] += rat(p);
            } else if let Some(j) = index(t) {
                a[i][j] -= rat(p);
            }
        }
    }
    for col in 0..k {
        let pivot = (col..k).find(|&r| !a[r][col].is_zero()).expect("nonsingular system");
        a.swap(col, pivot);
        let inv = BigRational::one() / a[col][col].clone();
        for c in col..=k {
            a[col][c] = a[col][c].clone() * inv.clone();
        }
        for r in 0..k {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in col..=k {
                    let d = f.clone() * a[col][c].clone();
                    a[r][c] -= d;
                }
            }
        }
    }
    (0..n)
        .map(|s| {
            if bad[s] {
                BigRational::one()
            } else {
                index(s).map_or_else(BigRational::zero, |i| a[i][k].clone())
            }
        })
        .collect()
}

/// The decimal number `p` prints as, as an exact rational (`0.9` is 9/10).
pub fn decimal(p: f64) -> BigRational {
    let text = p.to_string();
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    let digits: BigInt = format!("{int}{frac}").parse().expect("decimal digits");
    BigRational::new(digits, BigInt::from(10).pow(frac.len() as u32))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("representable")
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Random POMDP with every action enabled everywhere. The last state carries
/// the only bad observation `bad`; the initial state has observation `o0`.
pub fn random_pomdp(rng: &mut impl Rng, num_states: usize, num_actions: usize, num_obs: usize) -> Pomdp {
    assert!(num_states >= 2 && num_obs >= 2);
    let bad_state = num_states - 1;
    let bad_obs = Obs(num_obs - 1);
    let obs_of: Vec<Obs> = (0..num_states)
        .map(|s| match s {
            0 => Obs(0),
            s if s == bad_state => bad_obs,
            _ => Obs(rng.gen_range(0..num_obs - 1)),
        })
        .collect();
    let transitions = (0..num_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| {
                    let row = random_row(rng, num_states, 3);
                    Some(row.into_iter().map(|(t, p)| (State(t), p)).collect())
                })
                .collect()
        })
        .collect();
    let mut obs_names: Vec<String> = (0..num_obs - 1).map(|z| format!("o{z}")).collect();
    obs_names.push("bad".into());
    Pomdp::new(
        (0..num_states).map(|s| format!("s{s}")).collect(),
        (0..num_actions).map(|a| format!("a{a}")).collect(),
        obs_names,
        transitions,
        State(0),
        obs_of,
        BTreeSet::from([bad_obs]),
        None,
    )
    .unwrap()
}

pub fn random_fsc(rng: &mut impl Rng, nodes: usize, m: &Pomdp) -> Fsc {
    let z = m.num_observations();
    let actions = (0..nodes)
        .map(|_| (0..z).map(|_| Action(rng.gen_range(0..m.num_actions()))).collect())
        .collect();
    let next = (0..nodes)
        .map(|_| (0..z).map(|_| rng.gen_range(0..nodes)).collect())
        .collect();
    Fsc::from_tables(actions, next, 0).unwrap()
}

/// Best probability of seeing no bad observation in the next `depth` steps
/// from the unnormalised state weights `v`, maximised over all observation-based
/// decision trees, by plain recursion over the history tree.
pub fn tree_value(m: &Pomdp, v: &[(State, f64)], depth: usize) -> f64 {
    if depth == 0 {
        return v.iter().map(|&(_, p)| p).sum();
    }
    m.actions()
        .filter(|&a| v.iter().all(|&(s, _)| m.is_enabled(s, a)))
        .map(|a| tree_q(m, v, a, depth))
        .fold(0.0, f64::max)
}

pub fn tree_q(m: &Pomdp, v: &[(State, f64)], a: Action, depth: usize) -> f64 {
    let mut by_obs: Vec<(Obs, Vec<(State, f64)>)> = Vec::new();
    for &(s, p) in v {
        for &(t, q) in m.transition(s, a).into_iter().flatten() {
            let z = m.observation(t);
            if m.is_bad(z) {
                continue;
            }
            let slot = match by_obs.iter().position(|e| e.0 == z) {
                Some(i) => i,
                None => {
                    by_obs.push((z, Vec::new()));
                    by_obs.len() - 1
                }
            };
            match by_obs[slot].1.iter_mut().find(|e| e.0 == t) {
                Some(e) => e.1 += p * q,
                None => by_obs[slot].1.push((t, p * q)),
            }
        }
    }
    by_obs.iter().map(|(_, w)| tree_value(m, w, depth - 1)).sum()
}

/// The wait-for-a-second-card policy for the three-card removed game.
pub fn wait_then_guess(m: &Pomdp) -> Fsc {
    let mut text = String::from("init: p0\np0 o0 -> draw p1\np1 0 -> draw p1\n");
    for j in 1..=3 {
        text += &format!("p1 {j} -> draw p2_{j}\np2_{j} {j} -> draw p2_{j}\np2_{j} 0 -> draw p2_{j}\n");
        for k in (1..=3).filter(|&k| k != j) {
            let missing = 6 - j - k;
            text += &format!("p2_{j} {k} -> guess{missing} p3\n");
        }
    }
    for z in ["0", "1", "2", "3"] {
        text += &format!("p3 {z} -> draw p3\n");
    }
    parse_fsc(&text, m).unwrap()
}
