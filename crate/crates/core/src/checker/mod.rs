//! Safety probabilities on finite Markov chains and probabilistic counterexamples.

mod counterexample;

use std::collections::VecDeque;

use thiserror::Error;

use crate::model::MarkovChain;

pub use counterexample::{enumerate_counterexample, Counterexample, PathEnumerator, DEFAULT_PATH_CAP};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum CheckError {
    #[error("target mass {mass} is not exceeded by Pr(reach bad) = {reach}")]
    Infeasible { mass: f64, reach: f64 },
    #[error("counterexample enumeration hit its cap ({0} paths) without exceeding the target mass")]
    PathCap(usize),
    #[error("threshold alpha must lie in [0, 1), got {0}")]
    Alpha(f64),
}

/// Graph precomputation: `(zero, one)` where `zero[s]` iff bad is unreachable
/// from `s` and `one[s]` iff bad is reached almost surely.
pub fn graph_precompute(mc: &MarkovChain, bad: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let n = mc.num_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        for &(t, p) in mc.row(s) {
            if p > 0.0 {
                preds[t].push(s);
            }
        }
    }
    // backward search from bad
    let mut can_reach = bad.to_vec();
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| bad[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t] {
            if !can_reach[s] {
                can_reach[s] = true;
                queue.push_back(s);
            }
        }
    }
    let zero: Vec<bool> = can_reach.iter().map(|&r| !r).collect();
    // states that can reach a zero state while avoiding bad have value < 1
    let mut escapes = zero.clone();
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| zero[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t] {
            if !escapes[s] && !bad[s] {
                escapes[s] = true;
                queue.push_back(s);
            }
        }
    }
    let one = escapes.iter().map(|&e| !e).collect();
    (zero, one)
}

/// Lower and upper bounds on Pr(◇bad) from the initial state, at most `tol` apart.
pub fn reach_bounds(mc: &MarkovChain, bad: &[bool], tol: f64) -> (f64, f64) {
    let (lo, hi) = reach_bounds_all(mc, bad, tol);
    (lo[mc.initial()], hi[mc.initial()])
}

fn reach_bounds_all(mc: &MarkovChain, bad: &[bool], tol: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(bad.len(), mc.num_states(), "one bad flag per state");
    let (zero, one) = graph_precompute(mc, bad);
    let n = mc.num_states();
    let mut lo: Vec<f64> = (0..n).map(|s| if one[s] { 1.0 } else { 0.0 }).collect();
    let mut hi: Vec<f64> = (0..n).map(|s| if zero[s] { 0.0 } else { 1.0 }).collect();
    let unknown: Vec<usize> = (0..n).filter(|&s| !zero[s] && !one[s]).collect();
    // After precomputation every unknown state leaves the unknown set with
    // positive probability, so both iterations converge to the same fixpoint.
    loop {
        let mut gap: f64 = 0.0;
        for &s in &unknown {
            let row = mc.row(s);
            let l: f64 = row.iter().map(|&(t, p)| p * lo[t]).sum();
            let h: f64 = row.iter().map(|&(t, p)| p * hi[t]).sum();
            lo[s] = l.max(lo[s]);
            hi[s] = h.min(hi[s]);
            gap = gap.max(hi[s] - lo[s]);
        }
        if gap <= tol {
            break;
        }
    }
    (lo, hi)
}

/// Pr(◇bad) from the initial state, within `tol`.
pub fn reach_probability(mc: &MarkovChain, bad: &[bool], tol: f64) -> f64 {
    let (lo, hi) = reach_bounds(mc, bad, tol);
    0.5 * (lo + hi)
}

/// Pr(□¬bad) = 1 − Pr(◇bad), within `tol`.
pub fn safety_probability(mc: &MarkovChain, bad: &[bool], tol: f64) -> f64 {
    1.0 - reach_probability(mc, bad, tol)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Holds { probability: f64 },
    Violated {
        probability: f64,
        counterexample: Counterexample,
    },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds { .. })
    }

    pub fn probability(&self) -> f64 {
        match self {
            Verdict::Holds { probability } | Verdict::Violated { probability, .. } => *probability,
        }
    }
}

/// Decides Pr(□¬bad) > alpha without building a counterexample. Returns the
/// verdict and the safety estimate. The tolerance is tightened while the
/// value-iteration interval straddles `alpha`.
pub fn threshold_holds(mc: &MarkovChain, bad: &[bool], alpha: f64, tol: f64) -> Result<(bool, f64), CheckError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(CheckError::Alpha(alpha));
    }
    let mut tol = tol;
    let (lo, hi) = loop {
        let (lo, hi) = reach_bounds(mc, bad, tol);
        // safety interval is [1 - hi, 1 - lo]
        let straddles = 1.0 - hi <= alpha && 1.0 - lo > alpha;
        if !straddles || tol <= 1e-15 {
            break (lo, hi);
        }
        tol = (tol * 1e-2).max(1e-15);
    };
    let probability = 1.0 - 0.5 * (lo + hi);
    let holds = 1.0 - hi > alpha || (1.0 - lo > alpha && probability > alpha);
    Ok((holds, probability))
}

/// Decides Pr(□¬bad) > alpha. Violations come with a counterexample whose mass
/// exceeds 1 − alpha.
pub fn check_threshold(
    mc: &MarkovChain,
    bad: &[bool],
    alpha: f64,
    tol: f64,
) -> Result<Verdict, CheckError> {
    let (holds, probability) = threshold_holds(mc, bad, alpha, tol)?;
    if holds {
        return Ok(Verdict::Holds { probability });
    }
    let counterexample = enumerate_counterexample(mc, bad, 1.0 - alpha)?;
    Ok(Verdict::Violated {
        probability,
        counterexample,
    })
}
