use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use super::{graph_precompute, reach_probability, CheckError};
use crate::model::MarkovChain;

pub const DEFAULT_PATH_CAP: usize = 1_000_000;
/// Explored prefixes allowed per path of the cap.
const PREFIXES_PER_PATH: usize = 8;

/// Finite paths, each ending at its first bad state, with disjoint cylinders.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub paths: Vec<Vec<usize>>,
    pub probs: Vec<f64>,
    pub total: f64,
}

impl Counterexample {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// One line per path: `prob: s0 -(p)-> s1 -(p)-> ...`, labelled by `label`.
    pub fn to_text(&self, mc: &MarkovChain, label: impl Fn(usize) -> String) -> String {
        let mut out = String::new();
        for (path, p) in self.paths.iter().zip(&self.probs) {
            let _ = write!(out, "{p}: {}", label(path[0]));
            for w in path.windows(2) {
                let _ = write!(out, " -({})-> {}", mc.prob(w[0], w[1]), label(w[1]));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "total: {}", self.total);
        out
    }
}

#[derive(PartialEq)]
struct Entry {
    prob: f64,
    seq: usize,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prob
            .total_cmp(&other.prob)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Emits first-visit paths to bad in nonincreasing probability until their
/// mass strictly exceeds `mass`. Stops with an error after [`DEFAULT_PATH_CAP`]
/// paths, or once the explored prefix tree grows beyond a fixed multiple of it.
pub fn enumerate_counterexample(
    mc: &MarkovChain,
    bad: &[bool],
    mass: f64,
) -> Result<Counterexample, CheckError> {
    enumerate_with_cap(mc, bad, mass, DEFAULT_PATH_CAP)
}

pub(crate) fn enumerate_with_cap(
    mc: &MarkovChain,
    bad: &[bool],
    mass: f64,
    cap: usize,
) -> Result<Counterexample, CheckError> {
    let reach = reach_probability(mc, bad, 1e-12);
    if reach <= mass {
        return Err(CheckError::Infeasible { mass, reach });
    }
    let mut cex = Counterexample {
        paths: Vec::new(),
        probs: Vec::new(),
        total: 0.0,
    };
    for item in PathEnumerator::new(mc, bad, cap) {
        let (path, prob) = item?;
        cex.paths.push(path);
        cex.probs.push(prob);
        cex.total += prob;
        if cex.total > mass {
            return Ok(cex);
        }
    }
    Err(CheckError::Infeasible {
        mass,
        reach: cex.total,
    })
}

/// Lazy best-first enumeration of first-visit paths to bad, most probable
/// first (ties: discovery order). Paths through states that cannot reach bad
/// are pruned. Yields [`CheckError::PathCap`] once and then stops when the
/// cap is exceeded.
pub struct PathEnumerator<'a> {
    mc: &'a MarkovChain,
    bad: &'a [bool],
    zero: Vec<bool>,
    // prefix tree of explored paths: (state, parent)
    arena: Vec<(usize, usize)>,
    heap: BinaryHeap<Entry>,
    seq: usize,
    emitted: usize,
    cap: usize,
    stopped: bool,
}

impl<'a> PathEnumerator<'a> {
    pub fn new(mc: &'a MarkovChain, bad: &'a [bool], cap: usize) -> Self {
        let (zero, _) = graph_precompute(mc, bad);
        Self {
            mc,
            bad,
            zero,
            arena: vec![(mc.initial(), usize::MAX)],
            heap: BinaryHeap::from([Entry {
                prob: 1.0,
                seq: 0,
                node: 0,
            }]),
            seq: 1,
            emitted: 0,
            cap,
            stopped: false,
        }
    }

    fn cap_reached(&mut self) -> Option<Result<(Vec<usize>, f64), CheckError>> {
        self.stopped = true;
        Some(Err(CheckError::PathCap(self.cap)))
    }

    fn path_to(&self, node: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = node;
        while cur != usize::MAX {
            path.push(self.arena[cur].0);
            cur = self.arena[cur].1;
        }
        path.reverse();
        path
    }
}

impl Iterator for PathEnumerator<'_> {
    type Item = Result<(Vec<usize>, f64), CheckError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.stopped {
            return None;
        }
        while let Some(Entry { prob, node, .. }) = self.heap.pop() {
            let s = self.arena[node].0;
            if self.bad[s] {
                if self.emitted >= self.cap {
                    return self.cap_reached();
                }
                self.emitted += 1;
                return Some(Ok((self.path_to(node), prob)));
            }
            if self.arena.len() >= self.cap.saturating_mul(PREFIXES_PER_PATH) {
                return self.cap_reached();
            }
            for &(t, p) in self.mc.row(s) {
                if p > 0.0 && !self.zero[t] {
                    self.arena.push((t, node));
                    self.heap.push(Entry {
                        prob: prob * p,
                        seq: self.seq,
                        node: self.arena.len() - 1,
                    });
                    self.seq += 1;
                }
            }
        }
        self.stopped = true;
        None
    }
}
