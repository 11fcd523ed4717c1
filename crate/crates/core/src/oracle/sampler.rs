//! Sparse belief-tree sampler over determinized scenarios.
//!
//! Each scenario is a start state drawn from the root belief plus a fixed
//! stream of uniforms, one per depth. Every action is simulated on the same
//! scenarios, so a node is the set of scenarios agreeing on its observation
//! history. Trials descend along the action with the best upper bound and
//! the child with the largest weighted bound gap; leaves are valued by an
//! analytic blind-policy lower bound and a fully observable upper bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{belief_after, common_actions, ActionOracle, OracleError};
use crate::model::{Action, History, Obs, Pomdp, State};
use crate::transform::RewardPomdp;

const TIE_EPS: f64 = 1e-12;
const TARGET_GAP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Number of scenarios.
    pub budget: usize,
    pub depth: usize,
    pub seed: u64,
    pub max_trials: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            budget: 500,
            depth: 90,
            seed: 0,
            max_trials: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerDiagnostics {
    pub action: Action,
    /// Root estimate (the chosen action's lower bound).
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
    pub trials: usize,
    /// Every node kept `lower <= upper` and the root estimate lies within its bounds.
    pub bounds_consistent: bool,
}

struct Node {
    depth: usize,
    /// (scenario, current state)
    particles: Vec<(usize, State)>,
    terminal: Option<f64>,
    lower: f64,
    upper: f64,
    /// Per action: (action, child node ids by observation, lower, upper).
    branches: Vec<Branch>,
    expanded: bool,
}

struct Branch {
    action: Action,
    children: Vec<(Obs, usize)>,
    lower: f64,
    upper: f64,
}

pub struct SparseSampler {
    rm: RewardPomdp,
    config: SamplerConfig,
    /// `blind[a][s]`: value of repeating `a` forever from `s` (−1 once disabled).
    blind: Vec<Vec<f64>>,
    /// Optimal fully observable value.
    mdp: Vec<f64>,
}

impl SparseSampler {
    pub fn new(rm: RewardPomdp, config: SamplerConfig) -> Self {
        let (blind, mdp) = analytic_bounds(&rm);
        Self {
            rm,
            config,
            blind,
            mdp,
        }
    }

    pub fn config(&self) -> SamplerConfig {
        self.config
    }

    /// Plans from `h` and reports the bounds maintained during the search.
    pub fn plan(&self, h: &History) -> Result<SamplerDiagnostics, OracleError> {
        let m = &self.rm.base;
        let b = belief_after(m, h)?;
        let root_actions = common_actions(m, h, &b)?;
        let streams = self.scenarios(h, &b);
        let mut tree = Tree {
            sampler: self,
            streams: &streams,
            nodes: Vec::new(),
            consistent: true,
        };
        let particles = streams.iter().enumerate().map(|(k, s)| (k, s.0)).collect();
        let root = tree.add_node(0, particles);
        let mut trials = 0;
        if self.config.depth > 0 {
            tree.expand(root, Some(&root_actions));
            while trials < self.config.max_trials
                && tree.nodes[root].upper - tree.nodes[root].lower > TARGET_GAP
            {
                tree.trial(root);
                trials += 1;
            }
        }
        let node = &tree.nodes[root];
        let mut best: Option<(Action, f64)> = None;
        for br in &node.branches {
            if best.map_or(true, |(_, v)| br.lower > v + TIE_EPS) {
                best = Some((br.action, br.lower));
            }
        }
        let (action, value) = best.unwrap_or((root_actions[0], node.lower));
        let consistent = tree.consistent && node.lower <= value + TIE_EPS && value <= node.upper + TIE_EPS;
        Ok(SamplerDiagnostics {
            action,
            value,
            lower: node.lower,
            upper: node.upper,
            nodes: tree.nodes.len(),
            trials,
            bounds_consistent: consistent,
        })
    }

    /// Start states and uniform streams, a pure function of (seed, history).
    fn scenarios(&self, h: &History, b: &crate::model::Belief) -> Vec<(State, Vec<f64>)> {
        let mut key = splitmix(self.config.seed);
        for &z in h.observations() {
            key = splitmix(key ^ (z.0 as u64).wrapping_mul(0x9e37_79b9));
        }
        for &a in h.actions() {
            key = splitmix(key ^ (a.0 as u64).wrapping_add(0x5851_f42d));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        (0..self.config.budget.max(1))
            .map(|_| {
                let start = sample(b.entries(), rng.gen());
                let stream = (0..self.config.depth).map(|_| rng.gen()).collect();
                (start, stream)
            })
            .collect()
    }
}

impl ActionOracle for SparseSampler {
    fn best_action(&self, h: &History) -> Result<Action, OracleError> {
        Ok(self.plan(h)?.action)
    }
}

struct Tree<'a> {
    sampler: &'a SparseSampler,
    streams: &'a [(State, Vec<f64>)],
    nodes: Vec<Node>,
    consistent: bool,
}

impl Tree<'_> {
    fn add_node(&mut self, depth: usize, particles: Vec<(usize, State)>) -> usize {
        let rm = &self.sampler.rm;
        let z = rm.base.observation(particles[0].1);
        let terminal = if rm.bad.contains(&z) {
            Some(-1.0)
        } else if z == rm.sink_obs {
            Some(0.0)
        } else {
            None
        };
        let (lower, upper) = match terminal {
            Some(v) => (v, v),
            None => self.leaf_bounds(&particles),
        };
        self.nodes.push(Node {
            depth,
            particles,
            terminal,
            lower,
            upper,
            branches: Vec::new(),
            expanded: false,
        });
        self.nodes.len() - 1
    }

    fn leaf_bounds(&self, particles: &[(usize, State)]) -> (f64, f64) {
        let n = particles.len() as f64;
        let lower = self
            .sampler
            .blind
            .iter()
            .map(|values| particles.iter().map(|&(_, s)| values[s.0]).sum::<f64>() / n)
            .fold(-1.0, f64::max);
        let upper = particles.iter().map(|&(_, s)| self.sampler.mdp[s.0]).sum::<f64>() / n;
        (lower.min(upper), upper)
    }

    fn expand(&mut self, id: usize, root_actions: Option<&[Action]>) {
        let m = &self.sampler.rm.base;
        let depth = self.nodes[id].depth;
        let particles = self.nodes[id].particles.clone();
        let actions: Vec<Action> = match root_actions {
            Some(a) => a.to_vec(),
            None => m
                .actions()
                .filter(|&a| particles.iter().all(|&(_, s)| m.is_enabled(s, a)))
                .collect(),
        };
        let mut branches = Vec::with_capacity(actions.len());
        for a in actions {
            let mut groups: Vec<(Obs, Vec<(usize, State)>)> = Vec::new();
            for &(k, s) in &particles {
                let dist = m.transition(s, a).expect("action enabled on every particle");
                let t = sample(dist, self.streams[k].1[depth]);
                let z = m.observation(t);
                match groups.iter_mut().find(|g| g.0 == z) {
                    Some(g) => g.1.push((k, t)),
                    None => groups.push((z, vec![(k, t)])),
                }
            }
            groups.sort_by_key(|g| g.0);
            let children = groups
                .into_iter()
                .map(|(z, ps)| (z, self.add_node(depth + 1, ps)))
                .collect();
            branches.push(Branch {
                action: a,
                children,
                lower: 0.0,
                upper: 0.0,
            });
        }
        self.nodes[id].branches = branches;
        self.nodes[id].expanded = true;
        self.backup(id);
    }

    fn backup(&mut self, id: usize) {
        let lambda = self.sampler.rm.discount;
        let total = self.nodes[id].particles.len() as f64;
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::NEG_INFINITY;
        for bi in 0..self.nodes[id].branches.len() {
            let (mut l, mut u) = (0.0, 0.0);
            for &(_, c) in &self.nodes[id].branches[bi].children {
                let w = self.nodes[c].particles.len() as f64 / total;
                l += w * self.nodes[c].lower;
                u += w * self.nodes[c].upper;
            }
            let br = &mut self.nodes[id].branches[bi];
            br.lower = lambda * l;
            br.upper = lambda * u;
            if br.lower > br.upper + TIE_EPS {
                self.consistent = false;
            }
            lower = lower.max(br.lower);
            upper = upper.max(br.upper);
        }
        if lower.is_finite() {
            let node = &mut self.nodes[id];
            node.upper = upper;
            node.lower = lower.min(upper);
        }
    }

    fn trial(&mut self, root: usize) {
        let max_depth = self.sampler.config.depth;
        let mut path = vec![root];
        let mut id = root;
        loop {
            let node = &self.nodes[id];
            if node.terminal.is_some() || node.depth >= max_depth || node.upper - node.lower <= TARGET_GAP {
                break;
            }
            if !node.expanded {
                self.expand(id, None);
            }
            let node = &self.nodes[id];
            let Some(br) = node
                .branches
                .iter()
                .fold(None::<&Branch>, |best, b| match best {
                    Some(x) if x.upper + TIE_EPS >= b.upper => Some(x),
                    _ => Some(b),
                })
            else {
                break;
            };
            let total = node.particles.len() as f64;
            let next = br
                .children
                .iter()
                .map(|&(_, c)| {
                    let child = &self.nodes[c];
                    let w = child.particles.len() as f64 / total;
                    (c, w * (child.upper - child.lower))
                })
                .fold(None::<(usize, f64)>, |best, (c, g)| match best {
                    Some((_, bg)) if bg >= g => best,
                    _ => Some((c, g)),
                });
            match next {
                Some((c, g)) if g > 0.0 => {
                    id = c;
                    path.push(c);
                }
                _ => break,
            }
        }
        for &n in path.iter().rev() {
            if self.nodes[n].expanded {
                self.backup(n);
            }
        }
    }
}

fn sample(dist: &[(State, f64)], u: f64) -> State {
    let mut acc = 0.0;
    for &(s, p) in dist {
        acc += p;
        if u < acc {
            return s;
        }
    }
    dist.last().expect("nonempty distribution").0
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn analytic_bounds(rm: &RewardPomdp) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m: &Pomdp = &rm.base;
    let lambda = rm.discount;
    let reward = |s: State| if rm.bad.contains(&m.observation(s)) { -1.0 } else { 0.0 };
    let stop = 1e-9 * (1.0 - lambda) / lambda;
    let blind = m
        .actions()
        .map(|a| {
            let mut v = vec![0.0; m.num_states()];
            loop {
                let mut delta: f64 = 0.0;
                for s in m.states() {
                    let nv = match m.transition(s, a) {
                        Some(d) => reward(s) + lambda * d.iter().map(|&(t, p)| p * v[t.0]).sum::<f64>(),
                        None => -1.0,
                    };
                    delta = delta.max((nv - v[s.0]).abs());
                    v[s.0] = nv;
                }
                if delta <= stop {
                    break v;
                }
            }
        })
        .collect();
    let mut mdp = vec![0.0; m.num_states()];
    loop {
        let mut delta: f64 = 0.0;
        for s in m.states() {
            let best = m
                .enabled_actions(s)
                .map(|a| {
                    let d = m.transition(s, a).expect("enabled");
                    d.iter().map(|&(t, p)| p * mdp[t.0]).sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let nv = reward(s) + lambda * best;
            delta = delta.max((nv - mdp[s.0]).abs());
            mdp[s.0] = nv;
        }
        if delta <= stop {
            break;
        }
    }
    (blind, mdp)
}
