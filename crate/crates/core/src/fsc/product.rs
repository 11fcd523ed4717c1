use std::collections::{HashMap, VecDeque};

use super::{Fsc, FscError};
use crate::model::{MarkovChain, Pomdp, State};

/// Reachable fragment of the product chain P × F, rooted at `(s0, n0)`.
#[derive(Clone, Debug)]
pub struct Product {
    pub chain: MarkovChain,
    /// Product state index -> (POMDP state, controller node).
    pub pairs: Vec<(State, usize)>,
    /// Whether the POMDP state of each product state carries a bad observation.
    pub bad: Vec<bool>,
}

impl Product {
    pub fn index_of(&self, s: State, node: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (s, node))
    }
}

/// Builds the reachable product chain by a breadth-first worklist.
pub fn build_product(m: &Pomdp, f: &Fsc) -> Result<Product, FscError> {
    if f.num_observations() != m.num_observations() {
        return Err(FscError::Malformed(format!(
            "controller reads {} observations, model has {}",
            f.num_observations(),
            m.num_observations()
        )));
    }
    let root = (m.initial(), f.initial());
    let mut index: HashMap<(State, usize), usize> = HashMap::from([(root, 0)]);
    let mut pairs = vec![root];
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let (s, n) = pairs[i];
        let z = m.observation(s);
        let a = f.action(n, z);
        let next_node = f.next(n, z);
        let dist = m.transition(s, a).ok_or(FscError::DisabledAction {
            state: s,
            node: n,
            obs: z,
            action: a,
        })?;
        let mut row = Vec::with_capacity(dist.len());
        for &(t, p) in dist {
            let key = (t, next_node);
            let j = *index.entry(key).or_insert_with(|| {
                pairs.push(key);
                queue.push_back(pairs.len() - 1);
                pairs.len() - 1
            });
            row.push((j, p));
        }
        if rows.len() <= i {
            rows.resize(i + 1, Vec::new());
        }
        rows[i] = row;
    }
    let bad = pairs.iter().map(|&(s, _)| m.is_bad_state(s)).collect();
    let chain = MarkovChain::new(rows, 0).map_err(|e| FscError::Malformed(e.to_string()))?;
    Ok(Product { chain, pairs, bad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsc::parse_fsc;
    use crate::model::parse_model;

    const GRID: &str = include_str!("../../models/grid4x3.pom");

    #[test]
    fn always_right_product_plays_right_everywhere() {
        let m = parse_model(GRID).unwrap();
        let f = parse_fsc(include_str!("../../models/always_right.fsc"), &m).unwrap();
        let p = build_product(&m, &f).unwrap();
        let right = m.action_by_name("right").unwrap();
        for &(s, n) in &p.pairs {
            if !m.is_bad_state(s) {
                assert_eq!(f.action(n, m.observation(s)), right);
            }
        }
        // (0,1) .. (3,1) plus the outside sink
        assert_eq!(p.pairs.len(), 5);
    }

    #[test]
    fn four_node_product_oscillates_in_the_corner() {
        let m = parse_model(GRID).unwrap();
        let f = parse_fsc(include_str!("../../models/four_node.fsc"), &m).unwrap();
        let p = build_product(&m, &f).unwrap();
        assert!(p.pairs.len() <= m.num_states() * f.num_nodes());
        let corner = p.index_of(m.state_by_name("(3,1)").unwrap(), 3).unwrap();
        let blue = p.index_of(m.state_by_name("(3,2)").unwrap(), 3).unwrap();
        assert!((p.chain.prob(corner, blue) - 0.9).abs() < 1e-15);
        assert!((p.chain.prob(blue, corner) - 0.9).abs() < 1e-15);
        for row in p.chain.rows() {
            let sum: f64 = row.iter().map(|&(_, q)| q).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_controller_on_observable_chain() {
        let text = "states: a b c\nactions: go\nobservations: a b c\nobsfun:\na a\nb b\nc c\ninit: a\ntransitions:\na go b 1\nb go c 1\nc go a 1\n";
        let m = parse_model(text).unwrap();
        let f = Fsc::memoryless(3, |_| crate::model::Action(0));
        let p = build_product(&m, &f).unwrap();
        assert_eq!(p.pairs.len(), 3);
        for (i, &(s, _)) in p.pairs.iter().enumerate() {
            assert_eq!(p.chain.row(i).len(), 1);
            let (j, prob) = p.chain.row(i)[0];
            assert_eq!(prob, 1.0);
            assert_eq!(p.pairs[j].0 .0, (s.0 + 1) % 3);
        }
    }

    #[test]
    fn disabled_action_is_reported() {
        let text = "states: a b\nactions: x y\nobservations: z\nobsfun:\na z\nb z\ninit: a\ntransitions:\na x b 1\nb y b 1\n";
        let m = parse_model(text).unwrap();
        let f = Fsc::memoryless(1, |_| crate::model::Action(0));
        let err = build_product(&m, &f).unwrap_err();
        assert_eq!(
            err,
            FscError::DisabledAction {
                state: State(1),
                node: 0,
                obs: crate::model::Obs(0),
                action: crate::model::Action(0)
            }
        );
    }
}
