use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Fsc;
use crate::model::{Action, Pomdp, State};

/// One simulated run of a controller.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub hit_bad: bool,
}

/// Simulates `steps` steps of `f` on `m`. Stops early only if the controller
/// picks an action that is not enabled (the trajectory then ends there).
pub fn run_fsc(m: &Pomdp, f: &Fsc, steps: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = m.initial();
    let mut node = f.initial();
    let mut states = vec![s];
    let mut actions = Vec::with_capacity(steps);
    let mut hit_bad = m.is_bad_state(s);
    for _ in 0..steps {
        if hit_bad {
            // bad states are absorbing
            let z = m.observation(s);
            actions.push(f.action(node, z));
            node = f.next(node, z);
            states.push(s);
            continue;
        }
        let z = m.observation(s);
        let a = f.action(node, z);
        let Some(dist) = m.transition(s, a) else {
            break;
        };
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut succ = dist.last().expect("nonempty distribution").0;
        for &(t, p) in dist {
            acc += p;
            if u < acc {
                succ = t;
                break;
            }
        }
        actions.push(a);
        node = f.next(node, z);
        s = succ;
        states.push(s);
        hit_bad = m.is_bad_state(s);
    }
    Trajectory {
        states,
        actions,
        hit_bad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsc::parse_fsc;
    use crate::model::parse_model;

    #[test]
    fn zero_steps_is_the_initial_state() {
        let m = parse_model(include_str!("../../models/grid4x3.pom")).unwrap();
        let f = parse_fsc(include_str!("../../models/always_right.fsc"), &m).unwrap();
        let t = run_fsc(&m, &f, 0, 1);
        assert_eq!(t.states, vec![m.initial()]);
        assert!(!t.hit_bad);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let m = parse_model(include_str!("../../models/grid4x3.pom")).unwrap();
        let f = parse_fsc(include_str!("../../models/four_node.fsc"), &m).unwrap();
        assert_eq!(run_fsc(&m, &f, 50, 42), run_fsc(&m, &f, 50, 42));
    }

    #[test]
    fn always_right_eventually_leaves_the_grid() {
        let m = parse_model(include_str!("../../models/grid4x3.pom")).unwrap();
        let f = parse_fsc(include_str!("../../models/always_right.fsc"), &m).unwrap();
        assert!((0..100).all(|seed| run_fsc(&m, &f, 200, seed).hit_bad));
    }
}
