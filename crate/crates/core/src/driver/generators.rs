use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Action, Distribution, ModelError, ObjectiveSpec, Obs, Pomdp, State};

/// A generated model with its objective (threshold 0.5 unless overridden).
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub model: Pomdp,
    pub spec: ObjectiveSpec,
}

const DEFAULT_ALPHA: f64 = 0.5;

/// n×n grid with holes. Moves succeed with `1 - slip` and otherwise stay;
/// moves off the grid bump into the wall. Holes carry the only bad
/// observation, every other cell looks the same. A dedicated `start` state
/// moves uniformly to a safe cell under every action.
pub fn gen_grid_world(n: usize, bad_fraction: f64, slip: f64, seed: u64) -> Result<Benchmark, ModelError> {
    if n < 2 {
        return Err(ModelError::Invalid("grid side must be at least 2".into()));
    }
    if !(0.0..=1.0).contains(&bad_fraction) || !(0.0..1.0).contains(&slip) {
        return Err(ModelError::Invalid("bad fraction in [0, 1] and slip in [0, 1) expected".into()));
    }
    let cells = n * n;
    let mut holes = (bad_fraction * cells as f64).round_ties_even() as usize;
    if bad_fraction > 0.0 {
        holes = holes.max(1);
    }
    let holes = holes.min(cells - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hole_set: BTreeSet<usize> = sample(&mut rng, cells, holes).into_iter().collect();

    let cell = |x: usize, y: usize| y * n + x;
    let start = State(cells);
    let (safe_obs, hole_obs, start_obs) = (Obs(0), Obs(1), Obs(2));
    let moves: [(&str, isize, isize); 4] = [("up", 0, 1), ("down", 0, -1), ("left", -1, 0), ("right", 1, 0)];

    let safe_cells: Vec<usize> = (0..cells).filter(|c| !hole_set.contains(c)).collect();
    let uniform: Distribution = safe_cells
        .iter()
        .map(|&c| (State(c), 1.0 / safe_cells.len() as f64))
        .collect();
    let mut transitions = Vec::with_capacity(cells + 1);
    let mut obs_of = Vec::with_capacity(cells + 1);
    let mut names = Vec::with_capacity(cells + 1);
    for y in 0..n {
        for x in 0..n {
            names.push(format!("c{x}_{y}"));
            obs_of.push(if hole_set.contains(&cell(x, y)) { hole_obs } else { safe_obs });
            let row = moves
                .iter()
                .map(|&(_, dx, dy)| {
                    let (tx, ty) = (x as isize + dx, y as isize + dy);
                    let here = State(cell(x, y));
                    if tx < 0 || ty < 0 || tx >= n as isize || ty >= n as isize || slip == 1.0 {
                        return Some(vec![(here, 1.0)]);
                    }
                    let target = State(cell(tx as usize, ty as usize));
                    Some(if slip > 0.0 {
                        vec![(target, 1.0 - slip), (here, slip)]
                    } else {
                        vec![(target, 1.0)]
                    })
                })
                .collect();
            transitions.push(row);
        }
    }
    names.push("start".into());
    obs_of.push(start_obs);
    transitions.push(vec![Some(uniform); moves.len()]);
    let bad = BTreeSet::from([hole_obs]);
    let model = Pomdp::new(
        names,
        moves.iter().map(|m| m.0.to_string()).collect(),
        vec!["safe".into(), "hole".into(), "start".into()],
        transitions,
        start,
        obs_of,
        bad.clone(),
        None,
    )?;
    Ok(Benchmark {
        model,
        spec: ObjectiveSpec::safety(bad, DEFAULT_ALPHA)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CardsVariant {
    /// One of `n` cards is missing.
    Removed,
    /// One of `n` cards is duplicated.
    Added,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CardsMode {
    /// Guess correctly within `2n` steps.
    Bounded,
    /// Every step ends the game with a win with probability 0.05.
    Unbounded,
}

const FORCED_WIN: f64 = 0.05;

/// Card-guessing game. The hidden configuration `i` picks a block; its root
/// (observation `0`) draws a card uniformly from the configured deck and
/// each card returns to the root on the next draw. `guess<j>` wins iff `j`
/// is the hidden card. From the initial state a draw picks the block and a
/// guess wins with probability `1/n`.
pub fn gen_cards(n: usize, variant: CardsVariant, mode: CardsMode) -> Result<Benchmark, ModelError> {
    if n < 2 {
        return Err(ModelError::Invalid("deck needs at least 2 cards".into()));
    }
    let num_actions = n + 1;
    let draw = Action(0);
    let guess = |j: usize| Action(j + 1);
    // observations: o0, 0, 1..n, win, lose
    let o0 = Obs(0);
    let root_obs = Obs(1);
    let card_obs = |j: usize| Obs(2 + j);
    let win_obs = Obs(n + 2);
    let lose_obs = Obs(n + 3);

    let init = State(0);
    let root = |i: usize| State(1 + i * (n + 1));
    let card = |i: usize, j: usize| State(2 + i * (n + 1) + j);
    let win = State(1 + n * (n + 1));
    let lose = State(win.0 + 1);
    let num_states = lose.0 + 1;

    let deck = |i: usize| -> Distribution {
        match variant {
            CardsVariant::Removed => (0..n)
                .filter(|&j| j != i)
                .map(|j| (card(i, j), 1.0 / (n - 1) as f64))
                .collect(),
            CardsVariant::Added => (0..n)
                .map(|j| {
                    let copies = if j == i { 2.0 } else { 1.0 };
                    (card(i, j), copies / (n + 1) as f64)
                })
                .collect(),
        }
    };
    let forced = |d: Distribution| -> Distribution {
        match mode {
            CardsMode::Bounded => d,
            CardsMode::Unbounded => {
                let mut d: Distribution = d.into_iter().map(|(s, p)| (s, p * (1.0 - FORCED_WIN))).collect();
                d.push((win, FORCED_WIN));
                d
            }
        }
    };
    let guesses_in_block = |i: usize, row: &mut Vec<Option<Distribution>>| {
        for j in 0..n {
            let target = if j == i { win } else { lose };
            row[guess(j).0] = Some(forced(vec![(target, 1.0)]));
        }
    };

    let mut names = vec![String::new(); num_states];
    let mut obs_of = vec![o0; num_states];
    let mut transitions: Vec<Vec<Option<Distribution>>> = vec![vec![None; num_actions]; num_states];

    names[init.0] = "init".into();
    transitions[init.0][draw.0] = Some(forced((0..n).map(|i| (root(i), 1.0 / n as f64)).collect()));
    for j in 0..n {
        let mut d = vec![(win, 1.0 / n as f64), (lose, (n - 1) as f64 / n as f64)];
        if mode == CardsMode::Unbounded {
            d = forced(d);
        }
        transitions[init.0][guess(j).0] = Some(d);
    }
    for i in 0..n {
        names[root(i).0] = format!("b{}_root", i + 1);
        obs_of[root(i).0] = root_obs;
        transitions[root(i).0][draw.0] = Some(forced(deck(i)));
        guesses_in_block(i, &mut transitions[root(i).0]);
        for j in 0..n {
            let s = card(i, j);
            names[s.0] = format!("b{}_card{}", i + 1, j + 1);
            obs_of[s.0] = card_obs(j);
            transitions[s.0][draw.0] = Some(forced(vec![(root(i), 1.0)]));
            guesses_in_block(i, &mut transitions[s.0]);
        }
    }
    names[win.0] = "win".into();
    names[lose.0] = "lose".into();
    obs_of[win.0] = win_obs;
    obs_of[lose.0] = lose_obs;
    for s in [win, lose] {
        transitions[s.0] = vec![Some(vec![(s, 1.0)]); num_actions];
    }

    let mut action_names = vec!["draw".to_string()];
    action_names.extend((1..=n).map(|j| format!("guess{j}")));
    let mut obs_names = vec!["o0".to_string(), "0".to_string()];
    obs_names.extend((1..=n).map(|j| j.to_string()));
    obs_names.push("win".into());
    obs_names.push("lose".into());

    let bad = BTreeSet::from([lose_obs]);
    let good = BTreeSet::from([win_obs]);
    let model = Pomdp::new(
        names,
        action_names,
        obs_names,
        transitions,
        init,
        obs_of,
        bad.clone(),
        Some(good.clone()),
    )?;
    let spec = match mode {
        CardsMode::Bounded => ObjectiveSpec::bounded_reach_avoid(bad, good, 2 * n, DEFAULT_ALPHA)?,
        CardsMode::Unbounded => ObjectiveSpec::safety(bad, DEFAULT_ALPHA)?,
    };
    Ok(Benchmark { model, spec })
}
