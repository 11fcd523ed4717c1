//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::HashSet;
use std::time::{Duration, Instant};

use common::*;
use cplus::checker::{enumerate_counterexample, safety_probability};
use cplus::driver::{
    bad_flags, cplus_synthesize, gen_cards, gen_grid_world, safety_instance, Benchmark, CardsMode, CardsVariant,
    Limits, Outcome,
};
use cplus::fsc::{build_product, parse_fsc, run_fsc};
use cplus::learner::{ObservationTable, Teacher};
use cplus::model::{parse_model, path_probability, History, MarkovChain, Obs, Pomdp, State};
use cplus::oracle::{ActionOracle, BeliefViOracle, FscOracle, QueryCache, SamplerConfig, SparseSampler};
use cplus::transform::{discounted_value, make_reward_pomdp, DEFAULT_DISCOUNT};
use rand::Rng;

type Outcome_ = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn grid() -> Pomdp {
    parse_model(GRID).unwrap()
}

fn illustrative_run() -> Outcome_ {
    let m = grid();
    let four_node = parse_fsc(FOUR_NODE, &m).unwrap();
    let always_right = parse_fsc(ALWAYS_RIGHT, &m).unwrap();
    let start = Instant::now();
    let ao = FscOracle::new(four_node);
    let r = cplus_synthesize(&m, &m.safety_spec(0.7).unwrap(), &ao, Limits::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(r.outcome == Outcome::Fsc, || format!("outcome {:?}", r.outcome))?;
    ensure(r.iterations == 2, || format!("{} model-checking queries", r.iterations))?;

    let cache = QueryCache::new();
    let teacher = Teacher { m: &m, ao: &ao, cache: &cache };
    let first = ObservationTable::new(&teacher)
        .and_then(|t| t.hypothesis(&m))
        .map_err(|e| e.to_string())?;
    let gray = m.obs_by_name("gray").unwrap();
    ensure(first.num_nodes() == 1, || format!("first hypothesis has {} nodes", first.num_nodes()))?;
    ensure(
        first.action(0, gray) == always_right.action(0, gray) && first.next(0, gray) == 0,
        || "first hypothesis differs from the always-right controller".into(),
    )?;
    ensure(r.rounds[0].hypothesis_nodes == 1, || "report disagrees on first hypothesis".into())?;

    let top = r.rounds[0].top_path_probability.unwrap_or(f64::NAN);
    ensure((top - 0.6561).abs() < 1e-12, || format!("top counterexample path {top}"))?;
    let suffix = r.rounds[0].suffix.clone().unwrap_or_default();
    ensure(suffix == ["gray", "gray", "gray"], || format!("suffix {suffix:?}"))?;
    let p = r.verified_probability.unwrap();
    ensure((p - 0.729).abs() <= 1e-9, || format!("verified {p}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "2 queries, top path {top:.4}, suffix gray.gray.gray, verified {p:.12}, {:.1} ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

fn binomial_ok(successes: usize, runs: usize, p: f64) -> bool {
    let n = runs as f64;
    let half = 2.576 * (p * (1.0 - p) / n).sqrt();
    ((successes as f64 / n) - p).abs() <= half
}

fn checker_exactness() -> Outcome_ {
    let m = grid();
    let mut details = Vec::new();
    for (name, text, expected) in [("always-right", ALWAYS_RIGHT, 0.0), ("four-node", FOUR_NODE, 0.729)] {
        let f = parse_fsc(text, &m).unwrap();
        let product = build_product(&m, &f).map_err(|e| e.to_string())?;
        let flags = bad_flags(&m, m.bad_observations(), &product);
        let p = safety_probability(&product.chain, &flags, 1e-10);
        ensure((p - expected).abs() <= 1e-9, || format!("{name}: checker {p}"))?;
        let exact = 1.0 - to_f64(&exact_reach(&product.chain, &flags)[product.chain.initial()]);
        ensure((p - exact).abs() <= 1e-9, || format!("{name}: checker {p} vs rational {exact}"))?;
        let runs = 100_000;
        let safe = (0..runs as u64).filter(|&seed| !run_fsc(&m, &f, 200, seed).hit_bad).count();
        ensure(binomial_ok(safe, runs, exact), || {
            format!("{name}: {safe}/{runs} safe runs vs {exact}")
        })?;
        details.push(format!("{name} {p:.12} (rational {exact:.12}, MC {safe}/{runs})"));
    }
    Ok(details.join("; "))
}

/// Measure of the union of cylinders of `paths`, by walking every path of the
/// chain up to the longest member.
fn cylinder_measure(mc: &MarkovChain, paths: &[Vec<usize>]) -> f64 {
    let set: HashSet<&[usize]> = paths.iter().map(|p| p.as_slice()).collect();
    let max_len = paths.iter().map(Vec::len).max().unwrap_or(0);
    let mut total = 0.0;
    let mut stack = vec![(vec![mc.initial()], 1.0)];
    while let Some((path, p)) = stack.pop() {
        if set.contains(path.as_slice()) {
            total += p;
            continue;
        }
        if path.len() >= max_len {
            continue;
        }
        let last = *path.last().unwrap();
        for &(t, q) in mc.row(last) {
            let mut next = path.clone();
            next.push(t);
            stack.push((next, p * q));
        }
    }
    total
}

fn counterexample_contract() -> Outcome_ {
    let mut rng = rng(3);
    let mut brute_checked = 0;
    let mut max_paths = 0;
    for instance in 0..100 {
        let n = rng.gen_range(2..=30);
        let num_bad = if n > 3 { rng.gen_range(1..=2) } else { 1 };
        let (mc, bad) = random_mc_with_leak(&mut rng, n, num_bad, true);
        let reach = to_f64(&exact_reach(&mc, &bad)[0]);
        let u = rng.gen_range(0.1..=0.9);
        let mass = u * reach;
        let alpha = 1.0 - mass;
        let cex = enumerate_counterexample(&mc, &bad, mass).map_err(|e| format!("instance {instance}: {e}"))?;
        let fail = |what: &str| format!("instance {instance} (n={n}, alpha={alpha:.4}): {what}");
        ensure(cex.total > 1.0 - alpha, || fail("mass not exceeded"))?;
        let sum: f64 = cex.probs.iter().sum();
        ensure((sum - cex.total).abs() <= 1e-12, || fail("total is not the sum"))?;
        ensure(cex.probs.windows(2).all(|w| w[0] >= w[1]), || fail("order"))?;
        for (path, &p) in cex.paths.iter().zip(&cex.probs) {
            ensure(path[0] == mc.initial(), || fail("path does not start at the initial state"))?;
            let last = path.len() - 1;
            ensure(bad[path[last]] && path[..last].iter().all(|&s| !bad[s]), || {
                fail("bad is not hit exactly at the last state")
            })?;
            ensure((path_probability(&mc, path) - p).abs() <= 1e-12, || fail("path probability"))?;
        }
        for (i, a) in cex.paths.iter().enumerate() {
            for (j, b) in cex.paths.iter().enumerate() {
                ensure(i == j || !b.starts_with(a), || fail("prefix pair"))?;
            }
        }
        if cex.paths.iter().all(|p| p.len() <= 13) {
            let measure = cylinder_measure(&mc, &cex.paths);
            ensure((measure - cex.total).abs() <= 1e-9, || {
                fail(&format!("cylinder measure {measure} vs {}", cex.total))
            })?;
            brute_checked += 1;
        }
        max_paths = max_paths.max(cex.len());
    }
    Ok(format!(
        "100 chains, {brute_checked} cross-checked by brute force, up to {max_paths} paths"
    ))
}

fn relative_completeness() -> Outcome_ {
    let mut rng = rng(4);
    let mut done = 0;
    let mut max_iters = 0;
    let mut attempts = 0;
    while done < 50 {
        attempts += 1;
        let (states, actions, obs) = (rng.gen_range(3..=8), rng.gen_range(2..=3), rng.gen_range(3..=4));
        let m = random_pomdp(&mut rng, states, actions, obs);
        let nodes = rng.gen_range(1..=4);
        let oracle = random_fsc(&mut rng, nodes, &m);
        let product = build_product(&m, &oracle).unwrap();
        let flags = bad_flags(&m, m.bad_observations(), &product);
        let value = safety_probability(&product.chain, &flags, 1e-12);
        if value < 0.06 {
            continue;
        }
        let alpha = (value - 0.05 - rng.gen_range(0.0..0.02)).max(0.0);
        let spec = m.safety_spec(alpha).unwrap();
        let limits = Limits { max_iters: 64, ..Limits::default() };
        let r = cplus_synthesize(&m, &spec, &FscOracle::new(oracle), limits).map_err(|e| e.to_string())?;
        ensure(r.outcome == Outcome::Fsc, || {
            format!("instance {done}: outcome {:?} after {} iterations (oracle value {value:.4}, alpha {alpha:.4})", r.outcome, r.iterations)
        })?;
        let p = r.verified_probability.unwrap();
        ensure(p > alpha, || format!("instance {done}: verified {p} <= alpha {alpha}"))?;
        max_iters = max_iters.max(r.iterations);
        done += 1;
    }
    Ok(format!("50/50 verified ({attempts} candidates drawn), at most {max_iters} iterations"))
}

/// Unnormalised state weights after `h`, by forward propagation.
fn forward(m: &Pomdp, h: &History) -> Vec<(State, f64)> {
    let mut v = vec![(m.initial(), 1.0)];
    for (&a, &z) in h.actions().iter().zip(&h.observations()[1..]) {
        let mut next: Vec<(State, f64)> = Vec::new();
        for &(s, p) in &v {
            for &(t, q) in m.transition(s, a).into_iter().flatten() {
                if m.observation(t) != z {
                    continue;
                }
                match next.iter_mut().find(|e| e.0 == t) {
                    Some(e) => e.1 += p * q,
                    None => next.push((t, p * q)),
                }
            }
        }
        v = next;
    }
    v
}

fn brute_force_action(m: &Pomdp, h: &History, depth: usize) -> Option<cplus::model::Action> {
    let v = forward(m, h);
    let mass: f64 = v.iter().map(|&(_, p)| p).sum();
    let mut best: Option<(cplus::model::Action, f64)> = None;
    for a in m.actions() {
        let q = tree_q(m, &v, a, depth) / mass;
        if best.map_or(true, |(_, b)| q > b + 1e-12) {
            best = Some((a, q));
        }
    }
    best.map(|(a, _)| a)
}

fn oracle_soundness() -> Outcome_ {
    let mut rng = rng(5);
    let mut queries = 0;
    for instance in 0..30 {
        let (states, actions, obs) = (rng.gen_range(2..=6), rng.gen_range(2..=3), rng.gen_range(2..=3));
        let m = random_pomdp(&mut rng, states, actions, obs);
        let vi = BeliefViOracle::new(m.clone(), m.bad_observations().clone(), 6);
        let mut histories = vec![History::new(m.observation(m.initial()))];
        // a few random valid continuations that avoid bad
        for _ in 0..4 {
            let mut h = histories[0].clone();
            for _ in 0..rng.gen_range(1..=2) {
                let a = cplus::model::Action(rng.gen_range(0..m.num_actions()));
                let succ: Vec<Obs> = forward(&m, &h)
                    .iter()
                    .flat_map(|&(s, _)| m.transition(s, a).into_iter().flatten())
                    .map(|&(t, _)| m.observation(t))
                    .filter(|&z| !m.is_bad(z))
                    .collect();
                if succ.is_empty() {
                    break;
                }
                h.push(a, succ[rng.gen_range(0..succ.len())]);
            }
            histories.push(h);
        }
        for h in &histories {
            if forward(&m, h).is_empty() {
                continue;
            }
            let got = vi.best_action(h).map_err(|e| e.to_string())?;
            let want = brute_force_action(&m, h, 6).unwrap();
            ensure(got == want, || {
                format!("instance {instance}, history {}: belief-VI {got:?}, brute force {want:?}", h.display(&m))
            })?;
            queries += 1;
        }
    }

    let m = grid();
    let bad = m.bad_observations().clone();
    let h = History::new(m.observation(m.initial()));
    let reference = BeliefViOracle::new(m.clone(), bad.clone(), 8).best_action(&h).unwrap();
    let rm = make_reward_pomdp(&m, &bad, DEFAULT_DISCOUNT).unwrap();
    let agree = (0..20u64)
        .filter(|&seed| {
            let config = SamplerConfig { budget: 500, seed, ..SamplerConfig::default() };
            SparseSampler::new(rm.clone(), config).best_action(&h).ok() == Some(reference)
        })
        .count();
    ensure(agree >= 19, || format!("sampler agrees with belief-VI on {agree}/20 seeds"))?;
    Ok(format!(
        "{queries} belief-VI queries match brute force; sampler agrees on {agree}/20 seeds ({})",
        m.action_name(reference)
    ))
}

fn synthesize_benchmark(b: &Benchmark, ao: &dyn ActionOracle) -> Result<(usize, f64, Duration), String> {
    let start = Instant::now();
    let r = cplus_synthesize(&b.model, &b.spec, ao, Limits::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(r.outcome == Outcome::Fsc, || format!("outcome {:?}", r.outcome))?;
    Ok((r.fsc_nodes.unwrap(), r.verified_probability.unwrap(), elapsed))
}

fn benchmark_values() -> Outcome_ {
    let limit = Duration::from_secs(60);
    let mut details = Vec::new();
    for n in [2, 3] {
        let b = gen_cards(n, CardsVariant::Removed, CardsMode::Bounded).map_err(|e| e.to_string())?;
        let (work, bad) = safety_instance(&b.model, &b.spec).map_err(|e| e.to_string())?;
        let ao = BeliefViOracle::new(work, bad, 2 * n + 1);
        let (nodes, p, t) = synthesize_benchmark(&b, &ao).map_err(|e| format!("cards-removed-{n}: {e}"))?;
        ensure(p > 0.5, || format!("cards-removed-{n}: verified {p}"))?;
        ensure(t < limit, || format!("cards-removed-{n}: {t:?}"))?;
        details.push(format!("cards-removed-{n} {p:.4} ({nodes} nodes, {:.2}s)", t.as_secs_f64()));
    }
    let mut sizes = Vec::new();
    for seed in 0..5 {
        let mut b = gen_grid_world(5, 0.1, 0.1, seed).map_err(|e| e.to_string())?;
        b.spec.alpha = 0.2;
        let (work, bad) = safety_instance(&b.model, &b.spec).map_err(|e| e.to_string())?;
        let rm = make_reward_pomdp(&work, &bad, DEFAULT_DISCOUNT).map_err(|e| e.to_string())?;
        let ao = SparseSampler::new(rm, SamplerConfig { seed, ..SamplerConfig::default() });
        let (nodes, p, t) = synthesize_benchmark(&b, &ao).map_err(|e| format!("grid seed {seed}: {e}"))?;
        ensure(p > 0.2 && nodes <= 8, || format!("grid seed {seed}: {nodes} nodes, verified {p}"))?;
        ensure(t < limit, || format!("grid seed {seed}: {t:?}"))?;
        sizes.push(nodes);
    }
    let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
    details.push(format!("grid-5 5/5 verified, sizes {sizes:?} (mean {mean:.1})"));
    Ok(details.join("; "))
}

fn discount_convergence() -> Outcome_ {
    let m = grid();
    let four_node = parse_fsc(FOUR_NODE, &m).unwrap();
    let gaps: Vec<f64> = [0.9, 0.99, 0.999]
        .iter()
        .map(|&lambda| {
            let rm = make_reward_pomdp(&m, m.bad_observations(), lambda).unwrap();
            let v = discounted_value(&rm, &four_node, 1e-12).unwrap();
            (1.0 + v - 0.729).abs()
        })
        .collect();
    ensure(gaps[0] > gaps[1] && gaps[1] > gaps[2], || format!("gaps {gaps:?} not decreasing"))?;
    ensure(gaps[2] <= 0.05, || format!("gap {} at 0.999", gaps[2]))?;
    Ok(format!("gaps {:.6} > {:.6} > {:.6}", gaps[0], gaps[1], gaps[2]))
}

fn reach_avoid_reduction() -> Outcome_ {
    let b = gen_cards(3, CardsVariant::Removed, CardsMode::Bounded).map_err(|e| e.to_string())?;
    let (work, bad) = safety_instance(&b.model, &b.spec).map_err(|e| e.to_string())?;
    let f = wait_then_guess(&work);
    let product = build_product(&work, &f).map_err(|e| e.to_string())?;
    let flags = bad_flags(&work, &bad, &product);
    let p = safety_probability(&product.chain, &flags, 1e-12);
    let unrolled = format!("{} states, horizon {}", work.num_states(), b.spec.horizon.unwrap());
    ensure((p - 1.0).abs() <= 1e-9, || format!("policy verifies at {p:.12} on the unrolled instance ({unrolled})"))?;
    Ok(format!("{p:.12} ({unrolled})"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome_); 8] = [
        ("illustrative run", illustrative_run),
        ("checker exactness", checker_exactness),
        ("counterexample contract", counterexample_contract),
        ("relative completeness", relative_completeness),
        ("oracle soundness", oracle_soundness),
        ("benchmark values", benchmark_values),
        ("discount convergence", discount_convergence),
        ("reach-avoid reduction", reach_avoid_reduction),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.2}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.2}s) {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
