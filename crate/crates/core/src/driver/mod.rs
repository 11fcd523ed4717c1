//! The learning loop and benchmark generators.

mod generators;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::checker::{
    safety_probability, threshold_holds, CheckError, PathEnumerator, DEFAULT_PATH_CAP, DEFAULT_TOLERANCE,
};
use crate::fsc::{build_product, Fsc, FscError, Product};
use crate::learner::{LearnerError, ObservationTable, Teacher};
use crate::model::{ModelError, ObjectiveKind, ObjectiveSpec, Obs, Pomdp};
use crate::oracle::{ActionOracle, QueryCache};
use crate::transform::unroll_reach_avoid;

pub use generators::{gen_cards, gen_grid_world, Benchmark, CardsMode, CardsVariant};

/// Tolerance of the final re-verification.
pub const VERIFY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fsc(#[from] FscError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits {
    pub max_iters: usize,
    pub timeout: Duration,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_iters: 100,
            timeout: Duration::from_secs(600),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Fsc,
    Fail,
    Timeout,
}

/// One model-checking query.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Round {
    pub hypothesis_nodes: usize,
    pub probability: f64,
    pub holds: bool,
    /// Counterexample paths read, most probable first, up to the first one
    /// the oracle disagrees with.
    pub paths_examined: usize,
    pub top_path_probability: Option<f64>,
    pub examined_mass: Option<f64>,
    /// Column added from the counterexample, as observation names.
    pub suffix: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthesisReport {
    pub outcome: Outcome,
    #[serde(skip)]
    pub fsc: Option<Fsc>,
    pub fsc_nodes: Option<usize>,
    /// Number of model-checking queries.
    pub iterations: usize,
    pub oracle_queries: usize,
    pub verified_probability: Option<f64>,
    pub wall_time: f64,
    pub rounds: Vec<Round>,
}

/// The safety instance the loop works on: the unrolled model for bounded
/// reach-avoid, otherwise the model with the objective's bad set.
/// Oracles passed to [`cplus_synthesize`] must plan over this model.
pub fn safety_instance(m: &Pomdp, spec: &ObjectiveSpec) -> Result<(Pomdp, BTreeSet<Obs>), ModelError> {
    spec.validate()?;
    match spec.kind {
        ObjectiveKind::BoundedReachAvoid => unroll_reach_avoid(m, spec),
        ObjectiveKind::Safety if m.bad_observations() == &spec.bad => Ok((m.clone(), spec.bad.clone())),
        ObjectiveKind::Safety => Ok((m.with_bad(spec.bad.clone())?, spec.bad.clone())),
    }
}

pub fn bad_flags(m: &Pomdp, bad: &BTreeSet<Obs>, product: &Product) -> Vec<bool> {
    product
        .pairs
        .iter()
        .map(|&(s, _)| bad.contains(&m.observation(s)))
        .collect()
}

pub fn cplus_synthesize(
    m: &Pomdp,
    spec: &ObjectiveSpec,
    ao: &dyn ActionOracle,
    limits: Limits,
) -> Result<SynthesisReport, SynthesisError> {
    cplus_synthesize_with_cache(m, spec, ao, limits, &QueryCache::new())
}

/// As [`cplus_synthesize`], reusing (and filling) `cache`.
pub fn cplus_synthesize_with_cache(
    m: &Pomdp,
    spec: &ObjectiveSpec,
    ao: &dyn ActionOracle,
    limits: Limits,
    cache: &QueryCache,
) -> Result<SynthesisReport, SynthesisError> {
    let start = Instant::now();
    let (work, bad) = safety_instance(m, spec)?;
    let calls_before = cache.oracle_calls();
    let teacher = Teacher {
        m: &work,
        ao,
        cache,
    };
    let mut report = SynthesisReport {
        outcome: Outcome::Timeout,
        fsc: None,
        fsc_nodes: None,
        iterations: 0,
        oracle_queries: 0,
        verified_probability: None,
        wall_time: 0.0,
        rounds: Vec::new(),
    };
    let finish = |mut report: SynthesisReport, outcome: Outcome| {
        report.outcome = outcome;
        report.oracle_queries = cache.oracle_calls() - calls_before;
        report.wall_time = start.elapsed().as_secs_f64();
        report
    };
    let mut table = ObservationTable::new(&teacher)?;
    loop {
        if report.iterations >= limits.max_iters || start.elapsed() > limits.timeout {
            return Ok(finish(report, Outcome::Timeout));
        }
        table.close(&teacher)?;
        let hyp = table.hypothesis(&work)?;
        let product = build_product(&work, &hyp)?;
        let flags = bad_flags(&work, &bad, &product);
        report.iterations += 1;
        let (mut holds, mut probability) = threshold_holds(&product.chain, &flags, spec.alpha, DEFAULT_TOLERANCE)?;
        if holds {
            let verified = safety_probability(&product.chain, &flags, VERIFY_TOLERANCE);
            if verified > spec.alpha {
                report.rounds.push(Round {
                    hypothesis_nodes: hyp.num_nodes(),
                    probability,
                    holds: true,
                    paths_examined: 0,
                    top_path_probability: None,
                    examined_mass: None,
                    suffix: None,
                });
                report.fsc_nodes = Some(hyp.num_nodes());
                report.fsc = Some(hyp);
                report.verified_probability = Some(verified);
                return Ok(finish(report, Outcome::Fsc));
            }
            (holds, probability) = threshold_holds(&product.chain, &flags, spec.alpha, VERIFY_TOLERANCE)?;
            if holds {
                // tight re-check disagrees with itself; refuse to certify
                return Ok(finish(report, Outcome::Fail));
            }
        }
        // The counterexample is enumerated lazily: paths are read in the
        // order the checker emits them and the first disagreeing one is
        // used, so the rest of the set is never materialised.
        let mut round = Round {
            hypothesis_nodes: hyp.num_nodes(),
            probability,
            holds: false,
            paths_examined: 0,
            top_path_probability: None,
            examined_mass: Some(0.0),
            suffix: None,
        };
        let target = 1.0 - spec.alpha;
        let mut mass = 0.0;
        let mut refined = false;
        for item in PathEnumerator::new(&product.chain, &flags, DEFAULT_PATH_CAP) {
            let (path, prob) = item?;
            round.paths_examined += 1;
            round.top_path_probability.get_or_insert(prob);
            mass += prob;
            round.examined_mass = Some(mass);
            if let Some((suffix, _)) = table.refine_with_path(&teacher, &path, &product, &hyp)? {
                round.suffix = Some(suffix.iter().map(|&z| work.obs_name(z).to_string()).collect());
                refined = true;
                break;
            }
            if mass > target {
                break;
            }
        }
        report.rounds.push(round);
        if !refined {
            return Ok(finish(report, Outcome::Fail));
        }
    }
}
