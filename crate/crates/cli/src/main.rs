use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cplus::checker::{check_threshold, Verdict, DEFAULT_TOLERANCE};
use cplus::driver::{
    bad_flags, cplus_synthesize_with_cache, gen_cards, gen_grid_world, safety_instance, CardsMode, CardsVariant,
    Limits, Outcome, SynthesisReport,
};
use cplus::fsc::{build_product, export_dot, parse_fsc, run_fsc, serialize_fsc, Fsc};
use cplus::model::{parse_model, serialize_model, ObjectiveSpec, Pomdp};
use cplus::oracle::{
    ActionOracle, BeliefViOracle, CompositeOracle, FscOracle, QueryCache, SamplerConfig, SparseSampler,
};
use cplus::transform::{make_reward_pomdp, DEFAULT_DISCOUNT};

const EXIT_FAIL: u8 = 1;
const EXIT_TIMEOUT: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "cplus", version, about = "Learn finite-state controllers for POMDP safety objectives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a controller from an action oracle.
    Synth(SynthArgs),
    /// Check a controller against the threshold; prints a counterexample on violation.
    Check(CheckArgs),
    /// Monte Carlo estimate of a controller's safety probability.
    Simulate(SimulateArgs),
    /// Write a generated benchmark model.
    Gen {
        #[command(subcommand)]
        family: GenCommand,
    },
    /// Render a controller as GraphViz.
    ExportDot(ExportDotArgs),
}

#[derive(Args)]
struct ObjectiveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// Step bound for reach-avoid models (those with a `good:` section).
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    objective: ObjectiveArgs,
    /// `sampler`, `belief-vi`, `composite` or `fsc:<file>`.
    #[arg(long, default_value = "sampler")]
    oracle: String,
    #[arg(long, default_value_t = DEFAULT_DISCOUNT)]
    discount: f64,
    /// Sampler scenarios per query.
    #[arg(long, default_value_t = SamplerConfig::default().budget)]
    budget: usize,
    /// Sampler tree depth.
    #[arg(long, default_value_t = SamplerConfig::default().depth)]
    depth: usize,
    /// Belief-VI lookahead (default: three times the number of states).
    #[arg(long)]
    lookahead: Option<usize>,
    /// Belief support size above which the composite oracle samples.
    #[arg(long, default_value_t = 64)]
    support_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = Limits::default().max_iters)]
    max_iters: usize,
    /// Seconds.
    #[arg(long, default_value_t = Limits::default().timeout.as_secs_f64())]
    timeout: f64,
    /// Query cache file, read if present and written back afterwards.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Where to write the learned controller.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    JsonLines,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    objective: ObjectiveArgs,
    #[arg(long)]
    fsc: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    fsc: PathBuf,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 10_000)]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum GenCommand {
    Grid {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        bad_fraction: f64,
        #[arg(long, default_value_t = 0.1)]
        slip: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Cards {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Variant::Removed)]
        variant: Variant,
        #[arg(long, value_enum, default_value_t = Mode::Bounded)]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Removed,
    Added,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Bounded,
    Unbounded,
}

#[derive(Args)]
struct ExportDotArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    fsc: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error carrying its exit code.
struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_USAGE, e.to_string())
    }
}

type CliResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => synth(args),
        Command::Check(args) => check(args),
        Command::Simulate(args) => simulate(args),
        Command::Gen { family } => generate(family),
        Command::ExportDot(args) => dot(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_model(path: &Path) -> Result<Pomdp, Failure> {
    parse_model(&read(path)?).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn objective(args: &ObjectiveArgs) -> Result<(Pomdp, ObjectiveSpec), Failure> {
    let m = load_model(&args.model)?;
    let spec = match (args.horizon, m.good_observations()) {
        (Some(h), Some(good)) => {
            ObjectiveSpec::bounded_reach_avoid(m.bad_observations().clone(), good.clone(), h, args.alpha)?
        }
        (Some(_), None) => return Err(Failure(EXIT_USAGE, "--horizon needs a model with a `good:` section".into())),
        (None, _) => m.safety_spec(args.alpha)?,
    };
    Ok((m, spec))
}

fn load_fsc(path: &Path, m: &Pomdp) -> Result<Fsc, Failure> {
    parse_fsc(&read(path)?, m).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn synth(args: SynthArgs) -> CliResult {
    let (m, spec) = objective(&args.objective)?;
    let (work, bad) = safety_instance(&m, &spec)?;
    let sampler = || -> Result<SparseSampler, Failure> {
        let config = SamplerConfig {
            budget: args.budget,
            depth: args.depth,
            seed: args.seed,
            ..SamplerConfig::default()
        };
        Ok(SparseSampler::new(make_reward_pomdp(&work, &bad, args.discount)?, config))
    };
    let exact = || match args.lookahead {
        Some(h) => BeliefViOracle::new(work.clone(), bad.clone(), h),
        None => BeliefViOracle::with_default_horizon(work.clone(), bad.clone()),
    };
    let ao: Box<dyn ActionOracle> = match args.oracle.as_str() {
        "sampler" => Box::new(sampler()?),
        "belief-vi" => Box::new(exact()),
        "composite" => Box::new(CompositeOracle::new(exact(), sampler()?, args.support_cap)),
        other => match other.strip_prefix("fsc:") {
            Some(path) => Box::new(FscOracle::new(load_fsc(Path::new(path), &work)?)),
            None => return Err(Failure(EXIT_USAGE, format!("unknown oracle `{other}`"))),
        },
    };
    let cache = match &args.cache {
        Some(p) if p.exists() => QueryCache::load(p, &work)?,
        _ => QueryCache::new(),
    };
    if !(args.timeout >= 0.0) {
        return Err(Failure(EXIT_USAGE, "--timeout must be non-negative".into()));
    }
    let limits = Limits {
        max_iters: args.max_iters,
        timeout: Duration::from_secs_f64(args.timeout),
    };
    let report = cplus_synthesize_with_cache(&m, &spec, &ao, limits, &cache)?;
    if let Some(p) = &args.cache {
        cache.save(p, &work)?;
    }
    if let Some(f) = &report.fsc {
        if let Some(p) = &args.out {
            write_or_print(Some(p), &serialize_fsc(f, &work))?;
        }
        if let Some(p) = &args.dot {
            write_or_print(Some(p), &export_dot(f, &work))?;
        }
    }
    match args.report {
        ReportFormat::Text => print_text_report(&report),
        ReportFormat::JsonLines => {
            for round in &report.rounds {
                println!("{}", serde_json::to_string(round)?);
            }
            println!("{}", serde_json::to_string(&report)?);
        }
    }
    Ok(match report.outcome {
        Outcome::Fsc => 0,
        Outcome::Fail => EXIT_FAIL,
        Outcome::Timeout => EXIT_TIMEOUT,
    })
}

fn print_text_report(r: &SynthesisReport) {
    for (i, round) in r.rounds.iter().enumerate() {
        print!(
            "round {}: {} nodes, probability {:.6}",
            i + 1,
            round.hypothesis_nodes,
            round.probability
        );
        if round.holds {
            println!(", holds");
            continue;
        }
        print!(", {} counterexample paths examined", round.paths_examined);
        match &round.suffix {
            Some(s) => println!(", suffix {}", s.join(".")),
            None => println!(", no disagreement"),
        }
    }
    let outcome = match r.outcome {
        Outcome::Fsc => "fsc",
        Outcome::Fail => "fail",
        Outcome::Timeout => "timeout",
    };
    println!("outcome: {outcome}");
    if let (Some(n), Some(p)) = (r.fsc_nodes, r.verified_probability) {
        println!("fsc nodes: {n}");
        println!("verified probability: {p:.12}");
    }
    println!("iterations: {}", r.iterations);
    println!("oracle queries: {}", r.oracle_queries);
    println!("wall time: {:.3}s", r.wall_time);
}

fn check(args: CheckArgs) -> CliResult {
    let (m, spec) = objective(&args.objective)?;
    let (work, bad) = safety_instance(&m, &spec)?;
    let f = load_fsc(&args.fsc, &work)?;
    let product = build_product(&work, &f)?;
    let flags = bad_flags(&work, &bad, &product);
    match check_threshold(&product.chain, &flags, spec.alpha, DEFAULT_TOLERANCE)? {
        Verdict::Holds { probability } => {
            println!("holds: safety probability {probability:.12} > {}", spec.alpha);
            Ok(0)
        }
        Verdict::Violated {
            probability,
            counterexample,
        } => {
            println!("violated: safety probability {probability:.12} <= {}", spec.alpha);
            println!("counterexample ({} paths):", counterexample.len());
            let label = |i: usize| {
                let (s, n) = product.pairs[i];
                format!("({},n{n})", work.state_name(s))
            };
            print!("{}", counterexample.to_text(&product.chain, label));
            Ok(EXIT_FAIL)
        }
    }
}

fn simulate(args: SimulateArgs) -> CliResult {
    let m = load_model(&args.model)?;
    let f = load_fsc(&args.fsc, &m)?;
    if args.runs == 0 {
        return Err(Failure(EXIT_USAGE, "--runs must be positive".into()));
    }
    let safe = (0..args.runs)
        .filter(|&i| !run_fsc(&m, &f, args.steps, args.seed.wrapping_add(i)).hit_bad)
        .count();
    let p = safe as f64 / args.runs as f64;
    let half = 2.576 * (p * (1.0 - p) / args.runs as f64).sqrt();
    println!(
        "safe runs: {safe}/{} ({p:.6} ± {half:.6} at 99%, {} steps)",
        args.runs, args.steps
    );
    Ok(0)
}

fn generate(family: GenCommand) -> CliResult {
    let (bench, out) = match family {
        GenCommand::Grid {
            n,
            bad_fraction,
            slip,
            seed,
            out,
        } => (gen_grid_world(n, bad_fraction, slip, seed)?, out),
        GenCommand::Cards { n, variant, mode, out } => {
            let variant = match variant {
                Variant::Removed => CardsVariant::Removed,
                Variant::Added => CardsVariant::Added,
            };
            let mode = match mode {
                Mode::Bounded => CardsMode::Bounded,
                Mode::Unbounded => CardsMode::Unbounded,
            };
            (gen_cards(n, variant, mode)?, out)
        }
    };
    write_or_print(out.as_deref(), &serialize_model(&bench.model))?;
    if let (Some(h), Some(_)) = (bench.spec.horizon, &out) {
        eprintln!("reach-avoid objective: use --horizon {h}");
    }
    Ok(0)
}

fn dot(args: ExportDotArgs) -> CliResult {
    let m = load_model(&args.model)?;
    let f = load_fsc(&args.fsc, &m)?;
    write_or_print(args.out.as_deref(), &export_dot(&f, &m))?;
    Ok(0)
}
