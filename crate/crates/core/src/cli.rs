//! Command-line surface: `train`, `label`, `eval`, `synth`, `oracle-check`.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::constraints::{scale_targets, ConstraintSet};
use crate::error::{Error, Result};
use crate::eval::{evaluate, relabel, ExperimentReport};
use crate::ge::{ge_base_train, ge_terms_matching_l2, ge_train};
use crate::gibbs::SamplerConfig;
use crate::io::{
    format_examples, parse_constraints_file, parse_file, Checkpoint, Schema, TaskKind,
};
use crate::model::{Example, ParamVector};
use crate::oracle::oracle_suite;
use crate::projections::{
    ap_train, supervised_train, Mode, RateSchedule, TrainConfig, CLASSIFICATION_BETA, SEQUENCE_BETA,
};
use crate::synth::{synth_generate, ChainGen, ClassificationGen, SegmentGen, SynthTask};

#[derive(Debug, Parser)]
#[command(
    name = "expcon",
    version,
    about = "Semi-supervised log-linear and linear-chain models with expectation constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train(Box<TrainArgs>),
    /// Decode an input file with a checkpoint.
    Label(LabelArgs),
    /// Score a checkpoint on a labeled file.
    Eval(EvalArgs),
    /// Write a synthetic task (data splits and constraint file).
    Synth(SynthArgs),
    /// Run the randomized invariant suite; exit 0 iff every check passes.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Clf,
    Seq,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Clf => TaskKind::Classification,
            TaskArg::Seq => TaskKind::Sequence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Trainer {
    /// Alternating projections.
    Ap,
    /// Generalized expectation (classification only).
    Ge,
    /// GE restricted to the constraint trigger features.
    GeBase,
    /// Labeled data only.
    Sup,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Example,
    Epoch,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Batch,
    Online,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum, default_value = "ap")]
    trainer: Trainer,
    #[arg(long, value_enum, default_value = "batch")]
    mode: ModeArg,
    /// Add the test inputs to the unlabeled pool.
    #[arg(long, conflicts_with = "inductive")]
    transductive: bool,
    /// Keep test inputs out of training (default).
    #[arg(long)]
    inductive: bool,
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Labeled training data; `?` lines join the unlabeled pool.
    #[arg(long)]
    labeled: Option<PathBuf>,
    /// Unlabeled pool; any labels in it are ignored.
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    /// Test data: joins the pool under --transductive, and is scored after
    /// training when labeled.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Default constraint strength for records without `beta`.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Rounds (batch) or epochs (online).
    #[arg(long = "T", alias = "rounds")]
    rounds: Option<usize>,
    #[arg(long)]
    eta0: Option<f64>,
    /// Online rate index: ticks per instance or per epoch.
    #[arg(long, value_enum, default_value = "example")]
    rate_schedule: ScheduleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    inner_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Start from the supervised optimum instead of zero.
    #[arg(long)]
    warm_start: bool,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
    #[arg(long)]
    sampled_iters: Option<usize>,
    #[arg(long)]
    sampled_step: Option<f64>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training report (objective trace, timings, test scores); stdout if absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LabelArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Bag-of-words documents with label trigger words.
    Clf,
    /// Markov label chains with a self-transition rate.
    Chain,
    /// Field sequences where every label forms at most one segment.
    Segments,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    task: SynthKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    labels: Option<usize>,
    #[arg(long)]
    labeled: Option<usize>,
    #[arg(long)]
    unlabeled: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Trigger words in total (clf) or per label (chain).
    #[arg(long)]
    triggers: Option<usize>,
    /// Self-transition probability (chain).
    #[arg(long)]
    self_transition: Option<f64>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train(a) => train(*a).map(|_| 0),
        Command::Label(a) => label(a).map(|_| 0),
        Command::Eval(a) => eval(a).map(|_| 0),
        Command::Synth(a) => synth(a).map(|_| 0),
        Command::OracleCheck(a) => oracle(a),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn config(a: &TrainArgs, kind: TaskKind) -> TrainConfig {
    let mut cfg = match kind {
        TaskKind::Classification => TrainConfig::classification(),
        TaskKind::Sequence => TrainConfig::sequence(),
    };
    let d = SamplerConfig::default();
    cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
    cfg.gamma = a.gamma.unwrap_or(cfg.gamma);
    cfg.iterations = a.rounds.unwrap_or(cfg.iterations);
    cfg.eta0 = a.eta0.unwrap_or(cfg.eta0);
    cfg.schedule = match a.rate_schedule {
        ScheduleArg::Example => RateSchedule::PerExample,
        ScheduleArg::Epoch => RateSchedule::PerEpoch,
    };
    cfg.seed = a.seed;
    cfg.inner_tolerance = a.inner_tol.unwrap_or(cfg.inner_tolerance);
    cfg.inner_max_iters = a.max_iters.unwrap_or(cfg.inner_max_iters);
    cfg.warm_start = a.warm_start;
    cfg.mode = match a.mode {
        ModeArg::Batch => Mode::Batch,
        ModeArg::Online => Mode::Online,
    };
    cfg.sampler = SamplerConfig {
        burn_in: a.burn_in.unwrap_or(d.burn_in),
        sweeps: a.sweeps.unwrap_or(d.sweeps),
        thinning: a.thinning.unwrap_or(d.thinning),
        seed: a.seed,
    };
    cfg.sampled_iters = a.sampled_iters.unwrap_or(cfg.sampled_iters);
    cfg.sampled_step = a.sampled_step.unwrap_or(cfg.sampled_step);
    cfg
}

fn train(a: TrainArgs) -> Result<()> {
    let kind = TaskKind::from(a.task);
    let cfg = config(&a, kind);
    cfg.validate()?;
    let started = Instant::now();
    let mut schema = Schema::new();
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    if let Some(p) = &a.labeled {
        for ex in parse_file(kind, p, &mut schema)?.examples {
            if ex.is_labeled() {
                labeled.push(ex);
            } else {
                unlabeled.push(ex);
            }
        }
    }
    if let Some(p) = &a.unlabeled {
        unlabeled.extend(parse_file(kind, p, &mut schema)?.examples.iter().map(Example::unlabeled));
    }
    let test = match &a.test {
        Some(p) if a.transductive => {
            let t = parse_file(kind, p, &mut schema)?.examples;
            unlabeled.extend(t.iter().map(Example::unlabeled));
            Some(t)
        }
        _ => None,
    };
    if a.transductive && a.test.is_none() {
        return Err(Error::Config("--transductive needs --test".into()));
    }
    let default_beta = a.beta.unwrap_or(match kind {
        TaskKind::Classification => CLASSIFICATION_BETA,
        TaskKind::Sequence => SEQUENCE_BETA,
    });
    let specs = match &a.constraints {
        Some(p) => parse_constraints_file(p, &mut schema, default_beta)?,
        None => Vec::new(),
    };
    if a.trainer != Trainer::Sup && specs.is_empty() {
        return Err(Error::Config(format!(
            "trainer {:?} needs --constraints",
            a.trainer
        )));
    }
    if schema.labels.len() < 2 {
        return Err(Error::Config(
            "fewer than two labels named by the data and constraints".into(),
        ));
    }
    let set: ConstraintSet = scale_targets(&specs, &unlabeled)?;
    let load_secs = started.elapsed().as_secs_f64();
    info!(
        "{} labeled, {} unlabeled, {} features, {} labels, {} active constraints",
        labeled.len(),
        unlabeled.len(),
        schema.vocab.len(),
        schema.labels.len(),
        set.len()
    );

    let layout = Checkpoint::layout(kind, &schema.vocab, &schema.labels);
    let fit = Instant::now();
    let (lambda, mu, iteration, trace): (ParamVector, Vec<f64>, usize, Vec<f64>) = match a.trainer {
        Trainer::Sup => (supervised_train(layout, &labeled, &cfg)?, Vec::new(), 0, Vec::new()),
        Trainer::Ap => {
            let st = ap_train(layout, &labeled, &unlabeled, &set, &cfg)?;
            let mut trace = vec![st.initial_objective];
            trace.extend(&st.objective_trace);
            (st.lambda, st.mu.values().to_vec(), st.iteration, trace)
        }
        Trainer::Ge | Trainer::GeBase => {
            if kind != TaskKind::Classification {
                return Err(Error::Config("GE training covers classification only".into()));
            }
            let terms = ge_terms_matching_l2(&set, cfg.gamma)?;
            let lambda = if a.trainer == Trainer::Ge {
                ge_train(layout, &terms, &labeled, &unlabeled, &cfg)?
            } else {
                ge_base_train(layout, &terms, &labeled, &unlabeled, &cfg)?
            };
            (lambda, Vec::new(), 0, Vec::new())
        }
    };
    let fit_secs = fit.elapsed().as_secs_f64();

    let ck = Checkpoint {
        task: kind,
        labels: schema.labels.clone(),
        vocab: schema.vocab.clone(),
        lambda,
        mu,
        iteration,
        meta: vec![
            ("trainer".into(), format!("{:?}", a.trainer).to_lowercase()),
            ("mode".into(), format!("{:?}", a.mode).to_lowercase()),
            ("transductive".into(), a.transductive.to_string()),
            ("alpha".into(), format!("{:?}", cfg.alpha)),
            ("gamma".into(), format!("{:?}", cfg.gamma)),
            ("T".into(), cfg.iterations.to_string()),
            ("eta0".into(), format!("{:?}", cfg.eta0)),
            ("rate-schedule".into(), format!("{:?}", a.rate_schedule).to_lowercase()),
            ("seed".into(), cfg.seed.to_string()),
        ],
    };
    ck.save(&a.out)?;

    let mut report = ExperimentReport::default();
    if let Some(p) = &a.test {
        let test = match test {
            Some(t) => t,
            None => {
                let mut frozen = Schema::frozen(schema.vocab.clone(), schema.labels.clone());
                parse_file(kind, p, &mut frozen)?.examples
            }
        };
        if test.iter().all(Example::is_labeled) && !test.is_empty() {
            report = evaluate(&ck.lambda, &test)?;
        }
    }
    report.objective_trace = trace;
    report.phase_seconds = vec![("load".into(), load_secs), ("train".into(), fit_secs)];
    emit(a.report.as_deref(), &report.to_text(&ck.labels))
}

fn load_with_schema(model: &Path, data: &Path) -> Result<(Checkpoint, Vec<Example>)> {
    let ck = Checkpoint::load(model)?;
    let mut schema = Schema::frozen(ck.vocab.clone(), ck.labels.clone());
    let examples = parse_file(ck.task, data, &mut schema)?.examples;
    Ok((ck, examples))
}

fn label(a: LabelArgs) -> Result<()> {
    let (ck, examples) = load_with_schema(&a.model, &a.input)?;
    let decoded = relabel(&ck.lambda, &examples)?;
    let schema = Schema::frozen(ck.vocab.clone(), ck.labels.clone());
    emit(a.out.as_deref(), &format_examples(&decoded, &schema))
}

fn eval(a: EvalArgs) -> Result<()> {
    let (ck, examples) = load_with_schema(&a.model, &a.data)?;
    let report = evaluate(&ck.lambda, &examples)?;
    emit(a.out.as_deref(), &report.to_text(&ck.labels))
}

fn synth(a: SynthArgs) -> Result<()> {
    let task = match a.task {
        SynthKind::Clf => {
            let d = ClassificationGen::default();
            SynthTask::Classification(ClassificationGen {
                labels: a.labels.unwrap_or(d.labels),
                triggers: a.triggers.unwrap_or(d.triggers),
                labeled: a.labeled.unwrap_or(d.labeled),
                unlabeled: a.unlabeled.unwrap_or(d.unlabeled),
                test: a.test.unwrap_or(d.test),
                ..d
            })
        }
        SynthKind::Chain => {
            let d = ChainGen::default();
            SynthTask::Chain(ChainGen {
                labels: a.labels.unwrap_or(d.labels),
                triggers_per_label: a.triggers.unwrap_or(d.triggers_per_label),
                self_transition: a.self_transition.unwrap_or(d.self_transition),
                labeled: a.labeled.unwrap_or(d.labeled),
                unlabeled: a.unlabeled.unwrap_or(d.unlabeled),
                test: a.test.unwrap_or(d.test),
                ..d
            })
        }
        SynthKind::Segments => {
            let d = SegmentGen::default();
            SynthTask::Segments(SegmentGen {
                labels: a.labels.unwrap_or(d.labels),
                labeled: a.labeled.unwrap_or(d.labeled),
                unlabeled: a.unlabeled.unwrap_or(d.unlabeled),
                test: a.test.unwrap_or(d.test),
                ..d
            })
        }
    };
    synth_generate(&task, a.seed)?.write(&a.out_dir)
}

fn oracle(a: OracleArgs) -> Result<i32> {
    let mut all = true;
    let mut out = String::new();
    for o in oracle_suite(a.seed)? {
        let verdict = if o.passed() { "pass" } else { "FAIL" };
        all &= o.passed();
        out.push_str(&format!(
            "{verdict}\t{}\tcases={}\tworst={:e}\ttolerance={:e}\n",
            o.name, o.cases, o.worst, o.tolerance
        ));
    }
    emit(None, &out)?;
    Ok(if all { 0 } else { 4 })
}
