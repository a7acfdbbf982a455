//! Acceptance suite: one pass/fail line per criterion.
//!
//! `cargo test --test acceptance` runs everything; trailing numeric arguments
//! (`cargo test --test acceptance -- 5 6`) select criteria.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use expcon::constraints::{scale_targets, ConstraintSet};
use expcon::eval::evaluate;
use expcon::ge::{ge_base_train, ge_terms_matching_l2, ge_train};
use expcon::io::{parse_constraints_str, Schema};
use expcon::model::{Example, Layout, ParamVector, SequenceInstance, SparseFeatures};
use expcon::oracle::{
    check_chain_inference, check_ge_gradient, check_gibbs, check_i_gradient, check_kkt,
    check_m_gradient, check_monotone, check_supervised_gradient, random_params,
    CheckOutcome,
};
use expcon::projections::{
    ap_train, i_objective_and_gradient, joint_objective, m_objective_and_gradient,
    supervised_train, Mode, RateSchedule, TrainConfig, CLASSIFICATION_BETA, SEQUENCE_BETA,
};
use expcon::synth::{synth_generate, ChainGen, ClassificationGen, SegmentGen, SynthTask, Synthetic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    passed: bool,
    detail: String,
}

type Outcome = expcon::Result<Verdict>;

fn within(o: &CheckOutcome, budget: Option<(Duration, Duration)>) -> Verdict {
    let fast = budget.is_none_or(|(took, limit)| took <= limit);
    let time = budget.map_or(String::new(), |(took, limit)| {
        format!(", {:.1}s of {:.0}s", took.as_secs_f64(), limit.as_secs_f64())
    });
    Verdict {
        passed: o.passed() && fast,
        detail: format!("{}: worst {:.3e} <= {:.0e} over {} cases{time}", o.name, o.worst, o.tolerance, o.cases),
    }
}

fn all(checks: Vec<Verdict>) -> Verdict {
    Verdict {
        passed: checks.iter().all(|v| v.passed),
        detail: checks.into_iter().map(|v| v.detail).collect::<Vec<_>>().join("; "),
    }
}

fn c1_inference() -> Outcome {
    let t = Instant::now();
    let o = check_chain_inference(101, 200)?;
    Ok(within(&o, Some((t.elapsed(), Duration::from_secs(10)))))
}

fn c2_gradients() -> Outcome {
    let t = Instant::now();
    let checks = [
        check_supervised_gradient(201, 50)?,
        check_m_gradient(202, 50)?,
        check_i_gradient(203, 50)?,
        check_ge_gradient(204, 50)?,
    ];
    let took = t.elapsed();
    let mut v = all(checks.iter().map(|o| within(o, None)).collect());
    v.passed &= took <= Duration::from_secs(60);
    v.detail.push_str(&format!("; {:.1}s of 60s", took.as_secs_f64()));
    Ok(v)
}

fn c3_monotone() -> Outcome {
    Ok(within(&check_monotone(301, 20, 10)?, None))
}

fn c4_kkt() -> Outcome {
    Ok(within(&check_kkt(401, 20)?, None))
}

fn constraint_set(s: &Synthetic, text: &str, pool: &[Example], beta: f64) -> expcon::Result<(Schema, ConstraintSet)> {
    let mut schema = s.schema.clone();
    let specs = parse_constraints_str(text, "synthetic", &mut schema, beta)?;
    let set = scale_targets(&specs, pool)?;
    Ok((schema, set))
}

fn c5_classification() -> Outcome {
    let t = Instant::now();
    let (mut wins, mut close) = (0, 0);
    let mut rows = Vec::new();
    for seed in SEEDS {
        let s = synth_generate(&SynthTask::Classification(ClassificationGen::default()), seed)?;
        let (schema, set) = constraint_set(&s, &s.constraints, &s.unlabeled, CLASSIFICATION_BETA)?;
        let layout = Layout::flat(schema.vocab.len(), schema.labels.len());
        let cfg = TrainConfig { seed, ..TrainConfig::classification() };
        let ap = ap_train(layout, &s.labeled, &s.unlabeled, &set, &cfg)?.lambda;
        let terms = ge_terms_matching_l2(&set, cfg.gamma)?;
        let ge = ge_train(layout, &terms, &s.labeled, &s.unlabeled, &cfg)?;
        let base = ge_base_train(layout, &terms, &s.labeled, &s.unlabeled, &cfg)?;
        let f1 = |l: &ParamVector| evaluate(l, &s.test).map(|r| r.macro_f1);
        let (ap, ge, base) = (f1(&ap)?, f1(&ge)?, f1(&base)?);
        wins += usize::from(ap > base);
        close += usize::from((ge - ap).abs() <= 0.05);
        rows.push(format!("{ap:.3}/{ge:.3}/{base:.3}"));
    }
    let took = t.elapsed();
    Ok(Verdict {
        passed: wins >= 4 && close == SEEDS.len() && took <= Duration::from_secs(300),
        detail: format!(
            "macro-F1 AP/GE/base per seed [{}]; AP > base in {wins}/5, |GE-AP| <= 0.05 in {close}/5; {:.0}s of 300s",
            rows.join(", "),
            took.as_secs_f64()
        ),
    })
}

/// Constraint-only chain training. With no labeled data `γ` only trades off
/// against `α`, and the sequence default (0.1) regularizes the transition
/// weights too hard to express the self-transition target.
fn c6_self_transition() -> Outcome {
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in SEEDS {
        let s = synth_generate(&SynthTask::Chain(ChainGen::default()), seed)?;
        let cfg = TrainConfig { gamma: 1.0, seed, ..TrainConfig::sequence() };
        let without: String = s
            .constraints
            .split("\n\n")
            .filter(|r| !r.contains("kind=self-transition"))
            .collect::<Vec<_>>()
            .join("\n\n");
        let mut acc = Vec::new();
        for text in [&s.constraints, &without] {
            let (schema, set) = constraint_set(&s, text, &s.unlabeled, SEQUENCE_BETA)?;
            let layout = Layout::chain(schema.vocab.len(), schema.labels.len());
            let st = ap_train(layout, &s.labeled, &s.unlabeled, &set, &cfg)?;
            acc.push(evaluate(&st.lambda, &s.test)?.accuracy);
        }
        wins += usize::from(acc[0] > acc[1]);
        rows.push(format!("{:.3}/{:.3}", acc[0], acc[1]));
    }
    Ok(Verdict {
        passed: wins >= 4,
        detail: format!(
            "token accuracy with/without self-transition [{}]; improved in {wins}/5",
            rows.join(", ")
        ),
    })
}

/// Least-squares slope of `ln t` on `ln K`.
fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Per-sequence cost of one AP gradient evaluation (the M-projection
/// gradient plus the I-projection gradient) at fixed length, as `(K, secs)`.
fn gradient_times() -> expcon::Result<Vec<(f64, f64)>> {
    const LEN: usize = 200;
    const SEQS: usize = 20;
    const KS: [usize; 4] = [2, 4, 8, 16];
    struct Case {
        lambda: ParamVector,
        data: Vec<Example>,
        set: ConstraintSet,
    }
    let mut cases = Vec::new();
    for k in KS {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + k as u64);
        let vocab = 8;
        let layout = Layout::chain(vocab, k);
        let lambda = random_params(&mut rng, layout, 0.5);
        // Tokens as in the synthetic chain task: a bias and one word.
        let data: Vec<Example> = (0..SEQS)
            .map(|_| {
                let tokens = (0..LEN)
                    .map(|_| SparseFeatures::indicators(&[0, rng.gen_range(1..vocab)]))
                    .collect::<expcon::Result<Vec<_>>>()?;
                Ok(Example::Sequence(SequenceInstance::new(tokens, None)?))
            })
            .collect::<expcon::Result<_>>()?;
        let text = "kind=self-transition\ntarget=0.5\ntarget-mode=proportion\npenalty=l2\nbeta=1\n";
        let mut schema = Schema::frozen(
            expcon::io::Vocabulary::from_names((0..vocab).map(|i| format!("w{i}")))?,
            expcon::model::LabelSpace::anonymous(k)?,
        );
        let specs = parse_constraints_str(text, "timing", &mut schema, 1.0)?;
        let set = scale_targets(&specs, &data)?;
        cases.push(Case { lambda, data, set });
    }
    let once = |c: &Case| -> expcon::Result<()> {
        let q = vec![0.0; c.lambda.layout().dim()];
        let mu = vec![-0.3; c.set.len()];
        m_objective_and_gradient(&c.lambda, &q, &[], &c.data, 1.0, 0.1)?;
        i_objective_and_gradient(&c.lambda, &mu, &c.set, &c.data)?;
        Ok(())
    };
    for c in &cases {
        once(c)?;
    }
    // Repetitions are interleaved across K so machine drift hits every K
    // alike; the best repetition is the least disturbed by scheduling.
    let mut best = [f64::INFINITY; KS.len()];
    for _ in 0..9 {
        for (c, b) in cases.iter().zip(&mut best) {
            let t = Instant::now();
            for _ in 0..3 {
                once(c)?;
            }
            *b = b.min(t.elapsed().as_secs_f64() / (3 * SEQS) as f64);
        }
    }
    Ok(KS.iter().zip(best).map(|(&k, t)| (k as f64, t)).collect())
}

/// Timing runs in a fresh child process: heap state left by the earlier
/// criteria otherwise slows the small-K runs and skews the fit.
fn c7_complexity() -> Outcome {
    let exe = std::env::current_exe().map_err(|e| expcon::Error::Config(e.to_string()))?;
    let out = std::process::Command::new(exe)
        .arg(TIMING_CHILD)
        .output()
        .map_err(|e| expcon::Error::Config(e.to_string()))?;
    let text = String::from_utf8_lossy(&out.stdout);
    let points: Vec<(f64, f64)> = text
        .lines()
        .filter_map(|l| {
            let (k, t) = l.split_once(' ')?;
            Some((k.parse().ok()?, t.parse().ok()?))
        })
        .collect();
    if !out.status.success() || points.len() != 4 {
        return Err(expcon::Error::Optimization(format!(
            "timing child failed: {}",
            String::from_utf8_lossy(&out.stderr)
        )));
    }
    let slope = loglog_slope(&points);
    Ok(Verdict {
        passed: (1.6..=2.4).contains(&slope),
        detail: format!(
            "per-sequence gradient time at L=200 {}; log-log slope {slope:.2} in [1.6, 2.4]",
            points
                .iter()
                .map(|(k, t)| format!("K={k}: {:.1}us", t * 1e6))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    })
}

/// Retained samples are thinned by 5 so that they are close to independent.
fn c8_gibbs() -> Outcome {
    Ok(all(vec![
        within(&check_gibbs(801, 10, 10_000, 5, 0.02)?, None),
        within(&check_gibbs(802, 10, 40_000, 5, 0.01)?, None),
    ]))
}

fn c9_online() -> Outcome {
    let g = ClassificationGen {
        labels: 4,
        triggers: 12,
        words: 60,
        labeled: 40,
        unlabeled: 160,
        test: 0,
        beta: SEQUENCE_BETA,
        ..ClassificationGen::default()
    };
    let s = synth_generate(&SynthTask::Classification(g), 9)?;
    let (schema, set) = constraint_set(&s, &s.constraints, &s.unlabeled, SEQUENCE_BETA)?;
    let layout = Layout::flat(schema.vocab.len(), schema.labels.len());
    let batch_cfg = TrainConfig {
        iterations: 50,
        inner_tolerance: 1e-8,
        ..TrainConfig::classification()
    };
    let batch = ap_train(layout, &s.labeled, &s.unlabeled, &set, &batch_cfg)?;
    let online_cfg = TrainConfig {
        mode: Mode::Online,
        iterations: 50,
        eta0: 0.1,
        schedule: RateSchedule::PerEpoch,
        seed: 9,
        ..TrainConfig::classification()
    };
    let online = ap_train(layout, &s.labeled, &s.unlabeled, &set, &online_cfg)?;
    let value = |st: &expcon::projections::APState| {
        joint_objective(&st.lambda, &st.mu, &set, &s.labeled, &s.unlabeled, &batch_cfg)
    };
    let (jb, jo) = (value(&batch)?, value(&online)?);
    let rel = (jo - jb).abs() / jb.abs();
    Ok(Verdict {
        passed: rel <= 0.01,
        detail: format!(
            "joint objective batch {jb:.4}, online {jo:.4} (200 instances, 50 epochs, beta 1, per-epoch rate); relative gap {rel:.4} <= 0.01"
        ),
    })
}

fn c10_segments() -> Outcome {
    let t = Instant::now();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in SEEDS {
        let s = synth_generate(&SynthTask::Segments(segment_task()), seed)?;
        let layout = Layout::chain(s.schema.vocab.len(), s.schema.labels.len());
        let cfg = segment_config(seed);
        let sup = supervised_train(layout, &s.labeled, &cfg)?;
        let sup = evaluate(&sup, &s.test)?.accuracy;
        let mut transductive = s.unlabeled.clone();
        transductive.extend(s.test.iter().map(Example::unlabeled));
        let mut acc = Vec::new();
        for pool in [&s.unlabeled, &transductive] {
            let (_, set) = constraint_set(&s, &s.constraints, pool, SEQUENCE_BETA)?;
            let st = ap_train(layout, &s.labeled, pool, &set, &cfg)?;
            acc.push(evaluate(&st.lambda, &s.test)?.accuracy);
        }
        wins += usize::from(acc[0] > sup && acc[1] > sup);
        rows.push(format!("{sup:.3}/{:.3}/{:.3}", acc[0], acc[1]));
    }
    let took = t.elapsed();
    Ok(Verdict {
        passed: wins >= 4 && took <= Duration::from_secs(600),
        detail: format!(
            "token accuracy Sup/AP-I/AP-T [{}]; both beat Sup in {wins}/5; {:.0}s of 600s",
            rows.join(", "),
            took.as_secs_f64()
        ),
    })
}

fn segment_task() -> SegmentGen {
    SegmentGen::default()
}

fn segment_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        alpha: 0.1,
        iterations: 5,
        sampled_iters: 10,
        warm_start: true,
        seed,
        ..TrainConfig::sequence()
    };
    cfg.sampler.burn_in = 10;
    cfg.sampler.sweeps = 100;
    cfg
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const TIMING_CHILD: &str = "--gradient-times";

fn main() -> ExitCode {
    if std::env::args().any(|a| a == TIMING_CHILD) {
        return match gradient_times() {
            Ok(points) => {
                for (k, t) in points {
                    println!("{k} {t:e}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::FAILURE
            }
        };
    }
    let criteria: [Criterion; 10] = [
        (1, "chain inference matches enumeration", c1_inference),
        (2, "gradients match finite differences", c2_gradients),
        (3, "alternating projections are monotone", c3_monotone),
        (4, "I-projection satisfies KKT", c4_kkt),
        (5, "classification: AP beats base, GE close to AP", c5_classification),
        (6, "chain: self-transition constraint helps", c6_self_transition),
        (7, "gradient cost is quadratic in K", c7_complexity),
        (8, "Gibbs expectations converge", c8_gibbs),
        (9, "online AP reaches the batch objective", c9_online),
        (10, "segments: AP-I and AP-T beat Sup", c10_segments),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (passed, detail) = match run() {
            Ok(v) => (v.passed, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        println!(
            "criterion {id:>2} {} {name} ({:.1}s): {detail}",
            if passed { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
