//! Seeded synthetic tasks with known label structure, emitted together with
//! constraint files whose targets are the true proportions on the unlabeled
//! pool.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{format_examples, Schema, TaskKind};
use crate::model::{Example, Instance, SequenceInstance, SparseFeatures};

/// Bag-of-words documents. Every label owns some trigger words and some
/// ordinary words; word occurrences are independent Bernoulli draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationGen {
    pub labels: usize,
    /// Total trigger words, spread round-robin over the labels.
    pub triggers: usize,
    /// Ordinary (non-trigger) words, also assigned round-robin a home label.
    pub words: usize,
    /// Rate of a label's own trigger in its documents.
    pub trigger_rate: f64,
    /// Rate of a foreign trigger.
    pub trigger_leak: f64,
    /// Rate of an ordinary word in documents of its home label.
    pub home_rate: f64,
    /// Rate of an ordinary word elsewhere.
    pub background_rate: f64,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
    /// l2 `beta` written into the constraint file.
    pub beta: f64,
}

impl Default for ClassificationGen {
    fn default() -> Self {
        ClassificationGen {
            labels: 6,
            triggers: 50,
            words: 300,
            trigger_rate: 0.15,
            trigger_leak: 0.02,
            home_rate: 0.08,
            background_rate: 0.03,
            labeled: 0,
            unlabeled: 2000,
            test: 1000,
            beta: 0.01,
        }
    }
}

/// Markov label chains with a fixed self-transition probability; each
/// position emits one word and a bias feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainGen {
    pub labels: usize,
    pub self_transition: f64,
    pub triggers_per_label: usize,
    /// Probability that a position emits a trigger of its own label.
    pub trigger_prob: f64,
    /// Probability that a trigger is emitted by a label it does not belong to.
    pub trigger_leak: f64,
    /// Shared words, each with a home label.
    pub words: usize,
    /// Probability that a non-trigger word comes from the home set.
    pub home_prob: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
    pub beta: f64,
}

impl Default for ChainGen {
    fn default() -> Self {
        ChainGen {
            labels: 5,
            self_transition: 0.9,
            triggers_per_label: 3,
            trigger_prob: 0.25,
            trigger_leak: 0.03,
            words: 100,
            home_prob: 0.5,
            min_len: 10,
            max_len: 30,
            labeled: 0,
            unlabeled: 200,
            test: 200,
            beta: 1.0,
        }
    }
}

/// Field-structured sequences: every label occurs in at most one contiguous
/// segment, fields follow a noisy canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGen {
    pub labels: usize,
    /// Probability that a field is present in a sequence.
    pub field_prob: f64,
    /// Probability of swapping each adjacent pair of the canonical order.
    pub swap_prob: f64,
    pub min_segment: usize,
    pub max_segment: usize,
    pub words_per_label: usize,
    /// Shared words carrying no label information.
    pub shared_words: usize,
    /// Probability that a token is one of its field's own words.
    pub own_prob: f64,
    /// Probability that a token is borrowed from another field's words; such
    /// tokens split a segment when decoded on their own.
    pub confuse_prob: f64,
    /// Leading own words per field that get a token-label constraint.
    pub cue_words: usize,
    /// Per-sequence bound on the expected repetition count.
    pub repetition_target: f64,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
}

impl Default for SegmentGen {
    fn default() -> Self {
        SegmentGen {
            labels: 6,
            field_prob: 0.85,
            swap_prob: 0.15,
            min_segment: 3,
            max_segment: 8,
            words_per_label: 5,
            shared_words: 10,
            own_prob: 0.6,
            confuse_prob: 0.15,
            cue_words: 2,
            repetition_target: 0.05,
            labeled: 5,
            unlabeled: 100,
            test: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthTask {
    Classification(ClassificationGen),
    Chain(ChainGen),
    Segments(SegmentGen),
}

impl SynthTask {
    pub fn kind(&self) -> TaskKind {
        match self {
            SynthTask::Classification(_) => TaskKind::Classification,
            _ => TaskKind::Sequence,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub kind: TaskKind,
    pub schema: Schema,
    pub labeled: Vec<Example>,
    /// Unlabeled pool (labels stripped).
    pub unlabeled: Vec<Example>,
    /// Gold labels of the unlabeled pool, for analysis.
    pub unlabeled_gold: Vec<Example>,
    pub test: Vec<Example>,
    /// Constraint file text with targets measured on the unlabeled pool.
    pub constraints: String,
}

impl Synthetic {
    /// Writes `labeled.txt`, `unlabeled.txt`, `test.txt` and
    /// `constraints.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("labeled.txt", format_examples(&self.labeled, &self.schema)),
            ("unlabeled.txt", format_examples(&self.unlabeled, &self.schema)),
            ("test.txt", format_examples(&self.test, &self.schema)),
            ("constraints.txt", self.constraints.clone()),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")))
    }
}

fn schema_with(labels: usize, words: impl IntoIterator<Item = String>) -> Result<Schema> {
    if labels < 2 {
        return Err(Error::Config("a synthetic task needs at least 2 labels".into()));
    }
    let mut schema = Schema::new();
    for l in 0..labels {
        schema.labels.intern(&format!("L{l}"));
    }
    for w in words {
        schema.vocab.intern(&w);
    }
    Ok(schema)
}

pub fn synth_generate(task: &SynthTask, seed: u64) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match task {
        SynthTask::Classification(g) => classification(g, &mut rng),
        SynthTask::Chain(g) => chain(g, &mut rng),
        SynthTask::Segments(g) => segments(g, &mut rng),
    }
}

fn classification(g: &ClassificationGen, rng: &mut ChaCha8Rng) -> Result<Synthetic> {
    for (n, p) in [
        ("trigger_rate", g.trigger_rate),
        ("trigger_leak", g.trigger_leak),
        ("home_rate", g.home_rate),
        ("background_rate", g.background_rate),
    ] {
        check_prob(n, p)?;
    }
    if g.triggers < g.labels {
        return Err(Error::Config("need at least one trigger per label".into()));
    }
    let k = g.labels;
    // Word ids: triggers first, then ordinary words.
    let names = (0..g.triggers)
        .map(|i| format!("t{i}"))
        .chain((0..g.words).map(|i| format!("w{i}")));
    let schema = schema_with(k, names)?;
    let rate = |label: usize, word: usize| -> f64 {
        if word < g.triggers {
            if word % k == label {
                g.trigger_rate
            } else {
                g.trigger_leak
            }
        } else if (word - g.triggers) % k == label {
            g.home_rate
        } else {
            g.background_rate
        }
    };
    let vocab = g.triggers + g.words;
    let draw = |rng: &mut ChaCha8Rng| -> Instance {
        let y = rng.gen_range(0..k);
        let ids: Vec<usize> = (0..vocab).filter(|&w| rng.gen_bool(rate(y, w))).collect();
        Instance::new(SparseFeatures::indicators(&ids).expect("sorted ids"), Some(y))
    };
    let labeled: Vec<Example> = (0..g.labeled).map(|_| Example::Flat(draw(rng))).collect();
    let gold: Vec<Example> = (0..g.unlabeled).map(|_| Example::Flat(draw(rng))).collect();
    let test: Vec<Example> = (0..g.test).map(|_| Example::Flat(draw(rng))).collect();

    let mut counts = vec![vec![0usize; k]; g.triggers];
    for ex in &gold {
        if let Example::Flat(i) = ex {
            for &(w, _) in i.features.entries() {
                if w < g.triggers {
                    counts[w][i.label.expect("generated labeled")] += 1;
                }
            }
        }
    }
    let mut constraints = String::new();
    for (w, row) in counts.iter().enumerate() {
        let n: usize = row.iter().sum();
        if n == 0 {
            continue;
        }
        for (y, &c) in row.iter().enumerate() {
            let _ = writeln!(
                constraints,
                "kind=word-label\ntrigger=t{w}\nlabel=L{y}\ntarget={:?}\nnormalize=true\npenalty=l2\nbeta={:?}\n",
                c as f64 / n as f64,
                g.beta
            );
        }
    }
    Ok(Synthetic {
        kind: TaskKind::Classification,
        schema,
        labeled,
        unlabeled: gold.iter().map(Example::unlabeled).collect(),
        unlabeled_gold: gold,
        test,
        constraints,
    })
}

fn chain(g: &ChainGen, rng: &mut ChaCha8Rng) -> Result<Synthetic> {
    for (n, p) in [
        ("self_transition", g.self_transition),
        ("trigger_prob", g.trigger_prob),
        ("trigger_leak", g.trigger_leak),
        ("home_prob", g.home_prob),
    ] {
        check_prob(n, p)?;
    }
    if g.min_len == 0 || g.max_len < g.min_len {
        return Err(Error::Config("sequence lengths need 1 <= min <= max".into()));
    }
    let k = g.labels;
    let n_trig = g.triggers_per_label * k;
    let names = std::iter::once("bias".to_string())
        .chain((0..n_trig).map(|i| format!("t{i}")))
        .chain((0..g.words).map(|i| format!("w{i}")));
    let schema = schema_with(k, names)?;
    let trig_id = |i: usize| 1 + i;
    let word_id = |i: usize| 1 + n_trig + i;
    let home: Vec<Vec<usize>> = (0..k)
        .map(|l| (0..g.words).filter(|w| w % k == l).collect())
        .collect();

    let draw = |rng: &mut ChaCha8Rng| -> Result<SequenceInstance> {
        let len = rng.gen_range(g.min_len..=g.max_len);
        let mut y = Vec::with_capacity(len);
        let mut cur = rng.gen_range(0..k);
        for t in 0..len {
            if t > 0 && !rng.gen_bool(g.self_transition) {
                let step = rng.gen_range(1..k);
                cur = (cur + step) % k;
            }
            y.push(cur);
        }
        let positions = y
            .iter()
            .map(|&l| {
                let word = if rng.gen_bool(g.trigger_prob) && g.triggers_per_label > 0 {
                    trig_id(l * g.triggers_per_label + rng.gen_range(0..g.triggers_per_label))
                } else if rng.gen_bool(g.trigger_leak) && g.triggers_per_label > 0 {
                    trig_id(rng.gen_range(0..n_trig))
                } else if rng.gen_bool(g.home_prob) && !home[l].is_empty() {
                    word_id(*home[l].choose(rng).expect("non-empty"))
                } else {
                    word_id(rng.gen_range(0..g.words.max(1)))
                };
                SparseFeatures::indicators(&[0, word]).expect("bias id is smallest")
            })
            .collect();
        SequenceInstance::new(positions, Some(y))
    };
    let labeled = (0..g.labeled)
        .map(|_| draw(rng).map(Example::Sequence))
        .collect::<Result<Vec<_>>>()?;
    let gold = (0..g.unlabeled)
        .map(|_| draw(rng).map(Example::Sequence))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..g.test)
        .map(|_| draw(rng).map(Example::Sequence))
        .collect::<Result<Vec<_>>>()?;

    let mut counts = vec![vec![0usize; k]; n_trig];
    let (mut same, mut transitions) = (0usize, 0usize);
    for ex in &gold {
        if let Example::Sequence(s) = ex {
            let y = s.labels.as_ref().expect("generated labeled");
            for (t, p) in s.positions.iter().enumerate() {
                for &(f, _) in p.entries() {
                    if (1..=n_trig).contains(&f) {
                        counts[f - 1][y[t]] += 1;
                    }
                }
            }
            transitions += y.len() - 1;
            same += y.windows(2).filter(|w| w[0] == w[1]).count();
        }
    }
    let mut constraints = String::new();
    for (i, row) in counts.iter().enumerate() {
        let n: usize = row.iter().sum();
        if n == 0 {
            continue;
        }
        let owner = i / g.triggers_per_label;
        let _ = writeln!(
            constraints,
            "kind=token-label\ntrigger=t{i}\nlabel=L{owner}\ntarget={:?}\npenalty=l2\nbeta={:?}\n",
            row[owner] as f64 / n as f64,
            g.beta
        );
    }
    if transitions > 0 {
        let _ = writeln!(
            constraints,
            "kind=self-transition\ntarget={:?}\npenalty=l2\nbeta={:?}\n",
            same as f64 / transitions as f64,
            g.beta
        );
    }
    Ok(Synthetic {
        kind: TaskKind::Sequence,
        schema,
        labeled,
        unlabeled: gold.iter().map(Example::unlabeled).collect(),
        unlabeled_gold: gold,
        test,
        constraints,
    })
}

fn segments(g: &SegmentGen, rng: &mut ChaCha8Rng) -> Result<Synthetic> {
    for (n, p) in [
        ("field_prob", g.field_prob),
        ("swap_prob", g.swap_prob),
        ("own_prob", g.own_prob),
        ("confuse_prob", g.confuse_prob),
        ("own_prob + confuse_prob", g.own_prob + g.confuse_prob),
    ] {
        check_prob(n, p)?;
    }
    if g.min_segment == 0 || g.max_segment < g.min_segment {
        return Err(Error::Config("segment lengths need 1 <= min <= max".into()));
    }
    if g.words_per_label == 0 {
        return Err(Error::Config("every field needs at least one word".into()));
    }
    let k = g.labels;
    let own = g.words_per_label;
    let names = std::iter::once("bias".to_string())
        .chain((0..k * own).map(|i| format!("f{i}")))
        .chain((0..g.shared_words).map(|i| format!("s{i}")));
    let schema = schema_with(k, names)?;

    let draw = |rng: &mut ChaCha8Rng| -> Result<SequenceInstance> {
        let mut order: Vec<usize> = (0..k).filter(|_| rng.gen_bool(g.field_prob)).collect();
        if order.is_empty() {
            order.push(rng.gen_range(0..k));
        }
        for i in 1..order.len() {
            if rng.gen_bool(g.swap_prob) {
                order.swap(i - 1, i);
            }
        }
        let mut y = Vec::new();
        for &l in &order {
            let n = rng.gen_range(g.min_segment..=g.max_segment);
            y.extend(std::iter::repeat_n(l, n));
        }
        let positions = y
            .iter()
            .map(|&l| {
                let r: f64 = rng.gen();
                let word = if g.shared_words == 0 || r < g.own_prob {
                    1 + l * own + rng.gen_range(0..own)
                } else if r < g.own_prob + g.confuse_prob {
                    let other = (l + rng.gen_range(1..k.max(2))) % k;
                    1 + other * own + rng.gen_range(0..own)
                } else {
                    1 + k * own + rng.gen_range(0..g.shared_words)
                };
                SparseFeatures::indicators(&[0, word]).expect("bias id is smallest")
            })
            .collect();
        SequenceInstance::new(positions, Some(y))
    };
    let labeled = (0..g.labeled)
        .map(|_| draw(rng).map(Example::Sequence))
        .collect::<Result<Vec<_>>>()?;
    let gold = (0..g.unlabeled)
        .map(|_| draw(rng).map(Example::Sequence))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..g.test)
        .map(|_| draw(rng).map(Example::Sequence))
        .collect::<Result<Vec<_>>>()?;
    if g.cue_words > own {
        return Err(Error::Config(format!(
            "{} cue words exceed {own} words per field",
            g.cue_words
        )));
    }
    if !(g.repetition_target >= 0.0 && g.repetition_target.is_finite()) {
        return Err(Error::Config("repetition target must be finite and >= 0".into()));
    }
    let mut constraints = format!(
        "kind=repetition-count\ntarget={:?}\ntarget-mode=count\npenalty=affine\nscope=per-instance\n",
        g.repetition_target
    );
    let mut counts = vec![vec![0usize; k]; k * g.cue_words];
    for ex in &gold {
        if let Example::Sequence(s) = ex {
            let y = s.labels.as_ref().expect("generated labeled");
            for (t, p) in s.positions.iter().enumerate() {
                for &(f, _) in p.entries() {
                    let (l, c) = ((f.max(1) - 1) / own, (f.max(1) - 1) % own);
                    if f >= 1 && l < k && c < g.cue_words {
                        counts[l * g.cue_words + c][y[t]] += 1;
                    }
                }
            }
        }
    }
    for (i, row) in counts.iter().enumerate() {
        let n: usize = row.iter().sum();
        if n == 0 {
            continue;
        }
        let (l, c) = (i / g.cue_words, i % g.cue_words);
        let _ = write!(
            constraints,
            "\nkind=token-label\ntrigger=f{}\nlabel=L{l}\ntarget={:?}\npenalty=l2\n",
            l * own + c,
            row[l] as f64 / n as f64
        );
    }
    Ok(Synthetic {
        kind: TaskKind::Sequence,
        schema,
        labeled,
        unlabeled: gold.iter().map(Example::unlabeled).collect(),
        unlabeled_gold: gold,
        test,
        constraints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_self_transition_rate() {
        let g = ChainGen {
            unlabeled: 500,
            test: 0,
            min_len: 21,
            max_len: 21,
            ..Default::default()
        };
        let s = synth_generate(&SynthTask::Chain(g), 1).unwrap();
        let (mut same, mut total) = (0, 0);
        for ex in &s.unlabeled_gold {
            if let Example::Sequence(q) = ex {
                let y = q.labels.as_ref().unwrap();
                total += y.len() - 1;
                same += y.windows(2).filter(|w| w[0] == w[1]).count();
            }
        }
        assert_eq!(total, 10_000);
        assert!((same as f64 / total as f64 - 0.9).abs() < 0.02);
    }

    #[test]
    fn trigger_rates_match_configuration() {
        let g = ClassificationGen {
            unlabeled: 6000,
            test: 0,
            ..Default::default()
        };
        let s = synth_generate(&SynthTask::Classification(g.clone()), 2).unwrap();
        let mut docs = vec![0usize; g.labels];
        let mut hits = vec![0usize; g.labels];
        for ex in &s.unlabeled_gold {
            if let Example::Flat(i) = ex {
                let y = i.label.unwrap();
                docs[y] += 1;
                if i.features.contains(y) {
                    hits[y] += 1;
                }
            }
        }
        for y in 0..g.labels {
            assert!((hits[y] as f64 / docs[y] as f64 - g.trigger_rate).abs() < 0.02);
        }
    }

    #[test]
    fn seed_determinism() {
        let t = SynthTask::Segments(SegmentGen::default());
        let a = synth_generate(&t, 9).unwrap();
        let b = synth_generate(&t, 9).unwrap();
        assert_eq!(
            format_examples(&a.unlabeled_gold, &a.schema),
            format_examples(&b.unlabeled_gold, &b.schema)
        );
    }
}
