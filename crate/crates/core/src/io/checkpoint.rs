//! Versioned line-oriented text checkpoint.
//!
//! ```text
//! expcon-checkpoint 1
//! task <classification|sequence>
//! labels <K>          followed by K names, one per line
//! features <V>        followed by V names, one per line
//! weights <D>         followed by D values, one per line
//! mu <M>              followed by M values, one per line
//! iteration <n>
//! meta <N>            followed by N `key=value` lines
//! end
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a reload
//! reproduces every weight bit for bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{LabelSpace, Layout, ParamVector};

use super::data::{TaskKind, Vocabulary};

const MAGIC: &str = "expcon-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub task: TaskKind,
    pub labels: LabelSpace,
    pub vocab: Vocabulary,
    pub lambda: ParamVector,
    pub mu: Vec<f64>,
    pub iteration: usize,
    /// Free-form training settings, kept for provenance.
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn layout(task: TaskKind, vocab: &Vocabulary, labels: &LabelSpace) -> Layout {
        match task {
            TaskKind::Classification => Layout::flat(vocab.len(), labels.len()),
            TaskKind::Sequence => Layout::chain(vocab.len(), labels.len()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\ntask {}\n", self.task.name());
        out.push_str(&format!("labels {}\n", self.labels.len()));
        for n in self.labels.names() {
            out.push_str(n);
            out.push('\n');
        }
        out.push_str(&format!("features {}\n", self.vocab.len()));
        for n in self.vocab.names() {
            out.push_str(n);
            out.push('\n');
        }
        out.push_str(&format!("weights {}\n", self.lambda.weights().len()));
        for w in self.lambda.weights() {
            out.push_str(&format!("{w:?}\n"));
        }
        out.push_str(&format!("mu {}\n", self.mu.len()));
        for m in &self.mu {
            out.push_str(&format!("{m:?}\n"));
        }
        out.push_str(&format!("iteration {}\n", self.iteration));
        out.push_str(&format!("meta {}\n", self.meta.len()));
        for (k, v) in &self.meta {
            out.push_str(&format!("{k}={v}\n"));
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::parse(origin, 0, format!("truncated checkpoint: expected {what}")))
        };
        let header = |line: (usize, &str), key: &str| -> Result<String> {
            let (n, l) = line;
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::parse(origin, n, format!("expected `{key} ...`, got `{l}`")))
        };
        let count = |line: (usize, &str), key: &str| -> Result<usize> {
            let v = header(line, key)?;
            v.parse()
                .map_err(|_| Error::parse(origin, line.0, format!("bad count `{v}`")))
        };

        let version = header(next("header")?, MAGIC)?;
        if version != VERSION.to_string() {
            return Err(Error::parse(origin, 1, format!("unsupported checkpoint version {version}")));
        }
        let line = next("task")?;
        let task = TaskKind::parse(&header(line, "task")?)
            .ok_or_else(|| Error::parse(origin, line.0, "unknown task"))?;

        let mut names = |key: &str| -> Result<Vec<String>> {
            let n = count(next(key)?, key)?;
            (0..n).map(|_| next("name").map(|(_, l)| l.to_string())).collect()
        };
        let labels = LabelSpace::new(names("labels")?)?;
        let vocab = Vocabulary::from_names(names("features")?)?;

        let mut floats = |key: &str| -> Result<Vec<f64>> {
            let n = count(next(key)?, key)?;
            (0..n)
                .map(|_| {
                    let (i, l) = next("value")?;
                    l.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(origin, i, format!("bad value `{l}`")))
                })
                .collect()
        };
        let weights = floats("weights")?;
        let mu = floats("mu")?;
        let iteration = count(next("iteration")?, "iteration")?;
        let n_meta = count(next("meta")?, "meta")?;
        let mut meta = Vec::with_capacity(n_meta);
        for _ in 0..n_meta {
            let (i, l) = next("meta entry")?;
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i, "expected key=value"))?;
            meta.push((k.to_string(), v.to_string()));
        }
        let (i, l) = next("end")?;
        if l != "end" {
            return Err(Error::parse(origin, i, format!("expected `end`, got `{l}`")));
        }
        let layout = Self::layout(task, &vocab, &labels);
        if weights.len() != layout.dim() {
            return Err(Error::parse(
                origin,
                0,
                format!("{} weights for a model of dimension {}", weights.len(), layout.dim()),
            ));
        }
        Ok(Checkpoint {
            task,
            labels,
            vocab,
            lambda: ParamVector::from_weights(layout, weights)?,
            mu,
            iteration,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let labels = LabelSpace::new(["a b", "c"]).unwrap();
        let vocab = Vocabulary::from_names(["w=x".to_string(), "y:1".to_string()]).unwrap();
        let layout = Checkpoint::layout(TaskKind::Sequence, &vocab, &labels);
        let weights: Vec<f64> = (0..layout.dim()).map(|i| (i as f64 * 0.1).sin() / 3.0).collect();
        let ck = Checkpoint {
            task: TaskKind::Sequence,
            labels,
            vocab,
            lambda: ParamVector::from_weights(layout, weights).unwrap(),
            mu: vec![-1e-300, 2.5],
            iteration: 7,
            meta: vec![("alpha".into(), "1".into())],
        };
        let back = Checkpoint::from_text(&ck.to_text(), "t").unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn truncated_file_rejected() {
        assert!(Checkpoint::from_text("expcon-checkpoint 1\ntask sequence\n", "t").is_err());
    }
}
