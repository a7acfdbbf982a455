use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Example, Instance, LabelSpace, SequenceInstance, SparseFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Sequence,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Sequence => "sequence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "classification" | "clf" => Some(TaskKind::Classification),
            "sequence" | "seq" => Some(TaskKind::Sequence),
            _ => None,
        }
    }
}

/// Interned input-feature strings with dense ids `0..V`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Result<Self> {
        let mut v = Vocabulary::new();
        for n in names {
            if v.index.contains_key(&n) {
                return Err(Error::Contract(format!("duplicate feature `{n}`")));
            }
            v.intern(&n);
        }
        Ok(v)
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Feature vocabulary and label space shared by the files of one run. A
/// frozen schema drops unseen features and rejects unseen labels.
#[derive(Debug, Clone)]
pub struct Schema {
    pub vocab: Vocabulary,
    pub labels: LabelSpace,
    pub frozen: bool,
}

impl Default for Schema {
    fn default() -> Self {
        Schema::new()
    }
}

impl Schema {
    pub fn new() -> Self {
        Schema {
            vocab: Vocabulary::new(),
            labels: LabelSpace::empty(),
            frozen: false,
        }
    }

    pub fn frozen(vocab: Vocabulary, labels: LabelSpace) -> Self {
        Schema {
            vocab,
            labels,
            frozen: true,
        }
    }

    fn feature(&mut self, name: &str) -> Option<usize> {
        if self.frozen {
            self.vocab.get(name)
        } else {
            Some(self.vocab.intern(name))
        }
    }

    pub(crate) fn label(&mut self, name: &str) -> std::result::Result<usize, String> {
        if self.frozen {
            self.labels
                .index_of(name)
                .ok_or_else(|| format!("unknown label `{name}`"))
        } else {
            Ok(self.labels.intern(name))
        }
    }
}

/// A parsed data file: examples in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partition {
    pub examples: Vec<Example>,
}

impl Partition {
    fn push(&mut self, ex: Example) {
        self.examples.push(ex);
    }

    pub fn labeled(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(|e| e.is_labeled())
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(|e| !e.is_labeled())
    }

    /// `(labeled, unlabeled)`, each in file order.
    pub fn split(self) -> (Vec<Example>, Vec<Example>) {
        self.examples.into_iter().partition(Example::is_labeled)
    }
}

/// Everything a trainer needs from the input files.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub kind: TaskKind,
    pub labeled: Vec<Example>,
    pub unlabeled: Vec<Example>,
    pub schema: Schema,
}

const UNLABELED: &str = "?";

/// `name` or `name:value`; the value follows the last colon.
fn parse_feature(tok: &str) -> std::result::Result<(&str, f64), String> {
    match tok.rsplit_once(':') {
        Some((name, value)) if !name.is_empty() => {
            let v: f64 = value
                .parse()
                .map_err(|_| format!("bad feature value in `{tok}`"))?;
            if !v.is_finite() {
                return Err(format!("non-finite feature value in `{tok}`"));
            }
            Ok((name, v))
        }
        Some(_) => Err(format!("empty feature name in `{tok}`")),
        None => Ok((tok, 1.0)),
    }
}

fn features<'t>(
    tokens: impl Iterator<Item = &'t str>,
    schema: &mut Schema,
) -> std::result::Result<SparseFeatures, String> {
    let mut entries = Vec::new();
    for tok in tokens {
        let (name, v) = parse_feature(tok)?;
        if let Some(id) = schema.feature(name) {
            entries.push((id, v));
        }
    }
    SparseFeatures::from_unsorted(entries).map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One instance per line: `<label|?> <feat>[:<value>] ...`. Blank lines are
/// skipped; duplicate features on a line are summed.
pub fn parse_classification_str(text: &str, origin: &str, schema: &mut Schema) -> Result<Partition> {
    let mut out = Partition::default();
    for (i, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        let Some(label) = toks.next() else { continue };
        let err = |msg: String| Error::parse(origin, i + 1, msg);
        let label = if label == UNLABELED {
            None
        } else {
            Some(schema.label(label).map_err(err)?)
        };
        let feats = features(toks, schema).map_err(err)?;
        out.push(Example::Flat(Instance::new(feats, label)));
    }
    Ok(out)
}

pub fn parse_classification_file(path: &Path, schema: &mut Schema) -> Result<Partition> {
    parse_classification_str(&read(path)?, &path.display().to_string(), schema)
}

/// Blank-line separated sequences of token lines `feat<TAB>feat...<TAB>label`,
/// where `label` is `?` on every line of an unlabeled sequence.
pub fn parse_sequence_str(text: &str, origin: &str, schema: &mut Schema) -> Result<Partition> {
    let mut out = Partition::default();
    let mut positions = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    let mut start = 0;
    let mut flush = |positions: &mut Vec<SparseFeatures>,
                     labels: &mut Vec<Option<usize>>,
                     start: usize|
     -> Result<()> {
        if positions.is_empty() {
            return Ok(());
        }
        let known = labels.iter().filter(|l| l.is_some()).count();
        let gold = if known == labels.len() {
            Some(labels.iter().map(|l| l.unwrap()).collect())
        } else if known == 0 {
            None
        } else {
            return Err(Error::parse(
                origin,
                start,
                "sequence mixes labeled and `?` positions",
            ));
        };
        let seq = SequenceInstance::new(std::mem::take(positions), gold)?;
        labels.clear();
        out.push(Example::Sequence(seq));
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut positions, &mut labels, start)?;
            continue;
        }
        if positions.is_empty() {
            start = i + 1;
        }
        let err = |msg: String| Error::parse(origin, i + 1, msg);
        let fields: Vec<&str> = line.split('\t').collect();
        let (label, feats) = fields.split_last().expect("split yields one field");
        let label = label.trim();
        if label.is_empty() {
            return Err(err("missing label field".into()));
        }
        labels.push(if label == UNLABELED {
            None
        } else {
            Some(schema.label(label).map_err(err)?)
        });
        let feats = features(feats.iter().copied().filter(|f| !f.is_empty()), schema).map_err(err)?;
        positions.push(feats);
    }
    flush(&mut positions, &mut labels, start)?;
    Ok(out)
}

pub fn parse_sequence_file(path: &Path, schema: &mut Schema) -> Result<Partition> {
    parse_sequence_str(&read(path)?, &path.display().to_string(), schema)
}

pub fn parse_file(kind: TaskKind, path: &Path, schema: &mut Schema) -> Result<Partition> {
    match kind {
        TaskKind::Classification => parse_classification_file(path, schema),
        TaskKind::Sequence => parse_sequence_file(path, schema),
    }
}

fn write_features(out: &mut String, feats: &SparseFeatures, vocab: &Vocabulary, sep: char) {
    for &(id, v) in feats.entries() {
        let name = vocab.name(id).expect("feature id from this vocabulary");
        let _ = write!(out, "{sep}{name}:{v:?}");
    }
}

fn label_name(labels: &crate::model::LabelSpace, y: Option<usize>) -> &str {
    match y {
        Some(y) => labels.name(y).expect("label index from this label space"),
        None => UNLABELED,
    }
}

/// Canonical text of a single example (features sorted by id, explicit values).
pub fn format_example(ex: &Example, schema: &Schema) -> String {
    let mut out = String::new();
    match ex {
        Example::Flat(i) => {
            out.push_str(label_name(&schema.labels, i.label));
            write_features(&mut out, &i.features, &schema.vocab, ' ');
            out.push('\n');
        }
        Example::Sequence(s) => {
            for (t, p) in s.positions.iter().enumerate() {
                let mut line = String::new();
                write_features(&mut line, p, &schema.vocab, '\t');
                out.push_str(line.strip_prefix('\t').unwrap_or(&line));
                if !p.is_empty() {
                    out.push('\t');
                }
                out.push_str(label_name(&schema.labels, s.labels.as_ref().map(|l| l[t])));
                out.push('\n');
            }
        }
    }
    out
}

/// Canonical text of a list of examples in the file format of their kind.
pub fn format_examples<'e>(examples: impl IntoIterator<Item = &'e Example>, schema: &Schema) -> String {
    let mut out = String::new();
    let mut first = true;
    for ex in examples {
        if matches!(ex, Example::Sequence(_)) && !first {
            out.push('\n');
        }
        first = false;
        out.push_str(&format_example(ex, schema));
    }
    out
}
