//! Blank-line separated `key=value` records, one constraint each.
//!
//! Keys: `kind`, `trigger`, `label`, `target`, `target-mode`, `penalty`,
//! `beta`, `scope`, plus `normalize` (word-label) and `negate`
//! (transition-on-predicate: count changes where the predicate is absent).
//! Lines starting with `#` are comments.

use std::path::Path;

use log::warn;

use crate::constraints::{
    scale_targets, ConstraintFeature, ConstraintKind, ConstraintSet, ConstraintSpec,
    PenaltyFamily, PenaltyKind, Scope, TargetMode,
};
use crate::error::{Error, Result};
use crate::model::Example;

use super::data::Schema;

const KEYS: &[&str] = &[
    "kind",
    "trigger",
    "label",
    "target",
    "target-mode",
    "penalty",
    "beta",
    "scope",
    "normalize",
    "negate",
];

struct Record<'t> {
    line: usize,
    pairs: Vec<(&'t str, &'t str, usize)>,
}

impl<'t> Record<'t> {
    fn get(&self, key: &str) -> Option<(&'t str, usize)> {
        self.pairs
            .iter()
            .find(|(k, _, _)| *k == key)
            .map(|&(_, v, l)| (v, l))
    }
}

fn records<'t>(text: &'t str, origin: &str) -> Result<Vec<Record<'t>>> {
    let mut out = Vec::new();
    let mut cur: Option<Record<'t>> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            out.extend(cur.take());
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, i + 1, format!("expected key=value, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::parse(origin, i + 1, format!("unknown key `{k}`")));
        }
        let rec = cur.get_or_insert(Record {
            line: i + 1,
            pairs: Vec::new(),
        });
        if rec.get(k).is_some() {
            return Err(Error::parse(origin, i + 1, format!("duplicate key `{k}`")));
        }
        rec.pairs.push((k, v, i + 1));
    }
    out.extend(cur);
    Ok(out)
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Parses constraint records against `schema`. Labels named by constraints
/// are added to an unfrozen schema. Records whose trigger is absent from the
/// vocabulary are dropped with a warning. `default_beta` applies when a
/// record has no `beta`.
pub fn parse_constraints_str(
    text: &str,
    origin: &str,
    schema: &mut Schema,
    default_beta: f64,
) -> Result<Vec<ConstraintSpec>> {
    let mut specs = Vec::new();
    for (id, rec) in records(text, origin)?.into_iter().enumerate() {
        let err = |line: usize, msg: String| Error::parse(origin, line, msg);
        let require = |key: &str| {
            rec.get(key)
                .ok_or_else(|| err(rec.line, format!("constraint is missing `{key}`")))
        };
        let number = |key: &str| -> Result<Option<f64>> {
            match rec.get(key) {
                None => Ok(None),
                Some((v, l)) => v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| err(l, format!("`{key}` is not a number: `{v}`"))),
            }
        };
        let flag = |key: &str| -> Result<bool> {
            match rec.get(key) {
                None => Ok(false),
                Some((v, l)) => {
                    parse_bool(v).ok_or_else(|| err(l, format!("`{key}` must be true or false")))
                }
            }
        };
        let (kind_name, kind_line) = require("kind")?;
        let label = |schema: &mut Schema| -> Result<usize> {
            let (v, l) = require("label")?;
            schema.label(v).map_err(|m| err(l, m))
        };
        let trigger = |schema: &Schema| -> Result<Option<usize>> {
            let (v, _) = require("trigger")?;
            let id = schema.vocab.get(v);
            if id.is_none() {
                warn!("{origin}:{}: trigger `{v}` never occurs in the data; constraint deactivated", rec.line);
            }
            Ok(id)
        };
        let (kind, default_mode, default_scope) = match kind_name {
            "word-label" => {
                let label = label(schema)?;
                let Some(trigger) = trigger(schema)? else { continue };
                let normalize = flag("normalize")?;
                (
                    ConstraintKind::WordLabel {
                        trigger,
                        label,
                        normalize,
                    },
                    TargetMode::Proportion,
                    Scope::PerDataset,
                )
            }
            "token-label" => {
                let label = label(schema)?;
                let Some(trigger) = trigger(schema)? else { continue };
                (
                    ConstraintKind::TokenLabel { trigger, label },
                    TargetMode::Proportion,
                    Scope::PerDataset,
                )
            }
            "self-transition" => (
                ConstraintKind::SelfTransition,
                TargetMode::Proportion,
                Scope::PerDataset,
            ),
            "transition-on-predicate" => {
                let Some(predicate) = trigger(schema)? else { continue };
                (
                    ConstraintKind::TransitionOnPredicate {
                        predicate,
                        holds: !flag("negate")?,
                    },
                    TargetMode::Count,
                    Scope::PerInstance,
                )
            }
            "start-label" => (
                ConstraintKind::StartLabel {
                    label: label(schema)?,
                },
                TargetMode::Proportion,
                Scope::PerDataset,
            ),
            "repetition-count" => (
                ConstraintKind::RepetitionCount,
                TargetMode::Count,
                Scope::PerInstance,
            ),
            other => return Err(err(kind_line, format!("unknown constraint kind `{other}`"))),
        };
        let mode = match rec.get("target-mode") {
            None => default_mode,
            Some(("proportion", _)) => TargetMode::Proportion,
            Some(("count", _)) => TargetMode::Count,
            Some((v, l)) => return Err(err(l, format!("unknown target-mode `{v}`"))),
        };
        let scope = match rec.get("scope") {
            None => default_scope,
            Some(("per-dataset", _)) => Scope::PerDataset,
            Some(("per-instance", _)) => Scope::PerInstance,
            Some((v, l)) => return Err(err(l, format!("unknown scope `{v}`"))),
        };
        let penalty_kind = match rec.get("penalty") {
            None | Some(("l2", _)) => PenaltyKind::L2,
            Some(("l1box", _)) => PenaltyKind::L1Box,
            Some(("affine", _)) => PenaltyKind::Affine,
            Some((v, l)) => return Err(err(l, format!("unknown penalty `{v}`"))),
        };
        let beta = number("beta")?.unwrap_or(default_beta);
        let (target, target_line) = require("target")?;
        let target: f64 = target
            .parse()
            .map_err(|_| err(target_line, format!("`target` is not a number: `{target}`")))?;
        let penalty = PenaltyFamily::new(penalty_kind, beta).map_err(|e| err(rec.line, e.to_string()))?;
        let feature = ConstraintFeature::new(id, scope, kind);
        specs.push(
            ConstraintSpec::new(feature, mode, target, penalty)
                .map_err(|e| err(target_line, e.to_string()))?,
        );
    }
    Ok(specs)
}

pub fn parse_constraints_file(
    path: &Path,
    schema: &mut Schema,
    default_beta: f64,
) -> Result<Vec<ConstraintSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_constraints_str(&text, &path.display().to_string(), schema, default_beta)
}

/// Parses a constraint file and scales its targets on `unlabeled`.
pub fn parse_constraints(
    path: &Path,
    schema: &mut Schema,
    default_beta: f64,
    unlabeled: &[Example],
) -> Result<ConstraintSet> {
    scale_targets(&parse_constraints_file(path, schema, default_beta)?, unlabeled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::data::parse_classification_str;

    #[test]
    fn word_label_scaled_to_trigger_count() {
        let mut schema = Schema::new();
        let mut text = String::new();
        for i in 0..50 {
            text.push_str(if i < 40 { "? windows:1\n" } else { "? other:1\n" });
        }
        let data = parse_classification_str(&text, "d", &mut schema).unwrap();
        let specs = parse_constraints_str(
            "kind=word-label\ntrigger=windows\nlabel=ibm\ntarget=0.95\npenalty=l2\nbeta=0.01\n",
            "c",
            &mut schema,
            1.0,
        )
        .unwrap();
        let set = scale_targets(&specs, &data.examples).unwrap();
        assert!((set.active()[0].target - 38.0).abs() < 1e-12);
        assert_eq!(schema.labels.index_of("ibm"), Some(0));
    }

    #[test]
    fn missing_trigger_is_dropped() {
        let mut schema = Schema::new();
        let specs = parse_constraints_str(
            "kind=word-label\ntrigger=nope\nlabel=a\ntarget=0.5\n\nkind=repetition-count\ntarget=1\npenalty=affine\n",
            "c",
            &mut schema,
            1.0,
        )
        .unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].target_mode, TargetMode::Count);
        assert_eq!(specs[0].feature.scope, Scope::PerInstance);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut schema = Schema::new();
        let e = parse_constraints_str("kind=self-transition\ncolor=red\n", "c", &mut schema, 1.0)
            .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }
}
