//! File formats: data files, constraint files and checkpoints.

mod checkpoint;
mod constraint_file;
mod data;

pub use checkpoint::Checkpoint;
pub use constraint_file::{parse_constraints, parse_constraints_file, parse_constraints_str};
pub use data::{
    format_example, format_examples, parse_classification_file, parse_classification_str,
    parse_file, parse_sequence_file, parse_sequence_str, Dataset, Partition, Schema, TaskKind,
    Vocabulary,
};
