//! Command-line front end: corpus ingestion, training, inference and
//! evaluation, plus the binary checkpoint format.

pub mod checkpoint;
pub mod commands;
pub mod error;
