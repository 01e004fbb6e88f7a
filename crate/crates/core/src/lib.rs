//! Cycle-consistent adversarial topic models.
//!
//! A generator maps topic distributions to word distributions, an encoder
//! maps word distributions back to topic distributions, and two WGAN
//! critics (one per space) push both mappings toward the data and the
//! Dirichlet prior. L1 cycle losses keep the two mappings consistent with
//! each other. The supervised variant adds a classifier on the encoder
//! output.
//!
//! Modules, bottom up: [`ndmath`] (tensors, layers, Adam), [`corpus`]
//! (vocabulary and TF-IDF), [`model`] (the five networks and the prior),
//! [`training`] (the adversarial schedule) and [`evaluation`] (NPMI,
//! accuracy, synthetic corpora).

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod ndmath;
pub mod training;

pub use error::{Error, Result};
