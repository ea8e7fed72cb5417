//! Knowledge-graph completion across several knowledge graphs linked by seed
//! alignments.
//!
//! The crate trains one relational GCN encoder per knowledge graph plus one
//! encoder over the fused graph (all graphs joined by alignment edges), lets
//! the two families teach each other through top-k KL distillation, and ranks
//! link-prediction queries with the ensemble of both.
//!
//! Module map:
//! - [`kg`]: multi-KG store, fused graph, meta-path augmentation, alignment audits
//! - [`ingest`]: TSV/manifest loading, dangling-entity sampling, synthetic data
//! - [`model`]: dense tensors, the reverse-mode tape, encoders, decoders, checkpoints
//! - [`training`]: losses, negative sampling, distillation gate, Adam, the two-stage loop
//! - [`eval`]: filtered ranking, MRR/Hits@k reports, ensemble scoring, correlation export
//! - [`pipeline`]: end-to-end runs that write run directories

pub mod error;
pub mod eval;
pub mod ingest;
pub mod kg;
pub mod model;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
