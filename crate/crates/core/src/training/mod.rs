//! Losses, sampling, distillation gate, optimizer and the training schedule.

pub mod config;
pub mod gate;
pub mod loss;
pub mod negative;
pub mod optim;
pub mod stages;

pub use config::TrainConfig;
pub use gate::{update_gate, GateState};
pub use loss::{
    kd_loss, kd_on_tape, margin_loss, margin_loss_on_tape, topk_candidates, DistillationBatch, Task, TeacherTargets,
};
pub use negative::{sample_negatives, NegativeSample, NegativeSampler, Slot};
pub use optim::{grad_step, AdamState};
pub use stages::{
    init_models, rng_stream, train_stage1, train_stage2, DistillRow, MetricsRow, Models, Stage1Output, Stage2Output,
    TrainData, DISTILL_HEADER, METRICS_HEADER,
};
