//! Data-free adversarial distillation for graph classification.
//!
//! The crate trains graph-classification teachers on TU-format datasets,
//! then distills compact students without touching the training data: a
//! latent-to-graph generator is trained against the teacher/student output
//! discrepancy in a min-max game, and the student learns from the generated
//! graphs alone.
//!
//! Module map:
//! - [`tensor`] — dense f64 tensors with tape-based reverse-mode autodiff,
//!   Adam, and the step learning-rate schedule.
//! - [`data`] — TU text-format parsing/writing, node-feature policies,
//!   stratified 10-fold plans, and padded batching.
//! - [`models`] — GIN / GCN / GraphSAGE / GAT classifiers with mean readout.
//! - [`generator`] — latent MLP producing node features and a sigmoid
//!   adjacency, thresholded hard or kept soft.
//! - [`checkpoint`] — versioned binary container for model and generator
//!   parameters.
//! - [`distill`] — teacher pretraining, the adversarial distillation loop,
//!   and the KD / RANDOM baselines.
//! - [`report`] — experiment aggregation and report schema validation.

pub mod checkpoint;
pub mod data;
pub mod distill;
pub mod generator;
pub mod models;
pub mod report;
pub mod tensor;
