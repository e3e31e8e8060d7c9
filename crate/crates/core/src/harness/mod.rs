//! Training, evaluation, ablation, explanation and checkpointing.

pub mod ablation;
pub mod checkpoint;
pub mod explain;
pub mod gradcheck;
pub mod metrics;
pub mod train;

pub use ablation::{run_ablation, table_variants, AblationVariant, VariantReport};
pub use checkpoint::Checkpoint;
pub use explain::{explain, ExplainReport};
pub use gradcheck::{pipeline_gradcheck, GradCheckSettings};
pub use metrics::{auc, compute_metrics, MetricsRecord, MetricsReport};
pub use train::{evaluate, init_model, train, TrainOutcome};
