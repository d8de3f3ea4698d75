//! Synthetic benchmark harness: scene generation with planted ground truth,
//! the registration metric suite, pipeline orchestration, and ablation
//! drivers.

pub mod ablation;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use ablation::{ablation_suite, AblationMode, AblationReport};
pub use metrics::{BenchmarkSummary, MetricThresholds, PairEvaluation};
pub use pipeline::{
    eval_suite, run_pipeline, run_pipeline_with, NodeStrategy, PipelineOptions, SuiteSpec,
};
pub use synth::{random_transform, synth_pair, SceneRecipe, ScenePair};
