//! Experiment pipelines: random-MDP simulation, machine replacement,
//! Student-t decision demo and solver benchmarks.

pub mod bench;
pub mod cv;
pub mod generators;
pub mod pipeline;
pub mod t_demo;

pub use bench::{bench_csv, bench_size, solver_bench, BenchConfig, BenchRow};
pub use cv::{cross_validate, default_grid, fit_and_solve, CvConfig, CvOutcome};
pub use generators::{
    gen_machine_replacement, gen_random_mdp, gen_reward_truth, reachable_count, GroundTruth,
    RewardProfile,
};
pub use pipeline::{
    derive_seed, percentile, repetition_truth, run_pipeline, ExperimentConfig, ExperimentKind,
    ModelEntry, PipelineOutput, ResultRow, SummaryRow,
};
pub use t_demo::{t_demo, t_demo_accuracy, t_demo_csv, TDemoConfig, TDemoRow};
