//! Toy dataset, training loop, timing sweep and operator heatmaps.

pub mod bench;
pub mod dataset;
pub mod fig6;
pub mod train;

pub use bench::{bench_scaling, BenchRow};
pub use dataset::{DatasetConfig, ToyDataset};
pub use fig6::repro_fig6;
pub use train::{toy_train, TrainConfig, TrainLog, TrainOutcome};
