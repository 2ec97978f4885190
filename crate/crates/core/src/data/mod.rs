//! Tables, synthetic data, model containers and the extrapolation demo.

mod container;
mod demo;
mod frame;
mod synthetic;
mod table;

pub use container::{Manifest, ModelContainer, MAGIC, VERSION};
pub use demo::{demo_extrapolation, fit_line, DemoConfig, DemoReport, GroundTruth};
pub use frame::FeatureMatrix;
pub use synthetic::{gen_synthetic, SyntheticBenchmark, SyntheticSpec, TargetFunction};
pub use table::{load_csv, write_csv, write_predictions, Dataset, SplitTag};
