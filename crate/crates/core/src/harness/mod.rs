//! Files, datasets and experiment drivers behind the command-line tool.

pub mod checkpoint;
pub mod dataset;
pub mod experiments;
pub mod io;
pub mod noise;
pub mod preprocess;
pub mod svg;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use dataset::{gen_dataset, load_samples, split_assignment, DatasetKind, DatasetManifest, GenConfig, Sample, Split};
pub use experiments::{evaluate, invert_responses, run_training, TrainRunConfig};
pub use io::{load_response, save_response, ModelFile};
pub use noise::{add_noise, NoiseSpec, NOISE_LEVELS};
