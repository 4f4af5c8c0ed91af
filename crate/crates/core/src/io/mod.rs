//! Dataset files, converters and experiment configuration.

pub mod bag_csv;
pub mod config;
pub mod musk;

pub use bag_csv::{load_bag_csv, load_bag_csv_with, load_schema, parse_bag_csv, read_bag_csv, save_bag_csv, write_bag_csv};
pub use config::ExperimentConfig;
pub use model_file::{ModelMetadata, TrainedModel};
pub use musk::{convert_musk, read_musk, ConversionReport};
pub mod model_file;
