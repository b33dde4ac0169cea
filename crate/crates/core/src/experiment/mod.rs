//! Dataset recipes, holdout preparation and the centralized/local/federated
//! comparison grid.
//!
//! Every random stage draws from a sub-seed of one master seed, so a grid
//! run is fully determined by its config and the raw file.

mod grid;
mod prepare;
mod recipe;
mod report;
pub mod seed;

pub use grid::{
    run_grid, scheme_partitions, write_grid, CellResult, ExperimentConfig, GridReport, Mode,
    SchemePartitions, SchemeScore, Summary,
};
pub use prepare::{
    load_raw, prepare, raw_path, read_prepared, split_prepared, write_prepared, PreparedData,
    PreparedManifest,
};
pub use recipe::{Preprocess, Recipe};
pub use report::{collect_summaries, render_dataset, render_table, write_report};
pub use seed::{derive_seed, holdout_seed, partition_seed, subsample_seed};
