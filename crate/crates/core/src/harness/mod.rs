//! Synthetic data, configuration, and the subcommands behind the `seglab`
//! binary.

mod commands;
mod config;
mod experiment;
mod synth;

pub use commands::{
    cmd_corrupt, cmd_eval, cmd_gen_data, cmd_superpixelize, cmd_train, refined_name,
    superpixel_name, CONFIG_ECHO, CORRUPTION_LOG, METRICS,
};
pub use config::{Config, SEED_ENV};
pub use experiment::{
    cell_dir, cmd_experiment, render_report, run_experiment, CellOutcome, CellResult, Experiment,
    REPORT,
};
pub use synth::{
    gen_data, generate_sample, image_name, label_name, load_split, read_manifest, ManifestEntry,
    Split, SynthSpec, MANIFEST,
};
