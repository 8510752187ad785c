//! Experiment harness: JSON configs, trajectory CSVs, sweeps, SVG plots and
//! the command-line entry point.

pub mod cli;
mod config;
mod plot;
mod run;

pub use config::{merge_json, ExperimentConfig, FlowSpec, Seeds, SweepConfig, TargetSpec};
pub use plot::{emit_plot, render_svg, YScale, METRICS};
pub use run::{
    read_trajectory_csv, reference_for, run_experiment, run_experiment_with_reference, run_sweep,
    write_trajectory_csv, Trajectory, TrajectoryRow, TRAJECTORY_HEADER,
};
