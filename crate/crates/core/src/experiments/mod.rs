//! Experiment orchestration: configuration, parallel sweeps, output files and
//! figure presets.

mod config;
mod figures;
mod parallel;
mod plot;
mod sweeps;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{
    DynamicsSection, ExperimentConfig, Model, NetworkSection, ReadoutSection, RunSection, Scale, SweepSection,
    TaskSection, Topology,
};
pub use figures::{
    argmin_by, figure_config, figure_values, geometric_mean_curve, largest_log_step, r_jump, reproduce_figure, samples_of,
    Check, FigureReport, CRITICAL_WINDOW, FIGURES,
};
pub use parallel::{collect_all, parallel_map};
pub use plot::{Chart, Series};
pub use sweeps::{
    critical_lambda, degree_sweep, error_sweep, length_sweep, mode_sweep, order_sweep, order_sweeps, task_label,
    LambdaChoice, Param, SweepResult, SweepRow,
};

use crate::error::Result;

/// Creates `dir` and writes the resolved configs and one edge list per seed.
///
/// A single config is written as `resolved.cfg`; several (one per model) as
/// `resolved_<model>.cfg`, with graphs named `graph_<model>_seed<k>.txt`.
pub fn prepare_run_dir(dir: &Path, configs: &[&ExperimentConfig]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let single = configs.len() == 1;
    for cfg in configs {
        let model = cfg.network.model.name();
        let name = if single { "resolved.cfg".to_string() } else { format!("resolved_{model}.cfg") };
        cfg.save(&dir.join(name))?;
        for &seed in &cfg.run.seeds {
            let name = if single { format!("graph_seed{seed}.txt") } else { format!("graph_{model}_seed{seed}.txt") };
            let file = fs::File::create(dir.join(name))?;
            cfg.network(seed)?.write_edge_list(std::io::BufWriter::new(file))?;
        }
    }
    Ok(dir.to_path_buf())
}
