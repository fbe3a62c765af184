//! End-to-end reservoir experiment: relax, drive, sample, fit, evaluate.
//!
//! The network first relaxes without input toward its phase-locked ground
//! state. One oscillator (median |ω| by default) is then clamped to the
//! rescaled input for `t ∈ [0, test_end]` while every oscillator's frequency
//! is sampled every 0.1. Readout rows are built at the integer times
//! `1..=train_end` (training) and `train_end+1..=test_end` (testing).
//!
//! The clamp is expressed in the frame of the collective rhythm: the drive
//! phase is `ψ0 + Ω t + a x(t) + b`, where `ψ0` is the mean-field phase at
//! input onset, `Ω` the mean frequency of the relaxed state and `a x + b`
//! maps the training-window range of the input onto `[−π/2, π/2]`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dynamics::{
    random_phases, CouplingScheme, FrequencyHistory, InputBinding, NaturalFrequencies, Reservoir,
    DEFAULT_LOCK_TOL, DEFAULT_RELAX_T_MAX,
};
use crate::error::{Error, Result};
use crate::readout::{build_features, mse, ReadoutConfig, ReadoutModel, DEFAULT_RIDGE};
use crate::signals::{TaskKind, TaskSpec, TimeSeries};
use crate::topology::NetworkSpec;

/// Frequency sampling interval of the readout history.
pub const SAMPLE_DT: f64 = 0.1;
/// Input resolution; matches the integration step.
pub const INPUT_DT: f64 = 0.01;
/// Input generated beyond both ends of the driven window, bounding the
/// largest filter length or horizon that can be evaluated.
pub const INPUT_PAD: usize = 32;

/// Training and test ranges over integer evaluation times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    pub train_end: usize,
    pub test_end: usize,
}

impl Split {
    pub const FULL: Split = Split {
        train_end: 4000,
        test_end: 5000,
    };
    pub const DESK: Split = Split {
        train_end: 800,
        test_end: 1000,
    };

    pub fn validate(&self) -> Result<()> {
        if self.train_end == 0 || self.test_end <= self.train_end {
            return Err(Error::config(format!(
                "split needs 0 < train_end < test_end, got {} / {}",
                self.train_end, self.test_end
            )));
        }
        Ok(())
    }

    pub fn train_times(&self) -> Vec<f64> {
        (1..=self.train_end).map(|t| t as f64).collect()
    }

    pub fn test_times(&self) -> Vec<f64> {
        (self.train_end + 1..=self.test_end).map(|t| t as f64).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub net: Arc<NetworkSpec>,
    pub omega: NaturalFrequencies,
    pub coupling: CouplingScheme,
    pub readout: ReadoutConfig,
    pub split: Split,
    pub ridge: f64,
    /// Seed of the initial phases.
    pub seed: u64,
    pub relax_t_max: f64,
    pub lock_tol: f64,
    /// Clamped oscillator; defaults to the one with median |ω|.
    pub input_node: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(net: Arc<NetworkSpec>, omega: NaturalFrequencies, coupling: CouplingScheme, seed: u64) -> Self {
        ExperimentSpec {
            net,
            omega,
            coupling,
            readout: ReadoutConfig::default(),
            split: Split::FULL,
            ridge: DEFAULT_RIDGE,
            seed,
            relax_t_max: DEFAULT_RELAX_T_MAX,
            lock_tol: DEFAULT_LOCK_TOL,
            input_node: None,
        }
    }

    pub fn input_nodes(&self) -> Vec<usize> {
        vec![self.input_node.unwrap_or_else(|| self.omega.median_abs_index())]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub train_mse: f64,
    pub test_mse: f64,
    pub condition_estimate: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Whether the network reached the locked state before input onset.
    pub locked: bool,
    /// Mean squared norm of the test targets around their mean, for scale.
    pub test_target_variance: f64,
}

/// What identifies an input stream: tasks sharing it can reuse one simulation.
fn input_key(task: &TaskSpec) -> (TaskKind, u64, usize) {
    let modes = if task.kind == TaskKind::MultiSineFilter { task.m } else { 0 };
    (task.kind, task.seed, modes)
}

/// A driven run with its sampled frequency history.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub history: FrequencyHistory,
    pub input: Arc<TimeSeries>,
    pub input_nodes: Vec<usize>,
    /// Oscillators used as readout features.
    pub feature_nodes: Vec<usize>,
    pub locked: bool,
    pub collective_frequency: f64,
    readout: ReadoutConfig,
    split: Split,
    seed: u64,
    key: (TaskKind, u64, usize),
}

/// Relaxes the network, then drives it with the task's input and samples the
/// frequency history over `[0, split.test_end]`.
pub fn simulate(spec: &ExperimentSpec, task: &TaskSpec) -> Result<Simulation> {
    spec.split.validate()?;
    spec.readout.validate(SAMPLE_DT)?;
    let reservoir = Reservoir::new(spec.net.clone(), spec.omega.clone(), spec.coupling)?;
    let n = reservoir.n();
    let (mut state, locked) =
        reservoir.relax_to_locked(&random_phases(n, spec.seed), spec.relax_t_max, spec.lock_tol)?;
    state.t = 0.0;

    let pad = INPUT_PAD as f64;
    let horizon = spec.split.test_end as f64;
    let input = Arc::new(task.input(-pad, horizon + pad, INPUT_DT)?);
    let (lo, hi) = (0..input.len())
        .filter(|&k| (0.0..=spec.split.train_end as f64).contains(&input.time(k)))
        .map(|k| input.sample(k, 0))
        .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (scale, offset) = InputBinding::fit_range(lo, hi);

    let (s, c) = state
        .theta
        .iter()
        .fold((0.0, 0.0), |(s, c), th| (s + th.sin(), c + th.cos()));
    let psi0 = s.atan2(c);
    let carrier = state.mean_frequency();
    let input_nodes = spec.input_nodes();
    let binding = InputBinding::new(input_nodes.clone(), input.clone(), scale, offset + psi0)?.with_carrier(carrier);
    let history = reservoir.run_driven(&mut state, Some(&binding), horizon, SAMPLE_DT)?;

    Ok(Simulation {
        history,
        input,
        feature_nodes: spec.readout.retained_nodes(n, &input_nodes),
        input_nodes,
        locked,
        collective_frequency: carrier,
        readout: spec.readout.clone(),
        split: spec.split,
        seed: spec.seed,
        key: input_key(task),
    })
}

fn target_rows(target: &TimeSeries, times: &[f64]) -> Result<DMatrix<f64>> {
    let q = target.channels();
    let mut out = DMatrix::zeros(times.len(), q);
    for (r, &t) in times.iter().enumerate() {
        for c in 0..q {
            out[(r, c)] = target.at_channel(t, c).map_err(|_| {
                Error::range(format!("target undefined at t={t}; input too short for this task"))
            })?;
        }
    }
    Ok(out)
}

fn centered_power(y: &DMatrix<f64>) -> f64 {
    let m = y.nrows() as f64;
    let mean = y.row_mean();
    y.row_iter().map(|r| (r - &mean).norm_squared()).sum::<f64>() / m
}

impl Simulation {
    pub fn train_features(&self) -> Result<DMatrix<f64>> {
        build_features(&self.history, &self.readout, &self.feature_nodes, &self.split.train_times())
    }

    pub fn test_features(&self) -> Result<DMatrix<f64>> {
        build_features(&self.history, &self.readout, &self.feature_nodes, &self.split.test_times())
    }

    /// Target rows of `task` at the training and test times.
    pub fn targets(&self, task: &TaskSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if input_key(task) != self.key {
            return Err(Error::config("task does not share this simulation's input"));
        }
        if task.history_needed() > INPUT_PAD || task.lookahead_needed() > INPUT_PAD {
            return Err(Error::config(format!("task length {} exceeds input padding {INPUT_PAD}", task.m)));
        }
        let target = task.target(&self.input)?;
        Ok((
            target_rows(&target, &self.split.train_times())?,
            target_rows(&target, &self.split.test_times())?,
        ))
    }

    /// Fits one readout per ridge value on each task's targets. The feature
    /// matrices are built once; all tasks are solved together.
    ///
    /// Returns `reports[ridge_index][task_index]`.
    pub fn fit_tasks(&self, tasks: &[TaskSpec], ridges: &[f64]) -> Result<Vec<Vec<FitReport>>> {
        let train_x = self.train_features()?;
        let test_x = self.test_features()?;
        let mut blocks = Vec::with_capacity(tasks.len());
        for task in tasks {
            task.validate()?;
            blocks.push(self.targets(task)?);
        }
        let width: usize = blocks.iter().map(|(y, _)| y.ncols()).sum();
        let mut train_y = DMatrix::zeros(train_x.nrows(), width);
        let mut col = 0;
        for (y, _) in &blocks {
            train_y.columns_mut(col, y.ncols()).copy_from(y);
            col += y.ncols();
        }
        let mut out = Vec::with_capacity(ridges.len());
        for &ridge in ridges {
            let model = ReadoutModel::fit(
                self.readout.clone(),
                self.feature_nodes.clone(),
                &train_x,
                &train_y,
                ridge,
                self.seed,
            )?;
            let train_pred = model.predict(&train_x)?;
            let test_pred = model.predict(&test_x)?;
            let mut reports = Vec::with_capacity(tasks.len());
            let mut col = 0;
            for (train_y, test_y) in &blocks {
                let q = train_y.ncols();
                reports.push(FitReport {
                    train_mse: mse(&train_pred.columns(col, q).into_owned(), train_y)?,
                    test_mse: mse(&test_pred.columns(col, q).into_owned(), test_y)?,
                    condition_estimate: model.condition_estimate,
                    n_train: train_y.nrows(),
                    n_test: test_y.nrows(),
                    locked: self.locked,
                    test_target_variance: centered_power(test_y),
                });
                col += q;
            }
            out.push(reports);
        }
        Ok(out)
    }

    /// Fits a readout to explicit target series (one row per evaluation time).
    pub fn fit_targets(&self, target: &TimeSeries, ridge: f64) -> Result<(ReadoutModel, FitReport)> {
        let train_x = self.train_features()?;
        let test_x = self.test_features()?;
        let train_y = target_rows(target, &self.split.train_times())?;
        let test_y = target_rows(target, &self.split.test_times())?;
        let model = ReadoutModel::fit(self.readout.clone(), self.feature_nodes.clone(), &train_x, &train_y, ridge, self.seed)?;
        let report = FitReport {
            train_mse: model.evaluate(&train_x, &train_y)?,
            test_mse: model.evaluate(&test_x, &test_y)?,
            condition_estimate: model.condition_estimate,
            n_train: train_y.nrows(),
            n_test: test_y.nrows(),
            locked: self.locked,
            test_target_variance: centered_power(&test_y),
        };
        Ok((model, report))
    }
}

/// Full pipeline for a single task.
pub fn run_experiment(spec: &ExperimentSpec, task: &TaskSpec) -> Result<FitReport> {
    let mut reports = evaluate_tasks(spec, std::slice::from_ref(task), &[spec.ridge])?;
    Ok(reports.remove(0).remove(0))
}

/// Runs every task against the same network, simulating once per distinct
/// input stream. Returns `reports[ridge_index][task_index]`.
pub fn evaluate_tasks(spec: &ExperimentSpec, tasks: &[TaskSpec], ridges: &[f64]) -> Result<Vec<Vec<FitReport>>> {
    for task in tasks {
        task.validate()?;
    }
    let mut slots: Vec<Vec<Option<FitReport>>> = vec![vec![None; tasks.len()]; ridges.len()];
    let mut done = vec![false; tasks.len()];
    for first in 0..tasks.len() {
        if done[first] {
            continue;
        }
        let key = input_key(&tasks[first]);
        let group: Vec<usize> = (first..tasks.len()).filter(|&k| input_key(&tasks[k]) == key).collect();
        let sim = simulate(spec, &tasks[first])?;
        let members: Vec<TaskSpec> = group.iter().map(|&k| tasks[k].clone()).collect();
        let reports = sim.fit_tasks(&members, ridges)?;
        for (ri, row) in reports.into_iter().enumerate() {
            for (gi, report) in row.into_iter().enumerate() {
                slots[ri][group[gi]] = Some(report);
            }
        }
        for &k in &group {
            done[k] = true;
        }
    }
    Ok(slots
        .into_iter()
        .map(|row| row.into_iter().map(|r| r.expect("every task fitted")).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::CouplingScheme;
    use crate::signals::task1_target;
    use crate::topology::{complete_graph, erdos_renyi};

    fn small_spec(n: usize, lambda: f64, seed: u64) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(
            Arc::new(complete_graph(n).unwrap()),
            NaturalFrequencies::standard_normal(n, seed),
            CouplingScheme::regular(lambda).unwrap(),
            seed,
        );
        spec.split = Split { train_end: 160, test_end: 200 };
        spec
    }

    #[test]
    fn split_times() {
        let s = Split { train_end: 3, test_end: 5 };
        assert_eq!(s.train_times(), vec![1.0, 2.0, 3.0]);
        assert_eq!(s.test_times(), vec![4.0, 5.0]);
        assert!(Split { train_end: 5, test_end: 5 }.validate().is_err());
    }

    #[test]
    fn simulation_shapes() {
        let spec = small_spec(30, 4.0, 1);
        let task = TaskSpec::new(TaskKind::Filter, 3, 2).unwrap();
        let sim = simulate(&spec, &task).unwrap();
        assert!(sim.locked);
        assert_eq!(sim.history.len(), 2001);
        assert_eq!(sim.feature_nodes.len(), 29);
        let x = sim.train_features().unwrap();
        assert_eq!(x.shape(), (160, 290));
        let reports = sim.fit_tasks(&[task.clone()], &[1e-8, 1e-2]).unwrap();
        assert_eq!(reports.len(), 2);
        let r = &reports[0][0];
        assert_eq!((r.n_train, r.n_test), (160, 40));
        assert!(r.train_mse >= 0.0 && r.test_mse >= 0.0);
        // Heavier ridge never fits the training set better.
        assert!(reports[1][0].train_mse >= r.train_mse);
    }

    #[test]
    fn tasks_must_share_input() {
        let spec = small_spec(20, 4.0, 1);
        let sim = simulate(&spec, &TaskSpec::new(TaskKind::Filter, 3, 2).unwrap()).unwrap();
        assert!(sim.targets(&TaskSpec::new(TaskKind::Filter, 3, 3).unwrap()).is_err());
        assert!(sim.targets(&TaskSpec::new(TaskKind::Predict, 3, 2).unwrap()).is_err());
        assert!(sim.targets(&TaskSpec::new(TaskKind::Filter, 7, 2).unwrap()).is_ok());
        assert!(sim.targets(&TaskSpec::new(TaskKind::Filter, 40, 2).unwrap()).is_err());
    }

    #[test]
    fn joint_fit_matches_separate_fits() {
        let spec = small_spec(25, 3.0, 4);
        let a = TaskSpec::new(TaskKind::Predict, 2, 5).unwrap();
        let b = TaskSpec::new(TaskKind::Predict, 4, 5).unwrap();
        let sim = simulate(&spec, &a).unwrap();
        let joint = sim.fit_tasks(&[a.clone(), b.clone()], &[1e-6]).unwrap();
        let alone = sim.fit_tasks(&[b], &[1e-6]).unwrap();
        let rel = (joint[0][1].test_mse - alone[0][0].test_mse).abs() / alone[0][0].test_mse;
        assert!(rel < 1e-8, "{rel}");
    }

    #[test]
    fn identical_seeds_give_identical_reports() {
        let spec = small_spec(20, 2.5, 7);
        let task = TaskSpec::new(TaskKind::Filter, 2, 8).unwrap();
        assert_eq!(run_experiment(&spec, &task).unwrap(), run_experiment(&spec, &task).unwrap());
    }

    /// A unit-delay target read through the clamped oscillator: its frequency
    /// tap one time unit back is a smooth monotone function of x(t − 1).
    #[test]
    fn unit_delay_through_input_node() {
        let mut spec = small_spec(40, 4.0, 3);
        spec.readout.include_input_nodes = true;
        let task = TaskSpec::new(TaskKind::Filter, 1, 9).unwrap();
        let sim = simulate(&spec, &task).unwrap();
        assert!(sim.locked);
        let target = task1_target(&sim.input, 1, 1.0, 0.0, 0.0).unwrap();
        let (_, report) = sim.fit_targets(&target, 1e-8).unwrap();
        assert!(
            report.test_mse < 0.05 * report.test_target_variance,
            "{} vs {}",
            report.test_mse,
            report.test_target_variance
        );
    }

    #[test]
    fn grouped_evaluation_matches_single_runs() {
        let spec = small_spec(20, 3.0, 6);
        let tasks = [
            TaskSpec::new(TaskKind::Filter, 2, 6).unwrap(),
            TaskSpec::new(TaskKind::Predict, 3, 6).unwrap(),
            TaskSpec::new(TaskKind::Filter, 4, 6).unwrap(),
        ];
        let all = evaluate_tasks(&spec, &tasks, &[spec.ridge]).unwrap();
        assert_eq!(all[0][1], run_experiment(&spec, &tasks[1]).unwrap());
        let rel = (all[0][2].test_mse - run_experiment(&spec, &tasks[2]).unwrap().test_mse).abs() / all[0][2].test_mse;
        assert!(rel < 1e-8);
    }

    #[test]
    fn unlocked_runs_are_reported_not_raised() {
        let mut spec = small_spec(30, 0.2, 5);
        spec.relax_t_max = 20.0;
        let r = run_experiment(&spec, &TaskSpec::new(TaskKind::Filter, 2, 1).unwrap()).unwrap();
        assert!(!r.locked);
        assert!(r.test_mse.is_finite());
    }

    #[test]
    fn explosive_er_pipeline_runs() {
        let n = 40;
        let mut spec = ExperimentSpec::new(
            Arc::new(erdos_renyi(n, 6.0, 2).unwrap()),
            NaturalFrequencies::standard_normal(n, 2),
            CouplingScheme::explosive(4.0).unwrap(),
            2,
        );
        spec.split = Split { train_end: 100, test_end: 130 };
        let r = run_experiment(&spec, &TaskSpec::new(TaskKind::MultiSineFilter, 3, 1).unwrap()).unwrap();
        assert!(r.test_mse.is_finite() && r.n_test == 30);
    }
}
