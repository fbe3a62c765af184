//! Parameter sweeps over coupling, task length, input modes and mean degree.

use std::io::{BufRead, Write};
use std::sync::Arc;

use super::config::{ExperimentConfig, Model, Topology};
use super::parallel::{collect_all, parallel_map};
use crate::dynamics::{random_phases, Reservoir};
use crate::error::{Error, Result};
use crate::order::{detect_critical, sweep, Direction, OrderParamSample, Transition};
use crate::pipeline::evaluate_tasks;
use crate::signals::{TaskKind, TaskSpec};
use crate::topology::NetworkSpec;

/// Swept quantity of a [`SweepResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Lambda,
    MeanDegree,
    TaskLength,
    Modes,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Lambda => "lambda",
            Param::MeanDegree => "mean_degree",
            Param::TaskLength => "m",
            Param::Modes => "modes",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Param::Lambda, Param::MeanDegree, Param::TaskLength, Param::Modes]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown sweep parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub model: Model,
    pub seed: u64,
    /// `<kind>-m<length>`, e.g. `filter-m5`.
    pub task: String,
    pub value: f64,
    pub lambda: f64,
    pub r: f64,
    pub r_var: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub locked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub param: Param,
    pub rows: Vec<SweepRow>,
}

pub fn task_label(task: &TaskSpec) -> String {
    format!("{}-m{}", task.kind.name(), task.m)
}

fn header(param: Param) -> String {
    format!("model,seed,task,{},coupling,r,r_var,train_mse,test_mse,locked", param.name())
}

impl SweepResult {
    pub fn new(param: Param) -> Self {
        SweepResult { param, rows: Vec::new() }
    }

    pub fn extend(&mut self, other: SweepResult) -> Result<()> {
        if other.param != self.param {
            return Err(Error::config("cannot merge sweeps over different parameters"));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    /// Writes CSV after checking the row count and that no cell is missing.
    pub fn write_csv<W: Write>(&self, mut w: W, expected_rows: usize) -> Result<()> {
        if self.rows.len() != expected_rows {
            return Err(Error::config(format!(
                "sweep has {} rows, expected {expected_rows}",
                self.rows.len()
            )));
        }
        let mut out = header(self.param);
        out.push('\n');
        for row in &self.rows {
            let nums = [row.value, row.lambda, row.r, row.r_var, row.train_mse, row.test_mse];
            if nums.iter().any(|v| v.is_nan()) || row.task.is_empty() || row.task.contains(',') {
                return Err(Error::config(format!("incomplete sweep row {row:?}")));
            }
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:e},{:e},{}\n",
                row.model.name(),
                row.seed,
                row.task,
                row.value,
                row.lambda,
                row.r,
                row.r_var,
                row.train_mse,
                row.test_mse,
                row.locked
            ));
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let head = lines.next().ok_or_else(|| Error::parse(1, "empty file"))??;
        let param_name = head.split(',').nth(3).unwrap_or("");
        let param = Param::parse(param_name).map_err(|_| Error::parse(1, format!("bad header `{head}`")))?;
        if head != header(param) {
            return Err(Error::parse(1, format!("bad header `{head}`")));
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            let lineno = k + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(Error::parse(lineno, "expected 10 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(lineno, e.to_string()));
            rows.push(SweepRow {
                model: Model::parse(f[0]).map_err(|e| Error::parse(lineno, e.to_string()))?,
                seed: f[1].parse().map_err(|e: std::num::ParseIntError| Error::parse(lineno, e.to_string()))?,
                task: f[2].to_string(),
                value: num(f[3])?,
                lambda: num(f[4])?,
                r: num(f[5])?,
                r_var: num(f[6])?,
                train_mse: num(f[7])?,
                test_mse: num(f[8])?,
                locked: f[9].parse().map_err(|e: std::str::ParseBoolError| Error::parse(lineno, e.to_string()))?,
            });
        }
        Ok(SweepResult { param, rows })
    }

    /// Rows of one curve, ordered by the swept value.
    pub fn curve(&self, model: Model, seed: u64, task: &str) -> Vec<&SweepRow> {
        let mut rows: Vec<&SweepRow> = self
            .rows
            .iter()
            .filter(|r| r.model == model && r.seed == seed && r.task == task)
            .collect();
        rows.sort_by(|a, b| a.value.total_cmp(&b.value));
        rows
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn tasks(&self) -> Vec<String> {
        let mut t: Vec<String> = Vec::new();
        for r in &self.rows {
            if !t.contains(&r.task) {
                t.push(r.task.clone());
            }
        }
        t
    }

    pub fn models(&self) -> Vec<Model> {
        let mut m: Vec<Model> = Vec::new();
        for r in &self.rows {
            if !m.contains(&r.model) {
                m.push(r.model);
            }
        }
        m
    }
}

/// How the coupling of a fixed-coupling sweep is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    /// Per network: the first grid point past the largest `r_var` jump of a
    /// forward sweep over the configured grid.
    Critical,
}

impl LambdaChoice {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "critical" {
            return Ok(LambdaChoice::Critical);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| *v >= 0.0 && v.is_finite())
            .map(LambdaChoice::Fixed)
            .ok_or_else(|| Error::config(format!("coupling must be a number >= 0 or `critical`, got `{s}`")))
    }
}

/// Adiabatic sweep over the configured grid for one realization.
pub fn order_sweep(cfg: &ExperimentConfig, seed: u64, direction: Direction) -> Result<Vec<OrderParamSample>> {
    let net = Arc::new(cfg.network(seed)?);
    order_sweep_on(cfg, net, seed, &cfg.lambda_grid()?, direction)
}

fn order_sweep_on(
    cfg: &ExperimentConfig,
    net: Arc<NetworkSpec>,
    seed: u64,
    grid: &[f64],
    direction: Direction,
) -> Result<Vec<OrderParamSample>> {
    let res = Reservoir::new(net, cfg.frequencies(seed), cfg.coupling(0.0)?)?;
    sweep(
        &res,
        cfg.network.model.variant(),
        grid,
        direction,
        &random_phases(cfg.network.n, seed),
        &cfg.sweep_protocol(),
    )
}

/// Order sweeps for every seed and direction, in parallel.
/// Returns `(seed, sample)` pairs, seeds outermost, in traversal order.
pub fn order_sweeps(cfg: &ExperimentConfig, directions: &[Direction]) -> Result<Vec<(u64, OrderParamSample)>> {
    cfg.validate()?;
    let jobs: Vec<(u64, Direction)> = cfg
        .run
        .seeds
        .iter()
        .flat_map(|&s| directions.iter().map(move |&d| (s, d)))
        .collect();
    let out = collect_all(parallel_map(&jobs, cfg.run.workers, |&(seed, dir)| order_sweep(cfg, seed, dir)))?;
    Ok(jobs
        .iter()
        .zip(out)
        .flat_map(|(&(seed, _), samples)| samples.into_iter().map(move |s| (seed, s)))
        .collect())
}

/// The first coupling at or past the detected transition.
pub fn critical_lambda(samples: &[OrderParamSample]) -> Result<f64> {
    match detect_critical(samples)? {
        Transition::At { lambda, .. } => Ok(samples
            .iter()
            .map(|s| s.lambda)
            .filter(|&l| l >= lambda)
            .fold(f64::INFINITY, f64::min)),
        Transition::NotDetected => Err(Error::config("no synchronization transition on the coupling grid")),
    }
}

struct Point {
    lambda: f64,
    r: f64,
    r_var: f64,
}

/// Resolves the coupling for a network and measures its order parameters
/// there without input.
fn resolve_point(cfg: &ExperimentConfig, net: Arc<NetworkSpec>, seed: u64, choice: LambdaChoice) -> Result<Point> {
    let pick = |samples: Vec<OrderParamSample>, lambda: f64| {
        let s = samples.into_iter().find(|s| s.lambda == lambda).expect("coupling on grid");
        Point {
            lambda,
            r: s.r,
            r_var: s.r_var,
        }
    };
    match choice {
        LambdaChoice::Fixed(lambda) => {
            let samples = order_sweep_on(cfg, net, seed, &[lambda], Direction::Forward)?;
            Ok(pick(samples, lambda))
        }
        LambdaChoice::Critical => {
            let samples = order_sweep_on(cfg, net, seed, &cfg.lambda_grid()?, Direction::Forward)?;
            let lambda = critical_lambda(&samples)?;
            Ok(pick(samples, lambda))
        }
    }
}

fn rows_for(
    cfg: &ExperimentConfig,
    net: Arc<NetworkSpec>,
    seed: u64,
    point: &Point,
    tasks: &[TaskSpec],
    value: impl Fn(&TaskSpec) -> f64,
) -> Result<Vec<SweepRow>> {
    let spec = cfg.experiment(net, seed, point.lambda)?;
    let reports = evaluate_tasks(&spec, tasks, &[cfg.readout.ridge])?.remove(0);
    Ok(tasks
        .iter()
        .zip(reports)
        .map(|(task, rep)| SweepRow {
            model: cfg.network.model,
            seed,
            task: task_label(task),
            value: value(task),
            lambda: point.lambda,
            r: point.r,
            r_var: point.r_var,
            train_mse: rep.train_mse,
            test_mse: rep.test_mse,
            locked: rep.locked,
        })
        .collect())
}

/// Train and test error over the coupling grid for every seed and task.
/// The order parameters in each row come from a forward sweep of the same
/// network without input.
pub fn error_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let grid = cfg.lambda_grid()?;
    let seeds = &cfg.run.seeds;
    let orders = collect_all(parallel_map(seeds, cfg.run.workers, |&seed| {
        order_sweep(cfg, seed, Direction::Forward)
    }))?;
    let jobs: Vec<(usize, usize)> = (0..seeds.len()).flat_map(|s| (0..grid.len()).map(move |g| (s, g))).collect();
    let out = collect_all(parallel_map(&jobs, cfg.run.workers, |&(si, gi)| {
        let seed = seeds[si];
        let sample = &orders[si][gi];
        let point = Point {
            lambda: grid[gi],
            r: sample.r,
            r_var: sample.r_var,
        };
        rows_for(cfg, Arc::new(cfg.network(seed)?), seed, &point, &cfg.tasks(seed)?, |_| grid[gi])
    }))?;
    Ok(SweepResult {
        param: Param::Lambda,
        rows: out.into_iter().flatten().collect(),
    })
}

fn fixed_point_sweep(
    cfg: &ExperimentConfig,
    param: Param,
    values: &[usize],
    choice: LambdaChoice,
    tasks_for: impl Fn(u64, usize) -> Result<Vec<TaskSpec>> + Sync,
) -> Result<SweepResult> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::config("nothing to sweep"));
    }
    let seeds = &cfg.run.seeds;
    // One coupling per network, shared by every value of the sweep.
    let points = collect_all(parallel_map(seeds, cfg.run.workers, |&seed| {
        resolve_point(cfg, Arc::new(cfg.network(seed)?), seed, choice)
    }))?;
    let jobs: Vec<(usize, usize)> = (0..seeds.len()).flat_map(|s| (0..values.len()).map(move |v| (s, v))).collect();
    let out = collect_all(parallel_map(&jobs, cfg.run.workers, |&(si, vi)| {
        let seed = seeds[si];
        let tasks = tasks_for(seed, values[vi])?;
        rows_for(cfg, Arc::new(cfg.network(seed)?), seed, &points[si], &tasks, |_| values[vi] as f64)
    }))?;
    Ok(SweepResult {
        param,
        rows: out.into_iter().flatten().collect(),
    })
}

fn tasks_with(cfg: &ExperimentConfig, kinds: &[TaskKind], seed: u64, m: usize) -> Result<Vec<TaskSpec>> {
    let mut c = cfg.clone();
    c.task.kinds = kinds.to_vec();
    c.task.lengths = vec![m];
    c.tasks(seed)
}

/// Error against task length for each configured task kind.
pub fn length_sweep(cfg: &ExperimentConfig, lengths: &[usize], choice: LambdaChoice) -> Result<SweepResult> {
    fixed_point_sweep(cfg, Param::TaskLength, lengths, choice, |seed, m| {
        tasks_with(cfg, &cfg.task.kinds, seed, m)
    })
}

/// Error against the number of modes of a multi-sine input.
pub fn mode_sweep(cfg: &ExperimentConfig, modes: &[usize], choice: LambdaChoice) -> Result<SweepResult> {
    fixed_point_sweep(cfg, Param::Modes, modes, choice, |seed, m| {
        tasks_with(cfg, &[TaskKind::MultiSineFilter], seed, m)
    })
}

/// Error against the mean degree of Erdős-Rényi networks. With
/// [`LambdaChoice::Critical`] the coupling is located separately per degree.
pub fn degree_sweep(cfg: &ExperimentConfig, degrees: &[f64], choice: LambdaChoice) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.network.topology != Topology::Er {
        return Err(Error::config("degree sweeps need an Erdős-Rényi topology"));
    }
    if degrees.is_empty() {
        return Err(Error::config("nothing to sweep"));
    }
    let mut out = SweepResult::new(Param::MeanDegree);
    for &k in degrees {
        let mut c = cfg.clone();
        c.network.mean_degree = k;
        c.validate()?;
        let seeds = &c.run.seeds;
        let rows = collect_all(parallel_map(seeds, c.run.workers, |&seed| {
            let net = Arc::new(c.network(seed)?);
            let point = resolve_point(&c, net.clone(), seed, choice)?;
            rows_for(&c, net, seed, &point, &c.tasks(seed)?, |_| k)
        }))?;
        out.rows.extend(rows.into_iter().flatten());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::Scale;

    fn tiny(model: Model) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(model, Scale::Desk);
        cfg.network.n = 24;
        cfg.run.seeds = vec![1, 2];
        cfg.run.workers = 2;
        cfg.sweep.lambda_start = 1.0;
        cfg.sweep.lambda_stop = 4.0;
        cfg.sweep.lambda_step = 1.0;
        cfg.sweep.transient = 10.0;
        cfg.sweep.measure = 10.0;
        cfg.sweep.variance_window = 10.0;
        cfg.readout.train_end = 60;
        cfg.readout.test_end = 80;
        cfg.dynamics.relax_t_max = 30.0;
        cfg
    }

    #[test]
    fn error_sweep_shape_and_csv_round_trip() {
        let cfg = tiny(Model::Rs);
        let res = error_sweep(&cfg).unwrap();
        // 4 couplings x 2 seeds x 2 tasks.
        assert_eq!(res.rows.len(), 16);
        assert_eq!(res.tasks(), vec!["filter-m5".to_string(), "predict-m5".to_string()]);
        assert_eq!(res.curve(Model::Rs, 2, "predict-m5").len(), 4);
        let mut buf = Vec::new();
        assert!(res.write_csv(&mut buf, 15).is_err());
        res.write_csv(&mut buf, 16).unwrap();
        let back = SweepResult::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows.len(), 16);
        for (a, b) in back.rows.iter().zip(&res.rows) {
            assert_eq!((a.seed, &a.task, a.value, a.r_var), (b.seed, &b.task, b.value, b.r_var));
            assert_eq!(a.test_mse, b.test_mse);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = tiny(Model::Es);
        cfg.run.workers = 1;
        let one = error_sweep(&cfg).unwrap();
        cfg.run.workers = 3;
        let three = error_sweep(&cfg).unwrap();
        let bytes = |r: &SweepResult| {
            let mut b = Vec::new();
            r.write_csv(&mut b, r.rows.len()).unwrap();
            b
        };
        assert_eq!(bytes(&one), bytes(&three));
    }

    #[test]
    fn fixed_point_sweeps() {
        let cfg = tiny(Model::Es);
        let lengths = length_sweep(&cfg, &[2, 4], LambdaChoice::Fixed(3.0)).unwrap();
        assert_eq!(lengths.rows.len(), 2 * 2 * 2);
        assert!(lengths.rows.iter().all(|r| r.lambda == 3.0));
        let modes = mode_sweep(&cfg, &[1, 3], LambdaChoice::Fixed(3.0)).unwrap();
        assert_eq!(modes.tasks(), vec!["multisine-m1".to_string(), "multisine-m3".to_string()]);
        let degrees = degree_sweep(&cfg, &[4.0, 8.0], LambdaChoice::Fixed(3.0)).unwrap();
        assert_eq!(degrees.rows.len(), 2 * 2 * 2);
        assert!(degree_sweep(&tiny(Model::Rs), &[4.0], LambdaChoice::Fixed(3.0)).is_err());
    }

    #[test]
    fn critical_choice_lands_on_the_grid() {
        let mut cfg = tiny(Model::Rs);
        cfg.sweep.lambda_start = 0.5;
        cfg.sweep.lambda_stop = 6.0;
        cfg.sweep.lambda_step = 0.5;
        cfg.sweep.transient = 30.0;
        cfg.sweep.measure = 30.0;
        cfg.sweep.variance_window = 30.0;
        cfg.run.seeds = vec![3];
        let samples = order_sweep(&cfg, 3, Direction::Forward).unwrap();
        let lc = critical_lambda(&samples).unwrap();
        assert!(samples.iter().any(|s| s.lambda == lc));
        let res = length_sweep(&cfg, &[3], LambdaChoice::Critical).unwrap();
        assert!(res.rows.iter().all(|r| r.lambda == lc));
    }

    #[test]
    fn lambda_choice_parsing() {
        assert_eq!(LambdaChoice::parse("critical").unwrap(), LambdaChoice::Critical);
        assert_eq!(LambdaChoice::parse("2.5").unwrap(), LambdaChoice::Fixed(2.5));
        assert!(LambdaChoice::parse("-1").is_err());
        assert!(LambdaChoice::parse("high").is_err());
    }

    #[test]
    fn order_sweeps_row_count() {
        let cfg = tiny(Model::Rs);
        let rows = order_sweeps(&cfg, &[Direction::Forward, Direction::Backward]).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 4);
        assert_eq!(rows[4].1.direction, Direction::Backward);
        assert_eq!(rows[4].1.lambda, 4.0);
    }
}
