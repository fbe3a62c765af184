//! Presets for Figs. 1-8 and the qualitative check each one carries.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, Model, Scale};
use super::plot::Chart;
use super::prepare_run_dir;
use super::sweeps::{
    degree_sweep, error_sweep, length_sweep, mode_sweep, order_sweeps, LambdaChoice, SweepResult, SweepRow,
};
use crate::error::{Error, Result};
use crate::order::{detect_critical, largest_step, onset, Direction, OrderParamSample, Transition};

pub const FIGURES: [u8; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

/// Distance from the critical coupling still counted as "at" it.
pub const CRITICAL_WINDOW: f64 = 0.5;
/// Floor applied before taking logs of errors.
const ERROR_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct FigureReport {
    pub fig: u8,
    pub scale: Scale,
    pub configs: Vec<ExperimentConfig>,
    pub csv: String,
    pub chart: Chart,
    pub checks: Vec<Check>,
}

impl FigureReport {
    pub fn run_id(&self) -> String {
        format!("fig{}-{}", self.fig, self.scale.name())
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }

    /// Writes `data.csv`, `plot.svg`, `checks.txt`, resolved configs and
    /// graphs under `<out>/<run-id>/`.
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let refs: Vec<&ExperimentConfig> = self.configs.iter().collect();
        let dir = prepare_run_dir(&out.join(self.run_id()), &refs)?;
        fs::write(dir.join("data.csv"), &self.csv)?;
        fs::write(dir.join("plot.svg"), self.chart.to_svg())?;
        fs::write(dir.join("checks.txt"), self.summary())?;
        Ok(dir)
    }
}

/// Coupling-sweep samples rebuilt from the rows of one error curve.
pub fn samples_of(rows: &[&SweepRow]) -> Vec<OrderParamSample> {
    rows.iter()
        .map(|r| OrderParamSample {
            lambda: r.lambda,
            r: r.r,
            r_var: r.r_var,
            direction: Direction::Forward,
        })
        .collect()
}

/// Coupling with the smallest value of `metric` (first on ties).
pub fn argmin_by(rows: &[&SweepRow], metric: impl Fn(&SweepRow) -> f64) -> Option<f64> {
    rows.iter()
        .min_by(|a, b| metric(a).total_cmp(&metric(b)))
        .map(|r| r.value)
}

/// Largest single-step change of `log10(metric)` along a curve ordered by
/// the swept value: `(lo, hi, signed change)`.
pub fn largest_log_step(rows: &[&SweepRow], metric: impl Fn(&SweepRow) -> f64) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for w in rows.windows(2) {
        let d = metric(w[1]).max(ERROR_FLOOR).log10() - metric(w[0]).max(ERROR_FLOOR).log10();
        if best.map_or(true, |(_, _, b)| d.abs() > b.abs()) {
            best = Some((w[0].value, w[1].value, d));
        }
    }
    best
}

/// Seed-wise geometric mean of `metric` at each swept value.
pub fn geometric_mean_curve(res: &SweepResult, model: Model, task: &str, metric: impl Fn(&SweepRow) -> f64) -> Vec<(f64, f64)> {
    let seeds = res.seeds();
    let mut acc: Vec<(f64, f64, usize)> = Vec::new();
    for &seed in &seeds {
        for row in res.curve(model, seed, task) {
            let v = metric(row).max(ERROR_FLOOR).log10();
            match acc.iter_mut().find(|a| a.0 == row.value) {
                Some(a) => {
                    a.1 += v;
                    a.2 += 1;
                }
                None => acc.push((row.value, v, 1)),
            }
        }
    }
    acc.sort_by(|a, b| a.0.total_cmp(&b.0));
    acc.into_iter().map(|(x, s, n)| (x, 10f64.powf(s / n as f64))).collect()
}

fn majority(hits: usize, total: usize) -> bool {
    2 * hits > total
}

fn seeds_of(scale: Scale, seeds: Option<&[u64]>) -> Vec<u64> {
    match seeds {
        Some(s) => s.to_vec(),
        None => match scale {
            Scale::Desk => vec![1, 2, 3],
            Scale::Full => (1..=10).collect(),
        },
    }
}

/// Preset configuration of `model` for figure `fig`.
pub fn figure_config(fig: u8, model: Model, scale: Scale, seeds: &[u64], workers: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(model, scale);
    cfg.run.id = format!("fig{fig}-{}", scale.name());
    cfg.run.seeds = seeds.to_vec();
    cfg.run.workers = workers;
    match fig {
        2 | 3 | 7 | 8 => {
            cfg.sweep.lambda_start = 1.0;
            cfg.sweep.lambda_stop = 5.0;
            cfg.sweep.lambda_step = 0.25;
        }
        // Sparse graphs (mean degree 3) can lock well above 5.
        6 => cfg.sweep.lambda_stop = 8.0,
        _ => {}
    }
    match fig {
        2 | 3 =>cfg.task.lengths = vec![5, 10, 15],
        7 | 8 => cfg.readout.ridge = 0.0,
        _ => {}
    }
    cfg
}

/// Values swept by the fixed-coupling figures.
pub fn figure_values(fig: u8) -> Vec<usize> {
    match fig {
        4 => vec![5, 10, 15],
        5 => vec![1, 2, 4, 8, 16],
        6 => vec![3, 6, 12, 24, 48, 96],
        _ => Vec::new(),
    }
}

/// Runs the preset of figure `fig` and evaluates its qualitative claim.
pub fn reproduce_figure(fig: u8, scale: Scale, seeds: Option<&[u64]>, workers: usize) -> Result<FigureReport> {
    let seeds = seeds_of(scale, seeds);
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    let cfg = |model| figure_config(fig, model, scale, &seeds, workers);
    let (configs, csv, chart, checks) = match fig {
        1 => figure1(cfg(Model::Rs), cfg(Model::Es))?,
        2 | 3 | 7 | 8 => {
            let model = if fig == 2 || fig == 7 { Model::Rs } else { Model::Es };
            let c = cfg(model);
            let res = error_sweep(&c)?;
            let checks = match fig {
                2 => check_minimum_at_critical(&res, model),
                3 => check_error_drop_at_critical(&res, model),
                7 => check_train_step_at_critical(&res, model, false),
                _ => check_train_step_at_critical(&res, model, true),
            };
            let chart = error_chart(&res, &format!("Fig. {fig}"), "coupling strength", fig >= 7);
            (vec![c], csv_of(&res)?, chart, checks)
        }
        4 | 5 => {
            let values = figure_values(fig);
            let mut res = SweepResult::new(if fig == 4 { super::Param::TaskLength } else { super::Param::Modes });
            let mut configs = Vec::new();
            for model in [Model::Rs, Model::Es] {
                let c = cfg(model);
                let part = if fig == 4 {
                    length_sweep(&c, &values, LambdaChoice::Critical)?
                } else {
                    mode_sweep(&c, &values, LambdaChoice::Critical)?
                };
                res.extend(part)?;
                configs.push(c);
            }
            let first = *values.first().expect("values");
            let last = *values.last().expect("values");
            let checks = check_growth(&res, first, last, fig == 5);
            let x = if fig == 4 { "task length m" } else { "number of modes" };
            let chart = value_chart(&res, &format!("Fig. {fig}"), x);
            (configs, csv_of(&res)?, chart, checks)
        }
        6 => {
            let c = cfg(Model::Es);
            let degrees: Vec<f64> = figure_values(6).into_iter().map(|k| k as f64).collect();
            let res = degree_sweep(&c, &degrees, LambdaChoice::Critical)?;
            let checks = check_degree_profile(&res, 6.0, 24.0);
            let chart = value_chart(&res, "Fig. 6", "mean degree");
            (vec![c], csv_of(&res)?, chart, checks)
        }
        other => return Err(Error::config(format!("no figure {other}; choose 1-8"))),
    };
    Ok(FigureReport {
        fig,
        scale,
        configs,
        csv,
        chart,
        checks,
    })
}

fn csv_of(res: &SweepResult) -> Result<String> {
    let mut buf = Vec::new();
    res.write_csv(&mut buf, res.rows.len())?;
    Ok(String::from_utf8(buf).expect("utf8"))
}

type FigureParts = (Vec<ExperimentConfig>, String, Chart, Vec<Check>);

fn mean_curve(rows: &[(u64, OrderParamSample)], direction: Direction, metric: impl Fn(&OrderParamSample) -> f64) -> Vec<(f64, f64)> {
    let mut acc: Vec<(f64, f64, usize)> = Vec::new();
    for (_, s) in rows.iter().filter(|(_, s)| s.direction == direction) {
        match acc.iter_mut().find(|a| a.0 == s.lambda) {
            Some(a) => {
                a.1 += metric(s);
                a.2 += 1;
            }
            None => acc.push((s.lambda, metric(s), 1)),
        }
    }
    acc.sort_by(|a, b| a.0.total_cmp(&b.0));
    acc.into_iter().map(|(x, s, n)| (x, s / n as f64)).collect()
}

fn per_seed(rows: &[(u64, OrderParamSample)], seed: u64, direction: Direction) -> Vec<OrderParamSample> {
    rows.iter()
        .filter(|(s, o)| *s == seed && o.direction == direction)
        .map(|(_, o)| *o)
        .collect()
}

/// Midpoint of the largest single-step change of `r`, with its size.
pub fn r_jump(samples: &[OrderParamSample]) -> Option<(f64, f64)> {
    largest_step(samples, |s| s.r).map(|(lo, hi, d)| (0.5 * (lo + hi), d))
}

fn figure1(rs: ExperimentConfig, es: ExperimentConfig) -> Result<FigureParts> {
    let rs_rows = order_sweeps(&rs, &[Direction::Forward])?;
    let es_rows = order_sweeps(&es, &[Direction::Forward, Direction::Backward])?;
    let mut csv = String::from("model,direction,lambda,r,r_var,seed\n");
    for (model, rows) in [(Model::Rs, &rs_rows), (Model::Es, &es_rows)] {
        for (seed, s) in rows.iter() {
            let _ = writeln!(csv, "{},{},{},{},{},{}", model.name(), s.direction.name(), s.lambda, s.r, s.r_var, seed);
        }
    }
    let mut chart = Chart::new("Fig. 1: order parameters", "coupling strength", "r, r_var", false);
    chart.add("RS r", mean_curve(&rs_rows, Direction::Forward, |s| s.r));
    chart.add("RS r_var", mean_curve(&rs_rows, Direction::Forward, |s| s.r_var));
    chart.add("ES r fwd", mean_curve(&es_rows, Direction::Forward, |s| s.r));
    chart.add("ES r bwd", mean_curve(&es_rows, Direction::Backward, |s| s.r));
    chart.add("ES r_var fwd", mean_curve(&es_rows, Direction::Forward, |s| s.r_var));

    let seeds = rs.run.seeds.clone();
    let mut checks = Vec::new();
    let mean_r: Vec<OrderParamSample> = mean_curve(&rs_rows, Direction::Forward, |s| s.r)
        .into_iter()
        .map(|(lambda, r)| OrderParamSample {
            lambda,
            r,
            r_var: 0.0,
            direction: Direction::Forward,
        })
        .collect();
    let on = onset(&mean_r, 0.3);
    checks.push(Check {
        name: "RS onset of r".into(),
        passed: on.is_some_and(|l| (1.3..=2.0).contains(&l)),
        detail: format!("seed-mean r first exceeds 0.3 at {on:?}; expected within [1.3, 2.0]"),
    });
    let mut rv_hits = 0;
    let mut jump_hits = 0;
    let mut hyst_hits = 0;
    for &seed in &seeds {
        if let Transition::At { jump, .. } = detect_critical(&per_seed(&rs_rows, seed, Direction::Forward))? {
            rv_hits += (jump >= 0.4) as usize;
        }
        let fwd = r_jump(&per_seed(&es_rows, seed, Direction::Forward));
        let bwd = r_jump(&per_seed(&es_rows, seed, Direction::Backward));
        if let Some((l, d)) = fwd {
            jump_hits += (d >= 0.4 && (2.0..=4.0).contains(&l)) as usize;
        }
        if let (Some((lf, _)), Some((lb, _))) = (fwd, bwd) {
            hyst_hits += (lb < lf) as usize;
        }
    }
    let n = seeds.len();
    checks.push(Check {
        name: "RS r_var jump".into(),
        passed: majority(rv_hits, n),
        detail: format!("{rv_hits}/{n} seeds show a single-step r_var jump >= 0.4"),
    });
    checks.push(Check {
        name: "ES explosive jump".into(),
        passed: majority(jump_hits, n),
        detail: format!("{jump_hits}/{n} seeds jump by >= 0.4 in r within [2, 4]"),
    });
    checks.push(Check {
        name: "ES hysteresis".into(),
        passed: majority(hyst_hits, n),
        detail: format!("{hyst_hits}/{n} seeds desynchronize backward below the forward jump"),
    });
    Ok((vec![rs, es], csv, chart, checks))
}

fn critical_of(rows: &[&SweepRow]) -> Option<f64> {
    match detect_critical(&samples_of(rows)) {
        Ok(Transition::At { lambda, .. }) => Some(lambda),
        _ => None,
    }
}

/// Per task: the test error minimum lies within the window around the
/// critical coupling for a majority of seeds.
pub fn check_minimum_at_critical(res: &SweepResult, model: Model) -> Vec<Check> {
    let seeds = res.seeds();
    res.tasks()
        .into_iter()
        .map(|task| {
            let mut hits = 0;
            let mut detail = Vec::new();
            for &seed in &seeds {
                let rows = res.curve(model, seed, &task);
                let lc = critical_of(&rows);
                let best = argmin_by(&rows, |r| r.test_mse);
                if let (Some(lc), Some(best)) = (lc, best) {
                    hits += ((best - lc).abs() <= CRITICAL_WINDOW + 1e-9) as usize;
                }
                detail.push(format!("seed {seed}: min at {best:?}, critical {lc:?}"));
            }
            Check {
                name: format!("{} {task} minimum at criticality", model.name()),
                passed: majority(hits, seeds.len()),
                detail: detail.join("; "),
            }
        })
        .collect()
}

/// Per task: the largest change of log test error is a drop near the
/// critical coupling for a majority of seeds.
pub fn check_error_drop_at_critical(res: &SweepResult, model: Model) -> Vec<Check> {
    step_check(res, model, "test error drops at criticality", |r| r.test_mse, false)
}

/// Per task: the largest change of log training error is a drop (RS) or a
/// rise (ES) near the critical coupling.
pub fn check_train_step_at_critical(res: &SweepResult, model: Model, rise: bool) -> Vec<Check> {
    let what = if rise { "training error rises at criticality" } else { "training error drops at criticality" };
    step_check(res, model, what, |r| r.train_mse, rise)
}

fn step_check(res: &SweepResult, model: Model, what: &str, metric: impl Fn(&SweepRow) -> f64 + Copy, rise: bool) -> Vec<Check> {
    let seeds = res.seeds();
    res.tasks()
        .into_iter()
        .map(|task| {
            let mut hits = 0;
            let mut detail = Vec::new();
            for &seed in &seeds {
                let rows = res.curve(model, seed, &task);
                let lc = critical_of(&rows);
                let step = largest_log_step(&rows, metric);
                if let (Some(lc), Some((lo, hi, d))) = (lc, step) {
                    let mid = 0.5 * (lo + hi);
                    hits += ((d > 0.0) == rise && (mid - lc).abs() <= CRITICAL_WINDOW + 1e-9) as usize;
                }
                detail.push(format!(
                    "seed {seed}: largest log10 step {}, critical {lc:?}",
                    step.map_or("none".to_string(), |(lo, hi, d)| format!("{d:+.2} over [{lo}, {hi}]"))
                ));
            }
            Check {
                name: format!("{} {task} {what}", model.name()),
                passed: majority(hits, seeds.len()),
                detail: detail.join("; "),
            }
        })
        .collect()
}

fn kind_of(task: &str) -> &str {
    task.split("-m").next().unwrap_or(task)
}

/// Test error at `value` for one seed and task kind.
fn error_at(res: &SweepResult, model: Model, seed: u64, kind: &str, value: f64) -> Option<f64> {
    res.rows
        .iter()
        .find(|r| r.model == model && r.seed == seed && kind_of(&r.task) == kind && r.value == value)
        .map(|r| r.test_mse)
}

/// Per task kind: error grows from `first` to `last` more for RS than for ES
/// (ratio of test errors), in a majority of seeds.
pub fn check_growth(res: &SweepResult, first: usize, last: usize, modes: bool) -> Vec<Check> {
    let mut kinds: Vec<String> = res.tasks().iter().map(|t| kind_of(t).to_string()).collect();
    kinds.dedup();
    let seeds = res.seeds();
    kinds
        .into_iter()
        .map(|kind| {
            let mut hits = 0;
            let mut detail = Vec::new();
            for &seed in &seeds {
                let ratio = |model| Some(error_at(res, model, seed, &kind, last as f64)? / error_at(res, model, seed, &kind, first as f64)?);
                if let (Some(rs), Some(es)) = (ratio(Model::Rs), ratio(Model::Es)) {
                    hits += (rs > es) as usize;
                    detail.push(format!("seed {seed}: RS x{rs:.3}, ES x{es:.3}"));
                }
            }
            let what = if modes { "modes" } else { "task length" };
            Check {
                name: format!("{kind}: RS error grows faster with {what} ({last} over {first})"),
                passed: majority(hits, seeds.len()),
                detail: detail.join("; "),
            }
        })
        .collect()
}

/// Per task: the seed-averaged error is minimized for a mean degree inside
/// `[lo, hi]` and larger at both ends of the sweep.
pub fn check_degree_profile(res: &SweepResult, lo: f64, hi: f64) -> Vec<Check> {
    res.tasks()
        .into_iter()
        .map(|task| {
            let curve = geometric_mean_curve(res, Model::Es, &task, |r| r.test_mse);
            let best = curve.iter().min_by(|a, b| a.1.total_cmp(&b.1)).copied();
            let ends = (curve.first().copied(), curve.last().copied());
            let passed = match (best, ends) {
                (Some((k, e)), (Some(a), Some(b))) => (lo..=hi).contains(&k) && a.1 > e && b.1 > e,
                _ => false,
            };
            let pts: Vec<String> = curve.iter().map(|(k, e)| format!("{k}:{e:.3e}")).collect();
            Check {
                name: format!("es {task} error minimized at mean degree in [{lo}, {hi}]"),
                passed,
                detail: pts.join(" "),
            }
        })
        .collect()
}

fn error_chart(res: &SweepResult, title: &str, x: &str, with_train: bool) -> Chart {
    let mut chart = Chart::new(title, x, "MSE (seed geometric mean)", true);
    for model in res.models() {
        for task in res.tasks() {
            chart.add(format!("{} {task} test", model.name()), geometric_mean_curve(res, model, &task, |r| r.test_mse));
            if with_train {
                chart.add(format!("{} {task} train", model.name()), geometric_mean_curve(res, model, &task, |r| r.train_mse));
            }
        }
    }
    chart
}

fn value_chart(res: &SweepResult, title: &str, x: &str) -> Chart {
    let mut chart = Chart::new(title, x, "test MSE (seed geometric mean)", true);
    let mut kinds: Vec<String> = res.tasks().iter().map(|t| kind_of(t).to_string()).collect();
    kinds.dedup();
    for model in res.models() {
        for kind in &kinds {
            let mut pts: Vec<(f64, f64)> = Vec::new();
            for task in res.tasks().iter().filter(|t| kind_of(t) == kind) {
                pts.extend(geometric_mean_curve(res, model, task, |r| r.test_mse));
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            chart.add(format!("{} {kind}", model.name()), pts);
        }
    }
    chart
}
