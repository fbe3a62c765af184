//! Benchmark input signals and supervised targets.
//!
//! Chaotic sources (Lorenz, Mackey-Glass) are integrated with fixed-step RK4
//! and standardized to zero mean and unit variance over the emitted window.
//! Targets are sampled on integer times, one time unit per lag.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled signal with one or more channels.
///
/// Samples are stored row-major: `values[k * channels + c]` is channel `c`
/// at time `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    t0: f64,
    dt: f64,
    channels: usize,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, channels: usize, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::config(format!("invalid sampling t0={t0}, dt={dt}")));
        }
        if channels == 0 || values.len() % channels != 0 {
            return Err(Error::config(format!(
                "{} values do not fill {channels} channels",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("non-finite sample at index {k}")));
        }
        Ok(TimeSeries {
            t0,
            dt,
            channels,
            values,
        })
    }

    pub fn scalar(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(t0, dt, 1, values)
    }

    /// Samples `f` at `t0 + k * dt` for `k in 0..len`.
    pub fn from_fn(t0: f64, dt: f64, len: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::scalar(t0, dt, (0..len).map(|k| f(t0 + k as f64 * dt)).collect())
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of the last sample.
    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, k: usize, channel: usize) -> f64 {
        self.values[k * self.channels + channel]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.sample(k, c)).collect()
    }

    /// Shifts the time axis so the first sample sits at `t0`.
    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    /// Fractional sample position of `t`, snapped to the nearest integer when
    /// within rounding noise.
    fn position(&self, t: f64) -> Result<f64> {
        let pos = (t - self.t0) / self.dt;
        let last = (self.len() - 1) as f64;
        let snapped = if (pos - pos.round()).abs() < 1e-9 { pos.round() } else { pos };
        if self.is_empty() || snapped < 0.0 || snapped > last || !snapped.is_finite() {
            return Err(Error::InputRange {
                t,
                start: self.t0,
                end: self.t_end(),
            });
        }
        Ok(snapped)
    }

    /// Linear interpolation of one channel at continuous time `t`.
    pub fn at_channel(&self, t: f64, channel: usize) -> Result<f64> {
        let pos = self.position(t)?;
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        if frac == 0.0 {
            return Ok(self.sample(k, channel));
        }
        let a = self.sample(k, channel);
        let b = self.sample(k + 1, channel);
        Ok(a + frac * (b - a))
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        self.at_channel(t, 0)
    }

    pub fn mean_and_variance(&self, channel: usize) -> (f64, f64) {
        let n = self.len() as f64;
        let mean = (0..self.len()).map(|k| self.sample(k, channel)).sum::<f64>() / n;
        let var = (0..self.len())
            .map(|k| (self.sample(k, channel) - mean).powi(2))
            .sum::<f64>()
            / n;
        (mean, var)
    }

    /// Rescales every channel to zero mean and unit (population) variance.
    pub fn standardized(mut self) -> Self {
        for c in 0..self.channels {
            let (mean, var) = self.mean_and_variance(c);
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for k in 0..self.len() {
                let v = &mut self.values[k * self.channels + c];
                *v = (*v - mean) / sd;
            }
        }
        self
    }

    /// Writes CSV with a `# t0=..,dt=..` comment, a header row of channel
    /// names and one row per sample. `names` defaults to `x` (scalar) or
    /// `y1..ym`.
    pub fn write_csv<W: Write>(&self, mut w: W, names: Option<&[&str]>) -> Result<()> {
        let header: Vec<String> = match names {
            Some(names) if names.len() == self.channels => {
                names.iter().map(|s| s.to_string()).collect()
            }
            Some(names) => {
                return Err(Error::config(format!(
                    "{} names for {} channels",
                    names.len(),
                    self.channels
                )))
            }
            None if self.channels == 1 => vec!["x".to_string()],
            None => (1..=self.channels).map(|c| format!("y{c}")).collect(),
        };
        let mut out = String::new();
        out.push_str(&format!("# t0={:?},dt={:?}\n", self.t0, self.dt));
        out.push_str("t,");
        out.push_str(&header.join(","));
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&format!("{:?}", self.time(k)));
            for v in self.row(k) {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut t0 = None;
        let mut dt = None;
        let mut channels = None;
        let mut values = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split(',') {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::parse(lineno, format!("bad metadata `{kv}`")))?;
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad number `{v}`")))?;
                    match k.trim() {
                        "t0" => t0 = Some(v),
                        "dt" => dt = Some(v),
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            match channels {
                None => {
                    if fields.len() < 2 {
                        return Err(Error::parse(lineno, "header needs a time column and a channel"));
                    }
                    channels = Some(fields.len() - 1);
                }
                Some(c) => {
                    if fields.len() != c + 1 {
                        return Err(Error::parse(lineno, format!("expected {} fields", c + 1)));
                    }
                    for f in &fields[1..] {
                        values.push(
                            f.trim()
                                .parse()
                                .map_err(|_| Error::parse(lineno, format!("bad number `{f}`")))?,
                        );
                    }
                }
            }
        }
        let (t0, dt) = match (t0, dt) {
            (Some(t0), Some(dt)) => (t0, dt),
            _ => return Err(Error::parse(1, "missing `# t0=..,dt=..` metadata line")),
        };
        let channels = channels.ok_or_else(|| Error::parse(1, "missing header row"))?;
        TimeSeries::new(t0, dt, channels, values)
    }
}

fn rk4_step<const D: usize>(y: [f64; D], h: f64, f: impl Fn(&[f64; D]) -> [f64; D]) -> [f64; D] {
    let add = |a: &[f64; D], b: &[f64; D], s: f64| -> [f64; D] {
        let mut out = *a;
        for i in 0..D {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = f(&y);
    let k2 = f(&add(&y, &k1, h / 2.0));
    let k3 = f(&add(&y, &k2, h / 2.0));
    let k4 = f(&add(&y, &k3, h));
    let mut out = y;
    for i in 0..D {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Number of internal steps per emitted sample so that the internal step is
/// at most `max_h`.
fn substeps(dt: f64, max_h: f64) -> usize {
    ((dt / max_h) - 1e-9).ceil().max(1.0) as usize
}

fn sample_count(duration: f64, dt: f64) -> usize {
    (duration / dt + 1e-9).floor() as usize + 1
}

fn check_duration(duration: f64, dt: f64) -> Result<()> {
    if !(duration > 0.0) || !(dt > 0.0) || !duration.is_finite() || !dt.is_finite() {
        return Err(Error::config(format!(
            "need positive duration and dt, got {duration}, {dt}"
        )));
    }
    Ok(())
}

pub const LORENZ_SIGMA: f64 = 10.0;
pub const LORENZ_RHO: f64 = 28.0;
pub const LORENZ_BETA: f64 = 8.0 / 3.0;
const LORENZ_TRANSIENT: f64 = 100.0;
const INTERNAL_DT: f64 = 0.01;

pub fn lorenz_rhs(s: &[f64; 3]) -> [f64; 3] {
    [
        LORENZ_SIGMA * (s[1] - s[0]),
        s[0] * (LORENZ_RHO - s[2]) - s[1],
        s[0] * s[1] - LORENZ_BETA * s[2],
    ]
}

/// Integrates a Lorenz trajectory from `state` for `duration`, returning every
/// `dt`-spaced state including the initial one.
pub fn lorenz_trajectory(state: [f64; 3], duration: f64, dt: f64) -> Vec<[f64; 3]> {
    let sub = substeps(dt, INTERNAL_DT);
    let h = dt / sub as f64;
    let n = sample_count(duration, dt);
    let mut out = Vec::with_capacity(n);
    let mut s = state;
    out.push(s);
    for _ in 1..n {
        for _ in 0..sub {
            s = rk4_step(s, h, lorenz_rhs);
        }
        out.push(s);
    }
    out
}

/// Standardized first coordinate of the Lorenz system on `[0, duration]`,
/// after discarding a 100-unit transient from a seeded initial condition.
pub fn lorenz_series(duration: f64, dt: f64, seed: u64) -> Result<TimeSeries> {
    check_duration(duration, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = [
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(10.0..40.0),
    ];
    let warm = lorenz_trajectory(init, LORENZ_TRANSIENT, INTERNAL_DT);
    let start = *warm.last().unwrap();
    let traj = lorenz_trajectory(start, duration, dt);
    let xs = traj.into_iter().map(|s| s[0]).collect();
    Ok(TimeSeries::scalar(0.0, dt, xs)?.standardized())
}

/// Mackey-Glass delay equation `x' = beta x(t-tau) / (1 + x(t-tau)^n) - gamma x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MackeyGlass {
    pub beta: f64,
    pub gamma: f64,
    pub exponent: f64,
    pub tau: f64,
}

impl Default for MackeyGlass {
    fn default() -> Self {
        MackeyGlass {
            beta: 0.2,
            gamma: 0.1,
            exponent: 10.0,
            tau: 17.0,
        }
    }
}

impl MackeyGlass {
    fn rhs(&self, x: f64, delayed: f64) -> f64 {
        self.beta * delayed / (1.0 + delayed.powf(self.exponent)) - self.gamma * x
    }

    /// Integrates from a constant history `x(s) = history` for `s <= 0`,
    /// returning the raw trajectory on the internal grid of step `h`.
    ///
    /// The delayed value at RK4 half steps is linearly interpolated between
    /// stored grid points.
    pub fn integrate(&self, history: f64, steps: usize, h: f64) -> Vec<f64> {
        let lag = self.tau / h;
        let mut xs = Vec::with_capacity(steps + 1);
        xs.push(history);
        // Delayed value at grid position `pos` (in steps, may be fractional or negative).
        let delayed = |xs: &[f64], pos: f64| -> f64 {
            if pos <= 0.0 {
                return if pos == 0.0 { xs[0] } else { history };
            }
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            if frac == 0.0 || k + 1 >= xs.len() {
                xs[k.min(xs.len() - 1)]
            } else {
                xs[k] + frac * (xs[k + 1] - xs[k])
            }
        };
        for i in 0..steps {
            let x = xs[i];
            let base = i as f64 - lag;
            let d0 = delayed(&xs, base);
            let dh = delayed(&xs, base + 0.5);
            let d1 = delayed(&xs, base + 1.0);
            let k1 = self.rhs(x, d0);
            let k2 = self.rhs(x + 0.5 * h * k1, dh);
            let k3 = self.rhs(x + 0.5 * h * k2, dh);
            let k4 = self.rhs(x + h * k3, d1);
            xs.push(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        }
        xs
    }
}

const MACKEY_GLASS_TRANSIENT: f64 = 500.0;

/// Standardized Mackey-Glass series on `[0, duration]` with the chaotic
/// parameter set (0.2, 0.1, 10, 17). The seed perturbs the constant initial
/// history around the fixed point `x = 1`.
pub fn mackey_glass_series(duration: f64, dt: f64, seed: u64) -> Result<TimeSeries> {
    check_duration(duration, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let history = 1.0 + rng.random_range(-0.2..0.2);
    let sub = substeps(dt, INTERNAL_DT);
    let h = dt / sub as f64;
    let skip = (MACKEY_GLASS_TRANSIENT / h).round() as usize;
    let n = sample_count(duration, dt);
    let raw = MackeyGlass::default().integrate(history, skip + (n - 1) * sub, h);
    let xs = (0..n).map(|k| raw[skip + k * sub]).collect();
    Ok(TimeSeries::scalar(0.0, dt, xs)?.standardized())
}

/// One sinusoidal mode `a sin(b t + c) + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineMode {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

pub fn draw_modes(m: usize, seed: u64) -> Vec<SineMode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| SineMode {
            a: rng.random_range(0.5..1.5),
            b: rng.random_range(0.1..2.0),
            c: rng.random_range(0.0..TAU),
            d: rng.random_range(-0.5..0.5),
        })
        .collect()
}

pub fn multisine_from_modes(modes: &[SineMode], t0: f64, duration: f64, dt: f64) -> Result<TimeSeries> {
    check_duration(duration, dt)?;
    if modes.is_empty() {
        return Err(Error::config("multi-sine needs at least one mode"));
    }
    let inv_m = 1.0 / modes.len() as f64;
    TimeSeries::from_fn(t0, dt, sample_count(duration, dt), |t| {
        inv_m * modes.iter().map(|m| m.a * (m.b * t + m.c).sin() + m.d).sum::<f64>()
    })
}

/// Average of `m` seeded sinusoidal modes on `[0, duration]`.
pub fn multisine_series(duration: f64, dt: f64, m: usize, seed: u64) -> Result<TimeSeries> {
    if m == 0 {
        return Err(Error::config("mode count must be >= 1"));
    }
    multisine_from_modes(&draw_modes(m, seed), 0.0, duration, dt)
}

/// Integer target times `t` such that `[t + lo, t + hi]` lies inside `x`.
fn integer_times(x: &TimeSeries, lo: f64, hi: f64) -> Option<(i64, usize)> {
    let first = (x.t0() - lo - 1e-9).ceil() as i64;
    let last = (x.t_end() - hi + 1e-9).floor() as i64;
    (last >= first).then(|| (first, (last - first + 1) as usize))
}

/// Polynomial moving filter `y(t) = (1/m) sum_{k=1..m} (a x + b x^2 + c x^3)(t - k)`
/// on every integer time with enough history.
pub fn task1_target(x: &TimeSeries, m: usize, a: f64, b: f64, c: f64) -> Result<TimeSeries> {
    if m == 0 {
        return Err(Error::config("filter length must be >= 1"));
    }
    let (first, len) = integer_times(x, -(m as f64), 0.0).ok_or_else(|| {
        Error::range(format!("series shorter than filter length {m}"))
    })?;
    let inv_m = 1.0 / m as f64;
    let mut ys = Vec::with_capacity(len);
    for idx in 0..len {
        let t = (first + idx as i64) as f64;
        let mut acc = 0.0;
        for k in 1..=m {
            let v = x.at(t - k as f64)?;
            acc += a * v + b * v * v + c * v * v * v;
        }
        ys.push(acc * inv_m);
    }
    TimeSeries::scalar(first as f64, 1.0, ys)
}

/// `m`-channel look-ahead target with channel `l` (1-based) equal to
/// `x(t + l - 1)`, on every integer time with enough future data.
pub fn task2_target(x: &TimeSeries, m: usize) -> Result<TimeSeries> {
    if m == 0 {
        return Err(Error::config("prediction horizon must be >= 1"));
    }
    let (first, len) = integer_times(x, 0.0, (m - 1) as f64).ok_or_else(|| {
        Error::range(format!("series shorter than prediction horizon {m}"))
    })?;
    let mut ys = Vec::with_capacity(len * m);
    for idx in 0..len {
        let t = (first + idx as i64) as f64;
        for l in 0..m {
            ys.push(x.at(t + l as f64)?);
        }
    }
    TimeSeries::new(first as f64, 1.0, m, ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Polynomial moving filter of a Lorenz input.
    Filter,
    /// Look-ahead prediction of a Mackey-Glass input.
    Predict,
    /// Polynomial moving filter of a multi-sine input; `m` counts modes.
    #[serde(rename = "multisine")]
    MultiSineFilter,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Filter => "filter",
            TaskKind::Predict => "predict",
            TaskKind::MultiSineFilter => "multisine",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "filter" | "task1" => Ok(TaskKind::Filter),
            "predict" | "task2" => Ok(TaskKind::Predict),
            "multisine" | "modes" => Ok(TaskKind::MultiSineFilter),
            other => Err(Error::config(format!("unknown task `{other}`"))),
        }
    }
}

pub const DEFAULT_FILTER_COEFFS: (f64, f64, f64) = (1.0, 0.5, 0.25);
/// Filter length used with multi-sine inputs, where `m` is the mode count.
pub const MULTISINE_FILTER_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub m: usize,
    pub coeffs: (f64, f64, f64),
    pub seed: u64,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, m: usize, seed: u64) -> Result<Self> {
        let spec = TaskSpec {
            kind,
            m,
            coeffs: DEFAULT_FILTER_COEFFS,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("task length m must be >= 1"));
        }
        let (a, b, c) = self.coeffs;
        if self.kind != TaskKind::Predict && (a == 0.0 || b == 0.0 || c == 0.0) {
            return Err(Error::config("filter coefficients must all be nonzero"));
        }
        Ok(())
    }

    /// Samples of history the target needs before its first time.
    pub fn history_needed(&self) -> usize {
        match self.kind {
            TaskKind::Filter => self.m,
            TaskKind::MultiSineFilter => MULTISINE_FILTER_LEN,
            TaskKind::Predict => 0,
        }
    }

    pub fn lookahead_needed(&self) -> usize {
        match self.kind {
            TaskKind::Predict => self.m - 1,
            _ => 0,
        }
    }

    /// Output dimension of the target.
    pub fn outputs(&self) -> usize {
        match self.kind {
            TaskKind::Predict => self.m,
            _ => 1,
        }
    }

    /// Standardized input signal covering `[t_start, t_end]`.
    pub fn input(&self, t_start: f64, t_end: f64, dt: f64) -> Result<TimeSeries> {
        let duration = t_end - t_start;
        let series = match self.kind {
            TaskKind::Filter => lorenz_series(duration, dt, self.seed)?,
            TaskKind::Predict => mackey_glass_series(duration, dt, self.seed)?,
            TaskKind::MultiSineFilter => multisine_series(duration, dt, self.m, self.seed)?.standardized(),
        };
        Ok(series.with_t0(t_start))
    }

    pub fn target(&self, x: &TimeSeries) -> Result<TimeSeries> {
        let (a, b, c) = self.coeffs;
        match self.kind {
            TaskKind::Filter => task1_target(x, self.m, a, b, c),
            TaskKind::MultiSineFilter => task1_target(x, MULTISINE_FILTER_LEN, a, b, c),
            TaskKind::Predict => task2_target(x, self.m),
        }
    }
}
