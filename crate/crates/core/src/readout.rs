//! Linear `(s, Δt)` readout over oscillator frequency histories.
//!
//! The output at time `t` is `f^l(t) = Σ_i Σ_{j=1..s} w^l_{i,j} θ_i'(t − jΔt)`.
//! Feature columns are ordered oscillator-major, tap-minor: column
//! `i * s + (j − 1)` holds oscillator `i`'s frequency `j` taps back.
//! Weights minimize `(1/M) Σ ‖y − f‖² + ridge ‖w‖²`.

use std::io::{BufRead, Write};

use nalgebra::{Cholesky, DMatrix, SVD};

use crate::dynamics::FrequencyHistory;
use crate::error::{Error, Result};

pub const DEFAULT_TAPS: usize = 10;
pub const DEFAULT_TAP_SPACING: f64 = 0.1;
pub const DEFAULT_RIDGE: f64 = 1e-8;
pub const FEATURE_ORDERING: &str = "oscillator-major";

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutConfig {
    pub taps: usize,
    pub delta_t: f64,
    /// Keep clamped input oscillators among the features.
    pub include_input_nodes: bool,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        ReadoutConfig {
            taps: DEFAULT_TAPS,
            delta_t: DEFAULT_TAP_SPACING,
            include_input_nodes: false,
        }
    }
}

impl ReadoutConfig {
    pub fn validate(&self, sample_dt: f64) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::config("readout needs at least one tap"));
        }
        let ratio = self.delta_t / sample_dt;
        if !(ratio >= 1.0 - 1e-9) || (ratio - ratio.round()).abs() > 1e-6 {
            return Err(Error::config(format!(
                "tap spacing {} is not a multiple of the sampling interval {sample_dt}",
                self.delta_t
            )));
        }
        Ok(())
    }

    fn stride(&self, sample_dt: f64) -> usize {
        (self.delta_t / sample_dt).round() as usize
    }

    /// Oscillators that feed the readout, given the clamped input nodes.
    pub fn retained_nodes(&self, n: usize, input_nodes: &[usize]) -> Vec<usize> {
        (0..n)
            .filter(|i| self.include_input_nodes || !input_nodes.contains(i))
            .collect()
    }
}

/// Feature matrix with one row per evaluation time.
///
/// Row for time `t` holds `θ_i'(t − jΔt)` for each retained oscillator `i`
/// and tap `j = 1..s`.
pub fn build_features(
    history: &FrequencyHistory,
    cfg: &ReadoutConfig,
    nodes: &[usize],
    eval_times: &[f64],
) -> Result<DMatrix<f64>> {
    cfg.validate(history.dt())?;
    let stride = cfg.stride(history.dt());
    let s = cfg.taps;
    if let Some(&i) = nodes.iter().find(|&&i| i >= history.oscillators()) {
        return Err(Error::config(format!("feature node {i} not in history")));
    }
    let mut x = DMatrix::zeros(eval_times.len(), nodes.len() * s);
    for (row, &t) in eval_times.iter().enumerate() {
        let k = history.index_of(t).ok_or_else(|| {
            Error::range(format!(
                "evaluation time {t} not on the history grid [{}, {}]",
                history.t0(),
                history.time(history.len().saturating_sub(1))
            ))
        })?;
        if k < s * stride {
            return Err(Error::range(format!(
                "evaluation time {t} needs {} of history before it",
                s as f64 * cfg.delta_t
            )));
        }
        for j in 1..=s {
            let sample = history.row(k - j * stride);
            for (col, &i) in nodes.iter().enumerate() {
                x[(row, col * s + j - 1)] = sample[i];
            }
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    pub config: ReadoutConfig,
    /// Oscillators feeding the features, in column order.
    pub nodes: Vec<usize>,
    /// `q × (nodes · taps)`.
    pub weights: DMatrix<f64>,
    pub ridge: f64,
    pub seed: u64,
    /// Ratio of extreme singular values (or Cholesky pivots, squared) of the
    /// system that was solved; infinite when rank deficient.
    pub condition_estimate: f64,
}

/// Minimizes `(1/M) ‖X w − Y‖² + ridge ‖w‖²`.
///
/// With `ridge > 0` the regularized normal equations are factored by
/// Cholesky, in primal form (`F × F`) when there are at least as many rows as
/// features and in dual form (`M × M`) otherwise. With `ridge = 0` the
/// minimum-norm least-squares solution is taken from an SVD.
///
/// Returns weights as `q × F`.
pub fn solve_ridge(features: &DMatrix<f64>, targets: &DMatrix<f64>, ridge: f64) -> Result<(DMatrix<f64>, f64)> {
    let (m, f) = features.shape();
    if targets.nrows() != m {
        return Err(Error::config(format!("{m} feature rows but {} target rows", targets.nrows())));
    }
    if m == 0 || f == 0 {
        return Err(Error::config("empty training set"));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::config(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    if ridge == 0.0 {
        return min_norm_solve(features, targets);
    }
    let shift = ridge * m as f64;
    let (w, chol) = if f <= m {
        let mut gram = features.tr_mul(features);
        for d in 0..f {
            gram[(d, d)] += shift;
        }
        let rhs = features.tr_mul(targets);
        let chol = Cholesky::new(gram).ok_or_else(|| Error::config("regularized system not positive definite"))?;
        (chol.solve(&rhs), chol)
    } else {
        let mut gram = features * features.transpose();
        for d in 0..m {
            gram[(d, d)] += shift;
        }
        let chol = Cholesky::new(gram).ok_or_else(|| Error::config("regularized system not positive definite"))?;
        let alpha = chol.solve(targets);
        (features.tr_mul(&alpha), chol)
    };
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    Ok((w.transpose(), (hi / lo).powi(2)))
}

fn min_norm_solve(features: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (m, f) = features.shape();
    let svd = SVD::new(features.clone(), true, true);
    let sv = &svd.singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok((DMatrix::zeros(targets.ncols(), f), f64::INFINITY));
    }
    let cutoff = top * m.max(f) as f64 * f64::EPSILON;
    let w = svd
        .solve(targets, cutoff)
        .map_err(|e| Error::config(format!("least-squares solve failed: {e}")))?;
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    let bottom = sv.iter().cloned().fold(f64::MAX, f64::min);
    let cond = if rank < m.min(f) || bottom == 0.0 { f64::INFINITY } else { top / bottom };
    Ok((w.transpose(), cond))
}

impl ReadoutModel {
    /// Fits a model on `features` (`M × F`) against `targets` (`M × q`).
    pub fn fit(
        config: ReadoutConfig,
        nodes: Vec<usize>,
        features: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        ridge: f64,
        seed: u64,
    ) -> Result<Self> {
        if features.ncols() != nodes.len() * config.taps {
            return Err(Error::config(format!(
                "{} feature columns for {} nodes x {} taps",
                features.ncols(),
                nodes.len(),
                config.taps
            )));
        }
        let (weights, condition_estimate) = solve_ridge(features, targets, ridge)?;
        Ok(ReadoutModel {
            config,
            nodes,
            weights,
            ridge,
            seed,
            condition_estimate,
        })
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// Readout outputs, `M × q`.
    pub fn predict(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.weights.ncols() {
            return Err(Error::config(format!(
                "model expects {} features, got {}",
                self.weights.ncols(),
                features.ncols()
            )));
        }
        Ok(features * self.weights.transpose())
    }

    /// `(1/M) Σ_i ‖y(t_i) − f(t_i)‖²`.
    pub fn evaluate(&self, features: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64> {
        let pred = self.predict(features)?;
        mse(&pred, targets)
    }

    /// Writes a text weight file: `#`-prefixed metadata lines followed by one
    /// comma-separated row of weights per output.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!(
            "# taps={},delta_t={:?},ordering={},ridge={:?},seed={},include_input_nodes={}\n",
            self.config.taps,
            self.config.delta_t,
            FEATURE_ORDERING,
            self.ridge,
            self.seed,
            self.config.include_input_nodes
        ));
        let nodes: Vec<String> = self.nodes.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!("# nodes={}\n", nodes.join(" ")));
        for l in 0..self.weights.nrows() {
            let row: Vec<String> = self.weights.row(l).iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut config = ReadoutConfig::default();
        let mut ridge = None;
        let mut seed = 0;
        let mut nodes = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix("# nodes=") {
                let parsed: std::result::Result<Vec<usize>, _> = meta.split_whitespace().map(str::parse).collect();
                nodes = Some(parsed.map_err(|_| Error::parse(lineno, "bad node list"))?);
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split(',') {
                    let (k, v) = kv
                        .trim()
                        .split_once('=')
                        .ok_or_else(|| Error::parse(lineno, format!("bad metadata `{kv}`")))?;
                    let bad = || Error::parse(lineno, format!("bad value for `{k}`"));
                    match k {
                        "taps" => config.taps = v.parse().map_err(|_| bad())?,
                        "delta_t" => config.delta_t = v.parse().map_err(|_| bad())?,
                        "ridge" => ridge = Some(v.parse().map_err(|_| bad())?),
                        "seed" => seed = v.parse().map_err(|_| bad())?,
                        "include_input_nodes" => config.include_input_nodes = v.parse().map_err(|_| bad())?,
                        "ordering" if v == FEATURE_ORDERING => {}
                        "ordering" => return Err(Error::parse(lineno, format!("unsupported ordering `{v}`"))),
                        _ => {}
                    }
                }
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse()).collect();
            rows.push(row.map_err(|_| Error::parse(lineno, "bad weight row"))?);
        }
        let nodes = nodes.ok_or_else(|| Error::parse(1, "missing `# nodes=` line"))?;
        let ridge = ridge.ok_or_else(|| Error::parse(1, "missing ridge metadata"))?;
        let width = nodes.len() * config.taps;
        if rows.is_empty() || rows.iter().any(|r| r.len() != width) {
            return Err(Error::parse(1, format!("weight rows must have {width} entries")));
        }
        let weights = DMatrix::from_fn(rows.len(), width, |l, c| rows[l][c]);
        Ok(ReadoutModel {
            config,
            nodes,
            weights,
            ridge,
            seed,
            condition_estimate: f64::NAN,
        })
    }
}

/// Mean over rows of the squared Euclidean residual norm.
pub fn mse(pred: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64> {
    if pred.shape() != targets.shape() {
        return Err(Error::config(format!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.shape(),
            targets.shape()
        )));
    }
    if pred.nrows() == 0 {
        return Err(Error::config("no samples to evaluate"));
    }
    Ok((pred - targets).norm_squared() / pred.nrows() as f64)
}
