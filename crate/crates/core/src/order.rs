//! Synchronization order parameters and adiabatic coupling sweeps.

use std::io::Write;

use crate::dynamics::{CouplingScheme, CouplingVariant, FrequencyHistory, OscillatorState, Reservoir};
use crate::error::{Error, Result};

/// Magnitude of the mean unit phasor, `|(1/N) Σ_j exp(i θ_j)|`.
pub fn kuramoto_r(phases: &[f64]) -> f64 {
    assert!(!phases.is_empty(), "order parameter of an empty phase vector");
    let (mut s, mut c) = (0.0, 0.0);
    for &th in phases {
        let (si, ci) = th.sin_cos();
        s += si;
        c += ci;
    }
    let n = phases.len() as f64;
    ((s / n).powi(2) + (c / n).powi(2)).sqrt().min(1.0)
}

/// Sensitivity and averaging window of the variance order parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceConfig {
    pub c: f64,
    pub window: f64,
    pub sample_dt: f64,
}

/// Sensitivity constant. Locked oscillators that still feel a few drifting
/// ones fluctuate with frequency variance around 1e-5, while a fully locked
/// network relaxes to variances below 1e-9, so the constant has to be large
/// for the parameter to separate full locking from partial synchrony.
pub const DEFAULT_VARIANCE_C: f64 = 1e7;

impl Default for VarianceConfig {
    fn default() -> Self {
        VarianceConfig {
            c: DEFAULT_VARIANCE_C,
            window: 50.0,
            sample_dt: 0.1,
        }
    }
}

impl VarianceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::config(format!("variance constant must be positive, got {}", self.c)));
        }
        if !(self.sample_dt > 0.0) || !(self.window >= 10.0 * self.sample_dt - 1e-9) {
            return Err(Error::config("variance window must span at least 10 sample intervals"));
        }
        Ok(())
    }

    fn window_samples(&self) -> usize {
        (self.window / self.sample_dt).round() as usize + 1
    }
}

/// `(1/N) Σ_j exp(−c var_j)` with `var_j` the temporal variance of oscillator
/// `j`'s frequency over the trailing window of `history`.
pub fn variance_r(history: &FrequencyHistory, cfg: &VarianceConfig) -> Result<f64> {
    cfg.validate()?;
    if (history.dt() - cfg.sample_dt).abs() > 1e-9 * cfg.sample_dt {
        return Err(Error::config(format!(
            "history sampled every {} but variance expects {}",
            history.dt(),
            cfg.sample_dt
        )));
    }
    let needed = cfg.window_samples();
    if history.len() < needed {
        return Err(Error::config(format!(
            "history has {} samples, variance window needs {needed}",
            history.len()
        )));
    }
    let n = history.oscillators();
    let start = history.len() - needed;
    let mut mean = vec![0.0; n];
    for k in start..history.len() {
        for (m, v) in mean.iter_mut().zip(history.row(k)) {
            *m += v;
        }
    }
    let inv = 1.0 / needed as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let mut var = vec![0.0; n];
    for k in start..history.len() {
        for ((acc, v), m) in var.iter_mut().zip(history.row(k)).zip(&mean) {
            *acc += (v - m).powi(2);
        }
    }
    let total: f64 = var.iter().map(|v| (-cfg.c * v * inv).exp()).sum();
    Ok((total / n as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderParamSample {
    pub lambda: f64,
    pub r: f64,
    pub r_var: f64,
    pub direction: Direction,
}

/// Dwell times of the per-coupling protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepProtocol {
    pub transient: f64,
    pub measure: f64,
    pub variance: VarianceConfig,
}

impl Default for SweepProtocol {
    fn default() -> Self {
        SweepProtocol {
            transient: 50.0,
            measure: 50.0,
            variance: VarianceConfig::default(),
        }
    }
}

/// Inclusive arithmetic grid `start, start + step, ..., stop`.
pub fn lambda_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::config(format!("bad grid {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

/// Adiabatic sweep over `grid` (ascending). The final state at each coupling
/// seeds the next; backward sweeps traverse the grid in descending order.
///
/// At each point the transient is discarded, then `r` is averaged over the
/// measurement samples and `r_var` computed from the recorded frequencies.
/// Samples are returned in traversal order.
pub fn sweep(
    reservoir: &Reservoir,
    variant: CouplingVariant,
    grid: &[f64],
    direction: Direction,
    init_phases: &[f64],
    protocol: &SweepProtocol,
) -> Result<Vec<OrderParamSample>> {
    if grid.is_empty() {
        return Err(Error::config("empty coupling grid"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("coupling grid must be strictly ascending"));
    }
    protocol.variance.validate()?;
    let mut res = reservoir.clone();
    let mut state: OscillatorState = res.state(0.0, init_phases)?;
    let order: Vec<f64> = match direction {
        Direction::Forward => grid.to_vec(),
        Direction::Backward => grid.iter().rev().copied().collect(),
    };
    let sdt = protocol.variance.sample_dt;
    let mut out = Vec::with_capacity(order.len());
    for lambda in order {
        res.set_coupling(CouplingScheme::new(variant, lambda)?);
        res.advance(&mut state, protocol.transient, None)?;
        let t0 = state.t;
        let mut r_sum = 0.0;
        let mut data = Vec::new();
        let visits = res.observe(&mut state, None, protocol.measure, sdt, |s| {
            r_sum += kuramoto_r(&s.theta);
            data.extend_from_slice(&s.dtheta);
        })?;
        let history = FrequencyHistory::new(t0, sdt, res.n(), data)?;
        let r_var = variance_r(&history, &protocol.variance)?;
        out.push(OrderParamSample {
            lambda,
            r: (r_sum / visits.max(1) as f64).clamp(0.0, 1.0),
            r_var,
            direction,
        });
    }
    Ok(out)
}

/// Smallest jump in `r_var` that counts as a transition.
pub const MIN_TRANSITION_JUMP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transition {
    /// Midpoint of the grid interval with the largest jump.
    At { lambda: f64, jump: f64 },
    NotDetected,
}

impl Transition {
    pub fn lambda(&self) -> Option<f64> {
        match *self {
            Transition::At { lambda, .. } => Some(lambda),
            Transition::NotDetected => None,
        }
    }
}

/// Largest single-step change of `metric` between neighbouring couplings.
///
/// Samples are ordered by coupling first. Returns the interval `(lo, hi)` and
/// the signed change `metric(hi) − metric(lo)`; ties go to the smaller
/// coupling.
pub fn largest_step(samples: &[OrderParamSample], metric: impl Fn(&OrderParamSample) -> f64) -> Option<(f64, f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut best: Option<(f64, f64, f64)> = None;
    for w in sorted.windows(2) {
        let delta = metric(&w[1]) - metric(&w[0]);
        if best.map_or(true, |(_, _, d)| delta.abs() > d.abs()) {
            best = Some((w[0].lambda, w[1].lambda, delta));
        }
    }
    best
}

/// Locates the critical coupling as the largest single-step jump of `r_var`.
///
/// The uncoupled point `λ = 0` is skipped: frequencies there are constant, so
/// `r_var = 1` trivially and the step to the first coupled point is an
/// artifact of the grid rather than a transition.
pub fn detect_critical(samples: &[OrderParamSample]) -> Result<Transition> {
    if samples.len() < 3 {
        return Err(Error::config(format!(
            "critical-point detection needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    let coupled: Vec<OrderParamSample> = samples.iter().filter(|s| s.lambda > 0.0).copied().collect();
    let Some((lo, hi, delta)) = largest_step(&coupled, |s| s.r_var) else {
        return Ok(Transition::NotDetected);
    };
    if delta.abs() < MIN_TRANSITION_JUMP {
        return Ok(Transition::NotDetected);
    }
    Ok(Transition::At {
        lambda: 0.5 * (lo + hi),
        jump: delta,
    })
}

/// First coupling (in ascending order) at which `r` exceeds `threshold`.
pub fn onset(samples: &[OrderParamSample], threshold: f64) -> Option<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    sorted.iter().find(|s| s.r > threshold).map(|s| s.lambda)
}

/// Writes sweep samples as CSV with columns `direction,lambda,r,r_var,seed`.
pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[(u64, OrderParamSample)]) -> Result<()> {
    let mut out = String::from("direction,lambda,r,r_var,seed\n");
    for (seed, s) in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.direction.name(),
            s.lambda,
            s.r,
            s.r_var,
            seed
        ));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::dynamics::{random_phases, NaturalFrequencies};
    use crate::topology::complete_graph;

    fn sample(lambda: f64, r_var: f64) -> OrderParamSample {
        OrderParamSample {
            lambda,
            r: 0.0,
            r_var,
            direction: Direction::Forward,
        }
    }

    #[test]
    fn r_examples() {
        assert!((kuramoto_r(&[1.3; 7]) - 1.0).abs() < 1e-15);
        assert!(kuramoto_r(&[0.0, FRAC_PI_2, PI, 1.5 * PI]) < 1e-15);
        let expected = (PI / 6.0).cos();
        assert!((kuramoto_r(&[0.0, PI / 3.0]) - expected).abs() < 1e-15);
    }

    fn history(rows: &[Vec<f64>]) -> FrequencyHistory {
        let n = rows[0].len();
        FrequencyHistory::new(0.0, 0.1, n, rows.concat()).unwrap()
    }

    #[test]
    fn r_var_locked_is_one() {
        let rows = vec![vec![0.3, 0.3, 0.3]; 501];
        let v = variance_r(&history(&rows), &VarianceConfig::default()).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn r_var_two_point_distribution() {
        let v = 0.02;
        let c = 1000.0;
        let rows: Vec<Vec<f64>> = (0..100).map(|k| vec![if k % 2 == 0 { v } else { -v }]).collect();
        let cfg = VarianceConfig { c, window: 9.9, sample_dt: 0.1 };
        let r = variance_r(&history(&rows), &cfg).unwrap();
        assert!((r - (-c * v * v).exp()).abs() < 1e-12, "{r}");
    }

    #[test]
    fn r_var_huge_variance_vanishes() {
        let rows: Vec<Vec<f64>> = (0..200).map(|k| vec![if k % 2 == 0 { 1e3 } else { -1e3 }; 4]).collect();
        let cfg = VarianceConfig { c: 1.0, window: 10.0, sample_dt: 0.1 };
        assert!(variance_r(&history(&rows), &cfg).unwrap() < 1e-300);
    }

    #[test]
    fn r_var_configuration_errors() {
        let rows = vec![vec![0.0]; 50];
        let h = history(&rows);
        let short = VarianceConfig { c: 1.0, window: 10.0, sample_dt: 0.1 };
        assert!(matches!(variance_r(&h, &short), Err(Error::Config(_))));
        let narrow = VarianceConfig { c: 1.0, window: 0.5, sample_dt: 0.1 };
        assert!(narrow.validate().is_err());
        let neg = VarianceConfig { c: -1.0, ..VarianceConfig::default() };
        assert!(neg.validate().is_err());
        let other_dt = VarianceConfig { c: 1.0, window: 1.0, sample_dt: 0.05 };
        assert!(variance_r(&h, &other_dt).is_err());
    }

    #[test]
    fn detect_step() {
        let grid = lambda_grid(0.0, 5.0, 0.1).unwrap();
        let samples: Vec<_> = grid.iter().map(|&l| sample(l, if l < 2.0 - 1e-9 { 0.0 } else { 1.0 })).collect();
        let t = detect_critical(&samples).unwrap();
        assert!((t.lambda().unwrap() - 1.95).abs() < 1e-9);
    }

    #[test]
    fn detect_ramp_is_flat() {
        let grid = lambda_grid(0.0, 5.0, 0.1).unwrap();
        let samples: Vec<_> = grid.iter().map(|&l| sample(l, l / 5.0)).collect();
        assert_eq!(detect_critical(&samples).unwrap(), Transition::NotDetected);
    }

    #[test]
    fn detect_ignores_uncoupled_point() {
        let samples = vec![sample(0.0, 1.0), sample(0.1, 0.0), sample(0.2, 0.0), sample(0.3, 0.6)];
        assert!((detect_critical(&samples).unwrap().lambda().unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn detect_ties_and_order() {
        // Two equal jumps: the smaller coupling wins, regardless of input order.
        let mut samples = vec![sample(1.0, 0.0), sample(2.0, 0.5), sample(3.0, 0.5), sample(4.0, 1.0)];
        samples.reverse();
        assert_eq!(detect_critical(&samples).unwrap().lambda(), Some(1.5));
        assert!(detect_critical(&samples[..2]).is_err());
    }

    #[test]
    fn grid_arithmetic() {
        assert_eq!(lambda_grid(0.0, 5.0, 0.1).unwrap().len(), 51);
        assert_eq!(lambda_grid(1.0, 1.0, 0.5).unwrap(), vec![1.0]);
        assert!(lambda_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn sweep_bounds_and_trend() {
        let n = 100;
        let omega = NaturalFrequencies::standard_normal(n, 3);
        let res = Reservoir::new(Arc::new(complete_graph(n).unwrap()), omega, CouplingScheme::regular(0.0).unwrap()).unwrap();
        let protocol = SweepProtocol {
            transient: 20.0,
            measure: 20.0,
            variance: VarianceConfig { window: 20.0, ..VarianceConfig::default() },
        };
        let grid = [0.2, 1.0, 5.0];
        let fwd = sweep(&res, CouplingVariant::Regular, &grid, Direction::Forward, &random_phases(n, 4), &protocol).unwrap();
        let bwd = sweep(&res, CouplingVariant::Regular, &grid, Direction::Backward, &random_phases(n, 4), &protocol).unwrap();
        assert_eq!(fwd.iter().map(|s| s.lambda).collect::<Vec<_>>(), grid);
        assert_eq!(bwd.iter().map(|s| s.lambda).collect::<Vec<_>>(), vec![5.0, 1.0, 0.2]);
        for s in fwd.iter().chain(&bwd) {
            assert!((0.0..=1.0).contains(&s.r) && (0.0..=1.0).contains(&s.r_var));
        }
        assert!(fwd[2].r > 0.9 && fwd[0].r < 0.4);
        assert!(fwd[2].r_var > 0.99);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[(7, sample(1.5, 0.25))]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "direction,lambda,r,r_var,seed\nforward,1.5,0,0.25,7\n");
    }

    proptest! {
        #[test]
        fn r_bounded_and_shift_invariant(phases in proptest::collection::vec(0.0f64..TAU_F, 1..200), shift in -20.0f64..20.0) {
            let r = kuramoto_r(&phases);
            prop_assert!((0.0..=1.0).contains(&r));
            let shifted: Vec<f64> = phases.iter().map(|p| p + shift).collect();
            prop_assert!((kuramoto_r(&shifted) - r).abs() < 1e-12);
        }

        #[test]
        fn r_var_bounded(values in proptest::collection::vec(-50.0f64..50.0, 33), c in 1e-3f64..1e6) {
            let h = FrequencyHistory::new(0.0, 0.1, 3, values[..33].to_vec()).unwrap();
            let cfg = VarianceConfig { c, window: 1.0, sample_dt: 0.1 };
            let r = variance_r(&h, &cfg).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }

    const TAU_F: f64 = std::f64::consts::TAU;
}
