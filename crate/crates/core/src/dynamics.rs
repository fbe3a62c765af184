//! Networked Kuramoto dynamics.
//!
//! Each oscillator obeys
//!
//! ```text
//! θ_i' = ω_i + (λ_i / k_i) Σ_j A_ij sin(θ_j − θ_i)
//! ```
//!
//! with `λ_i = λ` (regular) or `λ_i = λ |ω_i|` (explosive). The coupling sum
//! is evaluated as `cos θ_i Σ_j sin θ_j − sin θ_i Σ_j cos θ_j` over the
//! neighbourhood, so each right-hand side costs one `sin_cos` per node plus
//! one multiply-add per edge. On the all-to-all graph the neighbourhood sums
//! collapse to the global mean field.
//!
//! Input oscillators are clamped: their phase is overwritten by an affine
//! image of the drive signal at every RK4 stage and at the end of the step.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::signals::TimeSeries;
use crate::topology::NetworkSpec;

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_RELAX_T_MAX: f64 = 200.0;
pub const DEFAULT_LOCK_TOL: f64 = 1e-6;

/// Natural frequencies ω_i of the oscillators.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalFrequencies(Vec<f64>);

impl NaturalFrequencies {
    pub fn new(omega: Vec<f64>) -> Self {
        NaturalFrequencies(omega)
    }

    /// Draws `n` frequencies from the standard normal distribution.
    pub fn standard_normal(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NaturalFrequencies((0..n).map(|_| rng.sample(StandardNormal)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the oscillator whose |ω| is the (lower) median.
    pub fn median_abs_index(&self) -> usize {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[a].abs().total_cmp(&self.0[b].abs()).then(a.cmp(&b)));
        idx[(idx.len() - 1) / 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingVariant {
    /// Uniform coupling `λ_i = λ`.
    Regular,
    /// Frequency-weighted coupling `λ_i = λ |ω_i|`.
    Explosive,
}

impl CouplingVariant {
    pub fn name(self) -> &'static str {
        match self {
            CouplingVariant::Regular => "rs",
            CouplingVariant::Explosive => "es",
        }
    }
}

/// Global coupling scale and its per-node distribution.
///
/// `lambda = 0` is accepted as the uncoupled limit so that coupling sweeps
/// may start from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingScheme {
    variant: CouplingVariant,
    lambda: f64,
}

impl CouplingScheme {
    pub fn new(variant: CouplingVariant, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::config(format!("coupling must be finite and >= 0, got {lambda}")));
        }
        Ok(CouplingScheme { variant, lambda })
    }

    pub fn regular(lambda: f64) -> Result<Self> {
        Self::new(CouplingVariant::Regular, lambda)
    }

    pub fn explosive(lambda: f64) -> Result<Self> {
        Self::new(CouplingVariant::Explosive, lambda)
    }

    pub fn variant(&self) -> CouplingVariant {
        self.variant
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Effective coupling `λ_i` of a node with natural frequency `omega`.
    pub fn node_strength(&self, omega: f64) -> f64 {
        match self.variant {
            CouplingVariant::Regular => self.lambda,
            CouplingVariant::Explosive => self.lambda * omega.abs(),
        }
    }
}

/// Phases and instantaneous frequencies at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorState {
    pub t: f64,
    pub theta: Vec<f64>,
    pub dtheta: Vec<f64>,
}

impl OscillatorState {
    /// Frequency spread `max_i |θ_i' − mean θ'|`.
    pub fn frequency_spread(&self) -> f64 {
        frequency_spread(&self.dtheta)
    }

    pub fn mean_frequency(&self) -> f64 {
        self.dtheta.iter().sum::<f64>() / self.dtheta.len() as f64
    }
}

fn frequency_spread(dtheta: &[f64]) -> f64 {
    let mean = dtheta.iter().sum::<f64>() / dtheta.len() as f64;
    dtheta.iter().map(|w| (w - mean).abs()).fold(0.0, f64::max)
}

/// Reduces an angle into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// `sin_cos` for moderate arguments (|x| up to ~1e6), accurate to a few ulp.
///
/// Cody-Waite reduction by π/2 followed by the fdlibm kernel polynomials;
/// branch-free so the per-node loop vectorizes. Several times faster than the
/// libm call, which dominates the cost of a right-hand side evaluation.
#[inline(always)]
pub fn fast_sin_cos(x: f64) -> (f64, f64) {
    const PIO2_HI: f64 = 1.570_796_326_734_125_6;
    const PIO2_LO: f64 = 6.077_100_506_506_192e-11;
    const INV_PIO2: f64 = 6.366_197_723_675_814e-1;
    // 1.5 * 2^52: adding it rounds to the nearest integer in the low mantissa bits.
    const ROUND: f64 = 6_755_399_441_055_744.0;
    let shifted = x * INV_PIO2 + ROUND;
    let q = shifted - ROUND;
    let quadrant = shifted.to_bits() & 3;
    let r = (x - q * PIO2_HI) - q * PIO2_LO;
    let z = r * r;
    let sin = r + r * z
        * (-1.666_666_666_666_663_2e-1
            + z * (8.333_333_333_322_49e-3
                + z * (-1.984_126_982_985_795e-4
                    + z * (2.755_731_370_707_007e-6
                        + z * (-2.505_076_025_340_686_3e-8 + z * 1.589_690_995_211_55e-10)))));
    let cos = 1.0 - 0.5 * z
        + z * z
            * (4.166_666_666_666_660_2e-2
                + z * (-1.388_888_888_887_411e-3
                    + z * (2.480_158_728_947_673e-5
                        + z * (-2.755_731_435_139_066_3e-7
                            + z * (2.087_572_321_298_175e-9 + z * -1.135_964_755_778_819_5e-11)))));
    let odd = (quadrant & 1) as f64;
    let a = sin + odd * (cos - sin);
    let b = cos + odd * (sin - cos);
    let sin_sign = 1.0 - 2.0 * ((quadrant >> 1) & 1) as f64;
    let cos_sign = 1.0 - 2.0 * (((quadrant + 1) >> 1) & 1) as f64;
    (sin_sign * a, cos_sign * b)
}

/// Uniform phases on `[0, 2π)`.
pub fn random_phases(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..TAU)).collect()
}

/// Phase-clamps input oscillators to `scale · x(t) + offset + carrier · t`.
///
/// `carrier` lets the drive ride in a frame co-rotating with the network's
/// collective frequency; it is zero for a plain affine clamp.
#[derive(Debug, Clone)]
pub struct InputBinding {
    nodes: Vec<usize>,
    drive: Arc<TimeSeries>,
    pub scale: f64,
    pub offset: f64,
    pub carrier: f64,
}

impl InputBinding {
    pub fn new(nodes: Vec<usize>, drive: Arc<TimeSeries>, scale: f64, offset: f64) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::config("input binding needs at least one node"));
        }
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("input nodes must be distinct"));
        }
        if !scale.is_finite() || !offset.is_finite() {
            return Err(Error::config("input scale and offset must be finite"));
        }
        Ok(InputBinding {
            nodes,
            drive,
            scale,
            offset,
            carrier: 0.0,
        })
    }

    pub fn with_carrier(mut self, carrier: f64) -> Self {
        self.carrier = carrier;
        self
    }

    /// Affine map sending `[lo, hi]` onto `[−π/2, π/2]`.
    pub fn fit_range(lo: f64, hi: f64) -> (f64, f64) {
        use std::f64::consts::PI;
        if hi > lo {
            let scale = PI / (hi - lo);
            (scale, -PI / 2.0 - scale * lo)
        } else {
            (0.0, -lo)
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn drive(&self) -> &TimeSeries {
        &self.drive
    }

    /// Clamped phase at time `t` (not reduced).
    pub fn phase_at(&self, t: f64) -> Result<f64> {
        Ok(self.scale * self.drive.at(t)? + self.offset + self.carrier * t)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if let Some(&i) = self.nodes.iter().find(|&&i| i >= n) {
            return Err(Error::config(format!("input node {i} out of range for n={n}")));
        }
        Ok(())
    }
}

/// Uniformly sampled frequency history, `samples × n` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyHistory {
    t0: f64,
    dt: f64,
    n: usize,
    data: Vec<f64>,
}

impl FrequencyHistory {
    pub fn new(t0: f64, dt: f64, n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() % n != 0 || !(dt > 0.0) {
            return Err(Error::config("malformed frequency history"));
        }
        Ok(FrequencyHistory { t0, dt, n, data })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn oscillators(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.data[k * self.n + i]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Sample index whose time equals `t` up to rounding.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = (t - self.t0) / self.dt;
        let k = pos.round();
        ((pos - k).abs() < 1e-6 && k >= 0.0 && (k as usize) < self.len()).then(|| k as usize)
    }

    /// The trailing samples covering the last `duration` time units.
    pub fn tail(&self, duration: f64) -> FrequencyHistory {
        let keep = ((duration / self.dt).round() as usize + 1).min(self.len());
        let skip = self.len() - keep;
        FrequencyHistory {
            t0: self.time(skip),
            dt: self.dt,
            n: self.n,
            data: self.data[skip * self.n..].to_vec(),
        }
    }
}

/// A network of phase oscillators with fixed natural frequencies and coupling.
#[derive(Debug, Clone)]
pub struct Reservoir {
    net: Arc<NetworkSpec>,
    omega: NaturalFrequencies,
    coupling: CouplingScheme,
    /// `λ_i / k_i` per node.
    gains: Vec<f64>,
    dt: f64,
}

struct Scratch {
    sin: Vec<f64>,
    cos: Vec<f64>,
    stage: Vec<f64>,
    k: [Vec<f64>; 4],
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            sin: vec![0.0; n],
            cos: vec![0.0; n],
            stage: vec![0.0; n],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }
}

impl Reservoir {
    pub fn new(net: Arc<NetworkSpec>, omega: NaturalFrequencies, coupling: CouplingScheme) -> Result<Self> {
        if omega.len() != net.n() {
            return Err(Error::config(format!(
                "{} natural frequencies for {} nodes",
                omega.len(),
                net.n()
            )));
        }
        let mut r = Reservoir {
            net,
            omega,
            coupling,
            gains: Vec::new(),
            dt: DEFAULT_DT,
        };
        r.set_coupling(coupling);
        Ok(r)
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config(format!("integration step must be positive, got {dt}")));
        }
        self.dt = dt;
        Ok(self)
    }

    pub fn set_coupling(&mut self, coupling: CouplingScheme) {
        self.coupling = coupling;
        let omega = self.omega.as_slice();
        self.gains = (0..self.net.n())
            .map(|i| coupling.node_strength(omega[i]) / self.net.degree(i) as f64)
            .collect();
    }

    pub fn n(&self) -> usize {
        self.net.n()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn network(&self) -> &NetworkSpec {
        &self.net
    }

    pub fn omega(&self) -> &NaturalFrequencies {
        &self.omega
    }

    pub fn coupling(&self) -> CouplingScheme {
        self.coupling
    }

    /// Right-hand side of the Kuramoto equation at `phases`.
    pub fn rhs(&self, phases: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        let mut scratch = Scratch::new(self.n());
        self.rhs_into(phases, &mut out, &mut scratch.sin, &mut scratch.cos);
        out
    }

    fn rhs_into(&self, phases: &[f64], out: &mut [f64], sin: &mut [f64], cos: &mut [f64]) {
        for (i, &th) in phases.iter().enumerate() {
            let (s, c) = fast_sin_cos(th);
            sin[i] = s;
            cos[i] = c;
        }
        let omega = self.omega.as_slice();
        if self.net.is_complete() {
            let sum_s: f64 = sin.iter().sum();
            let sum_c: f64 = cos.iter().sum();
            for i in 0..out.len() {
                out[i] = omega[i] + self.gains[i] * (sum_s * cos[i] - sum_c * sin[i]);
            }
        } else {
            for i in 0..out.len() {
                let (mut ss, mut sc) = (0.0, 0.0);
                for &j in self.net.neighbors(i) {
                    ss += sin[j as usize];
                    sc += cos[j as usize];
                }
                out[i] = omega[i] + self.gains[i] * (ss * cos[i] - sc * sin[i]);
            }
        }
    }

    /// State at time `t` with the given phases, reduced into `[0, 2π)`.
    pub fn state(&self, t: f64, phases: &[f64]) -> Result<OscillatorState> {
        if phases.len() != self.n() {
            return Err(Error::config(format!("{} phases for {} nodes", phases.len(), self.n())));
        }
        let theta: Vec<f64> = phases.iter().map(|&p| wrap_phase(p)).collect();
        let dtheta = self.rhs(&theta);
        Ok(OscillatorState { t, theta, dtheta })
    }

    /// One classical RK4 step of length `dt`.
    pub fn step(&self, state: &OscillatorState, dt: f64, binding: Option<&InputBinding>) -> Result<OscillatorState> {
        let mut next = state.clone();
        let mut scratch = Scratch::new(self.n());
        if let Some(b) = binding {
            b.validate(self.n())?;
        }
        self.step_in_place(&mut next, dt, binding, &mut scratch)?;
        Ok(next)
    }

    fn clamp(phases: &mut [f64], binding: Option<&InputBinding>, t: f64) -> Result<()> {
        if let Some(b) = binding {
            let p = b.phase_at(t)?;
            for &i in &b.nodes {
                phases[i] = p;
            }
        }
        Ok(())
    }

    fn step_in_place(
        &self,
        state: &mut OscillatorState,
        dt: f64,
        binding: Option<&InputBinding>,
        s: &mut Scratch,
    ) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::config(format!("step must be positive, got {dt}")));
        }
        let t = state.t;
        let n = self.n();
        let Scratch { sin, cos, stage, k } = s;
        let [k1, k2, k3, k4] = k;

        stage.copy_from_slice(&state.theta);
        Self::clamp(stage, binding, t)?;
        self.rhs_into(stage, k1, sin, cos);

        for i in 0..n {
            stage[i] = state.theta[i] + 0.5 * dt * k1[i];
        }
        Self::clamp(stage, binding, t + 0.5 * dt)?;
        self.rhs_into(stage, k2, sin, cos);

        for i in 0..n {
            stage[i] = state.theta[i] + 0.5 * dt * k2[i];
        }
        Self::clamp(stage, binding, t + 0.5 * dt)?;
        self.rhs_into(stage, k3, sin, cos);

        for i in 0..n {
            stage[i] = state.theta[i] + dt * k3[i];
        }
        Self::clamp(stage, binding, t + dt)?;
        self.rhs_into(stage, k4, sin, cos);

        let t_next = t + dt;
        for i in 0..n {
            state.theta[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Self::clamp(&mut state.theta, binding, t_next)?;
        for th in state.theta.iter_mut() {
            *th = wrap_phase(*th);
        }
        state.t = t_next;
        self.rhs_into(&state.theta, &mut state.dtheta, sin, cos);
        Ok(())
    }

    /// Integrates without input until the frequency spread drops below `tol`
    /// or `t_max` time units have elapsed. Returns the final state and whether
    /// it locked.
    pub fn relax_to_locked(&self, init_phases: &[f64], t_max: f64, tol: f64) -> Result<(OscillatorState, bool)> {
        if !(t_max > 0.0) || !(tol > 0.0) {
            return Err(Error::config("relaxation needs t_max > 0 and tol > 0"));
        }
        let mut state = self.state(0.0, init_phases)?;
        let mut scratch = Scratch::new(self.n());
        let steps = (t_max / self.dt).ceil() as usize;
        for _ in 0..steps {
            if frequency_spread(&state.dtheta) < tol {
                return Ok((state, true));
            }
            self.step_in_place(&mut state, self.dt, None, &mut scratch)?;
        }
        let locked = frequency_spread(&state.dtheta) < tol;
        Ok((state, locked))
    }

    /// Advances `state` for `duration` without recording.
    pub fn advance(&self, state: &mut OscillatorState, duration: f64, binding: Option<&InputBinding>) -> Result<()> {
        let steps = self.step_count(duration)?;
        let mut scratch = Scratch::new(self.n());
        if let Some(b) = binding {
            b.validate(self.n())?;
        }
        for _ in 0..steps {
            self.step_in_place(state, self.dt, binding, &mut scratch)?;
        }
        Ok(())
    }

    fn step_count(&self, duration: f64) -> Result<usize> {
        if !(duration >= 0.0) {
            return Err(Error::config(format!("negative duration {duration}")));
        }
        Ok((duration / self.dt - 1e-9).ceil().max(0.0) as usize)
    }

    /// Integrates for `duration`, recording every oscillator's frequency each
    /// `sample_dt`, starting with the state at `state.t`. The final state is
    /// left in `state`. An optional binding clamps its nodes throughout.
    pub fn run_driven(
        &self,
        state: &mut OscillatorState,
        binding: Option<&InputBinding>,
        duration: f64,
        sample_dt: f64,
    ) -> Result<FrequencyHistory> {
        let n = self.n();
        let t0 = state.t;
        let mut data = Vec::new();
        self.observe(state, binding, duration, sample_dt, |s| data.extend_from_slice(&s.dtheta))?;
        FrequencyHistory::new(t0, sample_dt, n, data)
    }

    /// Integrates for `duration`, calling `visit` on the state at `state.t`
    /// and after every further `sample_dt`. Nothing is visited for a zero
    /// duration. Returns the number of visits.
    pub fn observe(
        &self,
        state: &mut OscillatorState,
        binding: Option<&InputBinding>,
        duration: f64,
        sample_dt: f64,
        mut visit: impl FnMut(&OscillatorState),
    ) -> Result<usize> {
        let ratio = sample_dt / self.dt;
        if !(ratio >= 1.0 - 1e-9) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::config(format!(
                "sample interval {sample_dt} is not a multiple of the step {}",
                self.dt
            )));
        }
        let stride = ratio.round() as usize;
        let n = self.n();
        if !(duration >= 0.0) {
            return Err(Error::config(format!("negative duration {duration}")));
        }
        let samples = (duration / sample_dt + 1e-9).floor() as usize;
        if samples == 0 {
            return Ok(0);
        }
        let mut scratch = Scratch::new(n);
        if let Some(b) = binding {
            b.validate(n)?;
            Self::clamp(&mut state.theta, binding, state.t)?;
            for th in state.theta.iter_mut() {
                *th = wrap_phase(*th);
            }
            self.rhs_into(&state.theta, &mut state.dtheta, &mut scratch.sin, &mut scratch.cos);
        }
        let t0 = state.t;
        visit(state);
        for k in 1..=samples {
            for _ in 0..stride {
                self.step_in_place(state, self.dt, binding, &mut scratch)?;
            }
            // Keep the sample grid exact despite accumulated rounding.
            state.t = t0 + k as f64 * sample_dt;
            visit(state);
        }
        Ok(samples + 1)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use proptest::prelude::*;

    use super::*;
    use crate::topology::{complete_graph, erdos_renyi};

    fn pair(omega: (f64, f64), lambda: f64) -> Reservoir {
        let net = NetworkSpec::from_edges(2, &[(0, 1)]).unwrap();
        Reservoir::new(
            Arc::new(net),
            NaturalFrequencies::new(vec![omega.0, omega.1]),
            CouplingScheme::regular(lambda).unwrap(),
        )
        .unwrap()
    }

    fn full(n: usize, omega: Vec<f64>, coupling: CouplingScheme) -> Reservoir {
        Reservoir::new(Arc::new(complete_graph(n).unwrap()), NaturalFrequencies::new(omega), coupling).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let r = full(2, vec![0.0, 0.0], CouplingScheme::regular(3.0).unwrap());
        assert_eq!(r.rhs(&[0.0, 0.0]), vec![0.0, 0.0]);

        let r = full(2, vec![0.5, -0.5], CouplingScheme::regular(1.0).unwrap());
        assert_eq!(r.rhs(&[0.0, 0.0]), vec![0.5, -0.5]);

        // Single edge, k_i = 1.
        let r = pair((0.5, -0.5), 1.0);
        let d = r.rhs(&[0.0, FRAC_PI_2]);
        assert!((d[0] - 1.5).abs() < 1e-15 && (d[1] + 1.5).abs() < 1e-15);

        // With the diagonal included k_i = 2, halving the coupling term.
        let r = full(2, vec![0.5, -0.5], CouplingScheme::regular(1.0).unwrap());
        let d = r.rhs(&[0.0, FRAC_PI_2]);
        assert!((d[0] - 1.0).abs() < 1e-15 && (d[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn explosive_gains_scale_with_frequency() {
        let r = full(2, vec![2.0, -0.5], CouplingScheme::explosive(1.0).unwrap());
        let d = r.rhs(&[0.0, FRAC_PI_2]);
        assert!((d[0] - (2.0 + 2.0 / 2.0)).abs() < 1e-15);
        assert!((d[1] - (-0.5 - 0.5 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_coupling_and_mismatched_sizes() {
        assert!(CouplingScheme::regular(-1.0).is_err());
        assert!(CouplingScheme::explosive(f64::INFINITY).is_err());
        let net = Arc::new(complete_graph(3).unwrap());
        assert!(Reservoir::new(net, NaturalFrequencies::new(vec![0.0; 2]), CouplingScheme::regular(1.0).unwrap()).is_err());
    }

    #[test]
    fn symmetric_fixed_point_is_stationary() {
        let r = full(2, vec![0.0, 0.0], CouplingScheme::regular(1.0).unwrap());
        let s = r.state(0.0, &[0.3, 0.3]).unwrap();
        let s = r.step(&s, 0.37, None).unwrap();
        assert_eq!(s.theta, vec![0.3, 0.3]);
    }

    #[test]
    fn free_rotation_is_exact() {
        let net = Arc::new(NetworkSpec::from_edges(1, &[(0, 0)]).unwrap());
        let r = Reservoir::new(net, NaturalFrequencies::new(vec![1.0]), CouplingScheme::regular(0.0).unwrap()).unwrap();
        let s = r.state(0.0, &[0.0]).unwrap();
        let s = r.step(&s, 0.1, None).unwrap();
        assert!((s.theta[0] - 0.1).abs() < 1e-16);
        assert!((s.t - 0.1).abs() < 1e-16);
    }

    /// φ' = Δω − 2λ sin φ settles at sin φ* = Δω / (2λ).
    #[test]
    fn two_oscillator_lock_matches_closed_form() {
        let r = pair((0.5, -0.5), 2.0);
        let (state, locked) = r.relax_to_locked(&[0.0, 0.0], 200.0, 1e-10).unwrap();
        assert!(locked);
        let phi = wrap_phase(state.theta[0] - state.theta[1]);
        assert!((phi.sin() - 0.25).abs() < 1e-9, "sin φ = {}", phi.sin());
        assert!(phi < FRAC_PI_2);
    }

    #[test]
    fn two_oscillator_lock_threshold() {
        // Locking requires λ >= Δω / 2 = 0.5.
        assert!(!pair((0.5, -0.5), 0.4).relax_to_locked(&[0.0, 0.0], 200.0, 1e-6).unwrap().1);
        assert!(!pair((0.5, -0.5), 0.49).relax_to_locked(&[0.0, 0.0], 200.0, 1e-6).unwrap().1);
        assert!(pair((0.5, -0.5), 0.51).relax_to_locked(&[0.0, 0.0], 200.0, 1e-6).unwrap().1);
    }

    #[test]
    fn rs_complete_lock_outcomes() {
        let n = 500;
        let omega = NaturalFrequencies::standard_normal(n, 1);
        let net = Arc::new(complete_graph(n).unwrap());
        let init = random_phases(n, 2);
        let strong = Reservoir::new(net.clone(), omega.clone(), CouplingScheme::regular(5.0).unwrap()).unwrap();
        assert!(strong.relax_to_locked(&init, DEFAULT_RELAX_T_MAX, DEFAULT_LOCK_TOL).unwrap().1);
        let weak = Reservoir::new(net, omega, CouplingScheme::regular(0.5).unwrap()).unwrap();
        assert!(!weak.relax_to_locked(&init, 50.0, DEFAULT_LOCK_TOL).unwrap().1);
    }

    #[test]
    fn frequency_sum_conserved_on_complete_graph() {
        let n = 40;
        let omega = NaturalFrequencies::standard_normal(n, 5);
        let r = full(n, omega.as_slice().to_vec(), CouplingScheme::regular(2.3).unwrap());
        let d = r.rhs(&random_phases(n, 6));
        let sum: f64 = d.iter().zip(omega.as_slice()).map(|(a, w)| a - w).sum();
        assert!(sum.abs() < 1e-10, "{sum}");
    }

    #[test]
    fn weighted_frequency_sum_conserved_for_explosive_er() {
        let n = 200;
        let omega = NaturalFrequencies::standard_normal(n, 7);
        let net = Arc::new(erdos_renyi(n, 6.0, 8).unwrap());
        let r = Reservoir::new(net.clone(), omega.clone(), CouplingScheme::explosive(1.7).unwrap()).unwrap();
        let d = r.rhs(&random_phases(n, 9));
        // Σ_i (k_i / λ_i)(θ_i' − ω_i) = Σ_ij A_ij sin(θ_j − θ_i) = 0.
        let w = omega.as_slice();
        let sum: f64 = (0..n).map(|i| net.degree(i) as f64 / (1.7 * w[i].abs()) * (d[i] - w[i])).sum();
        assert!(sum.abs() < 1e-9, "{sum}");
    }

    #[test]
    fn phases_stay_reduced() {
        let n = 30;
        let r = Reservoir::new(
            Arc::new(erdos_renyi(n, 4.0, 1).unwrap()),
            NaturalFrequencies::standard_normal(n, 2),
            CouplingScheme::explosive(1.0).unwrap(),
        )
        .unwrap();
        let mut s = r.state(0.0, &random_phases(n, 3)).unwrap();
        r.advance(&mut s, 20.0, None).unwrap();
        assert!(s.theta.iter().all(|&t| (0.0..TAU).contains(&t)));
        assert!(wrap_phase(-1e-18) < TAU && wrap_phase(-1e-18) >= 0.0);
        assert_eq!(wrap_phase(TAU), 0.0);
    }

    fn unwrapped_run(r: &Reservoir, init: &[f64], t_end: f64, dt: f64) -> Vec<f64> {
        // Integrate with unreduced phases so errors can be compared directly.
        let mut theta = init.to_vec();
        let steps = (t_end / dt).round() as usize;
        for _ in 0..steps {
            let k1 = r.rhs(&theta);
            let s2: Vec<f64> = theta.iter().zip(&k1).map(|(t, k)| t + 0.5 * dt * k).collect();
            let k2 = r.rhs(&s2);
            let s3: Vec<f64> = theta.iter().zip(&k2).map(|(t, k)| t + 0.5 * dt * k).collect();
            let k3 = r.rhs(&s3);
            let s4: Vec<f64> = theta.iter().zip(&k3).map(|(t, k)| t + dt * k).collect();
            let k4 = r.rhs(&s4);
            for i in 0..theta.len() {
                theta[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        theta
    }

    fn circ_dist(a: f64, b: f64) -> f64 {
        let d = wrap_phase(a - b);
        d.min(TAU - d)
    }

    /// The production stepper agrees with an unreduced reference loop, and its
    /// global error shrinks by ~16 when the step is halved.
    #[test]
    fn rk4_fourth_order_convergence() {
        let n = 10;
        let r = full(n, NaturalFrequencies::standard_normal(n, 11).as_slice().to_vec(), CouplingScheme::regular(1.2).unwrap());
        let init = random_phases(n, 12);
        let t_end = 4.0;
        let reference = unwrapped_run(&r, &init, t_end, 0.2 / 64.0);
        let run = |dt: f64| {
            let mut s = r.state(0.0, &init).unwrap();
            let steps = (t_end / dt).round() as usize;
            for _ in 0..steps {
                s = r.step(&s, dt, None).unwrap();
            }
            s.theta
        };
        let err = |dt: f64| {
            run(dt).iter().zip(&reference).map(|(a, b)| circ_dist(*a, *b)).fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
        for (a, b) in [(e1, e2), (e2, e3)] {
            let ratio = a / b;
            assert!((4.0..=64.0).contains(&ratio), "ratio {ratio} ({a} / {b})");
        }
    }

    #[test]
    fn run_driven_zero_duration_is_empty() {
        let r = full(3, vec![0.1, 0.2, 0.3], CouplingScheme::regular(1.0).unwrap());
        let mut s = r.state(0.0, &[0.0, 1.0, 2.0]).unwrap();
        let h = r.run_driven(&mut s, None, 0.0, 0.1).unwrap();
        assert!(h.is_empty());
    }

    #[test]
    fn run_driven_rejects_misaligned_sampling() {
        let r = full(3, vec![0.1, 0.2, 0.3], CouplingScheme::regular(1.0).unwrap());
        let mut s = r.state(0.0, &[0.0, 1.0, 2.0]).unwrap();
        assert!(matches!(r.run_driven(&mut s, None, 1.0, 0.015), Err(Error::Config(_))));
        assert!(matches!(r.run_driven(&mut s, None, 1.0, 0.005), Err(Error::Config(_))));
    }

    #[test]
    fn run_driven_shape_and_grid() {
        let r = full(4, vec![0.1, 0.2, 0.3, -0.6], CouplingScheme::regular(1.0).unwrap());
        let mut s = r.state(0.0, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        let h = r.run_driven(&mut s, None, 2.0, 0.1).unwrap();
        assert_eq!(h.len(), 21);
        assert_eq!(h.oscillators(), 4);
        assert_eq!(h.index_of(1.0), Some(10));
        assert!((s.t - 2.0).abs() < 1e-12);
        assert_eq!(h.row(20), &s.dtheta[..]);
    }

    #[test]
    fn drive_out_of_range_is_an_error() {
        let r = full(3, vec![0.1, 0.2, 0.3], CouplingScheme::regular(1.0).unwrap());
        let drive = Arc::new(TimeSeries::from_fn(0.0, 0.01, 101, |t| t).unwrap());
        let b = InputBinding::new(vec![0], drive, 1.0, 0.0).unwrap();
        let mut s = r.state(0.0, &[0.0, 1.0, 2.0]).unwrap();
        assert!(r.run_driven(&mut s, Some(&b), 1.0, 0.1).is_ok());
        assert!(matches!(r.run_driven(&mut s, Some(&b), 1.0, 0.1), Err(Error::InputRange { .. })));
    }

    #[test]
    fn binding_validation() {
        let drive = Arc::new(TimeSeries::from_fn(0.0, 0.01, 10, |t| t).unwrap());
        assert!(InputBinding::new(vec![], drive.clone(), 1.0, 0.0).is_err());
        assert!(InputBinding::new(vec![1, 1], drive.clone(), 1.0, 0.0).is_err());
        let r = full(3, vec![0.0; 3], CouplingScheme::regular(1.0).unwrap());
        let b = InputBinding::new(vec![5], drive, 1.0, 0.0).unwrap();
        let s = r.state(0.0, &[0.0; 3]).unwrap();
        assert!(r.step(&s, 0.01, Some(&b)).is_err());
        let (scale, offset) = InputBinding::fit_range(-2.0, 3.0);
        assert!((scale * -2.0 + offset + FRAC_PI_2).abs() < 1e-15);
        assert!((scale * 3.0 + offset - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn clamped_node_follows_drive() {
        let n = 20;
        let r = full(n, NaturalFrequencies::standard_normal(n, 1).as_slice().to_vec(), CouplingScheme::regular(3.0).unwrap());
        let drive = Arc::new(TimeSeries::from_fn(0.0, 0.01, 1001, |t| (0.7 * t).sin()).unwrap());
        let b = InputBinding::new(vec![4], drive, 1.2, 0.5).unwrap();
        let mut s = r.state(0.0, &random_phases(n, 2)).unwrap();
        r.run_driven(&mut s, Some(&b), 5.0, 0.1).unwrap();
        assert!((s.theta[4] - wrap_phase(1.2 * (0.7 * 5.0f64).sin() + 0.5)).abs() < 1e-12);
    }

    /// A constant drive on a locked network re-locks: late frequency samples
    /// stop changing.
    #[test]
    fn constant_drive_relocks() {
        let n = 50;
        let omega = NaturalFrequencies::standard_normal(n, 3);
        let mut centered = omega.as_slice().to_vec();
        let mean = centered.iter().sum::<f64>() / n as f64;
        centered.iter_mut().for_each(|w| *w -= mean);
        let r = full(n, centered, CouplingScheme::regular(6.0).unwrap());
        let (mut s, locked) = r.relax_to_locked(&random_phases(n, 4), 200.0, 1e-8).unwrap();
        assert!(locked);
        s.t = 0.0;
        let drive = Arc::new(TimeSeries::from_fn(0.0, 0.01, 40_001, |_| 0.8).unwrap());
        let b = InputBinding::new(vec![0], drive, 1.0, 0.0).unwrap();
        let h = r.run_driven(&mut s, Some(&b), 400.0, 0.1).unwrap();
        let last = h.row(h.len() - 1);
        let prev = h.row(h.len() - 11);
        let change = last.iter().zip(prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change < 1e-8, "{change}");
    }

    /// Sampling at dt and at dt/2 agree to within the RK4 error budget.
    #[test]
    fn history_refinement_agrees() {
        let n = 12;
        let omega = NaturalFrequencies::standard_normal(n, 21);
        let net = Arc::new(erdos_renyi(n, 4.0, 22).unwrap());
        let coarse = Reservoir::new(net.clone(), omega.clone(), CouplingScheme::explosive(1.5).unwrap()).unwrap();
        let fine = coarse.clone().with_dt(0.005).unwrap();
        let coarser = coarse.clone().with_dt(0.02).unwrap();
        let drive = Arc::new(TimeSeries::from_fn(0.0, 0.0025, 4001, |t| (1.3 * t).sin()).unwrap());
        let b = InputBinding::new(vec![0], drive, 1.0, 0.0).unwrap();
        let init = random_phases(n, 23);
        let hist = |r: &Reservoir| {
            let mut s = r.state(0.0, &init).unwrap();
            r.run_driven(&mut s, Some(&b), 10.0, 0.1).unwrap()
        };
        let (h1, h2, h4) = (hist(&fine), hist(&coarse), hist(&coarser));
        let diff = |a: &FrequencyHistory, b: &FrequencyHistory| {
            a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let e_coarse = diff(&h2, &h1);
        let e_coarser = diff(&h4, &h1);
        assert!(e_coarse < 1e-6, "{e_coarse}");
        // Linear interpolation of the drive at half steps limits the order
        // once the drive is involved; require at least second-order gain.
        assert!(e_coarser / e_coarse > 4.0, "{e_coarser} / {e_coarse}");
    }

    #[test]
    fn median_abs_index_is_deterministic() {
        let w = NaturalFrequencies::new(vec![0.1, -3.0, 0.5, -0.2, 2.0]);
        // |ω| sorted: 0.1, 0.2, 0.5, 2.0, 3.0 -> median 0.5 at index 2.
        assert_eq!(w.median_abs_index(), 2);
        let w = NaturalFrequencies::standard_normal(500, 9);
        assert_eq!(w.median_abs_index(), NaturalFrequencies::standard_normal(500, 9).median_abs_index());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rhs_rotation_equivariant(seed in 0u64..10_000, shift in -10.0f64..10.0, dense in any::<bool>()) {
            let n = 25;
            let omega = NaturalFrequencies::standard_normal(n, seed);
            let net = if dense { complete_graph(n).unwrap() } else { erdos_renyi(n, 5.0, seed).unwrap() };
            let r = Reservoir::new(Arc::new(net), omega, CouplingScheme::explosive(2.0).unwrap()).unwrap();
            let theta = random_phases(n, seed + 1);
            let shifted: Vec<f64> = theta.iter().map(|t| t + shift).collect();
            let a = r.rhs(&theta);
            let b = r.rhs(&shifted);
            let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(diff < 1e-12, "{}", diff);
        }

        #[test]
        fn step_keeps_phases_in_range(seed in 0u64..10_000, dt in 0.001f64..0.2) {
            let n = 15;
            let r = full(n, NaturalFrequencies::standard_normal(n, seed).as_slice().to_vec(), CouplingScheme::regular(1.0).unwrap());
            let s = r.state(0.0, &random_phases(n, seed)).unwrap();
            let s = r.step(&s, dt, None).unwrap();
            prop_assert!(s.theta.iter().all(|&t| (0.0..TAU).contains(&t)));
        }
    }

    #[test]
    fn fast_sin_cos_matches_libm() {
        let mut worst = 0.0f64;
        for k in 0..400_000 {
            let x = -100.0 + k as f64 * 5e-4 + 1e-7;
            let (s, c) = fast_sin_cos(x);
            let (s0, c0) = x.sin_cos();
            worst = worst.max((s - s0).abs()).max((c - c0).abs());
        }
        for x in [0.0, FRAC_PI_2, PI, -PI, TAU, 1e5 + 0.3] {
            let (s, c) = fast_sin_cos(x);
            worst = worst.max((s - x.sin()).abs()).max((c - x.cos()).abs());
        }
        assert!(worst < 1e-15, "{worst:e}");
    }

    #[test]
    fn pi_phase_reduction() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(-FRAC_PI_2) - 1.5 * PI).abs() < 1e-15);
    }
}
