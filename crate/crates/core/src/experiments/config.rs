//! Sectioned key-value experiment configuration (TOML syntax).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    CouplingScheme, CouplingVariant, NaturalFrequencies, DEFAULT_LOCK_TOL, DEFAULT_RELAX_T_MAX,
};
use crate::error::{Error, Result};
use crate::order::{lambda_grid, SweepProtocol, VarianceConfig, DEFAULT_VARIANCE_C};
use crate::pipeline::{ExperimentSpec, Split, SAMPLE_DT};
use crate::readout::{ReadoutConfig, DEFAULT_RIDGE, DEFAULT_TAPS, DEFAULT_TAP_SPACING};
use crate::signals::{TaskKind, TaskSpec, DEFAULT_FILTER_COEFFS};
use crate::topology::{complete_graph, erdos_renyi, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Rs,
    Es,
}

impl Model {
    pub fn variant(self) -> CouplingVariant {
        match self {
            Model::Rs => CouplingVariant::Regular,
            Model::Es => CouplingVariant::Explosive,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Rs => "rs",
            Model::Es => "es",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rs" | "regular" => Ok(Model::Rs),
            "es" | "explosive" => Ok(Model::Es),
            other => Err(Error::config(format!("unknown model `{other}`"))),
        }
    }

    /// Topology each model is defined on.
    pub fn natural_topology(self) -> Topology {
        match self {
            Model::Rs => Topology::Complete,
            Model::Es => Topology::Er,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Complete,
    Er,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Full,
}

impl Scale {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(Error::config(format!("unknown scale `{other}` (desk|full)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub id: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            id: "run".into(),
            seeds: vec![1, 2, 3],
            output_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub model: Model,
    pub n: usize,
    pub topology: Topology,
    /// Target mean degree of Erdős-Rényi graphs.
    pub mean_degree: f64,
    /// Permit a topology other than the model's own.
    pub allow_topology_mismatch: bool,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            model: Model::Rs,
            n: 200,
            topology: Topology::Complete,
            mean_degree: 6.0,
            allow_topology_mismatch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub relax_t_max: f64,
    pub lock_tol: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            relax_t_max: DEFAULT_RELAX_T_MAX,
            lock_tol: DEFAULT_LOCK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambda_start: f64,
    pub lambda_stop: f64,
    pub lambda_step: f64,
    pub transient: f64,
    pub measure: f64,
    pub variance_c: f64,
    pub variance_window: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            lambda_start: 0.0,
            lambda_stop: 5.0,
            lambda_step: 0.1,
            transient: 50.0,
            measure: 50.0,
            variance_c: DEFAULT_VARIANCE_C,
            variance_window: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub kinds: Vec<TaskKind>,
    /// Filter lengths, prediction horizons or mode counts.
    pub lengths: Vec<usize>,
    pub coeffs: [f64; 3],
}

impl Default for TaskSection {
    fn default() -> Self {
        let (a, b, c) = DEFAULT_FILTER_COEFFS;
        TaskSection {
            kinds: vec![TaskKind::Filter],
            lengths: vec![5],
            coeffs: [a, b, c],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSection {
    pub taps: usize,
    pub delta_t: f64,
    pub include_input_nodes: bool,
    pub ridge: f64,
    pub train_end: usize,
    pub test_end: usize,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        ReadoutSection {
            taps: DEFAULT_TAPS,
            delta_t: DEFAULT_TAP_SPACING,
            include_input_nodes: false,
            ridge: DEFAULT_RIDGE,
            train_end: Split::DESK.train_end,
            test_end: Split::DESK.test_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub network: NetworkSection,
    pub dynamics: DynamicsSection,
    pub sweep: SweepSection,
    pub task: TaskSection,
    pub readout: ReadoutSection,
}

fn line_of(text: &str, err: &toml::de::Error) -> usize {
    err.span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0)
}

impl ExperimentConfig {
    /// Defaults for `model` at the given scale.
    pub fn preset(model: Model, scale: Scale) -> Self {
        let mut cfg = ExperimentConfig::default();
        cfg.network.model = model;
        cfg.network.topology = model.natural_topology();
        cfg.task.kinds = vec![TaskKind::Filter, TaskKind::Predict];
        match scale {
            Scale::Desk => {}
            Scale::Full => {
                cfg.network.n = 500;
                cfg.run.seeds = (1..=10).collect();
                cfg.readout.train_end = Split::FULL.train_end;
                cfg.readout.test_end = Split::FULL.test_end;
            }
        }
        cfg.run.id = format!("{}-{}", model.name(), scale.name());
        cfg
    }

    /// Checks every section; returns warnings for tolerated oddities.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let net = &self.network;
        if net.n < 2 {
            return Err(Error::config("network needs n >= 2"));
        }
        if net.topology == Topology::Er && !(net.mean_degree >= 1.0 && net.mean_degree < net.n as f64) {
            return Err(Error::config(format!(
                "mean degree {} outside [1, n)",
                net.mean_degree
            )));
        }
        if net.topology != net.model.natural_topology() {
            if !net.allow_topology_mismatch {
                return Err(Error::config(format!(
                    "model {} runs on a {:?} graph; set allow_topology_mismatch to override",
                    net.model.name(),
                    net.model.natural_topology()
                )));
            }
            warnings.push(format!(
                "model {} on a {:?} graph instead of {:?}",
                net.model.name(),
                net.topology,
                net.model.natural_topology()
            ));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.run.id.is_empty() || self.run.id.contains(['/', '\\']) {
            return Err(Error::config(format!("bad run id `{}`", self.run.id)));
        }
        if !(self.dynamics.relax_t_max > 0.0) || !(self.dynamics.lock_tol > 0.0) {
            return Err(Error::config("relax_t_max and lock_tol must be positive"));
        }
        self.lambda_grid()?;
        self.sweep_protocol().variance.validate()?;
        if !(self.sweep.transient >= 0.0) || !(self.sweep.measure >= self.sweep.variance_window) {
            return Err(Error::config("sweep needs transient >= 0 and measure >= variance_window"));
        }
        if self.task.kinds.is_empty() || self.task.lengths.is_empty() {
            return Err(Error::config("task kinds and lengths must be non-empty"));
        }
        for t in self.tasks(0)? {
            t.validate()?;
        }
        self.readout_config().validate(SAMPLE_DT)?;
        self.split().validate()?;
        if !(self.readout.ridge >= 0.0) {
            return Err(Error::config("ridge must be >= 0"));
        }
        Ok(warnings)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::parse(line_of(text, &e), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully resolved text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.run.output_dir.join(&self.run.id)
    }

    pub fn lambda_grid(&self) -> Result<Vec<f64>> {
        lambda_grid(self.sweep.lambda_start, self.sweep.lambda_stop, self.sweep.lambda_step)
    }

    pub fn sweep_protocol(&self) -> SweepProtocol {
        SweepProtocol {
            transient: self.sweep.transient,
            measure: self.sweep.measure,
            variance: VarianceConfig {
                c: self.sweep.variance_c,
                window: self.sweep.variance_window,
                sample_dt: SAMPLE_DT,
            },
        }
    }

    pub fn network(&self, seed: u64) -> Result<NetworkSpec> {
        match self.network.topology {
            Topology::Complete => complete_graph(self.network.n),
            Topology::Er => erdos_renyi(self.network.n, self.network.mean_degree, seed),
        }
    }

    pub fn frequencies(&self, seed: u64) -> NaturalFrequencies {
        NaturalFrequencies::standard_normal(self.network.n, seed)
    }

    pub fn coupling(&self, lambda: f64) -> Result<CouplingScheme> {
        CouplingScheme::new(self.network.model.variant(), lambda)
    }

    pub fn readout_config(&self) -> ReadoutConfig {
        ReadoutConfig {
            taps: self.readout.taps,
            delta_t: self.readout.delta_t,
            include_input_nodes: self.readout.include_input_nodes,
        }
    }

    pub fn split(&self) -> Split {
        Split {
            train_end: self.readout.train_end,
            test_end: self.readout.test_end,
        }
    }

    /// Every (kind, length) task; the input realization follows `seed`.
    pub fn tasks(&self, seed: u64) -> Result<Vec<TaskSpec>> {
        let [a, b, c] = self.task.coeffs;
        let mut out = Vec::new();
        for &kind in &self.task.kinds {
            for &m in &self.task.lengths {
                let mut t = TaskSpec::new(kind, m, seed)?;
                t.coeffs = (a, b, c);
                t.validate()?;
                out.push(t);
            }
        }
        Ok(out)
    }

    pub fn experiment(&self, net: Arc<NetworkSpec>, seed: u64, lambda: f64) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::new(net, self.frequencies(seed), self.coupling(lambda)?, seed);
        spec.readout = self.readout_config();
        spec.split = self.split();
        spec.ridge = self.readout.ridge;
        spec.relax_t_max = self.dynamics.relax_t_max;
        spec.lock_tol = self.dynamics.lock_tol;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for model in [Model::Rs, Model::Es] {
            for scale in [Scale::Desk, Scale::Full] {
                let cfg = ExperimentConfig::preset(model, scale);
                cfg.validate().unwrap();
                let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
                assert_eq!(back, cfg);
            }
        }
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg = ExperimentConfig::parse("[network]\nmodel = \"es\"\ntopology = \"er\"\nn = 50\n").unwrap();
        assert_eq!(cfg.network.n, 50);
        assert_eq!(cfg.readout.taps, 10);
        assert_eq!(cfg.lambda_grid().unwrap().len(), 51);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let err = ExperimentConfig::parse("[network]\nn = 50\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(ExperimentConfig::parse("[network\n").is_err());
        assert!(ExperimentConfig::parse("[readout]\ntrain_end = 10\ntest_end = 5\n").is_err());
        assert!(ExperimentConfig::parse("[task]\nkinds = [\"sing\"]\n").is_err());
    }

    #[test]
    fn topology_must_match_model_unless_overridden() {
        let mut cfg = ExperimentConfig::preset(Model::Rs, Scale::Desk);
        cfg.network.topology = Topology::Er;
        assert!(cfg.validate().is_err());
        cfg.network.allow_topology_mismatch = true;
        assert_eq!(cfg.validate().unwrap().len(), 1);
    }

    #[test]
    fn tasks_cover_kinds_and_lengths() {
        let mut cfg = ExperimentConfig::preset(Model::Es, Scale::Desk);
        cfg.task.lengths = vec![5, 10];
        let tasks = cfg.tasks(4).unwrap();
        assert_eq!(tasks.len(), 4);
        assert!(tasks.iter().all(|t| t.seed == 4));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("resolved.cfg");
        let mut cfg = ExperimentConfig::preset(Model::Es, Scale::Full);
        cfg.readout.ridge = 0.0;
        cfg.save(&path).unwrap();
        assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
    }
}
