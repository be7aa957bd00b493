//! Experiment configuration. TOML (`key = value` with sections) is the
//! primary format; a `.json` extension selects JSON. Every field has a
//! default, so an empty file is a valid config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use saddlemix_core::{log_spaced_checkpoints, Error as CoreError, ScheduleKind, SimulationSpec, StepSchedule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub checkpoints: CheckpointGrid,
    pub problem: ProblemConfig,
    pub chains: ChainsConfig,
    /// `"iid"` or a key of `chains.targets`.
    pub regimes: Vec<String>,
    pub schedules: Vec<ScheduleConfig>,
    pub replay: Vec<bool>,
    /// Replay pool size before the first emission, as a multiple of the horizon.
    pub replay_prefill: f64,
    pub replay_capacity: Option<usize>,
    /// Mixing levels reported in diagnostics.
    pub etas: Vec<f64>,
    pub delta: f64,
    /// Output directory; excluded from the config hash.
    pub out: String,
    pub gtd: GtdConfig,
    pub bounds: BoundsConfig,
    pub chain: ChainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            horizon: 200_000,
            seeds: (0..20).collect(),
            checkpoints: CheckpointGrid::default(),
            problem: ProblemConfig::default(),
            chains: ChainsConfig::default(),
            regimes: vec!["iid".into(), "fast".into(), "slow".into()],
            schedules: vec![
                ScheduleConfig { kind: "constant".into(), c: 0.001 },
                ScheduleConfig { kind: "inv_sqrt".into(), c: 0.015 },
                ScheduleConfig { kind: "inv".into(), c: 0.03 },
            ],
            replay: vec![false, true],
            replay_prefill: 10.0,
            replay_capacity: None,
            etas: vec![0.1, 0.05, 0.01],
            delta: 0.05,
            out: "out".into(),
            gtd: GtdConfig::default(),
            bounds: BoundsConfig::default(),
            chain: ChainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckpointGrid {
    pub count: usize,
    pub first: usize,
    /// Overrides the log grid when non-empty.
    pub explicit: Vec<usize>,
}

impl Default for CheckpointGrid {
    fn default() -> Self {
        Self { count: 30, first: 10, explicit: Vec::new() }
    }
}

impl CheckpointGrid {
    pub fn resolve(&self, horizon: usize) -> CliResult<Vec<usize>> {
        if self.explicit.is_empty() {
            return Ok(log_spaced_checkpoints(self.first.min(horizon), horizon, self.count));
        }
        if self.explicit.windows(2).any(|w| w[0] >= w[1]) || self.explicit[0] == 0 {
            return Err(CliError::Config("explicit checkpoints must be positive and strictly increasing".into()));
        }
        if *self.explicit.last().unwrap() > horizon {
            return Err(CliError::Config(format!("checkpoint {} exceeds horizon {horizon}", self.explicit.last().unwrap())));
        }
        Ok(self.explicit.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    pub states: usize,
    pub seed: u64,
    pub radius: f64,
    pub perturbation: f64,
    pub modes: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let s = SimulationSpec::default();
        Self { dim: s.dim, states: s.states, seed: s.seed, radius: s.radius, perturbation: s.perturbation, modes: s.modes }
    }
}

impl ProblemConfig {
    pub fn spec(&self) -> SimulationSpec {
        SimulationSpec {
            dim: self.dim,
            states: self.states,
            seed: self.seed,
            radius: self.radius,
            perturbation: self.perturbation,
            modes: self.modes,
        }
    }
}

/// Stationary distribution: `"uniform"` or explicit nonnegative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PiSpec {
    Named(String),
    Weights(Vec<f64>),
}

impl Default for PiSpec {
    fn default() -> Self {
        PiSpec::Named("uniform".into())
    }
}

impl PiSpec {
    pub fn resolve(&self, states: usize) -> CliResult<DVector<f64>> {
        match self {
            PiSpec::Named(name) if name == "uniform" => {
                if states == 0 {
                    return Err(CliError::Config("state count must be positive".into()));
                }
                Ok(DVector::from_element(states, 1.0 / states as f64))
            }
            PiSpec::Named(name) => Err(CliError::Config(format!("unknown stationary distribution {name:?}"))),
            PiSpec::Weights(w) => {
                if w.len() != states {
                    return Err(CliError::Config(format!("stationary weights have {} entries, expected {states}", w.len())));
                }
                if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                    return Err(CoreError::InvalidDistribution { index, value }.into());
                }
                let total: f64 = w.iter().sum();
                Ok(DVector::from_iterator(states, w.iter().map(|v| v / total)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainsConfig {
    pub stationary: PiSpec,
    /// Regime name to second-eigenvalue target.
    pub targets: BTreeMap<String, f64>,
    pub tolerance: f64,
}

impl Default for ChainsConfig {
    fn default() -> Self {
        Self {
            stationary: PiSpec::default(),
            targets: BTreeMap::from([("fast".to_string(), 0.31), ("slow".to_string(), 0.634)]),
            tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: String,
    pub c: f64,
}

impl ScheduleConfig {
    pub fn build(&self) -> CliResult<StepSchedule> {
        let kind = ScheduleKind::parse(&self.kind)
            .ok_or_else(|| CliError::Config(format!("unknown schedule kind {:?}", self.kind)))?;
        Ok(StepSchedule::new(kind, self.c)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GtdConfig {
    /// `walk5`, `swap2`, `random`, or a path to an MDP text file.
    pub mdp: String,
    pub gamma: f64,
    pub states: usize,
    pub actions: usize,
    pub mdp_seed: u64,
    /// `tabular` or `random`.
    pub features: String,
    pub feature_dim: usize,
    pub feature_seed: u64,
    /// Mixes the target policy toward the last action with this weight.
    pub target_bias: f64,
    pub modes: Vec<String>,
    pub policies: Vec<String>,
    pub sampling: Vec<String>,
    pub radius: f64,
    pub schedule: ScheduleConfig,
}

impl Default for GtdConfig {
    fn default() -> Self {
        Self {
            mdp: "walk5".into(),
            gamma: 0.5,
            states: 5,
            actions: 2,
            mdp_seed: 7,
            features: "tabular".into(),
            feature_dim: 3,
            feature_seed: 11,
            target_bias: 0.25,
            modes: vec!["gtd".into(), "gtd2".into()],
            policies: vec!["on".into(), "off".into()],
            sampling: vec!["iid".into(), "markov".into()],
            radius: 10.0,
            schedule: ScheduleConfig { kind: "constant".into(), c: 0.2 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    /// `simulation`, `gtd` or `manual`.
    pub source: String,
    pub horizons: Vec<usize>,
    pub diameter: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    /// Manual source: `curve[Δ] = max_s ‖P^Δ(s,·) − π‖₁`; empty means i.i.d.
    pub curve: Vec<f64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            source: "simulation".into(),
            horizons: (2..=7).map(|k| 10usize.pow(k)).collect(),
            diameter: None,
            l1: None,
            l2: None,
            curve: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub states: usize,
    pub target: f64,
    pub tolerance: f64,
    pub stationary: PiSpec,
    pub file: String,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { states: 1001, target: 0.634, tolerance: 0.02, stationary: PiSpec::default(), file: "chain.txt".into() }
    }
}

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub smoke: bool,
}

pub const SMOKE_HORIZON: usize = 1_000;
pub const SMOKE_SEEDS: usize = 2;

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.smoke {
            self.horizon = SMOKE_HORIZON;
            self.seeds.truncate(SMOKE_SEEDS);
            self.bounds.horizons.retain(|&t| t <= SMOKE_HORIZON);
            if self.bounds.horizons.is_empty() {
                self.bounds.horizons.push(SMOKE_HORIZON);
            }
        }
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(out) = &o.out {
            self.out = out.display().to_string();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.regimes.is_empty() {
            return bad("at least one regime is required".into());
        }
        for r in &self.regimes {
            if r != "iid" && !self.chains.targets.contains_key(r) {
                return bad(format!("regime {r:?} has no chain target"));
            }
        }
        if self.schedules.is_empty() {
            return bad("at least one schedule is required".into());
        }
        for s in &self.schedules {
            s.build()?;
        }
        if self.replay.is_empty() {
            return bad("replay must list at least one flag".into());
        }
        if !(self.replay_prefill >= 0.0 && self.replay_prefill.is_finite()) {
            return bad(format!("replay_prefill must be nonnegative, got {}", self.replay_prefill));
        }
        if self.replay_capacity == Some(0) {
            return bad("replay_capacity must be positive".into());
        }
        if let Some(&e) = self.etas.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return bad(format!("mixing levels must be positive, got {e}"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.chains.tolerance > 0.0) || !(self.chain.tolerance > 0.0) {
            return bad("chain tolerance must be positive".into());
        }
        self.checkpoints.resolve(self.horizon)?;
        self.gtd.schedule.build()?;
        Ok(())
    }

    /// Replay pool size before the first emission.
    pub fn replay_warmup(&self) -> usize {
        ((self.replay_prefill * self.horizon as f64).ceil() as usize).max(1)
    }

    /// SHA-256 of the canonical JSON form, with the output directory blanked.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out.clear();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out)
    }

    pub fn schedule_list(&self) -> CliResult<Vec<StepSchedule>> {
        self.schedules.iter().map(ScheduleConfig::build).collect()
    }
}

/// Loads (or defaults), applies overrides and validates.
pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> CliResult<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    config.apply(overrides);
    config.validate()?;
    Ok(config)
}
