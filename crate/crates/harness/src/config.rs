//! TOML experiment configurations.
//!
//! A config names one experiment kind, an environment, the seeds to run and
//! the kind-specific knobs. Missing knobs fall back to the defaults below.

use perq_core::agents::{DecayUnit, EpsilonSchedule, Hyperparams, QInit};
use perq_core::analysis::KemenyNormalization;
use perq_core::environments::{EnvOptions, EnvironmentName, MountainCarParams};
use perq_core::replay::ReplayConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Train,
    Sync,
    Kemeny,
    Heatmap,
    ReplayTrain,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Train => "train",
            ExperimentKind::Sync => "sync",
            ExperimentKind::Kemeny => "kemeny",
            ExperimentKind::Heatmap => "heatmap",
            ExperimentKind::ReplayTrain => "replay-train",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Perq,
    Qlearning,
    Msa,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Perq => "perq",
            Algorithm::Qlearning => "qlearning",
            Algorithm::Msa => "msa",
        }
    }
}

/// `seeds = 50` runs seeds `0..50`; `seeds = [3, 7]` runs exactly those.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

/// Command-line seed syntax: `N` (seeds `0..N`), `a..b`, or `a,b,c`.
impl FromStr for Seeds {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Invalid(format!("cannot read seeds from {s:?}"));
        let s = s.trim();
        if let Some((a, b)) = s.split_once("..") {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            return Ok(Seeds::List((a..b).collect()));
        }
        if s.contains(',') {
            let list = s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
            return Ok(Seeds::List(list));
        }
        Ok(Seeds::Count(s.parse().map_err(|_| bad())?))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub gamma: Option<f64>,
    pub p_frozen: Option<f64>,
    pub position_bins: Option<usize>,
    pub velocity_bins: Option<usize>,
    pub max_episode_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "lowercase", deny_unknown_fields)]
pub enum EpsilonConfig {
    Exponential { base: f64 },
    Linear { start: f64, end: f64, fraction: f64 },
    Constant { value: f64 },
}

impl From<EpsilonConfig> for EpsilonSchedule {
    fn from(e: EpsilonConfig) -> Self {
        match e {
            EpsilonConfig::Exponential { base } => EpsilonSchedule::Exponential { base },
            EpsilonConfig::Linear { start, end, fraction } => EpsilonSchedule::Linear { start, end, fraction },
            EpsilonConfig::Constant { value } => EpsilonSchedule::Constant(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayConfig {
    Episode,
    Step,
}

/// `"normal"`, `"zeros"`, or a number for a constant table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitConfig {
    Named(InitName),
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitName {
    Normal,
    Zeros,
}

impl From<InitConfig> for QInit {
    fn from(i: InitConfig) -> Self {
        match i {
            InitConfig::Named(InitName::Normal) => QInit::StandardNormal,
            InitConfig::Named(InitName::Zeros) => QInit::Zeros,
            InitConfig::Constant(c) => QInit::Constant(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub alpha: f64,
    pub k_max: usize,
    pub episodes: usize,
    pub step_cap: usize,
    pub epsilon: EpsilonConfig,
    pub decay: DecayConfig,
    pub q_init: InitConfig,
    /// Episodes averaged for the final-return statistic.
    pub tail: usize,
    /// Greedy rollouts per seed after training.
    pub eval_episodes: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            k_max: 8,
            episodes: 600,
            step_cap: 100,
            epsilon: EpsilonConfig::Exponential { base: 0.99 },
            decay: DecayConfig::Episode,
            q_init: InitConfig::Named(InitName::Normal),
            tail: 50,
            eval_episodes: 10,
        }
    }
}

impl AgentSection {
    pub fn hyperparams(&self, gamma: f64, k_max: usize) -> Hyperparams {
        Hyperparams {
            alpha: self.alpha,
            gamma,
            epsilon: self.epsilon.into(),
            decay_unit: match self.decay {
                DecayConfig::Episode => DecayUnit::Episode,
                DecayConfig::Step => DecayUnit::Step,
            },
            k_max,
            episodes: self.episodes,
            step_cap: self.step_cap,
            q_init: self.q_init.into(),
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncModeConfig {
    Perq,
    Vanilla,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncSection {
    pub alpha: f64,
    pub iterations: usize,
    pub k_max: usize,
    pub modes: Vec<SyncModeConfig>,
    /// Value-iteration tolerance for the reference tables.
    pub reference_tol: f64,
}

impl Default for SyncSection {
    fn default() -> Self {
        Self { alpha: 0.1, iterations: 200, k_max: 6, modes: vec![SyncModeConfig::Perq, SyncModeConfig::Vanilla], reference_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationConfig {
    RatioToFirst,
    MinMax,
}

impl From<NormalizationConfig> for KemenyNormalization {
    fn from(n: NormalizationConfig) -> Self {
        match n {
            NormalizationConfig::RatioToFirst => KemenyNormalization::RatioToFirst,
            NormalizationConfig::MinMax => KemenyNormalization::MinMax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KemenySection {
    pub horizon: usize,
    pub k_values: Vec<usize>,
    pub normalization: NormalizationConfig,
}

impl Default for KemenySection {
    fn default() -> Self {
        Self { horizon: 30, k_values: (1..=10).collect(), normalization: NormalizationConfig::RatioToFirst }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingConfig {
    /// Persistence uniform in `1..=K` at every decision.
    Uniform,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapSection {
    pub episodes: usize,
    pub k_values: Vec<usize>,
    pub sampling: SamplingConfig,
}

impl Default for HeatmapSection {
    fn default() -> Self {
        Self { episodes: 10_000, k_values: vec![1, 4, 8, 16], sampling: SamplingConfig::Uniform }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayVariant {
    pub k_max: usize,
    #[serde(default = "yes")]
    pub tails: bool,
}

fn yes() -> bool {
    true
}

impl ReplayVariant {
    pub fn label(&self) -> String {
        if self.tails {
            format!("k{}", self.k_max)
        } else {
            format!("k{}_no_tails", self.k_max)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySection {
    pub budget_steps: usize,
    pub capacity: usize,
    pub batch_per_buffer: usize,
    pub target_sync_period: usize,
    pub learning_starts: usize,
    pub train_frequency: usize,
    pub eval_episodes: usize,
    pub variants: Vec<ReplayVariant>,
}

impl Default for ReplaySection {
    fn default() -> Self {
        let base = ReplayConfig::default();
        Self {
            budget_steps: base.budget_steps,
            capacity: base.capacity,
            batch_per_buffer: base.batch_per_buffer,
            target_sync_period: base.target_sync_period,
            learning_starts: base.learning_starts,
            train_frequency: base.train_frequency,
            eval_episodes: 100,
            variants: vec![
                ReplayVariant { k_max: 1, tails: true },
                ReplayVariant { k_max: 16, tails: true },
                ReplayVariant { k_max: 16, tails: false },
            ],
        }
    }
}

impl ReplaySection {
    pub fn replay_config(&self, tails: bool) -> ReplayConfig {
        ReplayConfig {
            capacity: self.capacity,
            batch_per_buffer: self.batch_per_buffer,
            target_sync_period: self.target_sync_period,
            learning_starts: self.learning_starts,
            train_frequency: self.train_frequency,
            budget_steps: self.budget_steps,
            store_tails: tails,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    pub environment: String,
    pub seeds: Seeds,
    /// Output root; the run goes to `<root>/<name>`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub sync: SyncSection,
    #[serde(default)]
    pub kemeny: KemenySection,
    #[serde(default)]
    pub heatmap: HeatmapSection,
    #[serde(default)]
    pub replay: ReplaySection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return invalid(format!("name {:?} is not a plain directory name", self.name));
        }
        let env = self.environment_name()?;
        if self.seeds.to_vec().is_empty() {
            return invalid("seed list is empty".into());
        }
        match self.kind {
            ExperimentKind::Train => {
                if self.algorithms.is_empty() {
                    return invalid("train needs at least one algorithm".into());
                }
                if self.agent.episodes == 0 {
                    return invalid("train needs at least one episode".into());
                }
            }
            ExperimentKind::Sync => {
                if env == EnvironmentName::MountainCar {
                    return invalid("sync runs on gridworlds".into());
                }
                if self.sync.modes.is_empty() || self.sync.k_max == 0 {
                    return invalid("sync needs modes and k_max >= 1".into());
                }
            }
            ExperimentKind::Kemeny => {
                if self.kemeny.k_values.is_empty() || self.kemeny.k_values.contains(&0) || self.kemeny.horizon == 0 {
                    return invalid("kemeny needs positive k_values and horizon".into());
                }
            }
            ExperimentKind::Heatmap => {
                if env != EnvironmentName::MountainCar {
                    return invalid("heatmap runs on mountaincar".into());
                }
                if self.heatmap.k_values.is_empty() || self.heatmap.k_values.contains(&0) {
                    return invalid("heatmap needs positive k_values".into());
                }
            }
            ExperimentKind::ReplayTrain => {
                if self.replay.variants.is_empty() || self.replay.variants.iter().any(|v| v.k_max == 0) {
                    return invalid("replay-train needs variants with k_max >= 1".into());
                }
            }
        }
        Ok(())
    }

    pub fn environment_name(&self) -> Result<EnvironmentName, ConfigError> {
        self.environment.parse().map_err(|_| ConfigError::Invalid(format!("unknown environment {:?}", self.environment)))
    }

    pub fn env_options(&self) -> EnvOptions {
        let mut opts = EnvOptions { gamma: self.env.gamma, ..EnvOptions::default() };
        if let Some(p) = self.env.p_frozen {
            opts.p_frozen = p;
        }
        opts.mountain_car = self.mountain_car_params();
        opts
    }

    pub fn mountain_car_params(&self) -> MountainCarParams {
        let mut p = MountainCarParams::default();
        if let Some(g) = self.env.gamma {
            p.gamma = g;
        }
        if let Some(b) = self.env.position_bins {
            p.position_bins = b;
        }
        if let Some(b) = self.env.velocity_bins {
            p.velocity_bins = b;
        }
        if let Some(n) = self.env.max_episode_steps {
            p.max_episode_steps = n;
        }
        p
    }

    /// Canonical JSON of the parsed config; the seed list is expanded and the
    /// output root dropped, so formatting and placement do not matter.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.seeds = Seeds::List(self.seeds.to_vec());
        c.output = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
kind = "train"
environment = "bridge"
seeds = 2
algorithms = ["perq"]
"#;

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.seeds.to_vec(), vec![0, 1]);
        assert_eq!(cfg.agent, AgentSection::default());
        assert_eq!(cfg.replay.target_sync_period, 1_000);
    }

    #[test]
    fn hash_ignores_formatting_and_seed_spelling() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let b = ExperimentConfig::from_toml(
            "algorithms = [ 'perq' ]\nseeds = [0, 1]\nenvironment = 'bridge'\n# comment\nkind = 'train'\nname = 'tiny'\noutput = '/elsewhere'\n",
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml(&MINIMAL.replace("seeds = 2", "seeds = 3")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_unknown_names() {
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("bridge", "moon")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("\"perq\"", "\"sarsa\"")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("seeds = 2", "seeds = []")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1")).is_err());
    }

    #[test]
    fn seed_syntax() {
        assert_eq!("3".parse::<Seeds>().unwrap().to_vec(), vec![0, 1, 2]);
        assert_eq!("5..8".parse::<Seeds>().unwrap().to_vec(), vec![5, 6, 7]);
        assert_eq!("4, 9".parse::<Seeds>().unwrap().to_vec(), vec![4, 9]);
        assert!("x".parse::<Seeds>().is_err());
    }

    #[test]
    fn init_and_epsilon_forms() {
        let cfg = ExperimentConfig::from_toml(&format!(
            "{MINIMAL}\n[agent]\nq_init = -100.0\nepsilon = {{ schedule = \"linear\", start = 1.0, end = 0.01, fraction = 0.15 }}\ndecay = \"step\"\n"
        ))
        .unwrap();
        let h = cfg.agent.hyperparams(0.99, 4);
        assert_eq!(h.q_init, QInit::Constant(-100.0));
        assert_eq!(h.epsilon, EpsilonSchedule::Linear { start: 1.0, end: 0.01, fraction: 0.15 });
        assert_eq!(h.decay_unit, DecayUnit::Step);
    }
}
