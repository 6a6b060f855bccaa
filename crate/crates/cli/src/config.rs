//! Resolved run configuration: a JSON file overlaid with command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError};
use searchassist_core::a3c::A3CConfig;
use searchassist_core::domain::{Encoding, RewardConfig};
use searchassist_core::env::{EnvConfig, SearchEnv};
use searchassist_core::qagent::QConfig;
use searchassist_core::search::Catalog;
use searchassist_core::synth::Workbench;
use searchassist_core::usersim::{CompliancePolicy, ConditionalTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    #[default]
    A3c,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum EncodingArg {
    Full,
    NoHistory,
}

impl From<EncodingArg> for Encoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Full => Encoding::Full,
            EncodingArg::NoHistory => Encoding::NoHistory,
        }
    }
}

/// Where the user model and catalog come from. Anything not given is
/// generated from the synthetic workbench.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub user_model: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub workbench_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub algo: Algo,
    pub seed: u64,
    pub env_seed: u64,
    pub data: DataConfig,
    pub env: EnvConfig,
    pub compliance: CompliancePolicy,
    pub a3c: A3CConfig,
    pub q: QConfig,
    pub q_episodes: usize,
    pub validation_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algo: Algo::A3c,
            seed: 0,
            env_seed: 42,
            data: DataConfig::default(),
            env: EnvConfig::default(),
            compliance: CompliancePolicy::default(),
            a3c: A3CConfig::default(),
            q: QConfig::default(),
            q_episodes: 350,
            validation_episodes: 5,
        }
    }
}

/// Flags shared by every command that builds an environment or trains.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ConfigFlags {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Conditional user-model table written by `ingest`.
    #[arg(long)]
    pub user_model: Option<PathBuf>,
    /// Asset catalog as JSON lines.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub workbench_seed: Option<u64>,
    /// Reward configuration JSON.
    #[arg(long)]
    pub rewards: Option<PathBuf>,
    #[arg(long)]
    pub max_turns: Option<u32>,
    #[arg(long)]
    pub env_seed: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// LSTM hidden size.
    #[arg(long)]
    pub lstm: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Episodes per worker for A3C, total episodes for Q-learning.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Rollout length.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub c_value: Option<f64>,
    #[arg(long)]
    pub c_entropy: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long, value_enum)]
    pub encoding: Option<EncodingArg>,
    #[arg(long)]
    pub validation_episodes: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{}: no such file", path.display())))
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

impl RunConfig {
    /// The file named by `--config` (or defaults), then every flag given.
    pub fn resolve(flags: &ConfigFlags, algo: Option<Algo>) -> Result<Self, CliError> {
        let mut cfg: RunConfig = match &flags.config {
            Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
            None => RunConfig::default(),
        };
        if let Some(a) = algo {
            cfg.algo = a;
        }
        let f = flags;
        macro_rules! set {
            ($src:expr => $($dst:expr),+) => {
                if let Some(v) = $src {
                    $($dst = v.clone().into();)+
                }
            };
        }
        set!(&f.user_model => cfg.data.user_model);
        set!(&f.catalog => cfg.data.catalog);
        set!(f.workbench_seed => cfg.data.workbench_seed);
        set!(f.max_turns => cfg.env.max_turns);
        set!(f.env_seed => cfg.env_seed);
        set!(f.seed => cfg.seed);
        set!(f.lstm => cfg.a3c.hidden);
        set!(f.workers => cfg.a3c.workers);
        set!(f.n => cfg.a3c.n);
        set!(f.lr => cfg.a3c.learning_rate);
        set!(f.c_value => cfg.a3c.c_value);
        set!(f.c_entropy => cfg.a3c.c_entropy);
        set!(f.clip_norm => cfg.a3c.clip_norm);
        set!(f.encoding => cfg.a3c.encoding);
        set!(f.validation_episodes => cfg.validation_episodes);
        set!(f.alpha => cfg.q.alpha);
        set!(f.epsilon => cfg.q.epsilon);
        match cfg.algo {
            Algo::A3c => {
                set!(f.gamma => cfg.a3c.gamma);
                set!(f.episodes => cfg.a3c.episodes_per_worker);
            }
            Algo::Q => {
                set!(f.gamma => cfg.q.gamma);
                set!(f.episodes => cfg.q_episodes);
            }
        }
        if let Some(p) = &f.rewards {
            cfg.env.rewards = RewardConfig::from_json(&read(p)?)?;
        }
        cfg.a3c.seed = cfg.seed;
        cfg.a3c.validation_episodes = cfg.validation_episodes;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.a3c.validate()?;
        self.q.validate()?;
        self.env.validate()?;
        self.env.rewards.validate()?;
        self.compliance.validate()?;
        if self.q_episodes == 0 || self.validation_episodes == 0 {
            return Err(CliError::Usage("episode counts must be at least 1".into()));
        }
        for p in [&self.data.user_model, &self.data.catalog].into_iter().flatten() {
            require(p)?;
        }
        Ok(())
    }

    pub fn catalog(&self) -> Result<Catalog, CliError> {
        match &self.data.catalog {
            Some(p) => {
                let file = std::fs::File::open(p).map_err(io_err(p))?;
                Ok(Catalog::from_jsonl(std::io::BufReader::new(file))?)
            }
            None => Ok(Arc::unwrap_or_clone(Workbench::generate(self.data.workbench_seed)?.catalog)),
        }
    }

    pub fn env(&self) -> Result<SearchEnv, CliError> {
        let bench = match (&self.data.user_model, &self.data.catalog) {
            (Some(_), Some(_)) => None,
            _ => Some(Workbench::generate(self.data.workbench_seed)?),
        };
        let catalog = match &bench {
            Some(b) if self.data.catalog.is_none() => b.catalog.clone(),
            _ => Arc::new(self.catalog()?),
        };
        let table = match (&self.data.user_model, &bench) {
            (Some(p), _) => Arc::new(ConditionalTable::from_json(&read(p)?)?),
            (None, Some(b)) => b.table.clone(),
            (None, None) => unreachable!("workbench is generated when no user model is given"),
        };
        Ok(SearchEnv::new(self.env.clone(), catalog, table, Arc::new(self.compliance.clone()), self.env_seed)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
