//! Experiment configuration: defaults, config-file parsing, flag overrides,
//! and the resolved echo written into every run directory.
//!
//! The file format is sectioned `key = value` text:
//!
//! ```text
//! [run]
//! task = color_mix
//! reward = pgsrm
//! [ppo]
//! actor_lr = 1e-5
//! ```
//!
//! Every key can also be set by a command-line flag; flags win over file
//! values, which win over defaults.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::policy::TokenizerMode;
use crate::ppo::{KlMode, PpoConfig};
use crate::reward::RewardKind;
use crate::tasks::TaskId;
use crate::trainer::TrainerError;

/// Where sentence vectors come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingSource {
    /// Deterministic test-double vectors; descriptor `hash:<dim>` or
    /// `hash:<dim>:<seed>`.
    Hash { dim: usize, seed: u64 },
    /// Word-vector text file; descriptor `wordvec:<path>`.
    WordVectors(PathBuf),
    /// Sentence-cache file; descriptor `cache:<path>`.
    SentenceCache(PathBuf),
}

impl EmbeddingSource {
    pub fn parse(s: &str) -> Result<Self, TrainerError> {
        let bad = || TrainerError::Config(format!(
            "embedding descriptor '{s}' not understood; expected hash:<dim>[:<seed>], wordvec:<path>, or cache:<path>"
        ));
        if let Some(rest) = s.strip_prefix("hash:") {
            let mut parts = rest.split(':');
            let dim = parts
                .next()
                .and_then(|p| p.parse::<usize>().ok())
                .ok_or_else(bad)?;
            let seed = match parts.next() {
                Some(p) => p.parse::<u64>().map_err(|_| bad())?,
                None => 0,
            };
            if dim == 0 || parts.next().is_some() {
                return Err(bad());
            }
            Ok(EmbeddingSource::Hash { dim, seed })
        } else if let Some(path) = s.strip_prefix("wordvec:") {
            Ok(EmbeddingSource::WordVectors(PathBuf::from(path)))
        } else if let Some(path) = s.strip_prefix("cache:") {
            Ok(EmbeddingSource::SentenceCache(PathBuf::from(path)))
        } else {
            Err(bad())
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            EmbeddingSource::Hash { dim, seed } => format!("hash:{dim}:{seed}"),
            EmbeddingSource::WordVectors(p) => format!("wordvec:{}", p.display()),
            EmbeddingSource::SentenceCache(p) => format!("cache:{}", p.display()),
        }
    }
}

/// Transformer shape knobs exposed to configuration (vocabulary size comes
/// from the task corpus at run time).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub context: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            layers: 2,
            d_model: 64,
            heads: 4,
            context: 64,
        }
    }
}

/// Everything a run needs, fully resolved.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: TaskId,
    pub reward: RewardKind,
    pub ppo: PpoConfig,
    pub episodes: usize,
    pub seed: u64,
    pub embedding: EmbeddingSource,
    pub out_dir: PathBuf,
    pub model: ModelShape,
    pub tokenizer_mode: TokenizerMode,
    pub max_new_tokens: usize,
    pub temperature: f64,
    /// 0 means the full built-in table.
    pub dataset_limit: usize,
    /// Reference outputs ingested from a file instead of the built-in oracle.
    pub parent_outputs: Option<PathBuf>,
    /// Re-snapshot the reference policy every k updates (0 = frozen initial).
    pub resnapshot_every: usize,
    /// Periodic checkpoints every k updates (0 = final only).
    pub checkpoint_every: usize,
    /// Greedy evaluation every k updates (0 = off).
    pub eval_every: usize,
}

impl ExperimentConfig {
    pub fn updates(&self) -> usize {
        self.episodes / self.ppo.batch_size
    }

    pub fn validate(&self) -> Result<(), TrainerError> {
        self.ppo
            .validate()
            .map_err(|e| TrainerError::Config(e.to_string()))?;
        if self.episodes < self.ppo.batch_size {
            return Err(TrainerError::Config(format!(
                "episodes ({}) must be at least batch_size ({})",
                self.episodes, self.ppo.batch_size
            )));
        }
        if self.episodes % self.ppo.batch_size != 0 {
            return Err(TrainerError::Config(format!(
                "episodes ({}) must be a multiple of batch_size ({})",
                self.episodes, self.ppo.batch_size
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(TrainerError::Config("max_new must be at least 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(TrainerError::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.model.d_model % self.model.heads != 0 {
            return Err(TrainerError::Config(format!(
                "d_model {} must be divisible by heads {}",
                self.model.d_model, self.model.heads
            )));
        }
        Ok(())
    }

    /// FNV-1a hash of the resolved configuration text.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.resolved_text().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    /// Full `key = value` echo of the resolved configuration.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "task = {}", self.task.name());
        let _ = writeln!(s, "reward = {}", self.reward.name());
        let _ = writeln!(s, "episodes = {}", self.episodes);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out_dir.display());
        let _ = writeln!(s, "embedding = {}", self.embedding.descriptor());
        let _ = writeln!(s, "dataset_limit = {}", self.dataset_limit);
        match &self.parent_outputs {
            Some(p) => {
                let _ = writeln!(s, "parent_outputs = {}", p.display());
            }
            None => {
                let _ = writeln!(s, "parent_outputs =");
            }
        }
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "layers = {}", self.model.layers);
        let _ = writeln!(s, "d_model = {}", self.model.d_model);
        let _ = writeln!(s, "heads = {}", self.model.heads);
        let _ = writeln!(s, "context = {}", self.model.context);
        let tok_mode = match self.tokenizer_mode {
            TokenizerMode::WordLevel => "word",
            TokenizerMode::CharLevel => "char",
        };
        let _ = writeln!(s, "tokenizer = {tok_mode}");
        let _ = writeln!(s, "max_new = {}", self.max_new_tokens);
        let _ = writeln!(s, "temperature = {}", self.temperature);
        let _ = writeln!(s, "[ppo]");
        let _ = writeln!(s, "actor_lr = {}", self.ppo.actor_lr);
        let _ = writeln!(s, "critic_lr = {}", self.ppo.critic_lr);
        let _ = writeln!(s, "entropy_coeff = {}", self.ppo.entropy_coeff);
        let _ = writeln!(s, "value_coeff = {}", self.ppo.value_coeff);
        let _ = writeln!(s, "kl_coeff = {}", self.ppo.kl_coeff);
        let _ = writeln!(s, "kl_mode = {}", self.ppo.kl_mode.name());
        let _ = writeln!(s, "target_kl = {}", self.ppo.target_kl);
        let _ = writeln!(s, "max_grad_norm = {}", self.ppo.max_grad_norm);
        let _ = writeln!(s, "batch_size = {}", self.ppo.batch_size);
        let _ = writeln!(s, "alpha = {}", self.ppo.alpha);
        let _ = writeln!(s, "resnapshot_every = {}", self.resnapshot_every);
        s
    }
}

/// Accumulates settings from defaults, a config file, and flags; resolves
/// task-dependent defaults at the end.
#[derive(Debug, Default, Clone)]
pub struct ConfigDraft {
    task: Option<TaskId>,
    reward: Option<RewardKind>,
    episodes: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    embedding: Option<EmbeddingSource>,
    dataset_limit: Option<usize>,
    parent_outputs: Option<PathBuf>,
    eval_every: Option<usize>,
    checkpoint_every: Option<usize>,
    layers: Option<usize>,
    d_model: Option<usize>,
    heads: Option<usize>,
    context: Option<usize>,
    tokenizer: Option<TokenizerMode>,
    max_new: Option<usize>,
    temperature: Option<f64>,
    actor_lr: Option<f64>,
    critic_lr: Option<f64>,
    entropy_coeff: Option<f64>,
    value_coeff: Option<f64>,
    kl_coeff: Option<f64>,
    kl_mode: Option<KlMode>,
    target_kl: Option<f64>,
    max_grad_norm: Option<f64>,
    batch_size: Option<usize>,
    alpha: Option<f64>,
    resnapshot_every: Option<usize>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, TrainerError> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| TrainerError::Config(format!("could not parse '{value}' for key '{key}'")))
}

impl ConfigDraft {
    /// Applies one `key = value` setting. The section disambiguates duplicate
    /// key names; flags pass the canonical section.
    pub fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<(), TrainerError> {
        let value = value.trim();
        match (section, key) {
            ("run", "task") => self.task = Some(TaskId::parse(value)?),
            ("run", "reward") => {
                self.reward = Some(RewardKind::parse(value).ok_or_else(|| {
                    TrainerError::Config(format!(
                        "unknown reward '{value}' (expected pgsrm or binary)"
                    ))
                })?)
            }
            ("run", "episodes") => self.episodes = Some(parse_num(key, value)?),
            ("run", "seed") => self.seed = Some(parse_num(key, value)?),
            ("run", "out") => self.out = Some(PathBuf::from(value)),
            ("run", "embedding") => self.embedding = Some(EmbeddingSource::parse(value)?),
            ("run", "dataset_limit") => self.dataset_limit = Some(parse_num(key, value)?),
            ("run", "parent_outputs") => {
                self.parent_outputs = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            ("run", "eval_every") => self.eval_every = Some(parse_num(key, value)?),
            ("run", "checkpoint_every") => self.checkpoint_every = Some(parse_num(key, value)?),
            ("model", "layers") => self.layers = Some(parse_num(key, value)?),
            ("model", "d_model") => self.d_model = Some(parse_num(key, value)?),
            ("model", "heads") => self.heads = Some(parse_num(key, value)?),
            ("model", "context") => self.context = Some(parse_num(key, value)?),
            ("model", "tokenizer") => {
                self.tokenizer = Some(match value {
                    "word" => TokenizerMode::WordLevel,
                    "char" => TokenizerMode::CharLevel,
                    other => {
                        return Err(TrainerError::Config(format!(
                            "unknown tokenizer '{other}' (expected word or char)"
                        )))
                    }
                })
            }
            ("model", "max_new") => self.max_new = Some(parse_num(key, value)?),
            ("model", "temperature") => self.temperature = Some(parse_num(key, value)?),
            ("ppo", "actor_lr") => self.actor_lr = Some(parse_num(key, value)?),
            ("ppo", "critic_lr") => self.critic_lr = Some(parse_num(key, value)?),
            ("ppo", "entropy_coeff") => self.entropy_coeff = Some(parse_num(key, value)?),
            ("ppo", "value_coeff") => self.value_coeff = Some(parse_num(key, value)?),
            ("ppo", "kl_coeff") => self.kl_coeff = Some(parse_num(key, value)?),
            ("ppo", "kl_mode") => {
                self.kl_mode = Some(KlMode::parse(value).ok_or_else(|| {
                    TrainerError::Config(format!(
                        "unknown kl_mode '{value}' (expected fixed or adaptive)"
                    ))
                })?)
            }
            ("ppo", "target_kl") => self.target_kl = Some(parse_num(key, value)?),
            ("ppo", "max_grad_norm") => self.max_grad_norm = Some(parse_num(key, value)?),
            ("ppo", "batch_size") => self.batch_size = Some(parse_num(key, value)?),
            ("ppo", "alpha") => self.alpha = Some(parse_num(key, value)?),
            ("ppo", "resnapshot_every") => self.resnapshot_every = Some(parse_num(key, value)?),
            _ => {
                return Err(TrainerError::Config(format!(
                    "unknown configuration key '[{section}] {key}'"
                )))
            }
        }
        Ok(())
    }

    /// Parses a sectioned config file into this draft.
    pub fn apply_file(&mut self, content: &str) -> Result<(), TrainerError> {
        let mut section = String::from("run");
        for (i, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainerError::Config(format!("line {}: expected 'key = value'", i + 1))
            })?;
            self.apply(&section, key.trim(), value)?;
        }
        Ok(())
    }

    /// Resolves defaults and produces the final configuration. `task`,
    /// `reward`, and `out` are required.
    pub fn finalize(self) -> Result<ExperimentConfig, TrainerError> {
        let mut missing = Vec::new();
        if self.task.is_none() {
            missing.push("task");
        }
        if self.reward.is_none() {
            missing.push("reward");
        }
        if self.out.is_none() {
            missing.push("out");
        }
        if !missing.is_empty() {
            return Err(TrainerError::Config(format!(
                "missing required settings: {}",
                missing.join(", ")
            )));
        }
        let task = self.task.unwrap();
        let defaults = PpoConfig::default();
        let cfg = ExperimentConfig {
            task,
            reward: self.reward.unwrap(),
            ppo: PpoConfig {
                actor_lr: self.actor_lr.unwrap_or(defaults.actor_lr),
                critic_lr: self.critic_lr.unwrap_or(defaults.critic_lr),
                entropy_coeff: self.entropy_coeff.unwrap_or(defaults.entropy_coeff),
                value_coeff: self.value_coeff.unwrap_or(defaults.value_coeff),
                kl_coeff: self.kl_coeff.unwrap_or(defaults.kl_coeff),
                kl_mode: self.kl_mode.unwrap_or(defaults.kl_mode),
                target_kl: self.target_kl.unwrap_or(defaults.target_kl),
                max_grad_norm: self.max_grad_norm.unwrap_or(defaults.max_grad_norm),
                batch_size: self.batch_size.unwrap_or_else(|| task.default_batch_size()),
                alpha: self.alpha.unwrap_or(defaults.alpha),
            },
            episodes: self.episodes.unwrap_or(50_000),
            seed: self.seed.unwrap_or(0),
            embedding: self
                .embedding
                .unwrap_or(EmbeddingSource::Hash { dim: 64, seed: 0 }),
            out_dir: self.out.unwrap(),
            model: ModelShape {
                layers: self.layers.unwrap_or(2),
                d_model: self.d_model.unwrap_or(64),
                heads: self.heads.unwrap_or(4),
                context: self.context.unwrap_or(64),
            },
            tokenizer_mode: self.tokenizer.unwrap_or(TokenizerMode::WordLevel),
            max_new_tokens: self.max_new.unwrap_or_else(|| task.default_max_new_tokens()),
            temperature: self.temperature.unwrap_or(1.0),
            dataset_limit: self.dataset_limit.unwrap_or(0),
            parent_outputs: self.parent_outputs,
            resnapshot_every: self.resnapshot_every.unwrap_or(0),
            checkpoint_every: self.checkpoint_every.unwrap_or(0),
            eval_every: self.eval_every.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
