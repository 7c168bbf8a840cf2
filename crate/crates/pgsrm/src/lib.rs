//! Parent-guided semantic reward training for tiny language policies.
//!
//! This crate trains a small autoregressive transformer with sequence-level
//! PPO and compares two reward signals on an otherwise identical pipeline:
//!
//! - a dense signal: truncated, sharpened cosine similarity between frozen
//!   embeddings of a reference ("parent") output and the policy's output,
//! - a sparse binary baseline: task-specific correctness checkers in {0, 1}.
//!
//! Everything runs on CPU from scratch in this crate: the reverse-mode tensor
//! engine, the transformer policy with its value head, the embedding
//! providers, five built-in tasks with rule-based reference oracles, and a
//! deterministic experiment runner that writes CSV metrics and SVG curves.
//!
//! Start with the runnable programs in `examples/`, one per capability, or
//! the `pgsrm` binary (`train`, `compare`, `eval`, `gradcheck`,
//! `inspect-config`).

pub mod cli;
pub mod embedding;
pub mod gradcheck;
pub mod num;
pub mod optim;
pub mod policy;
pub mod ppo;
pub mod reward;
pub mod rng;
pub mod tasks;
pub mod tensor;
pub mod trainer;

pub use embedding::{cosine, EmbeddingSpace, SentenceVector};
pub use policy::{
    ModelConfig, PolicyModel, ReferencePolicy, Sampling, TokenMatrix, Tokenizer, TokenizerMode,
};
pub use ppo::{
    adapt_kl, build_masks, ppo_step, EpisodeBatch, KlMode, PpoConfig, PpoState, UpdateMetrics,
};
pub use reward::{
    binary_reward, pgsrm_reward, reward_batch, Episode, RewardKind, RewardSpec, RewardValue,
};
pub use rng::Rng;
pub use tasks::{
    builtin_dataset, render_child_prompt, sample_prompt, PromptRecord, TaskDataset, TaskId,
};
pub use tensor::{Graph, Tensor, TensorId};
pub use trainer::{
    emit_curves, evaluate, run_experiment, run_pair, ConfigDraft, EmbeddingSource,
    ExperimentConfig, ModelShape, RunRecord,
};
