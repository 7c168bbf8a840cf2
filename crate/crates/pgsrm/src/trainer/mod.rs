//! Experiment orchestration: the episode loop, paired dense-vs-sparse runs,
//! metrics persistence, and training-curve emission.
//!
//! A run is fully determined by its configuration and seed: model init,
//! prompt sampling, and token sampling each draw from independent streams
//! derived from the experiment seed, and all output files are written in a
//! fixed order with round-trip-exact number formatting.

pub mod config;
pub mod metrics;
pub mod svg;

pub use config::{ConfigDraft, EmbeddingSource, ExperimentConfig, ModelShape};

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingSpace};
use crate::policy::{
    save_checkpoint, ModelConfig, PolicyError, PolicyModel, Sampling, TokenMatrix, Tokenizer,
    TokenizerError, TokenizerMode,
};
use crate::ppo::{ppo_step, EpisodeBatch, PpoError, PpoState, UpdateMetrics};
use crate::reward::{reward_batch, Episode, RewardError, RewardKind, RewardSpec};
use crate::rng::Rng;
use crate::tasks::{builtin_dataset, load_parent_outputs, sample_prompt_index, TaskDataset, TaskError};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("metrics error: {0}")]
    Metrics(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, TrainerError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainerError + '_ {
    move |source| TrainerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Everything produced by one training run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub metrics: Vec<UpdateMetrics>,
    pub wall_clock: Duration,
    pub config_hash: u64,
    pub init_param_checksum: u64,
    pub final_checkpoint: PathBuf,
    pub out_dir: PathBuf,
}

impl RunRecord {
    /// Mean batch reward over the first `n` updates.
    pub fn first_window_mean_reward(&self, n: usize) -> f64 {
        metrics::window_mean(&self.metrics, 0, n, |m| m.mean_reward)
    }

    /// Mean batch reward over the final `n` updates.
    pub fn final_window_mean_reward(&self, n: usize) -> f64 {
        let len = self.metrics.len();
        metrics::window_mean(&self.metrics, len.saturating_sub(n), len, |m| m.mean_reward)
    }
}

/// Dataset, tokenizer, embedding space, and freshly initialized model for a
/// configured run.
pub struct RunSetup {
    pub dataset: TaskDataset,
    pub tokenizer: Tokenizer,
    pub space: EmbeddingSpace,
    pub model: PolicyModel<f32>,
    pub prompt_ids: Vec<Vec<u32>>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<RunSetup> {
    cfg.validate()?;
    let limit = if cfg.dataset_limit == 0 {
        usize::MAX
    } else {
        cfg.dataset_limit
    };
    let dataset = match &cfg.parent_outputs {
        Some(path) => load_parent_outputs(path, cfg.task)?,
        None => builtin_dataset(cfg.task, limit),
    }
    .with_sampling_seed(cfg.seed);

    let mut corpus: Vec<String> = Vec::new();
    for r in dataset.records() {
        corpus.push(r.child_prompt.clone());
        corpus.push(r.parent_output.clone());
        corpus.push(format!(" {}", r.parent_output));
    }
    let tokenizer = match cfg.tokenizer_mode {
        TokenizerMode::WordLevel => Tokenizer::word_level(&corpus),
        TokenizerMode::CharLevel => Tokenizer::char_level(&corpus),
    };

    let mut prompt_ids = Vec::with_capacity(dataset.len());
    let mut longest = 0usize;
    for r in dataset.records() {
        let ids = tokenizer.encode(&r.child_prompt)?;
        longest = longest.max(ids.len());
        prompt_ids.push(ids);
    }
    if longest + cfg.max_new_tokens > cfg.model.context {
        return Err(TrainerError::Config(format!(
            "longest prompt ({longest} tokens) plus max_new ({}) exceeds context {}",
            cfg.max_new_tokens, cfg.model.context
        )));
    }

    let space = load_embedding_space(&cfg.embedding)?;

    let mut init_rng = Rng::new(cfg.seed).derive("model-init");
    let model = PolicyModel::init(
        ModelConfig {
            vocab: tokenizer.vocab_size(),
            d_model: cfg.model.d_model,
            n_heads: cfg.model.heads,
            n_layers: cfg.model.layers,
            context: cfg.model.context,
        },
        &mut init_rng,
    )?;

    Ok(RunSetup {
        dataset,
        tokenizer,
        space,
        model,
        prompt_ids,
    })
}

pub fn load_embedding_space(source: &EmbeddingSource) -> Result<EmbeddingSpace> {
    Ok(match source {
        EmbeddingSource::Hash { dim, seed } => EmbeddingSpace::hash_synthetic(*dim, *seed),
        EmbeddingSource::WordVectors(path) => EmbeddingSpace::load_word_vectors(path)?,
        EmbeddingSource::SentenceCache(path) => EmbeddingSpace::load_sentence_cache(path)?,
    })
}

fn reward_spec(cfg: &ExperimentConfig) -> Result<RewardSpec> {
    Ok(match cfg.reward {
        RewardKind::Pgsrm => RewardSpec::pgsrm(cfg.ppo.alpha)?,
        RewardKind::Binary => RewardSpec::binary(cfg.task),
    })
}

/// Runs one condition end to end: exactly `episodes` episodes in batches of
/// `batch_size`, one PPO update per batch, metrics flushed incrementally.
///
/// On error the partial metrics stay on disk and an error record is appended
/// to the run's summary before the error propagates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let started = Instant::now();
    let setup = prepare(cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;

    let resolved_path = cfg.out_dir.join("config.resolved");
    fs::write(&resolved_path, cfg.resolved_text()).map_err(io_err(&resolved_path))?;

    match run_loop(cfg, setup, started) {
        Ok(record) => Ok(record),
        Err(e) => {
            let summary_path = cfg.out_dir.join("summary.txt");
            let mut text = format!("status = error: {e}\n");
            text.push_str(&format!("task = {}\n", cfg.task.name()));
            text.push_str(&format!("reward = {}\n", cfg.reward.name()));
            let _ = fs::write(&summary_path, text);
            Err(e)
        }
    }
}

fn run_loop(cfg: &ExperimentConfig, setup: RunSetup, started: Instant) -> Result<RunRecord> {
    let RunSetup {
        dataset,
        tokenizer,
        space,
        mut model,
        prompt_ids,
    } = setup;
    let spec = reward_spec(cfg)?;
    let pad = tokenizer.pad_id();
    let eos = tokenizer.eos_id();

    let mut reference = model.snapshot_reference();
    let mut state = PpoState::new(&model, &cfg.ppo);
    let init_param_checksum = model.param_checksum();

    let mut prompt_rng = Rng::new(cfg.seed).derive("prompt-sampling");
    let mut gen_rng = Rng::new(cfg.seed).derive("generation");

    let csv_path = cfg.out_dir.join("metrics.csv");
    let mut csv = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    writeln!(csv, "{}", metrics::CSV_HEADER).map_err(io_err(&csv_path))?;

    let evals_path = cfg.out_dir.join("evals.csv");
    let mut evals = if cfg.eval_every > 0 {
        let mut f = fs::File::create(&evals_path).map_err(io_err(&evals_path))?;
        writeln!(f, "step,mean_pgsrm,binary_accuracy").map_err(io_err(&evals_path))?;
        Some(f)
    } else {
        None
    };

    let updates = cfg.updates();
    let batch_size = cfg.ppo.batch_size;
    let mut series: Vec<UpdateMetrics> = Vec::with_capacity(updates);

    for update in 0..updates {
        // Assemble one batch of episodes.
        let mut rows: Vec<Vec<u32>> = Vec::with_capacity(batch_size);
        let mut parents: Vec<&str> = Vec::with_capacity(batch_size);
        let mut prompts_text: Vec<&str> = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let idx = sample_prompt_index(&dataset, &mut prompt_rng)?;
            let pick = &dataset.records()[idx];
            rows.push(prompt_ids[idx].clone());
            parents.push(pick.parent_output.as_str());
            prompts_text.push(pick.child_prompt.as_str());
        }

        let responses = model.generate_batch(
            &rows,
            cfg.max_new_tokens,
            Sampling::Temperature(cfg.temperature),
            eos,
            pad,
            &mut gen_rng,
        )?;

        let episodes: Vec<Episode> = responses
            .iter()
            .zip(&parents)
            .zip(&prompts_text)
            .map(|((resp, parent), prompt)| {
                Ok(Episode {
                    prompt: (*prompt).to_string(),
                    parent_text: (*parent).to_string(),
                    child_text: tokenizer.decode(resp)?.trim().to_string(),
                })
            })
            .collect::<Result<_>>()?;
        let rewards: Vec<f32> = reward_batch(&spec, &episodes, &space)?
            .into_iter()
            .map(|r| r.value() as f32)
            .collect();

        let batch = EpisodeBatch {
            prompts: TokenMatrix::from_rows(&rows, pad),
            responses: TokenMatrix::from_rows(&responses, pad),
            rewards,
        };
        let m = ppo_step(&mut model, &reference, &mut state, &batch, &cfg.ppo, pad)?;
        writeln!(csv, "{}", metrics::csv_row(&m)).map_err(io_err(&csv_path))?;
        csv.flush().map_err(io_err(&csv_path))?;
        series.push(m);

        let done = update + 1;
        if cfg.resnapshot_every > 0 && done % cfg.resnapshot_every == 0 {
            reference = model.snapshot_reference();
        }
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
            let path = cfg.out_dir.join(format!("checkpoint.step{done}"));
            save_checkpoint(&model, &tokenizer, &path)?;
        }
        if let Some(f) = evals.as_mut() {
            if done % cfg.eval_every == 0 {
                let report = evaluate(
                    &model,
                    &tokenizer,
                    &dataset,
                    &space,
                    cfg.ppo.alpha,
                    cfg.max_new_tokens,
                )?;
                writeln!(f, "{done},{},{}", report.mean_pgsrm, report.binary_accuracy)
                    .map_err(io_err(&evals_path))?;
            }
        }
    }

    let final_checkpoint = cfg.out_dir.join("checkpoint.final");
    save_checkpoint(&model, &tokenizer, &final_checkpoint)?;

    let record = RunRecord {
        metrics: series,
        wall_clock: started.elapsed(),
        config_hash: cfg.hash(),
        init_param_checksum,
        final_checkpoint,
        out_dir: cfg.out_dir.clone(),
    };
    emit_curves(&record, &cfg.out_dir)?;
    write_summary(cfg, &record)?;
    Ok(record)
}

fn write_summary(cfg: &ExperimentConfig, record: &RunRecord) -> Result<()> {
    let path = cfg.out_dir.join("summary.txt");
    let mut s = String::new();
    s.push_str("status = ok\n");
    s.push_str(&format!("task = {}\n", cfg.task.name()));
    s.push_str(&format!("reward = {}\n", cfg.reward.name()));
    s.push_str(&format!("episodes = {}\n", cfg.episodes));
    s.push_str(&format!("updates = {}\n", record.metrics.len()));
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s.push_str(&format!("config_hash = {:016x}\n", record.config_hash));
    s.push_str(&format!(
        "init_param_checksum = {:016x}\n",
        record.init_param_checksum
    ));
    s.push_str(&format!(
        "wall_clock_secs = {:.3}\n",
        record.wall_clock.as_secs_f64()
    ));
    s.push_str(&format!(
        "final_checkpoint = {}\n",
        record.final_checkpoint.display()
    ));
    s.push_str(&format!(
        "mean_reward_first_100 = {}\n",
        record.first_window_mean_reward(100)
    ));
    s.push_str(&format!(
        "mean_reward_final_100 = {}\n",
        record.final_window_mean_reward(100)
    ));
    if let Some(last) = record.metrics.last() {
        s.push_str(&format!("final_entropy = {}\n", last.entropy));
        s.push_str(&format!("final_kl = {}\n", last.kl));
        s.push_str(&format!("final_kl_coeff = {}\n", last.kl_coeff));
    }
    fs::write(&path, s).map_err(io_err(&path))
}

/// Writes `metrics.csv` and the three training-curve SVG panels (reward,
/// entropy, KL). The CSV holds raw values; the SVGs smooth with a 50-update
/// trailing window for display only. Returns the written paths.
pub fn emit_curves(record: &RunRecord, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if record.metrics.is_empty() {
        return Err(TrainerError::Metrics("empty metrics series".into()));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let curves = out_dir.join("curves");
    fs::create_dir_all(&curves).map_err(io_err(&curves))?;

    let csv_path = out_dir.join("metrics.csv");
    fs::write(&csv_path, metrics::to_csv(&record.metrics)).map_err(io_err(&csv_path))?;

    let xs: Vec<f64> = record.metrics.iter().map(|m| m.step as f64).collect();
    let panels: [(&str, &str, Vec<f64>); 3] = [
        (
            "reward",
            "mean batch reward",
            record.metrics.iter().map(|m| m.mean_reward as f64).collect(),
        ),
        (
            "entropy",
            "policy entropy",
            record.metrics.iter().map(|m| m.entropy as f64).collect(),
        ),
        (
            "kl",
            "KL divergence",
            record.metrics.iter().map(|m| m.kl as f64).collect(),
        ),
    ];
    let mut paths = vec![csv_path];
    for (name, label, ys) in panels {
        let path = curves.join(format!("{name}.svg"));
        let chart = svg::line_chart(label, "update", label, &xs, &ys, 50);
        fs::write(&path, chart).map_err(io_err(&path))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Greedy-decoding evaluation over a dataset: mean dense reward and binary
/// accuracy. Uses no randomness, so results are independent of training rng
/// state.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub n: usize,
    pub mean_pgsrm: f64,
    pub binary_accuracy: f64,
}

pub fn evaluate(
    model: &PolicyModel<f32>,
    tokenizer: &Tokenizer,
    dataset: &TaskDataset,
    space: &EmbeddingSpace,
    alpha: f64,
    max_new: usize,
) -> Result<EvalReport> {
    let pad = tokenizer.pad_id();
    let eos = tokenizer.eos_id();
    let prompts: Vec<Vec<u32>> = dataset
        .records()
        .iter()
        .map(|r| tokenizer.encode(&r.child_prompt))
        .collect::<std::result::Result<_, _>>()?;
    let mut rng = Rng::new(0); // greedy decoding draws nothing
    let responses = model.generate_batch(&prompts, max_new, Sampling::Greedy, eos, pad, &mut rng)?;

    let episodes: Vec<Episode> = dataset
        .records()
        .iter()
        .zip(&responses)
        .map(|(r, resp)| {
            Ok(Episode {
                prompt: r.child_prompt.clone(),
                parent_text: r.parent_output.clone(),
                child_text: tokenizer.decode(resp)?.trim().to_string(),
            })
        })
        .collect::<Result<_>>()?;

    let dense = reward_batch(&RewardSpec::pgsrm(alpha)?, &episodes, space)?;
    let sparse = reward_batch(&RewardSpec::binary(dataset.task()), &episodes, space)?;
    let n = episodes.len();
    Ok(EvalReport {
        n,
        mean_pgsrm: dense.iter().map(|r| r.value()).sum::<f64>() / n as f64,
        binary_accuracy: sparse.iter().map(|r| r.value()).sum::<f64>() / n as f64,
    })
}

/// Runs the dense and sparse conditions with identical seed, model init, and
/// optimization settings; only the reward function differs. The two runs
/// execute concurrently and land in `<out>/pgsrm` and `<out>/binary`, with a
/// joint comparison written to `<out>/compare_summary.txt`.
pub fn run_pair(cfg: &ExperimentConfig) -> Result<(RunRecord, RunRecord)> {
    cfg.validate()?;
    let mut dense_cfg = cfg.clone();
    dense_cfg.reward = RewardKind::Pgsrm;
    dense_cfg.out_dir = cfg.out_dir.join("pgsrm");
    let mut sparse_cfg = cfg.clone();
    sparse_cfg.reward = RewardKind::Binary;
    sparse_cfg.out_dir = cfg.out_dir.join("binary");

    let (dense, sparse) = std::thread::scope(|scope| {
        let d = scope.spawn(|| run_experiment(&dense_cfg));
        let s = scope.spawn(|| run_experiment(&sparse_cfg));
        (d.join().expect("dense run panicked"), s.join().expect("sparse run panicked"))
    });
    let dense = dense?;
    let sparse = sparse?;

    let path = cfg.out_dir.join("compare_summary.txt");
    let window = 100;
    let mut s = String::new();
    s.push_str(&format!("task = {}\n", cfg.task.name()));
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s.push_str(&format!("updates_per_condition = {}\n", dense.metrics.len()));
    s.push_str(&format!(
        "init_checksum_pgsrm = {:016x}\n",
        dense.init_param_checksum
    ));
    s.push_str(&format!(
        "init_checksum_binary = {:016x}\n",
        sparse.init_param_checksum
    ));
    s.push_str(&format!(
        "init_match = {}\n",
        dense.init_param_checksum == sparse.init_param_checksum
    ));
    let d_first = dense.first_window_mean_reward(window);
    let d_final = dense.final_window_mean_reward(window);
    let b_first = sparse.first_window_mean_reward(window);
    let b_final = sparse.final_window_mean_reward(window);
    s.push_str(&format!("pgsrm_first{window}_mean_reward = {d_first}\n"));
    s.push_str(&format!("pgsrm_final{window}_mean_reward = {d_final}\n"));
    s.push_str(&format!("binary_first{window}_mean_reward = {b_first}\n"));
    s.push_str(&format!("binary_final{window}_mean_reward = {b_final}\n"));
    s.push_str(&format!("pgsrm_improvement = {}\n", d_final - d_first));
    s.push_str(&format!(
        "pgsrm_vs_binary_final_margin = {}\n",
        d_final - b_final
    ));
    fs::write(&path, s).map_err(io_err(&path))?;

    Ok((dense, sparse))
}
