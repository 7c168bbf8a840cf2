//! Command-line front end: `train`, `compare`, `eval`, `gradcheck`, and
//! `inspect-config`.
//!
//! Every configuration key has a flag; flags override config-file values.

use std::path::PathBuf;

use crate::gradcheck;
use crate::policy::load_checkpoint;
use crate::tasks::{builtin_dataset, load_parent_outputs};
use crate::trainer::{
    self, evaluate, load_embedding_space, run_experiment, run_pair, ConfigDraft, EmbeddingSource,
    ExperimentConfig, TrainerError,
};

const USAGE: &str = "\
usage: pgsrm <command> [flags]

commands:
  train           train one condition and write a run directory
  compare         run the dense and sparse conditions with a shared seed
  eval            greedy-decode a checkpoint over a task dataset
  gradcheck       verify analytic gradients against finite differences
  inspect-config  print the fully resolved configuration

common flags (train, compare, inspect-config):
  --config PATH               sectioned key = value file
  --task NAME                 color_mix | antonym | categorize | copy | sentiment_invert
  --reward KIND               pgsrm | binary          (train only; compare runs both)
  --alpha F                   cosine sharpening exponent (default 4)
  --episodes N                total episodes (default 50000)
  --batch-size N              episodes per update (task default: 50 or 10)
  --seed N                    experiment seed (default 0)
  --out PATH                  run directory (required)
  --embedding DESC            hash:<dim>[:<seed>] | wordvec:<path> | cache:<path>
  --dataset-limit N           cap on dataset records (0 = all)
  --parent-outputs PATH       ingest reference outputs from JSONL
  --actor-lr F  --critic-lr F --entropy-coeff F --value-coeff F
  --kl-coeff F  --kl-mode M   fixed | adaptive
  --target-kl F --max-grad-norm F --resnapshot-every N
  --layers N --d-model N --heads N --context N
  --tokenizer M               word | char
  --max-new N --temperature F
  --eval-every N --checkpoint-every N

eval flags:
  --checkpoint PATH (required) --task NAME (required)
  --embedding DESC --alpha F --max-new N --dataset-limit N --parent-outputs PATH

gradcheck flags:
  --seed N --batches N (default 5) --tolerance F (default 1e-4)
";

fn flag_target(flag: &str) -> Option<(&'static str, &'static str)> {
    Some(match flag {
        "--task" => ("run", "task"),
        "--reward" => ("run", "reward"),
        "--episodes" => ("run", "episodes"),
        "--seed" => ("run", "seed"),
        "--out" => ("run", "out"),
        "--embedding" => ("run", "embedding"),
        "--dataset-limit" => ("run", "dataset_limit"),
        "--parent-outputs" => ("run", "parent_outputs"),
        "--eval-every" => ("run", "eval_every"),
        "--checkpoint-every" => ("run", "checkpoint_every"),
        "--layers" => ("model", "layers"),
        "--d-model" => ("model", "d_model"),
        "--heads" => ("model", "heads"),
        "--context" => ("model", "context"),
        "--tokenizer" => ("model", "tokenizer"),
        "--max-new" => ("model", "max_new"),
        "--temperature" => ("model", "temperature"),
        "--actor-lr" => ("ppo", "actor_lr"),
        "--critic-lr" => ("ppo", "critic_lr"),
        "--entropy-coeff" => ("ppo", "entropy_coeff"),
        "--value-coeff" => ("ppo", "value_coeff"),
        "--kl-coeff" => ("ppo", "kl_coeff"),
        "--kl-mode" => ("ppo", "kl_mode"),
        "--target-kl" => ("ppo", "target_kl"),
        "--max-grad-norm" => ("ppo", "max_grad_norm"),
        "--batch-size" => ("ppo", "batch_size"),
        "--alpha" => ("ppo", "alpha"),
        "--resnapshot-every" => ("ppo", "resnapshot_every"),
        _ => return None,
    })
}

fn usage_error(msg: &str) -> i32 {
    eprintln!("error: {msg}\n\n{USAGE}");
    2
}

type FlagPairs = Vec<(String, String)>;

/// Collects `--flag value` pairs; returns (pairs, config-file path).
fn collect_flags(args: &[String]) -> Result<(FlagPairs, Option<PathBuf>), String> {
    let mut pairs = Vec::new();
    let mut config = None;
    let mut i = 0;
    while i < args.len() {
        let flag = &args[i];
        if !flag.starts_with("--") {
            return Err(format!("unexpected argument '{flag}'"));
        }
        let value = args
            .get(i + 1)
            .ok_or_else(|| format!("flag '{flag}' expects a value"))?;
        if flag == "--config" {
            config = Some(PathBuf::from(value));
        } else {
            pairs.push((flag.clone(), value.clone()));
        }
        i += 2;
    }
    Ok((pairs, config))
}

fn build_draft(args: &[String]) -> Result<ConfigDraft, String> {
    let (pairs, config) = collect_flags(args)?;
    let mut draft = ConfigDraft::default();
    if let Some(path) = config {
        let content = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        draft.apply_file(&content).map_err(|e| e.to_string())?;
    }
    for (flag, value) in &pairs {
        let (section, key) =
            flag_target(flag).ok_or_else(|| format!("unknown flag '{flag}'"))?;
        draft
            .apply(section, key, value)
            .map_err(|e| e.to_string())?;
    }
    Ok(draft)
}

fn finalize(args: &[String]) -> Result<ExperimentConfig, String> {
    build_draft(args)?.finalize().map_err(|e| e.to_string())
}

/// Entry point; returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let Some(command) = args.first().map(String::as_str) else {
        return usage_error("no command given");
    };
    let rest = &args[1..];
    match command {
        "train" => cmd_train(rest),
        "compare" => cmd_compare(rest),
        "eval" => cmd_eval(rest),
        "gradcheck" => cmd_gradcheck(rest),
        "inspect-config" => cmd_inspect(rest),
        "--help" | "-h" | "help" => {
            println!("{USAGE}");
            0
        }
        other => usage_error(&format!("unknown command '{other}'")),
    }
}

fn cmd_train(args: &[String]) -> i32 {
    let cfg = match finalize(args) {
        Ok(cfg) => cfg,
        Err(e) => return usage_error(&e),
    };
    eprintln!(
        "training {} / {} for {} episodes ({} updates) into {}",
        cfg.task.name(),
        cfg.reward.name(),
        cfg.episodes,
        cfg.updates(),
        cfg.out_dir.display()
    );
    match run_experiment(&cfg) {
        Ok(record) => {
            println!("status = ok");
            println!("out_dir = {}", record.out_dir.display());
            println!("updates = {}", record.metrics.len());
            println!(
                "mean_reward_first_100 = {}",
                record.first_window_mean_reward(100)
            );
            println!(
                "mean_reward_final_100 = {}",
                record.final_window_mean_reward(100)
            );
            println!("wall_clock_secs = {:.3}", record.wall_clock.as_secs_f64());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_compare(args: &[String]) -> i32 {
    // compare supplies the reward itself; tolerate an explicit one.
    let mut draft_args = args.to_vec();
    if !args.iter().any(|a| a == "--reward") {
        draft_args.extend(["--reward".to_string(), "pgsrm".to_string()]);
    }
    let cfg = match finalize(&draft_args) {
        Ok(cfg) => cfg,
        Err(e) => return usage_error(&e),
    };
    eprintln!(
        "comparing rewards on {} for {} episodes x2 into {}",
        cfg.task.name(),
        cfg.episodes,
        cfg.out_dir.display()
    );
    match run_pair(&cfg) {
        Ok((dense, sparse)) => {
            let d_final = dense.final_window_mean_reward(100);
            let b_final = sparse.final_window_mean_reward(100);
            println!("status = ok");
            println!("pgsrm_final_100 = {d_final}");
            println!("binary_final_100 = {b_final}");
            println!(
                "pgsrm_improvement = {}",
                d_final - dense.first_window_mean_reward(100)
            );
            println!("pgsrm_vs_binary_final_margin = {}", d_final - b_final);
            println!(
                "summary = {}",
                cfg.out_dir.join("compare_summary.txt").display()
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_eval(args: &[String]) -> i32 {
    let (pairs, _) = match collect_flags(args) {
        Ok(x) => x,
        Err(e) => return usage_error(&e),
    };
    let mut checkpoint: Option<PathBuf> = None;
    let mut task: Option<String> = None;
    let mut embedding = EmbeddingSource::Hash { dim: 64, seed: 0 };
    let mut alpha = 4.0f64;
    let mut max_new: Option<usize> = None;
    let mut dataset_limit = 0usize;
    let mut parent_outputs: Option<PathBuf> = None;
    for (flag, value) in &pairs {
        let parsed: Result<(), String> = (|| {
            match flag.as_str() {
                "--checkpoint" => checkpoint = Some(PathBuf::from(value)),
                "--task" => task = Some(value.clone()),
                "--embedding" => {
                    embedding = EmbeddingSource::parse(value).map_err(|e| e.to_string())?
                }
                "--alpha" => alpha = value.parse().map_err(|_| "bad --alpha".to_string())?,
                "--max-new" => {
                    max_new = Some(value.parse().map_err(|_| "bad --max-new".to_string())?)
                }
                "--dataset-limit" => {
                    dataset_limit = value
                        .parse()
                        .map_err(|_| "bad --dataset-limit".to_string())?
                }
                "--parent-outputs" => parent_outputs = Some(PathBuf::from(value)),
                other => return Err(format!("unknown flag '{other}' for eval")),
            }
            Ok(())
        })();
        if let Err(e) = parsed {
            return usage_error(&e);
        }
    }
    let Some(checkpoint) = checkpoint else {
        return usage_error("eval requires --checkpoint");
    };
    let Some(task) = task else {
        return usage_error("eval requires --task");
    };
    let result: Result<(), TrainerError> = (|| {
        let task = crate::tasks::TaskId::parse(&task)?;
        let (model, tokenizer) = load_checkpoint(&checkpoint)?;
        let limit = if dataset_limit == 0 {
            usize::MAX
        } else {
            dataset_limit
        };
        let dataset = match &parent_outputs {
            Some(p) => load_parent_outputs(p, task)?,
            None => builtin_dataset(task, limit),
        };
        let space = load_embedding_space(&embedding)?;
        let max_new = max_new.unwrap_or_else(|| task.default_max_new_tokens());
        let report = evaluate(&model, &tokenizer, &dataset, &space, alpha, max_new)?;
        println!("records = {}", report.n);
        println!("mean_pgsrm = {}", report.mean_pgsrm);
        println!("binary_accuracy = {}", report.binary_accuracy);
        Ok(())
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_gradcheck(args: &[String]) -> i32 {
    let (pairs, _) = match collect_flags(args) {
        Ok(x) => x,
        Err(e) => return usage_error(&e),
    };
    let mut seed = 0u64;
    let mut batches = 5usize;
    let mut tolerance = 1e-4f64;
    for (flag, value) in &pairs {
        let ok = match flag.as_str() {
            "--seed" => value.parse().map(|v| seed = v).is_ok(),
            "--batches" => value.parse().map(|v| batches = v).is_ok(),
            "--tolerance" => value.parse().map(|v| tolerance = v).is_ok(),
            other => return usage_error(&format!("unknown flag '{other}' for gradcheck")),
        };
        if !ok {
            return usage_error(&format!("bad value for '{flag}'"));
        }
    }
    match gradcheck::run(seed, batches, tolerance) {
        Ok(report) => {
            println!("batches = {}", report.batches);
            println!("parameters_checked = {}", report.parameters_checked);
            println!("max_rel_error_actor = {:.3e}", report.max_rel_error_actor);
            println!("max_rel_error_critic = {:.3e}", report.max_rel_error_critic);
            println!("tolerance = {:.1e}", report.tolerance);
            println!("elapsed_secs = {:.2}", report.elapsed.as_secs_f64());
            println!(
                "result = {}",
                if report.passed() { "PASS" } else { "FAIL" }
            );
            i32::from(!report.passed())
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_inspect(args: &[String]) -> i32 {
    match finalize(args) {
        Ok(cfg) => {
            print!("{}", cfg.resolved_text());
            0
        }
        Err(e) => usage_error(&e),
    }
}

// Re-exported so integration tests can drive the trainer with small configs.
pub use trainer::run_experiment as run_train;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_command_and_flag_fail_usage() {
        assert_eq!(run(vec!["florble".into()]), 2);
        assert_eq!(run(vec![]), 2);
        assert_eq!(
            run(vec!["train".into(), "--bogus".into(), "1".into()]),
            2
        );
    }

    #[test]
    fn train_missing_task_is_usage_error() {
        assert_eq!(
            run(vec![
                "train".into(),
                "--reward".into(),
                "pgsrm".into(),
                "--out".into(),
                "/tmp/pgsrm-cli-x".into(),
            ]),
            2
        );
    }

    #[test]
    fn flag_without_value_is_usage_error() {
        assert_eq!(run(vec!["train".into(), "--task".into()]), 2);
    }

    #[test]
    fn help_prints_and_succeeds() {
        assert_eq!(run(vec!["--help".into()]), 0);
    }
}
