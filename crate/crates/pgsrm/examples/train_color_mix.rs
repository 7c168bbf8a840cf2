//! Short dense-reward training run on the color-mixing task, writing a full
//! run directory (resolved config, CSV metrics, SVG curves, checkpoint).
//!
//! ```bash
//! cargo run --example train_color_mix            # 150 updates, ~1 minute
//! cargo run --example train_color_mix -- 500     # more updates
//! ```

use pgsrm::trainer::{run_experiment, ConfigDraft};

fn main() {
    let updates: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("updates must be a number"))
        .unwrap_or(150);

    let out = std::env::temp_dir().join("pgsrm-example-color-mix");
    let mut draft = ConfigDraft::default();
    for (section, key, value) in [
        ("run", "task", "color_mix".to_string()),
        ("run", "reward", "pgsrm".to_string()),
        ("run", "episodes", (updates * 50).to_string()),
        ("run", "seed", "7".to_string()),
        ("run", "out", out.display().to_string()),
        ("ppo", "actor_lr", "3e-4".to_string()),
        ("ppo", "critic_lr", "1e-3".to_string()),
    ] {
        draft.apply(section, key, &value).unwrap();
    }
    let cfg = draft.finalize().unwrap();

    println!(
        "training color_mix / pgsrm, {} updates of {} episodes",
        cfg.updates(),
        cfg.ppo.batch_size
    );
    let record = run_experiment(&cfg).expect("run completes");

    let k = 20.min(record.metrics.len());
    println!(
        "mean reward, first {k} updates : {:.4}",
        record.first_window_mean_reward(k)
    );
    println!(
        "mean reward, final {k} updates : {:.4}",
        record.final_window_mean_reward(k)
    );
    println!("wall clock                     : {:.1}s", record.wall_clock.as_secs_f64());
    println!("run directory                  : {}", record.out_dir.display());
    for name in ["metrics.csv", "summary.txt", "curves/reward.svg"] {
        println!("  {}", record.out_dir.join(name).display());
    }
}
