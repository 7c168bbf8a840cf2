//! Paired runs on the antonym task: dense embedding reward vs the sparse
//! binary baseline, identical seed and initialization, only the reward
//! differing. Prints the margins the larger experiments measure.
//!
//! ```bash
//! cargo run --example compare_dense_vs_sparse            # 120 updates each
//! cargo run --example compare_dense_vs_sparse -- 400
//! ```

use pgsrm::trainer::{run_pair, ConfigDraft};

fn main() {
    let updates: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("updates must be a number"))
        .unwrap_or(120);

    let out = std::env::temp_dir().join("pgsrm-example-compare");
    let mut draft = ConfigDraft::default();
    for (section, key, value) in [
        ("run", "task", "antonym".to_string()),
        ("run", "reward", "pgsrm".to_string()), // run_pair covers both
        ("run", "episodes", (updates * 50).to_string()),
        ("run", "seed", "11".to_string()),
        ("run", "out", out.display().to_string()),
        ("ppo", "actor_lr", "3e-4".to_string()),
        ("ppo", "critic_lr", "1e-3".to_string()),
    ] {
        draft.apply(section, key, &value).unwrap();
    }
    let cfg = draft.finalize().unwrap();

    println!("running both conditions for {} updates each...", cfg.updates());
    let (dense, sparse) = run_pair(&cfg).expect("paired run completes");

    assert_eq!(dense.init_param_checksum, sparse.init_param_checksum);
    println!("shared init checksum : {:016x}", dense.init_param_checksum);

    let k = 20.min(dense.metrics.len());
    let d_first = dense.first_window_mean_reward(k);
    let d_final = dense.final_window_mean_reward(k);
    let b_final = sparse.final_window_mean_reward(k);
    println!("dense  reward first/final {k}: {d_first:.4} -> {d_final:.4}");
    println!(
        "sparse reward first/final {k}: {:.4} -> {b_final:.4}",
        sparse.first_window_mean_reward(k)
    );
    println!("dense improvement            : {:.4}", d_final - d_first);
    println!("dense vs sparse final margin : {:.4}", d_final - b_final);
    println!(
        "joint summary                : {}",
        cfg.out_dir.join("compare_summary.txt").display()
    );
}
