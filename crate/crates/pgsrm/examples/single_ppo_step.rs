//! Run one PPO update on a hand-built batch and print every intermediate:
//! log-probs, values, advantages, the three loss terms, and the combined
//! actor loss.
//!
//! ```bash
//! cargo run --example single_ppo_step
//! ```

use pgsrm::policy::{ModelConfig, PolicyModel, TokenMatrix};
use pgsrm::ppo::{ppo_step_traced, EpisodeBatch, KlMode, PpoConfig, PpoState};
use pgsrm::Rng;

fn main() {
    let mut rng = Rng::new(3);
    let mut actor: PolicyModel<f32> = PolicyModel::init(
        ModelConfig {
            vocab: 12,
            d_model: 32,
            n_heads: 4,
            n_layers: 1,
            context: 16,
        },
        &mut rng,
    )
    .unwrap();
    let reference = actor.snapshot_reference();

    // Two episodes: prompts of two tokens, responses of different lengths
    // (the shorter one right-padded with pad id 0, eos id 1).
    let batch = EpisodeBatch {
        prompts: TokenMatrix::new(2, 2, vec![2, 3, 4, 5]),
        responses: TokenMatrix::new(2, 3, vec![6, 1, 0, 7, 8, 1]),
        rewards: vec![1.0, 0.25],
    };

    let cfg = PpoConfig {
        actor_lr: 1e-4,
        kl_mode: KlMode::Adaptive,
        batch_size: 2,
        ..PpoConfig::default()
    };
    let mut state = PpoState::new(&actor, &cfg);
    let (metrics, trace) =
        ppo_step_traced(&mut actor, &reference, &mut state, &batch, &cfg, 0).unwrap();

    println!("rewards        : {:?}", batch.rewards);
    println!("values         : {:?}", trace.values);
    println!("advantages     : {:?}", trace.advantages);
    println!("actor logprobs : {:?}", trace.actor_logprobs);
    println!("policy loss    : {}", trace.policy_loss);
    println!("value loss     : {}", trace.value_loss);
    println!("entropy        : {}", trace.entropy);
    println!("kl (vs ref)    : {}   <- zero: actor and reference are identical", trace.kl);
    println!("actor loss     : {}", trace.actor_loss);
    println!("critic loss    : {}", trace.critic_loss);
    println!("grad norm      : {}", metrics.pre_clip_grad_norm);
    println!("kl coeff next  : {}", metrics.kl_coeff);
}
