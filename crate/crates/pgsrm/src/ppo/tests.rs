use super::*;
use crate::policy::{ModelConfig, Sampling};
use crate::rng::Rng;

const PAD: u32 = 0;
const EOS: u32 = 1;

fn tiny_model(vocab: usize, seed: u64) -> PolicyModel<f32> {
    let mut rng = Rng::new(seed);
    PolicyModel::init(
        ModelConfig {
            vocab,
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            context: 16,
        },
        &mut rng,
    )
    .unwrap()
}

fn small_batch(rewards: Vec<f32>) -> EpisodeBatch {
    EpisodeBatch {
        prompts: TokenMatrix::new(2, 2, vec![2, 3, 4, 5]),
        responses: TokenMatrix::new(2, 3, vec![6, EOS, PAD, 7, 8, EOS]),
        rewards,
    }
}

fn no_reg_cfg() -> PpoConfig {
    PpoConfig {
        entropy_coeff: 0.0,
        kl_coeff: 0.0,
        kl_mode: KlMode::Fixed,
        ..PpoConfig::default()
    }
}

/// Summed response-token log-probability under the current actor.
fn response_logprob_sum(model: &PolicyModel<f32>, batch: &EpisodeBatch) -> f32 {
    let (x, m_attn, m_resp) = build_masks::<f32>(&batch.prompts, &batch.responses, PAD).unwrap();
    let lp = reference_logprobs(model, &x, &m_attn, PAD).unwrap();
    let (b, t) = (x.rows, x.cols);
    let mut sum = 0.0;
    for r in 0..b {
        for c in 0..t - 1 {
            if m_resp[r * t + c + 1] == 1.0 {
                sum += lp[r * (t - 1) + c];
            }
        }
    }
    sum
}

#[test]
fn build_masks_hand_case() {
    let p = TokenMatrix::new(1, 2, vec![5, 6]);
    let y = TokenMatrix::new(1, 2, vec![7, PAD]);
    let (x, m_attn, m_resp) = build_masks::<f32>(&p, &y, PAD).unwrap();
    assert_eq!(x.ids, vec![5, 6, 7, 0]);
    assert_eq!(m_attn, vec![1.0, 1.0, 1.0, 0.0]);
    assert_eq!(m_resp, vec![0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn build_masks_full_response() {
    let p = TokenMatrix::new(1, 2, vec![5, 6]);
    let y = TokenMatrix::new(1, 3, vec![7, 8, 9]);
    let (_, _, m_resp) = build_masks::<f32>(&p, &y, PAD).unwrap();
    assert_eq!(m_resp[2..], [1.0, 1.0, 1.0]);
}

#[test]
fn build_masks_matches_scalar_reference() {
    let mut rng = Rng::new(77);
    for _ in 0..20 {
        let rows = 1 + rng.below(4);
        let pcols = 1 + rng.below(4);
        let ycols = 1 + rng.below(4);
        let prompts = TokenMatrix::new(
            rows,
            pcols,
            (0..rows * pcols)
                .map(|_| 2 + rng.below(8) as u32)
                .collect(),
        );
        // Right-padded responses with at least one real token per row.
        let mut yids = Vec::new();
        for _ in 0..rows {
            let real = 1 + rng.below(ycols);
            for c in 0..ycols {
                yids.push(if c < real { 2 + rng.below(8) as u32 } else { PAD });
            }
        }
        let responses = TokenMatrix::new(rows, ycols, yids);
        let (x, m_attn, m_resp) = build_masks::<f64>(&prompts, &responses, PAD).unwrap();

        // Scalar loop oracle.
        for r in 0..rows {
            for c in 0..pcols + ycols {
                let id = x.row(r)[c];
                let expect_attn = f64::from(id != PAD);
                assert_eq!(m_attn[r * x.cols + c], expect_attn);
                let expect_resp = if c >= pcols {
                    f64::from(responses.row(r)[c - pcols] != PAD)
                } else {
                    0.0
                };
                assert_eq!(m_resp[r * x.cols + c], expect_resp);
                // m_resp is a subset of m_attn.
                assert!(m_resp[r * x.cols + c] <= m_attn[r * x.cols + c]);
            }
        }
    }
}

#[test]
fn build_masks_rejects_empty_response_row() {
    let p = TokenMatrix::new(1, 2, vec![5, 6]);
    let y = TokenMatrix::new(1, 2, vec![PAD, PAD]);
    assert!(matches!(
        build_masks::<f32>(&p, &y, PAD).unwrap_err(),
        PpoError::EmptyResponse { row: 0 }
    ));
}

#[test]
fn adapt_kl_band_rules() {
    // Dead zone.
    assert_eq!(adapt_kl(5e-5, 0.8, 0.8), 5e-5);
    assert_eq!(adapt_kl(5e-5, 1.1, 0.8), 5e-5);
    // Above 1.5x target: doubled.
    assert_eq!(adapt_kl(5e-5, 1.6, 0.8), 1e-4);
    // Below target / 1.5: halved.
    assert_eq!(adapt_kl(6e-5, 0.8 / 3.0, 0.8), 3e-5);
    // Clamped to [1e-8, 1.0].
    assert_eq!(adapt_kl(1.5e-8, 0.0, 0.8), 1e-8);
    assert_eq!(adapt_kl(0.9, 10.0, 0.8), 1.0);
}

#[test]
fn value_loss_cases() {
    let mut g: Graph<f32> = Graph::new();
    let v = g.leaf(Tensor::from_vec(vec![0.3, 0.7]));
    let l = value_loss(&mut g, v, &[0.3, 0.7]).unwrap();
    assert_eq!(g.value(l).item(), 0.0);

    let v2 = g.leaf(Tensor::from_vec(vec![0.0, 0.0]));
    let l2 = value_loss(&mut g, v2, &[1.0, 1.0]).unwrap();
    assert_eq!(g.value(l2).item(), 1.0);

    let mut rng = Rng::new(3);
    let vd: Vec<f32> = (0..7).map(|_| rng.normal() as f32).collect();
    let rd: Vec<f32> = (0..7).map(|_| rng.normal() as f32).collect();
    let v3 = g.leaf(Tensor::from_vec(vd.clone()));
    let l3 = value_loss(&mut g, v3, &rd).unwrap();
    let expect: f32 = vd
        .iter()
        .zip(&rd)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f32>()
        / 7.0;
    assert!((g.value(l3).item() - expect).abs() < 1e-6);
}

#[test]
fn zero_advantage_means_zero_policy_loss() {
    let mut actor = tiny_model(10, 5);
    let reference = actor.snapshot_reference();
    let cfg = PpoConfig {
        batch_size: 2,
        ..PpoConfig::default()
    };
    let mut state = PpoState::new(&actor, &cfg);

    // First read the current values, then hand them back as rewards.
    let proto = small_batch(vec![0.0, 0.0]);
    let (x, m_attn, m_resp) = build_masks::<f32>(&proto.prompts, &proto.responses, PAD).unwrap();
    let values = actor
        .value_at_last_response_token(&x, &m_attn, &m_resp)
        .unwrap();
    let batch = small_batch(values.data().to_vec());

    let before = actor.param_checksum();
    let (metrics, trace) =
        ppo_step_traced(&mut actor, &reference, &mut state, &batch, &cfg, PAD).unwrap();
    assert_eq!(trace.policy_loss, 0.0);
    assert!(trace.advantages.iter().all(|&a| a == 0.0));
    // Entropy and KL terms still move the actor.
    assert_ne!(actor.param_checksum(), before);
    assert!(metrics.all_finite());
}

#[test]
fn identity_policies_have_exactly_zero_kl() {
    let mut actor = tiny_model(10, 6);
    let reference = actor.snapshot_reference();
    let cfg = no_reg_cfg();
    let mut state = PpoState::new(&actor, &cfg);
    let batch = small_batch(vec![0.7, 0.2]);
    let (_, trace) =
        ppo_step_traced(&mut actor, &reference, &mut state, &batch, &cfg, PAD).unwrap();
    assert_eq!(trace.kl, 0.0);
    assert_eq!(trace.actor_logprobs, trace.ref_logprobs);
}

#[test]
fn positive_advantage_increases_response_logprob() {
    let mut actor = tiny_model(10, 7);
    let reference = actor.snapshot_reference();
    let cfg = PpoConfig {
        actor_lr: 1e-3,
        ..no_reg_cfg()
    };
    let mut state = PpoState::new(&actor, &cfg);

    let batch = EpisodeBatch {
        prompts: TokenMatrix::new(1, 2, vec![2, 3]),
        responses: TokenMatrix::new(1, 2, vec![6, EOS]),
        rewards: vec![2.0], // well above any initial value estimate
    };
    let before = response_logprob_sum(&actor, &batch);
    let (_, trace) =
        ppo_step_traced(&mut actor, &reference, &mut state, &batch, &cfg, PAD).unwrap();
    assert!(trace.advantages[0] > 0.0);
    let after = response_logprob_sum(&actor, &batch);
    assert!(
        after > before,
        "log-prob did not increase: {before} -> {after}"
    );
}

#[test]
fn critic_regression_converges_on_stationary_target() {
    let mut actor = tiny_model(10, 8);
    let reference = actor.snapshot_reference();
    // Freeze the actor so the regression target is stationary.
    let cfg = PpoConfig {
        actor_lr: 0.0,
        critic_lr: 1e-4,
        ..no_reg_cfg()
    };
    let mut state = PpoState::new(&actor, &cfg);
    let batch = small_batch(vec![0.9, 0.1]);

    let mut series = Vec::new();
    for _ in 0..200 {
        let (m, _) = ppo_step_traced(&mut actor, &reference, &mut state, &batch, &cfg, PAD)
            .unwrap();
        series.push(m.value_loss);
    }
    let first = series[0];
    let last = *series.last().unwrap();
    assert!(
        last < 0.6 * first,
        "value loss did not shrink: {first} -> {last}"
    );
    // Monotone toward zero: no step may regress.
    for w in series.windows(2) {
        assert!(w[1] <= w[0] * 1.05 + 1e-6, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn fixed_mode_never_touches_the_coefficient() {
    let mut actor = tiny_model(10, 9);
    let reference = actor.snapshot_reference();
    let cfg = PpoConfig {
        kl_mode: KlMode::Fixed,
        ..PpoConfig::default()
    };
    let mut state = PpoState::new(&actor, &cfg);
    let batch = small_batch(vec![0.5, 0.5]);
    for _ in 0..50 {
        let (m, _) =
            ppo_step_traced(&mut actor, &reference, &mut state, &batch, &cfg, PAD).unwrap();
        assert_eq!(m.kl_coeff, 5e-5);
    }
}

#[test]
fn non_finite_rewards_abort_without_update() {
    let mut actor = tiny_model(10, 10);
    let reference = actor.snapshot_reference();
    let cfg = PpoConfig::default();
    let mut state = PpoState::new(&actor, &cfg);
    let before = actor.param_checksum();
    let batch = small_batch(vec![f32::NAN, 0.5]);
    let err = ppo_step(&mut actor, &reference, &mut state, &batch, &cfg, PAD).unwrap_err();
    assert!(matches!(err, PpoError::NonFinite { .. }));
    assert_eq!(actor.param_checksum(), before);
    assert_eq!(state.updates_done, 0);
}

#[test]
fn reward_count_mismatch_is_rejected() {
    let mut actor = tiny_model(10, 11);
    let reference = actor.snapshot_reference();
    let cfg = PpoConfig::default();
    let mut state = PpoState::new(&actor, &cfg);
    let batch = small_batch(vec![0.5]);
    assert!(matches!(
        ppo_step(&mut actor, &reference, &mut state, &batch, &cfg, PAD).unwrap_err(),
        PpoError::RewardCount { got: 1, want: 2 }
    ));
}

#[test]
fn config_validation() {
    assert!(PpoConfig::default().validate().is_ok());
    let bad = PpoConfig {
        entropy_coeff: -0.1,
        ..PpoConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = PpoConfig {
        batch_size: 0,
        ..PpoConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = PpoConfig {
        alpha: 0.5,
        ..PpoConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn trained_policy_can_still_generate() {
    // Smoke: a few updates on a toy batch leave the model usable.
    let mut actor = tiny_model(10, 12);
    let reference = actor.snapshot_reference();
    let cfg = PpoConfig {
        actor_lr: 1e-3,
        batch_size: 2,
        ..PpoConfig::default()
    };
    let mut state = PpoState::new(&actor, &cfg);
    for _ in 0..5 {
        let batch = small_batch(vec![1.0, 0.0]);
        ppo_step(&mut actor, &reference, &mut state, &batch, &cfg, PAD).unwrap();
    }
    assert_eq!(state.updates_done, 5);
    let mut rng = Rng::new(1);
    let out = actor
        .generate(&[2, 3], 4, Sampling::Temperature(1.0), EOS, PAD, &mut rng)
        .unwrap();
    assert!(!out.is_empty());
}
