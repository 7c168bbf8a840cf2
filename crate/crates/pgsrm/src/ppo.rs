//! One sequence-level PPO optimization step.
//!
//! The update follows a fixed recipe: concatenate prompts and responses,
//! mask losses to non-pad response tokens, estimate advantages as
//! `reward - stop_grad(value)`, and optimize
//!
//! ```text
//! L_actor  = L_policy - beta_ent * H + lambda_KL * D_KL
//! L_critic = lambda_v * MSE(v, r)
//! ```
//!
//! with separate Adam optimizers and global-norm gradient clipping. There is
//! deliberately no ratio clipping anywhere in the policy loss; the KL penalty
//! against a frozen reference is the only trust-region mechanism, and its
//! coefficient can follow a banded adaptive controller.

use thiserror::Error;

use crate::num::Real;
use crate::optim::{clip_global_norm, Adam};
use crate::policy::{ForwardPass, PolicyError, PolicyModel, ReferencePolicy, TokenMatrix};
use crate::tensor::{Graph, Tensor, TensorError, TensorId};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("batch carries {got} rewards for {want} episodes")]
    RewardCount { got: usize, want: usize },
    #[error("response row {row} is empty")]
    EmptyResponse { row: usize },
    #[error("non-finite quantities in update step; no parameters were changed.\n{dump}")]
    NonFinite { dump: String },
    #[error("invalid PPO configuration: {0}")]
    BadConfig(String),
}

pub type Result<T> = std::result::Result<T, PpoError>;

/// Whether the KL coefficient adapts toward a target divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlMode {
    Fixed,
    Adaptive,
}

impl KlMode {
    pub fn parse(s: &str) -> Option<KlMode> {
        match s {
            "fixed" => Some(KlMode::Fixed),
            "adaptive" => Some(KlMode::Adaptive),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KlMode::Fixed => "fixed",
            KlMode::Adaptive => "adaptive",
        }
    }
}

/// All coefficients of one PPO update.
#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    /// Initial KL penalty coefficient.
    pub kl_coeff: f64,
    pub kl_mode: KlMode,
    /// Target divergence for the adaptive controller.
    pub target_kl: f64,
    pub max_grad_norm: f64,
    /// Episodes per update.
    pub batch_size: usize,
    /// Cosine sharpening exponent forwarded to the reward.
    pub alpha: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            actor_lr: 1e-5,
            critic_lr: 1e-4,
            entropy_coeff: 0.01,
            value_coeff: 0.5,
            kl_coeff: 5e-5,
            kl_mode: KlMode::Adaptive,
            target_kl: 0.8,
            max_grad_norm: 1.0,
            batch_size: 50,
            alpha: 4.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("entropy_coeff", self.entropy_coeff),
            ("value_coeff", self.value_coeff),
            ("kl_coeff", self.kl_coeff),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) {
                return Err(PpoError::BadConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        let positive = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("max_grad_norm", self.max_grad_norm),
            ("target_kl", self.target_kl),
            ("alpha", self.alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(PpoError::BadConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.batch_size < 1 {
            return Err(PpoError::BadConfig("batch_size must be >= 1".into()));
        }
        if self.alpha < 1.0 {
            return Err(PpoError::BadConfig(format!(
                "alpha must be >= 1, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Diagnostics logged after every update.
#[derive(Debug, Clone, Copy)]
pub struct UpdateMetrics {
    /// 1-based update index.
    pub step: usize,
    pub mean_reward: f32,
    pub policy_loss: f32,
    pub value_loss: f32,
    pub entropy: f32,
    pub kl: f32,
    /// KL coefficient after this step's adaptation (the value the next
    /// update will use).
    pub kl_coeff: f32,
    pub pre_clip_grad_norm: f32,
}

impl UpdateMetrics {
    pub fn all_finite(&self) -> bool {
        [
            self.mean_reward,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.kl,
            self.kl_coeff,
            self.pre_clip_grad_norm,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// A reward-annotated batch of episodes, already tokenized.
#[derive(Debug, Clone)]
pub struct EpisodeBatch {
    pub prompts: TokenMatrix,
    pub responses: TokenMatrix,
    pub rewards: Vec<f32>,
}

/// Builds `X = [P; Y]` with its attention and response masks.
///
/// `m_attn` marks non-pad positions of `X`; `m_resp` is 1 only on non-pad
/// response positions (never on the prompt span). Every response row must
/// contain at least one real token.
pub fn build_masks<S: Real>(
    prompts: &TokenMatrix,
    responses: &TokenMatrix,
    pad_id: u32,
) -> Result<(TokenMatrix, Vec<S>, Vec<S>)> {
    assert_eq!(prompts.rows, responses.rows, "row count mismatch");
    for r in 0..responses.rows {
        if responses.row(r).iter().all(|&id| id == pad_id) {
            return Err(PpoError::EmptyResponse { row: r });
        }
    }
    let x = prompts.concat(responses);
    let m_attn: Vec<S> = x.attn_mask(pad_id);
    let mut m_resp = vec![S::ZERO; x.rows * x.cols];
    for r in 0..x.rows {
        for c in 0..responses.cols {
            if responses.row(r)[c] != pad_id {
                m_resp[r * x.cols + prompts.cols + c] = S::ONE;
            }
        }
    }
    Ok((x, m_attn, m_resp))
}

/// Banded doubling/halving controller for the KL coefficient: doubles above
/// `1.5 * target`, halves below `target / 1.5`, clamps to `[1e-8, 1.0]`.
pub fn adapt_kl(coeff: f64, measured_kl: f64, target_kl: f64) -> f64 {
    let next = if measured_kl > 1.5 * target_kl {
        coeff * 2.0
    } else if measured_kl < target_kl / 1.5 {
        coeff / 2.0
    } else {
        coeff
    };
    next.clamp(1e-8, 1.0)
}

/// Mutable KL-coefficient state across updates.
#[derive(Debug, Clone)]
pub struct KlController {
    mode: KlMode,
    coeff: f64,
    target: f64,
}

impl KlController {
    pub fn new(cfg: &PpoConfig) -> Self {
        Self {
            mode: cfg.kl_mode,
            coeff: cfg.kl_coeff,
            target: cfg.target_kl,
        }
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    /// Feeds one measured divergence into the controller.
    pub fn observe(&mut self, measured_kl: f64) {
        if self.mode == KlMode::Adaptive {
            self.coeff = adapt_kl(self.coeff, measured_kl, self.target);
        }
    }
}

/// Mean squared error between predicted values and rewards, on the graph.
pub fn value_loss<S: Real>(g: &mut Graph<S>, v: TensorId, rewards: &[S]) -> Result<TensorId> {
    let target = g.constant(Tensor::from_vec(rewards.to_vec()));
    Ok(g.mse(v, target)?)
}

/// Graph handles for every loss term of one update, plus the stop-gradient
/// advantages. Shared by the trainer and the finite-difference oracle.
pub struct StepLosses {
    pub logprobs: TensorId,
    pub values: TensorId,
    /// Leaves of the value head (weight, bias), for critic gradient harvest.
    pub value_head_leaves: [TensorId; 2],
    pub advantages: Vec<f64>,
    pub policy_loss: TensorId,
    pub value_loss: TensorId,
    pub entropy: TensorId,
    pub kl: TensorId,
    pub actor_loss: TensorId,
    pub critic_loss: TensorId,
}

/// The three loss terms derived purely from actor logits.
pub struct SequenceLosses {
    pub logprobs: TensorId,
    pub policy_loss: TensorId,
    pub entropy: TensorId,
    pub kl: TensorId,
}

/// Assembles the logit-derived losses from a `[B, T, V]` logits node:
/// next-token log-probs over `X[:, 1:]`, the advantage-weighted policy loss,
/// masked mean entropy, and the masked KL against reference log-probs. All
/// three are masked to `m_resp[:, 1:]`, so prompt positions carry no weight.
///
/// The pad token is excluded from the distribution, mirroring the sampler:
/// pad is not an action, and leaving it in the training softmax turns it
/// into a gradient sink (never sampled, so never pushed down by negative
/// advantages, it absorbs probability mass until sampled-token log-probs
/// collapse).
pub fn sequence_losses_from_logits<S: Real>(
    g: &mut Graph<S>,
    logits: TensorId,
    x: &TokenMatrix,
    m_resp: &[S],
    ref_logprobs: &[S],
    adv_per_row: &[S],
    pad_id: u32,
) -> Result<SequenceLosses> {
    let (b, t) = (x.rows, x.cols);
    let logits = mask_pad_column(g, logits, pad_id)?;
    let sliced = g.drop_last_time(logits)?;
    let targets = shifted_targets(x);
    let logprobs = g.softmax_logprobs(sliced, &targets)?;

    let mut resp_shift = vec![S::ZERO; b * (t - 1)];
    let mut adv_broadcast = vec![S::ZERO; b * (t - 1)];
    for r in 0..b {
        for c in 0..t - 1 {
            resp_shift[r * (t - 1) + c] = m_resp[r * t + c + 1];
            adv_broadcast[r * (t - 1) + c] = adv_per_row[r];
        }
    }
    let resp_shift_leaf =
        g.constant(Tensor::new(vec![b, t - 1], resp_shift).expect("mask shape"));
    let adv_leaf = g.constant(Tensor::new(vec![b, t - 1], adv_broadcast).expect("adv shape"));

    let weighted = g.mul(logprobs, adv_leaf)?;
    let mean = g.masked_mean(weighted, resp_shift_leaf)?;
    let policy_loss = g.scale(mean, -S::ONE)?;

    let entropy = g.entropy(sliced, resp_shift_leaf)?;

    let ref_leaf = g.constant(
        Tensor::new(vec![b, t - 1], ref_logprobs.to_vec()).expect("ref logprob shape"),
    );
    let diff = g.sub(logprobs, ref_leaf)?;
    let kl = g.masked_mean(diff, resp_shift_leaf)?;

    Ok(SequenceLosses {
        logprobs,
        policy_loss,
        entropy,
        kl,
    })
}

/// Adds a constant `-1e9` bias to the pad column of a `[.. x V]` logits
/// node, removing pad from the softmax support.
fn mask_pad_column<S: Real>(g: &mut Graph<S>, logits: TensorId, pad_id: u32) -> Result<TensorId> {
    let v = *g.value(logits).shape().last().expect("logits have a vocab axis");
    let mut bias = vec![S::ZERO; v];
    bias[pad_id as usize] = S::from_f64(-1e9);
    let bias_leaf = g.constant(Tensor::from_vec(bias));
    Ok(g.add_bias(logits, bias_leaf)?)
}

/// Runs the reference forward pass (no gradients) and returns its next-token
/// log-probs over `X[:, 1:]`, flattened `[B * (T-1)]`, with pad excluded
/// from the distribution.
pub fn reference_logprobs<S: Real>(
    reference: &PolicyModel<S>,
    x: &TokenMatrix,
    m_attn: &[S],
    pad_id: u32,
) -> Result<Vec<S>> {
    let mut g: Graph<S> = Graph::new();
    let pass = reference.forward_on_graph(&mut g, x, m_attn, false)?;
    let logits = mask_pad_column(&mut g, pass.logits, pad_id)?;
    let sliced = g.drop_last_time(logits)?;
    let targets = shifted_targets(x);
    let lp = g.softmax_logprobs(sliced, &targets)?;
    Ok(g.value(lp).data().to_vec())
}

fn shifted_targets(x: &TokenMatrix) -> Vec<usize> {
    let mut targets = Vec::with_capacity(x.rows * (x.cols - 1));
    for r in 0..x.rows {
        for c in 1..x.cols {
            targets.push(x.row(r)[c] as usize);
        }
    }
    targets
}

/// Records every loss term of one update on `g`, given the actor's recorded
/// forward pass and the reference log-probs.
#[allow(clippy::too_many_arguments)]
pub fn build_step_losses<S: Real>(
    g: &mut Graph<S>,
    actor: &PolicyModel<S>,
    pass: &ForwardPass,
    ref_logprobs: &[S],
    x: &TokenMatrix,
    m_resp: &[S],
    rewards: &[S],
    entropy_coeff: S,
    value_coeff: S,
    kl_coeff: S,
    pad_id: u32,
) -> Result<StepLosses> {
    build_step_losses_with(
        g,
        actor,
        pass,
        ref_logprobs,
        x,
        m_resp,
        rewards,
        entropy_coeff,
        value_coeff,
        kl_coeff,
        pad_id,
        None,
    )
}

/// [`build_step_losses`] with optionally pinned advantages.
///
/// The advantage is `reward - stop_grad(value)`; a finite-difference oracle
/// re-evaluating the loss under perturbed parameters must keep the base
/// advantages fixed to differentiate the same function the backward pass
/// differentiates.
#[allow(clippy::too_many_arguments)]
pub fn build_step_losses_with<S: Real>(
    g: &mut Graph<S>,
    actor: &PolicyModel<S>,
    pass: &ForwardPass,
    ref_logprobs: &[S],
    x: &TokenMatrix,
    m_resp: &[S],
    rewards: &[S],
    entropy_coeff: S,
    value_coeff: S,
    kl_coeff: S,
    pad_id: u32,
    fixed_advantages: Option<&[f64]>,
) -> Result<StepLosses> {
    let (b, t) = (x.rows, x.cols);
    if rewards.len() != b {
        return Err(PpoError::RewardCount {
            got: rewards.len(),
            want: b,
        });
    }

    // Values at each row's last non-pad response token.
    let last_idx = PolicyModel::<S>::last_response_indices(m_resp, b, t)?;
    let (values, value_head_leaves) = actor.value_head_on_graph(g, pass.hidden, &last_idx, true)?;

    // Advantages: reward minus stop-gradient value.
    let advantages: Vec<f64> = match fixed_advantages {
        Some(a) => a.to_vec(),
        None => {
            let v_now = g.value(values).data();
            rewards
                .iter()
                .zip(v_now)
                .map(|(&r, &v)| (r - v).to_f64())
                .collect()
        }
    };
    let adv_per_row: Vec<S> = advantages.iter().map(|&a| S::from_f64(a)).collect();

    let seq =
        sequence_losses_from_logits(g, pass.logits, x, m_resp, ref_logprobs, &adv_per_row, pad_id)?;

    // L_value = MSE(v, r)
    let vloss = value_loss(g, values, rewards)?;

    // L_actor = L_policy - beta_ent * H + lambda_KL * D_KL
    let ent_term = g.scale(seq.entropy, -entropy_coeff)?;
    let kl_term = g.scale(seq.kl, kl_coeff)?;
    let partial = g.add(seq.policy_loss, ent_term)?;
    let actor_loss = g.add(partial, kl_term)?;

    // L_critic = lambda_v * L_value
    let critic_loss = g.scale(vloss, value_coeff)?;

    Ok(StepLosses {
        logprobs: seq.logprobs,
        values,
        value_head_leaves,
        advantages,
        policy_loss: seq.policy_loss,
        value_loss: vloss,
        entropy: seq.entropy,
        kl: seq.kl,
        actor_loss,
        critic_loss,
    })
}

/// Every intermediate of one update, for trace-equivalence checks.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub actor_logprobs: Vec<f32>,
    pub ref_logprobs: Vec<f32>,
    pub values: Vec<f32>,
    pub advantages: Vec<f64>,
    pub policy_loss: f32,
    pub value_loss: f32,
    pub entropy: f32,
    pub kl: f32,
    pub actor_loss: f32,
    pub critic_loss: f32,
}

/// Optimizer and controller state persisting across updates.
#[derive(Debug, Clone)]
pub struct PpoState {
    pub actor_opt: Adam<f32>,
    pub critic_opt: Adam<f32>,
    pub kl: KlController,
    pub updates_done: usize,
}

impl PpoState {
    pub fn new(model: &PolicyModel<f32>, cfg: &PpoConfig) -> Self {
        let actor_sizes: Vec<usize> = model.actor_params().iter().map(|t| t.numel()).collect();
        let critic_sizes: Vec<usize> = model.value_params().iter().map(|t| t.numel()).collect();
        Self {
            actor_opt: Adam::new(&actor_sizes),
            critic_opt: Adam::new(&critic_sizes),
            kl: KlController::new(cfg),
            updates_done: 0,
        }
    }
}

/// Executes one PPO step: forward passes, loss assembly, both backward
/// sweeps, clipping, the two optimizer updates, and KL adaptation.
///
/// If any logged quantity is non-finite the step aborts with a diagnostics
/// dump and no parameter is touched.
pub fn ppo_step(
    actor: &mut PolicyModel<f32>,
    reference: &ReferencePolicy<f32>,
    state: &mut PpoState,
    batch: &EpisodeBatch,
    cfg: &PpoConfig,
    pad_id: u32,
) -> Result<UpdateMetrics> {
    ppo_step_traced(actor, reference, state, batch, cfg, pad_id).map(|(m, _)| m)
}

pub fn ppo_step_traced(
    actor: &mut PolicyModel<f32>,
    reference: &ReferencePolicy<f32>,
    state: &mut PpoState,
    batch: &EpisodeBatch,
    cfg: &PpoConfig,
    pad_id: u32,
) -> Result<(UpdateMetrics, StepTrace)> {
    let (x, m_attn, m_resp) = build_masks::<f32>(&batch.prompts, &batch.responses, pad_id)?;

    // Reference log-probs, no gradients.
    let ref_lp = reference_logprobs(reference.model(), &x, &m_attn, pad_id)?;

    // Actor forward with gradients, then every loss term.
    let mut g: Graph<f32> = Graph::new();
    let pass = actor.forward_on_graph(&mut g, &x, &m_attn, true)?;
    let kl_coeff_used = state.kl.coeff() as f32;
    let losses = build_step_losses(
        &mut g,
        actor,
        &pass,
        &ref_lp,
        &x,
        &m_resp,
        &batch.rewards,
        cfg.entropy_coeff as f32,
        cfg.value_coeff as f32,
        kl_coeff_used,
        pad_id,
    )?;

    // Gradient step on the actor parameters.
    g.backward(losses.actor_loss)?;
    let mut actor_grads: Vec<Vec<f32>> = pass
        .actor_leaves
        .iter()
        .map(|&id| match g.grad(id) {
            Some(grad) => grad.to_vec(),
            None => vec![0.0; g.value(id).numel()],
        })
        .collect();

    // Critic gradients from a fresh sweep; only the value head is updated.
    g.clear_grads();
    g.backward(losses.critic_loss)?;
    let critic_grads: Vec<Vec<f32>> = losses
        .value_head_leaves
        .iter()
        .map(|&id| match g.grad(id) {
            Some(grad) => grad.to_vec(),
            None => vec![0.0; g.value(id).numel()],
        })
        .collect();

    let trace = StepTrace {
        actor_logprobs: g.value(losses.logprobs).data().to_vec(),
        ref_logprobs: ref_lp.clone(),
        values: g.value(losses.values).data().to_vec(),
        advantages: losses.advantages.clone(),
        policy_loss: g.value(losses.policy_loss).item(),
        value_loss: g.value(losses.value_loss).item(),
        entropy: g.value(losses.entropy).item(),
        kl: g.value(losses.kl).item(),
        actor_loss: g.value(losses.actor_loss).item(),
        critic_loss: g.value(losses.critic_loss).item(),
    };

    let pre_clip = clip_global_norm(&mut actor_grads, cfg.max_grad_norm as f32);
    let mut critic_grads = critic_grads;
    clip_global_norm(&mut critic_grads, cfg.max_grad_norm as f32);

    let mean_reward = batch.rewards.iter().sum::<f32>() / batch.rewards.len().max(1) as f32;
    let mut metrics = UpdateMetrics {
        step: state.updates_done + 1,
        mean_reward,
        policy_loss: trace.policy_loss,
        value_loss: trace.value_loss,
        entropy: trace.entropy,
        kl: trace.kl,
        kl_coeff: kl_coeff_used,
        pre_clip_grad_norm: pre_clip,
    };

    let grads_finite = actor_grads
        .iter()
        .chain(critic_grads.iter())
        .flat_map(|v| v.iter())
        .all(|v| v.is_finite());
    if !metrics.all_finite() || !grads_finite {
        return Err(PpoError::NonFinite {
            dump: format!(
                "step {}: mean_reward={} policy_loss={} value_loss={} entropy={} kl={} \
                 grad_norm={} rewards={:?} advantages={:?} values={:?}",
                metrics.step,
                metrics.mean_reward,
                metrics.policy_loss,
                metrics.value_loss,
                metrics.entropy,
                metrics.kl,
                metrics.pre_clip_grad_norm,
                batch.rewards,
                trace.advantages,
                trace.values,
            ),
        });
    }

    {
        let mut params = actor.actor_params_mut();
        let mut slices: Vec<&mut [f32]> = params.iter_mut().map(|t| t.data_mut()).collect();
        state
            .actor_opt
            .step(&mut slices, &actor_grads, cfg.actor_lr as f32);
    }
    {
        let mut params = actor.value_params_mut();
        let mut slices: Vec<&mut [f32]> = params.iter_mut().map(|t| t.data_mut()).collect();
        state
            .critic_opt
            .step(&mut slices, &critic_grads, cfg.critic_lr as f32);
    }

    state.kl.observe(trace.kl as f64);
    metrics.kl_coeff = state.kl.coeff() as f32;
    state.updates_done += 1;
    Ok((metrics, trace))
}

#[cfg(test)]
mod tests;
