//! Finite-difference verification of the actor and critic gradients.
//!
//! The oracle re-evaluates the recorded losses under perturbed parameters
//! (forward values only, never the backward pass) in `f64`, with advantages
//! pinned to their base values so the differentiated function matches the
//! stop-gradient semantics of the update.

use std::time::{Duration, Instant};

use crate::policy::{ModelConfig, PolicyModel, TokenMatrix};
use crate::ppo::{build_masks, build_step_losses_with, reference_logprobs, PpoError, StepLosses};
use crate::rng::Rng;
use crate::tensor::Graph;

const EPS: f64 = 1e-4;
const PAD: u32 = 0;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub batches: usize,
    pub parameters_checked: usize,
    pub max_rel_error_actor: f64,
    pub max_rel_error_critic: f64,
    pub tolerance: f64,
    pub elapsed: Duration,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error_actor < self.tolerance && self.max_rel_error_critic < self.tolerance
    }
}

struct Case {
    x: TokenMatrix,
    m_attn: Vec<f64>,
    m_resp: Vec<f64>,
    rewards: Vec<f64>,
    ref_logprobs: Vec<f64>,
    advantages: Vec<f64>,
}

// Coefficients sized so every term contributes visibly to the gradient.
const ENTROPY_COEFF: f64 = 0.01;
const VALUE_COEFF: f64 = 0.5;
const KL_COEFF: f64 = 0.05;

fn losses_on(
    actor: &PolicyModel<f64>,
    case: &Case,
    requires_grad: bool,
) -> Result<(Graph<f64>, crate::policy::ForwardPass, StepLosses), PpoError> {
    let mut g: Graph<f64> = Graph::new();
    let pass = actor.forward_on_graph(&mut g, &case.x, &case.m_attn, requires_grad)?;
    let losses = build_step_losses_with(
        &mut g,
        actor,
        &pass,
        &case.ref_logprobs,
        &case.x,
        &case.m_resp,
        &case.rewards,
        ENTROPY_COEFF,
        VALUE_COEFF,
        KL_COEFF,
        PAD,
        Some(&case.advantages),
    )?;
    Ok((g, pass, losses))
}

fn eval_losses(actor: &PolicyModel<f64>, case: &Case) -> (f64, f64) {
    let (g, _, losses) = losses_on(actor, case, false).expect("loss evaluation");
    (
        g.value(losses.actor_loss).item(),
        g.value(losses.critic_loss).item(),
    )
}

fn random_case(actor: &PolicyModel<f64>, reference: &PolicyModel<f64>, rng: &mut Rng) -> Case {
    let vocab = actor.config().vocab as u32;
    let rows = 3;
    let prompt_len = 2 + rng.below(2);
    let mut prompts = Vec::new();
    let mut responses = Vec::new();
    for _ in 0..rows {
        prompts.push(
            (0..prompt_len)
                .map(|_| 2 + rng.below((vocab - 2) as usize) as u32)
                .collect::<Vec<u32>>(),
        );
        let resp_len = 1 + rng.below(3);
        responses.push(
            (0..resp_len)
                .map(|_| 2 + rng.below((vocab - 2) as usize) as u32)
                .collect::<Vec<u32>>(),
        );
    }
    let prompts = TokenMatrix::from_rows(&prompts, PAD);
    let responses = TokenMatrix::from_rows(&responses, PAD);
    let (x, m_attn, m_resp) = build_masks::<f64>(&prompts, &responses, PAD).expect("valid batch");
    let rewards: Vec<f64> = (0..rows).map(|_| rng.next_f64()).collect();
    let ref_logprobs =
        reference_logprobs(reference, &x, &m_attn, PAD).expect("reference pass");

    // Base advantages from the unperturbed model.
    let values = {
        let mut g: Graph<f64> = Graph::new();
        let pass = actor
            .forward_on_graph(&mut g, &x, &m_attn, false)
            .expect("forward");
        let idx = PolicyModel::<f64>::last_response_indices(&m_resp, x.rows, x.cols)
            .expect("responses present");
        let (v, _) = actor
            .value_head_on_graph(&mut g, pass.hidden, &idx, false)
            .expect("value head");
        g.value(v).data().to_vec()
    };
    let advantages: Vec<f64> = rewards.iter().zip(&values).map(|(r, v)| r - v).collect();

    Case {
        x,
        m_attn,
        m_resp,
        rewards,
        ref_logprobs,
        advantages,
    }
}

/// Maximum per-tensor relative error between analytic and central-difference
/// gradients, scaled by the tensor's dominant gradient magnitude.
fn tensor_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-10);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (&a, &n)| m.max((a - n).abs() / scale))
}

/// Runs the full check: analytic gradients of the actor and critic losses
/// against central finite differences on `batches` random batches.
pub fn run(seed: u64, batches: usize, tolerance: f64) -> Result<GradCheckReport, PpoError> {
    let start = Instant::now();
    let mut rng = Rng::new(seed).derive("gradcheck");
    let cfg = ModelConfig {
        vocab: 20,
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        context: 12,
    };
    let actor: PolicyModel<f64> = PolicyModel::init(cfg, &mut rng)?;
    let reference: PolicyModel<f64> = PolicyModel::init(cfg, &mut rng)?;

    let mut max_actor = 0.0f64;
    let mut max_critic = 0.0f64;
    let mut checked = 0usize;

    for _ in 0..batches {
        let case = random_case(&actor, &reference, &mut rng);

        // Analytic gradients.
        let (mut g, pass, losses) = losses_on(&actor, &case, true)?;
        g.backward(losses.actor_loss)?;
        let actor_grads: Vec<Vec<f64>> = pass
            .actor_leaves
            .iter()
            .map(|&id| match g.grad(id) {
                Some(grad) => grad.to_vec(),
                None => vec![0.0; g.value(id).numel()],
            })
            .collect();
        g.clear_grads();
        g.backward(losses.critic_loss)?;
        let critic_grads: Vec<Vec<f64>> = losses
            .value_head_leaves
            .iter()
            .map(|&id| match g.grad(id) {
                Some(grad) => grad.to_vec(),
                None => vec![0.0; g.value(id).numel()],
            })
            .collect();
        drop(g);

        // Central differences for the actor parameters.
        let n_actor = actor.actor_params().len();
        for ti in 0..n_actor {
            let numel = actor.actor_params()[ti].numel();
            let mut numeric = vec![0.0; numel];
            for ei in 0..numel {
                let mut plus = actor.clone();
                plus.actor_params_mut()[ti].data_mut()[ei] += EPS;
                let mut minus = actor.clone();
                minus.actor_params_mut()[ti].data_mut()[ei] -= EPS;
                let (lp, _) = eval_losses(&plus, &case);
                let (lm, _) = eval_losses(&minus, &case);
                numeric[ei] = (lp - lm) / (2.0 * EPS);
            }
            checked += numel;
            max_actor = max_actor.max(tensor_rel_error(&actor_grads[ti], &numeric));
        }

        // Central differences for the value head.
        for (ti, grad) in critic_grads.iter().enumerate() {
            let numel = actor.value_params()[ti].numel();
            let mut numeric = vec![0.0; numel];
            for ei in 0..numel {
                let mut plus = actor.clone();
                plus.value_params_mut()[ti].data_mut()[ei] += EPS;
                let mut minus = actor.clone();
                minus.value_params_mut()[ti].data_mut()[ei] -= EPS;
                let (_, cp) = eval_losses(&plus, &case);
                let (_, cm) = eval_losses(&minus, &case);
                numeric[ei] = (cp - cm) / (2.0 * EPS);
            }
            checked += numel;
            max_critic = max_critic.max(tensor_rel_error(grad, &numeric));
        }
    }

    Ok(GradCheckReport {
        batches,
        parameters_checked: checked,
        max_rel_error_actor: max_actor,
        max_rel_error_critic: max_critic,
        tolerance,
        elapsed: start.elapsed(),
    })
}
