//! Supervised control: teach the policy its task's reference outputs with a
//! plain next-token cross-entropy on response tokens. Verifies the
//! architecture and optimizer can represent the mapping at all, independent
//! of exploration.
//!
//! ```bash
//! cargo run --example supervised_sanity -- [steps]
//! ```

use pgsrm::optim::{clip_global_norm, Adam};
use pgsrm::policy::{ModelConfig, PolicyModel, Sampling, TokenMatrix, Tokenizer};
use pgsrm::ppo::build_masks;
use pgsrm::tasks::{builtin_dataset, TaskId};
use pgsrm::{Graph, Rng, Tensor};

fn main() {
    let steps: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("steps must be a number"))
        .unwrap_or(600);

    let ds = builtin_dataset(TaskId::ColorMix, usize::MAX);
    let corpus: Vec<String> = ds
        .records()
        .iter()
        .flat_map(|r| {
            [
                r.child_prompt.clone(),
                r.parent_output.clone(),
                format!(" {}", r.parent_output),
            ]
        })
        .collect();
    let tok = Tokenizer::word_level(&corpus);
    let mut rng = Rng::new(7).derive("model-init");
    let mut model: PolicyModel<f32> = PolicyModel::init(
        ModelConfig {
            vocab: tok.vocab_size(),
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            context: 64,
        },
        &mut rng,
    )
    .unwrap();

    let prompts: Vec<Vec<u32>> = ds
        .records()
        .iter()
        .map(|r| tok.encode(&r.child_prompt).unwrap())
        .collect();
    let answers: Vec<Vec<u32>> = ds
        .records()
        .iter()
        .map(|r| {
            let mut ids = tok.encode(&r.parent_output).unwrap();
            ids.push(tok.eos_id());
            ids
        })
        .collect();

    let sizes: Vec<usize> = model.actor_params().iter().map(|t| t.numel()).collect();
    let mut opt: Adam<f32> = Adam::new(&sizes);
    let mut data_rng = Rng::new(3);

    for step in 0..steps {
        // Random batch of 18 (full table) supervised pairs.
        let mut p_rows = Vec::new();
        let mut y_rows = Vec::new();
        for _ in 0..18 {
            let i = data_rng.below(ds.len());
            p_rows.push(prompts[i].clone());
            y_rows.push(answers[i].clone());
        }
        let p = TokenMatrix::from_rows(&p_rows, tok.pad_id());
        let y = TokenMatrix::from_rows(&y_rows, tok.pad_id());
        let (x, m_attn, m_resp) = build_masks::<f32>(&p, &y, tok.pad_id()).unwrap();

        let mut g: Graph<f32> = Graph::new();
        let pass = model.forward_on_graph(&mut g, &x, &m_attn, true).unwrap();
        let sliced = g.drop_last_time(pass.logits).unwrap();
        let mut targets = Vec::new();
        for r in 0..x.rows {
            for c in 1..x.cols {
                targets.push(x.row(r)[c] as usize);
            }
        }
        let lp = g.softmax_logprobs(sliced, &targets).unwrap();
        let mut shift = vec![0.0f32; x.rows * (x.cols - 1)];
        for r in 0..x.rows {
            for c in 0..x.cols - 1 {
                shift[r * (x.cols - 1) + c] = m_resp[r * x.cols + c + 1];
            }
        }
        let mask = g.constant(Tensor::new(vec![x.rows, x.cols - 1], shift).unwrap());
        let mean_lp = g.masked_mean(lp, mask).unwrap();
        let loss = g.scale(mean_lp, -1.0).unwrap();
        g.backward(loss).unwrap();

        let mut grads: Vec<Vec<f32>> = pass
            .actor_leaves
            .iter()
            .map(|&id| g.grad(id).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; g.value(id).numel()]))
            .collect();
        clip_global_norm(&mut grads, 1.0);
        let mut params = model.actor_params_mut();
        let mut slices: Vec<&mut [f32]> = params.iter_mut().map(|t| t.data_mut()).collect();
        opt.step(&mut slices, &grads, 1.5e-3);

        if (step + 1) % 100 == 0 {
            let mut correct = 0;
            let mut grng = Rng::new(0);
            for (i, r) in ds.records().iter().enumerate() {
                let out = model
                    .generate(&prompts[i], 4, Sampling::Greedy, tok.eos_id(), tok.pad_id(), &mut grng)
                    .unwrap();
                let text = tok.decode(&out).unwrap();
                if text.trim() == r.parent_output {
                    correct += 1;
                }
            }
            println!(
                "step {:4}: loss {:.4}  greedy exact {}/{}",
                step + 1,
                g.value(loss).item(),
                correct,
                ds.len()
            );
        }
    }
}
