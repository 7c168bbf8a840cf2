//! Build a task tokenizer, initialize a fresh policy, and sample from it.
//!
//! A freshly initialized model is near-uniform over its vocabulary, so the
//! samples are noise; training is what concentrates them.
//!
//! ```bash
//! cargo run --example sample_untrained
//! ```

use pgsrm::policy::{ModelConfig, PolicyModel, Sampling, TokenMatrix, Tokenizer};
use pgsrm::tasks::{builtin_dataset, TaskId};
use pgsrm::Rng;

fn main() {
    let ds = builtin_dataset(TaskId::Antonym, usize::MAX);
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
    println!("vocabulary size: {}", tok.vocab_size());

    let mut rng = Rng::new(42);
    let model: PolicyModel<f32> = PolicyModel::init(
        ModelConfig {
            vocab: tok.vocab_size(),
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            context: 64,
        },
        &mut rng,
    )
    .expect("valid config");

    let prompt_text = &ds.records()[0].child_prompt;
    let prompt = tok.encode(prompt_text).expect("in-vocabulary prompt");
    println!("prompt: {prompt_text:?} ({} tokens)", prompt.len());

    // Entropy of the first-step distribution, against the uniform bound.
    let x = TokenMatrix::new(1, prompt.len(), prompt.clone());
    let mask: Vec<f32> = x.attn_mask(tok.pad_id());
    let mut g = pgsrm::Graph::new();
    let pass = model.forward_on_graph(&mut g, &x, &mask, false).unwrap();
    let ent = g.entropy_rows(pass.logits).unwrap();
    let h = g.value(ent).data()[prompt.len() - 1];
    println!(
        "first-step entropy: {h:.3} nats (uniform would be {:.3})",
        (tok.vocab_size() as f32).ln()
    );

    let mut sample_rng = Rng::new(7);
    for i in 0..5 {
        let out = model
            .generate(
                &prompt,
                6,
                Sampling::Temperature(1.0),
                tok.eos_id(),
                tok.pad_id(),
                &mut sample_rng,
            )
            .unwrap();
        println!("sample {i}: {:?}", tok.decode(&out).unwrap());
    }
    let greedy = model
        .generate(&prompt, 6, Sampling::Greedy, tok.eos_id(), tok.pad_id(), &mut sample_rng)
        .unwrap();
    println!("greedy  : {:?}", tok.decode(&greedy).unwrap());
}
