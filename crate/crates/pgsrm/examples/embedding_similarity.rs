//! Load word vectors, pool sentences, and turn cosine similarity into the
//! dense training reward.
//!
//! ```bash
//! cargo run --example embedding_similarity
//! ```

use pgsrm::embedding::{cosine, EmbeddingSpace};
use pgsrm::reward::pgsrm_reward;

fn main() {
    // A miniature word-vector file in the word2vec text format.
    let file = "\
5 4
purple 0.9 0.1 0.0 0.2
violet 0.8 0.2 0.1 0.2
green 0.0 0.9 0.3 0.1
orange 0.1 0.0 0.9 0.3
gray 0.3 0.3 0.3 0.3";
    let space = EmbeddingSpace::parse_word_vectors(file).expect("valid vector file");
    println!(
        "loaded {} vectors of dimension {} ({})",
        space.len(),
        space.dimension(),
        space.provider_kind()
    );

    let parent = space.embed("purple").unwrap();
    println!("\n{:<22} cosine  alpha=1  alpha=4", "child output");
    for child in ["purple", "violet", "green", "orange", "gray stones"] {
        let e = space.embed(child).unwrap();
        let cos = cosine(&parent, &e).unwrap();
        let r1 = pgsrm_reward(&parent, &e, 1.0).unwrap().value();
        let r4 = pgsrm_reward(&parent, &e, 4.0).unwrap().value();
        println!("{child:<22} {cos:+.4} {r1:.4}   {r4:.4}");
    }

    // The hash-synthetic provider needs no data files and rewards token
    // overlap, which is what makes it usable as a pipeline test double.
    let hash = EmbeddingSpace::hash_synthetic(64, 0);
    let target = hash.embed("purple").unwrap();
    println!("\nhash-synthetic space, target 'purple':");
    for child in ["purple", "purple stone", "deep purple stone", "granite"] {
        let e = hash.embed(child).unwrap();
        let r = pgsrm_reward(&target, &e, 4.0).unwrap().value();
        println!("  reward(\"{child}\") = {r:.4}");
    }
}
