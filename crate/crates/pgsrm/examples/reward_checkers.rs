//! The sparse binary baseline: per-task correctness checkers, the checker
//! normalization contract, and the sentiment template rule.
//!
//! ```bash
//! cargo run --example reward_checkers
//! ```

use pgsrm::reward::{binary_reward, normalize, sentiment_template_check, Lexicons};
use pgsrm::tasks::TaskId;

fn main() {
    println!("normalization: {:?} -> {:?}", "  Light  Blue! ", normalize("  Light  Blue! "));

    println!("\nequality checkers (lowercase, trimmed, collapsed, terminal punctuation stripped):");
    for (task, child, parent) in [
        (TaskId::ColorMix, "purple", "purple"),
        (TaskId::ColorMix, "Purple ", "purple"),
        (TaskId::ColorMix, "violet", "purple"),
        (TaskId::Antonym, "cold.", "cold"),
        (TaskId::Categorize, "FRUIT", "fruit"),
    ] {
        let r = binary_reward(task, child, parent).value();
        println!("  {:<12} {:?} vs {:?} -> {}", task.name(), child, parent, r);
    }

    println!("\ncopy keeps punctuation, capitalization, and spacing:");
    for child in ["The sky is blue.", "the sky is blue", " The sky is blue. "] {
        let r = binary_reward(TaskId::Copy, child, "The sky is blue.").value();
        println!("  {child:?} -> {r}");
    }

    let lex = Lexicons::builtin();
    println!(
        "\nsentiment template rule ({} negative / {} positive lexicon tokens):",
        lex.negative.len(),
        lex.positive.len()
    );
    for text in [
        "I feel empty today.",
        "I'm drained and tired.",
        "everything is gloomy",  // no first-person pronoun
        "I feel fine today.",    // no negative token
        "I feel sad but happy.", // positive token vetoes
    ] {
        println!("  {:?} -> {}", text, sentiment_template_check(text, lex));
    }
}
