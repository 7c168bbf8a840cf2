//! Walk the five built-in tasks: datasets, prompt templates, the rule-based
//! reference oracle, and the JSONL ingestion / export round trip.
//!
//! ```bash
//! cargo run --example tasks_tour
//! ```

use pgsrm::tasks::{
    builtin_dataset, load_parent_outputs, render_child_prompt, write_parent_outputs, TaskId,
};

fn main() {
    for task in TaskId::ALL {
        let ds = builtin_dataset(task, usize::MAX);
        let first = &ds.records()[0];
        println!("== {} ({} records)", task, ds.len());
        println!("   input         : {:?}", first.raw_input);
        println!("   child prompt  : {:?}", first.child_prompt);
        println!("   parent output : {:?}", first.parent_output);
    }

    // Reference outputs can be exported and re-ingested, so a stronger
    // external model can replace the built-in oracle without code changes.
    let ds = builtin_dataset(TaskId::Antonym, 5);
    let path = std::env::temp_dir().join("pgsrm-example-parents.jsonl");
    write_parent_outputs(&ds, &path).expect("write parent outputs");
    let loaded = load_parent_outputs(&path, TaskId::Antonym).expect("re-ingest parent outputs");
    println!("\nround-tripped {} reference records through {}", loaded.len(), path.display());
    println!(
        "first line of the file:\n  {}",
        std::fs::read_to_string(&path).unwrap().lines().next().unwrap()
    );

    let rendered = render_child_prompt(TaskId::Antonym, "bright").unwrap();
    println!("\ntemplate for a new input: {rendered:?}");
}
