//! The five built-in tasks: prompt templates, desk-scale datasets, and
//! deterministic rule-based parent oracles.
//!
//! Each task pairs a raw input with a frozen reference output. The built-in
//! oracles are pure lookup tables (a temperature-0 stand-in for a stronger
//! reference model); externally generated reference outputs can be ingested
//! from line-delimited JSON instead via [`load_parent_outputs`].

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task '{0}' (expected one of color_mix, antonym, categorize, copy, sentiment_invert)")]
    UnknownTask(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error at line {line}: {msg}")]
    Validation { line: usize, msg: String },
    #[error("duplicate raw input {input:?}")]
    DuplicateInput { input: String },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("invalid input {input:?} for task {task}: {msg}")]
    InvalidInput {
        task: TaskId,
        input: String,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, TaskError>;

/// Closed enumeration of the five tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskId {
    ColorMix,
    Antonym,
    Categorize,
    Copy,
    SentimentInvert,
}

impl TaskId {
    pub const ALL: [TaskId; 5] = [
        TaskId::ColorMix,
        TaskId::Antonym,
        TaskId::Categorize,
        TaskId::Copy,
        TaskId::SentimentInvert,
    ];

    pub fn parse(s: &str) -> Result<TaskId> {
        match s {
            "color_mix" => Ok(TaskId::ColorMix),
            "antonym" => Ok(TaskId::Antonym),
            "categorize" => Ok(TaskId::Categorize),
            "copy" => Ok(TaskId::Copy),
            "sentiment_invert" => Ok(TaskId::SentimentInvert),
            other => Err(TaskError::UnknownTask(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::ColorMix => "color_mix",
            TaskId::Antonym => "antonym",
            TaskId::Categorize => "categorize",
            TaskId::Copy => "copy",
            TaskId::SentimentInvert => "sentiment_invert",
        }
    }

    /// Default episodes-per-update used for this task.
    pub fn default_batch_size(self) -> usize {
        match self {
            TaskId::ColorMix | TaskId::Antonym | TaskId::Categorize => 50,
            TaskId::Copy | TaskId::SentimentInvert => 10,
        }
    }

    /// Default cap on generated response tokens.
    pub fn default_max_new_tokens(self) -> usize {
        match self {
            TaskId::ColorMix | TaskId::Antonym | TaskId::Categorize => 5,
            TaskId::Copy | TaskId::SentimentInvert => 16,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One prompt with its frozen reference output.
#[derive(Debug, Clone)]
pub struct PromptRecord {
    pub task: TaskId,
    pub raw_input: String,
    pub child_prompt: String,
    pub parent_prompt: String,
    pub parent_output: String,
}

/// Ordered, immutable set of prompt records for one task.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    task: TaskId,
    records: Vec<PromptRecord>,
    sampling_seed: u64,
    truncated: bool,
}

impl TaskDataset {
    pub fn from_records(task: TaskId, records: Vec<PromptRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(TaskError::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.raw_input.as_str()) {
                return Err(TaskError::DuplicateInput {
                    input: r.raw_input.clone(),
                });
            }
        }
        Ok(Self {
            task,
            records,
            sampling_seed: 0,
            truncated: false,
        })
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn records(&self) -> &[PromptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// True when a `size_limit` larger than the table forced truncation to
    /// whatever was available.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn sampling_seed(&self) -> u64 {
        self.sampling_seed
    }

    pub fn with_sampling_seed(mut self, seed: u64) -> Self {
        self.sampling_seed = seed;
        self
    }
}

/// Uniform draw from the dataset, advancing `rng` deterministically.
pub fn sample_prompt<'d>(dataset: &'d TaskDataset, rng: &mut Rng) -> Result<&'d PromptRecord> {
    sample_prompt_index(dataset, rng).map(|i| &dataset.records[i])
}

/// Index form of [`sample_prompt`]; same draw, same stream.
pub fn sample_prompt_index(dataset: &TaskDataset, rng: &mut Rng) -> Result<usize> {
    if dataset.records.is_empty() {
        return Err(TaskError::EmptyDataset);
    }
    Ok(rng.below(dataset.records.len()))
}

// ---- prompt templates ----------------------------------------------------

/// Renders the short task-specific prompt shown to the trainable policy.
/// Byte-stable across runs.
pub fn render_child_prompt(task: TaskId, raw_input: &str) -> Result<String> {
    match task {
        TaskId::ColorMix => {
            let (c1, c2) = split_color_pair(raw_input)?;
            Ok(format!(
                "Mix the two colors and output only one lowercase color name: {c1} and {c2} is => "
            ))
        }
        TaskId::Antonym => Ok(format!("The opposite of '{raw_input}' is ")),
        TaskId::Categorize => Ok(format!(
            "What category does this word belong to: '{raw_input}'?"
        )),
        TaskId::Copy => Ok(format!("Copy this sentence: '{raw_input}'")),
        TaskId::SentimentInvert => Ok(format!("Rewrite this as sad: '{raw_input}'")),
    }
}

/// Renders the instruction-plus-content prompt used to query a reference
/// model offline. Kept so ingested parent outputs can be regenerated.
pub fn render_parent_prompt(task: TaskId, raw_input: &str) -> Result<String> {
    let content = match task {
        TaskId::ColorMix => {
            split_color_pair(raw_input)?;
            format!("{raw_input} =")
        }
        TaskId::Copy => format!("Copy this sentence: '{raw_input}'"),
        _ => raw_input.to_string(),
    };
    Ok(format!("{}\n{}", parent_instruction(task), content))
}

pub fn parent_instruction(task: TaskId) -> &'static str {
    match task {
        TaskId::ColorMix => COLOR_MIX_INSTRUCTION,
        TaskId::Antonym => ANTONYM_INSTRUCTION,
        TaskId::Categorize => CATEGORIZE_INSTRUCTION,
        TaskId::Copy => COPY_INSTRUCTION,
        TaskId::SentimentInvert => SENTIMENT_INSTRUCTION,
    }
}

fn split_color_pair(raw_input: &str) -> Result<(&str, &str)> {
    raw_input
        .split_once(" + ")
        .ok_or_else(|| TaskError::InvalidInput {
            task: TaskId::ColorMix,
            input: raw_input.to_string(),
            msg: "expected 'color1 + color2'".into(),
        })
}

// ---- built-in datasets -----------------------------------------------------

/// Deterministic reference output for a raw input, if the built-in oracle
/// covers it. Pure: same input, same output, always.
pub fn parent_oracle(task: TaskId, raw_input: &str) -> Option<String> {
    match task {
        TaskId::ColorMix => lookup(COLOR_MIX_TABLE, raw_input),
        TaskId::Antonym => lookup(ANTONYM_TABLE, raw_input),
        TaskId::Categorize => lookup(CATEGORIZE_TABLE, raw_input),
        TaskId::Copy => {
            if COPY_SENTENCES.contains(&raw_input) {
                Some(raw_input.to_string())
            } else {
                None
            }
        }
        TaskId::SentimentInvert => sentiment_pairs()
            .iter()
            .find(|(pos, _)| pos == raw_input)
            .map(|(_, neg)| neg.clone()),
    }
}

fn lookup(table: &[(&str, &str)], key: &str) -> Option<String> {
    table
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.to_string())
}

/// Builds the desk-scale dataset for a task, truncated to `size_limit`
/// records. Asking for more than the table holds yields every available
/// record with the truncation flag set; records are never fabricated.
pub fn builtin_dataset(task: TaskId, size_limit: usize) -> TaskDataset {
    assert!(size_limit >= 1, "size_limit must be at least 1");
    let inputs: Vec<String> = match task {
        TaskId::ColorMix => COLOR_MIX_TABLE.iter().map(|(k, _)| k.to_string()).collect(),
        TaskId::Antonym => ANTONYM_TABLE.iter().map(|(k, _)| k.to_string()).collect(),
        TaskId::Categorize => CATEGORIZE_TABLE.iter().map(|(k, _)| k.to_string()).collect(),
        TaskId::Copy => COPY_SENTENCES.iter().map(|s| s.to_string()).collect(),
        TaskId::SentimentInvert => sentiment_pairs().iter().map(|(p, _)| p.clone()).collect(),
    };
    let truncated = size_limit > inputs.len();
    let take = size_limit.min(inputs.len());
    let records: Vec<PromptRecord> = inputs
        .into_iter()
        .take(take)
        .map(|raw| {
            let parent_output = parent_oracle(task, &raw).expect("table input covered by oracle");
            PromptRecord {
                task,
                child_prompt: render_child_prompt(task, &raw).expect("valid table input"),
                parent_prompt: render_parent_prompt(task, &raw).expect("valid table input"),
                parent_output,
                raw_input: raw,
            }
        })
        .collect();
    TaskDataset {
        task,
        records,
        sampling_seed: 0,
        truncated,
    }
}

/// Full table size of the built-in dataset for a task.
pub fn builtin_size(task: TaskId) -> usize {
    match task {
        TaskId::ColorMix => COLOR_MIX_TABLE.len(),
        TaskId::Antonym => ANTONYM_TABLE.len(),
        TaskId::Categorize => CATEGORIZE_TABLE.len(),
        TaskId::Copy => COPY_SENTENCES.len(),
        TaskId::SentimentInvert => sentiment_pairs().len(),
    }
}

// ---- parent-output ingestion ----------------------------------------------

#[derive(Serialize, Deserialize)]
struct ParentOutputRecord {
    prompt: String,
    parent_output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<String>,
}

/// Loads externally generated reference outputs from a line-delimited JSON
/// file with fields `prompt` (the raw task input) and `parent_output`.
pub fn load_parent_outputs(path: impl AsRef<Path>, task: TaskId) -> Result<TaskDataset> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_parent_outputs(&content, task)
}

pub fn parse_parent_outputs(content: &str, task: TaskId) -> Result<TaskDataset> {
    let mut records = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: ParentOutputRecord =
            serde_json::from_str(raw).map_err(|e| TaskError::Parse {
                line,
                msg: e.to_string(),
            })?;
        if rec.parent_output.trim().is_empty() {
            return Err(TaskError::Validation {
                line,
                msg: "parent_output is empty".into(),
            });
        }
        if let Some(declared) = &rec.task {
            if declared != task.name() {
                return Err(TaskError::Validation {
                    line,
                    msg: format!("record is for task '{declared}', expected '{}'", task.name()),
                });
            }
        }
        records.push(PromptRecord {
            task,
            child_prompt: render_child_prompt(task, &rec.prompt)?,
            parent_prompt: render_parent_prompt(task, &rec.prompt)?,
            raw_input: rec.prompt,
            parent_output: rec.parent_output,
        });
    }
    TaskDataset::from_records(task, records)
}

/// Writes a dataset's reference outputs back to the line-delimited format.
pub fn write_parent_outputs(dataset: &TaskDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in &dataset.records {
        let rec = ParentOutputRecord {
            prompt: r.raw_input.clone(),
            parent_output: r.parent_output.clone(),
            task: Some(dataset.task.name().to_string()),
        };
        out.push_str(&serde_json::to_string(&rec).expect("serializable record"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| TaskError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---- tables -----------------------------------------------------------------

const COLOR_MIX_TABLE: &[(&str, &str)] = &[
    ("red + blue", "purple"),
    ("red + yellow", "orange"),
    ("blue + yellow", "green"),
    ("white + black", "gray"),
    ("red + white", "pink"),
    ("blue + white", "light blue"),
    ("green + white", "light green"),
    ("black + red", "dark red"),
    ("black + blue", "dark blue"),
    ("black + green", "dark green"),
    ("red + green", "brown"),
    ("blue + orange", "brown"),
    ("yellow + white", "light yellow"),
    ("purple + white", "light purple"),
    ("red + pink", "pink"),
    ("gray + white", "light gray"),
    ("gray + black", "dark gray"),
    ("yellow + purple", "brown"),
];

const ANTONYM_TABLE: &[(&str, &str)] = &[
    ("hot", "cold"),
    ("up", "down"),
    ("happy", "sad"),
    ("light", "dark"),
    ("old", "young"),
    ("empty", "full"),
    ("big", "small"),
    ("fast", "slow"),
    ("tall", "short"),
    ("strong", "weak"),
    ("early", "late"),
    ("open", "closed"),
    ("loud", "quiet"),
    ("hard", "soft"),
    ("clean", "dirty"),
    ("rich", "poor"),
    ("thick", "thin"),
    ("wide", "narrow"),
    ("deep", "shallow"),
    ("high", "low"),
    ("wet", "dry"),
    ("heavy", "light"),
    ("bright", "dim"),
    ("sharp", "dull"),
    ("smooth", "rough"),
    ("near", "far"),
    ("sweet", "sour"),
    ("warm", "cool"),
    ("young", "old"),
    ("full", "empty"),
    ("small", "big"),
    ("slow", "fast"),
    ("short", "tall"),
    ("weak", "strong"),
    ("late", "early"),
    ("closed", "open"),
    ("quiet", "loud"),
    ("soft", "hard"),
    ("dirty", "clean"),
    ("poor", "rich"),
];

const CATEGORIZE_TABLE: &[(&str, &str)] = &[
    ("apple", "fruit"),
    ("banana", "fruit"),
    ("mango", "fruit"),
    ("cherry", "fruit"),
    ("peach", "fruit"),
    ("grape", "fruit"),
    ("lemon", "fruit"),
    ("plum", "fruit"),
    ("tiger", "animal"),
    ("lion", "animal"),
    ("bear", "animal"),
    ("wolf", "animal"),
    ("horse", "animal"),
    ("rabbit", "animal"),
    ("monkey", "animal"),
    ("deer", "animal"),
    ("rose", "flower"),
    ("tulip", "flower"),
    ("daisy", "flower"),
    ("lily", "flower"),
    ("orchid", "flower"),
    ("sunflower", "flower"),
    ("violet", "flower"),
    ("guitar", "instrument"),
    ("piano", "instrument"),
    ("violin", "instrument"),
    ("drum", "instrument"),
    ("flute", "instrument"),
    ("trumpet", "instrument"),
    ("cello", "instrument"),
    ("carrot", "vegetable"),
    ("potato", "vegetable"),
    ("onion", "vegetable"),
    ("spinach", "vegetable"),
    ("broccoli", "vegetable"),
    ("pepper", "vegetable"),
    ("cucumber", "vegetable"),
    ("lettuce", "vegetable"),
    ("eagle", "bird"),
    ("sparrow", "bird"),
    ("owl", "bird"),
    ("robin", "bird"),
    ("falcon", "bird"),
    ("parrot", "bird"),
    ("crow", "bird"),
    ("pigeon", "bird"),
    ("shirt", "clothing"),
    ("jacket", "clothing"),
    ("sweater", "clothing"),
    ("scarf", "clothing"),
    ("dress", "clothing"),
    ("coat", "clothing"),
    ("sock", "clothing"),
    ("car", "vehicle"),
    ("truck", "vehicle"),
    ("bicycle", "vehicle"),
    ("train", "vehicle"),
    ("boat", "vehicle"),
    ("airplane", "vehicle"),
    ("bus", "vehicle"),
];

const COPY_SENTENCES: &[&str] = &[
    "The sky is blue.",
    "I like green tea.",
    "Dogs bark at night.",
    "The sun rises early.",
    "Birds sing in spring.",
    "We walked to school.",
    "The cat sleeps all day.",
    "Rain fell on the roof.",
    "She reads every evening.",
    "The train was late today.",
    "Bread smells warm and sweet.",
    "He plays chess on Sundays.",
    "The river runs past the mill.",
    "Stars shine over the quiet town.",
];

/// Four seed pairs plus systematic frame-and-lexeme expansion, all
/// deterministic. Every negative rewrite is first-person and carries at least
/// one negative-lexicon token and no positive-lexicon token.
pub fn sentiment_pairs() -> &'static [(String, String)] {
    use std::sync::OnceLock;
    static PAIRS: OnceLock<Vec<(String, String)>> = OnceLock::new();
    PAIRS.get_or_init(|| {
        let mut pairs: Vec<(String, String)> = vec![
            (
                "I feel excited about today.".into(),
                "I feel empty today.".into(),
            ),
            (
                "I'm grateful for everything I have.".into(),
                "I feel like I have nothing left.".into(),
            ),
            (
                "I woke up feeling full of energy.".into(),
                "I woke up feeling drained and tired.".into(),
            ),
            (
                "I feel confident about my future.".into(),
                "I feel unsure and scared about my future.".into(),
            ),
        ];
        let lexemes: [(&str, &str); 6] = [
            ("hopeful", "hopeless"),
            ("cheerful", "gloomy"),
            ("proud", "ashamed"),
            ("calm", "anxious"),
            ("joyful", "miserable"),
            ("glad", "upset"),
        ];
        for (pos, neg) in lexemes {
            pairs.push((
                format!("I feel {pos} about today."),
                format!("I feel {neg} today."),
            ));
            pairs.push((
                format!("I am {pos} about my work."),
                format!("I am {neg} about my work."),
            ));
            pairs.push((
                format!("I feel {pos} this morning."),
                format!("I feel {neg} this morning."),
            ));
        }
        pairs
    })
}

const COLOR_MIX_INSTRUCTION: &str = "You are an AI assistant tasked with combining two colors and
outputting the resulting color name.
For example:
- \"red + blue = \" -> \"purple\"
- \"red + yellow = \" -> \"orange\"
- \"blue + yellow = \" -> \"green\"
- \"white + black = \" -> \"gray\"
If the colors are similar (e.g. \"red + pink\"), output the most
dominant or blended color (e.g. \"light red\" or \"pink\").
Always output a single lowercase color name or a simple descriptive
blend like \"light blue\" or \"dark green\".";

const ANTONYM_INSTRUCTION: &str = "You are an AI assistant that outputs the opposite (antonym) of
a given word.

You will receive an INPUT containing a single English word,
and you must respond with its opposite meaning.

Examples:
- \"hot\" -> \"cold\"
- \"up\" -> \"down\"
- \"happy\" -> \"sad\"
- \"light\" -> \"dark\"
- \"old\" -> \"young\"
- \"empty\" -> \"full\"

Rules:
- Output only a single lowercase word.
- No punctuation, no explanations, no extra words.
- Output must appear as {\"OUTPUT\": \"<word>\"} as required.";

const CATEGORIZE_INSTRUCTION: &str = "You are an AI assistant that identifies the correct category of
a given noun.

Your job:
- Read the input word.
- Output the category it belongs to.
- Use a single, simple lowercase category word.

Examples:
- \"apple\" -> \"fruit\"
- \"tiger\" -> \"animal\"
- \"rose\" -> \"flower\"
- \"guitar\" -> \"instrument\"
- \"carrot\" -> \"vegetable\"
- \"eagle\" -> \"bird\"
- \"shirt\" -> \"clothing\"

Rules:
- Output only one lowercase category word.
- Do NOT return the original word.
- No punctuation, no explanations.
- Output must appear as {\"OUTPUT\": \"<category>\"} as required.";

const COPY_INSTRUCTION: &str = "You are an AI assistant that copies a sentence exactly as given.

You will receive an INPUT containing a short English sentence.
Your job is to output the exact same sentence - unchanged.
The input text will include the 'Copy this sentence: ' string,
ONLY copy the text AFTER this string.

Rules:
- Do not change, paraphrase, simplify, or summarize the sentence.
- Copy it exactly as-is.
- Keep punctuation, capitalization, and spacing identical.
- Output must appear as {\"OUTPUT\": \"<sentence>\"} exactly.";

const SENTIMENT_INSTRUCTION: &str = "You are an AI assistant that rewrites a happy sentence into a sad sentence.

You will receive an INPUT containing a short English sentence written
in a happy, positive tone.
You must rewrite it into a sad, negative, or upsetting version of
the same idea.

Examples:
- \"I feel excited about today.\" -> \"I feel empty today.\"
- \"I'm grateful for everything I have.\" -> \"I feel like I have nothing left.\"
- \"I woke up feeling full of energy.\" -> \"I woke up feeling drained and tired.\"
- \"I feel confident about my future.\" -> \"I feel unsure and scared about my future.\"

Rules:
- Keep the rewriting short (one sentence).
- Keep the meaning aligned but transform the emotional polarity
  to unhappy/sad.
- No profanity.
- Output the rewritten sentence inside this JSON format:
  {\"OUTPUT\": \"<rewritten sentence>\"}";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_table_has_the_canonical_mix() {
        let ds = builtin_dataset(TaskId::ColorMix, 100);
        let rec = ds
            .records()
            .iter()
            .find(|r| r.raw_input == "red + blue")
            .unwrap();
        assert_eq!(rec.parent_output, "purple");
        assert!(ds.is_truncated()); // asked for more than the table holds
    }

    #[test]
    fn antonym_table_has_hot_cold() {
        assert_eq!(parent_oracle(TaskId::Antonym, "hot").unwrap(), "cold");
    }

    #[test]
    fn copy_parent_is_identity_on_every_record() {
        let ds = builtin_dataset(TaskId::Copy, usize::MAX);
        for r in ds.records() {
            assert_eq!(r.parent_output, r.raw_input);
        }
    }

    #[test]
    fn child_prompts_render_exactly() {
        assert_eq!(
            render_child_prompt(TaskId::Antonym, "hot").unwrap(),
            "The opposite of 'hot' is "
        );
        assert_eq!(
            render_child_prompt(TaskId::Categorize, "apple").unwrap(),
            "What category does this word belong to: 'apple'?"
        );
        assert_eq!(
            render_child_prompt(TaskId::Copy, "The sky is blue.").unwrap(),
            "Copy this sentence: 'The sky is blue.'"
        );
        assert_eq!(
            render_child_prompt(TaskId::ColorMix, "red + blue").unwrap(),
            "Mix the two colors and output only one lowercase color name: red and blue is => "
        );
        assert_eq!(
            render_child_prompt(TaskId::SentimentInvert, "I feel excited about today.").unwrap(),
            "Rewrite this as sad: 'I feel excited about today.'"
        );
    }

    #[test]
    fn parent_prompt_contains_instruction_and_content() {
        let p = render_parent_prompt(TaskId::ColorMix, "red + blue").unwrap();
        assert!(p.starts_with("You are an AI assistant tasked with combining"));
        assert!(p.ends_with("red + blue ="));
    }

    #[test]
    fn parent_oracle_is_pure() {
        for task in TaskId::ALL {
            let ds = builtin_dataset(task, usize::MAX);
            for r in ds.records() {
                let a = parent_oracle(task, &r.raw_input).unwrap();
                let b = parent_oracle(task, &r.raw_input).unwrap();
                assert_eq!(a, b);
                assert_eq!(a, r.parent_output);
                assert!(!a.trim().is_empty());
            }
        }
    }

    #[test]
    fn antonym_table_keys_are_unique() {
        let mut seen = HashSet::new();
        for (k, _) in ANTONYM_TABLE {
            assert!(seen.insert(*k), "duplicate antonym key {k}");
        }
    }

    #[test]
    fn datasets_have_documented_scale() {
        assert_eq!(builtin_size(TaskId::ColorMix), 18);
        assert_eq!(builtin_size(TaskId::Antonym), 40);
        assert_eq!(builtin_size(TaskId::Categorize), 60);
        assert_eq!(builtin_size(TaskId::Copy), 14);
        assert_eq!(builtin_size(TaskId::SentimentInvert), 22);
    }

    #[test]
    fn size_limit_truncates_in_order() {
        let ds = builtin_dataset(TaskId::Antonym, 3);
        assert_eq!(ds.len(), 3);
        assert!(!ds.is_truncated());
        assert_eq!(ds.records()[0].raw_input, "hot");
    }

    #[test]
    fn sample_prompt_is_seeded_and_uniform() {
        let ds = builtin_dataset(TaskId::ColorMix, usize::MAX);
        let mut a = Rng::new(5);
        let mut b = Rng::new(5);
        for _ in 0..50 {
            let ra = sample_prompt(&ds, &mut a).unwrap();
            let rb = sample_prompt(&ds, &mut b).unwrap();
            assert_eq!(ra.raw_input, rb.raw_input);
        }

        let single = builtin_dataset(TaskId::Copy, 1);
        let mut rng = Rng::new(1);
        for _ in 0..10 {
            assert_eq!(
                sample_prompt(&single, &mut rng).unwrap().raw_input,
                COPY_SENTENCES[0]
            );
        }
    }

    #[test]
    fn sample_frequencies_pass_chi_square() {
        let ds = builtin_dataset(TaskId::Antonym, usize::MAX);
        let n = ds.len();
        let draws = 10_000;
        let mut counts = vec![0usize; n];
        let mut rng = Rng::new(1234);
        for _ in 0..draws {
            let rec = sample_prompt(&ds, &mut rng).unwrap();
            let idx = ds
                .records()
                .iter()
                .position(|r| r.raw_input == rec.raw_input)
                .unwrap();
            counts[idx] += 1;
        }
        let expected = draws as f64 / n as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 99.9th percentile of chi-square with 39 degrees of freedom.
        assert!(chi2 < 72.06, "chi2 = {chi2}");
    }

    #[test]
    fn parent_output_jsonl_roundtrip() {
        let ds = builtin_dataset(TaskId::Antonym, 5);
        let dir = std::env::temp_dir().join("pgsrm-parent-io");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("parents.jsonl");
        write_parent_outputs(&ds, &path).unwrap();
        let again = load_parent_outputs(&path, TaskId::Antonym).unwrap();
        assert_eq!(again.len(), ds.len());
        for (a, b) in ds.records().iter().zip(again.records()) {
            assert_eq!(a.raw_input, b.raw_input);
            assert_eq!(a.parent_output, b.parent_output);
            assert_eq!(a.child_prompt, b.child_prompt);
        }
    }

    #[test]
    fn parent_output_parsing_reports_line_numbers() {
        let good = "{\"prompt\":\"hot\",\"parent_output\":\"cold\"}";
        let missing = "{\"prompt\":\"up\"}";
        let err = parse_parent_outputs(&format!("{good}\n{missing}"), TaskId::Antonym).unwrap_err();
        assert!(matches!(err, TaskError::Parse { line: 2, .. }), "{err}");

        let empty_out = "{\"prompt\":\"up\",\"parent_output\":\"  \"}";
        let err = parse_parent_outputs(&format!("{good}\n{empty_out}"), TaskId::Antonym).unwrap_err();
        assert!(matches!(err, TaskError::Validation { line: 2, .. }), "{err}");

        let ds = parse_parent_outputs(&format!("{good}\n"), TaskId::Antonym).unwrap();
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn duplicate_raw_inputs_rejected() {
        let two = "{\"prompt\":\"hot\",\"parent_output\":\"cold\"}\n{\"prompt\":\"hot\",\"parent_output\":\"chilly\"}";
        assert!(matches!(
            parse_parent_outputs(two, TaskId::Antonym).unwrap_err(),
            TaskError::DuplicateInput { .. }
        ));
    }

    #[test]
    fn task_parse_roundtrip_and_unknown() {
        for t in TaskId::ALL {
            assert_eq!(TaskId::parse(t.name()).unwrap(), t);
        }
        assert!(matches!(
            TaskId::parse("florble").unwrap_err(),
            TaskError::UnknownTask(_)
        ));
    }
}
