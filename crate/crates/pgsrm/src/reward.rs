//! The two reward signals: dense embedding similarity and the sparse binary
//! baseline.
//!
//! Both implement one interface consumed by the trainer, so swapping the
//! `RewardSpec` is the only difference between experimental conditions.

use std::collections::HashSet;

use thiserror::Error;

use crate::embedding::{cosine, embed_tokenize, EmbeddingError, EmbeddingSpace, SentenceVector};
use crate::tasks::TaskId;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("alpha must be >= 1, got {0}")]
    InvalidAlpha(f64),
    #[error("episode {index}: {source}")]
    Embedding {
        index: usize,
        source: EmbeddingError,
    },
    #[error(transparent)]
    Space(#[from] EmbeddingError),
}

pub type Result<T> = std::result::Result<T, RewardError>;

/// Which reward signal a run trains against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    Pgsrm,
    Binary,
}

impl RewardKind {
    pub fn parse(s: &str) -> Option<RewardKind> {
        match s {
            "pgsrm" => Some(RewardKind::Pgsrm),
            "binary" => Some(RewardKind::Binary),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::Pgsrm => "pgsrm",
            RewardKind::Binary => "binary",
        }
    }
}

/// Fully resolved reward configuration.
#[derive(Debug, Clone)]
pub enum RewardSpec {
    /// Truncated, sharpened cosine similarity; `alpha >= 1`.
    Pgsrm { alpha: f64 },
    /// Task-specific correctness checker in {0, 1}.
    Binary { checker: TaskId },
}

impl RewardSpec {
    pub fn pgsrm(alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(RewardError::InvalidAlpha(alpha));
        }
        Ok(RewardSpec::Pgsrm { alpha })
    }

    pub fn binary(checker: TaskId) -> Self {
        RewardSpec::Binary { checker }
    }

    pub fn kind(&self) -> RewardKind {
        match self {
            RewardSpec::Pgsrm { .. } => RewardKind::Pgsrm,
            RewardSpec::Binary { .. } => RewardKind::Binary,
        }
    }
}

/// A scalar reward. PGSRM values lie in [0, 1]; binary values in {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardValue(f64);

impl RewardValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// One bandit interaction, before its reward is computed.
#[derive(Debug, Clone)]
pub struct Episode {
    pub prompt: String,
    pub parent_text: String,
    pub child_text: String,
}

/// `(max(0, cos(e_p, e_c)))^alpha`.
pub fn pgsrm_reward(
    e_p: &SentenceVector,
    e_c: &SentenceVector,
    alpha: f64,
) -> Result<RewardValue> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(RewardError::InvalidAlpha(alpha));
    }
    let cos = cosine(e_p, e_c)?;
    Ok(RewardValue(cos.max(0.0).powf(alpha)))
}

/// Convenience path from raw texts. Child texts that embed to nothing (empty
/// or all-unknown under a word-vector space) score 0 rather than erroring.
pub fn pgsrm_reward_texts(
    space: &EmbeddingSpace,
    parent_text: &str,
    child_text: &str,
    alpha: f64,
) -> Result<RewardValue> {
    let e_p = space.embed(parent_text)?;
    let e_c = match space.embed(child_text) {
        Ok(v) => v,
        Err(EmbeddingError::EmptyText) => SentenceVector::zero(space.dimension()),
        Err(e) => return Err(e.into()),
    };
    pgsrm_reward(&e_p, &e_c, alpha)
}

/// Checker normalization: lowercase, trim, collapse internal whitespace,
/// strip terminal punctuation. This is the contract the equality-based
/// checkers match under.
pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed: Vec<&str> = lowered.split_whitespace().collect();
    let joined = collapsed.join(" ");
    joined
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim_end()
        .to_string()
}

/// Binary correctness via each task's checker, using the built-in lexicons
/// for the sentiment template check.
pub fn binary_reward(task: TaskId, child_text: &str, parent_text: &str) -> RewardValue {
    binary_reward_with(task, child_text, parent_text, Lexicons::builtin())
}

pub fn binary_reward_with(
    task: TaskId,
    child_text: &str,
    parent_text: &str,
    lexicons: &Lexicons,
) -> RewardValue {
    let correct = match task {
        // Exact copy keeps punctuation, capitalization, and spacing; only
        // surrounding whitespace is forgiven.
        TaskId::Copy => child_text.trim() == parent_text.trim(),
        TaskId::SentimentInvert => sentiment_template_check(child_text, lexicons),
        TaskId::ColorMix | TaskId::Antonym | TaskId::Categorize => {
            normalize(child_text) == normalize(parent_text)
        }
    };
    RewardValue(if correct { 1.0 } else { 0.0 })
}

/// Template check for sentiment inversion: a first-person pronoun, at least
/// one negative-lexicon token, and no positive-lexicon token.
pub fn sentiment_template_check(text: &str, lexicons: &Lexicons) -> bool {
    const PRONOUNS: [&str; 9] = [
        "i", "i'm", "i've", "i'd", "i'll", "me", "my", "mine", "myself",
    ];
    let tokens = embed_tokenize(text);
    let has_pronoun = tokens.iter().any(|t| PRONOUNS.contains(&t.as_str()));
    let has_negative = tokens.iter().any(|t| lexicons.negative.contains(t.as_str()));
    let has_positive = tokens.iter().any(|t| lexicons.positive.contains(t.as_str()));
    has_pronoun && has_negative && !has_positive
}

/// Positive/negative token lists for the sentiment checker. Shipped as plain
/// one-token-per-line files so they stay auditable and swappable.
#[derive(Debug, Clone)]
pub struct Lexicons {
    pub negative: HashSet<String>,
    pub positive: HashSet<String>,
}

impl Lexicons {
    pub fn builtin() -> &'static Lexicons {
        use std::sync::OnceLock;
        static BUILTIN: OnceLock<Lexicons> = OnceLock::new();
        BUILTIN.get_or_init(|| Lexicons {
            negative: parse_lexicon(include_str!("../data/lexicons/negative.txt")),
            positive: parse_lexicon(include_str!("../data/lexicons/positive.txt")),
        })
    }

    pub fn from_files(
        negative: impl AsRef<std::path::Path>,
        positive: impl AsRef<std::path::Path>,
    ) -> std::io::Result<Lexicons> {
        Ok(Lexicons {
            negative: parse_lexicon(&std::fs::read_to_string(negative)?),
            positive: parse_lexicon(&std::fs::read_to_string(positive)?),
        })
    }
}

fn parse_lexicon(content: &str) -> HashSet<String> {
    content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

/// Applies the configured reward to a batch, preserving order. Embedding
/// failures carry the index of the offending episode.
pub fn reward_batch(
    spec: &RewardSpec,
    episodes: &[Episode],
    space: &EmbeddingSpace,
) -> Result<Vec<RewardValue>> {
    match spec {
        RewardSpec::Pgsrm { alpha } => episodes
            .iter()
            .enumerate()
            .map(|(index, ep)| {
                pgsrm_reward_texts(space, &ep.parent_text, &ep.child_text, *alpha).map_err(|e| {
                    match e {
                        RewardError::Space(source) => RewardError::Embedding { index, source },
                        other => other,
                    }
                })
            })
            .collect(),
        RewardSpec::Binary { checker } => Ok(episodes
            .iter()
            .map(|ep| binary_reward(*checker, &ep.child_text, &ep.parent_text))
            .collect()),
    }
}
