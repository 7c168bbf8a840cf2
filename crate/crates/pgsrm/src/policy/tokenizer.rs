//! Lossless corpus tokenizers.
//!
//! The word-level mode segments text into words carrying their leading
//! whitespace, plus single punctuation characters, so decoding is plain
//! concatenation and `decode(encode(x)) == x` holds for any in-vocabulary
//! text. Apostrophes join a word only inside a contraction ("I'm"); quoting
//! apostrophes ("'hot'") stay separate tokens.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAD_TOKEN: &str = "<pad>";
pub const EOS_TOKEN: &str = "<eos>";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("segment {segment:?} is not in the vocabulary")]
    UnknownToken { segment: String },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    UnknownId { id: u32, vocab: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenizerMode {
    WordLevel,
    CharLevel,
}

/// Maps text to token ids and back. Id 0 is padding, id 1 is end-of-sequence;
/// neither ever appears in encoded user text.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    mode: TokenizerMode,
    id_of: HashMap<String, u32>,
    token_of: Vec<String>,
}

impl Tokenizer {
    pub const PAD_ID: u32 = 0;
    pub const EOS_ID: u32 = 1;

    /// Builds a word-level tokenizer covering every segment of the corpus.
    pub fn word_level<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut segments = BTreeSet::new();
        for text in corpus {
            for seg in segment_word_level(text.as_ref()) {
                segments.insert(seg);
            }
        }
        Self::from_segments(TokenizerMode::WordLevel, segments)
    }

    /// Builds a character-level tokenizer over the corpus alphabet.
    pub fn char_level<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut segments = BTreeSet::new();
        for text in corpus {
            for ch in text.as_ref().chars() {
                segments.insert(ch.to_string());
            }
        }
        Self::from_segments(TokenizerMode::CharLevel, segments)
    }

    fn from_segments(mode: TokenizerMode, segments: BTreeSet<String>) -> Self {
        let mut token_of = vec![PAD_TOKEN.to_string(), EOS_TOKEN.to_string()];
        token_of.extend(segments);
        let id_of = token_of
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            mode,
            id_of,
            token_of,
        }
    }

    /// Rebuilds a tokenizer from its serialized token list (ids 2 and up).
    pub fn from_token_list(mode: TokenizerMode, tokens: Vec<String>) -> Self {
        let mut token_of = vec![PAD_TOKEN.to_string(), EOS_TOKEN.to_string()];
        token_of.extend(tokens);
        let id_of = token_of
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            mode,
            id_of,
            token_of,
        }
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    pub fn vocab_size(&self) -> usize {
        self.token_of.len()
    }

    pub fn pad_id(&self) -> u32 {
        Self::PAD_ID
    }

    pub fn eos_id(&self) -> u32 {
        Self::EOS_ID
    }

    /// Token list beyond the two specials, in id order.
    pub fn user_tokens(&self) -> &[String] {
        &self.token_of[2..]
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        let segments = match self.mode {
            TokenizerMode::WordLevel => segment_word_level(text),
            TokenizerMode::CharLevel => text.chars().map(|c| c.to_string()).collect(),
        };
        segments
            .into_iter()
            .map(|seg| {
                self.id_of
                    .get(&seg)
                    .copied()
                    .ok_or(TokenizerError::UnknownToken { segment: seg })
            })
            .collect()
    }

    /// Concatenates tokens, skipping padding and end-of-sequence markers.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        for &id in ids {
            if id == Self::PAD_ID || id == Self::EOS_ID {
                continue;
            }
            let tok = self
                .token_of
                .get(id as usize)
                .ok_or(TokenizerError::UnknownId {
                    id,
                    vocab: self.token_of.len(),
                })?;
            out.push_str(tok);
        }
        Ok(out)
    }
}

/// Splits text into whitespace-carrying words and punctuation marks whose
/// concatenation reproduces the input exactly.
pub fn segment_word_level(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut segments = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        if i == chars.len() {
            // Trailing whitespace becomes its own token.
            segments.push(chars[start..].iter().collect());
            break;
        }
        if chars[i].is_alphanumeric() {
            i += 1;
            while i < chars.len() {
                let c = chars[i];
                let contraction = c == '\''
                    && chars[i - 1].is_alphanumeric()
                    && i + 1 < chars.len()
                    && chars[i + 1].is_alphanumeric();
                if c.is_alphanumeric() || contraction {
                    i += 1;
                } else {
                    break;
                }
            }
        } else {
            i += 1;
        }
        segments.push(chars[start..i].iter().collect());
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(tok: &Tokenizer, text: &str) {
        let ids = tok.encode(text).unwrap();
        assert_eq!(tok.decode(&ids).unwrap(), text, "{text:?}");
        assert!(ids.iter().all(|&i| i != Tokenizer::PAD_ID));
    }

    #[test]
    fn segmentation_is_lossless() {
        for text in [
            "The opposite of 'hot' is ",
            "I'm grateful for everything I have.",
            "Mix the two colors and output only one lowercase color name: red and blue is => ",
            "What category does this word belong to: 'apple'?",
            "  leading and   double  spaces ",
        ] {
            let joined: String = segment_word_level(text).concat();
            assert_eq!(joined, text);
        }
    }

    #[test]
    fn contraction_stays_one_token_quotes_do_not() {
        let segs = segment_word_level("I'm on 'hot' coals.");
        assert!(segs.contains(&"I'm".to_string()));
        assert!(segs.contains(&"hot".to_string()));
        assert!(segs.contains(&" '".to_string()));
    }

    #[test]
    fn word_level_roundtrip_on_corpus() {
        let corpus = [
            "The opposite of 'hot' is ",
            "cold",
            " cold",
            "I'm grateful for everything I have.",
        ];
        let tok = Tokenizer::word_level(&corpus);
        for text in corpus {
            roundtrip(&tok, text);
        }
    }

    #[test]
    fn unknown_segment_is_an_error() {
        let tok = Tokenizer::word_level(&["red blue"]);
        assert!(matches!(
            tok.encode("green").unwrap_err(),
            TokenizerError::UnknownToken { .. }
        ));
    }

    #[test]
    fn char_level_roundtrip() {
        let corpus = ["abc def", "ghi!"];
        let tok = Tokenizer::char_level(&corpus);
        roundtrip(&tok, "fed cab!");
    }

    #[test]
    fn vocabulary_is_deterministic() {
        let a = Tokenizer::word_level(&["b a c", "a d"]);
        let b = Tokenizer::word_level(&["a d", "b a c"]);
        assert_eq!(a.user_tokens(), b.user_tokens());
    }

    #[test]
    fn token_list_rebuild_matches() {
        let tok = Tokenizer::word_level(&["red and blue"]);
        let rebuilt =
            Tokenizer::from_token_list(TokenizerMode::WordLevel, tok.user_tokens().to_vec());
        assert_eq!(
            tok.encode("red and blue").unwrap(),
            rebuilt.encode("red and blue").unwrap()
        );
    }
}
