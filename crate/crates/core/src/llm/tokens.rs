//! Token counting for budget management.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, LazyLock};

use base64::Engine as _;

/// Counts tokens for budget purposes. Implementations must be pure.
pub trait TokenCounter: Send + Sync {
    fn encoding_id(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

pub fn count_tokens(text: &str, tc: &dyn TokenCounter) -> usize {
    tc.count(text)
}

/// Approximation of cl100k counts without a vocabulary.
///
/// Blends two estimates: a length-based one (chars/4 plus whitespace words
/// plus punctuation, halved) and a pretokenizer-style piece count where
/// long alphabetic runs count double. On English prose it stays within
/// 10% of the real tokenizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicCounter;

static PIECE_RE: LazyLock<regex::Regex> =
    LazyLock::new(|| regex::Regex::new(r"'[a-z]+|[A-Za-z]+|\d{1,3}|[^\sA-Za-z\d]+").unwrap());

impl HeuristicCounter {
    pub const ENCODING_ID: &'static str = "cl100k-approx";

    fn estimate(text: &str) -> f64 {
        let chars = text.chars().count() as f64;
        let words = text.split_whitespace().count() as f64;
        let punct = text.chars().filter(|c| c.is_ascii_punctuation()).count() as f64;
        let pieces: f64 = PIECE_RE
            .find_iter(text)
            .map(|m| {
                let s = m.as_str();
                let letters = s.chars().filter(|c| c.is_ascii_alphabetic()).count();
                if letters > 8 {
                    2.0
                } else {
                    1.0
                }
            })
            .sum();
        ((chars / 4.0 + words + punct) / 2.0 + pieces) / 2.0
    }
}

impl TokenCounter for HeuristicCounter {
    fn encoding_id(&self) -> &str {
        Self::ENCODING_ID
    }

    fn count(&self, text: &str) -> usize {
        if text.is_empty() {
            return 0;
        }
        (Self::estimate(text).round() as usize).max(1)
    }
}

const CL100K_PATTERN: &str = r"(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\r\n\p{L}\p{N}]?\p{L}+|\p{N}{1,3}| ?[^\s\p{L}\p{N}]+[\r\n]*|\s*[\r\n]+|\s+(?!\S)|\s+";

/// Byte-pair counter over a tiktoken-format vocabulary
/// (`<base64 token> <rank>` per line) with the cl100k pretokenizer.
pub struct BpeCounter {
    encoding_id: String,
    ranks: HashMap<Vec<u8>, u32>,
    pretokenizer: fancy_regex::Regex,
}

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("cannot read vocabulary: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary line {line}: {message}")]
    Format { line: usize, message: String },
}

impl std::fmt::Debug for BpeCounter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BpeCounter")
            .field("encoding_id", &self.encoding_id)
            .field("vocab", &self.ranks.len())
            .finish()
    }
}

impl BpeCounter {
    pub fn from_file(path: &Path) -> Result<Self, VocabError> {
        let text = std::fs::read_to_string(path)?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("bpe")
            .to_string();
        Self::from_tiktoken(&id, &text)
    }

    pub fn from_tiktoken(encoding_id: &str, data: &str) -> Result<Self, VocabError> {
        let mut ranks = HashMap::new();
        for (i, line) in data.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: &str| VocabError::Format {
                line: i + 1,
                message: message.to_string(),
            };
            let (tok, rank) = line
                .split_once(' ')
                .ok_or_else(|| bad("expected `<token> <rank>`"))?;
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(tok)
                .map_err(|_| bad("token is not base64"))?;
            let rank: u32 = rank
                .trim()
                .parse()
                .map_err(|_| bad("rank is not an integer"))?;
            ranks.insert(bytes, rank);
        }
        Ok(BpeCounter {
            encoding_id: encoding_id.to_string(),
            ranks,
            pretokenizer: fancy_regex::Regex::new(CL100K_PATTERN)
                .expect("pretokenizer pattern compiles"),
        })
    }

    /// Number of tokens one pretokenized piece splits into.
    fn piece_tokens(&self, piece: &[u8]) -> usize {
        if piece.len() <= 1 || self.ranks.contains_key(piece) {
            return 1.min(piece.len());
        }
        // part boundaries; merge the lowest-ranked adjacent pair until none is in the vocab
        let mut bounds: Vec<usize> = (0..=piece.len()).collect();
        loop {
            let mut best: Option<(u32, usize)> = None;
            for i in 0..bounds.len().saturating_sub(2) {
                if let Some(&r) = self.ranks.get(&piece[bounds[i]..bounds[i + 2]]) {
                    if best.is_none_or(|(br, _)| r < br) {
                        best = Some((r, i));
                    }
                }
            }
            match best {
                Some((_, i)) => {
                    bounds.remove(i + 1);
                }
                None => return bounds.len() - 1,
            }
        }
    }
}

impl TokenCounter for BpeCounter {
    fn encoding_id(&self) -> &str {
        &self.encoding_id
    }

    fn count(&self, text: &str) -> usize {
        self.pretokenizer
            .find_iter(text)
            .filter_map(Result::ok)
            .map(|m| self.piece_tokens(m.as_str().as_bytes()))
            .sum()
    }
}

/// BPE counting when a vocabulary file is given, the heuristic otherwise.
pub fn default_counter(vocab: Option<&Path>) -> Result<Arc<dyn TokenCounter>, VocabError> {
    Ok(match vocab {
        Some(p) => Arc::new(BpeCounter::from_file(p)?),
        None => Arc::new(HeuristicCounter),
    })
}
