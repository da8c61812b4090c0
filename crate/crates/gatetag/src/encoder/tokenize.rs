//! Hashing tokenizer for gate text cards.
//!
//! No learned vocabulary: identifiers and numbers hash into a fixed id
//! space, every other non-whitespace character is its own token. Collisions
//! are possible by construction and harmless at this scale; what matters is
//! that tokenization is deterministic and splits expressions at operator
//! boundaries.

use crate::util::fnv1a64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tokenizer {
    /// Size of the hashed id space.
    pub vocab: usize,
    /// Streams longer than this are cut off.
    pub max_tokens: usize,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'.'
}

/// Split into identifier/number runs and single-character symbols.
pub fn split_tokens(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
        } else if is_word_byte(bytes[i]) {
            let start = i;
            while i < bytes.len() && is_word_byte(bytes[i]) {
                i += 1;
            }
            out.push(&text[start..i]);
        } else {
            let len = text[i..].chars().next().map_or(1, char::len_utf8);
            out.push(&text[i..i + len]);
            i += len;
        }
    }
    out
}

impl Tokenizer {
    pub fn new(vocab: usize, max_tokens: usize) -> Self {
        assert!(vocab > 0 && max_tokens > 0);
        Tokenizer { vocab, max_tokens }
    }

    /// Hashed token ids and whether the stream was truncated.
    pub fn ids(&self, text: &str) -> (Vec<usize>, bool) {
        let toks = split_tokens(text);
        let truncated = toks.len() > self.max_tokens;
        let ids = toks
            .iter()
            .take(self.max_tokens)
            .map(|t| (fnv1a64(t.as_bytes()) % self.vocab as u64) as usize)
            .collect();
        (ids, truncated)
    }

    /// Token count before truncation (corpus statistics use this).
    pub fn count(&self, text: &str) -> usize {
        split_tokens(text).len()
    }
}
