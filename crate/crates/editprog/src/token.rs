//! Token sequences and the tokenizers that produce them.
//!
//! A [`TokenSeq`] is an immutable view of an input string as an ordered list
//! of tokens, each remembering its byte span in the original text. Spans are
//! what let alignment talk about "where in the target" without losing the
//! ability to reproduce the input exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single token: its surface text plus the half-open byte span it occupies
/// in the string it was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    text: String,
    start: usize,
    end: usize,
}

impl Token {
    pub fn text(&self) -> &str {
        &self.text
    }

    /// Byte offset of the first byte of this token in the original string.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Byte offset one past the last byte of this token.
    pub fn end(&self) -> usize {
        self.end
    }
}

/// How raw text is cut into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Split on Unicode whitespace only.
    Whitespace,
    /// Split on whitespace, then separate runs of word characters from runs
    /// of punctuation, so `"are?"` becomes `["are", "?"]`.
    #[default]
    WhitespacePunct,
}

/// Errors from building a [`TokenSeq`] out of pre-tokenized input.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("token {index} is empty")]
    EmptyToken { index: usize },
    #[error("token {index} ({text:?}) contains whitespace")]
    WhitespaceInToken { index: usize, text: String },
}

/// An immutable, ordered sequence of tokens over a backing string.
///
/// Invariants, enforced at construction:
/// - token spans are non-overlapping and strictly increasing,
/// - slicing the backing text by any token's span yields exactly that
///   token's text,
/// - no token is empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    text: String,
    tokens: Vec<Token>,
}

impl TokenSeq {
    /// Tokenize `text` under `mode`. Total: empty input gives an empty
    /// sequence. Equal inputs always give equal outputs.
    pub fn tokenize(text: &str, mode: TokenizerMode) -> TokenSeq {
        let mut tokens = Vec::new();
        for (word_start, word) in split_whitespace_indexed(text) {
            match mode {
                TokenizerMode::Whitespace => tokens.push(Token {
                    text: word.to_string(),
                    start: word_start,
                    end: word_start + word.len(),
                }),
                TokenizerMode::WhitespacePunct => split_char_classes(word, word_start, &mut tokens),
            }
        }
        TokenSeq {
            text: text.to_string(),
            tokens,
        }
    }

    /// Build a sequence from already-tokenized input. The backing text is
    /// synthesized by joining tokens with single spaces, so spans remain
    /// consistent. Tokens must be non-empty and whitespace-free.
    pub fn from_tokens<I, S>(tokens: I) -> Result<TokenSeq, TokenError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut text = String::new();
        let mut out = Vec::new();
        for (index, token) in tokens.into_iter().enumerate() {
            let token: String = token.into();
            if token.is_empty() {
                return Err(TokenError::EmptyToken { index });
            }
            if token.chars().any(char::is_whitespace) {
                return Err(TokenError::WhitespaceInToken { index, text: token });
            }
            if !text.is_empty() {
                text.push(' ');
            }
            let start = text.len();
            text.push_str(&token);
            out.push(Token {
                text: token,
                start,
                end: text.len(),
            });
        }
        Ok(TokenSeq { text, tokens: out })
    }

    /// The backing string the spans index into.
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token surface texts in order.
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn get(&self, index: usize) -> Option<&Token> {
        self.tokens.get(index)
    }

    /// Token texts joined by single spaces — the whitespace-normalized form
    /// every realization comparison uses.
    pub fn joined(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn split_whitespace_indexed(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_whitespace().map(move |word| {
        // split_whitespace yields subslices of `text`, so pointer arithmetic
        // recovers the byte offset.
        let offset = word.as_ptr() as usize - text.as_ptr() as usize;
        (offset, word)
    })
}

/// Split a whitespace-free word into alternating runs of word characters
/// (alphanumeric) and punctuation, appending one token per run.
fn split_char_classes(word: &str, base: usize, out: &mut Vec<Token>) {
    let mut run_start = 0;
    let mut run_is_word: Option<bool> = None;
    for (idx, ch) in word.char_indices() {
        let is_word = ch.is_alphanumeric();
        match run_is_word {
            Some(prev) if prev == is_word => {}
            Some(_) => {
                out.push(Token {
                    text: word[run_start..idx].to_string(),
                    start: base + run_start,
                    end: base + idx,
                });
                run_start = idx;
                run_is_word = Some(is_word);
            }
            None => run_is_word = Some(is_word),
        }
    }
    if run_is_word.is_some() {
        out.push(Token {
            text: word[run_start..].to_string(),
            start: base + run_start,
            end: base + word.len(),
        });
    }
}
