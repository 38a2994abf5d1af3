//! Pre-training data synthesis: corrupt clean sentences by dropping,
//! swapping, and adding token spans, then align the corruption back to the
//! original so the model learns to reconstruct it.
//!
//! Everything is deterministic: each sentence gets its own random stream
//! derived from the global seed and the line number, so corpora can be
//! processed in parallel (or resumed) without changing a single byte of
//! output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::align_seqs;
use crate::program::EditProgram;
use crate::token::TokenSeq;

/// Span-length samples are clamped here; the geometric tail is unbounded
/// and a single degenerate draw should not swallow a whole document.
pub const MAX_SPAN_LEN: usize = 64;

/// Default size of the added-token reservoir.
pub const DEFAULT_POOL_CAPACITY: usize = 4096;

/// Corruption rates and the shared seed.
///
/// Each probability is the chance, at every walk position, that the
/// corresponding corruption starts there; span lengths follow a geometric
/// distribution with success parameter `span_p` (mean `1 / span_p`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub drop_prob: f64,
    pub swap_prob: f64,
    pub add_prob: f64,
    pub span_p: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> NoiseConfig {
        NoiseConfig {
            drop_prob: 0.15,
            swap_prob: 0.1,
            add_prob: 0.1,
            span_p: 0.5,
            seed: 0,
        }
    }
}

/// Invalid [`NoiseConfig`] values.
#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("{field} must be a probability in [0, 1], got {value}")]
    InvalidProbability { field: &'static str, value: f64 },
    #[error("span_p must be in (0, 1], got {value}")]
    InvalidSpanParameter { value: f64 },
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), NoiseError> {
        for (field, value) in [
            ("drop_prob", self.drop_prob),
            ("swap_prob", self.swap_prob),
            ("add_prob", self.add_prob),
        ] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(NoiseError::InvalidProbability { field, value });
            }
        }
        if !(self.span_p > 0.0 && self.span_p <= 1.0) {
            return Err(NoiseError::InvalidSpanParameter { value: self.span_p });
        }
        Ok(())
    }
}

/// A fixed-capacity reservoir of tokens seen in the corpus, used as the
/// sampling pool for added spans. Uniform reservoir sampling keeps the
/// memory bound while every observed token has equal weight; the pool is
/// deterministic given its seed and the observation order.
#[derive(Debug, Clone)]
pub struct TokenPool {
    tokens: Vec<String>,
    capacity: usize,
    seen: u64,
    rng: ChaCha8Rng,
}

impl TokenPool {
    pub fn new(capacity: usize, seed: u64) -> TokenPool {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&seed.to_le_bytes());
        bytes[16] = 1; // separate stream from per-line corruption rngs
        TokenPool {
            tokens: Vec::new(),
            capacity,
            seen: 0,
            rng: ChaCha8Rng::from_seed(bytes),
        }
    }

    /// Offer one token to the reservoir. Empty or whitespace-bearing
    /// strings are ignored — the pool holds tokens, not phrases.
    pub fn observe(&mut self, token: &str) {
        if token.is_empty() || token.chars().any(char::is_whitespace) || self.capacity == 0 {
            return;
        }
        self.seen += 1;
        if self.tokens.len() < self.capacity {
            self.tokens.push(token.to_string());
        } else {
            let slot = self.rng.gen_range(0..self.seen);
            if let Ok(slot) = usize::try_from(slot) {
                if slot < self.capacity {
                    self.tokens[slot] = token.to_string();
                }
            }
        }
    }

    pub fn observe_seq(&mut self, sentence: &TokenSeq) {
        for token in sentence.tokens() {
            self.observe(token.text());
        }
    }

    /// Draw one token uniformly from the reservoir.
    pub fn sample(&self, rng: &mut impl Rng) -> Option<&str> {
        if self.tokens.is_empty() {
            return None;
        }
        let index = rng.gen_range(0..self.tokens.len());
        Some(&self.tokens[index])
    }

    /// Tokens currently held (at most the capacity).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Total tokens ever offered.
    pub fn seen(&self) -> u64 {
        self.seen
    }
}

/// Geometric span length on {1, 2, ...} by inversion, clamped to
/// [`MAX_SPAN_LEN`].
fn sample_span_len(rng: &mut impl Rng, span_p: f64) -> usize {
    if span_p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.gen();
    let raw = 1.0 + (1.0 - u).ln() / (1.0 - span_p).ln();
    (raw.floor() as usize).clamp(1, MAX_SPAN_LEN)
}

/// Corrupt one sentence with an explicit random stream: span drops, then
/// adjacent-span swaps, then span additions drawn from `pool`.
///
/// - **Drops**: at each position, with `drop_prob`, remove a sampled span
///   starting there and continue after it.
/// - **Swaps**: at each position, with `swap_prob`, sample two span
///   lengths; when both fit, the adjacent spans trade places and the walk
///   jumps past them, otherwise the position is left alone.
/// - **Adds**: at each gap (before, between, and after tokens), with
///   `add_prob`, splice in a sampled number of pool tokens. With an empty
///   pool, additions are skipped.
pub fn corrupt_with_rng(
    sentence: &TokenSeq,
    config: &NoiseConfig,
    pool: &TokenPool,
    rng: &mut impl Rng,
) -> TokenSeq {
    let tokens = sentence.texts();

    let mut after_drops: Vec<&str> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if rng.gen_bool(config.drop_prob) {
            i += sample_span_len(rng, config.span_p);
        } else {
            after_drops.push(tokens[i]);
            i += 1;
        }
    }

    let mut after_swaps: Vec<&str> = Vec::with_capacity(after_drops.len());
    let mut i = 0;
    while i < after_drops.len() {
        if rng.gen_bool(config.swap_prob) {
            let first = sample_span_len(rng, config.span_p);
            let second = sample_span_len(rng, config.span_p);
            if i + first + second <= after_drops.len() {
                after_swaps.extend(&after_drops[i + first..i + first + second]);
                after_swaps.extend(&after_drops[i..i + first]);
                i += first + second;
                continue;
            }
        }
        after_swaps.push(after_drops[i]);
        i += 1;
    }

    let mut out: Vec<String> = Vec::with_capacity(after_swaps.len());
    for gap in 0..=after_swaps.len() {
        if rng.gen_bool(config.add_prob) && !pool.is_empty() {
            let len = sample_span_len(rng, config.span_p);
            for _ in 0..len {
                let token = pool.sample(rng).expect("pool checked non-empty");
                out.push(token.to_string());
            }
        }
        if gap < after_swaps.len() {
            out.push(after_swaps[gap].to_string());
        }
    }

    TokenSeq::from_tokens(out).expect("corruption only rearranges valid tokens")
}

/// Sentence corruptor with a per-line deterministic stream and a shared
/// token reservoir.
#[derive(Debug, Clone)]
pub struct Noiser {
    config: NoiseConfig,
    pool: TokenPool,
}

impl Noiser {
    /// Validate the config and start with an empty reservoir of
    /// [`DEFAULT_POOL_CAPACITY`] tokens.
    pub fn new(config: NoiseConfig) -> Result<Noiser, NoiseError> {
        let pool = TokenPool::new(DEFAULT_POOL_CAPACITY, config.seed);
        Self::with_pool(config, pool)
    }

    /// Use an explicitly prepared reservoir.
    pub fn with_pool(config: NoiseConfig, pool: TokenPool) -> Result<Noiser, NoiseError> {
        config.validate()?;
        Ok(Noiser { config, pool })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    pub fn pool(&self) -> &TokenPool {
        &self.pool
    }

    /// Feed a sentence's tokens to the reservoir.
    pub fn observe(&mut self, sentence: &TokenSeq) {
        self.pool.observe_seq(sentence);
    }

    /// The random stream for one line: seed and line number, nothing else.
    fn line_rng(&self, line: u64) -> ChaCha8Rng {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&self.config.seed.to_le_bytes());
        bytes[8..16].copy_from_slice(&line.to_le_bytes());
        ChaCha8Rng::from_seed(bytes)
    }

    /// Corrupt the sentence at `line` deterministically.
    pub fn corrupt(&self, sentence: &TokenSeq, line: u64) -> TokenSeq {
        let mut rng = self.line_rng(line);
        corrupt_with_rng(sentence, &self.config, &self.pool, &mut rng)
    }

    /// Corrupt, then align the corruption back to the original: the
    /// resulting program realizes to the clean sentence, with added tokens
    /// deleted, dropped tokens inserted, and swaps undone by the ordering.
    pub fn pretraining_example(&self, sentence: &TokenSeq, line: u64) -> EditProgram {
        let corrupted = self.corrupt(sentence, line);
        align_seqs(&corrupted, sentence)
    }

    /// The pretraining example plus its clean target text, ready for JSONL.
    pub fn pretraining_record(&self, sentence: &TokenSeq, line: u64) -> PretrainingRecord {
        PretrainingRecord {
            program: self.pretraining_example(sentence, line),
            target: sentence.joined(),
        }
    }
}

/// One line of pretraining output: the program's wire fields plus the
/// clean sentence it reconstructs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainingRecord {
    #[serde(flatten)]
    pub program: EditProgram,
    pub target: String,
}
