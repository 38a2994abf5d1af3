//! Edit programs: the keep/delete tags, reordering, and insertions that
//! rewrite a source token sequence into a target.
//!
//! An [`EditProgram`] is constructed through [`EditProgram::from_parts`],
//! which checks every structural invariant once. Everything downstream
//! (realization, decoder-string rendering, chain conversion) can then be
//! written without error paths.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::token::{TokenError, TokenSeq};

/// Per-source-token edit decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    /// The token survives into the output (possibly at a new position).
    #[serde(rename = "K")]
    Keep,
    /// The token is dropped.
    #[serde(rename = "D")]
    Delete,
}

/// A span of new tokens attached after a slot in the kept-and-reordered
/// sequence. Slot `0` is the very beginning of the output; slot `k` for
/// `k >= 1` is immediately after the `k`-th kept token in output order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub after: usize,
    pub span: Vec<String>,
}

impl Insertion {
    pub fn new<S: Into<String>>(after: usize, span: impl IntoIterator<Item = S>) -> Insertion {
        Insertion {
            after,
            span: span.into_iter().map(Into::into).collect(),
        }
    }
}

/// Why a set of parts does not form a valid edit program.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("{tags} tags for {tokens} source tokens")]
    TagCountMismatch { tags: usize, tokens: usize },
    #[error("order lists {order} tokens but {kept} are tagged keep")]
    OrderLengthMismatch { order: usize, kept: usize },
    #[error("order entry {index} is not a kept source token")]
    OrderEntryNotKept { index: usize },
    #[error("order mentions source token {index} more than once")]
    DuplicateOrderEntry { index: usize },
    #[error("insertion slot {after} exceeds kept-token count {kept}")]
    InsertionOutOfRange { after: usize, kept: usize },
    #[error("insertion slots must be strictly increasing (saw {after} twice or out of order)")]
    UnorderedInsertions { after: usize },
    #[error("insertion at slot {after} has an empty span")]
    EmptyInsertionSpan { after: usize },
    #[error("insertion at slot {after} contains invalid token {text:?}")]
    BadInsertionToken { after: usize, text: String },
    #[error("invalid source token: {0}")]
    BadSourceToken(#[from] TokenError),
}

/// A complete edit program over a source sequence: one tag per source token,
/// an output ordering of the kept tokens, and insertion spans addressed to
/// slots of that ordering.
///
/// Invariants, enforced at construction:
/// - exactly one tag per source token,
/// - `order` is a permutation of the keep-tagged source indices,
/// - insertion slots are strictly increasing and lie in `0..=kept`,
/// - insertion spans are non-empty and contain no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ProgramRecord", into = "ProgramRecord")]
pub struct EditProgram {
    source: TokenSeq,
    tags: Vec<Tag>,
    order: Vec<usize>,
    insertions: Vec<Insertion>,
}

impl EditProgram {
    /// Validate and assemble a program. This is the only way to obtain an
    /// `EditProgram`, so holding one is proof the invariants hold.
    pub fn from_parts(
        source: TokenSeq,
        tags: Vec<Tag>,
        order: Vec<usize>,
        insertions: Vec<Insertion>,
    ) -> Result<EditProgram, ProgramError> {
        if tags.len() != source.len() {
            return Err(ProgramError::TagCountMismatch {
                tags: tags.len(),
                tokens: source.len(),
            });
        }
        let kept = tags.iter().filter(|t| **t == Tag::Keep).count();
        if order.len() != kept {
            return Err(ProgramError::OrderLengthMismatch {
                order: order.len(),
                kept,
            });
        }
        let mut seen = vec![false; source.len()];
        for &index in &order {
            if index >= tags.len() || tags[index] != Tag::Keep {
                return Err(ProgramError::OrderEntryNotKept { index });
            }
            if seen[index] {
                return Err(ProgramError::DuplicateOrderEntry { index });
            }
            seen[index] = true;
        }
        let mut prev_slot: Option<usize> = None;
        for ins in &insertions {
            if ins.after > kept {
                return Err(ProgramError::InsertionOutOfRange {
                    after: ins.after,
                    kept,
                });
            }
            if prev_slot.is_some_and(|p| p >= ins.after) {
                return Err(ProgramError::UnorderedInsertions { after: ins.after });
            }
            prev_slot = Some(ins.after);
            if ins.span.is_empty() {
                return Err(ProgramError::EmptyInsertionSpan { after: ins.after });
            }
            for text in &ins.span {
                if text.is_empty() || text.chars().any(char::is_whitespace) {
                    return Err(ProgramError::BadInsertionToken {
                        after: ins.after,
                        text: text.clone(),
                    });
                }
            }
        }
        Ok(EditProgram {
            source,
            tags,
            order,
            insertions,
        })
    }

    /// The program that reproduces `source` unchanged: keep everything, in
    /// place, insert nothing.
    pub fn identity(source: TokenSeq) -> EditProgram {
        let tags = vec![Tag::Keep; source.len()];
        let order = (0..source.len()).collect();
        EditProgram {
            source,
            tags,
            order,
            insertions: Vec::new(),
        }
    }

    pub fn source(&self) -> &TokenSeq {
        &self.source
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    /// Kept source indices in output order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn insertions(&self) -> &[Insertion] {
        &self.insertions
    }

    /// Number of keep-tagged source tokens.
    pub fn kept_count(&self) -> usize {
        self.order.len()
    }

    /// Kept token texts in output order (insertions not applied).
    pub fn kept_sequence(&self) -> Vec<&str> {
        self.order
            .iter()
            .map(|&i| self.source.tokens()[i].text())
            .collect()
    }

    /// Total number of inserted tokens across all spans.
    pub fn inserted_token_count(&self) -> usize {
        self.insertions.iter().map(|ins| ins.span.len()).sum()
    }

    /// True when the program is a pure copy: all tokens kept in their
    /// original order with no insertions.
    pub fn is_identity(&self) -> bool {
        self.insertions.is_empty()
            && self.tags.iter().all(|t| *t == Tag::Keep)
            && self.order.iter().copied().eq(0..self.source.len())
    }
}

/// Wire shape: the source appears as its token texts, so a program can be
/// stored and re-read without the original raw string.
#[derive(Serialize, Deserialize)]
struct ProgramRecord {
    source: Vec<String>,
    tags: Vec<Tag>,
    order: Vec<usize>,
    insertions: Vec<Insertion>,
}

impl From<EditProgram> for ProgramRecord {
    fn from(p: EditProgram) -> ProgramRecord {
        ProgramRecord {
            source: p.source.texts().iter().map(|s| s.to_string()).collect(),
            tags: p.tags,
            order: p.order,
            insertions: p.insertions,
        }
    }
}

impl TryFrom<ProgramRecord> for EditProgram {
    type Error = ProgramError;

    fn try_from(r: ProgramRecord) -> Result<EditProgram, ProgramError> {
        let source = TokenSeq::from_tokens(r.source)?;
        EditProgram::from_parts(source, r.tags, r.order, r.insertions)
    }
}
