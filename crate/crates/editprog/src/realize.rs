//! Applying an [`EditProgram`] to its source, and the decoder-side string
//! of position tokens and insertion spans.
//!
//! Realization is pure splicing: the kept tokens, already reordered, with
//! each insertion span placed at its slot. The decoder string is the
//! serialized form of just the insertions — `<pos_k>` followed by the
//! tokens to insert at slot `k` — which is what a model actually emits;
//! combining it with tags and a pointer chain recovers the full program.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::pointer::PointerChain;
use crate::program::{EditProgram, Insertion, ProgramError, Tag};
use crate::token::TokenSeq;

/// Largest slot a position token can address.
pub const MAX_POSITION: usize = 512;

/// Apply the program: kept tokens in output order with every insertion
/// span spliced in after its slot (slot 0 precedes everything), joined by
/// single spaces.
pub fn realize(program: &EditProgram) -> String {
    let kept = program.kept_sequence();
    let mut insertions = program.insertions().iter().peekable();
    let mut out: Vec<&str> = Vec::with_capacity(kept.len() + program.inserted_token_count());
    for slot in 0..=kept.len() {
        if slot > 0 {
            out.push(kept[slot - 1]);
        }
        if let Some(ins) = insertions.peek() {
            if ins.after == slot {
                out.extend(ins.span.iter().map(String::as_str));
                insertions.next();
            }
        }
    }
    out.join(" ")
}

/// Errors from building or parsing a [`DecoderString`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecoderStringError {
    #[error("position token at offset {offset} is {position}, not after {previous}")]
    PositionNotIncreasing {
        offset: usize,
        position: usize,
        previous: usize,
    },
    #[error(
        "position token at offset {offset} addresses slot {position}, above the {MAX_POSITION} cap"
    )]
    PositionTooLarge { offset: usize, position: usize },
    #[error("position token at offset {offset} has no span tokens")]
    EmptySpan { offset: usize },
    #[error("expected a position token at offset {offset}, found {text:?}")]
    MissingPosition { offset: usize, text: String },
    #[error("malformed position token at offset {offset}: {text:?}")]
    MalformedPosition { offset: usize, text: String },
}

/// One position token plus the span inserted at that slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    position: usize,
    span: Vec<String>,
}

impl Segment {
    pub fn position(&self) -> usize {
        self.position
    }

    pub fn span(&self) -> &[String] {
        &self.span
    }
}

/// The decoder-side serialization of a program's insertions: segments in
/// strictly increasing slot order.
///
/// Invariants, enforced at construction: positions strictly increase and
/// stay within [`MAX_POSITION`]; every segment has at least one span token.
/// Offsets in errors count tokens of the flattened string — each position
/// token and each span token is one offset step — so they line up with the
/// text form.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecoderString {
    segments: Vec<Segment>,
}

impl DecoderString {
    /// Validate `(position, span)` pairs into a decoder string.
    pub fn from_segments<I, S>(segments: I) -> Result<DecoderString, DecoderStringError>
    where
        I: IntoIterator<Item = (usize, Vec<S>)>,
        S: Into<String>,
    {
        let mut out: Vec<Segment> = Vec::new();
        let mut previous: Option<usize> = None;
        let mut offset = 0;
        for (position, span) in segments {
            if let Some(previous) = previous {
                if position <= previous {
                    return Err(DecoderStringError::PositionNotIncreasing {
                        offset,
                        position,
                        previous,
                    });
                }
            }
            if position > MAX_POSITION {
                return Err(DecoderStringError::PositionTooLarge { offset, position });
            }
            previous = Some(position);
            let span: Vec<String> = span.into_iter().map(Into::into).collect();
            if span.is_empty() {
                return Err(DecoderStringError::EmptySpan { offset });
            }
            offset += 1 + span.len();
            out.push(Segment { position, span });
        }
        Ok(DecoderString { segments: out })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Total inserted tokens across all segments.
    pub fn span_token_count(&self) -> usize {
        self.segments.iter().map(|s| s.span.len()).sum()
    }
}

impl fmt::Display for DecoderString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for segment in &self.segments {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "<pos_{}>", segment.position)?;
            for token in &segment.span {
                write!(f, " {token}")?;
            }
        }
        Ok(())
    }
}

/// Interpret a whitespace token as a position token, if it is one.
/// Anything shaped like `<pos_...>` with a bad number is an error rather
/// than silently treated as a span token.
fn parse_position(token: &str) -> Result<Option<usize>, ()> {
    let Some(inner) = token
        .strip_prefix("<pos_")
        .and_then(|t| t.strip_suffix('>'))
    else {
        return Ok(None);
    };
    inner.parse::<usize>().map(Some).map_err(|_| ())
}

impl FromStr for DecoderString {
    type Err = DecoderStringError;

    fn from_str(text: &str) -> Result<DecoderString, DecoderStringError> {
        let mut segments: Vec<(usize, Vec<String>)> = Vec::new();
        for (offset, token) in text.split_whitespace().enumerate() {
            let position =
                parse_position(token).map_err(|()| DecoderStringError::MalformedPosition {
                    offset,
                    text: token.to_string(),
                })?;
            match position {
                Some(position) => segments.push((position, Vec::new())),
                None => match segments.last_mut() {
                    Some((_, span)) => span.push(token.to_string()),
                    None => {
                        return Err(DecoderStringError::MissingPosition {
                            offset,
                            text: token.to_string(),
                        })
                    }
                },
            }
        }
        DecoderString::from_segments(segments)
    }
}

/// Serialize a program's insertions as a decoder string.
///
/// Fails only when an insertion slot exceeds [`MAX_POSITION`], the decoder
/// vocabulary's capacity.
pub fn render_decoder_string(program: &EditProgram) -> Result<DecoderString, DecoderStringError> {
    DecoderString::from_segments(
        program
            .insertions()
            .iter()
            .map(|ins| (ins.after, ins.span.clone())),
    )
}

/// Errors from assembling a program out of separately decoded parts.
#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("pointer chain disagrees with tags about which tokens are kept")]
    ChainTagMismatch,
    #[error(transparent)]
    Program(#[from] ProgramError),
}

/// Combine decoded insertions with tags, an ordering chain, and the source
/// they were predicted for — the inverse of [`render_decoder_string`].
pub fn parse_decoder_string(
    decoded: &DecoderString,
    tags: Vec<Tag>,
    chain: &PointerChain,
    source: TokenSeq,
) -> Result<EditProgram, AssembleError> {
    if chain.tags() != tags {
        return Err(AssembleError::ChainTagMismatch);
    }
    let insertions = decoded
        .segments()
        .iter()
        .map(|s| Insertion::new(s.position, s.span.to_vec()))
        .collect();
    Ok(EditProgram::from_parts(
        source,
        tags,
        chain.order(),
        insertions,
    )?)
}
