//! Token-level edit programs: construct them from (source, target) pairs
//! with as few inserted tokens as possible, apply them back to text,
//! decode kept-token orderings from score matrices, corrupt clean text
//! into pretraining data, and measure corpora and serving latency.
//!
//! An edit program answers three questions about a source sentence: which
//! tokens survive ([`program::Tag`]), in what order ([`pointer::PointerChain`]),
//! and what little must be written from scratch ([`program::Insertion`]).
//!
//! ```
//! use editprog::align::align_text;
//! use editprog::realize::realize;
//! use editprog::token::TokenizerMode;
//!
//! let program = align_text(
//!     "A long user query",
//!     "The user query is very long",
//!     TokenizerMode::Whitespace,
//! );
//! assert_eq!(program.inserted_token_count(), 3);
//! assert_eq!(realize(&program), "The user query is very long");
//! ```

pub mod align;
pub mod latency;
pub mod metrics;
pub mod noise;
pub mod pointer;
pub mod program;
pub mod realize;
pub mod token;

/// Compiles and runs every code snippet in the guide (`book/`), keeping
/// the prose in lockstep with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/programs.md")]
    mod programs {}
    #[doc = include_str!("../../../book/src/alignment.md")]
    mod alignment {}
    #[doc = include_str!("../../../book/src/realization.md")]
    mod realization {}
    #[doc = include_str!("../../../book/src/pointing.md")]
    mod pointing {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/latency.md")]
    mod latency {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
