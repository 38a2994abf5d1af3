//! Greedy construction of a minimal-insertion [`EditProgram`] from a
//! (source, target) pair — the dataset-building step.
//!
//! The scan walks the target left to right. Each target token either
//! consumes one unused source token with the same text (a keep) or joins a
//! buffer of pending insertion tokens that attaches in front of the next
//! keep — or, for a trailing buffer, after the last one. When several
//! source copies match, the scan takes the copy that starts the longest
//! contiguous run matching the upcoming target, so runs of shared tokens
//! survive as a block instead of being stitched token by token.

use crate::program::{EditProgram, Insertion, Tag};
use crate::token::{TokenSeq, TokenizerMode};

/// One aligned source token, in target order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedToken {
    /// Byte offset of the matched token in the target text.
    pub target_start: usize,
    /// Byte offset one past the matched token in the target text.
    pub target_end: usize,
    /// Which source token was consumed.
    pub source_index: usize,
    /// Unmatched target tokens seen since the previous aligned token; they
    /// are inserted immediately before this one.
    pub pending_insertion: Vec<String>,
}

/// The full result of scanning a target against a source.
///
/// Invariants (by construction): each source index appears at most once;
/// target spans are non-overlapping and strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Alignment {
    /// Aligned source tokens in target order.
    pub entries: Vec<AlignedToken>,
    /// Unmatched target tokens after the last aligned token. The scan
    /// buffers unmatched tokens until the next match, so a final buffer
    /// has no entry to ride on and must be flushed separately.
    pub trailing_insertion: Vec<String>,
}

impl Alignment {
    /// Scan `target` against `source` greedily.
    pub fn compute(source: &TokenSeq, target: &TokenSeq) -> Alignment {
        let mut used = vec![false; source.len()];
        let mut entries = Vec::new();
        let mut pending: Vec<String> = Vec::new();
        for (position, token) in target.tokens().iter().enumerate() {
            match best_contiguous_match(source, target, position, &used) {
                Some((source_index, _)) => {
                    used[source_index] = true;
                    entries.push(AlignedToken {
                        target_start: token.start(),
                        target_end: token.end(),
                        source_index,
                        pending_insertion: std::mem::take(&mut pending),
                    });
                }
                None => pending.push(token.text().to_string()),
            }
        }
        Alignment {
            entries,
            trailing_insertion: pending,
        }
    }

    /// Lower the alignment onto its source as a validated program: aligned
    /// tokens keep (in target order), everything else deletes, and the
    /// pending buffers become insertion spans.
    pub fn to_program(&self, source: TokenSeq) -> EditProgram {
        let mut tags = vec![Tag::Delete; source.len()];
        let mut order = Vec::with_capacity(self.entries.len());
        let mut insertions = Vec::new();
        for (slot, entry) in self.entries.iter().enumerate() {
            tags[entry.source_index] = Tag::Keep;
            order.push(entry.source_index);
            if !entry.pending_insertion.is_empty() {
                insertions.push(Insertion::new(slot, entry.pending_insertion.clone()));
            }
        }
        if !self.trailing_insertion.is_empty() {
            insertions.push(Insertion::new(
                self.entries.len(),
                self.trailing_insertion.clone(),
            ));
        }
        EditProgram::from_parts(source, tags, order, insertions)
            .expect("an alignment always lowers to a consistent program")
    }

    /// Total number of tokens the program will have to insert.
    pub fn inserted_token_count(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.pending_insertion.len())
            .sum::<usize>()
            + self.trailing_insertion.len()
    }
}

/// Find the unused source token matching `target[position]` that starts
/// the longest contiguous run matching the upcoming target tokens.
///
/// Returns `(source_index, run_length)`, or `None` when no unused source
/// token has the right text. A run extends while consecutive source tokens
/// are unused and equal to consecutive target tokens; ties prefer the
/// smallest source index.
pub fn best_contiguous_match(
    source: &TokenSeq,
    target: &TokenSeq,
    position: usize,
    used: &[bool],
) -> Option<(usize, usize)> {
    let want = target.get(position)?.text();
    let mut best: Option<(usize, usize)> = None;
    for start in 0..source.len() {
        if used[start] || source.tokens()[start].text() != want {
            continue;
        }
        let mut run = 1;
        while start + run < source.len()
            && position + run < target.len()
            && !used[start + run]
            && source.tokens()[start + run].text() == target.tokens()[position + run].text()
        {
            run += 1;
        }
        if best.is_none_or(|(_, best_run)| run > best_run) {
            best = Some((start, run));
        }
    }
    best
}

/// Align two token sequences and return the resulting program.
pub fn align_seqs(source: &TokenSeq, target: &TokenSeq) -> EditProgram {
    Alignment::compute(source, target).to_program(source.clone())
}

/// Tokenize both strings under `mode`, then align.
pub fn align_text(source: &str, target: &str, mode: TokenizerMode) -> EditProgram {
    let source = TokenSeq::tokenize(source, mode);
    let target = TokenSeq::tokenize(target, mode);
    align_seqs(&source, &target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use Tag::{Delete as D, Keep as K};

    fn seq(text: &str) -> TokenSeq {
        TokenSeq::tokenize(text, TokenizerMode::WhitespacePunct)
    }

    #[test]
    fn rewrite_keeps_shared_tokens_and_inserts_the_rest() {
        let program = align_text(
            "A long user query",
            "The user query is very long",
            TokenizerMode::WhitespacePunct,
        );
        assert_eq!(program.tags(), &[D, K, K, K]);
        assert_eq!(program.order(), &[2, 3, 1]);
        assert_eq!(
            program.insertions(),
            &[
                Insertion::new(0, ["The"]),
                Insertion::new(2, ["is", "very"]),
            ]
        );
    }

    #[test]
    fn identical_strings_align_to_identity() {
        let program = align_text("a b c", "a b c", TokenizerMode::Whitespace);
        assert!(program.is_identity());
    }

    #[test]
    fn pure_reordering_needs_no_insertions() {
        let program = align_text("Who you are ?", "Who are you ?", TokenizerMode::Whitespace);
        assert_eq!(program.tags(), &[K, K, K, K]);
        assert_eq!(program.order(), &[0, 2, 1, 3]);
        assert!(program.insertions().is_empty());
    }

    #[test]
    fn empty_source_is_pure_generation() {
        let program = align_text("", "hello world", TokenizerMode::Whitespace);
        assert_eq!(program.tags(), &[] as &[Tag]);
        assert_eq!(
            program.insertions(),
            &[Insertion::new(0, ["hello", "world"])]
        );
    }

    #[test]
    fn empty_target_deletes_everything() {
        let program = align_text("drop all of this", "", TokenizerMode::Whitespace);
        assert_eq!(program.tags(), &[D, D, D, D]);
        assert!(program.insertions().is_empty());
        assert!(program.order().is_empty());
    }

    #[test]
    fn duplicate_source_tokens_keep_exactly_one_copy() {
        let program = align_text("a b a", "b a", TokenizerMode::Whitespace);
        assert_eq!(program.kept_count(), 2);
        assert_eq!(program.inserted_token_count(), 0);
        let kept = program.kept_sequence();
        assert_eq!(kept, vec!["b", "a"]);
    }

    #[test]
    fn contiguity_prefers_the_copy_that_extends() {
        let source = seq("a b a c");
        let target = seq("a c");
        let used = vec![false; 4];
        let (index, run) = best_contiguous_match(&source, &target, 0, &used).unwrap();
        assert_eq!(index, 2, "the second `a` is followed by `c`");
        assert_eq!(run, 2);
    }

    #[test]
    fn contiguous_match_reports_runs_and_misses() {
        let source = seq("A long user query");
        let target = seq("The user query is very long");
        let used = vec![false; 4];
        // "user" at target position 1 starts a two-token run (user query).
        let (index, run) = best_contiguous_match(&source, &target, 1, &used).unwrap();
        assert_eq!(index, 2);
        assert_eq!(run, 2);
        // "The" at target position 0 never matches.
        assert_eq!(best_contiguous_match(&source, &target, 0, &used), None);
    }

    #[test]
    fn equal_runs_fall_back_to_smallest_index() {
        let source = seq("x y x z");
        let target = seq("x q");
        let used = vec![false; 4];
        let (index, run) = best_contiguous_match(&source, &target, 0, &used).unwrap();
        assert_eq!((index, run), (0, 1));
    }

    #[test]
    fn used_tokens_break_runs_and_candidacy() {
        let source = seq("a b c");
        let target = seq("a b c");
        // With "a" consumed, it is no longer a candidate.
        let used = vec![true, false, false];
        assert_eq!(best_contiguous_match(&source, &target, 0, &used), None);
        // With "c" consumed, the run from "b" stops before it.
        let used = vec![false, false, true];
        let (index, run) = best_contiguous_match(&source, &target, 1, &used).unwrap();
        assert_eq!((index, run), (1, 1));
    }

    #[test]
    fn trailing_unmatched_tokens_are_flushed() {
        let program = align_text("a b", "a b x y", TokenizerMode::Whitespace);
        assert_eq!(program.tags(), &[K, K]);
        assert_eq!(program.insertions(), &[Insertion::new(2, ["x", "y"])]);
    }

    #[test]
    fn alignment_spans_point_into_the_target() {
        let source = seq("sky blue");
        let target = seq("the blue sky");
        let alignment = Alignment::compute(&source, &target);
        assert_eq!(alignment.entries.len(), 2);
        let first = &alignment.entries[0];
        assert_eq!(&target.text()[first.target_start..first.target_end], "blue");
        assert_eq!(first.pending_insertion, vec!["the"]);
        assert!(alignment.trailing_insertion.is_empty());
        assert_eq!(alignment.inserted_token_count(), 1);
    }

    proptest! {
        /// Alignments stay structurally sound on arbitrary inputs: spans
        /// increase, no source token is consumed twice, and lowering to a
        /// program always validates.
        #[test]
        fn alignment_structure_holds(
            source_ids in proptest::collection::vec(0u8..4, 0..8),
            target_ids in proptest::collection::vec(0u8..4, 0..8),
        ) {
            let letters = ["a", "b", "c", "d"];
            let source = TokenSeq::from_tokens(
                source_ids.iter().map(|&i| letters[i as usize]),
            ).unwrap();
            let target = TokenSeq::from_tokens(
                target_ids.iter().map(|&i| letters[i as usize]),
            ).unwrap();
            let alignment = Alignment::compute(&source, &target);
            let mut seen = vec![false; source.len()];
            let mut last_end = 0;
            for entry in &alignment.entries {
                prop_assert!(!seen[entry.source_index]);
                seen[entry.source_index] = true;
                prop_assert!(entry.target_start >= last_end);
                prop_assert!(entry.target_start < entry.target_end);
                last_end = entry.target_end;
            }
            let program = alignment.to_program(source);
            prop_assert_eq!(program.kept_count(), alignment.entries.len());
            prop_assert_eq!(
                program.inserted_token_count(),
                alignment.inserted_token_count()
            );
        }

        /// Every target token is accounted for: kept or inserted.
        #[test]
        fn kept_plus_inserted_covers_target(
            source_ids in proptest::collection::vec(0u8..4, 0..8),
            target_ids in proptest::collection::vec(0u8..4, 0..8),
        ) {
            let letters = ["a", "b", "c", "d"];
            let source = TokenSeq::from_tokens(
                source_ids.iter().map(|&i| letters[i as usize]),
            ).unwrap();
            let target = TokenSeq::from_tokens(
                target_ids.iter().map(|&i| letters[i as usize]),
            ).unwrap();
            let alignment = Alignment::compute(&source, &target);
            prop_assert_eq!(
                alignment.entries.len() + alignment.inserted_token_count(),
                target.len()
            );
        }
    }
}
