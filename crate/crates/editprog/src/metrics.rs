//! Corpus measurement: translation error rate (TER) with its
//! insertion/deletion/substitution/shift decomposition, and per-dataset
//! statistics (mean lengths, mean inserted tokens, corpus TER).
//!
//! TER counts the edits that turn a hypothesis into the reference. On top
//! of word-level edit distance it allows block shifts: any contiguous span
//! may move as a single edit. The shift search is greedy — take the shift
//! with the largest edit-distance reduction, repeat — mirroring the
//! reference tool, including its span-length and shift-distance caps.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::align::align_seqs;
use crate::token::{TokenSeq, TokenizerMode};

/// Errors from TER or statistics computation.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("reference is empty; the error rate has no normalizer")]
    EmptyReference,
    #[error("no pairs to aggregate")]
    EmptyCorpus,
}

/// Raw edit counts, before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditCounts {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub shifts: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.insertions + self.deletions + self.substitutions + self.shifts
    }

    pub fn accumulate(&mut self, other: &EditCounts) {
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.substitutions += other.substitutions;
        self.shifts += other.shifts;
    }
}

/// TER and its decomposition: `ter` is a ratio, the per-edit-type fields
/// are percentages of the reference length, and `edits` keeps the raw
/// counts, so `ter == edits.total() / reference_length` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerBreakdown {
    pub ter: f64,
    pub insertions: f64,
    pub deletions: f64,
    pub substitutions: f64,
    pub shifts: f64,
    pub edits: EditCounts,
    pub reference_length: usize,
}

impl TerBreakdown {
    /// Normalize raw counts by a reference length.
    pub fn from_counts(
        edits: EditCounts,
        reference_length: usize,
    ) -> Result<TerBreakdown, MetricsError> {
        if reference_length == 0 {
            return Err(MetricsError::EmptyReference);
        }
        let percent = |count: usize| 100.0 * count as f64 / reference_length as f64;
        Ok(TerBreakdown {
            ter: edits.total() as f64 / reference_length as f64,
            insertions: percent(edits.insertions),
            deletions: percent(edits.deletions),
            substitutions: percent(edits.substitutions),
            shifts: percent(edits.shifts),
            edits,
            reference_length,
        })
    }
}

/// Shift-search knobs; the defaults mirror the reference TER tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerOptions {
    /// Allow block shifts at all. Disabled, TER collapses to plain
    /// word-level edit distance over the reference length.
    pub shifts_enabled: bool,
    /// Largest number of positions a block may travel (measured between
    /// its removal index and reinsertion index).
    pub max_shift_distance: usize,
    /// Longest block that may shift.
    pub max_shift_span: usize,
}

impl Default for TerOptions {
    fn default() -> TerOptions {
        TerOptions {
            shifts_enabled: true,
            max_shift_distance: 10,
            max_shift_span: 10,
        }
    }
}

impl TerOptions {
    /// Plain edit distance, no shifts.
    pub fn without_shifts() -> TerOptions {
        TerOptions {
            shifts_enabled: false,
            ..TerOptions::default()
        }
    }
}

/// TER of `hypothesis` against `reference` with default options.
pub fn ter(hypothesis: &TokenSeq, reference: &TokenSeq) -> Result<TerBreakdown, MetricsError> {
    ter_with_options(hypothesis, reference, &TerOptions::default())
}

/// TER with explicit shift-search options.
pub fn ter_with_options(
    hypothesis: &TokenSeq,
    reference: &TokenSeq,
    options: &TerOptions,
) -> Result<TerBreakdown, MetricsError> {
    let edits = ter_edits(hypothesis, reference, options)?;
    TerBreakdown::from_counts(edits, reference.len())
}

/// The raw edit counts behind TER; used directly when aggregating a corpus.
pub fn ter_edits(
    hypothesis: &TokenSeq,
    reference: &TokenSeq,
    options: &TerOptions,
) -> Result<EditCounts, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    // Intern token texts so the inner loops compare integers.
    let hyp_texts = hypothesis.texts();
    let ref_texts = reference.texts();
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut hyp: Vec<u32> = Vec::with_capacity(hyp_texts.len());
    let mut reference: Vec<u32> = Vec::with_capacity(ref_texts.len());
    for (texts, out) in [(&hyp_texts, &mut hyp), (&ref_texts, &mut reference)] {
        for text in texts {
            let next = ids.len() as u32;
            out.push(*ids.entry(text).or_insert(next));
        }
    }

    let mut distance = edit_distance(&hyp, &reference);
    let mut shifts = 0;
    if options.shifts_enabled {
        while let Some((shifted, new_distance)) = best_shift(&hyp, &reference, distance, options) {
            hyp = shifted;
            distance = new_distance;
            shifts += 1;
        }
    }
    let mut counts = traceback_counts(&hyp, &reference);
    debug_assert_eq!(
        counts.insertions + counts.deletions + counts.substitutions,
        distance
    );
    counts.shifts = shifts;
    Ok(counts)
}

/// Word-level edit distance with two rolling rows.
fn edit_distance(hyp: &[u32], reference: &[u32]) -> usize {
    let mut previous: Vec<usize> = (0..=reference.len()).collect();
    let mut current = vec![0usize; reference.len() + 1];
    for (i, &h) in hyp.iter().enumerate() {
        current[0] = i + 1;
        for (j, &r) in reference.iter().enumerate() {
            let substitution = previous[j] + usize::from(h != r);
            let deletion = previous[j + 1] + 1;
            let insertion = current[j] + 1;
            current[j + 1] = substitution.min(deletion).min(insertion);
        }
        std::mem::swap(&mut previous, &mut current);
    }
    previous[reference.len()]
}

/// Decompose the remaining edit distance with a full-matrix traceback.
/// Ties prefer the diagonal (match or substitution), then deletion, then
/// insertion, so the decomposition is deterministic.
fn traceback_counts(hyp: &[u32], reference: &[u32]) -> EditCounts {
    let (m, n) = (hyp.len(), reference.len());
    let mut dp = vec![vec![0usize; n + 1]; m + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in dp[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let substitution = dp[i - 1][j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            let deletion = dp[i - 1][j] + 1;
            let insertion = dp[i][j - 1] + 1;
            dp[i][j] = substitution.min(deletion).min(insertion);
        }
    }
    let mut counts = EditCounts::default();
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let cost = usize::from(hyp[i - 1] != reference[j - 1]);
            if dp[i][j] == dp[i - 1][j - 1] + cost {
                counts.substitutions += cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[i][j] == dp[i - 1][j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// Enumerate every capped block shift of `hyp` and return the one with the
/// largest strict edit-distance reduction, ties resolved by smallest
/// (start, length, destination) in that order.
fn best_shift(
    hyp: &[u32],
    reference: &[u32],
    distance: usize,
    options: &TerOptions,
) -> Option<(Vec<u32>, usize)> {
    let mut best: Option<(usize, Vec<u32>)> = None;
    for start in 0..hyp.len() {
        for len in 1..=options.max_shift_span.min(hyp.len() - start) {
            let mut rest: Vec<u32> = Vec::with_capacity(hyp.len() - len);
            rest.extend_from_slice(&hyp[..start]);
            rest.extend_from_slice(&hyp[start + len..]);
            for dest in 0..=rest.len() {
                if dest == start || dest.abs_diff(start) > options.max_shift_distance {
                    continue;
                }
                let mut candidate: Vec<u32> = Vec::with_capacity(hyp.len());
                candidate.extend_from_slice(&rest[..dest]);
                candidate.extend_from_slice(&hyp[start..start + len]);
                candidate.extend_from_slice(&rest[dest..]);
                let new_distance = edit_distance(&candidate, reference);
                if new_distance < distance && best.as_ref().is_none_or(|(bd, _)| new_distance < *bd)
                {
                    best = Some((new_distance, candidate));
                }
            }
        }
    }
    best.map(|(d, seq)| (seq, d))
}

/// Per-pair measurements; summing these over a corpus and normalizing
/// once yields the micro-averaged statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub source_len: usize,
    pub target_len: usize,
    pub insertion_tokens: usize,
    pub edits: EditCounts,
}

/// Measure one (source, target) pair: tokenized lengths, the insertion
/// tokens of the constructed program, and TER edits of source against
/// target.
pub fn measure_pair(
    source: &str,
    target: &str,
    mode: TokenizerMode,
) -> Result<PairStats, MetricsError> {
    let source = TokenSeq::tokenize(source, mode);
    let target = TokenSeq::tokenize(target, mode);
    let program = align_seqs(&source, &target);
    let edits = ter_edits(&source, &target, &TerOptions::default())?;
    Ok(PairStats {
        source_len: source.len(),
        target_len: target.len(),
        insertion_tokens: program.inserted_token_count(),
        edits,
    })
}

/// Corpus-level aggregate: means over all pairs, TER micro-averaged
/// (edit counts and reference lengths summed before dividing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub size: usize,
    pub mean_source_len: f64,
    pub mean_target_len: f64,
    pub mean_insertion_tokens: f64,
    pub ter: TerBreakdown,
}

/// Fold per-pair measurements into corpus statistics.
pub fn accumulate_stats(
    pairs: impl IntoIterator<Item = PairStats>,
) -> Result<DatasetStats, MetricsError> {
    let mut size = 0usize;
    let mut source_tokens = 0usize;
    let mut target_tokens = 0usize;
    let mut insertion_tokens = 0usize;
    let mut edits = EditCounts::default();
    for pair in pairs {
        size += 1;
        source_tokens += pair.source_len;
        target_tokens += pair.target_len;
        insertion_tokens += pair.insertion_tokens;
        edits.accumulate(&pair.edits);
    }
    if size == 0 {
        return Err(MetricsError::EmptyCorpus);
    }
    Ok(DatasetStats {
        size,
        mean_source_len: source_tokens as f64 / size as f64,
        mean_target_len: target_tokens as f64 / size as f64,
        mean_insertion_tokens: insertion_tokens as f64 / size as f64,
        ter: TerBreakdown::from_counts(edits, target_tokens)?,
    })
}

/// Measure and aggregate in one pass.
pub fn dataset_stats<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    mode: TokenizerMode,
) -> Result<DatasetStats, MetricsError> {
    let measured: Result<Vec<PairStats>, MetricsError> = pairs
        .into_iter()
        .map(|(source, target)| measure_pair(source, target, mode))
        .collect();
    accumulate_stats(measured?)
}
