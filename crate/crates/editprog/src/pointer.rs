//! Kept-token ordering: pointer chains, conversions to and from
//! permutations, and the inference path from raw pointing scores through
//! Sinkhorn normalization to a valid chain.
//!
//! Ordering is represented two ways:
//!
//! - as a **permutation**: the kept source indices in output order;
//! - as a **chain**: every node records which node comes next in the
//!   output. A sentinel node gives the first kept token a predecessor, and
//!   the last kept token points back at the sentinel, so a valid chain is
//!   one cycle through the sentinel and every kept node.
//!
//! Node numbering everywhere in this module: node `0` is the sentinel and
//! node `i + 1` is source token `i`. Deleted tokens have no chain entry and
//! are masked out of score matrices.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::{EditProgram, Tag};

/// Hard cap on kept tokens for [`ExtractMethod::Exact`]: the dynamic
/// program visits every subset of kept nodes, so cost doubles per token.
pub const EXACT_MAX_KEPT: usize = 18;

/// Errors from chain validation, score-matrix construction, Sinkhorn
/// normalization, or permutation extraction.
#[derive(Debug, Error)]
pub enum PointerError {
    #[error("chain has no sentinel entry (empty link table)")]
    EmptyLinks,
    #[error("sentinel node has no outgoing link")]
    SentinelUnlinked,
    #[error("node {from} links to {to}, which is outside the chain")]
    LinkOutOfRange { from: usize, to: usize },
    #[error("node {from} links to {to}, which has no outgoing link")]
    LinkToDeleted { from: usize, to: usize },
    #[error("node {node} is pointed to twice (cycle away from the sentinel)")]
    RevisitedNode { node: usize },
    #[error("node {node} is linked but unreachable from the sentinel")]
    UnreachableNode { node: usize },
    #[error("order entry {index} is not a kept source token")]
    OrderEntryInvalid { index: usize },
    #[error("order repeats source token {index}")]
    OrderEntryRepeated { index: usize },
    #[error("score matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("score matrix is empty; it must at least cover the sentinel")]
    EmptyMatrix,
    #[error("score at ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("probability at ({row}, {col}) is negative")]
    NegativeEntry { row: usize, col: usize },
    #[error("{tags} tags do not fit a {dim}x{dim} matrix (need dim - 1)")]
    TagDimensionMismatch { tags: usize, dim: usize },
    #[error("temperature must be a positive finite number, got {temperature}")]
    InvalidTemperature { temperature: f64 },
    #[error("exp overflowed; raw exponentiation (zero iterations) cannot be stabilized")]
    Overflow,
    #[error("no valid chain exists: every completion crosses a zero-probability link")]
    Infeasible,
    #[error("exact extraction supports at most {max} kept tokens, got {kept}")]
    ExactTooLarge { kept: usize, max: usize },
    #[error("malformed score matrix: {0}")]
    MalformedMatrix(String),
}

/// A validated pointer chain: one cycle through the sentinel (node `0`) and
/// every kept node, with deleted nodes unlinked.
///
/// Invariants, enforced at construction: following the links from the
/// sentinel visits every linked node exactly once and returns to the
/// sentinel; no link targets an unlinked node or leaves the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ChainRecord", into = "ChainRecord")]
pub struct PointerChain {
    next: Vec<Option<usize>>,
}

impl PointerChain {
    /// Validate a raw link table. `next[0]` is the sentinel's link and
    /// `next[i + 1]` belongs to source token `i`; `None` marks deletion.
    pub fn from_links(next: Vec<Option<usize>>) -> Result<PointerChain, PointerError> {
        if next.is_empty() {
            return Err(PointerError::EmptyLinks);
        }
        if next[0].is_none() {
            return Err(PointerError::SentinelUnlinked);
        }
        let linked = next.iter().filter(|n| n.is_some()).count();
        let mut visited = vec![false; next.len()];
        let mut cur = 0;
        let mut steps = 0;
        loop {
            let to = next[cur].expect("walk only stands on linked nodes");
            if to >= next.len() {
                return Err(PointerError::LinkOutOfRange { from: cur, to });
            }
            if next[to].is_none() {
                return Err(PointerError::LinkToDeleted { from: cur, to });
            }
            steps += 1;
            if to == 0 {
                break;
            }
            if visited[to] {
                return Err(PointerError::RevisitedNode { node: to });
            }
            visited[to] = true;
            cur = to;
        }
        if steps != linked {
            let node = (1..next.len())
                .find(|&i| next[i].is_some() && !visited[i])
                .expect("an uncounted link must exist");
            return Err(PointerError::UnreachableNode { node });
        }
        Ok(PointerChain { next })
    }

    /// Build the chain for kept source indices in output order.
    /// `order` must be a permutation of the keep-tagged positions.
    pub fn from_order(order: &[usize], tags: &[Tag]) -> Result<PointerChain, PointerError> {
        let mut next = vec![None; tags.len() + 1];
        let mut seen = vec![false; tags.len()];
        let mut cur = 0;
        for &index in order {
            if index >= tags.len() || tags[index] != Tag::Keep {
                return Err(PointerError::OrderEntryInvalid { index });
            }
            if seen[index] {
                return Err(PointerError::OrderEntryRepeated { index });
            }
            seen[index] = true;
            next[cur] = Some(index + 1);
            cur = index + 1;
        }
        if let Some(index) = tags
            .iter()
            .enumerate()
            .position(|(i, t)| *t == Tag::Keep && !seen[i])
        {
            // A kept token the order never mentions would be left unlinked.
            return Err(PointerError::OrderEntryInvalid { index });
        }
        next[cur] = Some(0);
        Ok(PointerChain { next })
    }

    /// The chain encoded by a validated program's order and tags.
    pub fn from_program(program: &EditProgram) -> PointerChain {
        Self::from_order(program.order(), program.tags())
            .expect("a validated program always encodes a valid chain")
    }

    /// Raw link table; index `0` is the sentinel, `i + 1` is source token `i`.
    pub fn links(&self) -> &[Option<usize>] {
        &self.next
    }

    /// Number of source positions covered (sentinel excluded).
    pub fn source_len(&self) -> usize {
        self.next.len() - 1
    }

    /// Number of kept (linked) source positions.
    pub fn kept_count(&self) -> usize {
        self.next.iter().skip(1).filter(|n| n.is_some()).count()
    }

    /// Kept source indices in output order: walk the cycle from the
    /// sentinel and subtract the sentinel offset.
    pub fn order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.kept_count());
        let mut cur = self.next[0].expect("validated chains link the sentinel");
        while cur != 0 {
            order.push(cur - 1);
            cur = self.next[cur].expect("validated chains only visit linked nodes");
        }
        order
    }

    /// Keep/delete tags implied by which nodes are linked.
    pub fn tags(&self) -> Vec<Tag> {
        self.next
            .iter()
            .skip(1)
            .map(|n| if n.is_some() { Tag::Keep } else { Tag::Delete })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ChainRecord {
    next: Vec<Option<usize>>,
}

impl From<PointerChain> for ChainRecord {
    fn from(chain: PointerChain) -> ChainRecord {
        ChainRecord { next: chain.next }
    }
}

impl TryFrom<ChainRecord> for PointerChain {
    type Error = PointerError;

    fn try_from(record: ChainRecord) -> Result<PointerChain, PointerError> {
        PointerChain::from_links(record.next)
    }
}

/// Unnormalized pointing scores over chain nodes, plus the keep/delete tags
/// that decide which rows and columns participate.
///
/// Row `r` scores "node `r` points at ...", column `c` scores "... node `c`".
/// Row and column `0` belong to the sentinel. Entries must be finite;
/// deleted positions are masked rather than removed, so the matrix stays
/// square.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    values: Array2<f64>,
    tags: Vec<Tag>,
}

impl ScoreMatrix {
    /// A matrix with every source position kept. Dimension `n` covers one
    /// sentinel plus `n - 1` source tokens.
    pub fn new(values: Array2<f64>) -> Result<ScoreMatrix, PointerError> {
        let tags = vec![Tag::Keep; values.nrows().saturating_sub(1)];
        Self::with_tags(values, tags)
    }

    /// A matrix with explicit tags; deleted positions are masked out of
    /// normalization and extraction. `tags.len()` must be `dim - 1`.
    pub fn with_tags(values: Array2<f64>, tags: Vec<Tag>) -> Result<ScoreMatrix, PointerError> {
        if values.nrows() != values.ncols() {
            return Err(PointerError::NotSquare {
                rows: values.nrows(),
                cols: values.ncols(),
            });
        }
        if values.nrows() == 0 {
            return Err(PointerError::EmptyMatrix);
        }
        if tags.len() != values.nrows() - 1 {
            return Err(PointerError::TagDimensionMismatch {
                tags: tags.len(),
                dim: values.nrows(),
            });
        }
        for ((row, col), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(PointerError::NonFinite { row, col });
            }
        }
        Ok(ScoreMatrix { values, tags })
    }

    /// Parse either a bare JSON array of rows or an object
    /// `{"scores": [[...]], "tags": ["K", "D", ...]}`.
    pub fn from_json_str(text: &str) -> Result<ScoreMatrix, PointerError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum MatrixJson {
            Tagged {
                scores: Vec<Vec<f64>>,
                #[serde(default)]
                tags: Option<Vec<Tag>>,
            },
            Bare(Vec<Vec<f64>>),
        }

        let parsed: MatrixJson =
            serde_json::from_str(text).map_err(|e| PointerError::MalformedMatrix(e.to_string()))?;
        let (rows, tags) = match parsed {
            MatrixJson::Bare(rows) => (rows, None),
            MatrixJson::Tagged { scores, tags } => (scores, tags),
        };
        let values = rows_to_matrix(rows)?;
        match tags {
            Some(tags) => Self::with_tags(values, tags),
            None => Self::new(values),
        }
    }

    /// Parse the binary exchange format: a little-endian `u32` dimension
    /// `n`, then `n * n` little-endian `f32` values in row-major order.
    /// Binary matrices carry no tags, so every position counts as kept.
    pub fn from_binary(bytes: &[u8]) -> Result<ScoreMatrix, PointerError> {
        if bytes.len() < 4 {
            return Err(PointerError::MalformedMatrix(
                "missing 4-byte dimension header".into(),
            ));
        }
        let n = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes checked")) as usize;
        let expected = 4 + n
            .checked_mul(n)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| PointerError::MalformedMatrix(format!("dimension {n} overflows")))?;
        if bytes.len() != expected {
            return Err(PointerError::MalformedMatrix(format!(
                "expected {expected} bytes for a {n}x{n} matrix, found {}",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes[4..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunks")) as f64)
            .collect();
        let values =
            Array2::from_shape_vec((n, n), values).expect("length checked against dimension");
        Self::new(values)
    }

    /// Serialize to the binary exchange format (tags are not represented).
    pub fn to_binary(&self) -> Vec<u8> {
        let n = self.dim() as u32;
        let mut bytes = Vec::with_capacity(4 + self.values.len() * 4);
        bytes.extend_from_slice(&n.to_le_bytes());
        for v in self.values.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        bytes
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    /// Matrix dimension: sentinel plus source length.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Whether a node participates: the sentinel always does, a source
    /// node only when kept.
    fn active(&self, node: usize) -> bool {
        node == 0 || self.tags[node - 1] == Tag::Keep
    }
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<Array2<f64>, PointerError> {
    let n = rows.len();
    for row in &rows {
        if row.len() != n {
            return Err(PointerError::NotSquare {
                rows: n,
                cols: row.len(),
            });
        }
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, n), flat).expect("row lengths checked"))
}

/// Alternate row and column normalization over the unmasked submatrix.
///
/// The starting point is `exp(scores / temperature)`; each iteration
/// normalizes rows to sum to one, then columns. Masked (deleted) rows and
/// columns stay zero and are excluded from every sum. With zero iterations
/// the raw exponentials are returned untouched.
///
/// Scores whose magnitude after temperature scaling exceeds `30` are
/// exponentiated with their row maximum subtracted first; the first row
/// normalization cancels that rescaling exactly, so iterated results are
/// unchanged while overflow is avoided. Zero-iteration calls skip the
/// rescaling (the contract is the raw exponential) and instead fail if the
/// exponential overflows.
pub fn sinkhorn(
    scores: &ScoreMatrix,
    iterations: usize,
    temperature: f64,
) -> Result<Array2<f64>, PointerError> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(PointerError::InvalidTemperature { temperature });
    }
    let n = scores.dim();
    let active: Vec<bool> = (0..n).map(|i| scores.active(i)).collect();
    let stabilize = iterations > 0
        && scores
            .values
            .indexed_iter()
            .any(|((r, c), v)| active[r] && active[c] && (v / temperature).abs() > 30.0);

    let mut s = Array2::<f64>::zeros((n, n));
    for r in 0..n {
        if !active[r] {
            continue;
        }
        let shift = if stabilize {
            (0..n)
                .filter(|&c| active[c])
                .map(|c| scores.values[[r, c]] / temperature)
                .fold(f64::NEG_INFINITY, f64::max)
        } else {
            0.0
        };
        for c in 0..n {
            if active[c] {
                s[[r, c]] = (scores.values[[r, c]] / temperature - shift).exp();
            }
        }
    }
    if iterations == 0 && s.iter().any(|v| !v.is_finite()) {
        return Err(PointerError::Overflow);
    }

    for _ in 0..iterations {
        for r in 0..n {
            if !active[r] {
                continue;
            }
            let sum: f64 = (0..n).filter(|&c| active[c]).map(|c| s[[r, c]]).sum();
            if sum > 0.0 {
                for c in 0..n {
                    s[[r, c]] /= sum;
                }
            }
        }
        for c in 0..n {
            if !active[c] {
                continue;
            }
            let sum: f64 = (0..n).filter(|&r| active[r]).map(|r| s[[r, c]]).sum();
            if sum > 0.0 {
                for r in 0..n {
                    s[[r, c]] /= sum;
                }
            }
        }
    }
    Ok(s)
}

/// How [`extract_permutation`] turns a normalized matrix into a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractMethod {
    /// Repeatedly take the largest remaining entry, retiring its row and
    /// column and skipping entries that would close a cycle early.
    Greedy,
    /// Maximize the total log-probability over all valid chains with a
    /// subset dynamic program. Exponential in kept tokens; see
    /// [`EXACT_MAX_KEPT`].
    Exact,
}

/// Decode a valid [`PointerChain`] from a probability matrix.
///
/// Row-wise argmax alone can point two nodes at the same successor; both
/// methods here always return a valid chain instead. Entries equal to zero
/// are treated as forbidden links, so a matrix whose zeros rule out every
/// completion produces [`PointerError::Infeasible`] rather than an invalid
/// chain.
pub fn extract_permutation(
    probabilities: &Array2<f64>,
    tags: &[Tag],
    method: ExtractMethod,
) -> Result<PointerChain, PointerError> {
    let n = probabilities.nrows();
    if probabilities.ncols() != n {
        return Err(PointerError::NotSquare {
            rows: n,
            cols: probabilities.ncols(),
        });
    }
    if n == 0 {
        return Err(PointerError::EmptyMatrix);
    }
    if tags.len() != n - 1 {
        return Err(PointerError::TagDimensionMismatch {
            tags: tags.len(),
            dim: n,
        });
    }
    for ((row, col), v) in probabilities.indexed_iter() {
        if !v.is_finite() {
            return Err(PointerError::NonFinite { row, col });
        }
        if *v < 0.0 {
            return Err(PointerError::NegativeEntry { row, col });
        }
    }
    let nodes: Vec<usize> = std::iter::once(0)
        .chain(
            tags.iter()
                .enumerate()
                .filter(|(_, t)| **t == Tag::Keep)
                .map(|(i, _)| i + 1),
        )
        .collect();
    if nodes.len() == 1 {
        let mut next = vec![None; n];
        next[0] = Some(0);
        return PointerChain::from_links(next);
    }
    match method {
        ExtractMethod::Greedy => greedy_chain(probabilities, &nodes, n),
        ExtractMethod::Exact => exact_chain(probabilities, &nodes, n),
    }
}

fn greedy_chain(
    probs: &Array2<f64>,
    nodes: &[usize],
    table_len: usize,
) -> Result<PointerChain, PointerError> {
    let k = nodes.len();
    let mut next = vec![None; table_len];
    let mut row_done = vec![false; k];
    let mut col_done = vec![false; k];
    let mut fragments = UnionFind::new(k);
    for edge in 0..k {
        let closing = edge == k - 1;
        let mut best: Option<(f64, usize, usize)> = None;
        for ri in 0..k {
            if row_done[ri] {
                continue;
            }
            for ci in 0..k {
                if col_done[ci] || ri == ci {
                    continue;
                }
                let v = probs[[nodes[ri], nodes[ci]]];
                if v <= 0.0 {
                    continue;
                }
                // Joining two nodes already in one fragment would close a
                // cycle that misses the remaining nodes.
                if !closing && fragments.find(ri) == fragments.find(ci) {
                    continue;
                }
                if best.is_none_or(|(bv, _, _)| v > bv) {
                    best = Some((v, ri, ci));
                }
            }
        }
        let Some((_, ri, ci)) = best else {
            return Err(PointerError::Infeasible);
        };
        row_done[ri] = true;
        col_done[ci] = true;
        fragments.union(ri, ci);
        next[nodes[ri]] = Some(nodes[ci]);
    }
    PointerChain::from_links(next)
}

fn exact_chain(
    probs: &Array2<f64>,
    nodes: &[usize],
    table_len: usize,
) -> Result<PointerChain, PointerError> {
    let k = nodes.len();
    let kept = k - 1;
    if kept > EXACT_MAX_KEPT {
        return Err(PointerError::ExactTooLarge {
            kept,
            max: EXACT_MAX_KEPT,
        });
    }
    // Log-weight of the link nodes[a] -> nodes[b]; zero probability means
    // the link is forbidden.
    let weight = |a: usize, b: usize| -> Option<f64> {
        let v = probs[[nodes[a], nodes[b]]];
        (v > 0.0).then(|| v.ln())
    };

    // dp[mask][j]: best log-probability of a path that starts at the
    // sentinel, visits exactly the kept nodes in `mask`, and ends at kept
    // node j (1-based into `nodes`; bit j - 1 of the mask).
    let full: usize = (1 << kept) - 1;
    let mut dp = vec![vec![f64::NEG_INFINITY; k]; full + 1];
    let mut parent = vec![vec![0usize; k]; full + 1];
    for j in 1..k {
        if let Some(w) = weight(0, j) {
            dp[1 << (j - 1)][j] = w;
        }
    }
    for mask in 1..=full {
        for j in 1..k {
            if mask & (1 << (j - 1)) == 0 || dp[mask][j] == f64::NEG_INFINITY {
                continue;
            }
            for step in 1..k {
                if mask & (1 << (step - 1)) != 0 {
                    continue;
                }
                let Some(w) = weight(j, step) else { continue };
                let cand = dp[mask][j] + w;
                let grown = mask | 1 << (step - 1);
                if cand > dp[grown][step] {
                    dp[grown][step] = cand;
                    parent[grown][step] = j;
                }
            }
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for (j, &reached) in dp[full].iter().enumerate().skip(1) {
        if reached == f64::NEG_INFINITY {
            continue;
        }
        let Some(w) = weight(j, 0) else { continue };
        let total = reached + w;
        if best.is_none_or(|(bv, _)| total > bv) {
            best = Some((total, j));
        }
    }
    let Some((_, mut j)) = best else {
        return Err(PointerError::Infeasible);
    };

    let mut next = vec![None; table_len];
    next[nodes[j]] = Some(0);
    let mut mask = full;
    while mask.count_ones() > 1 {
        let p = parent[mask][j];
        next[nodes[p]] = Some(nodes[j]);
        mask ^= 1 << (j - 1);
        j = p;
    }
    next[0] = Some(nodes[j]);
    PointerChain::from_links(next)
}

/// Union-find over chain fragments for greedy cycle prevention.
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}
