//! Exact cosine retrieval over a normalized store.
//!
//! Rows and queries are unit length, so cosine similarity is a dot product.
//! The canonical order is score descending, then id ascending (byte-wise).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::SearchError;
use crate::id::ItemId;
use crate::store::{EmbeddingStore, NORM_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
}

impl Modality {
    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Text => "text",
            Self::Image => "image",
        }
    }
}

/// A unit-length query embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryVector {
    values: Vec<f32>,
    modality: Modality,
}

impl QueryVector {
    /// Accept an already-normalized vector.
    pub fn new(values: Vec<f32>, modality: Modality) -> Result<Self, SearchError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SearchError::NonFiniteQuery);
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > f64::from(NORM_TOLERANCE) {
            return Err(SearchError::NotUnit(norm as f32));
        }
        Ok(Self { values, modality })
    }

    /// Normalize an arbitrary non-zero vector.
    pub fn normalize(mut values: Vec<f32>, modality: Modality) -> Result<Self, SearchError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SearchError::NonFiniteQuery);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(SearchError::ZeroQuery);
        }
        for v in &mut values {
            *v = (f64::from(*v) / norm) as f32;
        }
        Ok(Self { values, modality })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn l2_norm(values: &[f32]) -> f64 {
    values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedHit {
    pub id: ItemId,
    /// Cosine similarity in `[-1, 1]`.
    pub score: f32,
    /// 0-based position in the full ranking.
    pub rank: usize,
    /// Row index in the store.
    #[serde(skip)]
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchPage {
    /// Number of ranked candidates, i.e. the store size.
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
    pub hits: Vec<RankedHit>,
}

/// Dot product of two equal-length slices, clamped to `[-1, 1]`.
pub fn score_pair(a: &[f32], b: &[f32]) -> f32 {
    to_score(dot(a, b))
}

#[inline]
fn to_score(raw: f32) -> f32 {
    // `+ 0.0` folds -0.0 into 0.0 so equal scores compare equal.
    raw.clamp(-1.0, 1.0) + 0.0
}

/// Eight independent accumulators let the compiler vectorize the loop.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let a_chunks = a.chunks_exact(8);
    let b_chunks = b.chunks_exact(8);
    let tail: f32 = a_chunks
        .remainder()
        .iter()
        .zip(b_chunks.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in a_chunks.zip(b_chunks) {
        for lane in 0..8 {
            acc[lane] += x[lane] * y[lane];
        }
    }
    let pairs = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}

#[derive(Debug, Clone, Copy)]
struct Candidate<'a> {
    score: f32,
    id: &'a str,
    row: usize,
}

impl Candidate<'_> {
    /// `Less` when `self` ranks ahead of `other`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.id.as_bytes().cmp(other.id.as_bytes()))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Greater = ranked later, so a max-heap keeps the current worst on top.
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

fn check_dim(store: &EmbeddingStore, query: &QueryVector) -> Result<(), SearchError> {
    if query.dim() != store.dim() {
        return Err(SearchError::DimensionMismatch {
            query: query.dim(),
            store: store.dim(),
        });
    }
    Ok(())
}

fn candidates<'a>(store: &'a EmbeddingStore, query: &'a QueryVector) -> impl Iterator<Item = Candidate<'a>> + 'a {
    let q = query.values();
    store
        .rows()
        .zip(store.ids())
        .enumerate()
        .map(move |(row, (values, id))| Candidate {
            score: to_score(dot(values, q)),
            id: id.as_str(),
            row,
        })
}

fn into_hits(store: &EmbeddingStore, ranked: Vec<Candidate<'_>>, first_rank: usize) -> Vec<RankedHit> {
    ranked
        .into_iter()
        .enumerate()
        .map(|(i, c)| RankedHit {
            id: store.ids()[c.row].clone(),
            score: c.score,
            rank: first_rank + i,
            row: c.row,
        })
        .collect()
}

/// Every item in canonical order.
pub fn rank_all(store: &EmbeddingStore, query: &QueryVector) -> Result<Vec<RankedHit>, SearchError> {
    check_dim(store, query)?;
    let mut all: Vec<Candidate<'_>> = candidates(store, query).collect();
    all.sort_unstable_by(Candidate::rank_cmp);
    Ok(into_hits(store, all, 0))
}

/// Ranks `[offset, offset + limit)` of the canonical order.
///
/// Keeps a bounded max-heap of the best `offset + limit` candidates, so the
/// cost is `O(N log(offset + limit))` rather than a full sort.
pub fn top_k(
    store: &EmbeddingStore,
    query: &QueryVector,
    limit: usize,
    offset: usize,
    max_limit: usize,
) -> Result<SearchPage, SearchError> {
    if limit == 0 || limit > max_limit {
        return Err(SearchError::Limit {
            got: limit,
            max: max_limit,
        });
    }
    check_dim(store, query)?;
    let total = store.len();
    let page = |hits| SearchPage {
        total,
        limit,
        offset,
        hits,
    };
    if offset >= total {
        return Ok(page(Vec::new()));
    }
    let keep = offset.saturating_add(limit).min(total);
    let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(keep + 1);
    for cand in candidates(store, query) {
        if heap.len() < keep {
            heap.push(cand);
        } else if let Some(mut worst) = heap.peek_mut() {
            if cand.score >= worst.score && cand.rank_cmp(&worst) == Ordering::Less {
                *worst = cand;
            }
        }
    }
    let ranked = heap.into_sorted_vec();
    let window = ranked.into_iter().skip(offset).collect();
    Ok(page(into_hits(store, window, offset)))
}
