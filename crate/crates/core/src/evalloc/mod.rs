//! Retrieval scoring and downstream localization.
//!
//! Recall@k follows the overlap-thresholded definition: per query, the share
//! of correctly retrieved references among the maximum actually available,
//! `min(k, |{refs with overlap >= x}|)`. Queries with an empty denominator are
//! excluded from the aggregate. A complete failure is a query whose top-k
//! holds no overlapping reference at all.

mod campaign;
mod matching;
mod ransac;
pub mod report;

pub use campaign::{localization_campaign, CampaignConfig, CampaignResult, RetrievalSource};
pub use matching::{match_features, Correspondence};
pub use ransac::{
    estimate_rigid_ransac, ransac_rigid_pose, LocalizationResult, RansacConfig, RigidTransform2D,
};

use crate::error::{Error, Result};
use crate::geometry::OverlapLabel;
use crate::index::RetrievalResult;
use std::collections::HashMap;

/// Overlap thresholds reported by the standard recall table.
pub const RECALL_THRESHOLDS: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

/// Overlap lookup per query, built from an exhaustive label set.
pub struct OverlapLookup {
    by_query: HashMap<String, HashMap<String, f64>>,
}

impl OverlapLookup {
    pub fn from_labels(labels: &[OverlapLabel]) -> Self {
        let mut by_query: HashMap<String, HashMap<String, f64>> = HashMap::new();
        for l in labels {
            by_query
                .entry(l.query_id.clone())
                .or_default()
                .insert(l.ref_id.clone(), l.overlap);
        }
        Self { by_query }
    }

    pub fn overlap(&self, query_id: &str, ref_id: &str) -> f64 {
        self.by_query
            .get(query_id)
            .and_then(|m| m.get(ref_id))
            .copied()
            .unwrap_or(0.0)
    }

    /// Number of references meeting the threshold for one query
    /// (`x == 0` means any positive overlap).
    pub fn available(&self, query_id: &str, min_overlap: f64) -> usize {
        self.by_query
            .get(query_id)
            .map(|m| {
                m.values()
                    .filter(|&&o| meets_threshold(o, min_overlap))
                    .count()
            })
            .unwrap_or(0)
    }
}

#[inline]
fn meets_threshold(overlap: f64, min_overlap: f64) -> bool {
    if min_overlap <= 0.0 {
        overlap > 0.0
    } else {
        overlap >= min_overlap
    }
}

/// Recall of one query at one threshold; `None` when no reference qualifies.
#[derive(Debug, Clone, PartialEq)]
pub struct PerQueryRecall {
    pub query_id: String,
    pub available: usize,
    pub correct: usize,
    pub recall: Option<f64>,
}

/// Aggregate recall at one overlap threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallEntry {
    pub min_overlap: f64,
    pub k: usize,
    /// Mean over queries with a nonempty denominator.
    pub recall: f64,
    pub included_queries: usize,
    pub per_query: Vec<PerQueryRecall>,
}

/// Correct/available counts for an overlap band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BandCount {
    pub correct: usize,
    pub available: usize,
}

/// Full scoring of one retrieval run.
#[derive(Debug, Clone)]
pub struct RecallReport {
    pub k: usize,
    pub entries: Vec<RecallEntry>,
    pub failure_count: usize,
    /// Correct retrievals among references with overlap in (0, 0.4).
    pub band_low: BandCount,
    /// Correct retrievals among references with overlap >= 0.4.
    pub band_high: BandCount,
}

/// Compute recall@k at a single overlap threshold.
pub fn recall_at_k(
    results: &[RetrievalResult],
    labels: &[OverlapLabel],
    k: usize,
    min_overlap: f64,
) -> Result<RecallEntry> {
    let lookup = OverlapLookup::from_labels(labels);
    recall_with_lookup(results, &lookup, k, min_overlap)
}

fn recall_with_lookup(
    results: &[RetrievalResult],
    lookup: &OverlapLookup,
    k: usize,
    min_overlap: f64,
) -> Result<RecallEntry> {
    if k == 0 {
        return Err(Error::invalid("recall requires k >= 1"));
    }
    let mut per_query = Vec::with_capacity(results.len());
    let mut sum = 0.0;
    let mut included = 0usize;
    for result in results {
        let available = lookup.available(&result.query_id, min_overlap);
        let correct = result
            .ranked
            .iter()
            .take(k)
            .filter(|(ref_id, _)| {
                meets_threshold(lookup.overlap(&result.query_id, ref_id), min_overlap)
            })
            .count();
        let recall = if available == 0 {
            None
        } else {
            let denom = k.min(available);
            let r = correct as f64 / denom as f64;
            sum += r;
            included += 1;
            Some(r)
        };
        per_query.push(PerQueryRecall {
            query_id: result.query_id.clone(),
            available,
            correct,
            recall,
        });
    }
    Ok(RecallEntry {
        min_overlap,
        k,
        recall: if included == 0 { 0.0 } else { sum / included as f64 },
        included_queries: included,
        per_query,
    })
}

/// Number of queries (with at least one overlapping reference) whose top-k
/// contains no overlapping reference at all.
pub fn count_failures(results: &[RetrievalResult], labels: &[OverlapLabel], k: usize) -> usize {
    let lookup = OverlapLookup::from_labels(labels);
    count_failures_with_lookup(results, &lookup, k)
}

fn count_failures_with_lookup(
    results: &[RetrievalResult],
    lookup: &OverlapLookup,
    k: usize,
) -> usize {
    results
        .iter()
        .filter(|result| {
            lookup.available(&result.query_id, 0.0) > 0
                && !result
                    .ranked
                    .iter()
                    .take(k)
                    .any(|(ref_id, _)| lookup.overlap(&result.query_id, ref_id) > 0.0)
        })
        .count()
}

/// Score a retrieval run at every standard threshold plus failure and
/// overlap-band counts.
pub fn compute_recall_report(
    results: &[RetrievalResult],
    labels: &[OverlapLabel],
    k: usize,
) -> Result<RecallReport> {
    let lookup = OverlapLookup::from_labels(labels);
    let entries = RECALL_THRESHOLDS
        .iter()
        .map(|&x| recall_with_lookup(results, &lookup, k, x))
        .collect::<Result<Vec<_>>>()?;

    let mut band_low = BandCount::default();
    let mut band_high = BandCount::default();
    for result in results {
        if let Some(refs) = lookup.by_query.get(&result.query_id) {
            for (ref_id, &o) in refs {
                if o <= 0.0 {
                    continue;
                }
                let band = if o < 0.4 { &mut band_low } else { &mut band_high };
                band.available += 1;
                if result
                    .ranked
                    .iter()
                    .take(k)
                    .any(|(rid, _)| rid == ref_id)
                {
                    band.correct += 1;
                }
            }
        }
    }

    Ok(RecallReport {
        k,
        entries,
        failure_count: count_failures_with_lookup(results, &lookup, k),
        band_low,
        band_high,
    })
}
