//! Exact top-k retrieval over embedding records: a balanced k-d tree plus a
//! brute-force scan with the identical contract, used as its oracle and as
//! the high-dimension fallback.
//!
//! Ties are broken by lexicographic image id so results are total-ordered and
//! reproducible. Tree queries are exact: they return the same ids and
//! bit-equal distances as the linear scan.

use crate::embedding::EmbeddingRecord;
use crate::error::{Error, Result};
use std::collections::HashSet;

/// Ranked retrieval output for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub query_id: String,
    /// `(ref_id, distance)` ascending by `(distance, ref_id)`.
    pub ranked: Vec<(String, f32)>,
    /// Requested neighbor count (the ranking may be shorter on small indexes).
    pub k: usize,
}

struct Node {
    axis: usize,
    threshold: f32,
    /// Index into `records` for the point stored at this node.
    point: usize,
    left: Option<Box<Node>>,
    right: Option<Box<Node>>,
}

/// Immutable k-d tree over embedding vectors.
pub struct EmbeddingIndex {
    records: Vec<EmbeddingRecord>,
    root: Option<Box<Node>>,
    dim: usize,
}

/// Euclidean distance; the single shared routine keeps tree and brute-force
/// distances bit-identical.
#[inline]
fn euclidean(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc.sqrt()
}

/// Candidate ordering: distance ascending, id ascending.
#[inline]
fn better(d0: f32, id0: &str, d1: f32, id1: &str) -> bool {
    d0 < d1 || (d0 == d1 && id0 < id1)
}

/// Bounded worst-first collection of the current best k candidates.
struct TopK<'a> {
    k: usize,
    /// (distance, record index) sorted ascending by (distance, id).
    entries: Vec<(f32, usize)>,
    records: &'a [EmbeddingRecord],
}

impl<'a> TopK<'a> {
    fn new(k: usize, records: &'a [EmbeddingRecord]) -> Self {
        Self {
            k,
            entries: Vec::with_capacity(k + 1),
            records,
        }
    }

    fn offer(&mut self, dist: f32, idx: usize) {
        let id = self.records[idx].image_id.as_str();
        let pos = self
            .entries
            .partition_point(|&(d, i)| better(d, &self.records[i].image_id, dist, id));
        if pos >= self.k {
            return;
        }
        self.entries.insert(pos, (dist, idx));
        self.entries.truncate(self.k);
    }

    fn worst_distance(&self) -> Option<f32> {
        if self.entries.len() < self.k {
            None
        } else {
            self.entries.last().map(|&(d, _)| d)
        }
    }
}

impl EmbeddingIndex {
    /// Build a balanced tree (median split on the max-spread axis).
    /// Deterministic for a given record order.
    pub fn build(records: Vec<EmbeddingRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("cannot build an index over zero records"));
        }
        let dim = records[0].vector.len();
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut ids = HashSet::new();
        for r in &records {
            if r.vector.len() != dim {
                return Err(Error::invalid(format!(
                    "record '{}' has dim {}, expected {dim}",
                    r.image_id,
                    r.vector.len()
                )));
            }
            if !ids.insert(r.image_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate id '{}' in index build",
                    r.image_id
                )));
            }
        }
        let mut indices: Vec<usize> = (0..records.len()).collect();
        let root = build_node(&records, &mut indices, dim);
        Ok(Self { records, root, dim })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Maximum node depth, for balance checks.
    pub fn depth(&self) -> usize {
        fn walk(node: &Option<Box<Node>>) -> usize {
            match node {
                None => 0,
                Some(n) => 1 + walk(&n.left).max(walk(&n.right)),
            }
        }
        walk(&self.root)
    }

    /// Exact k nearest neighbors under Euclidean distance, ties broken by id.
    pub fn query_topk(&self, query_id: &str, query: &[f32], k: usize) -> Result<RetrievalResult> {
        if query.len() != self.dim {
            return Err(Error::invalid(format!(
                "query dim {} does not match index dim {}",
                query.len(),
                self.dim
            )));
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let mut top = TopK::new(k, &self.records);
        search(&self.root, query, &mut top);
        Ok(RetrievalResult {
            query_id: query_id.to_string(),
            ranked: top
                .entries
                .iter()
                .map(|&(d, i)| (self.records[i].image_id.clone(), d))
                .collect(),
            k,
        })
    }
}

fn build_node(records: &[EmbeddingRecord], indices: &mut [usize], dim: usize) -> Option<Box<Node>> {
    if indices.is_empty() {
        return None;
    }
    if indices.len() == 1 {
        return Some(Box::new(Node {
            axis: 0,
            threshold: records[indices[0]].vector[0],
            point: indices[0],
            left: None,
            right: None,
        }));
    }
    // Split on the axis with the largest value spread.
    let mut axis = 0;
    let mut best_spread = f32::NEG_INFINITY;
    for a in 0..dim {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &i in indices.iter() {
            let v = records[i].vector[a];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let spread = hi - lo;
        if spread > best_spread {
            best_spread = spread;
            axis = a;
        }
    }
    let mid = indices.len() / 2;
    indices.select_nth_unstable_by(mid, |&a, &b| {
        records[a].vector[axis]
            .total_cmp(&records[b].vector[axis])
            .then_with(|| records[a].image_id.cmp(&records[b].image_id))
    });
    let point = indices[mid];
    let threshold = records[point].vector[axis];
    let (left_idx, rest) = indices.split_at_mut(mid);
    let right_idx = &mut rest[1..];
    Some(Box::new(Node {
        axis,
        threshold,
        point,
        left: build_node(records, left_idx, dim),
        right: build_node(records, right_idx, dim),
    }))
}

fn search<'a>(node: &Option<Box<Node>>, query: &[f32], top: &mut TopK<'a>) {
    let Some(n) = node else { return };
    let dist = euclidean(query, &top.records[n.point].vector);
    top.offer(dist, n.point);

    let delta = query[n.axis] - n.threshold;
    let (near, far) = if delta <= 0.0 {
        (&n.left, &n.right)
    } else {
        (&n.right, &n.left)
    };
    search(near, query, top);
    // The far side can still hold equal-distance, smaller-id candidates, so
    // prune only when the plane is strictly farther than the current worst.
    let visit_far = match top.worst_distance() {
        None => true,
        Some(worst) => delta.abs() <= worst,
    };
    if visit_far {
        search(far, query, top);
    }
}

/// Full linear scan with the same ranking contract as [`EmbeddingIndex::query_topk`].
pub fn brute_force_topk(
    records: &[EmbeddingRecord],
    query_id: &str,
    query: &[f32],
    k: usize,
) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if let Some(first) = records.first() {
        if first.vector.len() != query.len() {
            return Err(Error::invalid(format!(
                "query dim {} does not match record dim {}",
                query.len(),
                first.vector.len()
            )));
        }
    }
    let mut scored: Vec<(f32, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (euclidean(query, &r.vector), i))
        .collect();
    scored.sort_by(|&(da, ia), &(db, ib)| {
        da.total_cmp(&db)
            .then_with(|| records[ia].image_id.cmp(&records[ib].image_id))
    });
    scored.truncate(k);
    Ok(RetrievalResult {
        query_id: query_id.to_string(),
        ranked: scored
            .into_iter()
            .map(|(d, i)| (records[i].image_id.clone(), d))
            .collect(),
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_records(n: usize, dim: usize, seed: u64) -> Vec<EmbeddingRecord> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                EmbeddingRecord::new(format!("rec_{i:04}"), v).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_record_always_returned() {
        let records = random_records(1, 8, 1);
        let idx = EmbeddingIndex::build(records.clone()).unwrap();
        let res = idx.query_topk("q", &vec![0.0; 8], 3).unwrap();
        assert_eq!(res.ranked.len(), 1);
        assert_eq!(res.ranked[0].0, "rec_0000");
    }

    #[test]
    fn index_reports_size_and_sane_depth() {
        let records = random_records(500, 16, 2);
        let idx = EmbeddingIndex::build(records).unwrap();
        assert_eq!(idx.len(), 500);
        let bound = (500f64).log2().ceil() as usize + 2;
        assert!(idx.depth() <= bound, "depth {} > {}", idx.depth(), bound);
    }

    #[test]
    fn stored_vector_query_returns_itself_first() {
        let records = random_records(64, 8, 3);
        let probe = records[17].vector.clone();
        let idx = EmbeddingIndex::build(records).unwrap();
        let res = idx.query_topk("q", &probe, 5).unwrap();
        assert_eq!(res.ranked[0].0, "rec_0017");
        assert_eq!(res.ranked[0].1, 0.0);
    }

    #[test]
    fn k_beyond_size_returns_full_ranking() {
        let records = random_records(10, 4, 4);
        let idx = EmbeddingIndex::build(records).unwrap();
        let res = idx.query_topk("q", &vec![0.1; 4], 50).unwrap();
        assert_eq!(res.ranked.len(), 10);
        for w in res.ranked.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn tree_matches_brute_force_bit_exactly() {
        let records = random_records(200, 12, 5);
        let idx = EmbeddingIndex::build(records.clone()).unwrap();
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..300 {
            let q: Vec<f32> = (0..12).map(|_| rng.gen_range(-1.2..1.2)).collect();
            let k = rng.gen_range(1..=20);
            let a = idx.query_topk("q", &q, k).unwrap();
            let b = brute_force_topk(&records, "q", &q, k).unwrap();
            assert_eq!(a.ranked, b.ranked);
        }
    }

    #[test]
    fn tree_matches_brute_force_with_duplicate_distances() {
        // Many identical vectors exercise the tie-break path.
        let mut records = Vec::new();
        for i in 0..40 {
            records.push(EmbeddingRecord::new(format!("dup_{i:02}"), vec![1.0, 2.0]).unwrap());
        }
        for i in 0..10 {
            records
                .push(EmbeddingRecord::new(format!("far_{i:02}"), vec![3.0, 2.0 + i as f32]).unwrap());
        }
        let idx = EmbeddingIndex::build(records.clone()).unwrap();
        let a = idx.query_topk("q", &[1.0, 2.0], 12).unwrap();
        let b = brute_force_topk(&records, "q", &[1.0, 2.0], 12).unwrap();
        assert_eq!(a.ranked, b.ranked);
        assert_eq!(a.ranked[0].0, "dup_00");
    }

    #[test]
    fn result_for_k_is_prefix_of_k_plus_one() {
        let records = random_records(80, 6, 7);
        let idx = EmbeddingIndex::build(records).unwrap();
        let mut rng = StdRng::seed_from_u64(123);
        for _ in 0..40 {
            let q: Vec<f32> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let k = rng.gen_range(1..20);
            let a = idx.query_topk("q", &q, k).unwrap();
            let b = idx.query_topk("q", &q, k + 1).unwrap();
            assert_eq!(a.ranked[..], b.ranked[..k]);
        }
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let records = random_records(10, 4, 8);
        let idx = EmbeddingIndex::build(records.clone()).unwrap();
        assert!(idx.query_topk("q", &[0.0; 3], 5).is_err());
        assert!(idx.query_topk("q", &[0.0; 4], 0).is_err());
        assert!(brute_force_topk(&records, "q", &[0.0; 4], 0).is_err());

        let mut dup = records.clone();
        dup[3].image_id = dup[2].image_id.clone();
        assert!(EmbeddingIndex::build(dup).is_err());

        let mut mixed = records;
        mixed[1].vector.pop();
        assert!(EmbeddingIndex::build(mixed).is_err());
    }

    #[test]
    fn build_is_deterministic_given_order() {
        let records = random_records(100, 8, 9);
        let a = EmbeddingIndex::build(records.clone()).unwrap();
        let b = EmbeddingIndex::build(records).unwrap();
        let q = vec![0.3; 8];
        assert_eq!(
            a.query_topk("q", &q, 10).unwrap(),
            b.query_topk("q", &q, 10).unwrap()
        );
    }
}
