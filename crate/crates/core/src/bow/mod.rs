//! Bag-of-Visual-Words baseline: response-ranked local features, a k-means
//! visual vocabulary, tf-idf-weighted L2-normalized histograms, and histogram
//! retrieval with the same ranking contract as the embedding index.

mod features;
mod kmeans;

pub use features::{detect_and_describe, DetectorConfig, Keypoint, LocalFeature, DESCRIPTOR_DIM};
pub use kmeans::{kmeans, KMeansResult};

use crate::embedding::EmbeddingRecord;
use crate::error::{Error, Result};
use crate::index::{brute_force_topk, RetrievalResult};
use crate::synth::MapSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const GVOC_MAGIC: &[u8; 4] = b"GVOC";
pub const GVOC_VERSION: u32 = 1;

/// A visual vocabulary: k-means centroids plus per-word idf weights computed
/// from the reference corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub centroids: Vec<Vec<f32>>,
    pub idf: Vec<f32>,
    pub dim: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Index of the nearest visual word for a descriptor.
    pub fn assign(&self, descriptor: &[f32]) -> Result<usize> {
        if descriptor.len() != self.dim {
            return Err(Error::invalid(format!(
                "descriptor dim {} does not match vocabulary dim {}",
                descriptor.len(),
                self.dim
            )));
        }
        let mut best = 0usize;
        let mut best_d = f32::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let mut d = 0.0f32;
            for (x, y) in descriptor.iter().zip(c.iter()) {
                let v = x - y;
                d += v * v;
            }
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok(best)
    }
}

/// tf-idf weighted, L2-normalized visual-word histogram of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct BowHistogram {
    pub image_id: String,
    pub weights: Vec<f32>,
}

/// Options for [`build_vocabulary`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabConfig {
    /// Vocabulary size V.
    pub vocab_size: usize,
    /// Features pooled per reference image for clustering.
    pub features_per_image: usize,
    /// Cap on reference images used for clustering (all by default).
    pub images_per_texture: usize,
    pub seed: u64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            vocab_size: 1024,
            features_per_image: 100,
            images_per_texture: usize::MAX,
            seed: 0,
        }
    }
}

/// Build the vocabulary from the map's reference images and derive idf
/// weights from their word document frequencies.
pub fn build_vocabulary(mapset: &MapSet, config: &VocabConfig) -> Result<Vocabulary> {
    let detector = DetectorConfig::default();
    let refs: Vec<_> = mapset
        .references
        .iter()
        .take(config.images_per_texture)
        .collect();
    let per_image: Vec<Vec<LocalFeature>> = refs
        .par_iter()
        .map(|img| detect_and_describe(&img.pixels, config.features_per_image, &detector))
        .collect();
    let pooled: Vec<Vec<f32>> = per_image
        .iter()
        .flatten()
        .map(|f| f.descriptor.clone())
        .collect();
    if pooled.len() < config.vocab_size {
        return Err(Error::invalid(format!(
            "pooled {} features but the vocabulary needs {}",
            pooled.len(),
            config.vocab_size
        )));
    }
    let result = kmeans(&pooled, config.vocab_size, config.seed, 100, 1e-4)?;
    let mut vocab = Vocabulary {
        dim: DESCRIPTOR_DIM,
        idf: vec![1.0; result.centroids.len()],
        centroids: result.centroids,
    };

    // Document frequency over reference images.
    let mut df = vec![0usize; vocab.len()];
    for feats in &per_image {
        let mut present = vec![false; vocab.len()];
        for f in feats {
            present[vocab.assign(&f.descriptor)?] = true;
        }
        for (d, p) in df.iter_mut().zip(present.iter()) {
            if *p {
                *d += 1;
            }
        }
    }
    let n_docs = refs.len() as f32;
    for (idf, &d) in vocab.idf.iter_mut().zip(df.iter()) {
        *idf = ((1.0 + n_docs) / (1.0 + d as f32)).ln() + 1.0;
    }
    Ok(vocab)
}

/// Raw word counts of a feature set (pre-normalization tf vector).
pub fn word_counts(features: &[LocalFeature], vocab: &Vocabulary) -> Result<Vec<f32>> {
    let mut counts = vec![0.0f32; vocab.len()];
    for f in features {
        counts[vocab.assign(&f.descriptor)?] += 1.0;
    }
    Ok(counts)
}

/// Hard-assign descriptors to words, weight by idf, L2-normalize.
/// An empty feature set produces the all-zero histogram.
pub fn bow_embed(
    image_id: &str,
    features: &[LocalFeature],
    vocab: &Vocabulary,
) -> Result<BowHistogram> {
    let mut weights = word_counts(features, vocab)?;
    for (w, &idf) in weights.iter_mut().zip(vocab.idf.iter()) {
        *w *= idf;
    }
    let norm = weights.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > 0.0 {
        for w in &mut weights {
            *w /= norm;
        }
    }
    Ok(BowHistogram {
        image_id: image_id.to_string(),
        weights,
    })
}

/// Rank references by Euclidean histogram distance (same tie-breaking as the
/// embedding index; equivalent ordering to cosine similarity for normalized
/// histograms).
pub fn bow_retrieve(
    query: &BowHistogram,
    references: &[BowHistogram],
    k: usize,
) -> Result<RetrievalResult> {
    let records: Vec<EmbeddingRecord> = references
        .iter()
        .map(|h| EmbeddingRecord::new(h.image_id.clone(), h.weights.clone()))
        .collect::<Result<_>>()?;
    brute_force_topk(&records, &query.image_id, &query.weights, k)
}

/// One row of the feature-budget sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_features: usize,
    pub recall_r0: f64,
}

/// Run the full BoW pipeline for each feature budget `n` and report R0@k,
/// sharing one vocabulary across budgets.
pub fn sweep_features_per_image(
    mapset: &MapSet,
    n_values: &[usize],
    vocab_config: &VocabConfig,
    k: usize,
) -> Result<Vec<SweepRow>> {
    if n_values.is_empty() {
        return Err(Error::invalid("sweep needs at least one feature budget"));
    }
    let vocab = build_vocabulary(mapset, vocab_config)?;
    let labels = crate::pairs::enumerate_overlaps(mapset, 0.0)?;
    let detector = DetectorConfig::default();
    let n_max = *n_values.iter().max().unwrap();

    // Extract once at the largest budget; smaller budgets are prefixes
    // because features are response-ranked.
    let ref_feats: Vec<Vec<LocalFeature>> = mapset
        .references
        .par_iter()
        .map(|img| detect_and_describe(&img.pixels, n_max, &detector))
        .collect();
    let query_feats: Vec<Vec<LocalFeature>> = mapset
        .queries
        .par_iter()
        .map(|img| detect_and_describe(&img.pixels, n_max, &detector))
        .collect();

    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let refs: Vec<BowHistogram> = mapset
            .references
            .iter()
            .zip(ref_feats.iter())
            .map(|(img, feats)| bow_embed(&img.id, &feats[..feats.len().min(n)], &vocab))
            .collect::<Result<_>>()?;
        let results: Vec<RetrievalResult> = mapset
            .queries
            .iter()
            .zip(query_feats.iter())
            .map(|(img, feats)| {
                let hist = bow_embed(&img.id, &feats[..feats.len().min(n)], &vocab)?;
                bow_retrieve(&hist, &refs, k)
            })
            .collect::<Result<_>>()?;
        let entry = crate::evalloc::recall_at_k(&results, &labels, k, 0.0)?;
        rows.push(SweepRow {
            n_features: n,
            recall_r0: entry.recall,
        });
    }
    Ok(rows)
}

/// Write a vocabulary: magic `GVOC`, version u32 LE, V u32, D u32, centroids
/// f32 LE row-major, then idf weights f32[V].
pub fn write_vocabulary(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(GVOC_MAGIC);
    buf.extend_from_slice(&GVOC_VERSION.to_le_bytes());
    buf.extend_from_slice(&(vocab.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(vocab.dim as u32).to_le_bytes());
    for c in &vocab.centroids {
        for v in c {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in &vocab.idf {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Read a vocabulary written by [`write_vocabulary`].
pub fn read_vocabulary(path: &Path) -> Result<Vocabulary> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(Error::format(path, "truncated vocabulary"));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != GVOC_MAGIC {
        return Err(Error::format(path, "missing GVOC magic"));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != GVOC_VERSION {
        return Err(Error::FormatVersion {
            path: path.display().to_string(),
            found: version,
            expected: GVOC_VERSION,
        });
    }
    let v = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut centroids = Vec::with_capacity(v);
    for _ in 0..v {
        let mut row = Vec::with_capacity(d);
        for _ in 0..d {
            row.push(f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()));
        }
        centroids.push(row);
    }
    let mut idf = Vec::with_capacity(v);
    for _ in 0..v {
        idf.push(f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()));
    }
    if pos != buf.len() {
        return Err(Error::format(path, "trailing bytes"));
    }
    Ok(Vocabulary { centroids, idf, dim: d })
}
