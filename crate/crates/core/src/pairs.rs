//! Siamese training set construction: overlap enumeration, positive/negative
//! sampling, augmentation, and the pair-list CSV format.
//!
//! Positives are query-reference pairs with at least 20% footprint overlap;
//! negatives are sampled uniformly from the zero-overlap pairs to match the
//! positive count exactly. Pairs with overlap in (0, 0.2) are excluded from
//! training entirely.

use crate::error::{Error, Result};
use crate::geometry::{overlap_fraction, Footprint, OverlapLabel};
use crate::raster::Raster;
use crate::synth::MapSet;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::path::Path;

/// Default minimum overlap for a positive training pair.
pub const DEFAULT_MIN_POS_OVERLAP: f64 = 0.20;

/// Flip/rotation transform recorded with each training sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub flip_h: bool,
    pub flip_v: bool,
    /// Rotation about the raster center, radians in `[-pi/4, pi/4]`.
    pub rotation: f64,
}

impl AugmentSpec {
    pub fn identity() -> Self {
        Self {
            flip_h: false,
            flip_v: false,
            rotation: 0.0,
        }
    }

    pub fn random(rng: &mut StdRng) -> Self {
        Self {
            flip_h: rng.gen(),
            flip_v: rng.gen(),
            rotation: rng.gen_range(-FRAC_PI_4..=FRAC_PI_4),
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.flip_h && !self.flip_v && self.rotation == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// One Siamese training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub query_id: String,
    pub ref_id: String,
    pub overlap: f64,
    pub polarity: Polarity,
    pub augmentation: AugmentSpec,
}

/// Options for [`build_training_pairs`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    pub min_pos_overlap: f64,
    /// Number of augmented copies of every positive pair.
    pub augment_factor: usize,
    pub seed: u64,
    /// When true, the pair's two images get independent augmentations at train
    /// time; the recorded spec then applies to the query side only.
    pub independent_augmentation: bool,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            min_pos_overlap: DEFAULT_MIN_POS_OVERLAP,
            augment_factor: 1,
            seed: 0,
            independent_augmentation: false,
        }
    }
}

/// Compute overlap labels for every (query, reference) pair with overlap at
/// least `min_overlap`. With `min_overlap == 0` the zero-overlap pairs are
/// included explicitly, giving the exact zero/nonzero partition.
///
/// Far-apart pairs are pre-filtered without clipping: centroid distance above
/// the footprint diagonal implies zero overlap.
pub fn enumerate_overlaps(mapset: &MapSet, min_overlap: f64) -> Result<Vec<OverlapLabel>> {
    let ref_feet: Vec<(usize, Footprint)> = mapset
        .references
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.footprint()))
        .collect();
    let mut labels = Vec::new();
    for query in &mapset.queries {
        let qf = query.footprint();
        let diag = (query.width_m.powi(2) + query.height_m.powi(2)).sqrt();
        for (ri, rf) in &ref_feet {
            let reference = &mapset.references[*ri];
            let dx = reference.pose.x - query.pose.x;
            let dy = reference.pose.y - query.pose.y;
            let overlap = if dx * dx + dy * dy > diag * diag {
                0.0
            } else {
                overlap_fraction(&qf, rf)?
            };
            // min_overlap == 0 keeps every pair, zero-overlap ones included.
            if overlap >= min_overlap {
                labels.push(OverlapLabel {
                    query_id: query.id.clone(),
                    ref_id: reference.id.clone(),
                    overlap,
                });
            }
        }
    }
    Ok(labels)
}

/// Assemble the shuffled Siamese training list.
///
/// Every pair at or above `min_pos_overlap` becomes `augment_factor` positive
/// samples with fresh augmentation specs; an equal number of negatives is
/// drawn uniformly from the zero-overlap pairs. Output order is a seeded
/// uniform shuffle.
pub fn build_training_pairs(mapset: &MapSet, config: &PairConfig) -> Result<Vec<PairSample>> {
    let labels = enumerate_overlaps(mapset, 0.0)?;
    let positives: Vec<&OverlapLabel> = labels
        .iter()
        .filter(|l| l.overlap >= config.min_pos_overlap)
        .collect();
    let zeros: Vec<&OverlapLabel> = labels.iter().filter(|l| l.overlap == 0.0).collect();
    if positives.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no query-reference pair reaches the {:.0}% positive overlap floor",
            config.min_pos_overlap * 100.0
        )));
    }
    let augment = config.augment_factor.max(1);
    let n_side = positives.len() * augment;
    if zeros.is_empty() {
        return Err(Error::EmptyDataset(
            "no zero-overlap pairs available for negative sampling".to_string(),
        ));
    }

    let mut rng = StdRng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(2 * n_side);
    for label in &positives {
        for _ in 0..augment {
            samples.push(PairSample {
                query_id: label.query_id.clone(),
                ref_id: label.ref_id.clone(),
                overlap: label.overlap,
                polarity: Polarity::Positive,
                augmentation: AugmentSpec::random(&mut rng),
            });
        }
    }

    // Uniform negatives: a partial Fisher-Yates draw when the pool is large
    // enough, with replacement otherwise.
    let neg_indices: Vec<usize> = if zeros.len() >= n_side {
        let mut idx: Vec<usize> = (0..zeros.len()).collect();
        for i in 0..n_side {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        idx.truncate(n_side);
        idx
    } else {
        (0..n_side).map(|_| rng.gen_range(0..zeros.len())).collect()
    };
    for zi in neg_indices {
        let label = zeros[zi];
        samples.push(PairSample {
            query_id: label.query_id.clone(),
            ref_id: label.ref_id.clone(),
            overlap: 0.0,
            polarity: Polarity::Negative,
            augmentation: AugmentSpec::random(&mut rng),
        });
    }

    // Seeded uniform shuffle over the combined list.
    for i in (1..samples.len()).rev() {
        let j = rng.gen_range(0..=i);
        samples.swap(i, j);
    }
    Ok(samples)
}

/// Flip then rotate a raster about its center with bilinear interpolation and
/// reflective padding, keeping the original dimensions.
pub fn apply_augmentation(pixels: &Raster, spec: &AugmentSpec) -> Raster {
    if spec.is_identity() {
        return pixels.clone();
    }
    let w = pixels.width();
    let h = pixels.height();
    let mut flipped = pixels.clone();
    if spec.flip_h || spec.flip_v {
        let mut out = Raster::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let sx = if spec.flip_h { w - 1 - x } else { x };
                let sy = if spec.flip_v { h - 1 - y } else { y };
                out.set(x, y, flipped.get(sx, sy));
            }
        }
        flipped = out;
    }
    if spec.rotation == 0.0 {
        return flipped;
    }
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    // Inverse map: sample the source at the backwards-rotated position.
    let (s, c) = (-spec.rotation).sin_cos();
    let mut out = Raster::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cx + c * dx - s * dy;
            let sy = cy + s * dx + c * dy;
            let v = flipped.sample_bilinear_reflect(sx, sy);
            out.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

pub const PAIR_CSV_HEADER: &str = "query_id,ref_id,overlap,polarity,flip_h,flip_v,rotation_rad";

/// Write a pair list in the CSV interchange format.
pub fn write_pairs(samples: &[PairSample], path: &Path) -> Result<()> {
    let mut text = String::from(PAIR_CSV_HEADER);
    text.push('\n');
    for s in samples {
        let polarity = match s.polarity {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        };
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.query_id,
            s.ref_id,
            s.overlap,
            polarity,
            s.augmentation.flip_h,
            s.augmentation.flip_v,
            s.augmentation.rotation
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a pair list written by [`write_pairs`].
pub fn read_pairs(path: &Path) -> Result<Vec<PairSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == PAIR_CSV_HEADER => {}
        _ => {
            return Err(Error::parse(
                path,
                1,
                format!("expected header '{PAIR_CSV_HEADER}'"),
            ))
        }
    }
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 7 fields, found {}", f.len()),
            ));
        }
        let overlap: f64 = f[2]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad overlap"))?;
        let polarity = match f[3] {
            "positive" => Polarity::Positive,
            "negative" => Polarity::Negative,
            other => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("bad polarity '{other}'"),
                ))
            }
        };
        let parse_bool = |raw: &str| -> Result<bool> {
            raw.parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad bool '{raw}'")))
        };
        let rotation: f64 = f[6]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad rotation"))?;
        if !(0.0..=1.0).contains(&overlap) || !rotation.is_finite() {
            return Err(Error::parse(path, line_no, "field out of range"));
        }
        samples.push(PairSample {
            query_id: f[0].to_string(),
            ref_id: f[1].to_string(),
            overlap,
            polarity,
            augmentation: AugmentSpec {
                flip_h: parse_bool(f[4])?,
                flip_v: parse_bool(f[5])?,
                rotation,
            },
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{
        generate_canvas, generate_mapset, CanvasConfig, MapSetConfig, TextureStyle,
    };
    use std::collections::HashSet;

    fn mapset(n_queries: usize, seed: u64) -> MapSet {
        let canvas = generate_canvas(&CanvasConfig {
            style: TextureStyle::Speckle,
            extent_m: (0.9, 0.8),
            resolution: 350.0,
            seed,
            ..CanvasConfig::default()
        })
        .unwrap();
        generate_mapset(
            &canvas,
            &MapSetConfig {
                n_queries,
                patch_px: (64, 48),
                seed: seed + 1,
                ..MapSetConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn coincident_query_yields_full_overlap_pair() {
        let mut ms = mapset(0, 3);
        let mut q = ms.references[4].clone();
        q.id = "query_coincident".to_string();
        ms.queries.push(q);
        let labels = enumerate_overlaps(&ms, 0.2).unwrap();
        let hit = labels
            .iter()
            .find(|l| l.query_id == "query_coincident" && l.ref_id == ms.references[4].id)
            .expect("coincident pair present");
        assert_eq!(hit.overlap, 1.0);
        assert!(labels.iter().all(|l| l.overlap >= 0.2));
    }

    #[test]
    fn prefilter_matches_brute_force() {
        let ms = mapset(8, 5);
        let fast = enumerate_overlaps(&ms, 0.0).unwrap();
        // Brute force without the centroid distance shortcut.
        let mut brute = Vec::new();
        for q in &ms.queries {
            let qf = q.footprint();
            for r in &ms.references {
                let o = overlap_fraction(&qf, &r.footprint()).unwrap();
                brute.push((q.id.clone(), r.id.clone(), o));
            }
        }
        assert_eq!(fast.len(), brute.len());
        for (label, (qid, rid, o)) in fast.iter().zip(brute.iter()) {
            assert_eq!(&label.query_id, qid);
            assert_eq!(&label.ref_id, rid);
            assert!((label.overlap - o).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_counts_match_augment_factor() {
        let ms = mapset(6, 7);
        let base_pos = enumerate_overlaps(&ms, 0.2).unwrap().len();
        assert!(base_pos > 0);
        let samples = build_training_pairs(
            &ms,
            &PairConfig {
                augment_factor: 3,
                seed: 11,
                ..PairConfig::default()
            },
        )
        .unwrap();
        let pos = samples
            .iter()
            .filter(|s| s.polarity == Polarity::Positive)
            .count();
        let neg = samples.len() - pos;
        assert_eq!(pos, base_pos * 3);
        assert_eq!(neg, pos);
    }

    #[test]
    fn negatives_recheck_to_zero_overlap() {
        let ms = mapset(6, 7);
        let store = ms.image_store();
        let samples = build_training_pairs(
            &ms,
            &PairConfig {
                augment_factor: 2,
                seed: 4,
                ..PairConfig::default()
            },
        )
        .unwrap();
        for s in samples.iter().filter(|s| s.polarity == Polarity::Negative) {
            let q = store[s.query_id.as_str()].footprint();
            let r = store[s.ref_id.as_str()].footprint();
            assert_eq!(overlap_fraction(&q, &r).unwrap(), 0.0);
        }
    }

    #[test]
    fn no_pair_has_both_polarities_and_shuffle_is_permutation() {
        let ms = mapset(6, 9);
        let cfg = PairConfig {
            augment_factor: 2,
            seed: 21,
            ..PairConfig::default()
        };
        let a = build_training_pairs(&ms, &cfg).unwrap();
        let b = build_training_pairs(&ms, &cfg).unwrap();
        assert_eq!(a, b, "seeded build must be deterministic");

        let pos: HashSet<(String, String)> = a
            .iter()
            .filter(|s| s.polarity == Polarity::Positive)
            .map(|s| (s.query_id.clone(), s.ref_id.clone()))
            .collect();
        let neg: HashSet<(String, String)> = a
            .iter()
            .filter(|s| s.polarity == Polarity::Negative)
            .map(|s| (s.query_id.clone(), s.ref_id.clone()))
            .collect();
        assert!(pos.is_disjoint(&neg));

        // Different shuffle seed permutes the same multiset.
        let c = build_training_pairs(
            &ms,
            &PairConfig {
                augment_factor: 2,
                seed: 22,
                ..PairConfig::default()
            },
        )
        .unwrap();
        let key = |s: &PairSample| (s.query_id.clone(), s.ref_id.clone(), s.polarity);
        let mut ka: Vec<_> = a.iter().map(key).collect();
        let mut kc: Vec<_> = c.iter().map(key).collect();
        ka.sort();
        kc.sort();
        assert_eq!(
            ka.iter().filter(|k| k.2 == Polarity::Positive).count(),
            kc.iter().filter(|k| k.2 == Polarity::Positive).count()
        );
    }

    #[test]
    fn empty_positive_set_is_an_error() {
        let ms = mapset(0, 3);
        let err = build_training_pairs(&ms, &PairConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)));
    }

    #[test]
    fn augmentation_identity_and_involution() {
        let ms = mapset(1, 13);
        let img = &ms.queries[0].pixels;
        assert_eq!(&apply_augmentation(img, &AugmentSpec::identity()), img);

        let flip = AugmentSpec {
            flip_h: true,
            flip_v: false,
            rotation: 0.0,
        };
        let twice = apply_augmentation(&apply_augmentation(img, &flip), &flip);
        assert_eq!(&twice, img);
    }

    #[test]
    fn rotation_round_trip_close_in_the_interior() {
        // Default-resolution patch: render sampling outpaces the canvas
        // resolution, so the content is band-limited and the double bilinear
        // pass stays within interpolation tolerance.
        let canvas = generate_canvas(&CanvasConfig {
            style: TextureStyle::Speckle,
            extent_m: (0.6, 0.5),
            resolution: 350.0,
            seed: 13,
            ..CanvasConfig::default()
        })
        .unwrap();
        let pose = crate::geometry::Pose2D::new(0.3, 0.25, 0.2).unwrap();
        let img = &crate::synth::render_patch(&canvas, &pose, 0.2, 0.15, (128, 96)).unwrap();
        let fwd = apply_augmentation(
            img,
            &AugmentSpec {
                flip_h: false,
                flip_v: false,
                rotation: 0.3,
            },
        );
        let back = apply_augmentation(
            &fwd,
            &AugmentSpec {
                flip_h: false,
                flip_v: false,
                rotation: -0.3,
            },
        );
        // Compare away from the borders where reflection padding bleeds in.
        let (w, h) = (img.width(), img.height());
        let mut sum = 0.0;
        let mut n = 0.0;
        for y in h / 4..3 * h / 4 {
            for x in w / 4..3 * w / 4 {
                sum += (img.get(x, y) as f64 - back.get(x, y) as f64).abs();
                n += 1.0;
            }
        }
        assert!(sum / n < 3.0, "interior MAD {}", sum / n);
    }

    #[test]
    fn pair_csv_round_trip() {
        let ms = mapset(6, 7);
        let samples = build_training_pairs(
            &ms,
            &PairConfig {
                augment_factor: 2,
                seed: 4,
                ..PairConfig::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        write_pairs(&samples, &path).unwrap();
        let back = read_pairs(&path).unwrap();
        assert_eq!(samples, back);
    }
}
