//! Descriptor matching with the first-to-second ratio test and mutual-best
//! filtering.

use crate::bow::LocalFeature;

/// A retained query-reference feature match, with pixel coordinates on both
/// sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub query_idx: usize,
    pub ref_idx: usize,
    pub query_px: [f64; 2],
    pub ref_px: [f64; 2],
    pub distance: f32,
}

#[inline]
fn desc_dist2(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Nearest and second-nearest neighbor of `desc` in `set`.
fn two_nearest(desc: &[f32], set: &[LocalFeature]) -> (usize, f32, f32) {
    let mut best = usize::MAX;
    let mut d1 = f32::INFINITY;
    let mut d2 = f32::INFINITY;
    for (i, f) in set.iter().enumerate() {
        let d = desc_dist2(desc, &f.descriptor);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = i;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1.sqrt(), d2.sqrt())
}

/// Match query features against reference features.
///
/// A query feature keeps its nearest reference neighbor when the
/// first-to-second distance ratio stays below `ratio`, and the pairing is
/// mutual-best (the reference feature's nearest query feature is the same
/// one). Descriptors must share a dimension.
pub fn match_features(
    query: &[LocalFeature],
    reference: &[LocalFeature],
    ratio: f32,
) -> Vec<Correspondence> {
    if query.is_empty() || reference.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (qi, qf) in query.iter().enumerate() {
        let (ri, d1, d2) = two_nearest(&qf.descriptor, reference);
        if ri == usize::MAX || !(d1 < ratio * d2) {
            continue;
        }
        // Mutual-best check against the query side.
        let (back, _, _) = two_nearest(&reference[ri].descriptor, query);
        if back != qi {
            continue;
        }
        out.push(Correspondence {
            query_idx: qi,
            ref_idx: ri,
            query_px: [qf.keypoint.x as f64, qf.keypoint.y as f64],
            ref_px: [
                reference[ri].keypoint.x as f64,
                reference[ri].keypoint.y as f64,
            ],
            distance: d1,
        });
    }
    out
}
