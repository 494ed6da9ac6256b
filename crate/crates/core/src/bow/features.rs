//! Local feature extraction: difference-of-Gaussians blob detection over a
//! small two-octave scale pyramid, Harris-style edge rejection, dominant
//! gradient orientation, and 4x4-cell gradient-orientation-histogram
//! descriptors (8 bins, 128-D, L2-normalized).

use crate::raster::Raster;
use std::f32::consts::PI;

pub const DESCRIPTOR_DIM: usize = 128;
const GRID_CELLS: usize = 4;
const ORI_BINS: usize = 8;

/// Keypoint location in full-resolution pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    /// Blur level of the detection, in full-resolution pixels.
    pub scale: f32,
    /// Absolute DoG response at the extremum.
    pub response: f32,
    /// Dominant gradient orientation, radians.
    pub orientation: f32,
}

/// A keypoint with its descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFeature {
    pub keypoint: Keypoint,
    pub descriptor: Vec<f32>,
}

/// Detector thresholds; defaults are tuned for 128x96 ground patches.
#[derive(Debug, Clone)]
pub struct DetectorConfig {
    pub n_octaves: usize,
    /// Minimum |DoG| response on the [0, 1] intensity scale.
    pub contrast_threshold: f32,
    /// Harris-style edge rejection ratio.
    pub edge_ratio: f32,
    /// Base blur of the first pyramid level.
    pub base_sigma: f32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            n_octaves: 2,
            contrast_threshold: 0.012,
            edge_ratio: 10.0,
            base_sigma: 1.6,
        }
    }
}

/// One blurred pyramid level as f32 intensities in [0, 1].
struct Level {
    w: usize,
    h: usize,
    data: Vec<f32>,
    sigma: f32,
}

impl Level {
    #[inline]
    fn at(&self, x: i64, y: i64) -> f32 {
        let xc = x.clamp(0, self.w as i64 - 1) as usize;
        let yc = y.clamp(0, self.h as i64 - 1) as usize;
        self.data[yc * self.w + xc]
    }

    /// Central-difference gradient with clamped borders.
    #[inline]
    fn gradient(&self, x: i64, y: i64) -> (f32, f32) {
        let dx = (self.at(x + 1, y) - self.at(x - 1, y)) * 0.5;
        let dy = (self.at(x, y + 1) - self.at(x, y - 1)) * 0.5;
        (dx, dy)
    }
}

/// Extract up to `n` features, strongest responses first.
pub fn detect_and_describe(raster: &Raster, n: usize, config: &DetectorConfig) -> Vec<LocalFeature> {
    assert!(n >= 1, "feature budget must be at least 1");
    let mut features = Vec::new();
    let mut base: Vec<f32> = raster.data().iter().map(|&v| v as f32 / 255.0).collect();
    let mut w = raster.width();
    let mut h = raster.height();

    // One level below the nominal base sigma so the finest DoG layer has a
    // scale neighbor and small blobs stay detectable.
    const LEVELS: usize = 6;
    let k = std::f32::consts::SQRT_2;

    for octave in 0..config.n_octaves {
        if w < 12 || h < 12 {
            break;
        }
        let octave_scale = (1 << octave) as f32;
        // Blur stack relative to the octave base image.
        let mut levels: Vec<Level> = Vec::with_capacity(LEVELS);
        for i in 0..LEVELS {
            let sigma = config.base_sigma * k.powi(i as i32 - 1);
            levels.push(Level {
                w,
                h,
                data: gaussian_blur(&base, w, h, sigma),
                sigma,
            });
        }
        let dog: Vec<Vec<f32>> = (0..LEVELS - 1)
            .map(|i| {
                levels[i + 1]
                    .data
                    .iter()
                    .zip(levels[i].data.iter())
                    .map(|(a, b)| a - b)
                    .collect()
            })
            .collect();

        for s in 1..dog.len() - 1 {
            scan_extrema(&dog, s, w, h, config, |x, y, response| {
                let level = &levels[s + 1];
                let (ox, oy) = refine_offset(&dog[s], w, h, x, y);
                let fx = x as f32 + ox;
                let fy = y as f32 + oy;
                let orientation = dominant_orientation(level, fx, fy);
                if let Some(descriptor) = describe(level, fx, fy, orientation) {
                    features.push(LocalFeature {
                        keypoint: Keypoint {
                            x: fx * octave_scale,
                            y: fy * octave_scale,
                            scale: level.sigma * octave_scale,
                            response,
                            orientation,
                        },
                        descriptor,
                    });
                }
            });
        }

        // Next octave: halve the most-blurred level.
        let src = &levels[LEVELS - 1];
        let (nw, nh) = (w / 2, h / 2);
        let mut next = vec![0.0f32; nw * nh];
        for y in 0..nh {
            for x in 0..nw {
                next[y * nw + x] = src.data[(y * 2) * w + x * 2];
            }
        }
        base = next;
        w = nw;
        h = nh;
    }

    // Strongest first; deterministic tie order by position.
    features.sort_by(|a, b| {
        b.keypoint
            .response
            .total_cmp(&a.keypoint.response)
            .then_with(|| a.keypoint.y.total_cmp(&b.keypoint.y))
            .then_with(|| a.keypoint.x.total_cmp(&b.keypoint.x))
    });
    features.truncate(n);
    features
}

/// Scan one DoG layer for 26-neighborhood extrema that pass the contrast and
/// edge tests.
fn scan_extrema(
    dog: &[Vec<f32>],
    s: usize,
    w: usize,
    h: usize,
    config: &DetectorConfig,
    mut emit: impl FnMut(usize, usize, f32),
) {
    let edge_limit = (config.edge_ratio + 1.0).powi(2) / config.edge_ratio;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = dog[s][y * w + x];
            if v.abs() < config.contrast_threshold {
                continue;
            }
            let mut is_max = true;
            let mut is_min = true;
            'probe: for layer in &dog[s - 1..=s + 1] {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let idx = ((y as i64 + dy) * w as i64 + x as i64 + dx) as usize;
                        let nv = layer[idx];
                        if std::ptr::eq(layer.as_ptr(), dog[s].as_ptr()) && dx == 0 && dy == 0 {
                            continue;
                        }
                        if nv >= v {
                            is_max = false;
                        }
                        if nv <= v {
                            is_min = false;
                        }
                        if !is_max && !is_min {
                            break 'probe;
                        }
                    }
                }
            }
            if !(is_max || is_min) {
                continue;
            }
            // 2x2 Hessian edge rejection.
            let d = &dog[s];
            let dxx = d[y * w + x + 1] + d[y * w + x - 1] - 2.0 * v;
            let dyy = d[(y + 1) * w + x] + d[(y - 1) * w + x] - 2.0 * v;
            let dxy = (d[(y + 1) * w + x + 1] - d[(y + 1) * w + x - 1] - d[(y - 1) * w + x + 1]
                + d[(y - 1) * w + x - 1])
                * 0.25;
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            if det <= 0.0 || tr * tr / det > edge_limit {
                continue;
            }
            emit(x, y, v.abs());
        }
    }
}

/// Quadratic sub-pixel refinement in x, y via the local 2x2 system.
fn refine_offset(d: &[f32], w: usize, h: usize, x: usize, y: usize) -> (f32, f32) {
    if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
        return (0.0, 0.0);
    }
    let v = d[y * w + x];
    let gx = (d[y * w + x + 1] - d[y * w + x - 1]) * 0.5;
    let gy = (d[(y + 1) * w + x] - d[(y - 1) * w + x]) * 0.5;
    let dxx = d[y * w + x + 1] + d[y * w + x - 1] - 2.0 * v;
    let dyy = d[(y + 1) * w + x] + d[(y - 1) * w + x] - 2.0 * v;
    let dxy = (d[(y + 1) * w + x + 1] - d[(y + 1) * w + x - 1] - d[(y - 1) * w + x + 1]
        + d[(y - 1) * w + x - 1])
        * 0.25;
    let det = dxx * dyy - dxy * dxy;
    if det.abs() < 1e-12 {
        return (0.0, 0.0);
    }
    let ox = (-dyy * gx + dxy * gy) / det;
    let oy = (dxy * gx - dxx * gy) / det;
    (ox.clamp(-0.5, 0.5), oy.clamp(-0.5, 0.5))
}

/// Dominant gradient direction from a 36-bin magnitude-weighted histogram.
fn dominant_orientation(level: &Level, x: f32, y: f32) -> f32 {
    const BINS: usize = 36;
    let sigma_w = 1.5 * level.sigma;
    let radius = (4.5 * level.sigma).round().max(2.0) as i64;
    let inv_two_sigma2 = 1.0 / (2.0 * sigma_w * sigma_w);
    let cx = x.round() as i64;
    let cy = y.round() as i64;
    let mut hist = [0.0f32; BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let r2 = (dx * dx + dy * dy) as f32;
            if r2 > (radius * radius) as f32 {
                continue;
            }
            let (gx, gy) = level.gradient(cx + dx, cy + dy);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let bin = ((angle / (2.0 * PI) * BINS as f32) as usize).min(BINS - 1);
            hist[bin] += mag * (-r2 * inv_two_sigma2).exp();
        }
    }
    // Two smoothing passes stabilize the peak on noisy textures.
    for _ in 0..2 {
        let snapshot = hist;
        for i in 0..BINS {
            hist[i] =
                (snapshot[(i + BINS - 1) % BINS] + snapshot[i] + snapshot[(i + 1) % BINS]) / 3.0;
        }
    }
    let peak = hist
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let prev = hist[(peak + BINS - 1) % BINS];
    let next = hist[(peak + 1) % BINS];
    let denom = prev - 2.0 * hist[peak] + next;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (prev - next) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    (peak as f32 + shift + 0.5) / BINS as f32 * 2.0 * PI
}

/// 4x4-cell, 8-orientation-bin gradient histogram descriptor, rotated into
/// the keypoint frame with trilinear binning. Returns `None` for flat regions.
fn describe(level: &Level, x: f32, y: f32, orientation: f32) -> Option<Vec<f32>> {
    let cell = 3.0 * level.sigma;
    let half_cells = GRID_CELLS as f32 / 2.0;
    let radius = (cell * (GRID_CELLS as f32 + 1.0) * std::f32::consts::SQRT_2 / 2.0).round() as i64;
    let (sin_o, cos_o) = orientation.sin_cos();
    let mut hist = [0.0f32; GRID_CELLS * GRID_CELLS * ORI_BINS];
    let cx = x.round() as i64;
    let cy = y.round() as i64;

    for dy in -radius..=radius {
        for dx in -radius..=radius {
            // Offset in the rotated keypoint frame, in cell units.
            let fx = dx as f32 + (cx as f32 - x);
            let fy = dy as f32 + (cy as f32 - y);
            let u = (cos_o * fx + sin_o * fy) / cell;
            let v = (-sin_o * fx + cos_o * fy) / cell;
            let cu = u + half_cells - 0.5;
            let cv = v + half_cells - 0.5;
            if cu <= -1.0 || cu >= GRID_CELLS as f32 || cv <= -1.0 || cv >= GRID_CELLS as f32 {
                continue;
            }
            let (gx, gy) = level.gradient(cx + dx, cy + dy);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = mag * (-(u * u + v * v) / (0.5 * (GRID_CELLS * GRID_CELLS) as f32)).exp();
            let angle = (gy.atan2(gx) - orientation).rem_euclid(2.0 * PI);
            let ob = angle / (2.0 * PI) * ORI_BINS as f32;

            let u0 = cu.floor();
            let v0 = cv.floor();
            let o0 = ob.floor();
            let fu = cu - u0;
            let fv = cv - v0;
            let fo = ob - o0;
            for (du, wu) in [(0i64, 1.0 - fu), (1, fu)] {
                let ui = u0 as i64 + du;
                if ui < 0 || ui >= GRID_CELLS as i64 {
                    continue;
                }
                for (dv, wv) in [(0i64, 1.0 - fv), (1, fv)] {
                    let vi = v0 as i64 + dv;
                    if vi < 0 || vi >= GRID_CELLS as i64 {
                        continue;
                    }
                    for (do_, wo) in [(0i64, 1.0 - fo), (1, fo)] {
                        let oi = ((o0 as i64 + do_) % ORI_BINS as i64) as usize;
                        let idx = (vi as usize * GRID_CELLS + ui as usize) * ORI_BINS + oi;
                        hist[idx] += weight * wu * wv * wo;
                    }
                }
            }
        }
    }

    let mut desc: Vec<f32> = hist.to_vec();
    let norm = desc.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm < 1e-12 {
        return None;
    }
    for v in &mut desc {
        *v = (*v / norm).min(0.2);
    }
    let norm2 = desc.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm2 < 1e-12 {
        return None;
    }
    for v in &mut desc {
        *v /= norm2;
    }
    Some(desc)
}

/// Separable Gaussian blur with clamped borders.
fn gaussian_blur(data: &[f32], w: usize, h: usize, sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut sum = 0.0f32;
    for i in -radius..=radius {
        let v = (-(i * i) as f32 * inv).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }

    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sx = (x as i64 + ki as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += row[sx] * kv;
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sy = (y as i64 + ki as i64 - radius).clamp(0, h as i64 - 1) as usize;
                acc += tmp[sy * w + x] * kv;
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_canvas, render_patch, CanvasConfig, TextureStyle};

    fn textured_patch(seed: u64) -> Raster {
        let canvas = generate_canvas(&CanvasConfig {
            style: TextureStyle::Speckle,
            extent_m: (0.6, 0.5),
            resolution: 500.0,
            seed,
            ..CanvasConfig::default()
        })
        .unwrap();
        let pose = crate::geometry::Pose2D::new(0.3, 0.25, 0.0).unwrap();
        render_patch(&canvas, &pose, 0.2, 0.15, (128, 96)).unwrap()
    }

    #[test]
    fn constant_raster_yields_no_features() {
        let flat = Raster::from_vec(64, 48, vec![128; 64 * 48]).unwrap();
        let feats = detect_and_describe(&flat, 100, &DetectorConfig::default());
        assert!(feats.is_empty());
    }

    #[test]
    fn respects_budget_with_nonincreasing_responses() {
        let img = textured_patch(3);
        let feats = detect_and_describe(&img, 40, &DetectorConfig::default());
        assert!(!feats.is_empty());
        assert!(feats.len() <= 40);
        for pair in feats.windows(2) {
            assert!(pair[0].keypoint.response >= pair[1].keypoint.response);
        }
    }

    #[test]
    fn descriptors_are_unit_norm() {
        let img = textured_patch(4);
        let feats = detect_and_describe(&img, 60, &DetectorConfig::default());
        assert!(!feats.is_empty());
        for f in &feats {
            assert_eq!(f.descriptor.len(), DESCRIPTOR_DIM);
            let norm = f.descriptor.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "norm {norm}");
        }
    }

    #[test]
    fn rotated_copy_has_similar_feature_count() {
        let img = textured_patch(5);
        // 90-degree rotation is an exact pixel permutation.
        let (w, h) = (img.width(), img.height());
        let mut rotated = Raster::new(h, w);
        for y in 0..h {
            for x in 0..w {
                rotated.set(h - 1 - y, x, img.get(x, y));
            }
        }
        let a = detect_and_describe(&img, 10_000, &DetectorConfig::default()).len() as f64;
        let b = detect_and_describe(&rotated, 10_000, &DetectorConfig::default()).len() as f64;
        assert!(a > 0.0 && b > 0.0);
        let ratio = a.max(b) / a.min(b);
        assert!(ratio <= 1.2, "counts {a} vs {b}");
    }

    #[test]
    fn extraction_is_deterministic() {
        let img = textured_patch(6);
        let a = detect_and_describe(&img, 50, &DetectorConfig::default());
        let b = detect_and_describe(&img, 50, &DetectorConfig::default());
        assert_eq!(a, b);
    }
}
