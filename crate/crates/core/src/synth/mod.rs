//! Desk-scale stand-in for a mapped ground-image database.
//!
//! A procedural texture canvas plays the role of the physical floor; posed
//! reference patches are rendered from a jittered grid so neighbors overlap
//! slightly, and query patches are rendered at independent poses with optional
//! appearance noise. Real posed image sets enter through the same [`MapSet`]
//! type via the CSV manifest format (see [`manifest`]).

pub mod manifest;
mod noise;

use crate::error::{Error, Result};
use crate::geometry::{footprint_from_pose, overlap_fraction, Footprint, Pose2D};
use crate::raster::Raster;
use noise::{cell_value, fbm, lattice_unit, value_noise, worley_f1_f2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Procedural ground texture families. Chosen to span feature densities and
/// scales: `Blob` and `Grain` are feature-poor, `Speckle` and `Crack` are
/// feature-rich, `Grid` is repetitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureStyle {
    Blob,
    Fiber,
    Speckle,
    Crack,
    Grid,
    Grain,
}

impl TextureStyle {
    pub const ALL: [TextureStyle; 6] = [
        TextureStyle::Blob,
        TextureStyle::Fiber,
        TextureStyle::Speckle,
        TextureStyle::Crack,
        TextureStyle::Grid,
        TextureStyle::Grain,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TextureStyle::Blob => "blob",
            TextureStyle::Fiber => "fiber",
            TextureStyle::Speckle => "speckle",
            TextureStyle::Crack => "crack",
            TextureStyle::Grid => "grid",
            TextureStyle::Grain => "grain",
        }
    }
}

impl std::str::FromStr for TextureStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blob" => Ok(TextureStyle::Blob),
            "fiber" => Ok(TextureStyle::Fiber),
            "speckle" => Ok(TextureStyle::Speckle),
            "crack" => Ok(TextureStyle::Crack),
            "grid" => Ok(TextureStyle::Grid),
            "grain" => Ok(TextureStyle::Grain),
            other => Err(Error::invalid(format!("unknown texture style '{other}'"))),
        }
    }
}

/// Seed-deterministic grayscale texture canvas.
#[derive(Debug, Clone)]
pub struct TextureCanvas {
    pub pixels: Raster,
    /// Pixels per meter.
    pub resolution: f64,
    pub seed: u64,
    pub style: TextureStyle,
    /// Physical extent in meters (width, height); the canvas spans
    /// `[0, width] x [0, height]` in world coordinates.
    pub extent: (f64, f64),
}

/// Parameters for [`generate_canvas`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CanvasConfig {
    pub style: TextureStyle,
    pub extent_m: (f64, f64),
    /// Pixels per meter.
    pub resolution: f64,
    pub seed: u64,
    /// Upper bound on the raster allocation.
    pub max_bytes: usize,
}

impl Default for CanvasConfig {
    fn default() -> Self {
        Self {
            style: TextureStyle::Speckle,
            extent_m: (1.4, 1.2),
            resolution: 600.0,
            seed: 0,
            max_bytes: 512 << 20,
        }
    }
}

/// A posed grayscale patch: the raster, its ground-truth pose, and the
/// physical extent it covers.
#[derive(Debug, Clone)]
pub struct GroundImage {
    pub id: String,
    pub pixels: Raster,
    pub pose: Pose2D,
    pub width_m: f64,
    pub height_m: f64,
}

impl GroundImage {
    pub fn footprint(&self) -> Footprint {
        footprint_from_pose(&self.pose, self.width_m, self.height_m)
            .expect("ground image stores a valid pose and extent")
    }

    /// Meters per pixel along the image width.
    pub fn meters_per_px(&self) -> f64 {
        self.width_m / self.pixels.width() as f64
    }
}

/// Canvas provenance carried alongside a generated or ingested map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanvasMeta {
    pub seed: u64,
    pub style: String,
    pub extent_m: (f64, f64),
    pub resolution: f64,
}

/// Posed reference and query images over one canvas.
#[derive(Debug, Clone)]
pub struct MapSet {
    pub references: Vec<GroundImage>,
    pub queries: Vec<GroundImage>,
    pub canvas_meta: CanvasMeta,
}

impl MapSet {
    /// Lookup table from image id to image, covering references and queries.
    pub fn image_store(&self) -> HashMap<&str, &GroundImage> {
        self.references
            .iter()
            .chain(self.queries.iter())
            .map(|img| (img.id.as_str(), img))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for img in self.references.iter().chain(self.queries.iter()) {
            if !seen.insert(img.id.as_str()) {
                return Err(Error::invalid(format!("duplicate image id '{}'", img.id)));
            }
            let px_w = img.pixels.width() as f64;
            let px_h = img.pixels.height() as f64;
            if (px_w - px_h * img.width_m / img.height_m).abs() > 1.0 {
                return Err(Error::invalid(format!(
                    "image '{}': pixel aspect {}x{} does not match physical {}x{}",
                    img.id, px_w, px_h, img.width_m, img.height_m
                )));
            }
        }
        Ok(())
    }
}

/// Appearance perturbations applied to query rasters. Pose metadata always
/// stays at the clean ground truth.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct NoiseSpec {
    /// Additive Gaussian pixel noise, in gray levels.
    pub gaussian_sigma: f64,
    /// Max absolute brightness shift, in gray levels (drawn uniformly).
    pub brightness: f64,
    /// Max relative contrast change (drawn uniformly).
    pub contrast: f64,
    /// Number of occluding blobs stamped onto the patch.
    pub occlusion_blobs: usize,
    /// Blob radius range in pixels.
    pub occlusion_radius_px: (f64, f64),
    /// Motion blur kernel length in pixels (0 disables).
    pub motion_blur_len: usize,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            gaussian_sigma: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            occlusion_blobs: 0,
            occlusion_radius_px: (0.0, 0.0),
            motion_blur_len: 0,
        }
    }

    pub fn is_none(&self) -> bool {
        self.gaussian_sigma == 0.0
            && self.brightness == 0.0
            && self.contrast == 0.0
            && self.occlusion_blobs == 0
            && self.motion_blur_len == 0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            gaussian_sigma: 3.0,
            brightness: 12.0,
            contrast: 0.12,
            occlusion_blobs: 1,
            occlusion_radius_px: (8.0, 16.0),
            motion_blur_len: 0,
        }
    }
}

/// Parameters for [`generate_mapset`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MapSetConfig {
    /// Grid spacing along the patch width axis, meters. The spacing along the
    /// height axis is scaled by `patch_height / patch_width` so neighbor
    /// overlaps match in both directions.
    pub grid_spacing: f64,
    /// Uniform positional jitter applied to grid nodes, meters.
    pub jitter: f64,
    /// Reference headings are drawn uniformly from `[-r, r]`.
    pub ref_heading_range: f64,
    pub n_queries: usize,
    /// Query headings are drawn uniformly from `[-r, r]`; `PI` covers the
    /// full circle.
    pub query_heading_range: f64,
    /// Fraction of queries placed near an existing reference pose instead of
    /// uniformly, so high-overlap retrievals exist at desk scale.
    pub revisit_fraction: f64,
    /// Positional jitter for revisit queries, meters.
    pub revisit_pos_jitter: f64,
    /// Heading jitter for revisit queries, radians.
    pub revisit_heading_jitter: f64,
    pub patch_width_m: f64,
    pub patch_height_m: f64,
    pub patch_px: (usize, usize),
    pub query_noise: NoiseSpec,
    pub seed: u64,
}

impl Default for MapSetConfig {
    fn default() -> Self {
        Self {
            grid_spacing: 0.16,
            jitter: 0.01,
            ref_heading_range: 0.35,
            n_queries: 20,
            query_heading_range: PI,
            revisit_fraction: 0.0,
            revisit_pos_jitter: 0.008,
            revisit_heading_jitter: 0.07,
            patch_width_m: 0.2,
            patch_height_m: 0.15,
            patch_px: (128, 96),
            query_noise: NoiseSpec::none(),
            seed: 0,
        }
    }
}

/// Evaluate one style at a world position (meters), returning a gray level.
///
/// Every style carries a shared low/mid-frequency "patina" (stains, wear,
/// uneven lighting) on top of its characteristic detail; real floors are not
/// statistically stationary and localization depends on that.
fn style_value(style: TextureStyle, seed: u64, x: f64, y: f64) -> f64 {
    let patina = 0.16 * fbm(seed, x, y, 4.0, 3, 99) + 0.10 * fbm(seed, x, y, 24.0, 2, 98);
    let v = patina + match style {
        TextureStyle::Blob => {
            // Large soft patches with sparse flecks: deliberately feature-poor.
            let coarse = fbm(seed, x, y, 7.0, 3, 10);
            let fine = fbm(seed, x, y, 200.0, 2, 11);
            let (f1, _) = worley_f1_f2(seed, x, y, 35.0, 12);
            let dots = (0.18 - f1).max(0.0) / 0.18;
            0.5 + 0.30 * coarse + 0.10 * fine - 0.28 * dots
        }
        TextureStyle::Fiber => {
            // Streaks along a seed-fixed direction plus isotropic grain.
            let angle = 0.4 + 2.0 * lattice_unit(seed, 1, 7, 21);
            let (s, c) = angle.sin_cos();
            let u = c * x + s * y;
            let v = -s * x + c * y;
            let streaks = value_noise(seed, u * 0.08, v, 160.0, 22);
            let grain = fbm(seed, x, y, 320.0, 2, 23);
            0.5 + 0.26 * streaks + 0.16 * grain
        }
        TextureStyle::Speckle => {
            // Band-passed noise with dense sharp grains: feature-rich.
            let base = fbm(seed, x, y, 180.0, 3, 30);
            let (f1, _) = worley_f1_f2(seed, x, y, 60.0, 31);
            let dots = (0.25 - f1).max(0.0) / 0.25;
            let polarity = if cell_value(seed, x, y, 60.0, 32) > 0.5 {
                1.0
            } else {
                -1.0
            };
            0.5 + 0.18 * base + 0.34 * dots * polarity
        }
        TextureStyle::Crack => {
            // Cellular plates split by dark crack lines, with surface grit.
            let (f1a, f2a) = worley_f1_f2(seed, x, y, 28.0, 40);
            let (f1b, f2b) = worley_f1_f2(seed, x, y, 90.0, 41);
            let crack_a = ((f2a - f1a) / 0.12).clamp(0.0, 1.0);
            let crack_b = ((f2b - f1b) / 0.20).clamp(0.0, 1.0);
            let base = fbm(seed, x, y, 150.0, 3, 42);
            let (g1, _) = worley_f1_f2(seed, x, y, 70.0, 43);
            let grit = (0.22 - g1).max(0.0) / 0.22;
            0.58 * crack_a.min(crack_b).powf(0.6) + 0.2 + 0.12 * base - 0.16 * grit
        }
        TextureStyle::Grid => {
            // Rectangular tiles with grout lines, per-tile tint, and flecks.
            let tile = 0.06; // meters
            let fx = (x / tile).fract();
            let fy = (y / tile).fract();
            let groove_w = 0.035;
            let edge = |t: f64| (t.min(1.0 - t) / groove_w).clamp(0.0, 1.0);
            let grout = edge(fx).min(edge(fy));
            let tint = 0.35 + 0.4 * cell_value(seed, x, y, 1.0 / tile, 50);
            let grain = fbm(seed, x, y, 260.0, 2, 51);
            let (g1, _) = worley_f1_f2(seed, x, y, 80.0, 52);
            let fleck = (0.20 - g1).max(0.0) / 0.20;
            grout * (tint + 0.12 * grain - 0.20 * fleck) + (1.0 - grout) * 0.12
        }
        TextureStyle::Grain => {
            // Wavy parallel grain lines, wood-like; few stable keypoints.
            let warp = fbm(seed, x, y, 9.0, 3, 60);
            let phase = (y + 0.12 * warp) * 55.0 * 2.0 * PI;
            let stripes = phase.sin();
            let fine = fbm(seed, x, y, 300.0, 2, 61);
            0.5 + 0.24 * stripes + 0.10 * warp + 0.08 * fine
        }
    };
    (v * 255.0).clamp(0.0, 255.0)
}

/// Generate a seed-deterministic texture canvas.
pub fn generate_canvas(config: &CanvasConfig) -> Result<TextureCanvas> {
    let (ew, eh) = config.extent_m;
    if !(ew > 0.0 && eh > 0.0 && config.resolution > 0.0) {
        return Err(Error::invalid(format!(
            "canvas extent and resolution must be positive, got {ew}x{eh} at {}",
            config.resolution
        )));
    }
    let px_w = (ew * config.resolution).ceil() as usize;
    let px_h = (eh * config.resolution).ceil() as usize;
    if px_w * px_h > config.max_bytes {
        return Err(Error::ResourceLimit(format!(
            "canvas raster {px_w}x{px_h} exceeds the {} byte budget",
            config.max_bytes
        )));
    }
    let mut pixels = Raster::new(px_w, px_h);
    let inv_res = 1.0 / config.resolution;
    for row in 0..px_h {
        let y = (row as f64 + 0.5) * inv_res;
        for col in 0..px_w {
            let x = (col as f64 + 0.5) * inv_res;
            let v = style_value(config.style, config.seed, x, y);
            pixels.set(col, row, v.round() as u8);
        }
    }
    Ok(TextureCanvas {
        pixels,
        resolution: config.resolution,
        seed: config.seed,
        style: config.style,
        extent: (ew, eh),
    })
}

/// Render the patch under `pose` from the canvas with bilinear sampling.
pub fn render_patch(
    canvas: &TextureCanvas,
    pose: &Pose2D,
    width_m: f64,
    height_m: f64,
    out_px: (usize, usize),
) -> Result<Raster> {
    let foot = footprint_from_pose(pose, width_m, height_m)?;
    for c in &foot.corners {
        if c[0] < 0.0 || c[1] < 0.0 || c[0] > canvas.extent.0 || c[1] > canvas.extent.1 {
            return Err(Error::OutOfBounds(format!(
                "footprint corner ({:.4}, {:.4}) outside canvas extent {:?}",
                c[0], c[1], canvas.extent
            )));
        }
    }
    let (out_w, out_h) = out_px;
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("patch raster dimensions must be positive"));
    }
    let mut out = Raster::new(out_w, out_h);
    let (s, c) = pose.theta.sin_cos();
    for py in 0..out_h {
        let ly = (py as f64 + 0.5) / out_h as f64 * height_m - height_m / 2.0;
        for px in 0..out_w {
            let lx = (px as f64 + 0.5) / out_w as f64 * width_m - width_m / 2.0;
            let wx = pose.x + c * lx - s * ly;
            let wy = pose.y + s * lx + c * ly;
            let v = canvas
                .pixels
                .sample_bilinear(wx * canvas.resolution - 0.5, wy * canvas.resolution - 0.5);
            out.set(px, py, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

/// Apply a [`NoiseSpec`] to a raster; the zero spec is the exact identity.
pub fn apply_noise(raster: &Raster, spec: &NoiseSpec, rng: &mut StdRng) -> Raster {
    if spec.is_none() {
        return raster.clone();
    }
    let w = raster.width();
    let h = raster.height();
    let mut vals: Vec<f64> = raster.data().iter().map(|&v| v as f64).collect();

    if spec.contrast > 0.0 || spec.brightness > 0.0 {
        let contrast = 1.0 + rng.gen_range(-spec.contrast..=spec.contrast);
        let brightness = rng.gen_range(-spec.brightness..=spec.brightness);
        let mid = 127.5;
        for v in vals.iter_mut() {
            *v = (*v - mid) * contrast + mid + brightness;
        }
    }

    if spec.gaussian_sigma > 0.0 {
        for v in vals.iter_mut() {
            // Box-Muller from two uniforms keeps the dependency surface small.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            let n = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
            *v += n * spec.gaussian_sigma;
        }
    }

    for _ in 0..spec.occlusion_blobs {
        let cx = rng.gen_range(0.0..w as f64);
        let cy = rng.gen_range(0.0..h as f64);
        let (r_lo, r_hi) = spec.occlusion_radius_px;
        let r = if r_hi > r_lo {
            rng.gen_range(r_lo..=r_hi)
        } else {
            r_lo
        };
        let fill = rng.gen_range(0.0..255.0);
        let x0 = (cx - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize).min(w.saturating_sub(1));
        let y0 = (cy - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil() as usize).min(h.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d2 <= r * r {
                    vals[y * w + x] = fill;
                }
            }
        }
    }

    if spec.motion_blur_len > 1 {
        let angle = rng.gen_range(0.0..PI);
        let (sa, ca) = angle.sin_cos();
        let len = spec.motion_blur_len as i64;
        let src = vals.clone();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                let mut count = 0.0;
                for t in 0..len {
                    let off = t as f64 - (len - 1) as f64 / 2.0;
                    let sx = (x as f64 + off * ca).round() as i64;
                    let sy = (y as f64 + off * sa).round() as i64;
                    if sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64 {
                        acc += src[(sy * w as i64 + sx) as usize];
                        count += 1.0;
                    }
                }
                vals[(y * w as i64 + x) as usize] = acc / count;
            }
        }
    }

    let data = vals
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    Raster::from_vec(w, h, data).expect("dimensions unchanged")
}

/// Render a full reference/query map over a canvas.
///
/// References sit on a jittered grid with small headings; queries are placed
/// at random in-bounds poses (optionally revisiting reference poses) and then
/// perturbed per [`NoiseSpec`]. Query pose metadata remains the clean truth.
pub fn generate_mapset(canvas: &TextureCanvas, config: &MapSetConfig) -> Result<MapSet> {
    let w = config.patch_width_m;
    let h = config.patch_height_m;
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::invalid("patch dimensions must be positive"));
    }
    // The spacing applies along the width axis; the height-axis spacing is
    // scaled by h/w, so `spacing < width` guarantees overlap on both axes.
    if config.grid_spacing >= w {
        return Err(Error::invalid(format!(
            "grid spacing {} must stay below the patch width {} to guarantee overlap",
            config.grid_spacing, w
        )));
    }
    if config.grid_spacing <= 0.0 {
        return Err(Error::invalid("grid spacing must be positive"));
    }
    let half_diag = (w * w + h * h).sqrt() / 2.0;
    let margin = half_diag + config.jitter + 1e-9;
    let sx = config.grid_spacing;
    let sy = config.grid_spacing * h / w;
    let (ext_w, ext_h) = canvas.extent;
    if ext_w <= 2.0 * margin + sx || ext_h <= 2.0 * margin + sy {
        return Err(Error::invalid(format!(
            "canvas extent {ext_w}x{ext_h} too small for patches with margin {margin:.3}"
        )));
    }

    let mut rng = StdRng::seed_from_u64(config.seed);
    let cols = ((ext_w - 2.0 * margin) / sx).floor() as usize + 1;
    let rows = ((ext_h - 2.0 * margin) / sy).floor() as usize + 1;
    let x0 = (ext_w - (cols - 1) as f64 * sx) / 2.0;
    let y0 = (ext_h - (rows - 1) as f64 * sy) / 2.0;

    let mut references = Vec::with_capacity(cols * rows);
    for row in 0..rows {
        for col in 0..cols {
            let jx = rng.gen_range(-config.jitter..=config.jitter);
            let jy = rng.gen_range(-config.jitter..=config.jitter);
            let theta = if config.ref_heading_range > 0.0 {
                rng.gen_range(-config.ref_heading_range..=config.ref_heading_range)
            } else {
                0.0
            };
            let pose = Pose2D::new(x0 + col as f64 * sx + jx, y0 + row as f64 * sy + jy, theta)?;
            let pixels = render_patch(canvas, &pose, w, h, config.patch_px)?;
            references.push(GroundImage {
                id: format!("ref_{:04}", row * cols + col),
                pixels,
                pose,
                width_m: w,
                height_m: h,
            });
        }
    }

    let n_revisit = (config.revisit_fraction * config.n_queries as f64).round() as usize;
    let mut queries = Vec::with_capacity(config.n_queries);
    for qi in 0..config.n_queries {
        let pose = if qi < n_revisit && !references.is_empty() {
            let base = &references[rng.gen_range(0..references.len())].pose;
            let pj = config.revisit_pos_jitter;
            let hj = config.revisit_heading_jitter;
            Pose2D::new(
                (base.x + rng.gen_range(-pj..=pj)).clamp(margin, ext_w - margin),
                (base.y + rng.gen_range(-pj..=pj)).clamp(margin, ext_h - margin),
                base.theta + rng.gen_range(-hj..=hj),
            )?
        } else {
            let r = config.query_heading_range;
            let theta = if r >= PI {
                rng.gen_range(-PI..PI)
            } else if r > 0.0 {
                rng.gen_range(-r..=r)
            } else {
                0.0
            };
            Pose2D::new(
                rng.gen_range(margin..=ext_w - margin),
                rng.gen_range(margin..=ext_h - margin),
                theta,
            )?
        };
        let clean = render_patch(canvas, &pose, w, h, config.patch_px)?;
        let mut noise_rng = StdRng::seed_from_u64(config.seed ^ (0x51EA5E ^ qi as u64) << 8);
        let pixels = apply_noise(&clean, &config.query_noise, &mut noise_rng);
        queries.push(GroundImage {
            id: format!("query_{:04}", qi),
            pixels,
            pose,
            width_m: w,
            height_m: h,
        });
    }

    let mapset = MapSet {
        references,
        queries,
        canvas_meta: CanvasMeta {
            seed: canvas.seed,
            style: canvas.style.name().to_string(),
            extent_m: canvas.extent,
            resolution: canvas.resolution,
        },
    };
    mapset.validate()?;
    Ok(mapset)
}

/// Count how many other references each reference overlaps with (overlap > 0).
pub fn reference_neighbor_counts(mapset: &MapSet) -> Result<Vec<usize>> {
    let feet: Vec<Footprint> = mapset.references.iter().map(|r| r.footprint()).collect();
    let mut counts = vec![0usize; feet.len()];
    for i in 0..feet.len() {
        for j in (i + 1)..feet.len() {
            if overlap_fraction(&feet[i], &feet[j])? > 0.0 {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    Ok(counts)
}
