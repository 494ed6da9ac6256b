//! The standard desk-scale benchmark: one map per texture style over a
//! ~1.25 x 1.16 m canvas with 56 grid references, a training query sequence,
//! and a disjoint evaluation query sequence (half of each revisiting mapped
//! spots), with mild appearance noise on all queries.
//!
//! The acceptance suite and the pilot binary both build their data here so
//! results are comparable run to run.

use crate::error::Result;
use crate::synth::{
    generate_canvas, generate_mapset, CanvasConfig, MapSet, MapSetConfig, NoiseSpec, TextureStyle,
};

/// Benchmark scale parameters.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub styles: Vec<TextureStyle>,
    /// Queries used to build training pairs.
    pub n_train_queries: usize,
    /// Held-out queries used for retrieval and localization scoring.
    pub n_eval_queries: usize,
    pub grid_spacing: f64,
    pub canvas_extent: (f64, f64),
    pub resolution: f64,
    pub revisit_fraction: f64,
    /// Query headings match the reference heading range, as in a mapped-area
    /// traversal; relative rotations stay within the augmentation regime.
    pub query_heading_range: f64,
    pub query_noise: NoiseSpec,
    pub patch_px: (usize, usize),
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            styles: TextureStyle::ALL.to_vec(),
            n_train_queries: 60,
            n_eval_queries: 20,
            grid_spacing: 0.16,
            canvas_extent: (1.25, 1.16),
            resolution: 600.0,
            revisit_fraction: 0.5,
            query_heading_range: 0.35,
            query_noise: NoiseSpec::default(),
            patch_px: (128, 96),
        }
    }
}

/// One style's maps: shared references, disjoint query sequences.
#[derive(Debug, Clone)]
pub struct BenchmarkSet {
    pub style: TextureStyle,
    /// References plus the training query sequence.
    pub train: MapSet,
    /// The same references plus the evaluation query sequence.
    pub eval: MapSet,
}

/// Retrieval depth used throughout the benchmark: `min(100, 0.3 * |refs|)`.
pub fn benchmark_k(n_references: usize) -> usize {
    100.min(((n_references as f64) * 0.3).floor() as usize).max(1)
}

/// Generate the per-style benchmark sets.
///
/// Train and eval queries come from one generation pass (revisit queries
/// first, then uniform ones) and are split so both sequences contain both
/// kinds; ids are style-prefixed so styles can be pooled for joint training.
pub fn build_benchmark(config: &BenchmarkConfig) -> Result<Vec<BenchmarkSet>> {
    config
        .styles
        .iter()
        .enumerate()
        .map(|(i, &style)| {
            let canvas = generate_canvas(&CanvasConfig {
                style,
                extent_m: config.canvas_extent,
                resolution: config.resolution,
                seed: config.seed.wrapping_add(i as u64),
                ..CanvasConfig::default()
            })?;
            let n_total = config.n_train_queries + config.n_eval_queries;
            let mut mapset = generate_mapset(
                &canvas,
                &MapSetConfig {
                    grid_spacing: config.grid_spacing,
                    n_queries: n_total,
                    revisit_fraction: config.revisit_fraction,
                    query_heading_range: config.query_heading_range,
                    query_noise: config.query_noise.clone(),
                    patch_px: config.patch_px,
                    seed: config.seed.wrapping_add(100 + i as u64),
                    ..MapSetConfig::default()
                },
            )?;
            let prefix = style.name();
            for img in mapset.references.iter_mut().chain(mapset.queries.iter_mut()) {
                img.id = format!("{prefix}_{}", img.id);
            }

            // Queries are ordered [revisit..., uniform...]; split each block
            // proportionally so train and eval share the composition.
            let n_revisit = (config.revisit_fraction * n_total as f64).round() as usize;
            let n_revisit_eval =
                (config.revisit_fraction * config.n_eval_queries as f64).round() as usize;
            let revisit_split = n_revisit.saturating_sub(n_revisit_eval);
            let mut train_queries = Vec::new();
            let mut eval_queries = Vec::new();
            for (qi, q) in mapset.queries.drain(..).enumerate() {
                let to_eval = if qi < n_revisit {
                    qi >= revisit_split
                } else {
                    qi >= n_total - (config.n_eval_queries - n_revisit_eval)
                };
                if to_eval {
                    eval_queries.push(q);
                } else {
                    train_queries.push(q);
                }
            }

            let train = MapSet {
                references: mapset.references.clone(),
                queries: train_queries,
                canvas_meta: mapset.canvas_meta.clone(),
            };
            let eval = MapSet {
                references: mapset.references,
                queries: eval_queries,
                canvas_meta: mapset.canvas_meta,
            };
            Ok(BenchmarkSet { style, train, eval })
        })
        .collect()
}
