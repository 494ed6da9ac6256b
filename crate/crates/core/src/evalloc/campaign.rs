//! End-to-end localization campaigns: per query, match features against a
//! candidate reference set (all references, or the top-k retrievals), keep
//! the highest-inlier RANSAC model, and score the resulting pose.

use super::matching::match_features;
use super::ransac::{estimate_rigid_ransac, compose_pose, LocalizationResult, RansacConfig,
    SUCCESS_ROTATION_RAD, SUCCESS_TRANSLATION_M};
use crate::bow::{detect_and_describe, DetectorConfig, LocalFeature};
use crate::error::{Error, Result};
use crate::geometry::pose_error;
use crate::index::RetrievalResult;
use crate::synth::MapSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::time::Instant;

/// Candidate source for the localization stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalSource {
    /// Match against every reference image.
    None,
    /// Match only the top-k retrieved references.
    TopK,
}

/// Campaign parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    /// Candidate count when a retrieval ranking is supplied.
    pub k: usize,
    /// Feature budget per image.
    pub max_features: usize,
    /// First-to-second ratio threshold for matching.
    pub ratio: f32,
    pub ransac: RansacConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            k: 100,
            max_features: 100,
            ratio: 0.8,
            ransac: RansacConfig::default(),
        }
    }
}

/// Aggregate campaign outcome.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub per_query: Vec<LocalizationResult>,
    pub success_rate: f64,
    /// Mean errors over queries that produced a pose estimate.
    pub mean_translation_err_m: f64,
    pub mean_rotation_err_rad: f64,
    /// Total CPU seconds spent matching and estimating (the retrieval-limited
    /// stage; used for relative timing comparisons).
    pub matching_seconds: f64,
}

/// Run the campaign. `retrieval` supplies per-query rankings when the source
/// is [`RetrievalSource::TopK`]; every query missing from it (or retrieving
/// zero overlapping candidates) counts as a failed localization.
pub fn localization_campaign(
    mapset: &MapSet,
    source: RetrievalSource,
    retrieval: Option<&[RetrievalResult]>,
    config: &CampaignConfig,
) -> Result<CampaignResult> {
    if source == RetrievalSource::TopK && retrieval.is_none() {
        return Err(Error::invalid(
            "top-k localization needs a retrieval ranking",
        ));
    }
    let detector = DetectorConfig::default();
    let ref_feats: Vec<Vec<LocalFeature>> = mapset
        .references
        .par_iter()
        .map(|img| detect_and_describe(&img.pixels, config.max_features, &detector))
        .collect();
    let query_feats: Vec<Vec<LocalFeature>> = mapset
        .queries
        .par_iter()
        .map(|img| detect_and_describe(&img.pixels, config.max_features, &detector))
        .collect();
    let ref_index: HashMap<&str, usize> = mapset
        .references
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let rankings: HashMap<&str, &RetrievalResult> = retrieval
        .map(|results| {
            results
                .iter()
                .map(|r| (r.query_id.as_str(), r))
                .collect()
        })
        .unwrap_or_default();

    let outcomes: Vec<(LocalizationResult, f64)> = mapset
        .queries
        .par_iter()
        .enumerate()
        .map(|(qi, query)| {
            let candidates: Vec<usize> = match source {
                RetrievalSource::None => (0..mapset.references.len()).collect(),
                RetrievalSource::TopK => rankings
                    .get(query.id.as_str())
                    .map(|r| {
                        r.ranked
                            .iter()
                            .take(config.k)
                            .filter_map(|(id, _)| ref_index.get(id.as_str()).copied())
                            .collect()
                    })
                    .unwrap_or_default(),
            };
            let start = Instant::now();
            // Highest-inlier model across candidates.
            let mut best: Option<(usize, super::ransac::RigidTransform2D, usize)> = None;
            for &ri in &candidates {
                let corrs = match_features(&query_feats[qi], &ref_feats[ri], config.ratio);
                if corrs.len() < 2 {
                    continue;
                }
                let cfg = RansacConfig {
                    seed: config
                        .ransac
                        .seed
                        .wrapping_add((qi as u64) << 20)
                        .wrapping_add(ri as u64),
                    ..config.ransac.clone()
                };
                if let Some((model, inliers)) = estimate_rigid_ransac(&corrs, &cfg) {
                    if best.as_ref().is_none_or(|(_, _, b)| inliers.len() > *b) {
                        best = Some((ri, model, inliers.len()));
                    }
                }
            }
            let elapsed = start.elapsed().as_secs_f64();

            let result = match best {
                None => LocalizationResult::failed(&query.id),
                Some((ri, model, inlier_count)) => {
                    let reference = &mapset.references[ri];
                    let estimate = compose_pose(
                        &model,
                        &reference.pose,
                        reference.meters_per_px(),
                        (reference.pixels.width(), reference.pixels.height()),
                    );
                    let (terr, rerr) = pose_error(&estimate, &query.pose);
                    LocalizationResult {
                        query_id: query.id.clone(),
                        estimated_pose: Some(estimate),
                        inlier_count,
                        success: terr <= SUCCESS_TRANSLATION_M && rerr <= SUCCESS_ROTATION_RAD,
                        translation_err_m: Some(terr),
                        rotation_err_rad: Some(rerr),
                    }
                }
            };
            (result, elapsed)
        })
        .collect();

    let per_query: Vec<LocalizationResult> = outcomes.iter().map(|(r, _)| r.clone()).collect();
    let matching_seconds: f64 = outcomes.iter().map(|(_, t)| t).sum();
    let n = per_query.len().max(1) as f64;
    let success_rate = per_query.iter().filter(|r| r.success).count() as f64 / n;
    let with_estimates: Vec<&LocalizationResult> = per_query
        .iter()
        .filter(|r| r.estimated_pose.is_some())
        .collect();
    let m = with_estimates.len().max(1) as f64;
    let mean_translation_err_m = with_estimates
        .iter()
        .filter_map(|r| r.translation_err_m)
        .sum::<f64>()
        / m;
    let mean_rotation_err_rad = with_estimates
        .iter()
        .filter_map(|r| r.rotation_err_rad)
        .sum::<f64>()
        / m;

    Ok(CampaignResult {
        per_query,
        success_rate,
        mean_translation_err_m,
        mean_rotation_err_rad,
        matching_seconds,
    })
}
