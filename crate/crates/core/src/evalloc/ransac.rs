//! Rigid 2D pose estimation from feature correspondences: two-point RANSAC
//! with least-squares refinement on the best inlier set, composed with the
//! reference pose to yield a map-frame query pose.

use super::matching::Correspondence;
use crate::geometry::{pose_error, wrap_angle, Pose2D};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

/// Localization success thresholds: 4.8 mm translation, 1.5 degrees rotation.
pub const SUCCESS_TRANSLATION_M: f64 = 0.0048;
pub const SUCCESS_ROTATION_RAD: f64 = 1.5 * std::f64::consts::PI / 180.0;

/// RANSAC parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier reprojection threshold in pixels.
    pub inlier_px: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_px: 3.0,
            seed: 0,
        }
    }
}

/// Rigid map from query pixel coordinates to reference pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform2D {
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidTransform2D {
    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        [
            c * p[0] - s * p[1] + self.tx,
            s * p[0] + c * p[1] + self.ty,
        ]
    }
}

/// Outcome of one localization attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub query_id: String,
    pub estimated_pose: Option<Pose2D>,
    pub inlier_count: usize,
    pub success: bool,
    pub translation_err_m: Option<f64>,
    pub rotation_err_rad: Option<f64>,
}

impl LocalizationResult {
    pub fn failed(query_id: &str) -> Self {
        Self {
            query_id: query_id.to_string(),
            estimated_pose: None,
            inlier_count: 0,
            success: false,
            translation_err_m: None,
            rotation_err_rad: None,
        }
    }
}

/// Exact rigid transform through two point pairs.
fn solve_two_point(
    q1: [f64; 2],
    q2: [f64; 2],
    r1: [f64; 2],
    r2: [f64; 2],
) -> Option<RigidTransform2D> {
    let qv = [q2[0] - q1[0], q2[1] - q1[1]];
    let rv = [r2[0] - r1[0], r2[1] - r1[1]];
    let q_len2 = qv[0] * qv[0] + qv[1] * qv[1];
    if q_len2 < 1e-12 {
        return None;
    }
    let rotation = rv[1].atan2(rv[0]) - qv[1].atan2(qv[0]);
    let (s, c) = rotation.sin_cos();
    // Anchor on the midpoint for symmetric residuals.
    let qm = [(q1[0] + q2[0]) / 2.0, (q1[1] + q2[1]) / 2.0];
    let rm = [(r1[0] + r2[0]) / 2.0, (r1[1] + r2[1]) / 2.0];
    Some(RigidTransform2D {
        rotation,
        tx: rm[0] - (c * qm[0] - s * qm[1]),
        ty: rm[1] - (s * qm[0] + c * qm[1]),
    })
}

/// Least-squares rigid fit (rotation + translation, no scale) over a subset.
fn solve_least_squares(corrs: &[Correspondence], subset: &[usize]) -> Option<RigidTransform2D> {
    if subset.len() < 2 {
        return None;
    }
    let n = subset.len() as f64;
    let mut qc = [0.0; 2];
    let mut rc = [0.0; 2];
    for &i in subset {
        qc[0] += corrs[i].query_px[0];
        qc[1] += corrs[i].query_px[1];
        rc[0] += corrs[i].ref_px[0];
        rc[1] += corrs[i].ref_px[1];
    }
    qc[0] /= n;
    qc[1] /= n;
    rc[0] /= n;
    rc[1] /= n;

    // Cross-covariance terms of the centered point sets.
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syx = 0.0;
    let mut syy = 0.0;
    for &i in subset {
        let qx = corrs[i].query_px[0] - qc[0];
        let qy = corrs[i].query_px[1] - qc[1];
        let rx = corrs[i].ref_px[0] - rc[0];
        let ry = corrs[i].ref_px[1] - rc[1];
        sxx += qx * rx;
        sxy += qx * ry;
        syx += qy * rx;
        syy += qy * ry;
    }
    let rotation = (sxy - syx).atan2(sxx + syy);
    if !rotation.is_finite() {
        return None;
    }
    let (s, c) = rotation.sin_cos();
    Some(RigidTransform2D {
        rotation,
        tx: rc[0] - (c * qc[0] - s * qc[1]),
        ty: rc[1] - (s * qc[0] + c * qc[1]),
    })
}

fn inliers_of(corrs: &[Correspondence], t: &RigidTransform2D, threshold_px: f64) -> Vec<usize> {
    let t2 = threshold_px * threshold_px;
    corrs
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let p = t.apply(c.query_px);
            let dx = p[0] - c.ref_px[0];
            let dy = p[1] - c.ref_px[1];
            dx * dx + dy * dy <= t2
        })
        .map(|(i, _)| i)
        .collect()
}

/// RANSAC over 2-point hypotheses, refined by least squares on the best
/// inlier set. Returns the pixel-frame transform with its inliers, or `None`
/// below two correspondences.
pub fn estimate_rigid_ransac(
    corrs: &[Correspondence],
    config: &RansacConfig,
) -> Option<(RigidTransform2D, Vec<usize>)> {
    if corrs.len() < 2 {
        return None;
    }
    let mut rng = StdRng::seed_from_u64(config.seed);
    let mut best: Option<(RigidTransform2D, Vec<usize>)> = None;
    for _ in 0..config.iterations {
        let i = rng.gen_range(0..corrs.len());
        let mut j = rng.gen_range(0..corrs.len() - 1);
        if j >= i {
            j += 1;
        }
        let Some(t) = solve_two_point(
            corrs[i].query_px,
            corrs[j].query_px,
            corrs[i].ref_px,
            corrs[j].ref_px,
        ) else {
            continue;
        };
        let inliers = inliers_of(corrs, &t, config.inlier_px);
        if best.as_ref().is_none_or(|(_, b)| inliers.len() > b.len()) {
            best = Some((t, inliers));
        }
    }
    let (model, inliers) = best?;
    if inliers.len() < 2 {
        return None;
    }
    // Refine on the consensus set and keep the refinement when it does not
    // lose support.
    if let Some(refined) = solve_least_squares(corrs, &inliers) {
        let refined_inliers = inliers_of(corrs, &refined, config.inlier_px);
        if refined_inliers.len() >= inliers.len() {
            return Some((refined, refined_inliers));
        }
    }
    Some((model, inliers))
}

/// Full localization attempt: estimate the pixel-frame transform, compose it
/// with the reference pose into a map-frame query pose, and check success
/// against the ground truth.
#[allow(clippy::too_many_arguments)]
pub fn ransac_rigid_pose(
    query_id: &str,
    corrs: &[Correspondence],
    ref_pose: &Pose2D,
    truth: &Pose2D,
    meters_per_px: f64,
    patch_px: (usize, usize),
    config: &RansacConfig,
) -> LocalizationResult {
    let Some((transform, inliers)) = estimate_rigid_ransac(corrs, config) else {
        return LocalizationResult::failed(query_id);
    };
    let estimate = compose_pose(&transform, ref_pose, meters_per_px, patch_px);
    let (terr, rerr) = pose_error(&estimate, truth);
    LocalizationResult {
        query_id: query_id.to_string(),
        estimated_pose: Some(estimate),
        inlier_count: inliers.len(),
        success: terr <= SUCCESS_TRANSLATION_M && rerr <= SUCCESS_ROTATION_RAD,
        translation_err_m: Some(terr),
        rotation_err_rad: Some(rerr),
    }
}

/// Map the pixel-frame transform (query px -> reference px) into a world
/// query pose, using the shared patch raster geometry.
pub fn compose_pose(
    transform: &RigidTransform2D,
    ref_pose: &Pose2D,
    meters_per_px: f64,
    patch_px: (usize, usize),
) -> Pose2D {
    // Pixel center of the patch; pixel (px, py) sits at local meters
    // ((px - cx) * mpp, (py - cy) * mpp).
    let cx = (patch_px.0 as f64 - 1.0) / 2.0;
    let cy = (patch_px.1 as f64 - 1.0) / 2.0;
    let (s, c) = transform.rotation.sin_cos();
    // Local-frame displacement of the query center seen in the reference
    // patch.
    let dx_px = c * cx - s * cy + transform.tx - cx;
    let dy_px = s * cx + c * cy + transform.ty - cy;
    let dx = dx_px * meters_per_px;
    let dy = dy_px * meters_per_px;
    let (sr, cr) = ref_pose.theta.sin_cos();
    Pose2D {
        x: ref_pose.x + cr * dx - sr * dy,
        y: ref_pose.y + sr * dx + cr * dy,
        theta: wrap_angle(ref_pose.theta + transform.rotation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_corrs(
        t: &RigidTransform2D,
        n: usize,
        noise: f64,
        seed: u64,
    ) -> Vec<Correspondence> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let q = [rng.gen_range(0.0..128.0), rng.gen_range(0.0..96.0)];
                let mut r = t.apply(q);
                if noise > 0.0 {
                    r[0] += rng.gen_range(-noise..noise);
                    r[1] += rng.gen_range(-noise..noise);
                }
                Correspondence {
                    query_idx: i,
                    ref_idx: i,
                    query_px: q,
                    ref_px: r,
                    distance: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn noise_free_recovery_is_nearly_exact() {
        let truth = RigidTransform2D {
            rotation: 0.7,
            tx: 12.5,
            ty: -4.25,
        };
        let corrs = synth_corrs(&truth, 30, 0.0, 1);
        let (est, inliers) = estimate_rigid_ransac(&corrs, &RansacConfig::default()).unwrap();
        assert_eq!(inliers.len(), 30);
        assert!((est.rotation - truth.rotation).abs() < 1e-6);
        assert!((est.tx - truth.tx).abs() < 1e-6);
        assert!((est.ty - truth.ty).abs() < 1e-6);
    }

    #[test]
    fn survives_sixty_percent_outliers() {
        let truth = RigidTransform2D {
            rotation: -0.4,
            tx: 5.0,
            ty: 9.0,
        };
        let mut successes = 0;
        let trials = 20;
        for seed in 0..trials {
            let mut corrs = synth_corrs(&truth, 16, 0.5, 100 + seed);
            // 60% gross outliers.
            let mut rng = StdRng::seed_from_u64(200 + seed);
            for i in 0..24 {
                corrs.push(Correspondence {
                    query_idx: 100 + i,
                    ref_idx: 100 + i,
                    query_px: [rng.gen_range(0.0..128.0), rng.gen_range(0.0..96.0)],
                    ref_px: [rng.gen_range(0.0..128.0), rng.gen_range(0.0..96.0)],
                    distance: 0.0,
                });
            }
            let cfg = RansacConfig {
                seed: 300 + seed,
                ..RansacConfig::default()
            };
            if let Some((est, _)) = estimate_rigid_ransac(&corrs, &cfg) {
                if (est.rotation - truth.rotation).abs() < 0.02
                    && (est.tx - truth.tx).abs() < 1.5
                    && (est.ty - truth.ty).abs() < 1.5
                {
                    successes += 1;
                }
            }
        }
        assert!(successes >= 19, "{successes}/{trials} trials succeeded");
    }

    #[test]
    fn below_two_correspondences_reports_no_pose() {
        let corrs = synth_corrs(
            &RigidTransform2D {
                rotation: 0.0,
                tx: 0.0,
                ty: 0.0,
            },
            1,
            0.0,
            3,
        );
        let truth = Pose2D::new(0.0, 0.0, 0.0).unwrap();
        let res = ransac_rigid_pose(
            "q",
            &corrs,
            &truth,
            &truth,
            0.0015625,
            (128, 96),
            &RansacConfig::default(),
        );
        assert!(res.estimated_pose.is_none());
        assert!(!res.success);
    }

    #[test]
    fn identity_self_match_localizes_exactly() {
        let identity = RigidTransform2D {
            rotation: 0.0,
            tx: 0.0,
            ty: 0.0,
        };
        let corrs = synth_corrs(&identity, 20, 0.0, 4);
        let pose = Pose2D::new(0.4, 0.3, 0.6).unwrap();
        let res = ransac_rigid_pose(
            "q",
            &corrs,
            &pose,
            &pose,
            0.2 / 128.0,
            (128, 96),
            &RansacConfig::default(),
        );
        assert!(res.success);
        let est = res.estimated_pose.unwrap();
        let (t, r) = pose_error(&est, &pose);
        assert!(t < 1e-9 && r < 1e-9);
    }

    #[test]
    fn composed_pose_matches_footprint_geometry() {
        // A query shifted half a patch to the right of the reference, same
        // heading: a point at query px x maps to ref px x + W/2.
        let ref_pose = Pose2D::new(0.5, 0.5, 0.3).unwrap();
        let mpp = 0.2 / 128.0;
        let shift = RigidTransform2D {
            rotation: 0.0,
            tx: 64.0,
            ty: 0.0,
        };
        let est = compose_pose(&shift, &ref_pose, mpp, (128, 96));
        // The query center sits at +0.1 m along the reference's local x axis.
        let (s, c) = ref_pose.theta.sin_cos();
        let expect = [ref_pose.x + c * 0.1, ref_pose.y + s * 0.1];
        assert!((est.x - expect[0]).abs() < 1e-12);
        assert!((est.y - expect[1]).abs() < 1e-12);
        assert!((est.theta - ref_pose.theta).abs() < 1e-12);
    }
}
