//! Exact planar geometry: camera footprints and pairwise overlap fractions.
//!
//! Every training label and evaluation ground truth in the toolkit comes from
//! [`overlap_fraction`], which clips one convex quadrilateral against another
//! and normalizes the intersection area by the single-patch area. Pose errors
//! for the localization success criterion live here as well.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Clipping tolerance in meters; intersections thinner than this count as empty.
const CLIP_EPS: f64 = 1e-12;

/// Relative tolerance when checking that two footprints have equal area.
const AREA_REL_TOL: f64 = 1e-9;

/// Planar position (meters) and heading (radians) of a camera footprint.
///
/// The heading is normalized to `[-pi, pi)` on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && theta.is_finite()) {
            return Err(Error::invalid(format!(
                "pose components must be finite, got ({x}, {y}, {theta})"
            )));
        }
        Ok(Self {
            x,
            y,
            theta: wrap_angle(theta),
        })
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Wrap an angle to `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t >= PI {
        t -= 2.0 * PI;
    }
    t
}

/// The ground rectangle covered by a single image, as an oriented convex quad.
///
/// Corners are stored counter-clockwise; `area` is the exact width × height of
/// the generating rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    pub corners: [[f64; 2]; 4],
    pub area: f64,
}

/// Ground-truth overlap between one query and one reference image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapLabel {
    pub query_id: String,
    pub ref_id: String,
    pub overlap: f64,
}

/// Build the width × height rectangle centered on `pose`, rotated by its heading.
///
/// Corners come out counter-clockwise starting from the local (-w/2, -h/2) corner.
pub fn footprint_from_pose(pose: &Pose2D, width: f64, height: f64) -> Result<Footprint> {
    if !(pose.x.is_finite() && pose.y.is_finite() && pose.theta.is_finite()) {
        return Err(Error::invalid("pose must be finite"));
    }
    if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
        return Err(Error::invalid(format!(
            "footprint dimensions must be positive, got {width} x {height}"
        )));
    }
    let (hw, hh) = (width / 2.0, height / 2.0);
    let local = [[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]];
    let (s, c) = pose.theta.sin_cos();
    let mut corners = [[0.0; 2]; 4];
    for (out, p) in corners.iter_mut().zip(local.iter()) {
        out[0] = pose.x + c * p[0] - s * p[1];
        out[1] = pose.y + s * p[0] + c * p[1];
    }
    Ok(Footprint {
        corners,
        area: width * height,
    })
}

/// Fraction of footprint `a`'s area also covered by footprint `b`.
///
/// Only defined for equal-area patches, where it is symmetric and equals 1 at
/// full overlap. Computed by convex polygon clipping followed by the shoelace
/// formula; the result is clamped into `[0, 1]`.
pub fn overlap_fraction(a: &Footprint, b: &Footprint) -> Result<f64> {
    if (a.area - b.area).abs() > AREA_REL_TOL * a.area.max(b.area) {
        return Err(Error::invalid(format!(
            "overlap fraction requires equal-area footprints, got {} vs {}",
            a.area, b.area
        )));
    }
    if a.corners == b.corners {
        return Ok(1.0);
    }
    let clipped = clip_convex(&a.corners, &b.corners);
    if clipped.len() < 3 {
        return Ok(0.0);
    }
    let inter = polygon_area(&clipped);
    if inter < CLIP_EPS {
        return Ok(0.0);
    }
    Ok((inter / a.area).clamp(0.0, 1.0))
}

/// Translation (meters) and absolute wrapped rotation (radians in `[0, pi]`)
/// between an estimated and a ground-truth pose.
pub fn pose_error(estimate: &Pose2D, truth: &Pose2D) -> (f64, f64) {
    let translation = ((estimate.x - truth.x).powi(2) + (estimate.y - truth.y).powi(2)).sqrt();
    let rotation = wrap_angle(estimate.theta - truth.theta).abs();
    (translation, rotation)
}

/// Signed area of a simple polygon (positive for CCW vertex order).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        acc += poly[i][0] * poly[j][1] - poly[j][0] * poly[i][1];
    }
    acc / 2.0
}

/// Signed distance proxy of point `p` relative to the directed edge a→b
/// (positive on the left, i.e. inside for CCW polygons).
#[inline]
fn edge_side(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Sutherland-Hodgman clip of a subject polygon against a CCW convex clip polygon.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut out);
        if input.is_empty() {
            return out;
        }
        for k in 0..input.len() {
            let s = input[k];
            let e = input[(k + 1) % input.len()];
            let sc = edge_side(a, b, s);
            let ec = edge_side(a, b, e);
            let s_in = sc >= 0.0;
            let e_in = ec >= 0.0;
            match (s_in, e_in) {
                (true, true) => out.push(e),
                (true, false) => {
                    if let Some(p) = edge_intersection(s, e, sc, ec) {
                        out.push(p);
                    }
                }
                (false, true) => {
                    if let Some(p) = edge_intersection(s, e, sc, ec) {
                        out.push(p);
                    }
                    out.push(e);
                }
                (false, false) => {}
            }
        }
    }
    out
}

#[inline]
fn edge_intersection(s: [f64; 2], e: [f64; 2], sc: f64, ec: f64) -> Option<[f64; 2]> {
    let denom = sc - ec;
    if denom.abs() < CLIP_EPS {
        return None;
    }
    let t = sc / denom;
    Some([s[0] + (e[0] - s[0]) * t, s[1] + (e[1] - s[1]) * t])
}

/// True if `p` lies inside (or on the boundary of) a CCW convex polygon.
pub fn point_in_convex(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    for i in 0..n {
        if edge_side(poly[i], poly[(i + 1) % n], p) < 0.0 {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    const W: f64 = 0.2;
    const H: f64 = 0.15;

    fn fp(x: f64, y: f64, theta: f64) -> Footprint {
        footprint_from_pose(&Pose2D::new(x, y, theta).unwrap(), W, H).unwrap()
    }

    /// Monte-Carlo oracle: fraction of uniform samples over `a` that land in `b`.
    fn mc_overlap(a: &Footprint, b: &Footprint, samples: usize, seed: u64) -> f64 {
        let mut rng = StdRng::seed_from_u64(seed);
        // Sample in a's local frame spanned by its first two edges.
        let o = a.corners[0];
        let u = [a.corners[1][0] - o[0], a.corners[1][1] - o[1]];
        let v = [a.corners[3][0] - o[0], a.corners[3][1] - o[1]];
        let mut hits = 0usize;
        for _ in 0..samples {
            let su: f64 = rng.gen();
            let sv: f64 = rng.gen();
            let p = [o[0] + su * u[0] + sv * v[0], o[1] + su * u[1] + sv * v[1]];
            if point_in_convex(&b.corners, p) {
                hits += 1;
            }
        }
        hits as f64 / samples as f64
    }

    #[test]
    fn footprint_unrotated_corners() {
        let f = fp(0.0, 0.0, 0.0);
        let expect = [[-0.1, -0.075], [0.1, -0.075], [0.1, 0.075], [-0.1, 0.075]];
        for (c, e) in f.corners.iter().zip(expect.iter()) {
            assert!((c[0] - e[0]).abs() < 1e-15 && (c[1] - e[1]).abs() < 1e-15);
        }
        assert!((f.area - 0.03).abs() < 1e-15);
    }

    #[test]
    fn footprint_quarter_turn_swaps_extents() {
        let f = fp(0.0, 0.0, PI / 2.0);
        let max_x = f.corners.iter().map(|c| c[0].abs()).fold(0.0, f64::max);
        let max_y = f.corners.iter().map(|c| c[1].abs()).fold(0.0, f64::max);
        assert!((max_x - 0.075).abs() < 1e-12);
        assert!((max_y - 0.1).abs() < 1e-12);
    }

    #[test]
    fn footprint_is_rigid_motion_of_origin_rect() {
        let f = fp(1.0, 2.0, 0.3);
        let base = fp(0.0, 0.0, 0.0);
        let (s, c) = 0.3f64.sin_cos();
        for (got, p) in f.corners.iter().zip(base.corners.iter()) {
            let e = [1.0 + c * p[0] - s * p[1], 2.0 + s * p[0] + c * p[1]];
            assert!((got[0] - e[0]).abs() < 1e-12 && (got[1] - e[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn footprint_rejects_bad_inputs() {
        assert!(footprint_from_pose(&Pose2D { x: f64::NAN, y: 0.0, theta: 0.0 }, W, H).is_err());
        let p = Pose2D::new(0.0, 0.0, 0.0).unwrap();
        assert!(footprint_from_pose(&p, 0.0, H).is_err());
        assert!(footprint_from_pose(&p, W, -1.0).is_err());
        assert!(Pose2D::new(0.0, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn overlap_identical_is_exactly_one() {
        let a = fp(0.4, -0.2, 1.1);
        assert_eq!(overlap_fraction(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn overlap_disjoint_is_zero() {
        let a = fp(0.0, 0.0, 0.3);
        let b = fp(1.0, 1.0, -0.4);
        assert_eq!(overlap_fraction(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn overlap_half_width_shift() {
        let a = fp(0.0, 0.0, 0.0);
        let b = fp(0.1, 0.0, 0.0);
        let o = overlap_fraction(&a, &b).unwrap();
        assert!((o - 0.5).abs() < 1e-12, "got {o}");
    }

    #[test]
    fn overlap_rejects_unequal_areas() {
        let a = fp(0.0, 0.0, 0.0);
        let b = footprint_from_pose(&Pose2D::new(0.0, 0.0, 0.0).unwrap(), 0.21, H).unwrap();
        assert!(matches!(
            overlap_fraction(&a, &b),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn overlap_rotated_45_matches_monte_carlo() {
        let a = fp(0.0, 0.0, 0.0);
        let b = fp(0.0, 0.0, PI / 4.0);
        let analytic = overlap_fraction(&a, &b).unwrap();
        let mc = mc_overlap(&a, &b, 1_000_000, 9);
        assert!(
            (analytic - mc).abs() < 3e-3,
            "analytic {analytic} vs mc {mc}"
        );
    }

    #[test]
    fn overlap_random_pairs_match_monte_carlo() {
        // Smaller sibling of the acceptance criterion; full scale runs there.
        let mut rng = StdRng::seed_from_u64(42);
        for trial in 0..20 {
            let a = fp(
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-PI..PI),
            );
            let b = fp(
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-PI..PI),
            );
            let analytic = overlap_fraction(&a, &b).unwrap();
            let mc = mc_overlap(&a, &b, 200_000, 1000 + trial);
            assert!(
                (analytic - mc).abs() < 7e-3,
                "trial {trial}: analytic {analytic} vs mc {mc}"
            );
        }
    }

    #[test]
    fn pose_error_examples() {
        let p = Pose2D::new(0.0, 0.0, 0.0).unwrap();
        assert_eq!(pose_error(&p, &p), (0.0, 0.0));

        let q = Pose2D::new(0.003, 0.004, 0.0).unwrap();
        let (t, r) = pose_error(&q, &p);
        assert!((t - 0.005).abs() < 1e-15 && r == 0.0);

        let a = Pose2D::new(0.0, 0.0, 3.1).unwrap();
        let b = Pose2D::new(0.0, 0.0, -3.1).unwrap();
        let (_, r) = pose_error(&a, &b);
        assert!((r - (2.0 * PI - 6.2)).abs() < 1e-12, "got {r}");
    }

    proptest! {
        #[test]
        fn overlap_symmetric_for_equal_areas(
            x in -0.2f64..0.2, y in -0.2f64..0.2,
            ta in -3.1f64..3.1, tb in -3.1f64..3.1,
        ) {
            let a = fp(0.0, 0.0, ta);
            let b = fp(x, y, tb);
            let ab = overlap_fraction(&a, &b).unwrap();
            let ba = overlap_fraction(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn overlap_invariant_under_common_rigid_motion(
            x in -0.15f64..0.15, y in -0.15f64..0.15, tb in -3.1f64..3.1,
            dx in -5.0f64..5.0, dy in -5.0f64..5.0, dt in -3.1f64..3.1,
        ) {
            let a0 = fp(0.0, 0.0, 0.0);
            let b0 = fp(x, y, tb);
            let before = overlap_fraction(&a0, &b0).unwrap();

            let move_pose = |p: &Pose2D| {
                let (s, c) = dt.sin_cos();
                Pose2D::new(
                    dx + c * p.x - s * p.y,
                    dy + s * p.x + c * p.y,
                    p.theta + dt,
                ).unwrap()
            };
            let a1 = footprint_from_pose(&move_pose(&Pose2D::new(0.0, 0.0, 0.0).unwrap()), W, H).unwrap();
            let b1 = footprint_from_pose(&move_pose(&Pose2D::new(x, y, tb).unwrap()), W, H).unwrap();
            let after = overlap_fraction(&a1, &b1).unwrap();
            prop_assert!((before - after).abs() < 1e-9, "before {} after {}", before, after);
        }

        #[test]
        fn pose_error_is_pseudometric(
            x1 in -1.0f64..1.0, y1 in -1.0f64..1.0, t1 in -3.1f64..3.1,
            x2 in -1.0f64..1.0, y2 in -1.0f64..1.0, t2 in -3.1f64..3.1,
        ) {
            let a = Pose2D::new(x1, y1, t1).unwrap();
            let b = Pose2D::new(x2, y2, t2).unwrap();
            let (tab, rab) = pose_error(&a, &b);
            let (tba, rba) = pose_error(&b, &a);
            prop_assert!((tab - tba).abs() < 1e-12);
            prop_assert!((rab - rba).abs() < 1e-12);
            let (ts, rs) = pose_error(&a, &a);
            prop_assert!(ts == 0.0 && rs == 0.0);
            prop_assert!((0.0..=std::f64::consts::PI).contains(&rab));
        }
    }
}
