//! Seeded lattice noise primitives used by the procedural texture styles.
//!
//! Everything here is a pure function of integer lattice hashes, so canvases
//! are bit-reproducible across platforms for a given seed.

/// SplitMix64-style avalanche over the lattice coordinates and seed.
#[inline]
fn hash64(seed: u64, ix: i64, iy: i64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add((ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((iy as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(salt.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in [0, 1) from a lattice point.
#[inline]
pub fn lattice_unit(seed: u64, ix: i64, iy: i64, salt: u64) -> f64 {
    (hash64(seed, ix, iy, salt) >> 11) as f64 / (1u64 << 53) as f64
}

/// Uniform value in [-1, 1) from a lattice point.
#[inline]
fn lattice_signed(seed: u64, ix: i64, iy: i64, salt: u64) -> f64 {
    2.0 * lattice_unit(seed, ix, iy, salt) - 1.0
}

#[inline]
fn smooth(t: f64) -> f64 {
    // Quintic fade: C2-continuous across lattice cells.
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Smoothly interpolated value noise in [-1, 1], `freq` in cycles per unit.
pub fn value_noise(seed: u64, x: f64, y: f64, freq: f64, salt: u64) -> f64 {
    let xf = x * freq;
    let yf = y * freq;
    let x0 = xf.floor();
    let y0 = yf.floor();
    let tx = smooth(xf - x0);
    let ty = smooth(yf - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v00 = lattice_signed(seed, ix, iy, salt);
    let v10 = lattice_signed(seed, ix + 1, iy, salt);
    let v01 = lattice_signed(seed, ix, iy + 1, salt);
    let v11 = lattice_signed(seed, ix + 1, iy + 1, salt);
    let a = v00 + (v10 - v00) * tx;
    let b = v01 + (v11 - v01) * tx;
    a + (b - a) * ty
}

/// Fractional Brownian motion: `octaves` layers of value noise with lacunarity
/// 2 and gain 0.5, normalized back into roughly [-1, 1].
pub fn fbm(seed: u64, x: f64, y: f64, base_freq: f64, octaves: u32, salt: u64) -> f64 {
    let mut sum = 0.0;
    let mut amp = 1.0;
    let mut freq = base_freq;
    let mut norm = 0.0;
    for o in 0..octaves {
        sum += amp * value_noise(seed, x, y, freq, salt.wrapping_add(o as u64));
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

/// Worley (cellular) noise: distances to the nearest and second-nearest
/// feature point, one feature per lattice cell. `freq` is cells per unit.
/// Returned distances are in cell units.
pub fn worley_f1_f2(seed: u64, x: f64, y: f64, freq: f64, salt: u64) -> (f64, f64) {
    let xf = x * freq;
    let yf = y * freq;
    let cx = xf.floor() as i64;
    let cy = yf.floor() as i64;
    let mut f1 = f64::MAX;
    let mut f2 = f64::MAX;
    for dy in -1..=1 {
        for dx in -1..=1 {
            let ix = cx + dx;
            let iy = cy + dy;
            let px = ix as f64 + lattice_unit(seed, ix, iy, salt ^ 0xA1);
            let py = iy as f64 + lattice_unit(seed, ix, iy, salt ^ 0xB2);
            let d = ((xf - px).powi(2) + (yf - py).powi(2)).sqrt();
            if d < f1 {
                f2 = f1;
                f1 = d;
            } else if d < f2 {
                f2 = d;
            }
        }
    }
    (f1, f2)
}

/// Per-cell random value for the cell containing (x, y) at `freq` cells/unit.
pub fn cell_value(seed: u64, x: f64, y: f64, freq: f64, salt: u64) -> f64 {
    lattice_unit(seed, (x * freq).floor() as i64, (y * freq).floor() as i64, salt)
}
