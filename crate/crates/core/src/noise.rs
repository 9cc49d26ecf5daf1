//! Seeded procedural noise fields.
//!
//! All generators are pure functions of a [`NoiseContext`] and the query
//! point: no tables are precomputed and no state is mutated, so equal seeds
//! give bit-identical fields across calls, threads, and runs. Lattice and
//! cell randomness comes from integer hashing (see [`crate::rng`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::Vec3;
use crate::rng::{derive_seed, hash_cell, hash_index, splitmix64, unit_f64};

/// Parameters shared by the noise generators.
///
/// Not every generator reads every field; unused fields are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Spatial frequency. Query points are multiplied by this.
    pub scale: f64,
    /// Output magnitude. See each generator for the exact range it maps to.
    pub amplitude: f64,
    /// Phase distortion strength for the wave generator.
    pub distortion: f64,
    /// Octave count for fractal Perlin summation.
    pub octaves: u32,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            scale: 1.0,
            amplitude: 1.0,
            distortion: 0.0,
            octaves: 1,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NoiseParamsError {
    #[error("noise scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("noise amplitude must be non-negative, got {0}")]
    NegativeAmplitude(f64),
    #[error("noise distortion must be non-negative, got {0}")]
    NegativeDistortion(f64),
    #[error("octave count must be at least 1")]
    ZeroOctaves,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), NoiseParamsError> {
        if !(self.scale > 0.0) {
            return Err(NoiseParamsError::NonPositiveScale(self.scale));
        }
        if !(self.amplitude >= 0.0) {
            return Err(NoiseParamsError::NegativeAmplitude(self.amplitude));
        }
        if !(self.distortion >= 0.0) {
            return Err(NoiseParamsError::NegativeDistortion(self.distortion));
        }
        if self.octaves == 0 {
            return Err(NoiseParamsError::ZeroOctaves);
        }
        Ok(())
    }
}

const TAG_PERLIN: u64 = 0x01;
const TAG_VORONOI_COLOR: u64 = 0x02;
const TAG_VORONOI_DISTANCE: u64 = 0x03;
const TAG_WAVE: u64 = 0x04;
const TAG_PERIODIC: u64 = 0x05;
const TAG_CHUNK: u64 = 0x06;

/// Root of all noise evaluation for one damage instance.
///
/// Each generator draws from its own sub-seed so that, for example, the
/// scalar radius field and the vector crumple field of a dent stay
/// decorrelated even though they share one instance seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseContext {
    seed: u64,
    perlin_seed: u64,
    voronoi_color_seed: u64,
    voronoi_distance_seed: u64,
    wave_seed: u64,
    periodic_seed: u64,
    chunk_seed: u64,
}

impl NoiseContext {
    pub fn new(seed: u64) -> NoiseContext {
        NoiseContext {
            seed,
            perlin_seed: derive_seed(seed, TAG_PERLIN),
            voronoi_color_seed: derive_seed(seed, TAG_VORONOI_COLOR),
            voronoi_distance_seed: derive_seed(seed, TAG_VORONOI_DISTANCE),
            wave_seed: derive_seed(seed, TAG_WAVE),
            periodic_seed: derive_seed(seed, TAG_PERIODIC),
            chunk_seed: derive_seed(seed, TAG_CHUNK),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed for decisions tied to this instance but outside any generator,
    /// such as the broken-lamp chunk placement.
    pub fn chunk_seed(&self) -> u64 {
        self.chunk_seed
    }

    /// Fractal gradient noise in `[-amplitude, amplitude]`.
    ///
    /// Single-octave values vanish exactly at integer lattice points of the
    /// scaled domain and the field is C1 everywhere.
    pub fn perlin(&self, p: Vec3, params: &NoiseParams) -> f64 {
        debug_assert!(params.validate().is_ok());
        let q = p * params.scale;
        let mut sum = 0.0;
        let mut weight = 1.0;
        let mut norm = 0.0;
        let mut freq = 1.0;
        for _ in 0..params.octaves {
            sum += weight * gradient_noise(self.perlin_seed, q * freq);
            norm += weight;
            weight *= 0.5;
            freq *= 2.0;
        }
        params.amplitude * sum / norm
    }

    /// Raw single-octave gradient noise used internally for distortion.
    fn perlin_raw(&self, seed: u64, q: Vec3) -> f64 {
        gradient_noise(seed, q)
    }

    /// Piecewise-constant random vector per Voronoi cell.
    ///
    /// Components lie in `[-amplitude / 2, amplitude / 2]` and every point of
    /// one Voronoi cell maps to the same vector.
    pub fn voronoi_color(&self, p: Vec3, params: &NoiseParams) -> Vec3 {
        debug_assert!(params.validate().is_ok());
        let q = p * params.scale;
        let nearest = nearest_feature(self.voronoi_color_seed, q);
        let h = hash_cell(
            self.voronoi_color_seed ^ 0x00c0_10f5_u64,
            nearest.cell[0],
            nearest.cell[1],
            nearest.cell[2],
        );
        let c = hashed_unit_vec(h);
        (c - Vec3::splat(0.5)) * params.amplitude
    }

    /// Distance from the scaled query point to the nearest feature point.
    ///
    /// Non-negative, zero exactly at feature points, and 1-Lipschitz in the
    /// scaled metric: `|f(p) - f(q)| <= scale * |p - q|`.
    pub fn voronoi_distance(&self, p: Vec3, params: &NoiseParams) -> f64 {
        debug_assert!(params.validate().is_ok());
        let q = p * params.scale;
        nearest_feature(self.voronoi_distance_seed, q).distance
    }

    /// Sine bands in `[0, 1]` along the x axis with period `1 / scale`.
    ///
    /// A positive `distortion` perturbs the band phase with gradient noise.
    pub fn wave(&self, p: Vec3, params: &NoiseParams) -> f64 {
        debug_assert!(params.validate().is_ok());
        let mut u = p.x * params.scale;
        if params.distortion > 0.0 {
            u += params.distortion * self.perlin_raw(self.wave_seed, p * params.scale);
        }
        0.5 + 0.5 * (std::f64::consts::TAU * u).sin()
    }

    /// Normalized angle of `p - center` in the plane spanned by the two axes.
    ///
    /// Returns a value in `[0, 1)`: 0 along `axis_u`, 0.25 along `axis_v`,
    /// 0.5 along `-axis_u`. The axes must be orthonormal.
    pub fn radial_gradient(&self, p: Vec3, center: Vec3, axis_u: Vec3, axis_v: Vec3) -> f64 {
        debug_assert!(axis_u.dot(axis_v).abs() < 1e-9);
        let d = p - center;
        let du = d.dot(axis_u);
        let dv = d.dot(axis_v);
        let mut a = dv.atan2(du) / std::f64::consts::TAU;
        if a < 0.0 {
            a += 1.0;
        }
        if a >= 1.0 {
            a = 0.0;
        }
        a
    }

    /// Distance from `u * line_count` to the nearest jittered integer.
    ///
    /// With `jitter = 0` the zeros sit at `k / line_count` for integer `k`,
    /// exactly `line_count` of them in `[0, 1)`. A `jitter` in `[0, 1)`
    /// displaces each zero independently by at most
    /// `jitter / (2 * line_count)` in `u` while preserving their count and
    /// order, and the whole field stays 1-periodic in `u`.
    pub fn noisy_periodic(&self, u: f64, line_count: u32, jitter: f64) -> f64 {
        debug_assert!(line_count >= 1);
        debug_assert!((0.0..1.0).contains(&jitter));
        let count = line_count as i64;
        let t = u * line_count as f64;
        let k0 = t.floor() as i64;
        let mut best = f64::INFINITY;
        for k in (k0 - 1)..=(k0 + 1) {
            let h = hash_index(self.periodic_seed, k.rem_euclid(count));
            let zero = k as f64 + jitter * (unit_f64(h) - 0.5);
            best = best.min((t - zero).abs());
        }
        best
    }
}

/// Fade curve from Perlin's 2002 reference implementation.
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// The twelve cube-edge directions normalized to unit length, padded to a
/// power-of-two table. Unit gradients bound single-octave values by
/// `sqrt(3) / 2`, keeping amplitude scaling exact.
const GRADIENTS: [[f64; 3]; 16] = [
    [FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0],
    [-FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0],
    [FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0],
    [-FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0],
    [FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2],
    [-FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2],
    [FRAC_1_SQRT_2, 0.0, -FRAC_1_SQRT_2],
    [-FRAC_1_SQRT_2, 0.0, -FRAC_1_SQRT_2],
    [0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2],
    [0.0, -FRAC_1_SQRT_2, FRAC_1_SQRT_2],
    [0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
    [0.0, -FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
    [FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0],
    [-FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0],
    [0.0, -FRAC_1_SQRT_2, FRAC_1_SQRT_2],
    [0.0, -FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
];

fn corner_dot(seed: u64, xi: i64, yi: i64, zi: i64, dx: f64, dy: f64, dz: f64) -> f64 {
    let g = GRADIENTS[(hash_cell(seed, xi, yi, zi) & 15) as usize];
    g[0] * dx + g[1] * dy + g[2] * dz
}

/// Single-octave gradient noise over the integer lattice of `q`.
fn gradient_noise(seed: u64, q: Vec3) -> f64 {
    let xf = q.x.floor();
    let yf = q.y.floor();
    let zf = q.z.floor();
    let (xi, yi, zi) = (xf as i64, yf as i64, zf as i64);
    let (dx, dy, dz) = (q.x - xf, q.y - yf, q.z - zf);
    let u = fade(dx);
    let v = fade(dy);
    let w = fade(dz);

    let n000 = corner_dot(seed, xi, yi, zi, dx, dy, dz);
    let n100 = corner_dot(seed, xi + 1, yi, zi, dx - 1.0, dy, dz);
    let n010 = corner_dot(seed, xi, yi + 1, zi, dx, dy - 1.0, dz);
    let n110 = corner_dot(seed, xi + 1, yi + 1, zi, dx - 1.0, dy - 1.0, dz);
    let n001 = corner_dot(seed, xi, yi, zi + 1, dx, dy, dz - 1.0);
    let n101 = corner_dot(seed, xi + 1, yi, zi + 1, dx - 1.0, dy, dz - 1.0);
    let n011 = corner_dot(seed, xi, yi + 1, zi + 1, dx, dy - 1.0, dz - 1.0);
    let n111 = corner_dot(seed, xi + 1, yi + 1, zi + 1, dx - 1.0, dy - 1.0, dz - 1.0);

    let x00 = lerp(n000, n100, u);
    let x10 = lerp(n010, n110, u);
    let x01 = lerp(n001, n101, u);
    let x11 = lerp(n011, n111, u);
    let y0 = lerp(x00, x10, v);
    let y1 = lerp(x01, x11, v);
    lerp(y0, y1, w)
}

/// Three unit-interval components hashed from one cell hash.
fn hashed_unit_vec(h: u64) -> Vec3 {
    Vec3::new(
        unit_f64(h),
        unit_f64(splitmix64(h ^ 0x9d8f_3a61)),
        unit_f64(splitmix64(h ^ 0x51e2_bb04)),
    )
}

/// One feature point per unit cell, uniformly placed inside the cell.
fn feature_point(seed: u64, x: i64, y: i64, z: i64) -> Vec3 {
    let offset = hashed_unit_vec(hash_cell(seed, x, y, z));
    Vec3::new(x as f64, y as f64, z as f64) + offset
}

struct NearestFeature {
    cell: [i64; 3],
    distance: f64,
}

fn scan_block(seed: u64, q: Vec3, center: [i64; 3], radius: i64) -> NearestFeature {
    let mut best = NearestFeature {
        cell: center,
        distance: f64::INFINITY,
    };
    let mut best_sq = f64::INFINITY;
    for dz in -radius..=radius {
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let cell = [center[0] + dx, center[1] + dy, center[2] + dz];
                let f = feature_point(seed, cell[0], cell[1], cell[2]);
                let d_sq = (q - f).length_squared();
                if d_sq < best_sq {
                    best_sq = d_sq;
                    best.cell = cell;
                }
            }
        }
    }
    best.distance = best_sq.sqrt();
    best
}

/// Exact nearest feature point to `q`.
///
/// The 3x3x3 scan around the query cell is almost always enough; when its
/// best candidate is farther than one cell a 5x5x5 rescan is, since the own
/// cell's feature point is within `sqrt(3)` while everything outside the
/// wider block is at least 2 away.
fn nearest_feature(seed: u64, q: Vec3) -> NearestFeature {
    let center = [
        q.x.floor() as i64,
        q.y.floor() as i64,
        q.z.floor() as i64,
    ];
    let near = scan_block(seed, q, center, 1);
    if near.distance <= 1.0 {
        near
    } else {
        scan_block(seed, q, center, 2)
    }
}
