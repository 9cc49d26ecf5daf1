//! The five procedural damage generators and their sampling logic.
//!
//! A dent displaces mesh vertices; the other four types are scalar or binary
//! fields evaluated at shading time and blended into the surface response.
//! Each damage instance is described by a [`DamageSpec`] whose seed fully
//! determines every noise stream it touches.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{clamp, orthonormal_basis, Vec3};
use crate::mesh::{DamageCandidate, LabeledMesh, MaterialClass, MeshError, PartRegistry};
use crate::noise::{NoiseContext, NoiseParams};
use crate::rng::{splitmix64, unit_f64};

/// The damage taxonomy. Discriminants double as mask label codes; 0 is
/// reserved for undamaged pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DamageType {
    Dent,
    Scratch,
    Crack,
    GlassShatter,
    BrokenLamp,
}

pub const ALL_DAMAGE_TYPES: [DamageType; 5] = [
    DamageType::Dent,
    DamageType::Scratch,
    DamageType::Crack,
    DamageType::GlassShatter,
    DamageType::BrokenLamp,
];

impl DamageType {
    /// Mask label code, 1 through 5.
    pub fn code(self) -> u8 {
        match self {
            DamageType::Dent => 1,
            DamageType::Scratch => 2,
            DamageType::Crack => 3,
            DamageType::GlassShatter => 4,
            DamageType::BrokenLamp => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<DamageType> {
        ALL_DAMAGE_TYPES.iter().copied().find(|t| t.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            DamageType::Dent => "dent",
            DamageType::Scratch => "scratch",
            DamageType::Crack => "crack",
            DamageType::GlassShatter => "glass-shatter",
            DamageType::BrokenLamp => "broken-lamp",
        }
    }
}

impl std::str::FromStr for DamageType {
    type Err = String;
    fn from_str(s: &str) -> Result<DamageType, String> {
        ALL_DAMAGE_TYPES
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown damage type {s:?}, expected one of dent, scratch, crack, glass-shatter, broken-lamp"))
    }
}

impl std::fmt::Display for DamageType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which damage types each material class accepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompatibilityMatrix {
    pub metal: Vec<DamageType>,
    pub glass: Vec<DamageType>,
    pub lamp: Vec<DamageType>,
    pub other: Vec<DamageType>,
}

impl Default for CompatibilityMatrix {
    fn default() -> Self {
        CompatibilityMatrix {
            metal: vec![DamageType::Dent, DamageType::Scratch, DamageType::Crack],
            glass: vec![DamageType::GlassShatter],
            lamp: vec![DamageType::BrokenLamp],
            other: vec![],
        }
    }
}

impl CompatibilityMatrix {
    pub fn types_for(&self, class: MaterialClass) -> &[DamageType] {
        match class {
            MaterialClass::Metal => &self.metal,
            MaterialClass::Glass => &self.glass,
            MaterialClass::Lamp => &self.lamp,
            MaterialClass::Other => &self.other,
        }
    }

    pub fn allows(&self, class: MaterialClass, dtype: DamageType) -> bool {
        self.types_for(class).contains(&dtype)
    }
}

/// Noise streams attached to one damage instance.
///
/// Generators read only the streams they need: the scalar `radius` field
/// perturbs dent radii and lamp chunk borders, the vector `crumple` field
/// bends dent directions and damage outlines, `deviation` bends crack lines,
/// `wave` stripes scratches, and `fracture` places the cell pattern of
/// broken lamps (its scale is the fracture density).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DamageNoise {
    pub radius: NoiseParams,
    pub crumple: NoiseParams,
    /// Per-cell offsets added to the two crack coordinates. The amplitude
    /// must be comparable to the mesh extent, otherwise the crack line
    /// `x̂₁ = x̂₂` cannot reach footprints far from the `x₁ = x₂` plane.
    pub deviation: NoiseParams,
    pub wave: NoiseParams,
    pub fracture: NoiseParams,
    /// Jitter of the shattered-glass radial lines, in `[0, 1)`.
    pub line_jitter: f64,
}

impl Default for DamageNoise {
    fn default() -> Self {
        DamageNoise {
            radius: NoiseParams {
                scale: 6.0,
                amplitude: 0.03,
                distortion: 0.0,
                octaves: 2,
            },
            crumple: NoiseParams {
                scale: 8.0,
                amplitude: 0.2,
                distortion: 0.0,
                octaves: 1,
            },
            deviation: NoiseParams {
                scale: 24.0,
                amplitude: 4.0,
                distortion: 0.0,
                octaves: 1,
            },
            wave: NoiseParams {
                scale: 25.0,
                amplitude: 1.0,
                distortion: 1.5,
                octaves: 1,
            },
            fracture: NoiseParams {
                scale: 25.0,
                amplitude: 1.0,
                distortion: 0.0,
                octaves: 1,
            },
            line_jitter: 0.4,
        }
    }
}

/// Full description of one damage instance.
///
/// Fields that a given type does not read are stored unchanged and ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageSpec {
    pub dtype: DamageType,
    /// Impact point on the surface, model space.
    pub center: Vec3,
    /// Unit surface normal at the impact point. Anchors the tangent frame
    /// used by the shattered-glass radial lines.
    pub center_normal: Vec3,
    /// Spatial footprint radius in model units. For broken lamps this is the
    /// missing-chunk radius.
    pub area: f64,
    /// Dent depth in model units.
    pub depth: f64,
    /// Band threshold of shattered-glass rings and lamp fractures.
    pub thickness: f64,
    /// Angular frequency of the shattered-glass concentric rings.
    pub ring_scale: f64,
    /// Number of shattered-glass radial lines.
    pub line_count: u32,
    /// Width of the crack dark line in offset units.
    pub line_width: f64,
    /// Radius around the impact point that lamp fractures may cover.
    pub fracture_extent: f64,
    pub noise: DamageNoise,
    /// Seed for every noise stream of this instance.
    pub seed: u64,
}

impl Default for DamageSpec {
    fn default() -> Self {
        DamageSpec {
            dtype: DamageType::Dent,
            center: Vec3::ZERO,
            center_normal: Vec3::Z,
            area: 0.3,
            depth: 0.08,
            thickness: 0.1,
            ring_scale: 40.0,
            line_count: 8,
            line_width: 0.02,
            fracture_extent: 0.2,
            noise: DamageNoise::default(),
            seed: 0,
        }
    }
}

impl DamageSpec {
    /// Noise context derived from this instance's seed.
    pub fn context(&self) -> NoiseContext {
        NoiseContext::new(self.seed)
    }

    /// Orthonormal tangent frame at the impact point.
    pub fn tangent_basis(&self) -> (Vec3, Vec3) {
        orthonormal_basis(self.center_normal)
    }

    /// Upper bound on the distance from the center at which this instance
    /// can still influence labels or shading.
    pub fn max_extent(&self) -> f64 {
        // The crumple field shifts each component by at most amplitude / 2.
        let crumple_bound = self.noise.crumple.amplitude * 0.5 * 3.0f64.sqrt();
        match self.dtype {
            DamageType::Dent => self.area + self.noise.radius.amplitude,
            DamageType::Scratch => self.area + crumple_bound,
            DamageType::Crack => self.area,
            DamageType::GlassShatter => self.area + crumple_bound,
            DamageType::BrokenLamp => {
                let chunk = 1.5 * self.area + self.noise.radius.amplitude;
                chunk.max(self.fracture_extent)
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum DamageError {
    #[error("operation expects a {expected} spec but received {got}")]
    WrongType {
        expected: DamageType,
        got: DamageType,
    },
    #[error("mix factor {0} is outside [0, 1]")]
    MixFactorOutOfRange(f64),
    #[error("mesh has no part compatible with any damage type")]
    NoCompatiblePart,
    #[error("mesh has no part compatible with {0}")]
    NoPartForType(DamageType),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn ensure_type(spec: &DamageSpec, expected: DamageType) -> Result<(), DamageError> {
    if spec.dtype == expected {
        Ok(())
    } else {
        Err(DamageError::WrongType {
            expected,
            got: spec.dtype,
        })
    }
}

/// Values that can be blended by [`mix`].
pub trait Mixable: Sized {
    /// Unchecked affine blend `p * a + (1 - p) * b`.
    fn mix_components(p: f64, a: &Self, b: &Self) -> Self;
}

impl Mixable for f64 {
    fn mix_components(p: f64, a: &f64, b: &f64) -> f64 {
        p * a + (1.0 - p) * b
    }
}

impl Mixable for Vec3 {
    fn mix_components(p: f64, a: &Vec3, b: &Vec3) -> Vec3 {
        *a * p + *b * (1.0 - p)
    }
}

/// Blend of two shader values: `p = 1` selects `s1`, `p = 0` selects `s2`.
pub fn mix<T: Mixable>(p: f64, s1: &T, s2: &T) -> Result<T, DamageError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DamageError::MixFactorOutOfRange(p));
    }
    Ok(T::mix_components(p, s1, s2))
}

/// Displaces vertices inside the dent footprint along their inverted,
/// crumpled normals and returns the deformed mesh.
///
/// The displacement length at noisy radius `r` follows the cosine bell
/// `depth * (1 + cos(pi * r / area)) / 2`, so it peaks with value `depth`
/// at the impact point and falls smoothly to zero at the footprint edge.
/// Vertices outside the footprint are left bit-identical; normals are then
/// recomputed for the whole mesh.
pub fn dent_displace(
    mesh: &LabeledMesh,
    spec: &DamageSpec,
    ctx: &NoiseContext,
) -> Result<LabeledMesh, DamageError> {
    ensure_type(spec, DamageType::Dent)?;
    let mut out = mesh.clone();
    for i in 0..out.vertices.len() {
        let x = out.vertices[i];
        let r = (x - spec.center).length() + ctx.perlin(x, &spec.noise.radius);
        if r < spec.area {
            let profile = spec.depth
                * (1.0 + (std::f64::consts::PI * r.min(spec.area) / spec.area).cos())
                * 0.5;
            let direction = mesh.normals[i] + ctx.voronoi_color(x, &spec.noise.crumple);
            out.vertices[i] = x - direction * profile;
        }
    }
    out.refresh_geometry();
    Ok(out)
}

/// Scratch intensity in `[0, 1]`: a noisy disc around the impact point
/// striped by the wave field.
pub fn scratch_factor(
    x: Vec3,
    spec: &DamageSpec,
    ctx: &NoiseContext,
) -> Result<f64, DamageError> {
    ensure_type(spec, DamageType::Scratch)?;
    let offset = x - spec.center + ctx.voronoi_color(x, &spec.noise.crumple);
    if offset.length() <= spec.area {
        Ok(ctx.wave(x, &spec.noise.wave))
    } else {
        Ok(0.0)
    }
}

/// Crack intensity in `[0, 1]`: a noisy line where two perturbed coordinates
/// coincide, faded linearly over the footprint.
pub fn crack_factor(x: Vec3, spec: &DamageSpec, ctx: &NoiseContext) -> Result<f64, DamageError> {
    ensure_type(spec, DamageType::Crack)?;
    let deviation = ctx.voronoi_color(x, &spec.noise.deviation);
    let x1 = x.x + deviation.x;
    let x2 = x.y + deviation.y;
    let line = (1.0 - (x1 - x2).abs() / spec.line_width).max(0.0);
    let region = clamp((spec.area - (spec.center - x).length()) / spec.area, 0.0, 1.0);
    Ok(region * line)
}

/// Concentric-ring component of shattered glass.
pub fn shatter_rings(x: Vec3, spec: &DamageSpec, ctx: &NoiseContext) -> bool {
    let noisy_radius = (x - spec.center + ctx.voronoi_color(x, &spec.noise.crumple)).length();
    noisy_radius <= spec.area && (spec.ring_scale * noisy_radius).sin().abs() < spec.thickness
}

/// Radial-line component of shattered glass.
pub fn shatter_radial_lines(x: Vec3, spec: &DamageSpec, ctx: &NoiseContext) -> bool {
    let radius = (x - spec.center).length();
    if radius > spec.area {
        return false;
    }
    let (axis_u, axis_v) = spec.tangent_basis();
    let angle = ctx.radial_gradient(x, spec.center, axis_u, axis_v);
    let line_distance = ctx.noisy_periodic(angle, spec.line_count, spec.noise.line_jitter);
    line_distance * radius < spec.thickness
}

/// Binary shattered-glass field: concentric rings or jittered radial lines,
/// both confined to the footprint around the impact point.
pub fn shatter_factor(
    x: Vec3,
    spec: &DamageSpec,
    ctx: &NoiseContext,
) -> Result<bool, DamageError> {
    ensure_type(spec, DamageType::GlassShatter)?;
    Ok(shatter_rings(x, spec, ctx) || shatter_radial_lines(x, spec, ctx))
}

/// The two binary fields of a broken lamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LampFactors {
    /// Fracture web over the lamp face.
    pub fracture: bool,
    /// Missing chunk around a seeded point near the impact.
    pub chunk: bool,
}

/// Center of the missing chunk: a seeded point displaced from the impact by
/// at most half the chunk radius.
pub fn chunk_center(spec: &DamageSpec, ctx: &NoiseContext) -> Vec3 {
    let h = ctx.chunk_seed();
    let z = 2.0 * unit_f64(h) - 1.0;
    let phi = std::f64::consts::TAU * unit_f64(splitmix64(h ^ 0x11));
    let r = (1.0 - z * z).max(0.0).sqrt();
    let dir = Vec3::new(r * phi.cos(), r * phi.sin(), z);
    let magnitude = 0.5 * spec.area * unit_f64(splitmix64(h ^ 0x22));
    spec.center + dir * magnitude
}

/// Evaluates both broken-lamp fields at a point.
pub fn broken_lamp_factors(
    x: Vec3,
    spec: &DamageSpec,
    ctx: &NoiseContext,
) -> Result<LampFactors, DamageError> {
    ensure_type(spec, DamageType::BrokenLamp)?;
    let fracture = (x - spec.center).length() <= spec.fracture_extent
        && ctx.voronoi_distance(x, &spec.noise.fracture) < spec.thickness;
    let chunk_dist = (x - chunk_center(spec, ctx)).length() + ctx.perlin(x, &spec.noise.radius);
    let chunk = chunk_dist < spec.area;
    Ok(LampFactors { fracture, chunk })
}

/// Closed interval used for parameter sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span(pub f64, pub f64);

impl Span {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.random_range(self.0..=self.1)
        }
    }

    pub fn validate(&self, name: &str) -> Result<(), String> {
        if !self.0.is_finite() || !self.1.is_finite() || self.0 > self.1 {
            Err(format!("range {name} = [{}, {}] is not ordered", self.0, self.1))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DentRanges {
    pub area: Span,
    pub depth: Span,
    pub radius_noise_scale: Span,
    pub radius_noise_amplitude: Span,
    pub crumple_scale: Span,
    pub crumple_amplitude: Span,
}

impl Default for DentRanges {
    fn default() -> Self {
        DentRanges {
            area: Span(0.1, 0.6),
            depth: Span(0.02, 0.15),
            radius_noise_scale: Span(4.0, 10.0),
            radius_noise_amplitude: Span(0.0, 0.05),
            crumple_scale: Span(6.0, 14.0),
            crumple_amplitude: Span(0.0, 0.45),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScratchRanges {
    pub area: Span,
    pub region_noise_scale: Span,
    pub region_noise_amplitude: Span,
    pub wave_scale: Span,
    pub wave_distortion: Span,
}

impl Default for ScratchRanges {
    fn default() -> Self {
        ScratchRanges {
            area: Span(0.1, 0.5),
            region_noise_scale: Span(3.0, 8.0),
            region_noise_amplitude: Span(0.0, 0.2),
            wave_scale: Span(15.0, 40.0),
            wave_distortion: Span(0.5, 3.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrackRanges {
    pub area: Span,
    pub line_width: Span,
    pub deviation_scale: Span,
    pub deviation_amplitude: Span,
}

impl Default for CrackRanges {
    fn default() -> Self {
        CrackRanges {
            area: Span(0.15, 0.45),
            line_width: Span(0.02, 0.05),
            deviation_scale: Span(16.0, 32.0),
            deviation_amplitude: Span(3.0, 5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShatterRanges {
    pub area: Span,
    pub ring_scale: Span,
    pub thickness: Span,
    pub line_count_min: u32,
    pub line_count_max: u32,
    pub line_jitter: Span,
    pub crumple_scale: Span,
    pub crumple_amplitude: Span,
}

impl Default for ShatterRanges {
    fn default() -> Self {
        ShatterRanges {
            area: Span(0.3, 1.0),
            ring_scale: Span(20.0, 80.0),
            thickness: Span(0.05, 0.2),
            line_count_min: 4,
            line_count_max: 12,
            line_jitter: Span(0.2, 0.8),
            crumple_scale: Span(4.0, 12.0),
            crumple_amplitude: Span(0.0, 0.15),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LampRanges {
    pub chunk_area: Span,
    pub thickness: Span,
    pub fracture_scale: Span,
    pub fracture_extent: Span,
    pub chunk_noise_scale: Span,
    pub chunk_noise_amplitude: Span,
}

impl Default for LampRanges {
    fn default() -> Self {
        LampRanges {
            chunk_area: Span(0.02, 0.1),
            thickness: Span(0.05, 0.2),
            fracture_scale: Span(15.0, 40.0),
            fracture_extent: Span(0.1, 0.3),
            chunk_noise_scale: Span(6.0, 15.0),
            chunk_noise_amplitude: Span(0.0, 0.02),
        }
    }
}

/// Sampling intervals for every damage parameter, per type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterRanges {
    pub dent: DentRanges,
    pub scratch: ScratchRanges,
    pub crack: CrackRanges,
    pub shatter: ShatterRanges,
    pub lamp: LampRanges,
}

impl ParameterRanges {
    pub fn validate(&self) -> Result<(), String> {
        self.dent.area.validate("dent.area")?;
        self.dent.depth.validate("dent.depth")?;
        self.dent.radius_noise_scale.validate("dent.radius_noise_scale")?;
        self.dent
            .radius_noise_amplitude
            .validate("dent.radius_noise_amplitude")?;
        self.dent.crumple_scale.validate("dent.crumple_scale")?;
        self.dent.crumple_amplitude.validate("dent.crumple_amplitude")?;
        self.scratch.area.validate("scratch.area")?;
        self.scratch
            .region_noise_scale
            .validate("scratch.region_noise_scale")?;
        self.scratch
            .region_noise_amplitude
            .validate("scratch.region_noise_amplitude")?;
        self.scratch.wave_scale.validate("scratch.wave_scale")?;
        self.scratch.wave_distortion.validate("scratch.wave_distortion")?;
        self.crack.area.validate("crack.area")?;
        self.crack.line_width.validate("crack.line_width")?;
        self.crack.deviation_scale.validate("crack.deviation_scale")?;
        self.crack
            .deviation_amplitude
            .validate("crack.deviation_amplitude")?;
        self.shatter.area.validate("shatter.area")?;
        self.shatter.ring_scale.validate("shatter.ring_scale")?;
        self.shatter.thickness.validate("shatter.thickness")?;
        if self.shatter.line_count_min < 1 || self.shatter.line_count_min > self.shatter.line_count_max
        {
            return Err("shatter.line_count bounds are not ordered".to_string());
        }
        self.shatter.line_jitter.validate("shatter.line_jitter")?;
        self.shatter.crumple_scale.validate("shatter.crumple_scale")?;
        self.shatter
            .crumple_amplitude
            .validate("shatter.crumple_amplitude")?;
        self.lamp.chunk_area.validate("lamp.chunk_area")?;
        self.lamp.thickness.validate("lamp.thickness")?;
        self.lamp.fracture_scale.validate("lamp.fracture_scale")?;
        self.lamp.fracture_extent.validate("lamp.fracture_extent")?;
        self.lamp.chunk_noise_scale.validate("lamp.chunk_noise_scale")?;
        self.lamp
            .chunk_noise_amplitude
            .validate("lamp.chunk_noise_amplitude")?;
        Ok(())
    }
}

/// A sampled primary damage: its parameters plus the part it targets.
#[derive(Debug, Clone, PartialEq)]
pub struct DamagePlan {
    pub spec: DamageSpec,
    pub part_id: u8,
}

/// Draws the per-type parameters of a spec from the configured ranges.
/// `center` and `center_normal` must be filled in by the caller.
fn sample_params<R: Rng>(dtype: DamageType, ranges: &ParameterRanges, rng: &mut R) -> DamageSpec {
    let mut spec = DamageSpec {
        dtype,
        seed: rng.random::<u64>(),
        ..DamageSpec::default()
    };
    match dtype {
        DamageType::Dent => {
            spec.area = ranges.dent.area.sample(rng);
            spec.depth = ranges.dent.depth.sample(rng);
            spec.noise.radius.scale = ranges.dent.radius_noise_scale.sample(rng);
            spec.noise.radius.amplitude = ranges.dent.radius_noise_amplitude.sample(rng);
            spec.noise.crumple.scale = ranges.dent.crumple_scale.sample(rng);
            spec.noise.crumple.amplitude = ranges.dent.crumple_amplitude.sample(rng);
        }
        DamageType::Scratch => {
            spec.area = ranges.scratch.area.sample(rng);
            spec.noise.crumple.scale = ranges.scratch.region_noise_scale.sample(rng);
            spec.noise.crumple.amplitude = ranges.scratch.region_noise_amplitude.sample(rng);
            spec.noise.wave.scale = ranges.scratch.wave_scale.sample(rng);
            spec.noise.wave.distortion = ranges.scratch.wave_distortion.sample(rng);
        }
        DamageType::Crack => {
            spec.area = ranges.crack.area.sample(rng);
            spec.line_width = ranges.crack.line_width.sample(rng);
            spec.noise.deviation.scale = ranges.crack.deviation_scale.sample(rng);
            spec.noise.deviation.amplitude = ranges.crack.deviation_amplitude.sample(rng);
        }
        DamageType::GlassShatter => {
            spec.area = ranges.shatter.area.sample(rng);
            spec.ring_scale = ranges.shatter.ring_scale.sample(rng);
            spec.thickness = ranges.shatter.thickness.sample(rng);
            spec.line_count =
                rng.random_range(ranges.shatter.line_count_min..=ranges.shatter.line_count_max);
            spec.noise.line_jitter = ranges.shatter.line_jitter.sample(rng);
            spec.noise.crumple.scale = ranges.shatter.crumple_scale.sample(rng);
            spec.noise.crumple.amplitude = ranges.shatter.crumple_amplitude.sample(rng);
        }
        DamageType::BrokenLamp => {
            spec.area = ranges.lamp.chunk_area.sample(rng);
            spec.thickness = ranges.lamp.thickness.sample(rng);
            spec.noise.fracture.scale = ranges.lamp.fracture_scale.sample(rng);
            spec.fracture_extent = ranges.lamp.fracture_extent.sample(rng);
            spec.noise.radius.scale = ranges.lamp.chunk_noise_scale.sample(rng);
            spec.noise.radius.amplitude = ranges.lamp.chunk_noise_amplitude.sample(rng);
        }
    }
    spec
}

fn parts_accepting(
    mesh: &LabeledMesh,
    compat: &CompatibilityMatrix,
    dtype: DamageType,
) -> Vec<u8> {
    mesh.present_parts()
        .filter(|&p| {
            mesh.material_of_part(p)
                .map(|m| compat.allows(m, dtype))
                .unwrap_or(false)
        })
        .collect()
}

/// Samples the primary damage for one image.
///
/// The type is drawn uniformly over all five and redrawn while the mesh has
/// no part accepting it; the part is then uniform over the accepting parts
/// and the impact point uniform over that part's vertices.
pub fn sample_damage_plan<R: Rng>(
    mesh: &LabeledMesh,
    registry: &PartRegistry,
    compat: &CompatibilityMatrix,
    ranges: &ParameterRanges,
    rng: &mut R,
) -> Result<DamagePlan, DamageError> {
    let _ = registry;
    let feasible: Vec<DamageType> = ALL_DAMAGE_TYPES
        .iter()
        .copied()
        .filter(|&t| !parts_accepting(mesh, compat, t).is_empty())
        .collect();
    if feasible.is_empty() {
        return Err(DamageError::NoCompatiblePart);
    }
    let dtype = loop {
        let t = ALL_DAMAGE_TYPES[rng.random_range(0..ALL_DAMAGE_TYPES.len())];
        if feasible.contains(&t) {
            break t;
        }
    };
    finish_plan(mesh, compat, ranges, dtype, rng)
}

/// Samples a primary damage of a fixed type.
pub fn sample_damage_plan_for_type<R: Rng>(
    mesh: &LabeledMesh,
    compat: &CompatibilityMatrix,
    ranges: &ParameterRanges,
    dtype: DamageType,
    rng: &mut R,
) -> Result<DamagePlan, DamageError> {
    if parts_accepting(mesh, compat, dtype).is_empty() {
        return Err(DamageError::NoPartForType(dtype));
    }
    finish_plan(mesh, compat, ranges, dtype, rng)
}

fn finish_plan<R: Rng>(
    mesh: &LabeledMesh,
    compat: &CompatibilityMatrix,
    ranges: &ParameterRanges,
    dtype: DamageType,
    rng: &mut R,
) -> Result<DamagePlan, DamageError> {
    let parts = parts_accepting(mesh, compat, dtype);
    let part_id = parts[rng.random_range(0..parts.len())];
    let vertex = mesh.sample_part_vertex(part_id, rng)?;
    let mut spec = sample_params(dtype, ranges, rng);
    spec.center = mesh.vertices[vertex as usize];
    spec.center_normal = mesh.normals[vertex as usize];
    Ok(DamagePlan { spec, part_id })
}

/// Samples the follow-up damages for a scene.
///
/// An empty candidate list yields no follow-ups. Otherwise the first
/// follow-up happens with probability one half, and each further one with
/// probability one fifth, so with candidates present
/// `P(len >= 1) = 0.5` and `P(len >= k+1 | len >= k) = 0.2` for `k >= 1`.
pub fn secondary_damage_chain<R: Rng>(
    mesh: &LabeledMesh,
    candidates: &[DamageCandidate],
    compat: &CompatibilityMatrix,
    ranges: &ParameterRanges,
    rng: &mut R,
) -> Vec<DamageSpec> {
    let mut out = Vec::new();
    if candidates.is_empty() || !rng.random_bool(0.5) {
        return out;
    }
    loop {
        let cand = candidates[rng.random_range(0..candidates.len())];
        let types = compat.types_for(cand.material);
        debug_assert!(!types.is_empty(), "candidates are prefiltered");
        let dtype = types[rng.random_range(0..types.len())];
        let mut spec = sample_params(dtype, ranges, rng);
        spec.center = mesh.vertices[cand.vertex as usize];
        spec.center_normal = mesh.normals[cand.vertex as usize];
        out.push(spec);
        if !rng.random_bool(0.2) {
            break;
        }
    }
    out
}

/// A damage spec paired with its derived noise context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "DamageSpec", into = "DamageSpec")]
pub struct AppliedDamage {
    pub spec: DamageSpec,
    ctx: NoiseContext,
}

impl AppliedDamage {
    pub fn new(spec: DamageSpec) -> AppliedDamage {
        AppliedDamage {
            ctx: spec.context(),
            spec,
        }
    }

    pub fn ctx(&self) -> &NoiseContext {
        &self.ctx
    }

    /// Whether this instance labels the given surface point.
    ///
    /// Dents label wherever the noisy radius is inside the footprint;
    /// scratches and cracks where their intensity reaches one half; the two
    /// binary fields wherever they are set.
    pub fn label_indicator(&self, x: Vec3) -> bool {
        let spec = &self.spec;
        match spec.dtype {
            DamageType::Dent => {
                (x - spec.center).length() + self.ctx.perlin(x, &spec.noise.radius) < spec.area
            }
            DamageType::Scratch => {
                scratch_factor(x, spec, &self.ctx).expect("type checked") >= 0.5
            }
            DamageType::Crack => crack_factor(x, spec, &self.ctx).expect("type checked") >= 0.5,
            DamageType::GlassShatter => {
                shatter_factor(x, spec, &self.ctx).expect("type checked")
            }
            DamageType::BrokenLamp => {
                let f = broken_lamp_factors(x, spec, &self.ctx).expect("type checked");
                f.fracture || f.chunk
            }
        }
    }
}

impl From<DamageSpec> for AppliedDamage {
    fn from(spec: DamageSpec) -> AppliedDamage {
        AppliedDamage::new(spec)
    }
}

impl From<AppliedDamage> for DamageSpec {
    fn from(applied: AppliedDamage) -> DamageSpec {
        applied.spec
    }
}

/// Label code of the earliest damage in application order whose indicator
/// holds at the point, or 0 when none does.
pub fn damage_label(x: Vec3, damages: &[AppliedDamage]) -> u8 {
    for d in damages {
        if d.label_indicator(x) {
            return d.spec.dtype.code();
        }
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_free(mut spec: DamageSpec) -> DamageSpec {
        spec.noise.radius.amplitude = 0.0;
        spec.noise.crumple.amplitude = 0.0;
        spec.noise.deviation.amplitude = 0.0;
        spec.noise.line_jitter = 0.0;
        spec
    }

    #[test]
    fn mix_endpoints_select_the_inputs() {
        assert_eq!(mix(1.0, &2.0, &5.0).unwrap(), 2.0);
        assert_eq!(mix(0.0, &2.0, &5.0).unwrap(), 5.0);
        assert_eq!(mix(0.5, &2.0, &6.0).unwrap(), 4.0);
        assert!(matches!(
            mix(1.5, &1.0, &0.0),
            Err(DamageError::MixFactorOutOfRange(_))
        ));
    }

    #[test]
    fn type_checks_reject_mismatched_specs() {
        let spec = DamageSpec {
            dtype: DamageType::Scratch,
            ..DamageSpec::default()
        };
        let ctx = spec.context();
        assert!(matches!(
            crack_factor(Vec3::ZERO, &spec, &ctx),
            Err(DamageError::WrongType { .. })
        ));
        let mesh_err = shatter_factor(Vec3::ZERO, &spec, &ctx);
        assert!(mesh_err.is_err());
    }

    #[test]
    fn crack_peaks_where_coordinates_coincide() {
        let spec = noise_free(DamageSpec {
            dtype: DamageType::Crack,
            center: Vec3::new(0.3, 0.3, 0.0),
            area: 0.2,
            line_width: 0.02,
            ..DamageSpec::default()
        });
        let ctx = spec.context();
        // x1 == x2 at the center, so the line term is 1 and the region term
        // is 1 exactly at the center.
        assert_eq!(crack_factor(spec.center, &spec, &ctx).unwrap(), 1.0);
        // Far off the diagonal the line term vanishes.
        let off = Vec3::new(0.33, 0.27, 0.0);
        assert_eq!(crack_factor(off, &spec, &ctx).unwrap(), 0.0);
        // Outside the footprint the region term vanishes.
        let outside = Vec3::new(0.6, 0.6, 0.0);
        assert_eq!(crack_factor(outside, &spec, &ctx).unwrap(), 0.0);
    }

    #[test]
    fn shatter_fires_at_the_impact_point() {
        let spec = noise_free(DamageSpec {
            dtype: DamageType::GlassShatter,
            area: 0.5,
            thickness: 0.1,
            ring_scale: 40.0,
            ..DamageSpec::default()
        });
        let ctx = spec.context();
        assert!(shatter_factor(spec.center, &spec, &ctx).unwrap());
    }

    #[test]
    fn shatter_ring_appears_at_the_sine_zero() {
        let spec = noise_free(DamageSpec {
            dtype: DamageType::GlassShatter,
            area: 0.5,
            thickness: 0.1,
            ring_scale: 20.0,
            ..DamageSpec::default()
        });
        let ctx = spec.context();
        // sin(20 * r) = 0 at r = pi / 20, inside the footprint.
        let r = std::f64::consts::PI / 20.0;
        let x = spec.center + Vec3::new(r, 0.0, 0.0);
        assert!(shatter_rings(x, &spec, &ctx));
        // Where the sine peaks the ring term must be off.
        let r_peak = std::f64::consts::PI / 40.0;
        let x_peak = spec.center + Vec3::new(r_peak, 0.0, 0.0);
        assert!(!shatter_rings(x_peak, &spec, &ctx));
    }

    #[test]
    fn radial_line_count_matches_the_spec() {
        let spec = noise_free(DamageSpec {
            dtype: DamageType::GlassShatter,
            center: Vec3::new(0.0, 0.0, 1.0),
            center_normal: Vec3::Z,
            area: 0.5,
            thickness: 0.02,
            line_count: 6,
            ..DamageSpec::default()
        });
        let ctx = spec.context();
        let (u, v) = spec.tangent_basis();
        let radius = 0.3;
        let samples = 20_000;
        let mut crossings = 0;
        let mut prev = shatter_radial_lines(
            spec.center + (u * radius),
            &spec,
            &ctx,
        );
        for i in 1..=samples {
            let a = std::f64::consts::TAU * i as f64 / samples as f64;
            let x = spec.center + u * (radius * a.cos()) + v * (radius * a.sin());
            let cur = shatter_radial_lines(x, &spec, &ctx);
            if cur && !prev {
                crossings += 1;
            }
            prev = cur;
        }
        assert_eq!(crossings, 6);
    }

    #[test]
    fn lamp_chunk_covers_its_center() {
        let spec = noise_free(DamageSpec {
            dtype: DamageType::BrokenLamp,
            area: 0.08,
            thickness: 0.15,
            fracture_extent: 0.25,
            ..DamageSpec::default()
        });
        let ctx = spec.context();
        let cc = chunk_center(&spec, &ctx);
        assert!((cc - spec.center).length() <= 0.5 * spec.area + 1e-12);
        let f = broken_lamp_factors(cc, &spec, &ctx).unwrap();
        assert!(f.chunk);
    }

    #[test]
    fn label_priority_follows_application_order() {
        let scratch = noise_free(DamageSpec {
            dtype: DamageType::Scratch,
            area: 0.4,
            ..DamageSpec::default()
        });
        let dent = noise_free(DamageSpec {
            dtype: DamageType::Dent,
            area: 0.4,
            ..DamageSpec::default()
        });
        // Pick a point where the scratch wave is bright so both label.
        let ctx = scratch.context();
        let mut x = Vec3::new(0.01, 0.0, 0.0);
        for i in 0..200 {
            let probe = Vec3::new(0.002 * i as f64, 0.0, 0.0);
            if scratch_factor(probe, &scratch, &ctx).unwrap() >= 0.5 {
                x = probe;
                break;
            }
        }
        let a = AppliedDamage::new(dent);
        let b = AppliedDamage::new(scratch);
        assert_eq!(damage_label(x, &[a, b]), DamageType::Dent.code());
        assert_eq!(damage_label(x, &[b, a]), DamageType::Scratch.code());
        assert_eq!(damage_label(Vec3::new(9.0, 9.0, 9.0), &[a, b]), 0);
    }
}
