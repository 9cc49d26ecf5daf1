//! Software renderer: ray casting, surface shading, alpha compositing, and
//! the pixel-exact part and damage segmentation maps.

pub mod bvh;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damage::{
    broken_lamp_factors, crack_factor, damage_label, mix, scratch_factor, shatter_factor,
    AppliedDamage, CompatibilityMatrix, DamageError, DamageType,
};
use crate::math::{clamp, orthonormal_basis, Vec3};
use crate::mesh::{LabeledMesh, MaterialClass};
use crate::scene::{Camera, Environment, EnvironmentKind, PaintEntry, StagedScene};
use bvh::Bvh;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to encode image: {0}")]
    Encode(#[from] image::ImageError),
    #[error(transparent)]
    Damage(#[from] DamageError),
}

/// Rendering effort. Preview shades one sample per pixel, Full shades four
/// stratified samples; segmentation maps always come from the pixel-center
/// ray so both qualities produce identical masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quality {
    Preview,
    Full,
}

impl Quality {
    fn sample_offsets(self) -> &'static [(f64, f64)] {
        match self {
            Quality::Preview => &[(0.5, 0.5)],
            Quality::Full => &[(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)],
        }
    }
}

/// Point-local surface response, blended between archetypes by the damage
/// fields before lighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShaderParams {
    pub diffuse: Vec3,
    pub metallic: f64,
    pub roughness: f64,
    /// Geometric presence; 0 removes the surface entirely.
    pub opacity: f64,
    /// Fraction of light passing straight through.
    pub transmission: f64,
}

impl crate::damage::Mixable for ShaderParams {
    fn mix_components(p: f64, a: &ShaderParams, b: &ShaderParams) -> ShaderParams {
        let q = 1.0 - p;
        ShaderParams {
            diffuse: a.diffuse * p + b.diffuse * q,
            metallic: a.metallic * p + b.metallic * q,
            roughness: a.roughness * p + b.roughness * q,
            opacity: a.opacity * p + b.opacity * q,
            transmission: a.transmission * p + b.transmission * q,
        }
    }
}

/// Body paint as configured in the palette.
pub fn paint_shader(paint: &PaintEntry) -> ShaderParams {
    ShaderParams {
        diffuse: Vec3::from_array(paint.color),
        metallic: paint.metallic,
        roughness: paint.roughness,
        opacity: 1.0,
        transmission: 0.0,
    }
}

/// Intact window glass.
pub fn glass_shader() -> ShaderParams {
    ShaderParams {
        diffuse: Vec3::new(0.55, 0.65, 0.70),
        metallic: 0.0,
        roughness: 0.05,
        opacity: 1.0,
        transmission: 0.9,
    }
}

/// Intact lamp cover, a milkier glass.
pub fn lamp_cover_shader() -> ShaderParams {
    ShaderParams {
        diffuse: Vec3::new(0.85, 0.84, 0.78),
        metallic: 0.0,
        roughness: 0.2,
        opacity: 1.0,
        transmission: 0.35,
    }
}

/// Crushed white glass, used by shatter patterns and lamp fractures.
pub fn white_shards_shader() -> ShaderParams {
    ShaderParams {
        diffuse: Vec3::new(0.9, 0.9, 0.9),
        metallic: 0.0,
        roughness: 0.55,
        opacity: 1.0,
        transmission: 0.05,
    }
}

/// A hole: the missing chunk of a broken lamp.
pub fn transparent_shader() -> ShaderParams {
    ShaderParams {
        diffuse: Vec3::ZERO,
        metallic: 0.0,
        roughness: 1.0,
        opacity: 0.0,
        transmission: 0.0,
    }
}

/// Exposed primer and bare metal inside a scratch.
pub fn scratch_shader() -> ShaderParams {
    ShaderParams {
        diffuse: Vec3::new(0.32, 0.31, 0.30),
        metallic: 0.75,
        roughness: 0.4,
        opacity: 1.0,
        transmission: 0.0,
    }
}

/// The dark line of a crack.
pub fn crack_shader() -> ShaderParams {
    ShaderParams {
        diffuse: Vec3::new(0.02, 0.02, 0.02),
        metallic: 0.0,
        roughness: 0.9,
        opacity: 1.0,
        transmission: 0.0,
    }
}

/// Trim, wheels, and other unpainted parts.
pub fn matte_shader() -> ShaderParams {
    ShaderParams {
        diffuse: Vec3::new(0.13, 0.13, 0.14),
        metallic: 0.0,
        roughness: 0.85,
        opacity: 1.0,
        transmission: 0.0,
    }
}

fn base_shader(class: MaterialClass, paint: &PaintEntry) -> ShaderParams {
    match class {
        MaterialClass::Metal => paint_shader(paint),
        MaterialClass::Glass => glass_shader(),
        MaterialClass::Lamp => lamp_cover_shader(),
        MaterialClass::Other => matte_shader(),
    }
}

/// Blends the damage fields compatible with the hit part into its base
/// shader. `damages` must already be filtered to the part's material class
/// and kept in application order.
pub fn surface_shader(
    x: Vec3,
    class: MaterialClass,
    paint: &PaintEntry,
    damages: &[AppliedDamage],
) -> Result<ShaderParams, DamageError> {
    let mut shader = base_shader(class, paint);
    for damage in damages {
        let spec = &damage.spec;
        match spec.dtype {
            DamageType::Dent => {}
            DamageType::Scratch => {
                let p = scratch_factor(x, spec, damage.ctx())?;
                if p > 0.0 {
                    shader = mix(p, &scratch_shader(), &shader)?;
                }
            }
            DamageType::Crack => {
                let p = crack_factor(x, spec, damage.ctx())?;
                if p > 0.0 {
                    shader = mix(p, &crack_shader(), &shader)?;
                }
            }
            DamageType::GlassShatter => {
                if shatter_factor(x, spec, damage.ctx())? {
                    shader = mix(1.0, &white_shards_shader(), &shader)?;
                }
            }
            DamageType::BrokenLamp => {
                let f = broken_lamp_factors(x, spec, damage.ctx())?;
                let fractured = mix(
                    if f.fracture { 1.0 } else { 0.0 },
                    &white_shards_shader(),
                    &shader,
                )?;
                shader = mix(
                    if f.chunk { 1.0 } else { 0.0 },
                    &transparent_shader(),
                    &fractured,
                )?;
            }
        }
    }
    Ok(shader)
}

/// Cosine-weighted hemisphere directions used to integrate panorama
/// irradiance, as offsets of a golden-ratio sequence.
const IRRADIANCE_SAMPLES: usize = 16;

fn diffuse_irradiance(env: &Environment, n: Vec3) -> Vec3 {
    use std::f64::consts::PI;
    match &env.kind {
        EnvironmentKind::Solid(color) => *color * (PI * env.exposure),
        EnvironmentKind::Sky(sky) => {
            let sky_avg = (sky.horizon_color + sky.zenith_color) * 0.5;
            let up = (1.0 + n.z) * 0.5;
            let ambient = (sky_avg * up + sky.ground_color * (1.0 - up)) * PI;
            let sun = sky.sun_irradiance * n.dot(sky.sun_direction).max(0.0);
            (ambient + Vec3::new(sun, sun, sun)) * env.exposure
        }
        EnvironmentKind::Equirect { map, .. } => {
            let (t1, t2) = orthonormal_basis(n);
            let golden = 0.618_033_988_749_894_9;
            let mut sum = Vec3::ZERO;
            for i in 0..IRRADIANCE_SAMPLES {
                let a = (i as f64 * golden).fract();
                let b = (i as f64 + 0.5) / IRRADIANCE_SAMPLES as f64;
                let phi = std::f64::consts::TAU * a;
                let r = b.sqrt();
                let local = Vec3::new(r * phi.cos(), r * phi.sin(), (1.0 - b).max(0.0).sqrt());
                let dir = t1 * local.x + t2 * local.y + n * local.z;
                sum = sum + map.sample(dir);
            }
            sum * (PI / IRRADIANCE_SAMPLES as f64 * env.exposure)
        }
    }
}

/// Shades one surface point. The specular weight follows
/// `lerp(0.04, 1, metallic) * (1 - roughness)`, so a fully rough surface is
/// purely Lambertian and a smooth bare metal is purely reflective.
pub fn shade_point(
    shader: &ShaderParams,
    x: Vec3,
    normal: Vec3,
    view: Vec3,
    env: &Environment,
) -> Vec3 {
    let _ = x;
    let f0 = 0.04 + 0.96 * shader.metallic;
    let f_eff = f0 * (1.0 - shader.roughness);
    let e_diff = diffuse_irradiance(env, normal);
    let reflect = normal * (2.0 * normal.dot(view)) - view;
    let l_spec = env.radiance(reflect.normalized());
    let spec_color = Vec3::new(1.0, 1.0, 1.0).lerp(shader.diffuse, shader.metallic);
    shader.diffuse.mul_elem(e_diff) * ((1.0 - f_eff) / std::f64::consts::PI)
        + spec_color.mul_elem(l_spec) * f_eff
}

/// Rendered frame: linear radiance plus the two segmentation maps, row
/// major from the top-left pixel.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f32; 3]>,
    pub part_map: Vec<u8>,
    pub damage_map: Vec<u8>,
    pub meta: RenderMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderMeta {
    pub quality: Quality,
    pub samples_per_pixel: u32,
}

/// At most this many stacked surfaces contribute to one pixel; anything
/// behind the last one is dropped.
const MAX_SURFACES: usize = 8;
/// Ray parameter offset used to step past a composited surface.
const SURFACE_STEP: f64 = 1e-6;
/// Compositing stops once the remaining transparency weight is this small.
const MIN_THROUGHPUT: f64 = 1e-3;

struct FrameContext<'a> {
    mesh: &'a LabeledMesh,
    bvh: Bvh,
    camera: Camera,
    env: &'a Environment,
    paint: &'a PaintEntry,
    class_damages: [Vec<AppliedDamage>; 4],
}

fn class_index(class: MaterialClass) -> usize {
    match class {
        MaterialClass::Metal => 0,
        MaterialClass::Glass => 1,
        MaterialClass::Lamp => 2,
        MaterialClass::Other => 3,
    }
}

impl<'a> FrameContext<'a> {
    fn new(scene: &'a StagedScene) -> FrameContext<'a> {
        let compat: &CompatibilityMatrix = &scene.desc.compat;
        let mut class_damages: [Vec<AppliedDamage>; 4] = Default::default();
        for (i, class) in [
            MaterialClass::Metal,
            MaterialClass::Glass,
            MaterialClass::Lamp,
            MaterialClass::Other,
        ]
        .into_iter()
        .enumerate()
        {
            class_damages[i] = scene
                .desc
                .damages
                .iter()
                .filter(|spec| compat.allows(class, spec.dtype))
                .map(|spec| AppliedDamage::new(*spec))
                .collect();
        }
        FrameContext {
            mesh: &scene.mesh,
            bvh: Bvh::build(&scene.mesh),
            camera: scene.desc.camera,
            env: &scene.environment,
            paint: &scene.desc.paint,
            class_damages,
        }
    }

    fn hit_geometry(&self, origin: Vec3, dir: Vec3, hit: &bvh::Hit) -> (Vec3, Vec3) {
        let tri = self.mesh.triangles[hit.tri as usize];
        let w = 1.0 - hit.u - hit.v;
        let n = self.mesh.normals[tri[0] as usize] * w
            + self.mesh.normals[tri[1] as usize] * hit.u
            + self.mesh.normals[tri[2] as usize] * hit.v;
        let mut n = n.try_normalized(1e-12).unwrap_or(-dir);
        if n.dot(dir) > 0.0 {
            n = -n;
        }
        (origin + dir * hit.t, n)
    }

    fn trace_radiance(&self, origin: Vec3, dir: Vec3) -> Result<Vec3, DamageError> {
        let mut color = Vec3::ZERO;
        let mut throughput = 1.0;
        let mut t_start = 0.0;
        for _ in 0..MAX_SURFACES {
            let Some(hit) = self.bvh.intersect(origin, dir, t_start, f64::INFINITY) else {
                return Ok(color + self.env.radiance(dir) * throughput);
            };
            let (x, normal) = self.hit_geometry(origin, dir, &hit);
            let class = self.mesh.material_of_triangle(hit.tri);
            let shader = surface_shader(
                x,
                class,
                self.paint,
                &self.class_damages[class_index(class)],
            )?;
            let alpha = clamp(shader.opacity * (1.0 - shader.transmission), 0.0, 1.0);
            if alpha > 0.0 {
                let lit = shade_point(&shader, x, normal, -dir, self.env);
                color = color + lit * (alpha * throughput);
            }
            throughput *= 1.0 - alpha;
            if throughput < MIN_THROUGHPUT {
                return Ok(color);
            }
            t_start = hit.t + SURFACE_STEP;
        }
        Ok(color)
    }

    /// Part and damage labels from the first surface on the ray, regardless
    /// of its transparency.
    fn labels(&self, origin: Vec3, dir: Vec3) -> (u8, u8) {
        let Some(hit) = self.bvh.intersect(origin, dir, 0.0, f64::INFINITY) else {
            return (0, 0);
        };
        let (x, _) = self.hit_geometry(origin, dir, &hit);
        let part = self.mesh.part_of_triangle(hit.tri);
        let class = self.mesh.material_of_triangle(hit.tri);
        let damage = damage_label(x, &self.class_damages[class_index(class)]);
        (part, damage)
    }
}

/// Renders a staged scene into a color frame and its two segmentation maps.
pub fn render(scene: &StagedScene, quality: Quality) -> Result<RenderOutput, RenderError> {
    use rayon::prelude::*;
    let ctx = FrameContext::new(scene);
    let camera = ctx.camera;
    let width = camera.width;
    let height = camera.height;
    let offsets = quality.sample_offsets();

    let pixels: Result<Vec<([f32; 3], u8, u8)>, DamageError> = (0..(width as u64 * height as u64))
        .into_par_iter()
        .map(|i| {
            let px = (i % width as u64) as f64;
            let py = (i / width as u64) as f64;
            let mut sum = Vec3::ZERO;
            for (ox, oy) in offsets {
                let dir = camera.ray_direction(px + ox, py + oy);
                sum = sum + ctx.trace_radiance(camera.position, dir)?;
            }
            let color = sum / offsets.len() as f64;
            let center = camera.ray_direction(px + 0.5, py + 0.5);
            let (part, damage) = ctx.labels(camera.position, center);
            Ok((
                [color.x as f32, color.y as f32, color.z as f32],
                part,
                damage,
            ))
        })
        .collect();
    let pixels = pixels?;

    let mut rgb = Vec::with_capacity(pixels.len());
    let mut part_map = Vec::with_capacity(pixels.len());
    let mut damage_map = Vec::with_capacity(pixels.len());
    for (c, p, d) in pixels {
        rgb.push(c);
        part_map.push(p);
        damage_map.push(d);
    }
    Ok(RenderOutput {
        width,
        height,
        rgb,
        part_map,
        damage_map,
        meta: RenderMeta {
            quality,
            samples_per_pixel: offsets.len() as u32,
        },
    })
}

/// Maps linear radiance to an 8-bit sRGB value via Reinhard compression.
pub fn tonemap_channel(linear: f32) -> u8 {
    let l = (linear.max(0.0) as f64) / (1.0 + linear.max(0.0) as f64);
    let srgb = if l <= 0.003_130_8 {
        12.92 * l
    } else {
        1.055 * l.powf(1.0 / 2.4) - 0.055
    };
    (clamp(srgb, 0.0, 1.0) * 255.0).round() as u8
}

impl RenderOutput {
    /// Writes the tone-mapped color frame as an 8-bit PNG.
    pub fn save_color_png(&self, path: &Path) -> Result<(), RenderError> {
        let mut img = image::RgbImage::new(self.width, self.height);
        for (i, pixel) in img.pixels_mut().enumerate() {
            let c = self.rgb[i];
            *pixel = image::Rgb([
                tonemap_channel(c[0]),
                tonemap_channel(c[1]),
                tonemap_channel(c[2]),
            ]);
        }
        img.save(path).map_err(RenderError::from)
    }

    /// Writes the part id map as a single-channel PNG holding raw ids.
    pub fn save_part_map_png(&self, path: &Path) -> Result<(), RenderError> {
        save_mask(path, self.width, self.height, &self.part_map)
    }

    /// Writes the damage code map as a single-channel PNG holding raw codes.
    pub fn save_damage_map_png(&self, path: &Path) -> Result<(), RenderError> {
        save_mask(path, self.width, self.height, &self.damage_map)
    }
}

fn save_mask(path: &Path, width: u32, height: u32, data: &[u8]) -> Result<(), RenderError> {
    let img = image::GrayImage::from_raw(width, height, data.to_vec())
        .expect("mask buffer matches dimensions");
    img.save(path).map_err(RenderError::from)
}

/// Reads a single-channel mask PNG back into raw values.
pub fn load_mask_png(path: &Path) -> Result<(u32, u32, Vec<u8>), RenderError> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = (img.width(), img.height());
    Ok((w, h, img.into_raw()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shader_mix_is_componentwise() {
        let a = white_shards_shader();
        let b = transparent_shader();
        let m = mix(0.25, &a, &b).unwrap();
        assert!((m.opacity - 0.25).abs() < 1e-12);
        assert!((m.diffuse.x - 0.225).abs() < 1e-12);
    }

    #[test]
    fn tonemap_is_monotone_and_bounded() {
        let mut prev = tonemap_channel(0.0);
        assert_eq!(prev, 0);
        for i in 1..200 {
            let v = tonemap_channel(i as f32 * 0.1);
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(tonemap_channel(1e6), 255);
    }

    #[test]
    fn fully_rough_white_surface_returns_the_furnace_radiance() {
        let env = Environment::solid("furnace", Vec3::new(1.0, 1.0, 1.0));
        let shader = ShaderParams {
            diffuse: Vec3::new(1.0, 1.0, 1.0),
            metallic: 0.0,
            roughness: 1.0,
            opacity: 1.0,
            transmission: 0.0,
        };
        let c = shade_point(&shader, Vec3::ZERO, Vec3::Z, Vec3::Z, &env);
        assert!((c.x - 1.0).abs() < 1e-12);
        assert!((c.y - 1.0).abs() < 1e-12);
        assert!((c.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn furnace_energy_never_exceeds_unity() {
        let env = Environment::solid("furnace", Vec3::new(1.0, 1.0, 1.0));
        for metallic in [0.0, 0.3, 0.7, 1.0] {
            for roughness in [0.0, 0.2, 0.5, 0.8, 1.0] {
                let shader = ShaderParams {
                    diffuse: Vec3::new(1.0, 1.0, 1.0),
                    metallic,
                    roughness,
                    opacity: 1.0,
                    transmission: 0.0,
                };
                let c = shade_point(&shader, Vec3::ZERO, Vec3::Z, Vec3::Z, &env);
                for i in 0..3 {
                    assert!(
                        c.component(i) <= 1.0 + 1e-3,
                        "metallic {metallic} roughness {roughness} channel {i}: {}",
                        c.component(i)
                    );
                }
            }
        }
    }
}
