//! Scene staging: camera placement, lighting environments, paint, and the
//! sampling logic that assembles one renderable scene from a mesh and an
//! optional primary damage.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damage::{
    dent_displace, secondary_damage_chain, CompatibilityMatrix, DamagePlan, DamageSpec,
    DamageType, ParameterRanges, Span,
};
use crate::math::{clamp, Mat3, Vec3};
use crate::mesh::{visible_damage_candidates, LabeledMesh, MeshError};
use crate::rng::{derive_seed, streams};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("rotation axis has length {0}, expected a unit vector")]
    NonUnitAxis(f64),
    #[error("cannot place a camera around a center at the origin")]
    DegenerateCenter,
    #[error("camera position and target coincide")]
    CoincidentPoints,
    #[error("vertical fov {0} degrees is outside the open interval (10, 120)")]
    InvalidFov(f64),
    #[error("jitter angle {angle} degrees reaches half the fov ({fov} degrees)")]
    JitterExceedsFov { angle: f64, fov: f64 },
    #[error("camera image size {width}x{height} must be at least 1x1")]
    BadImageSize { width: u32, height: u32 },
    #[error("environment map {path} is {width}x{height}, expected a 2:1 panorama")]
    BadPanoramaShape {
        path: PathBuf,
        width: u32,
        height: u32,
    },
    #[error("environment pool is empty")]
    EmptyEnvironmentPool,
    #[error("paint palette is empty")]
    EmptyPalette,
    #[error("paint {name} has a channel outside [0, 1]")]
    PaintOutOfRange { name: String },
    #[error("damage {index} sits {distance:.3} from the origin, beyond the staging limit {limit:.3}")]
    DamageCenterTooFar {
        index: usize,
        distance: f64,
        limit: f64,
    },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Damage(#[from] crate::damage::DamageError),
}

/// A pinhole camera. `orientation` columns are the world-space right, up,
/// and forward directions; the camera looks along `forward`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub orientation: Mat3,
    pub vertical_fov_deg: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn right(&self) -> Vec3 {
        self.orientation.col(0)
    }

    pub fn up(&self) -> Vec3 {
        self.orientation.col(1)
    }

    pub fn forward(&self) -> Vec3 {
        self.orientation.col(2)
    }

    /// World point expressed in camera coordinates: x right, y up,
    /// z forward.
    pub fn camera_space(&self, p: Vec3) -> Vec3 {
        self.orientation.transpose().mul_vec(p - self.position)
    }

    /// Unit world direction through a raster position, with `u` in pixels
    /// from the left edge and `v` in pixels from the top edge.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        let half_v = (self.vertical_fov_deg.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let ndc_x = 2.0 * u / self.width as f64 - 1.0;
        let ndc_y = 1.0 - 2.0 * v / self.height as f64;
        let local = Vec3::new(ndc_x * half_v * aspect, ndc_y * half_v, 1.0);
        self.orientation.mul_vec(local).normalized()
    }
}

/// Rotation by `angle_rad` around a unit axis.
pub fn rotation_matrix(axis: Vec3, angle_rad: f64) -> Result<Mat3, SceneError> {
    let len = axis.length();
    if (len - 1.0).abs() > 1e-9 {
        return Err(SceneError::NonUnitAxis(len));
    }
    let (s, c) = angle_rad.sin_cos();
    let k = axis;
    let one_c = 1.0 - c;
    Ok(Mat3::from_rows(
        [
            c + k.x * k.x * one_c,
            k.x * k.y * one_c - k.z * s,
            k.x * k.z * one_c + k.y * s,
        ],
        [
            k.y * k.x * one_c + k.z * s,
            c + k.y * k.y * one_c,
            k.y * k.z * one_c - k.x * s,
        ],
        [
            k.z * k.x * one_c - k.y * s,
            k.z * k.y * one_c + k.x * s,
            c + k.z * k.z * one_c,
        ],
    ))
}

/// Places the camera on a sphere of radius `distance` around the world
/// origin, starting from the direction of `center` and rotating it by
/// `pitch_deg` around the horizontal axis perpendicular to `center`, then by
/// `yaw_deg` around the world z axis. Returns the camera position.
pub fn place_camera(
    center: Vec3,
    distance: f64,
    yaw_deg: f64,
    pitch_deg: f64,
) -> Result<Vec3, SceneError> {
    let len = center.length();
    if len < 1e-12 {
        return Err(SceneError::DegenerateCenter);
    }
    let dir = center / len;
    let pitch_axis = Vec3::new(-center.y, center.x, 0.0)
        .try_normalized(1e-12)
        .unwrap_or(Vec3::X);
    let pitch = rotation_matrix(pitch_axis, pitch_deg.to_radians())?;
    let yaw = rotation_matrix(Vec3::Z, yaw_deg.to_radians())?;
    Ok(center + yaw.mul_vec(pitch.mul_vec(dir)) * distance)
}

/// Builds a roll-free camera at `position` looking at `target`. The up
/// direction is the world z axis projected off the view direction, falling
/// back to the world x axis when looking straight up or down.
pub fn aim_camera(
    position: Vec3,
    target: Vec3,
    vertical_fov_deg: f64,
    width: u32,
    height: u32,
) -> Result<Camera, SceneError> {
    if !(vertical_fov_deg > 10.0 && vertical_fov_deg < 120.0) {
        return Err(SceneError::InvalidFov(vertical_fov_deg));
    }
    if width == 0 || height == 0 {
        return Err(SceneError::BadImageSize { width, height });
    }
    let forward = (target - position)
        .try_normalized(1e-9)
        .ok_or(SceneError::CoincidentPoints)?;
    let up = (Vec3::Z - forward * Vec3::Z.dot(forward))
        .try_normalized(1e-9)
        .unwrap_or_else(|| {
            (Vec3::X - forward * Vec3::X.dot(forward))
                .normalized()
        });
    let right = up.cross(forward);
    Ok(Camera {
        position,
        orientation: Mat3::from_cols(right, up, forward),
        vertical_fov_deg,
        width,
        height,
    })
}

/// Rotates the camera in place by `yaw_deg` around its local up axis and
/// `pitch_deg` around its local right axis. Angles at or beyond half the
/// vertical fov are rejected so the aim point cannot leave the frame
/// entirely.
pub fn jitter_camera(camera: &Camera, yaw_deg: f64, pitch_deg: f64) -> Result<Camera, SceneError> {
    let half_fov = camera.vertical_fov_deg * 0.5;
    for angle in [yaw_deg, pitch_deg] {
        if angle.abs() >= half_fov {
            return Err(SceneError::JitterExceedsFov {
                angle,
                fov: camera.vertical_fov_deg,
            });
        }
    }
    let yaw = rotation_matrix(Vec3::Y, yaw_deg.to_radians())?;
    let pitch = rotation_matrix(Vec3::X, pitch_deg.to_radians())?;
    let orientation = camera.orientation.mul_mat(&yaw).mul_mat(&pitch);
    Ok(Camera {
        orientation,
        ..*camera
    })
}

/// Analytic sky: a vertical color gradient plus a hard sun disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkyParams {
    pub horizon_color: Vec3,
    pub zenith_color: Vec3,
    pub ground_color: Vec3,
    /// Unit direction toward the sun.
    pub sun_direction: Vec3,
    /// Total irradiance delivered by the sun disk on a surface facing it.
    /// The disk radiance is this divided by the disk solid angle.
    pub sun_irradiance: f64,
    pub sun_angular_radius_deg: f64,
}

impl Default for SkyParams {
    fn default() -> Self {
        SkyParams {
            horizon_color: Vec3::new(0.62, 0.72, 0.85),
            zenith_color: Vec3::new(0.18, 0.32, 0.66),
            ground_color: Vec3::new(0.26, 0.24, 0.21),
            sun_direction: Vec3::new(0.35, 0.25, 0.85).normalized(),
            sun_irradiance: 3.5,
            sun_angular_radius_deg: 2.0,
        }
    }
}

impl SkyParams {
    /// Solid angle of the sun disk in steradians.
    pub fn sun_solid_angle(&self) -> f64 {
        std::f64::consts::TAU * (1.0 - self.sun_angular_radius_deg.to_radians().cos())
    }

    /// Radiance arriving from a unit direction.
    pub fn radiance(&self, dir: Vec3) -> Vec3 {
        let base = if dir.z >= 0.0 {
            self.horizon_color.lerp(self.zenith_color, dir.z)
        } else {
            self.ground_color
        };
        let cos_sun = self.sun_angular_radius_deg.to_radians().cos();
        if self.sun_irradiance > 0.0 && dir.dot(self.sun_direction) >= cos_sun {
            let disk = self.sun_irradiance / self.sun_solid_angle();
            base + Vec3::new(disk, disk, disk)
        } else {
            base
        }
    }

    /// Exact integral of the radiance over the full sphere of directions.
    pub fn total_radiance_integral(&self) -> Vec3 {
        use std::f64::consts::PI;
        let gradient = self.horizon_color * PI
            + self.zenith_color * PI
            + self.ground_color * (2.0 * PI);
        let disk = self.sun_irradiance;
        gradient + Vec3::new(disk, disk, disk)
    }
}

/// A 2:1 equirectangular panorama sampled by direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EquirectMap {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f32; 3]>,
}

impl EquirectMap {
    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[f32; 3]>) -> EquirectMap {
        assert_eq!(pixels.len(), (width * height) as usize);
        EquirectMap {
            width,
            height,
            pixels,
        }
    }

    fn texel(&self, x: i64, y: i64) -> Vec3 {
        let w = self.width as i64;
        let h = self.height as i64;
        let x = x.rem_euclid(w);
        let y = y.clamp(0, h - 1);
        let p = self.pixels[(y * w + x) as usize];
        Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }

    /// Bilinear lookup by unit direction, wrapping horizontally and clamping
    /// at the poles.
    pub fn sample(&self, dir: Vec3) -> Vec3 {
        let u = dir.y.atan2(dir.x) / std::f64::consts::TAU + 0.5;
        let v = clamp(dir.z, -1.0, 1.0).acos() / std::f64::consts::PI;
        let x = u * self.width as f64 - 0.5;
        let y = v * self.height as f64 - 0.5;
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as i64;
        let y0 = y0 as i64;
        let c00 = self.texel(x0, y0);
        let c10 = self.texel(x0 + 1, y0);
        let c01 = self.texel(x0, y0 + 1);
        let c11 = self.texel(x0 + 1, y0 + 1);
        c00 * ((1.0 - fx) * (1.0 - fy))
            + c10 * (fx * (1.0 - fy))
            + c01 * ((1.0 - fx) * fy)
            + c11 * (fx * fy)
    }
}

/// Loads a radiance panorama and checks the 2:1 aspect.
pub fn load_panorama(path: &Path) -> Result<EquirectMap, SceneError> {
    let img = image::ImageReader::open(path)
        .map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .decode()
        .map_err(|source| SceneError::Decode {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb32f();
    let (width, height) = (img.width(), img.height());
    if height == 0 || width != 2 * height {
        return Err(SceneError::BadPanoramaShape {
            path: path.to_path_buf(),
            width,
            height,
        });
    }
    let pixels = img.pixels().map(|p| p.0).collect();
    Ok(EquirectMap::from_pixels(width, height, pixels))
}

/// Serializable pointer to an environment's light source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvironmentSource {
    Sky(SkyParams),
    Equirect { path: PathBuf },
    Solid { color: Vec3 },
}

/// Serializable environment description stored in scene metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentDesc {
    pub name: String,
    pub exposure: f64,
    pub source: EnvironmentSource,
}

/// A loaded, renderable environment.
#[derive(Debug, Clone)]
pub enum EnvironmentKind {
    Sky(SkyParams),
    Equirect { path: PathBuf, map: Arc<EquirectMap> },
    Solid(Vec3),
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub exposure: f64,
    pub kind: EnvironmentKind,
}

impl Environment {
    pub fn sky(name: &str, params: SkyParams) -> Environment {
        Environment {
            name: name.to_string(),
            exposure: 1.0,
            kind: EnvironmentKind::Sky(params),
        }
    }

    pub fn solid(name: &str, color: Vec3) -> Environment {
        Environment {
            name: name.to_string(),
            exposure: 1.0,
            kind: EnvironmentKind::Solid(color),
        }
    }

    pub fn from_panorama(path: &Path) -> Result<Environment, SceneError> {
        let map = load_panorama(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "panorama".to_string());
        Ok(Environment {
            name,
            exposure: 1.0,
            kind: EnvironmentKind::Equirect {
                path: path.to_path_buf(),
                map: Arc::new(map),
            },
        })
    }

    pub fn load(desc: &EnvironmentDesc) -> Result<Environment, SceneError> {
        let kind = match &desc.source {
            EnvironmentSource::Sky(params) => EnvironmentKind::Sky(*params),
            EnvironmentSource::Equirect { path } => EnvironmentKind::Equirect {
                path: path.clone(),
                map: Arc::new(load_panorama(path)?),
            },
            EnvironmentSource::Solid { color } => EnvironmentKind::Solid(*color),
        };
        Ok(Environment {
            name: desc.name.clone(),
            exposure: desc.exposure,
            kind,
        })
    }

    pub fn describe(&self) -> EnvironmentDesc {
        let source = match &self.kind {
            EnvironmentKind::Sky(params) => EnvironmentSource::Sky(*params),
            EnvironmentKind::Equirect { path, .. } => EnvironmentSource::Equirect {
                path: path.clone(),
            },
            EnvironmentKind::Solid(color) => EnvironmentSource::Solid { color: *color },
        };
        EnvironmentDesc {
            name: self.name.clone(),
            exposure: self.exposure,
            source,
        }
    }

    /// Radiance arriving from a unit direction, exposure applied.
    pub fn radiance(&self, dir: Vec3) -> Vec3 {
        let raw = match &self.kind {
            EnvironmentKind::Sky(params) => params.radiance(dir),
            EnvironmentKind::Equirect { map, .. } => map.sample(dir),
            EnvironmentKind::Solid(color) => *color,
        };
        raw * self.exposure
    }
}

/// The built-in environment pool used when no panorama directory is given.
pub fn builtin_environments() -> Vec<Environment> {
    vec![
        Environment::sky("clear-noon", SkyParams::default()),
        Environment::sky(
            "golden-hour",
            SkyParams {
                horizon_color: Vec3::new(0.93, 0.62, 0.38),
                zenith_color: Vec3::new(0.24, 0.30, 0.52),
                ground_color: Vec3::new(0.22, 0.18, 0.15),
                sun_direction: Vec3::new(0.92, 0.2, 0.18).normalized(),
                sun_irradiance: 2.2,
                sun_angular_radius_deg: 2.5,
            },
        ),
        Environment::sky(
            "overcast",
            SkyParams {
                horizon_color: Vec3::new(0.55, 0.57, 0.60),
                zenith_color: Vec3::new(0.72, 0.74, 0.78),
                ground_color: Vec3::new(0.24, 0.24, 0.24),
                sun_direction: Vec3::Z,
                sun_irradiance: 0.0,
                sun_angular_radius_deg: 2.0,
            },
        ),
        Environment::sky(
            "dusk",
            SkyParams {
                horizon_color: Vec3::new(0.36, 0.28, 0.38),
                zenith_color: Vec3::new(0.07, 0.09, 0.20),
                ground_color: Vec3::new(0.10, 0.09, 0.10),
                sun_direction: Vec3::new(0.95, -0.1, 0.05).normalized(),
                sun_irradiance: 0.9,
                sun_angular_radius_deg: 3.0,
            },
        ),
    ]
}

/// Loads every 2:1 panorama in a directory as an environment pool, sorted by
/// file name. Falls back to the built-in skies when the directory holds no
/// loadable panorama.
pub fn environment_pool(dir: Option<&Path>) -> Result<Vec<Environment>, SceneError> {
    let Some(dir) = dir else {
        return Ok(builtin_environments());
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| SceneError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("hdr") | Some("exr") | Some("png")
            )
        })
        .collect();
    paths.sort();
    let mut pool = Vec::new();
    for path in paths {
        pool.push(Environment::from_panorama(&path)?);
    }
    if pool.is_empty() {
        return Ok(builtin_environments());
    }
    Ok(pool)
}

/// One body-paint option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaintEntry {
    pub name: String,
    pub color: [f64; 3],
    pub metallic: f64,
    pub roughness: f64,
}

impl PaintEntry {
    pub fn validate(&self) -> Result<(), SceneError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = self.color.iter().all(|&c| in_unit(c))
            && in_unit(self.metallic)
            && in_unit(self.roughness);
        if ok {
            Ok(())
        } else {
            Err(SceneError::PaintOutOfRange {
                name: self.name.clone(),
            })
        }
    }
}

/// The body-paint options a dataset draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaintPalette {
    pub entries: Vec<PaintEntry>,
}

impl PaintPalette {
    /// The palette bundled with the library.
    pub fn builtin() -> PaintPalette {
        serde_json::from_str(include_str!("../data/palette.json"))
            .expect("bundled palette is valid")
    }

    pub fn from_json_file(path: &Path) -> Result<PaintPalette, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let palette: PaintPalette =
            serde_json::from_str(&text).map_err(|source| SceneError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        palette.validate()?;
        Ok(palette)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.entries.is_empty() {
            return Err(SceneError::EmptyPalette);
        }
        for entry in &self.entries {
            entry.validate()?;
        }
        Ok(())
    }
}

/// Sampling intervals for camera placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRanges {
    pub distance: Span,
    pub yaw_deg: Span,
    pub pitch_deg: Span,
    pub jitter_deg: Span,
    pub vertical_fov_deg: f64,
    pub width: u32,
    pub height: u32,
    /// Follow-up damage sites must lie within this multiple of the camera
    /// distance.
    pub max_distance_factor: f64,
}

impl Default for CameraRanges {
    fn default() -> Self {
        CameraRanges {
            distance: Span(0.8, 3.0),
            yaw_deg: Span(-60.0, 60.0),
            pitch_deg: Span(-10.0, 30.0),
            jitter_deg: Span(-5.0, 5.0),
            vertical_fov_deg: 60.0,
            width: 512,
            height: 512,
            max_distance_factor: 1.5,
        }
    }
}

impl CameraRanges {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.vertical_fov_deg > 10.0 && self.vertical_fov_deg < 120.0) {
            return Err(SceneError::InvalidFov(self.vertical_fov_deg));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::BadImageSize {
                width: self.width,
                height: self.height,
            });
        }
        let half_fov = self.vertical_fov_deg * 0.5;
        for angle in [self.jitter_deg.0, self.jitter_deg.1] {
            if angle.abs() >= half_fov {
                return Err(SceneError::JitterExceedsFov {
                    angle,
                    fov: self.vertical_fov_deg,
                });
            }
        }
        Ok(())
    }
}

/// Everything scene sampling needs besides the mesh.
pub struct StagingOptions<'a> {
    pub camera: &'a CameraRanges,
    pub ranges: &'a ParameterRanges,
    pub compat: &'a CompatibilityMatrix,
    pub environments: &'a [Environment],
    pub palette: &'a PaintPalette,
}

/// Serializable record of one staged scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub model_id: String,
    pub seed: u64,
    pub camera: Camera,
    /// Damage instances in application order; the first is the primary one
    /// when present.
    pub damages: Vec<DamageSpec>,
    /// Part id each damage targets, parallel to `damages` (0 for follow-up
    /// damages whose part is implied by their center).
    pub damage_parts: Vec<u8>,
    pub environment: EnvironmentDesc,
    pub paint: PaintEntry,
    /// Which damage types each material accepts, carried along so masks can
    /// be reproduced from the description alone.
    #[serde(default)]
    pub compat: CompatibilityMatrix,
}

impl SceneDescription {
    /// Checks the staging invariants against the mesh the scene was built
    /// from.
    pub fn validate(&self, mesh: &LabeledMesh) -> Result<(), SceneError> {
        if !(self.camera.vertical_fov_deg > 10.0 && self.camera.vertical_fov_deg < 120.0) {
            return Err(SceneError::InvalidFov(self.camera.vertical_fov_deg));
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            return Err(SceneError::BadImageSize {
                width: self.camera.width,
                height: self.camera.height,
            });
        }
        let limit = 1.1 * mesh.bounding_radius();
        for (index, spec) in self.damages.iter().enumerate() {
            let distance = spec.center.length();
            if distance > limit {
                return Err(SceneError::DamageCenterTooFar {
                    index,
                    distance,
                    limit,
                });
            }
        }
        self.paint.validate()?;
        Ok(())
    }
}

/// A scene ready to render: the displaced mesh, its description, and the
/// loaded environment.
#[derive(Debug, Clone)]
pub struct StagedScene {
    pub mesh: LabeledMesh,
    pub desc: SceneDescription,
    pub environment: Environment,
}

/// Assembles one scene around an optional primary damage.
///
/// The camera orbits the primary impact point (or a randomly chosen surface
/// point for damage-free scenes), follow-up damages are drawn from the
/// vertices visible to the placed camera, dents displace the mesh in
/// application order, and every damage receives a seed derived from
/// `image_seed` and its position in that order.
pub fn sample_scene<R: Rng>(
    base_mesh: &LabeledMesh,
    primary: Option<&DamagePlan>,
    opts: &StagingOptions<'_>,
    image_seed: u64,
    model_id: &str,
    rng: &mut R,
) -> Result<StagedScene, SceneError> {
    opts.camera.validate()?;
    opts.palette.validate()?;
    if opts.environments.is_empty() {
        return Err(SceneError::EmptyEnvironmentPool);
    }

    let mut damages: Vec<DamageSpec> = Vec::new();
    let mut damage_parts: Vec<u8> = Vec::new();
    let mut mesh = base_mesh.clone();

    let aim_point = match primary {
        Some(plan) => {
            let mut spec = plan.spec;
            spec.seed = derive_seed(image_seed, streams::DAMAGE_BASE);
            if spec.dtype == DamageType::Dent {
                mesh = dent_displace(&mesh, &spec, &spec.context())?;
            }
            damages.push(spec);
            damage_parts.push(plan.part_id);
            spec.center
        }
        None => {
            let parts: Vec<u8> = mesh.present_parts().collect();
            let part_id = parts[rng.random_range(0..parts.len())];
            let vertex = mesh.sample_part_vertex(part_id, rng)?;
            mesh.vertices[vertex as usize]
        }
    };

    let distance = opts.camera.distance.sample(rng);
    let yaw = opts.camera.yaw_deg.sample(rng);
    let pitch = opts.camera.pitch_deg.sample(rng);
    let position = place_camera(aim_point, distance, yaw, pitch)?;
    let camera = aim_camera(
        position,
        aim_point,
        opts.camera.vertical_fov_deg,
        opts.camera.width,
        opts.camera.height,
    )?;
    let jitter_yaw = opts.camera.jitter_deg.sample(rng);
    let jitter_pitch = opts.camera.jitter_deg.sample(rng);
    let camera = jitter_camera(&camera, jitter_yaw, jitter_pitch)?;

    if primary.is_some() {
        let max_distance = opts.camera.max_distance_factor * distance;
        let candidates = visible_damage_candidates(&mesh, &camera, opts.compat, max_distance);
        let followups = secondary_damage_chain(&mesh, &candidates, opts.compat, opts.ranges, rng);
        for mut spec in followups {
            spec.seed = derive_seed(image_seed, streams::DAMAGE_BASE + damages.len() as u64);
            if spec.dtype == DamageType::Dent {
                mesh = dent_displace(&mesh, &spec, &spec.context())?;
            }
            damages.push(spec);
            damage_parts.push(0);
        }
    }

    let environment = opts.environments[rng.random_range(0..opts.environments.len())].clone();
    let paint = opts.palette.entries[rng.random_range(0..opts.palette.entries.len())].clone();

    let desc = SceneDescription {
        model_id: model_id.to_string(),
        seed: image_seed,
        camera,
        damages,
        damage_parts,
        environment: environment.describe(),
        paint,
        compat: opts.compat.clone(),
    };
    desc.validate(&mesh)?;
    Ok(StagedScene {
        mesh,
        desc,
        environment,
    })
}
