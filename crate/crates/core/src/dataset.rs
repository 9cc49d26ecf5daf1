//! Dataset generation: configuration, the per-image pipeline, manifest
//! bookkeeping, statistics, and validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damage::{
    sample_damage_plan, sample_damage_plan_for_type, CompatibilityMatrix, DamageError, DamagePlan,
    DamageType, ParameterRanges, ALL_DAMAGE_TYPES,
};
use crate::mesh::{load_labeled_mesh, LabeledMesh, MeshError, PartRegistry, PART_COUNT};
use crate::procgen;
use crate::render::{render, Quality, RenderError, RenderOutput};
use crate::rng::{derive_seed, streams};
use crate::scene::{
    aim_camera, builtin_environments, environment_pool, place_camera, sample_scene, CameraRanges,
    Environment, PaintPalette, SceneDescription, SceneError, StagedScene, StagingOptions,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{failed} of {total} images failed to generate")]
    Partial { failed: usize, total: usize },
    #[error("dataset validation found {0} problems")]
    Invalid(usize),
    #[error("image index {index} is outside the configured count {count}")]
    IndexOutOfRange { index: u32, count: u32 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Damage(#[from] DamageError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl DatasetError {
    /// Process exit code: 1 for configuration problems, 2 for partial or
    /// invalid output, 3 for I/O and pipeline failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            DatasetError::Config(_) | DatasetError::Parse { .. } => 1,
            DatasetError::Partial { .. }
            | DatasetError::Invalid(_)
            | DatasetError::IndexOutOfRange { .. } => 2,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One source mesh referenced by the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSource {
    pub id: String,
    pub geometry: PathBuf,
    pub labels: PathBuf,
}

/// Dataset split fractions; the test split takes the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.827,
            val: 0.082,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Complete description of one dataset run, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// Number of images to synthesize.
    pub count: u32,
    /// Root seed; every image derives its own seed from this and its index.
    pub seed: u64,
    /// Fraction of images rendered without any damage, taken from the front
    /// of the index range.
    pub damage_free_fraction: f64,
    pub quality: Quality,
    /// Source meshes, cycled per image. Empty uses the built-in car.
    pub models: Vec<ModelSource>,
    /// Part registry JSON; omit for the built-in 27-part registry.
    pub parts: Option<PathBuf>,
    /// Paint palette JSON; omit for the built-in palette.
    pub palette: Option<PathBuf>,
    /// Directory of 2:1 panoramas; omit for the built-in skies.
    pub environments: Option<PathBuf>,
    pub splits: SplitFractions,
    pub camera: CameraRanges,
    pub ranges: ParameterRanges,
    pub compat: CompatibilityMatrix,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            count: 8,
            seed: 0,
            damage_free_fraction: 0.1,
            quality: Quality::Full,
            models: Vec::new(),
            parts: None,
            palette: None,
            environments: None,
            splits: SplitFractions::default(),
            camera: CameraRanges::default(),
            ranges: ParameterRanges::default(),
            compat: CompatibilityMatrix::default(),
        }
    }
}

impl GenerationConfig {
    /// Reads a TOML configuration and resolves its relative paths against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<GenerationConfig, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut config: GenerationConfig =
            toml::from_str(&text).map_err(|e| DatasetError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for model in &mut config.models {
            resolve(&mut model.geometry);
            resolve(&mut model.labels);
        }
        if let Some(p) = &mut config.parts {
            resolve(p);
        }
        if let Some(p) = &mut config.palette {
            resolve(p);
        }
        if let Some(p) = &mut config.environments {
            resolve(p);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.count == 0 {
            return Err(DatasetError::Config("count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.damage_free_fraction) {
            return Err(DatasetError::Config(format!(
                "damage_free_fraction {} is outside [0, 1]",
                self.damage_free_fraction
            )));
        }
        let s = &self.splits;
        if s.train < 0.0 || s.val < 0.0 || s.train + s.val > 1.0 + 1e-12 {
            return Err(DatasetError::Config(format!(
                "split fractions train={} val={} must be non-negative and sum to at most 1",
                s.train, s.val
            )));
        }
        self.camera
            .validate()
            .map_err(|e| DatasetError::Config(e.to_string()))?;
        self.ranges.validate().map_err(DatasetError::Config)?;
        let mut ids = std::collections::BTreeSet::new();
        for model in &self.models {
            if model.id.is_empty() {
                return Err(DatasetError::Config("model id must not be empty".into()));
            }
            if !ids.insert(&model.id) {
                return Err(DatasetError::Config(format!(
                    "duplicate model id {:?}",
                    model.id
                )));
            }
        }
        Ok(())
    }
}

/// Per-image entry in the dataset manifest. Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub index: u32,
    pub split: Split,
    pub model_id: String,
    pub seed: u64,
    /// Present when this image failed to generate; its files are absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_map: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damage_map: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_damage: Option<DamageType>,
    /// All damage types staged in this image, in application order.
    #[serde(default)]
    pub damage_types: Vec<DamageType>,
    /// Fraction of pixels with a non-zero damage code.
    pub damage_pixel_fraction: f64,
    /// Fraction of pixels with a non-zero part id.
    pub foreground_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub engine_version: String,
    /// Dataset root, always "." so a regenerated tree is byte-identical
    /// wherever it lives.
    pub output: String,
    pub count: u32,
    pub seed: u64,
    pub quality: Quality,
    pub resolution: [u32; 2],
    /// Snapshot of the run configuration, resolved paths included.
    pub config: GenerationConfig,
    pub records: Vec<ImageRecord>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<DatasetManifest, DatasetError> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
            path,
            message: e.to_string(),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        let path = dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(io_err(&path))
    }
}

pub struct GenerateReport {
    pub manifest: DatasetManifest,
    pub failed: usize,
}

struct LoadedAssets {
    registry: PartRegistry,
    palette: PaintPalette,
    environments: Vec<Environment>,
    models: Vec<(String, LabeledMesh)>,
}

fn load_assets(config: &GenerationConfig) -> Result<LoadedAssets, DatasetError> {
    let registry = match &config.parts {
        Some(path) => PartRegistry::from_json_file(path)?,
        None => PartRegistry::builtin(),
    };
    let palette = match &config.palette {
        Some(path) => PaintPalette::from_json_file(path)?,
        None => PaintPalette::builtin(),
    };
    let environments = environment_pool(config.environments.as_deref())?;
    let mut models = Vec::new();
    if config.models.is_empty() {
        models.push(("builtin-car".to_string(), procgen::toy_car(&registry)?));
    } else {
        for source in &config.models {
            let mesh = load_labeled_mesh(&source.geometry, &source.labels, &registry)?;
            models.push((source.id.clone(), mesh));
        }
    }
    Ok(LoadedAssets {
        registry,
        palette,
        environments,
        models,
    })
}

fn split_of(index: u32, count: u32, splits: &SplitFractions) -> Split {
    let train_n = (splits.train * count as f64).round() as u32;
    let val_n = (splits.val * count as f64).round() as u32;
    if index < train_n {
        Split::Train
    } else if index < train_n.saturating_add(val_n) {
        Split::Val
    } else {
        Split::Test
    }
}

fn damage_free_count(config: &GenerationConfig) -> u32 {
    (config.damage_free_fraction * config.count as f64).round() as u32
}

/// Stages and renders one image by index. Shared by dataset generation and
/// single-image re-rendering so both produce identical pixels.
fn produce_image(
    config: &GenerationConfig,
    assets: &LoadedAssets,
    index: u32,
    force_type: Option<DamageType>,
) -> Result<(StagedScene, RenderOutput), DatasetError> {
    let image_seed = derive_seed(config.seed, index as u64);
    let (model_id, mesh) = &assets.models[index as usize % assets.models.len()];
    let primary: Option<DamagePlan> = if index < damage_free_count(config) {
        None
    } else {
        let mut plan_rng = ChaCha8Rng::seed_from_u64(derive_seed(image_seed, streams::PLAN));
        let plan = match force_type {
            Some(dtype) => sample_damage_plan_for_type(
                mesh,
                &config.compat,
                &config.ranges,
                dtype,
                &mut plan_rng,
            )?,
            None => sample_damage_plan(
                mesh,
                &assets.registry,
                &config.compat,
                &config.ranges,
                &mut plan_rng,
            )?,
        };
        Some(plan)
    };
    let opts = StagingOptions {
        camera: &config.camera,
        ranges: &config.ranges,
        compat: &config.compat,
        environments: &assets.environments,
        palette: &assets.palette,
    };
    let mut scene_rng = ChaCha8Rng::seed_from_u64(derive_seed(image_seed, streams::SCENE));
    let staged = sample_scene(
        mesh,
        primary.as_ref(),
        &opts,
        image_seed,
        model_id,
        &mut scene_rng,
    )?;
    let output = render(&staged, config.quality)?;
    Ok((staged, output))
}

fn fraction_nonzero(data: &[u8]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    data.iter().filter(|&&v| v != 0).count() as f64 / data.len() as f64
}

fn write_meta(path: &Path, desc: &SceneDescription) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(desc).expect("scene description serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// Generates the full dataset into `output`. Per-image failures are
/// recorded in the manifest instead of aborting the run; the report carries
/// how many occurred.
pub fn generate(config: &GenerationConfig, output: &Path) -> Result<GenerateReport, DatasetError> {
    config.validate()?;
    let assets = load_assets(config)?;
    for sub in ["images", "parts", "damage", "meta"] {
        let dir = output.join(sub);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }

    let mut records = Vec::with_capacity(config.count as usize);
    let mut failed = 0usize;
    for index in 0..config.count {
        let image_seed = derive_seed(config.seed, index as u64);
        let model_id = assets.models[index as usize % assets.models.len()].0.clone();
        let split = split_of(index, config.count, &config.splits);
        let stem = format!("{index:06}");
        match produce_image(config, &assets, index, None) {
            Ok((staged, out)) => {
                let image_rel = format!("images/{stem}.png");
                let parts_rel = format!("parts/{stem}.png");
                let damage_rel = format!("damage/{stem}.png");
                let meta_rel = format!("meta/{stem}.json");
                out.save_color_png(&output.join(&image_rel))?;
                out.save_part_map_png(&output.join(&parts_rel))?;
                out.save_damage_map_png(&output.join(&damage_rel))?;
                write_meta(&output.join(&meta_rel), &staged.desc)?;
                records.push(ImageRecord {
                    index,
                    split,
                    model_id,
                    seed: image_seed,
                    error: None,
                    image: Some(image_rel),
                    part_map: Some(parts_rel),
                    damage_map: Some(damage_rel),
                    meta: Some(meta_rel),
                    primary_damage: staged.desc.damages.first().map(|d| d.dtype),
                    damage_types: staged.desc.damages.iter().map(|d| d.dtype).collect(),
                    damage_pixel_fraction: fraction_nonzero(&out.damage_map),
                    foreground_fraction: fraction_nonzero(&out.part_map),
                });
            }
            Err(err) => {
                failed += 1;
                records.push(ImageRecord {
                    index,
                    split,
                    model_id,
                    seed: image_seed,
                    error: Some(err.to_string()),
                    image: None,
                    part_map: None,
                    damage_map: None,
                    meta: None,
                    primary_damage: None,
                    damage_types: Vec::new(),
                    damage_pixel_fraction: 0.0,
                    foreground_fraction: 0.0,
                });
            }
        }
    }

    let manifest = DatasetManifest {
        format_version: 1,
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        output: ".".to_string(),
        count: config.count,
        seed: config.seed,
        quality: config.quality,
        resolution: [config.camera.width, config.camera.height],
        config: config.clone(),
        records,
    };
    manifest.save(output)?;
    Ok(GenerateReport { manifest, failed })
}

/// Re-renders a single dataset image and writes it under `out_dir` using
/// the same file layout as a full run.
pub fn render_one(
    config: &GenerationConfig,
    index: u32,
    out_dir: &Path,
    force_type: Option<DamageType>,
) -> Result<ImageRecord, DatasetError> {
    config.validate()?;
    if index >= config.count {
        return Err(DatasetError::IndexOutOfRange {
            index,
            count: config.count,
        });
    }
    let assets = load_assets(config)?;
    let (staged, out) = produce_image(config, &assets, index, force_type)?;
    for sub in ["images", "parts", "damage", "meta"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let stem = format!("{index:06}");
    let image_rel = format!("images/{stem}.png");
    let parts_rel = format!("parts/{stem}.png");
    let damage_rel = format!("damage/{stem}.png");
    let meta_rel = format!("meta/{stem}.json");
    out.save_color_png(&out_dir.join(&image_rel))?;
    out.save_part_map_png(&out_dir.join(&parts_rel))?;
    out.save_damage_map_png(&out_dir.join(&damage_rel))?;
    write_meta(&out_dir.join(&meta_rel), &staged.desc)?;
    Ok(ImageRecord {
        index,
        split: split_of(index, config.count, &config.splits),
        model_id: staged.desc.model_id.clone(),
        seed: staged.desc.seed,
        error: None,
        image: Some(image_rel),
        part_map: Some(parts_rel),
        damage_map: Some(damage_rel),
        meta: Some(meta_rel),
        primary_damage: staged.desc.damages.first().map(|d| d.dtype),
        damage_types: staged.desc.damages.iter().map(|d| d.dtype).collect(),
        damage_pixel_fraction: fraction_nonzero(&out.damage_map),
        foreground_fraction: fraction_nonzero(&out.part_map),
    })
}

/// Statistics of one damage type over the images that contain it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    /// Images whose damage map contains this code.
    pub images_with: u32,
    /// Images where this type is the primary damage.
    pub images_primary: u32,
    pub pixel_fraction_mean: f64,
    /// 10th, 50th, and 90th percentile of the per-image pixel fraction.
    pub pixel_fraction_quantiles: [f64; 3],
    /// 16 equal bins of the per-image pixel fraction over [0, 0.2]; the
    /// last bin also catches anything larger.
    pub pixel_fraction_histogram: Vec<u32>,
}

pub const HISTOGRAM_BINS: usize = 16;
pub const HISTOGRAM_MAX: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_images: u32,
    pub ok_images: u32,
    pub failed_images: u32,
    pub split_counts: BTreeMap<String, u32>,
    pub per_type: BTreeMap<String, TypeStats>,
    /// Pixel co-occurrence counts indexed by part id (0 through 27), each
    /// row holding counts for damage codes 0 through 5.
    pub co_occurrence: Vec<[u64; 6]>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    sorted[pos.round() as usize]
}

/// Scans a generated dataset and aggregates its statistics from the
/// manifest and the mask files.
pub fn compute_stats(dir: &Path) -> Result<DatasetStats, DatasetError> {
    let manifest = DatasetManifest::load(dir)?;
    let mut split_counts = BTreeMap::new();
    let mut co = vec![[0u64; 6]; PART_COUNT + 1];
    let mut fractions: BTreeMap<DamageType, Vec<f64>> = BTreeMap::new();
    let mut images_with: BTreeMap<DamageType, u32> = BTreeMap::new();
    let mut images_primary: BTreeMap<DamageType, u32> = BTreeMap::new();
    let mut ok_images = 0u32;

    for record in &manifest.records {
        *split_counts.entry(record.split.name().to_string()).or_insert(0) += 1;
        if record.error.is_some() {
            continue;
        }
        ok_images += 1;
        if let Some(primary) = record.primary_damage {
            *images_primary.entry(primary).or_insert(0) += 1;
        }
        let (Some(parts_rel), Some(damage_rel)) = (&record.part_map, &record.damage_map) else {
            continue;
        };
        let (w, h, parts) = crate::render::load_mask_png(&dir.join(parts_rel))?;
        let (dw, dh, damage) = crate::render::load_mask_png(&dir.join(damage_rel))?;
        if (w, h) != (dw, dh) {
            return Err(DatasetError::Parse {
                path: dir.join(damage_rel),
                message: "mask sizes disagree".to_string(),
            });
        }
        let mut per_code = [0u64; 6];
        for (&p, &d) in parts.iter().zip(&damage) {
            let p = (p as usize).min(PART_COUNT);
            let d = (d as usize).min(5);
            co[p][d] += 1;
            per_code[d] += 1;
        }
        let total = (w as u64 * h as u64).max(1) as f64;
        for dtype in ALL_DAMAGE_TYPES {
            let count = per_code[dtype.code() as usize];
            if count > 0 {
                *images_with.entry(dtype).or_insert(0) += 1;
                fractions
                    .entry(dtype)
                    .or_default()
                    .push(count as f64 / total);
            }
        }
    }

    let mut per_type = BTreeMap::new();
    for dtype in ALL_DAMAGE_TYPES {
        let mut values = fractions.remove(&dtype).unwrap_or_default();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite fractions"));
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        let mut histogram = vec![0u32; HISTOGRAM_BINS];
        for &v in &values {
            let bin = ((v / HISTOGRAM_MAX) * HISTOGRAM_BINS as f64) as usize;
            histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
        }
        per_type.insert(
            dtype.name().to_string(),
            TypeStats {
                images_with: images_with.get(&dtype).copied().unwrap_or(0),
                images_primary: images_primary.get(&dtype).copied().unwrap_or(0),
                pixel_fraction_mean: mean,
                pixel_fraction_quantiles: [
                    quantile(&values, 0.1),
                    quantile(&values, 0.5),
                    quantile(&values, 0.9),
                ],
                pixel_fraction_histogram: histogram,
            },
        );
    }

    Ok(DatasetStats {
        total_images: manifest.count,
        ok_images,
        failed_images: manifest.records.len() as u32 - ok_images,
        split_counts,
        per_type,
        co_occurrence: co,
    })
}

/// Outcome of checking a generated dataset against its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checked_images: u32,
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Verifies that every recorded file exists, masks match the manifest
/// resolution, ids stay in range, and every damaged pixel sits on a part
/// whose material accepts that damage type.
pub fn validate_manifest(dir: &Path) -> Result<ValidationReport, DatasetError> {
    let manifest = DatasetManifest::load(dir)?;
    let registry = PartRegistry::builtin();
    let mut problems = Vec::new();
    let mut checked = 0u32;

    for record in &manifest.records {
        let tag = format!("image {:06}", record.index);
        if record.error.is_some() {
            continue;
        }
        checked += 1;
        if record.seed != derive_seed(manifest.seed, record.index as u64) {
            problems.push(format!(
                "{tag}: seed {} does not derive from base seed {}",
                record.seed, manifest.seed
            ));
        }
        let (Some(image_rel), Some(parts_rel), Some(damage_rel), Some(meta_rel)) = (
            &record.image,
            &record.part_map,
            &record.damage_map,
            &record.meta,
        ) else {
            problems.push(format!("{tag}: record is missing file paths"));
            continue;
        };
        if !dir.join(image_rel).is_file() {
            problems.push(format!("{tag}: missing color file {image_rel}"));
        }
        let meta_path = dir.join(meta_rel);
        let compat = match std::fs::read_to_string(&meta_path) {
            Ok(text) => match serde_json::from_str::<SceneDescription>(&text) {
                Ok(desc) => desc.compat,
                Err(e) => {
                    problems.push(format!("{tag}: unreadable metadata: {e}"));
                    CompatibilityMatrix::default()
                }
            },
            Err(e) => {
                problems.push(format!("{tag}: missing metadata {meta_rel}: {e}"));
                CompatibilityMatrix::default()
            }
        };
        let parts_path = dir.join(parts_rel);
        let damage_path = dir.join(damage_rel);
        let parts = match crate::render::load_mask_png(&parts_path) {
            Ok(m) => m,
            Err(e) => {
                problems.push(format!("{tag}: unreadable part map: {e}"));
                continue;
            }
        };
        let damage = match crate::render::load_mask_png(&damage_path) {
            Ok(m) => m,
            Err(e) => {
                problems.push(format!("{tag}: unreadable damage map: {e}"));
                continue;
            }
        };
        let expected = (manifest.resolution[0], manifest.resolution[1]);
        if (parts.0, parts.1) != expected || (damage.0, damage.1) != expected {
            problems.push(format!(
                "{tag}: mask size {}x{} does not match manifest resolution {}x{}",
                parts.0, parts.1, expected.0, expected.1
            ));
            continue;
        }
        for (i, (&p, &d)) in parts.2.iter().zip(&damage.2).enumerate() {
            if p as usize > PART_COUNT {
                problems.push(format!("{tag}: pixel {i} has part id {p} out of range"));
                break;
            }
            if d > 5 {
                problems.push(format!("{tag}: pixel {i} has damage code {d} out of range"));
                break;
            }
            if d != 0 {
                if p == 0 {
                    problems.push(format!(
                        "{tag}: pixel {i} has damage code {d} on the background"
                    ));
                    break;
                }
                let Some(material) = registry.material_of(p) else {
                    problems.push(format!("{tag}: pixel {i} has unknown part id {p}"));
                    break;
                };
                let Some(dtype) = DamageType::from_code(d) else {
                    problems.push(format!("{tag}: pixel {i} has unknown damage code {d}"));
                    break;
                };
                if !compat.allows(material, dtype) {
                    problems.push(format!(
                        "{tag}: pixel {i} pairs damage {dtype} with incompatible part {p}"
                    ));
                    break;
                }
            }
        }
    }
    Ok(ValidationReport {
        checked_images: checked,
        problems,
    })
}

/// Renders one damage type in isolation on a dense sphere and writes the
/// color frame plus both masks into `out_dir`. Returns the color file path.
pub fn preview_damage(
    dtype: DamageType,
    seed: u64,
    size: u32,
    out_dir: &Path,
) -> Result<PathBuf, DatasetError> {
    let registry = PartRegistry::builtin();
    let part_name = match dtype {
        DamageType::Dent | DamageType::Scratch | DamageType::Crack => "hood",
        DamageType::GlassShatter => "windshield",
        DamageType::BrokenLamp => "headlight_left",
    };
    let mut mesh = procgen::uv_sphere(&registry, part_name, 96, 192, 2.0)?;
    let compat = CompatibilityMatrix {
        metal: ALL_DAMAGE_TYPES.to_vec(),
        glass: ALL_DAMAGE_TYPES.to_vec(),
        lamp: ALL_DAMAGE_TYPES.to_vec(),
        other: Vec::new(),
    };
    let ranges = ParameterRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = sample_damage_plan_for_type(&mesh, &compat, &ranges, dtype, &mut rng)?;
    let mut spec = plan.spec;
    spec.seed = derive_seed(seed, streams::DAMAGE_BASE);
    if dtype == DamageType::Dent {
        mesh = crate::damage::dent_displace(&mesh, &spec, &spec.context())?;
    }

    let position = place_camera(spec.center, 2.5, 0.0, 0.0)?;
    let camera = aim_camera(position, spec.center, 60.0, size, size)?;
    let palette = PaintPalette::builtin();
    let environment = builtin_environments().remove(0);
    let desc = SceneDescription {
        model_id: format!("preview-{}", dtype.name()),
        seed,
        camera,
        damages: vec![spec],
        damage_parts: vec![plan.part_id],
        environment: environment.describe(),
        paint: palette.entries[0].clone(),
        compat,
    };
    let staged = StagedScene {
        mesh,
        desc,
        environment,
    };
    let out = render(&staged, Quality::Full)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let color = out_dir.join(format!("preview-{}.png", dtype.name()));
    out.save_color_png(&color)?;
    out.save_part_map_png(&out_dir.join(format!("preview-{}-parts.png", dtype.name())))?;
    out.save_damage_map_png(&out_dir.join(format!("preview-{}-damage.png", dtype.name())))?;
    Ok(color)
}
