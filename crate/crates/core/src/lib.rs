//! Core engine for synthesizing damaged-vehicle imagery.
//!
//! The pipeline takes part-labeled car meshes, applies procedurally generated
//! damage (dents, scratches, cracks, shattered glass, broken lamps), and
//! renders each staged scene with a built-in ray caster into a color image
//! plus pixel-exact part and damage segmentation masks. Every stage is
//! seeded, so a dataset regenerates byte for byte from its configuration.

pub mod damage;
pub mod dataset;
pub mod math;
pub mod mesh;
pub mod noise;
pub mod procgen;
pub mod render;
pub mod rng;
pub mod scene;

pub use damage::{
    AppliedDamage, CompatibilityMatrix, DamageError, DamageNoise, DamagePlan, DamageSpec,
    DamageType, ParameterRanges, Span,
};
pub use dataset::{
    DatasetError, DatasetManifest, DatasetStats, GenerationConfig, GenerateReport, ImageRecord,
    Split, ValidationReport,
};
pub use math::{Mat3, Vec3};
pub use mesh::{LabeledMesh, MaterialClass, MeshError, PartDef, PartRegistry};
pub use noise::{NoiseContext, NoiseParams, NoiseParamsError};
pub use render::{Quality, RenderError, RenderOutput, ShaderParams};
pub use scene::{
    Camera, CameraRanges, Environment, EnvironmentDesc, PaintEntry, PaintPalette, SceneDescription,
    SceneError, StagedScene, StagingOptions,
};
