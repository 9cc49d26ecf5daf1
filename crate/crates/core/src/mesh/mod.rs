//! Part-labeled triangle meshes.
//!
//! A [`LabeledMesh`] is a triangle soup partitioned into submeshes, each
//! carrying the id of a car part from the [`PartRegistry`]. Meshes arrive as
//! Wavefront OBJ files whose named groups are mapped to parts by a JSON
//! sidecar, and are rescaled on load so the longest bounding-box axis spans
//! 4.5 model units.

mod obj;

pub use obj::{ObjData, ObjError};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damage::CompatibilityMatrix;
use crate::math::Vec3;
use crate::scene::Camera;

/// Length of the longest bounding-box axis after load-time normalization.
pub const NORMALIZED_EXTENT: f64 = 4.5;

/// Number of part entries a registry must define. Id 0 is reserved for
/// background pixels and never appears in the registry.
pub const PART_COUNT: usize = 27;

/// Coarse material category that decides which damage types a part accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialClass {
    Metal,
    Glass,
    Lamp,
    Other,
}

/// One registry entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartDef {
    pub id: u8,
    pub name: String,
    pub material: MaterialClass,
}

/// The fixed taxonomy of car parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRegistry {
    parts: Vec<PartDef>,
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("obj syntax: {0}")]
    Obj(#[from] ObjError),
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("group {0:?} carries faces but has no part label")]
    MissingLabel(String),
    #[error("label names unknown part {0:?}")]
    UnknownPart(String),
    #[error("part id {0} is not in the registry")]
    UnknownPartId(u8),
    #[error("registry must define exactly {expected} parts, found {found}")]
    RegistrySize { expected: usize, found: usize },
    #[error("registry ids must be contiguous from 1; id {0} breaks the sequence")]
    RegistryIds(u8),
    #[error("registry part names must be unique; {0:?} repeats")]
    DuplicatePartName(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("triangle references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { index: u32, count: usize },
    #[error("submesh ranges must tile the triangle list exactly")]
    BadSubmeshRanges,
    #[error("part {0} has no vertices in this mesh")]
    EmptyPart(u8),
}

impl PartRegistry {
    /// Loads a registry from its JSON representation.
    pub fn from_json_str(text: &str) -> Result<PartRegistry, MeshError> {
        let reg: PartRegistry = serde_json::from_str(text).map_err(|source| MeshError::Json {
            path: "<inline registry>".to_string(),
            source,
        })?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn from_json_file(path: &Path) -> Result<PartRegistry, MeshError> {
        let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reg: PartRegistry = serde_json::from_str(&text).map_err(|source| MeshError::Json {
            path: path.display().to_string(),
            source,
        })?;
        reg.validate()?;
        Ok(reg)
    }

    /// The registry bundled with the engine.
    pub fn builtin() -> PartRegistry {
        PartRegistry::from_json_str(include_str!("../../data/parts.json"))
            .expect("bundled registry is valid")
    }

    fn validate(&self) -> Result<(), MeshError> {
        if self.parts.len() != PART_COUNT {
            return Err(MeshError::RegistrySize {
                expected: PART_COUNT,
                found: self.parts.len(),
            });
        }
        let mut sorted: Vec<_> = self.parts.iter().collect();
        sorted.sort_by_key(|p| p.id);
        for (i, part) in sorted.iter().enumerate() {
            if part.id as usize != i + 1 {
                return Err(MeshError::RegistryIds(part.id));
            }
        }
        let mut names: Vec<_> = self.parts.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        for pair in names.windows(2) {
            if pair[0] == pair[1] {
                return Err(MeshError::DuplicatePartName(pair[0].to_string()));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: u8) -> Option<&PartDef> {
        self.parts.iter().find(|p| p.id == id)
    }

    pub fn by_name(&self, name: &str) -> Option<&PartDef> {
        self.parts.iter().find(|p| p.name == name)
    }

    pub fn material_of(&self, id: u8) -> Option<MaterialClass> {
        self.get(id).map(|p| p.material)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PartDef> {
        self.parts.iter()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

/// A contiguous run of triangles belonging to one part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Submesh {
    /// First triangle index of the run.
    pub start: u32,
    /// One past the last triangle index of the run.
    pub end: u32,
    pub part_id: u8,
    pub material: MaterialClass,
}

/// Triangle mesh with per-part submeshes and per-vertex normals.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub submeshes: Vec<Submesh>,
    tri_parts: Vec<u8>,
    part_vertices: BTreeMap<u8, Vec<u32>>,
    bounding_radius: f64,
}

impl LabeledMesh {
    /// Assembles and validates a mesh. Normals are recomputed from the
    /// geometry when `normals` is `None`.
    pub fn from_parts(
        vertices: Vec<Vec3>,
        normals: Option<Vec<Vec3>>,
        triangles: Vec<[u32; 3]>,
        submeshes: Vec<Submesh>,
    ) -> Result<LabeledMesh, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::DegenerateGeometry(
                "mesh has no triangles".to_string(),
            ));
        }
        for tri in &triangles {
            for &i in tri {
                if i as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        index: i,
                        count: vertices.len(),
                    });
                }
            }
        }
        let mut cursor = 0u32;
        for sm in &submeshes {
            if sm.start != cursor || sm.end < sm.start {
                return Err(MeshError::BadSubmeshRanges);
            }
            cursor = sm.end;
        }
        if cursor as usize != triangles.len() {
            return Err(MeshError::BadSubmeshRanges);
        }

        let normals = match normals {
            Some(n) if n.len() == vertices.len() => n,
            _ => area_weighted_normals(&vertices, &triangles),
        };

        let mut mesh = LabeledMesh {
            vertices,
            normals,
            triangles,
            submeshes,
            tri_parts: Vec::new(),
            part_vertices: BTreeMap::new(),
            bounding_radius: 0.0,
        };
        mesh.rebuild_lookup();
        mesh.bounding_radius = mesh
            .vertices
            .iter()
            .map(|v| v.length())
            .fold(0.0, f64::max);
        Ok(mesh)
    }

    fn rebuild_lookup(&mut self) {
        self.tri_parts = vec![0; self.triangles.len()];
        let mut part_vertices: BTreeMap<u8, Vec<u32>> = BTreeMap::new();
        for sm in &self.submeshes {
            for t in sm.start..sm.end {
                self.tri_parts[t as usize] = sm.part_id;
                for &v in &self.triangles[t as usize] {
                    part_vertices.entry(sm.part_id).or_default().push(v);
                }
            }
        }
        for list in part_vertices.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        self.part_vertices = part_vertices;
    }

    /// Recomputes normals, bounding radius, and lookup tables after vertex
    /// positions changed.
    pub fn refresh_geometry(&mut self) {
        self.normals = area_weighted_normals(&self.vertices, &self.triangles);
        self.bounding_radius = self
            .vertices
            .iter()
            .map(|v| v.length())
            .fold(0.0, f64::max);
    }

    /// Largest distance from the origin to any vertex.
    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    pub fn part_of_triangle(&self, tri: u32) -> u8 {
        self.tri_parts[tri as usize]
    }

    pub fn material_of_triangle(&self, tri: u32) -> MaterialClass {
        let part = self.tri_parts[tri as usize];
        self.submeshes
            .iter()
            .find(|sm| sm.part_id == part)
            .map(|sm| sm.material)
            .unwrap_or(MaterialClass::Other)
    }

    /// Unique vertex indices used by a part, in ascending order.
    pub fn part_vertices(&self, part_id: u8) -> &[u32] {
        self.part_vertices
            .get(&part_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Part ids present in this mesh, ascending.
    pub fn present_parts(&self) -> impl Iterator<Item = u8> + '_ {
        self.part_vertices.keys().copied()
    }

    pub fn material_of_part(&self, part_id: u8) -> Option<MaterialClass> {
        self.submeshes
            .iter()
            .find(|sm| sm.part_id == part_id)
            .map(|sm| sm.material)
    }

    /// Uniformly samples one vertex index of the given part.
    pub fn sample_part_vertex<R: rand::Rng>(
        &self,
        part_id: u8,
        rng: &mut R,
    ) -> Result<u32, MeshError> {
        let verts = self.part_vertices(part_id);
        if verts.is_empty() {
            return Err(MeshError::EmptyPart(part_id));
        }
        Ok(verts[rng.random_range(0..verts.len())])
    }

    /// Sums the areas of all triangles assigned to the part.
    pub fn part_surface_area(&self, part_id: u8) -> f64 {
        let mut area = 0.0;
        for sm in self.submeshes.iter().filter(|sm| sm.part_id == part_id) {
            for t in sm.start..sm.end {
                let [a, b, c] = self.triangles[t as usize];
                let (a, b, c) = (
                    self.vertices[a as usize],
                    self.vertices[b as usize],
                    self.vertices[c as usize],
                );
                area += 0.5 * (b - a).cross(c - a).length();
            }
        }
        area
    }

    /// Writes the mesh as an OBJ file plus a JSON label sidecar.
    ///
    /// Group names are the part names (suffixed when a part owns several
    /// submeshes), so loading the pair back reproduces this mesh exactly.
    pub fn save(
        &self,
        geometry_path: &Path,
        labels_path: &Path,
        registry: &PartRegistry,
    ) -> Result<(), MeshError> {
        let mut groups = Vec::new();
        let mut labels = BTreeMap::new();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for sm in &self.submeshes {
            let part = registry
                .get(sm.part_id)
                .ok_or(MeshError::UnknownPartId(sm.part_id))?;
            let n = seen.entry(part.name.clone()).or_insert(0);
            *n += 1;
            let group_name = if *n == 1 {
                part.name.clone()
            } else {
                format!("{}.{}", part.name, n)
            };
            labels.insert(group_name.clone(), part.name.clone());
            let tris = (sm.start..sm.end)
                .map(|t| self.triangles[t as usize])
                .collect();
            groups.push((group_name, tris));
        }
        let obj_text = obj::write_obj(&self.vertices, &self.normals, &groups);
        std::fs::write(geometry_path, obj_text).map_err(|source| MeshError::Io {
            path: geometry_path.display().to_string(),
            source,
        })?;
        let sidecar = LabelSidecar { groups: labels };
        let json = serde_json::to_string_pretty(&sidecar).expect("label serialization");
        std::fs::write(labels_path, json).map_err(|source| MeshError::Io {
            path: labels_path.display().to_string(),
            source,
        })?;
        Ok(())
    }
}

/// The JSON sidecar mapping OBJ group names to part names.
#[derive(Debug, Serialize, Deserialize)]
struct LabelSidecar {
    groups: BTreeMap<String, String>,
}

/// Loads an OBJ file and its label sidecar into a validated mesh.
///
/// The longest bounding-box axis is rescaled to [`NORMALIZED_EXTENT`].
pub fn load_labeled_mesh(
    geometry_path: &Path,
    labels_path: &Path,
    registry: &PartRegistry,
) -> Result<LabeledMesh, MeshError> {
    let obj_text = std::fs::read_to_string(geometry_path).map_err(|source| MeshError::Io {
        path: geometry_path.display().to_string(),
        source,
    })?;
    let labels_text = std::fs::read_to_string(labels_path).map_err(|source| MeshError::Io {
        path: labels_path.display().to_string(),
        source,
    })?;
    let sidecar: LabelSidecar =
        serde_json::from_str(&labels_text).map_err(|source| MeshError::Json {
            path: labels_path.display().to_string(),
            source,
        })?;
    build_labeled_mesh(&obj_text, &sidecar.groups, registry)
}

fn build_labeled_mesh(
    obj_text: &str,
    labels: &BTreeMap<String, String>,
    registry: &PartRegistry,
) -> Result<LabeledMesh, MeshError> {
    let data = obj::parse_obj(obj_text)?;

    let mut triangles = Vec::new();
    let mut submeshes = Vec::new();
    let mut corner_normals: Vec<Vec<u32>> = vec![Vec::new(); data.positions.len()];
    let mut any_missing_normal = data.normals.is_empty();

    for group in data.groups.iter().filter(|g| !g.faces.is_empty()) {
        let part_name = labels
            .get(&group.name)
            .ok_or_else(|| MeshError::MissingLabel(group.name.clone()))?;
        let part = registry
            .by_name(part_name)
            .ok_or_else(|| MeshError::UnknownPart(part_name.clone()))?;
        let start = triangles.len() as u32;
        for face in &group.faces {
            for i in 1..face.len() - 1 {
                let corners = [face[0], face[i], face[i + 1]];
                triangles.push([
                    corners[0].position,
                    corners[1].position,
                    corners[2].position,
                ]);
                for c in corners {
                    match c.normal {
                        Some(n) => corner_normals[c.position as usize].push(n),
                        None => any_missing_normal = true,
                    }
                }
            }
        }
        submeshes.push(Submesh {
            start,
            end: triangles.len() as u32,
            part_id: part.id,
            material: part.material,
        });
    }

    if triangles.is_empty() {
        return Err(MeshError::DegenerateGeometry(
            "no labeled faces".to_string(),
        ));
    }

    let mut vertices = data.positions;

    // Rescale so the longest bounding-box axis spans the normalized extent.
    let mut lo = Vec3::splat(f64::INFINITY);
    let mut hi = Vec3::splat(f64::NEG_INFINITY);
    for v in &vertices {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let extent = hi - lo;
    let longest = extent.x.max(extent.y).max(extent.z);
    if !(longest > 1e-9) {
        return Err(MeshError::DegenerateGeometry(
            "bounding box has no extent".to_string(),
        ));
    }
    let factor = NORMALIZED_EXTENT / longest;
    for v in &mut vertices {
        *v = *v * factor;
    }

    let normals = if any_missing_normal {
        None
    } else {
        let mut per_vertex = vec![Vec3::ZERO; vertices.len()];
        let mut ok = true;
        for (vi, refs) in corner_normals.iter().enumerate() {
            if refs.is_empty() {
                continue;
            }
            let mut sum = Vec3::ZERO;
            for &ni in refs {
                sum += data.normals[ni as usize];
            }
            match sum.try_normalized(1e-12) {
                Some(n) => per_vertex[vi] = n,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            for n in per_vertex.iter_mut() {
                if *n == Vec3::ZERO {
                    *n = Vec3::Z;
                }
            }
            Some(per_vertex)
        } else {
            None
        }
    };

    LabeledMesh::from_parts(vertices, normals, triangles, submeshes)
}

/// Area-weighted vertex normals: each face normal, scaled by twice the face
/// area, is accumulated onto its corners and the sums are normalized.
fn area_weighted_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::ZERO; vertices.len()];
    for tri in triangles {
        let (a, b, c) = (
            vertices[tri[0] as usize],
            vertices[tri[1] as usize],
            vertices[tri[2] as usize],
        );
        let fn_scaled = (b - a).cross(c - a);
        for &i in tri {
            acc[i as usize] += fn_scaled;
        }
    }
    acc.into_iter()
        .map(|n| n.try_normalized(1e-12).unwrap_or(Vec3::Z))
        .collect()
}

/// A point projected into image space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterPoint {
    /// Horizontal pixel coordinate, 0 at the left edge.
    pub u: f64,
    /// Vertical pixel coordinate, 0 at the top edge.
    pub v: f64,
    /// Euclidean distance from the camera position.
    pub depth: f64,
}

/// Projects a world point through a pinhole camera.
///
/// Returns `None` for points at or behind the camera plane.
pub fn project_to_raster(camera: &Camera, p: Vec3) -> Option<RasterPoint> {
    let local = camera.camera_space(p);
    if local.z <= 1e-12 {
        return None;
    }
    let half_v = (camera.vertical_fov_deg.to_radians() * 0.5).tan();
    let aspect = camera.width as f64 / camera.height as f64;
    let ndc_x = local.x / (local.z * half_v * aspect);
    let ndc_y = local.y / (local.z * half_v);
    Some(RasterPoint {
        u: (ndc_x + 1.0) * 0.5 * camera.width as f64,
        v: (1.0 - ndc_y) * 0.5 * camera.height as f64,
        depth: (p - camera.position).length(),
    })
}

/// A vertex eligible to receive follow-up damage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamageCandidate {
    pub vertex: u32,
    pub part_id: u8,
    pub material: MaterialClass,
}

/// Collects vertices that are inside the frame, close enough to the camera,
/// and sit on parts that accept at least one damage type.
///
/// Occlusion is deliberately ignored; a candidate behind the car body is
/// still a plausible damage site.
pub fn visible_damage_candidates(
    mesh: &LabeledMesh,
    camera: &Camera,
    compat: &CompatibilityMatrix,
    max_distance: f64,
) -> Vec<DamageCandidate> {
    let mut out = Vec::new();
    for part_id in mesh.present_parts() {
        let Some(material) = mesh.material_of_part(part_id) else {
            continue;
        };
        if compat.types_for(material).is_empty() {
            continue;
        }
        for &v in mesh.part_vertices(part_id) {
            let Some(r) = project_to_raster(camera, mesh.vertices[v as usize]) else {
                continue;
            };
            let in_frame = r.u >= 0.0
                && r.u < camera.width as f64
                && r.v >= 0.0
                && r.v < camera.height as f64;
            if in_frame && r.depth <= max_distance {
                out.push(DamageCandidate {
                    vertex: v,
                    part_id,
                    material,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_obj() -> String {
        "\
v -1 -1 0
v 1 -1 0
v 1 1 0
v -1 1 0
g lid
f 1 2 3
f 1 3 4
"
        .to_string()
    }

    fn lid_labels() -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("lid".to_string(), "hood".to_string());
        m
    }

    #[test]
    fn builtin_registry_is_valid_and_complete() {
        let reg = PartRegistry::builtin();
        assert_eq!(reg.len(), PART_COUNT);
        assert!(reg.get(0).is_none());
        let classes: std::collections::HashSet<_> =
            reg.iter().map(|p| p.material).collect();
        assert_eq!(classes.len(), 4);
    }

    #[test]
    fn load_normalizes_the_longest_axis() {
        let reg = PartRegistry::builtin();
        let mesh = build_labeled_mesh(&square_obj(), &lid_labels(), &reg).unwrap();
        // The square spans 2 units; every coordinate scales by 4.5 / 2.
        assert_eq!(mesh.vertices[0], Vec3::new(-2.25, -2.25, 0.0));
        assert_eq!(mesh.part_vertices(1), &[0, 1, 2, 3]);
    }

    #[test]
    fn missing_label_is_reported_with_the_group_name() {
        let reg = PartRegistry::builtin();
        let err = build_labeled_mesh(&square_obj(), &BTreeMap::new(), &reg).unwrap_err();
        assert!(matches!(err, MeshError::MissingLabel(name) if name == "lid"));
    }

    #[test]
    fn unknown_part_is_rejected() {
        let reg = PartRegistry::builtin();
        let mut labels = BTreeMap::new();
        labels.insert("lid".to_string(), "spoiler".to_string());
        let err = build_labeled_mesh(&square_obj(), &labels, &reg).unwrap_err();
        assert!(matches!(err, MeshError::UnknownPart(name) if name == "spoiler"));
    }

    #[test]
    fn recomputed_normals_are_unit_length() {
        let reg = PartRegistry::builtin();
        let mesh = build_labeled_mesh(&square_obj(), &lid_labels(), &reg).unwrap();
        for n in &mesh.normals {
            assert!((n.length() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sample_part_vertex_errors_on_absent_part() {
        let reg = PartRegistry::builtin();
        let mesh = build_labeled_mesh(&square_obj(), &lid_labels(), &reg).unwrap();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            mesh.sample_part_vertex(9, &mut rng),
            Err(MeshError::EmptyPart(9))
        ));
    }
}
