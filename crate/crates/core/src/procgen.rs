//! Built-in geometry: a single-part UV sphere for isolated damage studies
//! and a 27-part toy car used when no model files are configured.

use crate::math::Vec3;
use crate::mesh::{LabeledMesh, MeshError, PartRegistry, Submesh};

/// A UV sphere carrying one part label, with exact radial normals and no
/// rescaling, so damage footprints live in known coordinates.
pub fn uv_sphere(
    registry: &PartRegistry,
    part_name: &str,
    rings: u32,
    segments: u32,
    radius: f64,
) -> Result<LabeledMesh, MeshError> {
    assert!(rings >= 2 && segments >= 3, "sphere resolution too low");
    let part = registry
        .by_name(part_name)
        .ok_or_else(|| MeshError::UnknownPart(part_name.to_string()))?;
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut push = |n: Vec3| {
        vertices.push(n * radius);
        normals.push(n);
    };
    push(Vec3::Z);
    for ring in 1..rings {
        let theta = std::f64::consts::PI * ring as f64 / rings as f64;
        let (st, ct) = theta.sin_cos();
        for seg in 0..segments {
            let phi = std::f64::consts::TAU * seg as f64 / segments as f64;
            push(Vec3::new(st * phi.cos(), st * phi.sin(), ct));
        }
    }
    push(-Vec3::Z);
    let south = (vertices.len() - 1) as u32;
    let row = |ring: u32, seg: u32| 1 + (ring - 1) * segments + seg % segments;

    let mut triangles = Vec::new();
    for seg in 0..segments {
        triangles.push([0, row(1, seg), row(1, seg + 1)]);
    }
    for ring in 1..rings - 1 {
        for seg in 0..segments {
            let a = row(ring, seg);
            let b = row(ring, seg + 1);
            let c = row(ring + 1, seg);
            let d = row(ring + 1, seg + 1);
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    for seg in 0..segments {
        triangles.push([south, row(rings - 1, seg + 1), row(rings - 1, seg)]);
    }

    let submeshes = vec![Submesh {
        start: 0,
        end: triangles.len() as u32,
        part_id: part.id,
        material: part.material,
    }];
    LabeledMesh::from_parts(vertices, Some(normals), triangles, submeshes)
}

struct CarBuilder<'a> {
    registry: &'a PartRegistry,
    vertices: Vec<Vec3>,
    normals: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    submeshes: Vec<Submesh>,
}

/// Grid cells per model unit of panel edge.
const PANEL_DENSITY: f64 = 10.0;

impl<'a> CarBuilder<'a> {
    fn new(registry: &'a PartRegistry) -> CarBuilder<'a> {
        CarBuilder {
            registry,
            vertices: Vec::new(),
            normals: Vec::new(),
            triangles: Vec::new(),
            submeshes: Vec::new(),
        }
    }

    /// Adds a subdivided rectangular panel spanned by `du` and `dv` from
    /// `origin`, facing along `du x dv`.
    fn panel(&mut self, part_name: &str, origin: Vec3, du: Vec3, dv: Vec3) {
        let part = self
            .registry
            .by_name(part_name)
            .expect("builtin car uses registry names");
        let nu = ((du.length() * PANEL_DENSITY).ceil() as u32).max(2);
        let nv = ((dv.length() * PANEL_DENSITY).ceil() as u32).max(2);
        let normal = du.cross(dv).normalized();
        let base = self.vertices.len() as u32;
        for j in 0..=nv {
            for i in 0..=nu {
                let p = origin + du * (i as f64 / nu as f64) + dv * (j as f64 / nv as f64);
                self.vertices.push(p);
                self.normals.push(normal);
            }
        }
        let start = self.triangles.len() as u32;
        let at = |i: u32, j: u32| base + j * (nu + 1) + i;
        for j in 0..nv {
            for i in 0..nu {
                self.triangles
                    .push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
                self.triangles.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
            }
        }
        self.submeshes.push(Submesh {
            start,
            end: self.triangles.len() as u32,
            part_id: part.id,
            material: part.material,
        });
    }

    /// Same panel on both sides of the xz plane; `left` gets the +y copy.
    fn mirrored(
        &mut self,
        left: &str,
        right: &str,
        origin: Vec3,
        du: Vec3,
        dv: Vec3,
    ) {
        self.panel(left, origin, du, dv);
        let flip = |v: Vec3| Vec3::new(v.x, -v.y, v.z);
        self.panel(right, flip(origin), flip(dv), flip(du));
    }

    fn finish(self) -> Result<LabeledMesh, MeshError> {
        LabeledMesh::from_parts(
            self.vertices,
            Some(self.normals),
            self.triangles,
            self.submeshes,
        )
    }
}

/// A stylized sedan covering all 27 parts with flat, subdivided panels.
/// Its long axis spans exactly the normalized model extent.
pub fn toy_car(registry: &PartRegistry) -> Result<LabeledMesh, MeshError> {
    let mut b = CarBuilder::new(registry);
    let x = Vec3::X;
    let y = Vec3::Y;
    let z = Vec3::Z;

    // Top surfaces, front to back. Each (du, dv) pair is ordered so the
    // panel faces outward along du x dv.
    b.panel("hood", Vec3::new(0.95, -0.85, 0.92), x * 1.3, y * 1.7);
    b.panel(
        "windshield",
        Vec3::new(0.95, -0.75, 0.92),
        y * 1.5,
        Vec3::new(-0.4, 0.0, 0.5),
    );
    b.panel("roof", Vec3::new(-0.8, -0.7, 1.42), x * 1.35, y * 1.4);
    b.panel(
        "back_windshield",
        Vec3::new(-0.8, -0.75, 1.42),
        y * 1.5,
        Vec3::new(-0.45, 0.0, -0.5),
    );
    b.panel("trunk", Vec3::new(-2.25, -0.85, 0.92), x * 1.0, y * 1.7);

    // Front and back faces.
    b.panel(
        "front_bumper",
        Vec3::new(2.24, -0.9, 0.25),
        y * 1.8,
        z * 0.5,
    );
    b.panel(
        "back_bumper",
        Vec3::new(-2.25, -0.9, 0.25),
        z * 0.5,
        y * 1.8,
    );
    b.panel(
        "license_plate",
        Vec3::new(2.25, -0.25, 0.35),
        y * 0.5,
        z * 0.2,
    );
    b.mirrored(
        "headlight_left",
        "headlight_right",
        Vec3::new(2.24, 0.35, 0.78),
        y * 0.4,
        z * 0.12,
    );
    b.mirrored(
        "taillight_left",
        "taillight_right",
        Vec3::new(-2.25, 0.35, 0.78),
        z * 0.12,
        y * 0.4,
    );

    // Side panels; +y is the left side and mirrored() derives the right.
    b.mirrored(
        "front_door_left",
        "front_door_right",
        Vec3::new(-0.1, 0.9, 0.25),
        z * 0.67,
        x * 1.05,
    );
    b.mirrored(
        "back_door_left",
        "back_door_right",
        Vec3::new(-1.15, 0.9, 0.25),
        z * 0.67,
        x * 1.05,
    );
    b.mirrored(
        "front_fender_left",
        "front_fender_right",
        Vec3::new(0.95, 0.9, 0.25),
        z * 0.67,
        x * 1.3,
    );
    b.mirrored(
        "back_fender_left",
        "back_fender_right",
        Vec3::new(-2.25, 0.9, 0.25),
        z * 0.67,
        x * 1.1,
    );
    b.mirrored(
        "front_window_left",
        "front_window_right",
        Vec3::new(-0.05, 0.78, 0.95),
        z * 0.43,
        x * 0.55,
    );
    b.mirrored(
        "back_window_left",
        "back_window_right",
        Vec3::new(-1.05, 0.78, 0.95),
        z * 0.43,
        x * 0.9,
    );
    b.mirrored(
        "mirror_left",
        "mirror_right",
        Vec3::new(0.5, 1.0, 0.95),
        z * 0.1,
        x * 0.15,
    );

    // All four wheels share one part label.
    for cx in [1.55, -1.55] {
        b.panel(
            "wheel",
            Vec3::new(cx - 0.3, 0.91, 0.0),
            z * 0.55,
            x * 0.6,
        );
        b.panel(
            "wheel",
            Vec3::new(cx - 0.3, -0.91, 0.0),
            x * 0.6,
            z * 0.55,
        );
    }

    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MaterialClass;

    #[test]
    fn sphere_normals_are_radial_and_unit() {
        let registry = PartRegistry::builtin();
        let sphere = uv_sphere(&registry, "windshield", 16, 24, 2.0).unwrap();
        for (v, n) in sphere.vertices.iter().zip(&sphere.normals) {
            assert!((n.length() - 1.0).abs() < 1e-12);
            assert!((*v - *n * 2.0).length() < 1e-12);
        }
        assert_eq!(
            sphere.material_of_part(sphere.present_parts().next().unwrap()),
            Some(MaterialClass::Glass)
        );
    }

    #[test]
    fn toy_car_covers_every_part() {
        let registry = PartRegistry::builtin();
        let car = toy_car(&registry).unwrap();
        let present: Vec<u8> = car.present_parts().collect();
        assert_eq!(present.len(), 27);
        assert_eq!(present, (1..=27).collect::<Vec<u8>>());
    }

    #[test]
    fn toy_car_spans_the_normalized_extent() {
        let registry = PartRegistry::builtin();
        let car = toy_car(&registry).unwrap();
        let max_x = car.vertices.iter().map(|v| v.x).fold(f64::MIN, f64::max);
        let min_x = car.vertices.iter().map(|v| v.x).fold(f64::MAX, f64::min);
        assert!((max_x - min_x - crate::mesh::NORMALIZED_EXTENT).abs() < 1e-9);
    }

    #[test]
    fn panel_normals_face_outward() {
        let registry = PartRegistry::builtin();
        let car = toy_car(&registry).unwrap();
        // The hood faces up, so every hood vertex normal must point up.
        let hood_id = registry.by_name("hood").unwrap().id;
        for &v in car.part_vertices(hood_id) {
            assert!(car.normals[v as usize].z > 0.99);
        }
        // Mirrored side panels face away from the body on both sides.
        for (name, sign) in [("front_door_left", 1.0), ("front_door_right", -1.0)] {
            let id = registry.by_name(name).unwrap().id;
            for &v in car.part_vertices(id) {
                assert!(car.normals[v as usize].y * sign > 0.99);
            }
        }
    }
}
