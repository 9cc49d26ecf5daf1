//! Bounding volume hierarchy over mesh triangles for ray casting.

use crate::math::Vec3;
use crate::mesh::LabeledMesh;

/// One ray-triangle intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter of the intersection point.
    pub t: f64,
    /// Index into the mesh triangle list.
    pub tri: u32,
    /// Barycentric weight of the triangle's second vertex.
    pub u: f64,
    /// Barycentric weight of the triangle's third vertex.
    pub v: f64,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    min: Vec3,
    max: Vec3,
    /// Child node indices, `u32::MAX` for leaves.
    left: u32,
    right: u32,
    /// Triangle range into the permutation, used by leaves.
    start: u32,
    count: u32,
}

#[derive(Debug, Clone, Copy)]
struct TriData {
    v0: Vec3,
    e1: Vec3,
    e2: Vec3,
    centroid: Vec3,
    index: u32,
}

/// Median-split hierarchy. Triangles are copied out of the mesh at build
/// time so traversal touches one contiguous array.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    tris: Vec<TriData>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(mesh: &LabeledMesh) -> Bvh {
        let mut tris: Vec<TriData> = mesh
            .triangles
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let v0 = mesh.vertices[t[0] as usize];
                let v1 = mesh.vertices[t[1] as usize];
                let v2 = mesh.vertices[t[2] as usize];
                TriData {
                    v0,
                    e1: v1 - v0,
                    e2: v2 - v0,
                    centroid: (v0 + v1 + v2) / 3.0,
                    index: i as u32,
                }
            })
            .collect();
        let mut nodes = Vec::new();
        if !tris.is_empty() {
            let total = tris.len();
            build_node(&mut nodes, &mut tris, 0, total);
        }
        Bvh { nodes, tris }
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Nearest intersection with ray parameter in `(t_min, t_max)`.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = [0u32; 64];
        let mut top = 0usize;
        stack[top] = 0;
        top += 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if !slab_test(node, origin, inv, t_min, limit) {
                continue;
            }
            if node.left == u32::MAX {
                for tri in &self.tris[node.start as usize..(node.start + node.count) as usize] {
                    if let Some((t, u, v)) = moller_trumbore(tri, origin, dir, t_min, limit) {
                        limit = t;
                        best = Some(Hit {
                            t,
                            tri: tri.index,
                            u,
                            v,
                        });
                    }
                }
            } else {
                stack[top] = node.left;
                top += 1;
                stack[top] = node.right;
                top += 1;
            }
        }
        best
    }
}

fn slab_test(node: &Node, origin: Vec3, inv: Vec3, t_min: f64, t_max: f64) -> bool {
    let mut lo = t_min;
    let mut hi = t_max;
    for axis in 0..3 {
        let t1 = (node.min.component(axis) - origin.component(axis)) * inv.component(axis);
        let t2 = (node.max.component(axis) - origin.component(axis)) * inv.component(axis);
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    lo <= hi
}

fn moller_trumbore(
    tri: &TriData,
    origin: Vec3,
    dir: Vec3,
    t_min: f64,
    t_max: f64,
) -> Option<(f64, f64, f64)> {
    let p = dir.cross(tri.e2);
    let det = tri.e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = origin - tri.v0;
    let u = s.dot(p) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(tri.e1);
    let v = dir.dot(q) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = tri.e2.dot(q) * inv_det;
    if t > t_min && t < t_max {
        Some((t, u, v))
    } else {
        None
    }
}

fn build_node(nodes: &mut Vec<Node>, tris: &mut [TriData], start: usize, count: usize) -> u32 {
    let slice = &tris[start..start + count];
    let mut min = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut max = -min;
    for tri in slice {
        for corner in [tri.v0, tri.v0 + tri.e1, tri.v0 + tri.e2] {
            min = min.min(corner);
            max = max.max(corner);
        }
    }
    let idx = nodes.len() as u32;
    nodes.push(Node {
        min,
        max,
        left: u32::MAX,
        right: u32::MAX,
        start: start as u32,
        count: count as u32,
    });
    if count <= LEAF_SIZE {
        return idx;
    }
    let mut centroid_min = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut centroid_max = -centroid_min;
    for tri in &tris[start..start + count] {
        centroid_min = centroid_min.min(tri.centroid);
        centroid_max = centroid_max.max(tri.centroid);
    }
    let extent = centroid_max - centroid_min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    if extent.component(axis) < 1e-12 {
        return idx;
    }
    let mid = count / 2;
    tris[start..start + count].select_nth_unstable_by(mid, |a, b| {
        a.centroid
            .component(axis)
            .partial_cmp(&b.centroid.component(axis))
            .expect("finite centroids")
    });
    let left = build_node(nodes, tris, start, mid);
    let right = build_node(nodes, tris, start + mid, count - mid);
    nodes[idx as usize].left = left;
    nodes[idx as usize].right = right;
    nodes[idx as usize].count = 0;
    idx
}
