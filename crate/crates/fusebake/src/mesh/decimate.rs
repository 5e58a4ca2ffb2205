//! Quadric error simplification by iterative edge collapse.

use std::collections::{BinaryHeap, HashMap, HashSet};

use nalgebra::Vector4;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::mesh::TriangleMesh;

/// Symmetric 4x4 quadric form accumulating squared point-to-plane
/// distances, stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadric([f64; 10]);

impl Quadric {
    /// The zero quadric.
    pub fn zero() -> Self {
        Self([0.0; 10])
    }

    /// Quadric of the plane `normal . p + d = 0`, scaled by `weight`.
    /// `normal` must be unit length for the error to be a metric distance.
    pub fn from_plane(normal: Vec3, d: f64, weight: f64) -> Self {
        let (a, b, c) = (normal.x, normal.y, normal.z);
        Self([
            weight * a * a,
            weight * a * b,
            weight * a * c,
            weight * a * d,
            weight * b * b,
            weight * b * c,
            weight * b * d,
            weight * c * c,
            weight * c * d,
            weight * d * d,
        ])
    }

    /// Accumulated squared distance of a point to the quadric's planes.
    pub fn evaluate(&self, p: Vec3) -> f64 {
        let q = self.0;
        let v = Vector4::new(p.x, p.y, p.z, 1.0);
        let row0 = q[0] * v.x + q[1] * v.y + q[2] * v.z + q[3];
        let row1 = q[1] * v.x + q[4] * v.y + q[5] * v.z + q[6];
        let row2 = q[2] * v.x + q[5] * v.y + q[7] * v.z + q[8];
        let row3 = q[3] * v.x + q[6] * v.y + q[8] * v.z + q[9];
        v.x * row0 + v.y * row1 + v.z * row2 + row3
    }

    /// Upper-left 3x3 block.
    fn a_matrix(&self) -> Mat3 {
        let q = self.0;
        Mat3::new(q[0], q[1], q[2], q[1], q[4], q[5], q[2], q[5], q[7])
    }

    /// Linear part (last column of the 3x4 block).
    fn b_vector(&self) -> Vec3 {
        Vec3::new(self.0[3], self.0[6], self.0[8])
    }
}

impl std::ops::Add for Quadric {
    type Output = Quadric;
    fn add(self, rhs: Quadric) -> Quadric {
        let mut out = [0.0; 10];
        for i in 0..10 {
            out[i] = self.0[i] + rhs.0[i];
        }
        Quadric(out)
    }
}

impl std::ops::AddAssign for Quadric {
    fn add_assign(&mut self, rhs: Quadric) {
        for i in 0..10 {
            self.0[i] += rhs.0[i];
        }
    }
}

/// Optimal placement and cost for collapsing an edge under the combined
/// quadric of its endpoints.
///
/// Solves for the minimum of the quadric form when its quadratic part is
/// well conditioned; otherwise falls back to the cheapest of the two
/// endpoints and their midpoint, preferring them in that order on ties.
/// The cost is never negative.
pub fn edge_collapse_cost(q: &Quadric, p1: Vec3, p2: Vec3) -> (Vec3, f64) {
    let a = q.a_matrix();
    let scale = a.abs().max();
    if scale > 0.0 {
        let det = a.determinant();
        if det.abs() > 1e-9 * scale.powi(3) {
            if let Some(p) = a.lu().solve(&(-q.b_vector())) {
                if p.iter().all(|c| c.is_finite()) {
                    return (p, q.evaluate(p).max(0.0));
                }
            }
        }
    }
    let mid = (p1 + p2) / 2.0;
    let mut best = (p1, q.evaluate(p1).max(0.0));
    for cand in [p2, mid] {
        let cost = q.evaluate(cand).max(0.0);
        if cost < best.1 {
            best = (cand, cost);
        }
    }
    best
}

/// Candidate collapse in the priority queue, ordered by ascending cost with
/// index tie-breaks so runs are reproducible.
struct Candidate {
    cost: f64,
    a: u32,
    b: u32,
    ver_a: u32,
    ver_b: u32,
    pos: Vec3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // reversed: BinaryHeap is a max-heap, we pop the cheapest edge
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
    }
}

/// Simplifies a mesh down to `ceil(rate * triangles)` triangles by greedy
/// quadric edge collapse.
///
/// Vertex quadrics accumulate area-weighted face planes; boundary edges add
/// a perpendicular penalty plane weighted by the squared edge length, which
/// pins open borders in place. Collapses that would pinch the surface (link
/// condition) or flip a neighbouring triangle are rejected. Stops early
/// only when no further collapse is possible.
///
/// Per-vertex colours are dropped; resample them on the simplified mesh.
pub fn decimate(mesh: &TriangleMesh, rate: f64) -> Result<TriangleMesh> {
    if !rate.is_finite() || rate <= 0.0 || rate > 1.0 {
        return Err(Error::InvalidRate { rate });
    }
    mesh.validate()?;
    let n_faces = mesh.triangles.len();
    let target = (rate * n_faces as f64).ceil() as usize;
    if target >= n_faces {
        return Ok(mesh.clone());
    }

    let mut positions = mesh.vertices.clone();
    let mut faces = mesh.triangles.clone();
    let mut alive_v = vec![true; positions.len()];
    let mut alive_f = vec![true; faces.len()];
    let mut version = vec![0u32; positions.len()];
    let mut incident: Vec<Vec<u32>> = vec![Vec::new(); positions.len()];
    for (f, t) in faces.iter().enumerate() {
        for &v in t {
            incident[v as usize].push(f as u32);
        }
    }

    let mut quadrics = initial_quadrics(&positions, &faces);
    let mut live = n_faces;
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();

    let push_edge = |heap: &mut BinaryHeap<Candidate>,
                     quadrics: &[Quadric],
                     positions: &[Vec3],
                     version: &[u32],
                     a: u32,
                     b: u32| {
        let (a, b) = (a.min(b), a.max(b));
        let q = quadrics[a as usize] + quadrics[b as usize];
        let (pos, cost) = edge_collapse_cost(&q, positions[a as usize], positions[b as usize]);
        heap.push(Candidate {
            cost,
            a,
            b,
            ver_a: version[a as usize],
            ver_b: version[b as usize],
            pos,
        });
    };

    let mut progressed = true;
    while live > target && progressed {
        // (re)seed the queue with every live edge; later rounds only happen
        // when the queue drained before reaching the target
        heap.clear();
        let mut seen = HashSet::new();
        for (f, t) in faces.iter().enumerate() {
            if !alive_f[f] {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if seen.insert((a.min(b), a.max(b))) {
                    push_edge(&mut heap, &quadrics, &positions, &version, a, b);
                }
            }
        }
        progressed = false;

        while live > target {
            let Some(c) = heap.pop() else { break };
            let (a, b) = (c.a as usize, c.b as usize);
            if !alive_v[a]
                || !alive_v[b]
                || version[a] != c.ver_a
                || version[b] != c.ver_b
            {
                continue;
            }
            if !collapse_is_legal(&positions, &faces, &alive_f, &incident, c.a, c.b, c.pos) {
                continue;
            }

            // collapse b into a at the optimal position
            positions[a] = c.pos;
            let qb = quadrics[b];
            quadrics[a] += qb;
            alive_v[b] = false;
            version[a] += 1;
            version[b] += 1;

            let b_faces = std::mem::take(&mut incident[b]);
            for f in b_faces {
                let fi = f as usize;
                if !alive_f[fi] {
                    continue;
                }
                let t = &mut faces[fi];
                if t.contains(&c.a) {
                    alive_f[fi] = false;
                    live -= 1;
                } else {
                    for v in t.iter_mut() {
                        if *v == c.b {
                            *v = c.a;
                        }
                    }
                    incident[a].push(f);
                }
            }
            incident[a].retain(|&f| alive_f[f as usize]);

            let mut neighbours: Vec<u32> = incident[a]
                .iter()
                .flat_map(|&f| faces[f as usize])
                .filter(|&v| v != c.a)
                .collect();
            neighbours.sort_unstable();
            neighbours.dedup();
            for n in neighbours {
                push_edge(&mut heap, &quadrics, &positions, &version, c.a, n);
            }
            progressed = true;
        }
    }

    let mut out = TriangleMesh::new();
    out.vertices = positions;
    out.triangles = faces
        .into_iter()
        .zip(alive_f)
        .filter_map(|(t, alive)| alive.then_some(t))
        .collect();
    out.compact();
    Ok(out)
}

/// Vertex quadrics from area-weighted face planes plus boundary penalties.
fn initial_quadrics(positions: &[Vec3], faces: &[[u32; 3]]) -> Vec<Quadric> {
    let mut quadrics = vec![Quadric::zero(); positions.len()];
    let mut edge_faces: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    for (f, t) in faces.iter().enumerate() {
        let [a, b, c] = [
            positions[t[0] as usize],
            positions[t[1] as usize],
            positions[t[2] as usize],
        ];
        let cross = (b - a).cross(&(c - a));
        let norm = cross.norm();
        if norm > 1e-12 {
            let n = cross / norm;
            let q = Quadric::from_plane(n, -n.dot(&a), norm / 2.0);
            for &v in t {
                quadrics[v as usize] += q;
            }
        }
        for k in 0..3 {
            let (x, y) = (t[k], t[(k + 1) % 3]);
            let e = edge_faces.entry((x.min(y), x.max(y))).or_insert((0, f as u32));
            e.0 += 1;
        }
    }
    // open border edges resist motion off their line
    for (&(a, b), &(count, f)) in &edge_faces {
        if count != 1 {
            continue;
        }
        let t = faces[f as usize];
        let [p0, p1, p2] = [
            positions[t[0] as usize],
            positions[t[1] as usize],
            positions[t[2] as usize],
        ];
        let face_n = (p1 - p0).cross(&(p2 - p0));
        let pa = positions[a as usize];
        let pb = positions[b as usize];
        let edge = pb - pa;
        let len2 = edge.norm_squared();
        let perp = face_n.cross(&edge);
        let norm = perp.norm();
        if norm > 1e-12 && len2 > 0.0 {
            let n = perp / norm;
            let q = Quadric::from_plane(n, -n.dot(&pa), len2);
            quadrics[a as usize] += q;
            quadrics[b as usize] += q;
        }
    }
    quadrics
}

/// Whether collapsing `b` into `a` at `pos` keeps the mesh manifold and
/// does not flip any surviving triangle.
fn collapse_is_legal(
    positions: &[Vec3],
    faces: &[[u32; 3]],
    alive_f: &[bool],
    incident: &[Vec<u32>],
    a: u32,
    b: u32,
    pos: Vec3,
) -> bool {
    let mut shared_faces = 0usize;
    let mut shared_opposite: Vec<u32> = Vec::with_capacity(2);
    for &f in &incident[a as usize] {
        if !alive_f[f as usize] {
            continue;
        }
        let t = faces[f as usize];
        if t.contains(&b) {
            shared_faces += 1;
            if let Some(&o) = t.iter().find(|&&v| v != a && v != b) {
                shared_opposite.push(o);
            }
        }
    }
    if shared_faces == 0 || shared_faces > 2 {
        return false;
    }
    shared_opposite.sort_unstable();
    shared_opposite.dedup();

    // link condition: the common neighbours of a and b must be exactly the
    // vertices opposite the shared faces, otherwise the collapse pinches
    // the surface
    let neighbours_of = |v: u32| -> HashSet<u32> {
        incident[v as usize]
            .iter()
            .filter(|&&f| alive_f[f as usize])
            .flat_map(|&f| faces[f as usize])
            .filter(|&n| n != v)
            .collect()
    };
    let na = neighbours_of(a);
    let nb = neighbours_of(b);
    let common = na.intersection(&nb).count();
    if common != shared_opposite.len() {
        return false;
    }

    // no surviving triangle may flip or collapse to zero area
    for v in [a, b] {
        for &f in &incident[v as usize] {
            if !alive_f[f as usize] {
                continue;
            }
            let t = faces[f as usize];
            if t.contains(&a) && t.contains(&b) {
                continue; // dying face
            }
            let before = [
                positions[t[0] as usize],
                positions[t[1] as usize],
                positions[t[2] as usize],
            ];
            let moved = |i: u32| if i == a || i == b { pos } else { positions[i as usize] };
            let after = [moved(t[0]), moved(t[1]), moved(t[2])];
            let n_before = (before[1] - before[0]).cross(&(before[2] - before[0]));
            let n_after = (after[1] - after[0]).cross(&(after[2] - after[0]));
            if n_after.norm_squared() == 0.0 || n_before.dot(&n_after) <= 0.0 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn plane_quadric_measures_squared_distance() {
        let q = Quadric::from_plane(Vec3::new(0.0, 0.0, 1.0), 0.0, 1.0);
        assert_relative_eq!(q.evaluate(Vec3::new(5.0, -2.0, 3.0)), 9.0, epsilon = 1e-12);
        assert_relative_eq!(q.evaluate(Vec3::new(1.0, 1.0, 0.0)), 0.0, epsilon = 1e-12);
        let q2 = Quadric::from_plane(Vec3::new(0.0, 0.0, 1.0), -4.0, 2.0);
        assert_relative_eq!(q2.evaluate(Vec3::new(0.0, 0.0, 5.0)), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn corner_of_three_planes_is_the_optimal_point() {
        let q = Quadric::from_plane(Vec3::new(1.0, 0.0, 0.0), -1.0, 1.0)
            + Quadric::from_plane(Vec3::new(0.0, 1.0, 0.0), -2.0, 1.0)
            + Quadric::from_plane(Vec3::new(0.0, 0.0, 1.0), -3.0, 1.0);
        let (pos, cost) = edge_collapse_cost(&q, Vec3::zeros(), Vec3::new(5.0, 5.0, 5.0));
        assert_relative_eq!(pos, Vec3::new(1.0, 2.0, 3.0), epsilon = 1e-9);
        assert!(cost < 1e-12);
    }

    #[test]
    fn parallel_planes_fall_back_to_the_midpoint() {
        let q = Quadric::from_plane(Vec3::new(0.0, 0.0, 1.0), 0.0, 1.0)
            + Quadric::from_plane(Vec3::new(0.0, 0.0, 1.0), -2.0, 1.0);
        let (pos, cost) = edge_collapse_cost(&q, Vec3::zeros(), Vec3::new(0.0, 0.0, 2.0));
        assert_relative_eq!(pos, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        assert_relative_eq!(cost, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_fallback_prefers_first_endpoint_on_ties() {
        let q = Quadric::from_plane(Vec3::new(0.0, 0.0, 1.0), 0.0, 1.0);
        // both endpoints and the midpoint lie on the plane: zero cost each
        let (pos, cost) = edge_collapse_cost(&q, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0));
        assert_relative_eq!(pos, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(cost, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn decimate_validates_rate() {
        let m = TriangleMesh::planar_grid(2, 2, 1.0).unwrap();
        assert!(matches!(decimate(&m, 0.0), Err(Error::InvalidRate { .. })));
        assert!(matches!(decimate(&m, 1.5), Err(Error::InvalidRate { .. })));
        assert!(matches!(decimate(&m, f64::NAN), Err(Error::InvalidRate { .. })));
    }

    #[test]
    fn rate_one_returns_the_mesh_unchanged() {
        let m = TriangleMesh::planar_grid(5, 5, 2.0).unwrap();
        let d = decimate(&m, 1.0).unwrap();
        assert_eq!(d.triangles.len(), m.triangles.len());
        assert_eq!(d.vertices.len(), m.vertices.len());
    }

    #[test]
    fn planar_grid_stays_planar_and_keeps_area() {
        let m = TriangleMesh::planar_grid(20, 20, 10.0).unwrap();
        let target = (0.25 * m.triangles.len() as f64).ceil() as usize;
        let d = decimate(&m, 0.25).unwrap();
        d.validate().unwrap();
        assert!(d.triangles.len() <= target);
        assert!(d.triangles.len() >= target - 1);
        for v in &d.vertices {
            assert!(v.z.abs() < 1e-9, "vertex left the plane by {}", v.z);
        }
        assert_relative_eq!(d.surface_area(), m.surface_area(), max_relative = 1e-9);
    }

    #[test]
    fn closed_sphere_stays_closed_after_decimation() {
        use crate::mesh::marching_cubes;
        use crate::volume::{TsdfVolume, VolumeConfig};

        let cfg = VolumeConfig::new(24, 24, 240.0, Vec3::zeros()).unwrap();
        let mut vol = TsdfVolume::new(cfg).unwrap();
        let center = Vec3::new(120.0, 120.0, 120.0);
        vol.fill_from_sdf(|p| (p - center).norm() - 70.3);
        let m = marching_cubes(&vol, 0.0).unwrap();
        let d = decimate(&m, 0.3).unwrap();
        d.validate().unwrap();
        assert!(d.triangles.len() < m.triangles.len() / 2);

        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &d.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(counts.values().all(|&c| c == 2), "decimated sphere not watertight");

        // vertices stay near the sphere
        for v in &d.vertices {
            assert!(((v - center).norm() - 70.3).abs() < 15.0);
        }
    }

    #[test]
    fn decimation_is_deterministic() {
        let m = TriangleMesh::planar_grid(15, 12, 7.0).unwrap();
        let a = decimate(&m, 0.2).unwrap();
        let b = decimate(&m, 0.2).unwrap();
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.triangles, b.triangles);
    }
}
