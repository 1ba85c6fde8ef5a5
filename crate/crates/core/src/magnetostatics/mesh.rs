use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::image::equilibrium_height;
use crate::model::{PhysicalConstants, TrapSystem};

type V3 = Vector3<f64>;

/// Smallest panel count accepted by [`build_trap_mesh`].
pub const MIN_PANELS: usize = 300;
/// Default panel-count target.
pub const DEFAULT_PANELS: usize = 1500;
const OUTER_FRACTION: f64 = 0.05;
const FLOOR_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Floor,
    Wall,
    Collar,
    /// Outer side and bottom face closing the block.
    Outer,
}

/// Flat triangular or quadrilateral facet. The normal points out of the
/// superconductor into the vacuum region.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub vertices: Vec<V3>,
    pub centroid: V3,
    pub normal: V3,
    pub area: f64,
    pub diameter: f64,
    pub region: Region,
}

impl Panel {
    fn new(vertices: Vec<V3>, outward: V3, region: Region) -> Result<Self> {
        let tris = fan(&vertices);
        let mut area = 0.0;
        let mut centroid = V3::zeros();
        let mut normal = V3::zeros();
        for [a, b, c] in &tris {
            let cr = (b - a).cross(&(c - a));
            let ta = 0.5 * cr.norm();
            area += ta;
            centroid += ta * (a + b + c) / 3.0;
            normal += cr;
        }
        if !(area > 0.0) {
            return Err(Error::invalid("mesh", "degenerate zero-area panel"));
        }
        centroid /= area;
        let mut normal = normal.normalize();
        if normal.dot(&outward) < 0.0 {
            normal = -normal;
        }
        let mut diameter: f64 = 0.0;
        for (i, a) in vertices.iter().enumerate() {
            for b in &vertices[i + 1..] {
                diameter = diameter.max((a - b).norm());
            }
        }
        Ok(Self {
            vertices,
            centroid,
            normal,
            area,
            diameter,
            region,
        })
    }

    /// Fan triangulation of the facet.
    pub fn triangles(&self) -> Vec<[V3; 3]> {
        fan(&self.vertices)
    }

    /// Euclidean distance from `x` to the closed facet.
    pub fn distance_to(&self, x: &V3) -> f64 {
        self.triangles()
            .iter()
            .map(|t| (closest_point_on_triangle(x, t) - x).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

fn fan(v: &[V3]) -> Vec<[V3; 3]> {
    (1..v.len() - 1).map(|i| [v[0], v[i], v[i + 1]]).collect()
}

/// Closest point to `p` on triangle `t` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
fn closest_point_on_triangle(p: &V3, t: &[V3; 3]) -> V3 {
    let [a, b, c] = *t;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    /// Requested total panel count.
    pub target_panels: usize,
    /// Outer radius of the collar that stands in for the semi-infinite top
    /// face, in well radii.
    pub collar_factor: f64,
    /// Floor rings sit at ρ = L·sinh(c·s), so their spacing grows like
    /// √(L² + ρ²). L is given in units of the image-method equilibrium
    /// height.
    pub grading_length: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            target_panels: DEFAULT_PANELS,
            collar_factor: 4.0,
            grading_length: 1.0,
        }
    }
}

impl MeshOptions {
    pub fn with_panels(target_panels: usize) -> Self {
        Self {
            target_panels,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub panels: Vec<Panel>,
    pub well_radius: f64,
    pub well_depth: f64,
    pub collar_radius: f64,
    pub sectors: usize,
    pub floor_rings: usize,
    pub wall_rings: usize,
    pub collar_rings: usize,
    pub outer_rings: usize,
}

impl SurfaceMesh {
    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    pub fn region_area(&self, region: Region) -> f64 {
        self.panels.iter().filter(|p| p.region == region).map(|p| p.area).sum()
    }

    pub fn region_count(&self, region: Region) -> usize {
        self.panels.iter().filter(|p| p.region == region).count()
    }
}

/// Node positions `t(s) = sinh(c s)/sinh(c)` on [0, 1], finest at s = 0.
fn graded(n: usize, c: f64) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            if c < 1e-9 {
                s
            } else {
                (c * s).sinh() / c.sinh()
            }
        })
        .collect()
}

/// Discretizes the floor, the cylindrical wall, an annular collar on the
/// top face and the outer side and bottom that close the block. Sectors are
/// a multiple of 8 with a node at azimuth 0, so the
/// mesh has the reflection symmetries of both horizontal axes.
pub fn build_trap_mesh(trap: &TrapSystem, opts: &MeshOptions) -> Result<SurfaceMesh> {
    trap.validate()?;
    if opts.target_panels < MIN_PANELS {
        return Err(Error::invalid(
            "resolution",
            format!("{} panels requested, minimum is {MIN_PANELS}", opts.target_panels),
        ));
    }
    if !(opts.collar_factor > 1.0) {
        return Err(Error::invalid("collar_factor", "must exceed 1"));
    }
    require_positive("grading_length", opts.grading_length)?;

    let n = opts.target_panels as f64;
    let sectors = ((n / 0.83).sqrt() / 8.0).round().max(2.0) as usize * 8;
    let rings = (n / sectors as f64).round().max(6.0) as usize;
    let floor_rings = ((rings as f64) * FLOOR_FRACTION).round().max(3.0) as usize;
    let collar_rings = ((rings as f64) * 0.08).round().max(2.0) as usize;
    let side_rings = ((rings as f64) * OUTER_FRACTION).round().max(2.0) as usize;
    let bottom_rings = side_rings;
    let wall_rings = rings
        .saturating_sub(floor_rings + collar_rings + side_rings + bottom_rings)
        .max(3);

    let r_well = trap.well_radius;
    let depth = trap.well_depth;
    let r_collar = opts.collar_factor * r_well;
    // Closing the block keeps the net induced charge at zero, so the far
    // field decays like a dipole's.
    let z_bottom = -(opts.collar_factor - 1.0) * r_well;

    // The region under the particle is what the induced field is most
    // sensitive to; grade the floor towards the axis on the particle scale.
    let height = equilibrium_height(&trap.particle, &PhysicalConstants::default())
        .unwrap_or(0.1 * r_well)
        .min(0.5 * r_well);
    let length = opts.grading_length * height;
    let c_floor = (r_well / length).asinh();
    let floor_r: Vec<f64> = (0..=floor_rings)
        .map(|k| length * (c_floor * k as f64 / floor_rings as f64).sinh())
        .collect();
    let wall_z: Vec<f64> = graded(wall_rings, 1.5).iter().map(|t| t * depth).collect();
    let collar_r: Vec<f64> = graded(collar_rings, 2.0)
        .iter()
        .map(|t| r_well + t * (r_collar - r_well))
        .collect();

    let phi: Vec<f64> = (0..=sectors).map(|j| 2.0 * PI * j as f64 / sectors as f64).collect();
    let ring = |r: f64, j: usize, z: f64| V3::new(r * phi[j].cos(), r * phi[j].sin(), z);
    let up = V3::z();

    let mut panels = Vec::with_capacity(sectors * (floor_rings + wall_rings + collar_rings));
    for k in 0..floor_rings {
        for j in 0..sectors {
            let verts = if k == 0 {
                vec![V3::zeros(), ring(floor_r[1], j, 0.0), ring(floor_r[1], j + 1, 0.0)]
            } else {
                vec![
                    ring(floor_r[k], j, 0.0),
                    ring(floor_r[k + 1], j, 0.0),
                    ring(floor_r[k + 1], j + 1, 0.0),
                    ring(floor_r[k], j + 1, 0.0),
                ]
            };
            panels.push(Panel::new(verts, up, Region::Floor)?);
        }
    }
    for k in 0..wall_rings {
        for j in 0..sectors {
            let mid = 0.5 * (phi[j] + phi[j + 1]);
            let inward = -V3::new(mid.cos(), mid.sin(), 0.0);
            let verts = vec![
                ring(r_well, j, wall_z[k]),
                ring(r_well, j + 1, wall_z[k]),
                ring(r_well, j + 1, wall_z[k + 1]),
                ring(r_well, j, wall_z[k + 1]),
            ];
            panels.push(Panel::new(verts, inward, Region::Wall)?);
        }
    }
    for k in 0..collar_rings {
        for j in 0..sectors {
            let verts = vec![
                ring(collar_r[k], j, depth),
                ring(collar_r[k + 1], j, depth),
                ring(collar_r[k + 1], j + 1, depth),
                ring(collar_r[k], j + 1, depth),
            ];
            panels.push(Panel::new(verts, up, Region::Collar)?);
        }
    }

    let side_z: Vec<f64> = graded(side_rings, 0.0)
        .iter()
        .map(|t| depth - t * (depth - z_bottom))
        .collect();
    for k in 0..side_rings {
        for j in 0..sectors {
            let mid = 0.5 * (phi[j] + phi[j + 1]);
            let outward = V3::new(mid.cos(), mid.sin(), 0.0);
            let verts = vec![
                ring(r_collar, j, side_z[k]),
                ring(r_collar, j + 1, side_z[k]),
                ring(r_collar, j + 1, side_z[k + 1]),
                ring(r_collar, j, side_z[k + 1]),
            ];
            panels.push(Panel::new(verts, outward, Region::Outer)?);
        }
    }
    let bottom_r: Vec<f64> = graded(bottom_rings, 0.0).iter().map(|t| t * r_collar).collect();
    for k in 0..bottom_rings {
        for j in 0..sectors {
            let verts = if k == 0 {
                vec![V3::new(0.0, 0.0, z_bottom), ring(bottom_r[1], j + 1, z_bottom), ring(bottom_r[1], j, z_bottom)]
            } else {
                vec![
                    ring(bottom_r[k], j, z_bottom),
                    ring(bottom_r[k], j + 1, z_bottom),
                    ring(bottom_r[k + 1], j + 1, z_bottom),
                    ring(bottom_r[k + 1], j, z_bottom),
                ]
            };
            panels.push(Panel::new(verts, -up, Region::Outer)?);
        }
    }

    Ok(SurfaceMesh {
        panels,
        well_radius: r_well,
        well_depth: depth,
        collar_radius: r_collar,
        sectors,
        floor_rings,
        wall_rings,
        collar_rings,
        outer_rings: side_rings + bottom_rings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MagnetParticle;

    fn trap() -> TrapSystem {
        TrapSystem::new(MagnetParticle::new(30.1e-6, 7430.0, 0.71).unwrap(), 2e-3, 4e-3).unwrap()
    }

    #[test]
    fn panel_count_near_target() {
        for target in [MIN_PANELS, 500, DEFAULT_PANELS, 3000] {
            let m = build_trap_mesh(&trap(), &MeshOptions::with_panels(target)).unwrap();
            let rel = (m.len() as f64 - target as f64).abs() / target as f64;
            assert!(rel <= 0.1, "target {target} got {}", m.len());
            assert_eq!(m.sectors % 8, 0);
        }
    }

    #[test]
    fn floor_area_at_default_resolution() {
        let m = build_trap_mesh(&trap(), &MeshOptions::default()).unwrap();
        let exact = PI * 2e-3f64.powi(2);
        assert!((m.region_area(Region::Floor) / exact - 1.0).abs() < 0.01);
    }

    #[test]
    fn normals_point_into_vacuum() {
        let m = build_trap_mesh(&trap(), &MeshOptions::default()).unwrap();
        for p in &m.panels {
            match p.region {
                Region::Floor | Region::Collar => assert!((p.normal.z - 1.0).abs() < 1e-12),
                Region::Wall => {
                    let radial = V3::new(p.centroid.x, p.centroid.y, 0.0).normalize();
                    assert!(p.normal.dot(&radial) < -0.99);
                }
                Region::Outer => {
                    // Points away from the block centre.
                    let c = V3::new(0.0, 0.0, -1e-3);
                    assert!(p.normal.dot(&(p.centroid - c)) > 0.0);
                }
            }
            assert!(p.area > 0.0);
        }
    }

    #[test]
    fn rejects_low_resolution() {
        assert!(matches!(
            build_trap_mesh(&trap(), &MeshOptions::with_panels(50)),
            Err(Error::InvalidParameter { name: "resolution", .. })
        ));
    }

    #[test]
    fn axis_spacing_on_particle_scale() {
        let m = build_trap_mesh(&trap(), &MeshOptions::default()).unwrap();
        let inner = &m.panels[0];
        assert!(inner.diameter < 0.3 * 311e-6, "inner diameter {}", inner.diameter);
    }

    #[test]
    fn point_to_panel_distance() {
        let p = Panel::new(
            vec![V3::zeros(), V3::new(1.0, 0.0, 0.0), V3::new(1.0, 1.0, 0.0), V3::new(0.0, 1.0, 0.0)],
            V3::z(),
            Region::Floor,
        )
        .unwrap();
        assert!((p.distance_to(&V3::new(0.5, 0.5, 2.0)) - 2.0).abs() < 1e-15);
        assert!((p.distance_to(&V3::new(2.0, 0.5, 0.0)) - 1.0).abs() < 1e-15);
        assert!((p.distance_to(&V3::new(2.0, 2.0, 0.0)) - 2f64.sqrt()).abs() < 1e-15);
        assert!((p.area - 1.0).abs() < 1e-15);
    }
}
