use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};

type V3 = Vector3<f64>;

/// Point-dipole field B = (μ0/4π)[3(μ·r̂)r̂ − μ]/|r|³ at `eval` for a dipole
/// `moment` located at `source`.
pub fn dipole_field(moment: &V3, source: &V3, eval: &V3, mu0: f64) -> Result<V3> {
    let r = eval - source;
    let d2 = r.norm_squared();
    if !(d2 > 0.0) {
        return Err(Error::Singularity(format!(
            "dipole field evaluated at the dipole position {source:?}"
        )));
    }
    Ok(dipole_field_unchecked(moment, &r, d2, mu0))
}

#[inline]
pub(crate) fn dipole_field_unchecked(moment: &V3, r: &V3, d2: f64, mu0: f64) -> V3 {
    let d = d2.sqrt();
    let inv3 = 1.0 / (d2 * d);
    let mr = moment.dot(r) / d2;
    (mu0 / (4.0 * PI)) * inv3 * (3.0 * mr * r - moment)
}

/// One quadrature node on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Node {
    pub point: V3,
    pub weight: f64,
}

/// Interior three-point rule, exact for quadratics.
fn three_point(t: &[V3; 3], out: &mut Vec<Node>) {
    let area = 0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm();
    let w = area / 3.0;
    for k in 0..3 {
        let p = (4.0 * t[k] + t[(k + 1) % 3] + t[(k + 2) % 3]) / 6.0;
        out.push(Node { point: p, weight: w });
    }
}

fn tri_diameter(t: &[V3; 3]) -> f64 {
    (t[0] - t[1]).norm().max((t[1] - t[2]).norm()).max((t[2] - t[0]).norm())
}

/// Appends quadrature nodes for triangle `t`, bisecting edges recursively
/// while the target point `x` is closer than `eta` sub-triangle diameters.
pub(crate) fn adaptive_nodes(t: &[V3; 3], x: &V3, eta: f64, depth_left: u32, out: &mut Vec<Node>) {
    let c = (t[0] + t[1] + t[2]) / 3.0;
    if depth_left == 0 || (c - x).norm() >= eta * tri_diameter(t) {
        three_point(t, out);
        return;
    }
    let m01 = 0.5 * (t[0] + t[1]);
    let m12 = 0.5 * (t[1] + t[2]);
    let m20 = 0.5 * (t[2] + t[0]);
    for sub in [[t[0], m01, m20], [m01, t[1], m12], [m20, m12, t[2]], [m01, m12, m20]] {
        adaptive_nodes(&sub, x, eta, depth_left - 1, out);
    }
}

/// Field at `x` of a unit-density single layer sampled at `nodes`:
/// Σ w (x − y)/(4π|x − y|³).
#[inline]
pub(crate) fn single_layer_gradient(nodes: &[Node], x: &V3) -> V3 {
    let mut acc = V3::zeros();
    for n in nodes {
        let r = x - n.point;
        let d2 = r.norm_squared();
        acc += n.weight / (d2 * d2.sqrt()) * r;
    }
    acc / (4.0 * PI)
}
