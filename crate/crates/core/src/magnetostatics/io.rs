//! Panel export: centroid, normal, area and solved strength per panel.

use std::io::{Read, Write};

use nalgebra::Vector3;

use super::mesh::SurfaceMesh;
use super::solver::PanelSolution;
use crate::error::{Error, Result};
use crate::table::{write_rows, Table};

pub const PANEL_HEADER: [&str; 9] = ["cx_m", "cy_m", "cz_m", "nx", "ny", "nz", "area_m2", "region", "strength_t"];

#[derive(Debug, Clone, PartialEq)]
pub struct PanelRecord {
    pub centroid: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub area: f64,
    pub region: String,
    pub strength: f64,
}

pub fn write_panels<W: Write + ?Sized>(w: &mut W, mesh: &SurfaceMesh, solution: Option<&PanelSolution>) -> Result<()> {
    if let Some(s) = solution {
        if s.strengths.len() != mesh.len() {
            return Err(Error::Data(format!(
                "solution has {} strengths for {} panels",
                s.strengths.len(),
                mesh.len()
            )));
        }
    }
    let rows = mesh.panels.iter().enumerate().map(|(k, p)| {
        let region = serde_json::to_value(p.region).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        vec![
            format!("{:e}", p.centroid.x),
            format!("{:e}", p.centroid.y),
            format!("{:e}", p.centroid.z),
            format!("{:e}", p.normal.x),
            format!("{:e}", p.normal.y),
            format!("{:e}", p.normal.z),
            format!("{:e}", p.area),
            region,
            solution.map(|s| format!("{:e}", s.strengths[k])).unwrap_or_else(|| "0".into()),
        ]
    });
    write_rows(w, &PANEL_HEADER, rows)
}

pub fn read_panels<R: Read>(r: R) -> Result<Vec<PanelRecord>> {
    let t = Table::parse(r)?;
    let col = |n: &str| t.floats(n);
    let (cx, cy, cz) = (col("cx_m")?, col("cy_m")?, col("cz_m")?);
    let (nx, ny, nz) = (col("nx")?, col("ny")?, col("nz")?);
    let area = col("area_m2")?;
    let strength = col("strength_t")?;
    let region = t.strings("region")?;
    Ok((0..t.rows.len())
        .map(|k| PanelRecord {
            centroid: Vector3::new(cx[k], cy[k], cz[k]),
            normal: Vector3::new(nx[k], ny[k], nz[k]),
            area: area[k],
            region: region[k].to_owned(),
            strength: strength[k],
        })
        .collect())
}
