//! Small-oscillation modes from the finite-difference Hessian of the full
//! potential.

use std::f64::consts::PI;

use nalgebra::{Matrix5, SymmetricEigen, Vector5};
use serde::{Deserialize, Serialize};

use super::equilibrium::Scales;
use crate::error::{Error, Result};
use crate::image::PlaneEquilibrium;
use crate::magnetostatics::TrapModel;
use crate::model::{Configuration, ModeLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeOptions {
    /// Step per coordinate relative to its scale (L for lengths, 1 rad for
    /// angles).
    pub relative_step: f64,
    /// Accepted |K_ij − K_ji| relative to √(K_ii K_jj).
    pub asymmetry_tolerance: f64,
    /// Eigenvalues below this fraction of the largest one count as neutral.
    pub neutral_tolerance: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self {
            relative_step: 1e-4,
            asymmetry_tolerance: 1e-3,
            neutral_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub label: ModeLabel,
    /// Zero for a neutral direction.
    pub frequency: f64,
    /// ω² [1/s²].
    pub eigenvalue: f64,
    /// Generalized-coordinate eigenvector, M-normalized.
    pub vector: [f64; 5],
    pub neutral: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub equilibrium: Configuration,
    /// Sorted by frequency.
    pub modes: Vec<Mode>,
    /// Diagonal of the mass matrix: (m, m, m, I, I).
    pub masses: [f64; 5],
    /// Hessian in SI units (J/m², J/(m·rad), J/rad²).
    pub hessian: [[f64; 5]; 5],
    /// Largest |K_ij − K_ji|/√|K_ii K_jj| before symmetrization; zero for
    /// analytic spectra.
    pub asymmetry: f64,
    pub provenance: Provenance,
}

impl ModeSpectrum {
    pub fn mode(&self, label: ModeLabel) -> &Mode {
        self.modes.iter().find(|m| m.label == label).expect("every label is assigned")
    }

    pub fn frequency(&self, label: ModeLabel) -> f64 {
        self.mode(label).frequency
    }

    /// Frequencies in (x, y, z, β, α) order.
    pub fn frequencies(&self) -> [f64; 5] {
        ModeLabel::ALL.map(|l| self.frequency(l))
    }

    /// The plane-limit spectrum: z and β from the image method, the other
    /// three directions neutral.
    pub fn from_plane(eq: &PlaneEquilibrium) -> Self {
        let masses = [eq.mass, eq.mass, eq.mass, eq.inertia, eq.inertia];
        let mut hessian = [[0.0; 5]; 5];
        hessian[2][2] = eq.k_z;
        hessian[3][3] = eq.k_beta;
        let modes = ModeLabel::ALL
            .iter()
            .map(|&label| {
                let i = label.index();
                let w2 = hessian[i][i] / masses[i];
                let mut vector = [0.0; 5];
                vector[i] = 1.0 / masses[i].sqrt();
                Mode {
                    label,
                    frequency: w2.sqrt() / (2.0 * PI),
                    eigenvalue: w2,
                    vector,
                    neutral: w2 == 0.0,
                }
            })
            .collect::<Vec<_>>();
        let mut modes = modes;
        modes.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        Self {
            equilibrium: Configuration::new(0.0, 0.0, eq.z0, 0.0, 0.0),
            modes,
            masses,
            hessian,
            asymmetry: 0.0,
            provenance: Provenance::Analytic,
        }
    }
}

/// Richardson-extrapolated central difference: (4D(h) − D(2h))/3.
fn richardson(f: &mut impl FnMut(f64) -> Result<f64>, h: f64) -> Result<f64> {
    let d1 = (f(h)? - f(-h)?) / (2.0 * h);
    let d2 = (f(2.0 * h)? - f(-2.0 * h)?) / (4.0 * h);
    Ok((4.0 * d1 - d2) / 3.0)
}

/// Hessian of a scaled energy as the Jacobian of its gradient. Both
/// differentiations are independent, so the asymmetry of the result
/// measures the differentiation error.
pub(crate) fn scaled_hessian(e: &mut impl FnMut(&[f64; 5]) -> Result<f64>, u: &[f64; 5], h: f64) -> Result<Matrix5<f64>> {
    let mut grad_at = |p: &[f64; 5]| -> Result<[f64; 5]> {
        let mut g = [0.0; 5];
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = richardson(
                &mut |s| {
                    let mut q = *p;
                    q[i] += s;
                    e(&q)
                },
                h,
            )?;
        }
        Ok(g)
    };
    let mut k = Matrix5::zeros();
    for j in 0..5 {
        let mut column = |s: f64| -> Result<[f64; 5]> {
            let mut q = *u;
            q[j] += s;
            grad_at(&q)
        };
        let (p1, m1, p2, m2) = (column(h)?, column(-h)?, column(2.0 * h)?, column(-2.0 * h)?);
        for i in 0..5 {
            let d1 = (p1[i] - m1[i]) / (2.0 * h);
            let d2 = (p2[i] - m2[i]) / (4.0 * h);
            k[(i, j)] = (4.0 * d1 - d2) / 3.0;
        }
    }
    Ok(k)
}

/// Mode of each label from the mass-weighted eigenvector weights, as the
/// assignment with the largest total weight.
fn assign_labels(weights: &[[f64; 5]; 5]) -> [ModeLabel; 5] {
    let mut best = ([0usize, 1, 2, 3, 4], f64::NEG_INFINITY);
    let mut perm = [0usize, 1, 2, 3, 4];
    permute(&mut perm, 0, &mut |p| {
        let score: f64 = (0..5).map(|k| weights[k][p[k]]).sum();
        if score > best.1 {
            best = (*p, score);
        }
    });
    best.0.map(|i| ModeLabel::ALL[i])
}

fn permute(p: &mut [usize; 5], k: usize, visit: &mut impl FnMut(&[usize; 5])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// Solves K v = ω² M v for a symmetric SI Hessian and diagonal masses.
pub fn modes_from_hessian(hessian: &[[f64; 5]; 5], masses: &[f64; 5], neutral_tolerance: f64) -> Result<Vec<Mode>> {
    if masses.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(Error::invalid("masses", "must be finite and > 0"));
    }
    let inv_sqrt = Vector5::from_iterator(masses.iter().map(|m| 1.0 / m.sqrt()));
    let k = Matrix5::from_fn(|i, j| hessian[i][j] * inv_sqrt[i] * inv_sqrt[j]);
    let k = (k + k.transpose()) * 0.5;
    let eig = SymmetricEigen::new(k);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if eig.eigenvalues.iter().any(|&l| l < -neutral_tolerance * scale) {
        return Err(Error::UnstableEquilibrium {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
        });
    }
    let weights: [[f64; 5]; 5] = std::array::from_fn(|k| std::array::from_fn(|i| eig.eigenvectors[(i, k)].powi(2)));
    let labels = assign_labels(&weights);
    let mut modes: Vec<Mode> = (0..5)
        .map(|k| {
            let l = eig.eigenvalues[k];
            let neutral = l.abs() <= neutral_tolerance * scale;
            Mode {
                label: labels[k],
                frequency: if neutral { 0.0 } else { l.sqrt() / (2.0 * PI) },
                eigenvalue: if neutral { 0.0 } else { l },
                vector: std::array::from_fn(|i| eig.eigenvectors[(i, k)] * inv_sqrt[i]),
                neutral,
            }
        })
        .collect();
    modes.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(modes)
}

/// Finite-difference Hessian at `equilibrium` and the generalized
/// eigenproblem with M = diag(m, m, m, I, I).
pub fn mode_spectrum(model: &TrapModel, equilibrium: &Configuration, options: &ModeOptions) -> Result<ModeSpectrum> {
    let scales = Scales::of(model)?;
    let local = model.local(equilibrium)?;
    let gamma = equilibrium.gamma;
    let mut e = |p: &[f64; 5]| -> Result<f64> { Ok(local.energy(&scales.unscale(p, gamma))? / scales.energy) };
    let u = scales.scale(equilibrium);
    let k = scaled_hessian(&mut e, &u, options.relative_step)?;

    let diag_scale = (0..5).fold(0.0f64, |a, i| a.max(k[(i, i)].abs()));
    let mut asymmetry = 0.0f64;
    for i in 0..5 {
        for j in (i + 1)..5 {
            let gap = (k[(i, j)] - k[(j, i)]).abs();
            let geo = (k[(i, i)] * k[(j, j)]).abs().sqrt();
            if geo > 0.0 {
                asymmetry = asymmetry.max(gap / geo);
            }
            let allowed = options.asymmetry_tolerance * geo + 1e-9 * diag_scale;
            if gap > allowed {
                return Err(Error::NumericalDifferentiation(format!(
                    "Hessian entries ({i},{j}) and ({j},{i}) differ by {gap:.3e} (allowed {allowed:.3e}) in scaled units"
                )));
            }
        }
    }
    let hessian: [[f64; 5]; 5] = std::array::from_fn(|i| {
        std::array::from_fn(|j| 0.5 * (k[(i, j)] + k[(j, i)]) * scales.energy / (scales.coordinate(i) * scales.coordinate(j)))
    });
    let p = model.particle();
    let masses = [p.mass(), p.mass(), p.mass(), p.inertia(), p.inertia()];
    let modes = modes_from_hessian(&hessian, &masses, options.neutral_tolerance)?;
    Ok(ModeSpectrum {
        equilibrium: *equilibrium,
        modes,
        masses,
        hessian,
        asymmetry,
        provenance: Provenance::Numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hessian_of_a_quadratic_form_is_exact() {
        let a = Matrix5::from_fn(|i, j| if i == j { 2.0 + i as f64 } else { 0.1 * (i + j) as f64 });
        let u0 = [0.1, -0.2, 1.0, 0.03, 1.4];
        let mut e = |p: &[f64; 5]| -> Result<f64> {
            let v = Vector5::from_iterator(p.iter().zip(&u0).map(|(a, b)| a - b));
            Ok(0.5 * v.dot(&(a * v)) + v[0].powi(3))
        };
        let k = scaled_hessian(&mut e, &u0, 1e-3).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((k[(i, j)] - a[(i, j)]).abs() < 1e-7, "({i},{j})");
            }
        }
    }

    #[test]
    fn frequencies_scale_as_inverse_root_mass() {
        let mut h = [[0.0; 5]; 5];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = [1e-7, 3e-7, 3e-5, 1e-12, 2e-13][i];
        }
        h[0][4] = 1e-11;
        h[4][0] = 1e-11;
        let m = [1e-9, 1e-9, 1e-9, 3e-19, 3e-19];
        let light = modes_from_hessian(&h, &m, 1e-9).unwrap();
        let heavy = modes_from_hessian(&h, &m.map(|x| 4.0 * x), 1e-9).unwrap();
        for (a, b) in light.iter().zip(&heavy) {
            assert_eq!(a.label, b.label);
            assert_relative_eq!(b.frequency, a.frequency / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn labels_follow_dominant_components() {
        let mut h = [[0.0; 5]; 5];
        // Deliberately out of order: y stiffest, β softest.
        let k = [2.0, 9.0, 5.0, 0.5, 1.0];
        for i in 0..5 {
            h[i][i] = k[i];
        }
        let modes = modes_from_hessian(&h, &[1.0; 5], 1e-9).unwrap();
        let labels: Vec<_> = modes.iter().map(|m| m.label).collect();
        assert_eq!(labels, [ModeLabel::Beta, ModeLabel::Alpha, ModeLabel::X, ModeLabel::Z, ModeLabel::Y]);
        assert!(modes.windows(2).all(|w| w[0].frequency <= w[1].frequency));
    }

    #[test]
    fn negative_curvature_is_unstable_and_zero_is_neutral() {
        let mut h = [[0.0; 5]; 5];
        for i in 0..4 {
            h[i][i] = 1.0;
        }
        let modes = modes_from_hessian(&h, &[1.0; 5], 1e-9).unwrap();
        let alpha = modes.iter().find(|m| m.label == ModeLabel::Alpha).unwrap();
        assert!(alpha.neutral && alpha.frequency == 0.0);
        h[4][4] = -0.1;
        assert!(matches!(modes_from_hessian(&h, &[1.0; 5], 1e-9), Err(Error::UnstableEquilibrium { .. })));
    }

    #[test]
    fn plane_spectrum_carries_image_frequencies() {
        let p = crate::model::MagnetParticle::new(30.1e-6, 7430.0, 0.71).unwrap();
        let eq = crate::image::plane_mode_frequencies(&p, &Default::default()).unwrap();
        let s = ModeSpectrum::from_plane(&eq);
        assert_eq!(s.provenance, Provenance::Analytic);
        assert_relative_eq!(s.frequency(ModeLabel::Z), eq.f_z(), max_relative = 1e-12);
        assert_relative_eq!(s.frequency(ModeLabel::Beta), eq.f_beta(), max_relative = 1e-12);
        assert!(s.mode(ModeLabel::X).neutral);
    }
}
