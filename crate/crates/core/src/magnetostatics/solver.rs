//! Single-layer panel method for the exterior Neumann problem
//! n·(B_ind + B_f) = 0 on the superconductor surface.
//!
//! The induced field is B_ind(x) = Σ_j σ_j ∫_j (x − y)/(4π|x − y|³) dA_y,
//! a gradient of a harmonic single-layer potential, so it is curl- and
//! divergence-free in the vacuum region by construction. Collocation at
//! panel centroids gives the second-kind system (½I + K)σ = −n·B_f.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::kernel::{adaptive_nodes, dipole_field, dipole_field_unchecked, single_layer_gradient, Node};
use super::mesh::{build_trap_mesh, MeshOptions, SurfaceMesh};
use crate::error::{Error, Result};
use crate::model::{Configuration, MagnetParticle, PhysicalConstants, TrapSystem};

type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual ‖Aσ − b‖/‖b‖ accepted without refinement.
    pub tolerance: f64,
    /// Factorizations with a larger 1-norm condition estimate are rejected.
    pub max_condition: f64,
    /// Evaluations closer than this many panel diameters to a panel are
    /// rejected as singular.
    pub standoff: f64,
    /// A dipole closer than this many diameters to a panel is reported as
    /// under-resolved.
    pub resolution_ratio: f64,
    /// Sub-triangle refinement criterion (distance / diameter) for matrix
    /// assembly and field evaluation.
    pub quadrature_eta: f64,
    pub formulation: Formulation,
}

/// How the induced field is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// The panel layer carries the whole induced field.
    Direct,
    /// The mirror image in the floor plane is added analytically and the
    /// layer only carries the correction due to the wall and rim. The floor
    /// boundary condition is then met exactly by the image, so the layer is
    /// smooth and lateral discretization noise drops by orders of magnitude.
    #[default]
    ImageSplit,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_condition: 1e8,
            standoff: 0.1,
            resolution_ratio: 0.5,
            quadrature_eta: 4.0,
            formulation: Formulation::default(),
        }
    }
}

const MAX_DEPTH: u32 = 7;

/// Panel source strengths for one dipole state.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSolution {
    /// Magnetic-charge density per panel, in tesla.
    pub strengths: DVector<f64>,
    pub position: V3,
    pub moment: V3,
    /// Relative residual of the linear solve.
    pub residual: f64,
}

/// Quadrature nodes for evaluating the induced field near one reference
/// point. Holding a plan fixed keeps the discretized field a smooth
/// function of the evaluation point, which finite differences rely on.
#[derive(Debug, Clone)]
pub struct FieldPlan {
    pub reference: V3,
    nodes: Vec<Node>,
    offsets: Vec<usize>,
}

impl FieldPlan {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Assembled and factorized boundary system for one mesh.
#[derive(Debug)]
pub struct BoundarySolver {
    mesh: SurfaceMesh,
    options: SolverOptions,
    mu0: f64,
    matrix: DMatrix<f64>,
    // L (unit diagonal, strictly lower part) and U packed together, with
    // P·A = L·U.
    factors: DMatrix<f64>,
    perm: Vec<usize>,
    condition: f64,
}

fn coplanar(a: &super::mesh::Panel, b: &super::mesh::Panel) -> bool {
    a.normal.dot(&b.normal) > 1.0 - 1e-12 && a.normal.dot(&(b.centroid - a.centroid)).abs() < 1e-12 * a.diameter
}

impl BoundarySolver {
    pub fn new(mesh: SurfaceMesh, mu0: f64, options: SolverOptions) -> Result<Self> {
        let n = mesh.len();
        let eta = options.quadrature_eta;
        let mut base: Vec<Vec<Node>> = Vec::with_capacity(n);
        for p in &mesh.panels {
            let mut nodes = Vec::new();
            for t in p.triangles() {
                adaptive_nodes(&t, &(V3::repeat(f64::INFINITY)), eta, 0, &mut nodes);
            }
            base.push(nodes);
        }

        let mut matrix = DMatrix::<f64>::zeros(n, n);
        let mut scratch = Vec::new();
        for (j, pj) in mesh.panels.iter().enumerate() {
            let tris = pj.triangles();
            let mut col = matrix.column_mut(j);
            for (i, pi) in mesh.panels.iter().enumerate() {
                if i == j {
                    col[i] = 0.5;
                    continue;
                }
                if coplanar(pi, pj) {
                    continue;
                }
                let x = pi.centroid;
                let nodes: &[Node] = if (x - pj.centroid).norm() > 2.0 * eta * pj.diameter {
                    &base[j]
                } else {
                    scratch.clear();
                    for t in &tris {
                        adaptive_nodes(t, &x, eta, MAX_DEPTH, &mut scratch);
                    }
                    &scratch
                };
                col[i] = pi.normal.dot(&single_layer_gradient(nodes, &x));
            }
        }

        let lu = matrix.clone().lu();
        let (p, l, u) = lu.unpack();
        let mut factors = u;
        for j in 0..n {
            for i in j + 1..n {
                factors[(i, j)] = l[(i, j)];
            }
        }
        drop(l);
        let mut perm: Vec<usize> = (0..n).collect();
        {
            let mut idx = DVector::from_fn(n, |i, _| i as f64);
            p.permute_rows(&mut idx);
            for (k, v) in idx.iter().enumerate() {
                perm[k] = *v as usize;
            }
        }
        for k in 0..n {
            if factors[(k, k)] == 0.0 || !factors[(k, k)].is_finite() {
                return Err(Error::SolverFailure {
                    message: format!("singular boundary matrix (zero pivot at row {k})"),
                    condition: f64::INFINITY,
                    residual: f64::NAN,
                });
            }
        }

        let mut solver = Self {
            mesh,
            options,
            mu0,
            matrix,
            factors,
            perm,
            condition: f64::NAN,
        };
        solver.condition = solver.estimate_condition();
        if !(solver.condition <= options.max_condition) {
            return Err(Error::SolverFailure {
                message: format!(
                    "boundary matrix is ill-conditioned ({} panels, limit {:.1e})",
                    solver.mesh.len(),
                    options.max_condition
                ),
                condition: solver.condition,
                residual: f64::NAN,
            });
        }
        Ok(solver)
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// 1-norm condition estimate of the collocation matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn solve_in_place(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = b.len();
        let f = self.factors.as_slice();
        let mut x: Vec<f64> = self.perm.iter().map(|&k| b[k]).collect();
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                let col = &f[j * n..(j + 1) * n];
                for i in j + 1..n {
                    x[i] -= col[i] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = &f[j * n..(j + 1) * n];
            x[j] /= col[j];
            let xj = x[j];
            for i in 0..j {
                x[i] -= col[i] * xj;
            }
        }
        DVector::from_vec(x)
    }

    /// Solves Aᵀy = c.
    fn solve_transpose(&self, c: &DVector<f64>) -> DVector<f64> {
        let n = c.len();
        let f = self.factors.as_slice();
        let mut w = c.as_slice().to_vec();
        for j in 0..n {
            let col = &f[j * n..(j + 1) * n];
            let s: f64 = (0..j).map(|i| col[i] * w[i]).sum();
            w[j] = (w[j] - s) / col[j];
        }
        for j in (0..n).rev() {
            let col = &f[j * n..(j + 1) * n];
            let s: f64 = (j + 1..n).map(|i| col[i] * w[i]).sum();
            w[j] -= s;
        }
        let mut y = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            y[p] = w[k];
        }
        DVector::from_vec(y)
    }

    /// Hager's estimator for ‖A⁻¹‖₁ times ‖A‖₁.
    fn estimate_condition(&self) -> f64 {
        let n = self.matrix.nrows();
        let norm_a = (0..n)
            .map(|j| self.matrix.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve_in_place(&x);
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose(&xi);
            let (jmax, zmax) = z.iter().enumerate().fold((0, 0.0), |acc, (j, v)| {
                if v.abs() > acc.1 {
                    (j, v.abs())
                } else {
                    acc
                }
            });
            if zmax <= z.dot(&x) {
                break;
            }
            x = DVector::zeros(n);
            x[jmax] = 1.0;
        }
        norm_a * est
    }

    /// −n·(B_f + B_image) at every collocation point, the image term being
    /// present only in the split formulation.
    pub fn rhs(&self, position: &V3, moment: &V3) -> DVector<f64> {
        DVector::from_iterator(
            self.mesh.len(),
            self.mesh.panels.iter().map(|p| {
                let r = p.centroid - position;
                let b = dipole_field_unchecked(moment, &r, r.norm_squared(), self.mu0)
                    + self.image_field(position, moment, &p.centroid);
                -p.normal.dot(&b)
            }),
        )
    }

    /// Field of the mirror dipole below the floor plane (zero in the direct
    /// formulation).
    pub fn image_field(&self, position: &V3, moment: &V3, x: &V3) -> V3 {
        match self.options.formulation {
            Formulation::Direct => V3::zeros(),
            Formulation::ImageSplit => {
                let m = V3::new(moment.x, moment.y, -moment.z);
                let r = x - V3::new(position.x, position.y, -position.z);
                dipole_field_unchecked(&m, &r, r.norm_squared(), self.mu0)
            }
        }
    }

    fn strengths(&self, position: &V3, moment: &V3) -> DVector<f64> {
        self.solve_in_place(&self.rhs(position, moment))
    }

    /// Checks that `x` keeps the configured standoff from every panel and
    /// returns the smallest distance/diameter ratio with its panel index.
    pub fn clearance(&self, x: &V3) -> Result<(f64, usize)> {
        let mut worst = f64::INFINITY;
        let mut worst_panel = 0;
        for (k, p) in self.mesh.panels.iter().enumerate() {
            let d = (p.centroid - x).norm();
            if d > 2.0 * p.diameter + worst * p.diameter {
                continue;
            }
            let ratio = p.distance_to(x) / p.diameter;
            if ratio < self.options.standoff {
                return Err(Error::Singularity(format!(
                    "evaluation point {x:?} lies within {:.2} diameters of panel {k} ({:?})",
                    self.options.standoff, p.region
                )));
            }
            if ratio < worst {
                worst = ratio;
                worst_panel = k;
            }
        }
        Ok((worst, worst_panel))
    }

    /// Solves for the panel strengths induced by a dipole at `position`.
    pub fn solve(&self, position: &V3, moment: &V3) -> Result<PanelSolution> {
        let (ratio, panel) = self.clearance(position)?;
        if ratio < self.options.resolution_ratio {
            return Err(Error::SolverFailure {
                message: format!(
                    "mesh under-resolved near the dipole: {:?} panel {panel} is only {ratio:.2} diameters away \
                     (need {}); increase the resolution",
                    self.mesh.panels[panel].region, self.options.resolution_ratio
                ),
                condition: self.condition,
                residual: f64::NAN,
            });
        }
        let b = self.rhs(position, moment);
        let mut sigma = self.solve_in_place(&b);
        let bnorm = b.norm().max(f64::MIN_POSITIVE);
        let mut r = &b - &self.matrix * &sigma;
        let mut residual = r.norm() / bnorm;
        if residual > self.options.tolerance {
            sigma += self.solve_in_place(&r);
            r = &b - &self.matrix * &sigma;
            residual = r.norm() / bnorm;
        }
        if !(residual <= self.options.tolerance) {
            return Err(Error::SolverFailure {
                message: "linear solve did not reach the residual tolerance".into(),
                condition: self.condition,
                residual,
            });
        }
        Ok(PanelSolution {
            strengths: sigma,
            position: *position,
            moment: *moment,
            residual,
        })
    }

    /// Builds quadrature nodes adapted to `reference`.
    pub fn plan(&self, reference: &V3) -> Result<FieldPlan> {
        self.clearance(reference)?;
        let eta = self.options.quadrature_eta;
        let mut nodes = Vec::new();
        let mut offsets = Vec::with_capacity(self.mesh.len() + 1);
        offsets.push(0);
        for p in &self.mesh.panels {
            for t in p.triangles() {
                adaptive_nodes(&t, reference, eta, MAX_DEPTH, &mut nodes);
            }
            offsets.push(nodes.len());
        }
        Ok(FieldPlan {
            reference: *reference,
            nodes,
            offsets,
        })
    }

    fn field_from(&self, strengths: &[f64], plan: &FieldPlan, x: &V3) -> V3 {
        let mut b = V3::zeros();
        for (j, s) in strengths.iter().enumerate() {
            if *s != 0.0 {
                b += *s * single_layer_gradient(&plan.nodes[plan.offsets[j]..plan.offsets[j + 1]], x);
            }
        }
        b
    }

    pub fn field_with_plan(&self, solution: &PanelSolution, plan: &FieldPlan, x: &V3) -> V3 {
        self.field_from(solution.strengths.as_slice(), plan, x)
            + self.image_field(&solution.position, &solution.moment, x)
    }

    /// Induced field of a solved panel distribution at `x`.
    pub fn induced_field(&self, solution: &PanelSolution, x: &V3) -> Result<V3> {
        let plan = self.plan(x)?;
        Ok(self.field_with_plan(solution, &plan, x))
    }

    /// Normal component of the total field at each collocation point.
    pub fn boundary_normal_field(&self, solution: &PanelSolution) -> DVector<f64> {
        &self.matrix * &solution.strengths - self.rhs(&solution.position, &solution.moment)
    }
}

/// A trap with its factorized boundary system. Cloning or re-tilting shares
/// the factorization since it depends on the geometry only.
#[derive(Debug, Clone)]
pub struct TrapModel {
    trap: TrapSystem,
    constants: PhysicalConstants,
    solver: Arc<BoundarySolver>,
}

impl TrapModel {
    pub fn new(
        trap: TrapSystem,
        constants: PhysicalConstants,
        mesh: &MeshOptions,
        options: SolverOptions,
    ) -> Result<Self> {
        constants.validate()?;
        let mesh = build_trap_mesh(&trap, mesh)?;
        let solver = BoundarySolver::new(mesh, constants.mu0, options)?;
        Ok(Self {
            trap,
            constants,
            solver: Arc::new(solver),
        })
    }

    pub fn trap(&self) -> &TrapSystem {
        &self.trap
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    pub fn solver(&self) -> &BoundarySolver {
        &self.solver
    }

    pub fn particle(&self) -> &MagnetParticle {
        &self.trap.particle
    }

    /// Same geometry and factorization at a different tilt.
    pub fn with_tilt(&self, tilt: f64) -> Result<Self> {
        Ok(Self {
            trap: self.trap.with_tilt(tilt)?,
            constants: self.constants,
            solver: Arc::clone(&self.solver),
        })
    }

    pub fn with_tilt_axis(&self, axis: [f64; 2]) -> Result<Self> {
        let mut trap = self.trap;
        trap.tilt_axis = axis;
        trap.validate()?;
        Ok(Self {
            trap,
            constants: self.constants,
            solver: Arc::clone(&self.solver),
        })
    }

    /// Same geometry and factorization with a different particle.
    pub fn with_particle(&self, particle: MagnetParticle) -> Self {
        let mut trap = self.trap;
        trap.particle = particle;
        Self {
            trap,
            constants: self.constants,
            solver: Arc::clone(&self.solver),
        }
    }

    pub fn check_inside(&self, cfg: &Configuration) -> Result<()> {
        let rho = cfg.x.hypot(cfg.y);
        if !(cfg.z > 0.0 && cfg.z < self.trap.well_depth && rho < self.trap.well_radius) {
            return Err(Error::Domain(format!(
                "configuration ({:.3e}, {:.3e}, {:.3e}) is outside the well",
                cfg.x, cfg.y, cfg.z
            )));
        }
        Ok(())
    }

    pub fn moment(&self, cfg: &Configuration) -> V3 {
        self.trap.particle.dipole() * cfg.orientation()
    }

    /// m g times the height along the true vertical.
    pub fn gravity_energy(&self, cfg: &Configuration) -> f64 {
        self.trap.particle.mass() * self.constants.g * self.trap.up().dot(&cfg.position())
    }

    pub fn solve(&self, cfg: &Configuration) -> Result<PanelSolution> {
        self.check_inside(cfg)?;
        self.solver.solve(&cfg.position(), &self.moment(cfg))
    }

    /// Magnetic energy −½ μ·B_ind(r) of the point dipole.
    pub fn magnetic_energy(&self, cfg: &Configuration) -> Result<f64> {
        let sol = self.solve(cfg)?;
        let b = self.solver.induced_field(&sol, &cfg.position())?;
        Ok(-0.5 * sol.moment.dot(&b))
    }

    /// Total potential energy (magnetic + gravitational).
    pub fn full_potential(&self, cfg: &Configuration) -> Result<f64> {
        Ok(self.magnetic_energy(cfg)? + self.gravity_energy(cfg))
    }

    /// Energy evaluator with quadrature frozen around `center`.
    pub fn local(&self, center: &Configuration) -> Result<LocalPotential<'_>> {
        self.check_inside(center)?;
        let (ratio, _) = self.solver.clearance(&center.position())?;
        if ratio < self.solver.options.resolution_ratio {
            // Reuse the diagnostics of a full solve.
            self.solve(center)?;
        }
        Ok(LocalPotential {
            model: self,
            plan: self.solver.plan(&center.position())?,
        })
    }
}

pub struct LocalPotential<'a> {
    model: &'a TrapModel,
    plan: FieldPlan,
}

impl LocalPotential<'_> {
    pub fn reference(&self) -> V3 {
        self.plan.reference
    }

    pub fn model(&self) -> &TrapModel {
        self.model
    }

    pub fn magnetic_energy(&self, cfg: &Configuration) -> Result<f64> {
        self.model.check_inside(cfg)?;
        let r = cfg.position();
        let m = self.model.moment(cfg);
        let solver = &self.model.solver;
        let sigma = solver.strengths(&r, &m);
        let b = solver.field_from(sigma.as_slice(), &self.plan, &r) + solver.image_field(&r, &m, &r);
        Ok(-0.5 * m.dot(&b))
    }

    pub fn energy(&self, cfg: &Configuration) -> Result<f64> {
        Ok(self.magnetic_energy(cfg)? + self.model.gravity_energy(cfg))
    }
}

/// One-off evaluation of the full potential.
pub fn full_potential(model: &TrapModel, cfg: &Configuration) -> Result<f64> {
    model.full_potential(cfg)
}

/// Induced field of a solution at an arbitrary point of the vacuum region.
pub fn induced_b_at(model: &TrapModel, solution: &PanelSolution, x: &V3) -> Result<V3> {
    model.solver().induced_field(solution, x)
}

/// Dipole field helper re-exported for callers that only hold a model.
pub fn source_field(model: &TrapModel, cfg: &Configuration, x: &V3) -> Result<V3> {
    dipole_field(&model.moment(cfg), &cfg.position(), x, model.constants.mu0)
}
