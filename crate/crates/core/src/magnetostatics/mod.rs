//! Boundary-element solution of the Meissner boundary problem in a
//! cylindrical well.

pub mod io;
pub mod kernel;
pub mod mesh;
pub mod solver;

pub use kernel::dipole_field;
pub use mesh::{build_trap_mesh, DEFAULT_PANELS, MIN_PANELS, MeshOptions, Panel, Region, SurfaceMesh};
pub use solver::{full_potential, induced_b_at, source_field, BoundarySolver, FieldPlan, Formulation, LocalPotential, PanelSolution, SolverOptions, TrapModel};
