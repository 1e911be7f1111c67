//! Least-Dirichlet-energy mappings between doubly connected planar
//! domains with sliding boundaries.
//!
//! The crate provides structured polar meshes, a free-boundary energy
//! minimizer, closed-form reference maps, Hopf-differential (quadratic
//! differential) analysis with a minimality certificate, trajectory
//! tracing, and crack diagnostics.

pub mod cracks;
pub mod domain;
pub mod energy;
pub mod error;
pub mod fem;
pub mod hopf;
pub mod mesh;
pub mod minimizer;
pub mod numerics;
pub mod refmaps;
pub mod trajectories;

pub use domain::{
    boundary_point, boundary_tangent, conformal_modulus, nitsche_bound, nitsche_sigma, AnnulusSpec, BoundaryComponent,
    DomainSpec, ModulusResult, WasherSpec,
};
pub use energy::{
    difference_distortion, dirichlet_energy, energy_identity_gap, free_lagrangian_report, hopf_system_residual,
    BoundsReport, DifferenceDistortion, EnergyBreakdown, HopfSystemResidual, IdentityGap,
};
pub use error::{Error, Result};
pub use hopf::{hopf_field, laurent_fit, minimality_certificate, CertThresholds, HopfReport, QuadDifferential, Regime, Verdict};
pub use mesh::{build_mesh, element_derivatives, DerivField, FieldFile, MapField, PolarMesh};
pub use minimizer::{boundary_descent_step, gauge_align, harmonic_replace, initial_map, solve, GaugeAlignment, SolveResult, SolverConfig};
pub use refmaps::{eval_refmap, refmap_energy, refmap_hopf_product, sample_refmap, RefMapKind};
pub use trajectories::{trace_trajectory, Trajectory, TrajectoryKind};

pub use cracks::{crack_report, ray_profile, CrackReport, RayProfile};
