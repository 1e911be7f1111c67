//! Free-boundary Dirichlet-energy minimization: alternating interior
//! harmonic solves and projected boundary descent, with node values
//! constrained to the closed target domain.
//!
//! The range constraint matters: without it the discrete problem admits
//! folded interior states that cut through the hole of the target and
//! undercut the energy of the sliding-boundary minimizer. Interior
//! updates therefore combine the unconstrained harmonic solve with a
//! pointwise projection onto the target closure (guarded by a line
//! search) and projected Gauss-Seidel sweeps, whose per-node subproblems
//! are isotropic and hence solved exactly by the projection.

use crate::domain::{self, BoundaryComponent, DomainSpec};
use crate::error::{Error, Result};
use crate::fem::{self, Stiffness};
use crate::hopf::{minimality_certificate, CertThresholds, Verdict};
use crate::mesh::{MapField, PolarMesh};
use crate::numerics::project_cyclic_monotone;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

fn default_max_outer_iters() -> usize {
    4000
}
fn default_boundary_step() -> f64 {
    0.5
}
fn default_energy_rel_tol() -> f64 {
    1e-10
}
fn default_grad_tol() -> f64 {
    1e-8
}
fn default_stagnation_window() -> usize {
    10
}
fn default_cg_tol() -> f64 {
    1e-12
}
fn default_interior_sweeps() -> usize {
    8
}
fn default_boundary_substeps() -> usize {
    8
}
fn default_enable_restart() -> bool {
    true
}

/// Solver configuration, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_max_outer_iters")]
    pub max_outer_iters: usize,
    /// Initial trial step for the boundary-parameter descent.
    #[serde(default = "default_boundary_step")]
    pub boundary_step: f64,
    #[serde(default = "default_energy_rel_tol")]
    pub energy_rel_tol: f64,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_stagnation_window")]
    pub stagnation_window: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    /// Projected Gauss-Seidel sweeps per outer iteration.
    #[serde(default = "default_interior_sweeps")]
    pub interior_sweeps: usize,
    /// Accepted boundary descent steps per outer iteration.
    #[serde(default = "default_boundary_substeps")]
    pub boundary_substeps: usize,
    /// One seeded boundary-perturbation restart when the run stagnates
    /// with a refused certificate.
    #[serde(default = "default_enable_restart")]
    pub enable_restart: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: default_max_outer_iters(),
            boundary_step: default_boundary_step(),
            energy_rel_tol: default_energy_rel_tol(),
            grad_tol: default_grad_tol(),
            stagnation_window: default_stagnation_window(),
            seed: 0,
            cg_tol: default_cg_tol(),
            interior_sweeps: default_interior_sweeps(),
            boundary_substeps: default_boundary_substeps(),
            enable_restart: default_enable_restart(),
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.boundary_step > 0.0 && self.energy_rel_tol > 0.0 && self.grad_tol > 0.0) {
            return Err(Error::Config("solver tolerances and step must be positive".into()));
        }
        if self.stagnation_window == 0 {
            return Err(Error::Config("stagnation_window must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of a free-boundary solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: MapField,
    pub energy_history: Vec<f64>,
    pub converged: bool,
    pub outer_iters: usize,
    /// Area fraction with negative per-triangle Jacobian (diagnostic; no
    /// sign constraint is imposed).
    pub j_negative_area_fraction: f64,
    pub restarts: usize,
}

/// Projection of a point onto the closed target domain.
pub fn project_to_target(target: &DomainSpec, v: Complex64) -> Complex64 {
    match target {
        DomainSpec::Annulus(a) => {
            let rho = v.norm();
            if rho < 1e-300 {
                Complex64::new(a.inner, 0.0)
            } else if rho < a.inner {
                v * (a.inner / rho)
            } else if rho > a.outer {
                v * (a.outer / rho)
            } else {
                v
            }
        }
        DomainSpec::Washer(w) => {
            let mut p = v;
            let rho = p.norm();
            if rho > w.rho {
                p *= w.rho / rho;
            }
            if p.re.abs() + p.im.abs() < 1.0 {
                // Fold into the first quadrant by an exact quarter-turn
                // chosen from the polar angle. The tie-break at the axes is
                // equivariant under multiplication by i.
                let theta = p.arg().rem_euclid(2.0 * PI);
                let q = ((theta / (PI / 2.0)) as usize).min(3);
                let rot = [
                    Complex64::new(1.0, 0.0),
                    Complex64::new(0.0, -1.0),
                    Complex64::new(-1.0, 0.0),
                    Complex64::new(0.0, 1.0),
                ][q];
                let u = p * rot;
                let d = 0.5 * (1.0 - u.re - u.im);
                let (x, y) = (u.re + d, u.im + d);
                let proj = if y < 0.0 {
                    Complex64::new(1.0, 0.0)
                } else if x < 0.0 {
                    Complex64::new(0.0, 1.0)
                } else {
                    Complex64::new(x, y)
                };
                p = proj * rot.conj();
            }
            p
        }
    }
}

/// Initial sliding-boundary map: log-linear radial interpolation for
/// annulus targets, per-ray linear interpolation between the diamond and
/// the outer circle for washer targets.
pub fn initial_map(mesh: Arc<PolarMesh>, target: &DomainSpec) -> Result<MapField> {
    let source = mesh
        .domain
        .as_annulus()
        .ok_or_else(|| Error::Config("the solver expects an annulus source mesh".into()))?;
    let _ = source;
    let n_theta = mesh.n_theta;
    let n_r = mesh.n_r;
    let mut values = vec![Complex64::default(); mesh.nodes.len()];
    let thetas: Vec<f64> = (0..n_theta).map(|j| 2.0 * PI * j as f64 / n_theta as f64).collect();
    let (inner_params, outer_params): (Vec<f64>, Vec<f64>) = match target {
        DomainSpec::Annulus(_) => (thetas.clone(), thetas.clone()),
        DomainSpec::Washer(_) => (thetas.iter().map(|&t| domain::diamond_param_at_angle(t)).collect(), thetas.clone()),
    };
    for i in 0..n_r {
        let t = i as f64 / (n_r - 1) as f64;
        for j in 0..n_theta {
            let idx = mesh.node(i, j);
            values[idx] = match target {
                DomainSpec::Annulus(a) => Complex64::from_polar(a.inner * (a.outer / a.inner).powf(t), thetas[j]),
                DomainSpec::Washer(_) => {
                    let p_in = domain::boundary_point(target, BoundaryComponent::Inner, inner_params[j]);
                    let p_out = domain::boundary_point(target, BoundaryComponent::Outer, outer_params[j]);
                    p_in + t * (p_out - p_in)
                }
            };
        }
    }
    let mut f = MapField::new(mesh, values);
    f.boundary_param = crate::mesh::BoundaryParams { inner: inner_params, outer: outer_params };
    f.target = Some(*target);
    Ok(f)
}

/// Replaces the values on `region` by the discrete-harmonic extension of
/// the complement values (cotangent-weight Laplace solve per component).
/// The energy never increases.
pub fn harmonic_replace(f: &MapField, region: &[usize]) -> Result<MapField> {
    let k = Stiffness::assemble(&f.mesh)?;
    harmonic_replace_with(&k, f, region, 1e-12)
}

pub(crate) fn harmonic_replace_with(k: &Stiffness, f: &MapField, region: &[usize], tol: f64) -> Result<MapField> {
    let n = f.values.len();
    let mut fixed = vec![true; n];
    for &i in region {
        if i >= n {
            return Err(Error::Config(format!("region node {i} out of range")));
        }
        fixed[i] = false;
    }
    let mut values = f.values.clone();
    fem::solve_dirichlet_complex(k, &mut values, &fixed, tol, 60 * n + 1000)?;
    Ok(MapField { mesh: Arc::clone(&f.mesh), values, boundary_param: f.boundary_param.clone(), target: f.target })
}

fn interior_nodes(mesh: &PolarMesh) -> Vec<usize> {
    (0..mesh.nodes.len()).filter(|&i| mesh.ring_index[i] != 0 && mesh.ring_index[i] != mesh.n_r - 1).collect()
}

/// Gradient of the discrete energy with respect to the boundary
/// parameters (chain rule through the boundary tangent).
fn boundary_gradient(k: &Stiffness, f: &MapField, target: &DomainSpec) -> (Vec<f64>, Vec<f64>) {
    let mut kv = vec![Complex64::default(); f.values.len()];
    k.gradient_complex(&f.values, &mut kv);
    let grad_of = |nodes: &[usize], params: &[f64], comp: BoundaryComponent| -> Vec<f64> {
        nodes
            .iter()
            .zip(params.iter())
            .map(|(&i, &s)| {
                let t = domain::boundary_tangent(target, comp, s);
                2.0 * (kv[i].conj() * t).re
            })
            .collect()
    };
    let gi = grad_of(&f.mesh.inner_boundary, &f.boundary_param.inner, BoundaryComponent::Inner);
    let go = grad_of(&f.mesh.outer_boundary, &f.boundary_param.outer, BoundaryComponent::Outer);
    (gi, go)
}

/// Jacobi-preconditioned descent direction: the gradient scaled by the
/// inverse diagonal curvature `2 K_ii |t_i|^2` of the fixed-interior
/// energy, which equalizes the parameter scales of the two components.
fn preconditioned_direction(
    k: &Stiffness,
    f: &MapField,
    target: &DomainSpec,
    gi: &[f64],
    go: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let dir_of = |nodes: &[usize], params: &[f64], grad: &[f64], comp: BoundaryComponent| -> Vec<f64> {
        nodes
            .iter()
            .zip(params.iter().zip(grad.iter()))
            .map(|(&i, (&s, &g))| {
                let t = domain::boundary_tangent(target, comp, s);
                let curv = 2.0 * k.diag()[i] * t.norm_sqr();
                g / curv.max(1e-300)
            })
            .collect()
    };
    (
        dir_of(&f.mesh.inner_boundary, &f.boundary_param.inner, gi, BoundaryComponent::Inner),
        dir_of(&f.mesh.outer_boundary, &f.boundary_param.outer, go, BoundaryComponent::Outer),
    )
}

/// One explicit boundary-descent step of size `step` along the
/// preconditioned gradient, followed by the monotone cyclic projection.
/// Interior values are left unchanged.
pub fn boundary_descent_step(f: &MapField, target: &DomainSpec, step: f64) -> Result<MapField> {
    let k = Stiffness::assemble(&f.mesh)?;
    let (gi, go) = boundary_gradient(&k, f, target);
    let (di, dn) = preconditioned_direction(&k, f, target, &gi, &go);
    Ok(apply_boundary_step(f, target, &di, &dn, step))
}

fn apply_boundary_step(f: &MapField, target: &DomainSpec, gi: &[f64], go: &[f64], step: f64) -> MapField {
    let mut out = f.clone();
    let move_params = |params: &[f64], grad: &[f64], period: f64| -> Vec<f64> {
        let trial: Vec<f64> = params.iter().zip(grad.iter()).map(|(s, g)| s - step * g).collect();
        project_cyclic_monotone(&trial, period)
    };
    out.boundary_param.inner =
        move_params(&f.boundary_param.inner, gi, target.boundary_period(BoundaryComponent::Inner));
    out.boundary_param.outer =
        move_params(&f.boundary_param.outer, go, target.boundary_period(BoundaryComponent::Outer));
    out.target = Some(*target);
    out.sync_boundary_values();
    out
}

/// Energy of the discrete field as the stiffness quadratic form; used as
/// the single objective inside the solver.
pub fn stiffness_energy(k: &Stiffness, f: &MapField) -> f64 {
    k.energy_complex(&f.values)
}

/// Projects a field onto the quarter-turn-equivariant subspace
/// `h(i z) = i h(z)`: group-averaging of node values (with the phase) and
/// of the boundary parameters. The energy is invariant under the group
/// action, so by convexity the averaged values cannot increase it; the
/// caller still guards the nonlinear boundary re-synchronization.
fn z4_symmetrize(f: &mut MapField, target: &DomainSpec) {
    let m = Arc::clone(&f.mesh);
    let n_theta = m.n_theta;
    if n_theta % 4 != 0 {
        return;
    }
    let q = n_theta / 4;
    let phase = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    for i in 0..m.n_r {
        for j in 0..q {
            let mut avg = Complex64::default();
            for kk in 0..4 {
                avg += f.values[m.node(i, j + kk * q)] * phase[kk].conj();
            }
            avg /= 4.0;
            for kk in 0..4 {
                let idx = m.node(i, j + kk * q);
                let v = avg * phase[kk];
                f.values[idx] =
                    if m.ring_index[idx] == 0 || m.ring_index[idx] == m.n_r - 1 { v } else { project_to_target(target, v) };
            }
        }
    }
    let avg_params = |params: &mut [f64], period: f64| {
        for j in 0..q {
            let mut s = 0.0;
            for kk in 0..4 {
                s += params[j + kk * q] - kk as f64 * period / 4.0;
            }
            s /= 4.0;
            for kk in 0..4 {
                params[j + kk * q] = s + kk as f64 * period / 4.0;
            }
        }
    };
    let pin = target.boundary_period(BoundaryComponent::Inner);
    let pout = target.boundary_period(BoundaryComponent::Outer);
    avg_params(&mut f.boundary_param.inner, pin);
    avg_params(&mut f.boundary_param.outer, pout);
    f.boundary_param.inner = project_cyclic_monotone(&f.boundary_param.inner, pin);
    f.boundary_param.outer = project_cyclic_monotone(&f.boundary_param.outer, pout);
    f.sync_boundary_values();
}

struct InteriorWorkspace {
    interior: Vec<usize>,
    fixed_boundary: Vec<bool>,
}

/// Interior update. Optionally attempts the full unconstrained harmonic
/// solve followed by pointwise projection onto the target closure,
/// accepted only when the (possibly line-searched) projected state does
/// not increase the energy. Then runs projected Gauss-Seidel sweeps: the
/// per-node subproblem is isotropic, so the projected local optimum is
/// the exact constrained minimizer and the energy is monotone; sweeps in
/// node order propagate active-set releases outward within one sweep.
/// Returns the new energy (never above `e_curr`) and whether the full
/// solve was accepted.
fn interior_update(
    k: &Stiffness,
    f: &mut MapField,
    target: &DomainSpec,
    ws: &InteriorWorkspace,
    cfg: &SolverConfig,
    e_curr: f64,
    try_full_solve: bool,
) -> Result<(f64, bool)> {
    let mut e_best = e_curr;
    let mut full_accepted = false;
    if try_full_solve {
        let mut cand = f.values.clone();
        let cap = 60 * cand.len() + 1000;
        fem::solve_dirichlet_complex(k, &mut cand, &ws.fixed_boundary, cfg.cg_tol, cap)?;
        let mut alpha = 1.0;
        while alpha > 1e-6 {
            let blend: Vec<Complex64> = f
                .values
                .iter()
                .zip(cand.iter())
                .enumerate()
                .map(|(i, (&v, &c))| {
                    if ws.fixed_boundary[i] {
                        v
                    } else {
                        project_to_target(target, v + alpha * (c - v))
                    }
                })
                .collect();
            let e_blend = k.energy_complex(&blend);
            if e_blend <= e_best + 1e-14 * e_best.abs() {
                f.values = blend;
                e_best = e_blend.min(e_best);
                full_accepted = true;
                break;
            }
            alpha *= 0.5;
        }
    }
    for _ in 0..cfg.interior_sweeps {
        for &i in &ws.interior {
            let mut s = Complex64::default();
            let mut diag = 0.0;
            for (j, w) in k.row(i) {
                if j == i {
                    diag = w;
                } else {
                    s += w * f.values[j];
                }
            }
            if diag <= 0.0 {
                continue;
            }
            f.values[i] = project_to_target(target, -s / diag);
        }
    }
    let e = k.energy_complex(&f.values);
    Ok((e.min(e_best), full_accepted))
}

/// Alternating free-boundary minimization from the standard initial map.
///
/// Washer targets are additionally solved from a corner-coalesced
/// initialization (the crack and no-crack basins compete near the onset
/// radius); the lower-energy converged state is returned. Both runs are
/// deterministic.
pub fn solve(mesh: Arc<PolarMesh>, target: &DomainSpec, cfg: &SolverConfig) -> Result<SolveResult> {
    let f = initial_map(Arc::clone(&mesh), target)?;
    let first = solve_from(f, target, cfg)?;
    if matches!(target, DomainSpec::Annulus(_)) {
        return Ok(first);
    }
    let mut pulled = initial_map(Arc::clone(&mesh), target)?;
    let period = target.boundary_period(BoundaryComponent::Inner);
    for s in pulled.boundary_param.inner.iter_mut() {
        let corner = (*s / (period / 4.0)).round() * period / 4.0;
        *s = corner + (*s - corner) * 0.25;
    }
    pulled.boundary_param.inner = project_cyclic_monotone(&pulled.boundary_param.inner, period);
    pulled.sync_boundary_values();
    let second = solve_from(pulled, target, cfg)?;
    let e1 = *first.energy_history.last().unwrap();
    let e2 = *second.energy_history.last().unwrap();
    Ok(if e2 < e1 { second } else { first })
}

/// Alternating free-boundary minimization from a caller-provided state
/// (the boundary parameters must be weakly monotone, one period total).
pub fn solve_from(start: MapField, target: &DomainSpec, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let mut f = start;
    let mesh = Arc::clone(&f.mesh);
    if mesh.domain.as_annulus().is_none() {
        return Err(Error::Config("the solver expects an annulus source mesh".into()));
    }
    let symmetrize = matches!(target, DomainSpec::Washer(_)) && mesh.n_theta % 4 == 0;
    let k = Stiffness::assemble(&mesh)?;
    let n = mesh.nodes.len();
    let mut fixed_boundary = vec![false; n];
    for &i in mesh.inner_boundary.iter().chain(mesh.outer_boundary.iter()) {
        fixed_boundary[i] = true;
    }
    let ws = InteriorWorkspace { interior: interior_nodes(&mesh), fixed_boundary };

    let mut energy = stiffness_energy(&k, &f);
    let mut history = vec![energy];
    let mut trial_step = cfg.boundary_step;
    let mut restarts = 0usize;
    let mut converged = false;
    let mut outer = 0usize;
    // The unconstrained interior solve is retried only after boundary
    // motion; once its projection is rejected it cannot improve until the
    // boundary data changes.
    let mut try_full_solve = true;
    // Best state seen, kept across perturbation restarts; the recorded
    // history is the monotone envelope of the energies reached.
    let mut best: Option<(MapField, f64)> = None;
    let mut cooloff = 0usize;

    while outer < cfg.max_outer_iters {
        outer += 1;
        let e_before = energy;
        let (e_int, full_accepted) = interior_update(&k, &mut f, target, &ws, cfg, energy, try_full_solve)?;
        energy = e_int;
        if try_full_solve && !full_accepted {
            try_full_solve = false;
        }
        let interior_progress = (e_before - energy) / energy.abs().max(1.0);

        // Boundary descent along the preconditioned gradient. The trial
        // step uses a spectral (Barzilai-Borwein) estimate from the last
        // accepted move, backtracked by halving until non-increasing;
        // spectral steps traverse the shallow coalescence valleys that a
        // fixed step crawls through.
        let mut grad_rms = 0.0;
        let mut boundary_moved = false;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for _ in 0..cfg.boundary_substeps.max(1) {
            let (gi, go) = boundary_gradient(&k, &f, target);
            let grad_sq: f64 = gi.iter().chain(go.iter()).map(|g| g * g).sum();
            grad_rms = (grad_sq / (gi.len() + go.len()) as f64).sqrt();
            if grad_rms < cfg.grad_tol {
                break;
            }
            let (di, dn) = preconditioned_direction(&k, &f, target, &gi, &go);
            let params: Vec<f64> =
                f.boundary_param.inner.iter().chain(f.boundary_param.outer.iter()).copied().collect();
            let dir: Vec<f64> = di.iter().chain(dn.iter()).copied().collect();
            let mut step = trial_step;
            if let Some((ps, pd)) = &prev {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for idx in 0..params.len() {
                    let ds = params[idx] - ps[idx];
                    let dy = dir[idx] - pd[idx];
                    ss += ds * ds;
                    sy += ds * dy;
                }
                if sy > 0.0 && ss > 0.0 {
                    step = (ss / sy).clamp(1e-8, 1e4);
                }
            }
            let mut accepted = false;
            for _ in 0..60 {
                let cand = apply_boundary_step(&f, target, &di, &dn, step);
                let e_cand = stiffness_energy(&k, &cand);
                if e_cand <= energy {
                    if e_cand < energy {
                        boundary_moved = true;
                    }
                    f = cand;
                    energy = e_cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if accepted {
                prev = Some((params, dir));
                trial_step = step.max(1e-10);
            } else {
                break;
            }
        }
        if boundary_moved {
            try_full_solve = true;
        }
        if symmetrize {
            let mut cand = f.clone();
            z4_symmetrize(&mut cand, target);
            let e_sym = stiffness_energy(&k, &cand);
            if e_sym <= energy + 1e-12 * energy.abs() {
                f = cand;
                energy = e_sym.min(energy);
            }
        }
        let envelope = energy.min(*history.last().unwrap());
        history.push(envelope);

        if cooloff > 0 {
            cooloff -= 1;
            continue;
        }
        let window = cfg.stagnation_window;
        let stagnant = history.len() > window && {
            let prev = history[history.len() - 1 - window];
            prev - envelope <= cfg.energy_rel_tol * envelope.abs().max(1.0)
        };
        let flat_gradient = grad_rms < cfg.grad_tol && interior_progress <= cfg.energy_rel_tol;
        if stagnant || flat_gradient {
            // A stagnating run with a refused certificate gets one seeded
            // boundary-perturbation restart (symmetric saddle escape).
            let should_restart = cfg.enable_restart
                && restarts == 0
                && mesh.domain.as_annulus().is_some()
                && minimality_certificate(&f, &CertThresholds::default())
                    .map(|r| r.verdict == Verdict::NotCertified)
                    .unwrap_or(false);
            if should_restart {
                restarts += 1;
                if best.as_ref().map_or(true, |(_, be)| energy < *be) {
                    best = Some((f.clone(), energy));
                }
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
                let jiggle = |params: &[f64], period: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                    let scale = 0.3 * period / params.len() as f64;
                    let moved: Vec<f64> = params.iter().map(|s| s + rng.gen_range(-1.0..1.0) * scale).collect();
                    project_cyclic_monotone(&moved, period)
                };
                f.boundary_param.inner =
                    jiggle(&f.boundary_param.inner, target.boundary_period(BoundaryComponent::Inner), &mut rng);
                f.boundary_param.outer =
                    jiggle(&f.boundary_param.outer, target.boundary_period(BoundaryComponent::Outer), &mut rng);
                f.sync_boundary_values();
                energy = stiffness_energy(&k, &f);
                trial_step = cfg.boundary_step;
                try_full_solve = true;
                cooloff = 3 * cfg.stagnation_window;
                continue;
            }
            converged = true;
            break;
        }
    }
    if let Some((bf, be)) = best {
        if be < energy {
            f = bf;
            energy = be;
        }
    }

    let d = crate::mesh::element_derivatives(&f)?;
    let total_area: f64 = crate::numerics::kahan_sum(d.area.iter().copied());
    let neg_area =
        crate::numerics::kahan_sum((0..d.len()).map(|t| if d.jacobian[t] < 0.0 { d.area[t] } else { 0.0 }));
    Ok(SolveResult {
        field: f,
        energy_history: history,
        converged,
        outer_iters: outer,
        j_negative_area_fraction: neg_area / total_area,
        restarts,
    })
}

/// Quotient of the rotation gauge: best source grid rotation (with a
/// target phase where the target is rotation symmetric) aligning `f`
/// with `reference`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaugeAlignment {
    pub alpha: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn gauge_align(f: &MapField, reference: &MapField) -> Result<GaugeAlignment> {
    let m = &f.mesh;
    if m.n_r != reference.mesh.n_r || m.n_theta != reference.mesh.n_theta || m.domain != reference.mesh.domain {
        return Err(Error::Config("gauge alignment requires a common mesh".into()));
    }
    // Lumped node weights.
    let mut w = vec![0.0f64; m.nodes.len()];
    for t in 0..m.triangles.len() {
        for &v in &m.triangles[t] {
            w[v] += m.area(t) / 3.0;
        }
    }
    let phases: &[Complex64] = match f.target {
        Some(DomainSpec::Annulus(_)) => &[],
        Some(DomainSpec::Washer(_)) => &[
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ],
        None => &[Complex64::new(1.0, 0.0)],
    };
    let n_theta = m.n_theta;
    let mut best: Option<(f64, usize, Complex64)> = None;
    for kk in 0..n_theta {
        // Weighted cross-correlation and norms of the rotated field.
        let mut cross = Complex64::default();
        let mut norm_f = 0.0;
        let mut norm_r = 0.0;
        for i in 0..m.n_r {
            for j in 0..n_theta {
                let src = (j + n_theta - kk) % n_theta;
                let vf = f.values[m.node(i, src)];
                let vr = reference.values[m.node(i, j)];
                let wt = w[m.node(i, j)];
                cross += wt * vf * vr.conj();
                norm_f += wt * vf.norm_sqr();
                norm_r += wt * vr.norm_sqr();
            }
        }
        let candidates: Vec<Complex64> = if phases.is_empty() {
            // Continuous phase: the optimal beta makes e^{i beta} cross real
            // positive.
            let beta = if cross.norm() > 0.0 { -cross.arg() } else { 0.0 };
            vec![Complex64::from_polar(1.0, beta)]
        } else {
            phases.to_vec()
        };
        for phase in candidates {
            let l2sq = norm_f + norm_r - 2.0 * (phase * cross).re;
            if best.map_or(true, |(b, _, _)| l2sq < b) {
                best = Some((l2sq, kk, phase));
            }
        }
    }
    let (_, kk, phase) = best.unwrap();
    let mut l2sq = 0.0;
    let mut linf = 0.0f64;
    let mut wsum = 0.0;
    for i in 0..m.n_r {
        for j in 0..n_theta {
            let src = (j + n_theta - kk) % n_theta;
            let diff = (phase * f.values[m.node(i, src)] - reference.values[m.node(i, j)]).norm();
            let wt = w[m.node(i, j)];
            l2sq += wt * diff * diff;
            wsum += wt;
            linf = linf.max(diff);
        }
    }
    Ok(GaugeAlignment { alpha: 2.0 * PI * kk as f64 / n_theta as f64, l2: (l2sq / wsum).sqrt(), linf })
}
