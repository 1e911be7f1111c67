//! Scratch diagnostics for solver tuning. Not part of the shipped API.

use hopfmin_core::cracks::{default_thresholds, ray_profile};
use hopfmin_core::domain::DomainSpec;
use hopfmin_core::energy::dirichlet_energy;
use hopfmin_core::mesh::{build_mesh, element_derivatives};
use hopfmin_core::minimizer::{solve, SolverConfig};
use std::sync::Arc;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "case2".into());
    match which.as_str() {
        "case2" => case2(),
        "washer" => washer(std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(3.0)),
        "profile" => profile(
            std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(3.0),
            std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(49),
            std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(192),
        ),
        _ => eprintln!("unknown diag {which}"),
    }
}

fn profile(big_r: f64, nr: usize, nt: usize) {
    let mesh = Arc::new(build_mesh(&DomainSpec::annulus(1.0, big_r).unwrap(), nr, nt).unwrap());
    let target = DomainSpec::washer(2.0).unwrap();
    let t0 = std::time::Instant::now();
    let res = solve(Arc::clone(&mesh), &target, &SolverConfig::default()).unwrap();
    println!("R={big_r} {nr}x{nt}: elapsed {:?}, converged={}, E={}", t0.elapsed(), res.converged, res.energy_history.last().unwrap());
    let f = &res.field;
    let d = element_derivatives(f).unwrap();
    println!("median J {:.3e}", d.median_jacobian());
    let mut tri_j_min = vec![f64::INFINITY; mesh.nodes.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            tri_j_min[v] = tri_j_min[v].min(d.jacobian[t]);
        }
    }
    // Corner-adjacent ray (j = 0) vs mid-edge ray (j = nt/8).
    for j in [0usize, nt / 8] {
        println!("-- ray {j}");
        let v0 = f.values[mesh.node(0, j)];
        for i in 0..16.min(nr) {
            let idx = mesh.node(i, j);
            println!(
                "  ring {i:2}: |v - v0| = {:.3e}, dist_inner = {:.3e}, minJ = {:.3e}",
                (f.values[idx] - v0).norm(),
                target.boundary_distance(hopfmin_core::BoundaryComponent::Inner, f.values[idx]),
                tri_j_min[idx]
            );
        }
    }
}

fn case2() {
    let mesh = Arc::new(build_mesh(&DomainSpec::annulus(1.0, 4.0).unwrap(), 65, 256).unwrap());
    let target = DomainSpec::annulus(1.0, 1.25).unwrap();
    let t0 = std::time::Instant::now();
    let res = solve(Arc::clone(&mesh), &target, &SolverConfig::default()).unwrap();
    println!("elapsed {:?}", t0.elapsed());
    println!("converged={} iters={} restarts={}", res.converged, res.outer_iters, res.restarts);
    let e = dirichlet_energy(&res.field).unwrap().total;
    let oracle = 2.0 * std::f64::consts::PI * 2.0f64.ln() + 1.875 * std::f64::consts::PI;
    println!("energy {e} oracle {oracle} rel {}", (e - oracle).abs() / oracle);
    let d = element_derivatives(&res.field).unwrap();
    println!("median J = {:.3e}", d.median_jacobian());
    println!("j_negative_area_fraction {:.3e}", res.j_negative_area_fraction);
    // Walk ray 0.
    let f = &res.field;
    for i in 0..40 {
        let idx = mesh.node(i, 0);
        let v = f.values[idx];
        println!(
            "ring {i:2} rho {:.4} |v| {:.6} dist {:.3e}",
            mesh.nodes[idx].norm(),
            v.norm(),
            (v.norm() - 1.0).abs()
        );
    }
    let thresholds = default_thresholds(f, &target).unwrap();
    println!("eps_dist {:.3e} eps_J {:.3e}", thresholds.eps_dist, thresholds.eps_jacobian);
    let p = ray_profile(f, &target, thresholds).unwrap();
    let mut rts = p.r_theta.clone();
    rts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("r_theta min {:.4} median {:.4} max {:.4}", rts[0], rts[rts.len() / 2], rts[rts.len() - 1]);
    println!("energy history len {}", res.energy_history.len());
}

fn washer(big_r: f64) {
    let mesh = Arc::new(build_mesh(&DomainSpec::annulus(1.0, big_r).unwrap(), 33, 128).unwrap());
    let target = DomainSpec::washer(2.0).unwrap();
    let t0 = std::time::Instant::now();
    let res = solve(Arc::clone(&mesh), &target, &SolverConfig::default()).unwrap();
    println!("elapsed {:?}", t0.elapsed());
    println!("converged={} iters={} restarts={}", res.converged, res.outer_iters, res.restarts);
    let h = &res.energy_history;
    println!("E0 {} E_end {}", h[0], h[h.len() - 1]);
    let tail: Vec<f64> = h.iter().rev().take(8).copied().collect();
    println!("tail {tail:?}");
    let report = hopfmin_core::cracks::crack_report(&res.field, &target).unwrap();
    println!(
        "cracks {} outer {} crosscut {} corner_ok {:?} defect {:?}",
        report.inner_cracks.len(),
        report.outer_cracks.len(),
        report.crosscut_detected,
        report.corner_targeting_ok,
        report.symmetry_defect
    );
    for c in &report.inner_cracks {
        println!("  crack rays {} len {:.4} target ({:.4},{:.4})", c.ray_count, c.length_radius, c.target_point[0], c.target_point[1]);
    }
    println!("j_negative {:.3e}", res.j_negative_area_fraction);
    let d = element_derivatives(&res.field).unwrap();
    let mut folds: Vec<(usize, f64, f64, f64)> = (0..d.len())
        .filter(|&t| d.jacobian[t] < -1e-10)
        .map(|t| (t, d.jacobian[t], d.barycenter[t].norm(), d.barycenter[t].arg()))
        .collect();
    folds.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    println!("fold triangles: {}", folds.len());
    for (t, j, r, th) in folds.iter().take(8) {
        println!("  tri {t}: J={j:.3e} at rho={r:.4} theta={th:.4}");
    }
    let cert = hopfmin_core::hopf::minimality_certificate(&res.field, &hopfmin_core::hopf::CertThresholds::default()).unwrap();
    println!("certificate {cert:?}");

    // Inspect the ray through the corner direction theta = 0.
    let corner = num_complex::Complex64::new(1.0, 0.0);
    let mut tri_j_min = vec![f64::INFINITY; mesh.nodes.len()];
    let dd = element_derivatives(&res.field).unwrap();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            tri_j_min[v] = tri_j_min[v].min(dd.jacobian[t]);
        }
    }
    for i in 0..10 {
        let idx = mesh.node(i, 0);
        println!(
            "ray0 ring {i}: |v-corner| = {:.3e}, min adj J = {:.3e}",
            (res.field.values[idx] - corner).norm(),
            tri_j_min[idx]
        );
    }
    let p = &res.field.boundary_param.inner;
    println!("inner params near 0: {:?}", &p[..4]);
    println!("inner params near end: {:?}", &p[p.len() - 4..]);

    // Probe: force coalescence at the corners in the initialization and see
    // whether relaxation keeps the cracks and at which energy it lands.
    let mut forced = hopfmin_core::minimizer::initial_map(Arc::clone(&mesh), &target).unwrap();
    let period = 4.0 * std::f64::consts::SQRT_2;
    let corner_pull = |s: f64| -> f64 {
        // Pull each parameter toward its nearest corner parameter.
        let q = (s / (period / 4.0)).round();
        let corner = q * period / 4.0;
        corner + (s - corner) * 0.25
    };
    for s in forced.boundary_param.inner.iter_mut() {
        *s = corner_pull(*s);
    }
    forced.sync_boundary_values();
    let k = hopfmin_core::fem::Stiffness::assemble(&mesh).unwrap();
    println!("forced-coalescence start energy {}", k.energy_complex(&forced.values));
    let res2 = hopfmin_core::minimizer::solve_from(forced, &target, &SolverConfig::default()).unwrap();
    println!("forced solve: converged={} E_end={}", res2.converged, res2.energy_history.last().unwrap());
    let report2 = hopfmin_core::cracks::crack_report(&res2.field, &target).unwrap();
    println!("forced cracks {} defect {:?}", report2.inner_cracks.len(), report2.symmetry_defect);
}

#[allow(dead_code)]
fn fold_locations() {}
