//! Per-ray crack decomposition of a solved field and the structural
//! checks on it: ray confinement, no crosscuts, corner targeting and
//! quarter-turn symmetry for washer targets.

use crate::domain::{BoundaryComponent, DomainSpec, DIAMOND_CORNERS};
use crate::error::{Error, Result};
use crate::mesh::{element_derivatives, MapField};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Collapse radii per ray: on ray `theta_j` the map is considered
/// collapsed onto the inner (outer) target boundary up to radius
/// `r_theta` (down to `big_r_theta`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayProfile {
    pub theta: Vec<f64>,
    pub r_theta: Vec<f64>,
    #[serde(rename = "R_theta")]
    pub big_r_theta: Vec<f64>,
}

/// Detection thresholds; both signals (distance to the target boundary
/// and Jacobian collapse) must fire.
#[derive(Debug, Clone, Copy)]
pub struct CrackThresholds {
    pub eps_dist: f64,
    pub eps_jacobian: f64,
}

/// Node-local Jacobian: the minimum over the adjacent triangles. The
/// minimum (rather than an average) catches measure-zero slit cracks,
/// whose flanking triangles away from the slit stay healthy.
fn node_jacobians(f: &MapField) -> Result<Vec<f64>> {
    let d = element_derivatives(f)?;
    let m = &f.mesh;
    let mut min_j = vec![f64::INFINITY; m.nodes.len()];
    for t in 0..d.len() {
        for &v in &m.triangles[t] {
            min_j[v] = min_j[v].min(d.jacobian[t]);
        }
    }
    Ok(min_j.iter().map(|&j| if j.is_finite() { j } else { 0.0 }).collect())
}

/// Default thresholds: `eps = 1e-2 diam(Y)`, `eps_J = 1e-3 median(J)`.
pub fn default_thresholds(f: &MapField, target: &DomainSpec) -> Result<CrackThresholds> {
    let d = element_derivatives(f)?;
    Ok(CrackThresholds { eps_dist: 1e-2 * target.diameter(), eps_jacobian: 1e-3 * d.median_jacobian() })
}

/// Computes the per-ray collapse radii of a converged field on an
/// annulus source mesh.
pub fn ray_profile(f: &MapField, target: &DomainSpec, thresholds: CrackThresholds) -> Result<RayProfile> {
    let m = &f.mesh;
    let source = m
        .domain
        .as_annulus()
        .ok_or_else(|| Error::Config("ray profiles are defined on annulus source meshes".into()))?;
    let node_j = node_jacobians(f)?;
    let n_theta = m.n_theta;
    let n_r = m.n_r;
    let mut theta = Vec::with_capacity(n_theta);
    let mut r_theta = Vec::with_capacity(n_theta);
    let mut big_r_theta = Vec::with_capacity(n_theta);
    let collapsed = |idx: usize, comp: BoundaryComponent| -> bool {
        let dist = target.boundary_distance(comp, f.values[idx]);
        dist < thresholds.eps_dist && node_j[idx] < thresholds.eps_jacobian
    };
    for j in 0..n_theta {
        theta.push(2.0 * PI * j as f64 / n_theta as f64);
        // Walk outward from the inner ring while both collapse signals fire.
        let mut k_in = 0usize;
        while k_in + 1 < n_r && collapsed(m.node(k_in, j), BoundaryComponent::Inner) {
            k_in += 1;
        }
        // k_in now indexes the first non-collapsed ring; the collapse
        // radius is the previous ring, refined by the distance signal.
        let rt = if k_in == 0 {
            source.inner
        } else {
            let last = m.nodes[m.node(k_in - 1, j)].norm();
            let next = m.nodes[m.node(k_in, j)].norm();
            let d_last = target.boundary_distance(BoundaryComponent::Inner, f.values[m.node(k_in - 1, j)]);
            let d_next = target.boundary_distance(BoundaryComponent::Inner, f.values[m.node(k_in, j)]);
            if d_next > thresholds.eps_dist && d_next > d_last {
                let t = ((thresholds.eps_dist - d_last) / (d_next - d_last)).clamp(0.0, 1.0);
                last + t * (next - last)
            } else {
                last
            }
        };
        let mut k_out = 0usize;
        while k_out + 1 < n_r && collapsed(m.node(n_r - 1 - k_out, j), BoundaryComponent::Outer) {
            k_out += 1;
        }
        let rt_out = if k_out == 0 {
            source.outer
        } else {
            m.nodes[m.node(n_r - k_out, j)].norm()
        };
        r_theta.push(rt);
        big_r_theta.push(rt_out);
    }
    Ok(RayProfile { theta, r_theta, big_r_theta })
}

/// One detected crack: a maximal angular interval of collapsed rays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrackSegment {
    pub theta_start: f64,
    pub theta_end: f64,
    pub ray_count: usize,
    /// Largest collapse depth over the interval, in radius units.
    pub length_radius: f64,
    /// Same depth in grid rings.
    pub length_rings: f64,
    pub target_point: [f64; 2],
}

/// Crack geometry report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrackReport {
    pub r_theta: Vec<f64>,
    #[serde(rename = "R_theta")]
    pub big_r_theta: Vec<f64>,
    pub inner_cracks: Vec<CrackSegment>,
    pub outer_cracks: Vec<CrackSegment>,
    pub crosscut_detected: bool,
    pub middle_region_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub washer_corner_alignment: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corner_targeting_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetry_defect: Option<f64>,
}

fn collect_segments(
    flags: &[bool],
    depth: impl Fn(usize) -> f64,
    ring_size: f64,
    target_of: impl Fn(usize) -> Complex64,
) -> Vec<CrackSegment> {
    let n = flags.len();
    let mut segments = Vec::new();
    let mean_target = |rays: &[usize]| -> Complex64 {
        let mut s = Complex64::default();
        for &r in rays {
            s += target_of(r);
        }
        s / rays.len() as f64
    };
    if flags.iter().all(|&b| b) {
        // Full collar: one segment covering the whole circle.
        let max_depth = (0..n).map(&depth).fold(0.0f64, f64::max);
        let rays: Vec<usize> = (0..n).collect();
        let p = mean_target(&rays);
        segments.push(CrackSegment {
            theta_start: 0.0,
            theta_end: 2.0 * PI,
            ray_count: n,
            length_radius: max_depth,
            length_rings: max_depth / ring_size,
            target_point: [p.re, p.im],
        });
        return segments;
    }
    let theta = |j: usize| 2.0 * PI * (j % n) as f64 / n as f64;
    // Scan cyclically starting just after a gap.
    let start = (0..n).find(|&j| !flags[j]).unwrap();
    let mut j = start;
    for _ in 0..n {
        j = (j + 1) % n;
        if flags[j] {
            let seg_start = j;
            let mut count = 0usize;
            while flags[(seg_start + count) % n] && count < n {
                count += 1;
            }
            let rays: Vec<usize> = (0..count).map(|k| (seg_start + k) % n).collect();
            let max_depth = rays.iter().map(|&r| depth(r)).fold(0.0f64, f64::max);
            let p = mean_target(&rays);
            segments.push(CrackSegment {
                theta_start: theta(seg_start),
                theta_end: theta(seg_start + count - 1),
                ray_count: count,
                length_radius: max_depth,
                length_rings: max_depth / ring_size,
                target_point: [p.re, p.im],
            });
            j = (seg_start + count - 1) % n;
            if (seg_start + count) % n == start {
                break;
            }
        }
        if j == start {
            break;
        }
    }
    segments
}

/// Aggregates the ray profile into crack segments and runs the washer
/// structure checks.
pub fn crack_report(f: &MapField, target: &DomainSpec) -> Result<CrackReport> {
    let thresholds = default_thresholds(f, target)?;
    let profile = ray_profile(f, target, thresholds)?;
    let m = &f.mesh;
    let source = m.domain.as_annulus().unwrap();
    let n_theta = m.n_theta;
    // Grid tolerance: half of the first/last ring spacing.
    let ring_in = m.nodes[m.node(1, 0)].norm() - m.nodes[m.node(0, 0)].norm();
    let ring_out = m.nodes[m.node(m.n_r - 1, 0)].norm() - m.nodes[m.node(m.n_r - 2, 0)].norm();
    let inner_flags: Vec<bool> = profile.r_theta.iter().map(|&r| r > source.inner + 0.5 * ring_in).collect();
    let outer_flags: Vec<bool> =
        profile.big_r_theta.iter().map(|&r| r < source.outer - 0.5 * ring_out).collect();
    let inner_cracks = collect_segments(
        &inner_flags,
        |j| profile.r_theta[j] - source.inner,
        ring_in,
        |j| f.values[m.node(0, j)],
    );
    let outer_cracks = collect_segments(
        &outer_flags,
        |j| source.outer - profile.big_r_theta[j],
        ring_out,
        |j| f.values[m.node(m.n_r - 1, j)],
    );
    let crosscut_detected =
        profile.r_theta.iter().zip(profile.big_r_theta.iter()).any(|(&a, &b)| a >= b);
    let (washer_corner_alignment, corner_targeting_ok, symmetry_defect) = match target {
        DomainSpec::Washer(_) => {
            let eps = thresholds.eps_dist;
            let mut angles = Vec::new();
            let mut ok = true;
            for seg in &inner_cracks {
                let p = Complex64::new(seg.target_point[0], seg.target_point[1]);
                let near_corner = DIAMOND_CORNERS.iter().any(|c| (p - c).norm() < eps);
                if near_corner {
                    angles.push(0.5 * (seg.theta_start + seg.theta_end));
                } else {
                    ok = false;
                }
            }
            // Cracks on the outer circle would violate convexity there.
            if !outer_cracks.is_empty() {
                ok = false;
            }
            let defect = if n_theta % 4 == 0 {
                let quarter = n_theta / 4;
                let mut worst = 0.0f64;
                for i in 0..m.n_r {
                    for j in 0..n_theta {
                        let a = f.values[m.node(i, (j + quarter) % n_theta)];
                        let b = Complex64::i() * f.values[m.node(i, j)];
                        worst = worst.max((a - b).norm());
                    }
                }
                Some(worst)
            } else {
                None
            };
            (Some(angles), Some(ok), defect)
        }
        DomainSpec::Annulus(_) => (None, None, None),
    };
    Ok(CrackReport {
        r_theta: profile.r_theta,
        big_r_theta: profile.big_r_theta,
        inner_cracks,
        outer_cracks,
        crosscut_detected,
        middle_region_ok: !crosscut_detected,
        washer_corner_alignment,
        corner_targeting_ok,
        symmetry_defect,
    })
}

/// CSV rows `theta,r_theta,R_theta`.
pub fn write_ray_csv<W: std::io::Write>(p: &RayProfile, mut w: W) -> Result<()> {
    writeln!(w, "theta,r_theta,R_theta")?;
    for j in 0..p.theta.len() {
        writeln!(w, "{},{},{}", p.theta[j], p.r_theta[j], p.big_r_theta[j])?;
    }
    Ok(())
}
