//! Tracing horizontal and vertical trajectories of a quadratic
//! differential given by Laurent coefficients.

use crate::domain::AnnulusSpec;
use crate::error::{Error, Result};
use crate::hopf::QuadDifferential;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    /// `phi(z) zdot^2 > 0` along the curve.
    Horizontal,
    /// `phi(z) zdot^2 < 0` along the curve.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Boundary,
    ClosedLoop,
    ZeroOfPhi,
    MaxLength,
}

/// Traced polyline with the branch-resolved unit direction at each point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<[f64; 2]>,
    pub directions: Vec<[f64; 2]>,
    /// Index of the start point `z0` within `points`.
    pub start_index: usize,
    pub kind: TrajectoryKind,
    pub closed: bool,
    pub terminated_reason: Termination,
    pub arclength: f64,
}

impl Trajectory {
    pub fn point(&self, k: usize) -> Complex64 {
        Complex64::new(self.points[k][0], self.points[k][1])
    }

    pub fn direction(&self, k: usize) -> Complex64 {
        Complex64::new(self.directions[k][0], self.directions[k][1])
    }
}

const PHI_ZERO: f64 = 1e-14;

/// Unit direction of the trajectory field at `z`, resolved to the branch
/// closest to `reference`.
fn direction_at(q: &QuadDifferential, kind: TrajectoryKind, z: Complex64, reference: Complex64) -> Option<Complex64> {
    let phi = q.eval(z);
    if phi.norm() < PHI_ZERO {
        return None;
    }
    let s = phi.sqrt();
    let mut dir = match kind {
        TrajectoryKind::Horizontal => 1.0 / s,
        TrajectoryKind::Vertical => Complex64::i() / s,
    };
    dir /= dir.norm();
    if (dir * reference.conj()).re < 0.0 {
        dir = -dir;
    }
    Some(dir)
}

/// Traces a trajectory of `phi` through `z0` with a fixed arclength step
/// (classical 4th-order one-step method), continuing the square-root
/// branch along the curve.
pub fn trace_trajectory(
    q: &QuadDifferential,
    z0: Complex64,
    kind: TrajectoryKind,
    step: f64,
    max_len: f64,
    domain: &AnnulusSpec,
) -> Result<Trajectory> {
    trace_trajectory_with_branch(q, z0, kind, step, max_len, domain, false)
}

struct HalfTrace {
    points: Vec<[f64; 2]>,
    directions: Vec<[f64; 2]>,
    reason: Termination,
    closed: bool,
    arclength: f64,
}

fn trace_half(
    q: &QuadDifferential,
    z0: Complex64,
    d0: Complex64,
    kind: TrajectoryKind,
    step: f64,
    budget: f64,
    domain: &AnnulusSpec,
) -> HalfTrace {
    let mut points = vec![[z0.re, z0.im]];
    let mut directions = vec![[d0.re, d0.im]];
    let mut z = z0;
    let mut dir = d0;
    let mut arclength = 0.0;
    let mut reason = Termination::MaxLength;
    let mut closed = false;
    let inside = |p: Complex64| -> bool {
        let r = p.norm();
        r >= domain.inner - 1e-12 && r <= domain.outer + 1e-12
    };
    let mut steps = 0usize;
    while arclength + step <= budget {
        // Classical RK4 on the unit direction field; all stage branches
        // are resolved against the last accepted direction.
        let stages = (|| {
            let k1 = direction_at(q, kind, z, dir)?;
            let k2 = direction_at(q, kind, z + 0.5 * step * k1, dir)?;
            let k3 = direction_at(q, kind, z + 0.5 * step * k2, dir)?;
            let k4 = direction_at(q, kind, z + step * k3, dir)?;
            Some((k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0)
        })();
        let Some(advance) = stages else {
            reason = Termination::ZeroOfPhi;
            break;
        };
        let z_next = z + step * advance;
        if !inside(z_next) {
            // Bisect the exit onto the boundary circle.
            let mut lo = 0.0f64;
            let mut hi = 1.0f64;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(z + step * advance * mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let z_exit = z + step * advance * lo;
            arclength += step * lo;
            let exit_dir = direction_at(q, kind, z_exit, dir).unwrap_or(dir);
            points.push([z_exit.re, z_exit.im]);
            directions.push([exit_dir.re, exit_dir.im]);
            reason = Termination::Boundary;
            break;
        }
        let Some(dir_next) = direction_at(q, kind, z_next, dir) else {
            reason = Termination::ZeroOfPhi;
            break;
        };
        z = z_next;
        dir = dir_next;
        arclength += step;
        steps += 1;
        points.push([z.re, z.im]);
        directions.push([dir.re, dir.im]);
        if steps >= 10 && (z - z0).norm() < step && (dir * d0.conj()).re > 0.0 {
            closed = true;
            reason = Termination::ClosedLoop;
            break;
        }
    }
    HalfTrace { points, directions, reason, closed, arclength }
}

/// As `trace_trajectory`, optionally starting on the opposite branch of
/// the square root. The trace is maximal: unless the forward half closes
/// into a loop, the opposite branch is traced as well and prepended, so
/// the polyline covers the trajectory on both sides of `z0`.
pub fn trace_trajectory_with_branch(
    q: &QuadDifferential,
    z0: Complex64,
    kind: TrajectoryKind,
    step: f64,
    max_len: f64,
    domain: &AnnulusSpec,
    flip_branch: bool,
) -> Result<Trajectory> {
    if !(step > 0.0 && max_len > step) {
        return Err(Error::Config(format!("need 0 < step < max_len, got step={step}, max_len={max_len}")));
    }
    let rho0 = z0.norm();
    if rho0 < domain.inner - 1e-12 || rho0 > domain.outer + 1e-12 {
        return Err(Error::DomainEval(format!("start point |z0|={rho0} outside the annulus")));
    }
    if q.eval(z0).norm() < PHI_ZERO {
        return Err(Error::UndefinedDirection(format!("phi vanishes at the start point {z0}")));
    }
    let seed = if flip_branch { -Complex64::new(1.0, 0.0) } else { Complex64::new(1.0, 0.0) };
    let d0 = direction_at(q, kind, z0, seed).unwrap();

    let fwd = trace_half(q, z0, d0, kind, step, max_len, domain);
    if fwd.closed {
        return Ok(Trajectory {
            points: fwd.points,
            directions: fwd.directions,
            start_index: 0,
            kind,
            closed: true,
            terminated_reason: Termination::ClosedLoop,
            arclength: fwd.arclength,
        });
    }
    let bwd = trace_half(q, z0, -d0, kind, step, max_len, domain);
    // Prepend the reversed opposite half; its traversal direction is the
    // negated branch so the concatenated tangents stay continuous.
    let mut points: Vec<[f64; 2]> = bwd.points[1..].iter().rev().copied().collect();
    let mut directions: Vec<[f64; 2]> = bwd.directions[1..].iter().rev().map(|d| [-d[0], -d[1]]).collect();
    let start_index = points.len();
    points.extend_from_slice(&fwd.points);
    directions.extend_from_slice(&fwd.directions);
    let reason = match (fwd.reason, bwd.reason) {
        (Termination::ZeroOfPhi, _) | (_, Termination::ZeroOfPhi) => Termination::ZeroOfPhi,
        (Termination::MaxLength, _) | (_, Termination::MaxLength) => Termination::MaxLength,
        _ => Termination::Boundary,
    };
    Ok(Trajectory {
        points,
        directions,
        start_index,
        kind,
        closed: false,
        terminated_reason: reason,
        arclength: fwd.arclength + bwd.arclength,
    })
}

/// CSV rows `x,y,s` along the polyline.
pub fn write_trajectory_csv<W: Write>(t: &Trajectory, mut w: W) -> Result<()> {
    writeln!(w, "x,y,s")?;
    let mut s = 0.0;
    for k in 0..t.points.len() {
        if k > 0 {
            s += (t.point(k) - t.point(k - 1)).norm();
        }
        writeln!(w, "{},{},{}", t.points[k][0], t.points[k][1], s)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn inverse_square(c: f64) -> QuadDifferential {
        QuadDifferential::from_terms(2, &[(-2, Complex64::new(c, 0.0))]).unwrap()
    }

    fn annulus(r: f64, big_r: f64) -> AnnulusSpec {
        AnnulusSpec::new(r, big_r).unwrap()
    }

    #[test]
    fn positive_c_vertical_traces_close_into_circles() {
        let q = inverse_square(1.0);
        let t = trace_trajectory(&q, Complex64::new(1.5, 0.0), TrajectoryKind::Vertical, 1e-3, 20.0, &annulus(1.0, 2.0)).unwrap();
        assert!(t.closed, "trace should close, reason {:?}", t.terminated_reason);
        let drift = t
            .points
            .iter()
            .map(|p| (Complex64::new(p[0], p[1]).norm() - 1.5).abs())
            .fold(0.0f64, f64::max);
        assert!(drift < 1e-6, "radius drift {drift}");
        assert!((t.point(t.points.len() - 1) - t.point(0)).norm() < 1e-3);
    }

    #[test]
    fn negative_c_vertical_traces_are_rays() {
        let q = inverse_square(-1.0);
        let t = trace_trajectory(&q, Complex64::new(1.5, 0.0), TrajectoryKind::Vertical, 1e-3, 20.0, &annulus(1.0, 2.0)).unwrap();
        assert_eq!(t.terminated_reason, Termination::Boundary);
        let max_dev = t.points.iter().map(|p| p[1].abs()).fold(0.0f64, f64::max);
        assert!(max_dev < 1e-8, "angular deviation {max_dev}");
        let end = t.point(t.points.len() - 1).norm();
        assert!((end - 2.0).abs() < 1e-9 || (end - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_phi_horizontal_is_a_straight_line() {
        let q = QuadDifferential::from_terms(2, &[(0, Complex64::new(1.0, 0.0))]).unwrap();
        let t = trace_trajectory(
            &q,
            Complex64::new(0.5, 0.5),
            TrajectoryKind::Horizontal,
            1e-3,
            5.0,
            &annulus(0.1, 3.0),
        )
        .unwrap();
        for p in &t.points {
            assert!((p[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_zdot_squared_has_the_right_sign() {
        for (c, kind, sign) in [
            (1.0, TrajectoryKind::Vertical, -1.0),
            (1.0, TrajectoryKind::Horizontal, 1.0),
            (-1.0, TrajectoryKind::Vertical, -1.0),
        ] {
            let q = inverse_square(c);
            let t = trace_trajectory(&q, Complex64::new(1.4, 0.3), kind, 1e-3, 3.0, &annulus(1.0, 2.0)).unwrap();
            for k in 0..t.points.len() {
                let v = q.eval(t.point(k)) * t.direction(k) * t.direction(k);
                assert!(v.im.abs() < 1e-8, "Im = {}", v.im);
                assert!(v.re * sign > 0.0);
            }
        }
    }

    #[test]
    fn crossing_trajectories_are_orthogonal() {
        let q = inverse_square(1.0);
        let z0 = Complex64::new(1.2, 0.6);
        let h = trace_trajectory(&q, z0, TrajectoryKind::Horizontal, 1e-3, 2.0, &annulus(1.0, 2.0)).unwrap();
        let v = trace_trajectory(&q, z0, TrajectoryKind::Vertical, 1e-3, 2.0, &annulus(1.0, 2.0)).unwrap();
        assert!((h.point(h.start_index) - z0).norm() < 1e-15);
        assert!((v.point(v.start_index) - z0).norm() < 1e-15);
        let dot = (h.direction(h.start_index) * v.direction(v.start_index).conj()).re;
        assert!(dot.abs() < 1e-8);
    }

    #[test]
    fn reversed_branch_retraces_the_same_set() {
        let q = inverse_square(-1.0);
        let z0 = Complex64::new(1.5, 0.0);
        let step = 1e-3;
        let fwd = trace_trajectory(&q, z0, TrajectoryKind::Vertical, step, 20.0, &annulus(1.0, 2.0)).unwrap();
        let bwd =
            trace_trajectory_with_branch(&q, z0, TrajectoryKind::Vertical, step, 20.0, &annulus(1.0, 2.0), true).unwrap();
        let set_dist = |a: &Trajectory, b: &Trajectory| -> f64 {
            a.points
                .iter()
                .map(|p| {
                    let z = Complex64::new(p[0], p[1]);
                    b.points
                        .iter()
                        .map(|q| (z - Complex64::new(q[0], q[1])).norm())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0f64, f64::max)
        };
        assert!(set_dist(&fwd, &bwd) < step);
        assert!(set_dist(&bwd, &fwd) < step);
    }

    #[test]
    fn zero_start_is_rejected() {
        let q = QuadDifferential::from_terms(2, &[(1, Complex64::new(1.0, 0.0))]).unwrap();
        let err = trace_trajectory(&q, Complex64::default(), TrajectoryKind::Vertical, 1e-3, 1.0, &annulus(0.1, 2.0));
        assert!(err.is_err());
    }
}
