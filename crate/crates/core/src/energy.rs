//! Dirichlet energy, the two-solution energy identity, free-Lagrangian
//! lower bounds, pointwise residuals of the radial Hopf system, and
//! distortion diagnostics.

use crate::domain::{AnnulusSpec, DomainSpec};
use crate::error::{Error, Result};
use crate::mesh::{element_derivatives, DerivField, MapField};
use crate::numerics::{kahan_sum, par_sum_indexed, KahanSum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Split of the Dirichlet energy into normal and tangential parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub normal_part: f64,
    pub tangential_part: f64,
    pub per_ring: Vec<f64>,
}

/// Discrete Dirichlet energy `sum_T area(T) * 2(|hz|^2 + |hzbar|^2)` with
/// its normal/tangential split.
pub fn dirichlet_energy(f: &MapField) -> Result<EnergyBreakdown> {
    let d = element_derivatives(f)?;
    Ok(dirichlet_energy_of(&d, f))
}

pub(crate) fn dirichlet_energy_of(d: &DerivField, f: &MapField) -> EnergyBreakdown {
    let normal = par_sum_indexed(d.len(), |t| d.area[t] * d.hn[t].norm_sqr());
    let tangential = par_sum_indexed(d.len(), |t| d.area[t] * d.ht[t].norm_sqr());
    let total = par_sum_indexed(d.len(), |t| 2.0 * d.area[t] * (d.hz[t].norm_sqr() + d.hzbar[t].norm_sqr()));
    let n_rings = f.mesh.n_r - 1;
    let mut per_ring_acc = vec![KahanSum::new(); n_rings];
    for t in 0..d.len() {
        let ring = f.mesh.triangle_ring(t);
        per_ring_acc[ring].add(2.0 * d.area[t] * (d.hz[t].norm_sqr() + d.hzbar[t].norm_sqr()));
    }
    EnergyBreakdown {
        total,
        normal_part: normal,
        tangential_part: tangential,
        per_ring: per_ring_acc.into_iter().map(|k| k.value()).collect(),
    }
}

/// Both sides of the two-solution energy identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityGap {
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_first_integral: f64,
    pub rhs_second_integral: f64,
}

/// Point locator over the image triangulation of a discrete
/// diffeomorphism, backed by a uniform background grid.
struct TargetLocator<'a> {
    field: &'a MapField,
    deriv: &'a DerivField,
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    cells: Vec<Vec<u32>>,
}

impl<'a> TargetLocator<'a> {
    fn new(field: &'a MapField, deriv: &'a DerivField) -> Self {
        let tris = &field.mesh.triangles;
        let mut x0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        let mut y0 = f64::INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for v in &field.values {
            x0 = x0.min(v.re);
            x1 = x1.max(v.re);
            y0 = y0.min(v.im);
            y1 = y1.max(v.im);
        }
        let n = (tris.len() as f64).sqrt().ceil() as usize;
        let (nx, ny) = (n.max(4), n.max(4));
        let dx = ((x1 - x0) / nx as f64).max(1e-300);
        let dy = ((y1 - y0) / ny as f64).max(1e-300);
        let mut cells = vec![Vec::new(); nx * ny];
        for (t, tri) in tris.iter().enumerate() {
            let (a, b, c) = (field.values[tri[0]], field.values[tri[1]], field.values[tri[2]]);
            let tx0 = (((a.re.min(b.re).min(c.re) - x0) / dx).floor().max(0.0)) as usize;
            let tx1 = (((a.re.max(b.re).max(c.re) - x0) / dx).floor()) as usize;
            let ty0 = (((a.im.min(b.im).min(c.im) - y0) / dy).floor().max(0.0)) as usize;
            let ty1 = (((a.im.max(b.im).max(c.im) - y0) / dy).floor()) as usize;
            for cx in tx0..=tx1.min(nx - 1) {
                for cy in ty0..=ty1.min(ny - 1) {
                    cells[cy * nx + cx].push(t as u32);
                }
            }
        }
        TargetLocator { field, deriv, nx, ny, x0, y0, dx, dy, cells }
    }

    /// Barycentric coordinates of `w` in image triangle `t`; the minimum
    /// coordinate is the containment margin.
    fn barycentric(&self, t: usize, w: Complex64) -> (f64, f64, f64) {
        let tri = self.field.mesh.triangles[t];
        let (a, b, c) = (self.field.values[tri[0]], self.field.values[tri[1]], self.field.values[tri[2]]);
        let den = ((b - a).conj() * (c - a)).im;
        if den.abs() < 1e-300 {
            return (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        }
        let la = ((b - w).conj() * (c - w)).im / den;
        let lb = ((c - w).conj() * (a - w)).im / den;
        let lc = 1.0 - la - lb;
        (la, lb, lc)
    }

    /// Finds the triangle whose image contains `w` and returns the source
    /// preimage point of `w` under the PL map.
    fn locate(&self, w: Complex64) -> Result<(usize, Complex64)> {
        let cx = (((w.re - self.x0) / self.dx).floor().clamp(0.0, (self.nx - 1) as f64)) as usize;
        let cy = (((w.im - self.y0) / self.dy).floor().clamp(0.0, (self.ny - 1) as f64)) as usize;
        let mut best: Option<(f64, usize, (f64, f64, f64))> = None;
        let consider = |t: usize, best: &mut Option<(f64, usize, (f64, f64, f64))>| {
            let (la, lb, lc) = self.barycentric(t, w);
            let margin = la.min(lb).min(lc);
            if best.map_or(true, |(m, _, _)| margin > m) {
                *best = Some((margin, t, (la, lb, lc)));
            }
        };
        // Expanding rings of background cells around the query point.
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            let xlo = cx.saturating_sub(ring);
            let xhi = (cx + ring).min(self.nx - 1);
            let ylo = cy.saturating_sub(ring);
            let yhi = (cy + ring).min(self.ny - 1);
            for gy in ylo..=yhi {
                for gx in xlo..=xhi {
                    let on_ring = gx == xlo || gx == xhi || gy == ylo || gy == yhi;
                    if ring > 0 && !on_ring {
                        continue;
                    }
                    for &t in &self.cells[gy * self.nx + gx] {
                        consider(t as usize, &mut best);
                    }
                }
            }
            if let Some((margin, _, _)) = best {
                if margin >= -1e-9 {
                    break;
                }
            }
        }
        let tol = -1e-6;
        match best {
            Some((margin, t, (la, lb, lc))) if margin >= tol => {
                let tri = self.field.mesh.triangles[t];
                let m = &self.field.mesh;
                let z = la * m.nodes[tri[0]] + lb * m.nodes[tri[1]] + lc * m.nodes[tri[2]];
                Ok((t, z))
            }
            _ => Err(Error::Geometry(format!("point {w} not located in the image triangulation"))),
        }
    }

    fn wirtinger_inverse(&self, t: usize) -> (Complex64, Complex64) {
        let j = self.deriv.jacobian[t];
        let dw = self.deriv.hz[t].conj() / j;
        let dwbar = -self.deriv.hzbar[t] / j;
        (dw, dwbar)
    }
}

/// Evaluates both sides of the energy identity for a pair of discrete
/// diffeomorphisms onto the same target.
///
/// `lhs = E[H] - E[h]`; `rhs` composes `h` with the numerical inverse of
/// `H` at the quadrature points of `h`'s mesh.
pub fn energy_identity_gap(h: &MapField, big_h: &MapField) -> Result<IdentityGap> {
    match (h.target, big_h.target) {
        (Some(a), Some(b)) if a == b => {}
        (None, None) => {}
        _ => return Err(Error::Config("energy identity requires fields onto the same target".into())),
    }
    let dh = element_derivatives(h)?;
    let dbig = element_derivatives(big_h)?;
    for (t, &j) in dbig.jacobian.iter().enumerate() {
        if j <= 0.0 {
            return Err(Error::NotInvertible(format!("H has nonpositive Jacobian {j} on triangle {t}")));
        }
    }
    for (t, &j) in dh.jacobian.iter().enumerate() {
        if j <= 0.0 {
            return Err(Error::NotInvertible(format!("h has nonpositive Jacobian {j} on triangle {t}")));
        }
    }
    let lhs = dirichlet_energy_of(&dbig, big_h).total - dirichlet_energy_of(&dh, h).total;
    let locator = TargetLocator::new(big_h, &dbig);

    let mut first = KahanSum::new();
    let mut second = KahanSum::new();
    for t in 0..dh.len() {
        let tri = h.mesh.triangles[t];
        let w = (h.values[tri[0]] + h.values[tri[1]] + h.values[tri[2]]) / 3.0;
        let (s, _z) = locator.locate(w)?;
        let (dw, dwbar) = locator.wirtinger_inverse(s);
        let hz = dh.hz[t];
        let hzbar = dh.hzbar[t];
        let fz = dw * hz + dwbar * hzbar.conj();
        let fzbar = dw * hzbar + dwbar * hz.conj();
        let jf = fz.norm_sqr() - fzbar.norm_sqr();
        if jf <= 0.0 {
            return Err(Error::NotInvertible(format!("composed map degenerate at quadrature point {t} (J_f = {jf})")));
        }
        let hopf = hz * hzbar.conj();
        let gamma = if hopf.norm() > 0.0 { hopf / hopf.norm() } else { Complex64::default() };
        let i1 = ((fz - gamma * fzbar).norm_sqr() / jf - 1.0) * hopf.norm();
        let i2 = (hz.norm() - hzbar.norm()).powi(2) * fzbar.norm_sqr() / jf;
        first.add(4.0 * dh.area[t] * i1);
        second.add(4.0 * dh.area[t] * i2);
    }
    let rhs_first = first.value();
    let rhs_second = second.value();
    Ok(IdentityGap { lhs, rhs: rhs_first + rhs_second, rhs_first_integral: rhs_first, rhs_second_integral: rhs_second })
}

/// Free-Lagrangian lower bounds and distortion diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    #[serde(rename = "lemKn_lhs", skip_serializing_if = "Option::is_none")]
    pub lem_kn_lhs: Option<f64>,
    #[serde(rename = "lemKn_rhs", skip_serializing_if = "Option::is_none")]
    pub lem_kn_rhs: Option<f64>,
    #[serde(rename = "lemKt_lhs")]
    pub lem_kt_lhs: f64,
    #[serde(rename = "lemKt_rhs")]
    pub lem_kt_rhs: f64,
    pub area_lhs: f64,
    pub area_rhs: f64,
    pub ctheory_violation_fraction: f64,
    pub excluded_triangles: usize,
    #[serde(rename = "kN_field")]
    pub kn_field: Vec<f64>,
    #[serde(rename = "kT_field")]
    pub kt_field: Vec<f64>,
}

fn modulus_of_target(target: &DomainSpec) -> Result<f64> {
    match target {
        DomainSpec::Annulus(a) => Ok(a.modulus()),
        DomainSpec::Washer(_) => Ok(crate::domain::conformal_modulus(target, 33, 128)?.modulus),
    }
}

/// Estimates the Hopf constant `c` as the area-weighted mean of
/// `Re(phi z^2)` over the triangulation.
pub fn estimate_hopf_constant(d: &DerivField) -> f64 {
    let num = par_sum_indexed(d.len(), |t| {
        let phi = d.hz[t] * d.hzbar[t].conj();
        d.area[t] * (phi * d.barycenter[t] * d.barycenter[t]).re
    });
    let den = kahan_sum(d.area.iter().copied());
    num / den
}

/// Evaluates the normal and tangential free-Lagrangian bounds, the area
/// identity, and the pointwise distortion inequalities.
pub fn free_lagrangian_report(f: &MapField, source: &AnnulusSpec, target: &DomainSpec) -> Result<BoundsReport> {
    let d = element_derivatives(f)?;
    let j_floor = 1e-12 * d.median_jacobian();
    let n = d.len();
    let mut kn_field = vec![0.0; n];
    let mut kt_field = vec![0.0; n];
    let mut lem_kn = KahanSum::new();
    let mut lem_kt = KahanSum::new();
    let mut excluded = 0usize;
    for t in 0..n {
        let j = d.jacobian[t];
        if j <= j_floor {
            excluded += 1;
            continue;
        }
        let kn = if d.hn[t].norm_sqr() > 0.0 { d.hn[t].norm_sqr() / j } else { 0.0 };
        let kt = if d.ht[t].norm_sqr() > 0.0 { d.ht[t].norm_sqr() / j } else { 0.0 };
        kn_field[t] = kn;
        kt_field[t] = kt;
        let w = d.area[t] / d.barycenter[t].norm_sqr();
        lem_kn.add(kn * w);
        lem_kt.add(kt * w);
    }
    let area_lhs = par_sum_indexed(n, |t| d.area[t] * d.jacobian[t]);
    let (lem_kn_lhs, lem_kn_rhs) = match target {
        DomainSpec::Annulus(a) => (Some(lem_kn.value()), Some(2.0 * PI * (a.outer / a.inner).ln())),
        DomainSpec::Washer(_) => (None, None),
    };
    let c_est = estimate_hopf_constant(&d);
    let violation = ctheory_violation_fraction(&d, c_est);
    Ok(BoundsReport {
        lem_kn_lhs,
        lem_kn_rhs,
        lem_kt_lhs: lem_kt.value(),
        lem_kt_rhs: 2.0 * PI * source.modulus().powi(2) / modulus_of_target(target)?,
        area_lhs,
        area_rhs: target.area(),
        ctheory_violation_fraction: violation,
        excluded_triangles: excluded,
        kn_field,
        kt_field,
    })
}

fn ctheory_violation_fraction(d: &DerivField, c: f64) -> f64 {
    let total_area = kahan_sum(d.area.iter().copied());
    let bad = par_sum_indexed(d.len(), |t| {
        let j = d.jacobian[t];
        let viol_n = d.hn[t].norm_sqr() > j + 1e-9;
        let viol_t = d.ht[t].norm_sqr() > j + 1e-9;
        let violated = if c < 0.0 {
            viol_n
        } else if c > 0.0 {
            viol_t
        } else {
            viol_n || viol_t
        };
        if violated {
            d.area[t]
        } else {
            0.0
        }
    });
    bad / total_area
}

/// Residuals of the radial Hopf system at a prescribed constant `c`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfSystemResidual {
    pub res_radial: f64,
    pub res_orth: f64,
    pub ctheory_violation_fraction: f64,
}

/// Area-weighted L1 residuals of
/// `|hN|^2 - |hT|^2 = 4c/|z|^2` and `Re(conj(hN) hT) = 0`,
/// plus the violated-area fraction of the pointwise inequalities.
pub fn hopf_system_residual(f: &MapField, c: f64) -> Result<HopfSystemResidual> {
    if f.mesh.domain.as_annulus().is_none() {
        return Err(Error::Config("the radial Hopf system is defined on annulus sources".into()));
    }
    let d = element_derivatives(f)?;
    let res_radial = par_sum_indexed(d.len(), |t| {
        let target = 4.0 * c / d.barycenter[t].norm_sqr();
        d.area[t] * ((d.hn[t].norm_sqr() - d.ht[t].norm_sqr()) - target).abs()
    });
    let res_orth = par_sum_indexed(d.len(), |t| d.area[t] * (d.hn[t].conj() * d.ht[t]).re.abs());
    Ok(HopfSystemResidual { res_radial, res_orth, ctheory_violation_fraction: ctheory_violation_fraction(&d, c) })
}

/// Distortion data of the difference of two fields with a common Hopf
/// product.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DifferenceDistortion {
    pub k_h: Vec<f64>,
    #[serde(rename = "k_H")]
    pub k_big_h: Vec<f64>,
    #[serde(rename = "k_F")]
    pub k_f: Vec<f64>,
    pub f_values: Vec<[f64; 2]>,
}

/// Per-triangle Beltrami coefficients of `h`, `H` and of the difference
/// `F = H - h` via `k_F = sqrt(k_h k_H)`.
pub fn difference_distortion(h: &MapField, big_h: &MapField) -> Result<DifferenceDistortion> {
    if !std::ptr::eq(h.mesh.as_ref(), big_h.mesh.as_ref())
        && (h.mesh.n_r != big_h.mesh.n_r || h.mesh.n_theta != big_h.mesh.n_theta || h.mesh.domain != big_h.mesh.domain)
    {
        return Err(Error::Config("difference distortion requires a common mesh".into()));
    }
    let dh = element_derivatives(h)?;
    let dbig = element_derivatives(big_h)?;
    let ratio = |num: Complex64, den: Complex64| if den.norm() > 0.0 { num.norm() / den.norm() } else { 0.0 };
    let k_h: Vec<f64> = (0..dh.len()).map(|t| ratio(dh.hzbar[t], dh.hz[t])).collect();
    let k_big_h: Vec<f64> = (0..dh.len()).map(|t| ratio(dbig.hzbar[t], dbig.hz[t])).collect();
    let k_f: Vec<f64> = k_h.iter().zip(k_big_h.iter()).map(|(a, b)| (a * b).sqrt()).collect();
    let f_values: Vec<[f64; 2]> =
        h.values.iter().zip(big_h.values.iter()).map(|(a, b)| [(b - a).re, (b - a).im]).collect();
    Ok(DifferenceDistortion { k_h, k_big_h, k_f, f_values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::mesh::{build_mesh, MapField};
    use crate::refmaps::{sample_refmap, RefMapKind};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn annulus_mesh(r: f64, big_r: f64, nr: usize, nt: usize) -> Arc<crate::mesh::PolarMesh> {
        Arc::new(build_mesh(&DomainSpec::annulus(r, big_r).unwrap(), nr, nt).unwrap())
    }

    #[test]
    fn energy_of_identity_and_conjugate() {
        let mesh = annulus_mesh(1.0, 2.0, 33, 128);
        let id = MapField::from_fn(Arc::clone(&mesh), |z| z);
        let e = dirichlet_energy(&id).unwrap();
        assert_relative_eq!(e.total, 6.0 * PI, max_relative = 5e-3);
        assert_relative_eq!(e.total, e.normal_part + e.tangential_part, max_relative = 1e-10);
        assert_eq!(e.per_ring.len(), 32);
        assert_relative_eq!(kahan_sum(e.per_ring.iter().copied()), e.total, max_relative = 1e-10);

        let conj = MapField::from_fn(Arc::clone(&mesh), |z| z.conj());
        let ec = dirichlet_energy(&conj).unwrap();
        assert_relative_eq!(ec.total, e.total, max_relative = 1e-12);
    }

    #[test]
    fn energy_of_sampled_nitsche_matches_closed_form() {
        let mesh = annulus_mesh(1.0, 2.0, 33, 128);
        let f = sample_refmap(&RefMapKind::Nitsche { r: 1.0, r_star: 1.0 }, mesh).unwrap();
        let e = dirichlet_energy(&f).unwrap();
        assert_relative_eq!(e.total, 1.875 * PI, max_relative = 1e-2);
    }

    #[test]
    fn energy_dominates_area_pullback() {
        // |Dh|^2 >= 2|J| per triangle, so E >= 2 |sum area J|.
        let mesh = annulus_mesh(1.0, 2.0, 9, 24);
        for kind in [RefMapKind::Identity, RefMapKind::Nitsche { r: 1.0, r_star: 1.3 }] {
            let f = sample_refmap(&kind, Arc::clone(&mesh)).unwrap();
            let e = dirichlet_energy(&f).unwrap();
            let d = element_derivatives(&f).unwrap();
            let pullback = par_sum_indexed(d.len(), |t| d.area[t] * d.jacobian[t]);
            assert!(e.total >= 2.0 * pullback.abs() - 1e-12);
        }
    }

    #[test]
    fn identity_gap_vanishes_for_equal_fields() {
        let mesh = annulus_mesh(1.0, 2.0, 17, 48);
        let f = sample_refmap(&RefMapKind::Nitsche { r: 1.0, r_star: 1.0 }, mesh).unwrap();
        let gap = energy_identity_gap(&f, &f).unwrap();
        assert!(gap.lhs.abs() < 1e-12);
        assert!(gap.rhs.abs() < 1e-10, "rhs = {}", gap.rhs);
    }

    #[test]
    fn identity_gap_vanishes_for_grid_rotation() {
        let mesh = annulus_mesh(1.0, 2.0, 17, 48);
        let f = sample_refmap(&RefMapKind::Nitsche { r: 1.0, r_star: 1.0 }, mesh).unwrap();
        let g = f.rotate_source(5);
        let gap = energy_identity_gap(&f, &g).unwrap();
        assert!(gap.lhs.abs() < 1e-10, "lhs = {}", gap.lhs);
        assert!(gap.rhs.abs() < 1e-10, "rhs = {}", gap.rhs);
    }

    #[test]
    fn identity_gap_for_radial_power_pair() {
        // h = reference radial map, H = radial power onto the same annulus.
        let mesh = annulus_mesh(1.0, 2.0, 33, 128);
        let h = sample_refmap(&RefMapKind::Nitsche { r: 1.0, r_star: 1.0 }, Arc::clone(&mesh)).unwrap();
        let gamma = 1.25f64.ln() / 2.0f64.ln();
        let mut big = MapField::from_fn(Arc::clone(&mesh), |z| Complex64::from_polar(z.norm().powf(gamma), z.arg()));
        big.target = h.target;
        let gap = energy_identity_gap(&h, &big).unwrap();
        assert!(gap.rhs_second_integral >= 0.0);
        let rel = (gap.lhs - gap.rhs).abs() / gap.lhs.abs();
        assert!(rel < 2e-2, "lhs={}, rhs={}, rel={}", gap.lhs, gap.rhs, rel);
    }

    #[test]
    fn rejects_folded_h() {
        let mesh = annulus_mesh(1.0, 2.0, 9, 24);
        let h = sample_refmap(&RefMapKind::Identity, Arc::clone(&mesh)).unwrap();
        let mut folded = MapField::from_fn(Arc::clone(&mesh), |z| z.conj());
        folded.target = h.target;
        assert!(matches!(energy_identity_gap(&h, &folded), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn free_lagrangian_equality_for_identity() {
        let mesh = annulus_mesh(1.0, 2.0, 33, 128);
        let f = sample_refmap(&RefMapKind::Identity, Arc::clone(&mesh)).unwrap();
        let source = AnnulusSpec::new(1.0, 2.0).unwrap();
        let rep = free_lagrangian_report(&f, &source, &DomainSpec::annulus(1.0, 2.0).unwrap()).unwrap();
        let rhs = rep.lem_kn_rhs.unwrap();
        assert_relative_eq!(rep.lem_kn_lhs.unwrap(), rhs, max_relative = 5e-3);
        assert_relative_eq!(rep.lem_kt_lhs, rep.lem_kt_rhs, max_relative = 5e-3);
        assert_relative_eq!(rep.area_lhs, rep.area_rhs, max_relative = 5e-3);
        assert_eq!(rep.ctheory_violation_fraction, 0.0);
    }

    #[test]
    fn free_lagrangian_inequality_for_nitsche() {
        let mesh = annulus_mesh(1.0, 2.0, 33, 128);
        let f = sample_refmap(&RefMapKind::Nitsche { r: 1.0, r_star: 1.0 }, Arc::clone(&mesh)).unwrap();
        let source = AnnulusSpec::new(1.0, 2.0).unwrap();
        let target = f.target.unwrap();
        let rep = free_lagrangian_report(&f, &source, &target).unwrap();
        let (lhs, rhs) = (rep.lem_kn_lhs.unwrap(), rep.lem_kn_rhs.unwrap());
        assert!(lhs >= rhs * (1.0 - 1e-2), "lemKn: {lhs} vs {rhs}");
        assert!(rep.lem_kt_lhs >= rep.lem_kt_rhs * (1.0 - 1e-2), "lemKt: {} vs {}", rep.lem_kt_lhs, rep.lem_kt_rhs);
    }

    #[test]
    fn hopf_system_examples() {
        let mesh = annulus_mesh(1.0, 2.0, 17, 64);
        let id = sample_refmap(&RefMapKind::Identity, Arc::clone(&mesh)).unwrap();
        let r = hopf_system_residual(&id, 0.0).unwrap();
        assert!(r.res_radial < 1e-12);
        assert!(r.res_orth < 1e-12);
        assert_eq!(r.ctheory_violation_fraction, 0.0);

        // Rank-one collapse Re z has a nonzero radial residual at c = 0.
        let re = MapField::from_fn(Arc::clone(&mesh), |z| Complex64::new(z.re, 0.0));
        let rr = hopf_system_residual(&re, 0.0).unwrap();
        // integrand is |cos 2theta|, whose area integral over A(1,2) is 6.
        assert_relative_eq!(rr.res_radial, 6.0, max_relative = 2e-2);
    }

    #[test]
    fn hopf_system_residual_is_first_order_for_nitsche() {
        let kind = RefMapKind::Nitsche { r: 1.0, r_star: 1.0 };
        let c = kind.hopf_constant();
        let mut res = Vec::new();
        for (nr, nt) in [(17usize, 64usize), (33, 128)] {
            let mesh = annulus_mesh(1.0, 2.0, nr, nt);
            let f = sample_refmap(&kind, mesh).unwrap();
            let r = hopf_system_residual(&f, c).unwrap();
            assert_eq!(r.ctheory_violation_fraction, 0.0);
            res.push((r.res_radial, r.res_orth));
        }
        // Order >= 1 in the mesh size (the polar frame is evaluated at
        // barycenters).
        assert!(res[0].0 / res[1].0 > 1.8, "{res:?}");
        assert!(res[0].1 / res[1].1 > 1.8, "{res:?}");
    }

    #[test]
    fn difference_distortion_examples() {
        let mesh = annulus_mesh(1.0, 2.0, 17, 64);
        let h = sample_refmap(&RefMapKind::Nitsche { r: 1.0, r_star: 1.0 }, Arc::clone(&mesh)).unwrap();
        let same = difference_distortion(&h, &h).unwrap();
        assert!(same.f_values.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
        for t in 0..same.k_f.len() {
            assert_relative_eq!(same.k_f[t], (same.k_h[t] * same.k_big_h[t]).sqrt(), epsilon = 1e-12);
            assert!(same.k_f[t] <= 1.0 + 1e-12);
        }

        // Conformal pair: linear holomorphic fields are reproduced exactly.
        let a = MapField::from_fn(Arc::clone(&mesh), |z| Complex64::new(1.5, 0.25) * z);
        let b = MapField::from_fn(Arc::clone(&mesh), |z| Complex64::new(-0.5, 1.0) * z + Complex64::new(0.1, 0.0));
        let dd = difference_distortion(&a, &b).unwrap();
        assert!(dd.k_f.iter().all(|&k| k < 1e-14));
        let f_field = MapField::new(
            Arc::clone(&mesh),
            dd.f_values.iter().map(|v| Complex64::new(v[0], v[1])).collect(),
        );
        let df = element_derivatives(&f_field).unwrap();
        assert!(df.hzbar.iter().all(|c| c.norm() < 1e-12));

        // k_h of the radial harmonic map is r^2/|z|^2.
        let d = element_derivatives(&h).unwrap();
        let dd = difference_distortion(&h, &h).unwrap();
        for t in 0..d.len() {
            let z = d.barycenter[t].norm();
            if (z - 1.5).abs() < 0.05 {
                assert_relative_eq!(dd.k_h[t], 1.0 / (z * z), max_relative = 2e-2);
            }
        }
    }
}
