//! Doubly connected planar domains: circular annuli and square-hole
//! washers, their boundary parametrizations, the radii-ratio bound for
//! annulus pairs, and the conformal modulus.

use crate::error::{Error, Result};
use crate::fem;
use crate::mesh;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Circular annulus `r < |z| < R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    #[serde(rename = "r")]
    pub inner: f64,
    #[serde(rename = "R")]
    pub outer: f64,
}

impl AnnulusSpec {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && inner < outer && outer.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "annulus requires 0 < r < R < inf, got r={inner}, R={outer}"
            )));
        }
        Ok(Self { inner, outer })
    }

    /// `log(R/r)`, the conformal modulus in the normalization used
    /// throughout this crate.
    pub fn modulus(&self) -> f64 {
        (self.outer / self.inner).ln()
    }
}

/// Square-hole washer `1 < |y1| + |y2|, y1^2 + y2^2 < rho^2`. The inner
/// boundary is the unit diamond, fixed by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WasherSpec {
    pub rho: f64,
}

impl WasherSpec {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 1.0 && rho.is_finite()) {
            return Err(Error::InvalidDomain(format!("washer requires rho > 1, got rho={rho}")));
        }
        Ok(Self { rho })
    }
}

/// A doubly connected source or target domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainSpec {
    #[serde(rename = "annulus")]
    Annulus(AnnulusSpec),
    #[serde(rename = "washer")]
    Washer(WasherSpec),
}

/// Which boundary curve of a doubly connected domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryComponent {
    Inner,
    Outer,
}

impl DomainSpec {
    pub fn annulus(r: f64, big_r: f64) -> Result<Self> {
        Ok(DomainSpec::Annulus(AnnulusSpec::new(r, big_r)?))
    }

    pub fn washer(rho: f64) -> Result<Self> {
        Ok(DomainSpec::Washer(WasherSpec::new(rho)?))
    }

    pub fn as_annulus(&self) -> Option<AnnulusSpec> {
        match self {
            DomainSpec::Annulus(a) => Some(*a),
            _ => None,
        }
    }

    /// Area of the domain.
    pub fn area(&self) -> f64 {
        match self {
            DomainSpec::Annulus(a) => PI * (a.outer * a.outer - a.inner * a.inner),
            // The unit diamond has area 2.
            DomainSpec::Washer(w) => PI * w.rho * w.rho - 2.0,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            DomainSpec::Annulus(a) => 2.0 * a.outer,
            DomainSpec::Washer(w) => 2.0 * w.rho,
        }
    }

    /// Parameter period of a boundary component: angle for circles,
    /// arclength for the diamond.
    pub fn boundary_period(&self, component: BoundaryComponent) -> f64 {
        match (self, component) {
            (DomainSpec::Washer(_), BoundaryComponent::Inner) => 4.0 * SQRT2,
            _ => 2.0 * PI,
        }
    }

    /// Distance from a point to a boundary component.
    pub fn boundary_distance(&self, component: BoundaryComponent, p: Complex64) -> f64 {
        match (self, component) {
            (DomainSpec::Annulus(a), BoundaryComponent::Inner) => (p.norm() - a.inner).abs(),
            (DomainSpec::Annulus(a), BoundaryComponent::Outer) => (p.norm() - a.outer).abs(),
            (DomainSpec::Washer(w), BoundaryComponent::Outer) => (p.norm() - w.rho).abs(),
            (DomainSpec::Washer(_), BoundaryComponent::Inner) => {
                // Distance to the diamond |y1| + |y2| = 1: fold into the
                // first quadrant and measure against the segment
                // (1,0)-(0,1).
                let (x, y) = (p.re.abs(), p.im.abs());
                let along = (y - x + 1.0) / 2.0;
                if along <= 0.0 {
                    ((x - 1.0).powi(2) + y * y).sqrt()
                } else if along >= 1.0 {
                    (x * x + (y - 1.0).powi(2)).sqrt()
                } else {
                    (x + y - 1.0).abs() / SQRT2
                }
            }
        }
    }
}

/// Corners of the unit diamond in counterclockwise order from (1, 0).
pub const DIAMOND_CORNERS: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

/// Point on a boundary component at parameter `s` (wrapped modulo the
/// period). Traversal is counterclockwise; the diamond parameter is
/// arclength anchored at the corner (1, 0).
pub fn boundary_point(d: &DomainSpec, component: BoundaryComponent, s: f64) -> Complex64 {
    let period = d.boundary_period(component);
    let s = s.rem_euclid(period);
    match (d, component) {
        (DomainSpec::Annulus(a), BoundaryComponent::Inner) => Complex64::from_polar(a.inner, s),
        (DomainSpec::Annulus(a), BoundaryComponent::Outer) => Complex64::from_polar(a.outer, s),
        (DomainSpec::Washer(w), BoundaryComponent::Outer) => Complex64::from_polar(w.rho, s),
        (DomainSpec::Washer(_), BoundaryComponent::Inner) => {
            let edge = ((s / SQRT2) as usize).min(3);
            let t = s / SQRT2 - edge as f64;
            let a = DIAMOND_CORNERS[edge];
            let b = DIAMOND_CORNERS[(edge + 1) % 4];
            a + (b - a) * t
        }
    }
}

/// Derivative of `boundary_point` with respect to the parameter.
/// Piecewise constant on the diamond (edge interiors).
pub fn boundary_tangent(d: &DomainSpec, component: BoundaryComponent, s: f64) -> Complex64 {
    let period = d.boundary_period(component);
    let s = s.rem_euclid(period);
    match (d, component) {
        (DomainSpec::Annulus(a), BoundaryComponent::Inner) => Complex64::i() * Complex64::from_polar(a.inner, s),
        (DomainSpec::Annulus(a), BoundaryComponent::Outer) => Complex64::i() * Complex64::from_polar(a.outer, s),
        (DomainSpec::Washer(w), BoundaryComponent::Outer) => Complex64::i() * Complex64::from_polar(w.rho, s),
        (DomainSpec::Washer(_), BoundaryComponent::Inner) => {
            let edge = ((s / SQRT2) as usize).min(3);
            let a = DIAMOND_CORNERS[edge];
            let b = DIAMOND_CORNERS[(edge + 1) % 4];
            (b - a) / SQRT2
        }
    }
}

/// Radius of the diamond in direction `theta`.
pub fn diamond_radius(theta: f64) -> f64 {
    1.0 / (theta.cos().abs() + theta.sin().abs())
}

/// Arclength parameter of the diamond point lying in direction `theta`.
pub fn diamond_param_at_angle(theta: f64) -> f64 {
    let theta = theta.rem_euclid(2.0 * PI);
    let quadrant = ((theta / (PI / 2.0)) as usize).min(3);
    let local = theta - quadrant as f64 * PI / 2.0;
    let t = local.sin() / (local.cos() + local.sin());
    (quadrant as f64 + t) * SQRT2
}

/// Lower bound `(R/r + r/R)/2` on the target radii ratio below which an
/// annulus pair forces inner-collar hammering.
pub fn nitsche_bound(r: f64, big_r: f64) -> Result<f64> {
    let a = AnnulusSpec::new(r, big_r)?;
    Ok(0.5 * (a.outer / a.inner + a.inner / a.outer))
}

/// Collar radius `sigma` solving `(R/sigma + sigma/R)/2 = R*/r*`, or
/// `None` when the target ratio meets the bound (no collar).
pub fn nitsche_sigma(r: f64, big_r: f64, r_star: f64, big_r_star: f64) -> Result<Option<f64>> {
    let source = AnnulusSpec::new(r, big_r)?;
    let target = AnnulusSpec::new(r_star, big_r_star)
        .map_err(|_| Error::InvalidTarget(format!("target annulus invalid: r*={r_star}, R*={big_r_star}")))?;
    let q = target.outer / target.inner;
    if q <= 1.0 {
        return Err(Error::InvalidTarget(format!("target ratio q={q} must exceed 1")));
    }
    if q >= nitsche_bound(r, big_r)? {
        return Ok(None);
    }
    // Root of sigma^2 - 2 q R sigma + R^2 = 0 below R; lies in (r, R).
    // Written without subtractive cancellation for large q.
    let sigma = source.outer / (q + (q * q - 1.0).sqrt());
    debug_assert!(sigma > source.inner && sigma < source.outer);
    Ok(Some(sigma))
}

/// Conformal modulus result: `modulus = 2 pi / dirichlet_of_potential`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulusResult {
    #[serde(rename = "mod")]
    pub modulus: f64,
    pub dirichlet_of_potential: f64,
    pub refinement_level: usize,
}

/// Computes the conformal modulus of a doubly connected domain from the
/// capacity potential: `u = 0` on the inner and `u = 1` on the outer
/// boundary, `modulus = 2 pi / E[u]`.
pub fn conformal_modulus(d: &DomainSpec, n_r: usize, n_theta: usize) -> Result<ModulusResult> {
    let m = mesh::build_mesh(d, n_r, n_theta)?;
    let stiffness = fem::Stiffness::assemble(&m)?;
    let n = m.nodes.len();
    let mut u = vec![0.0f64; n];
    let mut fixed = vec![false; n];
    for &i in &m.inner_boundary {
        fixed[i] = true;
        u[i] = 0.0;
    }
    for &i in &m.outer_boundary {
        fixed[i] = true;
        u[i] = 1.0;
    }
    fem::solve_dirichlet(&stiffness, &mut u, &fixed, 1e-13, 40 * n)?;
    let dirichlet = stiffness.quadratic_form(&u);
    Ok(ModulusResult {
        modulus: 2.0 * PI / dirichlet,
        dirichlet_of_potential: dirichlet,
        refinement_level: n_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn bound_examples() {
        assert_relative_eq!(nitsche_bound(1.0, 2.0).unwrap(), 1.25);
        assert_relative_eq!(nitsche_bound(2.0, 8.0).unwrap(), 2.125);
        assert!(nitsche_bound(1.0, 1.0).is_err());
        assert!(nitsche_bound(-1.0, 1.0).is_err());
    }

    #[test]
    fn sigma_examples() {
        let s = nitsche_sigma(1.0, 4.0, 1.0, 1.25).unwrap().unwrap();
        assert_relative_eq!(s, 2.0, max_relative = 1e-14);
        // At the bound the collar degenerates.
        assert!(nitsche_sigma(1.0, 2.0, 1.0, 1.25).unwrap().is_none());
        assert!(matches!(nitsche_sigma(1.0, 4.0, 1.0, 1.0), Err(Error::InvalidTarget(_))));
    }

    #[test]
    fn boundary_point_examples() {
        let a = DomainSpec::annulus(1.0, 2.0).unwrap();
        let p = boundary_point(&a, BoundaryComponent::Outer, PI / 2.0);
        assert_relative_eq!(p.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(p.im, 2.0);

        let w = DomainSpec::washer(2.0).unwrap();
        let c = boundary_point(&w, BoundaryComponent::Inner, 0.0);
        assert_relative_eq!(c.re, 1.0);
        assert_relative_eq!(c.im, 0.0);
        let m = boundary_point(&w, BoundaryComponent::Inner, SQRT2 / 2.0);
        assert_relative_eq!(m.re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.im, 0.5, epsilon = 1e-15);
        // Wrapping.
        let c2 = boundary_point(&w, BoundaryComponent::Inner, 4.0 * SQRT2);
        assert!((c2 - c).norm() < 1e-14);
    }

    #[test]
    fn diamond_angle_parametrization_is_consistent() {
        for k in 0..64 {
            let theta = k as f64 * 2.0 * PI / 64.0;
            let s = diamond_param_at_angle(theta);
            let p = boundary_point(&DomainSpec::washer(2.0).unwrap(), BoundaryComponent::Inner, s);
            let q = Complex64::from_polar(diamond_radius(theta), theta);
            assert!((p - q).norm() < 1e-13, "theta={theta}: {p} vs {q}");
        }
    }

    fn winding_number(points: &[Complex64], about: Complex64) -> f64 {
        let mut total = 0.0;
        for k in 0..points.len() {
            let a = points[k] - about;
            let b = points[(k + 1) % points.len()] - about;
            total += (b / a).arg();
        }
        total / (2.0 * PI)
    }

    #[test]
    fn boundaries_wind_counterclockwise() {
        for d in [DomainSpec::annulus(1.0, 2.0).unwrap(), DomainSpec::washer(2.0).unwrap()] {
            for comp in [BoundaryComponent::Inner, BoundaryComponent::Outer] {
                let period = d.boundary_period(comp);
                let pts: Vec<Complex64> =
                    (0..257).map(|k| boundary_point(&d, comp, k as f64 * period / 257.0)).collect();
                let w = winding_number(&pts, Complex64::new(0.05, 0.02));
                assert_relative_eq!(w, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn modulus_of_annulus_matches_log_ratio() {
        let m = conformal_modulus(&DomainSpec::annulus(1.0, std::f64::consts::E).unwrap(), 33, 128).unwrap();
        assert!((m.modulus - 1.0).abs() < 0.005, "got {}", m.modulus);
        let m2 = conformal_modulus(&DomainSpec::annulus(1.0, 2.0).unwrap(), 33, 128).unwrap();
        assert!((m2.modulus - 2.0f64.ln()).abs() < 0.005, "got {}", m2.modulus);
        assert_relative_eq!(m2.modulus, 2.0 * PI / m2.dirichlet_of_potential, max_relative = 1e-14);
    }

    #[test]
    fn modulus_converges_monotonically_for_annuli() {
        let d = DomainSpec::annulus(1.0, 2.0).unwrap();
        let levels = [(5usize, 16usize), (9, 32), (17, 64), (33, 128)];
        let mods: Vec<f64> = levels.iter().map(|&(nr, nt)| conformal_modulus(&d, nr, nt).unwrap().modulus).collect();
        let exact = 2.0f64.ln();
        for w in mods.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "not monotone: {mods:?}");
        }
        for m in &mods {
            assert!(*m <= exact + 1e-10);
        }
        assert!((mods[3] - exact).abs() < (mods[0] - exact).abs());
    }

    #[test]
    fn washer_modulus_stable_under_refinement() {
        // Richardson extrapolation over three nested levels is the oracle.
        let d = DomainSpec::washer(2.0).unwrap();
        let m1 = conformal_modulus(&d, 33, 128).unwrap().modulus;
        let m2 = conformal_modulus(&d, 65, 256).unwrap().modulus;
        let m3 = conformal_modulus(&d, 129, 512).unwrap().modulus;
        let rate = ((m2 - m1) / (m3 - m2)).abs();
        let limit = m3 + (m3 - m2) / (rate - 1.0);
        assert!((m3 - limit).abs() < 1e-3, "m3={m3}, limit={limit}");
    }

    proptest! {
        #[test]
        fn bound_is_scale_invariant(r in 0.05f64..10.0, ratio in 1.0001f64..50.0) {
            let b1 = nitsche_bound(r, r * ratio).unwrap();
            let b2 = nitsche_bound(1.0, ratio).unwrap();
            prop_assert!((b1 - b2).abs() <= 1e-12 * b1.abs());
            prop_assert!(b1 > 1.0);
        }

        #[test]
        fn sigma_root_is_exact(ratio in 1.05f64..40.0, frac in 0.01f64..0.99) {
            let (r, big_r) = (1.0, ratio);
            let bound = nitsche_bound(r, big_r).unwrap();
            let q = 1.0 + frac * (bound - 1.0) * 0.999;
            if let Some(sigma) = nitsche_sigma(r, big_r, 1.0, q).unwrap() {
                let residual = 0.5 * (big_r / sigma + sigma / big_r) - q;
                prop_assert!(residual.abs() < 1e-12, "residual {residual}");
                prop_assert!(sigma > r && sigma < big_r);
            }
        }
    }
}
