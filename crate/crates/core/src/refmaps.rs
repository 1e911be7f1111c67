//! Closed-form reference mappings with exact derivatives, Hopf products
//! and energies. These are the oracles against which the discrete
//! machinery is checked.

use crate::domain::{AnnulusSpec, DomainSpec};
use crate::error::{Error, Result};
use crate::mesh::{MapField, PolarMesh};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// The shipped reference map family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefMapKind {
    Identity,
    /// Radial harmonic map `z -> (r*/2)(z/r + r/conj(z))`.
    Nitsche { r: f64, r_star: f64 },
    /// Inner collar `r < |z| <= sigma` hammered onto the circle `|w| = r*`,
    /// harmonic outside.
    CrackedNitsche { r: f64, sigma: f64, r_star: f64 },
    /// Harmonic diffeomorphism with Hopf product `+1/z^2`, defined on
    /// `1/R <= |z| <= R` minus the two points `z = R^{+-1}`.
    LogMap { big_r: f64 },
    /// Companion map with Hopf product `-1/z^2`, cut along `Arg z = 0`.
    LogMapDual { big_r: f64 },
}

impl RefMapKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RefMapKind::Identity => true,
            RefMapKind::Nitsche { r, r_star } => r > 0.0 && r_star > 0.0,
            RefMapKind::CrackedNitsche { r, sigma, r_star } => r > 0.0 && sigma > r && r_star > 0.0,
            RefMapKind::LogMap { big_r } | RefMapKind::LogMapDual { big_r } => big_r > 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid reference-map parameters: {self:?}")))
        }
    }

    /// The constant `c` in the Hopf product `c / z^2`.
    pub fn hopf_constant(&self) -> f64 {
        match *self {
            RefMapKind::Identity => 0.0,
            RefMapKind::Nitsche { r_star, .. } | RefMapKind::CrackedNitsche { r_star, .. } => -0.25 * r_star * r_star,
            RefMapKind::LogMap { .. } => 1.0,
            RefMapKind::LogMapDual { .. } => -1.0,
        }
    }
}

/// Value and Wirtinger derivatives of a reference map at a point.
#[derive(Debug, Clone, Copy)]
pub struct RefEval {
    pub value: Complex64,
    pub hz: Complex64,
    pub hzbar: Complex64,
}

const EXCLUSION_TOL: f64 = 1e-12;

/// Evaluates a reference map and its exact derivatives.
pub fn eval_refmap(kind: &RefMapKind, z: Complex64) -> Result<RefEval> {
    kind.validate()?;
    match *kind {
        RefMapKind::Identity => Ok(RefEval { value: z, hz: Complex64::new(1.0, 0.0), hzbar: Complex64::default() }),
        RefMapKind::Nitsche { r, r_star } => {
            if z.norm() < EXCLUSION_TOL {
                return Err(Error::DomainEval("radial map undefined at the origin".into()));
            }
            Ok(nitsche_eval(r, r_star, z))
        }
        RefMapKind::CrackedNitsche { r: _, sigma, r_star } => {
            let rho = z.norm();
            if rho < EXCLUSION_TOL {
                return Err(Error::DomainEval("radial map undefined at the origin".into()));
            }
            if rho <= sigma {
                // Collar: w = r* z/|z|.
                let value = r_star * z / rho;
                let hz = Complex64::new(r_star / (2.0 * rho), 0.0);
                let hzbar = -r_star * z * z / (2.0 * rho * rho * rho);
                Ok(RefEval { value, hz, hzbar })
            } else {
                Ok(nitsche_eval(sigma, r_star, z))
            }
        }
        RefMapKind::LogMap { big_r } => {
            let rho = z.norm();
            if rho < 1.0 / big_r - 1e-9 || rho > big_r + 1e-9 {
                return Err(Error::DomainEval(format!("|z|={rho} outside [1/R, R]")));
            }
            if (z - Complex64::new(big_r, 0.0)).norm() < 1e-9 || (z - Complex64::new(1.0 / big_r, 0.0)).norm() < 1e-9 {
                return Err(Error::DomainEval("z = R^(+-1) is excluded".into()));
            }
            // Continuous logarithm on the right half-plane, Log 1 = 0. The
            // Moebius-type expression w stays in Re w > 0 on the domain.
            let w = z * (big_r * z.conj() - 1.0) / (big_r - z);
            let value = (big_r - 1.0 / big_r) * w.ln() - 2.0 * big_r * rho.ln();
            let hz = (big_r * z - 1.0) / ((big_r - z) * z);
            let hzbar = ((z - big_r) / (z * (big_r * z - 1.0))).conj() * (-1.0);
            Ok(RefEval { value, hz, hzbar })
        }
        RefMapKind::LogMapDual { big_r } => {
            let rho = z.norm();
            if rho <= 1.0 / big_r || rho >= big_r {
                return Err(Error::DomainEval(format!("|z|={rho} outside (1/R, R)")));
            }
            if z.im == 0.0 && z.re > 0.0 {
                return Err(Error::DomainEval("the cut Arg z = 0 is excluded".into()));
            }
            let arg = z.arg().rem_euclid(2.0 * PI);
            // Series sum_{n>=1} (z^n + conj(z)^{-n}) / (n R^n), both parts
            // inside the unit disc of convergence.
            let series = -((Complex64::new(1.0, 0.0) - z / big_r).ln()
                + (Complex64::new(1.0, 0.0) - 1.0 / (big_r * z.conj())).ln());
            let value = Complex64::new(0.0, -2.0 / big_r) * arg + (big_r - 1.0 / big_r) * series;
            let hz = (z * big_r - 1.0) / (z * (big_r - z));
            let hzbar = ((z - big_r) / (z * (z * big_r - 1.0))).conj();
            Ok(RefEval { value, hz, hzbar })
        }
    }
}

fn nitsche_eval(r: f64, r_star: f64, z: Complex64) -> RefEval {
    let value = 0.5 * r_star * (z / r + r / z.conj());
    let hz = Complex64::new(0.5 * r_star / r, 0.0);
    let zbar2 = z.conj() * z.conj();
    let hzbar = -0.5 * r_star * r / zbar2;
    RefEval { value, hz, hzbar }
}

/// The Hopf product `hz * conj(hzbar)` of a reference map; equals
/// `hopf_constant() / z^2` identically.
pub fn refmap_hopf_product(kind: &RefMapKind, z: Complex64) -> Result<Complex64> {
    let e = eval_refmap(kind, z)?;
    Ok(e.hz * e.hzbar.conj())
}

/// Closed-form Dirichlet energy of a reference map over an annular region.
pub fn refmap_energy(kind: &RefMapKind, region: &AnnulusSpec) -> Result<f64> {
    kind.validate()?;
    let (a, b) = (region.inner, region.outer);
    match *kind {
        RefMapKind::Identity => Ok(2.0 * PI * (b * b - a * a)),
        RefMapKind::Nitsche { r, r_star } => Ok(nitsche_energy(r, r_star, a, b)),
        RefMapKind::CrackedNitsche { r: _, sigma, r_star } => {
            let collar_hi = sigma.min(b);
            let mut e = 0.0;
            if a < collar_hi {
                // |Dh|^2 = r*^2 / rho^2 on the collar.
                e += 2.0 * PI * r_star * r_star * (collar_hi / a).ln();
            }
            if b > sigma {
                e += nitsche_energy(sigma, r_star, sigma.max(a), b);
            }
            Ok(e)
        }
        RefMapKind::LogMap { big_r } => {
            if !(a >= 1.0 - 1e-12 && b < big_r) {
                return Err(Error::DomainEval(format!("energy formula needs 1 <= a < b < R, got [{a}, {b}], R={big_r}")));
            }
            Ok(logmap_energy_from_one(big_r, b) - logmap_energy_from_one(big_r, a))
        }
        RefMapKind::LogMapDual { .. } => {
            Err(Error::Config("no closed-form energy is shipped for logmap-dual".into()))
        }
    }
}

/// Energy of the radial harmonic map with parameters (r, r*) over A(a, b).
fn nitsche_energy(r: f64, r_star: f64, a: f64, b: f64) -> f64 {
    0.5 * PI * r_star * r_star * ((b * b - a * a) / (r * r) + r * r * (1.0 / (a * a) - 1.0 / (b * b)))
}

/// Energy of the LogMap over A(1, rho). Derived by expanding the two
/// rational derivative factors into Laurent series and integrating with
/// the orthogonality of z^n on circles:
///   E = 8 pi log(rho) / R^2
///     + 2 pi (R^2-1)^2 / R^2 * log((R^2 rho^2 - 1)/(R^2 rho^2 - rho^4)).
/// Verified against 2D quadrature of the derivative formulas in tests.
fn logmap_energy_from_one(big_r: f64, rho: f64) -> f64 {
    let r2 = big_r * big_r;
    8.0 * PI * rho.ln() / r2
        + 2.0 * PI * (r2 - 1.0).powi(2) / r2 * ((r2 * rho * rho - 1.0) / (r2 * rho * rho - rho.powi(4))).ln()
}

/// Samples a reference map onto a mesh. For the radial families the
/// target annulus is attached; for the identity the target is the source.
pub fn sample_refmap(kind: &RefMapKind, mesh: Arc<PolarMesh>) -> Result<MapField> {
    kind.validate()?;
    let mut values = Vec::with_capacity(mesh.nodes.len());
    for &z in &mesh.nodes {
        values.push(eval_refmap(kind, z)?.value);
    }
    let mut f = MapField::new(mesh, values);
    let source = f.mesh.domain.as_annulus();
    f.target = match (*kind, source) {
        (RefMapKind::Identity, _) => Some(f.mesh.domain),
        (RefMapKind::Nitsche { r, r_star }, Some(s)) => {
            let r_star_outer = 0.5 * r_star * (s.outer / r + r / s.outer);
            Some(DomainSpec::annulus(r_star, r_star_outer)?)
        }
        (RefMapKind::CrackedNitsche { sigma, r_star, .. }, Some(s)) => {
            let r_star_outer = 0.5 * r_star * (s.outer / sigma + sigma / s.outer);
            Some(DomainSpec::annulus(r_star, r_star_outer)?)
        }
        _ => None,
    };
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn random_annulus_points(n: usize, r: f64, big_r: f64, seed: u64) -> Vec<Complex64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::from_polar(rng.gen_range(r..big_r), rng.gen_range(0.0..2.0 * PI)))
            .collect()
    }

    /// Midpoint quadrature of 2(|hz|^2+|hzbar|^2) in (log rho, theta),
    /// independent of the mesh code path.
    fn quadrature_energy(kind: &RefMapKind, a: f64, b: f64, n_rho: usize, n_theta: usize) -> f64 {
        let dl = (b / a).ln() / n_rho as f64;
        let dt = 2.0 * PI / n_theta as f64;
        let mut acc = crate::numerics::KahanSum::new();
        for i in 0..n_rho {
            let rho = a * ((i as f64 + 0.5) * dl).exp();
            for j in 0..n_theta {
                let theta = (j as f64 + 0.5) * dt;
                let e = eval_refmap(kind, Complex64::from_polar(rho, theta)).unwrap();
                acc.add(2.0 * (e.hz.norm_sqr() + e.hzbar.norm_sqr()) * rho * rho * dl * dt);
            }
        }
        acc.value()
    }

    #[test]
    fn pointwise_examples() {
        let n = RefMapKind::Nitsche { r: 1.0, r_star: 1.0 };
        let v = eval_refmap(&n, Complex64::new(1.0, 0.0)).unwrap().value;
        assert_relative_eq!(v.re, 1.0, epsilon = 1e-15);
        assert!(v.im.abs() < 1e-15);

        let ck = RefMapKind::CrackedNitsche { r: 1.0, sigma: 2.0, r_star: 1.0 };
        let z = Complex64::from_polar(1.5, PI / 4.0);
        let v = eval_refmap(&ck, z).unwrap().value;
        let expect = Complex64::from_polar(1.0, PI / 4.0);
        assert!((v - expect).norm() < 1e-14);

        let lm = RefMapKind::LogMap { big_r: 2.0 };
        for k in 0..16 {
            let z = Complex64::from_polar(1.0, 0.1 + k as f64 * 0.37);
            let v = eval_refmap(&lm, z).unwrap().value;
            assert!(v.norm() < 1e-12, "LogMap should vanish on |z|=1, got {v}");
        }
    }

    #[test]
    fn excluded_points_error() {
        let lm = RefMapKind::LogMap { big_r: 2.0 };
        assert!(eval_refmap(&lm, Complex64::new(2.0, 0.0)).is_err());
        assert!(eval_refmap(&lm, Complex64::new(0.5, 0.0)).is_err());
        let dual = RefMapKind::LogMapDual { big_r: 2.0 };
        assert!(eval_refmap(&dual, Complex64::new(1.3, 0.0)).is_err());
        assert!(eval_refmap(&dual, Complex64::new(1.3, 0.1)).is_ok());
    }

    #[test]
    fn hopf_product_examples() {
        let n = RefMapKind::Nitsche { r: 1.0, r_star: 1.0 };
        let z = Complex64::new(0.0, 2.0);
        let phi = refmap_hopf_product(&n, z).unwrap();
        assert_relative_eq!(phi.re, 0.0625, max_relative = 1e-13);
        assert!(phi.im.abs() < 1e-14);

        let lm = RefMapKind::LogMap { big_r: 2.0 };
        let phi = refmap_hopf_product(&lm, Complex64::new(1.3, 0.0)).unwrap();
        assert_relative_eq!(phi.re, 1.0 / 1.69, max_relative = 1e-12);
        assert!(phi.im.abs() < 1e-12);

        let id = RefMapKind::Identity;
        assert_eq!(refmap_hopf_product(&id, Complex64::new(0.7, 0.3)).unwrap(), Complex64::default());
    }

    #[test]
    fn hopf_product_times_z2_is_constant_real() {
        let kinds = [
            RefMapKind::Identity,
            RefMapKind::Nitsche { r: 1.0, r_star: 1.0 },
            RefMapKind::Nitsche { r: 0.5, r_star: 2.0 },
            RefMapKind::CrackedNitsche { r: 1.0, sigma: 2.0, r_star: 1.0 },
            RefMapKind::LogMap { big_r: 2.0 },
            RefMapKind::LogMapDual { big_r: 2.0 },
        ];
        for kind in kinds {
            let c = kind.hopf_constant();
            let pts = match kind {
                RefMapKind::LogMap { big_r } | RefMapKind::LogMapDual { big_r } => {
                    random_annulus_points(10_000, 1.0 / big_r + 0.01, big_r - 0.01, 11)
                }
                _ => random_annulus_points(10_000, 0.3, 4.0, 11),
            };
            for z in pts {
                let phi = match refmap_hopf_product(&kind, z) {
                    Ok(p) => p,
                    Err(_) => continue, // cut / excluded points
                };
                let cz2 = phi * z * z;
                assert!(cz2.im.abs() < 1e-12, "{kind:?} at {z}: Im = {}", cz2.im);
                assert!((cz2.re - c).abs() < 1e-12 * (1.0 + c.abs()), "{kind:?} at {z}: {} vs {c}", cz2.re);
            }
        }
    }

    #[test]
    fn nitsche_circle_images() {
        let (r, big_r, r_star) = (1.0, 2.0, 1.0);
        let kind = RefMapKind::Nitsche { r, r_star };
        for k in 0..100 {
            let theta = k as f64 * 2.0 * PI / 100.0;
            let inner = eval_refmap(&kind, Complex64::from_polar(r, theta)).unwrap().value;
            assert_relative_eq!(inner.norm(), r_star, max_relative = 1e-13);
            let outer = eval_refmap(&kind, Complex64::from_polar(big_r, theta)).unwrap().value;
            assert_relative_eq!(outer.norm(), 0.5 * r_star * (big_r / r + r / big_r), max_relative = 1e-13);
        }
    }

    #[test]
    fn cracked_map_is_continuous_across_sigma() {
        let kind = RefMapKind::CrackedNitsche { r: 1.0, sigma: 2.0, r_star: 1.0 };
        for k in 0..1000 {
            let theta = k as f64 * 2.0 * PI / 1000.0;
            let inside = eval_refmap(&kind, Complex64::from_polar(2.0 - 1e-13, theta)).unwrap().value;
            let outside = eval_refmap(&kind, Complex64::from_polar(2.0 + 1e-13, theta)).unwrap().value;
            assert!((inside - outside).norm() < 1e-12);
        }
    }

    #[test]
    fn logmap_reflection() {
        let kind = RefMapKind::LogMap { big_r: 2.0 };
        for z in random_annulus_points(500, 0.55, 1.9, 23) {
            let lhs = eval_refmap(&kind, 1.0 / z).unwrap().value;
            let rhs = -eval_refmap(&kind, z.conj()).unwrap().value;
            assert!((lhs - rhs).norm() < 1e-10, "at {z}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn energy_closed_forms() {
        let region = AnnulusSpec::new(1.0, 2.0).unwrap();
        let e = refmap_energy(&RefMapKind::Nitsche { r: 1.0, r_star: 1.0 }, &region).unwrap();
        assert_relative_eq!(e, 1.875 * PI, max_relative = 1e-14);
        assert_relative_eq!(e, quadrature_energy(&RefMapKind::Nitsche { r: 1.0, r_star: 1.0 }, 1.0, 2.0, 400, 64), max_relative = 1e-5);

        let big = AnnulusSpec::new(1.0, 4.0).unwrap();
        let kind = RefMapKind::CrackedNitsche { r: 1.0, sigma: 2.0, r_star: 1.0 };
        let e = refmap_energy(&kind, &big).unwrap();
        assert_relative_eq!(e, 2.0 * PI * 2.0f64.ln() + 1.875 * PI, max_relative = 1e-14);
        // Quadrature split at the collar edge where the integrand is only C^0.
        let q = quadrature_energy(&kind, 1.0, 2.0, 400, 64) + quadrature_energy(&kind, 2.0, 4.0, 400, 64);
        assert_relative_eq!(e, q, max_relative = 1e-5);

        let lm = RefMapKind::LogMap { big_r: 2.0 };
        let small = AnnulusSpec::new(1.0, 1.5).unwrap();
        let e = refmap_energy(&lm, &small).unwrap();
        assert_relative_eq!(e, 12.569378, max_relative = 1e-6);
        assert_relative_eq!(e, quadrature_energy(&lm, 1.0, 1.5, 600, 128), max_relative = 1e-5);
    }

    #[test]
    fn logmap_energy_additivity() {
        let lm = RefMapKind::LogMap { big_r: 2.0 };
        let whole = refmap_energy(&lm, &AnnulusSpec::new(1.0, 1.8).unwrap()).unwrap();
        let a = refmap_energy(&lm, &AnnulusSpec::new(1.0, 1.4).unwrap()).unwrap();
        let b = refmap_energy(&lm, &AnnulusSpec::new(1.4, 1.8).unwrap()).unwrap();
        assert_relative_eq!(whole, a + b, max_relative = 1e-12);
        // And against quadrature of the shell.
        assert_relative_eq!(b, quadrature_energy(&lm, 1.4, 1.8, 600, 128), max_relative = 1e-5);
    }

    #[test]
    fn dual_series_matches_partial_sums() {
        let big_r = 2.0;
        let kind = RefMapKind::LogMapDual { big_r };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..64 {
            let z = Complex64::from_polar(rng.gen_range(0.7..1.4), rng.gen_range(0.05..2.0 * PI - 0.05));
            let v = eval_refmap(&kind, z).unwrap().value;
            let mut s = Complex64::default();
            for n in 1..400 {
                let nf = n as f64;
                s += (z.powi(n) + z.conj().powi(-n)) / (nf * big_r.powi(n));
            }
            let direct = Complex64::new(0.0, -2.0 / big_r) * z.arg().rem_euclid(2.0 * PI) + (big_r - 1.0 / big_r) * s;
            assert!((v - direct).norm() < 1e-9, "at {z}: {v} vs {direct}");
        }
    }
}
