//! Discrete Hopf product field, Laurent-series fitting, and the
//! minimality certificate.

use crate::energy::dirichlet_energy_of;
use crate::error::{Error, Result};
use crate::mesh::{element_derivatives, DerivField, MapField};
use crate::numerics::{kahan_sum, lstsq_complex};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Laurent-coefficient representation of a holomorphic quadratic
/// differential `phi(z) dz (x) dz`, with coefficients `a_n` for
/// `n in [-order, order]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadDifferential {
    pub order: usize,
    /// Coefficient of `z^n` at index `n + order`.
    pub coefficients: Vec<[f64; 2]>,
}

impl QuadDifferential {
    pub fn new(order: usize, coefficients: Vec<Complex64>) -> Result<Self> {
        if order < 2 {
            return Err(Error::Config(format!("fit order must be >= 2, got {order}")));
        }
        if coefficients.len() != 2 * order + 1 {
            return Err(Error::Config("coefficient count must be 2*order + 1".into()));
        }
        if coefficients.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Config("coefficients must be finite".into()));
        }
        Ok(QuadDifferential { order, coefficients: coefficients.iter().map(|c| [c.re, c.im]).collect() })
    }

    /// Builds a differential from sparse `(power, coefficient)` terms.
    pub fn from_terms(order: usize, terms: &[(i32, Complex64)]) -> Result<Self> {
        let mut coeffs = vec![Complex64::default(); 2 * order + 1];
        for &(n, c) in terms {
            if n.unsigned_abs() as usize > order {
                return Err(Error::Config(format!("power {n} exceeds order {order}")));
            }
            coeffs[(n + order as i32) as usize] += c;
        }
        Self::new(order, coeffs)
    }

    pub fn coeff(&self, n: i32) -> Complex64 {
        let idx = n + self.order as i32;
        if idx < 0 || idx as usize >= self.coefficients.len() {
            Complex64::default()
        } else {
            let c = self.coefficients[idx as usize];
            Complex64::new(c[0], c[1])
        }
    }

    /// Evaluates `phi(z)`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let n = self.order as i32;
        // Horner in z for nonnegative powers, in 1/z for negative ones.
        let mut pos = Complex64::default();
        for k in (0..=n).rev() {
            pos = pos * z + self.coeff(k);
        }
        let zinv = 1.0 / z;
        let mut neg = Complex64::default();
        for k in (1..=n).rev() {
            neg = (neg + self.coeff(-k)) * zinv;
        }
        pos + neg
    }

    /// Real part of `a_{-2}`, the constant of the radial normal form.
    pub fn c(&self) -> f64 {
        self.coeff(-2).re
    }
}

/// One quadrature sample of the discrete Hopf product.
#[derive(Debug, Clone, Copy)]
pub struct HopfSample {
    pub z: Complex64,
    pub phi: Complex64,
    pub weight: f64,
}

/// Hopf product `hz * conj(hzbar)` at the triangle barycenters, weighted
/// by triangle area.
pub fn hopf_field(d: &DerivField) -> Vec<HopfSample> {
    (0..d.len())
        .map(|t| HopfSample { z: d.barycenter[t], phi: d.hz[t] * d.hzbar[t].conj(), weight: d.area[t] })
        .collect()
}

/// Result of a weighted Laurent least-squares fit.
#[derive(Debug, Clone)]
pub struct LaurentFit {
    pub q: QuadDifferential,
    /// Area-weighted L1 misfit over the L1 norm of the samples.
    pub residual_rel: f64,
    /// Weighted L2 norm of each monomial column over the sample set, the
    /// natural scale for comparing coefficients.
    pub column_scales: Vec<f64>,
}

/// Weighted least squares of the samples against monomials `z^n`,
/// `n in [-order, order]`, with unit-norm column scaling.
pub fn laurent_fit(samples: &[HopfSample], order: usize) -> Result<LaurentFit> {
    if order < 2 {
        return Err(Error::Fit(format!("fit order must be >= 2, got {order}")));
    }
    let m = samples.len();
    let ncols = 2 * order + 1;
    if m < 4 * order + 4 {
        return Err(Error::Fit(format!("need at least {} samples, got {m}", 4 * order + 4)));
    }
    let mut radii: Vec<f64> = samples.iter().map(|s| s.z.norm()).collect();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let distinct = radii.windows(2).filter(|w| w[1] - w[0] > 1e-9 * w[1]).count() + 1;
    if distinct < 2 {
        return Err(Error::Fit("samples must span at least two distinct radii".into()));
    }

    let mut a = DMatrix::<Complex64>::zeros(m, ncols);
    let mut b = DVector::<Complex64>::zeros(m);
    for (i, s) in samples.iter().enumerate() {
        let sw = s.weight.sqrt();
        let zinv = 1.0 / s.z;
        let mut p = Complex64::new(1.0, 0.0);
        for k in 0..=order {
            a[(i, order + k)] = sw * p;
            p *= s.z;
        }
        let mut pneg = zinv;
        for k in 1..=order {
            a[(i, order - k)] = sw * pneg;
            pneg *= zinv;
        }
        b[i] = sw * s.phi;
    }
    let mut scales = vec![0.0f64; ncols];
    for k in 0..ncols {
        scales[k] = a.column(k).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if scales[k] <= 0.0 {
            return Err(Error::Fit(format!("degenerate monomial column {k}")));
        }
        for i in 0..m {
            a[(i, k)] /= scales[k];
        }
    }
    let x = lstsq_complex(&a, &b).ok_or_else(|| Error::Fit("rank-deficient Laurent system".into()))?;
    let coeffs: Vec<Complex64> = (0..ncols).map(|k| x[k] / scales[k]).collect();
    let q = QuadDifferential::new(order, coeffs)?;
    let misfit = kahan_sum(samples.iter().map(|s| s.weight * (s.phi - q.eval(s.z)).norm()));
    let norm = kahan_sum(samples.iter().map(|s| s.weight * s.phi.norm()));
    let residual_rel = if norm > 0.0 { misfit / norm } else { 0.0 };
    Ok(LaurentFit { q, residual_rel, column_scales: scales })
}

/// Certificate verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CertifiedMinimal,
    NotCertified,
}

/// Qualitative regime of the fitted differential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Diffeo,
    Crack,
    Conformal,
}

/// Certificate thresholds; the discrete surrogate for "analytic and real
/// along the boundary" needs explicit tolerances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertThresholds {
    pub im_ratio: f64,
    pub residual_rel: f64,
    pub spurious_ratio: f64,
    /// `phi ~ 0` when its weighted L1 norm is below this factor times the
    /// field energy.
    pub conformal_l1_factor: f64,
    pub fit_order: usize,
}

impl Default for CertThresholds {
    fn default() -> Self {
        CertThresholds { im_ratio: 1e-2, residual_rel: 5e-2, spurious_ratio: 5e-2, conformal_l1_factor: 1e-8, fit_order: 6 }
    }
}

/// Minimality certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfReport {
    pub c: f64,
    pub im_ratio: f64,
    pub residual_rel: f64,
    pub spurious_ratio: f64,
    pub verdict: Verdict,
    pub regime: Regime,
}

/// Fits the discrete Hopf product of a field to the radial normal form
/// and issues the minimality certificate.
pub fn minimality_certificate(f: &MapField, thresholds: &CertThresholds) -> Result<HopfReport> {
    if f.mesh.domain.as_annulus().is_none() {
        return Err(Error::Config("the certificate requires an annulus source (conformal normal form)".into()));
    }
    let d = element_derivatives(f)?;
    let samples = hopf_field(&d);
    let l1 = kahan_sum(samples.iter().map(|s| s.weight * s.phi.norm()));
    let energy = dirichlet_energy_of(&d, f).total;
    if l1 < thresholds.conformal_l1_factor * energy {
        return Ok(HopfReport {
            c: 0.0,
            im_ratio: 0.0,
            residual_rel: 0.0,
            spurious_ratio: 0.0,
            verdict: Verdict::CertifiedMinimal,
            regime: Regime::Conformal,
        });
    }
    let fit = laurent_fit(&samples, thresholds.fit_order)?;
    let a2 = fit.q.coeff(-2);
    let a2_norm = a2.norm();
    let order = fit.q.order as i32;
    let s2 = fit.column_scales[(order - 2) as usize];
    let mut spurious: f64 = 0.0;
    for n in -order..=order {
        if n == -2 {
            continue;
        }
        let sn = fit.column_scales[(n + order) as usize];
        let mag = fit.q.coeff(n).norm() * sn;
        spurious = spurious.max(if a2_norm > 0.0 { mag / (a2_norm * s2) } else { f64::INFINITY });
    }
    let im_ratio = if a2_norm > 0.0 { a2.im.abs() / a2_norm } else { 0.0 };
    let certified = im_ratio < thresholds.im_ratio
        && fit.residual_rel < thresholds.residual_rel
        && spurious < thresholds.spurious_ratio;
    let c = a2.re;
    Ok(HopfReport {
        c,
        im_ratio,
        residual_rel: fit.residual_rel,
        spurious_ratio: spurious,
        verdict: if certified { Verdict::CertifiedMinimal } else { Verdict::NotCertified },
        regime: if c > 0.0 { Regime::Diffeo } else { Regime::Crack },
    })
}
