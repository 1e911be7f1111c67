//! Structured polar triangulations of doubly connected domains and
//! piecewise-linear complex fields on them.

use crate::domain::{self, BoundaryComponent, DomainSpec};
use crate::error::{Error, Result};
use crate::numerics;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

/// Triangulated source domain on a structured polar grid.
///
/// Nodes are indexed `i * n_theta + j` with ring `i` in `0..n_r` (inner to
/// outer) and ray `j` in `0..n_theta`. Quads are split along the
/// lower-left to upper-right diagonal in `(i, j)`, which keeps the mesh
/// invariant under rotation by multiples of `2 pi / n_theta`.
#[derive(Debug, Clone)]
pub struct PolarMesh {
    pub domain: DomainSpec,
    pub nodes: Vec<Complex64>,
    pub triangles: Vec<[usize; 3]>,
    pub ring_index: Vec<usize>,
    pub ray_index: Vec<usize>,
    pub inner_boundary: Vec<usize>,
    pub outer_boundary: Vec<usize>,
    pub n_r: usize,
    pub n_theta: usize,
    areas: Vec<f64>,
    barycenters: Vec<Complex64>,
}

impl PolarMesh {
    #[inline]
    pub fn node(&self, ring: usize, ray: usize) -> usize {
        ring * self.n_theta + (ray % self.n_theta)
    }

    #[inline]
    pub fn area(&self, tri: usize) -> f64 {
        self.areas[tri]
    }

    #[inline]
    pub fn barycenter(&self, tri: usize) -> Complex64 {
        self.barycenters[tri]
    }

    pub fn total_area(&self) -> f64 {
        numerics::kahan_sum(self.areas.iter().copied())
    }

    /// Ring index of the innermost vertex of a triangle.
    pub fn triangle_ring(&self, tri: usize) -> usize {
        let t = self.triangles[tri];
        t.iter().map(|&v| self.ring_index[v]).min().unwrap()
    }
}

fn signed_area(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    0.5 * ((b - a).conj() * (c - a)).im
}

/// Builds the structured mesh of a domain.
///
/// Annuli are graded geometrically in radius (uniform in `log rho`);
/// washer rays interpolate linearly between the diamond and the outer
/// circle.
pub fn build_mesh(d: &DomainSpec, n_r: usize, n_theta: usize) -> Result<PolarMesh> {
    if n_r < 2 {
        return Err(Error::Config(format!("n_r must be >= 2, got {n_r}")));
    }
    if n_theta < 8 || n_theta % 2 != 0 {
        return Err(Error::Config(format!("n_theta must be even and >= 8, got {n_theta}")));
    }
    let mut nodes = Vec::with_capacity(n_r * n_theta);
    let mut ring_index = Vec::with_capacity(n_r * n_theta);
    let mut ray_index = Vec::with_capacity(n_r * n_theta);
    for i in 0..n_r {
        let t = i as f64 / (n_r - 1) as f64;
        for j in 0..n_theta {
            let theta = 2.0 * PI * j as f64 / n_theta as f64;
            let rho = match d {
                DomainSpec::Annulus(a) => a.inner * (a.outer / a.inner).powf(t),
                DomainSpec::Washer(w) => {
                    let r_in = domain::diamond_radius(theta);
                    r_in + t * (w.rho - r_in)
                }
            };
            nodes.push(Complex64::from_polar(rho, theta));
            ring_index.push(i);
            ray_index.push(j);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (n_r - 1) * n_theta);
    for i in 0..n_r - 1 {
        for j in 0..n_theta {
            let ll = i * n_theta + j;
            let lr = (i + 1) * n_theta + j;
            let ul = i * n_theta + (j + 1) % n_theta;
            let ur = (i + 1) * n_theta + (j + 1) % n_theta;
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
        }
    }
    let mut areas = Vec::with_capacity(triangles.len());
    let mut barycenters = Vec::with_capacity(triangles.len());
    for t in &triangles {
        let (a, b, c) = (nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        let area = signed_area(a, b, c);
        if area <= 0.0 {
            return Err(Error::Mesh(format!("non-positive triangle area {area}")));
        }
        areas.push(area);
        barycenters.push((a + b + c) / 3.0);
    }
    Ok(PolarMesh {
        domain: *d,
        inner_boundary: (0..n_theta).collect(),
        outer_boundary: ((n_r - 1) * n_theta..n_r * n_theta).collect(),
        nodes,
        triangles,
        ring_index,
        ray_index,
        n_r,
        n_theta,
        areas,
        barycenters,
    })
}

/// Boundary parameters of a field: one value per boundary node, in the
/// node order of the boundary cycles.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct BoundaryParams {
    pub inner: Vec<f64>,
    pub outer: Vec<f64>,
}

/// Piecewise-linear complex field on a polar mesh, together with the
/// target-boundary parameters of its boundary nodes.
#[derive(Debug, Clone)]
pub struct MapField {
    pub mesh: Arc<PolarMesh>,
    pub values: Vec<Complex64>,
    pub boundary_param: BoundaryParams,
    pub target: Option<DomainSpec>,
}

impl MapField {
    pub fn new(mesh: Arc<PolarMesh>, values: Vec<Complex64>) -> Self {
        let n_theta = mesh.n_theta;
        let params: Vec<f64> = (0..n_theta).map(|j| 2.0 * PI * j as f64 / n_theta as f64).collect();
        MapField {
            mesh,
            values,
            boundary_param: BoundaryParams { inner: params.clone(), outer: params },
            target: None,
        }
    }

    /// Samples a pointwise map onto the mesh nodes.
    pub fn from_fn(mesh: Arc<PolarMesh>, f: impl Fn(Complex64) -> Complex64) -> Self {
        let values = mesh.nodes.iter().map(|&z| f(z)).collect();
        Self::new(mesh, values)
    }

    /// Re-applies `boundary_point` to push boundary parameters onto the
    /// target curves.
    pub fn sync_boundary_values(&mut self) {
        let Some(target) = self.target else { return };
        for (k, &i) in self.mesh.inner_boundary.iter().enumerate() {
            self.values[i] = domain::boundary_point(&target, BoundaryComponent::Inner, self.boundary_param.inner[k]);
        }
        for (k, &i) in self.mesh.outer_boundary.iter().enumerate() {
            self.values[i] = domain::boundary_point(&target, BoundaryComponent::Outer, self.boundary_param.outer[k]);
        }
    }

    /// Field composed with a source rotation by `steps` grid angles:
    /// `h'(z) = h(z e^{-i a})` realized as a node re-indexing.
    pub fn rotate_source(&self, steps: usize) -> MapField {
        let m = &self.mesh;
        let n_theta = m.n_theta;
        let steps = steps % n_theta;
        let mut values = vec![Complex64::default(); self.values.len()];
        for i in 0..m.n_r {
            for j in 0..n_theta {
                // Node at ray j takes the value of ray j - steps.
                let src = (j + n_theta - steps) % n_theta;
                values[m.node(i, j)] = self.values[m.node(i, src)];
            }
        }
        let rot = |params: &[f64], period: f64| -> Vec<f64> {
            let n = params.len();
            let mut out = vec![0.0; n];
            for j in 0..n {
                let src = (j + n - steps) % n;
                // Keep the sequence weakly monotone by unwrapping.
                out[j] = if src > j { params[src] - period } else { params[src] };
            }
            out
        };
        MapField {
            mesh: Arc::clone(m),
            values,
            boundary_param: BoundaryParams {
                inner: rot(&self.boundary_param.inner, self.target.map_or(2.0 * PI, |t| t.boundary_period(BoundaryComponent::Inner))),
                outer: rot(&self.boundary_param.outer, self.target.map_or(2.0 * PI, |t| t.boundary_period(BoundaryComponent::Outer))),
            },
            target: self.target,
        }
    }
}

/// Per-triangle Wirtinger and polar derivative data of a field.
#[derive(Debug, Clone)]
pub struct DerivField {
    pub hz: Vec<Complex64>,
    pub hzbar: Vec<Complex64>,
    pub hn: Vec<Complex64>,
    pub ht: Vec<Complex64>,
    pub jacobian: Vec<f64>,
    pub barycenter: Vec<Complex64>,
    pub area: Vec<f64>,
}

impl DerivField {
    pub fn len(&self) -> usize {
        self.hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hz.is_empty()
    }

    /// Median of the per-triangle Jacobians. Falls back to the
    /// area-weighted mean of |J| when the median degenerates (more than
    /// half of the triangles collapsed).
    pub fn median_jacobian(&self) -> f64 {
        let mut j = self.jacobian.clone();
        j.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if j.is_empty() {
            return 0.0;
        }
        let med = j[j.len() / 2];
        if med > 0.0 {
            return med;
        }
        let num = crate::numerics::kahan_sum((0..self.len()).map(|t| self.area[t] * self.jacobian[t].abs()));
        let den = crate::numerics::kahan_sum(self.area.iter().copied());
        num / den
    }
}

/// Constant gradient of the linear interpolant on each triangle, with the
/// polar frame evaluated at the barycenter.
pub fn element_derivatives(f: &MapField) -> Result<DerivField> {
    let m = &f.mesh;
    if f.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Mesh("field values must be finite".into()));
    }
    let per_tri: Vec<(Complex64, Complex64, Complex64, Complex64, f64)> = (0..m.triangles.len())
        .into_par_iter()
        .map(|t| {
            let [i0, i1, i2] = m.triangles[t];
            let (z0, z1, z2) = (m.nodes[i0], m.nodes[i1], m.nodes[i2]);
            let (v0, v1, v2) = (f.values[i0], f.values[i1], f.values[i2]);
            let area = m.area(t);
            // Linear field v = hz z + hzbar zbar + const.
            let det = Complex64::new(0.0, -4.0 * area);
            let hz = ((v1 - v0) * (z2 - z0).conj() - (v2 - v0) * (z1 - z0).conj()) / det;
            let hzbar = ((v2 - v0) * (z1 - z0) - (v1 - v0) * (z2 - z0)) / det;
            let frame = Complex64::from_polar(1.0, m.barycenter(t).arg());
            let hn = hz * frame + hzbar * frame.conj();
            let ht = Complex64::i() * (hz * frame - hzbar * frame.conj());
            let j = hz.norm_sqr() - hzbar.norm_sqr();
            (hz, hzbar, hn, ht, j)
        })
        .collect();
    let n = per_tri.len();
    let mut out = DerivField {
        hz: Vec::with_capacity(n),
        hzbar: Vec::with_capacity(n),
        hn: Vec::with_capacity(n),
        ht: Vec::with_capacity(n),
        jacobian: Vec::with_capacity(n),
        barycenter: m.barycenters.clone(),
        area: m.areas.clone(),
    };
    for (hz, hzbar, hn, ht, j) in per_tri {
        out.hz.push(hz);
        out.hzbar.push(hzbar);
        out.hn.push(hn);
        out.ht.push(ht);
        out.jacobian.push(j);
    }
    Ok(out)
}

/// On-disk schema for a mesh plus field, used by the CLI and tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldFile {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub values: Vec<[f64; 2]>,
    pub boundary_param: BoundaryParams,
    pub n_r: usize,
    pub n_theta: usize,
    pub source: DomainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<DomainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_history: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

impl FieldFile {
    pub fn from_field(f: &MapField) -> Self {
        FieldFile {
            nodes: f.mesh.nodes.iter().map(|z| [z.re, z.im]).collect(),
            triangles: f.mesh.triangles.clone(),
            values: f.values.iter().map(|v| [v.re, v.im]).collect(),
            boundary_param: f.boundary_param.clone(),
            n_r: f.mesh.n_r,
            n_theta: f.mesh.n_theta,
            source: f.mesh.domain,
            target: f.target,
            energy_history: None,
            converged: None,
        }
    }

    /// Rebuilds the in-memory field. The mesh is reconstructed from the
    /// stored source spec and verified against the stored nodes.
    pub fn into_field(self) -> Result<MapField> {
        let mesh = build_mesh(&self.source, self.n_r, self.n_theta)?;
        if mesh.nodes.len() != self.nodes.len() || mesh.triangles != self.triangles {
            return Err(Error::Mesh("stored mesh does not match its source spec".into()));
        }
        for (a, b) in mesh.nodes.iter().zip(self.nodes.iter()) {
            if (a.re - b[0]).abs() > 1e-9 || (a.im - b[1]).abs() > 1e-9 {
                return Err(Error::Mesh("stored node positions do not match the source spec".into()));
            }
        }
        Ok(MapField {
            mesh: Arc::new(mesh),
            values: self.values.iter().map(|v| Complex64::new(v[0], v[1])).collect(),
            boundary_param: self.boundary_param,
            target: self.target,
        })
    }
}

/// Writes node positions and values as CSV rows `x,y,u,v`.
pub fn write_field_csv<W: Write>(f: &MapField, mut w: W) -> Result<()> {
    writeln!(w, "x,y,u,v")?;
    for (z, v) in f.mesh.nodes.iter().zip(f.values.iter()) {
        writeln!(w, "{},{},{},{}", z.re, z.im, v.re, v.im)?;
    }
    Ok(())
}

/// Writes per-triangle derivative rows
/// `cx,cy,hz_re,hz_im,hzbar_re,hzbar_im,J`.
pub fn write_deriv_csv<W: Write>(d: &DerivField, mut w: W) -> Result<()> {
    writeln!(w, "cx,cy,hz_re,hz_im,hzbar_re,hzbar_im,J")?;
    for t in 0..d.len() {
        let c = d.barycenter[t];
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            c.re, c.im, d.hz[t].re, d.hz[t].im, d.hzbar[t].re, d.hzbar[t].im, d.jacobian[t]
        )?;
    }
    Ok(())
}
