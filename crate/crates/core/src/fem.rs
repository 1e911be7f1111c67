//! Piecewise-linear stiffness assembly and a conjugate-gradient Dirichlet
//! solver. The assembly uses the cotangent weights of the triangulation,
//! which coincide with the P1 finite-element stiffness matrix.

use crate::error::{Error, Result};
use crate::mesh::PolarMesh;
use crate::numerics::KahanSum;
use num_complex::Complex64;

/// Symmetric sparse stiffness matrix in CSR form.
#[derive(Debug, Clone)]
pub struct Stiffness {
    pub n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl Stiffness {
    /// Assembles the cotangent-weight stiffness of the triangulation.
    pub fn assemble(mesh: &PolarMesh) -> Result<Self> {
        let n = mesh.nodes.len();
        // Accumulate in a per-row map with sorted columns.
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(8); n];
        let add = |rows: &mut Vec<Vec<(usize, f64)>>, i: usize, j: usize, v: f64| {
            let row = &mut rows[i];
            match row.binary_search_by_key(&j, |e| e.0) {
                Ok(k) => row[k].1 += v,
                Err(k) => row.insert(k, (j, v)),
            }
        };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let area = mesh.area(t);
            if !(area > 0.0) {
                return Err(Error::Mesh(format!("degenerate triangle {t}")));
            }
            let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
            // Edge opposite vertex k.
            for k in 0..3 {
                let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                let u = b - a;
                let v = c - a;
                // cot of the angle at vertex k; weight w = cot/2 on edge (k+1, k+2).
                let cross = (u.conj() * v).im;
                let dot = (u.conj() * v).re;
                let w = 0.5 * dot / cross;
                let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                add(&mut rows, i, j, -w);
                add(&mut rows, j, i, -w);
                add(&mut rows, i, i, w);
                add(&mut rows, j, j, w);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        let mut diag = vec![0.0; n];
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row {
                if j == i {
                    diag[i] = v;
                }
                col_idx.push(j);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Stiffness { n, row_ptr, col_idx, vals, diag })
    }

    /// y = K x.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// Dirichlet energy of a real PL field: x^T K x.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = KahanSum::new();
        for i in 0..self.n {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.vals[k] * x[self.col_idx[k]];
            }
            acc.add(row * x[i]);
        }
        acc.value()
    }

    /// Dirichlet energy of a complex PL field: sum of the component
    /// quadratic forms.
    pub fn energy_complex(&self, v: &[Complex64]) -> f64 {
        let mut acc = KahanSum::new();
        for i in 0..self.n {
            let mut row = Complex64::default();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.vals[k] * v[self.col_idx[k]];
            }
            acc.add(row.re * v[i].re + row.im * v[i].im);
        }
        acc.value()
    }

    /// Gradient of the complex energy with respect to node values: K v,
    /// applied per component.
    pub fn gradient_complex(&self, v: &[Complex64], out: &mut [Complex64]) {
        for i in 0..self.n {
            let mut acc = Complex64::default();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * v[self.col_idx[k]];
            }
            out[i] = acc;
        }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Row iterator (column, value).
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.vals[k]))
    }
}

/// Solves `K u = 0` on the free nodes with the fixed nodes as Dirichlet
/// data, by Jacobi-preconditioned conjugate gradients started from the
/// current values of `u`. Starting from the current iterate makes the
/// quadratic energy non-increasing across CG iterations.
pub fn solve_dirichlet(k: &Stiffness, u: &mut [f64], fixed: &[bool], rel_tol: f64, max_iter: usize) -> Result<()> {
    let n = k.n;
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    if free.is_empty() {
        return Ok(());
    }
    if free.len() == n {
        return Err(Error::Solver("all nodes free: singular Laplace system".into()));
    }
    // rhs_i = -sum_{j fixed} K_ij u_j for free i; system restricted to free nodes.
    let nf = free.len();
    let mut pos = vec![usize::MAX; n];
    for (a, &i) in free.iter().enumerate() {
        pos[i] = a;
    }
    let mut rhs = vec![0.0; nf];
    for (a, &i) in free.iter().enumerate() {
        let mut acc = 0.0;
        for (j, v) in k.row(i) {
            if fixed[j] {
                acc -= v * u[j];
            }
        }
        rhs[a] = acc;
    }
    let apply_free = |x: &[f64], y: &mut [f64]| {
        for (a, &i) in free.iter().enumerate() {
            let mut acc = 0.0;
            for (j, v) in k.row(i) {
                if !fixed[j] {
                    acc += v * x[pos[j]];
                }
            }
            y[a] = acc;
        }
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = KahanSum::new();
        for (x, y) in a.iter().zip(b.iter()) {
            s.add(x * y);
        }
        s.value()
    };
    let mut x: Vec<f64> = free.iter().map(|&i| u[i]).collect();
    let mut ax = vec![0.0; nf];
    apply_free(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(ax.iter()).map(|(b, a)| b - a).collect();
    let minv: Vec<f64> = free.iter().map(|&i| 1.0 / k.diag()[i].max(1e-300)).collect();
    let mut z: Vec<f64> = r.iter().zip(minv.iter()).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let rhs_norm = dot(&rhs, &rhs).sqrt().max(dot(&x, &x).sqrt()).max(1e-300);
    let tol = rel_tol * rhs_norm;
    let mut ap = vec![0.0; nf];
    let mut converged = dot(&r, &r).sqrt() <= tol;
    let mut it = 0;
    while !converged && it < max_iter {
        apply_free(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Numeric { msg: "stiffness matrix lost positive definiteness".into(), residual: pap });
        }
        let alpha = rz / pap;
        for a in 0..nf {
            x[a] += alpha * p[a];
            r[a] -= alpha * ap[a];
        }
        converged = dot(&r, &r).sqrt() <= tol;
        if converged {
            break;
        }
        for a in 0..nf {
            z[a] = r[a] * minv[a];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for a in 0..nf {
            p[a] = z[a] + beta * p[a];
        }
        it += 1;
    }
    if !converged {
        return Err(Error::Numeric { msg: format!("CG failed to converge in {max_iter} iterations"), residual: dot(&r, &r).sqrt() });
    }
    for (a, &i) in free.iter().enumerate() {
        u[i] = x[a];
    }
    Ok(())
}

/// Complex Dirichlet solve: real and imaginary parts independently.
pub fn solve_dirichlet_complex(k: &Stiffness, v: &mut [Complex64], fixed: &[bool], rel_tol: f64, max_iter: usize) -> Result<()> {
    let mut re: Vec<f64> = v.iter().map(|c| c.re).collect();
    let mut im: Vec<f64> = v.iter().map(|c| c.im).collect();
    solve_dirichlet(k, &mut re, fixed, rel_tol, max_iter)?;
    solve_dirichlet(k, &mut im, fixed, rel_tol, max_iter)?;
    for (c, (r, i)) in v.iter_mut().zip(re.into_iter().zip(im.into_iter())) {
        *c = Complex64::new(r, i);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::mesh::{build_mesh, element_derivatives, MapField};
    use crate::numerics::par_sum_indexed;
    use std::sync::Arc;

    #[test]
    fn quadratic_form_matches_element_energy() {
        let mesh = Arc::new(build_mesh(&DomainSpec::annulus(1.0, 2.0).unwrap(), 7, 24).unwrap());
        let f = MapField::from_fn(Arc::clone(&mesh), |z| z * z + z.conj() * Complex64::new(0.2, 0.4));
        let k = Stiffness::assemble(&mesh).unwrap();
        let e_matrix = k.energy_complex(&f.values);
        let d = element_derivatives(&f).unwrap();
        let e_elem = par_sum_indexed(d.len(), |t| 2.0 * d.area[t] * (d.hz[t].norm_sqr() + d.hzbar[t].norm_sqr()));
        assert!((e_matrix - e_elem).abs() < 1e-9 * e_elem.abs());
    }

    #[test]
    fn dirichlet_solve_reproduces_linear_fields() {
        // Linear functions are discrete-harmonic for the cotangent weights.
        let mesh = Arc::new(build_mesh(&DomainSpec::annulus(1.0, 2.0).unwrap(), 6, 16).unwrap());
        let k = Stiffness::assemble(&mesh).unwrap();
        let exact: Vec<f64> = mesh.nodes.iter().map(|z| 1.5 * z.re - 0.25 * z.im + 2.0).collect();
        let mut u = exact.clone();
        let fixed: Vec<bool> =
            (0..mesh.nodes.len()).map(|i| mesh.ring_index[i] == 0 || mesh.ring_index[i] == mesh.n_r - 1).collect();
        // Perturb the interior, solve back.
        for i in 0..u.len() {
            if !fixed[i] {
                u[i] += ((i * 37) % 11) as f64 * 0.05;
            }
        }
        solve_dirichlet(&k, &mut u, &fixed, 1e-13, 10_000).unwrap();
        for i in 0..u.len() {
            assert!((u[i] - exact[i]).abs() < 1e-9, "node {i}: {} vs {}", u[i], exact[i]);
        }
    }

    #[test]
    fn fully_free_system_is_rejected() {
        let mesh = Arc::new(build_mesh(&DomainSpec::annulus(1.0, 2.0).unwrap(), 4, 8).unwrap());
        let k = Stiffness::assemble(&mesh).unwrap();
        let mut u = vec![0.0; mesh.nodes.len()];
        let fixed = vec![false; mesh.nodes.len()];
        assert!(solve_dirichlet(&k, &mut u, &fixed, 1e-12, 100).is_err());
    }
}
