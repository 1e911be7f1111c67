//! Small numerical kernels: compensated summation, deterministic parallel
//! reduction, isotonic projection of cyclic boundary parameters, and a thin
//! complex least-squares wrapper.

use num_complex::Complex64;
use rayon::prelude::*;

/// Neumaier-compensated accumulator.
///
/// The compensation term also captures the case where the increment is
/// larger in magnitude than the running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a sequence, in iteration order.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = KahanSum::new();
    for v in iter {
        acc.add(v);
    }
    acc.value()
}

/// Evaluates `f(i)` for `i in 0..n` in parallel and reduces with a
/// compensated sum in index order. The reduction order is fixed by the
/// index, so the result does not depend on the number of worker threads.
pub fn par_sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    // Fixed chunking keeps the term layout identical for any thread count.
    const CHUNK: usize = 4096;
    if n <= CHUNK {
        return kahan_sum((0..n).map(f));
    }
    let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            kahan_sum((lo..hi).map(&f))
        })
        .collect();
    kahan_sum(partials)
}

/// Weighted pool-adjacent-violators: least-squares nondecreasing fit.
///
/// Returns the fitted values; ties appear as pooled blocks sharing the
/// block mean.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    // Blocks of (weighted mean, weight, count).
    let mut mean = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    let mut count = Vec::with_capacity(n);
    for i in 0..n {
        mean.push(values[i]);
        weight.push(weights[i]);
        count.push(1usize);
        while mean.len() > 1 && mean[mean.len() - 2] > mean[mean.len() - 1] {
            let (m2, w2, c2) = (mean.pop().unwrap(), weight.pop().unwrap(), count.pop().unwrap());
            let k = mean.len() - 1;
            let w = weight[k] + w2;
            mean[k] = (mean[k] * weight[k] + m2 * w2) / w;
            weight[k] = w;
            count[k] += c2;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (m, c) in mean.iter().zip(count.iter()) {
        out.extend(std::iter::repeat(*m).take(*c));
    }
    out
}

/// Euclidean projection of a cyclic parameter sequence onto the cone of
/// weakly monotone sequences with total increase at most one period:
/// `s[0] <= s[1] <= ... <= s[n-1] <= s[0] + period`.
///
/// The wrap increment `s[0] + period - s[n-1]` stays nonnegative, so the
/// total increase around the cycle is exactly one period. Coalesced
/// parameters (equal values) are allowed.
pub fn project_cyclic_monotone(params: &[f64], period: f64) -> Vec<f64> {
    let n = params.len();
    if n <= 1 {
        return params.to_vec();
    }
    let w = vec![1.0; n];
    let fitted = pava(params, &w);
    let range = fitted[n - 1] - fitted[0];
    if range <= period {
        return fitted;
    }
    // Range constraint is active: clamp the monotone fit into a window
    // [t, t + period] and pick the window offset t minimizing the squared
    // deviation. The objective is convex piecewise-quadratic in t.
    let lo = fitted[n - 1] - period; // smallest sensible t
    let hi = fitted[0]; // largest sensible t
    let mut breaks: Vec<f64> = Vec::with_capacity(2 * n + 2);
    for &p in &fitted {
        breaks.push(p);
        breaks.push(p - period);
    }
    breaks.push(lo);
    breaks.push(hi);
    breaks.retain(|t| *t >= lo - 1e-300 && *t <= hi + 1e-300);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dg = |t: f64| -> f64 {
        let mut g = KahanSum::new();
        for (&p, &s) in fitted.iter().zip(params.iter()) {
            if p < t {
                g.add(t - s);
            } else if p > t + period {
                g.add(t + period - s);
            }
        }
        g.value()
    };
    // Find the sign change of the (nondecreasing) derivative over the breaks.
    let mut t_opt = hi;
    let mut prev = lo;
    if dg(lo) >= 0.0 {
        t_opt = lo;
    } else {
        for &b in &breaks {
            if dg(b) >= 0.0 {
                // Linear interpolation of the derivative root in [prev, b].
                let (glo, ghi) = (dg(prev), dg(b));
                t_opt = if ghi > glo {
                    prev + (b - prev) * (-glo) / (ghi - glo)
                } else {
                    b
                };
                break;
            }
            prev = b;
        }
    }
    fitted
        .iter()
        .map(|&p| p.clamp(t_opt, t_opt + period))
        .collect()
}

/// Least-squares solve of an overdetermined complex system by thin
/// Householder QR. Returns `None` when the (column-scaled) triangular
/// factor is numerically rank deficient.
pub fn lstsq_complex(a: &nalgebra::DMatrix<Complex64>, b: &nalgebra::DVector<Complex64>) -> Option<nalgebra::DVector<Complex64>> {
    let ncols = a.ncols();
    let qr = a.clone().qr();
    let r = qr.r();
    let mut dmax: f64 = 0.0;
    let mut dmin = f64::INFINITY;
    for k in 0..ncols {
        let d = r[(k, k)].norm();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    if !(dmin > 1e-12 * dmax) {
        return None;
    }
    let qtb = qr.q().ad_mul(b);
    r.solve_upper_triangular(&qtb)
}
