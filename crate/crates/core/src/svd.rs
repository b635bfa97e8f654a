//! Full SVD of small dense square matrices by one-sided (Hestenes) Jacobi.
//!
//! The column pairs of `A` are rotated until mutually orthogonal; the rotations
//! accumulate into `V`, the column norms are the singular values and the
//! normalized columns are `U`. Output is canonicalized: singular values sorted
//! descending, and each `U` column signed so its largest-magnitude entry is
//! non-negative (the matching `V` column is flipped with it).

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const ORTHO_TOL: f64 = 1e-15;

/// `a = u * diag(sigma) * v^T`, with `u` and `v` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Svd {
    pub n: usize,
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub v: Vec<f64>,
}

impl Svd {
    /// Column `k` of `U` as an owned vector.
    pub fn u_col(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.u[i * self.n + k]).collect()
    }

    pub fn v_col(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.v[i * self.n + k]).collect()
    }
}

/// Decomposes the row-major `n x n` matrix `a`.
pub fn svd_square(a: &[f64], n: usize) -> Result<Svd> {
    if a.len() != n * n {
        return Err(Error::Shape(format!("{} elements for a {n}x{n} matrix", a.len())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite entry in SVD input".into()));
    }

    // cols[j] holds column j of A (contiguous), vcols[j] column j of V.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| a[i * n + j]).collect()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = vcols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                // Recompute rather than update: keeps the norms from drifting.
                norms[p] = dot(&cols[p], &cols[p]);
                norms[q] = dot(&cols[q], &cols[q]);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps (n = {n})"
        )));
    }

    let sigma: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let smax = order.first().map(|&i| sigma[i]).unwrap_or(0.0);
    let cutoff = smax * (n as f64) * f64::EPSILON;

    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sorted_sigma = Vec::with_capacity(n);
    let mut sorted_v: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = sigma[j];
        if s > cutoff && s > 0.0 {
            ucols.push(cols[j].iter().map(|x| x / s).collect());
            sorted_sigma.push(s);
        } else {
            ucols.push(vec![0.0; n]);
            sorted_sigma.push(0.0);
            deficient.push(k);
        }
        sorted_v.push(vcols[j].clone());
    }
    if !deficient.is_empty() {
        complete_basis(&mut ucols, &deficient, n);
    }

    for k in 0..n {
        let (imax, _) = ucols[k]
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
        if ucols[k][imax] < 0.0 {
            ucols[k].iter_mut().for_each(|x| *x = -*x);
            sorted_v[k].iter_mut().for_each(|x| *x = -*x);
        }
    }

    let mut u = vec![0.0; n * n];
    let mut v = vec![0.0; n * n];
    for k in 0..n {
        for i in 0..n {
            u[i * n + k] = ucols[k][i];
            v[i * n + k] = sorted_v[k][i];
        }
    }
    Ok(Svd {
        n,
        u,
        sigma: sorted_sigma,
        v,
    })
}

/// `u * diag(sigma) * v^T` for row-major square factors.
pub fn compose(u: &[f64], sigma: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            let w = u[i * n + k] * sigma[k];
            if w == 0.0 {
                continue;
            }
            for (j, o) in row.iter_mut().enumerate() {
                *o += w * v[j * n + k];
            }
        }
    }
    out
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let xa = *a;
        let yb = *b;
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fills the columns listed in `missing` with unit vectors orthogonal to all others.
fn complete_basis(cols: &mut [Vec<f64>], missing: &[usize], n: usize) {
    let mut candidate = 0;
    for &k in missing {
        loop {
            let mut e = vec![0.0; n];
            e[candidate % n] = 1.0;
            candidate += 1;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for (j, c) in cols.iter().enumerate() {
                    if j == k || c.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let p = dot(&e, c);
                    e.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 1e-8 {
                e.iter_mut().for_each(|x| *x /= norm);
                cols[k] = e;
                break;
            }
            if candidate > 2 * n {
                // cannot happen for a rank-deficient but finite basis
                cols[k] = vec![0.0; n];
                break;
            }
        }
    }
}
