//! Over-relaxed ADMM on `svec` coordinates (off-diagonals scaled by sqrt 2).
//!
//! `v` lives on the affine set, `u` in the cone, `lam` is the scaled dual of
//! `v = u`. At a fixed point `y = -rho (A A')^+ (A p - b)` and the cone dual
//! is `-rho lam`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{infeasible, RawSolution, SdpStatus, StandardForm};
use crate::linalg;
use crate::math;
use crate::{Error, Result};

const RELAX: f64 = 1.6;
const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 50;
const SQRT2: f64 = core::f64::consts::SQRT_2;

struct Layout {
    d: usize,
    n_s: usize,
}

impl Layout {
    fn idx(&self, r: usize, c: usize) -> usize {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        // Row-major upper triangle.
        r * self.d - r * (r + 1) / 2 + c
    }

    fn smat(&self, v: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.d, self.d);
        for r in 0..self.d {
            for c in r..self.d {
                let s = v[self.idx(r, c)];
                if r == c {
                    m[(r, r)] = s;
                } else {
                    m[(r, c)] = s / SQRT2;
                    m[(c, r)] = s / SQRT2;
                }
            }
        }
        m
    }

    fn svec_into(&self, m: &DMatrix<f64>, out: &mut [f64]) {
        for r in 0..self.d {
            for c in r..self.d {
                out[self.idx(r, c)] = if r == c { m[(r, r)] } else { SQRT2 * 0.5 * (m[(r, c)] + m[(c, r)]) };
            }
        }
    }
}

fn sparse_row(lay: &Layout, sdp: &super::SymMatrix, lp: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for &(r, c, v) in sdp.entries() {
        let k = lay.idx(r, c);
        let val = if r == c { v } else { SQRT2 * v };
        out.push((k, val));
    }
    for &(k, v) in lp {
        out.push((lay.n_s + k, v));
    }
    out
}

fn row_dot(row: &[(usize, f64)], v: &[f64]) -> f64 {
    row.iter().map(|&(k, a)| a * v[k]).sum()
}

/// Pseudo-inverse of `A A'` with an inconsistency check on `b`.
struct Gram {
    q: DMatrix<f64>,
    inv_vals: DVector<f64>,
}

impl Gram {
    fn new(rows: &[Vec<(usize, f64)>], b: &DVector<f64>, n: usize) -> Result<Self> {
        let m = rows.len();
        let mut dense = vec![Vec::new(); m];
        for (i, row) in rows.iter().enumerate() {
            let mut v = vec![0.0; n];
            for &(k, a) in row {
                v[k] += a;
            }
            dense[i] = v;
        }
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let s: f64 = rows[j].iter().map(|&(k, a)| a * dense[i][k]).sum();
                g[(i, j)] = s;
                g[(j, i)] = s;
            }
        }
        let eig = SymmetricEigen::new(g);
        let top = eig.eigenvalues.amax().max(1e-300);
        let cut = top * 1e-12 * m as f64;
        let mut inv_vals = DVector::zeros(m);
        for k in 0..m {
            let lam = eig.eigenvalues[k];
            if lam > cut {
                inv_vals[k] = 1.0 / lam;
            } else {
                let comp = eig.eigenvectors.column(k).dot(b);
                if comp.abs() > 1e-8 * (1.0 + b.norm()) {
                    return Err(infeasible("linearly dependent constraints with inconsistent right-hand sides", comp.abs()));
                }
            }
        }
        Ok(Self { q: eig.eigenvectors, inv_vals })
    }

    fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let t = self.q.tr_mul(r).component_mul(&self.inv_vals);
        &self.q * t
    }
}

pub(crate) fn solve(sf: &StandardForm, tol: f64, max_iter: usize) -> Result<RawSolution> {
    let d = sf.dim;
    let n_s = d * (d + 1) / 2;
    let lay = Layout { d, n_s };
    let n = n_s + sf.n_lp;
    let rows: Vec<Vec<(usize, f64)>> = sf.rows.iter().map(|r| sparse_row(&lay, &r.sdp, &r.lp)).collect();
    let m = rows.len();
    let b = DVector::from_iterator(m, sf.rows.iter().map(|r| r.b));
    let gram = Gram::new(&rows, &b, n)?;
    let mut cvec = vec![0.0; n];
    for &(r, c, v) in sf.c_sdp.entries() {
        cvec[lay.idx(r, c)] += if r == c { v } else { SQRT2 * v };
    }
    for (k, &v) in sf.c_lp.iter().enumerate() {
        cvec[n_s + k] = v;
    }
    let c_norm = math::sqrt(cvec.iter().map(|v| v * v).sum());

    let mut u = vec![0.0; n];
    let mut lam = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut vhat = vec![0.0; n];
    let mut u_prev = vec![0.0; n];
    let mut nu = DVector::zeros(m);
    let mut rho = 1.0_f64;
    let mut status = SdpStatus::MaxIterations;
    let mut iterations = 0;
    let mut r_prim = f64::INFINITY;
    let mut r_dual = f64::INFINITY;

    for it in 1..=max_iter {
        iterations = it;
        for k in 0..n {
            p[k] = u[k] - lam[k] - cvec[k] / rho;
        }
        let resid = DVector::from_iterator(m, rows.iter().enumerate().map(|(i, row)| row_dot(row, &p) - b[i]));
        nu = gram.solve(&resid);
        v.copy_from_slice(&p);
        for (i, row) in rows.iter().enumerate() {
            for &(k, a) in row {
                v[k] -= a * nu[i];
            }
        }
        for k in 0..n {
            vhat[k] = RELAX * v[k] + (1.0 - RELAX) * u[k];
        }
        u_prev.copy_from_slice(&u);
        for k in 0..n {
            u[k] = vhat[k] + lam[k];
        }
        let proj = linalg::project_psd(&lay.smat(&u[..n_s]));
        lay.svec_into(&proj, &mut u[..n_s]);
        for k in n_s..n {
            u[k] = u[k].max(0.0);
        }
        for k in 0..n {
            lam[k] += vhat[k] - u[k];
        }

        if it % CHECK_EVERY == 0 || it == max_iter {
            let norm = |a: &[f64]| math::sqrt(a.iter().map(|x| x * x).sum());
            let diff: Vec<f64> = v.iter().zip(&u).map(|(a, b)| a - b).collect();
            let du: Vec<f64> = u.iter().zip(&u_prev).map(|(a, b)| rho * (a - b)).collect();
            let scale_p = 1.0 + norm(&u).max(norm(&v));
            let scale_d = 1.0 + c_norm + rho * norm(&lam);
            r_prim = norm(&diff) / scale_p;
            r_dual = norm(&du) / scale_d;
            let pobj: f64 = cvec.iter().zip(&u).map(|(a, b)| a * b).sum();
            let dobj = -b.dot(&nu) * rho;
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            if r_prim <= tol && r_dual <= tol && gap <= 10.0 * tol {
                status = SdpStatus::Converged;
                break;
            }
            if it % ADAPT_EVERY == 0 {
                let k = if r_prim > 10.0 * r_dual {
                    2.0
                } else if r_dual > 10.0 * r_prim {
                    0.5
                } else {
                    1.0
                };
                if k != 1.0 {
                    rho *= k;
                    for l in lam.iter_mut() {
                        *l /= k;
                    }
                }
            }
        }
    }

    if status != SdpStatus::Converged && !(r_prim <= math::sqrt(tol).max(1e-4)) {
        return Err(infeasible("splitting iterates did not approach the feasible set", r_prim));
    }
    let x = lay.smat(&u[..n_s]);
    let w = u[n_s..].to_vec();
    let y = -&nu * rho;
    let dual_objective = b.dot(&y);
    if !dual_objective.is_finite() {
        return Err(Error::NotConverged { iterations, primal_residual: r_prim, dual_residual: r_dual });
    }
    Ok(RawSolution { x, w, dual_objective, dual_residual: r_dual, iterations, status })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_roundtrip_preserves_inner_product() {
        let lay = Layout { d: 3, n_s: 6 };
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let mut va = vec![0.0; 6];
        let mut vb = vec![0.0; 6];
        lay.svec_into(&a, &mut va);
        lay.svec_into(&b, &mut vb);
        let ip: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        assert!((ip - a.component_mul(&b).sum()).abs() < 1e-12);
        assert!((lay.smat(&va) - a).norm() < 1e-12);
    }
}
