//! Infeasible-start primal-dual path following, HKM direction.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::{infeasible, RawSolution, SdpStatus, StandardForm};
use crate::math;
use crate::Result;

pub(crate) const MAX_ITER: usize = 200;
const STEP_FACTOR: f64 = 0.98;

/// Nonsymmetric expansion of a symmetric sparse matrix.
fn expand(row: &super::SymMatrix) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(row.entries().len() * 2);
    for &(r, c, v) in row.entries() {
        out.push((r, c, v));
        if r != c {
            out.push((c, r, v));
        }
    }
    out
}

struct Problem<'a> {
    sf: &'a StandardForm,
    a: Vec<Vec<(usize, usize, f64)>>,
    c: DMatrix<f64>,
    b: DVector<f64>,
}

impl Problem<'_> {
    fn m(&self) -> usize {
        self.sf.rows.len()
    }

    fn apply(&self, x: &DMatrix<f64>, w: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.sf.rows.iter().zip(&self.a).map(|(row, a)| {
                a.iter().map(|&(r, c, v)| v * x[(c, r)]).sum::<f64>() + row.lp.iter().map(|&(k, v)| v * w[k]).sum::<f64>()
            }),
        )
    }

    fn apply_sdp(&self, k: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.a.iter().map(|a| a.iter().map(|&(r, c, v)| v * k[(c, r)]).sum::<f64>()))
    }

    fn apply_lp(&self, w: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.sf.rows.iter().map(|row| row.lp.iter().map(|&(k, v)| v * w[k]).sum::<f64>()))
    }

    fn adjoint(&self, y: &DVector<f64>) -> (DMatrix<f64>, Vec<f64>) {
        let d = self.sf.dim;
        let mut z = DMatrix::zeros(d, d);
        let mut zl = vec![0.0; self.sf.n_lp];
        for (i, (row, a)) in self.sf.rows.iter().zip(&self.a).enumerate() {
            for &(r, c, v) in a {
                z[(r, c)] += v * y[i];
            }
            for &(k, v) in &row.lp {
                zl[k] += v * y[i];
            }
        }
        (z, zl)
    }
}

fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn factor_with_shift(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch);
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut shift = 1e-14 * scale;
    for _ in 0..30 {
        let mut s = m.clone();
        for i in 0..m.nrows() {
            s[(i, i)] += shift;
        }
        if let Some(ch) = s.cholesky() {
            return Some(ch);
        }
        shift *= 10.0;
    }
    None
}

/// Largest `a <= 1` keeping `x + a dx` PSD, damped by the step factor.
fn psd_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(ch) = x.clone().cholesky() else {
        return 0.0;
    };
    let l = ch.l();
    let Some(t) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(t) = l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let lam = SymmetricEigen::new(sym(t)).eigenvalues.min();
    if lam >= 0.0 {
        1.0
    } else {
        (STEP_FACTOR * (-1.0 / lam)).min(1.0)
    }
}

fn lp_step(w: &[f64], dw: &[f64]) -> f64 {
    let mut a = f64::INFINITY;
    for (&v, &dv) in w.iter().zip(dw) {
        if dv < 0.0 {
            a = a.min(-v / dv);
        }
    }
    (STEP_FACTOR * a).min(1.0)
}

struct Direction {
    dx: DMatrix<f64>,
    dw: Vec<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
    dzl: Vec<f64>,
}

pub(crate) fn solve(sf: &StandardForm, tol: f64, max_iter: usize) -> Result<RawSolution> {
    let d = sf.dim;
    let nl = sf.n_lp;
    let a: Vec<_> = sf.rows.iter().map(|r| expand(&r.sdp)).collect();
    let p = Problem { sf, a, c: sf.c_sdp.to_dense(), b: DVector::from_iterator(sf.rows.len(), sf.rows.iter().map(|r| r.b)) };
    let m = p.m();
    let b_norm = p.b.norm();
    let c_norm = math::sqrt(p.c.norm_squared() + sf.c_lp.iter().map(|v| v * v).sum::<f64>());
    let n_cone = (d + nl) as f64;

    let max_b = sf.rows.iter().map(|r| 1.0 + r.b.abs()).fold(1.0, f64::max);
    let xi = 10.0_f64.max(math::sqrt(d as f64)).max(d as f64 * max_b / 2.0);
    let eta = 10.0_f64.max(math::sqrt(d as f64)).max(1.0 + c_norm);
    let mut x = DMatrix::identity(d, d) * xi;
    let mut w = vec![xi; nl];
    let mut z = DMatrix::identity(d, d) * eta;
    let mut zl = vec![eta; nl];
    let mut y = DVector::zeros(m);

    let mut status = SdpStatus::MaxIterations;
    let mut iterations = 0;
    let mut rel_p = f64::INFINITY;
    let mut rel_d = f64::INFINITY;
    let mut stalls = 0;
    for it in 0..max_iter {
        iterations = it;
        let rp = &p.b - p.apply(&x, &w);
        let (aty, atyl) = p.adjoint(&y);
        let rd = &p.c - &aty - &z;
        let rdl: Vec<f64> = (0..nl).map(|k| sf.c_lp[k] - atyl[k] - zl[k]).collect();
        let mu = (dot(&x, &z) + w.iter().zip(&zl).map(|(a, b)| a * b).sum::<f64>()) / n_cone;
        let pobj = dot(&p.c, &x) + sf.c_lp.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let dobj = p.b.dot(&y);
        rel_p = rp.norm() / (1.0 + b_norm);
        rel_d = math::sqrt(rd.norm_squared() + rdl.iter().map(|v| v * v).sum::<f64>()) / (1.0 + c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if rel_p <= tol && rel_d <= tol && gap <= tol {
            status = SdpStatus::Converged;
            break;
        }
        if y.amax() > 1e12 && rel_d <= 1e-6 && dobj > 0.0 {
            return Err(infeasible("dual ray found", rel_p));
        }

        let Some(zch) = z.clone().cholesky() else { break };
        let zinv = sym(zch.inverse());
        let ratio: Vec<f64> = (0..nl).map(|k| w[k] / zl[k]).collect();

        // Schur complement M_ij = Tr(A_i X A_j Z^-1) + sum_k a_ik a_jk w_k / z_k.
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for &(r, c, v) in &p.a[i] {
                    for &(pp, q, u) in &p.a[j] {
                        s += v * u * x[(c, pp)] * zinv[(q, r)];
                    }
                }
                for &(ki, vi) in &sf.rows[i].lp {
                    for &(kj, vj) in &sf.rows[j].lp {
                        if ki == kj {
                            s += vi * vj * ratio[ki];
                        }
                    }
                }
                schur[(i, j)] = s;
                schur[(j, i)] = s;
            }
        }
        let Some(mch) = factor_with_shift(&schur) else { break };

        let direction = |sigma_mu: f64, corr: Option<&Direction>| -> Direction {
            // H = sigma mu Z^-1 - X - X Rd Z^-1 - dXa dZa Z^-1
            let mut h = &zinv * sigma_mu - &x - &x * &rd * &zinv;
            let mut hl: Vec<f64> = (0..nl).map(|k| sigma_mu / zl[k] - w[k] - ratio[k] * rdl[k]).collect();
            if let Some(c) = corr {
                h -= &c.dx * &c.dz * &zinv;
                for k in 0..nl {
                    hl[k] -= c.dw[k] * c.dzl[k] / zl[k];
                }
            }
            let rhs = &rp - p.apply_sdp(&h) - p.apply_lp(&hl);
            let dy = mch.solve(&rhs);
            let (ady, adyl) = p.adjoint(&dy);
            let dz = &rd - ady;
            let dzl: Vec<f64> = (0..nl).map(|k| rdl[k] - adyl[k]).collect();
            let mut dx = &zinv * sigma_mu - &x - &x * &dz * &zinv;
            let mut dw: Vec<f64> = (0..nl).map(|k| sigma_mu / zl[k] - w[k] - ratio[k] * dzl[k]).collect();
            if let Some(c) = corr {
                dx -= &c.dx * &c.dz * &zinv;
                for k in 0..nl {
                    dw[k] -= c.dw[k] * c.dzl[k] / zl[k];
                }
            }
            Direction { dx: sym(dx), dw, dy, dz: sym(dz), dzl }
        };

        let pred = direction(0.0, None);
        let ap = psd_step(&x, &pred.dx).min(lp_step(&w, &pred.dw)) / STEP_FACTOR;
        let ad = psd_step(&z, &pred.dz).min(lp_step(&zl, &pred.dzl)) / STEP_FACTOR;
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let x_aff = &x + &pred.dx * ap;
        let z_aff = &z + &pred.dz * ad;
        let mut mu_aff = dot(&x_aff, &z_aff);
        for k in 0..nl {
            mu_aff += (w[k] + ap * pred.dw[k]) * (zl[k] + ad * pred.dzl[k]);
        }
        mu_aff /= n_cone;
        let ratio = (mu_aff / mu).clamp(0.0, 1.0);
        let sigma = ratio * ratio * ratio;

        let dir = direction(sigma * mu, Some(&pred));
        let ap = psd_step(&x, &dir.dx).min(lp_step(&w, &dir.dw));
        let ad = psd_step(&z, &dir.dz).min(lp_step(&zl, &dir.dzl));
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls > 5 {
                break;
            }
        } else {
            stalls = 0;
        }
        x += &dir.dx * ap;
        x = sym(x);
        for k in 0..nl {
            w[k] += ap * dir.dw[k];
        }
        y += &dir.dy * ad;
        z += &dir.dz * ad;
        z = sym(z);
        for k in 0..nl {
            zl[k] += ad * dir.dzl[k];
        }
        iterations = it + 1;
    }

    if status != SdpStatus::Converged && !(rel_p <= 1e-4) {
        return Err(infeasible("interior point method could not reach the feasible set", rel_p));
    }
    Ok(RawSolution { x, w, dual_objective: p.b.dot(&y), dual_residual: rel_d, iterations, status })
}
