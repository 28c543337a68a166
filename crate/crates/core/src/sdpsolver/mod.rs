//! Dense semidefinite programs with one PSD block and one bounded scalar.
//!
//! ```text
//! minimize    Tr(C S) + w T
//! subject to  Tr(M_i S)         = c_i
//!             Tr(N_j S) + t_j T <= d_j
//!             S PSD,  0 <= T (<= T_max)
//! ```
//!
//! Two backends share the contract: a primal-dual interior point method
//! (HKM direction with Mehrotra correction) and an over-relaxed ADMM that
//! alternates projections onto the affine set and the cone.

mod ipm;
mod splitting;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use nalgebra::DMatrix;

use crate::linalg;
use crate::math;
use crate::{Error, Result};

/// Sparse symmetric matrix. An entry `(r, c, v)` with `r != c` sets both
/// `M[r][c]` and `M[c][r]` to `v`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `v` to `M[r][c]` (and to `M[c][r]`).
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.dim && c < self.dim, "entry ({r}, {c}) outside {0}x{0}", self.dim);
        if v == 0.0 {
            return;
        }
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        match self.entries.iter_mut().find(|e| e.0 == r && e.1 == c) {
            Some(e) => e.2 += v,
            None => self.entries.push((r, c, v)),
        }
    }

    pub fn with(mut self, r: usize, c: usize, v: f64) -> Self {
        self.add(r, c, v);
        self
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.2 == 0.0)
    }

    /// `Tr(M S)` for symmetric `S`.
    pub fn trace_with(&self, s: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| if r == c { v * s[(r, c)] } else { v * (s[(r, c)] + s[(c, r)]) })
            .sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|&(r, c, v)| if r == c { v * v } else { 2.0 * v * v }).sum()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * k)).collect() }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        m
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut out = Self::new(m.nrows());
        for r in 0..m.nrows() {
            for c in r..m.ncols() {
                let v = if r == c { m[(r, c)] } else { 0.5 * (m[(r, c)] + m[(c, r)]) };
                out.add(r, c, v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub matrix: SymMatrix,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inequality {
    pub matrix: SymMatrix,
    /// Coefficient of the scalar variable.
    pub scalar_coeff: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub dim: usize,
    pub objective: SymMatrix,
    pub scalar_weight: f64,
    /// Optional upper bound on the scalar; it is always nonnegative.
    pub scalar_upper: Option<f64>,
    pub equalities: Vec<Equality>,
    pub inequalities: Vec<Inequality>,
}

impl ConicProgram {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            objective: SymMatrix::new(dim),
            scalar_weight: 0.0,
            scalar_upper: None,
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    pub fn objective_value(&self, s: &DMatrix<f64>, scalar: f64) -> f64 {
        self.objective.trace_with(s) + self.scalar_weight * scalar
    }

    /// Largest constraint violation, each row divided by its coefficient norm.
    pub fn primal_residual(&self, s: &DMatrix<f64>, scalar: f64) -> f64 {
        let mut worst = 0.0_f64;
        for e in &self.equalities {
            let norm = math::sqrt(e.matrix.frobenius_sq()).max(1e-300);
            worst = worst.max((e.matrix.trace_with(s) - e.rhs).abs() / norm);
        }
        for q in &self.inequalities {
            let norm = math::sqrt(q.matrix.frobenius_sq() + q.scalar_coeff * q.scalar_coeff).max(1e-300);
            worst = worst.max((q.matrix.trace_with(s) + q.scalar_coeff * scalar - q.rhs).max(0.0) / norm);
        }
        worst = worst.max(-scalar);
        if let Some(up) = self.scalar_upper {
            worst = worst.max(scalar - up);
        }
        worst
    }

    /// Writes the program as plain text: a header, then every matrix as
    /// `dim` rows of `dim` space-separated decimals.
    ///
    /// ```text
    /// conic-program 1
    /// dim D
    /// scalar_weight w
    /// scalar_upper u|none
    /// objective
    /// <D rows>
    /// equalities K
    /// eq <i> rhs <c>
    /// <D rows>
    /// inequalities J
    /// ineq <j> rhs <d> scalar <t>
    /// <D rows>
    /// ```
    pub fn write_text<W: Write>(&self, out: &mut W) -> fmt::Result {
        writeln!(out, "conic-program 1")?;
        writeln!(out, "dim {}", self.dim)?;
        writeln!(out, "scalar_weight {}", self.scalar_weight)?;
        match self.scalar_upper {
            Some(u) => writeln!(out, "scalar_upper {u}")?,
            None => writeln!(out, "scalar_upper none")?,
        }
        writeln!(out, "objective")?;
        write_dense(out, &self.objective.to_dense())?;
        writeln!(out, "equalities {}", self.equalities.len())?;
        for (i, e) in self.equalities.iter().enumerate() {
            writeln!(out, "eq {i} rhs {}", e.rhs)?;
            write_dense(out, &e.matrix.to_dense())?;
        }
        writeln!(out, "inequalities {}", self.inequalities.len())?;
        for (j, q) in self.inequalities.iter().enumerate() {
            writeln!(out, "ineq {j} rhs {} scalar {}", q.rhs, q.scalar_coeff)?;
            write_dense(out, &q.matrix.to_dense())?;
        }
        Ok(())
    }
}

fn write_dense<W: Write>(out: &mut W, m: &DMatrix<f64>) -> fmt::Result {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.write_char(' ')?;
            }
            write!(out, "{}", m[(r, c)])?;
        }
        out.write_char('\n')?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SdpMethod {
    #[default]
    InteriorPoint,
    Splitting,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpSettings {
    pub method: SdpMethod,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self { method: SdpMethod::default(), tol: 1e-6, max_iter: 50_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub s: DMatrix<f64>,
    pub scalar: f64,
    pub objective: f64,
    /// Dual objective; a lower bound on the optimum up to `dual_residual`.
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `max(0, -eigmin(S))`.
    pub psd_violation: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

impl SdpSolution {
    pub fn converged(&self) -> bool {
        self.status == SdpStatus::Converged
    }
}

/// Frobenius projection onto the PSD cone.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::project_psd(m)
}

pub fn solve(prog: &ConicProgram, settings: &SdpSettings) -> Result<SdpSolution> {
    validate(prog)?;
    let sf = StandardForm::build(prog)?;
    let raw = match settings.method {
        SdpMethod::InteriorPoint => ipm::solve(&sf, settings.tol, settings.max_iter.min(ipm::MAX_ITER))?,
        SdpMethod::Splitting => splitting::solve(&sf, settings.tol, settings.max_iter)?,
    };
    let s = linalg::symmetrized(&raw.x);
    let scalar = if sf.has_scalar { raw.w[0] } else { 0.0 };
    let psd_violation = (-linalg::min_eigenvalue(&s)).max(0.0);
    Ok(SdpSolution {
        objective: prog.objective_value(&s, scalar),
        dual_objective: raw.dual_objective * sf.obj_scale,
        primal_residual: prog.primal_residual(&s, scalar),
        dual_residual: raw.dual_residual,
        psd_violation,
        iterations: raw.iterations,
        status: raw.status,
        s,
        scalar,
    })
}

fn validate(prog: &ConicProgram) -> Result<()> {
    let dim_ok = |m: &SymMatrix| m.dim() == prog.dim;
    if !dim_ok(&prog.objective)
        || !prog.equalities.iter().all(|e| dim_ok(&e.matrix))
        || !prog.inequalities.iter().all(|q| dim_ok(&q.matrix))
    {
        return Err(Error::InvalidInput("constraint matrix dimension mismatch".into()));
    }
    let finite = |m: &SymMatrix| m.entries().iter().all(|e| e.2.is_finite());
    if !finite(&prog.objective)
        || !prog.scalar_weight.is_finite()
        || !prog.equalities.iter().all(|e| finite(&e.matrix) && e.rhs.is_finite())
        || !prog.inequalities.iter().all(|q| finite(&q.matrix) && q.rhs.is_finite() && q.scalar_coeff.is_finite())
    {
        return Err(Error::InvalidInput("program data must be finite".into()));
    }
    if prog.dim == 0 {
        return Err(Error::InvalidInput("empty PSD block".into()));
    }
    if let Some(up) = prog.scalar_upper {
        if !(up >= 0.0) {
            return Err(Error::Infeasible(alloc::format!("scalar upper bound {up} is negative")));
        }
    }
    Ok(())
}

/// One row of `A(X) + a w = b` in the standard form.
pub(crate) struct StdRow {
    pub sdp: SymMatrix,
    pub lp: Vec<(usize, f64)>,
    pub b: f64,
}

/// `min <C, X> + c'w  s.t.  A(X) + a w = b,  X PSD, w >= 0`, rows normalized.
pub(crate) struct StandardForm {
    pub dim: usize,
    pub n_lp: usize,
    pub c_sdp: SymMatrix,
    pub c_lp: Vec<f64>,
    pub rows: Vec<StdRow>,
    pub obj_scale: f64,
    pub has_scalar: bool,
}

impl StandardForm {
    fn build(prog: &ConicProgram) -> Result<Self> {
        let uses_scalar = prog.scalar_weight != 0.0 || prog.inequalities.iter().any(|q| q.scalar_coeff != 0.0);
        let n_ineq = prog.inequalities.len();
        let has_upper = uses_scalar && prog.scalar_upper.is_some();
        let offset = usize::from(uses_scalar);
        let n_lp = offset + n_ineq + usize::from(has_upper);
        let mut rows = Vec::with_capacity(prog.equalities.len() + n_ineq + 1);
        for e in &prog.equalities {
            rows.push(StdRow { sdp: e.matrix.clone(), lp: Vec::new(), b: e.rhs });
        }
        for (j, q) in prog.inequalities.iter().enumerate() {
            let mut lp = vec![(offset + j, 1.0)];
            if uses_scalar && q.scalar_coeff != 0.0 {
                lp.push((0, q.scalar_coeff));
            }
            rows.push(StdRow { sdp: q.matrix.clone(), lp, b: q.rhs });
        }
        if has_upper {
            rows.push(StdRow {
                sdp: SymMatrix::new(prog.dim),
                lp: vec![(0, 1.0), (n_lp - 1, 1.0)],
                b: prog.scalar_upper.unwrap_or_default(),
            });
        }
        let mut kept = Vec::with_capacity(rows.len());
        for row in rows {
            let norm = math::sqrt(row.sdp.frobenius_sq() + row.lp.iter().map(|e| e.1 * e.1).sum::<f64>());
            if norm == 0.0 {
                if row.b != 0.0 {
                    return Err(Error::Infeasible(alloc::format!("empty constraint with right-hand side {}", row.b)));
                }
                continue;
            }
            let k = 1.0 / norm;
            kept.push(StdRow { sdp: row.sdp.scaled(k), lp: row.lp.iter().map(|&(i, v)| (i, v * k)).collect(), b: row.b * k });
        }
        let mut c_lp = vec![0.0; n_lp];
        if uses_scalar {
            c_lp[0] = prog.scalar_weight;
        }
        let obj_norm = math::sqrt(prog.objective.frobenius_sq() + prog.scalar_weight * prog.scalar_weight);
        let obj_scale = if obj_norm > 0.0 { obj_norm } else { 1.0 };
        Ok(Self {
            dim: prog.dim,
            n_lp,
            c_sdp: prog.objective.scaled(1.0 / obj_scale),
            c_lp: c_lp.iter().map(|v| v / obj_scale).collect(),
            rows: kept,
            obj_scale,
            has_scalar: uses_scalar,
        })
    }
}

/// Result of a backend in the normalized problem.
pub(crate) struct RawSolution {
    pub x: DMatrix<f64>,
    pub w: Vec<f64>,
    pub dual_objective: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

pub(crate) fn infeasible(msg: &str, residual: f64) -> Error {
    let mut s = String::from(msg);
    let _ = write!(s, " (primal residual {residual:e})");
    Error::Infeasible(s)
}
