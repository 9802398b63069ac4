//! Sparse conic program assembly and the interior-point backend.
//!
//! Programs are stated in the form
//!
//! ```text
//! minimize    ½ xᵀPx + qᵀx + c
//! subject to  b − Ax ∈ K
//! ```
//!
//! where `K` is a product of zero cones (equalities), nonnegative orthants and
//! second-order cones. Dual multipliers follow the convention
//! `Px + q + Aᵀz = 0`, so the multiplier of an inequality `aᵀx ≤ b` is
//! nonnegative and enters the Lagrangian as `z (aᵀx − b)`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use thiserror::Error;

pub type VarId = usize;
pub type RowId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("solver stalled: {0}")]
    Stall(String),
    #[error("malformed program: {0}")]
    Malformed(String),
}

/// Affine expression `Σ coef·x[var] + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn var(v: VarId) -> Self {
        Affine { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Affine { terms: Vec::new(), constant: c }
    }

    pub fn term(mut self, v: VarId, coef: f64) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeKind {
    Zero,
    Nonnegative,
    SecondOrder,
}

#[derive(Clone, Debug, PartialEq)]
struct ConeBlock {
    kind: ConeKind,
    dim: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProgram {
    num_vars: usize,
    q: Vec<f64>,
    constant: f64,
    /// Upper-triangular entries of P (duplicates are summed).
    p_entries: Vec<(usize, usize, f64)>,
    a_entries: Vec<(RowId, VarId, f64)>,
    b: Vec<f64>,
    cones: Vec<ConeBlock>,
}

/// Primal/dual point returned by [`solve_conic`].
#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    /// One multiplier per constraint row.
    pub z: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub reduced_accuracy: bool,
}

impl ConicSolution {
    pub fn value(&self, a: &Affine) -> f64 {
        a.eval(&self.x)
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn num_cones(&self, kind: ConeKind) -> usize {
        self.cones.iter().filter(|c| c.kind == kind).count()
    }

    pub fn add_var(&mut self) -> VarId {
        self.num_vars += 1;
        self.q.push(0.0);
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, n: usize) -> Vec<VarId> {
        (0..n).map(|_| self.add_var()).collect()
    }

    pub fn add_linear_cost(&mut self, v: VarId, c: f64) {
        self.q[v] += c;
    }

    pub fn add_constant_cost(&mut self, c: f64) {
        self.constant += c;
    }

    /// Adds `weight/2 · (expr)²` to the objective.
    pub fn add_square_cost(&mut self, expr: &Affine, weight: f64) {
        for (a, &(va, ca)) in expr.terms.iter().enumerate() {
            self.q[va] += weight * expr.constant * ca;
            self.p_entries.push((va, va, weight * ca * ca));
            for &(vb, cb) in &expr.terms[a + 1..] {
                let (i, j) = if va <= vb { (va, vb) } else { (vb, va) };
                // a repeated variable lands on the diagonal, where P holds the full coefficient
                let scale = if i == j { 2.0 } else { 1.0 };
                self.p_entries.push((i, j, scale * weight * ca * cb));
            }
        }
        self.constant += 0.5 * weight * expr.constant * expr.constant;
    }

    fn push_row(&mut self, expr: &Affine, sign: f64, rhs: f64) -> RowId {
        let row = self.b.len();
        for &(v, c) in &expr.terms {
            self.a_entries.push((row, v, sign * c));
        }
        self.b.push(rhs);
        row
    }

    fn push_cone(&mut self, kind: ConeKind, dim: usize) {
        match (kind, self.cones.last_mut()) {
            (ConeKind::Zero, Some(last)) | (ConeKind::Nonnegative, Some(last)) if last.kind == kind => {
                last.dim += dim;
            }
            _ => self.cones.push(ConeBlock { kind, dim }),
        }
    }

    /// `expr = 0`.
    pub fn add_eq(&mut self, expr: &Affine) -> RowId {
        let row = self.push_row(expr, 1.0, -expr.constant);
        self.push_cone(ConeKind::Zero, 1);
        row
    }

    /// `expr ≤ 0`; the multiplier is nonnegative.
    pub fn add_le(&mut self, expr: &Affine) -> RowId {
        let row = self.push_row(expr, 1.0, -expr.constant);
        self.push_cone(ConeKind::Nonnegative, 1);
        row
    }

    /// `‖(u₁, …, uₙ)‖₂ ≤ t`. Returns the row of `t`; the `uᵢ` rows follow it.
    pub fn add_soc(&mut self, t: &Affine, u: &[Affine]) -> RowId {
        let row = self.push_row(t, -1.0, t.constant);
        for ui in u {
            self.push_row(ui, -1.0, ui.constant);
        }
        self.push_cone(ConeKind::SecondOrder, 1 + u.len());
        row
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let mut f = self.constant;
        for (v, &c) in self.q.iter().enumerate() {
            f += c * x[v];
        }
        for &(i, j, p) in &self.p_entries {
            f += if i == j { 0.5 * p * x[i] * x[i] } else { p * x[i] * x[j] };
        }
        f
    }

    fn check(&self) -> Result<(), SolverError> {
        let rows: usize = self.cones.iter().map(|c| c.dim).sum();
        if rows != self.b.len() {
            return Err(SolverError::Malformed(format!("{} rows but cones cover {rows}", self.b.len())));
        }
        if self.a_entries.iter().any(|&(r, v, _)| r >= self.b.len() || v >= self.num_vars)
            || self.p_entries.iter().any(|&(i, j, _)| i > j || j >= self.num_vars)
        {
            return Err(SolverError::Malformed("entry outside program dimensions".into()));
        }
        let finite = self.q.iter().chain(&self.b).all(|v| v.is_finite())
            && self.a_entries.iter().all(|e| e.2.is_finite())
            && self.p_entries.iter().all(|e| e.2.is_finite());
        if !finite {
            return Err(SolverError::Malformed("non-finite coefficient".into()));
        }
        Ok(())
    }
}

/// Solves a conic program to the given tolerance on gap and feasibility.
pub fn solve_conic(program: &ConicProgram, tol: f64) -> Result<ConicSolution, SolverError> {
    program.check()?;
    let n = program.num_vars;
    let m = program.b.len();

    let (pi, pj, pv) = split(&program.p_entries);
    let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
    let (ai, aj, av) = split(&program.a_entries);
    let a = CscMatrix::new_from_triplets(m, n, ai, aj, av);
    let cones: Vec<SupportedConeT<f64>> = program
        .cones
        .iter()
        .map(|c| match c.kind {
            ConeKind::Zero => SupportedConeT::ZeroConeT(c.dim),
            ConeKind::Nonnegative => SupportedConeT::NonnegativeConeT(c.dim),
            ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(c.dim),
        })
        .collect();

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(400)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .tol_ktratio(tol.max(1e-10))
        .build()
        .map_err(|e| SolverError::Malformed(e.to_string()))?;
    let mut solver = DefaultSolver::new(&p, &program.q, &a, &program.b, &cones, settings)
        .map_err(|e| SolverError::Malformed(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let reduced_accuracy = match sol.status {
        SolverStatus::Solved => false,
        SolverStatus::AlmostSolved => true,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(SolverError::Infeasible)
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            return Err(SolverError::Unbounded)
        }
        other => return Err(SolverError::Stall(format!("{other:?}"))),
    };
    Ok(ConicSolution {
        objective: sol.obj_val + program.constant,
        x: sol.x.clone(),
        z: sol.z.clone(),
        iterations: sol.iterations,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
        reduced_accuracy,
    })
}

fn split(entries: &[(usize, usize, f64)]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut i = Vec::with_capacity(entries.len());
    let mut j = Vec::with_capacity(entries.len());
    let mut v = Vec::with_capacity(entries.len());
    for &(r, c, x) in entries {
        i.push(r);
        j.push(c);
        v.push(x);
    }
    (i, j, v)
}
