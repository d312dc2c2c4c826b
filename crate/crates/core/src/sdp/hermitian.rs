//! Builder for programs over complex Hermitian variables.
//!
//! Each positive semidefinite Hermitian variable of dimension `d` becomes one
//! real `2d × 2d` block; a free Hermitian variable becomes `d²` free scalars
//! (diagonal entries, then real and imaginary parts above the diagonal). A
//! matrix equality of dimension `d` becomes `d²` real rows: the real part of
//! every entry on or above the diagonal and the imaginary part of every
//! entry above it.

use nalgebra::DMatrix;

use super::{embed_hermitian, extract_hermitian, ConicProgram, ConicSolver, InteriorPointSolver, Row, SolveStatus};
use crate::linalg::{c64, CMatrix, Hermitian};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Psd(usize),
    /// `V Y V†` with `Y ⪰ 0` of size `r`; the index points into `bases`.
    PsdOn { dim: usize, basis: usize },
    FreeHermitian(usize),
    Scalar,
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Block(usize),
    Free(usize),
}

#[derive(Clone, Debug)]
struct MatrixEq {
    dim: usize,
    terms: Vec<(Var, f64)>,
    rhs: Hermitian,
    first_row: usize,
    frame: Option<CMatrix>,
}

/// `Σ c_k H_k + Σ c_f t_f·1 = rhs` or `Σ c_k Tr H_k + Σ c_f t_f = rhs`,
/// depending on whether it was added with
/// [`HermitianProgram::add_matrix_eq`] or [`HermitianProgram::add_scalar_eq`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Constraint(usize);

#[derive(Clone, Debug)]
pub struct HermitianProgram {
    sense: Sense,
    kinds: Vec<Kind>,
    slots: Vec<Slot>,
    conic: ConicProgram,
    matrix_eqs: Vec<MatrixEq>,
    scalar_eqs: Vec<usize>,
    bases: Vec<CMatrix>,
}

/// Result of solving a [`HermitianProgram`].
///
/// Dual multipliers follow the sense of the program: for a maximization,
/// `Σ_eq c_k Y_eq − W_k ⪰ 0` for every positive variable `H_k` with objective
/// `Tr(W_k H_k)`, and the dual objective is `Σ_eq Tr(Y_eq rhs_eq)`; for a
/// minimization the inequality is reversed.
#[derive(Clone, Debug)]
pub struct HermitianSolution {
    pub status: SolveStatus,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    values: Vec<Value>,
    matrix_duals: Vec<Hermitian>,
    scalar_duals: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Value {
    Matrix(Hermitian),
    Scalar(f64),
}

impl HermitianSolution {
    pub fn matrix(&self, v: Var) -> &Hermitian {
        match &self.values[v.0] {
            Value::Matrix(h) => h,
            Value::Scalar(_) => panic!("variable is a scalar"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        match self.values[v.0] {
            Value::Scalar(s) => s,
            Value::Matrix(_) => panic!("variable is a matrix"),
        }
    }

    pub fn matrix_dual(&self, c: Constraint) -> &Hermitian {
        &self.matrix_duals[c.0]
    }

    pub fn scalar_dual(&self, c: Constraint) -> f64 {
        self.scalar_duals[c.0]
    }

    pub fn require_optimal(self, context: &str) -> Result<Self> {
        if self.status == SolveStatus::Optimal {
            Ok(self)
        } else {
            Err(Error::Solver { status: self.status, context: context.to_string() })
        }
    }
}

impl HermitianProgram {
    pub fn new(sense: Sense) -> Self {
        HermitianProgram {
            sense,
            kinds: Vec::new(),
            slots: Vec::new(),
            conic: ConicProgram::default(),
            matrix_eqs: Vec::new(),
            scalar_eqs: Vec::new(),
            bases: Vec::new(),
        }
    }

    fn objective_sign(&self) -> f64 {
        match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }

    pub fn psd(&mut self, dim: usize) -> Var {
        let block = self.conic.add_block(2 * dim, true);
        self.push(Kind::Psd(dim), Slot::Block(block))
    }

    /// A positive semidefinite variable supported on the column span of
    /// `basis`, which must have orthonormal columns.
    pub fn psd_on(&mut self, basis: &CMatrix) -> Var {
        let block = self.conic.add_block(2 * basis.ncols(), true);
        self.bases.push(basis.clone());
        self.push(Kind::PsdOn { dim: basis.nrows(), basis: self.bases.len() - 1 }, Slot::Block(block))
    }

    /// Adds `c · Tr(K Y)` for the compressed variable `Y` of block `b`.
    fn add_functional(row: &mut Row, b: usize, k: &Hermitian, c: f64) {
        let a = embed_hermitian(k) * (0.5 * c);
        for col in 0..a.ncols() {
            for r in 0..=col {
                if a[(r, col)] != 0.0 {
                    row.add_entry(b, r, col, a[(r, col)]);
                }
            }
        }
    }

    pub fn free_hermitian(&mut self, dim: usize) -> Var {
        let first = self.conic.free_count();
        for _ in 0..dim * dim {
            self.conic.add_free(0.0);
        }
        self.push(Kind::FreeHermitian(dim), Slot::Free(first))
    }

    pub fn free_scalar(&mut self) -> Var {
        let k = self.conic.add_free(0.0);
        self.push(Kind::Scalar, Slot::Free(k))
    }

    pub fn nonneg_scalar(&mut self) -> Var {
        let block = self.conic.add_block(1, false);
        self.push(Kind::Scalar, Slot::Block(block))
    }

    fn push(&mut self, kind: Kind, slot: Slot) -> Var {
        self.kinds.push(kind);
        self.slots.push(slot);
        Var(self.kinds.len() - 1)
    }

    fn dim_of(&self, v: Var) -> Option<usize> {
        match self.kinds[v.0] {
            Kind::Psd(d) | Kind::FreeHermitian(d) | Kind::PsdOn { dim: d, .. } => Some(d),
            Kind::Scalar => None,
        }
    }

    /// Adds `coef · Tr(w · v)` to the objective.
    pub fn objective_trace(&mut self, v: Var, w: &Hermitian, coef: f64) {
        let d = self.dim_of(v).expect("trace term needs a matrix variable");
        assert_eq!(d, w.dim(), "objective weight dimension");
        let s = self.objective_sign() * coef;
        if let Kind::PsdOn { basis, .. } = self.kinds[v.0] {
            let Slot::Block(b) = self.slots[v.0] else { unreachable!() };
            let compressed = w.congruence(&self.bases[basis].adjoint());
            self.conic.blocks[b].cost += embed_hermitian(&compressed) * (0.5 * s);
            return;
        }
        match self.slots[v.0] {
            Slot::Block(b) => {
                let e = embed_hermitian(w) * (0.5 * s);
                self.conic.blocks[b].cost += e;
            }
            Slot::Free(first) => {
                let m = w.matrix();
                for p in 0..d {
                    self.conic.free_cost[first + p] += s * m[(p, p)].re;
                }
                for (k, (p, q)) in upper_pairs(d).enumerate() {
                    self.conic.free_cost[first + d + 2 * k] += 2.0 * s * m[(p, q)].re;
                    self.conic.free_cost[first + d + 2 * k + 1] += 2.0 * s * m[(p, q)].im;
                }
            }
        }
    }

    /// Adds `coef · v` to the objective for a scalar variable.
    pub fn objective_scalar(&mut self, v: Var, coef: f64) {
        let s = self.objective_sign() * coef;
        match (self.kinds[v.0], self.slots[v.0]) {
            (Kind::Scalar, Slot::Free(k)) => self.conic.free_cost[k] += s,
            (Kind::Scalar, Slot::Block(b)) => self.conic.blocks[b].cost[(0, 0)] += s,
            _ => panic!("scalar objective term needs a scalar variable"),
        }
    }

    /// `Σ coef_k · v_k = rhs`, where scalar variables stand for `v · 1`.
    pub fn add_matrix_eq(&mut self, terms: &[(Var, f64)], rhs: &Hermitian) -> Constraint {
        self.add_framed_eq(terms, None, rhs)
    }

    /// `Σ coef_k · A† v_k A = rhs` for a frame `A` with orthonormal columns,
    /// where scalar variables stand for `v · 1`.
    pub fn add_compressed_eq(&mut self, terms: &[(Var, f64)], frame: &CMatrix, rhs: &Hermitian) -> Constraint {
        assert_eq!(frame.ncols(), rhs.dim(), "frame width must match the right-hand side");
        self.add_framed_eq(terms, Some(frame.clone()), rhs)
    }

    fn add_framed_eq(&mut self, terms: &[(Var, f64)], frame: Option<CMatrix>, rhs: &Hermitian) -> Constraint {
        let d = rhs.dim();
        let full = frame.as_ref().map_or(d, |f| f.nrows());
        for &(v, _) in terms {
            if let Some(dv) = self.dim_of(v) {
                assert_eq!(dv, full, "matrix equality dimension");
            }
        }
        let first_row = self.conic.rows.len();
        let m = rhs.matrix();
        // real parts for p ≤ q, then imaginary parts for p < q
        let real = pairs_with_diag(d).map(|(p, q)| (p, q, false));
        let imag = upper_pairs(d).map(|(p, q)| (p, q, true));
        for (p, q, im) in real.chain(imag).collect::<Vec<_>>() {
            let target = if im { m[(p, q)].im } else { m[(p, q)].re };
            let functional = entry_functional(frame.as_ref(), full, p, q, im);
            let mut row = Row { rhs: target, ..Row::default() };
            for &(v, c) in terms {
                self.add_term(&mut row, v, c, &functional);
            }
            self.conic.rows.push(row);
        }
        self.matrix_eqs.push(MatrixEq { dim: d, terms: terms.to_vec(), rhs: rhs.clone(), first_row, frame });
        Constraint(self.matrix_eqs.len() - 1)
    }

    /// Adds `c · Tr(K v)` to a row.
    fn add_term(&self, row: &mut Row, v: Var, c: f64, k: &Hermitian) {
        match (self.kinds[v.0], self.slots[v.0]) {
            (Kind::Psd(_), Slot::Block(b)) => Self::add_functional(row, b, k, c),
            (Kind::PsdOn { basis, .. }, Slot::Block(b)) => {
                Self::add_functional(row, b, &k.congruence(&self.bases[basis].adjoint()), c)
            }
            (Kind::FreeHermitian(d), Slot::Free(first)) => {
                let m = k.matrix();
                for p in 0..d {
                    if m[(p, p)].re != 0.0 {
                        row.free.push((first + p, c * m[(p, p)].re));
                    }
                }
                for (n, (p, q)) in upper_pairs(d).enumerate() {
                    if m[(p, q)].re != 0.0 {
                        row.free.push((first + d + 2 * n, 2.0 * c * m[(p, q)].re));
                    }
                    if m[(p, q)].im != 0.0 {
                        row.free.push((first + d + 2 * n + 1, 2.0 * c * m[(p, q)].im));
                    }
                }
            }
            (Kind::Scalar, slot) => {
                let t = k.trace();
                if t != 0.0 {
                    match slot {
                        Slot::Free(j) => row.free.push((j, c * t)),
                        Slot::Block(b) => row.add_entry(b, 0, 0, c * t),
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    /// `Σ coef_k · Tr v_k = rhs`, where scalar variables enter as themselves.
    pub fn add_scalar_eq(&mut self, terms: &[(Var, f64)], rhs: f64) -> Constraint {
        let mut row = Row { rhs, ..Row::default() };
        for &(v, c) in terms {
            match (self.kinds[v.0], self.slots[v.0]) {
                (Kind::PsdOn { basis, .. }, Slot::Block(b)) => {
                    for p in 0..2 * self.bases[basis].ncols() {
                        row.add_entry(b, p, p, 0.5 * c);
                    }
                }
                (Kind::Psd(d), Slot::Block(b)) => {
                    for p in 0..2 * d {
                        row.add_entry(b, p, p, 0.5 * c);
                    }
                }
                (Kind::FreeHermitian(d), Slot::Free(first)) => {
                    for p in 0..d {
                        row.free.push((first + p, c));
                    }
                }
                (Kind::Scalar, Slot::Free(k)) => row.free.push((k, c)),
                (Kind::Scalar, Slot::Block(b)) => row.add_entry(b, 0, 0, c),
                _ => unreachable!(),
            }
        }
        self.scalar_eqs.push(self.conic.rows.len());
        self.conic.rows.push(row);
        Constraint(self.scalar_eqs.len() - 1)
    }

    pub fn conic(&self) -> &ConicProgram {
        &self.conic
    }

    pub fn solve(&self) -> Result<HermitianSolution> {
        self.solve_with(&InteriorPointSolver::default())
    }

    pub fn solve_with(&self, solver: &dyn ConicSolver) -> Result<HermitianSolution> {
        let sol = solver.solve(&self.conic);
        let sign = self.objective_sign();
        let mut values = Vec::with_capacity(self.kinds.len());
        for (kind, slot) in self.kinds.iter().zip(&self.slots) {
            let value = match (*kind, *slot) {
                (Kind::Psd(_), Slot::Block(b)) => Value::Matrix(extract_hermitian(&sol.blocks[b])?),
                (Kind::PsdOn { basis, .. }, Slot::Block(b)) => {
                    Value::Matrix(extract_hermitian(&sol.blocks[b])?.congruence(&self.bases[basis]))
                }
                (Kind::FreeHermitian(d), Slot::Free(first)) => {
                    let f = &sol.free[first..first + d * d];
                    let mut m = CMatrix::zeros(d, d);
                    for p in 0..d {
                        m[(p, p)] = c64(f[p], 0.0);
                    }
                    for (k, (p, q)) in upper_pairs(d).enumerate() {
                        m[(p, q)] = c64(f[d + 2 * k], f[d + 2 * k + 1]);
                        m[(q, p)] = m[(p, q)].conj();
                    }
                    Value::Matrix(Hermitian::hermitize(m))
                }
                (Kind::Scalar, Slot::Free(k)) => Value::Scalar(sol.free[k]),
                (Kind::Scalar, Slot::Block(b)) => Value::Scalar(sol.blocks[b][(0, 0)]),
                _ => unreachable!(),
            };
            values.push(value);
        }
        let matrix_duals = self
            .matrix_eqs
            .iter()
            .map(|eq| {
                let d = eq.dim;
                let y = |k: usize| sign * sol.duals[eq.first_row + k];
                let diag_rows: Vec<(usize, usize)> = pairs_with_diag(d).collect();
                let n_real = diag_rows.len();
                let mut m = CMatrix::zeros(d, d);
                for (k, &(p, q)) in diag_rows.iter().enumerate() {
                    if p == q {
                        m[(p, p)] = c64(y(k), 0.0);
                    } else {
                        m[(p, q)].re = 0.5 * y(k);
                    }
                }
                for (k, (p, q)) in upper_pairs(d).enumerate() {
                    m[(p, q)].im = 0.5 * y(n_real + k);
                    m[(q, p)] = m[(p, q)].conj();
                }
                Hermitian::hermitize(m)
            })
            .collect();
        let scalar_duals = self.scalar_eqs.iter().map(|&r| sign * sol.duals[r]).collect();
        Ok(HermitianSolution {
            status: sol.status,
            primal_objective: sign * sol.primal_objective,
            dual_objective: sign * sol.dual_objective,
            iterations: sol.iterations,
            values,
            matrix_duals,
            scalar_duals,
        })
    }

    /// Residual `‖Σ c_k H_k − rhs‖_max` of a matrix equality at a solution.
    pub fn matrix_eq_residual(&self, c: Constraint, sol: &HermitianSolution) -> f64 {
        let eq = &self.matrix_eqs[c.0];
        let mut acc = eq.rhs.matrix() * c64(-1.0, 0.0);
        for &(v, coef) in &eq.terms {
            match &sol.values[v.0] {
                Value::Matrix(h) => {
                    let h = match &eq.frame {
                        Some(a) => h.congruence(&a.adjoint()),
                        None => h.clone(),
                    };
                    acc += h.matrix() * c64(coef, 0.0)
                }
                Value::Scalar(s) => acc += CMatrix::identity(eq.dim, eq.dim) * c64(coef * s, 0.0),
            }
        }
        acc.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// The Hermitian `K` with `Tr(K X) = Re (A† X A)_pq` (or `Im` when `imag`),
/// where `A` is the frame or the identity.
fn entry_functional(frame: Option<&CMatrix>, full: usize, p: usize, q: usize, imag: bool) -> Hermitian {
    let column = |i: usize| match frame {
        Some(a) => a.column(i).into_owned(),
        None => {
            let mut e = crate::linalg::CVector::zeros(full);
            e[i] = c64(1.0, 0.0);
            e
        }
    };
    // (A† X A)_pq = Tr(X B) with B = a_q a_p†
    let b = column(q) * column(p).adjoint();
    let k = if imag { (&b - b.adjoint()) * c64(0.0, -0.5) } else { (&b + b.adjoint()) * c64(0.5, 0.0) };
    Hermitian::hermitize(k)
}

fn pairs_with_diag(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |p| (p..d).map(move |q| (p, q)))
}

fn upper_pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |p| ((p + 1)..d).map(move |q| (p, q)))
}

/// Real embedding of a weight, for callers assembling raw costs.
pub fn embedded_cost(w: &Hermitian) -> DMatrix<f64> {
    embed_hermitian(w) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::pauli;

    fn y_op() -> Hermitian {
        Hermitian::new(pauli(2)).unwrap()
    }

    #[test]
    fn largest_eigenvalue_of_complex_matrix() {
        // max Tr(W ρ) over density matrices = λ_max(W), with W = 1 + σ_Y
        let w = &Hermitian::identity(2) + &y_op();
        let mut prog = HermitianProgram::new(Sense::Maximize);
        let rho = prog.psd(2);
        prog.objective_trace(rho, &w, 1.0);
        let c = prog.add_scalar_eq(&[(rho, 1.0)], 1.0);
        let sol = prog.solve().unwrap().require_optimal("test").unwrap();
        assert!((sol.primal_objective - 2.0).abs() < 1e-7);
        assert!((sol.dual_objective - 2.0).abs() < 1e-7);
        assert!((sol.scalar_dual(c) - 2.0).abs() < 1e-7);
        let r = sol.matrix(rho);
        assert!((r.inner(&y_op()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn smallest_scalar_above_complex_operator() {
        // min t s.t. t·1 − P = W, W ⪰ 0 → λ_max(P)
        let p_op = Hermitian::new(pauli(2) * c64(0.5, 0.0) + pauli(1) * c64(0.25, 0.0)).unwrap();
        let mut prog = HermitianProgram::new(Sense::Minimize);
        let t = prog.free_scalar();
        let w = prog.psd(2);
        prog.objective_scalar(t, 1.0);
        let c = prog.add_matrix_eq(&[(t, 1.0), (w, -1.0)], &p_op);
        let sol = prog.solve().unwrap().require_optimal("test").unwrap();
        let expected = p_op.max_eigenvalue();
        assert!((sol.primal_objective - expected).abs() < 1e-8);
        // dual: max Tr(Y P) s.t. Tr Y = 1, Y ⪰ 0
        let y = sol.matrix_dual(c);
        assert!((y.trace() - 1.0).abs() < 1e-7);
        assert!(y.min_eigenvalue() > -1e-7);
        assert!((y.inner(&p_op) - expected).abs() < 1e-7);
        assert!(prog.matrix_eq_residual(c, &sol) < 1e-7);
    }

    #[test]
    fn free_hermitian_variables() {
        // min Tr(ρ X) s.t. X − S = P, S ⪰ 0 with ρ > 0 is attained at X = P
        let p_op = Hermitian::new(pauli(2) * c64(0.3, 0.0)).unwrap();
        let rho = Hermitian::diag(&[0.4, 0.6]);
        let mut prog = HermitianProgram::new(Sense::Minimize);
        let x = prog.free_hermitian(2);
        let s = prog.psd(2);
        prog.objective_trace(x, &rho, 1.0);
        prog.add_matrix_eq(&[(x, 1.0), (s, -1.0)], &p_op);
        let sol = prog.solve().unwrap().require_optimal("test").unwrap();
        assert!((sol.matrix(x) - &p_op).max_abs_entry() < 1e-6);
        assert!((sol.primal_objective - rho.inner(&p_op)).abs() < 1e-8);
    }
}
