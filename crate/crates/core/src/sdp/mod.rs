//! Semidefinite programming backend.
//!
//! Programs are stated over real symmetric cones in [`ConicProgram`] and
//! solved by the primal–dual interior-point method in [`InteriorPointSolver`].
//! Complex Hermitian programs are built with [`hermitian::HermitianProgram`],
//! which lowers each Hermitian variable through [`embed_hermitian`].

pub mod hermitian;
mod ipm;

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;

use crate::linalg::{c64, CMatrix, Hermitian};
use crate::{Error, Result};

pub use ipm::InteriorPointSolver;

/// Default stopping tolerance for relative gap and infeasibilities.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-8;

static SOLVER_TOL_BITS: AtomicU64 = AtomicU64::new(0);

/// Process-wide stopping tolerance used by [`InteriorPointSolver::default`].
pub fn default_tolerance() -> f64 {
    let bits = SOLVER_TOL_BITS.load(Ordering::Relaxed);
    if bits == 0 {
        DEFAULT_SOLVER_TOL
    } else {
        f64::from_bits(bits)
    }
}

pub fn set_default_tolerance(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol < 1e-2) {
        return Err(Error::InvalidArgument(format!("solver tolerance must lie in (0, 1e-2), got {tol}")));
    }
    SOLVER_TOL_BITS.store(tol.to_bits(), Ordering::Relaxed);
    Ok(())
}

static SOLVES: AtomicU64 = AtomicU64::new(0);
static OPTIMAL_SOLVES: AtomicU64 = AtomicU64::new(0);
static MAX_GAP_BITS: AtomicU64 = AtomicU64::new(0);
static MAX_RESIDUAL_BITS: AtomicU64 = AtomicU64::new(0);

/// Process-wide counters over every solve with the interior-point backend.
/// The maxima are taken over solves that were accepted as optimal.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub solves: u64,
    pub optimal: u64,
    pub max_gap: f64,
    pub max_residual: f64,
}

pub fn solve_stats() -> SolveStats {
    SolveStats {
        solves: SOLVES.load(Ordering::Relaxed),
        optimal: OPTIMAL_SOLVES.load(Ordering::Relaxed),
        max_gap: f64::from_bits(MAX_GAP_BITS.load(Ordering::Relaxed)),
        max_residual: f64::from_bits(MAX_RESIDUAL_BITS.load(Ordering::Relaxed)),
    }
}

fn fetch_max(cell: &AtomicU64, value: f64) {
    // non-negative floats order like their bit patterns
    cell.fetch_max(value.max(0.0).to_bits(), Ordering::Relaxed);
}

pub(crate) fn record(sol: &Solution) {
    SOLVES.fetch_add(1, Ordering::Relaxed);
    if sol.is_optimal() {
        OPTIMAL_SOLVES.fetch_add(1, Ordering::Relaxed);
        fetch_max(&MAX_GAP_BITS, sol.gap());
        fetch_max(&MAX_RESIDUAL_BITS, sol.primal_residual);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// A symmetric positive semidefinite variable block.
#[derive(Clone, Debug)]
pub struct PsdBlock {
    pub size: usize,
    pub cost: DMatrix<f64>,
    /// Block is the real image of a complex Hermitian matrix; iterates are
    /// kept in that form.
    pub complex: bool,
}

/// One linear equality `Σ free_k x_k + Σ <A_j, X_j> = rhs`.
///
/// Block entries `(j, r, c, v)` with `r ≤ c` set `A_j[r, c] = A_j[c, r] = v`.
#[derive(Clone, Debug, Default)]
pub struct Row {
    pub rhs: f64,
    pub free: Vec<(usize, f64)>,
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl Row {
    pub fn add_entry(&mut self, block: usize, r: usize, c: usize, v: f64) {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        self.entries.push((block, r, c, v));
    }
}

/// `min free_cost·x + Σ <C_j, X_j>` subject to the rows, `X_j ⪰ 0`, `x` free.
///
/// The dual is `max rhs·y` subject to `Σ_i y_i free_i = free_cost` and
/// `C_j − Σ_i y_i A_ij ⪰ 0`.
#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    pub free_cost: Vec<f64>,
    pub blocks: Vec<PsdBlock>,
    pub rows: Vec<Row>,
}

impl ConicProgram {
    pub fn add_free(&mut self, cost: f64) -> usize {
        self.free_cost.push(cost);
        self.free_cost.len() - 1
    }

    pub fn add_block(&mut self, size: usize, complex: bool) -> usize {
        self.blocks.push(PsdBlock { size, cost: DMatrix::zeros(size, size), complex });
        self.blocks.len() - 1
    }

    pub fn free_count(&self) -> usize {
        self.free_cost.len()
    }

    /// `Σ free + Σ <A_j, X_j>` for row `i`.
    pub fn row_value(&self, i: usize, free: &[f64], blocks: &[DMatrix<f64>]) -> f64 {
        let row = &self.rows[i];
        let mut acc: f64 = row.free.iter().map(|&(k, v)| v * free[k]).sum();
        for &(j, r, c, v) in &row.entries {
            let x = &blocks[j];
            acc += if r == c { v * x[(r, r)] } else { v * (x[(r, c)] + x[(c, r)]) };
        }
        acc
    }
}

/// Primal and dual iterates returned by a solver. `duals` has one entry per
/// original row, `slacks` one matrix per block.
#[derive(Clone, Debug)]
pub struct Solution {
    pub status: SolveStatus,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub free: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    pub duals: Vec<f64>,
    pub slacks: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// `|primal − dual| / max(1, |primal|)`.
    pub fn gap(&self) -> f64 {
        (self.primal_objective - self.dual_objective).abs() / self.primal_objective.abs().max(1.0)
    }

    /// `Err` with `context` unless the status is optimal.
    pub fn require_optimal(self, context: &str) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::Solver { status: self.status, context: context.to_string() })
        }
    }
}

pub trait ConicSolver {
    fn solve(&self, program: &ConicProgram) -> Solution;
}

/// Solves with the default interior-point configuration.
pub fn solve(program: &ConicProgram) -> Solution {
    InteriorPointSolver::default().solve(program)
}

/// `[[Re H, −Im H], [Im H, Re H]]`.
pub fn embed_hermitian(h: &Hermitian) -> DMatrix<f64> {
    embed_complex(h.matrix())
}

pub(crate) fn embed_complex(m: &CMatrix) -> DMatrix<f64> {
    let d = m.nrows();
    DMatrix::from_fn(2 * d, 2 * d, |r, c| {
        let z = m[(r % d, c % d)];
        match (r < d, c < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Inverse of [`embed_hermitian`]; the redundant blocks are averaged and must
/// agree within `1e-8` relative to the largest entry.
pub fn extract_hermitian(s: &DMatrix<f64>) -> Result<Hermitian> {
    if s.nrows() != s.ncols() || !s.nrows().is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!(
            "embedded matrix must be square of even size, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let d = s.nrows() / 2;
    let scale = s.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let mut defect: f64 = 0.0;
    let m = CMatrix::from_fn(d, d, |p, q| {
        let re = (s[(p, q)] + s[(p + d, q + d)]) / 2.0;
        let im = (s[(p + d, q)] - s[(p, q + d)]) / 2.0;
        defect = defect
            .max((s[(p, q)] - s[(p + d, q + d)]).abs())
            .max((s[(p + d, q)] + s[(p, q + d)]).abs())
            .max((s[(p, q)] - s[(q, p)]).abs());
        c64(re, im)
    });
    if defect > 1e-8 * scale {
        return Err(Error::InvalidArgument(format!(
            "matrix is not the image of a Hermitian operator (defect {defect:.3e})"
        )));
    }
    Ok(Hermitian::hermitize(m))
}

/// Orthogonal projection onto images of complex matrices.
pub(crate) fn project_complex(s: &mut DMatrix<f64>) {
    let d = s.nrows() / 2;
    for p in 0..d {
        for q in 0..d {
            let re = (s[(p, q)] + s[(p + d, q + d)]) / 2.0;
            let im = (s[(p + d, q)] - s[(p, q + d)]) / 2.0;
            s[(p, q)] = re;
            s[(p + d, q + d)] = re;
            s[(p + d, q)] = im;
            s[(p, q + d)] = -im;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hermitian_strategy(d: usize) -> impl Strategy<Value = Hermitian> {
        prop::collection::vec(-5.0..5.0f64, 2 * d * d).prop_map(move |v| {
            let m = CMatrix::from_fn(d, d, |i, j| c64(v[i * d + j], v[d * d + i * d + j]));
            Hermitian::hermitize(m)
        })
    }

    proptest! {
        #[test]
        fn embedding_round_trip(h in (1usize..5).prop_flat_map(hermitian_strategy)) {
            let s = embed_hermitian(&h);
            prop_assert!((&s - s.transpose()).abs().max() < 1e-15);
            let back = extract_hermitian(&s).unwrap();
            prop_assert!((&back - &h).max_abs_entry() < 1e-14);
            prop_assert!((s.trace() - 2.0 * h.trace()).abs() < 1e-12);
        }

        #[test]
        fn embedding_preserves_spectrum_with_doubling(h in (1usize..4).prop_flat_map(hermitian_strategy)) {
            let ev = h.eigenvalues();
            let s = embed_hermitian(&h);
            let mut real_ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
            real_ev.sort_by(f64::total_cmp);
            for (k, v) in ev.iter().enumerate() {
                prop_assert!((real_ev[2 * k] - v).abs() < 1e-10);
                prop_assert!((real_ev[2 * k + 1] - v).abs() < 1e-10);
            }
        }

        #[test]
        fn embedding_is_multiplicative(a in hermitian_strategy(3), b in hermitian_strategy(3)) {
            let prod = embed_complex(&(a.matrix() * b.matrix()));
            let lhs = embed_hermitian(&a) * embed_hermitian(&b);
            prop_assert!((prod - lhs).abs().max() < 1e-12);
            prop_assert!((a.inner(&b) - embed_hermitian(&a).dot(&embed_hermitian(&b)) / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn extract_rejects_unstructured() {
        let mut s = embed_hermitian(&Hermitian::identity(2));
        s[(0, 0)] = 3.0;
        assert!(extract_hermitian(&s).is_err());
        assert!(extract_hermitian(&DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn tolerance_setting_is_validated() {
        assert!(set_default_tolerance(0.0).is_err());
        assert!(set_default_tolerance(f64::NAN).is_err());
        assert!(default_tolerance() > 0.0);
    }
}
