//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are `nalgebra` dense matrices over `Complex64`. The newtypes
//! below carry the invariants the rest of the crate relies on: [`Hermitian`]
//! is symmetrized on construction, [`DensityOperator`] is positive and
//! trace-one, [`PureBipartiteState`] is a unit vector with known factor
//! dimensions.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Entrywise Hermiticity tolerance, relative to `max(1, max |h_ij|)`.
pub const TOL_HERM: f64 = 1e-12;
/// Default tolerance for positive-semidefinite membership.
pub const TOL_PSD: f64 = 1e-8;
/// Schmidt coefficients at or below this value do not count towards the rank.
pub const TOL_SCHMIDT: f64 = 1e-10;
/// Relative width of the window treated as a degenerate minimal eigenspace.
const TOL_DEGENERATE: f64 = 1e-9;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// A dense complex Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Hermitian(CMatrix);

impl Hermitian {
    /// Accepts `m` if it is square, finite and Hermitian within [`TOL_HERM`];
    /// the stored matrix is `(m + m†)/2`.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let defect = hermiticity_defect(&m);
        if defect > TOL_HERM * max_abs(&m).max(1.0) {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self::hermitize(m))
    }

    /// Symmetrizes without checking. Used for results that are Hermitian in
    /// exact arithmetic.
    pub(crate) fn hermitize(m: CMatrix) -> Self {
        let adj = m.adjoint();
        Hermitian((m + adj) * C64::new(0.5, 0.0))
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        Hermitian(CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn identity(dim: usize) -> Self {
        Hermitian(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Hermitian(CMatrix::zeros(dim, dim))
    }

    /// Rank-one projector `|v⟩⟨v|` (not normalized).
    pub fn outer(v: &CVector) -> Self {
        Self::hermitize(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    /// `Tr(self · other)`, real for two Hermitian operators.
    pub fn inner(&self, other: &Hermitian) -> f64 {
        self.0
            .iter()
            .zip(other.0.transpose().iter())
            .map(|(a, b)| (a * b).re)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Complex conjugate, which equals the transpose for Hermitian operators.
    pub fn transpose(&self) -> Self {
        Hermitian(self.0.transpose())
    }

    /// `A · self · A†`.
    pub fn congruence(&self, a: &CMatrix) -> Self {
        Self::hermitize(a * &self.0 * a.adjoint())
    }

    /// Eigenvalues in ascending order with matching unit eigenvectors as columns.
    pub fn eigh(&self) -> (Vec<f64>, CMatrix) {
        let eig = SymmetricEigen::new(self.0.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigh().0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// Applies `f` to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        let (values, vectors) = self.eigh();
        let scaled = CMatrix::from_fn(self.dim(), self.dim(), |r, c| vectors[(r, c)] * f(values[c]));
        Self::hermitize(scaled * vectors.adjoint())
    }

    pub fn max_abs_entry(&self) -> f64 {
        max_abs(&self.0)
    }
}

impl Add for &Hermitian {
    type Output = Hermitian;
    fn add(self, rhs: &Hermitian) -> Hermitian {
        Hermitian(&self.0 + &rhs.0)
    }
}

impl Sub for &Hermitian {
    type Output = Hermitian;
    fn sub(self, rhs: &Hermitian) -> Hermitian {
        Hermitian(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &Hermitian {
    type Output = Hermitian;
    fn mul(self, rhs: f64) -> Hermitian {
        Hermitian(&self.0 * C64::new(rhs, 0.0))
    }
}

impl Mul<f64> for Hermitian {
    type Output = Hermitian;
    fn mul(self, rhs: f64) -> Hermitian {
        Hermitian(self.0 * C64::new(rhs, 0.0))
    }
}

/// Sums an iterator of operators of dimension `dim`.
pub fn sum_hermitian<'a>(dim: usize, ops: impl IntoIterator<Item = &'a Hermitian>) -> Hermitian {
    let mut acc = CMatrix::zeros(dim, dim);
    for op in ops {
        acc += &op.0;
    }
    Hermitian(acc)
}

/// Which factor of a bipartite system survives a partial trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keep {
    A,
    B,
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Partial trace of an operator on `C^dim_a ⊗ C^dim_b`.
pub fn partial_trace(m: &CMatrix, dim_a: usize, dim_b: usize, keep: Keep) -> Result<CMatrix> {
    let n = dim_a * dim_b;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial trace expects a {n}x{n} matrix for dims ({dim_a}, {dim_b}), got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let out = match keep {
        Keep::B => CMatrix::from_fn(dim_b, dim_b, |k, l| {
            (0..dim_a).map(|i| m[(i * dim_b + k, i * dim_b + l)]).sum()
        }),
        Keep::A => CMatrix::from_fn(dim_a, dim_a, |i, j| {
            (0..dim_b).map(|k| m[(i * dim_b + k, j * dim_b + k)]).sum()
        }),
    };
    Ok(out)
}

/// Hilbert–Schmidt distance `‖a − b‖_HS`.
pub fn hs_distance(a: &Hermitian, b: &Hermitian) -> f64 {
    (a - b).frobenius_norm()
}

/// Positive semidefinite within `tol`: minimum eigenvalue `≥ −tol`.
pub fn is_psd(h: &Hermitian, tol: f64) -> bool {
    h.min_eigenvalue() >= -tol
}

/// Minimal eigenvalue and a deterministic unit eigenvector.
///
/// When the minimal eigenspace is degenerate, the returned vector is the
/// normalized projection of the lowest-index basis vector `e_i` that has a
/// non-negligible overlap with the eigenspace, with its `i`-th amplitude made
/// real positive. For a non-degenerate eigenvalue this reduces to fixing the
/// phase of the first non-negligible amplitude.
pub fn min_eigpair(h: &Hermitian) -> (f64, CVector) {
    let n = h.dim();
    let (values, vectors) = h.eigh();
    let lambda = values[0];
    let scale = values.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let k = values
        .iter()
        .take_while(|&&v| v - lambda <= TOL_DEGENERATE * scale)
        .count();
    let basis = vectors.columns(0, k).into_owned();
    for i in 0..n {
        // P e_i = V (V† e_i) = V · conj(row i of V)ᵀ
        let coeffs = CVector::from_fn(k, |c, _| basis[(i, c)].conj());
        let projected = &basis * coeffs;
        let norm = projected.norm();
        if norm > 1e-6 {
            let mut v = projected / C64::new(norm, 0.0);
            let phase = v[i] / C64::new(v[i].norm(), 0.0);
            v /= phase;
            return (lambda, v);
        }
    }
    unreachable!("an eigenspace always overlaps some basis vector")
}

/// A normalized pure state on `C^dim_a ⊗ C^dim_b`, amplitudes in the
/// product basis `|i⟩|j⟩ ↦ i·dim_b + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PureBipartiteState {
    dim_a: usize,
    dim_b: usize,
    amplitudes: CVector,
}

impl PureBipartiteState {
    /// Requires unit norm within `1e-12`.
    pub fn new(dim_a: usize, dim_b: usize, amplitudes: CVector) -> Result<Self> {
        let state = Self::check_shape(dim_a, dim_b, amplitudes)?;
        let norm = state.amplitudes.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("state norm is {norm}, expected 1")));
        }
        Ok(state)
    }

    /// Rescales the amplitudes to unit norm.
    pub fn normalized(dim_a: usize, dim_b: usize, amplitudes: CVector) -> Result<Self> {
        let mut state = Self::check_shape(dim_a, dim_b, amplitudes)?;
        let norm = state.amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero or non-finite vector".into()));
        }
        state.amplitudes /= C64::new(norm, 0.0);
        Ok(state)
    }

    fn check_shape(dim_a: usize, dim_b: usize, amplitudes: CVector) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 || amplitudes.len() != dim_a * dim_b {
            return Err(Error::DimensionMismatch(format!(
                "expected {} amplitudes for dims ({dim_a}, {dim_b}), got {}",
                dim_a * dim_b,
                amplitudes.len()
            )));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dim_a, dim_b, amplitudes })
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// The `dim_a × dim_b` coefficient matrix `Ψ` with `ψ = Σ Ψ_ij |i⟩|j⟩`.
    pub fn coefficient_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.dim_a, self.dim_b, |i, j| self.amplitudes[i * self.dim_b + j])
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator(Hermitian::outer(&self.amplitudes))
    }
}

pub fn maximally_entangled(d: usize) -> Result<PureBipartiteState> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("maximally entangled state needs d >= 2, got {d}")));
    }
    let amp = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    let amplitudes = CVector::from_fn(d * d, |k, _| if k % (d + 1) == 0 { amp } else { C64::new(0.0, 0.0) });
    Ok(PureBipartiteState { dim_a: d, dim_b: d, amplitudes })
}

/// `ψ = Σ_k c_k |u_k⟩ ⊗ |v_k⟩` with `c` descending; bases are the columns of
/// `basis_a` and `basis_b`.
#[derive(Clone, Debug)]
pub struct SchmidtDecomposition {
    pub coefficients: Vec<f64>,
    pub basis_a: CMatrix,
    pub basis_b: CMatrix,
    pub rank: usize,
}

impl SchmidtDecomposition {
    pub fn reconstruct(&self) -> CVector {
        let (da, db) = (self.basis_a.nrows(), self.basis_b.nrows());
        CVector::from_fn(da * db, |idx, _| {
            let (i, j) = (idx / db, idx % db);
            self.coefficients
                .iter()
                .enumerate()
                .map(|(k, &c)| self.basis_a[(i, k)] * self.basis_b[(j, k)] * c)
                .sum()
        })
    }
}

pub fn schmidt_decompose(psi: &PureBipartiteState) -> SchmidtDecomposition {
    let psi_mat = psi.coefficient_matrix();
    let svd = SVD::new(psi_mat, true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V†");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let coefficients: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    // Ψ = U Σ V†, so Ψ_ij = Σ_k s_k U_ik conj(V_jk) and |v_k⟩ has entries V†[k, j].
    let basis_a = CMatrix::from_fn(psi.dim_a, k, |i, c| u[(i, order[c])]);
    let basis_b = CMatrix::from_fn(psi.dim_b, k, |j, c| v_t[(order[c], j)]);
    let rank = coefficients.iter().filter(|&&c| c > TOL_SCHMIDT).count();
    SchmidtDecomposition { coefficients, basis_a, basis_b, rank }
}

/// A positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator(Hermitian);

impl DensityOperator {
    pub fn new(op: Hermitian) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("density operator trace is {tr}, expected 1")));
        }
        let min = op.min_eigenvalue();
        if min < -TOL_PSD {
            return Err(Error::InvalidArgument(format!(
                "density operator has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(DensityOperator(op))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityOperator(&Hermitian::identity(dim) * (1.0 / dim as f64))
    }

    pub fn op(&self) -> &Hermitian {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Dominant eigenvector as a pure state on `dim_a ⊗ (dim / dim_a)`.
    pub fn dominant_pure_state(&self, dim_a: usize) -> Result<PureBipartiteState> {
        if dim_a == 0 || !self.dim().is_multiple_of(dim_a) {
            return Err(Error::DimensionMismatch(format!(
                "state dimension {} is not a multiple of {dim_a}",
                self.dim()
            )));
        }
        let (_, vectors) = self.0.eigh();
        let top = vectors.column(self.dim() - 1).into_owned();
        PureBipartiteState::normalized(dim_a, self.dim() / dim_a, top)
    }

    pub fn reduced(&self, dim_a: usize, keep: Keep) -> Result<DensityOperator> {
        if dim_a == 0 || !self.dim().is_multiple_of(dim_a) {
            return Err(Error::DimensionMismatch(format!(
                "state dimension {} is not a multiple of {dim_a}",
                self.dim()
            )));
        }
        let m = partial_trace(self.0.matrix(), dim_a, self.dim() / dim_a, keep)?;
        Ok(DensityOperator(Hermitian::hermitize(m)))
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        DensityOperator(Hermitian::hermitize(kron(self.0.matrix(), other.0.matrix())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)])
    }

    fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(-1.0, 0.0)])
    }

    #[test]
    fn kron_of_identities_and_diagonals() {
        let i2 = CMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), CMatrix::identity(4, 4));
        let a = Hermitian::diag(&[1.0, 2.0]);
        let b = Hermitian::diag(&[3.0, 4.0]);
        let k = kron(a.matrix(), b.matrix());
        assert_eq!(k, Hermitian::diag(&[3.0, 4.0, 6.0, 8.0]).into_matrix());
    }

    #[test]
    fn kron_matches_index_formula() {
        let (a, b) = (pauli_x(), pauli_z());
        let k = kron(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        assert_eq!(k[(i * 2 + p, j * 2 + q)], a[(i, j)] * b[(p, q)]);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_of_maximally_entangled_is_maximally_mixed() {
        let phi = maximally_entangled(2).unwrap();
        let rho_b = phi.density().reduced(2, Keep::B).unwrap();
        assert!(hs_distance(rho_b.op(), &Hermitian::diag(&[0.5, 0.5])) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_wrong_shape() {
        let m = CMatrix::identity(3, 3);
        assert!(matches!(partial_trace(&m, 2, 2, Keep::A), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn min_eigpair_diagonal_and_identity() {
        let (l, v) = min_eigpair(&Hermitian::diag(&[3.0, -2.0, 5.0]));
        assert!((l + 2.0).abs() < 1e-14);
        assert!((v[1] - c64(1.0, 0.0)).norm() < 1e-12);
        let (l, v) = min_eigpair(&Hermitian::identity(4));
        assert!((l - 1.0).abs() < 1e-14);
        assert!((v[0] - c64(1.0, 0.0)).norm() < 1e-12);
        let (_, v) = min_eigpair(&Hermitian::zeros(3));
        assert!((v[0] - c64(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn min_eigpair_phase_is_canonical() {
        // eigenvector of σ_X for -1 is (1, -1)/√2 up to phase
        let h = Hermitian::new(pauli_x()).unwrap();
        let (l, v) = min_eigpair(&h);
        assert!((l + 1.0).abs() < 1e-14);
        assert!(v[0].im.abs() < 1e-14 && v[0].re > 0.0);
        assert!((v[1] + v[0]).norm() < 1e-12);
    }

    #[test]
    fn is_psd_examples() {
        assert!(is_psd(&Hermitian::identity(2), 1e-8));
        assert!(!is_psd(&Hermitian::diag(&[1.0, -1e-3]), 1e-8));
        let proj = Hermitian::new((CMatrix::identity(2, 2) + pauli_x()) * c64(0.5, 0.0)).unwrap();
        assert!(is_psd(&proj, 1e-8));
    }

    #[test]
    fn hermitian_construction_tolerance() {
        let mut m = pauli_x();
        m[(0, 1)] += c64(5e-13, 0.0);
        let h = Hermitian::new(m.clone()).unwrap();
        assert_eq!(h.matrix()[(0, 1)], h.matrix()[(1, 0)]);
        m[(0, 1)] += c64(1e-6, 0.0);
        assert!(matches!(Hermitian::new(m), Err(Error::NotHermitian(_))));
        let bad = CMatrix::from_element(2, 2, c64(f64::NAN, 0.0));
        assert!(matches!(Hermitian::new(bad), Err(Error::NonFinite)));
    }

    #[test]
    fn maximally_entangled_layout() {
        let phi = maximally_entangled(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let expected = [s, 0.0, 0.0, s];
        for (z, e) in phi.amplitudes().iter().zip(expected) {
            assert!((z - c64(e, 0.0)).norm() < 1e-15);
        }
        let phi3 = maximally_entangled(3).unwrap();
        for (k, z) in phi3.amplitudes().iter().enumerate() {
            let e = if [0, 4, 8].contains(&k) { 1.0 / 3f64.sqrt() } else { 0.0 };
            assert!((z - c64(e, 0.0)).norm() < 1e-15);
        }
        assert!(maximally_entangled(1).is_err());
        for d in 2..6 {
            let sd = schmidt_decompose(&maximally_entangled(d).unwrap());
            assert_eq!(sd.rank, d);
            for c in sd.coefficients {
                assert!((c - 1.0 / (d as f64).sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn schmidt_of_product_state() {
        let amps = CVector::from_vec(vec![c64(0.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        let psi = PureBipartiteState::new(2, 2, amps).unwrap();
        let sd = schmidt_decompose(&psi);
        assert_eq!(sd.rank, 1);
        assert!((sd.coefficients[0] - 1.0).abs() < 1e-14);
        assert!((sd.reconstruct() - psi.amplitudes()).norm() < 1e-12);
    }

    #[test]
    fn density_operator_checks() {
        assert!(DensityOperator::new(Hermitian::diag(&[0.5, 0.6])).is_err());
        assert!(DensityOperator::new(Hermitian::diag(&[1.1, -0.1])).is_err());
        let rho = DensityOperator::new(Hermitian::diag(&[0.25, 0.75])).unwrap();
        let prod = rho.tensor(&DensityOperator::maximally_mixed(2));
        let back = prod.reduced(2, Keep::A).unwrap();
        assert!(hs_distance(back.op(), rho.op()) < 1e-15);
    }
}
