//! Measurements, assemblages and the witnesses of star-compatibility and
//! star-unsteerability.
//!
//! Settings and outcomes are dense indices starting at zero. A [`Pmd`] is
//! padded with zero operators on construction so every setting has the same
//! number of outcomes. Construction only checks shapes; physical validity is
//! reported by the `validate` methods, and every SDP entry point refuses
//! inputs whose report is not empty.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{
    c64, kron, partial_trace, sum_hermitian, CMatrix, CVector, DensityOperator, Hermitian, Keep,
    PureBipartiteState, TOL_PSD,
};
use crate::{Error, Result};

/// Completeness tolerance for POVMs.
pub const TOL_COMPLETENESS: f64 = 1e-10;
/// No-signaling and normalization tolerance for assemblages.
pub const TOL_ASSEMBLAGE: f64 = 1e-8;
/// Marginal tolerance for witnesses and decompositions.
pub const TOL_MARGINAL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Dimension,
    NotPsd,
    Completeness,
    NoSignaling,
    Normalization,
    Marginal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: String,
    pub magnitude: f64,
}

/// Every violated invariant of a validated object; empty iff valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.violations.iter().fold(0.0, |acc, v| acc.max(v.magnitude))
    }

    fn push(&mut self, kind: ViolationKind, location: String, magnitude: f64) {
        self.violations.push(Violation { kind, location, magnitude });
    }

    fn check_psd(&mut self, op: &Hermitian, tol: f64, location: impl FnOnce() -> String) {
        let min = op.min_eigenvalue();
        if min < -tol {
            self.push(ViolationKind::NotPsd, location(), -min);
        }
    }

    fn check_equal(
        &mut self,
        kind: ViolationKind,
        lhs: &Hermitian,
        rhs: &Hermitian,
        tol: f64,
        location: impl FnOnce() -> String,
    ) {
        let diff = operator_norm(&(lhs - rhs));
        if diff > tol {
            self.push(kind, location(), diff);
        }
    }

    /// `Ok(())` for an empty report, otherwise [`Error::Invalid`].
    pub fn into_result(self, kind: &'static str) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid { kind, report: self })
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{:?} at {} (magnitude {:.3e})", v.kind, v.location, v.magnitude)?;
        }
        Ok(())
    }
}

/// Largest absolute eigenvalue.
pub fn operator_norm(h: &Hermitian) -> f64 {
    let ev = h.eigenvalues();
    ev.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// A measurement: PSD elements indexed by outcome, summing to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    elements: Vec<Hermitian>,
}

impl Povm {
    pub fn new(elements: Vec<Hermitian>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::InvalidArgument("a POVM needs at least one element".into()));
        };
        let dim = first.dim();
        if elements.iter().any(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch("POVM elements have different dimensions".into()));
        }
        Ok(Povm { elements })
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn outcome_count(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Hermitian] {
        &self.elements
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (a, e) in self.elements.iter().enumerate() {
            report.check_psd(e, TOL_PSD, || format!("element {a}"));
        }
        let total = sum_hermitian(self.dim(), &self.elements);
        report.check_equal(
            ViolationKind::Completeness,
            &total,
            &Hermitian::identity(self.dim()),
            TOL_COMPLETENESS,
            || "sum of elements".into(),
        );
        report
    }
}

/// A programmable measurement device: one POVM per setting, all on the same
/// space and padded to a common outcome count.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmd {
    dim: usize,
    outcome_count: usize,
    settings: Vec<Povm>,
}

impl Pmd {
    pub fn new(settings: Vec<Povm>) -> Result<Self> {
        let Some(first) = settings.first() else {
            return Err(Error::InvalidArgument("a PMD needs at least one setting".into()));
        };
        let dim = first.dim();
        if settings.iter().any(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch("PMD settings act on different dimensions".into()));
        }
        let outcome_count = settings.iter().map(Povm::outcome_count).max().unwrap_or(1);
        let settings = settings
            .into_iter()
            .map(|mut s| {
                s.elements.resize(outcome_count, Hermitian::zeros(dim));
                s
            })
            .collect();
        Ok(Pmd { dim, outcome_count, settings })
    }

    /// Builds from raw element lists `[x][a]`.
    pub fn from_elements(elements: Vec<Vec<Hermitian>>) -> Result<Self> {
        Self::new(elements.into_iter().map(Povm::new).collect::<Result<_>>()?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outcome_count(&self) -> usize {
        self.outcome_count
    }

    pub fn setting_count(&self) -> usize {
        self.settings.len()
    }

    pub fn settings(&self) -> &[Povm] {
        &self.settings
    }

    pub fn element(&self, x: usize, a: usize) -> &Hermitian {
        &self.settings[x].elements[a]
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (x, s) in self.settings.iter().enumerate() {
            for mut v in s.validate().violations {
                v.location = format!("setting {x}, {}", v.location);
                report.violations.push(v);
            }
        }
        report
    }

    /// `(1 − w)·self + w·other`, elementwise.
    pub fn mix(&self, other: &Pmd, w: f64) -> Result<Pmd> {
        self.check_same_shape(other)?;
        let settings = (0..self.setting_count())
            .map(|x| {
                let elements = (0..self.outcome_count)
                    .map(|a| &(self.element(x, a) * (1.0 - w)) + &(other.element(x, a) * w))
                    .collect();
                Povm { elements }
            })
            .collect();
        Ok(Pmd { dim: self.dim, outcome_count: self.outcome_count, settings })
    }

    pub(crate) fn check_same_shape(&self, other: &Pmd) -> Result<()> {
        if self.dim != other.dim
            || self.outcome_count != other.outcome_count
            || self.setting_count() != other.setting_count()
        {
            return Err(Error::DimensionMismatch("PMDs have different shapes".into()));
        }
        Ok(())
    }

    pub(crate) fn check_target(&self, x_star: usize) -> Result<()> {
        if x_star >= self.setting_count() {
            return Err(Error::InvalidArgument(format!(
                "target setting {x_star} out of range (device has {} settings)",
                self.setting_count()
            )));
        }
        Ok(())
    }
}

/// Bob's conditional unnormalized states `σ^{a|x}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assemblage {
    dim_b: usize,
    members: Vec<Vec<Hermitian>>,
}

impl Assemblage {
    pub fn new(members: Vec<Vec<Hermitian>>) -> Result<Self> {
        let Some(first) = members.first().and_then(|row| row.first()) else {
            return Err(Error::InvalidArgument("an assemblage needs at least one member".into()));
        };
        let dim_b = first.dim();
        let outcomes = members[0].len();
        for row in &members {
            if row.len() != outcomes {
                return Err(Error::DimensionMismatch("assemblage settings have different outcome counts".into()));
            }
            if row.iter().any(|m| m.dim() != dim_b) {
                return Err(Error::DimensionMismatch("assemblage members have different dimensions".into()));
            }
        }
        Ok(Assemblage { dim_b, members })
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn setting_count(&self) -> usize {
        self.members.len()
    }

    pub fn outcome_count(&self) -> usize {
        self.members[0].len()
    }

    pub fn member(&self, x: usize, a: usize) -> &Hermitian {
        &self.members[x][a]
    }

    pub fn members(&self) -> &[Vec<Hermitian>] {
        &self.members
    }

    /// `Σ_a σ^{a|x}` for setting `x`.
    pub fn marginal(&self, x: usize) -> Hermitian {
        sum_hermitian(self.dim_b, &self.members[x])
    }

    /// Bob's reduced state, read from the first setting.
    pub fn reduced_state(&self) -> Hermitian {
        self.marginal(0)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (x, row) in self.members.iter().enumerate() {
            for (a, m) in row.iter().enumerate() {
                report.check_psd(m, TOL_PSD, || format!("member ({x}, {a})"));
            }
        }
        let rho_b = self.reduced_state();
        for x in 1..self.setting_count() {
            report.check_equal(ViolationKind::NoSignaling, &self.marginal(x), &rho_b, TOL_ASSEMBLAGE, || {
                format!("setting {x} vs setting 0")
            });
        }
        let tr = rho_b.trace();
        if (tr - 1.0).abs() > TOL_ASSEMBLAGE {
            report.push(ViolationKind::Normalization, "reduced state trace".into(), (tr - 1.0).abs());
        }
        report
    }

    pub(crate) fn check_target(&self, x_star: usize) -> Result<()> {
        if x_star >= self.setting_count() {
            return Err(Error::InvalidArgument(format!(
                "target setting {x_star} out of range (assemblage has {} settings)",
                self.setting_count()
            )));
        }
        Ok(())
    }
}

/// Operators `O^{a_x a_*|x}` for every non-target setting `x`, stored
/// `[x][a_x][a_*]`; the target row is `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointFamily {
    target: usize,
    entries: Vec<Option<Vec<Vec<Hermitian>>>>,
}

impl JointFamily {
    pub fn new(target: usize, entries: Vec<Option<Vec<Vec<Hermitian>>>>) -> Result<Self> {
        if target >= entries.len() || entries[target].is_some() {
            return Err(Error::InvalidArgument("target row must exist and be empty".into()));
        }
        if entries.iter().enumerate().any(|(x, e)| x != target && e.is_none()) {
            return Err(Error::InvalidArgument("every non-target setting needs joint operators".into()));
        }
        Ok(JointFamily { target, entries })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn setting_count(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, x: usize, a: usize, a_star: usize) -> &Hermitian {
        &self.entries[x].as_ref().expect("non-target setting")[a][a_star]
    }

    /// Iterates over `(x, rows)` for non-target settings.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &Vec<Vec<Hermitian>>)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(x, e)| e.as_ref().map(|rows| (x, rows)))
    }

    /// Checks PSD-ness of every operator and the two marginal conditions
    /// against `side(x, a)`, all at tolerance `tol`.
    fn validate_marginals<'a>(
        &self,
        dim: usize,
        outcomes: usize,
        settings: usize,
        side: impl Fn(usize, usize) -> &'a Hermitian,
        tol: f64,
    ) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.entries.len() != settings {
            report.push(ViolationKind::Dimension, "setting count".into(), 1.0);
            return report;
        }
        for (x, rows) in self.rows() {
            if rows.len() != outcomes || rows.iter().any(|r| r.len() != outcomes || r.iter().any(|o| o.dim() != dim)) {
                report.push(ViolationKind::Dimension, format!("setting {x}"), 1.0);
                continue;
            }
            for (a, row) in rows.iter().enumerate() {
                for (b, op) in row.iter().enumerate() {
                    report.check_psd(op, tol, || format!("({x}; {a}, {b})"));
                }
            }
            for a in 0..outcomes {
                let sum = sum_hermitian(dim, &rows[a]);
                report.check_equal(ViolationKind::Marginal, &sum, side(x, a), tol, || {
                    format!("setting {x} marginal for a_x = {a}")
                });
            }
            for b in 0..outcomes {
                let sum = sum_hermitian(dim, rows.iter().map(|r| &r[b]));
                report.check_equal(ViolationKind::Marginal, &sum, side(self.target, b), tol, || {
                    format!("setting {x} marginal for a_* = {b}")
                });
            }
        }
        report
    }
}

/// Joint POVMs `J^{a_x a_*|x}` showing a device is star-compatible with
/// respect to `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct StarWitness(pub JointFamily);

impl StarWitness {
    pub fn target(&self) -> usize {
        self.0.target
    }

    pub fn joint(&self, x: usize, a: usize, a_star: usize) -> &Hermitian {
        self.0.get(x, a, a_star)
    }

    /// Validates at the default marginal tolerance.
    pub fn validate(&self, pmd: &Pmd) -> ValidationReport {
        self.validate_with(pmd, TOL_MARGINAL)
    }

    /// Each joint family must be a POVM on the product outcome set whose two
    /// marginals are `M^{a|x}` and `M^{a_*|x_*}`. `tol` bounds both the PSD
    /// defect and the marginal mismatch.
    pub fn validate_with(&self, pmd: &Pmd, tol: f64) -> ValidationReport {
        let mut report = self.0.validate_marginals(
            pmd.dim(),
            pmd.outcome_count(),
            pmd.setting_count(),
            |x, a| pmd.element(x, a),
            tol,
        );
        for (x, rows) in self.0.rows() {
            let total = sum_hermitian(pmd.dim(), rows.iter().flatten());
            report.check_equal(
                ViolationKind::Completeness,
                &total,
                &Hermitian::identity(pmd.dim()),
                tol,
                || format!("setting {x} joint completeness"),
            );
        }
        report
    }
}

/// Unnormalized states `ρ^{a_x a_*|x}` showing an assemblage is
/// star-unsteerable with respect to `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnsteerableDecomposition(pub JointFamily);

impl UnsteerableDecomposition {
    pub fn target(&self) -> usize {
        self.0.target
    }

    pub fn part(&self, x: usize, a: usize, a_star: usize) -> &Hermitian {
        self.0.get(x, a, a_star)
    }

    pub fn validate(&self, assemblage: &Assemblage) -> ValidationReport {
        self.validate_with(assemblage, TOL_MARGINAL)
    }

    pub fn validate_with(&self, assemblage: &Assemblage, tol: f64) -> ValidationReport {
        self.0.validate_marginals(
            assemblage.dim_b(),
            assemblage.outcome_count(),
            assemblage.setting_count(),
            |x, a| assemblage.member(x, a),
            tol,
        )
    }
}

/// `Tr_A[(m ⊗ 1_B) ρ_AB]` for an operator `m` on the first factor.
pub fn conditional_state(m: &Hermitian, state: &DensityOperator) -> Result<Hermitian> {
    let dim_a = m.dim();
    if dim_a == 0 || !state.dim().is_multiple_of(dim_a) {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {} is not a multiple of the operator dimension {dim_a}",
            state.dim()
        )));
    }
    let dim_b = state.dim() / dim_a;
    let rho = state.op().matrix();
    let m = m.matrix();
    // σ_kl = Σ_ij M_ij ρ_(j,k),(i,l)
    let sigma = CMatrix::from_fn(dim_b, dim_b, |k, l| {
        let mut acc = c64(0.0, 0.0);
        for i in 0..dim_a {
            for j in 0..dim_a {
                acc += m[(i, j)] * rho[(j * dim_b + k, i * dim_b + l)];
            }
        }
        acc
    });
    Ok(Hermitian::hermitize(sigma))
}

/// `σ^{a|x} = Tr_A[(M^{a|x} ⊗ 1_B) ρ_AB]`.
pub fn assemblage_from(pmd: &Pmd, state: &DensityOperator) -> Result<Assemblage> {
    let dim_a = pmd.dim();
    if !state.dim().is_multiple_of(dim_a) {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {} is not a multiple of the device dimension {dim_a}",
            state.dim()
        )));
    }
    let members = pmd
        .settings()
        .iter()
        .map(|povm| povm.elements().iter().map(|m| conditional_state(m, state)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Assemblage { dim_b: state.dim() / dim_a, members })
}

pub fn assemblage_from_pure(pmd: &Pmd, psi: &PureBipartiteState) -> Result<Assemblage> {
    if psi.dim_a() != pmd.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has dim_a = {}, device has dimension {}",
            psi.dim_a(),
            pmd.dim()
        )));
    }
    assemblage_from(pmd, &psi.density())
}

/// Pauli matrices `σ_1 = X`, `σ_2 = Y`, `σ_3 = Z`.
pub fn pauli(i: usize) -> CMatrix {
    let (o, l, j) = (c64(0.0, 0.0), c64(1.0, 0.0), c64(0.0, 1.0));
    match i {
        0 => CMatrix::identity(2, 2),
        1 => CMatrix::from_row_slice(2, 2, &[o, l, l, o]),
        2 => CMatrix::from_row_slice(2, 2, &[o, -j, j, o]),
        3 => CMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        _ => panic!("Pauli index must be 0..=3"),
    }
}

/// Noisy Pauli device: settings `i = 1, 2, 3` (indices 0, 1, 2) with elements
/// `(1 ± η σ_i)/2`.
pub fn pauli_pmd(eta: f64) -> Result<Pmd> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta must lie in [0, 1], got {eta}")));
    }
    let settings = (1..=3)
        .map(|i| {
            let s = pauli(i) * c64(0.5 * eta, 0.0);
            let half = CMatrix::identity(2, 2) * c64(0.5, 0.0);
            Povm::new(vec![Hermitian::hermitize(&half + &s), Hermitian::hermitize(&half - &s)])
        })
        .collect::<Result<_>>()?;
    Pmd::new(settings)
}

fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> crate::C64 {
    c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian_complex(rng))
}

/// Gaussian-normalized (Haar) random pure state, deterministic in `seed`.
pub fn random_pure_state(dim_a: usize, dim_b: usize, seed: u64) -> PureBipartiteState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_pure_state_with(dim_a, dim_b, &mut rng)
}

pub fn random_pure_state_with<R: Rng + ?Sized>(dim_a: usize, dim_b: usize, rng: &mut R) -> PureBipartiteState {
    let amps = CVector::from_fn(dim_a * dim_b, |_, _| gaussian_complex(rng));
    PureBipartiteState::normalized(dim_a, dim_b, amps).expect("Gaussian vector is non-zero")
}

/// Random mixed state `G G† / Tr(G G†)` with `G` a `dim × rank` Ginibre matrix.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> DensityOperator {
    let g = ginibre(dim, rank.max(1), rng);
    let h = Hermitian::hermitize(&g * g.adjoint());
    let tr = h.trace();
    DensityOperator::new(&h * (1.0 / tr)).expect("Ginibre state is a density operator")
}

/// Random POVM `S^{-1/2} A_a S^{-1/2}` built from Wishart elements `A_a`.
pub fn random_povm<R: Rng + ?Sized>(dim: usize, outcomes: usize, rng: &mut R) -> Povm {
    let raw: Vec<Hermitian> = (0..outcomes)
        .map(|_| {
            let g = ginibre(dim, dim, rng);
            Hermitian::hermitize(&g * g.adjoint())
        })
        .collect();
    let inv_sqrt = sum_hermitian(dim, &raw).map_spectrum(|v| 1.0 / v.sqrt());
    let elements = raw.iter().map(|a| a.congruence(inv_sqrt.matrix())).collect();
    Povm { elements }
}

/// Random projective measurement in a Haar-random basis, outcomes = `dim`.
pub fn random_projective<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Povm {
    let g = ginibre(dim, dim, rng);
    let q = g.qr().q();
    let elements = (0..dim).map(|k| Hermitian::outer(&q.column(k).into_owned())).collect();
    Povm { elements }
}

pub fn random_pmd<R: Rng + ?Sized>(dim: usize, settings: usize, outcomes: usize, rng: &mut R) -> Pmd {
    Pmd::new((0..settings).map(|_| random_povm(dim, outcomes, rng)).collect()).expect("consistent shapes")
}

/// A device that is star-compatible with respect to `target` by construction:
/// `J^{a b|x} = √M^b N^{a|b,x} √M^b` with random POVMs `M` (target) and
/// `N^{·|b,x}`, and `M^{a|x} = Σ_b J^{a b|x}`.
pub fn random_star_compatible_pmd<R: Rng + ?Sized>(
    dim: usize,
    settings: usize,
    outcomes: usize,
    target: usize,
    rng: &mut R,
) -> Pmd {
    let target_povm = random_povm(dim, outcomes, rng);
    let roots: Vec<Hermitian> = target_povm
        .elements()
        .iter()
        .map(|m| m.map_spectrum(|v| v.max(0.0).sqrt()))
        .collect();
    let povms = (0..settings)
        .map(|x| {
            if x == target {
                return target_povm.clone();
            }
            let mut elements = vec![Hermitian::zeros(dim); outcomes];
            for root in &roots {
                let conditional = random_povm(dim, outcomes, rng);
                for (a, n) in conditional.elements().iter().enumerate() {
                    elements[a] = &elements[a] + &n.congruence(root.matrix());
                }
            }
            Povm { elements }
        })
        .collect();
    Pmd::new(povms).expect("consistent shapes")
}

/// Reference implementation of `Tr_A[(M ⊗ 1) ρ]` through an explicit
/// Kronecker product; used to cross-check [`assemblage_from`].
pub fn assemblage_via_kron(pmd: &Pmd, state: &DensityOperator) -> Result<Assemblage> {
    let dim_a = pmd.dim();
    let dim_b = state.dim() / dim_a;
    let id_b = CMatrix::identity(dim_b, dim_b);
    let members = pmd
        .settings()
        .iter()
        .map(|povm| {
            povm.elements()
                .iter()
                .map(|m| {
                    let prod = kron(m.matrix(), &id_b) * state.op().matrix();
                    partial_trace(&prod, dim_a, dim_b, Keep::B).map(Hermitian::hermitize)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Assemblage::new(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hs_distance, maximally_entangled};

    #[test]
    fn pauli_family_edges() {
        let pmd = pauli_pmd(0.0).unwrap();
        for x in 0..3 {
            for a in 0..2 {
                assert!(hs_distance(pmd.element(x, a), &Hermitian::diag(&[0.5, 0.5])) < 1e-15);
            }
        }
        let sharp = pauli_pmd(1.0).unwrap();
        for x in 0..3 {
            for a in 0..2 {
                let ev = sharp.element(x, a).eigenvalues();
                assert!(ev[0].abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
            }
        }
        for eta in [0.0, 0.3, 0.7, 1.0] {
            assert!(pauli_pmd(eta).unwrap().validate().is_empty());
        }
        assert!(pauli_pmd(1.2).is_err());
        assert!(pauli_pmd(-0.1).is_err());
    }

    #[test]
    fn validate_reports_completeness_and_psd() {
        let bad = Povm::new(vec![Hermitian::identity(2), Hermitian::identity(2)]).unwrap();
        let report = bad.validate();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::Completeness);
        assert!((report.violations[0].magnitude - 1.0).abs() < 1e-12);

        let mut members = assemblage_from_pure(&pauli_pmd(1.0).unwrap(), &maximally_entangled(2).unwrap())
            .unwrap()
            .members()
            .to_vec();
        members[0][0] = Hermitian::diag(&[1.0, -0.1]);
        let report = Assemblage::new(members).unwrap().validate();
        let psd: Vec<_> = report.violations.iter().filter(|v| v.kind == ViolationKind::NotPsd).collect();
        assert_eq!(psd.len(), 1);
        assert!((psd[0].magnitude - 0.1).abs() < 1e-12);
        assert!(pauli_pmd(0.5).unwrap().validate().is_empty());
    }

    #[test]
    fn padding_equalizes_outcomes() {
        let two = Povm::new(vec![Hermitian::diag(&[1.0, 0.0]), Hermitian::diag(&[0.0, 1.0])]).unwrap();
        let one = Povm::new(vec![Hermitian::identity(2)]).unwrap();
        let pmd = Pmd::new(vec![two, one]).unwrap();
        assert_eq!(pmd.outcome_count(), 2);
        assert_eq!(pmd.element(1, 1), &Hermitian::zeros(2));
        assert!(pmd.validate().is_empty());
    }

    #[test]
    fn trivial_measurement_returns_reduced_state() {
        let pmd = Pmd::new(vec![Povm::new(vec![Hermitian::identity(2)]).unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(4, 4, &mut rng);
        let sigma = assemblage_from(&pmd, &rho).unwrap();
        let rho_b = rho.reduced(2, Keep::B).unwrap();
        assert!(hs_distance(sigma.member(0, 0), rho_b.op()) < 1e-14);
    }

    #[test]
    fn sharp_z_on_phi() {
        let pmd = pauli_pmd(1.0).unwrap();
        let sigma = assemblage_from_pure(&pmd, &maximally_entangled(2).unwrap()).unwrap();
        assert!(hs_distance(sigma.member(2, 0), &Hermitian::diag(&[0.5, 0.0])) < 1e-15);
        assert!(hs_distance(sigma.member(2, 1), &Hermitian::diag(&[0.0, 0.5])) < 1e-15);
    }

    #[test]
    fn reduced_state_of_phi_is_maximally_mixed_for_all_eta() {
        let phi = maximally_entangled(2).unwrap();
        for k in 0..=20 {
            let sigma = assemblage_from_pure(&pauli_pmd(k as f64 / 20.0).unwrap(), &phi).unwrap();
            for x in 0..3 {
                assert!(hs_distance(&sigma.marginal(x), &Hermitian::diag(&[0.5, 0.5])) < 1e-10);
            }
        }
    }

    #[test]
    fn random_state_determinism_and_norm() {
        assert_eq!(random_pure_state(2, 3, 11), random_pure_state(2, 3, 11));
        assert_ne!(random_pure_state(2, 3, 11), random_pure_state(2, 3, 12));
        for seed in 0..100 {
            assert!((random_pure_state(2, 2, seed).amplitudes().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_state_marginal_averages_to_maximally_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let mut acc = Hermitian::zeros(2);
        for _ in 0..n {
            let psi = random_pure_state_with(2, 2, &mut rng);
            acc = &acc + psi.density().reduced(2, Keep::A).unwrap().op();
        }
        let mean = &acc * (1.0 / n as f64);
        assert!(mean.max_abs_entry() > 0.0);
        let dev = &mean - &Hermitian::diag(&[0.5, 0.5]);
        assert!(dev.max_abs_entry() < 0.02, "deviation {}", dev.max_abs_entry());
    }

    #[test]
    fn random_devices_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for dim in 2..=3 {
            assert!(random_pmd(dim, 3, 3, &mut rng).validate().is_empty());
            assert!(random_star_compatible_pmd(dim, 3, 2, 1, &mut rng).validate().is_empty());
            let proj = random_projective(dim, &mut rng);
            assert!(proj.validate().is_empty());
        }
    }

    #[test]
    fn assemblage_is_valid_and_matches_kron_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let pmd = random_pmd(2, 3, 2, &mut rng);
            let rho = random_density(6, 3, &mut rng);
            let fast = assemblage_from(&pmd, &rho).unwrap();
            let slow = assemblage_via_kron(&pmd, &rho).unwrap();
            assert!(fast.validate().is_empty());
            let rho_b = rho.reduced(2, Keep::B).unwrap();
            for x in 0..3 {
                assert!(hs_distance(&fast.marginal(x), rho_b.op()) < 1e-12);
                for a in 0..2 {
                    assert!(hs_distance(fast.member(x, a), slow.member(x, a)) < 1e-13);
                }
            }
        }
    }

    #[test]
    fn witness_marginal_checks() {
        // identical projective settings: J^{ab|x} = δ_ab M^a is a witness
        let z = Povm::new(vec![Hermitian::diag(&[1.0, 0.0]), Hermitian::diag(&[0.0, 1.0])]).unwrap();
        let pmd = Pmd::new(vec![z.clone(), z.clone()]).unwrap();
        let rows: Vec<Vec<Hermitian>> = (0..2)
            .map(|a| (0..2).map(|b| if a == b { pmd.element(0, a).clone() } else { Hermitian::zeros(2) }).collect())
            .collect();
        let witness = StarWitness(JointFamily::new(1, vec![Some(rows.clone()), None]).unwrap());
        assert!(witness.validate(&pmd).is_empty());
        let mut broken = rows;
        broken[0][1] = Hermitian::diag(&[0.0, 0.1]);
        let witness = StarWitness(JointFamily::new(1, vec![Some(broken), None]).unwrap());
        let report = witness.validate(&pmd);
        assert!(report.violations.iter().any(|v| v.kind == ViolationKind::Marginal));
    }
}
