//! Guessing probabilities, star-compatibility, star-unsteerability and the
//! star-incompatibility weight, together with the constructive transforms
//! that turn one kind of certificate into another.
//!
//! Every optimization is solved in its primal form; the dual certificate is
//! read off the solver multipliers. Each dual is additionally exposed as an
//! independently assembled program (the `*_dual` functions) so the two can
//! be cross-checked.

use serde::Serialize;

use crate::linalg::{c64, schmidt_decompose, sum_hermitian, CMatrix, DensityOperator, Hermitian, PureBipartiteState};
use crate::quantum::{
    conditional_state, Assemblage, JointFamily, Pmd, Povm, StarWitness, UnsteerableDecomposition, ValidationReport,
    ViolationKind, Violation,
};
use crate::sdp::hermitian::{Constraint, HermitianProgram, HermitianSolution, Sense, Var};
use crate::{Error, Result};

/// Feasibility margin: a slack optimum at or below this value counts as feasible.
pub const FEASIBILITY_THRESHOLD: f64 = 1e-7;
/// Below this scale the compatible part of a weight decomposition is undefined.
pub const SCALE_CUTOFF: f64 = 1e-9;
/// Tolerance for strategy and certificate checks.
pub const TOL_CERTIFICATE: f64 = 1e-7;

/// Operators indexed `[x][a][e]`.
pub type Family3 = Vec<Vec<Vec<Hermitian>>>;
/// Operators indexed `[x][a]`.
pub type Family2 = Vec<Vec<Hermitian>>;

/// Eve's strategy against an assemblage: `τ^{a e|x}`.
#[derive(Clone, Debug)]
pub struct EveAssemblageStrategy {
    pub target: usize,
    pub tau: Family3,
}

/// Eve's strategy against a measurement device: `G^{a e|x}`.
#[derive(Clone, Debug)]
pub struct EvePmdStrategy {
    pub target: usize,
    pub g: Family3,
}

/// Shared checks for `Σ_e O^{a e|x} = side^{a|x}` and
/// `Σ_a O^{a e|x}` independent of `x`.
fn validate_strategy(ops: &Family3, side: &[Vec<Hermitian>], tol: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut push = |kind, location: String, magnitude: f64| {
        report.violations.push(Violation { kind, location, magnitude });
    };
    if ops.len() != side.len() || ops.iter().zip(side).any(|(o, s)| o.len() != s.len()) {
        push(ViolationKind::Dimension, "strategy shape".into(), 1.0);
        return report;
    }
    let dim = side[0][0].dim();
    for (x, row) in ops.iter().enumerate() {
        for (a, ops_a) in row.iter().enumerate() {
            for (e, op) in ops_a.iter().enumerate() {
                let min = op.min_eigenvalue();
                if min < -tol {
                    push(ViolationKind::NotPsd, format!("({x}; {a}, {e})"), -min);
                }
            }
            let dev = (&sum_hermitian(dim, ops_a) - &side[x][a]).max_abs_entry();
            if dev > tol {
                push(ViolationKind::Marginal, format!("setting {x}, outcome {a}"), dev);
            }
        }
    }
    let outcomes = side[0].len();
    for e in 0..outcomes {
        let reference = sum_hermitian(dim, ops[0].iter().map(|r| &r[e]));
        for (x, row) in ops.iter().enumerate().skip(1) {
            let dev = (&sum_hermitian(dim, row.iter().map(|r| &r[e])) - &reference).max_abs_entry();
            if dev > tol {
                push(ViolationKind::NoSignaling, format!("guess {e}, setting {x}"), dev);
            }
        }
    }
    report
}

impl EveAssemblageStrategy {
    /// `Σ_e Tr τ^{e e|x*}`.
    pub fn objective(&self) -> f64 {
        let row = &self.tau[self.target];
        (0..row.len()).map(|e| row[e][e].trace()).sum()
    }

    pub fn validate_against(&self, assemblage: &Assemblage, tol: f64) -> ValidationReport {
        validate_strategy(&self.tau, assemblage.members(), tol)
    }
}

impl EvePmdStrategy {
    /// `Σ_e Tr(G^{e e|x*} ρ_A)`.
    pub fn objective(&self, rho_a: &DensityOperator) -> f64 {
        let row = &self.g[self.target];
        (0..row.len()).map(|e| row[e][e].inner(rho_a.op())).sum()
    }

    pub fn validate_against(&self, pmd: &Pmd, tol: f64) -> ValidationReport {
        let side: Vec<Vec<Hermitian>> = pmd.settings().iter().map(|s| s.elements().to_vec()).collect();
        validate_strategy(&self.g, &side, tol)
    }
}

/// Dual variables of a guessing or weight program.
///
/// For the guessing programs, `x_ops[x][a]` and `y_ops[x][e]` satisfy
/// `X^{a|x} − Y^{e|x} + δ_{x x*} Σ_{x'} Y^{e|x'} ⪰ δ_{x x*} δ_{a e} W` with `W`
/// the identity (assemblage) or `ρ_A` (device). For the weight program,
/// `Σ_x Tr Z^x = 1`, `R^{a|x} = X^{a|x} + Z^x + δ_{x x*} Σ_{x'} Y^{a|x'} ⪰ 0`
/// and `X^{a|x} + Y^{e|x} ⪰ 0`.
#[derive(Clone, Debug)]
pub struct DualCertificate {
    pub target: usize,
    pub x_ops: Family2,
    pub y_ops: Family2,
    pub z_ops: Option<Vec<Hermitian>>,
    pub r_ops: Option<Family2>,
    pub objective: f64,
}

impl DualCertificate {
    /// Largest violation of the guessing dual constraints (`≤ 0` when feasible)
    /// and the dual objective `Σ Tr(X^{a|x} side^{a|x})`.
    pub fn guessing_check(&self, side: &[Vec<Hermitian>], weight: &Hermitian) -> (f64, f64) {
        let mut worst = f64::NEG_INFINITY;
        for x in 0..self.x_ops.len() {
            for a in 0..self.x_ops[x].len() {
                for op in self.guessing_ops(x, a, weight) {
                    worst = worst.max(-op.min_eigenvalue());
                }
            }
        }
        (worst, pairing(&self.x_ops, side))
    }

    /// The operators `X^{a|x} − Y^{e|x} + δ_{x x*}(Σ_{x'} Y^{e|x'} − δ_{a e} W)`, one per `e`.
    fn guessing_ops(&self, x: usize, a: usize, weight: &Hermitian) -> Vec<Hermitian> {
        let dim = weight.dim();
        (0..self.x_ops[x].len())
            .map(|e| {
                let mut op = &self.x_ops[x][a] - &self.y_ops[x][e];
                if x == self.target {
                    op = &op + &sum_hermitian(dim, self.y_ops.iter().map(|y| &y[e]));
                    if a == e {
                        op = &op - weight;
                    }
                }
                op
            })
            .collect()
    }

    /// The operators `R^{a|x}` and `X^{a|x} + Y^{e|x}` that must be positive.
    fn weight_ops(&self, x: usize, a: usize) -> Vec<Hermitian> {
        let mut ops: Vec<Hermitian> = self.y_ops[x].iter().map(|y| &self.x_ops[x][a] + y).collect();
        if let Some(r) = &self.r_ops {
            ops.push(r[x][a].clone());
        }
        ops
    }

    /// Largest violation of the weight dual constraints and the dual
    /// objective `Σ Tr(R^{a|x} M^{a|x})`.
    pub fn weight_check(&self, pmd: &Pmd) -> (f64, f64) {
        let (Some(z), Some(r)) = (&self.z_ops, &self.r_ops) else {
            return (f64::INFINITY, f64::NAN);
        };
        let dim = pmd.dim();
        let outcomes = pmd.outcome_count();
        let mut worst = (z.iter().map(Hermitian::trace).sum::<f64>() - 1.0).abs();
        for x in 0..pmd.setting_count() {
            for a in 0..outcomes {
                let mut rebuilt = &self.x_ops[x][a] + &z[x];
                if x == self.target {
                    rebuilt = &rebuilt + &sum_hermitian(dim, self.y_ops.iter().map(|y| &y[a]));
                }
                worst = worst.max((&rebuilt - &r[x][a]).max_abs_entry());
                worst = worst.max(-r[x][a].min_eigenvalue());
                for e in 0..outcomes {
                    worst = worst.max(-(&self.x_ops[x][a] + &self.y_ops[x][e]).min_eigenvalue());
                }
            }
        }
        let side: Vec<Vec<Hermitian>> = pmd.settings().iter().map(|s| s.elements().to_vec()).collect();
        (worst, pairing(r, &side))
    }
}

fn pairing(ops: &[Vec<Hermitian>], side: &[Vec<Hermitian>]) -> f64 {
    ops.iter()
        .zip(side)
        .flat_map(|(o, s)| o.iter().zip(s).map(|(a, b)| a.inner(b)))
        .sum()
}

/// Outcome of a guessing-probability computation.
///
/// `p` is the certified upper bound `max(primal, dual)`.
#[derive(Clone, Debug)]
pub struct Guess<S> {
    pub p: f64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub strategy: S,
    pub certificate: DualCertificate,
}

pub type AssemblageGuess = Guess<EveAssemblageStrategy>;
pub type PmdGuess = Guess<EvePmdStrategy>;

/// Relative eigenvalue cutoff deciding the support of a side operator.
const SUPPORT_CUTOFF: f64 = 1e-12;
/// Margin added on the support when lifting a compressed certificate.
const LIFT_MARGIN: f64 = 1e-9;
/// Largest accepted change of a dual objective caused by lifting.
const LIFT_TOLERANCE: f64 = 1e-7;

/// Orthonormal bases of the support and the kernel of `h`, when the kernel is nontrivial.
fn split_support(h: &Hermitian) -> Option<(CMatrix, CMatrix)> {
    let (values, vectors) = h.eigh();
    let top = values.last().copied().unwrap_or(0.0).max(0.0);
    let kernel = values.iter().filter(|&&l| l <= SUPPORT_CUTOFF * top.max(1.0)).count();
    if kernel == 0 || kernel == values.len() {
        return None;
    }
    let d = values.len();
    Some((vectors.columns(kernel, d - kernel).into_owned(), vectors.columns(0, kernel).into_owned()))
}

/// A shift, zero on the support `V` up to a margin, that makes every
/// operator in `ops` positive given that their compressions onto `V` are
/// (nearly) positive. The support–kernel block of the most constrained
/// operator is cancelled first so the kernel shift stays moderate.
fn lift_shift(ops: &[Hermitian], support: &CMatrix, kernel: &CMatrix) -> Hermitian {
    let tightest = ops
        .iter()
        .min_by(|p, q| {
            let a = |h: &Hermitian| h.congruence(&support.adjoint()).min_eigenvalue();
            a(p).total_cmp(&a(q))
        })
        .expect("at least one operator");
    let cross = support * (support.adjoint() * tightest.matrix() * kernel) * kernel.adjoint();
    let off = Hermitian::hermitize((&cross + cross.adjoint()) * c64(-1.0, 0.0));
    let blocks: Vec<(f64, f64, f64)> = ops
        .iter()
        .map(|op| {
            let op = op + &off;
            let a = op.congruence(&support.adjoint());
            let c = op.congruence(&kernel.adjoint());
            let b = support.adjoint() * op.matrix() * kernel;
            (a.min_eigenvalue(), b.norm_squared(), c.min_eigenvalue())
        })
        .collect();
    let eps = LIFT_MARGIN + blocks.iter().fold(0.0_f64, |m, &(a, _, _)| m.max(-a));
    let lambda = blocks
        .iter()
        .map(|&(a, b2, c)| b2 / (a + eps) - c)
        .fold(0.0_f64, f64::max)
        + LIFT_MARGIN;
    let p = Hermitian::hermitize(support * support.adjoint());
    let q = Hermitian::hermitize(kernel * kernel.adjoint());
    &(&(p * eps) + &(q * lambda)) + &off
}

type Supports = Vec<Vec<Option<(CMatrix, CMatrix)>>>;

/// Fails when lifting moved the certificate objective away from the solver value.
fn check_lift(certificate: &DualCertificate, solver_value: f64, what: &str) -> Result<()> {
    if (certificate.objective - solver_value).abs() > LIFT_TOLERANCE * solver_value.abs().max(1.0) {
        return Err(Error::Solver { status: crate::SolveStatus::NumericalFailure, context: format!("{what} (certificate lift)") });
    }
    Ok(())
}

/// Extends a certificate that is only valid on the supports of the side
/// operators to the full space by shifting `X^{a|x}` on each kernel.
fn lift_guessing_certificate(cert: &mut DualCertificate, supports: &Supports, weight: &Hermitian) {
    for (x, row) in supports.iter().enumerate() {
        for (a, split) in row.iter().enumerate() {
            if let Some((support, kernel)) = split {
                let shift = lift_shift(&cert.guessing_ops(x, a, weight), support, kernel);
                cert.x_ops[x][a] = &cert.x_ops[x][a] + &shift;
            }
        }
    }
}

fn supports_of(side: &[Vec<Hermitian>]) -> Supports {
    side.iter().map(|row| row.iter().map(split_support).collect()).collect()
}

fn relative_gap(primal: f64, dual: f64) -> f64 {
    (primal - dual).abs() / primal.abs().max(1.0)
}

fn elements_of(pmd: &Pmd) -> Vec<Vec<Hermitian>> {
    pmd.settings().iter().map(|s| s.elements().to_vec()).collect()
}

/// The shared guessing program: maximize `Σ_e Tr(W O^{e e|x*})` subject to
/// `Σ_e O^{a e|x} = side^{a|x}` and `Σ_a O^{a e|x} = Σ_a O^{a e|x*}`.
fn solve_guessing(side: &[Vec<Hermitian>], weight: &Hermitian, x_star: usize, what: &str) -> Result<(f64, f64, Family3, DualCertificate)> {
    let dim = weight.dim();
    let settings = side.len();
    let outcomes = side[0].len();
    let supports = supports_of(side);
    let mut prog = HermitianProgram::new(Sense::Maximize);
    let ops: Vec<Vec<Vec<Var>>> = (0..settings)
        .map(|x| {
            (0..outcomes)
                .map(|a| (0..outcomes).map(|_| psd_within(&mut prog, dim, &supports[x][a])).collect())
                .collect()
        })
        .collect();
    for e in 0..outcomes {
        prog.objective_trace(ops[x_star][e][e], weight, 1.0);
    }
    let c1: Vec<Vec<Constraint>> = (0..settings)
        .map(|x| {
            (0..outcomes)
                .map(|a| {
                    let terms: Vec<(Var, f64)> = ops[x][a].iter().map(|&v| (v, 1.0)).collect();
                    prog.add_matrix_eq(&terms, &side[x][a])
                })
                .collect()
        })
        .collect();
    let zero = Hermitian::zeros(dim);
    let c2: Vec<Option<Vec<Constraint>>> = (0..settings)
        .map(|x| {
            (x != x_star).then(|| {
                (0..outcomes)
                    .map(|e| {
                        let mut terms: Vec<(Var, f64)> = (0..outcomes).map(|a| (ops[x][a][e], 1.0)).collect();
                        terms.extend((0..outcomes).map(|a| (ops[x_star][a][e], -1.0)));
                        prog.add_matrix_eq(&terms, &zero)
                    })
                    .collect()
            })
        })
        .collect();
    let sol = prog.solve()?.require_optimal(what)?;
    let values = extract3(&sol, &ops);
    let x_ops: Family2 = c1.iter().map(|row| row.iter().map(|&c| sol.matrix_dual(c).clone()).collect()).collect();
    let y_ops: Family2 = c2
        .iter()
        .map(|row| match row {
            Some(cs) => cs.iter().map(|&c| sol.matrix_dual(c) * -1.0).collect(),
            None => vec![Hermitian::zeros(dim); outcomes],
        })
        .collect();
    let mut certificate = DualCertificate { target: x_star, x_ops, y_ops, z_ops: None, r_ops: None, objective: 0.0 };
    lift_guessing_certificate(&mut certificate, &supports, weight);
    certificate.objective = pairing(&certificate.x_ops, side);
    check_lift(&certificate, sol.dual_objective, what)?;
    Ok((sol.primal_objective, sol.dual_objective, values, certificate))
}

fn psd_within(prog: &mut HermitianProgram, dim: usize, support: &Option<(CMatrix, CMatrix)>) -> Var {
    match support {
        Some((v, _)) => prog.psd_on(v),
        None => prog.psd(dim),
    }
}

fn extract3(sol: &HermitianSolution, vars: &[Vec<Vec<Var>>]) -> Family3 {
    vars.iter()
        .map(|row| row.iter().map(|r| r.iter().map(|&v| sol.matrix(v).clone()).collect()).collect())
        .collect()
}

fn extract2(sol: &HermitianSolution, vars: &[Vec<Var>]) -> Family2 {
    vars.iter().map(|r| r.iter().map(|&v| sol.matrix(v).clone()).collect()).collect()
}

/// The dual guessing program assembled directly: minimize `Σ Tr(X^{a|x} side^{a|x})`
/// over free Hermitian `X`, `Y` with the operator inequalities as PSD slacks.
fn solve_guessing_dual(side: &[Vec<Hermitian>], weight: &Hermitian, x_star: usize, what: &str) -> Result<(f64, DualCertificate)> {
    let dim = weight.dim();
    let settings = side.len();
    let outcomes = side[0].len();
    let mut prog = HermitianProgram::new(Sense::Minimize);
    let xs: Vec<Vec<Var>> = (0..settings).map(|_| (0..outcomes).map(|_| prog.free_hermitian(dim)).collect()).collect();
    let ys: Vec<Option<Vec<Var>>> = (0..settings)
        .map(|x| (x != x_star).then(|| (0..outcomes).map(|_| prog.free_hermitian(dim)).collect()))
        .collect();
    for x in 0..settings {
        for a in 0..outcomes {
            prog.objective_trace(xs[x][a], &side[x][a], 1.0);
        }
    }
    let supports = supports_of(side);
    let zero = Hermitian::zeros(dim);
    for x in 0..settings {
        for a in 0..outcomes {
            for e in 0..outcomes {
                let slack = psd_within(&mut prog, dim, &supports[x][a]);
                let mut terms = vec![(xs[x][a], 1.0), (slack, -1.0)];
                if let Some(y) = &ys[x] {
                    terms.push((y[e], -1.0));
                } else {
                    terms.extend(ys.iter().flatten().map(|y| (y[e], 1.0)));
                }
                let rhs = if x == x_star && a == e { weight } else { &zero };
                match &supports[x][a] {
                    Some((v, _)) => prog.add_compressed_eq(&terms, v, &rhs.congruence(&v.adjoint())),
                    None => prog.add_matrix_eq(&terms, rhs),
                };
            }
        }
    }
    let sol = prog.solve()?.require_optimal(what)?;
    let x_ops = extract2(&sol, &xs);
    let y_ops = ys
        .iter()
        .map(|row| match row {
            Some(vars) => vars.iter().map(|&v| sol.matrix(v).clone()).collect(),
            None => vec![Hermitian::zeros(dim); outcomes],
        })
        .collect();
    let mut certificate = DualCertificate { target: x_star, x_ops, y_ops, z_ops: None, r_ops: None, objective: 0.0 };
    lift_guessing_certificate(&mut certificate, &supports, weight);
    certificate.objective = pairing(&certificate.x_ops, side);
    check_lift(&certificate, sol.primal_objective, what)?;
    Ok((sol.primal_objective, certificate))
}

/// Eve's optimal probability of guessing the outcome of setting `x_star`
/// from the assemblage.
pub fn guessing_probability_assemblage(assemblage: &Assemblage, x_star: usize) -> Result<AssemblageGuess> {
    assemblage.validate().into_result("assemblage")?;
    assemblage.check_target(x_star)?;
    let (primal, dual, tau, certificate) = solve_guessing(
        assemblage.members(),
        &Hermitian::identity(assemblage.dim_b()),
        x_star,
        "assemblage guessing probability",
    )?;
    Ok(Guess {
        p: primal.max(dual),
        primal,
        dual,
        gap: relative_gap(primal, dual),
        strategy: EveAssemblageStrategy { target: x_star, tau },
        certificate,
    })
}

/// Solves the dual of the assemblage guessing program as a program of its own.
pub fn guessing_probability_assemblage_dual(assemblage: &Assemblage, x_star: usize) -> Result<(f64, DualCertificate)> {
    assemblage.validate().into_result("assemblage")?;
    assemblage.check_target(x_star)?;
    solve_guessing_dual(
        assemblage.members(),
        &Hermitian::identity(assemblage.dim_b()),
        x_star,
        "assemblage guessing dual",
    )
}

fn check_local_state(pmd: &Pmd, rho_a: &DensityOperator) -> Result<()> {
    pmd.validate().into_result("PMD")?;
    if rho_a.dim() != pmd.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has dimension {}, device has dimension {}",
            rho_a.dim(),
            pmd.dim()
        )));
    }
    Ok(())
}

/// Guessing probability for a device measured on the local state `rho_a`.
pub fn guessing_probability_pmd(pmd: &Pmd, rho_a: &DensityOperator, x_star: usize) -> Result<PmdGuess> {
    check_local_state(pmd, rho_a)?;
    pmd.check_target(x_star)?;
    let (primal, dual, g, certificate) =
        solve_guessing(&elements_of(pmd), rho_a.op(), x_star, "device guessing probability")?;
    Ok(Guess {
        p: primal.max(dual),
        primal,
        dual,
        gap: relative_gap(primal, dual),
        strategy: EvePmdStrategy { target: x_star, g },
        certificate,
    })
}

/// Solves the dual of the device guessing program as a program of its own.
pub fn guessing_probability_pmd_dual(pmd: &Pmd, rho_a: &DensityOperator, x_star: usize) -> Result<(f64, DualCertificate)> {
    check_local_state(pmd, rho_a)?;
    pmd.check_target(x_star)?;
    solve_guessing_dual(&elements_of(pmd), rho_a.op(), x_star, "device guessing dual")
}

/// Multipliers of the slack feasibility program, indexed like its two
/// marginal equalities: `first[x][a]` for `Σ_{a*} O^{a a*|x}` and
/// `second[x][a*]` for `Σ_a O^{a a*|x}`; target rows are empty.
#[derive(Clone, Debug)]
pub struct FeasibilityCertificate {
    pub target: usize,
    pub first: Family2,
    pub second: Family2,
    /// Optimal slack `t*`; positive when the joint family does not exist.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub enum Verdict<W> {
    Feasible { witness: W, margin: f64 },
    Infeasible(FeasibilityCertificate),
}

pub type Compatibility = Verdict<StarWitness>;
pub type Unsteerability = Verdict<UnsteerableDecomposition>;

impl<W> Verdict<W> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible { .. })
    }

    /// Same as [`Verdict::is_feasible`], named for device verdicts.
    pub fn compatible(&self) -> bool {
        self.is_feasible()
    }

    /// Same as [`Verdict::is_feasible`], named for assemblage verdicts.
    pub fn unsteerable(&self) -> bool {
        self.is_feasible()
    }

    pub fn witness(&self) -> Option<&W> {
        match self {
            Verdict::Feasible { witness, .. } => Some(witness),
            Verdict::Infeasible(_) => None,
        }
    }

    /// Optimal slack `t*` of the feasibility program.
    pub fn margin(&self) -> f64 {
        match self {
            Verdict::Feasible { margin, .. } => *margin,
            Verdict::Infeasible(cert) => cert.margin,
        }
    }
}

/// Minimizes `t` such that `O^{a a*|x} + t·1 ⪰ 0` reproduce both marginals;
/// the joint family exists iff `t* ≤ 0`.
fn solve_joint(side: &[Vec<Hermitian>], x_star: usize, what: &str) -> Result<Verdict<JointFamily>> {
    let settings = side.len();
    let outcomes = side[0].len();
    let dim = side[0][0].dim();
    if settings == 1 {
        let family = JointFamily::new(x_star, vec![None])?;
        return Ok(Verdict::Feasible { witness: family, margin: f64::NEG_INFINITY });
    }
    let mut prog = HermitianProgram::new(Sense::Minimize);
    let t = prog.free_scalar();
    prog.objective_scalar(t, 1.0);
    let shift = -(outcomes as f64);
    let mut ops: Vec<Option<Vec<Vec<Var>>>> = Vec::with_capacity(settings);
    let mut first: Vec<Option<Vec<Constraint>>> = Vec::with_capacity(settings);
    let mut second: Vec<Option<Vec<Constraint>>> = Vec::with_capacity(settings);
    for x in 0..settings {
        if x == x_star {
            ops.push(None);
            first.push(None);
            second.push(None);
            continue;
        }
        let p: Vec<Vec<Var>> = (0..outcomes).map(|_| (0..outcomes).map(|_| prog.psd(dim)).collect()).collect();
        let c_first = (0..outcomes)
            .map(|a| {
                let mut terms: Vec<(Var, f64)> = p[a].iter().map(|&v| (v, 1.0)).collect();
                terms.push((t, shift));
                prog.add_matrix_eq(&terms, &side[x][a])
            })
            .collect();
        let c_second = (0..outcomes)
            .map(|b| {
                let mut terms: Vec<(Var, f64)> = (0..outcomes).map(|a| (p[a][b], 1.0)).collect();
                terms.push((t, shift));
                prog.add_matrix_eq(&terms, &side[x_star][b])
            })
            .collect();
        ops.push(Some(p));
        first.push(Some(c_first));
        second.push(Some(c_second));
    }
    let sol = prog.solve()?.require_optimal(what)?;
    let margin = sol.scalar(t);
    if margin <= FEASIBILITY_THRESHOLD {
        let shift_op = Hermitian::identity(dim) * margin;
        let entries = ops
            .iter()
            .map(|row| {
                row.as_ref().map(|p| {
                    p.iter().map(|r| r.iter().map(|&v| sol.matrix(v) - &shift_op).collect()).collect()
                })
            })
            .collect();
        Ok(Verdict::Feasible { witness: JointFamily::new(x_star, entries)?, margin })
    } else {
        let duals = |cs: &[Option<Vec<Constraint>>]| -> Family2 {
            cs.iter()
                .map(|row| match row {
                    Some(cs) => cs.iter().map(|&c| sol.matrix_dual(c).clone()).collect(),
                    None => Vec::new(),
                })
                .collect()
        };
        Ok(Verdict::Infeasible(FeasibilityCertificate {
            target: x_star,
            first: duals(&first),
            second: duals(&second),
            margin,
        }))
    }
}

fn map_verdict<W>(v: Verdict<JointFamily>, wrap: impl FnOnce(JointFamily) -> W) -> Verdict<W> {
    match v {
        Verdict::Feasible { witness, margin } => Verdict::Feasible { witness: wrap(witness), margin },
        Verdict::Infeasible(cert) => Verdict::Infeasible(cert),
    }
}

/// Decides whether the device is star-compatible with respect to `x_star`.
pub fn is_star_compatible(pmd: &Pmd, x_star: usize) -> Result<Compatibility> {
    pmd.validate().into_result("PMD")?;
    pmd.check_target(x_star)?;
    let verdict = solve_joint(&elements_of(pmd), x_star, "star-compatibility")?;
    Ok(map_verdict(verdict, StarWitness))
}

/// Decides whether the assemblage is star-unsteerable with respect to `x_star`.
pub fn is_star_unsteerable(assemblage: &Assemblage, x_star: usize) -> Result<Unsteerability> {
    assemblage.validate().into_result("assemblage")?;
    assemblage.check_target(x_star)?;
    let verdict = solve_joint(assemblage.members(), x_star, "star-unsteerability")?;
    Ok(map_verdict(verdict, UnsteerableDecomposition))
}

/// `M^{a|x} = (1 − w) F^{a|x} + w E^{a|x}` with `F` star-compatible.
#[derive(Clone, Debug)]
pub struct WeightDecomposition {
    pub w: f64,
    pub compat_part: Pmd,
    pub noise_part: Pmd,
    pub witness: StarWitness,
    /// Set when `1 − w` vanished; `compat_part` is then a placeholder.
    pub degenerate_compat: bool,
}

impl WeightDecomposition {
    /// Largest entrywise deviation of `(1 − w) F + w E` from `pmd`.
    pub fn reconstruction_error(&self, pmd: &Pmd) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..pmd.setting_count() {
            for a in 0..pmd.outcome_count() {
                let rebuilt = &(self.compat_part.element(x, a) * (1.0 - self.w)) + &(self.noise_part.element(x, a) * self.w);
                worst = worst.max((&rebuilt - pmd.element(x, a)).max_abs_entry());
            }
        }
        worst
    }
}

#[derive(Clone, Debug)]
pub struct WeightResult {
    pub w: f64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub decomposition: WeightDecomposition,
    pub certificate: DualCertificate,
}

fn uniform_povm(dim: usize, outcomes: usize) -> Povm {
    let element = Hermitian::identity(dim) * (1.0 / outcomes as f64);
    Povm::new(vec![element; outcomes]).expect("non-empty")
}

/// Star-incompatibility weight of the device with respect to `x_star`,
/// computed as `1 − s*` from the program that maximizes the scale `s` of a
/// star-compatible part.
pub fn star_incompatibility_weight(pmd: &Pmd, x_star: usize) -> Result<WeightResult> {
    pmd.validate().into_result("PMD")?;
    pmd.check_target(x_star)?;
    let dim = pmd.dim();
    let settings = pmd.setting_count();
    let outcomes = pmd.outcome_count();
    let mut prog = HermitianProgram::new(Sense::Maximize);
    let s = prog.free_scalar();
    prog.objective_scalar(s, 1.0);
    let supports = supports_of(&elements_of(pmd));
    let g: Vec<Vec<Vec<Var>>> = (0..settings)
        .map(|x| {
            (0..outcomes)
                .map(|a| (0..outcomes).map(|_| psd_within(&mut prog, dim, &supports[x][a])).collect())
                .collect()
        })
        .collect();
    let slack: Vec<Vec<Var>> = (0..settings)
        .map(|x| (0..outcomes).map(|a| psd_within(&mut prog, dim, &supports[x][a])).collect())
        .collect();
    let zero = Hermitian::zeros(dim);
    let c1: Vec<Vec<Constraint>> = (0..settings)
        .map(|x| {
            (0..outcomes)
                .map(|a| {
                    let mut terms: Vec<(Var, f64)> = g[x][a].iter().map(|&v| (v, 1.0)).collect();
                    terms.push((slack[x][a], 1.0));
                    prog.add_matrix_eq(&terms, pmd.element(x, a))
                })
                .collect()
        })
        .collect();
    let c2: Vec<Vec<Constraint>> = (0..settings)
        .map(|x| {
            (0..outcomes)
                .map(|e| {
                    let mut terms: Vec<(Var, f64)> = (0..outcomes).map(|a| (g[x][a][e], 1.0)).collect();
                    terms.extend((0..outcomes).map(|e2| (g[x_star][e][e2], -1.0)));
                    prog.add_matrix_eq(&terms, &zero)
                })
                .collect()
        })
        .collect();
    let c3: Vec<Constraint> = (0..settings)
        .map(|x| {
            let mut terms: Vec<(Var, f64)> = g[x].iter().flatten().map(|&v| (v, 1.0)).collect();
            terms.push((s, -1.0));
            prog.add_matrix_eq(&terms, &zero)
        })
        .collect();
    let sol = prog.solve()?.require_optimal("star-incompatibility weight")?;
    let s_value = sol.scalar(s);
    let g_values = extract3(&sol, &g);
    let f_tilde: Family2 = g_values.iter().map(|row| row.iter().map(|r| sum_hermitian(dim, r)).collect()).collect();

    let degenerate_compat = s_value <= SCALE_CUTOFF;
    let compat_part = if degenerate_compat {
        Pmd::new(vec![uniform_povm(dim, outcomes); settings])?
    } else {
        Pmd::from_elements(f_tilde.iter().map(|row| row.iter().map(|f| f * (1.0 / s_value)).collect()).collect())?
    };
    let noise_part = if 1.0 - s_value <= SCALE_CUTOFF {
        Pmd::new(vec![uniform_povm(dim, outcomes); settings])?
    } else {
        let scale = 1.0 / (1.0 - s_value);
        Pmd::from_elements(
            (0..settings)
                .map(|x| (0..outcomes).map(|a| &(pmd.element(x, a) - &f_tilde[x][a]) * scale).collect())
                .collect(),
        )?
    };
    let witness_rows = (0..settings)
        .map(|x| {
            (x != x_star).then(|| {
                if degenerate_compat {
                    let share = Hermitian::identity(dim) * (1.0 / (outcomes * outcomes) as f64);
                    vec![vec![share; outcomes]; outcomes]
                } else {
                    g_values[x].iter().map(|r| r.iter().map(|op| op * (1.0 / s_value)).collect()).collect()
                }
            })
        })
        .collect();
    let witness = StarWitness(JointFamily::new(x_star, witness_rows)?);

    let r_ops: Family2 = c1.iter().map(|row| row.iter().map(|&c| sol.matrix_dual(c).clone()).collect()).collect();
    let y_ops: Family2 = c2.iter().map(|row| row.iter().map(|&c| sol.matrix_dual(c).clone()).collect()).collect();
    let y3: Vec<Hermitian> = c3.iter().map(|&c| sol.matrix_dual(c).clone()).collect();
    let z_ops: Vec<Hermitian> = y3.iter().map(|y| y * -1.0).collect();
    let x_ops: Family2 = (0..settings)
        .map(|x| {
            (0..outcomes)
                .map(|a| {
                    let mut op = &r_ops[x][a] + &y3[x];
                    if x == x_star {
                        op = &op - &sum_hermitian(dim, y_ops.iter().map(|y| &y[a]));
                    }
                    op
                })
                .collect()
        })
        .collect();
    let mut certificate =
        DualCertificate { target: x_star, x_ops, y_ops, z_ops: Some(z_ops), r_ops: Some(r_ops), objective: 0.0 };
    lift_weight_certificate(&mut certificate, &supports);
    certificate.objective = pairing(certificate.r_ops.as_ref().expect("set above"), &elements_of(pmd));
    check_lift(&certificate, sol.dual_objective, "star-incompatibility weight")?;
    let w = (1.0 - s_value).clamp(0.0, 1.0);
    Ok(WeightResult {
        w,
        primal: sol.primal_objective,
        dual: sol.dual_objective,
        gap: relative_gap(sol.primal_objective, sol.dual_objective),
        decomposition: WeightDecomposition { w, compat_part, noise_part, witness, degenerate_compat },
        certificate,
    })
}

/// The dual of the weight program assembled directly. Returns the optimal
/// scale `s*` (so the weight is `1 − s*`) and the certificate.
pub fn star_incompatibility_weight_dual(pmd: &Pmd, x_star: usize) -> Result<(f64, DualCertificate)> {
    pmd.validate().into_result("PMD")?;
    pmd.check_target(x_star)?;
    let dim = pmd.dim();
    let settings = pmd.setting_count();
    let outcomes = pmd.outcome_count();
    let supports = supports_of(&elements_of(pmd));
    let mut prog = HermitianProgram::new(Sense::Minimize);
    let r: Vec<Vec<Var>> = (0..settings)
        .map(|x| (0..outcomes).map(|a| psd_within(&mut prog, dim, &supports[x][a])).collect())
        .collect();
    let xs: Vec<Vec<Var>> = (0..settings).map(|_| (0..outcomes).map(|_| prog.free_hermitian(dim)).collect()).collect();
    let ys: Vec<Vec<Var>> = (0..settings).map(|_| (0..outcomes).map(|_| prog.free_hermitian(dim)).collect()).collect();
    let zs: Vec<Var> = (0..settings).map(|_| prog.free_hermitian(dim)).collect();
    for x in 0..settings {
        for a in 0..outcomes {
            prog.objective_trace(r[x][a], pmd.element(x, a), 1.0);
        }
    }
    let z_terms: Vec<(Var, f64)> = zs.iter().map(|&z| (z, 1.0)).collect();
    prog.add_scalar_eq(&z_terms, 1.0);
    let zero = Hermitian::zeros(dim);
    let framed_eq = |prog: &mut HermitianProgram, terms: &[(Var, f64)], split: &Option<(CMatrix, CMatrix)>| match split {
        Some((v, _)) => prog.add_compressed_eq(terms, v, &Hermitian::zeros(v.ncols())),
        None => prog.add_matrix_eq(terms, &zero),
    };
    for x in 0..settings {
        for a in 0..outcomes {
            let split = &supports[x][a];
            let mut terms = vec![(xs[x][a], 1.0), (zs[x], 1.0), (r[x][a], -1.0)];
            if x == x_star {
                terms.extend(ys.iter().map(|y| (y[a], 1.0)));
            }
            framed_eq(&mut prog, &terms, split);
            for e in 0..outcomes {
                let slack = psd_within(&mut prog, dim, split);
                framed_eq(&mut prog, &[(xs[x][a], 1.0), (ys[x][e], 1.0), (slack, -1.0)], split);
            }
        }
    }
    let sol = prog.solve()?.require_optimal("star-incompatibility weight dual")?;
    let objective = sol.primal_objective;
    let x_ops = extract2(&sol, &xs);
    let y_ops = extract2(&sol, &ys);
    let z_ops: Vec<Hermitian> = zs.iter().map(|&z| sol.matrix(z).clone()).collect();
    let r_ops = weight_r_ops(&x_ops, &y_ops, &z_ops, x_star);
    let mut certificate =
        DualCertificate { target: x_star, x_ops, y_ops, z_ops: Some(z_ops), r_ops: Some(r_ops), objective: 0.0 };
    lift_weight_certificate(&mut certificate, &supports);
    certificate.objective = pairing(certificate.r_ops.as_ref().expect("set above"), &elements_of(pmd));
    check_lift(&certificate, objective, "star-incompatibility weight dual")?;
    Ok((objective, certificate))
}

/// `R^{a|x} = X^{a|x} + Z^x + δ_{x x*} Σ_{x'} Y^{a|x'}`.
fn weight_r_ops(x_ops: &Family2, y_ops: &Family2, z_ops: &[Hermitian], x_star: usize) -> Family2 {
    let dim = z_ops[0].dim();
    x_ops
        .iter()
        .enumerate()
        .map(|(x, row)| {
            row.iter()
                .enumerate()
                .map(|(a, xa)| {
                    let op = xa + &z_ops[x];
                    if x == x_star {
                        &op + &sum_hermitian(dim, y_ops.iter().map(|y| &y[a]))
                    } else {
                        op
                    }
                })
                .collect()
        })
        .collect()
}

fn lift_weight_certificate(cert: &mut DualCertificate, supports: &Supports) {
    for (x, row) in supports.iter().enumerate() {
        for (a, split) in row.iter().enumerate() {
            if let Some((support, kernel)) = split {
                let shift = lift_shift(&cert.weight_ops(x, a), support, kernel);
                cert.x_ops[x][a] = &cert.x_ops[x][a] + &shift;
                if let Some(r) = cert.r_ops.as_mut() {
                    r[x][a] = &r[x][a] + &shift;
                }
            }
        }
    }
}

/// Lower bound `|A|/(|A| − 1)·(1 − p)` on the weight implied by a guessing
/// probability `p`.
pub fn weight_lower_bound(p_guess: f64, outcome_count: usize) -> Result<f64> {
    if outcome_count < 2 {
        return Err(Error::InvalidArgument("the bound needs at least two outcomes".into()));
    }
    let floor = 1.0 / outcome_count as f64;
    if !p_guess.is_finite() || p_guess < floor - TOL_CERTIFICATE || p_guess > 1.0 + TOL_CERTIFICATE {
        return Err(Error::InvalidArgument(format!(
            "guessing probability {p_guess} outside [{floor}, 1]"
        )));
    }
    let k = outcome_count as f64;
    Ok((k / (k - 1.0) * (1.0 - p_guess.clamp(floor, 1.0))).max(0.0))
}

/// Turns a star-unsteerable decomposition of the assemblage produced by `pmd`
/// on the full-Schmidt-rank state `psi` into joint measurements for `pmd`.
pub fn witness_from_unsteerable(
    decomp: &UnsteerableDecomposition,
    psi: &PureBipartiteState,
    pmd: &Pmd,
) -> Result<StarWitness> {
    let d = pmd.dim();
    if psi.dim_a() != d || psi.dim_b() != d {
        return Err(Error::DimensionMismatch(format!(
            "state dims ({}, {}) must both equal the device dimension {d}",
            psi.dim_a(),
            psi.dim_b()
        )));
    }
    if decomp.0.setting_count() != pmd.setting_count() {
        return Err(Error::DimensionMismatch("decomposition and device have different setting counts".into()));
    }
    let schmidt = schmidt_decompose(psi);
    if schmidt.rank < d {
        return Err(Error::InvalidArgument(format!(
            "state has Schmidt rank {} below the dimension {d}",
            schmidt.rank
        )));
    }
    let scale = (d as f64).sqrt();
    // D^{-1} in the Schmidt basis, with D = √d · diag(√q) and √q_i the coefficients
    let d_inv = CMatrix::from_fn(d, d, |i, j| {
        if i == j {
            c64(1.0 / (scale * schmidt.coefficients[i]), 0.0)
        } else {
            c64(0.0, 0.0)
        }
    });
    let v = &schmidt.basis_b;
    let u = &schmidt.basis_a;
    let map = |rho: &Hermitian| -> Hermitian {
        let local = (v.adjoint() * rho.matrix() * v).transpose();
        let inner = &d_inv * local * &d_inv;
        Hermitian::hermitize(u * inner * u.adjoint() * c64(d as f64, 0.0))
    };
    let outcomes = pmd.outcome_count();
    let target = decomp.target();
    let entries = (0..pmd.setting_count())
        .map(|x| {
            (x != target).then(|| {
                (0..outcomes)
                    .map(|a| (0..outcomes).map(|b| map(decomp.part(x, a, b))).collect())
                    .collect()
            })
        })
        .collect();
    let witness = StarWitness(JointFamily::new(target, entries)?);
    let report = witness.validate_with(pmd, TOL_CERTIFICATE);
    if !report.is_empty() {
        return Err(Error::Invalid { kind: "transformed witness", report });
    }
    Ok(witness)
}

/// Lifts a device strategy to an assemblage strategy through the shared state:
/// `τ^{a e|x} = Tr_A[(G^{a e|x} ⊗ 1) ρ_AB]`.
pub fn lift_pmd_strategy(strategy: &EvePmdStrategy, state: &DensityOperator) -> Result<EveAssemblageStrategy> {
    let tau = strategy
        .g
        .iter()
        .map(|row| {
            row.iter()
                .map(|r| r.iter().map(|g| conditional_state(g, state)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EveAssemblageStrategy { target: strategy.target, tau })
}

/// Compact summary used by the command-line reports.
#[derive(Clone, Debug, Serialize)]
pub struct CertificateSummary {
    pub dual_objective: f64,
    pub max_dual_violation: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{maximally_entangled, CVector, Keep};
    use crate::quantum::{assemblage_from, assemblage_from_pure, pauli_pmd, random_pmd, random_star_compatible_pmd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z_basis() -> Povm {
        Povm::new(vec![Hermitian::diag(&[1.0, 0.0]), Hermitian::diag(&[0.0, 1.0])]).unwrap()
    }

    #[test]
    fn replicated_settings_give_certainty() {
        let pmd = Pmd::new(vec![z_basis(), z_basis(), z_basis()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = crate::quantum::random_density(4, 4, &mut rng);
        let sigma = assemblage_from(&pmd, &rho).unwrap();
        let guess = guessing_probability_assemblage(&sigma, 0).unwrap();
        assert!((guess.p - 1.0).abs() < 1e-6, "{}", guess.p);
        assert!(guess.strategy.validate_against(&sigma, 1e-7).is_empty());
        assert!(is_star_unsteerable(&sigma, 0).unwrap().unsteerable());
    }

    #[test]
    fn sharp_pauli_on_phi_is_random() {
        let sigma = assemblage_from_pure(&pauli_pmd(1.0).unwrap(), &maximally_entangled(2).unwrap()).unwrap();
        let guess = guessing_probability_assemblage(&sigma, 0).unwrap();
        assert!(guess.p < 1.0 - 1e-3);
        assert!(guess.p >= 0.5 - 1e-7);
        let (dual, cert) = guessing_probability_assemblage_dual(&sigma, 0).unwrap();
        assert!((dual - guess.p).abs() < 1e-6, "{dual} vs {}", guess.p);
        let (viol, obj) = cert.guessing_check(sigma.members(), &Hermitian::identity(2));
        assert!(viol < 1e-7);
        assert!((obj - dual).abs() < 1e-7);
        let (viol, obj) = guess.certificate.guessing_check(sigma.members(), &Hermitian::identity(2));
        assert!(viol < 1e-7, "solver certificate violation {viol}");
        assert!((obj - guess.dual).abs() < 1e-7);
        assert!(!is_star_unsteerable(&sigma, 0).unwrap().unsteerable());
    }

    #[test]
    fn pauli_threshold_verdicts() {
        assert!(is_star_compatible(&pauli_pmd(0.70).unwrap(), 0).unwrap().compatible());
        assert!(!is_star_compatible(&pauli_pmd(0.72).unwrap(), 0).unwrap().compatible());
        let verdict = is_star_compatible(&pauli_pmd(0.5).unwrap(), 0).unwrap();
        let witness = verdict.witness().unwrap();
        assert!(witness.validate(&pauli_pmd(0.5).unwrap()).is_empty());
    }

    #[test]
    fn single_setting_is_compatible() {
        let pmd = Pmd::new(vec![z_basis()]).unwrap();
        assert!(is_star_compatible(&pmd, 0).unwrap().compatible());
        let guess = guessing_probability_pmd(&pmd, &DensityOperator::maximally_mixed(2), 0).unwrap();
        assert!((guess.p - 1.0).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_target_is_rejected() {
        assert!(matches!(is_star_compatible(&pauli_pmd(0.5).unwrap(), 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn device_guessing_and_dual_agree() {
        let pmd = pauli_pmd(1.0).unwrap();
        let rho = DensityOperator::maximally_mixed(2);
        let guess = guessing_probability_pmd(&pmd, &rho, 0).unwrap();
        let (dual, cert) = guessing_probability_pmd_dual(&pmd, &rho, 0).unwrap();
        assert!((guess.p - dual).abs() < 1e-6);
        assert!(guess.p < 1.0 - 1e-3);
        let side = elements_of(&pmd);
        assert!(cert.guessing_check(&side, rho.op()).0 < 1e-7);
        assert!((guess.strategy.objective(&rho) - guess.primal).abs() < 1e-7);
        assert!(guess.strategy.validate_against(&pmd, 1e-7).is_empty());
        let compatible = guessing_probability_pmd(&pauli_pmd(0.5).unwrap(), &rho, 0).unwrap();
        assert!((compatible.p - 1.0).abs() < 1e-6);
    }

    #[test]
    fn weight_values_and_dual() {
        let small = star_incompatibility_weight(&pauli_pmd(0.70).unwrap(), 0).unwrap();
        assert!(small.w <= 1e-6, "{}", small.w);
        let pmd = pauli_pmd(1.0).unwrap();
        let big = star_incompatibility_weight(&pmd, 0).unwrap();
        assert!(big.w > 0.1);
        assert!(big.decomposition.reconstruction_error(&pmd) < 1e-7);
        assert!(big.decomposition.witness.validate_with(&big.decomposition.compat_part, 1e-7).is_empty());
        let (s_dual, cert) = star_incompatibility_weight_dual(&pmd, 0).unwrap();
        assert!((1.0 - s_dual - big.w).abs() < 1e-6);
        let (viol, obj) = cert.weight_check(&pmd);
        assert!(viol < 1e-7 && (obj - s_dual).abs() < 1e-7, "{viol} {obj} {s_dual}");
        let (viol, _) = big.certificate.weight_check(&pmd);
        assert!(viol < 1e-7, "solver weight certificate violation {viol}");
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(weight_lower_bound(1.0, 2).unwrap(), 0.0);
        assert!((weight_lower_bound(0.5, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!((weight_lower_bound(0.8, 2).unwrap() - 0.4).abs() < 1e-15);
        assert!(weight_lower_bound(0.2, 2).is_err());
        assert!(weight_lower_bound(1.1, 2).is_err());
        assert!(weight_lower_bound(0.9, 1).is_err());
    }

    #[test]
    fn witness_transform_on_identical_settings_is_identity() {
        let pmd = Pmd::new(vec![z_basis(), z_basis()]).unwrap();
        let phi = maximally_entangled(2).unwrap();
        let sigma = assemblage_from_pure(&pmd, &phi).unwrap();
        let rows: Vec<Vec<Hermitian>> = (0..2)
            .map(|a| (0..2).map(|b| if a == b { sigma.member(0, a).clone() } else { Hermitian::zeros(2) }).collect())
            .collect();
        let decomp = UnsteerableDecomposition(JointFamily::new(1, vec![Some(rows), None]).unwrap());
        assert!(decomp.validate(&sigma).is_empty());
        let witness = witness_from_unsteerable(&decomp, &phi, &pmd).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let expected = if a == b { pmd.element(0, a).clone() } else { Hermitian::zeros(2) };
                assert!((witness.joint(0, a, b) - &expected).max_abs_entry() < 1e-12);
            }
        }
    }

    #[test]
    fn witness_transform_with_unequal_schmidt_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pmd = random_star_compatible_pmd(2, 3, 2, 1, &mut rng);
        let amps = CVector::from_vec(vec![c64(0.8f64.sqrt(), 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.2f64.sqrt(), 0.0)]);
        let psi = PureBipartiteState::new(2, 2, amps).unwrap();
        let sigma = assemblage_from_pure(&pmd, &psi).unwrap();
        let verdict = is_star_unsteerable(&sigma, 1).unwrap();
        let decomp = verdict.witness().expect("star-compatible source is unsteerable");
        let witness = witness_from_unsteerable(decomp, &psi, &pmd).unwrap();
        assert!(witness.validate_with(&pmd, 1e-7).is_empty());
    }

    #[test]
    fn witness_transform_rejects_low_rank() {
        let pmd = Pmd::new(vec![z_basis(), z_basis()]).unwrap();
        let amps = CVector::from_vec(vec![c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        let psi = PureBipartiteState::new(2, 2, amps).unwrap();
        let sigma = assemblage_from_pure(&pmd, &psi).unwrap();
        let decomp = is_star_unsteerable(&sigma, 1).unwrap().witness().unwrap().clone();
        assert!(witness_from_unsteerable(&decomp, &psi, &pmd).is_err());
    }

    #[test]
    fn lifted_strategy_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pmd = random_pmd(2, 2, 2, &mut rng);
        let rho = crate::quantum::random_density(4, 2, &mut rng);
        let rho_a = rho.reduced(2, Keep::A).unwrap();
        let guess = guessing_probability_pmd(&pmd, &rho_a, 0).unwrap();
        let lifted = lift_pmd_strategy(&guess.strategy, &rho).unwrap();
        let sigma = assemblage_from(&pmd, &rho).unwrap();
        assert!(lifted.validate_against(&sigma, 1e-7).is_empty());
        assert!((lifted.objective() - guess.strategy.objective(&rho_a)).abs() < 1e-9);
        let direct = guessing_probability_assemblage(&sigma, 0).unwrap();
        assert!(direct.p >= guess.p - 1e-6);
    }
}
