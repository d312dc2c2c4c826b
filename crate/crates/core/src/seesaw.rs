//! See-saw minimization of the assemblage guessing probability over shared
//! states for a fixed measurement device.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::certify::guessing_probability_assemblage_dual;
use crate::linalg::{hs_distance, kron, min_eigpair, DensityOperator, Hermitian, PureBipartiteState};
use crate::quantum::{assemblage_from_pure, random_pure_state_with, Pmd};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SeesawConfig {
    /// Objective stall tolerance.
    pub eps_p: f64,
    /// State stall tolerance in Hilbert–Schmidt norm.
    pub eps_rho: f64,
    pub t_max: usize,
    /// Consecutive stalled iterations required to stop.
    pub k_stall: usize,
    pub restarts: usize,
    pub seed: u64,
    pub warm_start: Option<DensityOperator>,
    /// Run restarts on separate threads.
    pub parallel: bool,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        SeesawConfig {
            eps_p: 1e-8,
            eps_rho: 1e-10,
            t_max: 100,
            k_stall: 4,
            restarts: 10,
            seed: 42,
            warm_start: None,
            parallel: false,
        }
    }
}

impl SeesawConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.eps_p) || !positive(self.eps_rho) {
            return Err(Error::InvalidArgument("see-saw tolerances must be positive".into()));
        }
        if self.t_max == 0 || self.k_stall == 0 || self.restarts == 0 {
            return Err(Error::InvalidArgument("t_max, k_stall and restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// One see-saw iteration: the certified guessing probability at the current
/// state and the Hilbert–Schmidt change of the state it produced.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TrajectoryPoint {
    pub p: f64,
    pub state_change: f64,
}

#[derive(Clone, Debug)]
pub struct SeesawResult {
    pub best_state: DensityOperator,
    pub best_p: f64,
    /// Trajectory of the restart that produced `best_p`.
    pub trajectory: Vec<TrajectoryPoint>,
    pub restart_index: usize,
    pub converged: bool,
    pub restarts_used: usize,
    pub restarts_failed: usize,
    pub iterations_total: usize,
}

/// Minimizer of `Tr(H ρ)` with `H = Σ_{x,a} M^{a|x} ⊗ X^{a|x}`, as a pure state
/// on `A ⊗ B` with `B` of the dimension of the dual operators.
pub fn state_step(pmd: &Pmd, dual_x: &[Vec<Hermitian>]) -> Result<PureBipartiteState> {
    if dual_x.len() != pmd.setting_count() || dual_x.iter().any(|row| row.len() != pmd.outcome_count()) {
        return Err(Error::DimensionMismatch("dual operators must be indexed like the device".into()));
    }
    let dim_b = dual_x.first().and_then(|r| r.first()).map_or(0, Hermitian::dim);
    if dim_b == 0 || dual_x.iter().flatten().any(|x| x.dim() != dim_b) {
        return Err(Error::DimensionMismatch("dual operators must share one dimension".into()));
    }
    let (_, v) = min_eigpair(&bound_operator(pmd, dual_x));
    PureBipartiteState::new(pmd.dim(), dim_b, v)
}

/// `H = Σ_{x,a} M^{a|x} ⊗ X^{a|x}`, so that `Tr(H ρ)` bounds the guessing
/// probability at every state `ρ`.
pub fn bound_operator(pmd: &Pmd, dual_x: &[Vec<Hermitian>]) -> Hermitian {
    let dim_b = dual_x[0][0].dim();
    let mut h = Hermitian::zeros(pmd.dim() * dim_b);
    for (x, row) in dual_x.iter().enumerate() {
        for (a, op) in row.iter().enumerate() {
            h = &h + &Hermitian::hermitize(kron(pmd.element(x, a).matrix(), op.matrix()));
        }
    }
    h
}

/// Initial states for one sweep point: the previous best (purified) first,
/// then seeded random pure states.
pub fn sweep_warm_start(
    prev_best: Option<&DensityOperator>,
    dim_a: usize,
    dim_b: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<PureBipartiteState>> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(restarts);
    if let Some(rho) = prev_best {
        if rho.dim() != dim_a * dim_b {
            return Err(Error::DimensionMismatch(format!(
                "warm start has dimension {}, expected {}",
                rho.dim(),
                dim_a * dim_b
            )));
        }
        states.push(rho.dominant_pure_state(dim_a)?);
    }
    while states.len() < restarts {
        states.push(random_pure_state_with(dim_a, dim_b, &mut rng));
    }
    Ok(states)
}

struct Run {
    best_state: PureBipartiteState,
    best_p: f64,
    trajectory: Vec<TrajectoryPoint>,
    converged: bool,
}

fn run_from(pmd: &Pmd, x_star: usize, cfg: &SeesawConfig, start: PureBipartiteState) -> Result<Run> {
    let mut state = start;
    let mut rho_prev = state.density();
    let mut p_prev = f64::INFINITY;
    let mut best: Option<(f64, PureBipartiteState)> = None;
    let mut trajectory = Vec::new();
    let mut stalls = 0;
    let mut converged = false;
    for _ in 0..cfg.t_max {
        let sigma = assemblage_from_pure(pmd, &state)?;
        let (_, cert) = guessing_probability_assemblage_dual(&sigma, x_star)?;
        let p_new = cert.objective;
        if best.as_ref().is_none_or(|(p, _)| p_new < *p) {
            best = Some((p_new, state.clone()));
        }
        // a current state that already minimizes the bound within eps_p is kept
        let h = bound_operator(pmd, &cert.x_ops);
        let (lowest, _) = min_eigpair(&h);
        let next = if h.inner(state.density().op()) - lowest < cfg.eps_p {
            state.clone()
        } else {
            state_step(pmd, &cert.x_ops)?
        };
        let rho_new = next.density();
        let change = hs_distance(rho_new.op(), rho_prev.op());
        trajectory.push(TrajectoryPoint { p: p_new, state_change: change });
        if (p_new - p_prev).abs() < cfg.eps_p && change < cfg.eps_rho {
            stalls += 1;
        } else {
            stalls = 0;
        }
        p_prev = p_new;
        rho_prev = rho_new;
        state = next;
        if stalls >= cfg.k_stall {
            converged = true;
            break;
        }
    }
    let (best_p, best_state) = best.expect("t_max is at least 1");
    Ok(Run { best_state, best_p, trajectory, converged })
}

/// Minimizes the guessing probability over shared pure states, keeping the
/// best certified value over all restarts.
pub fn seesaw_minimize(pmd: &Pmd, x_star: usize, config: &SeesawConfig) -> Result<SeesawResult> {
    pmd.validate().into_result("PMD")?;
    pmd.check_target(x_star)?;
    config.validate()?;
    let d = pmd.dim();
    let starts = sweep_warm_start(config.warm_start.as_ref(), d, d, config.restarts, config.seed)?;
    let runs: Vec<Result<Run>> = if config.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = starts
                .into_iter()
                .map(|s| scope.spawn(move || run_from(pmd, x_star, config, s)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("see-saw worker panicked")).collect()
        })
    } else {
        starts.into_iter().map(|s| run_from(pmd, x_star, config, s)).collect()
    };
    let mut chosen: Option<(usize, Run)> = None;
    let mut failed = 0;
    let mut iterations_total = 0;
    for (index, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                iterations_total += run.trajectory.len();
                if chosen.as_ref().is_none_or(|(_, c)| run.best_p < c.best_p) {
                    chosen = Some((index, run));
                }
            }
            Err(e) if e.is_solver_failure() => failed += 1,
            Err(e) => return Err(e),
        }
    }
    let Some((restart_index, run)) = chosen else {
        return Err(Error::AllRestartsFailed(config.restarts));
    };
    Ok(SeesawResult {
        best_state: run.best_state.density(),
        best_p: run.best_p,
        trajectory: run.trajectory,
        restart_index,
        converged: run.converged,
        restarts_used: config.restarts,
        restarts_failed: failed,
        iterations_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::guessing_probability_assemblage;
    use crate::linalg::maximally_entangled;
    use crate::quantum::{assemblage_from, pauli_pmd, random_density, random_pmd};
    use rand::Rng;

    fn quick(restarts: usize) -> SeesawConfig {
        SeesawConfig { restarts, t_max: 30, ..SeesawConfig::default() }
    }

    #[test]
    fn zero_duals_give_first_basis_state() {
        let pmd = pauli_pmd(0.8).unwrap();
        let zeros = vec![vec![Hermitian::zeros(2); 2]; 3];
        let psi = state_step(&pmd, &zeros).unwrap();
        let amps = psi.amplitudes();
        assert!((amps[0].re - 1.0).abs() < 1e-12);
        assert!(amps.iter().skip(1).all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn selected_duals_pick_b_level_zero() {
        // Σ_a M^{a|0} ⊗ diag(0,1) = 1 ⊗ diag(0,1)
        let pmd = pauli_pmd(0.8).unwrap();
        let mut duals = vec![vec![Hermitian::zeros(2); 2]; 3];
        duals[0] = vec![Hermitian::diag(&[0.0, 1.0]); 2];
        let psi = state_step(&pmd, &duals).unwrap();
        let rho_b = psi.density().reduced(2, crate::linalg::Keep::B).unwrap();
        assert!(rho_b.op().matrix()[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn state_step_minimizes_the_linear_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pmd = random_pmd(2, 2, 2, &mut rng);
        let sigma = assemblage_from_pure(&pmd, &maximally_entangled(2).unwrap()).unwrap();
        let (_, cert) = guessing_probability_assemblage_dual(&sigma, 0).unwrap();
        let psi = state_step(&pmd, &cert.x_ops).unwrap();
        let mut h = Hermitian::zeros(4);
        for x in 0..2 {
            for a in 0..2 {
                h = &h + &Hermitian::hermitize(kron(pmd.element(x, a).matrix(), cert.x_ops[x][a].matrix()));
            }
        }
        let best = h.inner(psi.density().op());
        for _ in 0..1000 {
            let rank = rng.random_range(1..=4);
            let rho = random_density(4, rank, &mut rng);
            assert!(best <= h.inner(rho.op()) + 1e-9);
        }
    }

    #[test]
    fn warm_start_layout() {
        let rho = maximally_entangled(2).unwrap().density();
        let states = sweep_warm_start(Some(&rho), 2, 2, 10, 7).unwrap();
        assert_eq!(states.len(), 10);
        let first = states[0].density();
        assert!(hs_distance(first.op(), rho.op()) < 1e-10);
        assert_eq!(sweep_warm_start(None, 2, 2, 10, 7).unwrap().len(), 10);
        assert_eq!(sweep_warm_start(Some(&rho), 2, 2, 1, 7).unwrap().len(), 1);
        let again = sweep_warm_start(None, 2, 2, 3, 7).unwrap();
        let once = sweep_warm_start(None, 2, 2, 3, 7).unwrap();
        assert_eq!(again[2].amplitudes(), once[2].amplitudes());
        assert!(sweep_warm_start(None, 2, 2, 0, 7).is_err());
    }

    #[test]
    fn compatible_device_stays_at_one() {
        let result = seesaw_minimize(&pauli_pmd(0.5).unwrap(), 0, &quick(2)).unwrap();
        assert!((result.best_p - 1.0).abs() < 1e-6, "{}", result.best_p);
    }

    #[test]
    fn sharp_paulis_do_no_worse_than_phi() {
        let pmd = pauli_pmd(1.0).unwrap();
        let result = seesaw_minimize(&pmd, 0, &quick(3)).unwrap();
        let phi = maximally_entangled(2).unwrap();
        let at_phi = guessing_probability_assemblage(&assemblage_from_pure(&pmd, &phi).unwrap(), 0).unwrap();
        assert!(result.best_p <= at_phi.p + 1e-6);
        let again = guessing_probability_assemblage(&assemblage_from(&pmd, &result.best_state).unwrap(), 0).unwrap();
        assert!((again.p - result.best_p).abs() < 1e-6);
    }

    #[test]
    fn trajectory_descends_and_is_reproducible() {
        let pmd = pauli_pmd(0.85).unwrap();
        let cfg = quick(2);
        let first = seesaw_minimize(&pmd, 0, &cfg).unwrap();
        for pair in first.trajectory.windows(2) {
            assert!(pair[1].p <= pair[0].p + 1e-7);
        }
        assert!(first.best_p < 1.0);
        let second = seesaw_minimize(&pmd, 0, &cfg).unwrap();
        assert!((first.best_p - second.best_p).abs() < 1e-9);
        assert_eq!(first.trajectory.len(), second.trajectory.len());
        let parallel = seesaw_minimize(&pmd, 0, &SeesawConfig { parallel: true, ..cfg }).unwrap();
        assert!((parallel.best_p - first.best_p).abs() < 1e-9);
    }

    #[test]
    fn bad_configuration_is_rejected() {
        let pmd = pauli_pmd(0.8).unwrap();
        let cfg = SeesawConfig { eps_p: 0.0, ..SeesawConfig::default() };
        assert!(matches!(seesaw_minimize(&pmd, 0, &cfg), Err(Error::InvalidArgument(_))));
    }
}
