use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use steercert::certify::{guessing_probability_assemblage, weight_lower_bound};
use steercert::experiments::format_significant;
use steercert::linalg::{c64, kron, min_eigpair, partial_trace, schmidt_decompose, CMatrix, CVector, Keep};
use steercert::quantum::{assemblage_from, pauli_pmd, random_density, random_pmd, random_pure_state};
use steercert::sdp::{embed_hermitian, extract_hermitian};
use steercert::Hermitian;

fn random_complex(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> Hermitian {
    let g = random_complex(d, d, rng);
    Hermitian::new((&g + g.adjoint()) * c64(0.5, 0.0)).unwrap()
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_is_linear(seed in any::<u64>(), d in 1usize..5, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_hermitian(d, &mut rng);
        let b = random_hermitian(d, &mut rng);
        let combined = &(&a * alpha) + &(&b * beta);
        let lhs = embed_hermitian(&combined);
        let rhs = embed_hermitian(&a) * alpha + embed_hermitian(&b) * beta;
        prop_assert!((lhs - rhs).amax() <= 1e-12);
        let back = extract_hermitian(&embed_hermitian(&a)).unwrap();
        prop_assert!((&back - &a).max_abs_entry() <= 1e-12);
    }

    #[test]
    fn partial_trace_of_product(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_complex(da, da, &mut rng);
        let b = random_complex(db, db, &mut rng);
        let traced = partial_trace(&kron(&a, &b), da, db, Keep::B).unwrap();
        let expected = &b * a.trace();
        prop_assert!(max_abs(&(traced - expected)) <= 1e-12);
    }

    #[test]
    fn minimum_eigenvalue_bounds_rayleigh_quotients(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(d, &mut rng);
        let (lambda, v) = min_eigpair(&h);
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        for _ in 0..1000 {
            let u = CVector::from_fn(d, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            let u = &u / c64(u.norm(), 0.0);
            prop_assert!(lambda <= u.dotc(&(h.matrix() * &u)).re + 1e-9);
        }
    }

    #[test]
    fn induced_assemblages_are_valid(seed in any::<u64>(), d in 2usize..4, settings in 1usize..4, outcomes in 2usize..4, rank in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pmd = random_pmd(d, settings, outcomes, &mut rng);
        let rho = random_density(d * d, rank, &mut rng);
        let sigma = assemblage_from(&pmd, &rho).unwrap();
        prop_assert!(sigma.validate().is_empty());
        let rho_b = rho.reduced(d, Keep::B).unwrap();
        for x in 0..settings {
            prop_assert!((&sigma.marginal(x) - rho_b.op()).max_abs_entry() < 1e-12);
        }
    }

    #[test]
    fn phi_marginal_is_maximally_mixed_for_every_eta(eta in 0.0f64..=1.0) {
        let phi = steercert::linalg::maximally_entangled(2).unwrap();
        let sigma = steercert::quantum::assemblage_from_pure(&pauli_pmd(eta).unwrap(), &phi).unwrap();
        prop_assert!((&sigma.reduced_state() - &(Hermitian::identity(2) * 0.5)).max_abs_entry() < 1e-10);
    }

    #[test]
    fn significant_digits_round_trip(v in prop::num::f64::NORMAL) {
        let back: f64 = format_significant(v).parse().unwrap();
        prop_assert!(((back - v) / v).abs() <= 5e-12);
    }

    #[test]
    fn bound_is_monotone_in_p(p in 0.5f64..=1.0, q in 0.5f64..=1.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(weight_lower_bound(lo, 2).unwrap() >= weight_lower_bound(hi, 2).unwrap());
        prop_assert!((0.0..=1.0).contains(&weight_lower_bound(p, 2).unwrap()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn guessing_probability_is_a_certified_probability(seed in any::<u64>(), settings in 1usize..4, outcomes in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pmd = random_pmd(2, settings, outcomes, &mut rng);
        let sigma = assemblage_from(&pmd, &random_density(4, 2, &mut rng)).unwrap();
        let guess = guessing_probability_assemblage(&sigma, 0).unwrap();
        prop_assert!(guess.p >= 1.0 / outcomes as f64 - 1e-7);
        prop_assert!(guess.p <= 1.0 + 1e-6);
        prop_assert!(guess.dual >= guess.primal - 1e-6);
        prop_assert!(guess.strategy.validate_against(&sigma, 1e-7).is_empty());
    }
}

#[test]
fn schmidt_reconstruction_over_small_dimensions() {
    for (da, db) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
        for seed in 0..100 {
            let psi = random_pure_state(da, db, seed);
            let s = schmidt_decompose(&psi);
            let rebuilt = s.reconstruct();
            let overlap = psi.amplitudes().dotc(&rebuilt);
            let phase = overlap / c64(overlap.norm(), 0.0);
            assert!((&rebuilt - psi.amplitudes() * phase).norm() < 1e-10);
            let total: f64 = s.coefficients.iter().map(|c| c * c).sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }
}
