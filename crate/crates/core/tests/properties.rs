use num_complex::Complex64 as C64;
use proptest::prelude::*;

use srsync::cumulant::{steady_state, CumulantState};
use srsync::model::ModelParams;
use srsync::oracle::{
    build_liouvillian, default_tau_grid, expectation, two_time_correlation, DecayMode, DensityMatrix, Liouvillian,
    Observable, oracle_steady_state,
};
use srsync::spectrum::gamma_delta;
use srsync::sweep::power_law_fit;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn matrix(n: u64, entries: &[(f64, f64)]) -> Vec<C64> {
    let dim = 1usize << (2 * n);
    (0..dim * dim).map(|k| c(entries[k % entries.len()].0, entries[k % entries.len()].1 * (k as f64 + 0.5).sin())).collect()
}

fn dagger(dim: usize, m: &[C64]) -> Vec<C64> {
    (0..dim * dim).map(|idx| m[(idx % dim) * dim + idx / dim].conj()).collect()
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn apply(l: &Liouvillian, n: u64, rho: &[C64]) -> DensityMatrix {
    DensityMatrix::from_vec(n, l.apply(rho))
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 7..13)
}

fn mode() -> impl Strategy<Value = DecayMode> {
    prop_oneof![Just(DecayMode::Collective), Just(DecayMode::IndependentDecay)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn liouvillian_preserves_trace_and_adjoints(
        n in 1u64..=2, w in 0.0..5.0f64, delta in -4.0..4.0f64, mode in mode(), e in entries(),
    ) {
        let p = ModelParams::new(n, w, delta).unwrap();
        let l = build_liouvillian(&p, mode).unwrap();
        let dim = l.hilbert_dim();
        let x = matrix(n, &e);
        let lx = l.apply(&x);
        let trace: C64 = (0..dim).map(|i| lx[i * dim + i]).sum();
        prop_assert!(trace.norm() < 1e-12, "trace {trace}");
        let lhs = l.apply(&dagger(dim, &x));
        prop_assert!(max_diff(&lhs, &dagger(dim, &lx)) < 1e-12);
    }

    #[test]
    fn assembled_and_matrix_free_actions_agree(n in 1u64..=2, w in 0.0..5.0f64, delta in -4.0..4.0f64, e in entries()) {
        let p = ModelParams::new(n, w, delta).unwrap();
        let l = build_liouvillian(&p, DecayMode::Collective).unwrap();
        let x = matrix(n, &e);
        let mut free = vec![C64::new(0.0, 0.0); x.len()];
        l.apply_matrix_free(&x, &mut free);
        prop_assert!(max_diff(&l.apply(&x), &free) < 1e-12);
    }

    #[test]
    fn relabeling_atoms_inside_an_ensemble_commutes(w in 0.0..5.0f64, delta in -4.0..4.0f64, e in entries()) {
        let p = ModelParams::new(2, w, delta).unwrap();
        let l = build_liouvillian(&p, DecayMode::Collective).unwrap();
        let rho = DensityMatrix::from_vec(2, matrix(2, &e));
        for perm in [[1, 0, 2, 3], [0, 1, 3, 2], [1, 0, 3, 2]] {
            let a = apply(&l, 2, rho.permuted(&perm).as_slice());
            let b = apply(&l, 2, rho.as_slice()).permuted(&perm);
            prop_assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn swapping_ensembles_flips_the_detuning(n in 1u64..=2, w in 0.0..5.0f64, delta in -4.0..4.0f64, e in entries()) {
        let l = build_liouvillian(&ModelParams::new(n, w, delta).unwrap(), DecayMode::Collective).unwrap();
        let flipped = build_liouvillian(&ModelParams::new(n, w, -delta).unwrap(), DecayMode::Collective).unwrap();
        let atoms = 2 * n as usize;
        let swap: Vec<usize> = (0..atoms).map(|k| (k + n as usize) % atoms).collect();
        let rho = DensityMatrix::from_vec(n, matrix(n, &e));
        let a = apply(&flipped, n, rho.permuted(&swap).as_slice());
        let b = apply(&l, n, rho.as_slice()).permuted(&swap);
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn spectrum_depends_on_detuning_squared(n in 1u64..1_000_000, w in 0.0..1e6f64, delta in 0.0..1e6f64, sz in -1.0..1.0f64) {
        let a = gamma_delta(&ModelParams::new(n, w, delta).unwrap(), sz);
        let b = gamma_delta(&ModelParams::new(n, w, -delta).unwrap(), sz);
        prop_assert_eq!(a.gamma, b.gamma);
        prop_assert_eq!(a.delta_mod, b.delta_mod);
        prop_assert_eq!(a.synchronized, b.synchronized);
    }

    #[test]
    fn exact_power_laws_are_recovered(exponent in -2.0..2.0f64, prefactor in 1e-3..1e3f64) {
        let points: Vec<(f64, f64)> = [1e2, 1e3, 1e4, 1e5, 1e6].iter().map(|&x: &f64| (x, prefactor * x.powf(exponent))).collect();
        let fit = power_law_fit(&points, 3).unwrap();
        prop_assert!((fit.exponent - exponent).abs() < 1e-10);
        prop_assert!((fit.prefactor / prefactor - 1.0).abs() < 1e-8);
        prop_assert!(fit.r_squared > 1.0 - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cumulant_steady_state_is_even_in_detuning(n in 2u64..5_000, w_rel in 0.05..1.5f64, d_rel in 0.0..1.5f64) {
        let nf = n as f64;
        let (w, delta) = (w_rel * nf, d_rel * nf);
        let a = steady_state(&ModelParams::new(n, w, delta).unwrap(), 1e-12).unwrap();
        let b = steady_state(&ModelParams::new(n, w, -delta).unwrap(), 1e-12).unwrap();
        prop_assert!((a.state.sz - b.state.sz).abs() < 1e-9, "{:?} vs {:?}", a.state, b.state);
        let conj: CumulantState = b.state.conj();
        prop_assert!(a.state.distance(&conj) < 1e-9);
        prop_assert!(a.state.intra.im.abs() < 1e-12);
    }
}

#[test]
fn regression_starts_at_the_collective_intensity() {
    for (n, w, delta) in [(1, 0.5, 0.25), (2, 1.0, 0.5), (2, 3.0, -1.5)] {
        let p = ModelParams::new(n, w, delta).unwrap();
        let l = build_liouvillian(&p, DecayMode::Collective).unwrap();
        let rho = oracle_steady_state(&l, 1e-10).unwrap();
        let series = two_time_correlation(&rho, &l, &default_tau_grid(&p, 11)).unwrap();
        let intensity = expectation(&rho, Observable::CollectiveIntensity);
        assert!((series.values[0] - intensity).norm() < 1e-10, "{:?} vs {intensity}", series.values[0]);
        // the total-field correlation of opposite detunings is real
        assert!(series.values.iter().all(|v| v.im.abs() < 1e-8 * intensity.norm()));
    }
}

#[test]
fn correlation_is_unchanged_by_detuning_sign() {
    let p = ModelParams::new(2, 2.0, 0.7).unwrap();
    let taus = default_tau_grid(&p, 21);
    let series = |delta: f64| {
        let q = p.with_delta(delta);
        let l = build_liouvillian(&q, DecayMode::Collective).unwrap();
        let rho = oracle_steady_state(&l, 1e-10).unwrap();
        two_time_correlation(&rho, &l, &taus).unwrap().values
    };
    let (a, b) = (series(0.7), series(-0.7));
    assert!(max_diff(&a, &b) < 1e-8);
}
