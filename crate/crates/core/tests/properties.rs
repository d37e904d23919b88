use proptest::prelude::*;

use bosefeed::corrdyn::{bec_initial, CorrelationField, ZVector};
use bosefeed::experiments::format_float;
use bosefeed::freeprop::{free_particle_vz, harmonic_vz};
use bosefeed::hilbert::{kick_unitary_signed, position_op, KickSign, LinearResponse, TrapBasis};
use bosefeed::linalg;
use bosefeed::observables::{bec_uncertainty_product_scaled, bec_var_p_scaled};
use bosefeed::oracle::{fock_basis, ManyBodyState};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_floats_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let back: f64 = format_float(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }

    #[test]
    fn harmonic_propagation_is_a_group(t1 in -10.0..10.0f64, t2 in -10.0..10.0f64, omega in 0.1..3.0f64, n in 1usize..50) {
        let a = harmonic_vz(t1, omega, n).unwrap();
        let b = harmonic_vz(t2, omega, n).unwrap();
        let ab = harmonic_vz(t1 + t2, omega, n).unwrap();
        prop_assert!(a.compose(&b).max_abs_diff(&ab) < 1e-9 * (1.0 + omega * n as f64));
        prop_assert!(a.compose(&a.inverse().unwrap()).max_abs_diff(&harmonic_vz(0.0, omega, n).unwrap()) < 1e-9 * (1.0 + omega * n as f64));
    }

    #[test]
    fn free_propagation_is_a_group(t1 in -10.0..10.0f64, t2 in -10.0..10.0f64, n in 1usize..50) {
        let a = free_particle_vz(t1, n).unwrap();
        let b = free_particle_vz(t2, n).unwrap();
        prop_assert!(a.compose(&b).max_abs_diff(&free_particle_vz(t1 + t2, n).unwrap()) < 1e-12);
    }

    #[test]
    fn kicks_are_unitary(a in -20.0..20.0f64, s in -2.0..2.0f64, a0 in -1.0..1.0f64, n in 1usize..20, flipped: bool) {
        let basis = TrapBasis::new(12, 1.0).unwrap();
        let sign = if flipped { KickSign::Flipped } else { KickSign::Contract };
        let u = kick_unitary_signed(a, LinearResponse::new(s, a0), n, &position_op(&basis), sign).unwrap().matrix;
        prop_assert!(linalg::max_abs_diff(&(u.adjoint() * &u), &linalg::identity(12)) < 1e-10);
    }

    #[test]
    fn condensate_field_is_conjugation_symmetric(al in -3.0..3.0f64, be in -3.0..3.0f64, ga in -3.0..3.0f64, n in 1usize..30) {
        let basis = TrapBasis::new(6, 1.0).unwrap();
        let f = bec_initial(n, &basis).unwrap();
        let z = ZVector::new(al, be, ga);
        let m = f.matrix(z).unwrap();
        prop_assert!(linalg::max_abs_diff(&m, &linalg::adjoint(&f.matrix(-z).unwrap())) < 1e-12 * n as f64);
        prop_assert!(linalg::max_abs(&m) <= n as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn random_mixtures_are_states(seed in 0u64..10_000, rank in 1usize..4) {
        let basis = fock_basis(3, 6).unwrap();
        let s = ManyBodyState::random_mixture(&basis, rank, 3, seed);
        prop_assert!((s.trace() - 1.0).abs() < 1e-12);
        prop_assert!(s.min_eigenvalue().unwrap() > -1e-12);
        prop_assert!(s.validate(1e-10).is_ok());
    }

    #[test]
    fn closed_forms_approach_their_limits_from_below(s in 0.5..3.0f64, n in 1usize..500) {
        let v = bec_var_p_scaled(n, s);
        if (n as f64) >= 2.0 * s * s {
            prop_assert!(v < 1.0);
            prop_assert!(bec_var_p_scaled(n + 1, s) >= v);
        }
        prop_assert!(bec_uncertainty_product_scaled(n, s) > 0.0);
    }
}
