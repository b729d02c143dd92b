mod common;

use common::{density, hermitian, pure_state};
use hybridlab::hilbert::{
    commutator, eigendecompose_density, mixture_to_density, schrodinger_step, MixtureDecomposition,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn commutator_is_antisymmetric((a, b) in (2usize..5).prop_flat_map(|d| (hermitian(d), hermitian(d)))) {
        let ab = commutator(&a, &b).unwrap();
        let ba = commutator(&b, &a).unwrap();
        prop_assert_eq!(ab.entries(), &(-ba.entries()));
    }

    #[test]
    fn eigendecomposition_round_trips(rho in (1usize..7).prop_flat_map(density)) {
        let m = eigendecompose_density(&rho);
        prop_assert!(mixture_to_density(&m).max_entry_difference(&rho) < 1e-10);
        let comps = m.components();
        for i in 0..comps.len() {
            for j in i + 1..comps.len() {
                prop_assert!(comps[i].1.overlap(&comps[j].1).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn mixture_is_permutation_and_merge_invariant(
        (a, b, c) in (pure_state(3), pure_state(3), pure_state(3)),
        w in (0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0),
    ) {
        let s = w.0 + w.1 + w.2;
        let (p, q, r) = (w.0 / s, w.1 / s, w.2 / s);
        let m1 = MixtureDecomposition::new(vec![(p, a.clone()), (q, b.clone()), (r, c.clone())]).unwrap();
        let m2 = MixtureDecomposition::new(vec![(r, c.clone()), (p, a.clone()), (q, b.clone())]).unwrap();
        // Split the first component into two copies of the same state.
        let m3 = MixtureDecomposition::new(vec![(0.5 * p, a.clone()), (q, b.clone()), (0.5 * p, a), (r, c)]).unwrap();
        let d1 = mixture_to_density(&m1);
        prop_assert!(d1.max_entry_difference(&mixture_to_density(&m2)) < 1e-14);
        prop_assert!(d1.max_entry_difference(&mixture_to_density(&m3)) < 1e-14);
    }

    #[test]
    fn schrodinger_step_conserves_energy(
        (h, psi) in (2usize..6).prop_flat_map(|d| (hermitian(d), pure_state(d))),
        dt in 0.01f64..3.0,
        hbar in 0.3f64..2.0,
    ) {
        let e0 = h.expectation(&psi).unwrap().re;
        let out = schrodinger_step(&psi, &h, dt, hbar).unwrap();
        prop_assert!((h.expectation(&out).unwrap().re - e0).abs() < 1e-10);
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    }
}
