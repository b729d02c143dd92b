mod common;

use common::hermitian;
use hybridlab::hilbert::{commutator, Operator};
use hybridlab::hybrid_brackets::{
    aleksandrov_bracket, measure_defects, nogo_identity_defect, HybridObservable,
};
use hybridlab::phase_grid::{Domain, Grid1D};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn domain() -> Domain {
    Domain::new(vec![
        Grid1D::bounded(11, -1.0, 1.0).unwrap(),
        Grid1D::bounded(11, -1.0, 1.0).unwrap(),
    ])
    .unwrap()
}

fn quadruple() -> impl Strategy<Value = [Operator; 4]> {
    (2usize..5).prop_flat_map(|d| [hermitian(d), hermitian(d), hermitian(d), hermitian(d)])
}

fn field(ops: [Operator; 3], c: [f64; 3]) -> HybridObservable {
    HybridObservable::from_fn(&domain(), move |x, k| {
        ops[0]
            .scale_real(c[0] * x[0])
            .add(&ops[1].scale_real(c[1] * k[0] * k[0]))
            .unwrap()
            .add(&ops[2].scale_real((c[2] * x[0] * k[0]).cos()))
            .unwrap()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn nogo_defect_vanishes_for_equal_hbar([a1, b1, a2, b2] in quadruple(), hbar in 0.2f64..3.0) {
        prop_assert!(nogo_identity_defect(&a1, &b1, &a2, &b2, hbar, hbar).unwrap() < 1e-12);
    }

    #[test]
    fn nogo_defect_is_linear_in_inverse_hbar_gap([a1, b1, a2, b2] in quadruple()) {
        let d = |h2: f64| nogo_identity_defect(&a1, &b1, &a2, &b2, 1.0, h2).unwrap();
        let (g1, g2, g3) = ((1.0 - 1.0 / 2.0f64).abs(), (1.0 - 1.0 / 4.0f64).abs(), (1.0 - 1.0 / 0.5f64).abs());
        let (d1, d2, d3) = (d(2.0), d(4.0), d(0.5));
        let scale = d1.max(d2).max(d3).max(1.0);
        prop_assert!((d1 / g1 - d2 / g2).abs() < 1e-10 * scale);
        prop_assert!((d1 / g1 - d3 / g3).abs() < 1e-10 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bracket_is_antisymmetric(
        a in [hermitian(2), hermitian(2), hermitian(2)],
        b in [hermitian(2), hermitian(2), hermitian(2)],
        c in prop::array::uniform3(-1.5f64..1.5),
        hbar in 0.3f64..2.0,
    ) {
        let fa = field(a, c);
        let fb = field(b, [c[2], c[0], c[1]]);
        let r = measure_defects(&fa, &fb, &fa, hbar).unwrap();
        prop_assert!(r.antisymmetry_defect < 1e-12);
    }

    #[test]
    fn constant_operators_reduce_to_commutator(a in hermitian(3), b in hermitian(3), hbar in 0.3f64..2.0) {
        let d = domain();
        let br = aleksandrov_bracket(
            &HybridObservable::constant(&d, &a).unwrap(),
            &HybridObservable::constant(&d, &b).unwrap(),
            hbar,
        )
        .unwrap();
        let want = commutator(&a, &b).unwrap().scale(C64::new(0.0, -1.0 / hbar));
        for m in br.values() {
            prop_assert_eq!(m, want.entries());
        }
    }
}
