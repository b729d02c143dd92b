#![allow(dead_code)]

use hybridlab::hilbert::{CMatrix, CVector, DensityMatrix, Operator, PureState};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

pub fn hermitian(dim: usize) -> impl Strategy<Value = Operator> {
    prop::collection::vec(-2.0f64..2.0, 2 * dim * dim).prop_map(move |v| {
        let a = CMatrix::from_fn(dim, dim, |i, j| {
            C64::new(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1])
        });
        Operator::hermitian((&a + a.adjoint()) * C64::from(0.5)).unwrap()
    })
}

pub fn pure_state(dim: usize) -> impl Strategy<Value = PureState> {
    prop::collection::vec(-1.0f64..1.0, 2 * dim)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(move |v| {
            PureState::normalized(CVector::from_fn(dim, |i, _| {
                C64::new(v[2 * i], v[2 * i + 1])
            }))
            .unwrap()
        })
}

pub fn density(dim: usize) -> impl Strategy<Value = DensityMatrix> {
    prop::collection::vec(-1.0f64..1.0, 2 * dim * dim).prop_map(move |v| {
        let a = CMatrix::from_fn(dim, dim, |i, j| {
            C64::new(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1])
        });
        let mut g = &a * a.adjoint() + CMatrix::identity(dim, dim) * C64::from(1e-3);
        let tr = g.trace();
        g /= tr;
        DensityMatrix::new((&g + g.adjoint()) * C64::from(0.5)).unwrap()
    })
}

pub fn unit_vector() -> impl Strategy<Value = [f64; 3]> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-zero", |(a, b, c)| a * a + b * b + c * c > 1e-2)
        .prop_map(|(a, b, c)| {
            let n = (a * a + b * b + c * c).sqrt();
            [a / n, b / n, c / n]
        })
}
