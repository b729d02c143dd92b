//! Operator-valued phase-space observables and the Aleksandrov bracket
//! `(A,B) = [A,B]/(i hbar) + {A,B}/2 - {B,A}/2`, with meters for how far it
//! is from a Lie derivation and the two-sector no-go identity.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{commutator, CMatrix, Operator};
use crate::phase_grid::{Domain, GridField, Stencil};

/// Operator-valued function sampled on an `(x, k)` grid.
///
/// The first half of the domain axes are positions, the second half momenta.
/// Observables built with [`HybridObservable::from_fn`] are Hermitian at every
/// point; derived values (products, brackets) need not be.
#[derive(Clone, Debug)]
pub struct HybridObservable {
    domain: Domain,
    dim: usize,
    values: Vec<CMatrix>,
}

impl HybridObservable {
    pub fn from_fn(domain: &Domain, f: impl Fn(&[f64], &[f64]) -> Operator + Sync) -> Result<Self> {
        if !domain.ndim().is_multiple_of(2) {
            return Err(Error::InvalidGrid(
                "phase-space domain needs an even number of axes".into(),
            ));
        }
        let dof = domain.ndim() / 2;
        let ops: Vec<Operator> = (0..domain.len())
            .into_par_iter()
            .map(|i| {
                let c = domain.coords(i);
                f(&c[..dof], &c[dof..])
            })
            .collect();
        let dim = ops[0].dim();
        let mut values = Vec::with_capacity(ops.len());
        for op in ops {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
            if !op.is_hermitian() {
                return Err(Error::NotHermitian {
                    defect: op.sub(&op.dagger())?.max_abs(),
                });
            }
            values.push(op.into_entries());
        }
        Ok(Self {
            domain: domain.clone(),
            dim,
            values,
        })
    }

    /// A classical observable `f(x, k)` times the identity.
    pub fn classical(
        domain: &Domain,
        dim: usize,
        f: impl Fn(&[f64], &[f64]) -> f64 + Sync,
    ) -> Result<Self> {
        Self::from_fn(domain, |x, k| Operator::identity(dim).scale_real(f(x, k)))
    }

    /// A phase-space independent operator.
    pub fn constant(domain: &Domain, op: &Operator) -> Result<Self> {
        Self::from_fn(domain, |_, _| op.clone())
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn at(&self, flat: usize) -> Operator {
        Operator::from_matrix_unchecked(self.values[flat].clone())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch);
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    fn with_values(&self, values: Vec<CMatrix>) -> Self {
        Self {
            domain: self.domain.clone(),
            dim: self.dim,
            values,
        }
    }

    /// Pointwise matrix product `A(x,k) B(x,k)`, not symmetrized.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    /// Entrywise derivative along one axis.
    pub fn derivative(&self, axis: usize, order: usize) -> Result<Self> {
        let grid = self.domain.axis(axis)?;
        let stencil = Stencil::new(grid, order)?;
        let shape = self.domain.shape();
        let mut out = vec![CMatrix::zeros(self.dim, self.dim); self.values.len()];
        for r in 0..self.dim {
            for c in 0..self.dim {
                let entry: Vec<C64> = self.values.iter().map(|m| m[(r, c)]).collect();
                let d = stencil.apply(&entry, &shape, axis);
                for (m, v) in out.iter_mut().zip(d) {
                    m[(r, c)] = v;
                }
            }
        }
        Ok(self.with_values(out))
    }

    /// Entry `(r, c)` as real and imaginary grid fields.
    pub fn entry_fields(&self, r: usize, c: usize) -> (GridField, GridField) {
        let re = self.values.iter().map(|m| m[(r, c)].re).collect();
        let im = self.values.iter().map(|m| m[(r, c)].im).collect();
        (
            GridField::from_parts_unchecked(self.domain.clone(), re),
            GridField::from_parts_unchecked(self.domain.clone(), im),
        )
    }

    /// `max` over grid points of the spectral norm.
    pub fn max_norm(&self) -> f64 {
        self.max_norm_where(|_| true)
    }

    /// Like [`HybridObservable::max_norm`] restricted to points passing `keep`.
    pub fn max_norm_where(&self, keep: impl Fn(usize) -> bool + Sync) -> f64 {
        self.values
            .par_iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, m)| Operator::from_matrix_unchecked(m.clone()).spectral_norm())
            .reduce(|| 0.0, f64::max)
    }

    /// Largest anti-Hermitian part over the grid, `max |A - A^dagger|`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.values
            .iter()
            .map(|m| {
                (m - m.adjoint())
                    .iter()
                    .fold(0.0f64, |a, z| a.max(z.norm()))
            })
            .fold(0.0, f64::max)
    }
}

/// Operator-ordered Poisson bracket `sum_i dA/dx_i dB/dk_i - dA/dk_i dB/dx_i`.
fn operator_poisson(
    derivs_a: &[(HybridObservable, HybridObservable)],
    derivs_b: &[(HybridObservable, HybridObservable)],
) -> Vec<CMatrix> {
    let n = derivs_a[0].0.values.len();
    let dim = derivs_a[0].0.dim;
    (0..n)
        .into_par_iter()
        .map(|p| {
            let mut acc = CMatrix::zeros(dim, dim);
            for ((ax, ak), (bx, bk)) in derivs_a.iter().zip(derivs_b) {
                acc += &ax.values[p] * &bk.values[p] - &ak.values[p] * &bx.values[p];
            }
            acc
        })
        .collect()
}

fn phase_derivatives(a: &HybridObservable) -> Result<Vec<(HybridObservable, HybridObservable)>> {
    let dof = a.domain.ndim() / 2;
    (0..dof)
        .map(|i| Ok((a.derivative(i, 1)?, a.derivative(i + dof, 1)?)))
        .collect()
}

/// Aleksandrov / Boucher-Traschen bracket of two hybrid observables.
///
/// Antisymmetric to the last bit: the commutator and Poisson parts are each
/// formed as exact differences, so `(A,B) + (B,A)` vanishes identically.
pub fn aleksandrov_bracket(
    a: &HybridObservable,
    b: &HybridObservable,
    hbar: f64,
) -> Result<HybridObservable> {
    a.check_compatible(b)?;
    if hbar == 0.0 || !hbar.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "hbar must be non-zero and finite, got {hbar}"
        )));
    }
    let da = phase_derivatives(a)?;
    let db = phase_derivatives(b)?;
    let ab = operator_poisson(&da, &db);
    let ba = operator_poisson(&db, &da);
    let inv_ihbar = C64::new(0.0, -1.0 / hbar);
    let half = C64::new(0.5, 0.0);
    let values = (0..a.values.len())
        .into_par_iter()
        .map(|p| {
            let comm = &a.values[p] * &b.values[p] - &b.values[p] * &a.values[p];
            comm * inv_ihbar + (&ab[p] - &ba[p]) * half
        })
        .collect();
    Ok(a.with_values(values))
}

/// How far the bracket is from an antisymmetric Lie derivation on a triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketDefectReport {
    pub antisymmetry_defect: f64,
    pub leibniz_defect: f64,
    pub jacobi_defect: f64,
}

/// Measures antisymmetry `(A,B)+(B,A)`, Leibniz `(A,BC)-(A,B)C-B(A,C)` and
/// Jacobi `(A,(B,C))+(B,(C,A))+(C,(A,B))` defects as max spectral norms.
///
/// `BC` is the plain pointwise product; for observables from different
/// sectors it coincides with the symmetrized one.
pub fn measure_defects(
    a: &HybridObservable,
    b: &HybridObservable,
    c: &HybridObservable,
    hbar: f64,
) -> Result<BracketDefectReport> {
    a.check_compatible(b)?;
    a.check_compatible(c)?;
    let br = |p: &HybridObservable, q: &HybridObservable| aleksandrov_bracket(p, q, hbar);

    let ab = br(a, b)?;
    let ba = br(b, a)?;
    let antisymmetry_defect = ab.add(&ba)?.max_norm();

    let bc = b.product(c)?;
    let a_bc = br(a, &bc)?;
    let ac = br(a, c)?;
    let leibniz = a_bc.sub(&ab.product(c)?)?.sub(&b.product(&ac)?)?;
    let leibniz_defect = leibniz.max_norm();

    let jac = br(a, &br(b, c)?)?
        .add(&br(b, &br(c, a)?)?)?
        .add(&br(c, &ab)?)?;
    let jacobi_defect = jac.max_norm();

    Ok(BracketDefectReport {
        antisymmetry_defect,
        leibniz_defect,
        jacobi_defect,
    })
}

/// Norm of `(A1,B1)[A2,B2] - [A1,B1](A2,B2)` with sector brackets
/// `[.,.]/(i hbar_1)` and `[.,.]/(i hbar_2)`, sectors joined by tensor product.
///
/// Vanishes when `hbar_1 = hbar_2` or either commutator vanishes; otherwise it
/// equals `|1/hbar_1 - 1/hbar_2| * ||[A1,B1] (x) [A2,B2]||`.
pub fn nogo_identity_defect(
    a1: &Operator,
    b1: &Operator,
    a2: &Operator,
    b2: &Operator,
    hbar1: f64,
    hbar2: f64,
) -> Result<f64> {
    for h in [hbar1, hbar2] {
        if h == 0.0 || !h.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sector Planck constants must be non-zero and finite, got {h}"
            )));
        }
    }
    for op in [a1, b1, a2, b2] {
        if !op.is_hermitian() {
            return Err(Error::NotHermitian {
                defect: op.sub(&op.dagger())?.max_abs(),
            });
        }
    }
    let c1 = commutator(a1, b1)?;
    let c2 = commutator(a2, b2)?;
    let bracket1 = c1.scale(C64::new(0.0, -1.0 / hbar1));
    let bracket2 = c2.scale(C64::new(0.0, -1.0 / hbar2));
    let lhs = bracket1.kron(&c2);
    let rhs = c1.kron(&bracket2);
    Ok(lhs.sub(&rhs)?.spectral_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_grid::{poisson_bracket, Grid1D};

    fn domain() -> Domain {
        Domain::new(vec![
            Grid1D::bounded(13, -1.0, 1.0).unwrap(),
            Grid1D::bounded(13, -1.0, 1.0).unwrap(),
        ])
        .unwrap()
    }

    fn sx() -> Operator {
        Operator::pauli_x()
    }
    fn sy() -> Operator {
        Operator::pauli_y()
    }
    fn sz() -> Operator {
        Operator::pauli_z()
    }

    #[test]
    fn classical_reduction() {
        let d = domain();
        let fa = |x: &[f64], k: &[f64]| x[0] * x[0] * k[0] + 0.5 * k[0];
        let fb = |x: &[f64], k: &[f64]| x[0] * k[0] * k[0] - x[0];
        let a = HybridObservable::classical(&d, 2, fa).unwrap();
        let b = HybridObservable::classical(&d, 2, fb).unwrap();
        let br = aleksandrov_bracket(&a, &b, 1.0).unwrap();
        let pa = GridField::from_fn(&d, |c| fa(&c[..1], &c[1..])).unwrap();
        let pb = GridField::from_fn(&d, |c| fb(&c[..1], &c[1..])).unwrap();
        let pbr = poisson_bracket(&pa, &pb).unwrap();
        for (i, m) in br.values().iter().enumerate() {
            let expect = CMatrix::identity(2, 2) * C64::new(pbr.values()[i], 0.0);
            assert!((m - expect).iter().all(|z| z.norm() < 1e-10));
        }
    }

    #[test]
    fn quantum_reduction() {
        let d = domain();
        let a = HybridObservable::constant(&d, &sx()).unwrap();
        let b = HybridObservable::constant(&d, &sy()).unwrap();
        let hbar = 0.7;
        let br = aleksandrov_bracket(&a, &b, hbar).unwrap();
        let expect = commutator(&sx(), &sy())
            .unwrap()
            .scale(C64::new(0.0, -1.0 / hbar));
        for m in br.values() {
            assert_eq!(m, expect.entries());
        }
    }

    #[test]
    fn mixed_example_gives_sigma_z() {
        let d = domain();
        let a = HybridObservable::from_fn(&d, |x, _| sz().scale_real(x[0])).unwrap();
        let b = HybridObservable::classical(&d, 2, |_, k| k[0]).unwrap();
        let br = aleksandrov_bracket(&a, &b, 1.0).unwrap();
        for m in br.values() {
            assert!((m - sz().entries()).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn antisymmetry_is_exact() {
        let d = domain();
        let a = HybridObservable::from_fn(&d, |x, k| {
            sx().scale_real(x[0] * k[0])
                .add(&sz().scale_real(k[0]))
                .unwrap()
        })
        .unwrap();
        let b = HybridObservable::from_fn(&d, |x, k| {
            sy().scale_real(x[0] * x[0])
                .add(&sx().scale_real(k[0] - x[0]))
                .unwrap()
        })
        .unwrap();
        let s = aleksandrov_bracket(&a, &b, 1.3)
            .unwrap()
            .add(&aleksandrov_bracket(&b, &a, 1.3).unwrap())
            .unwrap();
        assert_eq!(s.max_norm(), 0.0);
    }

    #[test]
    fn defects_vanish_for_pure_sectors() {
        let d = domain();
        let cl = |f: fn(&[f64], &[f64]) -> f64| HybridObservable::classical(&d, 2, f).unwrap();
        let rep = measure_defects(
            &cl(|x, k| x[0] * x[0] + k[0]),
            &cl(|x, k| x[0] * k[0]),
            &cl(|x, k| k[0] * k[0] - x[0]),
            1.0,
        )
        .unwrap();
        assert!(
            rep.antisymmetry_defect < 1e-8 && rep.leibniz_defect < 1e-8 && rep.jacobi_defect < 1e-8,
            "{rep:?}"
        );

        let q = |op: Operator| HybridObservable::constant(&d, &op).unwrap();
        let h = Operator::pauli_dot([0.3, -0.2, 0.9]);
        let rep = measure_defects(&q(sx()), &q(sy().add(&sz()).unwrap()), &q(h), 1.0).unwrap();
        assert!(
            rep.antisymmetry_defect < 1e-12
                && rep.leibniz_defect < 1e-12
                && rep.jacobi_defect < 1e-12,
            "{rep:?}"
        );
    }

    #[test]
    fn spin_counterexample_triple() {
        // (A, BC) = i*I while (A,B)C + B(A,C) = 0; the three Jacobi terms are
        // 2I, -2I and 0.
        let d = domain();
        let a = HybridObservable::from_fn(&d, |x, _| sx().scale_real(x[0])).unwrap();
        let b = HybridObservable::from_fn(&d, |_, k| sy().scale_real(k[0])).unwrap();
        let c = HybridObservable::constant(&d, &sz()).unwrap();
        let rep = measure_defects(&a, &b, &c, 1.0).unwrap();
        assert_eq!(rep.antisymmetry_defect, 0.0);
        assert!((rep.leibniz_defect - 1.0).abs() < 1e-10, "{rep:?}");
        assert!(rep.jacobi_defect < 1e-10, "{rep:?}");
    }

    #[test]
    fn jacobi_counterexample_triple() {
        // C = x k sigma_x: Jacobi sum is sigma_y, Leibniz defect is -x k sigma_y
        let d = domain();
        let a = HybridObservable::from_fn(&d, |x, _| sx().scale_real(x[0])).unwrap();
        let b = HybridObservable::from_fn(&d, |_, k| sy().scale_real(k[0])).unwrap();
        let c = HybridObservable::from_fn(&d, |x, k| sx().scale_real(x[0] * k[0])).unwrap();
        let rep = measure_defects(&a, &b, &c, 1.0).unwrap();
        assert!((rep.jacobi_defect - 1.0).abs() < 1e-10, "{rep:?}");
        assert!((rep.leibniz_defect - 1.0).abs() < 1e-10, "{rep:?}");
    }

    #[test]
    fn nogo_values() {
        let d = nogo_identity_defect(&sx(), &sy(), &sx(), &sy(), 1.0, 2.0).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert!(nogo_identity_defect(&sx(), &sy(), &sx(), &sy(), 1.0, 1.0).unwrap() < 1e-12);
        let id = Operator::identity(2);
        assert!(nogo_identity_defect(&id, &id, &sx(), &sy(), 1.0, 3.0).unwrap() < 1e-15);
    }

    #[test]
    fn nogo_rejects_zero_hbar() {
        assert!(matches!(
            nogo_identity_defect(&sx(), &sy(), &sx(), &sy(), 1.0, 0.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn report_json_field_names() {
        let rep = BracketDefectReport {
            antisymmetry_defect: 0.0,
            leibniz_defect: 1.0,
            jacobi_defect: 0.5,
        };
        let v: serde_json::Value = serde_json::to_value(rep).unwrap();
        assert_eq!(v["leibniz_defect"], 1.0);
        assert_eq!(v["jacobi_defect"], 0.5);
        assert_eq!(v["antisymmetry_defect"], 0.0);
    }
}
