//! Finite-dimensional quantum linear algebra.
//!
//! Operators, pure states, density matrices, explicit mixtures of pure states
//! and exact unitary evolution. All values are immutable after construction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance on `max |A - A^dagger|` for the Hermiticity flag.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on `| ||psi||^2 - 1 |`.
pub const NORM_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted for a density matrix.
pub const POSITIVITY_TOL: f64 = 1e-10;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Square complex matrix with a Hermiticity flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    entries: CMatrix,
    hermitian: bool,
}

impl Operator {
    /// Wraps a square matrix; the Hermiticity flag is computed from the entries.
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "operator dimension must be >= 1".into(),
            ));
        }
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite("operator entries".into()));
        }
        let hermitian = hermitian_defect(&entries) < HERMITIAN_TOL;
        Ok(Self { entries, hermitian })
    }

    /// Like [`Operator::new`] but fails unless the matrix is Hermitian.
    pub fn hermitian(entries: CMatrix) -> Result<Self> {
        let defect = hermitian_defect(&entries);
        let op = Self::new(entries)?;
        if !op.hermitian {
            return Err(Error::NotHermitian { defect });
        }
        Ok(op)
    }

    pub(crate) fn from_matrix_unchecked(entries: CMatrix) -> Self {
        let hermitian = hermitian_defect(&entries) < HERMITIAN_TOL;
        Self { entries, hermitian }
    }

    /// Row-major construction from real pairs, mostly for tests and fixtures.
    pub fn from_rows(rows: &[&[C64]]) -> Result<Self> {
        let n = rows.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, z) in row.iter().enumerate() {
                m[(i, j)] = *z;
            }
        }
        Self::new(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: CMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    pub fn pauli_x() -> Self {
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        Self::from_matrix_unchecked(CMatrix::from_row_slice(2, 2, &[z, o, o, z]))
    }

    pub fn pauli_y() -> Self {
        let z = c(0.0, 0.0);
        Self::from_matrix_unchecked(CMatrix::from_row_slice(2, 2, &[z, -I, I, z]))
    }

    pub fn pauli_z() -> Self {
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        Self::from_matrix_unchecked(CMatrix::from_row_slice(2, 2, &[o, z, z, -o]))
    }

    /// `n.sigma` for an arbitrary real 3-vector.
    pub fn pauli_dot(n: [f64; 3]) -> Self {
        let m = Self::pauli_x().entries * c(n[0], 0.0)
            + Self::pauli_y().entries * c(n[1], 0.0)
            + Self::pauli_z().entries * c(n[2], 0.0);
        Self::from_matrix_unchecked(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dagger(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_matrix_unchecked(&self.entries * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            entries: &self.entries * c(s, 0.0),
            hermitian: self.hermitian,
        }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self::from_matrix_unchecked(&self.entries + &other.entries))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self::from_matrix_unchecked(&self.entries - &other.entries))
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self::from_matrix_unchecked(&self.entries * &other.entries))
    }

    /// Tensor (Kronecker) product `self (x) other`.
    pub fn kron(&self, other: &Self) -> Self {
        Self::from_matrix_unchecked(self.entries.kronecker(&other.entries))
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    /// `<psi|A|psi>`.
    pub fn expectation(&self, psi: &PureState) -> Result<C64> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        Ok(psi.amplitudes.dotc(&(&self.entries * &psi.amplitudes)))
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.hermitian {
            let eig = SymmetricEigen::new(self.entries.clone());
            return eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        self.entries
            .clone()
            .singular_values()
            .iter()
            .fold(0.0f64, |m, v| m.max(*v))
    }

    /// Largest entry modulus, `max |A_ij|`.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    /// Exact propagator `exp(-i H dt / hbar)` via eigendecomposition.
    pub fn propagator(&self, dt: f64, hbar: f64) -> Result<Self> {
        if !self.hermitian {
            return Err(Error::NotHermitian {
                defect: hermitian_defect(&self.entries),
            });
        }
        if hbar <= 0.0 || !hbar.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        let eig = SymmetricEigen::new(self.entries.clone());
        let phases = CVector::from_iterator(
            self.dim(),
            eig.eigenvalues
                .iter()
                .map(|l| C64::from_polar(1.0, -l * dt / hbar)),
        );
        let v = &eig.eigenvectors;
        let u = v * CMatrix::from_diagonal(&phases) * v.adjoint();
        Ok(Self::from_matrix_unchecked(u))
    }
}

/// `AB - BA`. Anti-Hermitian when both inputs are Hermitian; callers divide by `i hbar`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    a.check_dim(b)?;
    let ab = &a.entries * &b.entries;
    let ba = &b.entries * &a.entries;
    Ok(Operator::from_matrix_unchecked(ab - ba))
}

/// Normalized state vector. Global phase is not fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidParameter(
                "state dimension must be >= 1".into(),
            ));
        }
        let norm_sqr = amplitudes.norm_squared();
        if !norm_sqr.is_finite() {
            return Err(Error::NonFinite("state amplitudes".into()));
        }
        if (norm_sqr - 1.0).abs() >= NORM_TOL {
            return Err(Error::NotNormalized { norm_sqr });
        }
        Ok(Self { amplitudes })
    }

    /// Rescales the vector to unit norm.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        Self::new(amplitudes / c(norm, 0.0))
    }

    pub fn from_slice(amps: &[C64]) -> Result<Self> {
        Self::normalized(CVector::from_column_slice(amps))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = c(1.0, 0.0);
        Self { amplitudes: v }
    }

    /// Spin-up eigenstate of `n.sigma` for a unit vector `n`.
    pub fn spin_up(n: [f64; 3]) -> Result<Self> {
        let (theta, phi) = polar_angles(n)?;
        let a = c((theta / 2.0).cos(), 0.0);
        let b = C64::from_polar((theta / 2.0).sin(), phi);
        Ok(Self {
            amplitudes: CVector::from_column_slice(&[a, b]),
        })
    }

    /// Spin-down eigenstate of `n.sigma` for a unit vector `n`.
    pub fn spin_down(n: [f64; 3]) -> Result<Self> {
        let (theta, phi) = polar_angles(n)?;
        let a = -C64::from_polar((theta / 2.0).sin(), -phi);
        let b = c((theta / 2.0).cos(), 0.0);
        Ok(Self {
            amplitudes: CVector::from_column_slice(&[a, b]),
        })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &Self) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// `|<self|other>|`; equals 1 for states equal up to global phase.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.overlap(other).norm()
    }

    pub fn projector(&self) -> CMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    pub fn apply(&self, op: &Operator) -> Result<Self> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                found: self.dim(),
            });
        }
        Ok(Self {
            amplitudes: op.entries() * &self.amplitudes,
        })
    }

    /// Constructs a state without the normalization check; integrators use this
    /// to carry states whose drift they track themselves.
    pub(crate) fn from_vector_unchecked(amplitudes: CVector) -> Self {
        Self { amplitudes }
    }
}

fn polar_angles(n: [f64; 3]) -> Result<(f64, f64)> {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if (len - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "axis must be a unit vector, |n| = {len}"
        )));
    }
    let theta = n[2].clamp(-1.0, 1.0).acos();
    let phi = n[1].atan2(n[0]);
    Ok((theta, phi))
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() == 0 || entries.nrows() != entries.ncols() {
            return Err(Error::InvalidDensity(
                "matrix must be square and non-empty".into(),
            ));
        }
        let defect = hermitian_defect(&entries);
        if defect >= HERMITIAN_TOL {
            return Err(Error::InvalidDensity(format!(
                "not Hermitian (defect {defect:e})"
            )));
        }
        let tr = entries.trace();
        if (tr.re - 1.0).abs() >= 1e-12 || tr.im.abs() >= 1e-12 {
            return Err(Error::InvalidDensity(format!("trace {tr} != 1")));
        }
        let min_eig = SymmetricEigen::new(entries.clone())
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(*v));
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_matrix_unchecked(entries: CMatrix) -> Self {
        Self { entries }
    }

    pub fn pure(psi: &PureState) -> Self {
        Self {
            entries: psi.projector(),
        }
    }

    /// Maximally mixed state `I / dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            entries: CMatrix::identity(dim, dim) * c(1.0 / dim as f64, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    /// `tr(rho A)`.
    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                found: self.dim(),
            });
        }
        Ok((&self.entries * op.entries()).trace())
    }

    /// Trace distance `1/2 tr|rho - sigma|`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let diff = &self.entries - &other.entries;
        let diff = (&diff + diff.adjoint()) * c(0.5, 0.0);
        let eig = SymmetricEigen::new(diff);
        Ok(0.5 * eig.eigenvalues.iter().map(|v| v.abs()).sum::<f64>())
    }

    /// Largest entry modulus of `rho - sigma`.
    pub fn max_entry_difference(&self, other: &Self) -> f64 {
        (&self.entries - &other.entries)
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()))
    }

    /// Conjugation `U rho U^dagger`.
    pub fn conjugate_by(&self, u: &Operator) -> Result<Self> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: u.dim(),
                found: self.dim(),
            });
        }
        Ok(Self {
            entries: u.entries() * &self.entries * u.entries().adjoint(),
        })
    }
}

/// Weighted list of pure states realizing a density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureDecomposition {
    components: Vec<(f64, PureState)>,
}

impl MixtureDecomposition {
    pub fn new(components: Vec<(f64, PureState)>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidMixture("no components".into()));
        };
        let dim = first.1.dim();
        let mut total = 0.0;
        for (w, psi) in &components {
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidMixture(format!(
                    "weight {w} is negative or not finite"
                )));
            }
            if psi.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: psi.dim(),
                });
            }
            total += w;
        }
        if (total - 1.0).abs() >= 1e-12 {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        Ok(Self { components })
    }

    /// Equal-weight mixture of `|up n>` and `|down n>`, the unpolarized spin.
    pub fn unpolarized_along(n: [f64; 3]) -> Result<Self> {
        Self::new(vec![
            (0.5, PureState::spin_up(n)?),
            (0.5, PureState::spin_down(n)?),
        ])
    }

    pub fn components(&self) -> &[(f64, PureState)] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// `rho = sum_a p_a |psi_a><psi_a|`.
pub fn mixture_to_density(m: &MixtureDecomposition) -> DensityMatrix {
    let dim = m.dim();
    let mut rho = CMatrix::zeros(dim, dim);
    for (w, psi) in &m.components {
        rho += psi.projector() * c(*w, 0.0);
    }
    // exact Hermitian part; rounding in the outer products can leave ~1e-17 skew
    let rho = (&rho + rho.adjoint()) * c(0.5, 0.0);
    DensityMatrix::from_matrix_unchecked(rho)
}

/// Spectral decomposition into orthonormal eigenstates with non-negative weights.
///
/// Degenerate eigenspaces come back in an arbitrary orthonormal basis, so
/// comparisons should go through [`mixture_to_density`].
pub fn eigendecompose_density(rho: &DensityMatrix) -> MixtureDecomposition {
    let eig = SymmetricEigen::new(rho.entries.clone());
    let dim = rho.dim();
    let mut comps: Vec<(f64, PureState)> = (0..dim)
        .map(|i| {
            let w = eig.eigenvalues[i].max(0.0);
            let v = eig.eigenvectors.column(i).into_owned();
            (w, PureState::from_vector_unchecked(v))
        })
        .collect();
    comps.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total: f64 = comps.iter().map(|(w, _)| w).sum();
    for (w, _) in comps.iter_mut() {
        *w /= total;
    }
    MixtureDecomposition { components: comps }
}

/// One exact step `psi -> exp(-i H dt / hbar) psi` for a time-independent `H`.
pub fn schrodinger_step(psi: &PureState, h: &Operator, dt: f64, hbar: f64) -> Result<PureState> {
    let u = h.propagator(dt, hbar)?;
    psi.apply(&u)
}
