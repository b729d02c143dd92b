//! Spin-1/2 hybrid: a classical particle in three dimensions whose ensemble
//! carries one `(P_a, S_a)` pair per spin component `a = +1/2, -1/2`.
//!
//! The spinor is `psi_a = sqrt(P_a) exp(i S_a / hbar)`; orbital angular
//! momentum is `sum_a int P_a x cross grad S_a` and spin is
//! `(hbar/2) int psi^dagger sigma psi`.

use num_complex::Complex64 as C64;
use serde::Serialize;

use super::evolve::{component_rhs, energy_with, Derivatives};
use super::{Component, EnsembleState, FunctionalHamiltonian, HamiltonianKind, NORMALIZATION_TOL};
use crate::error::{Error, Result};
use crate::hilbert::PureState;
use crate::phase_grid::{Domain, Grid1D, GridField, Stencil};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpinObservables {
    pub orbital: [f64; 3],
    pub spin: [f64; 3],
    pub total: [f64; 3],
    pub d_orbital: [f64; 3],
    pub d_spin: [f64; 3],
    pub d_total: [f64; 3],
}

fn check_spin_state(state: &EnsembleState, h: &FunctionalHamiltonian) -> Result<()> {
    if h.kind != HamiltonianKind::FreeSpin {
        return Err(Error::InvalidParameter(format!(
            "spin observables need the free-spin kind, got {}",
            h.kind
        )));
    }
    h.check_state(state)?;
    if state.domain().ndim() != 3 {
        return Err(Error::InvalidParameter(
            "spin hybrid lives on a three-dimensional grid".into(),
        ));
    }
    let mass = state.total_mass();
    if (mass - 1.0).abs() >= NORMALIZATION_TOL {
        return Err(Error::NotNormalized { norm_sqr: mass });
    }
    Ok(())
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// `(psi_+, psi_-)` sampled on the grid.
pub fn spinor(state: &EnsembleState, hbar: f64) -> [Vec<C64>; 2] {
    let f = |c: &Component| -> Vec<C64> {
        c.log_density
            .values()
            .iter()
            .zip(c.action.values())
            .map(|(l, s)| C64::from_polar((0.5 * l).exp(), s / hbar))
            .collect()
    };
    [f(state.component(0)), f(state.component(1))]
}

/// Angular momenta and their rates under the free-spin flow, by quadrature.
/// `h.hbar` sets the spin scale; the flow itself does not depend on it.
pub fn spin_hybrid_observables(
    state: &EnsembleState,
    h: &FunctionalHamiltonian,
) -> Result<SpinObservables> {
    check_spin_state(state, h)?;
    if h.hbar <= 0.0 {
        return Err(Error::InvalidParameter(
            "spin observables need hbar > 0".into(),
        ));
    }
    let d = state.domain();
    let ops = Derivatives::new(d)?;
    let dv = d.cell_volume();
    let coords: Vec<Vec<f64>> = (0..d.len()).map(|i| d.coords(i)).collect();

    let mut orbital = [0.0; 3];
    let mut d_orbital = [0.0; 3];
    let mut rates = Vec::with_capacity(2);
    for c in state.components() {
        let l = c.log_density.values();
        let s = c.action.values();
        let (lt, st) = component_rhs(l, s, h, &ops, None);
        let grad_s: Vec<Vec<f64>> = (0..3).map(|a| ops.d1(s, a)).collect();
        let grad_st: Vec<Vec<f64>> = (0..3).map(|a| ops.d1(&st, a)).collect();
        for i in 0..d.len() {
            let p = l[i].exp();
            let x = [coords[i][0], coords[i][1], coords[i][2]];
            let lxs = cross(x, [grad_s[0][i], grad_s[1][i], grad_s[2][i]]);
            let lxst = cross(x, [grad_st[0][i], grad_st[1][i], grad_st[2][i]]);
            for a in 0..3 {
                orbital[a] += p * lxs[a] * dv;
                d_orbital[a] += p * (lt[i] * lxs[a] + lxst[a]) * dv;
            }
        }
        rates.push((lt, st));
    }

    let [up, down] = spinor(state, h.hbar);
    let dpsi = |psi: &[C64], (lt, st): &(Vec<f64>, Vec<f64>)| -> Vec<C64> {
        psi.iter()
            .zip(lt.iter().zip(st))
            .map(|(p, (lt, st))| p * C64::new(0.5 * lt, st / h.hbar))
            .collect()
    };
    let dup = dpsi(&up, &rates[0]);
    let ddown = dpsi(&down, &rates[1]);
    let mut spin = [0.0; 3];
    let mut d_spin = [0.0; 3];
    for i in 0..d.len() {
        let (u, w) = (up[i], down[i]);
        let off = u.conj() * w;
        let sv = [2.0 * off.re, 2.0 * off.im, u.norm_sqr() - w.norm_sqr()];
        // Re(psi^dagger sigma dpsi) per Pauli component.
        let (du, dw) = (dup[i], ddown[i]);
        let rate = [
            (u.conj() * dw + w.conj() * du).re,
            (C64::new(0.0, -1.0) * u.conj() * dw + C64::new(0.0, 1.0) * w.conj() * du).re,
            (u.conj() * du - w.conj() * dw).re,
        ];
        for a in 0..3 {
            spin[a] += 0.5 * h.hbar * sv[a] * dv;
            d_spin[a] += h.hbar * rate[a] * dv;
        }
    }
    Ok(SpinObservables {
        orbital,
        spin,
        total: add(orbital, spin),
        d_orbital,
        d_spin,
        d_total: add(d_orbital, d_spin),
    })
}

/// `sum_a int P_a (grad S_a)^2 / 2M` from the stored fields.
pub fn free_spin_energy(state: &EnsembleState, h: &FunctionalHamiltonian) -> Result<f64> {
    check_spin_state(state, h)?;
    let ops = Derivatives::new(state.domain())?;
    Ok(energy_with(state, h, &ops, None))
}

fn spinor_gradients(domain: &Domain, psi: &[C64]) -> Result<Vec<Vec<C64>>> {
    let shape = domain.shape();
    domain
        .axes()
        .iter()
        .enumerate()
        .map(|(a, g)| Ok(Stencil::new(g, 1)?.apply(psi, &shape, a)))
        .collect()
}

/// `int hbar^2 (Im psi* grad psi)^2 / (2M |psi|^2)`, i.e. `int P (grad S)^2 / 2M`
/// without unwrapping the phase.
fn phase_kinetic(domain: &Domain, psi: &[C64], mass: f64, hbar: f64) -> Result<f64> {
    let grads = spinor_gradients(domain, psi)?;
    let mut total = 0.0;
    for (i, p) in psi.iter().enumerate() {
        let rho = p.norm_sqr();
        if rho < 1e-300 {
            continue;
        }
        let j2: f64 = grads.iter().map(|g| (p.conj() * g[i]).im.powi(2)).sum();
        total += hbar * hbar * j2 / (2.0 * mass * rho);
    }
    Ok(total * domain.cell_volume())
}

/// The free-spin functional after re-expressing the spinor in the basis
/// quantized along `axis`.
pub fn free_spin_energy_along(
    state: &EnsembleState,
    h: &FunctionalHamiltonian,
    axis: [f64; 3],
) -> Result<f64> {
    check_spin_state(state, h)?;
    if h.hbar <= 0.0 {
        return Err(Error::InvalidParameter(
            "basis rotation needs hbar > 0".into(),
        ));
    }
    let up = PureState::spin_up(axis)?;
    let down = PureState::spin_down(axis)?;
    let [a, b] = spinor(state, h.hbar);
    let mut total = 0.0;
    for basis in [up, down] {
        let (cu, cd) = (basis.amplitudes()[0].conj(), basis.amplitudes()[1].conj());
        let rotated: Vec<C64> = a.iter().zip(&b).map(|(a, b)| cu * a + cd * b).collect();
        total += phase_kinetic(state.domain(), &rotated, h.classical_mass, h.hbar)?;
    }
    Ok(total)
}

/// Terms of `sum_a int hbar^2 |grad psi_a|^2 / 2M` split as
/// `(full, int P (grad S)^2 / 2M, int hbar^2 (grad P)^2 / 8MP)`, each by
/// quadrature over every axis of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KineticSplit {
    pub full: f64,
    pub phase: f64,
    pub amplitude: f64,
}

impl KineticSplit {
    pub fn defect(&self) -> f64 {
        (self.full - self.phase - self.amplitude).abs()
    }
}

pub fn free_kinetic_split(state: &EnsembleState, mass: f64, hbar: f64) -> Result<KineticSplit> {
    if !(mass > 0.0) || !(hbar > 0.0) {
        return Err(Error::InvalidParameter(
            "mass and hbar must be positive".into(),
        ));
    }
    let d = state.domain();
    let ops = Derivatives::new(d)?;
    let dv = d.cell_volume();
    let mut split = KineticSplit {
        full: 0.0,
        phase: 0.0,
        amplitude: 0.0,
    };
    for c in state.components() {
        let l = c.log_density.values();
        let s = c.action.values();
        let psi: Vec<C64> = l
            .iter()
            .zip(s)
            .map(|(l, s)| C64::from_polar((0.5 * l).exp(), s / hbar))
            .collect();
        let grads = spinor_gradients(d, &psi)?;
        for (axis, g) in grads.iter().enumerate() {
            let sa = ops.d1(s, axis);
            let la = ops.d1(l, axis);
            for i in 0..d.len() {
                let p = l[i].exp();
                split.full += hbar * hbar * g[i].norm_sqr() / (2.0 * mass) * dv;
                split.phase += p * sa[i] * sa[i] / (2.0 * mass) * dv;
                split.amplitude += hbar * hbar * p * la[i] * la[i] / (8.0 * mass) * dv;
            }
        }
    }
    Ok(split)
}

/// Isotropic Gaussian centred at `c` with action `k . x + s0`.
fn gaussian_component(
    d: &Domain,
    weight: f64,
    c: [f64; 3],
    width: f64,
    k: [f64; 3],
    s0: f64,
) -> Result<Component> {
    let norm = weight.ln() - 1.5 * (2.0 * std::f64::consts::PI * width * width).ln();
    let l = GridField::from_fn(d, |x| {
        norm - ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2))
            / (2.0 * width * width)
    })?;
    let s = GridField::from_fn(d, |x| k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + s0)?;
    Component::new(l, s)
}

fn cube(n: usize) -> Result<Domain> {
    let g = Grid1D::bounded(n, -6.0, 6.0)?;
    Domain::new(vec![g.clone(), g.clone(), g])
}

/// `P_a = p_a N(c, 1)`, `S_a = k . x + s_a`: spin and orbit never interacted.
pub fn separable_spin_fixture(n: usize) -> Result<EnsembleState> {
    let d = cube(n)?;
    let (c, k) = ([0.4, -0.3, 0.2], [0.5, 0.2, -0.3]);
    EnsembleState::normalized(vec![
        gaussian_component(&d, 0.7, c, 1.0, k, 0.3)?,
        gaussian_component(&d, 0.3, c, 1.0, k, -0.9)?,
    ])
}

/// Unit-width Gaussians at `(+-0.6, 0, 0)` with weights 1/2 and different
/// momenta `k_+ = (0.3, 0.4, 0)`, `k_- = (-0.2, -0.1, 0.3)`.
pub fn entangled_spin_fixture(n: usize) -> Result<EnsembleState> {
    let d = cube(n)?;
    EnsembleState::normalized(vec![
        gaussian_component(&d, 0.5, [0.6, 0.0, 0.0], 1.0, [0.3, 0.4, 0.0], 0.0)?,
        gaussian_component(&d, 0.5, [-0.6, 0.0, 0.0], 1.0, [-0.2, -0.1, 0.3], 0.0)?,
    ])
}
