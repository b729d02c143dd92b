//! Comparison of the quantum-kind ensemble flow with a split-step Fourier
//! Schrödinger integrator acting on `psi = sqrt(P) exp(i S / hbar)`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::Serialize;

use super::evolve::{evolve, EvolutionSummary};
use super::{EnsembleState, FunctionalHamiltonian, HamiltonianKind};
use crate::error::{Error, Result};
use crate::phase_grid::{GridField, Stencil};

#[derive(Clone, Debug, Serialize)]
pub struct MadelungReport {
    pub points: usize,
    pub dt: f64,
    pub steps: usize,
    pub time: f64,
    /// `sqrt(int (P - |psi|^2)^2)`.
    pub density_l2: f64,
    /// `sqrt(int |psi|^2 (grad S - hbar Im(psi* grad psi) / |psi|^2)^2)`.
    pub gradient_l2: f64,
    pub evolution: EvolutionSummary,
}

/// Strang-split Fourier propagation of `psi` on `n` equally spaced points with
/// spacing `dx`, treated as one period. `potential(t)` returns `V` at the points.
pub fn split_step_evolve(
    psi: &[C64],
    dx: f64,
    mass: f64,
    hbar: f64,
    potential: impl Fn(f64) -> Vec<f64>,
    dt: f64,
    steps: usize,
) -> Vec<C64> {
    let n = psi.len();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let kinetic: Vec<C64> = (0..n)
        .map(|j| {
            let k = wavenumber(j, n, dx);
            C64::from_polar(1.0, -hbar * k * k * dt / (2.0 * mass))
        })
        .collect();
    let half_kick = |v: &[f64]| -> Vec<C64> {
        v.iter()
            .map(|v| C64::from_polar(1.0, -v * dt / (2.0 * hbar)))
            .collect()
    };
    let mut psi = psi.to_vec();
    let scale = 1.0 / n as f64;
    let mut t = 0.0;
    for step in 1..=steps {
        let k0 = half_kick(&potential(t));
        psi.iter_mut().zip(&k0).for_each(|(p, k)| *p *= k);
        forward.process(&mut psi);
        psi.iter_mut()
            .zip(&kinetic)
            .for_each(|(p, k)| *p *= k * scale);
        inverse.process(&mut psi);
        t = step as f64 * dt;
        let k1 = half_kick(&potential(t));
        psi.iter_mut().zip(&k1).for_each(|(p, k)| *p *= k);
    }
    psi
}

fn wavenumber(j: usize, n: usize, dx: f64) -> f64 {
    let m = if j <= n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    };
    2.0 * PI * m / (n as f64 * dx)
}

/// Spectral derivative of a periodic sample.
fn spectral_derivative(psi: &[C64], dx: f64) -> Vec<C64> {
    let n = psi.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf = psi.to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (j, b) in buf.iter_mut().enumerate() {
        let k = if n.is_multiple_of(2) && j == n / 2 {
            0.0
        } else {
            wavenumber(j, n, dx)
        };
        *b *= C64::new(0.0, k / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

/// Quadratic continuation of `v` by `pad` cells on each side. Continuations
/// that would rise above the edge value are held at it.
fn extend_quadratic(v: &[f64], pad: usize) -> Vec<f64> {
    let n = v.len();
    let ext = |a: f64, b: f64, c: f64, j: f64| {
        // Lagrange through (0, a), (1, b), (2, c) evaluated at 2 + j.
        let x = 2.0 + j;
        a * (x - 1.0) * (x - 2.0) / 2.0 - b * x * (x - 2.0) + c * x * (x - 1.0) / 2.0
    };
    let mut out = Vec::with_capacity(n + 2 * pad);
    for j in (1..=pad).rev() {
        out.push(ext(v[2], v[1], v[0], j as f64));
    }
    out.extend_from_slice(v);
    for j in 1..=pad {
        out.push(ext(v[n - 3], v[n - 2], v[n - 1], j as f64));
    }
    out
}

fn extend_log_density(v: &[f64], pad: usize) -> Vec<f64> {
    let n = v.len();
    let mut out = extend_quadratic(v, pad);
    for i in 0..pad {
        out[i] = out[i].min(v[0]);
        out[pad + n + i] = out[pad + n + i].min(v[n - 1]);
    }
    out
}

/// Evolves a one-dimensional quantum-kind state both ways and reports the
/// discrepancy at `steps * dt`.
///
/// The oracle runs on a periodic box padded by `n / 2` cells per side, with
/// `log P`, `S` and `V` continued quadratically past the edges, so that the
/// wrap seam sits where the packet has no weight.
pub fn madelung_roundtrip(
    state: &EnsembleState,
    h: &FunctionalHamiltonian,
    dt: f64,
    steps: usize,
) -> Result<MadelungReport> {
    if h.kind != HamiltonianKind::Quantum {
        return Err(Error::InvalidParameter(format!(
            "madelung roundtrip needs the quantum kind, got {}",
            h.kind
        )));
    }
    if h.hbar <= 0.0 {
        return Err(Error::InvalidParameter(
            "madelung roundtrip needs hbar > 0".into(),
        ));
    }
    let domain = state.domain().clone();
    if domain.ndim() != 1 {
        return Err(Error::InvalidParameter(
            "madelung roundtrip works on one axis".into(),
        ));
    }
    let grid = domain.axes()[0].clone();
    let dx = grid.spacing();

    let pad = grid.n / 2;
    let l0 = extend_log_density(state.component(0).log_density.values(), pad);
    let s0 = extend_quadratic(state.action().values(), pad);
    let psi0: Vec<C64> = l0
        .iter()
        .zip(&s0)
        .map(|(l, s)| C64::from_polar((0.5 * l).exp(), s / h.hbar))
        .collect();
    let potential = |t: f64| -> Vec<f64> {
        match h.potential.sample(&domain, t) {
            Ok(Some(v)) => extend_quadratic(v.values(), pad),
            _ => vec![0.0; grid.n + 2 * pad],
        }
    };
    h.potential.sample(&domain, 0.0)?;
    let psi_ext = split_step_evolve(&psi0, dx, h.quantum_mass, h.hbar, potential, dt, steps);
    let dpsi_ext = spectral_derivative(&psi_ext, dx);
    let psi = &psi_ext[pad..pad + grid.n];
    let dpsi = &dpsi_ext[pad..pad + grid.n];

    let run = evolve(state, h, dt, steps)?;
    let p = run.state.density();
    let grad_s = Stencil::new(&grid, 1)?.apply(run.state.action().values(), &[grid.n], 0);

    let mut dens = 0.0;
    let mut grad = 0.0;
    for i in 0..grid.n {
        let rho = psi[i].norm_sqr();
        dens += (p.values()[i] - rho).powi(2);
        if rho > 1e-300 {
            let oracle = h.hbar * (psi[i].conj() * dpsi[i]).im / rho;
            grad += rho * (grad_s[i] - oracle).powi(2);
        }
    }
    let density_l2 = (dens * dx).sqrt();
    let gradient_l2 = (grad * dx).sqrt();
    if !density_l2.is_finite() || !gradient_l2.is_finite() {
        return Err(Error::NonFinite("madelung discrepancy".into()));
    }
    Ok(MadelungReport {
        points: grid.n,
        dt,
        steps,
        time: run.time,
        density_l2,
        gradient_l2,
        evolution: run.summary(),
    })
}

/// Quantum potential `Q = -hbar^2 lap(sqrt P) / (2 m sqrt P)`, sampled from `sqrt(P)` by stencils.
pub fn quantum_potential(density: &GridField, mass: f64, hbar: f64) -> Result<GridField> {
    let root = density.map(f64::sqrt);
    let mut lap = vec![0.0; root.values().len()];
    for axis in 0..density.domain().ndim() {
        let d2 = root.derivative(axis, 2)?;
        lap.iter_mut().zip(d2.values()).for_each(|(a, b)| *a += b);
    }
    let vals = lap
        .iter()
        .zip(root.values())
        .map(|(l, r)| -hbar * hbar * l / (2.0 * mass * r))
        .collect();
    GridField::new(density.domain().clone(), vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{evolve::rhs, Potential};
    use crate::phase_grid::{Domain, Grid1D};

    fn coherent(n: usize, q0: f64, p0: f64) -> (EnsembleState, FunctionalHamiltonian) {
        let d = Domain::new(vec![Grid1D::bounded(n, -6.0, 6.0).unwrap()]).unwrap();
        let l = GridField::from_fn(&d, |c| -(c[0] - q0).powi(2) - 0.5 * PI.ln()).unwrap();
        let s = GridField::from_fn(&d, |c| p0 * c[0]).unwrap();
        let v = GridField::from_fn(&d, |c| 0.5 * c[0] * c[0]).unwrap();
        let h = FunctionalHamiltonian::quantum(1.0, 1.0)
            .unwrap()
            .with_potential(Potential::Static(v));
        (EnsembleState::from_log_density(l, s).unwrap(), h)
    }

    fn run(n: usize) -> MadelungReport {
        let (st, h) = coherent(n, 0.5, 0.5);
        let dx = st.domain().axes()[0].spacing();
        let steps = (PI / (0.2 * dx * dx)).ceil() as usize;
        madelung_roundtrip(&st, &h, PI / steps as f64, steps).unwrap()
    }

    #[test]
    fn coherent_state_half_period() {
        let coarse = run(128);
        let fine = run(256);
        assert!(
            coarse.density_l2 < 1e-4 && coarse.gradient_l2 < 1e-4,
            "{coarse:?}"
        );
        assert!(
            fine.density_l2 * 4.0 < coarse.density_l2,
            "{coarse:?} {fine:?}"
        );
    }

    #[test]
    fn free_packet_disperses_like_oracle() {
        let d = Domain::new(vec![Grid1D::bounded(128, -7.0, 9.0).unwrap()]).unwrap();
        let l = GridField::from_fn(&d, |c| -(c[0] + 1.0).powi(2) / 2.0).unwrap();
        let s = GridField::from_fn(&d, |c| 0.4 * c[0]).unwrap();
        let st = EnsembleState::normalized(vec![crate::ensemble::Component::new(l, s).unwrap()])
            .unwrap();
        let h = FunctionalHamiltonian::quantum(1.0, 1.0).unwrap();
        let dx = d.axes()[0].spacing();
        let dt = 0.2 * dx * dx;
        let steps = (1.0 / dt).round() as usize;
        let r = madelung_roundtrip(&st, &h, dt, steps).unwrap();
        assert!(r.density_l2 < 1e-4 && r.gradient_l2 < 1e-4, "{r:?}");
    }

    #[test]
    fn quantum_minus_classical_is_quantum_potential() {
        let (st, _) = coherent(256, 0.3, 0.0);
        let st = EnsembleState::from_log_density(
            st.component(0).log_density.map(|l| l),
            GridField::from_fn(st.domain(), |c| 0.2 * c[0] * c[0]).unwrap(),
        )
        .unwrap();
        let q = rhs(&st, &FunctionalHamiltonian::quantum(1.3, 0.7).unwrap(), 0.0).unwrap();
        let c = rhs(&st, &FunctionalHamiltonian::classical(1.3).unwrap(), 0.0).unwrap();
        let qp = quantum_potential(&st.density(), 1.3, 0.7).unwrap();
        assert_eq!(q[0].0, c[0].0);
        let d = st.domain();
        for i in 0..d.len() {
            if d.is_interior(i, 3) && d.coords(i)[0].abs() < 4.0 {
                let diff = q[0].1.values()[i] - c[0].1.values()[i];
                // S_t carries -Q with Q the usual quantum potential.
                assert!(
                    (diff + qp.values()[i]).abs() < 1e-4,
                    "{i}: {diff} vs {}",
                    qp.values()[i]
                );
            }
        }
    }
}
