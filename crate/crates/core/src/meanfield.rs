//! Mean-field (Ehrenfest) hybrid dynamics.
//!
//! A classical point `(x, k)` moves under `<H(x, k)>` while the quantum state
//! follows `i hbar d psi/dt = H(x, k) psi`. The density-matrix variant replaces
//! `psi` by `rho` and the expectations by `tr(rho H)`.
//!
//! Steps are Lawson (integrating-factor) RK4: the exact propagator of the
//! Hamiltonian frozen at the start of the step carries the fast phase, and RK4
//! handles the remainder.

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, CVector, DensityMatrix, MixtureDecomposition, Operator, PureState};
use crate::phase_grid::ClassicalPoint;

/// Norm drift above which the state is renormalized after a step.
pub const RENORMALIZE_TOL: f64 = 1e-12;

/// Operator-valued function on classical phase space with analytic partials.
/// Serves both as a hybrid Hamiltonian and as an observable.
pub trait OperatorFunction: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64], k: &[f64]) -> Operator;
    fn grad_x(&self, x: &[f64], k: &[f64]) -> Vec<Operator>;
    fn grad_k(&self, x: &[f64], k: &[f64]) -> Vec<Operator>;
}

/// Closure-backed [`OperatorFunction`].
pub struct AnalyticOperator<F, GX, GK> {
    pub dim: usize,
    pub value: F,
    pub grad_x: GX,
    pub grad_k: GK,
}

impl<F, GX, GK> OperatorFunction for AnalyticOperator<F, GX, GK>
where
    F: Fn(&[f64], &[f64]) -> Operator + Sync,
    GX: Fn(&[f64], &[f64]) -> Vec<Operator> + Sync,
    GK: Fn(&[f64], &[f64]) -> Vec<Operator> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, x: &[f64], k: &[f64]) -> Operator {
        (self.value)(x, k)
    }
    fn grad_x(&self, x: &[f64], k: &[f64]) -> Vec<Operator> {
        (self.grad_x)(x, k)
    }
    fn grad_k(&self, x: &[f64], k: &[f64]) -> Vec<Operator> {
        (self.grad_k)(x, k)
    }
}

/// `H = (lambda/2) |x|^2 (k . sigma)` for a classical particle in three
/// dimensions carrying a spin-1/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinOrbitHamiltonian {
    pub lambda: f64,
}

impl OperatorFunction for SpinOrbitHamiltonian {
    fn dim(&self) -> usize {
        2
    }
    fn evaluate(&self, x: &[f64], k: &[f64]) -> Operator {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Operator::pauli_dot([k[0], k[1], k[2]]).scale_real(0.5 * self.lambda * r2)
    }
    fn grad_x(&self, x: &[f64], k: &[f64]) -> Vec<Operator> {
        let ks = Operator::pauli_dot([k[0], k[1], k[2]]);
        x.iter().map(|xi| ks.scale_real(self.lambda * xi)).collect()
    }
    fn grad_k(&self, x: &[f64], _k: &[f64]) -> Vec<Operator> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        [
            Operator::pauli_x(),
            Operator::pauli_y(),
            Operator::pauli_z(),
        ]
        .iter()
        .map(|s| s.scale_real(0.5 * self.lambda * r2))
        .collect()
    }
}

/// `k . sigma`, the observable of the spin example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentumSpin;

impl OperatorFunction for MomentumSpin {
    fn dim(&self) -> usize {
        2
    }
    fn evaluate(&self, _x: &[f64], k: &[f64]) -> Operator {
        Operator::pauli_dot([k[0], k[1], k[2]])
    }
    fn grad_x(&self, _x: &[f64], _k: &[f64]) -> Vec<Operator> {
        vec![Operator::zeros(2); 3]
    }
    fn grad_k(&self, _x: &[f64], _k: &[f64]) -> Vec<Operator> {
        vec![
            Operator::pauli_x(),
            Operator::pauli_y(),
            Operator::pauli_z(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldState {
    pub classical: ClassicalPoint,
    pub quantum: PureState,
    pub time: f64,
    /// Largest `| ||psi||^2 - 1 |` seen before renormalization.
    pub max_norm_drift: f64,
}

impl MeanFieldState {
    pub fn new(classical: ClassicalPoint, quantum: PureState) -> Self {
        Self {
            classical,
            quantum,
            time: 0.0,
            max_norm_drift: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMeanFieldState {
    pub classical: ClassicalPoint,
    pub quantum: DensityMatrix,
    pub time: f64,
    /// Largest `|tr rho - 1|` seen.
    pub max_trace_drift: f64,
}

impl DensityMeanFieldState {
    pub fn new(classical: ClassicalPoint, quantum: DensityMatrix) -> Self {
        Self {
            classical,
            quantum,
            time: 0.0,
            max_trace_drift: 0.0,
        }
    }
}

fn check_dims(
    h: &dyn OperatorFunction,
    dof: usize,
    dim: usize,
    x: &[f64],
    k: &[f64],
) -> Result<()> {
    if h.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: dim,
        });
    }
    let gx = h.grad_x(x, k);
    let gk = h.grad_k(x, k);
    if gx.len() != dof || gk.len() != dof {
        return Err(Error::DimensionMismatch {
            expected: dof,
            found: gx.len().min(gk.len()),
        });
    }
    Ok(())
}

fn check_step(dt: f64, hbar: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if !(hbar > 0.0) || !hbar.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "hbar must be positive, got {hbar}"
        )));
    }
    Ok(())
}

fn expect(op: &Operator, psi: &CVector) -> f64 {
    (psi.adjoint() * op.entries() * psi)[(0, 0)].re
}

fn expect_rho(op: &Operator, rho: &CMatrix) -> f64 {
    (rho * op.entries()).trace().re
}

/// Classical velocity field `(d<H>/dk, -d<H>/dx)` for a given expectation map.
fn hamilton_flow(
    h: &dyn OperatorFunction,
    x: &[f64],
    k: &[f64],
    mean: impl Fn(&Operator) -> f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dx: Vec<f64> = h.grad_k(x, k).iter().map(&mean).collect();
    let dk: Vec<f64> = h.grad_x(x, k).iter().map(|g| -mean(g)).collect();
    if dx.iter().chain(&dk).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mean-field derivative".into()));
    }
    Ok((dx, dk))
}

fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

fn comb(a: &[f64], b: &[f64], c: &[f64], d: &[f64], s: f64) -> Vec<f64> {
    (0..a.len())
        .map(|i| s * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
        .collect()
}

/// Stage derivative: classical velocities and the quantum remainder
/// `-(i/hbar) (H(x, k) - H0) psi`.
type PureStage = (Vec<f64>, Vec<f64>, CVector);

fn pure_stage(
    h: &dyn OperatorFunction,
    h0: &CMatrix,
    hbar: f64,
    x: &[f64],
    k: &[f64],
    psi: &CVector,
) -> Result<PureStage> {
    let (dx, dk) = hamilton_flow(h, x, k, |op| expect(op, psi))?;
    let hx = h.evaluate(x, k);
    let dpsi = (hx.entries() - h0) * psi * C64::new(0.0, -1.0 / hbar);
    Ok((dx, dk, dpsi))
}

/// One Lawson-RK4 step of the coupled classical-quantum system.
pub fn meanfield_step(
    s: &MeanFieldState,
    h: &dyn OperatorFunction,
    dt: f64,
    hbar: f64,
) -> Result<MeanFieldState> {
    check_step(dt, hbar)?;
    let (x, k) = (&s.classical.x, &s.classical.k);
    check_dims(h, s.classical.dof(), s.quantum.dim(), x, k)?;
    let h0 = h.evaluate(x, k);
    let full = h0.propagator(dt, hbar)?.into_entries();
    let half = h0.propagator(0.5 * dt, hbar)?.into_entries();
    let h0 = h0.into_entries();
    let psi = s.quantum.amplitudes().clone();

    let (x1, k1, p1) = pure_stage(h, &h0, hbar, x, k, &psi)?;
    let psi_a = &half * (&psi + &p1 * C64::from(0.5 * dt));
    let (x2, k2, p2) = pure_stage(
        h,
        &h0,
        hbar,
        &axpy(x, 0.5 * dt, &x1),
        &axpy(k, 0.5 * dt, &k1),
        &psi_a,
    )?;
    let psi_b = &half * &psi + &p2 * C64::from(0.5 * dt);
    let (x3, k3, p3) = pure_stage(
        h,
        &h0,
        hbar,
        &axpy(x, 0.5 * dt, &x2),
        &axpy(k, 0.5 * dt, &k2),
        &psi_b,
    )?;
    let psi_c = &full * &psi + &half * &p3 * C64::from(dt);
    let (x4, k4, p4) = pure_stage(h, &h0, hbar, &axpy(x, dt, &x3), &axpy(k, dt, &k3), &psi_c)?;

    let new_psi = &full * &psi
        + (&full * &p1 + &half * (&p2 + &p3) * C64::from(2.0) + &p4) * C64::from(dt / 6.0);
    let new_x = axpy(x, 1.0, &comb(&x1, &x2, &x3, &x4, dt / 6.0));
    let new_k = axpy(k, 1.0, &comb(&k1, &k2, &k3, &k4, dt / 6.0));
    if new_psi
        .iter()
        .any(|c| !c.re.is_finite() || !c.im.is_finite())
    {
        return Err(Error::NonFinite("quantum state".into()));
    }
    let norm_sqr = new_psi.norm_squared();
    let drift = (norm_sqr - 1.0).abs();
    let quantum = if drift > RENORMALIZE_TOL {
        PureState::normalized(new_psi)?
    } else {
        PureState::from_vector_unchecked(new_psi)
    };
    Ok(MeanFieldState {
        classical: ClassicalPoint::new(new_x, new_k)?,
        quantum,
        time: s.time + dt,
        max_norm_drift: s.max_norm_drift.max(drift),
    })
}

type DensityStage = (Vec<f64>, Vec<f64>, CMatrix);

fn density_stage(
    h: &dyn OperatorFunction,
    h0: &CMatrix,
    hbar: f64,
    x: &[f64],
    k: &[f64],
    rho: &CMatrix,
) -> Result<DensityStage> {
    let (dx, dk) = hamilton_flow(h, x, k, |op| expect_rho(op, rho))?;
    let v = h.evaluate(x, k).entries() - h0;
    let drho = (&v * rho - rho * &v) * C64::new(0.0, -1.0 / hbar);
    Ok((dx, dk, drho))
}

/// One Lawson-RK4 step of `i hbar d rho/dt = [H, rho]` with the classical
/// point driven by `tr(rho H)`.
pub fn density_meanfield_step(
    s: &DensityMeanFieldState,
    h: &dyn OperatorFunction,
    dt: f64,
    hbar: f64,
) -> Result<DensityMeanFieldState> {
    check_step(dt, hbar)?;
    let (x, k) = (&s.classical.x, &s.classical.k);
    check_dims(h, s.classical.dof(), s.quantum.dim(), x, k)?;
    let h0 = h.evaluate(x, k);
    let full = h0.propagator(dt, hbar)?.into_entries();
    let half = h0.propagator(0.5 * dt, hbar)?.into_entries();
    let (full_d, half_d) = (full.adjoint(), half.adjoint());
    let h0 = h0.into_entries();
    let conj_full = |m: &CMatrix| &full * m * &full_d;
    let conj_half = |m: &CMatrix| &half * m * &half_d;
    let rho = s.quantum.entries().clone();

    let (x1, k1, r1) = density_stage(h, &h0, hbar, x, k, &rho)?;
    let rho_a = conj_half(&(&rho + &r1 * C64::from(0.5 * dt)));
    let (x2, k2, r2) = density_stage(
        h,
        &h0,
        hbar,
        &axpy(x, 0.5 * dt, &x1),
        &axpy(k, 0.5 * dt, &k1),
        &rho_a,
    )?;
    let rho_b = conj_half(&rho) + &r2 * C64::from(0.5 * dt);
    let (x3, k3, r3) = density_stage(
        h,
        &h0,
        hbar,
        &axpy(x, 0.5 * dt, &x2),
        &axpy(k, 0.5 * dt, &k2),
        &rho_b,
    )?;
    let rho_c = conj_full(&rho) + conj_half(&r3) * C64::from(dt);
    let (x4, k4, r4) = density_stage(h, &h0, hbar, &axpy(x, dt, &x3), &axpy(k, dt, &k3), &rho_c)?;

    let mut new_rho = conj_full(&rho)
        + (conj_full(&r1) + conj_half(&(&r2 + &r3)) * C64::from(2.0) + &r4) * C64::from(dt / 6.0);
    new_rho = (&new_rho + new_rho.adjoint()) * C64::from(0.5);
    if new_rho
        .iter()
        .any(|c| !c.re.is_finite() || !c.im.is_finite())
    {
        return Err(Error::NonFinite("density matrix".into()));
    }
    let drift = (new_rho.trace().re - 1.0).abs();
    Ok(DensityMeanFieldState {
        classical: ClassicalPoint::new(
            axpy(x, 1.0, &comb(&x1, &x2, &x3, &x4, dt / 6.0)),
            axpy(k, 1.0, &comb(&k1, &k2, &k3, &k4, dt / 6.0)),
        )?,
        quantum: DensityMatrix::from_matrix_unchecked(new_rho),
        time: s.time + dt,
        max_trace_drift: s.max_trace_drift.max(drift),
    })
}

/// `(1/i hbar) <[A, H]> + sum_i (d<A>/dx_i d<H>/dk_i - d<A>/dk_i d<H>/dx_i)`.
pub fn expectation_rate(
    a: &dyn OperatorFunction,
    s: &MeanFieldState,
    h: &dyn OperatorFunction,
    hbar: f64,
) -> Result<f64> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "hbar must be positive, got {hbar}"
        )));
    }
    let (x, k) = (&s.classical.x, &s.classical.k);
    let dof = s.classical.dof();
    check_dims(a, dof, s.quantum.dim(), x, k)?;
    check_dims(h, dof, s.quantum.dim(), x, k)?;
    let psi = s.quantum.amplitudes();
    let av = a.evaluate(x, k);
    let hv = h.evaluate(x, k);
    let comm = av.entries() * hv.entries() - hv.entries() * av.entries();
    let quantum = ((psi.adjoint() * comm * psi)[(0, 0)] * C64::new(0.0, -1.0 / hbar)).re;
    let (ax, ak) = (a.grad_x(x, k), a.grad_k(x, k));
    let (hx, hk) = (h.grad_x(x, k), h.grad_k(x, k));
    let poisson: f64 = (0..dof)
        .map(|i| {
            expect(&ax[i], psi) * expect(&hk[i], psi) - expect(&ak[i], psi) * expect(&hx[i], psi)
        })
        .sum();
    let rate = quantum + poisson;
    if !rate.is_finite() {
        return Err(Error::NonFinite("expectation rate".into()));
    }
    Ok(rate)
}

/// `<A>` at the current state.
pub fn observable_value(a: &dyn OperatorFunction, s: &MeanFieldState) -> Result<f64> {
    a.evaluate(&s.classical.x, &s.classical.k)
        .expectation(&s.quantum)
        .map(|c| c.re)
}

/// Forward-difference estimate of `d<A>/dt` from `meanfield_step` runs,
/// using the second-order one-sided formula at steps `h` and `h/2` combined
/// by Richardson extrapolation.
pub fn finite_difference_rate(
    a: &dyn OperatorFunction,
    s: &MeanFieldState,
    h: &dyn OperatorFunction,
    hbar: f64,
    step: f64,
) -> Result<f64> {
    let one_sided = |dt: f64| -> Result<f64> {
        let f0 = observable_value(a, s)?;
        let s1 = meanfield_step(s, h, dt, hbar)?;
        let s2 = meanfield_step(&s1, h, dt, hbar)?;
        Ok((-3.0 * f0 + 4.0 * observable_value(a, &s1)? - observable_value(a, &s2)?) / (2.0 * dt))
    };
    let coarse = one_sided(step)?;
    let fine = one_sided(0.5 * step)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpinCounterexample {
    pub axis: [f64; 3],
    pub rate_up: f64,
    pub rate_down: f64,
    /// Equal-weight average of the two branch rates.
    pub mixture_rate: f64,
}

/// Rates of `<k . sigma>` for the branches `|up n>`, `|down n>` of the
/// unpolarized mixture along `axis`, under `H = (lambda/2) |x|^2 k . sigma`.
pub fn spin_counterexample(
    axis: [f64; 3],
    lambda: f64,
    x0: [f64; 3],
    k0: [f64; 3],
    hbar: f64,
) -> Result<SpinCounterexample> {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "axis must be a unit vector, |n| = {norm}"
        )));
    }
    let h = SpinOrbitHamiltonian { lambda };
    let point = ClassicalPoint::new(x0.to_vec(), k0.to_vec())?;
    let rate = |psi: PureState| {
        expectation_rate(
            &MomentumSpin,
            &MeanFieldState::new(point.clone(), psi),
            &h,
            hbar,
        )
    };
    let rate_up = rate(PureState::spin_up(axis)?)?;
    let rate_down = rate(PureState::spin_down(axis)?)?;
    Ok(SpinCounterexample {
        axis,
        rate_up,
        rate_down,
        mixture_rate: 0.5 * (rate_up + rate_down),
    })
}

/// Recorded mean-field run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub observable_names: Vec<String>,
    pub rows: Vec<TrajectoryRow>,
    pub max_norm_drift: f64,
    /// `max_t |<H>(t) - <H>(0)|`.
    pub max_energy_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub x: Vec<f64>,
    pub k: Vec<f64>,
    pub amplitudes: Vec<(f64, f64)>,
    pub observables: Vec<f64>,
}

impl Trajectory {
    /// Columns `time, x0.., k0.., re0, im0, .., <A>..`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv output failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        let Some(first) = self.rows.first() else {
            return Ok(());
        };
        let mut header = vec!["time".to_string()];
        header.extend((0..first.x.len()).map(|i| format!("x{i}")));
        header.extend((0..first.k.len()).map(|i| format!("k{i}")));
        for i in 0..first.amplitudes.len() {
            header.push(format!("re{i}"));
            header.push(format!("im{i}"));
        }
        header.extend(self.observable_names.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for r in &self.rows {
            let mut rec = vec![format!("{:.12e}", r.time)];
            rec.extend(r.x.iter().chain(&r.k).map(|v| format!("{v:.12e}")));
            for (re, im) in &r.amplitudes {
                rec.push(format!("{re:.12e}"));
                rec.push(format!("{im:.12e}"));
            }
            rec.extend(r.observables.iter().map(|v| format!("{v:.12e}")));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidParameter(format!("csv output failed: {e}")))
    }
}

/// Runs `steps` mean-field steps, recording every `record_every`-th state.
pub fn run_meanfield(
    s: &MeanFieldState,
    h: &dyn OperatorFunction,
    dt: f64,
    steps: usize,
    hbar: f64,
    observables: &[(&str, &dyn OperatorFunction)],
    record_every: usize,
) -> Result<(MeanFieldState, Trajectory)> {
    let every = record_every.max(1);
    let energy = |st: &MeanFieldState| observable_value(h, st);
    let e0 = energy(s)?;
    let row = |st: &MeanFieldState| -> Result<TrajectoryRow> {
        Ok(TrajectoryRow {
            time: st.time,
            x: st.classical.x.clone(),
            k: st.classical.k.clone(),
            amplitudes: st
                .quantum
                .amplitudes()
                .iter()
                .map(|c| (c.re, c.im))
                .collect(),
            observables: observables
                .iter()
                .map(|(_, a)| observable_value(*a, st))
                .collect::<Result<_>>()?,
        })
    };
    let mut rows = vec![row(s)?];
    let mut cur = s.clone();
    let mut max_energy_drift: f64 = 0.0;
    for step in 1..=steps {
        cur = meanfield_step(&cur, h, dt, hbar)?;
        max_energy_drift = max_energy_drift.max((energy(&cur)? - e0).abs());
        if step % every == 0 || step == steps {
            rows.push(row(&cur)?);
        }
    }
    let traj = Trajectory {
        observable_names: observables.iter().map(|(n, _)| n.to_string()).collect(),
        rows,
        max_norm_drift: cur.max_norm_drift,
        max_energy_drift,
    };
    Ok((cur, traj))
}

/// Distance between a density-level run and the branch-averaged pure runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonlinearityReport {
    pub times: Vec<f64>,
    /// `|(x, k)_rho - sum_a p_a (x, k)_a|`.
    pub trajectory_distance: Vec<f64>,
    /// Trace distance between `rho(t)` and `sum_a p_a |psi_a(t)><psi_a(t)|`.
    pub state_distance: Vec<f64>,
    /// `max_t (trajectory_distance + state_distance)`.
    pub metric: f64,
}

/// Evolves `rho` by [`density_meanfield_step`] and each branch of `mixture`
/// by [`meanfield_step`] from the same classical point.
pub fn density_nonlinearity(
    rho: &DensityMatrix,
    mixture: &MixtureDecomposition,
    h: &dyn OperatorFunction,
    start: &ClassicalPoint,
    dt: f64,
    steps: usize,
    hbar: f64,
) -> Result<NonlinearityReport> {
    let rebuilt = crate::hilbert::mixture_to_density(mixture);
    let mismatch = rebuilt.max_entry_difference(rho);
    if mismatch > 1e-10 {
        return Err(Error::InvalidMixture(format!(
            "decomposition differs from rho by {mismatch:e}"
        )));
    }
    let mut dens = DensityMeanFieldState::new(start.clone(), rho.clone());
    let mut branches: Vec<(f64, MeanFieldState)> = mixture
        .components()
        .iter()
        .map(|(p, psi)| (*p, MeanFieldState::new(start.clone(), psi.clone())))
        .collect();
    let mut report = NonlinearityReport {
        times: vec![],
        trajectory_distance: vec![],
        state_distance: vec![],
        metric: 0.0,
    };
    let mut record =
        |t: f64, dens: &DensityMeanFieldState, branches: &[(f64, MeanFieldState)]| -> Result<()> {
            let dof = start.dof();
            let mut mean = vec![0.0; 2 * dof];
            let mut avg = CMatrix::zeros(rho.dim(), rho.dim());
            for (p, b) in branches {
                for i in 0..dof {
                    mean[i] += p * b.classical.x[i];
                    mean[dof + i] += p * b.classical.k[i];
                }
                avg += b.quantum.projector() * C64::from(*p);
            }
            let d: f64 = (0..dof)
                .map(|i| {
                    (dens.classical.x[i] - mean[i]).powi(2)
                        + (dens.classical.k[i] - mean[dof + i]).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            let sd = dens
                .quantum
                .trace_distance(&DensityMatrix::from_matrix_unchecked(avg))?;
            report.times.push(t);
            report.trajectory_distance.push(d);
            report.state_distance.push(sd);
            report.metric = report.metric.max(d + sd);
            Ok(())
        };
    record(0.0, &dens, &branches)?;
    for step in 1..=steps {
        dens = density_meanfield_step(&dens, h, dt, hbar)?;
        branches = branches
            .into_par_iter()
            .map(|(p, b)| meanfield_step(&b, h, dt, hbar).map(|nb| (p, nb)))
            .collect::<Result<_>>()?;
        record(step as f64 * dt, &dens, &branches)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::schrodinger_step;

    fn point(x: [f64; 3], k: [f64; 3]) -> ClassicalPoint {
        ClassicalPoint::new(x.to_vec(), k.to_vec()).unwrap()
    }

    #[test]
    fn spin_rates_match_closed_form() {
        let r = spin_counterexample([1.0, 0.0, 0.0], 1.0, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0], 1.0)
            .unwrap();
        assert!((r.mixture_rate + 1.0).abs() < 1e-12);
        let r = spin_counterexample([0.0, 0.0, 1.0], 1.0, [1.0, 0.0, 0.0], [0.3, -0.2, 0.9], 1.0)
            .unwrap();
        assert!(r.mixture_rate.abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r =
            spin_counterexample([s, 0.0, s], 2.0, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 1.0).unwrap();
        assert!((r.mixture_rate + 1.0).abs() < 1e-12);
        assert!(spin_counterexample([1.0, 1.0, 0.0], 1.0, [1.0; 3], [1.0; 3], 1.0).is_err());
    }

    #[test]
    fn rate_matches_finite_differences() {
        let h = SpinOrbitHamiltonian { lambda: 1.3 };
        let s = MeanFieldState::new(
            point([0.7, -0.2, 0.4], [0.1, 0.9, -0.5]),
            PureState::spin_up([0.6, 0.0, 0.8]).unwrap(),
        );
        let exact = expectation_rate(&MomentumSpin, &s, &h, 1.0).unwrap();
        let fd = finite_difference_rate(&MomentumSpin, &s, &h, 1.0, 1e-3).unwrap();
        assert!((exact - fd).abs() < 1e-8, "{exact} vs {fd}");
    }

    #[test]
    fn energy_rate_vanishes() {
        let h = SpinOrbitHamiltonian { lambda: 0.8 };
        let s = MeanFieldState::new(
            point([0.3, 1.1, -0.4], [0.5, 0.2, 0.7]),
            PureState::spin_up([0.0, 0.6, 0.8]).unwrap(),
        );
        assert!(expectation_rate(&h, &s, &h, 1.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn decoupled_matches_components() {
        let hq = Operator::pauli_dot([0.3, -0.5, 0.8]);
        let h = AnalyticOperator {
            dim: 2,
            value: |x: &[f64], k: &[f64]| {
                Operator::identity(2)
                    .scale_real(0.5 * (x[0] * x[0] + k[0] * k[0]))
                    .add(&hq)
                    .unwrap()
            },
            grad_x: |x: &[f64], _k: &[f64]| vec![Operator::identity(2).scale_real(x[0])],
            grad_k: |_x: &[f64], k: &[f64]| vec![Operator::identity(2).scale_real(k[0])],
        };
        let psi = PureState::spin_up([1.0, 0.0, 0.0]).unwrap();
        let mut s = MeanFieldState::new(
            ClassicalPoint::new(vec![1.0], vec![0.0]).unwrap(),
            psi.clone(),
        );
        let dt = 1e-3;
        let steps = 1571;
        for _ in 0..steps {
            s = meanfield_step(&s, &h, dt, 1.0).unwrap();
        }
        let t = dt * steps as f64;
        assert!((s.classical.x[0] - t.cos()).abs() < 1e-8);
        assert!((s.classical.k[0] + t.sin()).abs() < 1e-8);
        // The identity term only adds a global phase.
        let q = schrodinger_step(&psi, &hq, t, 1.0).unwrap();
        assert!((1.0 - s.quantum.fidelity(&q)).abs() < 1e-10);
    }

    #[test]
    fn energy_conserved_at_fourth_order() {
        let h = SpinOrbitHamiltonian { lambda: 1.0 };
        let s0 = MeanFieldState::new(
            point([1.0, 0.2, 0.0], [0.3, 0.5, -0.4]),
            PureState::spin_up([0.0, 0.0, 1.0]).unwrap(),
        );
        let drift = |dt: f64, steps: usize| {
            let (_, t) = run_meanfield(&s0, &h, dt, steps, 1.0, &[], steps).unwrap();
            (t.max_energy_drift, t.max_norm_drift)
        };
        let (coarse, norm) = drift(0.01, 1000);
        let (fine, _) = drift(0.005, 2000);
        assert!(coarse / fine > 12.0, "{coarse} {fine}");
        assert!(norm < 1e-10);
    }

    #[test]
    fn pure_density_run_matches_state_run() {
        let h = SpinOrbitHamiltonian { lambda: 0.7 };
        let psi = PureState::spin_up([0.6, 0.0, 0.8]).unwrap();
        let start = point([0.5, 0.1, -0.3], [0.2, 0.4, 0.1]);
        let mut a = MeanFieldState::new(start.clone(), psi.clone());
        let mut b = DensityMeanFieldState::new(start, DensityMatrix::pure(&psi));
        for _ in 0..1000 {
            a = meanfield_step(&a, &h, 1e-3, 1.0).unwrap();
            b = density_meanfield_step(&b, &h, 1e-3, 1.0).unwrap();
        }
        assert!(a.classical.distance(&b.classical) < 1e-8);
        assert!(DensityMatrix::pure(&a.quantum).max_entry_difference(&b.quantum) < 1e-8);
        assert!(b.max_trace_drift < 1e-10);
    }

    #[test]
    fn maximally_mixed_density_diverges_from_branches() {
        let h = SpinOrbitHamiltonian { lambda: 1.0 };
        let start = point([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let rho = DensityMatrix::maximally_mixed(2);
        let mix = MixtureDecomposition::unpolarized_along([1.0, 0.0, 0.0]).unwrap();
        let r = density_nonlinearity(&rho, &mix, &h, &start, 1e-3, 1000, 1.0).unwrap();
        assert!(r.metric > 1e-3, "{}", r.metric);
        assert_eq!(r.trajectory_distance[0], 0.0);
    }
}
