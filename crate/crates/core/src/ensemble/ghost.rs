//! Classical kinetic energy of a hybrid ensemble after the coupling is off.

use serde::Serialize;

use super::evolve::{evolve_with, EvolutionSummary, EvolveOptions};
use super::marginal::{marginal_rho, momentum_field, separability_defect, KBinning};
use super::{EnsembleState, FunctionalHamiltonian, HamiltonianKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct GhostCouplingReport {
    pub times: Vec<f64>,
    /// `int P (dS/dx)^2 / 2M` for the hybrid run.
    pub kinetic: Vec<f64>,
    /// Same with `hbar = 0`.
    pub control_kinetic: Vec<f64>,
    /// `sum rho(x, k) k^2 / 2M` from the binned marginal of the hybrid run.
    pub binned_kinetic: Vec<f64>,
    /// `max_t |K(t) - K(0)| / K(0)`.
    pub relative_drift: f64,
    pub control_relative_drift: f64,
    pub initial_separability_defect: f64,
    pub evolution: EvolutionSummary,
    pub control_evolution: EvolutionSummary,
}

/// `int P (d S / d x)^2 / 2M` over the leading axis.
pub fn classical_kinetic_energy(state: &EnsembleState, mass: f64) -> Result<f64> {
    let g = momentum_field(state)?;
    let p = state.density();
    Ok(g.iter()
        .zip(p.values())
        .map(|(g, p)| p * g * g)
        .sum::<f64>()
        * state.domain().cell_volume()
        / (2.0 * mass))
}

fn relative_drift(series: &[f64]) -> f64 {
    let k0 = series[0];
    series.iter().map(|k| (k - k0).abs()).fold(0.0, f64::max) / k0.abs().max(f64::MIN_POSITIVE)
}

/// Runs the hybrid flow and its `hbar = 0` control, sampling every `sample_every` steps.
pub fn ghost_coupling_experiment(
    state: &EnsembleState,
    h: &FunctionalHamiltonian,
    dt: f64,
    steps: usize,
    sample_every: usize,
) -> Result<GhostCouplingReport> {
    if h.kind != HamiltonianKind::Hybrid || !h.potential.is_zero() {
        return Err(Error::InvalidParameter(
            "ghost coupling needs a hybrid Hamiltonian with V = 0".into(),
        ));
    }
    let every = sample_every.max(1);
    let mass = h.classical_mass;
    let binning = KBinning::from_state(state, 64, 1.5)?;
    let opts = EvolveOptions::default();

    let mut times = Vec::new();
    let mut kinetic = Vec::new();
    let mut binned_kinetic = Vec::new();
    let run = evolve_with(state, h, dt, steps, &opts, |step, st| {
        if step % every == 0 || step == steps {
            times.push(step as f64 * dt);
            kinetic.push(classical_kinetic_energy(st, mass)?);
            binned_kinetic.push(marginal_rho(st, h, binning)?.k_moment(2) / (2.0 * mass));
        }
        Ok(())
    })?;

    let control_h = h.clone().with_hbar(0.0);
    let mut control_kinetic = Vec::new();
    let control = evolve_with(state, &control_h, dt, steps, &opts, |step, st| {
        if step % every == 0 || step == steps {
            control_kinetic.push(classical_kinetic_energy(st, mass)?);
        }
        Ok(())
    })?;

    Ok(GhostCouplingReport {
        relative_drift: relative_drift(&kinetic),
        control_relative_drift: relative_drift(&control_kinetic),
        initial_separability_defect: separability_defect(state)?,
        times,
        kinetic,
        control_kinetic,
        binned_kinetic,
        evolution: run.summary(),
        control_evolution: control.summary(),
    })
}
