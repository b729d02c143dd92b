//! RK4 integration of the log-form ensemble equations.
//!
//! For every component, with `a` running over classical axes (mass `M`) and
//! quantum axes (mass `m`):
//!
//! ```text
//! L_t = -sum_a (L_a S_a + S_aa) / mass_a
//! S_t = -sum_a S_a^2 / (2 mass_a) + sum_quantum hbar^2/(8m) (L_a^2 + 2 L_aa) - V
//! ```

use rayon::prelude::*;
use serde::Serialize;

use super::{Component, EnsembleState, FunctionalHamiltonian, Regularization};
use crate::error::{Error, Result};
use crate::phase_grid::{Domain, GridField, Stencil, PARALLEL_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    /// Factor `c` of the bound `dt <= c h^2 min(M, m) / hbar`.
    pub cfl_factor: f64,
    pub regularization: Regularization,
    /// Evaluate the Hamiltonian functional after every step.
    pub track_energy: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            cfl_factor: 0.2,
            regularization: Regularization::default(),
            track_energy: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionReport {
    pub state: EnsembleState,
    pub time: f64,
    pub steps: usize,
    pub initial_mass: f64,
    /// Largest `|int P - initial mass|` seen over the run.
    pub max_mass_drift: f64,
    pub initial_energy: f64,
    /// Largest `|H - H0| / max(|H0|, tiny)`; zero when energy tracking is off.
    pub max_energy_drift: f64,
    /// Largest number of cells with `P < floor` seen at any step.
    pub cells_below_floor: usize,
}

/// Summary written into scenario reports.
#[derive(Clone, Debug, Serialize)]
pub struct EvolutionSummary {
    pub time: f64,
    pub steps: usize,
    pub max_mass_drift: f64,
    pub max_energy_drift: f64,
    pub cells_below_floor: usize,
}

impl EvolutionReport {
    pub fn summary(&self) -> EvolutionSummary {
        EvolutionSummary {
            time: self.time,
            steps: self.steps,
            max_mass_drift: self.max_mass_drift,
            max_energy_drift: self.max_energy_drift,
            cells_below_floor: self.cells_below_floor,
        }
    }
}

/// Cached first and second derivative stencils for every axis.
pub(crate) struct Derivatives {
    shape: Vec<usize>,
    first: Vec<Stencil>,
    second: Vec<Stencil>,
}

impl Derivatives {
    pub(crate) fn new(domain: &Domain) -> Result<Self> {
        let mut first = Vec::with_capacity(domain.ndim());
        let mut second = Vec::with_capacity(domain.ndim());
        for g in domain.axes() {
            first.push(Stencil::new(g, 1)?);
            second.push(Stencil::new(g, 2)?);
        }
        Ok(Self {
            shape: domain.shape(),
            first,
            second,
        })
    }

    pub(crate) fn d1(&self, v: &[f64], axis: usize) -> Vec<f64> {
        self.first[axis].apply(v, &self.shape, axis)
    }

    pub(crate) fn d2(&self, v: &[f64], axis: usize) -> Vec<f64> {
        self.second[axis].apply(v, &self.shape, axis)
    }
}

fn par_zip3(out: &mut [f64], f: impl Fn(usize, &mut f64) + Sync + Send) {
    if out.len() >= PARALLEL_THRESHOLD {
        out.par_iter_mut().enumerate().for_each(|(i, o)| f(i, o));
    } else {
        out.iter_mut().enumerate().for_each(|(i, o)| f(i, o));
    }
}

/// Right-hand sides `(L_t, S_t)` of one component.
pub(crate) fn component_rhs(
    l: &[f64],
    s: &[f64],
    h: &FunctionalHamiltonian,
    ops: &Derivatives,
    v: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>) {
    let n = l.len();
    let mut lt = vec![0.0; n];
    let mut st = vec![0.0; n];
    if let Some(v) = v {
        st.iter_mut().zip(v).for_each(|(o, v)| *o = -v);
    }
    for axis in 0..ops.shape.len() {
        let (mass, quantum) = h.axis_role(axis);
        let la = ops.d1(l, axis);
        let sa = ops.d1(s, axis);
        let saa = ops.d2(s, axis);
        let inv = 1.0 / mass;
        par_zip3(&mut lt, |i, o| *o -= inv * (la[i] * sa[i] + saa[i]));
        if quantum && h.hbar > 0.0 {
            let laa = ops.d2(l, axis);
            let q = h.hbar * h.hbar / (8.0 * mass);
            par_zip3(&mut st, |i, o| {
                *o += -0.5 * inv * sa[i] * sa[i] + q * (la[i] * la[i] + 2.0 * laa[i])
            });
        } else {
            par_zip3(&mut st, |i, o| *o -= 0.5 * inv * sa[i] * sa[i]);
        }
    }
    (lt, st)
}

/// Time derivatives `(L_t, S_t)` of every component at time `t`.
pub fn rhs(
    state: &EnsembleState,
    h: &FunctionalHamiltonian,
    t: f64,
) -> Result<Vec<(GridField, GridField)>> {
    h.check_state(state)?;
    let domain = state.domain();
    let ops = Derivatives::new(domain)?;
    let v = h.potential.sample(domain, t)?;
    Ok(state
        .components()
        .iter()
        .map(|c| {
            let (lt, st) = component_rhs(
                c.log_density.values(),
                c.action.values(),
                h,
                &ops,
                v.as_ref().map(GridField::values),
            );
            (
                GridField::from_parts_unchecked(domain.clone(), lt),
                GridField::from_parts_unchecked(domain.clone(), st),
            )
        })
        .collect())
}

pub(crate) fn energy_with(
    state: &EnsembleState,
    h: &FunctionalHamiltonian,
    ops: &Derivatives,
    v: Option<&GridField>,
) -> f64 {
    let domain = state.domain();
    let mut total = 0.0;
    for c in state.components() {
        let l = c.log_density.values();
        let s = c.action.values();
        let mut density: Vec<f64> = v.map_or_else(|| vec![0.0; l.len()], |v| v.values().to_vec());
        for axis in 0..domain.ndim() {
            let (mass, quantum) = h.axis_role(axis);
            let sa = ops.d1(s, axis);
            if quantum && h.hbar > 0.0 {
                let la = ops.d1(l, axis);
                let q = h.hbar * h.hbar / (8.0 * mass);
                par_zip3(&mut density, |i, o| {
                    *o += sa[i] * sa[i] / (2.0 * mass) + q * la[i] * la[i]
                });
            } else {
                par_zip3(&mut density, |i, o| *o += sa[i] * sa[i] / (2.0 * mass));
            }
        }
        total += l
            .iter()
            .zip(&density)
            .map(|(l, e)| l.exp() * e)
            .sum::<f64>()
            * domain.cell_volume();
    }
    total
}

/// Value of the Hamiltonian functional `H[P, S]` at time `t`.
pub fn hamiltonian_value(state: &EnsembleState, h: &FunctionalHamiltonian, t: f64) -> Result<f64> {
    h.check_state(state)?;
    let ops = Derivatives::new(state.domain())?;
    let v = h.potential.sample(state.domain(), t)?;
    Ok(energy_with(state, h, &ops, v.as_ref()))
}

/// Largest stable step under the dispersive bound, or `None` without quantum axes.
pub fn cfl_limit(domain: &Domain, h: &FunctionalHamiltonian, factor: f64) -> Option<f64> {
    if h.hbar <= 0.0 {
        return None;
    }
    let mut limit: Option<f64> = None;
    for (axis, g) in domain.axes().iter().enumerate() {
        let (mass, quantum) = h.axis_role(axis);
        if quantum {
            let dx = g.spacing();
            let l = factor * dx * dx * mass.min(h.classical_mass) / h.hbar;
            limit = Some(limit.map_or(l, |m| m.min(l)));
        }
    }
    limit
}

pub fn evolve(
    state: &EnsembleState,
    h: &FunctionalHamiltonian,
    dt: f64,
    steps: usize,
) -> Result<EvolutionReport> {
    evolve_with(
        state,
        h,
        dt,
        steps,
        &EvolveOptions::default(),
        |_, _| Ok(()),
    )
}

/// RK4 with an observer called as `observer(step, state)` after every step
/// (and once with step 0 before the first).
pub fn evolve_with(
    state: &EnsembleState,
    h: &FunctionalHamiltonian,
    dt: f64,
    steps: usize,
    opts: &EvolveOptions,
    mut observer: impl FnMut(usize, &EnsembleState) -> Result<()>,
) -> Result<EvolutionReport> {
    h.check_state(state)?;
    if !dt.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time step {dt} is not finite"
        )));
    }
    let domain = state.domain().clone();
    if let Some(limit) = cfl_limit(&domain, h, opts.cfl_factor) {
        if dt.abs() > limit * (1.0 + 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} exceeds the stability bound {limit:.3e}"
            )));
        }
    }
    let ops = Derivatives::new(&domain)?;
    let floor_log = opts.regularization.floor.ln();
    let static_v = if h.potential.is_time_dependent() {
        None
    } else {
        h.potential.sample(&domain, 0.0)?
    };
    let sample_v = |t: f64| -> Result<Option<GridField>> {
        if h.potential.is_time_dependent() {
            h.potential.sample(&domain, t)
        } else {
            Ok(static_v.clone())
        }
    };

    let mut fields: Vec<(Vec<f64>, Vec<f64>)> = state
        .components()
        .iter()
        .map(|c| (c.log_density.values().to_vec(), c.action.values().to_vec()))
        .collect();
    let initial_mass = state.total_mass();
    let v_init = sample_v(0.0)?;
    let initial_energy = energy_with(state, h, &ops, v_init.as_ref());
    let energy_scale = initial_energy.abs().max(f64::MIN_POSITIVE);
    let mut report = EvolutionReport {
        state: state.clone(),
        time: 0.0,
        steps,
        initial_mass,
        max_mass_drift: 0.0,
        initial_energy,
        max_energy_drift: 0.0,
        cells_below_floor: count_below(&fields, floor_log),
    };
    observer(0, state)?;

    let eval = |f: &[(Vec<f64>, Vec<f64>)], v: Option<&GridField>| -> Vec<(Vec<f64>, Vec<f64>)> {
        f.iter()
            .map(|(l, s)| component_rhs(l, s, h, &ops, v.map(GridField::values)))
            .collect()
    };
    let axpy = |base: &[(Vec<f64>, Vec<f64>)],
                k: &[(Vec<f64>, Vec<f64>)],
                a: f64|
     -> Vec<(Vec<f64>, Vec<f64>)> {
        base.iter()
            .zip(k)
            .map(|((l, s), (kl, ks))| {
                (
                    l.iter().zip(kl).map(|(x, y)| x + a * y).collect(),
                    s.iter().zip(ks).map(|(x, y)| x + a * y).collect(),
                )
            })
            .collect()
    };

    let mut t = 0.0;
    for step in 1..=steps {
        let v0 = sample_v(t)?;
        let vh = if h.potential.is_time_dependent() {
            sample_v(t + 0.5 * dt)?
        } else {
            v0.clone()
        };
        let v1 = if h.potential.is_time_dependent() {
            sample_v(t + dt)?
        } else {
            v0.clone()
        };
        let k1 = eval(&fields, v0.as_ref());
        let k2 = eval(&axpy(&fields, &k1, 0.5 * dt), vh.as_ref());
        let k3 = eval(&axpy(&fields, &k2, 0.5 * dt), vh.as_ref());
        let k4 = eval(&axpy(&fields, &k3, dt), v1.as_ref());
        for (f, ((a, b), (cc, d))) in fields
            .iter_mut()
            .zip(k1.iter().zip(&k2).zip(k3.iter().zip(&k4)))
        {
            for i in 0..f.0.len() {
                f.0[i] += dt / 6.0 * (a.0[i] + 2.0 * b.0[i] + 2.0 * cc.0[i] + d.0[i]);
                f.1[i] += dt / 6.0 * (a.1[i] + 2.0 * b.1[i] + 2.0 * cc.1[i] + d.1[i]);
            }
        }
        t = step as f64 * dt;
        if fields
            .iter()
            .any(|(l, s)| l.iter().chain(s).any(|v| v.is_nan() || *v == f64::INFINITY))
        {
            return Err(Error::NonFinite(format!("ensemble fields at step {step}")));
        }
        report.cells_below_floor = report
            .cells_below_floor
            .max(count_below(&fields, floor_log));
        if opts.regularization.enabled {
            for (l, _) in &mut fields {
                l.iter_mut().for_each(|v| *v = v.max(floor_log));
            }
        }
        let current = to_state(&domain, &fields, state);
        report.max_mass_drift = report
            .max_mass_drift
            .max((current.total_mass() - initial_mass).abs());
        if opts.track_energy {
            let e = energy_with(&current, h, &ops, v1.as_ref());
            report.max_energy_drift = report
                .max_energy_drift
                .max((e - initial_energy).abs() / energy_scale);
        }
        observer(step, &current)?;
        if step == steps {
            report.state = current;
        }
    }
    report.time = t;
    Ok(report)
}

fn count_below(fields: &[(Vec<f64>, Vec<f64>)], floor_log: f64) -> usize {
    fields
        .iter()
        .map(|(l, _)| l.iter().filter(|v| **v < floor_log).count())
        .sum()
}

fn to_state(
    domain: &Domain,
    fields: &[(Vec<f64>, Vec<f64>)],
    template: &EnsembleState,
) -> EnsembleState {
    let comps = fields
        .iter()
        .map(|(l, s)| Component {
            log_density: GridField::from_parts_unchecked(domain.clone(), l.clone()),
            action: GridField::from_parts_unchecked(domain.clone(), s.clone()),
        })
        .collect();
    template.replace_components(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Potential;
    use crate::phase_grid::{evolve_characteristics, AnalyticHamiltonian, ClassicalPoint, Grid1D};

    fn line(n: usize, a: f64) -> Domain {
        Domain::new(vec![Grid1D::bounded(n, -a, a).unwrap()]).unwrap()
    }

    fn gaussian(domain: &Domain, center: f64, width: f64, k0: f64) -> EnsembleState {
        let norm = (2.0 * std::f64::consts::PI * width * width).ln() * 0.5;
        let l = GridField::from_fn(domain, |c| {
            -(c[0] - center).powi(2) / (2.0 * width * width) - norm
        })
        .unwrap();
        let s = GridField::from_fn(domain, |c| k0 * c[0]).unwrap();
        EnsembleState::from_log_density(l, s).unwrap()
    }

    #[test]
    fn classical_translation_matches_characteristics() {
        let d = line(256, 8.0);
        let (k0, mass) = (1.5, 2.0);
        let st = gaussian(&d, -1.0, 0.7, k0);
        let h = FunctionalHamiltonian::classical(mass).unwrap();
        let out = evolve(&st, &h, 1e-3, 1000).unwrap();
        // Each grid point is carried back along its characteristic.
        let free = AnalyticHamiltonian {
            value: move |_x: &[f64], k: &[f64]| k[0] * k[0] / (2.0 * mass),
            gradient: move |_x: &[f64], k: &[f64]| (vec![0.0], vec![k[0] / mass]),
        };
        let ens: Vec<_> = (0..d.len())
            .map(|i| d.coords(i))
            .map(|x| (ClassicalPoint::new(vec![x[0]], vec![k0]).unwrap(), 1.0))
            .collect();
        let moved = evolve_characteristics(&ens, &free, -1e-3, 1000).unwrap();
        let mut err = 0.0;
        for (i, (pt, _)) in moved.iter().enumerate() {
            let x = pt.x[0];
            let w = 0.7f64;
            let exact = (-(x + 1.0).powi(2) / (2.0 * w * w)).exp()
                / (2.0 * std::f64::consts::PI * w * w).sqrt();
            err += (out.state.density().values()[i] - exact).powi(2);
        }
        let err = (err * d.cell_volume()).sqrt();
        assert!(err < 1e-3, "L2 error {err}");
        assert!(out.max_mass_drift < 1e-6);
    }

    #[test]
    fn coherent_state_conserves_mass_and_energy() {
        let d = line(128, 6.0);
        let st = gaussian(&d, 1.0, std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let v = GridField::from_fn(&d, |c| 0.5 * c[0] * c[0]).unwrap();
        let h = FunctionalHamiltonian::quantum(1.0, 1.0)
            .unwrap()
            .with_potential(Potential::Static(v));
        let dt = 0.2 * d.axes()[0].spacing().powi(2);
        let steps = (std::f64::consts::PI / dt).ceil() as usize;
        let dt = std::f64::consts::PI / steps as f64;
        let out = evolve(&st, &h, dt, steps).unwrap();
        assert!(out.max_mass_drift < 1e-6, "{}", out.max_mass_drift);
        assert!(out.max_energy_drift < 1e-5, "{}", out.max_energy_drift);
        // Half a period maps the packet centre from 1 to -1.
        let p = out.state.density();
        let mean: f64 = (0..d.len())
            .map(|i| d.coords(i))
            .zip(p.values())
            .map(|(c, p)| c[0] * p)
            .sum::<f64>()
            * d.cell_volume();
        assert!((mean + 1.0).abs() < 1e-5, "{mean}");
    }

    #[test]
    fn cfl_bound_is_enforced() {
        let d = line(64, 8.0);
        let st = gaussian(&d, 0.0, 1.0, 0.0);
        let h = FunctionalHamiltonian::quantum(1.0, 1.0).unwrap();
        assert!(evolve(&st, &h, 1.0, 1).is_err());
    }
}
