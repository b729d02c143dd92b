use std::f64::consts::PI;

use hybridlab::ensemble::{
    cfl_limit, entangled_spin_fixture, evolve_with, free_spin_energy, free_spin_energy_along,
    ghost_coupling_experiment, madelung_roundtrip, marginal_rho, separability_defect,
    separable_spin_fixture, spin_hybrid_observables, Component, EnsembleState, EvolveOptions,
    FunctionalHamiltonian, HamiltonianKind, KBinning, Potential, Regularization,
};
use hybridlab::expr::{Expr, Var};
use hybridlab::phase_grid::{Domain, Grid1D, GridField};
use serde::Deserialize;
use serde_json::{json, Value};

use super::{invalid, json, normalize, random_unit, require, Context, Scenario};
use crate::error::CliResult;

/// Steps and step size covering `duration` under the stability bound.
fn schedule(d: &Domain, h: &FunctionalHamiltonian, duration: f64, cfl: f64) -> (usize, f64) {
    let limit = cfl_limit(d, h, cfl).unwrap_or(duration / 1000.0);
    let steps = ((duration / limit).ceil() as usize).max(1);
    (steps, duration / steps as f64)
}

fn csv_of(write: impl FnOnce(&mut Vec<u8>) -> hybridlab::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MadelungParams {
    /// Grid sizes, each compared with the next.
    pub points: Vec<usize>,
    pub q0: f64,
    pub p0: f64,
    pub extent: f64,
    pub mass: f64,
    pub hbar: f64,
    pub omega: f64,
    pub duration: f64,
    pub cfl: f64,
}

impl Default for MadelungParams {
    fn default() -> Self {
        Self {
            points: vec![256, 512],
            q0: 0.5,
            p0: 0.5,
            extent: 6.0,
            mass: 1.0,
            hbar: 1.0,
            omega: 1.0,
            duration: PI,
            cfl: 0.2,
        }
    }
}

pub struct Madelung;

impl Scenario for Madelung {
    type Params = MadelungParams;

    fn check(p: &MadelungParams) -> CliResult<()> {
        require(
            !p.points.is_empty() && p.points.iter().all(|n| *n >= 16),
            "need grid sizes of at least 16",
        )?;
        require(
            p.mass > 0.0 && p.hbar > 0.0 && p.omega > 0.0,
            "mass, hbar and omega must be positive",
        )?;
        require(
            p.extent > 0.0 && p.duration > 0.0 && p.cfl > 0.0 && p.cfl <= 0.2,
            "need extent, duration > 0 and 0 < cfl <= 0.2",
        )
    }

    fn run(p: MadelungParams, ctx: &mut Context) -> CliResult<Value> {
        // Ground-state width for the given mass, frequency and hbar.
        let width2 = p.hbar / (p.mass * p.omega);
        let mut reports = Vec::new();
        for &n in &p.points {
            let d = Domain::new(vec![Grid1D::bounded(n, -p.extent, p.extent)?])?;
            let l = GridField::from_fn(&d, |c| {
                -(c[0] - p.q0).powi(2) / width2 - 0.5 * (PI * width2).ln()
            })?;
            let s = GridField::from_fn(&d, |c| p.p0 * c[0])?;
            let v = GridField::from_fn(&d, |c| 0.5 * p.mass * p.omega * p.omega * c[0] * c[0])?;
            let st = EnsembleState::normalized(vec![Component::new(l, s)?])?;
            let h = FunctionalHamiltonian::quantum(p.mass, p.hbar)?
                .with_potential(Potential::Static(v));
            let (steps, dt) = schedule(&d, &h, p.duration, p.cfl);
            reports.push(madelung_roundtrip(&st, &h, dt, steps)?);
        }
        ctx.table(
            "madelung.csv",
            &["points", "dt", "steps", "density_l2", "gradient_l2"],
            reports.iter().map(|r| {
                vec![
                    r.points as f64,
                    r.dt,
                    r.steps as f64,
                    r.density_l2,
                    r.gradient_l2,
                ]
            }),
        )?;
        let ratios: Vec<Value> = reports
            .windows(2)
            .map(|w| json!({"density": w[0].density_l2 / w[1].density_l2, "gradient": w[0].gradient_l2 / w[1].gradient_l2}))
            .collect();
        Ok(json!({ "runs": json(&reports)?, "refinement_ratios": ratios }))
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridBoxParams {
    pub n: usize,
    pub x_range: [f64; 2],
    pub q_range: [f64; 2],
    /// Classical momentum of the plane-wave action `S = k0 x`.
    pub k0: f64,
    pub classical_mass: f64,
    pub quantum_mass: f64,
    pub hbar: f64,
    pub duration: f64,
    pub sample_every: usize,
}

impl Default for HybridBoxParams {
    fn default() -> Self {
        Self {
            n: 48,
            x_range: [-6.0, 7.0],
            q_range: [-6.5, 6.5],
            k0: 0.8,
            classical_mass: 1.0,
            quantum_mass: 1.0,
            hbar: 1.0,
            duration: 1.0,
            sample_every: 20,
        }
    }
}

impl HybridBoxParams {
    fn check(&self) -> CliResult<()> {
        require(self.n >= 16, "need n >= 16")?;
        require(
            self.x_range[1] > self.x_range[0] && self.q_range[1] > self.q_range[0],
            "ranges must be increasing",
        )?;
        require(
            self.classical_mass > 0.0 && self.quantum_mass > 0.0 && self.hbar >= 0.0,
            "masses > 0 and hbar >= 0",
        )?;
        require(self.duration > 0.0, "duration must be positive")
    }

    fn domain(&self) -> CliResult<Domain> {
        Ok(Domain::new(vec![
            Grid1D::bounded(self.n, self.x_range[0], self.x_range[1])?,
            Grid1D::bounded(self.n, self.q_range[0], self.q_range[1])?,
        ])?)
    }

    fn hamiltonian(&self) -> CliResult<FunctionalHamiltonian> {
        Ok(FunctionalHamiltonian::hybrid(
            self.classical_mass,
            self.quantum_mass,
            self.hbar,
        )?)
    }

    /// Unit Gaussians in `x` and `q` with correlation `rho`.
    fn state(&self, rho: f64) -> CliResult<EnsembleState> {
        let d = self.domain()?;
        let l = GridField::from_fn(&d, |c| {
            -(c[0] * c[0] - 2.0 * rho * c[0] * c[1] + c[1] * c[1]) / (2.0 * (1.0 - rho * rho))
        })?;
        let s = GridField::from_fn(&d, |c| self.k0 * c[0])?;
        Ok(EnsembleState::normalized(vec![Component::new(l, s)?])?)
    }
}

pub struct Separability;

impl Scenario for Separability {
    type Params = HybridBoxParams;

    fn check(p: &HybridBoxParams) -> CliResult<()> {
        p.check()
    }

    fn run(p: HybridBoxParams, ctx: &mut Context) -> CliResult<Value> {
        let st = p.state(0.0)?;
        let h = p.hamiltonian()?;
        let (steps, dt) = schedule(st.domain(), &h, p.duration, 0.2);
        let every = p.sample_every.max(1);
        let mut series = Vec::new();
        let run = evolve_with(&st, &h, dt, steps, &EvolveOptions::default(), |step, s| {
            if step % every == 0 || step == steps {
                series.push(vec![
                    step as f64 * dt,
                    separability_defect(s)?,
                    s.total_mass(),
                ]);
            }
            Ok(())
        })?;
        let max_defect = series.iter().map(|r| r[1]).fold(0.0, f64::max);
        ctx.table(
            "separability.csv",
            &["time", "separability_defect", "mass"],
            series,
        )?;
        let binning = KBinning::from_state(&st, 64, 1.5)?;
        let rho = marginal_rho(&run.state, &h, binning)?;
        ctx.add("marginal_rho.csv", csv_of(|b| rho.write_csv(b))?);
        Ok(json!({
            "max_separability_defect": max_defect,
            "marginal_total": rho.total(),
            "marginal_overflow": rho.overflow,
            "evolution": json(&run.summary())?,
        }))
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GhostParams {
    #[serde(flatten)]
    pub grid: HybridBoxParams,
    /// Correlation of the entangled Gaussian.
    pub rho: f64,
    /// Duration of the separable reference run.
    pub separable_duration: f64,
}

impl Default for GhostParams {
    fn default() -> Self {
        Self {
            grid: HybridBoxParams {
                duration: 0.5,
                sample_every: 10,
                ..Default::default()
            },
            rho: 0.6,
            separable_duration: 1.0,
        }
    }
}

pub struct Ghost;

impl Scenario for Ghost {
    type Params = GhostParams;

    fn check(p: &GhostParams) -> CliResult<()> {
        p.grid.check()?;
        require(p.rho.abs() < 1.0, "correlation must lie in (-1, 1)")?;
        require(
            p.separable_duration > 0.0,
            "separable_duration must be positive",
        )
    }

    fn run(p: GhostParams, ctx: &mut Context) -> CliResult<Value> {
        let h = p.grid.hamiltonian()?;
        let st = p.grid.state(p.rho)?;
        let (steps, dt) = schedule(st.domain(), &h, p.grid.duration, 0.2);
        let r = ghost_coupling_experiment(&st, &h, dt, steps, p.grid.sample_every)?;
        let sep = p.grid.state(0.0)?;
        let (ssteps, sdt) = schedule(sep.domain(), &h, p.separable_duration, 0.2);
        let s = ghost_coupling_experiment(&sep, &h, sdt, ssteps, p.grid.sample_every)?;
        ctx.table(
            "ghost_coupling.csv",
            &["time", "kinetic", "control_kinetic", "binned_kinetic"],
            (0..r.times.len()).map(|i| {
                vec![
                    r.times[i],
                    r.kinetic[i],
                    r.control_kinetic[i],
                    r.binned_kinetic[i],
                ]
            }),
        )?;
        ctx.table(
            "ghost_separable.csv",
            &["time", "kinetic", "control_kinetic", "binned_kinetic"],
            (0..s.times.len()).map(|i| {
                vec![
                    s.times[i],
                    s.kinetic[i],
                    s.control_kinetic[i],
                    s.binned_kinetic[i],
                ]
            }),
        )?;
        Ok(json!({
            "relative_drift": r.relative_drift,
            "control_relative_drift": r.control_relative_drift,
            "binned_relative_drift": relative(&r.binned_kinetic),
            "separable_relative_drift": s.relative_drift,
            "separable_control_relative_drift": s.control_relative_drift,
            "initial_separability_defect": r.initial_separability_defect,
            "evolution": json(&r.evolution)?,
            "control_evolution": json(&r.control_evolution)?,
            "separable_evolution": json(&s.evolution)?,
        }))
    }
}

fn relative(series: &[f64]) -> f64 {
    let k0 = series[0];
    series.iter().map(|k| (k - k0).abs()).fold(0.0, f64::max) / k0.abs()
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinParams {
    pub n: usize,
    pub mass: f64,
    pub hbar: f64,
    /// Number of quantization axes; the first is z, the rest are drawn from the seed.
    pub axes: usize,
}

impl Default for SpinParams {
    fn default() -> Self {
        Self {
            n: 32,
            mass: 1.0,
            hbar: 1.0,
            axes: 10,
        }
    }
}

pub struct SpinAngularMomentum;

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl Scenario for SpinAngularMomentum {
    type Params = SpinParams;

    fn check(p: &SpinParams) -> CliResult<()> {
        require(p.n >= 12 && p.n <= 64, "need 12 <= n <= 64")?;
        require(
            p.mass > 0.0 && p.hbar > 0.0,
            "mass and hbar must be positive",
        )?;
        require(p.axes >= 2, "need at least two axes")
    }

    fn run(p: SpinParams, ctx: &mut Context) -> CliResult<Value> {
        let h = FunctionalHamiltonian::free_spin(p.mass, p.hbar)?;
        let ent = entangled_spin_fixture(p.n)?;
        let sep = separable_spin_fixture(p.n)?;
        let oe = spin_hybrid_observables(&ent, &h)?;
        let os = spin_hybrid_observables(&sep, &h)?;
        let mut rng = ctx.rng();
        let mut axes = vec![[0.0, 0.0, 1.0]];
        axes.extend((1..p.axes).map(|_| random_unit(&mut rng)));
        let energies: Vec<f64> = axes
            .iter()
            .map(|a| free_spin_energy_along(&ent, &h, normalize(*a)?).map_err(Into::into))
            .collect::<CliResult<_>>()?;
        let spread = energies.iter().cloned().fold(f64::MIN, f64::max)
            - energies.iter().cloned().fold(f64::MAX, f64::min);
        ctx.table(
            "spin_energy_axes.csv",
            &["axis_x", "axis_y", "axis_z", "energy"],
            axes.iter()
                .zip(&energies)
                .map(|(a, e)| vec![a[0], a[1], a[2], *e]),
        )?;
        Ok(json!({
            "n": p.n,
            "entangled": json(&oe)?,
            "separable": json(&os)?,
            "entangled_rates": {"d_orbital": norm(oe.d_orbital), "d_spin": norm(oe.d_spin), "d_total": norm(oe.d_total)},
            "separable_rates": {"d_orbital": norm(os.d_orbital), "d_spin": norm(os.d_spin), "d_total": norm(os.d_total)},
            "stored_energy": free_spin_energy(&ent, &h)?,
            "axis_energy_spread": spread,
        }))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub periodic: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Masses {
    #[serde(default = "one")]
    pub classical: f64,
    #[serde(default = "one")]
    pub quantum: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Masses {
    fn default() -> Self {
        Self {
            classical: 1.0,
            quantum: 1.0,
        }
    }
}

/// Free-form ensemble run. Classical axes are named `x`, quantum axes `q`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericParams {
    pub kind: HamiltonianKind,
    pub grids: Vec<GridSpec>,
    #[serde(default)]
    pub masses: Masses,
    #[serde(default)]
    pub hbar: f64,
    #[serde(default = "zero_expr")]
    pub potential: String,
    #[serde(rename = "initial_P")]
    pub initial_p: String,
    #[serde(rename = "initial_S", default = "zero_expr")]
    pub initial_s: String,
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "ten")]
    pub sample_every: usize,
    /// Raise sampled `P` below the floor instead of failing.
    #[serde(default)]
    pub regularize: bool,
}

fn zero_expr() -> String {
    "0".into()
}

fn ten() -> usize {
    10
}

impl GenericParams {
    fn vars(&self) -> CliResult<Vec<Var>> {
        match (self.kind, self.grids.len()) {
            (HamiltonianKind::Classical, 1) => Ok(vec![Var::X]),
            (HamiltonianKind::Quantum, 1) => Ok(vec![Var::Q]),
            (HamiltonianKind::Hybrid, 2) => Ok(vec![Var::X, Var::Q]),
            (HamiltonianKind::FreeSpin, _) => Err(invalid(
                "the free-spin kind runs through spin-angular-momentum",
            )),
            (k, n) => Err(invalid(format!(
                "{k} kind takes {} grid(s), got {n}",
                if k == HamiltonianKind::Hybrid { 2 } else { 1 }
            ))),
        }
    }

    fn hamiltonian(&self) -> CliResult<FunctionalHamiltonian> {
        let (mc, mq) = (self.masses.classical, self.masses.quantum);
        Ok(match self.kind {
            HamiltonianKind::Classical => FunctionalHamiltonian::classical(mc)?,
            HamiltonianKind::Quantum => FunctionalHamiltonian::quantum(mq, self.hbar)?,
            _ => FunctionalHamiltonian::hybrid(mc, mq, self.hbar)?,
        })
    }

    fn domain(&self) -> CliResult<Domain> {
        let axes = self
            .grids
            .iter()
            .map(|g| Grid1D::new(g.n, g.min, g.max, g.periodic))
            .collect::<hybridlab::Result<_>>()?;
        Ok(Domain::new(axes)?)
    }

    fn expr(&self, src: &str, what: &str, vars: &[Var], time: bool) -> CliResult<Expr> {
        let e = Expr::parse(src).map_err(|e| invalid(format!("{what}: {e}")))?;
        for v in [Var::X, Var::Q, Var::T] {
            let allowed = vars.contains(&v) || (time && v == Var::T);
            require(
                allowed || !e.depends_on(v),
                &format!("{what} uses a variable this kind does not have"),
            )?;
        }
        Ok(e)
    }
}

fn at(e: &Expr, vars: &[Var], c: &[f64], t: f64) -> f64 {
    let mut env = [0.0, 0.0, t];
    for (v, x) in vars.iter().zip(c) {
        env[match v {
            Var::X => 0,
            Var::Q => 1,
            Var::T => 2,
        }] = *x;
    }
    e.eval(env)
}

pub struct Generic;

impl Scenario for Generic {
    type Params = GenericParams;

    fn check(p: &GenericParams) -> CliResult<()> {
        let vars = p.vars()?;
        p.hamiltonian()?;
        p.domain()?;
        p.expr(&p.potential, "potential", &vars, true)?;
        p.expr(&p.initial_p, "initial_P", &vars, false)?;
        p.expr(&p.initial_s, "initial_S", &vars, false)?;
        require(
            p.dt > 0.0 && p.dt.is_finite() && p.steps >= 1,
            "need dt > 0 and steps >= 1",
        )
    }

    fn run(p: GenericParams, ctx: &mut Context) -> CliResult<Value> {
        let vars = p.vars()?;
        let d = p.domain()?;
        let pe = p.expr(&p.initial_p, "initial_P", &vars, false)?;
        let se = p.expr(&p.initial_s, "initial_S", &vars, false)?;
        let ve = p.expr(&p.potential, "potential", &vars, true)?;
        let action = GridField::from_fn(&d, |c| at(&se, &vars, c, 0.0))?;
        let raw = GridField::from_fn(&d, |c| at(&pe, &vars, c, 0.0))?;
        let mass = raw.integral();
        require(
            mass > 0.0 && mass.is_finite(),
            "initial_P has no positive mass on the grid",
        )?;
        // log(exp(u)) simplifies to u, so Gaussian-type data never meets the floor.
        let le = pe.log();
        let log_p = GridField::from_fn(&d, |c| at(&le, &vars, c, 0.0))?;
        let st = if log_p.values().iter().all(|v| v.is_finite()) {
            EnsembleState::normalized(vec![Component::new(log_p, action)?])?
        } else {
            let reg = Regularization {
                enabled: p.regularize,
                ..Default::default()
            };
            EnsembleState::from_density(&raw.map(|v| v / mass), action, reg)?
        };

        let potential = if ve.is_zero() {
            Potential::Zero
        } else if ve.depends_on(Var::T) {
            let (dd, vv, ee) = (d.clone(), vars.clone(), ve.clone());
            Potential::TimeDependent(std::sync::Arc::new(move |t| {
                GridField::from_fn(&dd, |c| at(&ee, &vv, c, t))
            }))
        } else {
            Potential::Static(GridField::from_fn(&d, |c| at(&ve, &vars, c, 0.0))?)
        };
        let h = p.hamiltonian()?.with_potential(potential);
        let every = p.sample_every.max(1);
        let mut rows = Vec::new();
        let run = evolve_with(
            &st,
            &h,
            p.dt,
            p.steps,
            &EvolveOptions::default(),
            |step, s| {
                if step % every == 0 || step == p.steps {
                    let t = step as f64 * p.dt;
                    rows.push(vec![
                        t,
                        s.total_mass(),
                        hybridlab::ensemble::hamiltonian_value(s, &h, t)?,
                    ]);
                }
                Ok(())
            },
        )?;
        ctx.table("ensemble.csv", &["time", "mass", "energy"], rows)?;
        let names: Vec<&str> = vars
            .iter()
            .map(|v| if *v == Var::X { "x" } else { "q" })
            .chain(["P", "S"])
            .collect();
        let mut snap = Vec::new();
        write_snapshot(&run.state.density(), run.state.action(), &names, &mut snap)?;
        ctx.add("final_fields.csv", snap);
        Ok(json!({
            "kind": p.kind,
            "initial_mass_on_grid": mass,
            "floored_cells": st.floored_cells(),
            "evolution": json(&run.summary())?,
        }))
    }
}

fn write_snapshot(
    p: &GridField,
    s: &GridField,
    names: &[&str],
    out: &mut Vec<u8>,
) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| crate::error::CliError::Io(e.to_string());
    w.write_record(names).map_err(io)?;
    let d = p.domain();
    for i in 0..d.len() {
        let mut rec: Vec<String> = d.coords(i).iter().map(|c| format!("{c:.12e}")).collect();
        rec.push(format!("{:.12e}", p.values()[i]));
        rec.push(format!("{:.12e}", s.values()[i]));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| crate::error::CliError::Io(e.to_string()))
}
