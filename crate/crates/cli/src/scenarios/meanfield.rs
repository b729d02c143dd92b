use hybridlab::consistency_lab::quantum_consistency_test;
use hybridlab::hilbert::{DensityMatrix, MixtureDecomposition, PureState};
use hybridlab::meanfield::{
    density_nonlinearity, finite_difference_rate, run_meanfield, spin_counterexample,
    MeanFieldState, MomentumSpin, OperatorFunction, SpinOrbitHamiltonian,
};
use hybridlab::phase_grid::ClassicalPoint;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{normalize, random_unit, require, Context, Scenario};
use crate::error::CliResult;

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinParams {
    pub lambda: f64,
    pub x0: [f64; 3],
    pub k0: [f64; 3],
    pub hbar: f64,
    /// Number of axes; the first is x, the rest are drawn from the seed.
    pub axes: usize,
    pub fd_step: f64,
    pub dt: f64,
    pub trajectory_steps: usize,
    pub record_every: usize,
    /// Start of the long trajectory; the counterexample start runs away in finite time.
    pub trajectory_x0: [f64; 3],
    pub trajectory_k0: [f64; 3],
    pub trajectory_axis: [f64; 3],
}

impl Default for SpinParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            x0: [1.0, 0.0, 0.0],
            k0: [1.0, 0.0, 0.0],
            hbar: 1.0,
            axes: 10,
            fd_step: 1e-3,
            dt: 1e-3,
            trajectory_steps: 10_000,
            record_every: 100,
            trajectory_x0: [1.0, 0.2, 0.0],
            trajectory_k0: [0.3, 0.5, -0.4],
            trajectory_axis: [0.0, 0.0, 1.0],
        }
    }
}

pub struct SpinMeanField;

impl Scenario for SpinMeanField {
    type Params = SpinParams;

    fn check(p: &SpinParams) -> CliResult<()> {
        require(p.axes >= 1, "need at least one axis")?;
        require(
            p.hbar > 0.0 && p.fd_step > 0.0 && p.dt > 0.0,
            "hbar, fd_step and dt must be positive",
        )?;
        normalize(p.trajectory_axis)?;
        require(p.record_every >= 1, "record_every must be at least 1")?;
        require(
            p.lambda.is_finite()
                && p.x0
                    .iter()
                    .chain(&p.k0)
                    .chain(&p.trajectory_x0)
                    .chain(&p.trajectory_k0)
                    .all(|v| v.is_finite()),
            "inputs must be finite",
        )
    }

    fn run(p: SpinParams, ctx: &mut Context) -> CliResult<Value> {
        let mut rng = ctx.rng();
        let mut axes = vec![[1.0, 0.0, 0.0]];
        axes.extend((1..p.axes).map(|_| random_unit(&mut rng)));
        let h = SpinOrbitHamiltonian { lambda: p.lambda };
        let point = ClassicalPoint::new(p.x0.to_vec(), p.k0.to_vec())?;
        let mut rows = Vec::new();
        let mut report_rows = Vec::new();
        let (mut max_closed, mut max_fd): (f64, f64) = (0.0, 0.0);
        for n in &axes {
            let r = spin_counterexample(*n, p.lambda, p.x0, p.k0, p.hbar)?;
            let closed = -p.lambda * dot(*n, p.x0) * dot(*n, p.k0);
            let fd = 0.5
                * [PureState::spin_up(*n)?, PureState::spin_down(*n)?]
                    .into_iter()
                    .map(|psi| {
                        finite_difference_rate(
                            &MomentumSpin,
                            &MeanFieldState::new(point.clone(), psi),
                            &h,
                            p.hbar,
                            p.fd_step,
                        )
                    })
                    .sum::<hybridlab::Result<f64>>()?;
            max_closed = max_closed.max((r.mixture_rate - closed).abs());
            max_fd = max_fd.max((r.mixture_rate - fd).abs());
            rows.push(vec![
                n[0],
                n[1],
                n[2],
                r.rate_up,
                r.rate_down,
                r.mixture_rate,
                closed,
                fd,
            ]);
            report_rows.push(json!({"axis": n, "rate_up": r.rate_up, "rate_down": r.rate_down, "mixture_rate": r.mixture_rate, "finite_difference": fd}));
        }
        ctx.table(
            "spin_meanfield.csv",
            &[
                "axis_x",
                "axis_y",
                "axis_z",
                "rate_up",
                "rate_down",
                "mixture_rate",
                "closed_form",
                "finite_difference",
            ],
            rows.clone(),
        )?;
        let rates: Vec<f64> = rows.iter().map(|r| r[5]).collect();
        let spread = rates.iter().cloned().fold(f64::MIN, f64::max)
            - rates.iter().cloned().fold(f64::MAX, f64::min);

        let start = MeanFieldState::new(
            ClassicalPoint::new(p.trajectory_x0.to_vec(), p.trajectory_k0.to_vec())?,
            PureState::spin_up(normalize(p.trajectory_axis)?)?,
        );
        let obs: [(&str, &dyn OperatorFunction); 2] =
            [("k_dot_sigma", &MomentumSpin), ("energy", &h)];
        let (_, traj) = run_meanfield(
            &start,
            &h,
            p.dt,
            p.trajectory_steps,
            p.hbar,
            &obs,
            p.record_every,
        )?;
        let mut csv = Vec::new();
        traj.write_csv(&mut csv)?;
        ctx.add("trajectory.csv", csv);
        Ok(json!({
            "rows": report_rows,
            "max_closed_form_error": max_closed,
            "max_finite_difference_error": max_fd,
            "spread": spread,
            "trajectory": {
                "steps": p.trajectory_steps,
                "dt": p.dt,
                "max_norm_drift": traj.max_norm_drift,
                "max_energy_drift": traj.max_energy_drift,
            },
        }))
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityParams {
    pub lambda: f64,
    pub x0: [f64; 3],
    pub k0: [f64; 3],
    pub hbar: f64,
    /// Axis of the two-branch decomposition of I/2.
    pub axis: [f64; 3],
    pub dt: f64,
    pub steps: usize,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            x0: [1.0, 0.0, 0.0],
            k0: [1.0, 0.0, 0.0],
            hbar: 1.0,
            axis: [1.0, 0.0, 0.0],
            dt: 1e-3,
            steps: 1000,
        }
    }
}

pub struct DensityNonlinearity;

impl Scenario for DensityNonlinearity {
    type Params = DensityParams;

    fn check(p: &DensityParams) -> CliResult<()> {
        normalize(p.axis)?;
        require(p.hbar > 0.0 && p.dt > 0.0, "hbar and dt must be positive")
    }

    fn run(p: DensityParams, ctx: &mut Context) -> CliResult<Value> {
        let h = SpinOrbitHamiltonian { lambda: p.lambda };
        let start = ClassicalPoint::new(p.x0.to_vec(), p.k0.to_vec())?;
        let rho = DensityMatrix::maximally_mixed(2);
        let mix = MixtureDecomposition::unpolarized_along(normalize(p.axis)?)?;
        let r = density_nonlinearity(&rho, &mix, &h, &start, p.dt, p.steps, p.hbar)?;
        let obs: [(&str, &dyn OperatorFunction); 1] = [("k_dot_sigma", &MomentumSpin)];
        let same = quantum_consistency_test(
            &rho,
            &[mix.clone(), mix],
            &h,
            &start,
            &obs,
            p.dt,
            p.steps,
            p.hbar,
        )?;
        ctx.table(
            "density_nonlinearity.csv",
            &["time", "trajectory_distance", "state_distance"],
            (0..r.times.len())
                .map(|i| vec![r.times[i], r.trajectory_distance[i], r.state_distance[i]]),
        )?;
        Ok(json!({
            "metric": r.metric,
            "final_time": r.times.last(),
            "final_trajectory_distance": r.trajectory_distance.last(),
            "final_state_distance": r.state_distance.last(),
            "identical_decomposition_metric": same.metric,
        }))
    }
}
