use std::f64::consts::{FRAC_PI_4, PI};

use hybridlab::consistency_lab::{
    equal_rho_mixtures, pde_taylor_tie, quantum_consistency_test, t4_breakdown, taylor_expand,
    AnsatzComponent, AnsatzParams, MAX_TAYLOR_ORDER,
};
use hybridlab::expr::{Expr, Var};
use hybridlab::hilbert::{DensityMatrix, MixtureDecomposition, Operator};
use hybridlab::meanfield::{
    AnalyticOperator, MomentumSpin, OperatorFunction, SpinOrbitHamiltonian,
};
use hybridlab::phase_grid::{ClassicalPoint, Domain, Grid1D};
use rand::Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{invalid, json, normalize, require, Context, Scenario};
use crate::error::CliResult;

fn parse(s: &str, what: &str) -> CliResult<Expr> {
    Expr::parse(s).map_err(|e| invalid(format!("{what}: {e}")))
}

fn x_only(e: &Expr, what: &str) -> CliResult<()> {
    require(
        !e.depends_on(Var::Q) && !e.depends_on(Var::T),
        &format!("{what} must depend on x only"),
    )
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcParams {
    pub lambda: f64,
    pub x0: [f64; 3],
    pub k0: [f64; 3],
    pub hbar: f64,
    /// Axes of the two-branch decompositions of I/2.
    pub axes: Vec<[f64; 3]>,
    pub dt: f64,
    pub steps: usize,
    /// Field of the spin-only term in the decoupled control.
    pub control_field: [f64; 3],
}

impl Default for QcParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            x0: [1.0, 0.0, 0.0],
            k0: [1.0, 0.0, 0.0],
            hbar: 1.0,
            axes: vec![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            dt: 1e-3,
            steps: 1000,
            control_field: [0.3, -0.2, 0.5],
        }
    }
}

pub struct QuantumConsistency;

impl Scenario for QuantumConsistency {
    type Params = QcParams;

    fn check(p: &QcParams) -> CliResult<()> {
        require(p.axes.len() >= 2, "need at least two decomposition axes")?;
        for a in &p.axes {
            normalize(*a)?;
        }
        require(p.hbar > 0.0 && p.dt > 0.0, "hbar and dt must be positive")
    }

    fn run(p: QcParams, ctx: &mut Context) -> CliResult<Value> {
        let rho = DensityMatrix::maximally_mixed(2);
        let decs: Vec<MixtureDecomposition> = p
            .axes
            .iter()
            .map(|a| Ok(MixtureDecomposition::unpolarized_along(normalize(*a)?)?))
            .collect::<CliResult<_>>()?;
        let start = ClassicalPoint::new(p.x0.to_vec(), p.k0.to_vec())?;
        let obs: [(&str, &dyn OperatorFunction); 1] = [("k_dot_sigma", &MomentumSpin)];
        let coupled = quantum_consistency_test(
            &rho,
            &decs,
            &SpinOrbitHamiltonian { lambda: p.lambda },
            &start,
            &obs,
            p.dt,
            p.steps,
            p.hbar,
        )?;

        let b = p.control_field;
        let id = Operator::identity(2);
        let control = AnalyticOperator {
            dim: 2,
            value: |x: &[f64], k: &[f64]| {
                let e: f64 = 0.5 * x.iter().chain(k).map(|v| v * v).sum::<f64>();
                id.scale_real(e)
                    .add(&Operator::pauli_dot(b))
                    .expect("same dimension")
            },
            grad_x: |x: &[f64], _: &[f64]| x.iter().map(|v| id.scale_real(*v)).collect(),
            grad_k: |_: &[f64], k: &[f64]| k.iter().map(|v| id.scale_real(*v)).collect(),
        };
        let decoupled =
            quantum_consistency_test(&rho, &decs, &control, &start, &obs, p.dt, p.steps, p.hbar)?;
        ctx.table(
            "quantum_consistency.csv",
            &["time", "coupled_difference", "decoupled_difference"],
            (0..coupled.times.len()).map(|i| {
                vec![
                    coupled.times[i],
                    coupled.max_difference[i],
                    decoupled.max_difference[i],
                ]
            }),
        )?;
        Ok(json!({
            "axes": p.axes,
            "observables": coupled.observable_names,
            "metric": coupled.metric,
            "decoupled_metric": decoupled.metric,
        }))
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaylorParams {
    pub l: String,
    pub constants: AnsatzParams,
    pub order: usize,
    /// Random sample points drawn from the seed in `[-extent, extent]^2`.
    pub points: usize,
    pub extent: f64,
}

impl Default for TaylorParams {
    fn default() -> Self {
        Self {
            l: "x^2".into(),
            constants: AnsatzParams::unit(),
            order: 4,
            points: 20,
            extent: 2.0,
        }
    }
}

pub struct Taylor;

/// Coefficients written out in closed form for `S = 0`, `P = exp(l + kappa q)`, `V = v x q`.
/// Returns `(L2, L4 hbar^2 part, S1, S3)` at `(x, q)`.
fn displayed(l: &Expr, c: &AnsatzParams, x: f64, q: f64) -> [f64; 4] {
    let d = |n| l.diff_n(Var::X, n).eval_x(x);
    let (l1, l2, l3) = (d(1), d(2), d(3));
    let (mm, m, k, v, h2) = (
        c.classical_mass,
        c.quantum_mass,
        c.kappa,
        c.v,
        c.hbar * c.hbar,
    );
    [
        v / mm * l1 * q + v * k / m * x,
        -h2 * k * v / (4.0 * m * mm * mm) * (l1 * l2 + l3),
        h2 * k * k / (8.0 * m) - v * x * q,
        h2 * k * v / (4.0 * m * mm) * l1 - v * v / mm * q * q - v * v / m * x * x,
    ]
}

impl Scenario for Taylor {
    type Params = TaylorParams;

    fn check(p: &TaylorParams) -> CliResult<()> {
        let l = parse(&p.l, "l")?;
        x_only(&l, "l")?;
        AnsatzComponent::new(l, p.constants)?;
        require(p.order <= MAX_TAYLOR_ORDER, "order must be at most 4")?;
        require(
            p.points >= 1 && p.extent > 0.0,
            "need points >= 1 and extent > 0",
        )
    }

    fn run(p: TaylorParams, ctx: &mut Context) -> CliResult<Value> {
        let l = parse(&p.l, "l")?;
        let comp = AnsatzComponent::new(l.clone(), p.constants)?;
        let mut rng = ctx.rng();
        let pts: Vec<[f64; 2]> = (0..p.points)
            .map(|_| {
                [
                    rng.random_range(-p.extent..p.extent),
                    rng.random_range(-p.extent..p.extent),
                ]
            })
            .collect();
        let t = taylor_expand(&comp, p.order, &pts)?;

        let mut residual: f64 = 0.0;
        for (i, [x, q]) in pts.iter().enumerate() {
            let want = displayed(&l, &p.constants, *x, *q);
            let l0 = l.eval_x(*x) + p.constants.kappa * q;
            residual = residual.max((t.l_total(0, i) - l0).abs());
            let got = [
                (2, t.l_total(2, i)),
                (4, t.l_part(4, i, 1)),
                (1, t.s_total(1, i)),
                (3, t.s_total(3, i)),
            ];
            for ((n, g), w) in got.iter().zip(want) {
                if *n <= p.order {
                    residual = residual.max((g - w).abs());
                }
            }
        }
        let mut header = vec!["x".to_string(), "q".to_string()];
        for n in 0..=p.order {
            header.push(format!("L{n}"));
            header.push(format!("S{n}"));
        }
        header.push("L4_hbar2".into());
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = pts.iter().enumerate().map(|(i, pt)| {
            let mut r = vec![pt[0], pt[1]];
            for n in 0..=p.order {
                r.push(t.l_total(n, i));
                r.push(t.s_total(n, i));
            }
            r.push(if p.order >= 4 { t.l_part(4, i, 1) } else { 0.0 });
            r
        });
        ctx.table("taylor.csv", &header_ref, rows)?;
        Ok(json!({
            "l": p.l,
            "constants": p.constants,
            "order": p.order,
            "parity_defect": t.parity_defect(),
            "max_displayed_residual": residual,
            "table": json(&t)?,
        }))
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T4Params {
    pub base: String,
    pub g: String,
    pub eps: f64,
    pub window: [f64; 2],
    pub constants: AnsatzParams,
    pub points: Vec<[f64; 2]>,
}

impl Default for T4Params {
    fn default() -> Self {
        Self {
            base: "0".into(),
            g: "sin(x)".into(),
            eps: 0.5,
            window: [-PI, PI],
            constants: AnsatzParams::unit(),
            points: vec![
                [FRAC_PI_4, 0.0],
                [-1.0, 0.5],
                [0.3, -0.7],
                [1.2, 1.0],
                [2.5, -0.2],
                [-2.2, 0.0],
            ],
        }
    }
}

pub struct T4;

impl Scenario for T4 {
    type Params = T4Params;

    fn check(p: &T4Params) -> CliResult<()> {
        let (base, g) = (parse(&p.base, "base")?, parse(&p.g, "g")?);
        x_only(&base, "base")?;
        x_only(&g, "g")?;
        require(!p.points.is_empty(), "need at least one sample point")?;
        require(
            p.points
                .iter()
                .all(|[x, _]| *x >= p.window[0] && *x <= p.window[1]),
            "sample points must lie in the window",
        )?;
        AnsatzComponent::new(base, p.constants)?;
        Ok(())
    }

    fn run(p: T4Params, _ctx: &mut Context) -> CliResult<Value> {
        let (base, g) = (parse(&p.base, "base")?, parse(&p.g, "g")?);
        let (a, b) = equal_rho_mixtures(&base, &g, p.eps, p.window)?;
        let r = t4_breakdown(&a, &b, p.constants, &p.points)?;
        // Closed form of the hbar^2 part: -(hbar^2 kappa v / 4 m M^2) e^{kappa q} sum p e^l (l' l'' + l''').
        let c = p.constants;
        let pref =
            -c.hbar * c.hbar * c.kappa * c.v / (4.0 * c.quantum_mass * c.classical_mass.powi(2));
        let n_of = |mix: &hybridlab::consistency_lab::AnsatzMixture, x: f64| -> f64 {
            mix.components
                .iter()
                .map(|(w, l)| {
                    let d = |n| l.diff_n(Var::X, n).eval_x(x);
                    w * l.eval_x(x).exp() * (d(1) * d(2) + d(3))
                })
                .sum()
        };
        let oracle: Vec<f64> = p
            .points
            .iter()
            .map(|[x, q]| pref * (c.kappa * q).exp() * (n_of(&a, *x) - n_of(&b, *x)))
            .collect();
        let oracle_err = r
            .hbar2_part
            .diff
            .iter()
            .zip(&oracle)
            .map(|(d, o)| (d - o).abs())
            .fold(0.0, f64::max);
        Ok(json!({
            "base": p.base,
            "g": p.g,
            "eps": p.eps,
            "constants": c,
            "hbar0_max_abs_diff": r.hbar0_part.max_abs_diff(),
            "hbar2_max_abs_diff": r.hbar2_part.max_abs_diff(),
            "hbar2_oracle": oracle,
            "hbar2_oracle_error": oracle_err,
            "max_invariant_diff": r.invariant_checks.iter().map(|c| c.max_abs_diff).fold(0.0, f64::max),
            "breakdown": json(&r)?,
        }))
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TieParams {
    pub l: String,
    pub constants: AnsatzParams,
    pub n: usize,
    pub extent: f64,
    pub times: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

impl Default for TieParams {
    fn default() -> Self {
        Self {
            l: "-x^2/2 + 0.3*x".into(),
            constants: AnsatzParams {
                kappa: 0.5,
                v: 0.8,
                classical_mass: 1.0,
                quantum_mass: 1.0,
                hbar: 1.0,
            },
            n: 33,
            extent: 4.0,
            times: vec![0.02, 0.03, 0.04, 0.05, 0.06],
            points: vec![[0.5, -0.5], [1.0, 1.0], [-1.5, 0.25]],
        }
    }
}

pub struct Tie;

impl Scenario for Tie {
    type Params = TieParams;

    fn check(p: &TieParams) -> CliResult<()> {
        let l = parse(&p.l, "l")?;
        x_only(&l, "l")?;
        AnsatzComponent::new(l, p.constants)?;
        require(p.n >= 16 && p.extent > 0.0, "need n >= 16 and extent > 0")?;
        require(
            p.times.len() >= 2 && p.times.iter().all(|t| *t > 0.0),
            "need at least two positive times",
        )?;
        require(
            p.points
                .iter()
                .all(|pt| pt.iter().all(|v| v.abs() < p.extent)),
            "points must lie inside the box",
        )
    }

    fn run(p: TieParams, _ctx: &mut Context) -> CliResult<Value> {
        let comp = AnsatzComponent::new(parse(&p.l, "l")?, p.constants)?;
        let g = Grid1D::bounded(p.n, -p.extent, p.extent)?;
        let d = Domain::new(vec![g.clone(), g])?;
        let r = pde_taylor_tie(&comp, &d, &p.times, &p.points)?;
        Ok(
            json!({ "l": p.l, "constants": p.constants, "n": p.n, "max_abs_diff": r.max_abs_diff, "tie": json(&r)? }),
        )
    }
}
