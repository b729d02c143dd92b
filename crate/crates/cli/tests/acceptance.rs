//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_4, PI};
use std::time::{Duration, Instant};

use hybridlab::ensemble::{
    entangled_spin_fixture, evolve, spin_hybrid_observables, Component, EnsembleState,
    FunctionalHamiltonian, Potential,
};
use hybridlab::hilbert::{CMatrix, Operator, PureState};
use hybridlab::hybrid_brackets::{aleksandrov_bracket, HybridObservable};
use hybridlab::meanfield::{
    meanfield_step, observable_value, MeanFieldState, MomentumSpin, SpinOrbitHamiltonian,
};
use hybridlab::phase_grid::{ClassicalPoint, Domain, Grid1D, GridField};
use hybridlab_cli::{catalog, execute, RunOutcome, ScenarioConfig};
use num_complex::Complex64 as C64;
use serde_json::{json, Value};

struct Suite {
    failures: usize,
    executed: BTreeSet<String>,
    lines: Vec<(usize, String)>,
}

impl Suite {
    fn run(&mut self, name: &str, params: Value) -> (RunOutcome, Duration) {
        let mut cfg = ScenarioConfig::new(name, params);
        cfg.seed = 7;
        let start = Instant::now();
        let out = execute(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        self.executed.insert(name.to_string());
        (out, start.elapsed())
    }

    fn report(&mut self, id: usize, title: &str, checks: Vec<(String, bool)>) {
        let ok = checks.iter().all(|(_, ok)| *ok);
        let detail: Vec<String> = checks
            .iter()
            .map(|(d, ok)| if *ok { d.clone() } else { format!("{d} [x]") })
            .collect();
        self.lines.push((
            id,
            format!(
                "{} criterion {id:>2} {title}: {}",
                if ok { "PASS" } else { "FAIL" },
                detail.join("; ")
            ),
        ));
        if !ok {
            self.failures += 1;
        }
    }
}

fn f(v: &Value, path: &str) -> f64 {
    let mut cur = v;
    for key in path.split('.') {
        cur = &cur[key];
    }
    cur.as_f64()
        .unwrap_or_else(|| panic!("missing number {path}"))
}

fn table(out: &RunOutcome, name: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let bytes = out
        .artifact(name)
        .unwrap_or_else(|| panic!("missing artifact {name}"));
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|s| s.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("missing column {name}"))
}

fn check(desc: impl Into<String>, ok: bool) -> (String, bool) {
    (desc.into(), ok)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn nogo(s: &mut Suite) {
    let (out, t) = s.run(
        "nogo-pauli",
        json!({"hbar1": 1.0, "hbar2": 2.0, "random_quadruples": 100, "min_dim": 2, "max_dim": 4}),
    );
    let r = &out.report;
    // [sx, sy] = 2i sz, so both sides are -4 sz (x) sz up to 1/hbar: |1 - 1/2| * 4.
    let oracle = (1.0 - 0.5) * 4.0;
    let (h, rows) = table(&out, "nogo_random.csv");
    let dims: BTreeSet<i64> = rows.iter().map(|r| r[col(&h, "dim")] as i64).collect();
    s.report(
        1,
        "no-go identity",
        vec![
            check(
                format!("defect {:.3e} vs {oracle}", f(r, "identity_defect")),
                (f(r, "identity_defect") - oracle).abs() < 1e-12,
            ),
            check(
                format!("equal hbar {:.1e}", f(r, "equal_hbar_defect")),
                f(r, "equal_hbar_defect") < 1e-12,
            ),
            check(
                format!(
                    "100 random max {:.1e}",
                    f(r, "random.max_equal_hbar_defect")
                ),
                rows.len() == 100 && f(r, "random.max_equal_hbar_defect") < 1e-12,
            ),
            check(
                format!("dims {dims:?}"),
                dims.iter().all(|d| (2..=4).contains(d)),
            ),
            check(
                format!("runtime {:.0} ms", t.as_secs_f64() * 1e3),
                t < Duration::from_secs(1),
            ),
        ],
    );
}

fn brackets(s: &mut Suite) {
    let (out, _) = s.run(
        "bracket-defects",
        json!({"points": 13, "extent": 1.0, "hbar": 1.0}),
    );
    let r = &out.report;
    // A = x sx, B = k sy, C = x k sx at hbar = 1: the Jacobi sum is sy everywhere
    // and the Leibniz defect is -x k sy, largest at the box corners.
    let (jac, leib) = (1.0, 1.0);
    let mut checks = vec![
        check(
            format!(
                "antisymmetry {:.1e}/{:.1e}",
                f(r, "spin_triple.antisymmetry_defect"),
                f(r, "mixed_triple.antisymmetry_defect")
            ),
            f(r, "spin_triple.antisymmetry_defect") < 1e-12
                && f(r, "mixed_triple.antisymmetry_defect") < 1e-12,
        ),
        check(
            format!("leibniz {:.6}", f(r, "mixed_triple.leibniz_defect")),
            f(r, "mixed_triple.leibniz_defect") > 0.1
                && (f(r, "mixed_triple.leibniz_defect") - leib).abs() < 1e-10,
        ),
        check(
            format!("jacobi {:.6}", f(r, "mixed_triple.jacobi_defect")),
            f(r, "mixed_triple.jacobi_defect") > 0.1
                && (f(r, "mixed_triple.jacobi_defect") - jac).abs() < 1e-10,
        ),
        check(
            format!(
                "scenario reductions {:.1e}/{:.1e}",
                f(r, "classical_reduction_error"),
                f(r, "quantum_reduction_error")
            ),
            f(r, "classical_reduction_error") < 1e-10 && f(r, "quantum_reduction_error") < 1e-10,
        ),
    ];
    // Analytic oracles for the sector reductions.
    let g = Grid1D::bounded(13, -1.0, 1.0).unwrap();
    let d = Domain::new(vec![g.clone(), g]).unwrap();
    let a = HybridObservable::classical(&d, 2, |x, k| x[0] * x[0] * k[0] + 0.5 * k[0]).unwrap();
    let b = HybridObservable::classical(&d, 2, |x, k| x[0] * k[0] * k[0] - x[0]).unwrap();
    let br = aleksandrov_bracket(&a, &b, 1.0).unwrap();
    let mut cerr: f64 = 0.0;
    for (i, m) in br.values().iter().enumerate() {
        let c = d.coords(i);
        let (x, k) = (c[0], c[1]);
        let pb = (2.0 * x * k) * (2.0 * x * k) - (x * x + 0.5) * (k * k - 1.0);
        cerr = cerr.max(
            (m - CMatrix::identity(2, 2) * C64::from(pb))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max),
        );
    }
    let hb = 0.7;
    let qa = HybridObservable::constant(&d, &Operator::pauli_x()).unwrap();
    let qb = HybridObservable::constant(&d, &Operator::pauli_y()).unwrap();
    let qbr = aleksandrov_bracket(&qa, &qb, hb).unwrap();
    // [sx, sy] / (i hbar) = 2 sz / hbar.
    let want = Operator::pauli_z().scale_real(2.0 / hb);
    let qerr = qbr
        .values()
        .iter()
        .map(|m| {
            (m - want.entries())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    checks.push(check(
        format!("analytic reductions {cerr:.1e}/{qerr:.1e}"),
        cerr < 1e-10 && qerr < 1e-10,
    ));
    s.report(2, "Aleksandrov bracket", checks);
}

fn spin_meanfield(s: &mut Suite) {
    let (out, t) = s.run(
        "spin-meanfield",
        json!({"lambda": 1.0, "x0": [1, 0, 0], "k0": [1, 0, 0], "axes": 10}),
    );
    let (h, rows) = table(&out, "spin_meanfield.csv");
    let (x0, k0, lambda) = ([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], 1.0);
    let hm = SpinOrbitHamiltonian { lambda };
    let mut closed: f64 = 0.0;
    let mut fd: f64 = 0.0;
    let mut rates = Vec::new();
    for r in &rows {
        let n = [
            r[col(&h, "axis_x")],
            r[col(&h, "axis_y")],
            r[col(&h, "axis_z")],
        ];
        let rate = r[col(&h, "mixture_rate")];
        closed = closed.max((rate + lambda * dot(n, x0) * dot(n, k0)).abs());
        // d<k.sigma>/dt from three forward steps of the mean-field integrator.
        let delta = 1e-4;
        let mut mix = 0.0;
        for psi in [
            PureState::spin_up(n).unwrap(),
            PureState::spin_down(n).unwrap(),
        ] {
            let s0 =
                MeanFieldState::new(ClassicalPoint::new(x0.to_vec(), k0.to_vec()).unwrap(), psi);
            let s1 = meanfield_step(&s0, &hm, delta, 1.0).unwrap();
            let s2 = meanfield_step(&s1, &hm, delta, 1.0).unwrap();
            let o = |s: &MeanFieldState| observable_value(&MomentumSpin, s).unwrap();
            mix += 0.5 * (-3.0 * o(&s0) + 4.0 * o(&s1) - o(&s2)) / (2.0 * delta);
        }
        fd = fd.max((rate - mix).abs());
        rates.push(rate);
    }
    let spread = rates.iter().cloned().fold(f64::MIN, f64::max)
        - rates.iter().cloned().fold(f64::MAX, f64::min);
    let first = [rows[0][0], rows[0][1], rows[0][2]];
    s.report(
        3,
        "mean-field spin counterexample",
        vec![
            check(
                format!("{} axes, first {:?}", rows.len(), first),
                rows.len() == 10 && first == [1.0, 0.0, 0.0],
            ),
            check(format!("closed form {closed:.1e}"), closed < 1e-10),
            check(format!("stepper finite difference {fd:.1e}"), fd < 1e-6),
            check(format!("spread {spread:.4}"), spread > 0.5),
            check(
                format!("runtime {:.0} ms", t.as_secs_f64() * 1e3),
                t < Duration::from_secs(1),
            ),
        ],
    );
}

fn density_nonlinearity(s: &mut Suite) {
    let (out, _) = s.run(
        "density-nonlinearity",
        json!({"lambda": 1.0, "dt": 1e-3, "steps": 1000}),
    );
    let r = &out.report;
    let (qc, _) = s.run(
        "quantum-consistency",
        json!({"lambda": 1.0, "axes": [[1, 0, 0], [0, 0, 1]], "dt": 1e-3, "steps": 1000}),
    );
    let q = &qc.report;
    s.report(
        4,
        "density-level nonlinearity",
        vec![
            check(
                format!("metric {:.4} at t = {}", f(r, "metric"), f(r, "final_time")),
                f(r, "metric") > 1e-3 && (f(r, "final_time") - 1.0).abs() < 1e-12,
            ),
            check(
                format!(
                    "identical decompositions {:.1e}",
                    f(r, "identical_decomposition_metric")
                ),
                f(r, "identical_decomposition_metric") == 0.0,
            ),
            check(
                format!(
                    "x/z decompositions {:.3} vs decoupled {:.1e}",
                    f(q, "metric"),
                    f(q, "decoupled_metric")
                ),
                f(q, "metric") > 1e-3 && f(q, "decoupled_metric") < 1e-10,
            ),
        ],
    );
}

/// Analytic coherent state of the unit oscillator at time `t`: density and `dS/dq`.
fn coherent(q: f64, t: f64, q0: f64, p0: f64) -> (f64, f64) {
    let qc = q0 * t.cos() + p0 * t.sin();
    let pc = p0 * t.cos() - q0 * t.sin();
    ((-(q - qc).powi(2)).exp() / PI.sqrt(), pc)
}

fn madelung(s: &mut Suite) -> Value {
    let (out, t) = s.run(
        "madelung",
        json!({"points": [256, 512], "q0": 0.5, "p0": 0.5, "extent": 6.0, "duration": PI}),
    );
    let runs = out.report["runs"].as_array().unwrap().clone();
    let (d256, g256) = (f(&runs[0], "density_l2"), f(&runs[0], "gradient_l2"));
    let (d512, g512) = (f(&runs[1], "density_l2"), f(&runs[1], "gradient_l2"));
    // Same flow measured against the closed-form coherent state.
    let d = Domain::new(vec![Grid1D::bounded(256, -6.0, 6.0).unwrap()]).unwrap();
    let l = GridField::from_fn(&d, |c| -(c[0] - 0.5).powi(2) - 0.5 * PI.ln()).unwrap();
    let sf = GridField::from_fn(&d, |c| 0.5 * c[0]).unwrap();
    let v = GridField::from_fn(&d, |c| 0.5 * c[0] * c[0]).unwrap();
    let st = EnsembleState::normalized(vec![Component::new(l, sf).unwrap()]).unwrap();
    let h = FunctionalHamiltonian::quantum(1.0, 1.0)
        .unwrap()
        .with_potential(Potential::Static(v));
    let steps = f(&runs[0], "steps") as usize;
    let run = evolve(&st, &h, PI / steps as f64, steps).unwrap();
    let p = run.state.density();
    let grad = run.state.action().derivative(0, 1).unwrap();
    let (mut ep, mut eg) = (0.0, 0.0);
    for i in 0..d.len() {
        let (rho, pc) = coherent(d.coords(i)[0], PI, 0.5, 0.5);
        ep += (p.values()[i] - rho).powi(2);
        eg += rho * (grad.values()[i] - pc).powi(2);
    }
    let (ep, eg) = ((ep * d.cell_volume()).sqrt(), (eg * d.cell_volume()).sqrt());
    s.report(
        5,
        "Madelung equivalence",
        vec![
            check(
                format!("n=256 L2(P) {d256:.2e}, L2(grad S) {g256:.2e}"),
                d256 < 1e-4 && g256 < 1e-4,
            ),
            check(
                format!("refinement {:.1}x / {:.1}x", d256 / d512, g256 / g512),
                d256 / d512 >= 4.0 && g256 / g512 >= 4.0,
            ),
            check(
                format!("vs closed-form coherent state {ep:.2e}/{eg:.2e}"),
                ep < 1e-4 && eg < 1e-4,
            ),
            check(
                format!("runtime {:.1} s", t.as_secs_f64()),
                t < Duration::from_secs(30),
            ),
        ],
    );
    out.report
}

fn collect_evolutions(v: &Value, path: &str, out: &mut Vec<(String, f64, f64)>) {
    match v {
        Value::Object(m) => {
            if let (Some(a), Some(b)) = (m.get("max_mass_drift"), m.get("max_energy_drift")) {
                out.push((path.to_string(), a.as_f64().unwrap(), b.as_f64().unwrap()));
            }
            for (k, x) in m {
                collect_evolutions(x, &format!("{path}.{k}"), out);
            }
        }
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, x)| collect_evolutions(x, &format!("{path}[{i}]"), out)),
        _ => {}
    }
}

fn conservation(s: &mut Suite, pde_reports: &[Value]) {
    let mut evs = Vec::new();
    for r in pde_reports {
        collect_evolutions(r, r["scenario"].as_str().unwrap(), &mut evs);
    }
    let mass = evs.iter().map(|e| e.1).fold(0.0, f64::max);
    let energy = evs.iter().map(|e| e.2).fold(0.0, f64::max);
    let (mf, _) = s.run(
        "spin-meanfield",
        json!({"axes": 1, "dt": 1e-3, "trajectory_steps": 10000}),
    );
    let tr = &mf.report["trajectory"];
    s.report(
        6,
        "conservation suite",
        vec![
            check(
                format!("{} PDE runs, max mass drift {mass:.1e}", evs.len()),
                evs.len() >= 6 && mass < 1e-6,
            ),
            check(
                format!("max relative energy drift {energy:.1e}"),
                energy < 1e-5,
            ),
            check(
                format!("mean-field norm drift {:.1e}/step", f(tr, "max_norm_drift")),
                f(tr, "max_norm_drift") < 1e-10,
            ),
            check(
                format!(
                    "<H> drift {:.1e} over {} steps",
                    f(tr, "max_energy_drift"),
                    f(tr, "steps")
                ),
                f(tr, "max_energy_drift") < 1e-8 && f(tr, "steps") == 1e4,
            ),
        ],
    );
}

fn separability(s: &mut Suite) -> Vec<Value> {
    let (out, _) = s.run(
        "separability",
        json!({"n": 48, "x_range": [-6, 7], "q_range": [-6.5, 6.5], "k0": 0.8, "duration": 1.0}),
    );
    let r = out.report.clone();
    let (h, rows) = table(&out, "separability.csv");
    let t_end = rows.last().unwrap()[col(&h, "time")];
    // Independent product check on the final fields of a generic hybrid run.
    let (gen, _) = s.run(
        "ensemble",
        json!({
            "kind": "hybrid",
            "grids": [{"n": 48, "min": -6, "max": 7}, {"n": 48, "min": -6.5, "max": 6.5}],
            "hbar": 1.0,
            "initial_P": "exp(-x^2/2 - q^2/2)",
            "initial_S": "0.8*x",
            "dt": 1.0 / 66.0,
            "steps": 66,
        }),
    );
    let (fh, frows) = table(&gen, "final_fields.csv");
    let (ix, iq, ip) = (col(&fh, "x"), col(&fh, "q"), col(&fh, "P"));
    let xs: BTreeSet<u64> = frows.iter().map(|r| r[ix].to_bits()).collect();
    let qs: BTreeSet<u64> = frows.iter().map(|r| r[iq].to_bits()).collect();
    let (nx, nq) = (xs.len(), qs.len());
    let (hx, hq) = (13.0 / (nx - 1) as f64, 13.0 / (nq - 1) as f64);
    let mut px = vec![0.0; nx];
    let mut pq = vec![0.0; nq];
    for (i, r) in frows.iter().enumerate() {
        px[i / nq] += r[ip] * hq;
        pq[i % nq] += r[ip] * hx;
    }
    let defect = frows
        .iter()
        .enumerate()
        .map(|(i, r)| (r[ip] - px[i / nq] * pq[i % nq]).abs())
        .fold(0.0, f64::max);
    s.report(
        7,
        "separability preservation",
        vec![
            check(
                format!(
                    "max defect {:.1e} over T = {t_end}",
                    f(&r, "max_separability_defect")
                ),
                f(&r, "max_separability_defect") < 1e-6 && (t_end - 1.0).abs() < 1e-12,
            ),
            check(
                format!("generic run, test-side marginals {defect:.1e}"),
                defect < 1e-6,
            ),
        ],
    );
    vec![r, gen.report]
}

fn ghost(s: &mut Suite) -> Value {
    let (out, _) = s.run("ghost-coupling", json!({"n": 48, "rho": 0.6, "duration": 0.5, "sample_every": 10, "separable_duration": 1.0}));
    let r = &out.report;
    let (h, rows) = table(&out, "ghost_coupling.csv");
    let k = col(&h, "kinetic");
    let drift = rows
        .iter()
        .map(|row| (row[k] - rows[0][k]).abs())
        .fold(0.0, f64::max)
        / rows[0][k];
    s.report(
        8,
        "ghost coupling",
        vec![
            check(
                format!(
                    "hybrid drift {:.2e} (from series {drift:.2e})",
                    f(r, "relative_drift")
                ),
                f(r, "relative_drift") > 1e-3 && drift > 1e-3,
            ),
            check(
                format!("hbar = 0 control {:.1e}", f(r, "control_relative_drift")),
                f(r, "control_relative_drift") < 1e-5,
            ),
            check(
                format!(
                    "separable {:.1e}/{:.1e}",
                    f(r, "separable_relative_drift"),
                    f(r, "separable_control_relative_drift")
                ),
                f(r, "separable_relative_drift") < 1e-6
                    && f(r, "separable_control_relative_drift") < 1e-6,
            ),
            check(
                format!(
                    "binned k^2 moment drift {:.2e}",
                    f(r, "binned_relative_drift")
                ),
                f(r, "binned_relative_drift") > 1e-3,
            ),
        ],
    );
    out.report
}

fn spin_angular_momentum(s: &mut Suite) {
    let (out, _) = s.run("spin-angular-momentum", json!({"n": 32, "axes": 10}));
    let r = &out.report;
    // Spin rate cross-checked by differencing the evolved fixture.
    let h = FunctionalHamiltonian::free_spin(1.0, 1.0).unwrap();
    let st = entangled_spin_fixture(32).unwrap();
    let delta = 1e-3;
    let s0 = spin_hybrid_observables(&st, &h).unwrap().spin;
    let s1 = spin_hybrid_observables(&evolve(&st, &h, delta, 1).unwrap().state, &h)
        .unwrap()
        .spin;
    let s2 = spin_hybrid_observables(&evolve(&st, &h, delta, 2).unwrap().state, &h)
        .unwrap()
        .spin;
    let fd: Vec<f64> = (0..3)
        .map(|a| (-3.0 * s0[a] + 4.0 * s1[a] - s2[a]) / (2.0 * delta))
        .collect();
    let direct: Vec<f64> = (0..3)
        .map(|a| r["entangled"]["d_spin"][a].as_f64().unwrap())
        .collect();
    let gap = fd
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    s.report(
        9,
        "spin angular momentum",
        vec![
            check(
                format!(
                    "entangled |dL/dt| {:.1e}",
                    f(r, "entangled_rates.d_orbital")
                ),
                f(r, "entangled_rates.d_orbital") < 1e-5,
            ),
            check(
                format!("entangled |dS/dt| {:.3e}", f(r, "entangled_rates.d_spin")),
                f(r, "entangled_rates.d_spin") > 1e-4,
            ),
            check(format!("dS/dt vs evolved difference {gap:.1e}"), gap < 1e-5),
            check(
                format!("separable |dJ/dt| {:.1e}", f(r, "separable_rates.d_total")),
                f(r, "separable_rates.d_total") < 1e-5,
            ),
            check(
                format!("axis spread {:.3e}", f(r, "axis_energy_spread")),
                f(r, "axis_energy_spread") > 1e-3,
            ),
        ],
    );
}

fn taylor(s: &mut Suite) {
    let (out, t) = s.run(
        "taylor-coefficients",
        json!({"l": "x^2", "order": 4, "points": 20, "extent": 2.0}),
    );
    let r = &out.report;
    let (h, rows) = table(&out, "taylor.csv");
    // l = x^2 with unit constants, written out by hand.
    let mut worst: f64 = 0.0;
    for row in &rows {
        let (x, q) = (row[col(&h, "x")], row[col(&h, "q")]);
        let want = [
            ("L0", x * x + q),
            ("L1", 0.0),
            ("L2", 2.0 * x * q + x),
            ("L3", 0.0),
            ("L4_hbar2", -(2.0 * x * 2.0) / 4.0),
            ("S0", 0.0),
            ("S1", 0.125 - x * q),
            ("S2", 0.0),
            ("S3", 0.5 * x - q * q - x * x),
            ("S4", 0.0),
        ];
        for (c, w) in want {
            worst = worst.max((row[col(&h, c)] - w).abs());
        }
    }
    s.report(
        10,
        "Taylor coefficients",
        vec![
            check(
                format!("{} points, worst {worst:.1e}", rows.len()),
                rows.len() == 20 && worst < 1e-10,
            ),
            check(
                format!("scenario residual {:.1e}", f(r, "max_displayed_residual")),
                f(r, "max_displayed_residual") < 1e-10,
            ),
            check(
                format!("parity {:.1e}", f(r, "parity_defect")),
                f(r, "parity_defect") < 1e-12,
            ),
            check(
                format!("runtime {:.0} ms", t.as_secs_f64() * 1e3),
                t < Duration::from_secs(1),
            ),
        ],
    );
}

/// `-(1/4) e^q sum_a p_a e^{l_a} (l' l'' + l''')` difference A - B for
/// A = {l = 0}, B = {log(1 +- eps sin x)}, unit constants.
fn t4_oracle(x: f64, q: f64, eps: f64) -> f64 {
    let mut nb = 0.0;
    for sign in [1.0, -1.0] {
        let (u, u1, u2, u3) = (
            sign * eps * x.sin(),
            sign * eps * x.cos(),
            -sign * eps * x.sin(),
            -sign * eps * x.cos(),
        );
        let w = 1.0 + u;
        let l1 = u1 / w;
        let l2 = u2 / w - u1 * u1 / (w * w);
        let l3 = u3 / w - 3.0 * u1 * u2 / (w * w) + 2.0 * u1.powi(3) / w.powi(3);
        nb += 0.5 * w * (l1 * l2 + l3);
    }
    -0.25 * q.exp() * (0.0 - nb)
}

fn t4(s: &mut Suite) {
    let pts = [
        [FRAC_PI_4, 0.0],
        [-1.0, 0.5],
        [0.3, -0.7],
        [1.2, 1.0],
        [2.5, -0.2],
        [-2.2, 0.0],
    ];
    let (out, _) = s.run(
        "t4-breakdown",
        json!({"base": "0", "g": "sin(x)", "eps": 0.5, "window": [-PI, PI], "points": pts}),
    );
    let r = &out.report;
    let diff = r["breakdown"]["hbar2_part"]["diff"].as_array().unwrap();
    let mut worst: f64 = 0.0;
    for (p, d) in pts.iter().zip(diff) {
        worst = worst.max((d.as_f64().unwrap() - t4_oracle(p[0], p[1], 0.5)).abs());
    }
    let at = diff[0].as_f64().unwrap();
    s.report(
        11,
        "t^4 breakdown",
        vec![
            check(
                format!("invariants {:.1e}", f(r, "max_invariant_diff")),
                f(r, "max_invariant_diff") < 1e-10,
            ),
            check(
                format!("hbar^0 part {:.1e}", f(r, "hbar0_max_abs_diff")),
                f(r, "hbar0_max_abs_diff") < 1e-10,
            ),
            check(
                format!("hbar^2 part vs closed form {worst:.1e}"),
                worst < 1e-8,
            ),
            check(
                format!("value at (pi/4, 0) {at:.4}"),
                (at - 0.0612).abs() < 1e-4,
            ),
        ],
    );
}

fn tie(s: &mut Suite) {
    let (out, _) = s.run("pde-taylor-tie", json!({
        "l": "-x^2/2 + 0.3*x",
        "constants": {"kappa": 0.5, "v": 0.8, "classical_mass": 1, "quantum_mass": 1, "hbar": 1},
        "n": 33, "extent": 4.0, "times": [0.02, 0.03, 0.04, 0.05, 0.06],
        "points": [[0.5, -0.5], [1.0, 1.0], [-1.5, 0.25]],
    }));
    let r = &out.report;
    let tie = &r["tie"];
    let mut worst: f64 = 0.0;
    for (p, v) in tie["points"]
        .as_array()
        .unwrap()
        .iter()
        .zip(tie["pde"].as_array().unwrap())
    {
        let (x, q) = (p[0].as_f64().unwrap(), p[1].as_f64().unwrap());
        // (v/M) l' q + (v kappa/m) x with l' = -x + 0.3.
        let want = 0.8 * (-x + 0.3) * q + 0.8 * 0.5 * x;
        worst = worst.max((v.as_f64().unwrap() - want).abs());
    }
    s.report(
        12,
        "PDE-vs-Taylor tie",
        vec![
            check(
                format!("vs taylor_expand {:.1e}", f(r, "max_abs_diff")),
                f(r, "max_abs_diff") < 1e-4,
            ),
            check(format!("vs closed form {worst:.1e}"), worst < 1e-4),
        ],
    );
}

fn main() {
    let mut s = Suite {
        failures: 0,
        executed: BTreeSet::new(),
        lines: Vec::new(),
    };
    nogo(&mut s);
    brackets(&mut s);
    spin_meanfield(&mut s);
    density_nonlinearity(&mut s);
    let mad = madelung(&mut s);
    let mut pde = separability(&mut s);
    pde.push(ghost(&mut s));
    pde.push(mad);
    conservation(&mut s, &pde);
    spin_angular_momentum(&mut s);
    taylor(&mut s);
    t4(&mut s);
    tie(&mut s);
    s.lines.sort();
    for (_, line) in &s.lines {
        println!("{line}");
    }

    let missing: Vec<&str> = catalog()
        .iter()
        .map(|c| c.name)
        .filter(|n| !s.executed.contains(*n))
        .collect();
    if !missing.is_empty() {
        println!("FAIL catalog coverage: not exercised {missing:?}");
        s.failures += 1;
    } else {
        println!(
            "PASS catalog coverage: all {} scenarios exercised",
            catalog().len()
        );
    }
    if s.failures > 0 {
        println!("{} acceptance criteria failed", s.failures);
        std::process::exit(1);
    }
}
