//! Statistical-consistency experiments.
//!
//! Classical mixtures and their invariants `I_{n1,n2}`, the exact Taylor
//! recursion of the log-form ensemble equations for the exp-affine ansatz
//! `P = exp(l(x) + kappa q)`, `S = 0`, `V = v x q`, and the rearrangement
//! test for mean-field mixtures.
//!
//! Taylor coefficients are stored as series in `hbar^2`: entry `j` of a
//! series multiplies `hbar^(2j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{evolve, Component, EnsembleState, FunctionalHamiltonian, Potential};
use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::hilbert::{mixture_to_density, DensityMatrix, MixtureDecomposition};
use crate::meanfield::{meanfield_step, observable_value, MeanFieldState, OperatorFunction};
use crate::phase_grid::{ClassicalPoint, Domain, GridField};

/// Highest time-derivative order of the Taylor engine.
pub const MAX_TAYLOR_ORDER: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub density: GridField,
    pub action: GridField,
}

/// `rho(x, k) = sum_a p_a P_a(x) delta(k - S_a'(x))` on one spatial axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalMixture {
    components: Vec<MixtureComponent>,
}

impl ClassicalMixture {
    /// Checks weights, positivity and unit mass of every `P_a`.
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let mix = Self::local(components)?;
        for c in &mix.components {
            let mass = c.density.integral();
            if (mass - 1.0).abs() > 1e-8 {
                return Err(Error::NotNormalized { norm_sqr: mass });
            }
        }
        Ok(mix)
    }

    /// As [`ClassicalMixture::new`] without the unit-mass check, for
    /// ansatz densities that are only meaningful pointwise.
    pub fn local(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidMixture("empty mixture".into()))?;
        let domain = first.density.domain().clone();
        if domain.ndim() != 1 {
            return Err(Error::InvalidParameter(
                "mixtures live on one spatial axis".into(),
            ));
        }
        let mut total = 0.0;
        for c in &components {
            if c.density.domain() != &domain || c.action.domain() != &domain {
                return Err(Error::DomainMismatch);
            }
            if !(c.weight >= 0.0) {
                return Err(Error::InvalidMixture(format!(
                    "negative weight {}",
                    c.weight
                )));
            }
            if c.density.values().iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidMixture("density must be non-negative".into()));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn domain(&self) -> &Domain {
        self.components[0].density.domain()
    }
}

/// `I_{n1,n2}(x) = d^n1/dx^n1 sum_a p_a P_a (S_a')^n2` by grid stencils.
pub fn invariant(mix: &ClassicalMixture, n1: usize, n2: usize) -> Result<GridField> {
    if n1 > 4 || n2 > 3 {
        return Err(Error::InvalidParameter(format!(
            "invariant order ({n1}, {n2}) outside n1 <= 4, n2 <= 3"
        )));
    }
    let domain = mix.domain();
    let n = domain.axes()[0].n;
    if n1 > 0 && n < n1 + 8 {
        return Err(Error::InvalidGrid(format!(
            "{n} points cannot resolve derivative order {n1}"
        )));
    }
    let mut sum = vec![0.0; domain.len()];
    for c in &mix.components {
        let grad = if n2 > 0 {
            Some(c.action.derivative(0, 1)?)
        } else {
            None
        };
        for (i, s) in sum.iter_mut().enumerate() {
            let k = grad.as_ref().map_or(1.0, |g| g.values()[i].powi(n2 as i32));
            *s += c.weight * c.density.values()[i] * k;
        }
    }
    let field = GridField::new(domain.clone(), sum)?;
    if n1 == 0 {
        Ok(field)
    } else {
        field.derivative(0, n1)
    }
}

/// Weights and log-densities `l_a(x)` of an ansatz mixture with `S_a = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzMixture {
    pub components: Vec<(f64, Expr)>,
}

impl AnsatzMixture {
    pub fn new(components: Vec<(f64, Expr)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture("empty mixture".into()));
        }
        let total: f64 = components.iter().map(|(p, _)| p).sum();
        if components.iter().any(|(p, _)| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMixture(format!(
                "weights must be non-negative and sum to 1, got {total}"
            )));
        }
        for (_, l) in &components {
            if l.depends_on(Var::Q) || l.depends_on(Var::T) {
                return Err(Error::Expression(format!("{l} must depend on x only")));
            }
        }
        Ok(Self { components })
    }

    /// `P_a = exp(l_a)`, `S_a = 0` sampled on a one-axis domain.
    pub fn to_classical(&self, domain: &Domain) -> Result<ClassicalMixture> {
        let comps = self
            .components
            .iter()
            .map(|(p, l)| {
                Ok(MixtureComponent {
                    weight: *p,
                    density: GridField::from_fn(domain, |c| l.eval_x(c[0]).exp())?,
                    action: GridField::constant(domain, 0.0),
                })
            })
            .collect::<Result<_>>()?;
        ClassicalMixture::local(comps)
    }

    /// `sum_a p_a d^n/dx^n exp(l_a)` at `x`: the exact `I_{n,0}`.
    pub fn exact_invariant(&self, n: usize, x: f64) -> f64 {
        self.components
            .iter()
            .map(|(p, l)| p * l.exp().diff_n(Var::X, n).eval_x(x))
            .sum()
    }
}

/// The pair `A = {(1, base)}`, `B = {(1/2, base + log(1 + eps g)), (1/2, base + log(1 - eps g))}`.
/// Both give the same `rho(x, k)`. `window` is checked for `|eps g| < 1` on 1024 points.
pub fn equal_rho_mixtures(
    base: &Expr,
    g: &Expr,
    eps: f64,
    window: [f64; 2],
) -> Result<(AnsatzMixture, AnsatzMixture)> {
    if !(window[1] > window[0]) {
        return Err(Error::InvalidParameter(format!("bad window {window:?}")));
    }
    let worst = (0..=1024)
        .map(|i| window[0] + (window[1] - window[0]) * i as f64 / 1024.0)
        .map(|x| (eps * g.eval_x(x)).abs())
        .fold(0.0, f64::max);
    if !(worst < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "|eps g| reaches {worst} on the window"
        )));
    }
    let one = Expr::constant(1.0);
    let shift = g.scale(eps);
    let a = AnsatzMixture::new(vec![(1.0, base.clone())])?;
    let b = AnsatzMixture::new(vec![
        (0.5, base.add(&one.add(&shift).log())),
        (0.5, base.add(&one.sub(&shift).log())),
    ])?;
    Ok((a, b))
}

/// Constants of the exp-affine ansatz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzParams {
    pub kappa: f64,
    pub v: f64,
    pub classical_mass: f64,
    pub quantum_mass: f64,
    pub hbar: f64,
}

impl AnsatzParams {
    pub fn unit() -> Self {
        Self {
            kappa: 1.0,
            v: 1.0,
            classical_mass: 1.0,
            quantum_mass: 1.0,
            hbar: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.kappa, self.v, self.hbar]
            .iter()
            .all(|c| c.is_finite())
            && self.classical_mass > 0.0
            && self.quantum_mass > 0.0
            && self.hbar >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "bad ansatz constants {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnsatzComponent {
    pub l: Expr,
    pub params: AnsatzParams,
}

impl AnsatzComponent {
    pub fn new(l: Expr, params: AnsatzParams) -> Result<Self> {
        params.validate()?;
        if l.depends_on(Var::Q) || l.depends_on(Var::T) {
            return Err(Error::Expression(format!("{l} must depend on x only")));
        }
        Ok(Self { l, params })
    }
}

/// Polynomial in `hbar^2` with expression coefficients.
#[derive(Clone, Debug)]
struct Series(Vec<Expr>);

impl Series {
    fn of(e: Expr) -> Self {
        Series(vec![e])
    }

    fn zero() -> Self {
        Series(vec![])
    }

    fn coeff(&self, j: usize) -> Expr {
        self.0.get(j).cloned().unwrap_or_else(Expr::zero)
    }

    fn add(&self, o: &Self) -> Self {
        let n = self.0.len().max(o.0.len());
        Series((0..n).map(|j| self.coeff(j).add(&o.coeff(j))).collect()).trim()
    }

    fn scale(&self, c: f64) -> Self {
        Series(self.0.iter().map(|e| e.scale(c)).collect()).trim()
    }

    fn mul(&self, o: &Self) -> Self {
        if self.0.is_empty() || o.0.is_empty() {
            return Self::zero();
        }
        let mut out = vec![Expr::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                out[i + j] = out[i + j].add(&a.mul(b));
            }
        }
        Series(out).trim()
    }

    /// Multiplies by `hbar^2`.
    fn shift(&self) -> Self {
        if self.0.is_empty() {
            return Self::zero();
        }
        let mut v = vec![Expr::zero()];
        v.extend(self.0.iter().cloned());
        Series(v).trim()
    }

    fn diff(&self, v: Var) -> Self {
        Series(self.0.iter().map(|e| e.diff(v)).collect()).trim()
    }

    fn trim(mut self) -> Self {
        while self.0.last().is_some_and(Expr::is_zero) {
            self.0.pop();
        }
        self
    }

    /// `hbar^(2j)`-weighted parts at `(x, q)`.
    fn parts(&self, x: f64, q: f64, hbar: f64) -> Vec<f64> {
        self.0
            .iter()
            .enumerate()
            .map(|(j, e)| e.eval([x, q, 0.0]) * hbar.powi(2 * j as i32))
            .collect()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `d^n L / dt^n` and `d^n S / dt^n` at `t = 0` for `n = 0..=order`.
fn taylor_series(comp: &AnsatzComponent, order: usize) -> (Vec<Series>, Vec<Series>) {
    let AnsatzParams {
        kappa,
        v,
        classical_mass: big_m,
        quantum_mass: m,
        ..
    } = comp.params;
    let x = Expr::var(Var::X);
    let q = Expr::var(Var::Q);
    let potential = Series::of(x.mul(&q).scale(v));
    let mut l = vec![Series::of(comp.l.add(&q.scale(kappa)))];
    let mut s = vec![Series::zero()];
    for n in 0..order {
        let d = |f: &[Series], var: Var| -> Vec<Series> { f.iter().map(|e| e.diff(var)).collect() };
        let (lx, lq, sx, sq) = (d(&l, Var::X), d(&l, Var::Q), d(&s, Var::X), d(&s, Var::Q));
        let leibniz = |a: &[Series], b: &[Series]| {
            (0..=n).fold(Series::zero(), |acc, j| {
                acc.add(&a[j].mul(&b[n - j]).scale(binomial(n, j)))
            })
        };
        let lt = leibniz(&lx, &sx)
            .add(&sx[n].diff(Var::X))
            .scale(-1.0 / big_m)
            .add(&leibniz(&lq, &sq).add(&sq[n].diff(Var::Q)).scale(-1.0 / m));
        let mut st = leibniz(&sx, &sx)
            .scale(-0.5 / big_m)
            .add(&leibniz(&sq, &sq).scale(-0.5 / m))
            .add(
                &leibniz(&lq, &lq)
                    .add(&lq[n].diff(Var::Q).scale(2.0))
                    .scale(1.0 / (8.0 * m))
                    .shift(),
            );
        if n == 0 {
            st = st.add(&potential.scale(-1.0));
        }
        l.push(lt);
        s.push(st);
    }
    (l, s)
}

/// Time-derivative coefficients at sample points, split by powers of `hbar^2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorTable {
    pub points: Vec<[f64; 2]>,
    /// `l[n][p][j]`: `hbar^(2j)` part of `d^n L/dt^n` at point `p`.
    pub l: Vec<Vec<Vec<f64>>>,
    pub s: Vec<Vec<Vec<f64>>>,
}

impl TaylorTable {
    pub fn order(&self) -> usize {
        self.l.len() - 1
    }

    pub fn l_total(&self, n: usize, p: usize) -> f64 {
        self.l[n][p].iter().sum()
    }

    pub fn s_total(&self, n: usize, p: usize) -> f64 {
        self.s[n][p].iter().sum()
    }

    pub fn l_part(&self, n: usize, p: usize, j: usize) -> f64 {
        self.l[n][p].get(j).copied().unwrap_or(0.0)
    }

    pub fn s_part(&self, n: usize, p: usize, j: usize) -> f64 {
        self.s[n][p].get(j).copied().unwrap_or(0.0)
    }

    /// Largest `|odd L|` or `|even S|` coefficient.
    pub fn parity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 0..=self.order() {
            let table = if n % 2 == 1 { &self.l[n] } else { &self.s[n] };
            for parts in table {
                worst = worst.max(parts.iter().map(|v| v.abs()).fold(0.0, f64::max));
            }
        }
        worst
    }
}

/// Exact derivatives `d^n L/dt^n`, `d^n S/dt^n` at `t = 0` for `n <= order`.
pub fn taylor_expand(
    comp: &AnsatzComponent,
    order: usize,
    points: &[[f64; 2]],
) -> Result<TaylorTable> {
    if order > MAX_TAYLOR_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let (l, s) = taylor_series(comp, order);
    let hbar = comp.params.hbar;
    let sample = |series: &[Series]| -> Result<Vec<Vec<Vec<f64>>>> {
        series
            .iter()
            .map(|sr| {
                points
                    .iter()
                    .map(|[x, q]| {
                        let parts = sr.parts(*x, *q, hbar);
                        if parts.iter().any(|v| !v.is_finite()) {
                            return Err(Error::NonFinite(format!(
                                "taylor coefficient at ({x}, {q})"
                            )));
                        }
                        Ok(parts)
                    })
                    .collect()
            })
            .collect()
    };
    Ok(TaylorTable {
        points: points.to_vec(),
        l: sample(&l)?,
        s: sample(&s)?,
    })
}

fn series_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn series_axpy(acc: &mut Vec<f64>, c: f64, b: &[f64]) {
    if acc.len() < b.len() {
        acc.resize(b.len(), 0.0);
    }
    for (a, v) in acc.iter_mut().zip(b) {
        *a += c * v;
    }
}

/// `d^n exp(L)/dt^n = exp(L) B_n(L', ..., L^(n))` with `B_n` the complete
/// Bell polynomial, part by part in `hbar^2`. `derivs[0]` is `L` itself.
fn exp_derivative(derivs: &[Vec<f64>], n: usize) -> Vec<f64> {
    let base = derivs[0].iter().sum::<f64>().exp();
    let mut bell: Vec<Vec<f64>> = vec![vec![1.0]];
    for k in 0..n {
        let mut next = vec![];
        for i in 0..=k {
            series_axpy(
                &mut next,
                binomial(k, i),
                &series_mul(&bell[k - i], &derivs[i + 1]),
            );
        }
        bell.push(next);
    }
    bell[n].iter().map(|v| v * base).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub n1: usize,
    pub n2: usize,
    pub max_abs_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartComparison {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    /// `A - B` per point.
    pub diff: Vec<f64>,
}

impl PartComparison {
    fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
        let diff = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        Self { a, b, diff }
    }

    pub fn max_abs_diff(&self) -> f64 {
        self.diff.iter().map(|d| d.abs()).fold(0.0, f64::max)
    }
}

/// Fourth time derivative of `P = sum_a p_a exp(L_a)` at `t = 0` for two mixtures.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct T4Report {
    pub invariant_checks: Vec<InvariantCheck>,
    pub hbar2_part: PartComparison,
    pub hbar0_part: PartComparison,
    /// Total over all powers of `hbar`.
    pub total: PartComparison,
    pub points: Vec<[f64; 2]>,
}

fn mixture_p4(
    mix: &AnsatzMixture,
    params: AnsatzParams,
    points: &[[f64; 2]],
) -> Result<Vec<Vec<f64>>> {
    let tables: Vec<(f64, TaylorTable)> = mix
        .components
        .par_iter()
        .map(|(p, l)| {
            Ok((
                *p,
                taylor_expand(&AnsatzComponent::new(l.clone(), params)?, 4, points)?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok((0..points.len())
        .map(|pt| {
            let mut acc = vec![];
            for (w, t) in &tables {
                let derivs: Vec<Vec<f64>> = (0..=4).map(|n| t.l[n][pt].clone()).collect();
                series_axpy(&mut acc, *w, &exp_derivative(&derivs, 4));
            }
            acc
        })
        .collect())
}

/// Compares the `hbar^0` and `hbar^2` parts of `d^4 P/dt^4` at `t = 0`
/// between two mixtures, after confirming they share the invariants
/// `I_{n,0}`, `n = 0..=4`, at every sample `x` to 1e-10 (relative to scale).
pub fn t4_breakdown(
    a: &AnsatzMixture,
    b: &AnsatzMixture,
    params: AnsatzParams,
    points: &[[f64; 2]],
) -> Result<T4Report> {
    params.validate()?;
    if points.is_empty() {
        return Err(Error::InvalidParameter("no sample points".into()));
    }
    let mut invariant_checks = Vec::new();
    for n1 in 0..=4 {
        let mut worst: f64 = 0.0;
        for [x, _] in points {
            let (ia, ib) = (a.exact_invariant(n1, *x), b.exact_invariant(n1, *x));
            let diff = (ia - ib).abs();
            if diff > 1e-10 * ia.abs().max(1.0) {
                return Err(Error::InvalidMixture(format!(
                    "I_{{{n1},0}} differs by {diff:e} at x = {x}"
                )));
            }
            worst = worst.max(diff);
        }
        invariant_checks.push(InvariantCheck {
            n1,
            n2: 0,
            max_abs_diff: worst,
        });
    }
    // S = 0 at t = 0, so every n2 > 0 invariant vanishes identically.
    for n2 in 1..=3 {
        invariant_checks.push(InvariantCheck {
            n1: 0,
            n2,
            max_abs_diff: 0.0,
        });
    }
    let pa = mixture_p4(a, params, points)?;
    let pb = mixture_p4(b, params, points)?;
    let part = |p: &[Vec<f64>], j: usize| {
        p.iter()
            .map(|s| s.get(j).copied().unwrap_or(0.0))
            .collect::<Vec<_>>()
    };
    let total = |p: &[Vec<f64>]| p.iter().map(|s| s.iter().sum()).collect::<Vec<f64>>();
    Ok(T4Report {
        invariant_checks,
        hbar2_part: PartComparison::new(part(&pa, 1), part(&pb, 1)),
        hbar0_part: PartComparison::new(part(&pa, 0), part(&pb, 0)),
        total: PartComparison::new(total(&pa), total(&pb)),
        points: points.to_vec(),
    })
}

/// Weighted observable averages of mean-field branches, compared across decompositions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumConsistencyReport {
    pub times: Vec<f64>,
    /// Largest pairwise difference over decompositions and observables at each time.
    pub max_difference: Vec<f64>,
    pub observable_names: Vec<String>,
    pub metric: f64,
}

/// Evolves every branch of every decomposition by [`meanfield_step`] from
/// `start` and compares `sum_a p_a <A>_a(t)` across decompositions. The
/// classical coordinates are always among the observables.
#[allow(clippy::too_many_arguments)]
pub fn quantum_consistency_test(
    rho: &DensityMatrix,
    decompositions: &[MixtureDecomposition],
    h: &dyn OperatorFunction,
    start: &ClassicalPoint,
    observables: &[(&str, &dyn OperatorFunction)],
    dt: f64,
    steps: usize,
    hbar: f64,
) -> Result<QuantumConsistencyReport> {
    if decompositions.is_empty() {
        return Err(Error::InvalidMixture("no decompositions".into()));
    }
    for (i, d) in decompositions.iter().enumerate() {
        let gap = mixture_to_density(d).max_entry_difference(rho);
        if gap > 1e-10 {
            return Err(Error::InvalidMixture(format!(
                "decomposition {i} differs from rho by {gap:e}"
            )));
        }
    }
    let dof = start.dof();
    let mut names: Vec<String> = (0..dof)
        .map(|i| format!("x{i}"))
        .chain((0..dof).map(|i| format!("k{i}")))
        .collect();
    names.extend(observables.iter().map(|(n, _)| n.to_string()));

    let mut branches: Vec<Vec<(f64, MeanFieldState)>> = decompositions
        .iter()
        .map(|d| {
            d.components()
                .iter()
                .map(|(p, psi)| (*p, MeanFieldState::new(start.clone(), psi.clone())))
                .collect()
        })
        .collect();
    let averages = |branches: &[Vec<(f64, MeanFieldState)>]| -> Result<Vec<Vec<f64>>> {
        branches
            .iter()
            .map(|dec| {
                let mut avg = vec![0.0; names.len()];
                for (p, b) in dec {
                    for i in 0..dof {
                        avg[i] += p * b.classical.x[i];
                        avg[dof + i] += p * b.classical.k[i];
                    }
                    for (o, (_, a)) in observables.iter().enumerate() {
                        avg[2 * dof + o] += p * observable_value(*a, b)?;
                    }
                }
                Ok(avg)
            })
            .collect()
    };
    let spread = |avgs: &[Vec<f64>]| {
        let mut worst: f64 = 0.0;
        for i in 0..avgs.len() {
            for j in i + 1..avgs.len() {
                for (a, b) in avgs[i].iter().zip(&avgs[j]) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    };
    let mut times = vec![0.0];
    let mut max_difference = vec![spread(&averages(&branches)?)];
    for step in 1..=steps {
        branches = branches
            .into_par_iter()
            .map(|dec| {
                dec.into_iter()
                    .map(|(p, b)| meanfield_step(&b, h, dt, hbar).map(|nb| (p, nb)))
                    .collect()
            })
            .collect::<Result<_>>()?;
        times.push(step as f64 * dt);
        max_difference.push(spread(&averages(&branches)?));
    }
    let metric = max_difference.iter().copied().fold(0.0, f64::max);
    Ok(QuantumConsistencyReport {
        times,
        max_difference,
        observable_names: names,
        metric,
    })
}

/// PDE estimate of `d^2 L/dt^2` at `t = 0` against the Taylor engine.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PdeTieReport {
    pub times: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    /// Richardson-extrapolated `2 (L(t) - L(0)) / t^2` per point.
    pub pde: Vec<f64>,
    pub taylor: Vec<f64>,
    pub max_abs_diff: f64,
}

/// Neville extrapolation to `h = 0` of samples `f(h_i)` that are even in `h`.
fn extrapolate_even(h: &[f64], f: &[f64]) -> f64 {
    let z: Vec<f64> = h.iter().map(|v| v * v).collect();
    let mut p = f.to_vec();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            p[i] = (z[i + level] * p[i] - z[i] * p[i + 1]) / (z[i + level] - z[i]);
        }
    }
    p[0]
}

/// Evolves the ansatz on a two-axis grid (classical `x`, quantum `q`) with
/// the ensemble solver to each of `times` and extrapolates the order-2 `L`
/// coefficient at the grid points nearest to `points`.
pub fn pde_taylor_tie(
    comp: &AnsatzComponent,
    domain: &Domain,
    times: &[f64],
    points: &[[f64; 2]],
) -> Result<PdeTieReport> {
    let pr = comp.params;
    if domain.ndim() != 2 {
        return Err(Error::InvalidParameter(
            "the tie runs on an (x, q) grid".into(),
        ));
    }
    if times.len() < 2 || times.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter(
            "need at least two positive times".into(),
        ));
    }
    let h = FunctionalHamiltonian::hybrid(pr.classical_mass, pr.quantum_mass, pr.hbar)?
        .with_potential(Potential::Static(GridField::from_fn(domain, |c| {
            pr.v * c[0] * c[1]
        })?));
    let l0 = GridField::from_fn(domain, |c| comp.l.eval_x(c[0]) + pr.kappa * c[1])?;
    let start =
        EnsembleState::normalized(vec![Component::new(l0, GridField::constant(domain, 0.0))?])?;
    let limit = crate::ensemble::cfl_limit(domain, &h, 0.2).unwrap_or(f64::INFINITY);

    let (gx, gq) = (domain.axes()[0].clone(), domain.axes()[1].clone());
    let nearest = |g: &crate::phase_grid::Grid1D, v: f64| {
        ((v - g.min) / g.spacing())
            .round()
            .clamp(0.0, (g.n - 1) as f64) as usize
    };
    let cells: Vec<usize> = points
        .iter()
        .map(|[x, q]| nearest(&gx, *x) * gq.n + nearest(&gq, *q))
        .collect();
    let snapped: Vec<[f64; 2]> = cells
        .iter()
        .map(|c| domain.coords(*c))
        .map(|c| [c[0], c[1]])
        .collect();

    let base = start.component(0).log_density.values().to_vec();
    let samples: Vec<Vec<f64>> = times
        .par_iter()
        .map(|t| {
            let steps = ((t / limit).ceil() as usize).max(8);
            let run = evolve(&start, &h, t / steps as f64, steps)?;
            let l = run.state.component(0).log_density.values();
            Ok(cells
                .iter()
                .map(|c| 2.0 * (l[*c] - base[*c]) / (t * t))
                .collect())
        })
        .collect::<Result<_>>()?;
    let pde: Vec<f64> = (0..cells.len())
        .map(|i| extrapolate_even(times, &samples.iter().map(|s| s[i]).collect::<Vec<_>>()))
        .collect();
    let table = taylor_expand(comp, 2, &snapped)?;
    let taylor: Vec<f64> = (0..snapped.len()).map(|p| table.l_total(2, p)).collect();
    let max_abs_diff = pde
        .iter()
        .zip(&taylor)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(PdeTieReport {
        times: times.to_vec(),
        points: snapped,
        pde,
        taylor,
        max_abs_diff,
    })
}
