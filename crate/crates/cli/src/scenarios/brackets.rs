use hybridlab::hilbert::{commutator, CMatrix, Operator};
use hybridlab::hybrid_brackets::{
    aleksandrov_bracket, measure_defects, nogo_identity_defect, HybridObservable,
};
use hybridlab::phase_grid::{poisson_bracket, Domain, Grid1D, GridField};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{require, Context, Scenario};
use crate::error::CliResult;

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NogoParams {
    pub hbar1: f64,
    pub hbar2: f64,
    pub random_quadruples: usize,
    pub min_dim: usize,
    pub max_dim: usize,
}

impl Default for NogoParams {
    fn default() -> Self {
        Self {
            hbar1: 1.0,
            hbar2: 2.0,
            random_quadruples: 100,
            min_dim: 2,
            max_dim: 4,
        }
    }
}

fn random_hermitian(rng: &mut impl Rng, dim: usize) -> CliResult<Operator> {
    let a = CMatrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    Ok(Operator::hermitian((&a + a.adjoint()) * C64::from(0.5))?)
}

pub struct Nogo;

impl Scenario for Nogo {
    type Params = NogoParams;

    fn check(p: &NogoParams) -> CliResult<()> {
        require(
            p.hbar1 != 0.0 && p.hbar2 != 0.0 && p.hbar1.is_finite() && p.hbar2.is_finite(),
            "hbar1, hbar2 must be non-zero",
        )?;
        require(
            p.min_dim >= 1 && p.min_dim <= p.max_dim && p.max_dim <= 8,
            "need 1 <= min_dim <= max_dim <= 8",
        )
    }

    fn run(p: NogoParams, ctx: &mut Context) -> CliResult<Value> {
        let (sx, sy) = (Operator::pauli_x(), Operator::pauli_y());
        let pauli = nogo_identity_defect(&sx, &sy, &sx, &sy, p.hbar1, p.hbar2)?;
        let pauli_equal = nogo_identity_defect(&sx, &sy, &sx, &sy, p.hbar1, p.hbar1)?;
        let c = commutator(&sx, &sy)?;
        let predicted = (1.0 / p.hbar1 - 1.0 / p.hbar2).abs() * c.kron(&c).spectral_norm();

        let mut rng = ctx.rng();
        let mut max_equal: f64 = 0.0;
        let mut max_linearity: f64 = 0.0;
        let mut rows = Vec::new();
        for i in 0..p.random_quadruples {
            let dim = rng.random_range(p.min_dim..=p.max_dim);
            let ops: Vec<Operator> = (0..4)
                .map(|_| random_hermitian(&mut rng, dim))
                .collect::<CliResult<_>>()?;
            let d = |h2: f64| nogo_identity_defect(&ops[0], &ops[1], &ops[2], &ops[3], p.hbar1, h2);
            let equal = d(p.hbar1)?;
            // defect / |1/hbar1 - 1/hbar2| is independent of hbar2.
            let slopes: Vec<f64> = [2.0, 4.0, 0.5]
                .iter()
                .map(|f| f * p.hbar1)
                .map(|h2| Ok(d(h2)? / (1.0 / p.hbar1 - 1.0 / h2).abs()))
                .collect::<CliResult<_>>()?;
            let spread = slopes.iter().cloned().fold(f64::MIN, f64::max)
                - slopes.iter().cloned().fold(f64::MAX, f64::min);
            let rel = spread / slopes[0].abs().max(1e-300);
            max_equal = max_equal.max(equal);
            max_linearity = max_linearity.max(if slopes[0] == 0.0 { 0.0 } else { rel });
            rows.push(vec![i as f64, dim as f64, equal, slopes[0]]);
        }
        ctx.table(
            "nogo_random.csv",
            &["index", "dim", "equal_hbar_defect", "slope"],
            rows,
        )?;
        Ok(json!({
            "identity_defect": pauli,
            "equal_hbar_defect": pauli_equal,
            "predicted_defect": predicted,
            "random": {
                "count": p.random_quadruples,
                "max_equal_hbar_defect": max_equal,
                "max_relative_slope_spread": max_linearity,
            },
        }))
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectParams {
    pub points: usize,
    pub extent: f64,
    pub hbar: f64,
}

impl Default for DefectParams {
    fn default() -> Self {
        Self {
            points: 13,
            extent: 1.0,
            hbar: 1.0,
        }
    }
}

pub struct Defects;

impl Scenario for Defects {
    type Params = DefectParams;

    fn check(p: &DefectParams) -> CliResult<()> {
        require(p.points >= 9, "points must be at least 9")?;
        require(
            p.extent > 0.0 && p.extent.is_finite(),
            "extent must be positive",
        )?;
        require(p.hbar != 0.0 && p.hbar.is_finite(), "hbar must be non-zero")
    }

    fn run(p: DefectParams, _ctx: &mut Context) -> CliResult<Value> {
        let g = Grid1D::bounded(p.points, -p.extent, p.extent)?;
        let d = Domain::new(vec![g.clone(), g])?;
        let (sx, sy, sz) = (
            Operator::pauli_x(),
            Operator::pauli_y(),
            Operator::pauli_z(),
        );
        let a = HybridObservable::from_fn(&d, |x, _| sx.scale_real(x[0]))?;
        let b = HybridObservable::from_fn(&d, |_, k| sy.scale_real(k[0]))?;
        let c_spin = HybridObservable::constant(&d, &sz)?;
        let c_mixed = HybridObservable::from_fn(&d, |x, k| sx.scale_real(x[0] * k[0]))?;
        let spin_triple = measure_defects(&a, &b, &c_spin, p.hbar)?;
        let mixed_triple = measure_defects(&a, &b, &c_mixed, p.hbar)?;

        // Reductions to the sector brackets.
        let fa = |x: &[f64], k: &[f64]| x[0] * x[0] * k[0] + 0.5 * k[0];
        let fb = |x: &[f64], k: &[f64]| x[0] * k[0] * k[0] - x[0];
        let br = aleksandrov_bracket(
            &HybridObservable::classical(&d, 2, fa)?,
            &HybridObservable::classical(&d, 2, fb)?,
            p.hbar,
        )?;
        let pbr = poisson_bracket(
            &GridField::from_fn(&d, |c| fa(&c[..1], &c[1..]))?,
            &GridField::from_fn(&d, |c| fb(&c[..1], &c[1..]))?,
        )?;
        let classical_error = br
            .values()
            .iter()
            .zip(pbr.values())
            .map(|(m, v)| {
                (m - CMatrix::identity(2, 2) * C64::from(*v))
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let h = Operator::pauli_dot([0.3, -0.2, 0.9]);
        let qb = aleksandrov_bracket(
            &HybridObservable::constant(&d, &sx)?,
            &HybridObservable::constant(&d, &h)?,
            p.hbar,
        )?;
        let want = commutator(&sx, &h)?.scale(C64::new(0.0, -1.0 / p.hbar));
        let quantum_error = qb
            .values()
            .iter()
            .map(|m| {
                (m - want.entries())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        Ok(json!({
            "spin_triple": spin_triple,
            "mixed_triple": mixed_triple,
            "classical_reduction_error": classical_error,
            "quantum_reduction_error": quantum_error,
        }))
    }
}
