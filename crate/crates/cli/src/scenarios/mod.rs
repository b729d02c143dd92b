//! Scenario registry and shared plumbing.

mod brackets;
mod consistency;
mod ensemble;
mod meanfield;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};
use crate::RunOutcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub module: &'static str,
    pub description: &'static str,
}

const CATALOG: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "nogo-pauli",
        module: "hybrid_brackets",
        description: "product-rule identity across sectors with different Planck constants",
    },
    ScenarioInfo {
        name: "bracket-defects",
        module: "hybrid_brackets",
        description: "antisymmetry, Leibniz and Jacobi defects of the Aleksandrov bracket",
    },
    ScenarioInfo {
        name: "spin-meanfield",
        module: "meanfield",
        description: "axis dependence of mixture rates under H = (lambda/2)|x|^2 k.sigma",
    },
    ScenarioInfo {
        name: "density-nonlinearity",
        module: "meanfield",
        description: "density-matrix mean field against branch-averaged pure runs",
    },
    ScenarioInfo {
        name: "quantum-consistency",
        module: "consistency_lab",
        description: "rearrangement test of mean-field mixtures across decompositions",
    },
    ScenarioInfo {
        name: "madelung",
        module: "ensemble_pde",
        description: "quantum-kind ensemble flow against a split-step Fourier oracle",
    },
    ScenarioInfo {
        name: "separability",
        module: "ensemble_pde",
        description: "product states stay products under the free hybrid flow",
    },
    ScenarioInfo {
        name: "ghost-coupling",
        module: "ensemble_pde",
        description: "classical kinetic energy drift of a correlated free hybrid",
    },
    ScenarioInfo {
        name: "spin-angular-momentum",
        module: "ensemble_pde",
        description: "orbital and spin angular momentum of the spin hybrid",
    },
    ScenarioInfo {
        name: "taylor-coefficients",
        module: "consistency_lab",
        description: "exact time derivatives of L and S for the exp-affine ansatz",
    },
    ScenarioInfo {
        name: "t4-breakdown",
        module: "consistency_lab",
        description: "fourth time derivative of P for two mixtures with equal rho",
    },
    ScenarioInfo {
        name: "pde-taylor-tie",
        module: "consistency_lab",
        description: "second-order L coefficient from short ensemble runs",
    },
    ScenarioInfo {
        name: "ensemble",
        module: "ensemble_pde",
        description: "generic ensemble evolution from expression-defined fields",
    },
];

/// Registered scenarios in a fixed order.
pub fn catalog() -> &'static [ScenarioInfo] {
    CATALOG
}

pub(crate) trait Scenario {
    type Params: DeserializeOwned;
    fn check(p: &Self::Params) -> CliResult<()>;
    fn run(p: Self::Params, ctx: &mut Context) -> CliResult<Value>;
}

pub(crate) struct Context {
    pub seed: u64,
    artifacts: Vec<(String, Vec<u8>)>,
}

impl Context {
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push((name.to_string(), bytes));
    }

    pub fn table(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<f64>>,
    ) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(header).map_err(io)?;
        for r in rows {
            if r.len() != header.len() {
                return Err(CliError::Io(format!(
                    "row width {} does not match header {}",
                    r.len(),
                    header.len()
                )));
            }
            w.write_record(r.iter().map(|v| format!("{v:.12e}")))
                .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.add(name, bytes);
        Ok(())
    }
}

fn go<S: Scenario>(cfg: &ScenarioConfig, run: bool) -> CliResult<Option<RunOutcome>> {
    let params: S::Params = serde_json::from_value(cfg.parameters.clone())
        .map_err(|e| CliError::Validation(format!("parameters of {}: {e}", cfg.name)))?;
    S::check(&params)?;
    if !run {
        return Ok(None);
    }
    let mut ctx = Context {
        seed: cfg.seed,
        artifacts: Vec::new(),
    };
    let body = S::run(params, &mut ctx)?;
    let mut report = serde_json::Map::new();
    report.insert("scenario".into(), Value::from(cfg.name.clone()));
    report.insert("seed".into(), Value::from(cfg.seed));
    match body {
        Value::Object(m) => report.extend(m),
        other => {
            report.insert("result".into(), other);
        }
    }
    Ok(Some(RunOutcome {
        report: Value::Object(report),
        artifacts: ctx.artifacts,
    }))
}

pub(crate) fn dispatch(
    name: &str,
    cfg: &ScenarioConfig,
    run: bool,
) -> CliResult<Option<RunOutcome>> {
    match name {
        "nogo-pauli" => go::<brackets::Nogo>(cfg, run),
        "bracket-defects" => go::<brackets::Defects>(cfg, run),
        "spin-meanfield" => go::<meanfield::SpinMeanField>(cfg, run),
        "density-nonlinearity" => go::<meanfield::DensityNonlinearity>(cfg, run),
        "quantum-consistency" => go::<consistency::QuantumConsistency>(cfg, run),
        "madelung" => go::<ensemble::Madelung>(cfg, run),
        "separability" => go::<ensemble::Separability>(cfg, run),
        "ghost-coupling" => go::<ensemble::Ghost>(cfg, run),
        "spin-angular-momentum" => go::<ensemble::SpinAngularMomentum>(cfg, run),
        "taylor-coefficients" => go::<consistency::Taylor>(cfg, run),
        "t4-breakdown" => go::<consistency::T4>(cfg, run),
        "pde-taylor-tie" => go::<consistency::Tie>(cfg, run),
        "ensemble" => go::<ensemble::Generic>(cfg, run),
        other => Err(CliError::Validation(format!("unknown scenario {other:?}"))),
    }
}

pub(crate) fn json<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub(crate) fn require(cond: bool, msg: &str) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(invalid(msg))
    }
}

pub(crate) fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 > 1e-2 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

pub(crate) fn normalize(v: [f64; 3]) -> CliResult<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    require(n > 0.0 && n.is_finite(), "axis must be a non-zero vector")?;
    Ok([v[0] / n, v[1] / n, v[2] / n])
}
