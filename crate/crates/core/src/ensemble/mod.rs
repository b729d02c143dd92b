//! Configuration-space statistical ensembles.
//!
//! A state is a pair of real fields `(P, S)` over classical coordinates `x`,
//! quantum coordinates `q`, or both; spin-1/2 states carry one pair per spin
//! component. Fields are stored as `(L, S)` with `L = log P`, the variables in
//! which the evolution equations are integrated.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_grid::{Domain, GridField};

pub mod evolve;
pub mod ghost;
pub mod madelung;
pub mod marginal;
pub mod spin;

pub use evolve::{
    cfl_limit, evolve, evolve_with, hamiltonian_value, rhs, EvolutionReport, EvolutionSummary,
    EvolveOptions,
};
pub use ghost::{classical_kinetic_energy, ghost_coupling_experiment, GhostCouplingReport};
pub use madelung::{madelung_roundtrip, quantum_potential, split_step_evolve, MadelungReport};
pub use marginal::separability_defect;
pub use marginal::{marginal_rho, KBinning, MarginalRho};
pub use spin::{
    entangled_spin_fixture, free_kinetic_split, free_spin_energy, free_spin_energy_along,
    separable_spin_fixture, spin_hybrid_observables, spinor, KineticSplit, SpinObservables,
};

/// Default density floor.
pub const DEFAULT_FLOOR: f64 = 1e-12;
/// Tolerance on the total probability of a freshly built state.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Which Hamiltonian functional generates the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianKind {
    /// `int P ((grad S)^2 / 2M + V)` over classical coordinates.
    Classical,
    /// Adds the `hbar^2/8m (grad log P)^2` term; all coordinates quantum.
    Quantum,
    /// Leading axes classical (mass `M`), the rest quantum (mass `m`).
    Hybrid,
    /// Classical kinetic energy summed over the two spin components.
    FreeSpin,
}

impl fmt::Display for HamiltonianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Classical => "classical",
            Self::Quantum => "quantum",
            Self::Hybrid => "hybrid",
            Self::FreeSpin => "free-spin",
        };
        f.write_str(s)
    }
}

/// Time-dependent potential sampled on the state domain.
pub type PotentialFn = Arc<dyn Fn(f64) -> Result<GridField> + Send + Sync>;

#[derive(Clone, Default)]
pub enum Potential {
    #[default]
    Zero,
    Static(GridField),
    TimeDependent(PotentialFn),
}

impl Potential {
    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Self::TimeDependent(_))
    }

    pub(crate) fn sample(&self, domain: &Domain, t: f64) -> Result<Option<GridField>> {
        match self {
            Self::Zero => Ok(None),
            Self::Static(v) => {
                if v.domain() != domain {
                    return Err(Error::DomainMismatch);
                }
                Ok(Some(v.clone()))
            }
            Self::TimeDependent(f) => {
                let v = f(t)?;
                if v.domain() != domain {
                    return Err(Error::DomainMismatch);
                }
                Ok(Some(v))
            }
        }
    }
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Static(_) => f.write_str("Static(..)"),
            Self::TimeDependent(_) => f.write_str("TimeDependent(..)"),
        }
    }
}

/// Hamiltonian functional `H[P, S]` with its masses, Planck constant and potential.
#[derive(Clone, Debug)]
pub struct FunctionalHamiltonian {
    pub kind: HamiltonianKind,
    pub classical_mass: f64,
    pub quantum_mass: f64,
    pub hbar: f64,
    /// Number of leading domain axes that are classical (hybrid kind only).
    pub classical_axes: usize,
    pub potential: Potential,
}

impl FunctionalHamiltonian {
    pub fn classical(mass: f64) -> Result<Self> {
        Self::build(HamiltonianKind::Classical, mass, mass, 0.0, 0)
    }

    pub fn quantum(mass: f64, hbar: f64) -> Result<Self> {
        Self::build(HamiltonianKind::Quantum, mass, mass, hbar, 0)
    }

    /// Hybrid with one classical axis followed by quantum axes.
    pub fn hybrid(classical_mass: f64, quantum_mass: f64, hbar: f64) -> Result<Self> {
        Self::build(
            HamiltonianKind::Hybrid,
            classical_mass,
            quantum_mass,
            hbar,
            1,
        )
    }

    /// `hbar` only scales the spin observables; the flow is classical.
    pub fn free_spin(mass: f64, hbar: f64) -> Result<Self> {
        Self::build(HamiltonianKind::FreeSpin, mass, mass, hbar, 0)
    }

    fn build(
        kind: HamiltonianKind,
        classical_mass: f64,
        quantum_mass: f64,
        hbar: f64,
        classical_axes: usize,
    ) -> Result<Self> {
        let h = Self {
            kind,
            classical_mass,
            quantum_mass,
            hbar,
            classical_axes,
            potential: Potential::Zero,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn with_potential(mut self, potential: Potential) -> Self {
        self.potential = potential;
        self
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn with_classical_axes(mut self, n: usize) -> Self {
        self.classical_axes = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.classical_mass > 0.0) || !(self.quantum_mass > 0.0) {
            return Err(Error::InvalidParameter("masses must be positive".into()));
        }
        if !(self.hbar >= 0.0) || !self.hbar.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "hbar must be finite and >= 0, got {}",
                self.hbar
            )));
        }
        if self.kind == HamiltonianKind::Hybrid && self.classical_axes == 0 {
            return Err(Error::InvalidParameter(
                "hybrid Hamiltonian needs a classical axis".into(),
            ));
        }
        Ok(())
    }

    /// Mass attached to `axis` and whether the axis is quantum.
    pub fn axis_role(&self, axis: usize) -> (f64, bool) {
        match self.kind {
            HamiltonianKind::Classical | HamiltonianKind::FreeSpin => (self.classical_mass, false),
            HamiltonianKind::Quantum => (self.quantum_mass, true),
            HamiltonianKind::Hybrid => {
                if axis < self.classical_axes {
                    (self.classical_mass, false)
                } else {
                    (self.quantum_mass, true)
                }
            }
        }
    }

    /// Number of field components a compatible state carries.
    pub fn components(&self) -> usize {
        if self.kind == HamiltonianKind::FreeSpin {
            2
        } else {
            1
        }
    }

    pub(crate) fn check_state(&self, state: &EnsembleState) -> Result<()> {
        self.validate()?;
        if state.components().len() != self.components() {
            return Err(Error::InvalidParameter(format!(
                "{} Hamiltonian expects {} field component(s), state has {}",
                self.kind,
                self.components(),
                state.components().len()
            )));
        }
        let ndim = state.domain().ndim();
        if self.kind == HamiltonianKind::Hybrid && self.classical_axes >= ndim {
            return Err(Error::InvalidParameter(
                "hybrid domain needs at least one quantum axis".into(),
            ));
        }
        Ok(())
    }
}

/// Floor applied to the density when it is built from sampled values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub floor: f64,
    /// Clamp `P` up to `floor`; when false, sampled values below it are an error.
    pub enabled: bool,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            floor: DEFAULT_FLOOR,
            enabled: false,
        }
    }
}

/// One `(log P, S)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub log_density: GridField,
    pub action: GridField,
}

impl Component {
    pub fn new(log_density: GridField, action: GridField) -> Result<Self> {
        if log_density.domain() != action.domain() {
            return Err(Error::DomainMismatch);
        }
        Ok(Self {
            log_density,
            action,
        })
    }

    pub fn density(&self) -> GridField {
        self.log_density.map(f64::exp)
    }

    pub fn mass(&self) -> f64 {
        self.density().integral()
    }
}

/// `(P, S)` fields of an ensemble, one component per spin index when present.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    components: Vec<Component>,
    floored_cells: usize,
}

impl EnsembleState {
    /// Builds a state from log-densities; total probability must be 1.
    pub fn from_components(components: Vec<Component>) -> Result<Self> {
        let s = Self::unchecked(components)?;
        let mass = s.total_mass();
        if (mass - 1.0).abs() >= NORMALIZATION_TOL {
            return Err(Error::InvalidParameter(format!(
                "total probability {mass} is not 1"
            )));
        }
        Ok(s)
    }

    /// Like [`EnsembleState::from_components`] but rescales `P` to unit mass.
    pub fn normalized(components: Vec<Component>) -> Result<Self> {
        let mut s = Self::unchecked(components)?;
        let shift = s.total_mass().ln();
        if !shift.is_finite() {
            return Err(Error::InvalidParameter(
                "state has no probability mass".into(),
            ));
        }
        for c in &mut s.components {
            c.log_density = c.log_density.map(|l| l - shift);
        }
        Ok(s)
    }

    pub fn from_log_density(log_density: GridField, action: GridField) -> Result<Self> {
        Self::from_components(vec![Component::new(log_density, action)?])
    }

    /// Builds a single-component state from sampled `P >= 0`.
    pub fn from_density(
        density: &GridField,
        action: GridField,
        reg: Regularization,
    ) -> Result<Self> {
        let (log_density, floored) = log_with_floor(density, reg)?;
        let mut s = Self::from_components(vec![Component::new(log_density, action)?])?;
        s.floored_cells = floored;
        Ok(s)
    }

    pub(crate) fn unchecked(components: Vec<Component>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidParameter(
                "ensemble state needs a component".into(),
            ));
        };
        let domain = first.log_density.domain().clone();
        for c in &components {
            if c.log_density.domain() != &domain || c.action.domain() != &domain {
                return Err(Error::DomainMismatch);
            }
        }
        Ok(Self {
            components,
            floored_cells: 0,
        })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Component {
        &self.components[i]
    }

    pub fn domain(&self) -> &Domain {
        self.components[0].log_density.domain()
    }

    /// Cells raised to the floor when the state was built.
    pub fn floored_cells(&self) -> usize {
        self.floored_cells
    }

    pub fn total_mass(&self) -> f64 {
        self.components.iter().map(Component::mass).sum()
    }

    /// Density of a single-component state.
    pub fn density(&self) -> GridField {
        self.components[0].density()
    }

    pub fn action(&self) -> &GridField {
        &self.components[0].action
    }

    /// Same fields with a different Hamiltonian-independent label set; used by
    /// the control runs that only change `hbar`.
    pub(crate) fn replace_components(&self, components: Vec<Component>) -> Self {
        Self {
            components,
            floored_cells: self.floored_cells,
        }
    }
}

fn log_with_floor(density: &GridField, reg: Regularization) -> Result<(GridField, usize)> {
    let below = density.values().iter().filter(|p| **p < reg.floor).count();
    if below > 0 && !reg.enabled {
        return Err(Error::BelowFloor { cells: below });
    }
    let log = density.map(|p| p.max(reg.floor).ln());
    Ok((log, below))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_grid::Grid1D;

    fn gaussian_line(n: usize) -> (Domain, GridField) {
        let d = Domain::new(vec![Grid1D::bounded(n, -6.0, 6.0).unwrap()]).unwrap();
        let p =
            GridField::from_fn(&d, |c| (-c[0] * c[0]).exp() / std::f64::consts::PI.sqrt()).unwrap();
        (d, p)
    }

    #[test]
    fn density_floor_policy() {
        let (d, p) = gaussian_line(129);
        let s = GridField::constant(&d, 0.0);
        let err =
            EnsembleState::from_density(&p, s.clone(), Regularization::default()).unwrap_err();
        assert!(matches!(err, Error::BelowFloor { .. }));
        let st = EnsembleState::from_density(
            &p,
            s,
            Regularization {
                floor: 1e-12,
                enabled: true,
            },
        )
        .unwrap();
        assert!(st.floored_cells() > 0);
        assert!(st
            .density()
            .values()
            .iter()
            .all(|v| *v >= 1e-12 * (1.0 - 1e-12)));
    }

    #[test]
    fn normalization_is_checked() {
        let (d, p) = gaussian_line(129);
        let l = p.map(|v| (2.0 * v).ln());
        let s = GridField::constant(&d, 0.0);
        assert!(EnsembleState::from_log_density(l.clone(), s.clone()).is_err());
        let st = EnsembleState::normalized(vec![Component::new(l, s).unwrap()]).unwrap();
        assert!((st.total_mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hamiltonian_validation() {
        assert!(FunctionalHamiltonian::quantum(0.0, 1.0).is_err());
        assert!(FunctionalHamiltonian::quantum(1.0, -1.0).is_err());
        let h = FunctionalHamiltonian::hybrid(2.0, 1.0, 1.0).unwrap();
        assert_eq!(h.axis_role(0), (2.0, false));
        assert_eq!(h.axis_role(1), (1.0, true));
        assert_eq!(
            FunctionalHamiltonian::free_spin(1.0, 1.0)
                .unwrap()
                .components(),
            2
        );
    }
}
