//! Phase-space marginal `rho(x, k)` of a hybrid ensemble, binned in `k`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EnsembleState, FunctionalHamiltonian, HamiltonianKind, DEFAULT_FLOOR};
use crate::error::{Error, Result};
use crate::phase_grid::Stencil;

/// Uniform bins over `[min, max]` in the classical momentum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KBinning {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl KBinning {
    pub fn new(min: f64, max: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bad k binning [{min}, {max}] x {bins}"
            )));
        }
        Ok(Self { min, max, bins })
    }

    /// Bins spanning the range of `d S / d x` over cells with `P >= 1e-12`,
    /// widened about its centre by `pad`.
    pub fn from_state(state: &EnsembleState, bins: usize, pad: f64) -> Result<Self> {
        let grad = momentum_field(state)?;
        let p = state.density();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (g, p) in grad.iter().zip(p.values()) {
            if *p >= DEFAULT_FLOOR {
                lo = lo.min(*g);
                hi = hi.max(*g);
            }
        }
        if !lo.is_finite() {
            return Err(Error::InvalidParameter(
                "no cell above the density floor".into(),
            ));
        }
        let centre = 0.5 * (lo + hi);
        let mut half = 0.5 * pad * (hi - lo);
        if half <= 1e-12 * centre.abs().max(1.0) {
            half = 0.5 * centre.abs().max(1.0);
        }
        Self::new(centre - half, centre + half, bins)
    }

    pub fn width(&self) -> f64 {
        (self.max - self.min) / self.bins as f64
    }

    pub fn centre(&self, j: usize) -> f64 {
        self.min + (j as f64 + 0.5) * self.width()
    }
}

/// Binned `rho(x, k)`: one row per point of the classical axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalRho {
    pub x: Vec<f64>,
    pub binning: KBinning,
    /// Row-major `x.len() x bins` probability masses.
    pub weights: Vec<f64>,
    /// Mass deposited outside `[min, max]`.
    pub overflow: f64,
}

impl MarginalRho {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.binning.bins + j]
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.overflow
    }

    /// `sum_ij w_ij k_j^n`, overflow excluded.
    pub fn k_moment(&self, n: i32) -> f64 {
        let b = self.binning.bins;
        self.weights
            .iter()
            .enumerate()
            .map(|(idx, w)| w * self.binning.centre(idx % b).powi(n))
            .sum()
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        self.weights
            .chunks(self.binning.bins)
            .map(|r| r.iter().sum())
            .collect()
    }

    /// CSV rows `x,k,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv output failed: {e}"));
        w.write_record(["x", "k", "weight"]).map_err(io)?;
        for (i, x) in self.x.iter().enumerate() {
            for j in 0..self.binning.bins {
                w.write_record([
                    format!("{x:.12e}"),
                    format!("{:.12e}", self.binning.centre(j)),
                    format!("{:.12e}", self.at(i, j)),
                ])
                .map_err(io)?;
            }
        }
        w.flush()
            .map_err(|e| Error::InvalidParameter(format!("csv output failed: {e}")))?;
        Ok(())
    }
}

/// `d S / d x` along the leading (classical) axis.
pub(crate) fn momentum_field(state: &EnsembleState) -> Result<Vec<f64>> {
    let d = state.domain();
    let st = Stencil::new(d.axis(0)?, 1)?;
    Ok(st.apply(state.action().values(), &d.shape(), 0))
}

/// Cloud-in-cell deposition of `P dV` at `k = d S / d x`.
pub fn marginal_rho(
    state: &EnsembleState,
    h: &FunctionalHamiltonian,
    binning: KBinning,
) -> Result<MarginalRho> {
    if h.kind != HamiltonianKind::Hybrid || h.classical_axes != 1 {
        return Err(Error::InvalidParameter(
            "marginal rho needs a hybrid state with one classical axis".into(),
        ));
    }
    h.check_state(state)?;
    let d = state.domain();
    let grad = momentum_field(state)?;
    let p = state.density();
    let nx = d.shape()[0];
    let inner = d.len() / nx;
    let bins = binning.bins;
    let width = binning.width();
    let dv = d.cell_volume();
    let mut weights = vec![0.0; nx * bins];
    let mut overflow = 0.0;
    for (flat, (k, p)) in grad.iter().zip(p.values()).enumerate() {
        let row = flat / inner;
        let w = p * dv;
        let u = (k - binning.min) / width - 0.5;
        let j0 = u.floor();
        let frac = u - j0;
        for (j, share) in [(j0, 1.0 - frac), (j0 + 1.0, frac)] {
            if share == 0.0 {
                continue;
            }
            if j >= 0.0 && j < bins as f64 {
                weights[row * bins + j as usize] += share * w;
            } else if j == -1.0 && *k >= binning.min {
                // Half-bin strips at the edges still lie inside the range.
                weights[row * bins] += share * w;
            } else if j == bins as f64 && *k <= binning.max {
                weights[row * bins + bins - 1] += share * w;
            } else {
                overflow += share * w;
            }
        }
    }
    Ok(MarginalRho {
        x: d.axis(0)?.points(),
        binning,
        weights,
        overflow,
    })
}

/// `max |P(x, q) - Pbar(x) Pbar(q)|` for a state whose leading axis is classical.
pub fn separability_defect(state: &EnsembleState) -> Result<f64> {
    let d = state.domain();
    if d.ndim() < 2 {
        return Err(Error::InvalidParameter(
            "separability needs at least two axes".into(),
        ));
    }
    let p = state.density();
    let nx = d.shape()[0];
    let inner = d.len() / nx;
    let hx = d.axes()[0].spacing();
    let hq = d.cell_volume() / hx;
    let mut px = vec![0.0; nx];
    let mut pq = vec![0.0; inner];
    for (flat, v) in p.values().iter().enumerate() {
        px[flat / inner] += v * hq;
        pq[flat % inner] += v * hx;
    }
    Ok(p.values()
        .iter()
        .enumerate()
        .map(|(flat, v)| (v - px[flat / inner] * pq[flat % inner]).abs())
        .fold(0.0, f64::max))
}
