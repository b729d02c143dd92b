//! Classical sector: uniform tensor-product grids, sampled fields,
//! fourth-order finite differences, the Poisson bracket and RK4
//! characteristics.

use std::io::Write;
use std::ops::{AddAssign, Mul};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arrays shorter than this are processed on the calling thread.
pub(crate) const PARALLEL_THRESHOLD: usize = 1 << 14;

/// Uniform one-dimensional grid.
///
/// Periodic grids exclude the right endpoint (`x_i = min + i h`, `h = (max - min) / n`);
/// bounded grids include both endpoints (`h = (max - min) / (n - 1)`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub periodic: bool,
}

impl Grid1D {
    pub fn new(n: usize, min: f64, max: f64, periodic: bool) -> Result<Self> {
        let g = Self {
            n,
            min,
            max,
            periodic,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn periodic(n: usize, min: f64, max: f64) -> Result<Self> {
        Self::new(n, min, max, true)
    }

    pub fn bounded(n: usize, min: f64, max: f64) -> Result<Self> {
        Self::new(n, min, max, false)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::InvalidGrid(format!(
                "need at least 8 points, got {}",
                self.n
            )));
        }
        if !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "bad interval [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.max - self.min) / self.n as f64
        } else {
            (self.max - self.min) / (self.n - 1) as f64
        }
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }
}

/// Tensor product of grids, row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    axes: Vec<Grid1D>,
}

impl Domain {
    pub fn new(axes: Vec<Grid1D>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidGrid("domain needs at least one axis".into()));
        }
        for g in &axes {
            g.validate()?;
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[Grid1D] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> Result<&Grid1D> {
        self.axes.get(a).ok_or(Error::AxisOutOfRange {
            axis: a,
            axes: self.axes.len(),
        })
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|g| g.n).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|g| g.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of one cell (product of spacings).
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|g| g.spacing()).product()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (a, g) in self.axes.iter().enumerate().rev() {
            idx[a] = flat % g.n;
            flat /= g.n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (i, g)| acc * g.n + i)
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(i, g)| g.point(*i))
            .collect()
    }

    /// Whether a point sits at least `margin` cells away from every bounded edge.
    pub fn is_interior(&self, flat: usize, margin: usize) -> bool {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .all(|(i, g)| g.periodic || (*i >= margin && *i + margin < g.n))
    }
}

/// Real values sampled on a [`Domain`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    domain: Domain,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(domain: Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::DimensionMismatch {
                expected: domain.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid field values".into()));
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn(domain: &Domain, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let values: Vec<f64> = (0..domain.len())
            .into_par_iter()
            .map(|i| f(&domain.coords(i)))
            .collect();
        Self::new(domain.clone(), values)
    }

    pub fn constant(domain: &Domain, c: f64) -> Self {
        Self {
            domain: domain.clone(),
            values: vec![c; domain.len()],
        }
    }

    pub(crate) fn from_parts_unchecked(domain: Domain, values: Vec<f64>) -> Self {
        Self { domain, values }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch);
        }
        Ok(Self {
            domain: self.domain.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// Midpoint-rule integral over the domain.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.domain.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Finite-difference derivative of the given order along one axis.
    pub fn derivative(&self, axis: usize, order: usize) -> Result<Self> {
        let grid = self.domain.axis(axis)?;
        let stencil = Stencil::new(grid, order)?;
        let values = stencil.apply(&self.values, &self.domain.shape(), axis);
        Ok(Self {
            domain: self.domain.clone(),
            values,
        })
    }

    /// CSV with one row per point: coordinates then value.
    pub fn write_csv<W: Write>(&self, out: W, columns: Option<&[&str]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = match columns {
            Some(c) if c.len() == self.domain.ndim() + 1 => {
                c.iter().map(|s| s.to_string()).collect()
            }
            Some(_) => {
                return Err(Error::InvalidParameter(
                    "CSV column count does not match domain".into(),
                ))
            }
            None => {
                let mut h: Vec<String> = (0..self.domain.ndim()).map(|a| format!("x{a}")).collect();
                h.push("value".into());
                h
            }
        };
        w.write_record(header.drain(..)).map_err(csv_err)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self
                .domain
                .coords(i)
                .iter()
                .map(|c| format!("{c:.12e}"))
                .collect();
            row.push(format!("{v:.12e}"));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidParameter(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("csv write failed: {e}"))
}

/// Fornberg's recursion for finite-difference weights on arbitrary nodes.
///
/// Returns `w[k][j]`, the weight of node `j` in the `k`-th derivative at `z`.
pub fn fornberg_weights(z: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Clone, Debug)]
struct StencilRow {
    indices: Vec<usize>,
    weights: Vec<f64>,
}

/// Fourth-order accurate difference operator for one axis and derivative order.
///
/// Interior points use centered stencils (5 points for orders 1-2, 7 for 3-4).
/// Periodic grids wrap; bounded grids switch to one-sided windows of
/// `order + 4` points near the edges.
#[derive(Clone, Debug)]
pub struct Stencil {
    rows: Vec<StencilRow>,
}

impl Stencil {
    pub fn new(grid: &Grid1D, order: usize) -> Result<Self> {
        if !(1..=4).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        grid.validate()?;
        let n = grid.n;
        let scale = grid.spacing().powi(order as i32);
        let half = if order <= 2 { 2usize } else { 3 };
        let centered_offsets: Vec<f64> = (-(half as i64)..=half as i64).map(|o| o as f64).collect();
        let centered = fornberg_weights(0.0, &centered_offsets, order)[order]
            .iter()
            .map(|w| w / scale)
            .collect::<Vec<_>>();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            if grid.periodic || (i >= half && i + half < n) {
                let indices = (0..centered.len())
                    .map(|j| (i as i64 + j as i64 - half as i64).rem_euclid(n as i64) as usize)
                    .collect();
                rows.push(StencilRow {
                    indices,
                    weights: centered.clone(),
                });
            } else {
                let width = order + 4;
                let start = if i < half { 0 } else { n - width };
                let nodes: Vec<f64> = (start..start + width)
                    .map(|j| j as f64 - i as f64)
                    .collect();
                let weights = fornberg_weights(0.0, &nodes, order)[order]
                    .iter()
                    .map(|w| w / scale)
                    .collect();
                rows.push(StencilRow {
                    indices: (start..start + width).collect(),
                    weights,
                });
            }
        }
        Ok(Self { rows })
    }

    /// Applies the stencil along `axis` of a row-major array with `shape`.
    pub fn apply<T>(&self, values: &[T], shape: &[usize], axis: usize) -> Vec<T>
    where
        T: Copy + Default + AddAssign + Mul<f64, Output = T> + Send + Sync,
    {
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![T::default(); values.len()];
        let kernel = |(idx, o): (usize, &mut T)| {
            let i = (idx / inner) % n;
            let base = idx - i * inner;
            let row = &self.rows[i];
            let mut acc = T::default();
            for (j, w) in row.indices.iter().zip(&row.weights) {
                acc += values[base + j * inner] * *w;
            }
            *o = acc;
        };
        if values.len() >= PARALLEL_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(kernel);
        } else {
            out.iter_mut().enumerate().for_each(kernel);
        }
        out
    }
}

/// Point `(x, k)` of a classical phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalPoint {
    pub x: Vec<f64>,
    pub k: Vec<f64>,
}

impl ClassicalPoint {
    pub fn new(x: Vec<f64>, k: Vec<f64>) -> Result<Self> {
        if x.len() != k.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: k.len(),
            });
        }
        Ok(Self { x, k })
    }

    pub fn dof(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.k).all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.k.iter().zip(&other.k))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Poisson bracket `{A, B}` on a phase-space domain whose first half of the
/// axes are positions and second half the conjugate momenta.
pub fn poisson_bracket(a: &GridField, b: &GridField) -> Result<GridField> {
    if a.domain != b.domain {
        return Err(Error::DomainMismatch);
    }
    let ndim = a.domain.ndim();
    if !ndim.is_multiple_of(2) {
        return Err(Error::InvalidGrid(
            "phase-space domain needs an even number of axes".into(),
        ));
    }
    let dof = ndim / 2;
    let mut out = vec![0.0; a.values.len()];
    for i in 0..dof {
        let ax = a.derivative(i, 1)?;
        let ak = a.derivative(i + dof, 1)?;
        let bx = b.derivative(i, 1)?;
        let bk = b.derivative(i + dof, 1)?;
        for (p, o) in out.iter_mut().enumerate() {
            *o += ax.values[p] * bk.values[p] - ak.values[p] * bx.values[p];
        }
    }
    Ok(GridField {
        domain: a.domain.clone(),
        values: out,
    })
}

/// Classical Hamiltonian supplied analytically as value plus gradients.
pub trait PhaseSpaceHamiltonian: Sync {
    fn value(&self, x: &[f64], k: &[f64]) -> f64;
    /// `(dH/dx, dH/dk)`.
    fn gradient(&self, x: &[f64], k: &[f64]) -> (Vec<f64>, Vec<f64>);
}

/// Closure-backed [`PhaseSpaceHamiltonian`].
pub struct AnalyticHamiltonian<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V, G> PhaseSpaceHamiltonian for AnalyticHamiltonian<V, G>
where
    V: Fn(&[f64], &[f64]) -> f64 + Sync,
    G: Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Sync,
{
    fn value(&self, x: &[f64], k: &[f64]) -> f64 {
        (self.value)(x, k)
    }

    fn gradient(&self, x: &[f64], k: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.gradient)(x, k)
    }
}

fn hamilton_rhs(
    h: &dyn PhaseSpaceHamiltonian,
    x: &[f64],
    k: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (gx, gk) = h.gradient(x, k);
    if gx.iter().chain(&gk).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hamiltonian gradient".into()));
    }
    Ok((gk, gx.into_iter().map(|v| -v).collect()))
}

fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// One classical RK4 step of Hamilton's equations.
pub fn rk4_hamilton_step(
    h: &dyn PhaseSpaceHamiltonian,
    p: &ClassicalPoint,
    dt: f64,
) -> Result<ClassicalPoint> {
    let (k1x, k1k) = hamilton_rhs(h, &p.x, &p.k)?;
    let (k2x, k2k) = hamilton_rhs(h, &axpy(&p.x, dt / 2.0, &k1x), &axpy(&p.k, dt / 2.0, &k1k))?;
    let (k3x, k3k) = hamilton_rhs(h, &axpy(&p.x, dt / 2.0, &k2x), &axpy(&p.k, dt / 2.0, &k2k))?;
    let (k4x, k4k) = hamilton_rhs(h, &axpy(&p.x, dt, &k3x), &axpy(&p.k, dt, &k3k))?;
    let combine = |y: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..y.len())
            .map(|i| y[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
            .collect()
    };
    Ok(ClassicalPoint {
        x: combine(&p.x, &k1x, &k2x, &k3x, &k4x),
        k: combine(&p.k, &k1k, &k2k, &k3k, &k4k),
    })
}

/// Evolves a weighted ensemble of phase-space points along Hamiltonian
/// characteristics with fixed-step RK4. Weights are carried unchanged.
pub fn evolve_characteristics(
    ensemble: &[(ClassicalPoint, f64)],
    h: &dyn PhaseSpaceHamiltonian,
    dt: f64,
    steps: usize,
) -> Result<Vec<(ClassicalPoint, f64)>> {
    ensemble
        .par_iter()
        .map(|(p, w)| {
            let mut p = p.clone();
            for _ in 0..steps {
                p = rk4_hamilton_step(h, &p, dt)?;
            }
            Ok((p, *w))
        })
        .collect()
}
