//! Parameter records, the truncated box grid, and grid-sampled fields.
//!
//! ℝ^d is replaced by the box [−L, L]^d split into n^d cells of side
//! h = 2L/n. Field values live at cell centers, stored row-major with
//! axis 0 slowest.

use serde::{Deserialize, Serialize};

use crate::error::{KsError, Result, Violation};

/// Model and discretization constants shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub d: usize,
    /// Pressure exponent in p(u) = m/(m−1)·u^{m−1}.
    pub m: f64,
    pub sigma: f64,
    pub eps_k: f64,
    pub eps_p: f64,
    /// Pressure cutoff parameter; 0 means no cutoff (local systems).
    pub lambda: f64,
    pub eta: f64,
    /// Chemotactic sensitivity. Fixed to 1; 0 switches the aggregation off
    /// for porous-medium oracle runs.
    pub chi: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            d: 2,
            m: 2.0,
            sigma: 0.05,
            eps_k: 0.1,
            eps_p: 0.1,
            lambda: 0.0,
            eta: 0.0,
            chi: 1.0,
            t_end: 0.1,
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn chemotaxis(&self) -> bool {
        self.chi != 0.0
    }
}

/// Collects every violated invariant of `params` on `grid`.
///
/// Mollifier resolution (h ≤ ε/4) is only required when a cutoff λ > 0 is
/// configured, which is exactly when a mollified system is run.
pub fn validate(params: &SimParams, grid: &Grid) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if !(params.d == 2 || params.d == 3) {
        out.push(Violation::Dimension(params.d));
    }
    if grid.d != params.d {
        out.push(Violation::GridDimension { grid: grid.d, params: params.d });
    }
    if !(params.m > 1.0) || !params.m.is_finite() {
        out.push(Violation::PressureExponent(params.m));
    }
    if params.lambda != 0.0 && !(params.lambda > 0.0 && 2.0 * params.lambda < 1.0 / params.lambda)
    {
        out.push(Violation::CutoffBand(params.lambda));
    }
    if !(params.chi == 1.0 || params.chi == 0.0) {
        out.push(Violation::Chemotaxis(params.chi));
    }
    if !(params.sigma >= 0.0) {
        out.push(Violation::NegativeViscosity(params.sigma));
    }
    if !(params.eta >= 0.0) {
        out.push(Violation::NegativeShift(params.eta));
    }
    if !(params.eps_k > 0.0) {
        out.push(Violation::MollifierRadius { name: "eps_k", value: params.eps_k });
    }
    if !(params.eps_p > 0.0) {
        out.push(Violation::MollifierRadius { name: "eps_p", value: params.eps_p });
    }
    if !(params.t_end > 0.0) {
        out.push(Violation::FinalTime(params.t_end));
    }
    if params.lambda > 0.0 {
        let h = grid.h();
        for (name, eps) in [("eps_k", params.eps_k), ("eps_p", params.eps_p)] {
            if eps > 0.0 && h > eps / 4.0 * (1.0 + 1e-12) {
                out.push(Violation::Underresolved { name, eps, h });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Uniform cell-centered grid on [−L, L]^d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
    pub half_width: f64,
}

impl Grid {
    pub fn new(d: usize, n: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(KsError::Domain(format!("grid dimension {d} unsupported")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(KsError::Domain(format!("points per axis n={n} must be a power of two")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(KsError::Domain(format!("half width L={half_width} must be > 0")));
        }
        Ok(Self { d, n, half_width })
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of cell center `i` along any axis.
    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.h()
    }

    /// Stride of `axis` in the flat row-major layout.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.d - 1 - axis) as u32)
    }

    /// Multi-index of a flat index (unused axes are 0).
    #[inline]
    pub fn unflatten(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for axis in (0..self.d).rev() {
            out[axis] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    #[inline]
    pub fn flatten(&self, ix: [usize; 3]) -> usize {
        let mut idx = 0;
        for &i in ix.iter().take(self.d) {
            idx = idx * self.n + i;
        }
        idx
    }

    /// Cell-center position of a flat index (unused axes are 0).
    #[inline]
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let ix = self.unflatten(idx);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = self.center(ix[a]);
        }
        x
    }

    /// Flat index of the cell containing `x`, if inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let h = self.h();
        let mut ix = [0usize; 3];
        for a in 0..self.d {
            let s = (x[a] + self.half_width) / h;
            if !(s >= 0.0 && s < self.n as f64) {
                return None;
            }
            ix[a] = s as usize;
        }
        Some(self.flatten(ix))
    }

    fn same(&self, other: &Grid) -> bool {
        self.d == other.d && self.n == other.n && self.half_width == other.half_width
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.same(other) {
            Ok(())
        } else {
            Err(KsError::GridMismatch(format!(
                "(d={}, n={}, L={}) vs (d={}, n={}, L={})",
                self.d, self.n, self.half_width, other.d, other.n, other.half_width
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(KsError::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(KsError::Domain(format!("non-finite field value at cell {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Skips the finiteness scan; used by solvers that check on their own.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let x = grid.position(idx);
                f(&x[..grid.d])
            })
            .collect();
        Self { grid, values }
    }

    /// Cell averages of `f`, by a `sub`-point midpoint rule per axis.
    pub fn cell_averages(grid: Grid, sub: usize, f: impl Fn(&[f64]) -> f64) -> Self {
        let h = grid.h();
        let offsets: Vec<f64> =
            (0..sub).map(|k| ((k as f64 + 0.5) / sub as f64 - 0.5) * h).collect();
        let count = sub.pow(grid.d as u32);
        let values = (0..grid.len())
            .map(|idx| {
                let c = grid.position(idx);
                let mut acc = 0.0;
                for s in 0..count {
                    let mut x = c;
                    let mut r = s;
                    for xa in x.iter_mut().take(grid.d) {
                        *xa += offsets[r % sub];
                        r /= sub;
                    }
                    acc += f(&x[..grid.d]);
                }
                acc / count as f64
            })
            .collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| alpha * v).collect() }
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Mirror image x_axis → −x_axis.
    pub fn reflect(&self, axis: usize) -> Self {
        let g = self.grid;
        let mut values = vec![0.0; g.len()];
        for (idx, v) in values.iter_mut().enumerate() {
            let mut ix = g.unflatten(idx);
            ix[axis] = g.n - 1 - ix[axis];
            *v = self.values[g.flatten(ix)];
        }
        Self { grid: g, values }
    }

    /// Whole-cell shift along `axis`; cells shifted in from outside are 0.
    pub fn translate(&self, axis: usize, cells: isize) -> Self {
        let g = self.grid;
        let mut values = vec![0.0; g.len()];
        for (idx, v) in values.iter_mut().enumerate() {
            let mut ix = g.unflatten(idx);
            let src = ix[axis] as isize - cells;
            if src < 0 || src >= g.n as isize {
                continue;
            }
            ix[axis] = src as usize;
            *v = self.values[g.flatten(ix)];
        }
        Self { grid: g, values }
    }

    /// Fraction of |mass| outside the inner box [−L/2, L/2]^d.
    pub fn outer_mass_fraction(&self) -> f64 {
        let g = self.grid;
        let inner = g.half_width / 2.0;
        let (mut total, mut outer) = (0.0, 0.0);
        for (idx, &v) in self.values.iter().enumerate() {
            let x = g.position(idx);
            total += v.abs();
            if x[..g.d].iter().any(|c| c.abs() > inner) {
                outer += v.abs();
            }
        }
        if total > 0.0 {
            outer / total
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.d || components.iter().any(|c| c.len() != grid.len()) {
            return Err(KsError::GridMismatch("vector field component shape".into()));
        }
        if components.iter().flatten().any(|v| !v.is_finite()) {
            return Err(KsError::Domain("non-finite vector field value".into()));
        }
        Ok(Self { grid, components })
    }

    pub(crate) fn from_raw(grid: Grid, components: Vec<Vec<f64>>) -> Self {
        Self { grid, components }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, components: vec![vec![0.0; grid.len()]; grid.d] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Max over cells of the ℓ¹ norm of the vector.
    pub fn max_l1(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.components.iter().map(|c| c[i].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Per-step solver diagnostics, one CSV row each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub l2m: f64,
    pub linf: f64,
    pub min: f64,
    pub dt: f64,
}

impl StepRecord {
    pub fn measure(u: &ScalarField, m: f64, t: f64, dt: f64) -> Self {
        let vol = u.grid().cell_volume();
        let q = 2.0 * m;
        let (mut sum, mut l1, mut l2, mut l2m) = (0.0, 0.0, 0.0, 0.0);
        let (mut linf, mut min) = (0.0f64, f64::INFINITY);
        for &v in u.values() {
            let a = v.abs();
            sum += v;
            l1 += a;
            l2 += a * a;
            l2m += a.powf(q);
            linf = linf.max(a);
            min = min.min(v);
        }
        Self {
            t,
            mass: sum * vol,
            l1: l1 * vol,
            l2: (l2 * vol).sqrt(),
            l2m: (l2m * vol).powf(1.0 / q),
            linf,
            min,
            dt,
        }
    }
}

/// How a solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    SuspectedBlowUp,
}

/// Output of a solver run: snapshots at requested times plus per-step diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: SimParams,
    pub times: Vec<f64>,
    pub snapshots: Vec<ScalarField>,
    pub diagnostics: Vec<StepRecord>,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        self.snapshots[0].grid()
    }

    pub fn last(&self) -> &ScalarField {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    /// Snapshot recorded at time `t` (exact match up to 1e-12).
    pub fn at(&self, t: f64) -> Option<&ScalarField> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0)).map(|i| &self.snapshots[i])
    }
}
