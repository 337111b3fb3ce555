//! Norms, error measures, convergence-rate fits and analytic oracles.

use serde::{Deserialize, Serialize};

use crate::error::{KsError, Result};
use crate::fft::Convolver;
use crate::kernels::{surface_area, Mollifier};
use crate::types::{Grid, ScalarField};

/// Discrete L^q norm (Σ|f|^q h^d)^{1/q}; q = ∞ gives max|f|.
pub fn lq_norm(f: &ScalarField, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(KsError::Domain(format!("L^q norm needs q ≥ 1, got {q}")));
    }
    Ok(norm_of(f.values(), f.grid().cell_volume(), q))
}

fn norm_of(v: &[f64], vol: f64, q: f64) -> f64 {
    if q.is_infinite() {
        return v.iter().fold(0.0, |a, x| a.max(x.abs()));
    }
    let s: f64 = if q == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if q == 2.0 {
        v.iter().map(|x| x * x).sum()
    } else {
        v.iter().map(|x| x.abs().powf(q)).sum()
    };
    (s * vol).powf(1.0 / q)
}

/// ‖f − g‖_q.
pub fn field_error(f: &ScalarField, g: &ScalarField, q: f64) -> Result<f64> {
    lq_norm(&f.sub(g)?, q)
}

/// Least-squares line log(error) = slope·log(parameter) + intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square deviation of log(error) from the line.
    pub residual: f64,
}

impl RateFit {
    /// `name,slope,intercept,residual`
    pub fn csv_row(&self, name: &str) -> String {
        format!("{name},{},{},{}", self.slope, self.intercept, self.residual)
    }
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(KsError::Precondition(format!(
            "need ≥ 3 points for a rate fit, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|(a, b)| !(*a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite())) {
        return Err(KsError::Domain(format!("rate fit needs positive finite points, got {p:?}")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(KsError::Domain("rate fit needs at least two distinct parameters".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok(RateFit { points: points.to_vec(), slope, intercept, residual: (ss / n).sqrt() })
}

/// Forward differences (f_{i+e_a} − f_i)/h over all interior faces, per axis.
fn face_differences(f: &[f64], grid: &Grid) -> Vec<Vec<f64>> {
    let h = grid.h();
    (0..grid.d)
        .map(|a| {
            let s = grid.stride(a);
            (0..f.len())
                .filter(|&i| grid.unflatten(i)[a] + 1 < grid.n)
                .map(|i| (f[i + s] - f[i]) / h)
                .collect()
        })
        .collect()
}

/// max over cells of the Euclidean norm of the centered-difference gradient
/// (one-sided at the box edge).
pub fn gradient_sup(f: &ScalarField) -> f64 {
    let g = f.grid();
    let (n, h, v) = (g.n, g.h(), f.values());
    let mut best = 0.0f64;
    for i in 0..v.len() {
        let ix = g.unflatten(i);
        let mut s2 = 0.0;
        for a in 0..g.d {
            let s = g.stride(a);
            let (lo, hi) = (ix[a] > 0, ix[a] + 1 < n);
            let d = match (lo, hi) {
                (true, true) => (v[i + s] - v[i - s]) / (2.0 * h),
                (false, true) => (v[i + s] - v[i]) / h,
                (true, false) => (v[i] - v[i - s]) / h,
                (false, false) => 0.0,
            };
            s2 += d * d;
        }
        best = best.max(s2.sqrt());
    }
    best
}

/// Discrete H¹ seminorm (Σ_faces |D⁺f|² h^d)^{1/2}.
pub fn h1_seminorm(f: &ScalarField) -> f64 {
    let vol = f.grid().cell_volume();
    let s: f64 = face_differences(f.values(), f.grid()).iter().flatten().map(|d| d * d).sum();
    (s * vol).sqrt()
}

/// Space-time norm (Σ_k ‖u_k‖_q^q dt_k)^{1/q} over (field, dt) pairs.
pub fn spacetime_norm<'a>(slices: impl IntoIterator<Item = (&'a ScalarField, f64)>, q: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (u, dt) in slices {
        acc += lq_norm(u, q)?.powf(q) * dt;
    }
    Ok(acc.powf(1.0 / q))
}

/// Residual of the discrete L² energy balance over one step u0 → u1:
/// (‖u1‖² − ‖u0‖²)/(2dt) + σ‖∇u0‖² + 4m/(m+1)²‖∇u0^{(m+1)/2}‖² − χ‖u0‖₃³/2.
/// Nonpositive up to consistency error for the aggregation–diffusion flow.
pub fn energy_residual(u0: &ScalarField, u1: &ScalarField, dt: f64, sigma: f64, m: f64, chi: f64) -> Result<f64> {
    u0.grid().ensure_same(u1.grid())?;
    let l2 = |u: &ScalarField| lq_norm(u, 2.0).map(|v| v * v);
    let half = u0.map(|v| v.max(0.0).powf((m + 1.0) / 2.0));
    let cube = lq_norm(u0, 3.0)?.powi(3);
    Ok((l2(u1)? - l2(u0)?) / (2.0 * dt)
        + sigma * h1_seminorm(u0).powi(2)
        + 4.0 * m / (m + 1.0).powi(2) * h1_seminorm(&half).powi(2)
        - 0.5 * chi * cube)
}

/// ‖V^ε∗(fg) − (V^ε∗f)·g‖_q / (ε·‖∇g‖_∞·‖f‖_q) on the grid.
pub fn commutator_ratio(f: &ScalarField, g: &ScalarField, eps: f64, q: f64) -> Result<f64> {
    let (num, grad, fq) = commutator_parts(f, g, eps, q)?;
    if grad == 0.0 || fq == 0.0 {
        return Err(KsError::Domain(format!(
            "commutator ratio undefined: ‖∇g‖_∞ = {grad}, ‖f‖_q = {fq}"
        )));
    }
    Ok(num / (eps * grad * fq))
}

/// (‖V^ε∗(fg) − (V^ε∗f)·g‖_q, ‖∇g‖_∞, ‖f‖_q).
pub fn commutator_parts(f: &ScalarField, g: &ScalarField, eps: f64, q: f64) -> Result<(f64, f64, f64)> {
    let num = lq_norm(&commutator(f, g, eps)?, q)?;
    Ok((num, gradient_sup(g), lq_norm(f, q)?))
}

/// V^ε∗(fg) − (V^ε∗f)·g on the grid (one paired FFT convolution).
pub fn commutator(f: &ScalarField, g: &ScalarField, eps: f64) -> Result<ScalarField> {
    f.grid().ensure_same(g.grid())?;
    let grid = *f.grid();
    let conv = Convolver::new(grid);
    let kernel = conv.kernel_spectrum(&Mollifier::new(grid.d, eps)?.table(&conv), None)?;
    let fg: Vec<f64> = f.values().iter().zip(g.values()).map(|(a, b)| a * b).collect();
    let (vfg, vf) = conv.apply(&conv.transform_pair(&fg, Some(f.values())), &kernel);
    let diff = vfg.iter().zip(&vf).zip(g.values()).map(|((a, b), c)| a - b * c).collect();
    Ok(ScalarField::from_raw(grid, diff))
}

/// Self-similar porous-medium solution
/// u(t,x) = t^{−α}(C − κ|x|²t^{−2β})₊^{1/(m−1)} of total mass M.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barenblatt {
    pub m: f64,
    pub d: usize,
    pub mass: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub c: f64,
}

impl Barenblatt {
    pub fn new(m: f64, d: usize, mass: f64) -> Result<Self> {
        if !(m > 1.0) {
            return Err(KsError::Domain(format!("Barenblatt profile needs m > 1, got {m}")));
        }
        if !(1..=3).contains(&d) || !(mass > 0.0) {
            return Err(KsError::Domain(format!("Barenblatt profile needs d ∈ 1..3 and M > 0 (d={d}, M={mass})")));
        }
        let df = d as f64;
        let alpha = df / (df * (m - 1.0) + 2.0);
        let beta = alpha / df;
        let kappa = alpha * (m - 1.0) / (2.0 * m * df);
        // M = ω_d/2 · κ^{−d/2} · C^{k+d/2} · B(d/2, k+1), k = 1/(m−1)
        let k = 1.0 / (m - 1.0);
        let b = statrs::function::beta::beta(df / 2.0, k + 1.0);
        let c = (2.0 * mass * kappa.powf(df / 2.0) / (surface_area(d) * b)).powf(1.0 / (k + df / 2.0));
        Ok(Self { m, d, mass, alpha, beta, kappa, c })
    }

    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let inner = self.c - self.kappa * r2 * t.powf(-2.0 * self.beta);
        if inner <= 0.0 {
            return 0.0;
        }
        t.powf(-self.alpha) * inner.powf(1.0 / (self.m - 1.0))
    }

    /// Radius where the profile vanishes: (C/κ)^{1/2} t^β.
    pub fn support_radius(&self, t: f64) -> f64 {
        (self.c / self.kappa).sqrt() * t.powf(self.beta)
    }

    /// Cell averages on `grid` at time t (sub^d midpoint samples per cell).
    pub fn field(&self, grid: Grid, t: f64, sub: usize) -> ScalarField {
        ScalarField::cell_averages(grid, sub, |x| self.value(x, t))
    }
}

/// Barenblatt profile at (x, t) with mass M in dimension d = x.len().
pub fn barenblatt(x: &[f64], t: f64, m: f64, mass: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(KsError::Domain(format!("Barenblatt profile needs t > 0, got {t}")));
    }
    Ok(Barenblatt::new(m, x.len(), mass)?.value(x, t))
}
