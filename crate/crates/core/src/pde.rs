//! Explicit conservative finite-volume solvers for the four continuum
//! systems: degenerate, σ-viscous, η-shifted and mollified non-local.
//!
//! Every system is written as ∂_t u_i = (F_{i+½} − F_{i−½})/h per axis with
//! face fluxes
//!
//! ```text
//! F = σ(u_R − u_L)/h + P − u_up·v,   v = χ·((∂c)_L + (∂c)_R)/2
//! P = ((u_R+η)^m − (u_L+η)^m)/h                (local systems)
//! P = u_f·(p_λ(w_R) − p_λ(w_L))/h, w = V^{ε_p}∗u  (non-local)
//! ```
//!
//! with donor-cell upwinding for the chemotactic drift, the limited face
//! value u_f = min((u_L+u_R)/2, 2·u_up) for the non-local pressure drift,
//! and zero flux through the box boundary. The limiter keeps the pressure
//! flux centered (and so consistent with the local Δu^m form as ε → 0)
//! wherever the upwind cell is not much smaller than its neighbour, while
//! bounding the outflow by 2·u_up for positivity.
//! ∇c comes from free-space convolution with ∇Φ (local) or ∇Φ^{ε_k}
//! (non-local).

use serde::{Deserialize, Serialize};

use crate::error::{KsError, Result};
use crate::par::map_range;
use crate::fft::{Convolver, KernelBank, KernelSpectrum};
use crate::kernels::{mollified_gradient_tables, newtonian_gradient_tables, newtonian_potential_table, Mollifier};
use crate::pressure::PressureLaw;
use crate::types::{validate, Grid, RunStatus, ScalarField, SimParams, StepRecord, Trajectory, VectorField};

/// CFL safety factor.
pub const CFL: f64 = 0.4;
/// Amplification of ‖u‖_∞ over its initial value treated as blow-up.
pub const BLOWUP_FACTOR: f64 = 1e6;
const TINY: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// σ = 0, η = 0, no cutoff.
    Degenerate,
    /// σ-viscous, η = 0, no cutoff.
    Regularized,
    /// Δ(u+η)^m diffusion, no cutoff.
    EtaApprox,
    /// Mollified aggregation and pressure with the cutoff p_λ.
    NonLocal,
}

impl SystemKind {
    pub fn is_local(self) -> bool {
        self != SystemKind::NonLocal
    }

    /// Checks the parameter constraints this system imposes.
    pub fn check(self, p: &SimParams) -> Result<()> {
        let fail = |what: &str| Err(KsError::Precondition(format!("{self:?} system requires {what}")));
        match self {
            SystemKind::Degenerate if p.sigma != 0.0 || p.eta != 0.0 || p.lambda != 0.0 => {
                fail("σ = 0, η = 0 and λ = 0")
            }
            SystemKind::Regularized if p.eta != 0.0 || p.lambda != 0.0 => fail("η = 0 and λ = 0"),
            SystemKind::EtaApprox if p.lambda != 0.0 => fail("λ = 0"),
            SystemKind::NonLocal if !(p.eps_k > 0.0 && p.eps_p > 0.0 && p.lambda > 0.0) => {
                fail("ε_k, ε_p, λ > 0")
            }
            _ => Ok(()),
        }
    }
}

/// Solution at one time with the convolution products derived from it.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub t: f64,
    pub u: ScalarField,
    /// ∇c (absent when chemotaxis is off).
    pub grad_c: Option<VectorField>,
    /// V^{ε_p}∗u (non-local only).
    pub mollified_p: Option<ScalarField>,
    /// V^{ε_k}∗u, the Poisson source (non-local only).
    pub mollified_k: Option<ScalarField>,
}

/// Which bank outputs hold which convolution.
#[derive(Debug, Clone, Copy, Default)]
struct Layout {
    moll_p: Option<usize>,
    moll_k: Option<usize>,
    grad: Option<usize>,
}

/// Precomputed kernels and options for one (params, kind, grid) triple.
pub struct Solver {
    params: SimParams,
    kind: SystemKind,
    grid: Grid,
    conv: Convolver,
    bank: Option<KernelBank>,
    layout: Layout,
    law: Option<PressureLaw>,
    dt_override: Option<f64>,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver").field("params", &self.params).field("kind", &self.kind).field("grid", &self.grid).finish()
    }
}

impl Solver {
    pub fn new(params: SimParams, kind: SystemKind, grid: Grid) -> Result<Self> {
        validate(&params, &grid).map_err(KsError::Invalid)?;
        kind.check(&params)?;
        let conv = Convolver::new(grid);
        let mut tables = Vec::new();
        let mut layout = Layout::default();
        let mut law = None;
        if kind == SystemKind::NonLocal {
            layout.moll_p = Some(tables.len());
            tables.push(Mollifier::new(grid.d, params.eps_p)?.table(&conv));
            layout.moll_k = Some(tables.len());
            tables.push(Mollifier::new(grid.d, params.eps_k)?.table(&conv));
            law = Some(PressureLaw::cutoff(params.m, params.lambda)?);
        }
        if params.chemotaxis() {
            layout.grad = Some(tables.len());
            tables.extend(match kind {
                SystemKind::NonLocal => mollified_gradient_tables(&conv, params.eps_k),
                _ => newtonian_gradient_tables(&conv),
            });
        }
        let bank = if tables.is_empty() { None } else { Some(KernelBank::new(&conv, &tables)?) };
        Ok(Self { params, kind, grid, conv, bank, layout, law, dt_override: None })
    }

    /// Forces a fixed time step, bypassing the CFL check.
    pub fn with_dt_override(mut self, dt: Option<f64>) -> Self {
        self.dt_override = dt;
        self
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Builds the state at time t, evaluating every cached convolution.
    pub fn state(&self, t: f64, u: ScalarField) -> Result<SolverState> {
        u.grid().ensure_same(&self.grid)?;
        let mut out = match &self.bank {
            Some(bank) => bank.apply(&self.conv, u.values()),
            None => Vec::new(),
        };
        let g = self.grid;
        let grad_c = self.layout.grad.map(|k| VectorField::from_raw(g, out.drain(k..k + g.d).collect()));
        let take = |k: Option<usize>, out: &mut Vec<Vec<f64>>| k.map(|k| ScalarField::from_raw(g, std::mem::take(&mut out[k])));
        let mollified_p = take(self.layout.moll_p, &mut out);
        let mollified_k = take(self.layout.moll_k, &mut out);
        Ok(SolverState { t, u, grad_c, mollified_p, mollified_k })
    }

    /// c = Φ∗u (local) or Φ∗V^{ε_k}∗u (non-local), computed on demand.
    pub fn potential(&self, state: &SolverState) -> Result<ScalarField> {
        let source = state.mollified_k.as_ref().unwrap_or(&state.u);
        let k: KernelSpectrum = self.conv.kernel_spectrum(&newtonian_potential_table(&self.conv)?, None)?;
        Ok(ScalarField::from_raw(self.grid, self.conv.convolve(source.values(), &k)))
    }

    /// Per-cell pressure potential whose face differences drive P.
    fn pressure_potential(&self, st: &SolverState) -> Vec<f64> {
        let m = self.params.m;
        match (&self.law, &st.mollified_p) {
            (Some(law), Some(w)) => w.values().iter().map(|&v| law.value(v)).collect(),
            _ => {
                let eta = self.params.eta;
                st.u.values().iter().map(|&v| (v + eta).max(0.0).powf(m)).collect()
            }
        }
    }

    /// Largest stable explicit step for `st`.
    pub fn stable_dt(&self, st: &SolverState) -> f64 {
        let g = &self.grid;
        let (h, d) = (g.h(), g.d as f64);
        let u = st.u.values();
        let d_max = match (&self.law, &st.mollified_p) {
            (Some(law), Some(w)) => u.iter().zip(w.values()).fold(0.0f64, |a, (&ui, &wi)| a.max(ui * law.derivative(wi))),
            _ => {
                let (m, eta) = (self.params.m, self.params.eta);
                u.iter().fold(0.0f64, |a, &ui| a.max(m * (ui + eta).max(0.0).powf(m - 1.0)))
            }
        };
        let mut vel = 0.0;
        if let Some(gc) = &st.grad_c {
            vel += self.params.chi.abs() * gc.components().iter().map(|c| c.iter().fold(0.0f64, |a, v| a.max(v.abs()))).sum::<f64>();
        }
        if self.law.is_some() {
            let p = self.pressure_potential(st);
            for a in 0..g.d {
                let s = g.stride(a);
                let mut best = 0.0f64;
                for i in 0..p.len() {
                    if g.unflatten(i)[a] + 1 < g.n {
                        // the limited face value carries at most 2·u_up
                        best = best.max(2.0 * (p[i + s] - p[i]).abs() / h);
                    }
                }
                vel += best;
            }
        }
        let diff = h * h / (2.0 * d * (self.params.sigma + d_max) + TINY);
        let adv = h / (2.0 * vel + TINY);
        CFL * diff.min(adv)
    }

    /// One forward-Euler step; fails if dt exceeds the stable step.
    pub fn step(&self, st: &SolverState, dt: f64) -> Result<SolverState> {
        let limit = self.stable_dt(st);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(KsError::Precondition(format!("dt={dt} violates the stable step {limit}")));
        }
        self.advance(st, dt)
    }

    /// One forward-Euler step without the CFL check.
    pub fn advance(&self, st: &SolverState, dt: f64) -> Result<SolverState> {
        let g = self.grid;
        let (h, n) = (g.h(), g.n);
        let u = st.u.values();
        let p = self.pressure_potential(st);
        let gc = st.grad_c.as_ref().map(|v| v.components());
        let (sigma, chi, local) = (self.params.sigma, self.params.chi, self.kind.is_local());
        let face = |a: usize, l: usize, r: usize| -> f64 {
            let (ul, ur) = (u[l], u[r]);
            let mut f = sigma * (ur - ul) / h;
            let dp = (p[r] - p[l]) / h;
            if local {
                f += dp;
            } else {
                let up = if dp > 0.0 { ur } else { ul };
                f += (0.5 * (ul + ur)).min(2.0 * up) * dp;
            }
            if let Some(gc) = gc {
                let v = chi * 0.5 * (gc[a][l] + gc[a][r]);
                f -= v * if v > 0.0 { ul } else { ur };
            }
            f
        };
        let update = |i: usize| -> f64 {
            let ix = g.unflatten(i);
            let mut acc = 0.0;
            for a in 0..g.d {
                let s = g.stride(a);
                let hi = if ix[a] + 1 < n { face(a, i, i + s) } else { 0.0 };
                let lo = if ix[a] > 0 { face(a, i - s, i) } else { 0.0 };
                acc += hi - lo;
            }
            u[i] + dt * acc / h
        };
        let next = map_range(u.len(), 4096, update);
        let t = st.t + dt;
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(KsError::BlowUp { t, reason: format!("non-finite value at cell {i}") });
        }
        self.state(t, ScalarField::from_raw(g, next))
    }

    /// Advances `u0` to `params.t_end`, recording diagnostics each step and
    /// snapshots at t = 0, every requested time in (0, T) and T.
    pub fn solve(&self, u0: &ScalarField, snapshot_times: &[f64]) -> Result<Trajectory> {
        let t_end = self.params.t_end;
        let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t > 0.0 && t < t_end).collect();
        targets.push(t_end);
        targets.sort_by(f64::total_cmp);
        targets.dedup();

        let m = self.params.m;
        let limit = BLOWUP_FACTOR * u0.max_abs();
        let mut st = self.state(0.0, u0.clone())?;
        let mut traj = Trajectory {
            params: self.params,
            times: vec![0.0],
            snapshots: vec![u0.clone()],
            diagnostics: vec![StepRecord::measure(u0, m, 0.0, 0.0)],
            status: RunStatus::Completed,
        };
        'outer: for &target in &targets {
            while st.t < target {
                let mut dt = self.dt_override.unwrap_or_else(|| self.stable_dt(&st));
                let clipped = st.t + dt >= target * (1.0 - 1e-13);
                if clipped {
                    dt = target - st.t;
                }
                let next = self.advance(&st, dt).and_then(|mut s| {
                    let amp = s.u.max_abs();
                    if limit > 0.0 && amp > limit {
                        return Err(KsError::BlowUp { t: s.t, reason: format!("‖u‖_∞ = {amp:e} exceeds {limit:e}") });
                    }
                    if clipped {
                        s.t = target;
                    }
                    Ok(s)
                });
                match next {
                    Ok(s) => st = s,
                    Err(KsError::BlowUp { .. }) => {
                        traj.status = RunStatus::SuspectedBlowUp;
                        if traj.times.last() != Some(&st.t) {
                            traj.times.push(st.t);
                            traj.snapshots.push(st.u.clone());
                        }
                        break 'outer;
                    }
                    Err(e) => return Err(e),
                }
                traj.diagnostics.push(StepRecord::measure(&st.u, m, st.t, dt));
            }
            traj.times.push(st.t);
            traj.snapshots.push(st.u.clone());
        }
        Ok(traj)
    }
}

/// Mollifier width used for initial data at viscosity σ: √σ clamped to
/// [2h, L/8].
pub fn initial_width(grid: &Grid, sigma: f64) -> f64 {
    sigma.max(0.0).sqrt().clamp(2.0 * grid.h(), grid.half_width / 8.0)
}

/// u₀^σ = V^δ∗u₀ with δ = [`initial_width`]; roundoff negatives are zeroed.
pub fn make_initial_data(u0: &ScalarField, sigma: f64) -> Result<ScalarField> {
    if u0.min() < 0.0 {
        return Err(KsError::Domain(format!("initial data must be ≥ 0 (min {})", u0.min())));
    }
    let grid = *u0.grid();
    let conv = Convolver::new(grid);
    let v = Mollifier::new(grid.d, initial_width(&grid, sigma))?;
    let k = conv.kernel_spectrum(&v.table(&conv), None)?;
    let out = conv.convolve(u0.values(), &k).into_iter().map(|x| x.max(0.0)).collect();
    Ok(ScalarField::from_raw(grid, out))
}

/// Convenience wrapper: builds a [`Solver`] and runs it.
pub fn solve(u0: &ScalarField, params: &SimParams, kind: SystemKind, snapshot_times: &[f64]) -> Result<Trajectory> {
    Solver::new(*params, kind, *u0.grid())?.solve(u0, snapshot_times)
}
