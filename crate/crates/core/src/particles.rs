//! Euler–Maruyama simulation of the moderately interacting particle system
//!
//! ```text
//! dX_i = [ (1/N) Σ_j ∇Φ^{ε_k}(X_i − X_j) − ∇p_λ((1/N) Σ_j V^{ε_p}(X_i − X_j)) ] dt + √(2σ) dB_i
//! ```
//!
//! and of its McKean–Vlasov counterpart driven by frozen grid fields, plus
//! kernel density reconstruction.
//!
//! Randomness is counter based: the normal increments of particle i at step
//! k come from a ChaCha8 stream keyed by (seed, k) with stream id i, so runs
//! are reproducible independent of thread count.

use std::collections::HashMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};

use crate::error::{KsError, Result};
use crate::par::map_range;
use crate::fft::{Convolver, KernelBank};
use crate::kernels::{mollified_gradient_tables, mollified_newtonian_gradient, surface_area, Mollifier};
use crate::pressure::PressureLaw;
use crate::types::{Grid, ScalarField, SimParams, Trajectory, VectorField};

/// Counter reserved for initial sampling.
const SAMPLING_COUNTER: u64 = u64::MAX;

/// Generator for particle `index` at counter `counter`.
pub fn stream_rng(seed: u64, counter: u64, index: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&counter.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index as u64);
    rng
}

/// N particles in ℝ^d at time t.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    d: usize,
    /// Row-major N×d.
    positions: Vec<f64>,
    t: f64,
    /// Number of EM steps taken (the RNG counter).
    steps: u64,
    seed: u64,
}

impl ParticleEnsemble {
    pub fn new(d: usize, positions: Vec<f64>, seed: u64) -> Result<Self> {
        if !(1..=3).contains(&d) || positions.is_empty() || !positions.len().is_multiple_of(d) {
            return Err(KsError::Domain(format!(
                "need N ≥ 1 points in d ∈ 1..3 (d={d}, {} coordinates)",
                positions.len()
            )));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(KsError::Domain("particle positions must be finite".into()));
        }
        Ok(Self { d, positions, t: 0.0, steps: 0, seed })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    #[inline]
    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }

    pub fn center_of_mass(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for i in 0..self.len() {
            for (a, x) in self.position(i).iter().enumerate() {
                c[a] += x;
            }
        }
        c.iter_mut().for_each(|v| *v /= self.len() as f64);
        c
    }

    /// Same ensemble with the time and RNG counter reset.
    pub fn with_time(mut self, t: f64, steps: u64) -> Self {
        self.t = t;
        self.steps = steps;
        self
    }
}

/// N i.i.d. samples from the piecewise-constant density `u0` by rejection
/// against a uniform proposal on the bounding box of its support.
pub fn sample_initial(n: usize, u0: &ScalarField, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(KsError::Domain("need at least one particle".into()));
    }
    if u0.min() < 0.0 {
        return Err(KsError::Domain("sampling density must be ≥ 0".into()));
    }
    if !(u0.mass() > 0.0) {
        return Err(KsError::Domain("sampling density has zero mass".into()));
    }
    let g = *u0.grid();
    let d = g.d;
    let (mut lo, mut hi) = ([usize::MAX; 3], [0usize; 3]);
    for (i, &v) in u0.values().iter().enumerate() {
        if v > 0.0 {
            let ix = g.unflatten(i);
            for a in 0..d {
                lo[a] = lo[a].min(ix[a]);
                hi[a] = hi[a].max(ix[a]);
            }
        }
    }
    let h = g.h();
    let x0: Vec<f64> = (0..d).map(|a| g.center(lo[a]) - h / 2.0).collect();
    let span: Vec<f64> = (0..d).map(|a| (hi[a] - lo[a] + 1) as f64 * h).collect();
    let umax = u0.max();
    let draw = |i: usize| -> Vec<f64> {
        let mut rng = stream_rng(seed, SAMPLING_COUNTER, i);
        loop {
            let x: Vec<f64> = (0..d)
                .map(|a| {
                    let s: f64 = StandardUniform.sample(&mut rng);
                    x0[a] + s * span[a]
                })
                .collect();
            let accept: f64 = StandardUniform.sample(&mut rng);
            if let Some(c) = g.locate(&x) {
                if accept * umax < u0.values()[c] {
                    return x;
                }
            }
        }
    };
    let positions: Vec<f64> = map_range(n, 64, draw).into_iter().flatten().collect();
    ParticleEnsemble::new(d, positions, seed)
}

/// Kernels entering the particle drift.
#[derive(Debug, Clone, Copy)]
pub struct DriftKernels {
    pub eps_k: f64,
    pub mollifier: Mollifier,
    pub law: PressureLaw,
    pub chi: f64,
    pub pressure: bool,
}

impl DriftKernels {
    pub fn new(params: &SimParams) -> Result<Self> {
        Ok(Self {
            eps_k: params.eps_k,
            mollifier: Mollifier::new(params.d, params.eps_p)?,
            law: PressureLaw::new(params.m, params.lambda)?,
            chi: params.chi,
            pressure: true,
        })
    }

    /// Copy with the aggregation (χ) and pressure terms switched on or off.
    pub fn with_terms(mut self, aggregation: bool, pressure: bool) -> Self {
        if !aggregation {
            self.chi = 0.0;
        }
        self.pressure = pressure;
        self
    }
}

/// Per-particle sums (1/N)Σ_j of ∇Φ^{ε_k}, V^{ε_p} and ∇V^{ε_p}.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSums {
    pub d: usize,
    pub aggregation: Vec<f64>,
    pub density: Vec<f64>,
    pub density_gradient: Vec<f64>,
}

impl PairSums {
    /// χ·agg_i − p_λ′(ρ_i)·∇ρ_i, row-major N×d.
    pub fn drift(&self, k: &DriftKernels) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; self.aggregation.len()];
        for (i, row) in out.chunks_mut(d).enumerate() {
            let dp = if k.pressure { k.law.derivative(self.density[i]) } else { 0.0 };
            for a in 0..d {
                row[a] = k.chi * self.aggregation[i * d + a] - dp * self.density_gradient[i * d + a];
            }
        }
        out
    }
}

/// Pair sums with the mollifier part restricted to neighbouring cells of a
/// cell list of side max(ε_k, ε_p); the long-range aggregation sum is
/// taken over all pairs with the closed-form ∇Φ^{ε_k}.
pub fn pair_sums(ens: &ParticleEnsemble, k: &DriftKernels) -> PairSums {
    let (n, d) = (ens.len(), ens.dim());
    let side = k.eps_k.max(k.mollifier.eps());
    let key = |x: &[f64]| {
        let mut c = [0i64; 3];
        for a in 0..d {
            c[a] = (x[a] / side).floor() as i64;
        }
        c
    };
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for i in 0..n {
        cells.entry(key(ens.position(i))).or_default().push(i);
    }
    let offsets: Vec<[i64; 3]> = (0..3usize.pow(d as u32))
        .map(|mut s| {
            let mut o = [0i64; 3];
            for oa in o.iter_mut().take(d) {
                *oa = (s % 3) as i64 - 1;
                s /= 3;
            }
            o
        })
        .collect();
    let e2 = k.mollifier.eps().powi(2);
    let ek2 = k.eps_k * k.eps_k;
    let inv_omega = 1.0 / surface_area(d);
    let inv_n = 1.0 / n as f64;
    let row = |i: usize| -> Vec<f64> {
        let xi = ens.position(i);
        let mut out = vec![0.0; 2 * d + 1];
        let mut r = [0.0; 3];
        for xj in ens.positions.chunks_exact(d) {
            let mut r2 = 0.0;
            for a in 0..d {
                r[a] = xi[a] - xj[a];
                r2 += r[a] * r[a];
            }
            // outside ε_k the mollified kernel is exactly −x/(ω_d|x|^d)
            if r2 >= ek2 {
                let f = if d == 2 { inv_omega / r2 } else { inv_omega / (r2 * r2.sqrt()) };
                for a in 0..d {
                    out[a] -= f * r[a];
                }
            } else {
                let g = mollified_newtonian_gradient(&r[..d], k.eps_k);
                for a in 0..d {
                    out[a] += g[a];
                }
            }
        }
        let c = key(xi);
        for o in &offsets {
            let nb = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
            let Some(list) = cells.get(&nb) else { continue };
            for &j in list {
                let xj = ens.position(j);
                let mut r2 = 0.0;
                for a in 0..d {
                    r[a] = xi[a] - xj[a];
                    r2 += r[a] * r[a];
                }
                if r2 >= e2 {
                    continue;
                }
                out[d] += k.mollifier.value_r2(r2);
                let gv = k.mollifier.gradient(&r[..d]);
                for a in 0..d {
                    out[d + 1 + a] += gv[a];
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= inv_n);
        out
    };
    let rows = map_range(n, 64, row);
    let mut sums = PairSums {
        d,
        aggregation: Vec::with_capacity(n * d),
        density: Vec::with_capacity(n),
        density_gradient: Vec::with_capacity(n * d),
    };
    for r in rows {
        sums.aggregation.extend_from_slice(&r[..d]);
        sums.density.push(r[d]);
        sums.density_gradient.extend_from_slice(&r[d + 1..]);
    }
    sums
}

/// Total drift of every particle, row-major N×d.
pub fn pair_drift(ens: &ParticleEnsemble, k: &DriftKernels) -> Vec<f64> {
    pair_sums(ens, k).drift(k)
}

/// EM step size min(ε_k, ε_p)/(10·max_i|drift_i|) (infinite for zero drift).
pub fn em_dt(drift: &[f64], d: usize, k: &DriftKernels) -> f64 {
    let vmax = drift
        .chunks(d)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    k.eps_k.min(k.mollifier.eps()) / (10.0 * vmax)
}

/// X ← X + drift·dt + √(2σ dt)·ξ with counter-based normal increments.
pub fn em_update(ens: &ParticleEnsemble, drift: &[f64], sigma: f64, dt: f64) -> Result<ParticleEnsemble> {
    if !(dt > 0.0) {
        return Err(KsError::Precondition(format!("time step dt={dt} must be > 0")));
    }
    let d = ens.d;
    let amp = (2.0 * sigma * dt).sqrt();
    let moved = |i: usize| -> Vec<f64> {
        let mut rng = stream_rng(ens.seed, ens.steps, i);
        (0..d)
            .map(|a| {
                let xi: f64 = if amp > 0.0 { StandardNormal.sample(&mut rng) } else { 0.0 };
                ens.positions[i * d + a] + drift[i * d + a] * dt + amp * xi
            })
            .collect()
    };
    let positions = map_range(ens.len(), 64, moved).into_iter().flatten().collect();
    Ok(ParticleEnsemble { d, positions, t: ens.t + dt, steps: ens.steps + 1, seed: ens.seed })
}

/// One EM step of the interacting system.
pub fn step_em(ens: &ParticleEnsemble, k: &DriftKernels, sigma: f64, dt: f64) -> Result<ParticleEnsemble> {
    em_update(ens, &pair_drift(ens, k), sigma, dt)
}

/// Runs the interacting system to `t_end` with the adaptive EM step.
pub fn simulate(ens: &ParticleEnsemble, k: &DriftKernels, sigma: f64, t_end: f64) -> Result<ParticleEnsemble> {
    let mut cur = ens.clone();
    while cur.t < t_end {
        let drift = pair_drift(&cur, k);
        let mut dt = em_dt(&drift, cur.d, k);
        if cur.t + dt >= t_end * (1.0 - 1e-13) {
            dt = t_end - cur.t;
        }
        let last = dt == t_end - cur.t;
        cur = em_update(&cur, &drift, sigma, dt)?;
        if last {
            cur.t = t_end;
        }
    }
    Ok(cur)
}

/// Kernel density estimate (1/N)Σ_i V^{ε_p}(x − X_i) at cell centers.
pub fn empirical_density(ens: &ParticleEnsemble, eps_p: f64, grid: &Grid) -> Result<ScalarField> {
    if grid.d != ens.d {
        return Err(KsError::GridMismatch(format!("grid d={} vs ensemble d={}", grid.d, ens.d)));
    }
    let h = grid.h();
    if h > eps_p / 4.0 * (1.0 + 1e-12) {
        return Err(KsError::Precondition(format!("h={h} does not resolve ε_p={eps_p}")));
    }
    let v = Mollifier::new(grid.d, eps_p)?;
    let d = grid.d;
    let n = grid.n as isize;
    let w = 1.0 / ens.len() as f64;
    let mut out = vec![0.0; grid.len()];
    let index_range = |x: f64| {
        let lo = ((x - eps_p + grid.half_width) / h - 0.5).ceil() as isize;
        let hi = ((x + eps_p + grid.half_width) / h - 0.5).floor() as isize;
        (lo.max(0), hi.min(n - 1))
    };
    for i in 0..ens.len() {
        let x = ens.position(i);
        let mut r = [(0isize, -1isize); 3];
        for a in 0..d {
            r[a] = index_range(x[a]);
        }
        for a in d..3 {
            r[a] = (0, 0);
        }
        for i0 in r[0].0..=r[0].1 {
            for i1 in r[1].0..=r[1].1 {
                for i2 in r[2].0..=r[2].1 {
                    let ix = [i0 as usize, i1 as usize, i2 as usize];
                    let mut r2 = 0.0;
                    for a in 0..d {
                        r2 += (grid.center(ix[a]) - x[a]).powi(2);
                    }
                    let val = v.value_r2(r2);
                    if val > 0.0 {
                        out[grid.flatten(ix)] += w * val;
                    }
                }
            }
        }
    }
    ScalarField::new(*grid, out)
}

/// Aggregation and pressure drift fields tabulated on a grid at a sequence
/// of times, for the McKean–Vlasov dynamics.
#[derive(Debug, Clone)]
pub struct FrozenFields {
    grid: Grid,
    times: Vec<f64>,
    aggregation: Vec<VectorField>,
    pressure: Vec<VectorField>,
}

impl FrozenFields {
    pub fn new(times: Vec<f64>, aggregation: Vec<VectorField>, pressure: Vec<VectorField>) -> Result<Self> {
        if times.is_empty() || times.len() != aggregation.len() || times.len() != pressure.len() {
            return Err(KsError::Domain("frozen fields need one aggregation and one pressure field per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(KsError::Domain("frozen field times must increase strictly".into()));
        }
        let grid = *aggregation[0].grid();
        for f in aggregation.iter().chain(&pressure) {
            f.grid().ensure_same(&grid)?;
        }
        Ok(Self { grid, times, aggregation, pressure })
    }

    /// b_agg = χ∇Φ^{ε_k}∗u and b_diff = ∇p_λ(V^{ε_p}∗u) at every snapshot.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let p = traj.params;
        let grid = *traj.grid();
        let conv = Convolver::new(grid);
        let v = Mollifier::new(grid.d, p.eps_p)?;
        let law = PressureLaw::new(p.m, p.lambda)?;
        let mut tables = mollified_gradient_tables(&conv, p.eps_k);
        tables.push(v.table(&conv));
        tables.extend(v.gradient_tables(&conv));
        let bank = KernelBank::new(&conv, &tables)?;
        let d = grid.d;
        let (mut agg, mut pres) = (Vec::new(), Vec::new());
        for u in &traj.snapshots {
            let mut out = bank.apply(&conv, u.values());
            let grad_w: Vec<Vec<f64>> = out.drain(d + 1..).collect();
            let w = out.pop().expect("mollified density");
            let b: Vec<Vec<f64>> = grad_w
                .into_iter()
                .map(|ga| ga.iter().zip(&w).map(|(g, &wi)| law.derivative(wi) * g).collect())
                .collect();
            let a: Vec<Vec<f64>> = out.into_iter().map(|c| c.into_iter().map(|x| p.chi * x).collect()).collect();
            agg.push(VectorField::new(grid, a)?);
            pres.push(VectorField::new(grid, b)?);
        }
        Self::new(traj.times.clone(), agg, pres)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn horizon(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().expect("nonempty"))
    }

    /// b_agg − b_diff at (x, t), multilinear in space and linear in time.
    /// The flag is set when x lies outside the box and was clamped.
    pub fn drift_at(&self, x: &[f64], t: f64) -> Result<([f64; 3], bool)> {
        let (t0, t1) = self.horizon();
        let tol = 1e-12 * t1.abs().max(1.0);
        if !(t >= t0 - tol && t <= t1 + tol) {
            return Err(KsError::Precondition(format!("t={t} outside the frozen-field horizon [{t0}, {t1}]")));
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len().max(2) - 1);
        let (ka, kb, theta) = if self.times.len() == 1 {
            (0, 0, 0.0)
        } else {
            let (sa, sb) = (self.times[k - 1], self.times[k]);
            (k - 1, k, ((t - sa) / (sb - sa)).clamp(0.0, 1.0))
        };
        let g = &self.grid;
        let (h, n, d) = (g.h(), g.n, g.d);
        let mut flagged = false;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..d {
            if x[a].abs() > g.half_width {
                flagged = true;
            }
            let s = ((x[a] + g.half_width) / h - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut out = [0.0; 3];
        for corner in 0..(1usize << d) {
            let mut ix = base;
            let mut w = 1.0;
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    ix[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let idx = g.flatten(ix);
            for a in 0..d {
                let at = |k: usize| self.aggregation[k].component(a)[idx] - self.pressure[k].component(a)[idx];
                out[a] += w * ((1.0 - theta) * at(ka) + theta * at(kb));
            }
        }
        Ok((out, flagged))
    }
}

/// One EM step of the McKean–Vlasov dynamics for a single particle.
/// Returns the new position and whether the drift lookup was clamped.
pub fn step_mckean_vlasov(
    x: &[f64],
    fields: &FrozenFields,
    t: f64,
    dt: f64,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, bool)> {
    let (b, flagged) = fields.drift_at(x, t)?;
    let amp = (2.0 * sigma * dt).sqrt();
    let out = x
        .iter()
        .enumerate()
        .map(|(a, &xa)| {
            let xi: f64 = if amp > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
            xa + b[a] * dt + amp * xi
        })
        .collect();
    Ok((out, flagged))
}

/// Advances independent McKean–Vlasov copies to `t_end` with step `dt`.
/// Returns the ensemble and the number of clamped drift lookups.
pub fn simulate_mckean_vlasov(
    ens: &ParticleEnsemble,
    fields: &FrozenFields,
    sigma: f64,
    dt: f64,
    t_end: f64,
) -> Result<(ParticleEnsemble, usize)> {
    if !(dt > 0.0) {
        return Err(KsError::Precondition(format!("time step dt={dt} must be > 0")));
    }
    let d = ens.d;
    let mut cur = ens.clone();
    let mut clamped = 0;
    while cur.t < t_end * (1.0 - 1e-13) {
        let h = dt.min(t_end - cur.t);
        let moved = |i: usize| {
            let mut rng = stream_rng(cur.seed, cur.steps, i);
            step_mckean_vlasov(cur.position(i), fields, cur.t, h, sigma, &mut rng)
        };
        let mut positions = Vec::with_capacity(cur.positions.len());
        for r in map_range(cur.len(), 64, moved) {
            let (p, f) = r?;
            clamped += f as usize;
            positions.extend(p);
        }
        cur = ParticleEnsemble { d, positions, t: cur.t + h, steps: cur.steps + 1, seed: cur.seed };
    }
    cur.t = t_end;
    Ok((cur, clamped))
}
