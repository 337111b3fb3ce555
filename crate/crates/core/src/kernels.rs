//! Mollifiers, the Newtonian potential and its mollification, free-space
//! convolution and the Poisson solve −Δc = u.
//!
//! The mollifier is the classical bump V(x) = c_d·exp(−1/(1−|x|²)) on the
//! unit ball, rescaled as V^ε(x) = ε^{−d} V(x/ε). Because V is radial, the
//! mollified Newtonian gradient has the closed form
//! ∇Φ^ε(x) = ∇Φ(x)·M(|x|/ε), where M(s) is the mass of V inside radius s;
//! M is tabulated once per dimension and interpolated with cubic Hermite
//! polynomials using its exact derivative.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{KsError, Result};
use crate::fft::{Convolver, KernelBank};
use crate::quad::simpson;
use crate::types::{Grid, ScalarField, VectorField};

/// Nodes of the enclosed-mass table on [0, 1].
const MASS_NODES: usize = 4096;

/// Measure of the unit sphere S^{d−1}.
pub fn surface_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("dimension {d} unsupported"),
    }
}

#[inline]
fn bump(s2: f64) -> f64 {
    if s2 < 1.0 {
        (-1.0 / (1.0 - s2)).exp()
    } else {
        0.0
    }
}

struct RadialMass {
    c_d: f64,
    /// M(s_k), normalized so M(1) = 1.
    mass: Vec<f64>,
    /// M'(s_k).
    density: Vec<f64>,
}

impl RadialMass {
    fn build(d: usize) -> Self {
        let omega = surface_area(d);
        let radial = |s: f64| omega * s.powi(d as i32 - 1) * bump(s * s);
        let total = simpson(radial, 0.0, 1.0, 20_000);
        let c_d = 1.0 / total;
        let dx = 1.0 / MASS_NODES as f64;
        let mut mass = Vec::with_capacity(MASS_NODES + 1);
        let mut density = Vec::with_capacity(MASS_NODES + 1);
        let mut acc = 0.0;
        for k in 0..=MASS_NODES {
            let s = k as f64 * dx;
            if k > 0 {
                acc += simpson(radial, s - dx, s, 16);
            }
            mass.push(acc);
            density.push(radial(s));
        }
        let norm = acc;
        mass.iter_mut().for_each(|v| *v /= norm);
        density.iter_mut().for_each(|v| *v /= norm);
        Self { c_d, mass, density }
    }

    fn get(d: usize) -> &'static RadialMass {
        static TABLES: [OnceLock<RadialMass>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        TABLES[d - 1].get_or_init(|| RadialMass::build(d))
    }

    fn eval(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return 1.0;
        }
        if s <= 0.0 {
            return 0.0;
        }
        let dx = 1.0 / MASS_NODES as f64;
        let t = s * MASS_NODES as f64;
        let k = (t as usize).min(MASS_NODES - 1);
        let th = t - k as f64;
        let th2 = th * th;
        let th3 = th2 * th;
        let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
        let h10 = th3 - 2.0 * th2 + th;
        let h01 = -2.0 * th3 + 3.0 * th2;
        let h11 = th3 - th2;
        h00 * self.mass[k]
            + h10 * dx * self.density[k]
            + h01 * self.mass[k + 1]
            + h11 * dx * self.density[k + 1]
    }
}

/// Normalization c_d making the unit bump integrate to one.
pub fn normalization(d: usize) -> f64 {
    RadialMass::get(d).c_d
}

/// Fraction of the mollifier mass within |x| ≤ s·ε.
pub fn enclosed_mass(d: usize, s: f64) -> f64 {
    RadialMass::get(d).eval(s)
}

/// The mollifier V^ε in dimension d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    d: usize,
    eps: f64,
    c_d: f64,
}

impl Mollifier {
    pub fn new(d: usize, eps: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(KsError::Domain(format!("mollifier dimension {d} unsupported")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(KsError::Domain(format!("mollifier radius ε={eps} must be > 0")));
        }
        Ok(Self { d, eps, c_d: normalization(d) })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn value_r2(&self, r2: f64) -> f64 {
        let e2 = self.eps * self.eps;
        if r2 >= e2 {
            return 0.0;
        }
        self.c_d * bump(r2 / e2) / self.eps.powi(self.d as i32)
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        self.value_r2(x.iter().map(|v| v * v).sum())
    }

    /// ∇V^ε(x) = V^ε(x)·(−2x/ε²)/(1 − |x|²/ε²)².
    #[inline]
    pub fn gradient(&self, x: &[f64]) -> [f64; 3] {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let mut g = [0.0; 3];
        let e2 = self.eps * self.eps;
        if r2 >= e2 {
            return g;
        }
        let s2 = r2 / e2;
        let w = 1.0 - s2;
        let f = self.value_r2(r2) * (-2.0 / (e2 * w * w));
        for (ga, xa) in g.iter_mut().zip(x) {
            *ga = f * xa;
        }
        g
    }

    /// Kernel samples on `conv`'s offsets, rescaled so Σ V h^d = 1 exactly on
    /// that grid.
    pub fn table(&self, conv: &Convolver) -> Vec<f64> {
        let mut t = conv.offset_table(|x| self.value(x));
        let scale = 1.0 / (t.iter().sum::<f64>() * conv.grid().cell_volume());
        t.iter_mut().for_each(|v| *v *= scale);
        t
    }

    /// Samples of ∇V^ε with the same discrete rescaling as [`Mollifier::table`].
    pub fn gradient_tables(&self, conv: &Convolver) -> Vec<Vec<f64>> {
        let raw = conv.offset_table(|x| self.value(x));
        let scale = 1.0 / (raw.iter().sum::<f64>() * conv.grid().cell_volume());
        (0..self.d)
            .map(|a| conv.offset_table(|x| self.gradient(x)[a] * scale))
            .collect()
    }
}

/// V^ε(x) with d = x.len().
pub fn mollifier_value(x: &[f64], eps: f64) -> f64 {
    Mollifier::new(x.len(), eps).map(|v| v.value(x)).unwrap_or(0.0)
}

/// Fundamental solution of −Δ: −log|x|/(2π) in 2D, 1/(4π|x|) in 3D.
pub fn newtonian_potential(x: &[f64]) -> Result<f64> {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(KsError::Domain("Newtonian potential is singular at x = 0".into()));
    }
    match x.len() {
        2 => Ok(-r.ln() / (2.0 * PI)),
        3 => Ok(1.0 / (4.0 * PI * r)),
        d => Err(KsError::Domain(format!("Newtonian potential for d={d} unsupported"))),
    }
}

/// ∇Φ(x) = −x/(ω_d |x|^d); zero at the origin.
#[inline]
pub fn newtonian_gradient(x: &[f64]) -> [f64; 3] {
    let d = x.len();
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let mut g = [0.0; 3];
    if r2 == 0.0 {
        return g;
    }
    let rd = if d == 2 { r2 } else { r2 * r2.sqrt() };
    let f = -1.0 / (surface_area(d) * rd);
    for (ga, xa) in g.iter_mut().zip(x) {
        *ga = f * xa;
    }
    g
}

/// ∇Φ^ε(x) = (∇Φ ∗ V^ε)(x) = ∇Φ(x)·M(|x|/ε); zero at the origin.
#[inline]
pub fn mollified_newtonian_gradient(x: &[f64], eps: f64) -> [f64; 3] {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let mut g = newtonian_gradient(x);
    if r2 < eps * eps {
        let w = enclosed_mass(x.len(), r2.sqrt() / eps);
        g.iter_mut().for_each(|v| *v *= w);
    }
    g
}

/// Φ at cell offsets; the origin holds the cell average of Φ over the
/// central cell (closed form in 2D and 3D).
pub fn newtonian_potential_table(conv: &Convolver) -> Result<Vec<f64>> {
    let g = *conv.grid();
    let a = g.h() / 2.0;
    let origin = match g.d {
        2 => -(a.ln() + 0.5 * 2f64.ln() - 1.5 + PI / 4.0) / (2.0 * PI),
        3 => {
            let cube = 3.0 * ((1.0 + 3f64.sqrt()) / 2f64.sqrt()).ln() - PI / 4.0;
            cube / (4.0 * PI * a)
        }
        d => return Err(KsError::Domain(format!("Poisson solve for d={d} unsupported"))),
    };
    Ok(conv.offset_table(|x| newtonian_potential(x).unwrap_or(origin)))
}

pub fn newtonian_gradient_tables(conv: &Convolver) -> Vec<Vec<f64>> {
    (0..conv.grid().d).map(|a| conv.offset_table(|x| newtonian_gradient(x)[a])).collect()
}

pub fn mollified_gradient_tables(conv: &Convolver, eps: f64) -> Vec<Vec<f64>> {
    (0..conv.grid().d)
        .map(|a| conv.offset_table(|x| mollified_newtonian_gradient(x, eps)[a]))
        .collect()
}

/// Kernel samples at the cell offsets of a grid, in the padded FFT layout.
#[derive(Debug, Clone)]
pub struct KernelTable {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl KernelTable {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Self {
        Self { grid, components }
    }

    pub fn scalar(grid: Grid, table: Vec<f64>) -> Self {
        Self { grid, components: vec![table] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Value at the integer cell offset `k` (all components).
    pub fn value_at(&self, k: [isize; 3]) -> Option<Vec<f64>> {
        let conv = Convolver::new(self.grid);
        let p = conv.index_of(k)?;
        Some(self.components.iter().map(|c| c[p]).collect())
    }
}

/// Tabulates ∇Φ^{ε_k} at every cell offset of `grid`.
pub fn mollified_potential_gradient_table(eps_k: f64, grid: &Grid) -> Result<KernelTable> {
    if grid.h() > eps_k / 4.0 * (1.0 + 1e-12) {
        return Err(KsError::Precondition(format!(
            "h={} does not resolve ε_k={eps_k} (need h ≤ ε_k/4)",
            grid.h()
        )));
    }
    let conv = Convolver::new(*grid);
    Ok(KernelTable::new(*grid, mollified_gradient_tables(&conv, eps_k)))
}

/// Free-space convolution of `f` with every component of `kernel`.
pub fn convolve_free_space(f: &ScalarField, kernel: &KernelTable) -> Result<Vec<ScalarField>> {
    f.grid().ensure_same(kernel.grid())?;
    let conv = Convolver::new(*f.grid());
    let bank = KernelBank::new(&conv, kernel.components())?;
    Ok(bank
        .apply(&conv, f.values())
        .into_iter()
        .map(|v| ScalarField::from_raw(*f.grid(), v))
        .collect())
}

/// c = Φ∗u and ∇c = (∇Φ)∗u, both by convolution.
pub struct PoissonSolver {
    conv: Convolver,
    bank: KernelBank,
}

impl PoissonSolver {
    pub fn new(grid: Grid) -> Result<Self> {
        let conv = Convolver::new(grid);
        let mut tables = vec![newtonian_potential_table(&conv)?];
        tables.extend(newtonian_gradient_tables(&conv));
        let bank = KernelBank::new(&conv, &tables)?;
        Ok(Self { conv, bank })
    }

    pub fn solve(&self, u: &ScalarField) -> Result<(ScalarField, VectorField)> {
        let grid = *self.conv.grid();
        u.grid().ensure_same(&grid)?;
        let mut out = self.bank.apply(&self.conv, u.values()).into_iter();
        let c = ScalarField::from_raw(grid, out.next().expect("potential"));
        let grad = VectorField::from_raw(grid, out.collect());
        Ok((c, grad))
    }
}

/// Convenience wrapper around [`PoissonSolver`].
pub fn solve_poisson(u: &ScalarField) -> Result<(ScalarField, VectorField)> {
    PoissonSolver::new(*u.grid())?.solve(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_constants() {
        // reference values from adaptive quadrature of the radial integral
        assert!((1.0 / normalization(2) - 0.46651239317833).abs() < 1e-12);
        assert!((1.0 / normalization(3) - 0.441_088_887_276_604_3).abs() < 1e-12);
        assert!((enclosed_mass(2, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(enclosed_mass(3, 2.0), 1.0);
    }

    #[test]
    fn mollifier_integrates_to_one_at_fine_spacing() {
        for d in [2, 3] {
            let eps = 0.3;
            // a plain grid sum of the bump is only 5e-6 accurate at h = ε/16
            let h = eps / 32.0;
            let v = Mollifier::new(d, eps).unwrap();
            let k = 32i64;
            let mut acc = 0.0;
            let range = -k..=k;
            for i in range.clone() {
                for j in range.clone() {
                    if d == 2 {
                        acc += v.value(&[i as f64 * h, j as f64 * h]);
                    } else {
                        for l in range.clone() {
                            acc += v.value(&[i as f64 * h, j as f64 * h, l as f64 * h]);
                        }
                    }
                }
            }
            acc *= h.powi(d as i32);
            assert!((acc - 1.0).abs() < 1e-6, "d={d}: {acc}");
        }
    }

    #[test]
    fn mollifier_support_and_symmetry() {
        let eps = 0.2;
        assert_eq!(mollifier_value(&[0.3, 0.0], eps), 0.0);
        assert_eq!(mollifier_value(&[0.2, 0.0], eps), 0.0);
        let x = [0.05, -0.07, 0.02];
        let mx = [-0.05, 0.07, -0.02];
        assert_eq!(mollifier_value(&x, eps), mollifier_value(&mx, eps));
        assert!(mollifier_value(&x, eps) > 0.0);
    }

    #[test]
    fn mollifier_gradient_matches_finite_differences() {
        let v = Mollifier::new(2, 0.5).unwrap();
        let x = [0.12, -0.2];
        let g = v.gradient(&x);
        let h = 1e-6;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (v.value(&xp) - v.value(&xm)) / (2.0 * h);
            assert!((fd - g[a]).abs() < 1e-6 * g[a].abs().max(1.0));
        }
    }

    #[test]
    fn newtonian_potential_closed_forms() {
        assert_eq!(newtonian_potential(&[1.0, 0.0]).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((newtonian_potential(&[0.0, e]).unwrap() + 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((newtonian_potential(&[1.0, 0.0, 0.0]).unwrap() - 0.0795775).abs() < 1e-7);
        assert!(newtonian_potential(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn enclosed_mass_matches_direct_quadrature() {
        for d in [2, 3] {
            let c = normalization(d);
            for s in [0.1, 0.37, 0.8, 0.999] {
                let direct = simpson(
                    |r| surface_area(d) * c * r.powi(d as i32 - 1) * bump(r * r),
                    0.0,
                    s,
                    4000,
                );
                assert!((enclosed_mass(d, s) - direct).abs() < 1e-11, "d={d} s={s}");
            }
        }
    }

    /// Brute-force ∫ ∇Φ(x − y) V^ε(y) dy over a fine Cartesian grid covering
    /// the mollifier support.
    fn brute_mollified_gradient_3d(x: [f64; 3], eps: f64, k: i64) -> [f64; 3] {
        let v = Mollifier::new(3, eps).unwrap();
        let h = eps / k as f64;
        let mut g = [0.0; 3];
        for i in -k..=k {
            for j in -k..=k {
                for l in -k..=k {
                    let y = [i as f64 * h, j as f64 * h, l as f64 * h];
                    let w = v.value(&y);
                    if w == 0.0 {
                        continue;
                    }
                    let gx = newtonian_gradient(&[x[0] - y[0], x[1] - y[1], x[2] - y[2]]);
                    for a in 0..3 {
                        g[a] += gx[a] * w * h * h * h;
                    }
                }
            }
        }
        g
    }

    #[test]
    fn mollified_gradient_far_field_matches_newtonian() {
        let eps = 0.1;
        let x = [10.0 * eps, 0.0, 0.0];
        let brute = brute_mollified_gradient_3d(x, eps, 24);
        let exact = -1.0 / (4.0 * PI * x[0] * x[0]);
        assert!((brute[0] - exact).abs() < 1e-4 * exact.abs(), "{brute:?} vs {exact}");
        let table = mollified_newtonian_gradient(&x, eps);
        assert!((table[0] - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn mollified_gradient_inside_support_matches_brute_force() {
        let eps = 0.1;
        let x = [0.04, 0.02, -0.01];
        let brute = brute_mollified_gradient_3d(x, eps, 40);
        let shell = mollified_newtonian_gradient(&x, eps);
        for a in 0..3 {
            assert!((brute[a] - shell[a]).abs() < 2e-2 * shell[0].abs(), "{brute:?} vs {shell:?}");
        }
    }

    #[test]
    fn gradient_table_is_odd_and_zero_at_origin() {
        let grid = Grid::new(2, 32, 1.0).unwrap();
        let t = mollified_potential_gradient_table(0.25, &grid).unwrap();
        assert_eq!(t.value_at([0, 0, 0]).unwrap(), vec![0.0, 0.0]);
        for k in [[1, 0, 0], [3, -2, 0], [-7, 11, 0]] {
            let a = t.value_at(k).unwrap();
            let b = t.value_at([-k[0], -k[1], 0]).unwrap();
            assert_eq!(a[0] + b[0], 0.0);
            assert_eq!(a[1] + b[1], 0.0);
        }
        assert!(mollified_potential_gradient_table(0.1, &grid).is_err());
    }

    #[test]
    fn spike_convolution_reproduces_kernel() {
        let grid = Grid::new(2, 32, 1.0).unwrap();
        let conv = Convolver::new(grid);
        let v = Mollifier::new(2, 0.25).unwrap();
        let table = v.table(&conv);
        let mut f = vec![0.0; grid.len()];
        let c = grid.flatten([10, 12, 0]);
        f[c] = 1.0 / grid.cell_volume();
        let f = ScalarField::new(grid, f).unwrap();
        let out = convolve_free_space(&f, &KernelTable::scalar(grid, table.clone())).unwrap();
        for idx in 0..grid.len() {
            let ix = grid.unflatten(idx);
            let k = [ix[0] as isize - 10, ix[1] as isize - 12, 0];
            let expect = table[conv.index_of(k).unwrap()];
            assert!((out[0].values()[idx] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_of_zero_is_zero() {
        let grid = Grid::new(2, 16, 1.0).unwrap();
        let (c, g) = solve_poisson(&ScalarField::zeros(grid)).unwrap();
        assert_eq!(c.max_abs(), 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn poisson_residual_for_gaussian() {
        let grid = Grid::new(2, 256, 2.0).unwrap();
        let s2 = 0.3f64 * 0.3;
        let u = ScalarField::from_fn(grid, |x| (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * s2)).exp());
        let (c, _) = solve_poisson(&u).unwrap();
        let n = grid.n;
        let h2 = grid.h() * grid.h();
        let cv = c.values();
        let mut worst = 0.0f64;
        for i in n / 4..3 * n / 4 {
            for j in n / 4..3 * n / 4 {
                let k = i * n + j;
                let lap = (cv[k + 1] + cv[k - 1] + cv[k + n] + cv[k - n] - 4.0 * cv[k]) / h2;
                worst = worst.max((lap + u.values()[k]).abs());
            }
        }
        assert!(worst / u.max() <= 1e-3, "residual {}", worst / u.max());
    }

    #[test]
    fn poisson_far_field_in_3d() {
        let grid = Grid::new(3, 32, 2.0).unwrap();
        let mol = Mollifier::new(3, 0.4).unwrap();
        let u = ScalarField::from_fn(grid, |x| mol.value(x));
        let mass = u.mass();
        let (c, _) = solve_poisson(&u).unwrap();
        // cell center nearest to (L/2, 0, 0): index n/2 + n/4 on axis 0
        let n = grid.n;
        let idx = grid.flatten([n / 2 + n / 4, n / 2, n / 2]);
        let x = grid.position(idx);
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let expect = mass / (4.0 * PI * r);
        let got = c.values()[idx];
        assert!((got - expect).abs() < 0.01 * expect, "{got} vs {expect}");
    }
}
