//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations: the pressure law p_λ and its derivative, a 2D PDE
//! field stepped in place, and an interacting particle cloud.

use kslab::particles::{em_dt, em_update, pair_drift, sample_initial, DriftKernels, ParticleEnsemble};
use kslab::pde::{make_initial_data, Solver, SolverState, SystemKind};
use kslab::pressure::PressureLaw;
use kslab::{Grid, ScalarField, SimParams};
use wasm_bindgen::prelude::*;

fn js_err(e: kslab::KsError) -> JsError {
    JsError::new(&e.to_string())
}

fn gaussian(grid: Grid, mass: f64, std: f64) -> ScalarField {
    let raw = ScalarField::from_fn(grid, |x| (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * std * std)).exp());
    raw.scale(mass / raw.mass())
}

/// Samples `[r, p_λ(r), p_λ'(r)]` triples on [0, r_max], flattened.
/// λ = 0 gives the uncut law.
pub fn pressure_samples(m: f64, lambda: f64, r_max: f64, samples: usize) -> kslab::Result<Vec<f64>> {
    let law = PressureLaw::new(m, lambda)?;
    let k = samples.max(2);
    Ok((0..k)
        .flat_map(|i| {
            let r = r_max * i as f64 / (k - 1) as f64;
            [r, law.value(r), law.derivative(r)]
        })
        .collect())
}

#[wasm_bindgen(js_name = pressureCurve)]
pub fn pressure_curve(m: f64, lambda: f64, r_max: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    pressure_samples(m, lambda, r_max, samples).map_err(js_err)
}

/// Density field on [−L, L]² advanced by the explicit solver.
#[wasm_bindgen]
pub struct FieldDemo {
    solver: Solver,
    state: SolverState,
    mass0: f64,
}

impl FieldDemo {
    /// `kind`: "regularized" or "nonlocal". ε is used for both kernels.
    pub fn build(kind: &str, n: usize, mass: f64, sigma: f64, eps: f64) -> kslab::Result<Self> {
        let grid = Grid::new(2, n, 2.0)?;
        let (kind, params) = match kind {
            "regularized" => (SystemKind::Regularized, SimParams { sigma, t_end: f64::MAX, ..SimParams::default() }),
            "nonlocal" => (
                SystemKind::NonLocal,
                SimParams { sigma, eps_k: eps, eps_p: eps, lambda: 1e-3, t_end: f64::MAX, ..SimParams::default() },
            ),
            other => return Err(kslab::KsError::Config(format!("unknown system `{other}`"))),
        };
        let solver = Solver::new(params, kind, grid)?;
        let u0 = make_initial_data(&gaussian(grid, mass, 0.3), sigma)?;
        let mass0 = u0.mass();
        let state = solver.state(0.0, u0)?;
        Ok(Self { solver, state, mass0 })
    }

    /// Takes `steps` stable steps.
    pub fn advance(&mut self, steps: usize) -> kslab::Result<()> {
        for _ in 0..steps {
            let dt = self.solver.stable_dt(&self.state);
            self.state = self.solver.step(&self.state, dt)?;
        }
        Ok(())
    }
}

#[wasm_bindgen]
impl FieldDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(kind: &str, n: usize, mass: f64, sigma: f64, eps: f64) -> Result<FieldDemo, JsError> {
        Self::build(kind, n, mass, sigma, eps).map_err(js_err)
    }

    pub fn step(&mut self, steps: usize) -> Result<(), JsError> {
        self.advance(steps).map_err(js_err)
    }

    pub fn n(&self) -> usize {
        self.solver.grid().n
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    /// Relative mass change since the start.
    #[wasm_bindgen(js_name = massDrift)]
    pub fn mass_drift(&self) -> f64 {
        (self.state.u.mass() - self.mass0) / self.mass0
    }

    /// Row-major n×n values.
    pub fn density(&self) -> Vec<f64> {
        self.state.u.values().to_vec()
    }
}

/// Interacting particles started from a Gaussian cloud.
#[wasm_bindgen]
pub struct ParticleDemo {
    ens: ParticleEnsemble,
    kernels: DriftKernels,
    sigma: f64,
}

impl ParticleDemo {
    pub fn build(n: usize, eps: f64, sigma: f64, seed: u64) -> kslab::Result<Self> {
        let params = SimParams { sigma, eps_k: eps, eps_p: eps, lambda: 0.01, ..SimParams::default() };
        let grid = Grid::new(2, 64, 2.0)?;
        let ens = sample_initial(n, &gaussian(grid, 1.0, 0.4), seed)?;
        Ok(Self { ens, kernels: DriftKernels::new(&params)?, sigma })
    }

    /// One Euler–Maruyama step at the adaptive step size.
    pub fn advance(&mut self) -> kslab::Result<f64> {
        let drift = pair_drift(&self.ens, &self.kernels);
        let dt = em_dt(&drift, 2, &self.kernels).min(0.01);
        self.ens = em_update(&self.ens, &drift, self.sigma, dt)?;
        Ok(dt)
    }
}

#[wasm_bindgen]
impl ParticleDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, eps: f64, sigma: f64, seed: u64) -> Result<ParticleDemo, JsError> {
        Self::build(n, eps, sigma, seed).map_err(js_err)
    }

    /// Returns the step size taken.
    pub fn step(&mut self) -> Result<f64, JsError> {
        self.advance().map_err(js_err)
    }

    pub fn time(&self) -> f64 {
        self.ens.t()
    }

    /// Flattened x, y pairs.
    pub fn positions(&self) -> Vec<f64> {
        self.ens.positions().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pressure_samples_layout() {
        let s = pressure_samples(2.0, 0.1, 25.0, 101).unwrap();
        assert_eq!(s.len(), 303);
        assert_eq!(&s[..3], &[0.0, PressureLaw::cutoff(2.0, 0.1).unwrap().value(0.0), 0.0]);
        assert_eq!(s[300], 25.0);
        assert!(pressure_samples(1.0, 0.1, 1.0, 10).is_err());
    }

    #[test]
    fn field_demo_conserves_mass() {
        let mut demo = FieldDemo::build("regularized", 32, 1.0, 0.05, 0.5).unwrap();
        demo.advance(20).unwrap();
        assert!(demo.state.t > 0.0);
        assert!(demo.mass_drift().abs() < 1e-12);
        assert!(FieldDemo::build("bogus", 32, 1.0, 0.05, 0.5).is_err());
    }

    #[test]
    fn particle_demo_moves() {
        let mut demo = ParticleDemo::build(200, 0.3, 0.05, 1).unwrap();
        let before = demo.ens.positions().to_vec();
        let dt = demo.advance().unwrap();
        assert!(dt > 0.0 && demo.ens.t() == dt);
        assert_ne!(before, demo.ens.positions());
    }
}
