use kslab::experiments::{run, ExperimentConfig, ExperimentKind};
use kslab::fft::Convolver;
use kslab::kernels::Mollifier;
use kslab::metrics::field_error;
use kslab::particles::{
    empirical_density, sample_initial, simulate, simulate_mckean_vlasov, DriftKernels, FrozenFields, ParticleEnsemble,
};
use kslab::pde::{solve, SystemKind};
use kslab::{Grid, ScalarField, SimParams};

fn gaussian(grid: Grid, std: f64) -> ScalarField {
    let raw = ScalarField::from_fn(grid, |x| (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * std * std)).exp());
    raw.scale(1.0 / raw.mass())
}

fn mean_kde_error(n: usize, u0: &ScalarField, reference: &ScalarField, eps: f64) -> f64 {
    let errs: Vec<f64> = (0..8)
        .map(|seed| {
            let ens = sample_initial(n, u0, seed).unwrap();
            field_error(&empirical_density(&ens, eps, u0.grid()).unwrap(), reference, 1.0).unwrap()
        })
        .collect();
    errs.iter().sum::<f64>() / errs.len() as f64
}

#[test]
fn kde_error_decreases_with_n() {
    let grid = Grid::new(2, 128, 1.6).unwrap();
    let eps = 0.1;
    let u0 = gaussian(grid, 0.3);
    let conv = Convolver::new(grid);
    let k = conv.kernel_spectrum(&Mollifier::new(2, eps).unwrap().table(&conv), None).unwrap();
    let reference = ScalarField::new(grid, conv.convolve(u0.values(), &k)).unwrap();
    let errs: Vec<f64> = [1_000, 10_000, 100_000].iter().map(|&n| mean_kde_error(n, &u0, &reference, eps)).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    // Monte Carlo rate N^{-1/2}: a tenfold N should cut the error by about √10
    assert!(errs[0] / errs[2] > 5.0, "{errs:?}");
}

/// Independent McKean–Vlasov copies driven by the PDE's own fields against
/// the interacting system, as a two-sample comparison: the cross distance
/// must sit within the combined spread of each method's own replicates.
/// (Interacting particles fluctuate less than independent copies, so the
/// two spreads are measured separately.)
#[test]
fn mckean_vlasov_matches_interacting_system() {
    let grid = Grid::new(2, 64, 2.0).unwrap();
    let p = SimParams { sigma: 0.05, eps_k: 0.25, eps_p: 0.25, lambda: 0.01, t_end: 0.1, ..SimParams::default() };
    let u0 = gaussian(grid, 0.3);
    let times: Vec<f64> = (1..10).map(|k| 0.01 * k as f64).collect();
    let traj = solve(&u0, &p, SystemKind::NonLocal, &times).unwrap();
    let fields = FrozenFields::from_trajectory(&traj).unwrap();
    let k = DriftKernels::new(&p).unwrap();
    let n = 4000;
    let kde = |ens: &ParticleEnsemble| empirical_density(ens, p.eps_p, &grid).unwrap();
    let direct: Vec<ScalarField> =
        (0..2).map(|s| kde(&simulate(&sample_initial(n, &u0, s).unwrap(), &k, p.sigma, p.t_end).unwrap())).collect();
    let copies: Vec<ScalarField> = (7..9)
        .map(|s| {
            let (ens, clamped) =
                simulate_mckean_vlasov(&sample_initial(n, &u0, s).unwrap(), &fields, p.sigma, 2e-3, p.t_end).unwrap();
            assert_eq!(clamped, 0);
            kde(&ens)
        })
        .collect();
    let dist = |a: &ScalarField, b: &ScalarField| field_error(a, b, 1.0).unwrap();
    let spread_direct = dist(&direct[0], &direct[1]);
    let spread_copies = dist(&copies[0], &copies[1]);
    // each replicate distance is √2 times the single-sample deviation
    let combined = ((spread_direct.powi(2) + spread_copies.powi(2)) / 2.0).sqrt();
    for a in &copies {
        for b in &direct {
            let gap = dist(a, b);
            assert!(gap < 1.5 * combined, "gap {gap} vs combined spread {combined}");
        }
    }
}

#[test]
fn zero_noise_frozen_zero_fields_is_identity() {
    let grid = Grid::new(2, 32, 1.0).unwrap();
    let zero = kslab::VectorField::zeros(grid);
    let fields = FrozenFields::new(vec![0.0, 1.0], vec![zero.clone(), zero.clone()], vec![zero.clone(), zero]).unwrap();
    let ens = sample_initial(500, &gaussian(grid, 0.2), 3).unwrap();
    let (out, _) = simulate_mckean_vlasov(&ens, &fields, 0.0, 0.1, 1.0).unwrap();
    assert_eq!(out.positions(), ens.positions());
}

#[test]
fn particle_report_is_reproducible() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::ParticleMeanfield);
    cfg.grid.n = 64;
    cfg.params.eps_k = 0.25;
    cfg.params.eps_p = 0.25;
    cfg.params.t_end = 0.05;
    cfg.particles = vec![200, 800];
    cfg.seeds = vec![1, 2];
    let a = run(&cfg).unwrap().report;
    let b = run(&cfg).unwrap().report;
    assert_eq!(a, b);
    assert_eq!(a.table("particle_errors").unwrap().rows.len(), 4);
}
