use kslab::experiments::{run, ExperimentConfig, ExperimentKind, InitialData};
use kslab::metrics::fit_rate;

#[test]
fn pme_oracle_cubic_exponent() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::PmeOracle);
    cfg.params.m = 3.0;
    cfg.grids = vec![64, 128];
    let report = run(&cfg).unwrap().report;
    assert!(report.checks.iter().all(|c| c.passed), "{}", report.summary());
    let errs = report.table("pme_oracle").unwrap().column("rel_l1_error").unwrap();
    assert!(errs[1] < errs[0]);
}

#[test]
fn pme_oracle_rejects_viscosity() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::PmeOracle);
    cfg.params.sigma = 0.01;
    assert!(run(&cfg).is_err());
    let mut cfg = ExperimentConfig::preset(ExperimentKind::PmeOracle);
    cfg.initial = InitialData::Gaussian { mass: 1.0, std: 0.3 };
    assert!(run(&cfg).is_err());
}

/// Coarse ε-sweep: errors shrink with ε and rescaling them leaves the fitted
/// slope unchanged.
#[test]
fn coarse_epsilon_sweep() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::EpsilonSweep);
    cfg.grid.n = 64;
    cfg.sweep = vec![0.8, 0.4, 0.2];
    cfg.params.t_end = 0.01;
    cfg.snapshot_times = vec![0.005];
    let report = run(&cfg).unwrap().report;
    let table = report.table("epsilon_sweep").unwrap();
    let errs = table.column("l2_error").unwrap();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    let (_, fit) = &report.fits[0];
    let doubled: Vec<(f64, f64)> = fit.points.iter().map(|&(e, v)| (e, 2.0 * v)).collect();
    let refit = fit_rate(&doubled).unwrap();
    assert!((refit.slope - fit.slope).abs() < 1e-12);
}

#[test]
fn short_sigma_sweep_reports_cauchy_table() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::SigmaSweep);
    cfg.grid.n = 32;
    cfg.params.t_end = 0.02;
    cfg.snapshot_times = vec![0.01, 0.02];
    cfg.sweep = vec![0.1, 0.05, 0.025];
    let report = run(&cfg).unwrap().report;
    assert_eq!(report.table("sigma_cauchy").unwrap().rows.len(), 2);
    assert_eq!(report.table("sigma_bound").unwrap().rows.len(), 3);
}

#[test]
fn runners_do_not_touch_the_output_dir() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Commutator);
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = dir.path().join("never");
    cfg.grid.n = 128;
    cfg.sweep = vec![0.4, 0.2];
    cfg.pairs = 2;
    let out = run(&cfg).unwrap();
    assert!(out.report.checks[0].passed, "{}", out.report.summary());
    assert!(!cfg.output_dir.exists());
}
