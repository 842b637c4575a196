use std::sync::Arc;

use approx::assert_relative_eq;
use growcoag::grid::project_initial;
use growcoag::{
    window_length, DensityState, Error, GrowthField, InitialData, KernelSpec, SizeGrid, Solver, SolverConfig,
};

fn exponential(grid: &Arc<SizeGrid>) -> DensityState {
    project_initial(&InitialData::Exponential { scale: 1.0 }, grid, 0.3).unwrap().0
}

fn bump(grid: &Arc<SizeGrid>) -> DensityState {
    // compact support well inside the grid so no mass leaves through the ends
    let data = InitialData::TruncatedPowerLaw { exponent: 1.0, lo: 0.5, hi: 2.0 };
    project_initial(&data, grid, 0.3).unwrap().0
}

#[test]
fn transport_only_map_matches_closed_form() {
    let grid = SizeGrid::shared(1e-3, 1e3, 512).unwrap();
    let a = 0.5;
    let cfg = SolverConfig { n: 8, ..Default::default() };
    let solver = Solver::new(cfg, &KernelSpec::constant(0.0, 0.3).unwrap(), GrowthField::linear(a, 0.6, 1.0).unwrap(), grid.clone()).unwrap();
    let c0 = bump(&grid);
    let window = solver.prepare_window(0, 0.0, 0.4, 0.0).unwrap();
    let out = solver.apply_tn(&window, &vec![c0.values().to_vec(); window.times.len()]);
    assert!(!out.any_negative);
    for (m, &t) in window.times.iter().enumerate() {
        let s = DensityState::new(grid.clone(), out.states[m].clone(), t).unwrap();
        assert_relative_eq!(s.moment(0.0), c0.moment(0.0), max_relative = 1e-12);
        // the jumps at the support ends cost first-order accuracy in M1
        assert_relative_eq!(s.moment(1.0), c0.moment(1.0) * (a * t).exp(), max_relative = 1e-3);
    }

    // smooth data: pointwise solution e^{-a t} c0(v e^{-a t})
    let grid = SizeGrid::shared(1e-4, 1e2, 512).unwrap();
    let solver = Solver::new(SolverConfig::default(), &KernelSpec::constant(0.0, 0.3).unwrap(), GrowthField::linear(a, 0.6, 1.0).unwrap(), grid.clone()).unwrap();
    let c0 = exponential(&grid);
    let window = solver.prepare_window(0, 0.0, 0.4, 0.0).unwrap();
    let out = solver.apply_tn(&window, &vec![c0.values().to_vec(); window.times.len()]);
    let damp = (-a * 0.4f64).exp();
    let err: f64 = (0..grid.cells())
        .map(|i| (out.states[8][i] - damp * (-grid.centers()[i] * damp).exp()).abs() * grid.widths()[i])
        .sum();
    assert!(err < 1e-3, "{err}");
    let end = DensityState::new(grid.clone(), out.states[8].clone(), 0.4).unwrap();
    assert_relative_eq!(end.moment(1.0), c0.moment(1.0) / damp, max_relative = 1e-4);
}

#[test]
fn shifted_map_preserves_nonnegativity() {
    let grid = SizeGrid::shared(1e-3, 1e3, 256).unwrap();
    let cfg = SolverConfig { n: 16, ..Default::default() };
    let kernel = KernelSpec::smoluchowski();
    let solver = Solver::new(cfg, &kernel, GrowthField::linear(0.3, 0.5, 1.0).unwrap(), grid.clone()).unwrap();
    let c0 = exponential(&grid);
    let m0 = c0.moment(0.0);
    let len = window_length(solver.kernel(), m0, None);
    let window = solver.prepare_window(0, 0.0, len, solver.kernel().beta_n * m0).unwrap();
    let mut u = vec![c0.values().to_vec(); window.times.len()];
    for _ in 0..5 {
        let out = solver.apply_tn(&window, &u);
        assert!(!out.any_negative);
        assert_eq!(out.clamped, 0.0);
        u = out.states;
    }
}

#[test]
fn full_length_window_contracts() {
    let grid = SizeGrid::shared(1e-4, 1e2, 256).unwrap();
    let cfg = SolverConfig { n: 20, window_cap: None, ..Default::default() };
    let solver = Solver::new(cfg, &KernelSpec::constant(1.0, 0.3).unwrap(), GrowthField::zero(), grid.clone()).unwrap();
    let c0 = exponential(&grid);
    let m0 = c0.moment(0.0);
    let len = window_length(solver.kernel(), m0, None);
    assert_relative_eq!(len, 1.0 / (14.0 * m0), max_relative = 1e-14);
    let window = solver.prepare_window(0, 0.0, len, m0).unwrap();
    let (_, report) = solver.picard_solve(&window, &c0).unwrap();
    assert!(report.residual <= 1e-10);
    assert!(report.max_ratio() <= 0.55, "{:?}", report.ratios);
    assert!(report.nonnegative && report.m0_ok && report.m1_ok && report.mneg_ok);
}

#[test]
fn constant_kernel_number_density_with_wide_window() {
    // n large enough that the truncation is inactive on the default grid
    let grid = SizeGrid::shared(1e-4, 1e4, 256).unwrap();
    let cfg = SolverConfig { n: 10_000, t_final: 2.0, ..Default::default() };
    let solver = Solver::new(cfg, &KernelSpec::constant(1.0, 0.3).unwrap(), GrowthField::zero(), grid.clone()).unwrap();
    let c0 = exponential(&grid);
    let m0 = c0.moment(0.0);
    let sol = solver.solve(&c0).unwrap();
    let end = sol.moments.rows.last().unwrap();
    let exact = 2.0 * m0 / (2.0 + 2.0 * m0);
    assert_relative_eq!(end.m0, exact, max_relative = 1e-2);
    assert!(sol.moments.checks.ok(), "{:?}", sol.moments.checks.violations());
}

#[test]
fn smoluchowski_without_growth_conserves_mass() {
    let grid = SizeGrid::shared(1e-3, 1e3, 256).unwrap();
    let cfg = SolverConfig { n: 8, t_final: 0.5, ..Default::default() };
    let solver = Solver::new(cfg, &KernelSpec::smoluchowski(), GrowthField::zero(), grid.clone()).unwrap();
    let c0 = exponential(&grid);
    let sol = solver.solve(&c0).unwrap();
    let first = sol.moments.rows[0];
    for row in &sol.moments.rows {
        assert!((row.m1 - first.m1).abs() <= 1e-6 * first.m1);
        assert!(row.m0 <= first.m0);
    }
    assert_eq!(sol.overflow, 0.0);
    assert!(sol.moments.checks.weak_ok.unwrap_or(false));
}

#[test]
fn linear_growth_scales_mass_under_coagulation() {
    let grid = SizeGrid::shared(1e-4, 1e2, 512).unwrap();
    let a = 0.5;
    let cfg = SolverConfig { n: 8, t_final: 1.0, ..Default::default() };
    let solver = Solver::new(cfg, &KernelSpec::constant(1.0, 0.3).unwrap(), GrowthField::linear(a, 0.6, 1.0).unwrap(), grid.clone()).unwrap();
    let c0 = exponential(&grid);
    let sol = solver.solve(&c0).unwrap();
    let first = sol.moments.rows[0];
    let last = sol.moments.rows.last().unwrap();
    assert_relative_eq!(last.m1 / first.m1, (a * last.time).exp(), max_relative = 1e-4);
}

#[test]
fn outputs_land_on_requested_times() {
    let grid = SizeGrid::shared(1e-3, 1e3, 128).unwrap();
    let cfg = SolverConfig { n: 8, t_final: 0.35, output_times: vec![0.0, 0.123, 0.35], ..Default::default() };
    let solver = Solver::new(cfg, &KernelSpec::stirred_froth(0.3).unwrap(), GrowthField::zero(), grid.clone()).unwrap();
    let sol = solver.solve(&exponential(&grid)).unwrap();
    let times: Vec<f64> = sol.outputs.iter().map(|s| s.time).collect();
    assert_eq!(times.len(), 3);
    assert_relative_eq!(times[1], 0.123, max_relative = 1e-14);
    assert!(sol.state_at(0.123).is_some());
    assert!(sol.steps.iter().all(|s| s.t_n <= 0.1 + 1e-15));
}

#[test]
fn nonconvergence_carries_partial_results() {
    let grid = SizeGrid::shared(1e-3, 1e3, 128).unwrap();
    let cfg = SolverConfig { n: 8, picard_max_iters: 1, ..Default::default() };
    let solver = Solver::new(cfg, &KernelSpec::smoluchowski(), GrowthField::zero(), grid.clone()).unwrap();
    match solver.solve(&exponential(&grid)) {
        Err(Error::NonConvergence(nc)) => {
            assert_eq!(nc.window, 0);
            assert_eq!(nc.residuals.len(), 1);
            let partial = nc.partial.expect("partial solution");
            assert_eq!(partial.moments.rows[0].time, 0.0);
        }
        other => panic!("expected nonconvergence, got {other:?}"),
    }
}

#[test]
fn config_validation_lists_every_problem() {
    let cfg = SolverConfig { n: 1, substeps: 0, picard_tol: -1.0, t_final: 0.0, ..Default::default() };
    match cfg.validate() {
        Err(Error::Config(msg)) => assert!(msg.matches(";").count() >= 3, "{msg}"),
        other => panic!("{other:?}"),
    }
}
