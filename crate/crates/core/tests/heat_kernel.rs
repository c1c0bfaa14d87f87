use std::f64::consts::PI;

use sasaki_core::heatkernel::{
    cell_average, heat_equation_residual, mc_estimate_cells, simulate_endpoints, total_mass, Cell, HeatKernel,
};
use sasaki_core::quadrature::{integrate, QuadOptions};
use sasaki_core::Point;

#[test]
fn residual_converges_at_second_order() {
    let k = HeatKernel::default();
    for (t, y) in [(1.0, Point::h1(0.5, -1.0, 2.0)), (0.5, Point::h1(0.2, 0.3, -0.4)), (2.0, Point::h1(0.0, 0.0, 3.0))] {
        let r: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h| heat_equation_residual(&k, t, &y, h * f64::sqrt(t)).unwrap().residual)
            .collect();
        for w in r.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "t = {t}, residuals {r:?}");
        }
    }
}

#[test]
fn mass_is_one_at_several_times() {
    let k = HeatKernel::default();
    for t in [0.3, 2.0] {
        let m = total_mass(&k, t).unwrap();
        assert!((m - 1.0).abs() < 1e-6, "t = {t}: {m}");
    }
}

/// `p(2t, 0, 0) = ∫ p(t, 0, y) p(t, y, 0) dy = ∫ p(t, 0, y)² dy`.
#[test]
fn semigroup_on_the_diagonal() {
    let k = HeatKernel::default();
    let t: f64 = 0.7;
    let opts = QuadOptions { rel_tol: 1e-9, abs_floor: 1e-18, max_intervals: 400, initial_pieces: 4 };
    let inner = |r: f64| {
        let res = integrate(|z: f64| [k.density(t, &Point::origin(1), &Point::h1(r, 0.0, z)).unwrap().powi(2)], 0.0, 12.0 * t, &opts);
        2.0 * res.value[0]
    };
    let total = integrate(|r: f64| [2.0 * PI * r * inner(r)], 0.0, 10.0 * t.sqrt(), &opts).value[0];
    let expected = 1.0 / (16.0 * (2.0 * t).powi(2));
    assert!((total - expected).abs() < 1e-4 * expected, "{total} vs {expected}");
}

#[test]
fn monte_carlo_step_halving_leaves_the_estimate_unchanged() {
    let k = HeatKernel::default();
    let cells = [Cell::centered([0.0, 0.0, 0.0], [0.3, 0.3, 0.3]).unwrap(), Cell::centered([0.8, 0.0, 0.5], [0.3, 0.3, 0.3]).unwrap()];
    let coarse = mc_estimate_cells(1.0, &cells, 60_000, 128, 11).unwrap();
    let fine = mc_estimate_cells(1.0, &cells, 60_000, 256, 11).unwrap();
    for ((c, f), cell) in coarse.iter().zip(&fine).zip(&cells) {
        let exact = cell_average(&k, 1.0, cell, 6).unwrap();
        let sigma = c.std_error.hypot(f.std_error);
        assert!((c.density - f.density).abs() < 4.0 * sigma, "{c:?} vs {f:?}");
        assert!((f.density - exact).abs() < 4.0 * f.std_error, "{f:?} vs {exact}");
    }
}

#[test]
fn simulation_is_reproducible_across_thread_pools() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_endpoints(0.5, 10_000, 64, 3).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_ne!(a, simulate_endpoints(0.5, 10_000, 64, 4).unwrap());
}

#[test]
fn too_few_paths_are_rejected() {
    assert!(simulate_endpoints(1.0, 100, 16, 0).is_err());
}
