//! The face-sampled energy total against an independent analytic oracle:
//! for Gaussian depth data at rest the energy reduces to two closed-form
//! integrands, integrated here by composite Simpson on the analytic
//! expressions (no grid differencing anywhere in the oracle).

use msgn::diagnostics::energy_budget;
use msgn::model::{derive_params, gaussian_state, Grid};

const AMP: f64 = 0.05;
const WIDTH: f64 = 1.5;
const LENGTH: f64 = 16.0;

/// Simpson integral of the analytic energy density of
/// h = hbar + AMP exp(-((x-c)/WIDTH)^2), u = 0 over the box.
fn oracle(g: f64, hbar: f64, beta: f64) -> f64 {
    let c = 0.5 * LENGTH;
    let m = 1 << 17;
    let dx = LENGTH / m as f64;
    let f = |x: f64| {
        let z = (x - c) / WIDTH;
        let dev = AMP * (-z * z).exp();
        let h = hbar + dev;
        let hx = -2.0 * z / WIDTH * dev;
        0.5 * g * dev * dev + 0.25 * beta * g * h * h * hx * hx
    };
    let mut acc = f(0.0) + f(LENGTH);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * dx);
    }
    acc * dx / 3.0
}

#[test]
fn budget_converges_to_analytic_quadrature_at_second_order() {
    let params = derive_params(9.81, 1.0, 2.0 / 15.0).unwrap();
    let exact = oracle(params.g, params.hbar, params.beta);

    let mut errors = Vec::new();
    for level in 0..4 {
        let n = 256 << level;
        let grid = Grid::new(n, LENGTH).unwrap();
        let state = gaussian_state(&grid, &params, AMP, WIDTH, 0.5 * LENGTH).unwrap();
        let b = energy_budget(&state, &params, &grid);
        assert_eq!(b.kinetic, 0.0, "fluid at rest has no kinetic energy");
        assert_eq!(b.dispersive_u, 0.0);
        errors.push((b.total - exact).abs());
    }

    let slope = (errors[0] / errors[3]).ln() / (3.0 * std::f64::consts::LN_2);
    assert!(
        (slope - 2.0).abs() <= 0.3,
        "errors {errors:?} give slope {slope:.3}, expected 2.0 +- 0.3"
    );
    assert!(
        errors[3] <= 1e-4 * exact,
        "finest-grid error {:.3e} too large against oracle {exact:.12e}",
        errors[3]
    );
}
