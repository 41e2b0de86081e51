use std::f64::consts::PI;

use chaoslab::diagnostics::l1_distance;
use chaoslab::kernels::KernelSpec;
use chaoslab::meanfield::{kuramoto_stationary, solve, stationary_residual};
use chaoslab::torus::{DensityField, GridSpec, TorusGeometry};

fn circle(n: usize) -> GridSpec {
    GridSpec::single(TorusGeometry::circle(), n).unwrap()
}

#[test]
fn strong_noise_flattens_a_bimodal_start() {
    let f = DensityField::from_fn(circle(128), |x| (1.0 + 0.9 * (2.0 * x[0]).cos()) / (2.0 * PI));
    let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
    let run = solve(&f, &k, 2.0, &[5.0], 1e-3).unwrap();
    let d = l1_distance(&run.states[0].field, &DensityField::uniform(*f.grid())).unwrap();
    assert!(d <= 1e-3, "{d}");
}

#[test]
fn subcritical_stationary_state_is_a_fixed_point() {
    let s = kuramoto_stationary(0.3).unwrap();
    let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
    assert!(s.self_consistency_residual() < 1e-12);
    assert!(stationary_residual(&s.density, &k, 0.3).unwrap() < 1e-8);
    let run = solve(&s.density, &k, 0.3, &[1.0, 5.0], 0.01).unwrap();
    for st in &run.states {
        assert!(l1_distance(&st.field, &s.density).unwrap() < 1e-4);
    }
}

#[test]
fn biot_savart_flow_conserves_mass_and_dissipates_l2() {
    let g = GridSpec::single(TorusGeometry::new(2, 1.0).unwrap(), 32).unwrap();
    let f = DensityField::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
    let k = KernelSpec::biot_savart(1.0, 8).unwrap();
    let run = solve(&f, &k, 0.05, &[0.5, 1.0, 1.5, 2.0], 0.01).unwrap();
    for w in run.l2_monitor.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    for st in &run.states {
        assert!((st.field.mass() - 1.0).abs() < 1e-10);
    }
}
