use std::f64::consts::PI;

use chaoslab::kernels::KernelSpec;
use chaoslab::liouville::{
    bbgky_residual, centered_time_derivative, extract_marginal, JointDensity, LiouvilleSolver,
};
use chaoslab::torus::{DensityField, GridSpec, TorusGeometry};

#[test]
fn three_particle_marginals_satisfy_the_first_hierarchy_equation() {
    let points = 64;
    let g = DensityField::from_fn(GridSpec::single(TorusGeometry::circle(), points).unwrap(), |x| {
        (1.0 + 0.7 * x[0].cos()) / (2.0 * PI)
    });
    let kernel = KernelSpec::kuramoto(2.0 * PI).unwrap();
    let joint = JointDensity::tensorized(&g, 3).unwrap();
    let solver = LiouvilleSolver::new(*joint.field().grid(), &kernel, 0.5).unwrap();
    let dt = 1e-3;
    let before = solver.advance(&joint, dt, 499).unwrap();
    let mid = solver.step(&before, dt).unwrap();
    let after = solver.step(&mid, dt).unwrap();
    assert!(mid.exchangeability_defect() < 1e-10);

    let f1 = extract_marginal(&mid, 1).unwrap();
    let f2 = extract_marginal(&mid, 2).unwrap();
    let dfdt =
        centered_time_derivative(&extract_marginal(&before, 1).unwrap(), &extract_marginal(&after, 1).unwrap(), dt)
            .unwrap();
    let full = bbgky_residual(&f1, &f2, &kernel, 0.5, 3, &dfdt, true).unwrap();
    let ablated = bbgky_residual(&f1, &f2, &kernel, 0.5, 3, &dfdt, false).unwrap();
    assert!(full <= 1e-3, "{full}");
    assert!(ablated > 10.0 * full, "{ablated} vs {full}");
    assert!((mid.field().mass() - 1.0).abs() < 1e-10);
}
