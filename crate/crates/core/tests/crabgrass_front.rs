//! Front speed of the crabgrass equation against the linear spreading speed.

use spatial_logistic::kernels::{Kernel, ModelParams};
use spatial_logistic::kinetic::{
    equilibrium, front_speed, linear_spreading_speed, DensityField, FieldGrid, FrontStatus, KineticSolver,
};

/// `inf_λ (sinh(λR)/(λR) − m)/λ` for the unit-mass tophat, by a fine scan.
fn spreading_speed_oracle(radius: f64, m: f64) -> f64 {
    (1..400_000)
        .map(|i| {
            let l = i as f64 * 2.5e-5;
            ((l * radius).sinh() / (l * radius) - m) / l
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn crabgrass_front_moves_at_linear_speed() {
    let psi = Kernel::tophat(0.5, 1.0, 1).unwrap();
    let p = ModelParams::new(0.1, psi.clone(), psi.clone(), 400.0).unwrap();
    let grid = FieldGrid::for_params(&p);
    let solver = KineticSolver::new(&p, grid).unwrap();
    let rho_star = equilibrium(&p).unwrap();
    let rho0 = DensityField::from_fn(grid, |x| if (190.0..210.0).contains(&x[0]) { rho_star } else { 0.0 });
    let traj = solver.integrate(&rho0, 0.05, 100.0, 20).unwrap();
    let front = front_speed(&traj, rho_star / 2.0).unwrap();

    let c_star = spreading_speed_oracle(1.0, 0.1);
    assert!((linear_spreading_speed(&psi, 0.1).unwrap() - c_star).abs() < 1e-6);
    println!("front speed {:.4}, c* {:.4}, residual {:.2e}", front.speed, c_star, front.fit_residual);
    assert_eq!(front.status, FrontStatus::Propagating);
    assert_eq!(traj.clipped, 0);
    assert!((front.speed / c_star - 1.0).abs() < 0.05);
}
