//! Reflection spectrum of a short two-mode stack, with physical checks.

use multistrip::cli::physical_report;
use multistrip::forward::{grid_for_layers, simulate_scattering};
use multistrip::matfact::CMatrix;
use multistrip::model::{Layer, ModeSet};
use num_complex::Complex64;

fn main() -> multistrip::Result<()> {
    let c = Complex64::new;
    let modes = ModeSet::new(vec![1.45, 1.44])?;
    let dx = 20e-6;
    let rho = |a: f64, b: f64, d: f64| CMatrix::from_row_slice(2, 2, &[c(a, 0.0), c(0.0, b), c(0.0, b), c(d, 0.0)]);
    let layers = vec![
        Layer::reflector(rho(0.2, 0.05, 0.1), dx)?,
        Layer::reflector(rho(-0.1, 0.1, 0.3), dx)?,
        Layer::reflector(rho(0.3, -0.05, -0.2), dx)?,
    ];
    let grid = grid_for_layers(&modes, dx, layers.len(), 20.0);
    let (spec, trans) = simulate_scattering(&layers, &modes, &grid.omegas())?;
    for (p, q) in [(0, 0), (1, 1), (0, 1)] {
        println!("max |R{}{}| = {:.4}", p + 1, q + 1, spec.peak(p, q));
    }
    print!("{}", physical_report(&spec.omegas, &spec.r, Some(&trans)).summary());
    Ok(())
}
