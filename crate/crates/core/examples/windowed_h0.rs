//! The zeroth impulse weight of a band-limited spectrum approaches the first
//! layer's reflection as the bandwidth grows.

use multistrip::forward::{grid_for_layers, simulate_reflection, zeroth_impulse_weight, WindowFn};
use multistrip::matfact::{norm2, CMatrix};
use multistrip::model::{Layer, ModeSet};
use num_complex::Complex64;

fn main() -> multistrip::Result<()> {
    let c = Complex64::new;
    let modes = ModeSet::new(vec![1.45, 1.44])?;
    let dx = 1e-5;
    let rho0 = CMatrix::from_row_slice(2, 2, &[c(0.3, 0.1), c(0.1, 0.0), c(0.1, 0.0), c(0.2, -0.1)]);
    let rho1 = CMatrix::from_row_slice(2, 2, &[c(-0.4, 0.0), c(0.0, 0.2), c(0.0, 0.2), c(0.5, 0.0)]);
    let layers = vec![Layer::reflector(rho0, dx)?, Layer::reflector(rho1, dx)?];
    println!("bandwidth  rectangular  raised-cosine  gaussian");
    for bw in [5.0, 10.0, 20.0, 40.0, 80.0] {
        let grid = grid_for_layers(&modes, dx, 2, bw);
        let spec = simulate_reflection(&layers, &modes, &grid.omegas())?;
        let err = |w: WindowFn| -> multistrip::Result<f64> {
            Ok(norm2(&(zeroth_impulse_weight(&spec, &w)? - layers[0].upsilon())))
        };
        println!(
            "{bw:9.0}  {:11.3e}  {:13.3e}  {:8.3e}",
            err(WindowFn::Rectangular)?,
            err(WindowFn::RaisedCosine)?,
            err(WindowFn::gaussian())?
        );
    }
    Ok(())
}
