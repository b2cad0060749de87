//! Recover a random situation-B structure (diagonal reflectors, unitary
//! coupling sections) from its reflection spectrum.

use multistrip::forward::{grid_for_layers_with, simulate_reflection, WindowFn};
use multistrip::inverse::{layer_errors, layer_strip, InverseConfig, Situation};
use multistrip::model::ModeSet;
use multistrip::synth::{random_structure, StructureSpec};

fn main() -> multistrip::Result<()> {
    let modes = ModeSet::new(vec![1.45, 1.4463, 1.4426])?;
    let dx = 1e-5;
    let n = 16;
    let mut spec = StructureSpec::new(3, n, dx, Situation::B);
    spec.seed = 42;
    let truth = random_structure(&spec)?;

    let grid = grid_for_layers_with(&modes, dx, n, 30.0, 30.0);
    let r = simulate_reflection(&truth, &modes, &grid.omegas())?;

    let mut cfg = InverseConfig::new(n, dx, Situation::B);
    cfg.window = WindowFn::gaussian();
    let (found, diag) = layer_strip(&r, &cfg)?;
    let (er, ep) = layer_errors(&found, &truth);
    println!("{} layers from {} frequencies", found.len(), r.len());
    println!("max rho error {er:.2e}, max phi error {ep:.2e}");
    println!("residual after stripping {:.2e}", diag.residual_max);
    for l in diag.layers.iter().take(4) {
        println!("layer {}: singular values {:.4?}", l.index, l.singular_values);
    }
    Ok(())
}
