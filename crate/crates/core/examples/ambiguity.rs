//! A layer with a vanishing singular value leaves its factorization
//! ambiguous; the diagnostics flag it and later layers are unaffected.

use multistrip::forward::{grid_for_layers_with, simulate_reflection, WindowFn};
use multistrip::inverse::{layer_errors, layer_strip, InverseConfig, Situation};
use multistrip::model::ModeSet;
use multistrip::synth::{random_structure, StructureSpec};

fn main() -> multistrip::Result<()> {
    let modes = ModeSet::new(vec![1.45, 1.4463, 1.4426])?;
    let (dx, n, j) = (1e-5, 12, 5);
    let mut spec = StructureSpec::new(3, n, dx, Situation::B);
    spec.planted_zero = Some(j);
    let truth = random_structure(&spec)?;
    let grid = grid_for_layers_with(&modes, dx, n, 30.0, 30.0);
    let r = simulate_reflection(&truth, &modes, &grid.omegas())?;

    let mut cfg = InverseConfig::new(n, dx, Situation::B);
    cfg.window = WindowFn::gaussian();
    let (found, diag) = layer_strip(&r, &cfg)?;
    println!("planted zero at layer {j}, flagged {:?}", diag.flagged_layers());
    for k in [j, j + 1, j + 2] {
        let (er, ep) = layer_errors(&found[k..=k], &truth[k..=k]);
        println!("layer {k}: rho error {er:.2e}, phi error {ep:.2e}");
    }
    Ok(())
}
