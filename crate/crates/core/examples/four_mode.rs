//! The full four-mode grating round trip (2000 layers, about a minute in a
//! release build). Pass an output directory to keep the artifacts.

use std::path::PathBuf;

use multistrip::cli::{builtin_config, cmd_roundtrip};

fn main() -> multistrip::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("multistrip-four-mode"));
    let cfg = builtin_config("four-mode")?;
    let resolved = cfg.resolve(&dir)?;
    let out = cmd_roundtrip(&cfg, &resolved, &dir)?;
    print!("{}", out.report.table());
    println!("artifacts in {}", dir.display());
    Ok(())
}
