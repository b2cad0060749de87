//! Drive the batch commands from a JSON configuration: simulate, invert and
//! compare the artifact sets written to a temporary directory.

use multistrip::cli::{cmd_roundtrip, RunConfig};

const CONFIG: &str = r#"{
  "schema_version": 1,
  "modes": {"indices": [1.45, 1.44]},
  "structure": {
    "kind": "layers",
    "dx": 1e-5,
    "layers": [
      {"rho": [[0.2, [0.05, 0.1]], [[0.05, 0.1], -0.1]]},
      {"rho": [[0.1, 0.0], [0.0, 0.3]]},
      {"rho": [[-0.2, [0.0, 0.1]], [[0.0, 0.1], 0.15]]}
    ]
  }
}"#;

fn main() -> multistrip::Result<()> {
    let cfg = RunConfig::from_json(CONFIG)?;
    let dir = std::env::temp_dir().join("multistrip-config-roundtrip");
    let resolved = cfg.resolve(&dir)?;
    let out = cmd_roundtrip(&cfg, &resolved, &dir)?;
    print!("{}", out.report.table());
    println!("artifacts in {}", dir.display());
    Ok(())
}
