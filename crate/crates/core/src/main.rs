use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use multistrip::cli::{self, Overrides, RunConfig};
use multistrip::forward::WindowFn;
use multistrip::inverse::Situation;
use multistrip::{Error, Result};

#[derive(Parser)]
#[command(name = "multistrip", version, about = "Multimode layer-stripping of fiber reflection spectra")]
struct Args {
    /// Size of the worker pool (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Rect,
    RaisedCosine,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum SituationArg {
    A,
    B,
    C,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration used when `--config` is absent.
    #[arg(long)]
    example: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_enum)]
    window: Option<WindowArg>,
    #[arg(long, value_enum)]
    situation: Option<SituationArg>,
    #[arg(long)]
    no_index_correction: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the reflection spectrum of a configured structure.
    Simulate(Common),
    /// Recover layers (and the index profile for gratings) from a spectrum.
    Invert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        spectrum: PathBuf,
    },
    /// Simulate, invert and compare against the truth.
    Roundtrip(Common),
    /// Report reciprocity, contraction and energy defects of a spectrum.
    Check {
        #[arg(long)]
        spectrum: PathBuf,
        #[arg(long)]
        transmission: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a built-in example round trip.
    Example {
        name: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let (mut cfg, base) = match (&common.config, &common.example) {
        (Some(path), None) => {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (RunConfig::load(path)?, base)
        }
        (None, Some(name)) => (cli::builtin_config(name)?, PathBuf::from(".")),
        _ => return Err(Error::Config("pass exactly one of --config and --example".into())),
    };
    cfg.apply(&Overrides {
        window: common.window.map(|w| match w {
            WindowArg::Rect => WindowFn::Rectangular,
            WindowArg::RaisedCosine => WindowFn::RaisedCosine,
            WindowArg::Gaussian => WindowFn::gaussian(),
        }),
        situation: common.situation.map(|s| match s {
            SituationArg::A => Situation::A,
            SituationArg::B => Situation::B,
            SituationArg::C => Situation::C,
        }),
        no_index_correction: common.no_index_correction,
    });
    Ok((cfg, base))
}

fn run(args: Args) -> Result<()> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match args.command {
        Command::Simulate(common) => {
            let (cfg, base) = load(&common)?;
            let resolved = cfg.resolve(&base)?;
            let out = cli::cmd_simulate(&cfg, &resolved, &common.out_dir)?;
            println!("wrote {} frequency points to {}", out.spectrum.len(), common.out_dir.display());
        }
        Command::Invert { common, spectrum } => {
            let (cfg, base) = load(&common)?;
            let resolved = cfg.resolve(&base)?;
            let out = cli::cmd_invert(&cfg, &resolved, &spectrum, &common.out_dir)?;
            println!(
                "recovered {} layers, residual {:.3e}",
                out.layers.len(),
                out.diagnostics.residual_max
            );
            for w in &out.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Roundtrip(common) => {
            let (cfg, base) = load(&common)?;
            let resolved = cfg.resolve(&base)?;
            let out = cli::cmd_roundtrip(&cfg, &resolved, &common.out_dir)?;
            print!("{}", out.report.table());
        }
        Command::Check {
            spectrum,
            transmission,
            out_dir,
        } => {
            let report = cli::cmd_check(&spectrum, transmission.as_deref(), out_dir.as_deref())?;
            print!("{}", report.summary());
        }
        Command::Example { name, out_dir } => {
            let cfg = cli::builtin_config(&name)?;
            std::fs::create_dir_all(&out_dir)?;
            multistrip::io::write_json(&out_dir.join("config.json"), &cfg)?;
            let resolved = cfg.resolve(Path::new("."))?;
            let out = cli::cmd_roundtrip(&cfg, &resolved, &out_dir)?;
            print!("{}", out.report.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
