//! Batch commands: configuration, simulate, invert, round trip and check.
//!
//! Every command writes its artifacts and one `manifest.json` into its
//! output directory. CSV outputs depend only on the configuration and
//! inputs.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{
    energy_defect, grid_for_layers_with, periodic_grid, simulate_scattering, GridSpec, SpectrumGrid, WindowFn,
};
use crate::grating::{
    layers_from_profile, profile_from_layers, simulate_profile_scattering, EtaLibrary, FourModeExample,
    GratingModel, GratingProfile, SigmaFit, FOUR_MODE_ETA,
};
use crate::inverse::{
    layer_strip, Continuity, InverseConfig, ReflectorSign, Situation, StripDiagnostics,
};
use crate::io::{self, EtaFile, RunManifest};
use crate::matfact::{frobenius, identity, max_abs, norm2, CMatrix, RMatrix};
use crate::model::{Layer, ModeSet};
use crate::synth::{random_structure, StructureSpec};

pub const SCHEMA_VERSION: u32 = 1;

pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const TRANSMISSION_FILE: &str = "transmission.csv";
pub const LAYERS_FILE: &str = "layers.csv";
pub const PROFILE_FILE: &str = "profile.csv";
pub const ETA_FILE: &str = "eta.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const REPORT_FILE: &str = "report.json";
pub const CHECK_FILE: &str = "check.json";

// ---------------------------------------------------------------------------
// configuration

/// A matrix entry: a real number or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CNum {
    Real(f64),
    Complex([f64; 2]),
}

impl CNum {
    fn value(self) -> Complex64 {
        match self {
            CNum::Real(v) => Complex64::new(v, 0.0),
            CNum::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub rho: Vec<Vec<CNum>>,
    #[serde(default)]
    pub phi: Option<Vec<Vec<CNum>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSource {
    Named(String),
    Matrix(EtaFile),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GratingSource {
    /// Built-in profile (`four-mode`).
    #[serde(default)]
    pub example: Option<String>,
    #[serde(default)]
    pub profile_csv: Option<PathBuf>,
    #[serde(default)]
    pub eta: Option<EtaSource>,
    #[serde(default)]
    pub model: GratingModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StructureConfig {
    /// `n_layers` layers with `ρ = 0`, `Φ = I`.
    Empty { dx: f64, n_layers: usize },
    Layers { dx: f64, layers: Vec<LayerEntry> },
    LayersCsv { path: PathBuf },
    Random(StructureSpec),
    Grating(GratingSource),
}

fn default_points_per_layer() -> usize {
    8
}

fn default_bandwidth() -> f64 {
    30.0
}

fn default_round_trips() -> f64 {
    30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridConfig {
    /// `ω_max = πc/(2n₀Δx)` with `points_per_layer·N + 1` points.
    Periodic {
        #[serde(default = "default_points_per_layer")]
        points_per_layer: usize,
    },
    /// `ω_max·min Δt = bandwidth`; time period of `round_trips` round trips.
    Layers {
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
        #[serde(default = "default_round_trips")]
        round_trips: f64,
    },
    Explicit {
        center: f64,
        half_width: f64,
        points: usize,
    },
}

/// Inversion settings; unset fields take structure-dependent defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseSection {
    pub n_layers: Option<usize>,
    pub dx: Option<f64>,
    pub situation: Option<Situation>,
    pub reflector_sign: Option<ReflectorSign>,
    pub window: Option<WindowFn>,
    pub index_correction: Option<bool>,
    pub n0: Option<f64>,
    pub continuity: Option<Continuity>,
    pub fit: Option<SigmaFit>,
}

fn default_edge() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub modes: Option<ModeSet>,
    pub structure: StructureConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub inverse: InverseSection,
    /// Fraction of profile samples, split evenly between both ends, left out
    /// of the round-trip profile errors.
    #[serde(default = "default_edge")]
    pub edge_exclusion: f64,
}

/// Command-line overrides applied on top of a configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub window: Option<WindowFn>,
    pub situation: Option<Situation>,
    pub no_index_correction: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(e.to_string())
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        if !(0.0..1.0).contains(&cfg.edge_exclusion) {
            return Err(Error::Config("edge_exclusion must lie in [0, 1)".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(w) = o.window {
            self.inverse.window = Some(w);
        }
        if let Some(s) = o.situation {
            self.inverse.situation = Some(s);
        }
        if o.no_index_correction {
            self.inverse.index_correction = Some(false);
        }
    }

    /// Load structure data and fill in defaults. Relative paths are taken
    /// relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<Resolved> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) | Error::Ingestion(_) => e,
            other => Error::Config(other.to_string()),
        };
        let need_modes = || {
            let modes = self
                .modes
                .clone()
                .ok_or_else(|| Error::Config("'modes' is required for this structure".into()))?;
            modes.validate().map_err(|e| Error::Config(format!("modes: {e}")))?;
            Ok::<_, Error>(modes)
        };
        let structure = match &self.structure {
            StructureConfig::Empty { dx, n_layers } => {
                let modes = need_modes()?;
                if *n_layers == 0 {
                    return Err(Error::Config("n_layers must be at least 1".into()));
                }
                let p = modes.p();
                let layer = Layer::new(identity(p), CMatrix::zeros(p, p), *dx).map_err(cfg_err)?;
                Structure::Layers {
                    modes,
                    layers: vec![layer; *n_layers],
                    situation: Situation::A,
                    sign: ReflectorSign::Positive,
                }
            }
            StructureConfig::Layers { dx, layers } => {
                let modes = need_modes()?;
                let p = modes.p();
                let mut out = Vec::with_capacity(layers.len());
                for (j, entry) in layers.iter().enumerate() {
                    let at = |e: Error| Error::Config(format!("structure.layers[{j}]: {e}"));
                    let rho = parse_matrix(&entry.rho, p).map_err(at)?;
                    let phi = match &entry.phi {
                        Some(m) => parse_matrix(m, p).map_err(at)?,
                        None => identity(p),
                    };
                    out.push(Layer::new(phi, rho, *dx).map_err(at)?);
                }
                if out.is_empty() {
                    return Err(Error::Config("structure.layers is empty".into()));
                }
                let situation = if out.iter().all(|l| max_abs(&(&l.phi - identity(p))) == 0.0) {
                    Situation::A
                } else {
                    Situation::B
                };
                Structure::Layers {
                    modes,
                    layers: out,
                    situation,
                    sign: ReflectorSign::Positive,
                }
            }
            StructureConfig::LayersCsv { path } => {
                let modes = need_modes()?;
                let full = base.join(path);
                let file = File::open(&full).map_err(|e| Error::Config(format!("{}: {e}", full.display())))?;
                let layers = io::read_layers(file)?;
                if layers.is_empty() || layers[0].p() != modes.p() {
                    return Err(Error::Config(format!(
                        "{}: layer dimension does not match the mode set",
                        full.display()
                    )));
                }
                Structure::Layers {
                    modes,
                    layers,
                    situation: Situation::B,
                    sign: ReflectorSign::Positive,
                }
            }
            StructureConfig::Random(spec) => {
                let modes = need_modes()?;
                if spec.p != modes.p() {
                    return Err(Error::Config(format!(
                        "random structure has p = {} but the mode set has {} modes",
                        spec.p,
                        modes.p()
                    )));
                }
                Structure::Layers {
                    modes,
                    layers: random_structure(spec).map_err(cfg_err)?,
                    situation: spec.situation,
                    sign: spec.reflector_sign,
                }
            }
            StructureConfig::Grating(src) => Structure::Grating {
                profile: self.resolve_profile(src, base)?,
                model: src.model,
            },
        };

        let (modes, dx, n) = match &structure {
            Structure::Layers { modes, layers, .. } => (modes.clone(), layers[0].dx, layers.len()),
            Structure::Grating { profile, .. } => (profile.modes.clone(), profile.dx, profile.len()),
        };
        let is_grating = matches!(structure, Structure::Grating { .. });
        let grid_cfg = self.grid.unwrap_or(if is_grating {
            GridConfig::Periodic {
                points_per_layer: default_points_per_layer(),
            }
        } else {
            GridConfig::Layers {
                bandwidth: default_bandwidth(),
                round_trips: default_round_trips(),
            }
        });
        let grid = match grid_cfg {
            GridConfig::Periodic { points_per_layer } => {
                let mut g = periodic_grid(&modes, dx, n);
                g.points = points_per_layer.max(1) * n + 1;
                g
            }
            GridConfig::Layers { bandwidth, round_trips } => {
                if !(bandwidth > 0.0 && round_trips > 0.0) {
                    return Err(Error::Config("grid bandwidth and round_trips must be positive".into()));
                }
                grid_for_layers_with(&modes, dx, n, bandwidth, round_trips)
            }
            GridConfig::Explicit {
                center,
                half_width,
                points,
            } => {
                if points == 0 || !(half_width >= 0.0) {
                    return Err(Error::Config("explicit grid needs points > 0 and half_width >= 0".into()));
                }
                GridSpec {
                    center,
                    half_width,
                    points,
                }
            }
        };

        let (def_situation, def_sign) = match &structure {
            Structure::Layers { situation, sign, .. } => (*situation, *sign),
            Structure::Grating { .. } => (Situation::C, ReflectorSign::Negative),
        };
        let inv = &self.inverse;
        let inverse = InverseConfig {
            n_layers: inv.n_layers.unwrap_or(n),
            dx: inv.dx.unwrap_or(dx),
            situation: inv.situation.unwrap_or(def_situation),
            reflector_sign: inv.reflector_sign.unwrap_or(def_sign),
            window: inv.window.unwrap_or(if is_grating {
                WindowFn::Rectangular
            } else {
                WindowFn::gaussian()
            }),
            index_correction: inv.index_correction.unwrap_or(is_grating),
            n0: inv.n0,
            continuity: inv.continuity.unwrap_or_default(),
        };
        inverse.validate()?;
        Ok(Resolved {
            structure,
            grid,
            inverse,
            fit: inv.fit.unwrap_or_default(),
            edge_exclusion: self.edge_exclusion,
        })
    }

    fn resolve_profile(&self, src: &GratingSource, base: &Path) -> Result<GratingProfile> {
        let eta = match &src.eta {
            None => None,
            Some(EtaSource::Named(name)) => Some(
                EtaLibrary::builtin()
                    .get(name)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("unknown eta '{name}'")))?,
            ),
            Some(EtaSource::Matrix(f)) => Some(f.to_matrix()?),
        };
        match (&src.example, &src.profile_csv) {
            (Some(name), None) => {
                let mut profile = builtin_profile(name)?;
                if let Some(m) = &self.modes {
                    if m.p() != profile.p() {
                        return Err(Error::Config("modes do not match the example".into()));
                    }
                    profile.modes = m.clone();
                }
                if let Some(e) = eta {
                    profile.eta = e;
                }
                profile.validate().map_err(|e| Error::Config(e.to_string()))?;
                Ok(profile)
            }
            (None, Some(path)) => {
                let modes = self
                    .modes
                    .clone()
                    .ok_or_else(|| Error::Config("'modes' is required with profile_csv".into()))?;
                let eta = eta.ok_or_else(|| Error::Config("'eta' is required with profile_csv".into()))?;
                let full = base.join(path);
                let file = File::open(&full).map_err(|e| Error::Config(format!("{}: {e}", full.display())))?;
                io::read_profile(file, &eta, &modes)
                    .map_err(|e| Error::Config(format!("{}: {e}", full.display())))
            }
            _ => Err(Error::Config(
                "grating structure needs exactly one of 'example' and 'profile_csv'".into(),
            )),
        }
    }
}

fn parse_matrix(rows: &[Vec<CNum>], p: usize) -> Result<CMatrix> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Error::Config(format!("matrix must be {p}x{p}")));
    }
    Ok(CMatrix::from_fn(p, p, |a, b| rows[a][b].value()))
}

/// Built-in grating profiles by name.
pub fn builtin_profile(name: &str) -> Result<GratingProfile> {
    match name {
        "four-mode" => Ok(FourModeExample::default().profile()),
        other => Err(Error::Config(format!("unknown example profile '{other}'"))),
    }
}

/// Names accepted by [`builtin_config`].
pub const EXAMPLES: [&str; 3] = ["four-mode", "random-b", "single-layer"];

/// Built-in run configurations.
pub fn builtin_config(name: &str) -> Result<RunConfig> {
    let text = match name {
        "four-mode" => serde_json::json!({
            "schema_version": 1,
            "structure": {"kind": "grating", "example": "four-mode", "model": "symmetric"},
            "grid": {"kind": "periodic", "points_per_layer": 8}
        }),
        "random-b" => serde_json::json!({
            "schema_version": 1,
            "modes": {"indices": [1.45, 1.4463, 1.4426]},
            "structure": {
                "kind": "random", "p": 3, "n_layers": 10, "dx": 1e-5,
                "situation": "b", "strength": 0.4, "coupling": 0.3, "seed": 17
            }
        }),
        "single-layer" => serde_json::json!({
            "schema_version": 1,
            "modes": {"indices": [1.45, 1.44]},
            "structure": {
                "kind": "layers", "dx": 1e-5,
                "layers": [{"rho": [[0.0, [0.1, 0.05]], [[0.1, 0.05], 0.2]]}]
            }
        }),
        other => {
            return Err(Error::Config(format!(
                "unknown example '{other}' (available: {})",
                EXAMPLES.join(", ")
            )))
        }
    };
    RunConfig::from_json(&text.to_string())
}

#[derive(Debug, Clone)]
pub enum Structure {
    Layers {
        modes: ModeSet,
        layers: Vec<Layer>,
        situation: Situation,
        sign: ReflectorSign,
    },
    Grating {
        profile: GratingProfile,
        model: GratingModel,
    },
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub structure: Structure,
    pub grid: GridSpec,
    pub inverse: InverseConfig,
    pub fit: SigmaFit,
    pub edge_exclusion: f64,
}

impl Resolved {
    pub fn modes(&self) -> &ModeSet {
        match &self.structure {
            Structure::Layers { modes, .. } => modes,
            Structure::Grating { profile, .. } => &profile.modes,
        }
    }

    pub fn eta(&self) -> Option<&RMatrix> {
        match &self.structure {
            Structure::Grating { profile, .. } => Some(&profile.eta),
            _ => None,
        }
    }

    /// Layers the structure is made of (the layered discretization for a
    /// grating).
    pub fn truth_layers(&self) -> Result<Vec<Layer>> {
        match &self.structure {
            Structure::Layers { layers, .. } => Ok(layers.clone()),
            Structure::Grating { profile, .. } => layers_from_profile(profile),
        }
    }
}

// ---------------------------------------------------------------------------
// commands

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub spectrum: SpectrumGrid,
    pub transmission: Option<Vec<CMatrix>>,
    pub manifest: RunManifest,
}

/// Forward-simulate the configured structure into `out_dir`.
pub fn cmd_simulate(cfg: &RunConfig, resolved: &Resolved, out_dir: &Path) -> Result<SimulateOutput> {
    prepare_dir(out_dir)?;
    let mut manifest = RunManifest::new("simulate");
    manifest.config_hash = io::config_hash(cfg)?;
    manifest.grid = Some(resolved.grid);
    let omegas = resolved.grid.omegas();
    let t = Instant::now();
    let (spectrum, transmission) = match &resolved.structure {
        Structure::Layers { modes, layers, .. } => {
            let (s, t) = simulate_scattering(layers, modes, &omegas)?;
            (s, Some(t))
        }
        Structure::Grating { profile, model } => simulate_profile_scattering(profile, &omegas, *model, true)?,
    };
    manifest.timings.insert("simulate".into(), seconds(t));

    io::write_spectrum(&out_dir.join(SPECTRUM_FILE), &spectrum)?;
    manifest.outputs.push(SPECTRUM_FILE.into());
    if let Some(tr) = &transmission {
        io::write_matrix_series(File::create(out_dir.join(TRANSMISSION_FILE))?, "T", &spectrum.omegas, tr)?;
        manifest.outputs.push(TRANSMISSION_FILE.into());
    }
    match &resolved.structure {
        Structure::Layers { layers, .. } => {
            io::write_layers(File::create(out_dir.join(LAYERS_FILE))?, layers)?;
            manifest.outputs.push(LAYERS_FILE.into());
        }
        Structure::Grating { profile, model } => {
            io::write_profile(File::create(out_dir.join(PROFILE_FILE))?, profile)?;
            io::write_json(&out_dir.join(ETA_FILE), &EtaFile::from_matrix(&profile.eta))?;
            manifest.outputs.push(PROFILE_FILE.into());
            manifest.outputs.push(ETA_FILE.into());
            manifest.notes.push(format!("grating model: {model:?}"));
        }
    }
    let report = physical_report(&spectrum.omegas, &spectrum.r, transmission.as_deref());
    manifest.residuals.insert("reciprocity".into(), report.reciprocity.value);
    manifest.residuals.insert("contraction".into(), report.contraction.value);
    if let Some(u) = &report.unitarity {
        manifest.residuals.insert("unitarity".into(), u.value);
    }
    manifest.write(out_dir)?;
    Ok(SimulateOutput {
        spectrum,
        transmission,
        manifest,
    })
}

#[derive(Debug, Clone)]
pub struct InvertOutput {
    pub layers: Vec<Layer>,
    pub profile: Option<GratingProfile>,
    pub diagnostics: StripDiagnostics,
    pub manifest: RunManifest,
}

/// Strip the spectrum in `spectrum_path` into `out_dir`.
pub fn cmd_invert(cfg: &RunConfig, resolved: &Resolved, spectrum_path: &Path, out_dir: &Path) -> Result<InvertOutput> {
    prepare_dir(out_dir)?;
    let mut manifest = RunManifest::new("invert");
    manifest.config_hash = io::config_hash(cfg)?;
    manifest.window = Some(resolved.inverse.window.name());
    let spec = io::read_spectrum(spectrum_path, resolved.modes())?;
    manifest.grid = Some(GridSpec {
        center: spec.center(),
        half_width: spec.half_width(),
        points: spec.len(),
    });
    let t = Instant::now();
    let (layers, diagnostics) = layer_strip(&spec, &resolved.inverse)?;
    manifest.timings.insert("strip".into(), seconds(t));
    io::write_layers(File::create(out_dir.join(LAYERS_FILE))?, &layers)?;
    io::write_json(&out_dir.join(DIAGNOSTICS_FILE), &diagnostics)?;
    manifest.outputs.push(LAYERS_FILE.into());
    manifest.outputs.push(DIAGNOSTICS_FILE.into());
    manifest.residuals.insert("residual_max".into(), diagnostics.residual_max);
    manifest.residuals.insert("residual_rms".into(), diagnostics.residual_rms);
    manifest.notes.extend(diagnostics.warnings.iter().cloned());

    let profile = match resolved.eta() {
        Some(eta) => {
            let fit = if resolved.modes().p() < 2 && resolved.fit == SigmaFit::DcAndChirp {
                manifest
                    .notes
                    .push("single mode: dn_dc is not separable, fitting the chirp only".into());
                SigmaFit::ChirpOnly
            } else {
                resolved.fit
            };
            let (profile, res) = profile_from_layers(&layers, eta, resolved.modes(), fit)?;
            io::write_profile(File::create(out_dir.join(PROFILE_FILE))?, &profile)?;
            manifest.outputs.push(PROFILE_FILE.into());
            manifest.residuals.insert("fit_ac".into(), res.max_ac());
            manifest.residuals.insert("fit_sigma".into(), res.max_sigma());
            Some(profile)
        }
        None => None,
    };
    manifest.write(out_dir)?;
    Ok(InvertOutput {
        layers,
        profile,
        diagnostics,
        manifest,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileErrors {
    pub dn_ac: f64,
    pub dn_dc: f64,
    pub dtheta_dx: f64,
    /// Samples left out at each end.
    pub excluded_per_end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakEntry {
    pub p: usize,
    pub q: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub n_layers: usize,
    pub rho_max_error: f64,
    pub phi_max_error: f64,
    pub profile: Option<ProfileErrors>,
    pub peaks: Vec<PeakEntry>,
    pub residual_max: f64,
    pub flagged_layers: Vec<usize>,
}

impl RoundtripReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str("quantity           max error\n");
        s.push_str(&format!("rho                {:.3e}\n", self.rho_max_error));
        s.push_str(&format!("phi                {:.3e}\n", self.phi_max_error));
        if let Some(p) = &self.profile {
            s.push_str(&format!("dn_ac              {:.3e}\n", p.dn_ac));
            s.push_str(&format!("dn_dc              {:.3e}\n", p.dn_dc));
            s.push_str(&format!("dtheta_dx [1/m]    {:.3e}\n", p.dtheta_dx));
            s.push_str(&format!("(profile errors skip {} samples at each end)\n", p.excluded_per_end));
        }
        s.push_str(&format!("residual |R_N|     {:.3e}\n", self.residual_max));
        if !self.flagged_layers.is_empty() {
            s.push_str(&format!("ambiguous layers   {:?}\n", self.flagged_layers));
        }
        s.push_str("peak |R_pq| [%]   ");
        for e in &self.peaks {
            s.push_str(&format!(" R{}{}={:.2}", e.p + 1, e.q + 1, 100.0 * e.value));
        }
        s.push('\n');
        s
    }
}

/// Largest elementwise difference over samples `[skip, n − skip)`.
pub fn trimmed_max_error(a: &[f64], b: &[f64], skip: usize) -> f64 {
    let n = a.len().min(b.len());
    if 2 * skip >= n {
        return 0.0;
    }
    a[skip..n - skip]
        .iter()
        .zip(&b[skip..n - skip])
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Samples excluded at each end for a total edge fraction.
pub fn edge_samples(n: usize, fraction: f64) -> usize {
    (0.5 * fraction * n as f64).round() as usize
}

/// Compare the artifact sets of a round trip; errors are computed from the
/// files as written.
pub fn compare_artifacts(forward_dir: &Path, inverse_dir: &Path, resolved: &Resolved) -> Result<RoundtripReport> {
    let truth = match &resolved.structure {
        Structure::Layers { .. } => io::read_layers(File::open(forward_dir.join(LAYERS_FILE))?)?,
        Structure::Grating { .. } => resolved.truth_layers()?,
    };
    let found = io::read_layers(File::open(inverse_dir.join(LAYERS_FILE))?)?;
    let (rho_err, phi_err) = crate::inverse::layer_errors(&found, &truth);
    let profile = match resolved.eta() {
        Some(eta) => {
            let modes = resolved.modes();
            let t = io::read_profile(File::open(forward_dir.join(PROFILE_FILE))?, eta, modes)?;
            let f = io::read_profile(File::open(inverse_dir.join(PROFILE_FILE))?, eta, modes)?;
            let skip = edge_samples(t.len(), resolved.edge_exclusion);
            Some(ProfileErrors {
                dn_ac: trimmed_max_error(&f.dn_ac, &t.dn_ac, skip),
                dn_dc: trimmed_max_error(&f.dn_dc, &t.dn_dc, skip),
                dtheta_dx: trimmed_max_error(&f.theta_rate, &t.theta_rate, skip),
                excluded_per_end: skip,
            })
        }
        None => None,
    };
    Ok(RoundtripReport {
        n_layers: found.len(),
        rho_max_error: rho_err,
        phi_max_error: phi_err,
        profile,
        ..Default::default()
    })
}

/// Peak magnitudes of the diagonal and the first off-diagonal couplings
/// present in the spectrum.
pub fn peak_table(spec: &SpectrumGrid) -> Vec<PeakEntry> {
    let p = spec.p();
    let mut out: Vec<PeakEntry> = (0..p)
        .map(|k| PeakEntry {
            p: k,
            q: k,
            value: spec.peak(k, k),
        })
        .collect();
    for a in 0..p {
        for b in a + 1..p {
            let v = spec.peak(a, b);
            if v > 1e-12 {
                out.push(PeakEntry { p: a, q: b, value: v });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct RoundtripOutput {
    pub report: RoundtripReport,
    pub simulate: SimulateOutput,
    pub invert: InvertOutput,
}

/// Simulate into `out_dir/forward`, invert into `out_dir/inverse`, and
/// compare the two artifact sets.
pub fn cmd_roundtrip(cfg: &RunConfig, resolved: &Resolved, out_dir: &Path) -> Result<RoundtripOutput> {
    prepare_dir(out_dir)?;
    let t = Instant::now();
    let fwd_dir = out_dir.join("forward");
    let inv_dir = out_dir.join("inverse");
    let simulate = cmd_simulate(cfg, resolved, &fwd_dir)?;
    let invert = cmd_invert(cfg, resolved, &fwd_dir.join(SPECTRUM_FILE), &inv_dir)?;
    let mut report = compare_artifacts(&fwd_dir, &inv_dir, resolved)?;
    report.peaks = peak_table(&simulate.spectrum);
    report.residual_max = invert.diagnostics.residual_max;
    report.flagged_layers = invert.diagnostics.flagged_layers();
    io::write_json(&out_dir.join(REPORT_FILE), &report)?;

    let mut manifest = RunManifest::new("roundtrip");
    manifest.config_hash = io::config_hash(cfg)?;
    manifest.grid = Some(resolved.grid);
    manifest.window = Some(resolved.inverse.window.name());
    manifest.timings.insert("total".into(), seconds(t));
    manifest.residuals.insert("rho_max_error".into(), report.rho_max_error);
    manifest.residuals.insert("phi_max_error".into(), report.phi_max_error);
    if let Some(p) = &report.profile {
        manifest.residuals.insert("dn_ac_max_error".into(), p.dn_ac);
        manifest.residuals.insert("dn_dc_max_error".into(), p.dn_dc);
        manifest.residuals.insert("dtheta_dx_max_error".into(), p.dtheta_dx);
    }
    manifest.outputs = vec![REPORT_FILE.into(), "forward/".into(), "inverse/".into()];
    manifest.write(out_dir)?;
    Ok(RoundtripOutput {
        report,
        simulate,
        invert,
    })
}

/// Largest value of a per-frequency defect and where it occurs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Worst {
    pub value: f64,
    pub omega: f64,
}

impl Worst {
    fn update(&mut self, value: f64, omega: f64) {
        if value > self.value || (self.value == 0.0 && omega < self.omega) {
            self.value = value;
            self.omega = omega;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub points: usize,
    /// `‖R − Rᵀ‖_F`.
    pub reciprocity: Worst,
    /// `max(0, ‖R‖₂ − 1)`.
    pub contraction: Worst,
    /// `‖RᴴR + TᴴT − I‖_F`, when the transmission is known.
    pub unitarity: Option<Worst>,
}

impl CheckReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "points {}\nreciprocity defect {:.3e} (omega = {:.6e})\ncontraction defect {:.3e} (omega = {:.6e})\n",
            self.points, self.reciprocity.value, self.reciprocity.omega, self.contraction.value, self.contraction.omega
        );
        match &self.unitarity {
            Some(u) => s.push_str(&format!("unitarity defect {:.3e} (omega = {:.6e})\n", u.value, u.omega)),
            None => s.push_str("unitarity defect not available (no transmission file)\n"),
        }
        s
    }
}

pub fn physical_report(omegas: &[f64], r: &[CMatrix], t: Option<&[CMatrix]>) -> CheckReport {
    let mut rep = CheckReport {
        points: omegas.len(),
        unitarity: t.map(|_| Worst::default()),
        ..Default::default()
    };
    for (k, (&w, rk)) in omegas.iter().zip(r).enumerate() {
        rep.reciprocity.update(frobenius(&(rk - rk.transpose())), w);
        rep.contraction.update((norm2(rk) - 1.0).max(0.0), w);
        if let (Some(u), Some(t)) = (rep.unitarity.as_mut(), t) {
            u.update(energy_defect(rk, &t[k]), w);
        }
    }
    rep
}

/// Physicality report of a spectrum file, optionally with its transmission.
pub fn cmd_check(spectrum_path: &Path, transmission_path: Option<&Path>, out_dir: Option<&Path>) -> Result<CheckReport> {
    let open = |p: &Path| File::open(p).map_err(|e| Error::Ingestion(format!("{}: {e}", p.display())));
    let (omegas, r) = io::read_matrix_series(open(spectrum_path)?, "R")?;
    let t = match transmission_path {
        Some(p) => {
            let (w2, t) = io::read_matrix_series(open(p)?, "T")?;
            if w2 != omegas {
                return Err(Error::Ingestion("transmission grid differs from the spectrum grid".into()));
            }
            Some(t)
        }
        None => None,
    };
    let report = physical_report(&omegas, &r, t.as_deref());
    if let Some(dir) = out_dir {
        prepare_dir(dir)?;
        io::write_json(&dir.join(CHECK_FILE), &report)?;
        let mut manifest = RunManifest::new("check");
        manifest.config_hash = io::config_hash(&serde_json::json!({
            "spectrum": spectrum_path.display().to_string(),
            "transmission": transmission_path.map(|p| p.display().to_string()),
        }))?;
        manifest.residuals.insert("reciprocity".into(), report.reciprocity.value);
        manifest.residuals.insert("contraction".into(), report.contraction.value);
        if let Some(u) = &report.unitarity {
            manifest.residuals.insert("unitarity".into(), u.value);
        }
        manifest.outputs.push(CHECK_FILE.into());
        manifest.write(dir)?;
    }
    Ok(report)
}

/// Exit status for an error: 2 configuration, 3 ingestion, 4 numerical.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) => 2,
        Error::Ingestion(_) | Error::Csv(_) | Error::Io(_) => 3,
        Error::AtLayer { source, .. } => match **source {
            Error::Config(_) => 2,
            Error::Ingestion(_) => 3,
            _ => 4,
        },
        _ => 4,
    }
}

/// `eta` of the built-in four-mode fiber, for documentation and examples.
pub fn four_mode_eta() -> RMatrix {
    EtaLibrary::builtin()
        .get(FOUR_MODE_ETA)
        .cloned()
        .expect("built-in entry")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;

    fn cfg(json: serde_json::Value) -> RunConfig {
        RunConfig::from_json(&json.to_string()).unwrap()
    }

    fn read(path: &Path) -> String {
        let mut s = String::new();
        File::open(path).unwrap().read_to_string(&mut s).unwrap();
        s
    }

    fn rows(text: &str) -> Vec<Vec<f64>> {
        text.lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    }

    fn single_layer() -> RunConfig {
        builtin_config("single-layer").unwrap()
    }

    #[test]
    fn empty_structure_gives_zero_spectrum() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(serde_json::json!({
            "schema_version": 1,
            "modes": {"indices": [1.45, 1.44]},
            "structure": {"kind": "empty", "dx": 1e-5, "n_layers": 4}
        }));
        let r = c.resolve(dir.path()).unwrap();
        cmd_simulate(&c, &r, dir.path()).unwrap();
        let text = read(&dir.path().join(SPECTRUM_FILE));
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("omega,Re_R_1_1,Im_R_1_1,Re_R_1_2"), "{header}");
        for row in rows(&text) {
            assert!(row[1..].iter().all(|&v| v == 0.0));
        }
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn single_reflector_gives_constant_rows() {
        let dir = tempfile::tempdir().unwrap();
        let c = single_layer();
        let r = c.resolve(dir.path()).unwrap();
        cmd_simulate(&c, &r, dir.path()).unwrap();
        let rows = rows(&read(&dir.path().join(SPECTRUM_FILE)));
        assert!(rows.len() > 10);
        for row in &rows {
            for (a, b) in row[1..].iter().zip(&rows[0][1..]) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        assert!((rows[0][3] - 0.1).abs() < 1e-14 && (rows[0][4] - 0.05).abs() < 1e-14);
    }

    #[test]
    fn single_layer_inverts_to_itself() {
        let dir = tempfile::tempdir().unwrap();
        let c = single_layer();
        let r = c.resolve(dir.path()).unwrap();
        let out = cmd_roundtrip(&c, &r, dir.path()).unwrap();
        assert_eq!(out.report.n_layers, 1);
        assert!(out.report.rho_max_error < 1e-9, "{:?}", out.report);
        assert!(out.report.phi_max_error < 1e-9);
    }

    #[test]
    fn zero_structure_roundtrip_has_zero_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(serde_json::json!({
            "schema_version": 1,
            "modes": {"indices": [1.45, 1.44, 1.43]},
            "structure": {"kind": "empty", "dx": 1e-5, "n_layers": 5}
        }));
        let r = c.resolve(dir.path()).unwrap();
        let out = cmd_roundtrip(&c, &r, dir.path()).unwrap();
        assert_eq!(out.report.rho_max_error, 0.0);
        assert_eq!(out.report.phi_max_error, 0.0);
    }

    #[test]
    fn random_b_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let c = builtin_config("random-b").unwrap();
        let r = c.resolve(dir.path()).unwrap();
        let out = cmd_roundtrip(&c, &r, dir.path()).unwrap();
        assert!(out.report.rho_max_error < 1e-6, "{:?}", out.report);
        assert!(out.report.phi_max_error < 1e-6, "{:?}", out.report);
        for sub in ["", "forward", "inverse"] {
            assert!(dir.path().join(sub).join("manifest.json").exists());
        }
        // the report agrees with a comparison of the written artifacts
        let truth = io::read_layers(File::open(dir.path().join("forward").join(LAYERS_FILE)).unwrap()).unwrap();
        let found = io::read_layers(File::open(dir.path().join("inverse").join(LAYERS_FILE)).unwrap()).unwrap();
        let mut rho = 0.0f64;
        for (a, b) in found.iter().zip(&truth) {
            rho = rho.max(max_abs(&(&a.rho - &b.rho)));
        }
        assert_eq!(rho, out.report.rho_max_error);
    }

    #[test]
    fn tampered_spectrum_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = single_layer();
        let r = c.resolve(dir.path()).unwrap();
        let fwd = dir.path().join("fwd");
        cmd_simulate(&c, &r, &fwd).unwrap();
        let text = read(&fwd.join(SPECTRUM_FILE));
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
        // perturb Re R_1_2 only
        let v: f64 = cells[3].parse().unwrap();
        cells[3] = format!("{:.16e}", v + 1e-3);
        lines[3] = cells.join(",");
        let tampered = dir.path().join("tampered.csv");
        fs::write(&tampered, lines.join("\n") + "\n").unwrap();
        let err = cmd_invert(&c, &r, &tampered, &dir.path().join("inv")).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)), "{err}");
        assert_eq!(exit_code(&err), 3);
    }

    #[test]
    fn check_reports_defects() {
        let dir = tempfile::tempdir().unwrap();
        let c = builtin_config("random-b").unwrap();
        let r = c.resolve(dir.path()).unwrap();
        cmd_simulate(&c, &r, dir.path()).unwrap();
        let spec = dir.path().join(SPECTRUM_FILE);
        let trans = dir.path().join(TRANSMISSION_FILE);
        let rep = cmd_check(&spec, Some(&trans), Some(&dir.path().join("check"))).unwrap();
        assert!(rep.reciprocity.value < 1e-9);
        assert!(rep.contraction.value < 1e-9);
        assert!(rep.unitarity.unwrap().value < 1e-9);

        let (w, rr) = io::read_matrix_series(File::open(&spec).unwrap(), "R").unwrap();
        let scaled: Vec<CMatrix> = rr.iter().map(|m| m.scale(3.0)).collect();
        let scaled_path = dir.path().join("scaled.csv");
        io::write_matrix_series(File::create(&scaled_path).unwrap(), "R", &w, &scaled).unwrap();
        let rep = cmd_check(&scaled_path, None, None).unwrap();
        assert!(rep.contraction.value > 0.1);
        assert!(rep.unitarity.is_none());
    }

    #[test]
    fn lossy_spectrum_has_unitarity_defect() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = builtin_config("random-b").unwrap();
        c.modes.as_mut().unwrap().loss = vec![200.0, 300.0, 400.0];
        let r = c.resolve(dir.path()).unwrap();
        cmd_simulate(&c, &r, dir.path()).unwrap();
        let rep = cmd_check(
            &dir.path().join(SPECTRUM_FILE),
            Some(&dir.path().join(TRANSMISSION_FILE)),
            None,
        )
        .unwrap();
        assert!(rep.unitarity.unwrap().value > 1e-3, "{rep:?}");
        assert!(rep.reciprocity.value < 1e-9);
    }

    #[test]
    fn outputs_are_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = builtin_config("random-b").unwrap();
        let r = c.resolve(a.path()).unwrap();
        cmd_roundtrip(&c, &r, a.path()).unwrap();
        cmd_roundtrip(&c, &r, b.path()).unwrap();
        for f in ["forward/spectrum.csv", "forward/layers.csv", "inverse/layers.csv"] {
            assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
        }
    }

    #[test]
    fn config_errors_cite_position() {
        let err = RunConfig::from_json("{\n  \"schema_version\": 1,\n  \"structure\": {\"kind\": \"bogus\"}\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert_eq!(exit_code(&err), 2);

        let err = RunConfig::from_json(r#"{"schema_version": 2, "structure": {"kind": "empty", "dx": 1, "n_layers": 1}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("schema_version"));

        let err = RunConfig::from_json(r#"{"schema_version": 1, "structure": {"kind": "empty", "dx": 1, "n_layers": 1}, "extra": 0}"#)
            .unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn missing_modes_is_a_config_error() {
        let c = cfg(serde_json::json!({
            "schema_version": 1,
            "structure": {"kind": "empty", "dx": 1e-5, "n_layers": 2}
        }));
        let err = c.resolve(Path::new(".")).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn grating_defaults() {
        let c = builtin_config("four-mode").unwrap();
        let r = c.resolve(Path::new(".")).unwrap();
        assert_eq!(r.inverse.situation, Situation::C);
        assert_eq!(r.inverse.reflector_sign, ReflectorSign::Negative);
        assert!(r.inverse.index_correction);
        assert_eq!(r.inverse.window, WindowFn::Rectangular);
        assert_eq!(r.grid.points, 8 * r.inverse.n_layers + 1);

        let mut c = c;
        c.apply(&Overrides {
            window: Some(WindowFn::RaisedCosine),
            situation: Some(Situation::B),
            no_index_correction: true,
        });
        let r = c.resolve(Path::new(".")).unwrap();
        assert_eq!(r.inverse.situation, Situation::B);
        assert!(!r.inverse.index_correction);
        assert_eq!(r.inverse.window, WindowFn::RaisedCosine);
    }

    #[test]
    fn small_grating_profile_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut profile = FourModeExample::default().profile();
        let n = 40;
        profile.x.truncate(n);
        profile.dn_ac = profile.dn_ac[..n].iter().map(|v| v * 1e-2).collect();
        profile.dn_dc = profile.dn_dc[..n].iter().map(|v| v * 1e-2).collect();
        profile.theta_rate.truncate(n);
        let csv_path = dir.path().join("in_profile.csv");
        io::write_profile(File::create(&csv_path).unwrap(), &profile).unwrap();
        let c = cfg(serde_json::json!({
            "schema_version": 1,
            "modes": profile.modes,
            "structure": {
                "kind": "grating", "profile_csv": "in_profile.csv",
                "eta": EtaFile::from_matrix(&profile.eta), "model": "layered"
            }
        }));
        let r = c.resolve(dir.path()).unwrap();
        let out = cmd_roundtrip(&c, &r, &dir.path().join("rt")).unwrap();
        let p = out.report.profile.unwrap();
        assert!(p.dn_ac.is_finite() && p.dn_dc.is_finite());
        assert!(dir.path().join("rt/inverse").join(PROFILE_FILE).exists());
    }
}
