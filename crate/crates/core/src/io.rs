//! File formats: spectra, layers and profiles as CSV; overlap matrices,
//! diagnostics and run manifests as JSON.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::SpectrumGrid;
use crate::grating::GratingProfile;
use crate::matfact::{CMatrix, RMatrix};
use crate::model::{Layer, ModeSet};

/// Shortest round-trip representation of an `f64` (17 significant digits).
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_num(s: &str, line: usize, column: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        Error::Ingestion(format!("line {line}, column {column}: cannot parse '{s}' as a number"))
    })
}

fn matrix_header(prefix: &str, name: &str, p: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(2 * p * p);
    for a in 1..=p {
        for b in 1..=p {
            h.push(format!("Re_{prefix}{name}_{a}_{b}"));
            h.push(format!("Im_{prefix}{name}_{a}_{b}"));
        }
    }
    h
}

fn push_matrix(row: &mut Vec<String>, m: &CMatrix) {
    for a in 0..m.nrows() {
        for b in 0..m.ncols() {
            row.push(num(m[(a, b)].re));
            row.push(num(m[(a, b)].im));
        }
    }
}

fn read_matrix(rec: &csv::StringRecord, start: usize, p: usize, line: usize, header: &csv::StringRecord) -> Result<CMatrix> {
    let mut m = CMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            let k = start + 2 * (a * p + b);
            let re = parse_num(&rec[k], line, &header[k])?;
            let im = parse_num(&rec[k + 1], line, &header[k + 1])?;
            m[(a, b)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

/// Number of modes implied by a matrix block of `cols` columns.
fn modes_from_columns(cols: usize, blocks: usize) -> Option<usize> {
    if cols % (2 * blocks) != 0 {
        return None;
    }
    let sq = cols / (2 * blocks);
    let p = (sq as f64).sqrt().round() as usize;
    (p > 0 && p * p == sq).then_some(p)
}

fn check_header(found: &csv::StringRecord, expected: &[String]) -> Result<()> {
    if found.len() != expected.len() {
        return Err(Error::Ingestion(format!(
            "header has {} columns, expected {}",
            found.len(),
            expected.len()
        )));
    }
    for (k, (f, e)) in found.iter().zip(expected).enumerate() {
        if f.trim() != e {
            return Err(Error::Ingestion(format!(
                "header column {} is '{f}', expected '{e}'",
                k + 1
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// spectra

/// Write `omega,Re_R_1_1,Im_R_1_1,...` (or `T` for transmission).
pub fn write_matrix_series<W: Write>(out: W, name: &str, omegas: &[f64], mats: &[CMatrix]) -> Result<()> {
    let p = mats.first().map(|m| m.nrows()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["omega".to_string()];
    header.extend(matrix_header("", name, p));
    w.write_record(&header)?;
    for (omega, m) in omegas.iter().zip(mats) {
        let mut row = Vec::with_capacity(header.len());
        row.push(num(*omega));
        push_matrix(&mut row, m);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a series written by [`write_matrix_series`]; returns the grid and matrices.
pub fn read_matrix_series<R: Read>(input: R, name: &str) -> Result<(Vec<f64>, Vec<CMatrix>)> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.is_empty() || header[0].trim() != "omega" {
        return Err(Error::Ingestion("first column must be 'omega'".into()));
    }
    let p = modes_from_columns(header.len() - 1, 1)
        .ok_or_else(|| Error::Ingestion(format!("{} columns do not form a square matrix", header.len() - 1)))?;
    let mut expected = vec!["omega".to_string()];
    expected.extend(matrix_header("", name, p));
    check_header(&header, &expected)?;
    let mut omegas = Vec::new();
    let mut mats = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Ingestion(format!("line {line}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::Ingestion(format!(
                "line {line}: {} fields, expected {}",
                rec.len(),
                header.len()
            )));
        }
        omegas.push(parse_num(&rec[0], line, "omega")?);
        mats.push(read_matrix(&rec, 1, p, line, &header)?);
    }
    if omegas.is_empty() {
        return Err(Error::Ingestion("no data rows".into()));
    }
    Ok((omegas, mats))
}

pub fn write_spectrum(path: &Path, spec: &SpectrumGrid) -> Result<()> {
    write_matrix_series(File::create(path)?, "R", &spec.omegas, &spec.r)
}

/// Read a spectrum file and attach the mode set; checks shape and grid.
pub fn read_spectrum(path: &Path, modes: &ModeSet) -> Result<SpectrumGrid> {
    let file = File::open(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    let (omegas, r) = read_matrix_series(file, "R")?;
    if r[0].nrows() != modes.p() {
        return Err(Error::Ingestion(format!(
            "spectrum has {} modes but the configuration has {}",
            r[0].nrows(),
            modes.p()
        )));
    }
    SpectrumGrid::new(omegas, r, modes.clone()).map_err(|e| match e {
        Error::InvalidGrid(m) => Error::Ingestion(format!("invalid grid: {m}")),
        Error::NonFinite => Error::Ingestion("non-finite entries".into()),
        other => other,
    })
}

// ---------------------------------------------------------------------------
// layers

/// `j,x,dx,Re_rho_p_q,Im_rho_p_q,...,Re_phi_p_q,Im_phi_p_q,...`; `x` is the
/// front of the layer.
pub fn write_layers<W: Write>(out: W, layers: &[Layer]) -> Result<()> {
    let p = layers.first().map(|l| l.p()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["j".to_string(), "x".to_string(), "dx".to_string()];
    header.extend(matrix_header("", "rho", p));
    header.extend(matrix_header("", "phi", p));
    w.write_record(&header)?;
    let mut x = 0.0;
    for (j, l) in layers.iter().enumerate() {
        let mut row = vec![j.to_string(), num(x), num(l.dx)];
        push_matrix(&mut row, &l.rho);
        push_matrix(&mut row, &l.phi);
        w.write_record(&row)?;
        x += l.dx;
    }
    w.flush()?;
    Ok(())
}

pub fn read_layers<R: Read>(input: R) -> Result<Vec<Layer>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.len() < 3 {
        return Err(Error::Ingestion("layers file needs j, x and dx columns".into()));
    }
    let p = modes_from_columns(header.len() - 3, 2)
        .ok_or_else(|| Error::Ingestion("layer columns do not form two square matrices".into()))?;
    let mut expected = vec!["j".to_string(), "x".to_string(), "dx".to_string()];
    expected.extend(matrix_header("", "rho", p));
    expected.extend(matrix_header("", "phi", p));
    check_header(&header, &expected)?;
    let mut layers = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Ingestion(format!("line {line}: {e}")))?;
        let dx = parse_num(&rec[2], line, "dx")?;
        let rho = read_matrix(&rec, 3, p, line, &header)?;
        let phi = read_matrix(&rec, 3 + 2 * p * p, p, line, &header)?;
        let layer = Layer::new(phi, rho, dx).map_err(|e| Error::Ingestion(format!("line {line}: {e}")))?;
        layers.push(layer);
    }
    Ok(layers)
}

// ---------------------------------------------------------------------------
// profiles

pub fn write_profile<W: Write>(out: W, profile: &GratingProfile) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "dn_ac", "dn_dc", "dtheta_dx"])?;
    for i in 0..profile.len() {
        w.write_record([
            num(profile.x[i]),
            num(profile.dn_ac[i]),
            num(profile.dn_dc[i]),
            num(profile.theta_rate[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Profile columns `(x, dn_ac, dn_dc, dtheta_dx)`; samples must be uniform.
pub fn read_profile<R: Read>(input: R, eta: &RMatrix, modes: &ModeSet) -> Result<GratingProfile> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    let expected: Vec<String> = ["x", "dn_ac", "dn_dc", "dtheta_dx"].iter().map(|s| s.to_string()).collect();
    check_header(&header, &expected)?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (k, rec) in rd.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Ingestion(format!("line {line}: {e}")))?;
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(parse_num(&rec[c], line, &expected[c])?);
        }
    }
    let [x, dn_ac, dn_dc, rate] = cols;
    if x.len() < 2 {
        return Err(Error::Ingestion("a profile needs at least two samples".into()));
    }
    let dx = x[1] - x[0];
    for (k, w) in x.windows(2).enumerate() {
        if ((w[1] - w[0]) - dx).abs() > 1e-9 * dx {
            return Err(Error::Ingestion(format!("line {}: non-uniform sample spacing", k + 3)));
        }
    }
    let profile = GratingProfile {
        x,
        dx,
        dn_ac,
        dn_dc,
        theta_rate: rate,
        eta: eta.clone(),
        modes: modes.clone(),
    };
    profile.validate().map_err(|e| Error::Ingestion(e.to_string()))?;
    Ok(profile)
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaFile {
    pub p: usize,
    /// Row-major entries in 1/m.
    pub values: Vec<f64>,
    #[serde(default = "eta_units")]
    pub units: String,
}

fn eta_units() -> String {
    "1/m".into()
}

impl EtaFile {
    pub fn from_matrix(eta: &RMatrix) -> Self {
        let p = eta.nrows();
        let values = (0..p).flat_map(|a| (0..p).map(move |b| (a, b))).map(|(a, b)| eta[(a, b)]).collect();
        Self {
            p,
            values,
            units: eta_units(),
        }
    }

    pub fn to_matrix(&self) -> Result<RMatrix> {
        if self.values.len() != self.p * self.p {
            return Err(Error::Config(format!(
                "eta has {} values, expected {}",
                self.values.len(),
                self.p * self.p
            )));
        }
        if self.units != "1/m" {
            return Err(Error::Config(format!("eta units must be 1/m, found '{}'", self.units)));
        }
        let m = RMatrix::from_row_slice(self.p, self.p, &self.values);
        crate::grating::validate_eta(&m)?;
        Ok(m)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// SHA-256 of the canonical (compact, key-sorted) JSON form of a value.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let bytes = serde_json::to_vec(&v)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Metadata written next to every command's outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub grid: Option<crate::forward::GridSpec>,
    pub window: Option<String>,
    pub tolerances: BTreeMap<String, f64>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub residuals: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn new(command: &str) -> Self {
        let mut tolerances = BTreeMap::new();
        tolerances.insert("fact".into(), crate::matfact::TAU_FACT);
        tolerances.insert("sym".into(), crate::matfact::TAU_SYM);
        tolerances.insert("phys".into(), crate::model::TAU_PHYS);
        tolerances.insert("reflector_margin".into(), crate::model::REFLECTOR_MARGIN);
        tolerances.insert("max_condition".into(), crate::model::MAX_CONDITION);
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            tolerances,
            ..Default::default()
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(Self::FILE_NAME), self)
    }
}
