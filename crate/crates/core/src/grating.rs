//! Quasi-sinusoidal multimode fiber gratings.
//!
//! The index perturbation `Δn_ac cos(2πx/Λ + θ) + Δn_dc` with a fixed
//! transverse shape gives, in envelope form,
//! `κ(x) = −i (Δn_ac/2) η` and `σ(x) = Δn_dc η − ½ θ′ I`.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{sweep_sections, Section, SpectrumGrid};
use crate::matfact::{
    self, conj, hermitian_eigen, hermitian_map, identity, norm2, to_complex, CMatrix, RMatrix,
};
use crate::model::{BlockKind, BlockMatrix2P, Layer, ModeSet};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Above this `‖κ‖Δx` a single layer is a coarse approximation.
pub const COARSE_STEP: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct GratingProfile {
    /// Sample positions (layer midpoints).
    pub x: Vec<f64>,
    pub dx: f64,
    pub dn_ac: Vec<f64>,
    pub dn_dc: Vec<f64>,
    /// `dθ/dx` in 1/m.
    pub theta_rate: Vec<f64>,
    /// Overlap matrix in 1/m.
    pub eta: RMatrix,
    pub modes: ModeSet,
}

impl GratingProfile {
    pub fn new(
        dx: f64,
        dn_ac: Vec<f64>,
        dn_dc: Vec<f64>,
        theta_rate: Vec<f64>,
        eta: RMatrix,
        modes: ModeSet,
    ) -> Result<Self> {
        let n = dn_ac.len();
        let x = (0..n).map(|j| (j as f64 + 0.5) * dx).collect();
        let g = Self {
            x,
            dx,
            dn_ac,
            dn_dc,
            theta_rate,
            eta,
            modes,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        for (name, len) in [
            ("dn_dc", self.dn_dc.len()),
            ("dtheta_dx", self.theta_rate.len()),
            ("dn_ac", self.dn_ac.len()),
        ] {
            if len != n {
                return Err(Error::InvalidInput(format!(
                    "{name} has {len} samples, expected {n}"
                )));
            }
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::InvalidInput("sample spacing must be positive".into()));
        }
        if self.dn_ac.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidInput("dn_ac must be nonnegative".into()));
        }
        if self
            .dn_dc
            .iter()
            .chain(&self.theta_rate)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite);
        }
        self.modes.validate()?;
        validate_eta(&self.eta)?;
        if self.eta.nrows() != self.modes.p() {
            return Err(Error::DimensionMismatch {
                expected: self.modes.p(),
                found: self.eta.nrows(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn p(&self) -> usize {
        self.eta.nrows()
    }

    pub fn length(&self) -> f64 {
        self.dx * self.len() as f64
    }

    /// `(κ, σ)` at sample `i`.
    pub fn coupling_at(&self, i: usize) -> (CMatrix, CMatrix) {
        coupling(&self.eta, self.dn_ac[i], self.dn_dc[i], self.theta_rate[i])
    }

    /// Largest `‖κ‖Δx` over the samples.
    pub fn max_coupling_step(&self) -> f64 {
        let en = norm2(&to_complex(&self.eta));
        self.dn_ac.iter().cloned().fold(0.0, f64::max) * 0.5 * en * self.dx
    }

    /// Zero modulation on the same grid, modes and η.
    pub fn zeros_like(&self) -> Self {
        let n = self.len();
        Self {
            dn_ac: vec![0.0; n],
            dn_dc: vec![0.0; n],
            theta_rate: vec![0.0; n],
            ..self.clone()
        }
    }

    /// The four-mode chirped grating used throughout the examples and tests:
    /// L = 20 mm, Δx = 10 µm, raised-cosine ac window with peak 1e−3, a
    /// sine-modulated Gaussian dc profile and a linear chirp.
    pub fn four_mode_example() -> Self {
        let ex = FourModeExample::default();
        ex.profile()
    }
}

/// Closed-form profile functions of the four-mode example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourModeExample {
    pub length: f64,
    pub dx: f64,
    pub wavelength: f64,
    pub dn_ac_peak: f64,
    pub dn_dc_peak: f64,
    pub dc_fwhm: f64,
    pub dc_period: f64,
    pub chirp: f64,
}

impl Default for FourModeExample {
    fn default() -> Self {
        Self {
            length: 20e-3,
            dx: 10e-6,
            wavelength: 1.55e-6,
            dn_ac_peak: 1e-3,
            dn_dc_peak: 5e-4,
            dc_fwhm: 7e-3,
            dc_period: 4e-3,
            chirp: std::f64::consts::PI / 8.0 * 1e4,
        }
    }
}

impl FourModeExample {
    pub const INDICES: [f64; 4] = [1.449, 1.444, 1.439, 1.437];

    pub fn dn_ac(&self, x: f64) -> f64 {
        self.dn_ac_peak * 0.5 * (1.0 - (2.0 * std::f64::consts::PI * x / self.length).cos())
    }

    pub fn dn_dc(&self, x: f64) -> f64 {
        let u = x - 0.5 * self.length;
        let g = (-4.0 * std::f64::consts::LN_2 * u * u / (self.dc_fwhm * self.dc_fwhm)).exp();
        self.dn_dc_peak * g * (2.0 * std::f64::consts::PI * x / self.dc_period).sin()
    }

    pub fn theta_rate(&self, x: f64) -> f64 {
        self.chirp * (x - 0.5 * self.length)
    }

    pub fn samples(&self) -> usize {
        (self.length / self.dx).round() as usize
    }

    pub fn nominal_index(&self) -> f64 {
        0.5 * (Self::INDICES[0] + Self::INDICES[3])
    }

    pub fn period(&self) -> f64 {
        self.wavelength / (2.0 * self.nominal_index())
    }

    pub fn modes(&self) -> ModeSet {
        ModeSet::new(Self::INDICES.to_vec())
            .and_then(|m| m.with_grating(self.period(), self.nominal_index()))
            .expect("valid example modes")
    }

    pub fn eta(&self) -> RMatrix {
        EtaLibrary::builtin()
            .get(FOUR_MODE_ETA)
            .expect("built-in entry")
            .scale(1.55e-6 / self.wavelength)
    }

    pub fn profile(&self) -> GratingProfile {
        let n = self.samples();
        let x: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * self.dx).collect();
        GratingProfile::new(
            self.dx,
            x.iter().map(|&v| self.dn_ac(v)).collect(),
            x.iter().map(|&v| self.dn_dc(v)).collect(),
            x.iter().map(|&v| self.theta_rate(v)).collect(),
            self.eta(),
            self.modes(),
        )
        .expect("valid example profile")
    }
}

pub const FOUR_MODE_ETA: &str = "lp01-lp11-lp21-lp02";

/// Named overlap matrices.
#[derive(Debug, Clone, Default)]
pub struct EtaLibrary {
    entries: BTreeMap<String, RMatrix>,
}

impl EtaLibrary {
    pub fn builtin() -> Self {
        let k = 2.0 * std::f64::consts::PI / 1.55e-6;
        #[rustfmt::skip]
        let four = RMatrix::from_row_slice(4, 4, &[
            0.957, 0.0, 0.0, -0.116,
            0.0, 0.874, 0.0, 0.0,
            0.0, 0.0, 0.707, 0.0,
            -0.116, 0.0, 0.0, 0.491,
        ]) * k;
        let mut lib = Self::default();
        lib.insert(FOUR_MODE_ETA, four).expect("valid");
        lib.insert("single-mode", RMatrix::from_element(1, 1, k)).expect("valid");
        lib
    }

    pub fn insert(&mut self, name: &str, eta: RMatrix) -> Result<()> {
        validate_eta(&eta)?;
        self.entries.insert(name.to_string(), eta);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&RMatrix> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

/// Symmetric and positive semidefinite within a relative `1e−12`.
pub fn validate_eta(eta: &RMatrix) -> Result<()> {
    if eta.nrows() != eta.ncols() || eta.is_empty() {
        return Err(Error::InvalidInput("eta must be a nonempty square matrix".into()));
    }
    let asym = (eta - eta.transpose()).norm();
    let scale = eta.norm().max(f64::MIN_POSITIVE);
    if asym > 1e-12 * scale {
        return Err(Error::AsymmetricInput { defect: asym });
    }
    let eig = nalgebra::SymmetricEigen::new(eta.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-12 * scale {
        return Err(Error::InvalidInput(format!(
            "eta is not positive semidefinite (eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

/// `κ = −i (Δn_ac/2) η`, `σ = Δn_dc η − ½ θ′ I`.
pub fn coupling(eta: &RMatrix, dn_ac: f64, dn_dc: f64, theta_rate: f64) -> (CMatrix, CMatrix) {
    let p = eta.nrows();
    let e = to_complex(eta);
    let kappa = e.scale(0.5 * dn_ac) * (-I);
    let sigma = e.scale(dn_dc) - identity(p).scale(0.5 * theta_rate);
    (kappa, sigma)
}

/// Layer for constant `κ` (complex symmetric) and `σ` (Hermitian) over `dx`:
/// `ρ = i tanh(√(κ*κ)Δx) (κ*κ)^{−1/2} κ*` and `Φ = exp(iσΔx)`.
pub fn layer_from_coupling(kappa: &CMatrix, sigma: &CMatrix, dx: f64) -> Result<Layer> {
    let kk = conj(kappa) * kappa;
    let f = hermitian_map(&kk, |v| {
        let s = v.max(0.0).sqrt();
        let a = s * dx;
        Complex64::from(if a < 1e-8 { dx * (1.0 - a * a / 3.0) } else { a.tanh() / s })
    });
    let rho = matfact::symmetrize(&(f * conj(kappa) * I));
    let phi = hermitian_map(sigma, |v| (I * v * dx).exp());
    let phi = matfact::symmetrize(&phi);
    Layer::new(phi, rho, dx)
}

/// One layer per sample.
pub fn layers_from_profile(profile: &GratingProfile) -> Result<Vec<Layer>> {
    profile.validate()?;
    (0..profile.len())
        .map(|i| {
            let (k, s) = profile.coupling_at(i);
            layer_from_coupling(&k, &s, profile.dx).map_err(|e| e.at_layer(i))
        })
        .collect()
}

/// `κ` from a reflector: with `ρρᴴ = Q s² Qᴴ`, `κ* = −i Q diag(atanh(s)/(sΔx)) Qᴴ ρ`.
pub fn kappa_from_rho(rho: &CMatrix, dx: f64) -> CMatrix {
    let rr = rho * rho.adjoint();
    let inv_f = hermitian_map(&rr, |v| {
        let s = v.max(0.0).sqrt();
        Complex64::from(if s < 1e-8 { (1.0 + s * s / 3.0) / dx } else { s.atanh() / (s * dx) })
    });
    conj(&(inv_f * rho * (-I)))
}

/// `σ` from `Φ = exp(iσΔx)` on the principal branch.
pub fn sigma_from_phi(phi: &CMatrix, dx: f64) -> Result<CMatrix> {
    Ok(matfact::unitary_log_hermitian(phi, 1e-9)?.unscale(dx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaFit {
    /// Δn_dc and dθ/dx jointly (needs two distinct diagonal η entries).
    #[default]
    DcAndChirp,
    /// dθ/dx only, Δn_dc fixed at zero.
    ChirpOnly,
    /// Δn_dc only, dθ/dx fixed at zero.
    DcOnly,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitResiduals {
    /// `‖i diag κ − (Δn_ac/2) diag η‖` per sample.
    pub ac: Vec<f64>,
    /// `‖diag σ − Δn_dc diag η + ½θ′‖` per sample.
    pub sigma: Vec<f64>,
}

impl FitResiduals {
    pub fn max_ac(&self) -> f64 {
        self.ac.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma.iter().cloned().fold(0.0, f64::max)
    }
}

/// Least-squares fit of `Δn_ac` to `i κ_pp = (Δn_ac/2) η_pp`.
pub fn fit_ac(kappa_diag: &[Complex64], eta_diag: &[f64]) -> (f64, f64) {
    let num: f64 = kappa_diag
        .iter()
        .zip(eta_diag)
        .map(|(k, e)| (I * k).re * e)
        .sum();
    let den: f64 = eta_diag.iter().map(|e| e * e).sum();
    let half = if den > 0.0 { num / den } else { 0.0 };
    let res: f64 = kappa_diag
        .iter()
        .zip(eta_diag)
        .map(|(k, e)| (I * k - half * e).norm_sqr())
        .sum::<f64>()
        .sqrt();
    (2.0 * half, res)
}

/// Least-squares fit of `σ_pp = Δn_dc η_pp − ½θ′`; returns `(Δn_dc, θ′, residual)`.
pub fn fit_sigma(sigma_diag: &[f64], eta_diag: &[f64], mode: SigmaFit) -> Result<(f64, f64, f64)> {
    let p = sigma_diag.len();
    let (dc, rate) = match mode {
        SigmaFit::DcAndChirp => {
            if p < 2 {
                return Err(Error::UnderdeterminedFit(
                    "separating dn_dc from dtheta/dx needs at least two modes".into(),
                ));
            }
            let mut ata = Matrix2::<f64>::zeros();
            let mut atb = Vector2::<f64>::zeros();
            for (s, e) in sigma_diag.iter().zip(eta_diag) {
                let row = Vector2::new(*e, -0.5);
                ata += row * row.transpose();
                atb += row * *s;
            }
            let mean = eta_diag.iter().sum::<f64>() / p as f64;
            let spread = eta_diag.iter().map(|e| (e - mean).abs()).fold(0.0, f64::max);
            if spread <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::UnderdeterminedFit(
                    "diagonal of eta is constant; dn_dc and dtheta/dx are not separable".into(),
                ));
            }
            let sol = ata
                .try_inverse()
                .ok_or_else(|| Error::UnderdeterminedFit("singular normal equations".into()))?
                * atb;
            (sol[0], sol[1])
        }
        SigmaFit::ChirpOnly => {
            let mean = sigma_diag.iter().sum::<f64>() / p as f64;
            (0.0, -2.0 * mean)
        }
        SigmaFit::DcOnly => {
            let num: f64 = sigma_diag.iter().zip(eta_diag).map(|(s, e)| s * e).sum();
            let den: f64 = eta_diag.iter().map(|e| e * e).sum();
            (if den > 0.0 { num / den } else { 0.0 }, 0.0)
        }
    };
    let res = sigma_diag
        .iter()
        .zip(eta_diag)
        .map(|(s, e)| (s - dc * e + 0.5 * rate).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((dc, rate, res))
}

/// Recover the index profile from reconstructed layers.
pub fn profile_from_layers(
    layers: &[Layer],
    eta: &RMatrix,
    modes: &ModeSet,
    fit: SigmaFit,
) -> Result<(GratingProfile, FitResiduals)> {
    validate_eta(eta)?;
    let p = eta.nrows();
    if modes.p() != p {
        return Err(Error::DimensionMismatch {
            expected: modes.p(),
            found: p,
        });
    }
    if fit == SigmaFit::DcAndChirp && p < 2 {
        return Err(Error::UnderdeterminedFit(
            "separating dn_dc from dtheta/dx needs at least two modes".into(),
        ));
    }
    let first = layers
        .first()
        .ok_or_else(|| Error::InvalidInput("no layers".into()))?;
    let dx = first.dx;
    let eta_diag: Vec<f64> = (0..p).map(|k| eta[(k, k)]).collect();
    let n = layers.len();
    let mut dn_ac = Vec::with_capacity(n);
    let mut dn_dc = Vec::with_capacity(n);
    let mut rate = Vec::with_capacity(n);
    let mut res = FitResiduals::default();
    let mut x = Vec::with_capacity(n);
    let mut pos = 0.0;
    for (j, l) in layers.iter().enumerate() {
        if l.p() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: l.p(),
            }
            .at_layer(j));
        }
        x.push(pos + 0.5 * l.dx);
        pos += l.dx;
        let kappa = kappa_from_rho(&l.rho, l.dx);
        let sigma = sigma_from_phi(&l.phi, l.dx).map_err(|e| e.at_layer(j))?;
        let kd: Vec<Complex64> = (0..p).map(|k| kappa[(k, k)]).collect();
        let sd: Vec<f64> = (0..p).map(|k| sigma[(k, k)].re).collect();
        let (ac, r_ac) = fit_ac(&kd, &eta_diag);
        let (dc, th, r_s) = fit_sigma(&sd, &eta_diag, fit).map_err(|e| e.at_layer(j))?;
        dn_ac.push(ac.max(0.0));
        dn_dc.push(dc);
        rate.push(th);
        res.ac.push(r_ac);
        res.sigma.push(r_s);
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
    Ok((profile, res))
}

/// Forward discretizations of a continuous profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GratingModel {
    /// `Φ`, `ρ`, delay per sample (the layered model).
    #[default]
    Layered,
    /// Half delay, `exp(iC Δx)` of the coupling part, half delay.
    Symmetric,
    /// `exp(i(D + C)Δx)` per sample and frequency.
    Exact,
}

/// Reflection spectrum of a profile under the chosen discretization.
pub fn simulate_profile(
    profile: &GratingProfile,
    omegas: &[f64],
    model: GratingModel,
) -> Result<SpectrumGrid> {
    Ok(simulate_profile_scattering(profile, omegas, model, false)?.0)
}

/// Reflection and, when requested and available (`Layered`, `Symmetric`),
/// the transmission `S₂₁`.
pub fn simulate_profile_scattering(
    profile: &GratingProfile,
    omegas: &[f64],
    model: GratingModel,
    transmission: bool,
) -> Result<(SpectrumGrid, Option<Vec<CMatrix>>)> {
    let modes = &profile.modes;
    match model {
        GratingModel::Layered => {
            let layers = layers_from_profile(profile)?;
            let sweep = sweep_sections(&crate::forward::layer_sections(&layers), modes, omegas, transmission)?;
            Ok((SpectrumGrid::new(omegas.to_vec(), sweep.r, modes.clone())?, sweep.s21))
        }
        GratingModel::Symmetric => {
            let half = 0.5 * profile.dx;
            let mut sections = Vec::with_capacity(3 * profile.len());
            for i in 0..profile.len() {
                let (k, s) = profile.coupling_at(i);
                let g = coupling_transfer(&k, &s, profile.dx)?;
                sections.push(Section::Delay(half));
                sections.push(Section::Transfer(g));
                sections.push(Section::Delay(half));
            }
            let sweep = sweep_sections(&sections, modes, omegas, transmission)?;
            Ok((SpectrumGrid::new(omegas.to_vec(), sweep.r, modes.clone())?, sweep.s21))
        }
        GratingModel::Exact => {
            use rayon::prelude::*;
            let couplings: Vec<_> = (0..profile.len()).map(|i| profile.coupling_at(i)).collect();
            let r: Result<Vec<CMatrix>> = omegas
                .par_iter()
                .map(|&w| {
                    let beta = modes.propagation(w);
                    let mut r = CMatrix::zeros(profile.p(), profile.p());
                    for (k, s) in couplings.iter().rev() {
                        let g = generator_exp(k, s, Some(&beta), profile.dx)?;
                        r = riccati_general(&g, &r).ok_or(Error::SingularBlock {
                            condition: f64::INFINITY,
                            omega: Some(w),
                        })?;
                    }
                    Ok(r)
                })
                .collect();
            Ok((SpectrumGrid::new(omegas.to_vec(), r?, modes.clone())?, None))
        }
    }
}

/// `exp(i [[σ, κ], [−κ*, −σ*]] Δx)`.
pub fn coupling_transfer(kappa: &CMatrix, sigma: &CMatrix, dx: f64) -> Result<BlockMatrix2P> {
    generator_exp(kappa, sigma, None, dx)
}

/// As [`coupling_transfer`] with the propagation block `diag(β, −β)` added.
fn generator_exp(
    kappa: &CMatrix,
    sigma: &CMatrix,
    beta: Option<&[Complex64]>,
    dx: f64,
) -> Result<BlockMatrix2P> {
    let p = kappa.nrows();
    let mut c = CMatrix::zeros(2 * p, 2 * p);
    c.view_mut((0, 0), (p, p)).copy_from(sigma);
    c.view_mut((0, p), (p, p)).copy_from(kappa);
    c.view_mut((p, 0), (p, p)).copy_from(&(-conj(kappa)));
    c.view_mut((p, p), (p, p)).copy_from(&(-conj(sigma)));
    if let Some(beta) = beta {
        for (k, b) in beta.iter().enumerate() {
            c[(k, k)] += b;
            c[(p + k, p + k)] -= b;
        }
    }
    let e = matfact::mat_exp(&(c * (I * dx)))?;
    BlockMatrix2P::from_full(&e, BlockKind::Transfer)
}

fn riccati_general(g: &BlockMatrix2P, r: &CMatrix) -> Option<CMatrix> {
    let a = &g.b22 - r * &g.b12;
    let b = r * &g.b11 - &g.b21;
    a.lu().solve(&b)
}

/// Smallest eigenvalue of `η`, relative to its norm.
pub fn eta_min_eigenvalue(eta: &RMatrix) -> f64 {
    let (vals, _) = hermitian_eigen(&to_complex(eta));
    vals.iter().cloned().fold(f64::INFINITY, f64::min)
}
