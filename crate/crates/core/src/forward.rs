//! Reflection spectra of layered structures and their impulse-response weights.

use nalgebra::{DVector, Dim, Dyn, OMatrix};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfact::{frobenius, norm2, CMatrix};
use crate::model::{reflector_transmission, BlockMatrix2P, BlockKind, Layer, ModeSet, TAU_PHYS};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WindowFn {
    Rectangular,
    RaisedCosine,
    /// `exp(−½ (k ω/ω_max)²)`; `W(±ω_max) = exp(−k²/2)`.
    GaussianTruncated { sigmas: f64 },
}

impl Default for WindowFn {
    fn default() -> Self {
        WindowFn::RaisedCosine
    }
}

impl WindowFn {
    pub fn gaussian() -> Self {
        WindowFn::GaussianTruncated { sigmas: 6.3 }
    }

    /// Weight at offset `u = (ω − ω_c)/ω_max ∈ [−1, 1]`.
    pub fn weight(&self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match *self {
            WindowFn::Rectangular => 1.0,
            WindowFn::RaisedCosine => 0.5 * (1.0 + (std::f64::consts::PI * u).cos()),
            WindowFn::GaussianTruncated { sigmas } => (-0.5 * (sigmas * u).powi(2)).exp(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            WindowFn::Rectangular => "rect".into(),
            WindowFn::RaisedCosine => "raised-cosine".into(),
            WindowFn::GaussianTruncated { sigmas } => format!("gaussian-truncated({sigmas})"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rect" | "rectangular" => Ok(WindowFn::Rectangular),
            "raised-cosine" => Ok(WindowFn::RaisedCosine),
            "gaussian" | "gaussian-truncated" => Ok(WindowFn::gaussian()),
            other => Err(Error::Config(format!("unknown window '{other}'"))),
        }
    }
}

/// `m` equally spaced points on `[center − half_width, center + half_width]`.
pub fn uniform_grid(center: f64, half_width: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![center];
    }
    let step = 2.0 * half_width / (m - 1) as f64;
    (0..m)
        .map(|k| center - half_width + step * k as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub center: f64,
    pub half_width: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn omegas(&self) -> Vec<f64> {
        uniform_grid(self.center, self.half_width, self.points)
    }
}

/// Grid for generic layered structures: `ω_max·min Δt_p = bandwidth`, and
/// enough points that the time-domain period covers four round trips of the
/// slowest mode (never fewer than `8N`).
pub fn grid_for_layers(modes: &ModeSet, dx: f64, n_layers: usize, bandwidth: f64) -> GridSpec {
    grid_for_layers_with(modes, dx, n_layers, bandwidth, 4.0)
}

/// As [`grid_for_layers`] with the time-domain period set to `round_trips`
/// round trips of the slowest mode.
pub fn grid_for_layers_with(
    modes: &ModeSet,
    dx: f64,
    n_layers: usize,
    bandwidth: f64,
    round_trips: f64,
) -> GridSpec {
    let delays = modes.delays(dx);
    let dt_min = delays.iter().cloned().fold(f64::INFINITY, f64::min);
    let dt_max = delays.iter().cloned().fold(0.0, f64::max);
    let half_width = bandwidth / dt_min;
    let span = round_trips * 2.0 * n_layers.max(1) as f64 * dt_max;
    let alias = (half_width * span / std::f64::consts::PI).ceil() as usize + 1;
    let points = alias.max(8 * n_layers).max(16) | 1;
    GridSpec {
        center: 0.0,
        half_width,
        points,
    }
}

/// One period of the nominal layer delay: `ω_max = πc/(2n₀Δx)`, `8N + 1` points
/// so that the trapezoid rule is exact on the periodic part.
pub fn periodic_grid(modes: &ModeSet, dx: f64, n_layers: usize) -> GridSpec {
    let half_width = std::f64::consts::PI * modes.c_ref / (2.0 * modes.nominal_index() * dx);
    GridSpec {
        center: 0.0,
        half_width,
        points: 8 * n_layers.max(1) + 1,
    }
}

/// Reflection matrices sampled on a uniform detuning grid.
#[derive(Debug, Clone)]
pub struct SpectrumGrid {
    pub omegas: Vec<f64>,
    pub r: Vec<CMatrix>,
    pub modes: ModeSet,
    pub window: Option<WindowFn>,
}

impl SpectrumGrid {
    pub fn new(omegas: Vec<f64>, r: Vec<CMatrix>, modes: ModeSet) -> Result<Self> {
        let s = Self {
            omegas,
            r,
            modes,
            window: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_grid(&self.omegas)?;
        if self.r.len() != self.omegas.len() {
            return Err(Error::InvalidGrid(format!(
                "{} frequencies but {} matrices",
                self.omegas.len(),
                self.r.len()
            )));
        }
        let p = self.modes.p();
        for r in &self.r {
            if r.shape() != (p, p) {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: r.nrows(),
                });
            }
            crate::matfact::check_finite(r)?;
        }
        Ok(())
    }

    /// Reject spectra that are not reciprocal within `TAU_PHYS`.
    pub fn check_reciprocity(&self) -> Result<()> {
        for (w, r) in self.omegas.iter().zip(&self.r) {
            let d = frobenius(&(r - r.transpose()));
            if d > TAU_PHYS * frobenius(r).max(1.0) {
                return Err(Error::Ingestion(format!(
                    "reciprocity violation: |R - R^T| = {d:.3e} at omega = {w:.6e}"
                )));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.modes.p()
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.omegas[0] + self.omegas[self.len() - 1])
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.omegas[self.len() - 1] - self.omegas[0])
    }

    pub fn spacing(&self) -> f64 {
        if self.len() < 2 {
            0.0
        } else {
            self.omegas[1] - self.omegas[0]
        }
    }

    /// `ω_max · min_p Δt_p` for layers of thickness `dx`.
    pub fn bandwidth_ratio(&self, dx: f64) -> f64 {
        self.half_width() * self.modes.min_delay(dx)
    }

    /// Largest `|R_pq|` over the grid.
    pub fn peak(&self, p: usize, q: usize) -> f64 {
        self.r.iter().map(|r| r[(p, q)].norm()).fold(0.0, f64::max)
    }
}

fn check_grid(omegas: &[f64]) -> Result<()> {
    if omegas.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    if omegas.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidGrid("non-finite frequency".into()));
    }
    if omegas.len() < 2 {
        return Ok(());
    }
    let step = (omegas[omegas.len() - 1] - omegas[0]) / (omegas.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::InvalidGrid("frequencies must increase".into()));
    }
    let scale = omegas[0].abs().max(omegas[omegas.len() - 1].abs());
    for (k, w) in omegas.iter().enumerate() {
        let expected = omegas[0] + step * k as f64;
        if (w - expected).abs() > 1e-9 * step.max(1e-12 * scale) + 1e-12 * scale {
            return Err(Error::InvalidGrid(format!("non-uniform spacing at index {k}")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sections and the backward Riccati sweep

/// Elementary pieces a structure is assembled from, in spatial order.
#[derive(Debug, Clone)]
pub enum Section {
    /// Free propagation over `dx`.
    Delay(f64),
    /// Codirectional section `Φ` (transfer `diag(Φ, Φ*)`).
    Codirectional(CMatrix),
    /// Reflector `ρ` with transfer `[[t⁻¹*, −t⁻¹*ρ*], [−t⁻¹ρ, t⁻¹]]`.
    Reflector(CMatrix),
    /// Any frequency-independent transfer matrix.
    Transfer(BlockMatrix2P),
}

/// The three sections of each layer: `Φ`, then `ρ`, then the delay.
pub fn layer_sections(layers: &[Layer]) -> Vec<Section> {
    let mut out = Vec::with_capacity(3 * layers.len());
    for l in layers {
        let p = l.p();
        if l.phi != CMatrix::identity(p, p) {
            out.push(Section::Codirectional(l.phi.clone()));
        }
        if l.rho.iter().any(|z| *z != Complex64::new(0.0, 0.0)) {
            out.push(Section::Reflector(l.rho.clone()));
        }
        out.push(Section::Delay(l.dx));
    }
    out
}

pub(crate) type M<D> = OMatrix<Complex64, D, D>;

enum Prepared<D: Dim>
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D>,
{
    Delay(usize),
    Phi { phi: M<D>, phi_t: M<D> },
    Reflector { rho: M<D>, rho_c: M<D>, t: M<D>, tinv_c: M<D> },
    Transfer { g11: M<D>, g12: M<D>, g21: M<D>, g22: M<D> },
}

/// Reflection (and optionally transmission `S₂₁`) of a section sequence.
pub struct Sweep {
    pub r: Vec<CMatrix>,
    pub s21: Option<Vec<CMatrix>>,
}

/// Backward Riccati sweep: start from `R = 0` behind the structure and move
/// each section's reflection to its left side with
/// `R ← (T₂₂ − R T₁₂)⁻¹ (R T₁₁ − T₂₁)`, evaluated in closed form per section.
pub fn sweep_sections(
    sections: &[Section],
    modes: &ModeSet,
    omegas: &[f64],
    transmission: bool,
) -> Result<Sweep> {
    macro_rules! fixed {
        ($n:literal) => {
            sweep_generic::<nalgebra::Const<$n>>(
                nalgebra::Const::<$n>,
                sections,
                modes,
                omegas,
                transmission,
            )
        };
    }
    match modes.p() {
        1 => fixed!(1),
        2 => fixed!(2),
        3 => fixed!(3),
        4 => fixed!(4),
        5 => fixed!(5),
        6 => fixed!(6),
        8 => fixed!(8),
        p => sweep_generic::<Dyn>(Dyn(p), sections, modes, omegas, transmission),
    }
}

pub(crate) fn to_m<D: Dim>(d: D, m: &CMatrix) -> M<D>
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D>,
{
    M::<D>::from_fn_generic(d, d, |i, j| m[(i, j)])
}

pub(crate) fn to_dyn<D: Dim>(m: &M<D>) -> CMatrix
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D>,
{
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn sweep_generic<D: Dim + nalgebra::DimMin<D, Output = D>>(
    d: D,
    sections: &[Section],
    modes: &ModeSet,
    omegas: &[f64],
    transmission: bool,
) -> Result<Sweep>
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D> + nalgebra::allocator::Allocator<D>,
    <nalgebra::DefaultAllocator as nalgebra::allocator::Allocator<D, D>>::Buffer<Complex64>: Sync + Send,
{
    let p = modes.p();
    let mut dxs: Vec<f64> = Vec::new();
    let mut prepared = Vec::with_capacity(sections.len());
    for s in sections {
        let item = match s {
            Section::Delay(dx) => {
                let k = match dxs.iter().position(|v| v == dx) {
                    Some(k) => k,
                    None => {
                        dxs.push(*dx);
                        dxs.len() - 1
                    }
                };
                Prepared::Delay(k)
            }
            Section::Codirectional(phi) => {
                check_dim(phi, p)?;
                Prepared::Phi {
                    phi: to_m(d, phi),
                    phi_t: to_m(d, &phi.transpose()),
                }
            }
            Section::Reflector(rho) => {
                check_dim(rho, p)?;
                let norm = norm2(rho);
                if norm >= 1.0 - crate::model::REFLECTOR_MARGIN {
                    return Err(Error::ReflectorTooStrong { norm });
                }
                let t = reflector_transmission(rho);
                let tinv = t.clone().try_inverse().ok_or(Error::SingularBlock {
                    condition: f64::INFINITY,
                    omega: None,
                })?;
                Prepared::Reflector {
                    rho: to_m(d, rho),
                    rho_c: to_m(d, &rho.map(|z| z.conj())),
                    t: to_m(d, &t),
                    tinv_c: to_m(d, &tinv.map(|z| z.conj())),
                }
            }
            Section::Transfer(b) => {
                if b.kind != BlockKind::Transfer {
                    return Err(Error::InvalidInput("section must be a transfer matrix".into()));
                }
                check_dim(&b.b11, p)?;
                Prepared::Transfer {
                    g11: to_m(d, &b.b11),
                    g12: to_m(d, &b.b12),
                    g21: to_m(d, &b.b21),
                    g22: to_m(d, &b.b22),
                }
            }
        };
        prepared.push(item);
    }

    let results: Vec<Result<(CMatrix, Option<CMatrix>)>> = omegas
        .par_iter()
        .map(|&omega| {
            let beta = modes.propagation(omega);
            let zinv: Vec<Vec<Complex64>> = dxs
                .iter()
                .map(|dx| beta.iter().map(|b| (I * b * *dx).exp()).collect())
                .collect();
            let id = M::<D>::identity_generic(d, d);
            let mut r = M::<D>::zeros_generic(d, d);
            let mut tau = if transmission { Some(id.clone()) } else { None };
            let singular = |condition: f64| Error::SingularBlock {
                condition,
                omega: Some(omega),
            };
            for s in prepared.iter().rev() {
                match s {
                    Prepared::Delay(k) => {
                        let z = &zinv[*k];
                        for i in 0..p {
                            for j in 0..p {
                                r[(i, j)] *= z[i] * z[j];
                            }
                        }
                        if let Some(tau) = tau.as_mut() {
                            for j in 0..p {
                                for i in 0..p {
                                    tau[(i, j)] *= z[j];
                                }
                            }
                        }
                    }
                    Prepared::Phi { phi, phi_t } => {
                        r = phi_t * &r * phi;
                        if let Some(tau) = tau.as_mut() {
                            *tau = &*tau * phi;
                        }
                    }
                    Prepared::Reflector { rho, rho_c, t, tinv_c } => {
                        let q = t * &r * tinv_c;
                        let a = &id + &q * rho_c;
                        let b = q + rho;
                        r = a.lu().solve(&b).ok_or_else(|| singular(f64::INFINITY))?;
                        if let Some(tau) = tau.as_mut() {
                            *tau = &*tau * tinv_c * (&id - rho_c * &r);
                        }
                    }
                    Prepared::Transfer { g11, g12, g21, g22 } => {
                        let a = g22 - &r * g12;
                        let b = &r * g11 - g21;
                        r = a.lu().solve(&b).ok_or_else(|| singular(f64::INFINITY))?;
                        if let Some(tau) = tau.as_mut() {
                            *tau = &*tau * (g11 + g12 * &r);
                        }
                    }
                }
            }
            Ok((to_dyn(&r), tau.map(|t| to_dyn(&t))))
        })
        .collect();

    let mut r = Vec::with_capacity(omegas.len());
    let mut s21 = if transmission {
        Some(Vec::with_capacity(omegas.len()))
    } else {
        None
    };
    for item in results {
        let (ri, ti) = item?;
        r.push(ri);
        if let (Some(v), Some(t)) = (s21.as_mut(), ti) {
            v.push(t);
        }
    }
    Ok(Sweep { r, s21 })
}

fn check_dim(m: &CMatrix, p: usize) -> Result<()> {
    if m.shape() == (p, p) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: p,
            found: m.nrows(),
        })
    }
}

/// `R(ω) = S₁₁(ω)` of a layer sequence on the given grid.
pub fn simulate_reflection(layers: &[Layer], modes: &ModeSet, omegas: &[f64]) -> Result<SpectrumGrid> {
    check_grid(omegas)?;
    for (j, l) in layers.iter().enumerate() {
        if l.p() != modes.p() {
            return Err(Error::DimensionMismatch {
                expected: modes.p(),
                found: l.p(),
            }
            .at_layer(j));
        }
    }
    let sweep = sweep_sections(&layer_sections(layers), modes, omegas, false)?;
    SpectrumGrid::new(omegas.to_vec(), sweep.r, modes.clone())
}

/// Reflection together with the transmission `S₂₁` from the left port.
pub fn simulate_scattering(
    layers: &[Layer],
    modes: &ModeSet,
    omegas: &[f64],
) -> Result<(SpectrumGrid, Vec<CMatrix>)> {
    check_grid(omegas)?;
    let sweep = sweep_sections(&layer_sections(layers), modes, omegas, true)?;
    let s21 = sweep.s21.unwrap_or_default();
    Ok((SpectrumGrid::new(omegas.to_vec(), sweep.r, modes.clone())?, s21))
}

/// `‖S₁₁ᴴS₁₁ + S₂₁ᴴS₂₁ − I‖_F`, zero for a lossless structure.
pub fn energy_defect(r: &CMatrix, s21: &CMatrix) -> f64 {
    let p = r.nrows();
    frobenius(&(r.adjoint() * r + s21.adjoint() * s21 - CMatrix::identity(p, p)))
}

pub(crate) fn trapezoid_weights(spec: &SpectrumGrid, window: &WindowFn) -> Vec<f64> {
    let m = spec.len();
    let c = spec.center();
    let hw = spec.half_width();
    (0..m)
        .map(|k| {
            let u = if hw > 0.0 { (spec.omegas[k] - c) / hw } else { 0.0 };
            let end = if m > 1 && (k == 0 || k == m - 1) { 0.5 } else { 1.0 };
            end * window.weight(u)
        })
        .collect()
}

/// Windowed zeroth weight `h⁰ = Σ W R / Σ W` with trapezoid end weights.
pub fn zeroth_impulse_weight(spec: &SpectrumGrid, window: &WindowFn) -> Result<CMatrix> {
    let w = trapezoid_weights(spec, window);
    let total: f64 = w.iter().sum();
    if !(total > 1e-300) {
        return Err(Error::DegenerateWindow);
    }
    let p = spec.p();
    let mut acc = CMatrix::zeros(p, p);
    for (wk, r) in w.iter().zip(&spec.r) {
        if *wk != 0.0 {
            acc += r.scale(*wk);
        }
    }
    Ok(acc.unscale(total))
}

/// `κ` at the structure entrance from the leading-edge value `h(0⁺)`:
/// `κ_pq = [−i h_pq (n_p + n_q)/c]*`.
pub fn born_leading_edge(h0: &CMatrix, modes: &ModeSet) -> CMatrix {
    let n = &modes.indices;
    CMatrix::from_fn(h0.nrows(), h0.ncols(), |p, q| {
        (-I * h0[(p, q)] * (n[p] + n[q]) / modes.c_ref).conj()
    })
}

/// `h(0⁺)` of a quasi-continuous structure: the windowed inverse transform at
/// `t = 0` picks up half of the step at the leading edge, so it is doubled.
pub fn leading_edge_value(spec: &SpectrumGrid, window: &WindowFn) -> CMatrix {
    impulse_response(spec, &[0.0], window)
        .pop()
        .expect("one time sample")
        .scale(2.0)
}

/// Windowed inverse Fourier transform `h(t) = (1/2π) ∫ W(ω) R(ω) e^{−iωt} dω`.
pub fn impulse_response(spec: &SpectrumGrid, times: &[f64], window: &WindowFn) -> Vec<CMatrix> {
    let w = trapezoid_weights(spec, window);
    let dw = spec.spacing();
    let p = spec.p();
    times
        .par_iter()
        .map(|&t| {
            let mut acc = CMatrix::zeros(p, p);
            for ((wk, r), omega) in w.iter().zip(&spec.r).zip(&spec.omegas) {
                if *wk == 0.0 {
                    continue;
                }
                let ph = Complex64::from_polar(*wk * dw / (2.0 * std::f64::consts::PI), -omega * t);
                acc += r * ph;
            }
            acc
        })
        .collect()
}

/// Diagonal delays `Z⁻¹(ω) = exp(iβΔx)` at each grid point.
pub fn delay_grid(modes: &ModeSet, omegas: &[f64], dx: f64) -> Vec<DVector<Complex64>> {
    omegas
        .iter()
        .map(|&w| DVector::from_vec(modes.delay_inv(w, dx)))
        .collect()
}
