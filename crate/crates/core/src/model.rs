//! Mode sets, layers and the 2P×2P transfer/scattering algebra.
//!
//! Field vectors are ordered `[u₁..u_P, v₁..v_P]` with `u` travelling in +x.
//! A transfer matrix maps the fields on the left of a component to the
//! fields on its right; a scattering matrix maps the incoming fields
//! `[u_left, v_right]` to the outgoing ones `[v_left, u_right]`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfact::{
    self, check_finite, conj, frobenius, identity, norm2, symmetry_defect, takagi_with,
    unitarity_defect, CMatrix, Tolerances,
};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reflectors must satisfy `‖ρ‖₂ < 1 − REFLECTOR_MARGIN`.
pub const REFLECTOR_MARGIN: f64 = 1e-6;
/// Conversions abort when the block to invert has a larger condition number.
pub const MAX_CONDITION: f64 = 1e12;
/// Tolerance for reciprocity and losslessness of scattering matrices.
pub const TAU_PHYS: f64 = 1e-9;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// The guided modes of a structure and the frequency reference.
///
/// With a grating period `Λ > 0` the propagation constants are the detunings
/// `δ_p = n_p (ω₀ + ω)/c − π/Λ` where `ω` is the offset from the design
/// frequency `ω₀ = πc/(n₀Λ)`. Without a period, `β_p = n_p ω / c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub indices: Vec<f64>,
    #[serde(default)]
    pub grating_period: f64,
    #[serde(default = "default_c")]
    pub c_ref: f64,
    /// Nominal index used for the design frequency and the index correction.
    #[serde(default)]
    pub n0: Option<f64>,
    /// Per-mode `Im β` in 1/m. Forward model only.
    #[serde(default)]
    pub loss: Vec<f64>,
}

fn default_c() -> f64 {
    SPEED_OF_LIGHT
}

impl ModeSet {
    pub fn new(indices: Vec<f64>) -> Result<Self> {
        let m = Self {
            indices,
            grating_period: 0.0,
            c_ref: SPEED_OF_LIGHT,
            n0: None,
            loss: vec![],
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_grating(mut self, period: f64, n0: f64) -> Result<Self> {
        self.grating_period = period;
        self.n0 = Some(n0);
        self.validate()?;
        Ok(self)
    }

    pub fn with_loss(mut self, loss: Vec<f64>) -> Result<Self> {
        self.loss = loss;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::InvalidInput("mode set needs at least one mode".into()));
        }
        if self.indices.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(Error::InvalidInput("effective indices must be positive".into()));
        }
        if !(self.grating_period >= 0.0 && self.grating_period.is_finite()) {
            return Err(Error::InvalidInput("grating period must be >= 0".into()));
        }
        if !(self.c_ref > 0.0) {
            return Err(Error::InvalidInput("reference velocity must be positive".into()));
        }
        if let Some(n0) = self.n0 {
            if !(n0 > 0.0) {
                return Err(Error::InvalidInput("nominal index must be positive".into()));
            }
        }
        if !self.loss.is_empty() {
            if self.loss.len() != self.indices.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.indices.len(),
                    found: self.loss.len(),
                });
            }
            if self.loss.iter().any(|&l| !(l >= 0.0)) {
                return Err(Error::InvalidInput("modal loss must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.indices.len()
    }

    /// Nominal index; defaults to the midpoint of the extreme indices.
    pub fn nominal_index(&self) -> f64 {
        self.n0.unwrap_or_else(|| {
            let max = self.indices.iter().cloned().fold(f64::MIN, f64::max);
            let min = self.indices.iter().cloned().fold(f64::MAX, f64::min);
            0.5 * (max + min)
        })
    }

    /// Physical angular frequency at zero grid offset.
    pub fn design_omega(&self) -> f64 {
        if self.grating_period > 0.0 {
            std::f64::consts::PI * self.c_ref / (self.nominal_index() * self.grating_period)
        } else {
            0.0
        }
    }

    /// Per-mode propagation constant (or detuning) at grid offset `omega`.
    pub fn propagation(&self, omega: f64) -> Vec<Complex64> {
        let w = self.design_omega() + omega;
        let kb = if self.grating_period > 0.0 {
            std::f64::consts::PI / self.grating_period
        } else {
            0.0
        };
        self.indices
            .iter()
            .enumerate()
            .map(|(p, &n)| {
                let loss = self.loss.get(p).copied().unwrap_or(0.0);
                Complex64::new(n * w / self.c_ref - kb, loss)
            })
            .collect()
    }

    /// `Z⁻¹ = exp(iβΔx)` as a diagonal.
    pub fn delay_inv(&self, omega: f64, dx: f64) -> Vec<Complex64> {
        self.propagation(omega)
            .into_iter()
            .map(|b| (I * b * dx).exp())
            .collect()
    }

    /// One-way delay of each mode through a layer of thickness `dx`.
    pub fn delays(&self, dx: f64) -> Vec<f64> {
        self.indices.iter().map(|&n| n * dx / self.c_ref).collect()
    }

    pub fn min_delay(&self, dx: f64) -> f64 {
        self.delays(dx).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn is_lossless(&self) -> bool {
        self.loss.iter().all(|&l| l == 0.0)
    }
}

/// One discrete layer: codirectional section `Φ`, reflector `ρ`, then a
/// propagation section of thickness `dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub phi: CMatrix,
    pub rho: CMatrix,
    pub dx: f64,
}

impl Layer {
    pub fn new(phi: CMatrix, rho: CMatrix, dx: f64) -> Result<Self> {
        let layer = Self { phi, rho, dx };
        layer.validate(&Tolerances::default())?;
        Ok(layer)
    }

    /// Layer without codirectional coupling.
    pub fn reflector(rho: CMatrix, dx: f64) -> Result<Self> {
        let p = rho.nrows();
        Self::new(identity(p), rho, dx)
    }

    pub fn p(&self) -> usize {
        self.rho.nrows()
    }

    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        let p = matfact::check_square(&self.rho)?;
        if self.phi.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.phi.nrows(),
            });
        }
        check_finite(&self.rho)?;
        check_finite(&self.phi)?;
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::InvalidInput("layer thickness must be positive".into()));
        }
        let u = unitarity_defect(&self.phi);
        if u > tol.fact {
            return Err(Error::NotUnitary { defect: u });
        }
        let s = symmetry_defect(&self.rho);
        if s > tol.sym {
            return Err(Error::AsymmetricInput { defect: s });
        }
        let norm = norm2(&self.rho);
        if norm >= 1.0 - REFLECTOR_MARGIN {
            return Err(Error::ReflectorTooStrong { norm });
        }
        Ok(())
    }

    /// `t = (I − ρρ*)^{1/2}`, Hermitian positive definite.
    pub fn transmission(&self) -> CMatrix {
        reflector_transmission(&self.rho)
    }

    /// `Υ = Φᵀ ρ Φ`, the reflection of the layer seen from the left.
    pub fn upsilon(&self) -> CMatrix {
        self.phi.transpose() * &self.rho * &self.phi
    }

    /// `K = t⁻¹* Φ`.
    pub fn k_matrix(&self) -> CMatrix {
        let tinv = self
            .transmission()
            .try_inverse()
            .expect("reflector below unit norm has invertible transmission");
        conj(&tinv) * &self.phi
    }
}

pub fn reflector_transmission(rho: &CMatrix) -> CMatrix {
    let p = rho.nrows();
    let h = identity(p) - rho * conj(rho);
    matfact::sqrt_psd(&h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Transfer,
    Scattering,
}

/// A 2P×2P matrix held as four P×P blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix2P {
    pub b11: CMatrix,
    pub b12: CMatrix,
    pub b21: CMatrix,
    pub b22: CMatrix,
    pub kind: BlockKind,
}

impl BlockMatrix2P {
    pub fn from_blocks(
        b11: CMatrix,
        b12: CMatrix,
        b21: CMatrix,
        b22: CMatrix,
        kind: BlockKind,
    ) -> Result<Self> {
        let p = b11.nrows();
        for b in [&b11, &b12, &b21, &b22] {
            if b.shape() != (p, p) {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: b.nrows().max(b.ncols()),
                });
            }
        }
        Ok(Self {
            b11,
            b12,
            b21,
            b22,
            kind,
        })
    }

    pub fn identity(p: usize, kind: BlockKind) -> Self {
        match kind {
            BlockKind::Transfer => Self {
                b11: identity(p),
                b12: CMatrix::zeros(p, p),
                b21: CMatrix::zeros(p, p),
                b22: identity(p),
                kind,
            },
            // perfect transmission, no reflection
            BlockKind::Scattering => Self {
                b11: CMatrix::zeros(p, p),
                b12: identity(p),
                b21: identity(p),
                b22: CMatrix::zeros(p, p),
                kind,
            },
        }
    }

    pub fn p(&self) -> usize {
        self.b11.nrows()
    }

    pub fn to_full(&self) -> CMatrix {
        let p = self.p();
        let mut m = CMatrix::zeros(2 * p, 2 * p);
        m.view_mut((0, 0), (p, p)).copy_from(&self.b11);
        m.view_mut((0, p), (p, p)).copy_from(&self.b12);
        m.view_mut((p, 0), (p, p)).copy_from(&self.b21);
        m.view_mut((p, p), (p, p)).copy_from(&self.b22);
        m
    }

    pub fn from_full(m: &CMatrix, kind: BlockKind) -> Result<Self> {
        let n = matfact::check_square(m)?;
        if n % 2 != 0 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                found: n,
            });
        }
        let p = n / 2;
        Ok(Self {
            b11: m.view((0, 0), (p, p)).into_owned(),
            b12: m.view((0, p), (p, p)).into_owned(),
            b21: m.view((p, 0), (p, p)).into_owned(),
            b22: m.view((p, p), (p, p)).into_owned(),
            kind,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            b11: self.b11.scale(s),
            b12: self.b12.scale(s),
            b21: self.b21.scale(s),
            b22: self.b22.scale(s),
            kind: self.kind,
        }
    }
}

fn expect_kind(m: &BlockMatrix2P, kind: BlockKind) -> Result<()> {
    if m.kind == kind {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "expected a {kind:?} matrix, got {:?}",
            m.kind
        )))
    }
}

/// Transfer matrix `T_Z T_ρ T_Φ` of a layer at grid offset `omega`.
pub fn layer_transfer(layer: &Layer, modes: &ModeSet, omega: f64) -> Result<BlockMatrix2P> {
    let p = layer.p();
    if modes.p() != p {
        return Err(Error::DimensionMismatch {
            expected: modes.p(),
            found: p,
        });
    }
    let norm = norm2(&layer.rho);
    if norm >= 1.0 - REFLECTOR_MARGIN {
        return Err(Error::ReflectorTooStrong { norm });
    }
    let zinv = DVector::from_vec(modes.delay_inv(omega, layer.dx));
    let z = zinv.map(|v| v.inv());
    let k = layer.k_matrix();
    let ups = layer.upsilon();
    let zinv_m = CMatrix::from_diagonal(&zinv);
    let z_m = CMatrix::from_diagonal(&z);
    let t11 = &zinv_m * &k;
    let t22 = &z_m * conj(&k);
    let t12 = -(&t11 * conj(&ups));
    let t21 = -(&t22 * &ups);
    BlockMatrix2P::from_blocks(t11, t12, t21, t22, BlockKind::Transfer)
}

/// Scattering matrix from a transfer matrix.
pub fn transfer_to_scattering(t: &BlockMatrix2P) -> Result<BlockMatrix2P> {
    expect_kind(t, BlockKind::Transfer)?;
    let condition = matfact::condition(&t.b22);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularBlock {
            condition,
            omega: None,
        });
    }
    let inv = t.b22.clone().try_inverse().ok_or(Error::SingularBlock {
        condition,
        omega: None,
    })?;
    let s11 = -(&inv * &t.b21);
    let s21 = &t.b11 - &t.b12 * &inv * &t.b21;
    let s22 = &t.b12 * &inv;
    BlockMatrix2P::from_blocks(s11, inv, s21, s22, BlockKind::Scattering)
}

/// Transfer matrix from a scattering matrix.
pub fn scattering_to_transfer(s: &BlockMatrix2P) -> Result<BlockMatrix2P> {
    expect_kind(s, BlockKind::Scattering)?;
    let condition = matfact::condition(&s.b12);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularBlock {
            condition,
            omega: None,
        });
    }
    let inv = s.b12.clone().try_inverse().ok_or(Error::SingularBlock {
        condition,
        omega: None,
    })?;
    let t11 = &s.b21 - &s.b22 * &inv * &s.b11;
    let t12 = &s.b22 * &inv;
    let t21 = -(&inv * &s.b11);
    BlockMatrix2P::from_blocks(t11, t12, t21, inv, BlockKind::Transfer)
}

/// Cascade `T_{N−1} ⋯ T₁ T₀` for transfers given in spatial order.
pub fn compose(transfers: &[BlockMatrix2P]) -> Result<BlockMatrix2P> {
    let first = transfers
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to compose".into()))?;
    let p = first.p();
    let mut acc = BlockMatrix2P::identity(p, BlockKind::Transfer).to_full();
    for t in transfers {
        expect_kind(t, BlockKind::Transfer)?;
        if t.p() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: t.p(),
            });
        }
        acc = t.to_full() * acc;
    }
    BlockMatrix2P::from_full(&acc, BlockKind::Transfer)
}

/// A reciprocal lossless component written as `Φ_l`, a diagonal reflector
/// `ρ ≥ 0` and `Φ_r`:
/// `S₁₁ = Φ_lᵀ ρ Φ_l`, `S₂₂ = −Φ_r ρ Φ_rᵀ`, `S₂₁ = Φ_r t Φ_l`, `t = √(I − ρ²)`.
#[derive(Debug, Clone)]
pub struct Sandwich {
    pub phi_l: CMatrix,
    pub rho: DVector<f64>,
    pub phi_r: CMatrix,
}

impl Sandwich {
    pub fn scattering(&self) -> BlockMatrix2P {
        let rho = CMatrix::from_diagonal(&self.rho.map(Complex64::from));
        let t = CMatrix::from_diagonal(&self.rho.map(|r| Complex64::from((1.0 - r * r).sqrt())));
        let s11 = self.phi_l.transpose() * &rho * &self.phi_l;
        let s22 = -(&self.phi_r * &rho * self.phi_r.transpose());
        let s21 = &self.phi_r * &t * &self.phi_l;
        let s12 = s21.transpose();
        BlockMatrix2P {
            b11: s11,
            b12: s12,
            b21: s21,
            b22: s22,
            kind: BlockKind::Scattering,
        }
    }
}

pub fn sandwich_decompose(s: &BlockMatrix2P) -> Result<Sandwich> {
    expect_kind(s, BlockKind::Scattering)?;
    let report = check_physical(s)?;
    if report.reciprocity_defect > TAU_PHYS {
        return Err(Error::NotReciprocal {
            defect: report.reciprocity_defect,
        });
    }
    if report.unitarity_defect > TAU_PHYS {
        return Err(Error::NotLossless {
            defect: report.unitarity_defect,
        });
    }
    let tol = Tolerances {
        sym: TAU_PHYS,
        ..Tolerances::default()
    };
    let tk = takagi_with(&s.b11, &tol)?;
    let rho = tk.sigma;
    let phi_l = tk.u;
    let tinv = CMatrix::from_diagonal(&rho.map(|r| Complex64::from(1.0 / (1.0 - r * r).sqrt())));
    if rho.iter().any(|&r| r >= 1.0 - REFLECTOR_MARGIN) {
        return Err(Error::SingularBlock {
            condition: f64::INFINITY,
            omega: None,
        });
    }
    let phi_r = &s.b21 * phi_l.adjoint() * tinv;
    Ok(Sandwich { phi_l, rho, phi_r })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalReport {
    pub reciprocity_defect: f64,
    pub unitarity_defect: f64,
    pub contraction_defect: f64,
}

/// Reciprocity `‖S − Sᵀ‖_F`, losslessness `‖SᴴS − I‖_F`, and
/// `max(0, ‖S₁₁‖₂ − 1)`.
pub fn check_physical(s: &BlockMatrix2P) -> Result<PhysicalReport> {
    expect_kind(s, BlockKind::Scattering)?;
    let full = s.to_full();
    let n = full.nrows();
    Ok(PhysicalReport {
        reciprocity_defect: frobenius(&(&full - full.transpose())),
        unitarity_defect: frobenius(&(full.adjoint() * &full - CMatrix::identity(n, n))),
        contraction_defect: (norm2(&s.b11) - 1.0).max(0.0),
    })
}

/// Scattering matrix of a single layer in closed form.
pub fn layer_scattering(layer: &Layer, modes: &ModeSet, omega: f64) -> BlockMatrix2P {
    let zinv = CMatrix::from_diagonal(&DVector::from_vec(modes.delay_inv(omega, layer.dx)));
    let t = layer.transmission();
    let tinv = t.clone().try_inverse().expect("invertible transmission");
    let s11 = layer.upsilon();
    let s12 = layer.phi.transpose() * &t * &zinv;
    let s21 = &zinv * conj(&t) * &layer.phi;
    let s22 = -(&zinv * conj(&tinv) * conj(&layer.rho) * &t * &zinv);
    BlockMatrix2P {
        b11: s11,
        b12: s12,
        b21: s21,
        b22: s22,
        kind: BlockKind::Scattering,
    }
}

/// `I·Δx`-scaled coupled-mode generator blocks for constant `κ`, `σ`:
/// `exp(i C_κ Δx)` and `exp(i C_σ Δx)` from the matrix exponential.
pub fn coupling_exponentials(
    kappa: &CMatrix,
    sigma: &CMatrix,
    dx: f64,
) -> Result<(BlockMatrix2P, BlockMatrix2P)> {
    let p = kappa.nrows();
    let zero = CMatrix::zeros(p, p);
    let ck = BlockMatrix2P {
        b11: zero.clone(),
        b12: kappa.clone(),
        b21: -conj(kappa),
        b22: zero.clone(),
        kind: BlockKind::Transfer,
    };
    let cs = BlockMatrix2P {
        b11: sigma.clone(),
        b12: zero.clone(),
        b21: zero,
        b22: -conj(sigma),
        kind: BlockKind::Transfer,
    };
    let ek = matfact::mat_exp(&(ck.to_full() * (I * dx)))?;
    let es = matfact::mat_exp(&(cs.to_full() * (I * dx)))?;
    Ok((
        BlockMatrix2P::from_full(&ek, BlockKind::Transfer)?,
        BlockMatrix2P::from_full(&es, BlockKind::Transfer)?,
    ))
}
