//! Layer stripping.
//!
//! Each step reads the zeroth impulse weight `h⁰` of the current spectrum,
//! factors it as `Φᵀ ρ Φ` under the chosen a-priori structure, and removes
//! the identified layer with
//! `R_{j+1} = Z K* (R − Υ)(I − Υ* R)⁻¹ K⁻¹ Z`, `K = t⁻¹* Φ`.

use nalgebra::{Dim, Dyn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{to_dyn, to_m, trapezoid_weights, SpectrumGrid, WindowFn, M};
use crate::matfact::{
    check_finite, check_square, conj, condition, frobenius, identity, norm2, orth_sym_factor_principal,
    singular_values, svd, symmetrize, symmetry_defect, takagi, to_complex, CMatrix, RMatrix, TAU_SYM,
};
use crate::model::{Layer, ModeSet, MAX_CONDITION, REFLECTOR_MARGIN, TAU_PHYS};

pub use crate::forward::{born_leading_edge, leading_edge_value};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A-priori structure that makes `h⁰ = Φᵀ ρ Φ` identifiable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Situation {
    /// No codirectional coupling: `Φ = I`, `ρ = h⁰`.
    A,
    /// Diagonal nonnegative `ρ`, unitary `Φ`.
    B,
    /// Real `ρ` of fixed sign, symmetric unitary `Φ`.
    #[default]
    C,
}

impl Situation {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Situation::A),
            "b" => Ok(Situation::B),
            "c" => Ok(Situation::C),
            other => Err(Error::Config(format!("unknown situation '{other}' (expected a, b or c)"))),
        }
    }
}

/// Sign of the real reflector in situation C. Gratings have negative
/// semidefinite `ρ`, so `h⁰ = (iΦ)ᵀ(−ρ)(iΦ)` and the Takagi factor is `iPΦ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReflectorSign {
    Positive,
    #[default]
    Negative,
}

impl ReflectorSign {
    fn phase(self) -> Complex64 {
        match self {
            ReflectorSign::Positive => Complex64::new(1.0, 0.0),
            ReflectorSign::Negative => I,
        }
    }

    fn sign(self) -> f64 {
        match self {
            ReflectorSign::Positive => 1.0,
            ReflectorSign::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Continuity {
    pub enabled: bool,
    /// Singular values at or below this fraction of the largest are zero.
    pub sv_zero_threshold: f64,
    /// Absolute floor for the zero test.
    pub sv_zero_floor: f64,
    /// Relative gap at or below which neighbouring singular values are equal.
    pub sv_degeneracy_threshold: f64,
}

impl Default for Continuity {
    fn default() -> Self {
        Self {
            enabled: true,
            sv_zero_threshold: 1e-6,
            sv_zero_floor: 0.0,
            sv_degeneracy_threshold: 1e-4,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseConfig {
    pub n_layers: usize,
    pub dx: f64,
    #[serde(default)]
    pub situation: Situation,
    #[serde(default)]
    pub reflector_sign: ReflectorSign,
    #[serde(default)]
    pub window: WindowFn,
    /// Multiply `h⁰_pq` by `(n_p + n_q)/(2n₀)` (continuous-structure limit).
    #[serde(default = "default_true")]
    pub index_correction: bool,
    /// Nominal index for the correction; the mode set's value when absent.
    #[serde(default)]
    pub n0: Option<f64>,
    #[serde(default)]
    pub continuity: Continuity,
}

impl InverseConfig {
    /// Discrete-structure defaults: no index correction.
    pub fn new(n_layers: usize, dx: f64, situation: Situation) -> Self {
        Self {
            n_layers,
            dx,
            situation,
            reflector_sign: ReflectorSign::default(),
            window: WindowFn::default(),
            index_correction: false,
            n0: None,
            continuity: Continuity::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::Config("n_layers must be at least 1".into()));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::Config("dx must be positive".into()));
        }
        let c = &self.continuity;
        if !(c.sv_zero_threshold > 0.0) || !(c.sv_degeneracy_threshold > 0.0) {
            return Err(Error::Config("continuity thresholds must be positive".into()));
        }
        if !(c.sv_zero_floor >= 0.0) {
            return Err(Error::Config("sv_zero_floor must be nonnegative".into()));
        }
        if let Some(n0) = self.n0 {
            if !(n0 > 0.0) {
                return Err(Error::Config("n0 must be positive".into()));
            }
        }
        Ok(())
    }

    /// `(n_p + n_q)/(2n₀)`, or all ones when the correction is off.
    pub fn correction_matrix(&self, modes: &ModeSet) -> RMatrix {
        let p = modes.p();
        if !self.index_correction {
            return RMatrix::from_element(p, p, 1.0);
        }
        let n0 = self.n0.unwrap_or_else(|| modes.nominal_index());
        let n = &modes.indices;
        RMatrix::from_fn(p, p, |a, b| (n[a] + n[b]) / (2.0 * n0))
    }
}

/// Ordered singular values and factor rows of the previous layer
/// (`Φ` in situation B, `PΦ` in situation C).
#[derive(Debug, Clone, PartialEq)]
pub struct PrevLayer {
    pub sigma: Vec<f64>,
    pub rows: CMatrix,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub index: usize,
    pub h0_norm: f64,
    /// Singular values of `Υ_j` in the order assigned to `ρ_j`.
    pub singular_values: Vec<f64>,
    pub zero: Vec<bool>,
    pub degenerate: Vec<bool>,
    /// A zero or degenerate singular value left `Φ_j` only partly determined.
    pub ambiguity: bool,
    pub sign_flips: usize,
    /// Takagi index placed at each position.
    pub permutation: Vec<usize>,
    /// Largest condition estimate of `I − Υ* R` over the grid.
    pub peel_condition: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StripDiagnostics {
    pub layers: Vec<LayerDiagnostics>,
    /// `max_ω ‖R(ω)‖_F` of the input.
    pub input_norm: f64,
    /// `max_ω ‖R_N(ω)‖_F` relative to the input.
    pub residual_max: f64,
    /// Window-weighted RMS of `‖R_N‖_F` relative to the input.
    pub residual_rms: f64,
    pub bandwidth_ratio: f64,
    pub warnings: Vec<String>,
}

impl StripDiagnostics {
    pub fn flagged_layers(&self) -> Vec<usize> {
        self.layers.iter().filter(|l| l.ambiguity).map(|l| l.index).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Identified {
    pub rho: CMatrix,
    pub phi: CMatrix,
    pub state: PrevLayer,
    pub diag: LayerDiagnostics,
}

// ---------------------------------------------------------------------------
// assignment

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials). Returns the column assigned to each row.
pub fn min_cost_assignment(cost: &RMatrix) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    out
}

fn polar_real(m: &RMatrix) -> RMatrix {
    polar_complex(&m.map(Complex64::from)).map(|z| z.re)
}

fn polar_complex(m: &CMatrix) -> CMatrix {
    let f = svd(m);
    f.u * f.v_t
}

fn select_rows(m: &CMatrix, idx: &[usize]) -> CMatrix {
    CMatrix::from_fn(idx.len(), m.ncols(), |a, k| m[(idx[a], k)])
}

fn put_rows(m: &mut CMatrix, idx: &[usize], rows: &CMatrix) {
    for (a, &i) in idx.iter().enumerate() {
        for k in 0..m.ncols() {
            m[(i, k)] = rows[(a, k)];
        }
    }
}

/// Clusters of positions whose nonzero singular values agree within `rel`.
fn degenerate_clusters(sigma: &[f64], zero: &[bool], rel: f64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..sigma.len()).filter(|&k| !zero[k]).collect();
    idx.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for k in idx {
        if let Some(last) = clusters.last_mut() {
            let prev = sigma[*last.last().expect("non-empty cluster")];
            if prev - sigma[k] <= rel * prev {
                last.push(k);
                continue;
            }
        }
        clusters.push(vec![k]);
    }
    clusters
}

// ---------------------------------------------------------------------------
// layer identification

/// Factor `h⁰ = Φᵀ ρ Φ` for the configured situation, using the previous
/// layer to fix the order of singular values and the free rotations.
pub fn identify_layer(h0: &CMatrix, cfg: &InverseConfig, prev: Option<&PrevLayer>) -> Result<Identified> {
    let p = check_square(h0)?;
    check_finite(h0)?;
    let norm = norm2(h0);
    let defect = symmetry_defect(h0);
    if defect > TAU_SYM * norm.max(1.0) {
        return Err(Error::AsymmetricInput { defect });
    }
    if norm >= 1.0 - REFLECTOR_MARGIN {
        return Err(Error::TooStrong { norm });
    }
    let h = symmetrize(h0);

    if cfg.situation == Situation::A {
        let sv = singular_values(&h);
        return Ok(Identified {
            rho: h,
            phi: identity(p),
            state: PrevLayer {
                sigma: sv.iter().cloned().collect(),
                rows: identity(p),
            },
            diag: LayerDiagnostics {
                h0_norm: norm,
                singular_values: sv.iter().cloned().collect(),
                zero: vec![false; p],
                degenerate: vec![false; p],
                permutation: (0..p).collect(),
                ..Default::default()
            },
        });
    }

    let tk = takagi(&h)?;
    let phase = if cfg.situation == Situation::C {
        cfg.reflector_sign.phase()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let raw_rows = tk.u.map(|z| z / phase);
    let raw_sigma: Vec<f64> = tk.sigma.iter().cloned().collect();
    let smax = raw_sigma.first().cloned().unwrap_or(0.0);
    let cont = &cfg.continuity;
    let zero_level = (cont.sv_zero_threshold * smax).max(cont.sv_zero_floor);

    let reference = match prev {
        Some(pl) if pl.rows.shape() == (p, p) => pl.rows.clone(),
        _ => identity(p),
    };

    // position b receives Takagi index perm[b]
    let perm: Vec<usize> = if cont.enabled {
        let cost = match prev {
            Some(pl) if pl.sigma.len() == p => {
                let tie = cont.sv_zero_threshold * smax;
                RMatrix::from_fn(p, p, |a, b| {
                    let overlap = (raw_rows.row(a) * reference.row(b).adjoint())[(0, 0)].norm();
                    (raw_sigma[a] - pl.sigma[b]).abs() + tie * (1.0 - overlap)
                })
            }
            _ => RMatrix::from_fn(p, p, |a, b| -raw_rows[(a, b)].norm()),
        };
        let to_col = min_cost_assignment(&cost);
        let mut perm = vec![0; p];
        for (a, &b) in to_col.iter().enumerate() {
            perm[b] = a;
        }
        perm
    } else {
        (0..p).collect()
    };

    let sigma: Vec<f64> = perm.iter().map(|&a| raw_sigma[a]).collect();
    let mut rows = select_rows(&raw_rows, &perm);
    let zero: Vec<bool> = sigma.iter().map(|&s| s <= zero_level).collect();
    let clusters = degenerate_clusters(&sigma, &zero, cont.sv_degeneracy_threshold);
    let mut degenerate = vec![false; p];
    for c in clusters.iter().filter(|c| c.len() > 1) {
        for &k in c {
            degenerate[k] = true;
        }
    }
    let zero_idx: Vec<usize> = (0..p).filter(|&k| zero[k]).collect();
    let ambiguity = !zero_idx.is_empty() || degenerate.iter().any(|&d| d);

    let mut sign_flips = 0;
    if cont.enabled {
        for c in &clusters {
            if c.len() == 1 {
                let k = c[0];
                let inner = (reference.row(k).conjugate() * rows.row(k).transpose())[(0, 0)];
                if inner.re < 0.0 {
                    for col in 0..p {
                        rows[(k, col)] = -rows[(k, col)];
                    }
                    sign_flips += 1;
                }
            } else {
                let a = select_rows(&rows, c);
                let b = select_rows(&reference, c);
                let o = to_complex(&polar_real(&(&b * a.adjoint()).map(|z| z.re)));
                put_rows(&mut rows, c, &(o * a));
            }
        }
        if !zero_idx.is_empty() {
            let a = select_rows(&rows, &zero_idx);
            let b = select_rows(&reference, &zero_idx);
            let j = polar_complex(&(&b * a.adjoint()));
            put_rows(&mut rows, &zero_idx, &(j * a));
        }
    }

    let diag = LayerDiagnostics {
        h0_norm: norm,
        singular_values: sigma.clone(),
        zero,
        degenerate,
        ambiguity,
        sign_flips,
        permutation: perm,
        ..Default::default()
    };
    let sdiag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        p,
        sigma.iter().map(|&s| Complex64::from(s)),
    ));
    let (rho, phi) = match cfg.situation {
        Situation::B => (sdiag, rows.clone()),
        _ => {
            let f = orth_sym_factor_principal(&rows)?;
            let pc = to_complex(&f.p);
            let rho = (pc.transpose() * sdiag * pc).scale(cfg.reflector_sign.sign());
            (symmetrize(&rho.map(|z| Complex64::from(z.re))), symmetrize(&f.phi))
        }
    };
    Ok(Identified {
        rho,
        phi,
        state: PrevLayer { sigma, rows },
        diag,
    })
}

// ---------------------------------------------------------------------------
// peeling

macro_rules! with_dim {
    ($p:expr, $f:ident ( $($arg:expr),* )) => {
        match $p {
            1 => $f(nalgebra::Const::<1>, $($arg),*),
            2 => $f(nalgebra::Const::<2>, $($arg),*),
            3 => $f(nalgebra::Const::<3>, $($arg),*),
            4 => $f(nalgebra::Const::<4>, $($arg),*),
            5 => $f(nalgebra::Const::<5>, $($arg),*),
            6 => $f(nalgebra::Const::<6>, $($arg),*),
            8 => $f(nalgebra::Const::<8>, $($arg),*),
            p => $f(Dyn(p), $($arg),*),
        }
    };
}

struct PeelOp<D: Dim>
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D>,
{
    ups: M<D>,
    ups_c: M<D>,
    kc: M<D>,
    kinv: M<D>,
    ups_norm: f64,
}

impl<D: Dim> PeelOp<D>
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D>,
{
    fn new(d: D, layer: &Layer) -> Result<Self> {
        let ups = layer.upsilon();
        let t = layer.transmission();
        let tinv = t.clone().try_inverse().ok_or(Error::SingularBlock {
            condition: f64::INFINITY,
            omega: None,
        })?;
        let kc = &tinv * conj(&layer.phi);
        let kinv = layer.phi.adjoint() * conj(&t);
        Ok(Self {
            ups_norm: norm2(&ups),
            ups_c: to_m(d, &conj(&ups)),
            ups: to_m(d, &ups),
            kc: to_m(d, &kc),
            kinv: to_m(d, &kinv),
        })
    }
}

/// `exp(−iβΔx)` per grid point.
fn forward_delays(modes: &ModeSet, omegas: &[f64], dx: f64) -> Vec<Vec<Complex64>> {
    omegas
        .iter()
        .map(|&w| modes.delay_inv(w, dx).into_iter().map(|z| z.inv()).collect())
        .collect()
}

fn peel_generic<D: Dim + nalgebra::DimMin<D, Output = D>>(
    d: D,
    r: &mut [M<D>],
    op: &PeelOp<D>,
    z: &[Vec<Complex64>],
    omegas: &[f64],
) -> Result<f64>
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D> + nalgebra::allocator::Allocator<D>,
    <nalgebra::DefaultAllocator as nalgebra::allocator::Allocator<D, D>>::Buffer<Complex64>: Sync + Send,
{
    let p = d.value();
    let results: Vec<Result<f64>> = r
        .par_iter_mut()
        .zip(z.par_iter())
        .zip(omegas.par_iter())
        .map(|((rk, zk), &omega)| {
            let id = M::<D>::identity_generic(d, d);
            let a = id - &op.ups_c * &*rk;
            let bound = op.ups_norm * rk.norm();
            let mut cond = if bound < 1.0 {
                (1.0 + bound) / (1.0 - bound)
            } else {
                f64::INFINITY
            };
            if cond > MAX_CONDITION {
                cond = condition(&to_dyn(&a));
                if !(cond <= MAX_CONDITION) {
                    return Err(Error::NearSingularPeel { condition: cond, omega });
                }
            }
            let rhs = (&*rk - &op.ups).transpose();
            let y = a
                .transpose()
                .lu()
                .solve(&rhs)
                .ok_or(Error::NearSingularPeel {
                    condition: f64::INFINITY,
                    omega,
                })?;
            let mut next = &op.kc * y.transpose() * &op.kinv;
            for i in 0..p {
                for j in 0..p {
                    next[(i, j)] *= zk[i] * zk[j];
                }
            }
            *rk = next;
            Ok(cond)
        })
        .collect();
    let mut worst: f64 = 1.0;
    for c in results {
        worst = worst.max(c?);
    }
    Ok(worst)
}

fn schur_step_generic<D: Dim + nalgebra::DimMin<D, Output = D>>(
    d: D,
    spec: &SpectrumGrid,
    layer: &Layer,
) -> Result<SpectrumGrid>
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D> + nalgebra::allocator::Allocator<D>,
    <nalgebra::DefaultAllocator as nalgebra::allocator::Allocator<D, D>>::Buffer<Complex64>: Sync + Send,
{
    let op = PeelOp::new(d, layer)?;
    let z = forward_delays(&spec.modes, &spec.omegas, layer.dx);
    let mut r: Vec<M<D>> = spec.r.iter().map(|m| to_m(d, m)).collect();
    peel_generic(d, &mut r, &op, &z, &spec.omegas)?;
    let mut out = spec.clone();
    out.r = r.iter().map(to_dyn).collect();
    Ok(out)
}

/// Remove `layer` from the front of the structure whose reflection is `spec`.
pub fn schur_step(spec: &SpectrumGrid, layer: &Layer) -> Result<SpectrumGrid> {
    if layer.p() != spec.p() {
        return Err(Error::DimensionMismatch {
            expected: spec.p(),
            found: layer.p(),
        });
    }
    let norm = norm2(&layer.upsilon());
    if norm >= 1.0 {
        return Err(Error::ReflectorTooStrong { norm });
    }
    with_dim!(spec.p(), schur_step_generic(spec, layer))
}

/// Reject spectra that are not reciprocal or not contractive.
pub fn check_ingestion(spec: &SpectrumGrid) -> Result<()> {
    spec.validate()?;
    spec.check_reciprocity()?;
    for (w, r) in spec.omegas.iter().zip(&spec.r) {
        let n = norm2(r);
        if n > 1.0 + TAU_PHYS {
            return Err(Error::Ingestion(format!(
                "contraction violation: |R| = {n:.9} at omega = {w:.6e}"
            )));
        }
    }
    Ok(())
}

fn strip_warnings(spec: &SpectrumGrid, cfg: &InverseConfig) -> Vec<String> {
    let mut out = Vec::new();
    let ratio = spec.bandwidth_ratio(cfg.dx);
    if ratio < 1.0 {
        out.push(format!(
            "grid half-width times the shortest layer delay is {ratio:.3}; layers are not resolved"
        ));
    }
    let dw = spec.spacing();
    if dw > 0.0 {
        let dt_max = spec.modes.delays(cfg.dx).into_iter().fold(0.0, f64::max);
        let period = 2.0 * std::f64::consts::PI / dw;
        if period < 2.0 * cfg.n_layers as f64 * dt_max {
            out.push(format!(
                "time-domain period {period:.3e} s is shorter than the structure round trip"
            ));
        }
    }
    out
}

fn strip_generic<D: Dim + nalgebra::DimMin<D, Output = D>>(
    d: D,
    spec: &SpectrumGrid,
    cfg: &InverseConfig,
) -> Result<(Vec<Layer>, StripDiagnostics)>
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D> + nalgebra::allocator::Allocator<D>,
    <nalgebra::DefaultAllocator as nalgebra::allocator::Allocator<D, D>>::Buffer<Complex64>: Sync + Send,
{
    let p = spec.p();
    let weights = trapezoid_weights(spec, &cfg.window);
    let total: f64 = weights.iter().sum();
    if !(total > 1e-300) {
        return Err(Error::DegenerateWindow);
    }
    let correction = cfg.correction_matrix(&spec.modes);
    let z = forward_delays(&spec.modes, &spec.omegas, cfg.dx);
    let mut r: Vec<M<D>> = spec.r.iter().map(|m| to_m(d, m)).collect();

    let weighted_energy = |r: &[M<D>]| -> f64 {
        let s: f64 = weights.iter().zip(r).map(|(w, m)| w * m.norm_squared()).sum();
        (s / total).sqrt()
    };
    let input_norm = r.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let input_rms = weighted_energy(&r);

    let mut layers = Vec::with_capacity(cfg.n_layers);
    let mut diags = Vec::with_capacity(cfg.n_layers);
    let mut prev: Option<PrevLayer> = None;
    for j in 0..cfg.n_layers {
        let mut acc = M::<D>::zeros_generic(d, d);
        for (w, m) in weights.iter().zip(&r) {
            if *w != 0.0 {
                acc += m * Complex64::from(*w);
            }
        }
        let mut h0 = to_dyn(&acc).unscale(total);
        for a in 0..p {
            for b in 0..p {
                h0[(a, b)] *= correction[(a, b)];
            }
        }
        let id = identify_layer(&h0, cfg, prev.as_ref()).map_err(|e| e.at_layer(j))?;
        let layer = Layer::new(id.phi, id.rho, cfg.dx).map_err(|e| e.at_layer(j))?;
        let op = PeelOp::new(d, &layer).map_err(|e| e.at_layer(j))?;
        let cond = peel_generic(d, &mut r, &op, &z, &spec.omegas).map_err(|e| e.at_layer(j))?;
        let mut diag = id.diag;
        diag.index = j;
        diag.peel_condition = cond;
        diags.push(diag);
        layers.push(layer);
        prev = Some(id.state);
    }

    let res_max = r.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let res_rms = weighted_energy(&r);
    let rel = |x: f64, base: f64| if base > 0.0 { x / base } else { x };
    let diagnostics = StripDiagnostics {
        layers: diags,
        input_norm,
        residual_max: rel(res_max, input_norm),
        residual_rms: rel(res_rms, input_rms),
        bandwidth_ratio: spec.bandwidth_ratio(cfg.dx),
        warnings: strip_warnings(spec, cfg),
    };
    Ok((layers, diagnostics))
}

/// Strip `cfg.n_layers` layers of thickness `cfg.dx` from a reflection
/// spectrum. Errors carry the index of the layer being identified.
pub fn layer_strip(spec: &SpectrumGrid, cfg: &InverseConfig) -> Result<(Vec<Layer>, StripDiagnostics)> {
    cfg.validate()?;
    check_ingestion(spec)?;
    with_dim!(spec.p(), strip_generic(spec, cfg))
}

/// Largest elementwise deviation between two layer sequences, for `ρ` and `Φ`.
pub fn layer_errors(found: &[Layer], truth: &[Layer]) -> (f64, f64) {
    let mut er: f64 = 0.0;
    let mut ep: f64 = 0.0;
    for (a, b) in found.iter().zip(truth) {
        er = er.max(crate::matfact::max_abs(&(&a.rho - &b.rho)));
        ep = ep.max(crate::matfact::max_abs(&(&a.phi - &b.phi)));
    }
    (er, ep)
}

/// Relative Frobenius size of the residual `‖a − b‖/‖b‖`.
pub fn relative_defect(a: &CMatrix, b: &CMatrix) -> f64 {
    let base = frobenius(b);
    let d = frobenius(&(a - b));
    if base > 0.0 {
        d / base
    } else {
        d
    }
}
