//! Dense complex linear algebra at mode dimension.
//!
//! The two constructive factorizations used by the layer identification
//! live here: the Takagi factorization `Υ = Uᵀ Σ U` of a complex symmetric
//! matrix, and the splitting `U = P Φ` of a unitary matrix into a real
//! special orthogonal factor and a symmetric unitary factor. Both reduce to
//! an eigendecomposition of a symmetric unitary matrix `W = P₁ Λ P₁ᵀ` with
//! real orthogonal `P₁`, which is computed through a real Cayley transform.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

/// Default factorization tolerance (unitarity, reconstruction).
pub const TAU_FACT: f64 = 1e-10;
/// Default symmetry tolerance for inputs that should be complex symmetric.
pub const TAU_SYM: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub fact: f64,
    pub sym: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fact: TAU_FACT,
            sym: TAU_SYM,
        }
    }
}

/// `Υ = uᵀ · diag(sigma) · u`, singular values in descending order.
#[derive(Debug, Clone)]
pub struct TakagiResult {
    pub sigma: DVector<f64>,
    pub u: CMatrix,
}

impl TakagiResult {
    pub fn reconstruct(&self) -> CMatrix {
        let s = CMatrix::from_diagonal(&self.sigma.map(Complex64::from));
        self.u.transpose() * s * &self.u
    }
}

/// `u = p · phi` with `p` real orthogonal and `phi` symmetric unitary.
#[derive(Debug, Clone)]
pub struct OrthSymResult {
    pub p: RMatrix,
    pub phi: CMatrix,
}

/// Which square root is taken of each eigenvalue of a symmetric unitary matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqrtBranch {
    /// Eigenphases halved into (−π/2, π/2].
    Principal,
    /// Branch cut placed in the widest gap of the spectrum, so that clustered
    /// eigenvalues always receive clustered roots.
    WidestGap,
}

// ---------------------------------------------------------------------------
// small helpers shared across the crate

pub fn identity(p: usize) -> CMatrix {
    CMatrix::identity(p, p)
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(Complex64::from)
}

pub fn conj(m: &CMatrix) -> CMatrix {
    m.map(|z| z.conj())
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).iter().cloned().fold(0.0, f64::max)
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn check_finite(m: &CMatrix) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() == m.ncols() {
        Ok(m.nrows())
    } else {
        Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        })
    }
}

/// `‖M − Mᵀ‖_F`.
pub fn symmetry_defect(m: &CMatrix) -> f64 {
    frobenius(&(m - m.transpose()))
}

/// `‖Mᴴ M − I‖_F`.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let p = m.nrows();
    frobenius(&(m.adjoint() * m - identity(p)))
}

pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.transpose()).scale(0.5)
}

/// Eigendecomposition of a Hermitian matrix, `h = q · diag(values) · qᴴ`.
pub fn hermitian_eigen(h: &CMatrix) -> (DVector<f64>, CMatrix) {
    let herm = (h + h.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(herm);
    (eig.eigenvalues, eig.eigenvectors)
}

/// Applies a real scalar function to a Hermitian matrix through its spectrum.
pub fn hermitian_map(h: &CMatrix, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let (vals, q) = hermitian_eigen(h);
    let d = CMatrix::from_diagonal(&vals.map(f));
    &q * d * q.adjoint()
}

/// Positive square root of a Hermitian positive semidefinite matrix.
pub fn sqrt_psd(h: &CMatrix) -> CMatrix {
    hermitian_map(h, |x| Complex64::from(x.max(0.0).sqrt()))
}

/// Inverse of a square matrix, `None` when numerically singular.
pub fn inverse(m: &CMatrix) -> Option<CMatrix> {
    m.clone().try_inverse()
}

/// 2-norm condition number.
pub fn condition(m: &CMatrix) -> f64 {
    let sv = singular_values(m);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

// ---------------------------------------------------------------------------
// singular value decomposition

/// `m = u · diag(sigma) · v_t` with `sigma` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub sigma: DVector<f64>,
    pub v_t: CMatrix,
}

/// One-sided Jacobi SVD of a square matrix. Small singular values keep
/// their relative accuracy and exact rank deficiency is handled, with the
/// left singular vectors of zero singular values completed to a unitary
/// basis.
pub fn svd(m: &CMatrix) -> Svd {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "svd expects a square matrix");
    let mut a = m.clone();
    let mut v = identity(n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha: f64 = a.column(i).iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = a.column(j).iter().map(|z| z.norm_sqr()).sum();
                let gamma: Complex64 = a.column(i).iter().zip(a.column(j).iter()).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // phase-align column j, then a real rotation zeroes the inner product
                let ph = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for k in 0..n {
                        let x = mat[(k, i)];
                        let y = mat[(k, j)] * ph.conj();
                        mat[(k, i)] = x * c - y * s;
                        mat[(k, j)] = x * s + y * c;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|k| a.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma = DVector::from_fn(n, |k, _| norms[order[k]]);
    let scale = sigma.iter().cloned().fold(0.0, f64::max);
    let mut u = CMatrix::zeros(n, n);
    let mut filled = 0;
    for (k, &src) in order.iter().enumerate() {
        if sigma[k] > scale * f64::EPSILON * n as f64 && sigma[k] > 0.0 {
            u.set_column(k, &a.column(src).unscale(sigma[k]));
            filled += 1;
        } else {
            break;
        }
    }
    // complete with Gram-Schmidt on the standard basis (twice for stability)
    let mut e = 0;
    while filled < n && e < n {
        let mut cand = DVector::from_fn(n, |r, _| if r == e { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        for _ in 0..2 {
            for k in 0..filled {
                let col = u.column(k).into_owned();
                let proj = col.dotc(&cand);
                cand -= col * proj;
            }
        }
        let nrm = cand.norm();
        if nrm > 0.5 {
            u.set_column(filled, &cand.unscale(nrm));
            filled += 1;
        }
        e += 1;
    }
    let mut vp = CMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        vp.set_column(k, &v.column(src));
    }
    Svd {
        u,
        sigma,
        v_t: vp.adjoint(),
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> DVector<f64> {
    svd(m).sigma
}

// ---------------------------------------------------------------------------
// matrix exponential

/// Matrix exponential (Padé scaling-and-squaring).
pub fn mat_exp(a: &CMatrix) -> Result<CMatrix> {
    check_square(a)?;
    check_finite(a)?;
    if a.is_empty() {
        return Ok(a.clone());
    }
    let e = a.exp();
    check_finite(&e)?;
    Ok(e)
}

// ---------------------------------------------------------------------------
// symmetric unitary matrices

/// Eigenphases of a unitary matrix (unordered, in (−π, π]).
fn unitary_eigenphases(w: &CMatrix) -> Vec<f64> {
    let schur = Schur::new(w.clone());
    let (_, t) = schur.unpack();
    (0..t.nrows()).map(|k| t[(k, k)].arg()).collect()
}

/// Midpoint of the widest gap between consecutive eigenphases on the circle.
fn widest_gap_center(phases: &[f64]) -> f64 {
    use std::f64::consts::PI;
    if phases.is_empty() {
        return PI;
    }
    let mut sorted: Vec<f64> = phases.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (0.0, PI);
    for k in 0..sorted.len() {
        let a = sorted[k];
        let b = if k + 1 < sorted.len() {
            sorted[k + 1]
        } else {
            sorted[0] + 2.0 * PI
        };
        let gap = b - a;
        if gap > best.0 {
            best = (gap, 0.5 * (a + b));
        }
    }
    best.1
}

/// Real orthogonal diagonalization of a symmetric unitary matrix:
/// `w = p1 · diag(e^{iθ}) · p1ᵀ`.
///
/// The returned phases lie in `(cut − 2π, cut)`; `cut` is placed in the
/// widest gap of the spectrum so that the Cayley transform used for the
/// eigenvectors stays well conditioned.
pub fn symmetric_unitary_eigen(w: &CMatrix) -> Result<(RMatrix, Vec<f64>, f64)> {
    let p = check_square(w)?;
    check_finite(w)?;
    if p == 0 {
        return Ok((RMatrix::zeros(0, 0), vec![], std::f64::consts::PI));
    }
    let cut = widest_gap_center(&unitary_eigenphases(w));
    // λ = e^{iθ} ↦ tan((θ − ψ)/2) with ψ = cut − π
    let psi = cut - std::f64::consts::PI;
    let shift = Complex64::from_polar(1.0, psi);
    let id = identity(p);
    let den = (&id * shift + w)
        .try_inverse()
        .ok_or(Error::NotUnitary { defect: f64::NAN })?;
    let a = (&id * shift - w) * den * I;
    let a_re = a.map(|z| z.re);
    let a_sym = (&a_re + a_re.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a_sym);
    let phases = eig
        .eigenvalues
        .iter()
        .map(|&t| psi + 2.0 * t.atan())
        .collect();
    Ok((eig.eigenvectors, phases, cut))
}

fn wrap_principal(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta;
    while t <= -PI {
        t += 2.0 * PI;
    }
    while t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Symmetric square root of a symmetric unitary matrix.
pub fn sqrt_symmetric_unitary(w: &CMatrix, branch: SqrtBranch) -> Result<CMatrix> {
    let (p1, phases, _) = symmetric_unitary_eigen(w)?;
    let roots: Vec<Complex64> = phases
        .iter()
        .map(|&t| {
            let t = match branch {
                SqrtBranch::Principal => wrap_principal(t),
                SqrtBranch::WidestGap => t,
            };
            Complex64::from_polar(1.0, 0.5 * t)
        })
        .collect();
    let p1c = to_complex(&p1);
    let d = CMatrix::from_diagonal(&DVector::from_vec(roots));
    Ok(&p1c * d * p1c.transpose())
}

/// Principal symmetric square root of a symmetric unitary `w` that commutes
/// with `diag(commuting_with)`. The root is a primary matrix function of `w`
/// and therefore commutes with the same diagonal.
pub fn takagi_of_symmetric_unitary(w: &CMatrix, commuting_with: &[f64]) -> Result<CMatrix> {
    takagi_of_symmetric_unitary_with(w, commuting_with, &Tolerances::default())
}

pub fn takagi_of_symmetric_unitary_with(
    w: &CMatrix,
    commuting_with: &[f64],
    tol: &Tolerances,
) -> Result<CMatrix> {
    let p = check_square(w)?;
    check_finite(w)?;
    if commuting_with.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: commuting_with.len(),
        });
    }
    let defect = unitarity_defect(w);
    if defect > tol.fact {
        return Err(Error::NotUnitary { defect });
    }
    let sym = symmetry_defect(w);
    if sym > tol.sym {
        return Err(Error::AsymmetricInput { defect: sym });
    }
    let scale = commuting_with.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1.0);
    let d = CMatrix::from_diagonal(&DVector::from_iterator(
        p,
        commuting_with.iter().map(|&s| Complex64::from(s)),
    ));
    let comm = frobenius(&(w * &d - &d * w)) / scale;
    if comm > tol.fact {
        return Err(Error::CommutationViolation { defect: comm });
    }
    sqrt_symmetric_unitary(w, SqrtBranch::Principal)
}

// ---------------------------------------------------------------------------
// Takagi factorization

/// Takagi factorization with default tolerances.
pub fn takagi(upsilon: &CMatrix) -> Result<TakagiResult> {
    takagi_with(upsilon, &Tolerances::default())
}

/// Threshold below which a singular value of `m` is treated as zero.
pub fn zero_sv_threshold(p: usize, norm: f64) -> f64 {
    p as f64 * norm * 1e-12
}

pub fn takagi_with(upsilon: &CMatrix, tol: &Tolerances) -> Result<TakagiResult> {
    let p = check_square(upsilon)?;
    check_finite(upsilon)?;
    let asym = symmetry_defect(upsilon);
    if asym > tol.sym {
        return Err(Error::AsymmetricInput { defect: asym });
    }
    if p == 0 {
        return Ok(TakagiResult {
            sigma: DVector::zeros(0),
            u: CMatrix::zeros(0, 0),
        });
    }
    let ups = symmetrize(upsilon);
    let Svd { u: v1, sigma, v_t: v2 } = svd(&ups);

    let eps = zero_sv_threshold(p, sigma[0]);
    let rank = sigma.iter().take_while(|&&s| s > eps).count();

    // W = V₂* V₁ is symmetric unitary on the nonzero block and commutes with Σ.
    let w = conj(&v2) * &v1;
    let mut root = identity(p);
    if rank > 0 {
        let w11 = w.view((0, 0), (rank, rank)).into_owned();
        let w11 = symmetrize(&w11);
        let r11 = sqrt_symmetric_unitary(&w11, SqrtBranch::WidestGap)?;
        root.view_mut((0, 0), (rank, rank)).copy_from(&r11);
    }
    // rows belonging to zero singular values are taken from the right factor
    let u = root * v2;

    let mut sigma = sigma;
    for k in rank..p {
        sigma[k] = 0.0;
    }
    Ok(TakagiResult { sigma, u })
}

// ---------------------------------------------------------------------------
// U = P Φ

fn orth_sym_core(u: &CMatrix, tol: &Tolerances) -> Result<(RMatrix, Vec<Complex64>)> {
    check_square(u)?;
    check_finite(u)?;
    let defect = unitarity_defect(u);
    if defect > tol.fact {
        return Err(Error::NotUnitary { defect });
    }
    let utu = symmetrize(&(u.transpose() * u));
    let (p1, phases, _) = symmetric_unitary_eigen(&utu)?;
    // D² = Λ with Re D ≥ 0, Re D = 0 broken toward +i
    let d: Vec<Complex64> = phases
        .iter()
        .map(|&t| Complex64::from_polar(1.0, 0.5 * wrap_principal(t)))
        .collect();
    Ok((p1, d))
}

fn assemble_orth_sym(u: &CMatrix, p1: &RMatrix, d: &[Complex64]) -> OrthSymResult {
    let p1c = to_complex(p1);
    let dm = CMatrix::from_diagonal(&DVector::from_vec(d.to_vec()));
    let p2 = u * &p1c * conj(&dm);
    let p = (p2 * p1c.transpose()).map(|z| z.re);
    let phi = &p1c * dm * p1c.transpose();
    OrthSymResult { p, phi }
}

/// `u = p · phi` with the principal root for `phi`; `p` may be improper.
pub fn orth_sym_factor_principal(u: &CMatrix) -> Result<OrthSymResult> {
    orth_sym_factor_principal_with(u, &Tolerances::default())
}

pub fn orth_sym_factor_principal_with(u: &CMatrix, tol: &Tolerances) -> Result<OrthSymResult> {
    let (p1, d) = orth_sym_core(u, tol)?;
    Ok(assemble_orth_sym(u, &p1, &d))
}

/// `u = p · phi` with `det p = +1`.
///
/// When the principal choice of `D = √Λ` yields an improper `p`, the sign of
/// the root closest to the branch cut (smallest real part) is flipped.
pub fn orth_sym_factor(u: &CMatrix) -> Result<OrthSymResult> {
    orth_sym_factor_with(u, &Tolerances::default())
}

pub fn orth_sym_factor_with(u: &CMatrix, tol: &Tolerances) -> Result<OrthSymResult> {
    let (p1, mut d) = orth_sym_core(u, tol)?;
    let mut res = assemble_orth_sym(u, &p1, &d);
    if !d.is_empty() && res.p.determinant() < 0.0 {
        let k = d
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.re.total_cmp(&b.1.re).then(b.1.im.total_cmp(&a.1.im)))
            .map(|(k, _)| k)
            .unwrap_or(0);
        d[k] = -d[k];
        res = assemble_orth_sym(u, &p1, &d);
    }
    Ok(res)
}

// ---------------------------------------------------------------------------
// unitary logarithm

/// Principal logarithm of a unitary matrix divided by `i`: returns Hermitian
/// `h` with `exp(i h) = u` and eigenvalues in (−π, π).
///
/// Fails with [`Error::BranchOverflow`] when an eigenvalue of `u` lies within
/// `margin` of −1.
pub fn unitary_log_hermitian(u: &CMatrix, margin: f64) -> Result<CMatrix> {
    let p = check_square(u)?;
    check_finite(u)?;
    let id = identity(p);
    let plus = &id + u;
    let sv_min = singular_values(&plus)
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if p > 0 && sv_min <= margin {
        return Err(Error::BranchOverflow);
    }
    let inv = plus.try_inverse().ok_or(Error::BranchOverflow)?;
    // Cayley: a = i (I − U)(I + U)⁻¹ is Hermitian with eigenvalues tan(θ/2)
    let a = (&id - u) * inv * I;
    Ok(hermitian_map(&a, |t| Complex64::from(2.0 * t.atan())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_complex(rng: &mut ChaCha8Rng, p: usize) -> CMatrix {
        CMatrix::from_fn(p, p, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, p: usize) -> CMatrix {
        let a = random_complex(rng, p);
        symmetrize(&a)
    }

    fn random_unitary(rng: &mut ChaCha8Rng, p: usize) -> CMatrix {
        let a = random_complex(rng, p);
        a.qr().q()
    }

    #[test]
    fn svd_reconstructs_and_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 1..=6 {
            for _ in 0..50 {
                let m = random_complex(&mut rng, p);
                let f = svd(&m);
                let s = CMatrix::from_diagonal(&f.sigma.map(Complex64::from));
                assert!(frobenius(&(&f.u * s * &f.v_t - &m)) < 1e-13);
                assert!(unitarity_defect(&f.u) < 1e-13 && unitarity_defect(&f.v_t) < 1e-13);
                let oracle = nalgebra::SVD::new(m.clone(), false, false).singular_values;
                let mut oracle: Vec<f64> = oracle.iter().cloned().collect();
                oracle.sort_by(|a, b| b.total_cmp(a));
                for k in 0..p {
                    assert_abs_diff_eq!(f.sigma[k], oracle[k], epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn svd_of_rank_deficient_symmetric() {
        // u^T diag(s, 0, ..) u with exact zeros
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in 2..=6 {
            for k in 1..p {
                let u = random_unitary(&mut rng, p);
                let d = DVector::from_fn(p, |i, _| Complex64::from(if i < k { 0.2 + 0.1 * i as f64 } else { 0.0 }));
                let m = u.transpose() * CMatrix::from_diagonal(&d) * &u;
                let f = svd(&m);
                let s = CMatrix::from_diagonal(&f.sigma.map(Complex64::from));
                assert!(frobenius(&(&f.u * s * &f.v_t - &m)) < 1e-14);
                assert!(unitarity_defect(&f.u) < 1e-13);
                assert!(f.sigma.iter().skip(k).all(|&x| x < 1e-15));
            }
        }
        let z = svd(&CMatrix::zeros(3, 3));
        assert!(unitarity_defect(&z.u) < 1e-15 && z.sigma.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn takagi_of_diagonal_is_identity() {
        let ups = CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.3, 0.0), c(0.1, 0.0)]));
        let t = takagi(&ups).unwrap();
        assert_abs_diff_eq!(t.sigma[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(t.sigma[1], 0.1, epsilon = 1e-15);
        // U is I up to row signs
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(t.u[(i, j)].norm(), expect, epsilon = 1e-14);
            }
        }
        assert!(frobenius(&(t.reconstruct() - ups)) < 1e-15);
    }

    #[test]
    fn takagi_scalar_splits_phase() {
        let ups = CMatrix::from_element(1, 1, c(0.0, 0.2));
        let t = takagi(&ups).unwrap();
        assert_abs_diff_eq!(t.sigma[0], 0.2, epsilon = 1e-15);
        let u = t.u[(0, 0)];
        // e^{iπ/4} up to sign
        let expect = Complex64::from_polar(1.0, PI / 4.0);
        assert!((u - expect).norm() < 1e-14 || (u + expect).norm() < 1e-14);
        assert!(frobenius(&(t.reconstruct() - ups)) < 1e-15);
    }

    #[test]
    fn takagi_negative_diagonal() {
        // W = −I: the branch cut must not split the cluster
        let ups = CMatrix::from_diagonal(&DVector::from_vec(vec![c(-0.3, 0.0), c(-0.1, 0.0), c(-0.05, 0.0)]));
        let t = takagi(&ups).unwrap();
        assert!(frobenius(&(t.reconstruct() - &ups)) < 1e-15);
        assert!(unitarity_defect(&t.u) < 1e-14);
    }

    #[test]
    fn takagi_random_matches_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ups = random_symmetric(&mut rng, 4);
        let t = takagi(&ups).unwrap();
        let oracle = nalgebra::SVD::new(ups.clone(), false, false).singular_values;
        for k in 0..4 {
            assert_abs_diff_eq!(t.sigma[k], oracle[k], epsilon = 1e-13);
        }
        assert!(frobenius(&(t.reconstruct() - &ups)) < 1e-12);
        assert!(unitarity_defect(&t.u) < 1e-12);
    }

    #[test]
    fn takagi_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in 2..6 {
            let u = random_unitary(&mut rng, p);
            let mut s = DVector::from_fn(p, |_, _| rng.random_range(0.1..1.0));
            s[p - 1] = 0.0;
            s[0] = 0.0;
            let ups = u.transpose() * CMatrix::from_diagonal(&s.map(Complex64::from)) * &u;
            let t = takagi(&ups).unwrap();
            assert!(frobenius(&(t.reconstruct() - &ups)) < 1e-12);
            assert!(unitarity_defect(&t.u) < 1e-12);
            assert_eq!(t.sigma[p - 1], 0.0);
        }
    }

    #[test]
    fn takagi_rejects_bad_input() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = c(0.5, 0.0);
        assert!(matches!(takagi(&m), Err(Error::AsymmetricInput { .. })));
        m[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(takagi(&m), Err(Error::NonFinite)));
    }

    #[test]
    fn orth_sym_identity_and_diagonal() {
        let r = orth_sym_factor(&identity(3)).unwrap();
        assert!((r.p.clone() - RMatrix::identity(3, 3)).norm() < 1e-14);
        assert!(frobenius(&(r.phi - identity(3))) < 1e-14);

        let u = CMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::from_polar(1.0, 0.4),
            Complex64::from_polar(1.0, -1.1),
        ]));
        let r = orth_sym_factor(&u).unwrap();
        assert!((r.p.clone() - RMatrix::identity(2, 2)).norm() < 1e-14);
        assert!(frobenius(&(r.phi - &u)) < 1e-14);
    }

    #[test]
    fn orth_sym_real_rotation() {
        let (s, co) = 0.3f64.sin_cos();
        let u = CMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)]);
        let r = orth_sym_factor(&u).unwrap();
        assert!(frobenius(&(to_complex(&r.p) - &u)) < 1e-14);
        assert!(frobenius(&(r.phi - identity(2))) < 1e-14);
        assert_abs_diff_eq!(r.p.determinant(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn orth_sym_random_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 1..7 {
            let u = random_unitary(&mut rng, p);
            let r = orth_sym_factor(&u).unwrap();
            assert_abs_diff_eq!(r.p.determinant(), 1.0, epsilon = 1e-12);
            assert!((r.p.transpose() * &r.p - RMatrix::identity(p, p)).norm() < 1e-12);
            assert!(symmetry_defect(&r.phi) < 1e-12);
            assert!(unitarity_defect(&r.phi) < 1e-12);
            assert!(frobenius(&(to_complex(&r.p) * &r.phi - &u)) < 1e-12);
        }
    }

    #[test]
    fn orth_sym_rejects_non_unitary() {
        let m = identity(2).scale(1.1);
        assert!(matches!(orth_sym_factor(&m), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn sqrt_of_identity_and_minus_one() {
        let r = takagi_of_symmetric_unitary(&identity(3), &[3.0, 2.0, 1.0]).unwrap();
        assert!(frobenius(&(r - identity(3))) < 1e-14);
        let m = CMatrix::from_element(1, 1, c(-1.0, 0.0));
        let r = takagi_of_symmetric_unitary(&m, &[1.0]).unwrap();
        assert!((r[(0, 0)] - c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn sqrt_of_diagonal_is_entrywise_principal() {
        let phases = [2.5, -3.0, 0.7];
        let w = CMatrix::from_diagonal(&DVector::from_iterator(
            3,
            phases.iter().map(|&t| Complex64::from_polar(1.0, t)),
        ));
        let r = takagi_of_symmetric_unitary(&w, &[3.0, 2.0, 1.0]).unwrap();
        for (k, &t) in phases.iter().enumerate() {
            assert!((r[(k, k)] - Complex64::from_polar(1.0, t / 2.0)).norm() < 1e-13);
        }
        assert!(frobenius(&(&r * &r - &w)) < 1e-13);
    }

    #[test]
    fn sqrt_rejects_non_commuting() {
        let (s, co) = 0.4f64.sin_cos();
        let p1 = CMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)]);
        let d = CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0, 1.0), c(1.0, 0.0)]));
        let w = &p1 * d * p1.transpose();
        assert!(matches!(
            takagi_of_symmetric_unitary(&w, &[2.0, 1.0]),
            Err(Error::CommutationViolation { .. })
        ));
        // commutes with a scalar diagonal
        let r = takagi_of_symmetric_unitary(&w, &[1.0, 1.0]).unwrap();
        assert!(frobenius(&(&r * &r - &w)) < 1e-13);
    }

    fn taylor_exp(a: &CMatrix, terms: usize) -> CMatrix {
        let p = a.nrows();
        let mut sum = identity(p);
        let mut term = identity(p);
        for k in 1..terms {
            term = &term * a / Complex64::from(k as f64);
            sum += &term;
        }
        sum
    }

    #[test]
    fn exp_basics() {
        let z = CMatrix::zeros(3, 3);
        assert!(frobenius(&(mat_exp(&z).unwrap() - identity(3))) < 1e-15);
        let a = CMatrix::from_element(1, 1, c(0.0, PI));
        assert!((mat_exp(&a).unwrap()[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
        let mut bad = CMatrix::zeros(2, 2);
        bad[(1, 0)] = c(f64::INFINITY, 0.0);
        assert!(matches!(mat_exp(&bad), Err(Error::NonFinite)));
    }

    #[test]
    fn exp_matches_taylor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_complex(&mut rng, 4);
            let a = a.scale(0.95 / norm2(&a));
            let e = mat_exp(&a).unwrap();
            let oracle = taylor_exp(&a, 30);
            assert!(frobenius(&(&e - &oracle)) / frobenius(&oracle) < 1e-12);
        }
    }

    #[test]
    fn unitary_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_complex(&mut rng, 4);
        let h = (&h + h.adjoint()).scale(0.5);
        let h = h.scale(2.0 / norm2(&h));
        let u = mat_exp(&(&h * I)).unwrap();
        let back = unitary_log_hermitian(&u, 1e-9).unwrap();
        assert!(frobenius(&(back - h)) < 1e-12);
        let minus = identity(2).scale(-1.0);
        assert!(matches!(
            unitary_log_hermitian(&minus, 1e-9),
            Err(Error::BranchOverflow)
        ));
    }
}
