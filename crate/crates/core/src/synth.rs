//! Seeded synthetic layer structures.
//!
//! Structures vary smoothly from layer to layer so that continuity-based
//! identification applies, and the first `Φ` stays near the identity.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverse::{ReflectorSign, Situation};
use crate::matfact::{mat_exp, norm2, CMatrix, RMatrix};
use crate::model::Layer;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub p: usize,
    pub n_layers: usize,
    pub dx: f64,
    pub situation: Situation,
    #[serde(default)]
    pub reflector_sign: ReflectorSign,
    /// Largest singular value of any `ρ_j`.
    pub strength: f64,
    /// Spectral norm of the Hermitian generator of `Φ_j = exp(iH_j)`.
    #[serde(default)]
    pub coupling: f64,
    /// Layer whose smallest singular value is set to zero.
    #[serde(default)]
    pub planted_zero: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl StructureSpec {
    pub fn new(p: usize, n_layers: usize, dx: f64, situation: Situation) -> Self {
        Self {
            p,
            n_layers,
            dx,
            situation,
            reflector_sign: ReflectorSign::Positive,
            strength: 0.4,
            coupling: 0.3,
            planted_zero: None,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n_layers == 0 {
            return Err(Error::Config("structure needs at least one mode and one layer".into()));
        }
        if !(self.strength >= 0.0 && self.strength < 1.0) {
            return Err(Error::Config("strength must lie in [0, 1)".into()));
        }
        if !(self.coupling >= 0.0 && self.coupling < 1.5) {
            return Err(Error::Config("coupling must lie in [0, 1.5)".into()));
        }
        if !(self.dx > 0.0) {
            return Err(Error::Config("dx must be positive".into()));
        }
        if let Some(j) = self.planted_zero {
            if j >= self.n_layers {
                return Err(Error::Config(format!("planted_zero {j} is outside the structure")));
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

fn unit_norm(m: CMatrix) -> CMatrix {
    let n = norm2(&m);
    if n > 0.0 {
        m.unscale(n)
    } else {
        m
    }
}

fn random_hermitian(rng: &mut ChaCha8Rng, p: usize) -> CMatrix {
    let a = CMatrix::from_fn(p, p, |_, _| Complex64::new(uniform(rng), uniform(rng)));
    unit_norm(&a + a.adjoint())
}

fn random_real_symmetric(rng: &mut ChaCha8Rng, p: usize) -> CMatrix {
    let a = RMatrix::from_fn(p, p, |_, _| uniform(rng));
    unit_norm((&a + a.transpose()).map(Complex64::from))
}

fn random_complex_symmetric(rng: &mut ChaCha8Rng, p: usize) -> CMatrix {
    let a = CMatrix::from_fn(p, p, |_, _| Complex64::new(uniform(rng), uniform(rng)));
    unit_norm(&a + a.transpose())
}

fn random_orthogonal(rng: &mut ChaCha8Rng, p: usize) -> Result<CMatrix> {
    let a = RMatrix::from_fn(p, p, |_, _| 2.0 * uniform(rng));
    let skew = (&a - a.transpose()).map(Complex64::from);
    let q = mat_exp(&skew)?;
    Ok(q.map(|z| Complex64::from(z.re)))
}

/// Generate a structure with the requested a-priori form.
pub fn random_structure(spec: &StructureSpec) -> Result<Vec<Layer>> {
    spec.validate()?;
    let p = spec.p;
    let n = spec.n_layers;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phase: Vec<f64> = (0..p).map(|_| std::f64::consts::PI * uniform(&mut rng)).collect();
    let freq: Vec<f64> = (0..p).map(|_| 1.0 + 0.5 * uniform(&mut rng)).collect();
    let theta = |j: usize| 2.0 * std::f64::consts::PI * j as f64 / n.max(2) as f64;

    // distinct singular-value tracks: base (p − k)/p, swing ±0.3/p
    let sigma = |j: usize, k: usize| {
        let base = (p - k) as f64 / p as f64;
        let swing = 0.3 / p as f64 * (freq[k] * theta(j) + phase[k]).sin();
        let s = spec.strength * (base + swing) / (1.0 + 0.3 / p as f64);
        if spec.planted_zero == Some(j) && k == p - 1 {
            0.0
        } else {
            s
        }
    };

    let mut layers = Vec::with_capacity(n);
    match spec.situation {
        Situation::A => {
            let a = random_complex_symmetric(&mut rng, p);
            let b = random_complex_symmetric(&mut rng, p);
            for j in 0..n {
                let t = theta(j);
                let m = unit_norm(a.scale(t.cos()) + b.scale(t.sin()));
                let scale = spec.strength * (0.6 + 0.4 * (freq[0] * t + phase[0]).sin().abs());
                layers.push(Layer::reflector(m.scale(scale), spec.dx)?);
            }
        }
        Situation::B => {
            let ha = random_hermitian(&mut rng, p);
            let hb = random_hermitian(&mut rng, p);
            for j in 0..n {
                let t = theta(j);
                let h = unit_norm(ha.scale(t.cos()) + hb.scale(t.sin())).scale(spec.coupling);
                let phi = mat_exp(&h.map(|z| I * z))?;
                let rho = CMatrix::from_diagonal(&DVector::from_fn(p, |k, _| Complex64::from(sigma(j, k))));
                layers.push(Layer::new(phi, rho, spec.dx)?);
            }
        }
        Situation::C => {
            let q = random_orthogonal(&mut rng, p)?;
            let sa = random_real_symmetric(&mut rng, p);
            let sb = random_real_symmetric(&mut rng, p);
            let sign = match spec.reflector_sign {
                ReflectorSign::Positive => 1.0,
                ReflectorSign::Negative => -1.0,
            };
            for j in 0..n {
                let t = theta(j);
                let s = unit_norm(sa.scale(t.cos()) + sb.scale(t.sin())).scale(spec.coupling);
                let phi = mat_exp(&s.map(|z| I * z))?;
                let phi = crate::matfact::symmetrize(&phi);
                let d = CMatrix::from_diagonal(&DVector::from_fn(p, |k, _| Complex64::from(sigma(j, k))));
                let rho = (q.transpose() * d * &q).scale(sign).map(|z| Complex64::from(z.re));
                let rho = crate::matfact::symmetrize(&rho);
                layers.push(Layer::new(phi, rho, spec.dx)?);
            }
        }
    }
    Ok(layers)
}
