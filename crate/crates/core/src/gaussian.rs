//! Gaussian quadratures as affine forms over independent latent normals.
//!
//! Every quadrature in the protocols is a linear function of the vacuum
//! quadratures `X_j^(0), P_j^(0)` (unit variance), optionally a secret
//! qumode `(X_S, P_S)`, the classical secret `γ`, and published constants.
//! An [`AffineForm`] stores those coefficients exactly, so means and
//! variances follow in closed form and a homodyne outcome is the form
//! evaluated on one draw of the latents (Heisenberg picture: measuring
//! never mutates the other forms).

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Variance of a vacuum quadrature (ħ = 1).
pub const VACUUM_VARIANCE: f64 = 1.0;

/// Layout of the latent standard normals.
///
/// Indices `0..m` are `X_j^(0)`, `m..2m` are `P_j^(0)`, and when a secret
/// qumode is attached `2m` is `X_S` and `2m + 1` is `P_S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentBasis {
    modes: usize,
    secret: Option<(f64, f64)>,
}

impl LatentBasis {
    pub fn new(modes: usize) -> Self {
        Self {
            modes,
            secret: None,
        }
    }

    /// Basis with a secret qumode of the given quadrature variances.
    pub fn with_secret(modes: usize, var_x: f64, var_p: f64) -> Result<Self> {
        if !(var_x > 0.0 && var_p > 0.0 && var_x.is_finite() && var_p.is_finite()) {
            return Err(Error::InvalidSecret(format!(
                "variances must be positive and finite, got ({var_x}, {var_p})"
            )));
        }
        Ok(Self {
            modes,
            secret: Some((var_x, var_p)),
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn has_secret(&self) -> bool {
        self.secret.is_some()
    }

    pub fn dim(&self) -> usize {
        2 * self.modes + if self.secret.is_some() { 2 } else { 0 }
    }

    pub fn x_index(&self, mode: usize) -> usize {
        debug_assert!(mode < self.modes);
        mode
    }

    pub fn p_index(&self, mode: usize) -> usize {
        debug_assert!(mode < self.modes);
        self.modes + mode
    }

    pub fn secret_x_index(&self) -> Option<usize> {
        self.secret.map(|_| 2 * self.modes)
    }

    pub fn secret_p_index(&self) -> Option<usize> {
        self.secret.map(|_| 2 * self.modes + 1)
    }

    pub fn variance(&self, index: usize) -> f64 {
        match self.secret {
            Some((vx, _)) if index == 2 * self.modes => vx,
            Some((_, vp)) if index == 2 * self.modes + 1 => vp,
            _ => VACUUM_VARIANCE,
        }
    }

    pub fn zero_form(&self) -> AffineForm {
        AffineForm::zero(self.dim())
    }

    /// Form with a single unit coefficient on latent `index`.
    pub fn unit_form(&self, index: usize) -> AffineForm {
        let mut f = self.zero_form();
        f.latent[index] = 1.0;
        f
    }

    pub fn moments(&self, form: &AffineForm, gamma: f64) -> MomentSummary {
        debug_assert_eq!(form.dim(), self.dim());
        let variance = form
            .latent
            .iter()
            .enumerate()
            .map(|(i, c)| c * c * self.variance(i))
            .sum();
        MomentSummary {
            mean: form.mean(gamma),
            variance,
        }
    }

    /// Covariance of two forms on this basis.
    pub fn covariance(&self, f: &AffineForm, g: &AffineForm) -> f64 {
        f.latent
            .iter()
            .zip(&g.latent)
            .enumerate()
            .map(|(i, (a, b))| a * b * self.variance(i))
            .sum()
    }

    /// One draw of all latents.
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let z: f64 = StandardNormal.sample(rng);
                z * self.variance(i).sqrt()
            })
            .collect()
    }

    /// Evaluate `forms` on `shots` independent latent draws.
    ///
    /// Row `s` holds the values of every form on the latents of shot `s`.
    pub fn sample(
        &self,
        forms: &[AffineForm],
        gamma: f64,
        shots: usize,
        seed: u64,
    ) -> Result<DMatrix<f64>> {
        for f in forms {
            check_len("affine form", self.dim(), f.dim())?;
        }
        let rows = map_shots(shots, seed, |_, rng| {
            let z = self.draw(rng);
            forms
                .iter()
                .map(|f| f.evaluate(&z, gamma))
                .collect::<Vec<_>>()
        })?;
        Ok(DMatrix::from_fn(shots, forms.len(), |s, k| rows[s][k]))
    }
}

/// RNG for one shot: the global seed picks the key, the shot index picks the
/// ChaCha stream. Serial and parallel runs therefore see identical draws.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

/// Run `f` once per shot on that shot's RNG, in parallel, results in shot order.
pub fn map_shots<T, F>(shots: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    if shots == 0 {
        return Err(Error::NoShots);
    }
    Ok((0..shots as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = shot_rng(seed, s);
            f(s, &mut rng)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
}

/// `latent · z + secret · γ + constant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineForm {
    pub latent: Vec<f64>,
    pub secret: f64,
    pub constant: f64,
}

impl AffineForm {
    pub fn zero(dim: usize) -> Self {
        Self {
            latent: vec![0.0; dim],
            secret: 0.0,
            constant: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.latent.len()
    }

    pub fn mean(&self, gamma: f64) -> f64 {
        self.secret * gamma + self.constant
    }

    pub fn evaluate(&self, latents: &[f64], gamma: f64) -> f64 {
        debug_assert_eq!(latents.len(), self.dim());
        self.latent
            .iter()
            .zip(latents)
            .map(|(c, z)| c * z)
            .sum::<f64>()
            + self.mean(gamma)
    }

    pub fn is_zero(&self) -> bool {
        self.secret == 0.0 && self.constant == 0.0 && self.latent.iter().all(|&c| c == 0.0)
    }

    /// Same form on a larger basis (new latents get zero coefficients).
    pub fn padded(&self, dim: usize) -> Self {
        debug_assert!(dim >= self.dim());
        let mut latent = self.latent.clone();
        latent.resize(dim, 0.0);
        Self {
            latent,
            secret: self.secret,
            constant: self.constant,
        }
    }

    pub fn scaled(&self, w: f64) -> Self {
        Self {
            latent: self.latent.iter().map(|c| w * c).collect(),
            secret: w * self.secret,
            constant: w * self.constant,
        }
    }

    /// `self += w · other`.
    pub fn add_scaled(&mut self, other: &AffineForm, w: f64) {
        assert_eq!(self.dim(), other.dim(), "affine forms on different bases");
        for (c, o) in self.latent.iter_mut().zip(&other.latent) {
            *c += w * o;
        }
        self.secret += w * other.secret;
        self.constant += w * other.constant;
    }
}

/// `Σ w_i f_i`, coefficientwise.
pub fn linear_combine(forms: &[AffineForm], weights: &[f64]) -> Result<AffineForm> {
    check_len("combination weights", forms.len(), weights.len())?;
    let dim = forms.first().map_or(0, AffineForm::dim);
    let mut out = AffineForm::zero(dim);
    for (f, &w) in forms.iter().zip(weights) {
        check_len("affine form", dim, f.dim())?;
        out.add_scaled(f, w);
    }
    Ok(out)
}

impl Add for &AffineForm {
    type Output = AffineForm;
    fn add(self, rhs: &AffineForm) -> AffineForm {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

impl Sub for &AffineForm {
    type Output = AffineForm;
    fn sub(self, rhs: &AffineForm) -> AffineForm {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }
}

impl Neg for &AffineForm {
    type Output = AffineForm;
    fn neg(self) -> AffineForm {
        self.scaled(-1.0)
    }
}

impl Mul<&AffineForm> for f64 {
    type Output = AffineForm;
    fn mul(self, rhs: &AffineForm) -> AffineForm {
        rhs.scaled(self)
    }
}
