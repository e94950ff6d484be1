//! Photon-budget scaling and seeded Poisson / speckle sampling.
//!
//! Every pattern draws from its own ChaCha stream `(seed, pattern index)`, so
//! growing or shrinking a stack never changes the draws of earlier patterns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RealGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    NoiseFree,
    Poisson,
    Speckle,
}

/// Expected total counts per diffraction pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonBudget(f64);

impl PhotonBudget {
    pub fn new(photons_per_pattern: f64) -> Result<Self> {
        if !(photons_per_pattern.is_finite() && photons_per_pattern > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "photon budget must be positive and finite, got {photons_per_pattern}"
            )));
        }
        Ok(Self(photons_per_pattern))
    }

    pub fn photons_per_pattern(self) -> f64 {
        self.0
    }
}

/// Multiplies the whole stack by one scalar so the mean pattern sum equals the budget.
pub fn scale_to_budget(stack: &[RealGrid], budget: PhotonBudget) -> Result<Vec<RealGrid>> {
    if stack.is_empty() {
        return Err(Error::InvalidArgument("empty intensity stack".into()));
    }
    let mean_sum = stack.iter().map(RealGrid::sum).sum::<f64>() / stack.len() as f64;
    if mean_sum <= 0.0 {
        return Err(Error::ZeroStack);
    }
    let s = budget.photons_per_pattern() / mean_sum;
    Ok(stack.iter().map(|p| p.scale(s)).collect())
}

fn pattern_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_means(stack: &[RealGrid]) -> Result<()> {
    // RealGrid already guarantees m >= 0; this guards grids built elsewhere.
    for p in stack {
        if let Some(&m) = p.data().iter().find(|&&m| m < 0.0 || !m.is_finite()) {
            return Err(Error::NegativeMean(m));
        }
    }
    Ok(())
}

fn sample_poisson_one(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    // Knuth inversion below lambda = 12, Ahrens-Dieter rejection above.
    Poisson::new(mean).expect("validated mean").sample(rng)
}

/// Independent Poisson counts with means `m`.
pub fn sample_poisson(m: &[RealGrid], seed: u64) -> Result<Vec<RealGrid>> {
    check_means(m)?;
    m.iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = pattern_rng(seed, i);
            let data = p.data().iter().map(|&mean| sample_poisson_one(mean, &mut rng)).collect();
            RealGrid::new(p.width(), p.height(), data)
        })
        .collect()
}

/// Independent exponential intensities `-m ln U`, `U` uniform on (0, 1].
pub fn sample_speckle(m: &[RealGrid], seed: u64) -> Result<Vec<RealGrid>> {
    check_means(m)?;
    m.iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = pattern_rng(seed, i);
            let data = p
                .data()
                .iter()
                .map(|&mean| {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let y = -mean * u.ln();
                    // -0.0 when mean or ln(u) is zero
                    y.max(0.0)
                })
                .collect();
            RealGrid::new(p.width(), p.height(), data)
        })
        .collect()
}

/// Applies `model` to an already budget-scaled stack.
pub fn apply_noise(model: NoiseModel, m: &[RealGrid], seed: u64) -> Result<Vec<RealGrid>> {
    match model {
        NoiseModel::NoiseFree => Ok(m.to_vec()),
        NoiseModel::Poisson => sample_poisson(m, seed),
        NoiseModel::Speckle => sample_speckle(m, seed),
    }
}

/// `y ln m - m - ln y!`.
pub fn poisson_log_pmf(y: u64, m: f64) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Domain(format!("Poisson mean must be positive, got {m}")));
    }
    Ok(y as f64 * m.ln() - m - statrs::function::factorial::ln_factorial(y))
}
