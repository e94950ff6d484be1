//! Cost functionals over intensity stacks and their Wirtinger gradients.
//!
//! Two families are supported: the variance-stabilized least squares
//! `sum (T(z) - T(y))^2` for a monotone transform `T`, and the Poisson
//! negative log-likelihood `sum z - y ln(z + eps)`. Here `z = |G|^2` is the
//! modelled intensity and `y` the measurement.
//!
//! Gradients are returned as a Fourier-domain residual `R` with
//! `dL/dg* = idft2(R)`, which holds because the DFT is unitary.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, RealGrid};

/// Monotone map applied to intensities before comparison or mixing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Transform {
    /// `sqrt(z + shift)`; shift 3/8 is the Anscombe transform.
    Sqrt { shift: f64 },
    /// `z^exponent` with exponent in (0, 1].
    Power { exponent: f64 },
    Identity,
    /// `ln(z + shift)`, shift > 0.
    Log { shift: f64 },
}

pub const ANSCOMBE_SHIFT: f64 = 3.0 / 8.0;

impl Transform {
    pub const SQRT: Transform = Transform::Sqrt { shift: 0.0 };
    pub const ANSCOMBE: Transform = Transform::Sqrt { shift: ANSCOMBE_SHIFT };
    pub const SQRT_PLUS_1: Transform = Transform::Sqrt { shift: 1.0 };
    pub const POW_07: Transform = Transform::Power { exponent: 0.7 };
    pub const POW_09: Transform = Transform::Power { exponent: 0.9 };
    pub const LOG_HALF: Transform = Transform::Log { shift: 0.5 };
    pub const LOG_1: Transform = Transform::Log { shift: 1.0 };

    /// Every transform used by the benchmark schemes.
    pub const REGISTERED: [Transform; 8] = [
        Transform::SQRT,
        Transform::ANSCOMBE,
        Transform::SQRT_PLUS_1,
        Transform::POW_07,
        Transform::POW_09,
        Transform::Identity,
        Transform::LOG_HALF,
        Transform::LOG_1,
    ];

    pub fn sqrt(shift: f64) -> Result<Self> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidArgument(format!("sqrt shift must be >= 0, got {shift}")));
        }
        Ok(Transform::Sqrt { shift })
    }

    pub fn power(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "power exponent must lie in (0, 1], got {exponent}"
            )));
        }
        Ok(Transform::Power { exponent })
    }

    pub fn log(shift: f64) -> Result<Self> {
        if !(shift > 0.0 && shift.is_finite()) {
            return Err(Error::InvalidArgument(format!("log shift must be > 0, got {shift}")));
        }
        Ok(Transform::Log { shift })
    }

    /// The additive shift in the `sqrt(z + a)` and `ln(z + a)` forms; 0 otherwise.
    pub fn domain_shift(&self) -> f64 {
        match *self {
            Transform::Sqrt { shift } | Transform::Log { shift } => shift,
            _ => 0.0,
        }
    }

    pub fn id(&self) -> String {
        match *self {
            Transform::Sqrt { shift } if shift == 0.0 => "sqrt".into(),
            Transform::Sqrt { shift } if shift == ANSCOMBE_SHIFT => "anscombe".into(),
            Transform::Sqrt { shift } if shift == 1.0 => "sqrt_plus_1".into(),
            Transform::Sqrt { shift } => format!("sqrt_plus_{shift}"),
            Transform::Power { exponent } if exponent == 1.0 => "identity".into(),
            Transform::Power { exponent } => format!("pow_{exponent}"),
            Transform::Identity => "identity".into(),
            Transform::Log { shift } if shift == 0.5 => "log_half".into(),
            Transform::Log { shift } => format!("log_{shift}"),
        }
    }

    #[inline]
    pub(crate) fn apply(&self, z: f64) -> f64 {
        match *self {
            Transform::Sqrt { shift } => (z + shift).sqrt(),
            Transform::Power { exponent } => z.powf(exponent),
            Transform::Identity => z,
            Transform::Log { shift } => (z + shift).ln(),
        }
    }

    #[inline]
    pub(crate) fn apply_derivative(&self, z: f64) -> f64 {
        match *self {
            Transform::Sqrt { shift } => 0.5 / (z + shift).sqrt(),
            Transform::Power { exponent } => exponent * z.powf(exponent - 1.0),
            Transform::Identity => 1.0,
            Transform::Log { shift } => 1.0 / (z + shift),
        }
    }

    #[inline]
    fn apply_inverse(&self, t: f64) -> f64 {
        match *self {
            Transform::Sqrt { shift } => t * t - shift,
            Transform::Power { exponent } => t.powf(1.0 / exponent),
            Transform::Identity => t,
            Transform::Log { shift } => t.exp() - shift,
        }
    }

    /// `T(0)`, the lower end of the range.
    pub fn range_min(&self) -> f64 {
        self.apply(0.0)
    }

    fn check_nonneg(z: f64) -> Result<()> {
        if !(z >= 0.0) || !z.is_finite() {
            return Err(Error::Domain(format!("transform input must be finite and >= 0, got {z}")));
        }
        Ok(())
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        Self::check_nonneg(z)?;
        Ok(self.apply(z))
    }

    /// `T'(z)`; infinite at `z = 0` for `sqrt` and fractional powers.
    pub fn derivative(&self, z: f64) -> Result<f64> {
        Self::check_nonneg(z)?;
        Ok(self.apply_derivative(z))
    }

    pub fn inverse(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < self.range_min() {
            return Err(Error::Domain(format!(
                "{t} is outside the range of {} (min {})",
                self.id(),
                self.range_min()
            )));
        }
        Ok(self.apply_inverse(t).max(0.0))
    }

    /// Inverse that maps anything below `T(0)` to 0.
    pub fn inverse_clamped(&self, t: f64) -> f64 {
        self.apply_inverse(t.max(self.range_min())).max(0.0)
    }

    /// `T^{-1}((1 - mu) T(a) + mu T(b))`, with the endpoints returned exactly.
    pub fn mix(&self, a: f64, b: f64, mu: f64) -> f64 {
        if mu == 0.0 {
            a
        } else if mu == 1.0 {
            b
        } else {
            self.inverse_clamped((1.0 - mu) * self.apply(a) + mu * self.apply(b))
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_num = |v: &str| v.parse::<f64>().map_err(|_| Error::UnknownId(s.to_string()));
        match s {
            "sqrt" => Ok(Transform::SQRT),
            "anscombe" => Ok(Transform::ANSCOMBE),
            "sqrt_plus_1" => Ok(Transform::SQRT_PLUS_1),
            "identity" => Ok(Transform::Identity),
            "log_half" => Ok(Transform::LOG_HALF),
            "log_1" => Ok(Transform::LOG_1),
            _ => {
                if let Some(v) = s.strip_prefix("pow_") {
                    Transform::power(parse_num(v)?)
                } else if let Some(v) = s.strip_prefix("sqrt_plus_") {
                    Transform::sqrt(parse_num(v)?)
                } else if let Some(v) = s.strip_prefix("log_") {
                    Transform::log(parse_num(v)?)
                } else {
                    Err(Error::UnknownId(s.to_string()))
                }
            }
        }
    }
}

impl From<Transform> for String {
    fn from(t: Transform) -> String {
        t.id()
    }
}

impl TryFrom<String> for Transform {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Regularizer added to `z` inside the log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Epsilon {
    Absolute(f64),
    /// Fraction of the mean of the measured pattern.
    RelativeToMean(f64),
}

pub const DEFAULT_RELATIVE_EPSILON: f64 = 1e-8;

impl Epsilon {
    /// Resolved value for one measured pattern; always positive.
    pub fn resolve(&self, y: &RealGrid) -> f64 {
        match *self {
            Epsilon::Absolute(e) => e,
            Epsilon::RelativeToMean(r) => {
                let m = y.mean();
                if m > 0.0 { r * m } else { r }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CostFunctional {
    Vst(Transform),
    PoissonLogLikelihood { epsilon: Epsilon },
}

impl CostFunctional {
    /// `sum (sqrt z - sqrt y)^2`.
    pub const AMPLITUDE: CostFunctional = CostFunctional::Vst(Transform::SQRT);

    pub fn poisson_loglik() -> Self {
        CostFunctional::PoissonLogLikelihood {
            epsilon: Epsilon::RelativeToMean(DEFAULT_RELATIVE_EPSILON),
        }
    }

    pub fn poisson_loglik_with(epsilon: Epsilon) -> Result<Self> {
        let v = match epsilon {
            Epsilon::Absolute(v) | Epsilon::RelativeToMean(v) => v,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {v}")));
        }
        Ok(CostFunctional::PoissonLogLikelihood { epsilon })
    }

    /// The eight transform functionals plus the log-likelihood.
    pub fn registered() -> Vec<CostFunctional> {
        Transform::REGISTERED
            .iter()
            .map(|&t| CostFunctional::Vst(t))
            .chain(std::iter::once(CostFunctional::poisson_loglik()))
            .collect()
    }

    pub fn id(&self) -> String {
        match self {
            CostFunctional::Vst(t) => t.id(),
            CostFunctional::PoissonLogLikelihood { epsilon } => match *epsilon {
                Epsilon::RelativeToMean(r) if r == DEFAULT_RELATIVE_EPSILON => {
                    "poisson_loglik".into()
                }
                Epsilon::RelativeToMean(r) => format!("poisson_loglik_rel_{r}"),
                Epsilon::Absolute(a) => format!("poisson_loglik_abs_{a}"),
            },
        }
    }

    /// Cost of one pattern.
    pub fn pattern_cost(&self, z: &RealGrid, y: &RealGrid) -> Result<f64> {
        z.same_dims(y)?;
        Ok(match self {
            CostFunctional::Vst(t) => z
                .data()
                .iter()
                .zip(y.data())
                .map(|(&z, &y)| (t.apply(z) - t.apply(y)).powi(2))
                .sum(),
            CostFunctional::PoissonLogLikelihood { epsilon } => {
                let eps = epsilon.resolve(y);
                z.data().iter().zip(y.data()).map(|(&z, &y)| z - y * (z + eps).ln()).sum()
            }
        })
    }
}

impl fmt::Display for CostFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for CostFunctional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "poisson_loglik" {
            return Ok(CostFunctional::poisson_loglik());
        }
        let num = |v: &str| v.parse::<f64>().map_err(|_| Error::UnknownId(s.to_string()));
        if let Some(v) = s.strip_prefix("poisson_loglik_rel_") {
            return CostFunctional::poisson_loglik_with(Epsilon::RelativeToMean(num(v)?));
        }
        if let Some(v) = s.strip_prefix("poisson_loglik_abs_") {
            return CostFunctional::poisson_loglik_with(Epsilon::Absolute(num(v)?));
        }
        Ok(CostFunctional::Vst(s.parse()?))
    }
}

impl From<CostFunctional> for String {
    fn from(c: CostFunctional) -> String {
        c.id()
    }
}

impl TryFrom<String> for CostFunctional {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Total cost summed over all pixels of all patterns.
pub fn cost_eval(functional: &CostFunctional, z: &[RealGrid], y: &[RealGrid]) -> Result<f64> {
    if z.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} modelled vs {} measured patterns",
            z.len(),
            y.len()
        )));
    }
    z.iter().zip(y).map(|(z, y)| functional.pattern_cost(z, y)).sum()
}

/// Fourier-domain residual `R` with `dL/dg* = idft2(R)` for one pattern.
///
/// Pixels with `z = 0` get a zero residual.
pub fn gradient_residual(
    functional: &CostFunctional,
    spectrum: &ComplexGrid,
    y: &RealGrid,
) -> Result<ComplexGrid> {
    if spectrum.dims() != y.dims() {
        return Err(Error::DimensionMismatch(format!(
            "spectrum {:?} vs measurement {:?}",
            spectrum.dims(),
            y.dims()
        )));
    }
    let (w, h) = spectrum.dims();
    let data: Vec<Complex64> = match functional {
        CostFunctional::Vst(t) => spectrum
            .data()
            .iter()
            .zip(y.data())
            .map(|(&g, &y)| {
                let z = g.norm_sqr();
                if z == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                g * (2.0 * (t.apply(z) - t.apply(y)) * t.apply_derivative(z))
            })
            .collect(),
        CostFunctional::PoissonLogLikelihood { epsilon } => {
            let eps = epsilon.resolve(y);
            spectrum
                .data()
                .iter()
                .zip(y.data())
                .map(|(&g, &y)| g * (1.0 - y / (g.norm_sqr() + eps)))
                .collect()
        }
    };
    let out = ComplexGrid::new(w, h, data)?;
    Ok(out)
}

/// `(z - y ln z) - (y - y ln y + 2 (sqrt z - sqrt y)^2)`, the remainder of the
/// quadratic expansion of the log-likelihood term around `z = y`.
pub fn taylor_gap(z: f64, y: f64) -> Result<f64> {
    if !(z > 0.0 && y > 0.0) || !z.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!("taylor_gap needs z, y > 0, got z={z}, y={y}")));
    }
    let d = z.sqrt() - y.sqrt();
    Ok((z - y * z.ln()) - (y - y * y.ln() + 2.0 * d * d))
}
