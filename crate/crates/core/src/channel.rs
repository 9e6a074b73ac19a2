//! Channel-gain distributions.
//!
//! Gains are i.i.d. across slots. The online schedulers only need the
//! inverse fractional moments `nu_i = (E[h^(-1/i)])^i`, which are computed once
//! per model and cached in [`InverseMoments`].

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::quadrature;
use crate::{Error, Result};

/// Relative accuracy promised by [`inverse_moment`] for density models.
pub const MOMENT_REL_TOL: f64 = 1e-8;

// Integration cut-off in units of the mean excess 1/rate; the tail beyond it
// is below exp(-40).
const TAIL_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelModel {
    /// Exponential gain conditioned on `h >= floor`. By memorylessness this is
    /// `floor + Exp(rate)`.
    TruncatedExponential { rate: f64, floor: f64 },
    /// Every slot has the same gain.
    Degenerate { gain: f64 },
    /// Gains drawn uniformly from a fixed sample set.
    Empirical { samples: Vec<f64> },
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel::TruncatedExponential { rate: 1.0, floor: 0.001 }
    }
}

impl ChannelModel {
    pub fn truncated_exponential(rate: f64, floor: f64) -> Result<Self> {
        let m = ChannelModel::TruncatedExponential { rate, floor };
        m.validate()?;
        Ok(m)
    }

    pub fn degenerate(gain: f64) -> Result<Self> {
        let m = ChannelModel::Degenerate { gain };
        m.validate()?;
        Ok(m)
    }

    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        let m = ChannelModel::Empirical { samples };
        m.validate()?;
        Ok(m)
    }

    /// A zero floor is accepted here so that the divergence of `nu_1` can be
    /// reported by [`inverse_moment`]; sampling still works.
    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelModel::TruncatedExponential { rate, floor } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::domain("channel rate", format!("{rate} must be positive")));
                }
                if !(floor.is_finite() && *floor >= 0.0) {
                    return Err(Error::domain("channel floor", format!("{floor} must be non-negative")));
                }
            }
            ChannelModel::Degenerate { gain } => {
                if !(gain.is_finite() && *gain > 0.0) {
                    return Err(Error::domain("channel gain", format!("{gain} must be positive")));
                }
            }
            ChannelModel::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(Error::domain("channel samples", "sample set is empty"));
                }
                if let Some(bad) = samples.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
                    return Err(Error::domain("channel samples", format!("{bad} is not a positive gain")));
                }
            }
        }
        Ok(())
    }

    /// The same model with every gain multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::domain("scale", format!("{c} must be positive")));
        }
        Ok(match self {
            ChannelModel::TruncatedExponential { rate, floor } => ChannelModel::TruncatedExponential {
                rate: rate / c,
                floor: floor * c,
            },
            ChannelModel::Degenerate { gain } => ChannelModel::Degenerate { gain: gain * c },
            ChannelModel::Empirical { samples } => ChannelModel::Empirical {
                samples: samples.iter().map(|h| h * c).collect(),
            },
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ChannelModel::TruncatedExponential { rate, floor } => {
                let exp = Exp::new(*rate).expect("rate validated positive");
                floor + exp.sample(rng)
            }
            ChannelModel::Degenerate { gain } => *gain,
            ChannelModel::Empirical { samples } => samples[rng.random_range(0..samples.len())],
        }
    }

    /// Nodes and weights approximating `E[f(h)]` for any smooth bounded `f`.
    ///
    /// Density models use an `n`-point Gauss-Legendre rule in the CDF
    /// variable `u`, mapped through the inverse CDF. Degenerate and empirical
    /// models are represented exactly.
    pub fn expectation_rule(&self, n: usize) -> Vec<(f64, f64)> {
        match self {
            ChannelModel::TruncatedExponential { rate, floor } => quadrature::gauss_legendre(n.max(1))
                .into_iter()
                .map(|(x, w)| {
                    let u = 0.5 * (x + 1.0);
                    (floor - (-u).ln_1p() / rate, 0.5 * w)
                })
                .collect(),
            ChannelModel::Degenerate { gain } => vec![(*gain, 1.0)],
            ChannelModel::Empirical { samples } => {
                let w = 1.0 / samples.len() as f64;
                samples.iter().map(|&h| (h, w)).collect()
            }
        }
    }
}

/// Draws `n` i.i.d. gains.
pub fn sample_gains<R: Rng + ?Sized>(model: &ChannelModel, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    model.validate()?;
    if n == 0 {
        return Err(Error::domain("sample count", "at least one gain must be drawn"));
    }
    Ok((0..n).map(|_| model.sample(rng)).collect())
}

/// `nu_i = (E[h^(-1/i)])^i`.
pub fn inverse_moment(model: &ChannelModel, order: usize) -> Result<f64> {
    model.validate()?;
    if order == 0 {
        return Err(Error::domain("moment order", "order must be at least 1"));
    }
    let inv = 1.0 / order as f64;
    let mean = match model {
        ChannelModel::Degenerate { gain } => return Ok(1.0 / gain),
        ChannelModel::Empirical { samples } => samples.iter().map(|h| h.powf(-inv)).sum::<f64>() / samples.len() as f64,
        ChannelModel::TruncatedExponential { rate, floor } => {
            if *floor == 0.0 && order == 1 {
                return Err(Error::Divergent(
                    "E[1/h] is infinite for an exponential gain without a positive floor".into(),
                ));
            }
            exponential_negative_moment(*rate, *floor, inv)?
        }
    };
    Ok(mean.powi(order as i32))
}

// E[(floor + X)^(-a)] for X ~ Exp(rate), 0 < a <= 1.
//
// Substituting x = s^2 removes the 1/h spike near the floor and the x^(-a)
// singularity when the floor is zero.
fn exponential_negative_moment(rate: f64, floor: f64, a: f64) -> Result<f64> {
    let cutoff = TAIL_CUTOFF / rate;
    let integrand = |s: f64| {
        let x = s * s;
        let h = floor + x;
        if h == 0.0 {
            // s^(1-2a) -> 0 for a < 1/2, -> 1 at a = 1/2.
            return if a < 0.5 { 0.0 } else { 2.0 * rate };
        }
        2.0 * s * h.powf(-a) * rate * (-rate * x).exp()
    };
    let est = quadrature::integrate(integrand, 0.0, cutoff.sqrt(), 0.0, 1e-12, 4000);
    // Upper bound on the discarded tail: (floor + X)^(-a) e^(-rate X).
    let tail = (floor + cutoff).powf(-a) * (-TAIL_CUTOFF).exp();
    let value = est.value + tail;
    if !(value.is_finite() && est.error <= MOMENT_REL_TOL * value) {
        return Err(Error::Divergent(format!(
            "quadrature stalled at {value} with error {:.3e}",
            est.error
        )));
    }
    Ok(value)
}

/// Cached `nu_1, ..., nu_n` for one channel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseMoments {
    nu: Vec<f64>,
}

impl InverseMoments {
    pub fn new(model: &ChannelModel, max_order: usize) -> Result<Self> {
        let nu = (1..=max_order.max(1))
            .map(|i| inverse_moment(model, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { nu })
    }

    /// Builds the cache from explicit values, `values[i - 1] = nu_i`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("inverse moments", "need at least nu_1"));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::domain("inverse moments", format!("{bad} is not positive")));
        }
        Ok(Self { nu: values })
    }

    pub fn max_order(&self) -> usize {
        self.nu.len()
    }

    /// `nu_i` for `1 <= i <= max_order`.
    pub fn nu(&self, i: usize) -> f64 {
        self.nu[i - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.nu
    }

    /// Geometric mean of `nu_m, ..., nu_1`.
    pub fn geometric_mean_upto(&self, m: usize) -> f64 {
        geometric_mean(&self.nu[..m]).expect("moments are positive and m >= 1")
    }
}

/// `(prod v_i)^(1/n)`, accumulated in the log domain.
pub fn geometric_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("geometric mean", "empty input"));
    }
    let mut log_sum = 0.0;
    for &v in values {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain("geometric mean", format!("{v} is not positive")));
        }
        log_sum += v.ln();
    }
    Ok((log_sum / values.len() as f64).exp())
}
