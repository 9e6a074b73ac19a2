//! Energy model and packet-state bookkeeping shared by every scheduler.
//!
//! Energies are in units where the bandwidth-slot-duration product and the
//! noise variance are both one, so sending `b` bits over gain `h` costs
//! `(2^b - 1) / h`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Packet size and prediction-window length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketSpec {
    /// Packet size in bits, treated as a continuous quantity.
    pub bits: f64,
    /// Number of prediction-window slots. Zero is the reactive case.
    pub window: usize,
}

impl PacketSpec {
    pub fn new(bits: f64, window: usize) -> Result<Self> {
        if !(bits.is_finite() && bits > 0.0) {
            return Err(Error::domain(
                "packet size",
                format!("{bits} is not a positive finite number of bits"),
            ));
        }
        Ok(Self { bits, window })
    }

    /// Number of slots in an episode, prediction window plus deadline.
    pub fn slots(&self) -> usize {
        self.window + 1
    }
}

/// Everything a scheduler sees at the start of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotState {
    /// Slot index, counting down to 1 at the deadline.
    pub slot: usize,
    /// Bits still to be delivered.
    pub remaining: f64,
    /// Channel gain of this slot.
    pub gain: f64,
    /// Current estimate of the probability that the request arrives.
    pub request_prob: f64,
}

/// Per-slot bit counts ordered by descending slot index, `b_{T+1}, ..., b_1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Allocation {
    pub bits: Vec<f64>,
}

impl Allocation {
    pub fn new(bits: Vec<f64>) -> Self {
        Self { bits }
    }

    pub fn total(&self) -> f64 {
        self.bits.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bits sent in the deadline slot.
    pub fn deadline_bits(&self) -> f64 {
        self.bits.last().copied().unwrap_or(0.0)
    }
}

/// Outcome of running one scheduler over one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub allocation: Allocation,
    /// Energy actually spent given the realized request indicator.
    pub energy: f64,
}

/// Clamps `x` to `[0, upper]`.
///
/// NaN maps to zero so that degenerate log terms never leak out of a policy.
#[inline]
pub fn truncate(x: f64, upper: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        0.0
    } else if x >= upper {
        upper
    } else {
        x
    }
}

/// `(2^b - 1) / h`; `expm1` below a quarter bit where `exp2 - 1` cancels.
#[inline]
pub(crate) fn cost(bits: f64, gain: f64) -> f64 {
    let numer = if bits < 0.25 {
        (bits * std::f64::consts::LN_2).exp_m1()
    } else {
        bits.exp2() - 1.0
    };
    numer / gain
}

pub(crate) fn check_gain(gain: f64) -> Result<()> {
    if gain.is_finite() && gain > 0.0 {
        Ok(())
    } else {
        Err(Error::domain("channel gain", format!("{gain} is not positive and finite")))
    }
}

pub(crate) fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain("request probability", format!("{p} is outside [0, 1]")))
    }
}

pub(crate) fn check_bits(bits: f64) -> Result<()> {
    if bits.is_finite() && bits >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain("bits", format!("{bits} is negative or non-finite")))
    }
}

/// Energy to push `bits` through one slot with channel gain `gain`.
pub fn energy(bits: f64, gain: f64) -> Result<f64> {
    check_bits(bits)?;
    check_gain(gain)?;
    Ok(cost(bits, gain))
}

/// Energy of the reactive (no prediction) network: the whole packet goes out
/// in the deadline slot, and only if it was requested.
pub fn reactive_energy(bits: f64, gain: f64, requested: bool) -> Result<f64> {
    let e = energy(bits, gain)?;
    Ok(if requested { e } else { 0.0 })
}

/// Energy actually spent over one episode.
///
/// Prediction-window energy is always spent; deadline-slot energy only when
/// the request arrives.
pub fn realized_episode_energy(alloc: &Allocation, gains: &[f64], requested: bool) -> Result<f64> {
    if alloc.len() != gains.len() {
        return Err(Error::LengthMismatch {
            name: "channel gains",
            expected: alloc.len(),
            actual: gains.len(),
        });
    }
    let Some((&deadline_bits, window)) = alloc.bits.split_last() else {
        return Ok(0.0);
    };
    let mut total = 0.0;
    for (&b, &h) in window.iter().zip(gains) {
        total += energy(b, h)?;
    }
    let deadline = energy(deadline_bits, gains[gains.len() - 1])?;
    if requested {
        total += deadline;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_examples() {
        assert_eq!(energy(0.0, 2.7).unwrap(), 0.0);
        assert_eq!(energy(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(energy(2.0, 0.5).unwrap(), 6.0);
    }

    #[test]
    fn energy_rejects_bad_inputs() {
        assert!(energy(-0.1, 1.0).is_err());
        assert!(energy(1.0, 0.0).is_err());
        assert!(energy(1.0, -2.0).is_err());
        assert!(energy(1.0, f64::INFINITY).is_err());
        assert!(energy(1.0, f64::NAN).is_err());
        assert!(energy(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn reactive_examples() {
        assert_eq!(reactive_energy(3.0, 1.0, true).unwrap(), 7.0);
        assert_eq!(reactive_energy(3.0, 1.0, false).unwrap(), 0.0);
        assert_eq!(reactive_energy(5.0, 0.25, true).unwrap(), 124.0);
        assert!(reactive_energy(5.0, 0.0, false).is_err());
    }

    #[test]
    fn episode_examples() {
        let b = 3.0;
        let silent = Allocation::new(vec![0.0, 0.0, 0.0, b]);
        assert_eq!(realized_episode_energy(&silent, &[0.3, 2.0, 1.0, 0.7], false).unwrap(), 0.0);

        let wasted = Allocation::new(vec![b, 0.0]);
        assert_eq!(realized_episode_energy(&wasted, &[1.0, 1.0], false).unwrap(), b.exp2() - 1.0);

        let split = Allocation::new(vec![1.0, 1.0]);
        assert_eq!(realized_episode_energy(&split, &[1.0, 1.0], true).unwrap(), 2.0);
    }

    #[test]
    fn episode_length_mismatch() {
        let a = Allocation::new(vec![1.0, 1.0]);
        assert!(matches!(
            realized_episode_energy(&a, &[1.0], true),
            Err(Error::LengthMismatch {
                expected: 2,
                actual: 1,
                ..
            })
        ));
    }

    #[test]
    fn truncate_clamps() {
        assert_eq!(truncate(-1.0, 2.0), 0.0);
        assert_eq!(truncate(3.0, 2.0), 2.0);
        assert_eq!(truncate(1.5, 2.0), 1.5);
        assert_eq!(truncate(f64::NAN, 2.0), 0.0);
        assert_eq!(truncate(f64::INFINITY, 2.0), 2.0);
        assert_eq!(truncate(f64::NEG_INFINITY, 2.0), 0.0);
    }

    #[test]
    fn packet_spec_validation() {
        assert!(PacketSpec::new(0.0, 1).is_err());
        assert!(PacketSpec::new(f64::NAN, 1).is_err());
        assert_eq!(PacketSpec::new(4.0, 2).unwrap().slots(), 3);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn convex_in_bits(a in 0.0f64..12.0, c in 0.0f64..12.0, w in 0.01f64..0.99, h in 0.001f64..50.0) {
                let mid = energy(w * a + (1.0 - w) * c, h).unwrap();
                let chord = w * energy(a, h).unwrap() + (1.0 - w) * energy(c, h).unwrap();
                prop_assert!(mid <= chord * (1.0 + 1e-12) + 1e-12);
            }

            #[test]
            fn gain_scale_law(b in 0.0f64..12.0, h in 0.001f64..50.0, c in 0.01f64..100.0) {
                let lhs = energy(b, c * h).unwrap();
                let rhs = energy(b, h).unwrap() / c;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
            }

            #[test]
            fn unrequested_episode_ignores_deadline_bits(
                b in proptest::collection::vec(0.0f64..4.0, 1..6),
                last_a in 0.0f64..8.0,
                last_b in 0.0f64..8.0,
                h in proptest::collection::vec(0.01f64..10.0, 6),
            ) {
                let mut x = b.clone();
                x.push(last_a);
                let mut y = b.clone();
                y.push(last_b);
                let gains = &h[..x.len()];
                let ex = realized_episode_energy(&Allocation::new(x), gains, false).unwrap();
                let ey = realized_episode_energy(&Allocation::new(y), gains, false).unwrap();
                prop_assert_eq!(ex, ey);
            }
        }
    }
}
