//! Schedulers with non-causal channel knowledge.
//!
//! At slot `t` the source knows `h_t, ..., h_1` and the current request
//! probability `p_t`. It minimizes
//!
//! ```text
//! sum_{i=2..t} (2^{b_i} - 1) / h_i  +  p_t (2^{b_1} - 1) / h_1
//! s.t. sum b_i = beta_t,  b_i >= 0
//! ```
//!
//! which is water-filling over the gains `h_t, ..., h_2, h_1 / p_t`. Only
//! `b_t` is used; the problem is re-solved next slot with a fresh `p`.

use crate::energy::{check_bits, check_gain, check_prob, cost, realized_episode_energy, truncate, Allocation, Episode, PacketSpec};
use crate::{Error, Result};

/// Largest window the brute-force oracle accepts.
pub const BRUTE_FORCE_MAX_SLOTS: usize = 5;

/// Closed-form proactive bits for a one-slot prediction window.
///
/// `gain_now` is `h_2`, `gain_deadline` is `h_1`, `request_prob` is `p_2`.
pub fn schedule_tp1(bits: f64, gain_now: f64, gain_deadline: f64, request_prob: f64) -> f64 {
    if request_prob <= 0.0 {
        return 0.0;
    }
    let effective = gain_deadline / request_prob;
    truncate(0.5 * bits + 0.5 * (gain_now / effective).log2(), bits)
}

/// `f(b)`, `f'(b)` and `f''(b)` of the one-slot-window objective
/// `(2^b - 1)/h_2 + p_2 (2^{B-b} - 1)/h_1`.
pub fn tp1_objective(bits: f64, gain_now: f64, gain_deadline: f64, request_prob: f64, b: f64) -> (f64, f64, f64) {
    let ln2 = std::f64::consts::LN_2;
    let now = b.exp2() / gain_now;
    let later = (bits - b).exp2() / gain_deadline * request_prob;
    let value = cost(b, gain_now) + request_prob * cost(bits - b, gain_deadline);
    (value, ln2 * (now - later), ln2 * ln2 * (now + later))
}

/// Data of the per-slot re-solve at slot `t = gains.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineInstance {
    /// `beta_t`.
    pub remaining: f64,
    /// `h_t, h_{t-1}, ..., h_1`.
    pub gains: Vec<f64>,
    /// `p_t`.
    pub request_prob: f64,
}

impl OfflineInstance {
    pub fn new(remaining: f64, gains: Vec<f64>, request_prob: f64) -> Result<Self> {
        check_bits(remaining)?;
        check_prob(request_prob)?;
        if gains.is_empty() {
            return Err(Error::domain("gains", "at least the deadline gain is required"));
        }
        for &h in &gains {
            check_gain(h)?;
        }
        Ok(Self {
            remaining,
            gains,
            request_prob,
        })
    }

    /// Current slot index `t`.
    pub fn slot(&self) -> usize {
        self.gains.len()
    }

    /// Expected energy of a full plan `b_t, ..., b_1` seen from this slot.
    pub fn objective(&self, plan: &[f64]) -> f64 {
        let n = self.gains.len();
        let mut total = 0.0;
        for (i, (&b, &h)) in plan.iter().zip(&self.gains).enumerate() {
            let e = cost(b, h);
            total += if i + 1 == n { self.request_prob * e } else { e };
        }
        total
    }

    /// Gains entering the water-filling, the deadline gain inflated to
    /// `h_1 / p_t`. Infinite when `p_t = 0`.
    pub fn effective_gains(&self) -> Vec<f64> {
        let mut g = self.gains.clone();
        if let Some(last) = g.last_mut() {
            *last = if self.request_prob > 0.0 {
                *last / self.request_prob
            } else {
                f64::INFINITY
            };
        }
        g
    }
}

/// Converged water-filling state for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillSolution {
    /// Full solved plan `b_t, ..., b_1`, summing to `beta_t`.
    pub bits: Vec<f64>,
    /// Threshold gain; a slot is used iff its effective gain exceeds it.
    /// Infinite when `p_t = 0`.
    pub threshold: f64,
    /// Membership of each effective gain in the active set.
    pub active: Vec<bool>,
    pub effective_gains: Vec<f64>,
}

impl WaterfillSolution {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// `2^(-beta/N) * G(active gains)` recomputed from the active set.
    pub fn recomputed_threshold(&self, remaining: f64) -> f64 {
        let logs: Vec<f64> = self
            .effective_gains
            .iter()
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .map(|(h, _)| h.log2())
            .collect();
        if logs.is_empty() {
            return self.threshold;
        }
        let n = logs.len() as f64;
        (logs.iter().sum::<f64>() / n - remaining / n).exp2()
    }
}

/// Solves the per-slot problem by iterative exclusion: start with every
/// gain active, compute the threshold from the active set, drop members at
/// or below it, repeat until nothing is dropped.
pub fn solve_window(inst: &OfflineInstance) -> WaterfillSolution {
    let t = inst.gains.len();
    let effective = inst.effective_gains();
    let beta = inst.remaining;

    if inst.request_prob <= 0.0 {
        let mut bits = vec![0.0; t];
        bits[t - 1] = beta;
        let mut active = vec![false; t];
        active[t - 1] = true;
        return WaterfillSolution {
            bits,
            threshold: f64::INFINITY,
            active,
            effective_gains: effective,
        };
    }
    if beta <= 0.0 {
        let top = effective.iter().copied().fold(0.0, f64::max);
        return WaterfillSolution {
            bits: vec![0.0; t],
            threshold: top,
            active: vec![false; t],
            effective_gains: effective,
        };
    }

    let logs: Vec<f64> = effective.iter().map(|h| h.log2()).collect();
    let mut active = vec![true; t];
    let mut log_threshold;
    loop {
        let (sum, n) = logs
            .iter()
            .zip(&active)
            .filter(|(_, a)| **a)
            .fold((0.0, 0usize), |(s, n), (l, _)| (s + l, n + 1));
        let nf = n as f64;
        log_threshold = sum / nf - beta / nf;
        let mut dropped = false;
        for (a, &l) in active.iter_mut().zip(&logs) {
            if *a && l <= log_threshold {
                *a = false;
                dropped = true;
            }
        }
        // With beta > 0 the largest gain always survives, so the set never
        // empties.
        if !dropped {
            break;
        }
    }
    let bits = logs
        .iter()
        .zip(&active)
        .map(|(&l, &a)| if a { truncate(l - log_threshold, beta) } else { 0.0 })
        .collect();
    WaterfillSolution {
        bits,
        threshold: log_threshold.exp2(),
        active,
        effective_gains: effective,
    }
}

/// Bits to send now, `<log2(h_t / threshold)>` clamped to `[0, beta_t]`.
pub fn schedule_step(inst: &OfflineInstance) -> Result<f64> {
    if inst.slot() < 2 {
        return Err(Error::domain(
            "slot",
            "the water-filling step applies to prediction-window slots t >= 2",
        ));
    }
    if inst.request_prob <= 0.0 || inst.remaining <= 0.0 {
        return Ok(0.0);
    }
    let sol = solve_window(inst);
    Ok(truncate(sol.bits[0], inst.remaining))
}

pub(crate) fn check_episode(spec: &PacketSpec, gains: &[f64], probs: &[f64]) -> Result<()> {
    if gains.len() != spec.slots() {
        return Err(Error::LengthMismatch {
            name: "episode gains",
            expected: spec.slots(),
            actual: gains.len(),
        });
    }
    if probs.len() != spec.window {
        return Err(Error::LengthMismatch {
            name: "request probabilities",
            expected: spec.window,
            actual: probs.len(),
        });
    }
    for &h in gains {
        check_gain(h)?;
    }
    for &p in probs {
        check_prob(p)?;
    }
    Ok(())
}

/// Runs the offline policy over one episode.
///
/// `gains` are `h_{T+1}, ..., h_1`; `probs` are `p_{T+1}, ..., p_2`.
pub fn run_offline_episode(spec: &PacketSpec, gains: &[f64], probs: &[f64], requested: bool) -> Result<Episode> {
    check_episode(spec, gains, probs)?;
    let mut remaining = spec.bits;
    let mut bits = Vec::with_capacity(spec.slots());
    for (i, &p) in probs.iter().enumerate() {
        let b = if remaining <= 0.0 || p <= 0.0 {
            0.0
        } else {
            let inst = OfflineInstance {
                remaining,
                gains: gains[i..].to_vec(),
                request_prob: p,
            };
            schedule_step(&inst)?
        };
        bits.push(b);
        remaining = (remaining - b).max(0.0);
    }
    bits.push(remaining);
    let allocation = Allocation::new(bits);
    let energy = realized_episode_energy(&allocation, gains, requested)?;
    Ok(Episode { allocation, energy })
}

/// Exhaustive minimization of the per-slot objective over the grid
/// `b_t, ..., b_2 in {0, step, 2 step, ...}` with the deadline slot taking
/// the remainder.
///
/// Enumerates the simplex grid slot by slot (min-plus convolution of the
/// per-slot cost tables), which visits the same candidate set as nested
/// loops and returns the same minimizer.
pub fn brute_force_allocation(inst: &OfflineInstance, step: f64) -> Result<Allocation> {
    let t = inst.slot();
    if t > BRUTE_FORCE_MAX_SLOTS {
        return Err(Error::OracleTooLarge {
            slots: t,
            limit: BRUTE_FORCE_MAX_SLOTS,
        });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::domain("grid step", format!("{step} must be positive")));
    }
    let beta = inst.remaining;
    if beta <= 0.0 {
        return Ok(Allocation::new(vec![0.0; t]));
    }
    if t == 1 {
        return Ok(Allocation::new(vec![beta]));
    }
    let n = (beta / step + 1e-9).floor() as usize;
    let table = |h: f64| -> Vec<f64> { (0..=n).map(|k| cost(k as f64 * step, h)).collect() };

    // best[k]: least cost of the first slots using exactly k grid units.
    let mut best = table(inst.gains[0]);
    let mut choices: Vec<Vec<usize>> = Vec::with_capacity(t - 2);
    for &h in &inst.gains[1..t - 1] {
        let f = table(h);
        let mut next = vec![f64::INFINITY; n + 1];
        let mut arg = vec![0usize; n + 1];
        for k in 0..=n {
            for j in 0..=k {
                let v = best[k - j] + f[j];
                if v < next[k] {
                    next[k] = v;
                    arg[k] = j;
                }
            }
        }
        best = next;
        choices.push(arg);
    }
    let h1 = inst.gains[t - 1];
    let p = inst.request_prob;
    let mut total_units = 0;
    let mut least = f64::INFINITY;
    for (k, &c) in best.iter().enumerate() {
        let v = c + p * cost((beta - k as f64 * step).max(0.0), h1);
        if v < least {
            least = v;
            total_units = k;
        }
    }
    let mut plan = vec![0.0; t];
    plan[t - 1] = (beta - total_units as f64 * step).max(0.0);
    let mut k = total_units;
    for (slot, arg) in choices.iter().enumerate().rev() {
        let j = arg[k];
        plan[slot + 1] = j as f64 * step;
        k -= j;
    }
    plan[0] = k as f64 * step;
    Ok(Allocation::new(plan))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_min_tp1(bits: f64, h2: f64, h1: f64, p2: f64, step: f64) -> f64 {
        let n = (bits / step).round() as usize;
        (0..=n)
            .map(|k| (k as f64 * step).min(bits))
            .min_by(|a, b| {
                let fa = tp1_objective(bits, h2, h1, p2, *a).0;
                let fb = tp1_objective(bits, h2, h1, p2, *b).0;
                fa.total_cmp(&fb)
            })
            .unwrap()
    }

    #[test]
    fn tp1_equal_split() {
        assert_eq!(schedule_tp1(2.0, 1.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn tp1_silent_below_boundary() {
        let (b, p, h1) = (4.0f64, 0.8, 1.3);
        let h2 = (-b).exp2() * h1 / p;
        assert_eq!(schedule_tp1(b, h2, h1, p), 0.0);
        assert_eq!(schedule_tp1(b, 0.5 * h2, h1, p), 0.0);
    }

    #[test]
    fn tp1_grid_oracle_example() {
        // Frozen from the 1e-5 grid minimizer.
        let oracle = grid_min_tp1(2.0, 1.0, 1.0, 0.5, 1e-5);
        assert!((oracle - 0.5).abs() < 1e-5, "{oracle}");
        assert!((schedule_tp1(2.0, 1.0, 1.0, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tp1_zero_probability() {
        assert_eq!(schedule_tp1(3.0, 100.0, 0.01, 0.0), 0.0);
    }

    #[test]
    fn tp1_curvature_nonnegative() {
        for &(b, h2, h1, p) in &[(4.0, 0.3, 2.0, 0.6), (10.0, 0.001, 5.0, 1.0), (0.5, 8.0, 0.01, 0.01)] {
            for i in 0..=200 {
                let x = b * i as f64 / 200.0;
                assert!(tp1_objective(b, h2, h1, p, x).2 >= 0.0);
            }
        }
    }

    #[test]
    fn step_symmetric_split() {
        let inst = OfflineInstance::new(3.0, vec![1.5, 1.5, 1.5], 1.0).unwrap();
        assert!((schedule_step(&inst).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_zero_probability_and_zero_remaining() {
        let inst = OfflineInstance::new(3.0, vec![9.0, 1.0, 0.2], 0.0).unwrap();
        assert_eq!(schedule_step(&inst).unwrap(), 0.0);
        let sol = solve_window(&inst);
        assert_eq!(sol.bits, vec![0.0, 0.0, 3.0]);

        let inst = OfflineInstance::new(0.0, vec![9.0, 1.0, 0.2], 0.7).unwrap();
        assert_eq!(schedule_step(&inst).unwrap(), 0.0);
        assert_eq!(brute_force_allocation(&inst, 1e-3).unwrap().bits, vec![0.0; 3]);
    }

    #[test]
    fn step_requires_window_slot() {
        let inst = OfflineInstance::new(1.0, vec![1.0], 1.0).unwrap();
        assert!(schedule_step(&inst).is_err());
    }

    #[test]
    fn instance_validation() {
        assert!(OfflineInstance::new(-1.0, vec![1.0, 1.0], 0.5).is_err());
        assert!(OfflineInstance::new(1.0, vec![1.0, 0.0], 0.5).is_err());
        assert!(OfflineInstance::new(1.0, vec![1.0, 1.0], 1.5).is_err());
        assert!(OfflineInstance::new(1.0, vec![], 0.5).is_err());
    }

    #[test]
    fn solution_sums_to_remaining_and_threshold_consistent() {
        let inst = OfflineInstance::new(3.0, vec![0.5, 2.0, 1.0, 1.0], 0.8).unwrap();
        let sol = solve_window(&inst);
        assert!((sol.bits.iter().sum::<f64>() - 3.0).abs() < 1e-12);
        for (i, (&h, &a)) in sol.effective_gains.iter().zip(&sol.active).enumerate() {
            assert_eq!(a, h > sol.threshold, "slot {i}");
            assert_eq!(sol.bits[i] > 0.0, a);
        }
        assert!((sol.recomputed_threshold(3.0) - sol.threshold).abs() <= 1e-12 * sol.threshold);
    }

    #[test]
    fn episode_reactive_case() {
        let spec = PacketSpec::new(3.0, 0).unwrap();
        let ep = run_offline_episode(&spec, &[0.5], &[], true).unwrap();
        assert_eq!(ep.allocation.bits, vec![3.0]);
        assert_eq!(ep.energy, 7.0 / 0.5);
        let ep = run_offline_episode(&spec, &[0.5], &[], false).unwrap();
        assert_eq!(ep.energy, 0.0);
    }

    #[test]
    fn episode_tp1_matches_closed_form() {
        let spec = PacketSpec::new(5.0, 1).unwrap();
        let (h2, h1, p) = (1.7, 0.4, 0.35);
        let ep = run_offline_episode(&spec, &[h2, h1], &[p], true).unwrap();
        let b2 = schedule_tp1(5.0, h2, h1, p);
        assert!((ep.allocation.bits[0] - b2).abs() < 1e-12);
        assert!((ep.allocation.bits[1] - (5.0 - b2)).abs() < 1e-12);
    }

    #[test]
    fn episode_input_lengths() {
        let spec = PacketSpec::new(5.0, 2).unwrap();
        assert!(run_offline_episode(&spec, &[1.0, 1.0], &[0.5, 0.5], true).is_err());
        assert!(run_offline_episode(&spec, &[1.0, 1.0, 1.0], &[0.5], true).is_err());
    }

    #[test]
    fn brute_force_matches_tp1() {
        for &(b, h2, h1, p) in &[(2.0, 1.0, 1.0, 0.5), (4.0, 3.0, 0.2, 0.9), (1.5, 0.1, 2.0, 0.3)] {
            let inst = OfflineInstance::new(b, vec![h2, h1], p).unwrap();
            let plan = brute_force_allocation(&inst, 1e-3).unwrap();
            assert!((plan.bits[0] - schedule_tp1(b, h2, h1, p)).abs() <= 1e-3);
            assert!((plan.total() - b).abs() < 1e-9);
        }
    }

    #[test]
    fn brute_force_refuses_large_windows() {
        let inst = OfflineInstance::new(1.0, vec![1.0; 6], 0.5).unwrap();
        assert!(matches!(
            brute_force_allocation(&inst, 1e-3),
            Err(Error::OracleTooLarge { slots: 6, limit: 5 })
        ));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn gain() -> impl Strategy<Value = f64> {
            (-3.0f64..1.5).prop_map(|e| 10f64.powf(e))
        }

        proptest! {
            #[test]
            fn threshold_consistency(
                beta in 0.01f64..12.0,
                gains in proptest::collection::vec(gain(), 2..9),
                p in 0.01f64..=1.0,
            ) {
                let inst = OfflineInstance::new(beta, gains, p).unwrap();
                let sol = solve_window(&inst);
                prop_assert!((sol.bits.iter().sum::<f64>() - beta).abs() <= 1e-9 * beta.max(1.0));
                for (&h, &a) in sol.effective_gains.iter().zip(&sol.active) {
                    prop_assert_eq!(a, h > sol.threshold);
                }
                let again = sol.recomputed_threshold(beta);
                prop_assert!((again - sol.threshold).abs() <= 1e-12 * sol.threshold);
                let b_t = schedule_step(&inst).unwrap();
                prop_assert_eq!(b_t == 0.0, sol.effective_gains[0] <= sol.threshold);
            }

            #[test]
            fn allocation_scale_invariance(
                beta in 0.01f64..10.0,
                gains in proptest::collection::vec(gain(), 2..7),
                p in 0.01f64..=1.0,
                c in 0.01f64..100.0,
            ) {
                let inst = OfflineInstance::new(beta, gains.clone(), p).unwrap();
                let scaled = OfflineInstance::new(beta, gains.iter().map(|h| h * c).collect(), p).unwrap();
                let a = solve_window(&inst);
                let b = solve_window(&scaled);
                for (x, y) in a.bits.iter().zip(&b.bits) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
                let ea = inst.objective(&a.bits);
                let eb = scaled.objective(&b.bits);
                prop_assert!((eb - ea / c).abs() <= 1e-9 * (ea / c).max(1e-12));
            }

            #[test]
            fn tp1_monotone(
                b in 0.1f64..10.0,
                h2 in gain(), h1 in gain(), p in 0.01f64..=1.0,
                bump in 1.0f64..4.0,
            ) {
                let base = schedule_tp1(b, h2, h1, p);
                prop_assert!(schedule_tp1(b, h2 * bump, h1, p) >= base);
                prop_assert!(schedule_tp1(b, h2, h1 * bump, p) <= base);
                prop_assert!(schedule_tp1(b, h2, h1, (p * bump).min(1.0)) >= base);
            }

            #[test]
            fn analytic_beats_grid_oracle(
                beta in 0.1f64..3.0,
                gains in proptest::collection::vec(gain(), 2..5),
                p in 0.05f64..=1.0,
            ) {
                let inst = OfflineInstance::new(beta, gains, p).unwrap();
                let sol = solve_window(&inst);
                let grid = brute_force_allocation(&inst, 1e-2).unwrap();
                prop_assert!(inst.objective(&sol.bits) <= inst.objective(&grid.bits) + 1e-6);
            }
        }
    }
}
