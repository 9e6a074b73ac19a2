//! Markov location model and the request-probability estimator.
//!
//! Transitions run along descending slot index: `transition[i][j]` is the
//! probability of being at location `j` in slot `t` given location `i` in slot
//! `t + 1`. The request probability seen from location `j` at slot `t` is
//! then row `j` of `L^(t-1)` dotted with the request-statistics vector `g`.

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row sums must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Iteration cap for [`LocationModel::steady_state`].
pub const STEADY_STATE_MAX_ITER: usize = 100_000;
pub const STEADY_STATE_TOL: f64 = 1e-12;

/// Zero-based location index (location `l_{j+1}` in one-based labels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLocationModel", into = "RawLocationModel")]
pub struct LocationModel {
    k: usize,
    // Row-major k x k.
    transition: Vec<f64>,
    request: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLocationModel {
    transition: Vec<Vec<f64>>,
    request: Vec<f64>,
}

impl TryFrom<RawLocationModel> for LocationModel {
    type Error = Error;

    fn try_from(raw: RawLocationModel) -> Result<Self> {
        LocationModel::new(raw.transition, raw.request)
    }
}

impl From<LocationModel> for RawLocationModel {
    fn from(m: LocationModel) -> Self {
        RawLocationModel {
            transition: m.transition.chunks(m.k).map(<[f64]>::to_vec).collect(),
            request: m.request,
        }
    }
}

impl LocationModel {
    pub fn new(transition: Vec<Vec<f64>>, request: Vec<f64>) -> Result<Self> {
        let k = request.len();
        if k == 0 {
            return Err(Error::domain("location model", "at least one location is required"));
        }
        if transition.len() != k {
            return Err(Error::LengthMismatch {
                name: "transition rows",
                expected: k,
                actual: transition.len(),
            });
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != k {
                return Err(Error::LengthMismatch {
                    name: "transition row",
                    expected: k,
                    actual: row.len(),
                });
            }
            if let Some(x) = row.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::domain(
                    "transition matrix",
                    format!("row {} has entry {x} outside [0, 1]", i + 1),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::domain("transition matrix", format!("row {} sums to {sum}", i + 1)));
            }
        }
        if let Some(g) = request.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::domain("request statistics", format!("{g} is outside [0, 1]")));
        }
        Ok(Self {
            k,
            transition: transition.concat(),
            request,
        })
    }

    /// Uniform row entries normalized to sum one, and uniform request
    /// statistics on `[0, 1]`.
    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("location count", "k must be at least 1"));
        }
        let mut transition = Vec::with_capacity(k * k);
        for _ in 0..k {
            let row: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                transition.extend(row.iter().map(|x| x / sum));
            } else {
                transition.extend(std::iter::repeat_n(1.0 / k as f64, k));
            }
        }
        let request = (0..k).map(|_| rng.random::<f64>()).collect();
        Ok(Self { k, transition, request })
    }

    pub fn locations(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.transition[i * self.k..(i + 1) * self.k]
    }

    pub fn request_stats(&self) -> &[f64] {
        &self.request
    }

    fn check(&self, loc: Location) -> Result<()> {
        if loc.0 < self.k {
            Ok(())
        } else {
            Err(Error::domain("location", format!("index {} is outside 1..={}", loc.0 + 1, self.k)))
        }
    }

    /// `row * L`, renormalized to sum one.
    fn advance(&self, row: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.k];
        for (i, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (n, &l) in next.iter_mut().zip(self.row(i)) {
                *n += w * l;
            }
        }
        let sum: f64 = next.iter().sum();
        if sum > 0.0 {
            next.iter_mut().for_each(|x| *x /= sum);
        }
        next
    }

    /// Row `from` of `L^(slot - 1)`: the distribution of the location at the
    /// deadline slot given the location at `slot`.
    pub fn deadline_distribution(&self, from: Location, slot: usize) -> Result<Vec<f64>> {
        self.check(from)?;
        if slot == 0 {
            return Err(Error::domain("slot", "slots are numbered from 1"));
        }
        let mut row = vec![0.0; self.k];
        row[from.0] = 1.0;
        for _ in 1..slot {
            row = self.advance(&row);
        }
        Ok(row)
    }

    /// `L^n` as row-major rows, by repeated multiplication with row
    /// renormalization.
    pub fn matrix_power(&self, n: usize) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|i| {
                let mut row = vec![0.0; self.k];
                row[i] = 1.0;
                for _ in 0..n {
                    row = self.advance(&row);
                }
                row
            })
            .collect()
    }

    /// Probability that the request arrives, seen from location `from` at
    /// slot `slot`.
    pub fn estimate_request_probability(&self, from: Location, slot: usize) -> Result<f64> {
        let dist = self.deadline_distribution(from, slot)?;
        let p: f64 = dist.iter().zip(&self.request).map(|(d, g)| d * g).sum();
        Ok(p.clamp(0.0, 1.0))
    }

    fn irreducible(&self) -> bool {
        // Every state reachable from 0 and 0 reachable from every state.
        let reach = |forward: bool| {
            let mut seen = vec![false; self.k];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..self.k {
                    let w = if forward {
                        self.transition[i * self.k + j]
                    } else {
                        self.transition[j * self.k + i]
                    };
                    if w > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Stationary distribution `mu = mu L`.
    ///
    /// Iterates on the lazy chain `(I + L) / 2`, which has the same fixed
    /// point and is aperiodic whenever `L` is irreducible.
    pub fn steady_state(&self) -> Result<Vec<f64>> {
        if !self.irreducible() {
            return Err(Error::ReducibleChain);
        }
        let mut mu = vec![1.0 / self.k as f64; self.k];
        for _ in 0..STEADY_STATE_MAX_ITER {
            let stepped = self.advance(&mu);
            let next: Vec<f64> = mu.iter().zip(&stepped).map(|(a, b)| 0.5 * (a + b)).collect();
            let delta = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            mu = next;
            if delta < STEADY_STATE_TOL {
                let sum: f64 = mu.iter().sum();
                return Ok(mu.into_iter().map(|x| x / sum).collect());
            }
        }
        Err(Error::NotConverged(STEADY_STATE_MAX_ITER))
    }

    /// Stationary probability that a request arrives, `mu . g`.
    pub fn stationary_request_probability(&self) -> Result<f64> {
        let mu = self.steady_state()?;
        Ok(mu.iter().zip(&self.request).map(|(m, g)| m * g).sum())
    }

    /// Locations `X(T+1), ..., X(1)` starting from `start`, `length` entries.
    pub fn sample_path<R: Rng + ?Sized>(&self, start: Location, length: usize, rng: &mut R) -> Result<Vec<Location>> {
        self.check(start)?;
        if length == 0 {
            return Err(Error::domain("path length", "must be at least 1"));
        }
        let rows = self.row_samplers()?;
        let mut path = Vec::with_capacity(length);
        let mut at = start;
        path.push(at);
        for _ in 1..length {
            at = Location(rows[at.0].sample(rng));
            path.push(at);
        }
        Ok(path)
    }

    fn row_samplers(&self) -> Result<Vec<WeightedIndex<f64>>> {
        (0..self.k)
            .map(|i| WeightedIndex::new(self.row(i)).map_err(|e| Error::domain("transition matrix", e.to_string())))
            .collect()
    }

    /// Draws a location from `weights` (e.g. the stationary distribution).
    pub fn sample_from<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Location> {
        let dist = WeightedIndex::new(weights).map_err(|e| Error::domain("location weights", e.to_string()))?;
        Ok(Location(dist.sample(rng)))
    }

    /// Bernoulli draw of the request indicator from the deadline location.
    pub fn sample_request<R: Rng + ?Sized>(&self, at: Location, rng: &mut R) -> Result<bool> {
        self.check(at)?;
        Ok(self.request_from_uniform(at, rng.random::<f64>()))
    }

    /// The request indicator decided by a pre-drawn uniform `u`, so several
    /// configurations can share one draw.
    pub fn request_from_uniform(&self, at: Location, u: f64) -> bool {
        u < self.request[at.0]
    }
}

/// Free-function form of [`LocationModel::estimate_request_probability`].
pub fn estimate_request_probability(model: &LocationModel, from: Location, slot: usize) -> Result<f64> {
    model.estimate_request_probability(from, slot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity(k: usize, g: Vec<f64>) -> LocationModel {
        let rows = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        LocationModel::new(rows, g).unwrap()
    }

    fn uniform(k: usize, g: Vec<f64>) -> LocationModel {
        LocationModel::new(vec![vec![1.0 / k as f64; k]; k], g).unwrap()
    }

    #[test]
    fn identity_chain_keeps_statistics() {
        let g = vec![0.2, 0.7, 0.4];
        let m = identity(3, g.clone());
        for j in 0..3 {
            for t in 1..8 {
                assert_eq!(m.estimate_request_probability(Location(j), t).unwrap(), g[j]);
            }
        }
    }

    #[test]
    fn uniform_chain_mixes_in_one_step() {
        let g = vec![0.2, 0.7, 0.4];
        let m = uniform(3, g.clone());
        let mean = g.iter().sum::<f64>() / 3.0;
        for j in 0..3 {
            assert_eq!(m.estimate_request_probability(Location(j), 1).unwrap(), g[j]);
            for t in 2..6 {
                let p = m.estimate_request_probability(Location(j), t).unwrap();
                assert!((p - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn invalid_location_and_slot() {
        let m = uniform(3, vec![0.1, 0.2, 0.3]);
        assert!(m.estimate_request_probability(Location(3), 2).is_err());
        assert!(m.estimate_request_probability(Location(0), 0).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(LocationModel::new(vec![vec![0.5, 0.6], vec![0.5, 0.5]], vec![0.1, 0.1]).is_err());
        assert!(LocationModel::new(vec![vec![1.5, -0.5], vec![0.5, 0.5]], vec![0.1, 0.1]).is_err());
        assert!(LocationModel::new(vec![vec![0.5, 0.5]], vec![0.1, 0.1]).is_err());
        assert!(LocationModel::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0.1, 1.1]).is_err());
        assert!(LocationModel::new(vec![], vec![]).is_err());
    }

    #[test]
    fn steady_state_examples() {
        let mu = uniform(4, vec![0.0; 4]).steady_state().unwrap();
        assert!(mu.iter().all(|x| (x - 0.25).abs() < 1e-12));

        // Balance: 0.1 mu_1 = 0.5 mu_2 with mu_1 + mu_2 = 1.
        let m = LocationModel::new(vec![vec![0.9, 0.1], vec![0.5, 0.5]], vec![0.0, 1.0]).unwrap();
        let mu = m.steady_state().unwrap();
        assert!((mu[0] - 5.0 / 6.0).abs() < 1e-11, "{mu:?}");
        assert!((mu[1] - 1.0 / 6.0).abs() < 1e-11);

        assert_eq!(identity(3, vec![0.0; 3]).steady_state(), Err(Error::ReducibleChain));
    }

    #[test]
    fn periodic_chain_still_has_stationary_vector() {
        let m = LocationModel::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0, 1.0]).unwrap();
        let mu = m.steady_state().unwrap();
        assert!((mu[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn path_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = identity(3, vec![0.5; 3]);
        let path = m.sample_path(Location(1), 5, &mut rng).unwrap();
        assert_eq!(path, vec![Location(1); 5]);

        let m = LocationModel::new(vec![vec![0.0, 1.0, 0.0], vec![0.3, 0.3, 0.4], vec![0.2, 0.2, 0.6]], vec![0.5; 3]).unwrap();
        for _ in 0..200 {
            let path = m.sample_path(Location(0), 4, &mut rng).unwrap();
            assert_eq!(path[1], Location(1));
        }
        assert!(m.sample_path(Location(0), 0, &mut rng).is_err());
    }

    #[test]
    fn request_extremes() {
        let m = uniform(2, vec![1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            assert!(m.sample_request(Location(0), &mut rng).unwrap());
            assert!(!m.sample_request(Location(1), &mut rng).unwrap());
        }
    }

    #[test]
    fn random_model_valid_and_deterministic() {
        let a = LocationModel::random(3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = LocationModel::random(3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.locations(), 3);
        let rows: Vec<Vec<f64>> = (0..3).map(|i| a.row(i).to_vec()).collect();
        assert!(LocationModel::new(rows, a.request_stats().to_vec()).is_ok());
        assert!(LocationModel::random(0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        proptest! {
            #[test]
            fn estimator_tower_property(seed in any::<u64>(), k in 1usize..6, t in 2usize..12) {
                let m = LocationModel::random(k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                for i in 0..k {
                    let lhs: f64 = (0..k)
                        .map(|j| m.row(i)[j] * m.estimate_request_probability(Location(j), t - 1).unwrap())
                        .sum();
                    let rhs = m.estimate_request_probability(Location(i), t).unwrap();
                    prop_assert!((lhs - rhs).abs() <= 1e-12);
                }
            }

            #[test]
            fn estimate_in_unit_interval(seed in any::<u64>(), k in 1usize..6, t in 1usize..20, j in 0usize..6) {
                let m = LocationModel::random(k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                let p = m.estimate_request_probability(Location(j % k), t).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
            }

            #[test]
            fn powers_stay_row_stochastic(seed in any::<u64>(), k in 1usize..6, n in 0usize..20) {
                let m = LocationModel::random(k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                for row in m.matrix_power(n) {
                    let s: f64 = row.iter().sum();
                    prop_assert!((s - 1.0).abs() <= 1e-10);
                }
            }

            #[test]
            fn steady_state_is_fixed_point(seed in any::<u64>(), k in 1usize..6) {
                let m = LocationModel::random(k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                let mu = m.steady_state().unwrap();
                let s: f64 = mu.iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
                for j in 0..k {
                    let next: f64 = (0..k).map(|i| mu[i] * m.row(i)[j]).sum();
                    prop_assert!((next - mu[j]).abs() <= 1e-10);
                }
            }
        }
    }
}
