//! Schedulers with causal channel knowledge.
//!
//! At slot `t` only `h_t` is known; future gains are known in distribution
//! through the inverse moments `nu_i`. Three policies are provided:
//!
//! * `Dp` – the Bellman recursion solved on a `(beta, p)` grid,
//!   `Jbar_t(beta, p) = E_h min_b [E(b, h) + Jbar_{t-1}(beta - b, p)]`
//!   with `Jbar_1(beta, p) = (2^beta - 1) nu_1 p`.
//! * `Ces` – certainty equivalence: future inverse gains replaced by `nu_1`.
//! * `SubII` – the box constraint relaxed, giving a closed-form continuation
//!   cost and step.
//!
//! The request probability is frozen along the recursion, i.e. the
//! continuation is evaluated at the current `p_t`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, InverseMoments};
use crate::energy::{check_bits, check_gain, check_prob, cost, realized_episode_energy, truncate, Allocation, Episode, PacketSpec};
use crate::offline::check_episode;
use crate::{Error, Result};

/// Closed-form step for a one-slot window with causal channel knowledge.
pub fn schedule_tp1_online(bits: f64, gain: f64, request_prob: f64, nu1: f64) -> f64 {
    if request_prob <= 0.0 {
        return 0.0;
    }
    truncate(0.5 * bits + 0.5 * (gain * nu1 * request_prob).log2(), bits)
}

// <beta/t + (t-1)/t * log2(h / threshold)>, shared by CES and SubII.
fn relaxed_step(slot: usize, remaining: f64, gain: f64, threshold: f64) -> f64 {
    let t = slot as f64;
    truncate(remaining / t + (t - 1.0) / t * (gain / threshold).log2(), remaining)
}

fn check_step(slot: usize, remaining: f64, gain: f64, request_prob: f64) -> Result<()> {
    if slot < 2 {
        return Err(Error::domain("slot", "online steps apply to prediction-window slots t >= 2"));
    }
    check_bits(remaining)?;
    check_gain(gain)?;
    check_prob(request_prob)
}

/// Certainty-equivalent step: the offline water-filling applied with every
/// future inverse gain set to `nu_1`.
pub fn ces_step(slot: usize, remaining: f64, gain: f64, request_prob: f64, nu1: f64) -> Result<f64> {
    check_step(slot, remaining, gain, request_prob)?;
    if request_prob <= 0.0 || remaining <= 0.0 {
        return Ok(0.0);
    }
    let m = (slot - 1) as f64;
    let threshold = 1.0 / (nu1 * request_prob.powf(1.0 / m));
    Ok(relaxed_step(slot, remaining, gain, threshold))
}

/// Closed-form approximation of `Jbar_horizon(beta, p)` obtained by dropping
/// `0 <= b <= beta`:
/// `m 2^(beta/m) G(nu_m..nu_1) p^(1/m) - (m - 1 + p) nu_1` with `m = horizon`.
pub fn subii_value(remaining: f64, request_prob: f64, horizon: usize, moments: &InverseMoments) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::domain("horizon", "must be at least 1"));
    }
    if horizon > moments.max_order() {
        return Err(Error::domain(
            "horizon",
            format!("needs nu_{horizon}, moments only go to nu_{}", moments.max_order()),
        ));
    }
    let m = horizon as f64;
    let nu1 = moments.nu(1);
    if horizon == 1 {
        // Same value, written without the 2^beta - 1 cancellation.
        return Ok(cost(remaining, 1.0) * nu1 * request_prob);
    }
    let g = moments.geometric_mean_upto(horizon);
    Ok(m * (remaining / m).exp2() * g * request_prob.powf(1.0 / m) - (m - 1.0 + request_prob) * nu1)
}

/// Minimizer of `E(b, h) + subii_value(beta - b, p, t - 1)`, clamped to
/// `[0, beta]`.
pub fn subii_step(slot: usize, remaining: f64, gain: f64, request_prob: f64, moments: &InverseMoments) -> Result<f64> {
    check_step(slot, remaining, gain, request_prob)?;
    if slot - 1 > moments.max_order() {
        return Err(Error::domain(
            "slot",
            format!("needs nu_{}, moments only go to nu_{}", slot - 1, moments.max_order()),
        ));
    }
    if request_prob <= 0.0 || remaining <= 0.0 {
        return Ok(0.0);
    }
    let m = (slot - 1) as f64;
    let g = moments.geometric_mean_upto(slot - 1);
    let threshold = 1.0 / (g * request_prob.powf(1.0 / m));
    Ok(relaxed_step(slot, remaining, gain, threshold))
}

/// Resolution of the value-function discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Uniform nodes on `[0, max_bits]`.
    pub beta_nodes: usize,
    /// Uniform nodes on `[0, 1]`.
    pub prob_nodes: usize,
    /// Coarse scan nodes of the per-step minimization over `b`.
    pub bit_nodes: usize,
    /// Quadrature nodes for the expectation over the channel gain.
    pub gain_nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            beta_nodes: 257,
            prob_nodes: 65,
            bit_nodes: 257,
            gain_nodes: 129,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("beta_nodes", self.beta_nodes),
            ("prob_nodes", self.prob_nodes),
            ("bit_nodes", self.bit_nodes),
        ] {
            if n < 2 {
                return Err(Error::domain("grid", format!("{name} = {n}, need at least 2")));
            }
        }
        if self.gain_nodes == 0 {
            return Err(Error::domain("grid", "gain_nodes must be positive"));
        }
        Ok(())
    }
}

/// One surface `Jbar_t` with its `beta`-derivative, stored column-major in
/// `p` (all `beta` nodes of one `p` node are contiguous).
#[derive(Debug, Clone, PartialEq)]
struct Surface {
    value: Vec<f64>,
    slope: Vec<f64>,
}

/// Discretized `Jbar_1, ..., Jbar_horizon`.
///
/// Reads are cubic Hermite in `beta` (using the stored derivative) and linear
/// in `p`. `Jbar_t` does not depend on the packet size, so one table built
/// for `max_bits` serves every packet up to that size.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    max_bits: f64,
    grid: GridSpec,
    nu1: f64,
    surfaces: Vec<Surface>,
}

impl ValueTables {
    pub fn horizon(&self) -> usize {
        self.surfaces.len()
    }

    pub fn max_bits(&self) -> f64 {
        self.max_bits
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn nu1(&self) -> f64 {
        self.nu1
    }

    fn beta_step(&self) -> f64 {
        self.max_bits / (self.grid.beta_nodes - 1) as f64
    }

    pub fn beta_node(&self, i: usize) -> f64 {
        i as f64 * self.beta_step()
    }

    pub fn prob_node(&self, j: usize) -> f64 {
        j as f64 / (self.grid.prob_nodes - 1) as f64
    }

    /// Stored `Jbar_horizon` at grid node `(i, j)`.
    pub fn node_value(&self, horizon: usize, i: usize, j: usize) -> f64 {
        self.surfaces[horizon - 1].value[j * self.grid.beta_nodes + i]
    }

    // Hermite read along beta at p-node column j; returns (value, d/dbeta).
    fn column(&self, s: &Surface, j: usize, beta: f64) -> (f64, f64) {
        let nb = self.grid.beta_nodes;
        let h = self.beta_step();
        let x = (beta / h).clamp(0.0, (nb - 1) as f64);
        let i = (x.floor() as usize).min(nb - 2);
        let u = x - i as f64;
        let base = j * nb + i;
        let (y0, y1) = (s.value[base], s.value[base + 1]);
        let (m0, m1) = (s.slope[base] * h, s.slope[base + 1] * h);
        let u2 = u * u;
        let u3 = u2 * u;
        let value = (2.0 * u3 - 3.0 * u2 + 1.0) * y0 + (u3 - 2.0 * u2 + u) * m0 + (-2.0 * u3 + 3.0 * u2) * y1 + (u3 - u2) * m1;
        let d = (6.0 * u2 - 6.0 * u) * y0 + (3.0 * u2 - 4.0 * u + 1.0) * m0 + (-6.0 * u2 + 6.0 * u) * y1 + (3.0 * u2 - 2.0 * u) * m1;
        (value, d / h)
    }

    fn read(&self, horizon: usize, beta: f64, p: f64) -> (f64, f64) {
        let s = &self.surfaces[horizon - 1];
        let np = self.grid.prob_nodes;
        let y = p.clamp(0.0, 1.0) * (np - 1) as f64;
        let j = (y.floor() as usize).min(np - 2);
        let w = y - j as f64;
        let lo = self.column(s, j, beta);
        if w == 0.0 {
            return lo;
        }
        let hi = self.column(s, j + 1, beta);
        ((1.0 - w) * lo.0 + w * hi.0, (1.0 - w) * lo.1 + w * hi.1)
    }

    /// Interpolated `Jbar_horizon(beta, p)`; `beta` is clamped to the table.
    pub fn value(&self, horizon: usize, beta: f64, p: f64) -> Result<f64> {
        self.check_horizon(horizon, horizon + 1)?;
        Ok(self.read(horizon, beta, p).0)
    }

    fn check_horizon(&self, needed: usize, slot: usize) -> Result<()> {
        if needed == 0 || needed > self.horizon() {
            return Err(Error::HorizonMismatch {
                available: self.horizon(),
                slot,
                needed,
            });
        }
        Ok(())
    }

    /// Identifies the inputs a table was built from; used to key caches.
    pub fn cache_key(model: &ChannelModel, max_bits: f64, horizon: usize, grid: &GridSpec) -> String {
        format!(
            "{model:?};max_bits={max_bits:?};horizon={horizon};grid={}x{}x{}x{}",
            grid.beta_nodes, grid.prob_nodes, grid.bit_nodes, grid.gain_nodes
        )
    }
}

/// Builds `Jbar_1..Jbar_horizon` on `[0, max_bits] x [0, 1]`.
///
/// `Jbar_1` is written from its closed form. Each later surface takes, for
/// every grid node and every quadrature gain, the exact minimizer of the
/// convex one-step problem (bisection on its derivative) and averages the
/// optimal values; the `beta`-derivative follows from the envelope theorem.
pub fn build_value_tables(model: &ChannelModel, max_bits: f64, horizon: usize, grid: GridSpec) -> Result<ValueTables> {
    grid.validate()?;
    if !(max_bits.is_finite() && max_bits > 0.0) {
        return Err(Error::domain("packet size", format!("{max_bits} must be positive")));
    }
    if horizon == 0 {
        return Err(Error::domain("window", "value tables need a prediction window of at least 1"));
    }
    let nu1 = crate::channel::inverse_moment(model, 1)?;
    let rule = model.expectation_rule(grid.gain_nodes);

    let nb = grid.beta_nodes;
    let np = grid.prob_nodes;
    let mut tables = ValueTables {
        max_bits,
        grid,
        nu1,
        surfaces: Vec::with_capacity(horizon),
    };

    let mut first = Surface {
        value: vec![0.0; nb * np],
        slope: vec![0.0; nb * np],
    };
    for j in 0..np {
        let p = tables.prob_node(j);
        for i in 0..nb {
            let beta = tables.beta_node(i);
            first.value[j * nb + i] = cost(beta, 1.0) * nu1 * p;
            first.slope[j * nb + i] = beta.exp2() * LN_2 * nu1 * p;
        }
    }
    tables.surfaces.push(first);

    for _ in 1..horizon {
        let columns = map_columns(np, |j| next_column(&tables, &rule, j));
        let mut next = Surface {
            value: Vec::with_capacity(nb * np),
            slope: Vec::with_capacity(nb * np),
        };
        for (v, s) in columns {
            next.value.extend(v);
            next.slope.extend(s);
        }
        tables.surfaces.push(next);
    }
    Ok(tables)
}

#[cfg(feature = "parallel")]
fn map_columns<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_columns<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

// One p-column of the next surface from the current last surface.
fn next_column(tables: &ValueTables, rule: &[(f64, f64)], j: usize) -> (Vec<f64>, Vec<f64>) {
    let nb = tables.grid.beta_nodes;
    let prev = tables.surfaces.last().expect("first surface present");
    let mut values = vec![0.0; nb];
    let mut slopes = vec![0.0; nb];
    for i in 0..nb {
        let beta = tables.beta_node(i);
        let (mut v, mut d) = (0.0, 0.0);
        for &(h, w) in rule {
            let (value, slope) = exact_step(tables, prev, j, beta, h);
            v += w * value;
            d += w * slope;
        }
        values[i] = if i == 0 { 0.0 } else { v };
        slopes[i] = d;
    }
    (values, slopes)
}

// min over b in [0, beta] of E(b, h) + prev(beta - b) at p-column j, and the
// derivative of that minimum with respect to beta.
fn exact_step(tables: &ValueTables, prev: &Surface, j: usize, beta: f64, h: f64) -> (f64, f64) {
    let marginal = |b: f64| b.exp2() * LN_2 / h - tables.column(prev, j, beta - b).1;
    let b = if beta <= 0.0 || marginal(0.0) >= 0.0 {
        0.0
    } else if marginal(beta) <= 0.0 {
        beta
    } else {
        let (mut lo, mut hi) = (0.0, beta);
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            if marginal(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let (cont, cont_slope) = tables.column(prev, j, beta - b);
    let now_slope = beta.exp2() * LN_2 / h;
    let slope = if beta <= 0.0 {
        now_slope.min(cont_slope)
    } else if b >= beta {
        now_slope
    } else {
        cont_slope
    };
    (cost(b, h) + cont, slope)
}

/// Optimal step of the discretized dynamic program and the predicted
/// expected energy from this slot on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpDecision {
    pub bits: f64,
    pub expected_energy: f64,
}

/// Minimizes `E(b, h) + Jbar_{t-1}(beta - b, p)` over `b in [0, beta]`.
pub fn dp_decision(tables: &ValueTables, slot: usize, remaining: f64, gain: f64, request_prob: f64) -> Result<DpDecision> {
    check_step(slot, remaining, gain, request_prob)?;
    tables.check_horizon(slot - 1, slot)?;
    if remaining > tables.max_bits * (1.0 + 1e-12) {
        return Err(Error::domain(
            "remaining bits",
            format!("{remaining} exceeds the table range {}", tables.max_bits),
        ));
    }
    let horizon = slot - 1;
    let objective = |b: f64| cost(b, gain) + tables.read(horizon, (remaining - b).max(0.0), request_prob).0;
    if remaining <= 0.0 || request_prob <= 0.0 {
        return Ok(DpDecision {
            bits: 0.0,
            expected_energy: objective(0.0),
        });
    }

    let n = tables.grid.bit_nodes;
    let step = remaining / (n - 1) as f64;
    let (mut best_k, mut best) = (0, f64::INFINITY);
    for k in 0..n {
        let v = objective(k as f64 * step);
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let lo = best_k.saturating_sub(1) as f64 * step;
    let hi = ((best_k + 1).min(n - 1) as f64 * step).min(remaining);
    let refined = golden_section(&objective, lo, hi, 1e-6);
    let (bits, value) = [(refined, objective(refined)), (best_k as f64 * step, best)]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("two candidates");
    Ok(DpDecision {
        bits: truncate(bits, remaining),
        expected_energy: value,
    })
}

/// Bits to send now under the discretized dynamic program.
pub fn dp_step(tables: &ValueTables, slot: usize, remaining: f64, gain: f64, request_prob: f64) -> Result<f64> {
    Ok(dp_decision(tables, slot, remaining, gain, request_prob)?.bits)
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnlinePolicy {
    Dp,
    Ces,
    #[serde(rename = "subii")]
    SubII,
}

impl OnlinePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            OnlinePolicy::Dp => "dp",
            OnlinePolicy::Ces => "ces",
            OnlinePolicy::SubII => "subii",
        }
    }
}

/// Runs an online policy over one episode. Gains are revealed one slot at a
/// time; `gains` are `h_{T+1}, ..., h_1` and `probs` are `p_{T+1}, ..., p_2`.
pub fn run_online_episode(
    spec: &PacketSpec,
    policy: OnlinePolicy,
    moments: &InverseMoments,
    tables: Option<&ValueTables>,
    gains: &[f64],
    probs: &[f64],
    requested: bool,
) -> Result<Episode> {
    check_episode(spec, gains, probs)?;
    let tables = match (policy, tables) {
        (OnlinePolicy::Dp, None) if spec.window > 0 => {
            return Err(Error::domain("value tables", "the dp policy needs prebuilt tables"));
        }
        (_, t) => t,
    };
    let mut remaining = spec.bits;
    let mut bits = Vec::with_capacity(spec.slots());
    for (i, (&h, &p)) in gains.iter().zip(probs).enumerate() {
        let slot = spec.window + 1 - i;
        let b = match policy {
            OnlinePolicy::Dp => dp_step(tables.expect("checked above"), slot, remaining, h, p)?,
            OnlinePolicy::Ces => ces_step(slot, remaining, h, p, moments.nu(1))?,
            OnlinePolicy::SubII => subii_step(slot, remaining, h, p, moments)?,
        };
        bits.push(b);
        remaining = (remaining - b).max(0.0);
    }
    bits.push(remaining);
    let allocation = Allocation::new(bits);
    let energy = realized_episode_energy(&allocation, gains, requested)?;
    Ok(Episode { allocation, energy })
}

const CACHE_MAGIC: &[u8; 8] = b"PSVTAB01";

impl ValueTables {
    /// Flat little-endian encoding: magic, key, grid, range, `nu_1`, then
    /// each surface's values and slopes.
    pub fn to_bytes(&self, key: &str) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&(key.len() as u64).to_le_bytes());
        out.extend_from_slice(key.as_bytes());
        for n in [
            self.grid.beta_nodes,
            self.grid.prob_nodes,
            self.grid.bit_nodes,
            self.grid.gain_nodes,
            self.surfaces.len(),
        ] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.max_bits.to_le_bytes());
        out.extend_from_slice(&self.nu1.to_le_bytes());
        for s in &self.surfaces {
            for x in s.value.iter().chain(&s.slope) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Decodes [`ValueTables::to_bytes`] output, requiring the stored key to
    /// equal `key`.
    pub fn from_bytes(bytes: &[u8], key: &str) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CACHE_MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let key_len = r.u64()? as usize;
        let stored = r.take(key_len)?;
        if stored != key.as_bytes() {
            return Err(Error::Cache("key does not match".into()));
        }
        let grid = GridSpec {
            beta_nodes: r.u64()? as usize,
            prob_nodes: r.u64()? as usize,
            bit_nodes: r.u64()? as usize,
            gain_nodes: r.u64()? as usize,
        };
        grid.validate().map_err(|e| Error::Cache(e.to_string()))?;
        let horizon = r.u64()? as usize;
        let max_bits = r.f64()?;
        let nu1 = r.f64()?;
        let n = grid.beta_nodes * grid.prob_nodes;
        let mut surfaces = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let value = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let slope = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            surfaces.push(Surface { value, slope });
        }
        if r.pos != bytes.len() {
            return Err(Error::Cache("trailing bytes".into()));
        }
        Ok(ValueTables {
            max_bits,
            grid,
            nu1,
            surfaces,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Cache("truncated".into()));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
