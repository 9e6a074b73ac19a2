//! Monte Carlo experiment engine.
//!
//! Each trial draws one set of random quantities and evaluates every
//! configured (packet size, window, scheduler[, request probability]) cell on
//! it, so comparisons between cells use common random numbers. Draws are made
//! for the largest window; a smaller window `T` uses the last `T + 1` slots of
//! the same draws. Because the location path is started from the stationary
//! distribution, any suffix of it is itself a stationary path.
//!
//! Trial `k` owns the ChaCha stream `k` of the master seed, so results do not
//! depend on how trials are scheduled across threads.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, InverseMoments};
use crate::energy::{reactive_energy, PacketSpec};
use crate::mobility::{Location, LocationModel};
use crate::offline::run_offline_episode;
use crate::online::{build_value_tables, dp_decision, run_online_episode, GridSpec, OnlinePolicy, ValueTables};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduler {
    Reactive,
    Offline,
    Dp,
    Ces,
    #[serde(rename = "subii")]
    SubII,
}

impl Scheduler {
    pub fn name(&self) -> &'static str {
        match self {
            Scheduler::Reactive => "reactive",
            Scheduler::Offline => "offline",
            Scheduler::Dp => "dp",
            Scheduler::Ces => "ces",
            Scheduler::SubII => "subii",
        }
    }

    fn online(&self) -> Option<OnlinePolicy> {
        match self {
            Scheduler::Dp => Some(OnlinePolicy::Dp),
            Scheduler::Ces => Some(OnlinePolicy::Ces),
            Scheduler::SubII => Some(OnlinePolicy::SubII),
            _ => None,
        }
    }
}

fn default_locations() -> usize {
    3
}

/// Where the per-slot request probabilities come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MobilityMode {
    /// Markov location process. Without an explicit `model`, a random model
    /// with `locations` states is drawn per trial, or once for the whole
    /// experiment when `fixed_model` is set.
    Markov {
        #[serde(default = "default_locations")]
        locations: usize,
        #[serde(default)]
        model: Option<LocationModel>,
        #[serde(default)]
        fixed_model: bool,
    },
    /// The request probability is the same known value in every slot, and
    /// the request arrives with that probability. One sweep point per value.
    FixedP { probs: Vec<f64> },
}

impl Default for MobilityMode {
    fn default() -> Self {
        MobilityMode::Markov {
            locations: default_locations(),
            model: None,
            fixed_model: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Packet sizes to sweep.
    pub bits: Vec<f64>,
    /// Prediction-window sizes to sweep.
    pub windows: Vec<usize>,
    pub schedulers: Vec<Scheduler>,
    pub trials: usize,
    pub seed: u64,
    pub channel: ChannelModel,
    pub mobility: MobilityMode,
    pub grid: GridSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            bits: (1..=8).map(f64::from).collect(),
            windows: vec![0, 1, 2, 4],
            schedulers: vec![Scheduler::Offline, Scheduler::Reactive],
            trials: 1000,
            seed: 1,
            channel: ChannelModel::default(),
            mobility: MobilityMode::default(),
            grid: GridSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits.is_empty() {
            return Err(Error::domain("bits", "sweep list is empty"));
        }
        if let Some(b) = self.bits.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::domain("bits", format!("{b} is not a positive packet size")));
        }
        if self.windows.is_empty() {
            return Err(Error::domain("windows", "sweep list is empty"));
        }
        if self.schedulers.is_empty() {
            return Err(Error::domain("schedulers", "no scheduler selected"));
        }
        if self.trials == 0 {
            return Err(Error::domain("trials", "must be at least 1"));
        }
        self.channel.validate()?;
        match &self.mobility {
            MobilityMode::Markov { locations, model, .. } => {
                if model.is_none() && *locations == 0 {
                    return Err(Error::domain("locations", "must be at least 1"));
                }
            }
            MobilityMode::FixedP { probs } => {
                if probs.is_empty() {
                    return Err(Error::domain("probs", "sweep list is empty"));
                }
                if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::domain("probs", format!("{p} is outside [0, 1]")));
                }
            }
        }
        if self.schedulers.contains(&Scheduler::Dp) {
            self.grid.validate()?;
        }
        Ok(())
    }

    pub fn max_window(&self) -> usize {
        self.windows.iter().copied().max().unwrap_or(0)
    }

    pub fn max_bits(&self) -> f64 {
        self.bits.iter().copied().fold(0.0, f64::max)
    }

    /// `(max_bits, horizon)` of the value tables the experiment needs, if any.
    pub fn required_tables(&self) -> Option<(f64, usize)> {
        (self.schedulers.contains(&Scheduler::Dp) && self.max_window() > 0).then(|| (self.max_bits(), self.max_window()))
    }

    fn request_points(&self) -> Vec<Option<f64>> {
        match &self.mobility {
            MobilityMode::FixedP { probs } => probs.iter().map(|p| Some(*p)).collect(),
            MobilityMode::Markov { .. } => vec![None],
        }
    }
}

/// Identifies one aggregated cell of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellKey {
    pub bits: f64,
    /// Zero for the reactive baseline.
    pub window: usize,
    pub scheduler: Scheduler,
    /// Set in fixed-probability mode.
    pub request_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellEnergy {
    pub key: CellKey,
    pub requested: bool,
    pub energy: f64,
    /// Bits actually delivered over the episode.
    pub delivered: f64,
    /// Digest of the gains, probabilities and indicator this cell consumed.
    pub input_digest: u64,
    /// Dynamic-program prediction of the expected energy from the first slot.
    pub predicted: Option<f64>,
}

/// Everything one trial produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub index: usize,
    /// Digest of every random draw of the trial.
    pub draws_digest: u64,
    /// Deadline location in Markov mode.
    pub final_location: Option<Location>,
    pub cells: Vec<CellEnergy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SavedEnergy {
    /// `10 log10(reactive - proactive)`; `None` when there is no gain.
    pub difference_db: Option<f64>,
    /// `10 log10(reactive / proactive)`; `None` when there is no gain.
    pub ratio_db: Option<f64>,
}

impl SavedEnergy {
    pub fn no_gain(&self) -> bool {
        self.difference_db.is_none()
    }
}

/// Energy saved by proactive scheduling, in dB.
pub fn saved_energy_db(reactive_mean: f64, proactive_mean: f64) -> SavedEnergy {
    let diff = reactive_mean - proactive_mean;
    if !(diff > 0.0) {
        return SavedEnergy {
            difference_db: None,
            ratio_db: None,
        };
    }
    let ratio = 10.0 * (reactive_mean / proactive_mean).log10();
    SavedEnergy {
        difference_db: Some(10.0 * diff.log10()),
        ratio_db: ratio.is_finite().then_some(ratio),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub key: CellKey,
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
    /// Against the reactive mean of the same packet size (and probability);
    /// `None` on reactive rows or when reactive was not simulated.
    pub saved: Option<SavedEnergy>,
    /// Mean dynamic-program prediction, on `dp` rows.
    pub predicted_mean: Option<f64>,
}

/// A validated configuration with its precomputed moments, value tables and
/// (when fixed) location model.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    moments: InverseMoments,
    tables: Option<Arc<ValueTables>>,
    fixed_model: Option<(LocationModel, Vec<f64>)>,
}

impl Experiment {
    /// Validates the configuration and builds any value tables it needs.
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let tables = match config.required_tables() {
            Some((max_bits, horizon)) => Some(Arc::new(build_value_tables(&config.channel, max_bits, horizon, config.grid)?)),
            None => None,
        };
        Self::with_tables(config, tables)
    }

    /// Like [`Experiment::prepare`] with value tables supplied by the caller
    /// (e.g. loaded from a cache).
    pub fn with_tables(config: ExperimentConfig, tables: Option<Arc<ValueTables>>) -> Result<Self> {
        config.validate()?;
        if let Some((max_bits, horizon)) = config.required_tables() {
            match &tables {
                Some(t) if t.horizon() >= horizon && t.max_bits() >= max_bits => {}
                _ => return Err(Error::domain("value tables", "missing or too small for the sweep")),
            }
        }
        let needs_moments = config.schedulers.iter().any(|s| s.online().is_some());
        let moments = if needs_moments {
            InverseMoments::new(&config.channel, config.max_window().max(1))?
        } else {
            InverseMoments::from_values(vec![1.0])?
        };
        let fixed_model = match &config.mobility {
            MobilityMode::Markov { model: Some(m), .. } => Some((m.clone(), m.steady_state()?)),
            MobilityMode::Markov {
                locations,
                model: None,
                fixed_model: true,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(u64::MAX);
                let m = LocationModel::random(*locations, &mut rng)?;
                let mu = m.steady_state()?;
                Some((m, mu))
            }
            _ => None,
        };
        Ok(Self {
            config,
            moments,
            tables,
            fixed_model,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn tables(&self) -> Option<&ValueTables> {
        self.tables.as_deref()
    }

    /// The location model shared by all trials, if there is one.
    pub fn fixed_model(&self) -> Option<&LocationModel> {
        self.fixed_model.as_ref().map(|m| &m.0)
    }

    fn trial_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index as u64);
        rng
    }

    /// Runs trial `index`: one draw of model, gains, path and request
    /// uniform, evaluated on every cell.
    pub fn run_trial(&self, index: usize) -> Result<TrialRecord> {
        let cfg = &self.config;
        let mut rng = self.trial_rng(index);
        let horizon = cfg.max_window();

        let drawn;
        let markov: Option<(&LocationModel, &[f64])> = match (&cfg.mobility, &self.fixed_model) {
            (MobilityMode::FixedP { .. }, _) => None,
            (_, Some((m, mu))) => Some((m, mu.as_slice())),
            (MobilityMode::Markov { locations, .. }, None) => {
                let m = LocationModel::random(*locations, &mut rng)?;
                let mu = m.steady_state()?;
                drawn = (m, mu);
                Some((&drawn.0, drawn.1.as_slice()))
            }
        };

        let gains = crate::channel::sample_gains(&cfg.channel, horizon + 1, &mut rng)?;
        let path = match markov {
            Some((m, mu)) => {
                let start = LocationModel::sample_from(mu, &mut rng)?;
                Some(m.sample_path(start, horizon + 1, &mut rng)?)
            }
            None => None,
        };
        let u: f64 = rng.random();

        let mut hasher = DefaultHasher::new();
        for h in &gains {
            h.to_bits().hash(&mut hasher);
        }
        if let Some(p) = &path {
            p.hash(&mut hasher);
        }
        u.to_bits().hash(&mut hasher);
        let draws_digest = hasher.finish();
        let final_location = path.as_ref().and_then(|p| p.last().copied());

        let mut cells = Vec::new();
        for request_prob in cfg.request_points() {
            let requested = match (request_prob, markov, final_location) {
                (Some(p), _, _) => u < p,
                (None, Some((m, _)), Some(at)) => m.request_from_uniform(at, u),
                _ => unreachable!("Markov mode always has a path"),
            };
            let deadline_gain = gains[horizon];
            for &bits in &cfg.bits {
                if cfg.schedulers.contains(&Scheduler::Reactive) {
                    let key = CellKey {
                        bits,
                        window: 0,
                        scheduler: Scheduler::Reactive,
                        request_prob,
                    };
                    cells.push(CellEnergy {
                        key,
                        requested,
                        energy: reactive_energy(bits, deadline_gain, requested)?,
                        delivered: if requested { bits } else { 0.0 },
                        input_digest: input_digest(&gains[horizon..], &[], requested),
                        predicted: None,
                    });
                }
                for &window in &cfg.windows {
                    let spec = PacketSpec::new(bits, window)?;
                    let slot_gains = &gains[horizon - window..];
                    let probs: Vec<f64> = match (request_prob, markov, &path) {
                        (Some(p), _, _) => vec![p; window],
                        (None, Some((m, _)), Some(path)) => (0..window)
                            .map(|i| {
                                let slot = window + 1 - i;
                                m.estimate_request_probability(path[horizon + 1 - slot], slot)
                            })
                            .collect::<Result<_>>()?,
                        _ => unreachable!("Markov mode always has a path"),
                    };
                    let digest = input_digest(slot_gains, &probs, requested);
                    for &scheduler in &cfg.schedulers {
                        let (episode, predicted) = match scheduler {
                            Scheduler::Reactive => continue,
                            Scheduler::Offline => (run_offline_episode(&spec, slot_gains, &probs, requested)?, None),
                            s => {
                                let policy = s.online().expect("online scheduler");
                                let tables = self.tables.as_deref();
                                let ep = run_online_episode(&spec, policy, &self.moments, tables, slot_gains, &probs, requested)?;
                                let predicted = match (policy, tables) {
                                    (OnlinePolicy::Dp, Some(t)) if window > 0 => {
                                        Some(dp_decision(t, window + 1, bits, slot_gains[0], probs[0])?.expected_energy)
                                    }
                                    _ => None,
                                };
                                (ep, predicted)
                            }
                        };
                        let delivered = if requested {
                            episode.allocation.total()
                        } else {
                            episode.allocation.total() - episode.allocation.deadline_bits()
                        };
                        cells.push(CellEnergy {
                            key: CellKey {
                                bits,
                                window,
                                scheduler,
                                request_prob,
                            },
                            requested,
                            energy: episode.energy,
                            delivered,
                            input_digest: digest,
                            predicted,
                        });
                    }
                }
            }
        }
        Ok(TrialRecord {
            index,
            draws_digest,
            final_location,
            cells,
        })
    }

    /// Runs every trial; the result is ordered by trial index.
    pub fn run_trials(&self) -> Result<Vec<TrialRecord>> {
        map_trials(self.config.trials, |i| self.run_trial(i)).into_iter().collect()
    }

    pub fn run(&self) -> Result<Vec<SummaryRow>> {
        Ok(summarize(&self.run_trials()?))
    }
}

fn input_digest(gains: &[f64], probs: &[f64], requested: bool) -> u64 {
    let mut hasher = DefaultHasher::new();
    for x in gains.iter().chain(probs) {
        x.to_bits().hash(&mut hasher);
    }
    requested.hash(&mut hasher);
    hasher.finish()
}

#[cfg(feature = "parallel")]
fn map_trials<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_trials<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Validates, prepares and runs an experiment.
pub fn run_experiment(config: ExperimentConfig) -> Result<Vec<SummaryRow>> {
    Experiment::prepare(config)?.run()
}

// Pairwise summation; the result depends only on the order of `xs`.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and standard error of the mean.
pub fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregates trial records cell by cell. Every record must list its cells
/// in the same order, as [`Experiment::run_trial`] does.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let mut rows: Vec<SummaryRow> = first
        .cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let energies: Vec<f64> = records.iter().map(|r| r.cells[c].energy).collect();
            let (mean, std_error) = mean_and_std_error(&energies);
            let predicted: Vec<f64> = records.iter().filter_map(|r| r.cells[c].predicted).collect();
            SummaryRow {
                key: cell.key,
                mean,
                std_error,
                trials: records.len(),
                saved: None,
                predicted_mean: (!predicted.is_empty()).then(|| mean_and_std_error(&predicted).0),
            }
        })
        .collect();
    let reactive: Vec<(f64, Option<f64>, f64)> = rows
        .iter()
        .filter(|r| r.key.scheduler == Scheduler::Reactive)
        .map(|r| (r.key.bits, r.key.request_prob, r.mean))
        .collect();
    for row in rows.iter_mut().filter(|r| r.key.scheduler != Scheduler::Reactive) {
        row.saved = reactive
            .iter()
            .find(|(b, p, _)| *b == row.key.bits && *p == row.key.request_prob)
            .map(|(_, _, m)| saved_energy_db(*m, row.mean));
    }
    rows
}
