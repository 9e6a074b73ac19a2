//! Experiment configuration files.
//!
//! A config file is TOML. Every key is optional; missing keys keep the
//! defaults of the subcommand being run.
//!
//! ```toml
//! seed = 7
//! trials = 1000
//! bits = [1, 2, 3, 4, 5, 6, 7, 8]
//! windows = [0, 1, 2, 4]
//! schedulers = ["offline", "reactive"]
//!
//! [channel]
//! kind = "truncated-exponential"
//! rate = 1.0
//! floor = 0.001
//!
//! [mobility]
//! mode = "markov"
//! locations = 3
//!
//! [grid]
//! beta_nodes = 257
//! ```

use std::path::Path;

use proactive_sched::channel::ChannelModel;
use proactive_sched::online::GridSpec;
use proactive_sched::sim::{ExperimentConfig, MobilityMode, Scheduler};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub bits: Option<Vec<f64>>,
    pub windows: Option<Vec<usize>>,
    pub schedulers: Option<Vec<Scheduler>>,
    pub channel: Option<ChannelModel>,
    pub mobility: Option<MobilityMode>,
    pub grid: Option<GridFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub beta_nodes: Option<usize>,
    pub prob_nodes: Option<usize>,
    pub bit_nodes: Option<usize>,
    pub gain_nodes: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Overlays the file on `base`.
    pub fn apply(self, mut base: ExperimentConfig) -> ExperimentConfig {
        if let Some(v) = self.seed {
            base.seed = v;
        }
        if let Some(v) = self.trials {
            base.trials = v;
        }
        if let Some(v) = self.bits {
            base.bits = v;
        }
        if let Some(v) = self.windows {
            base.windows = v;
        }
        if let Some(v) = self.schedulers {
            base.schedulers = v;
        }
        if let Some(v) = self.channel {
            base.channel = v;
        }
        if let Some(v) = self.mobility {
            base.mobility = v;
        }
        if let Some(g) = self.grid {
            let d = &mut base.grid;
            d.beta_nodes = g.beta_nodes.unwrap_or(d.beta_nodes);
            d.prob_nodes = g.prob_nodes.unwrap_or(d.prob_nodes);
            d.bit_nodes = g.bit_nodes.unwrap_or(d.bit_nodes);
            d.gain_nodes = g.gain_nodes.unwrap_or(d.gain_nodes);
        }
        base
    }
}

pub fn offline_defaults() -> ExperimentConfig {
    ExperimentConfig::default()
}

pub fn online_defaults() -> ExperimentConfig {
    ExperimentConfig {
        windows: vec![4],
        schedulers: vec![Scheduler::Dp, Scheduler::Ces, Scheduler::SubII, Scheduler::Reactive],
        grid: GridSpec::default(),
        ..ExperimentConfig::default()
    }
}

pub fn saved_energy_defaults() -> ExperimentConfig {
    ExperimentConfig {
        windows: vec![1],
        schedulers: vec![Scheduler::Offline, Scheduler::Reactive],
        mobility: MobilityMode::FixedP {
            probs: vec![0.1, 0.5, 1.0],
        },
        ..ExperimentConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_keeps_defaults() {
        let cfg = ConfigFile::parse("").unwrap().apply(offline_defaults());
        assert_eq!(cfg, offline_defaults());
        assert_eq!(cfg.bits, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(cfg.windows, vec![0, 1, 2, 4]);
        assert_eq!(cfg.trials, 1000);
    }

    #[test]
    fn overrides() {
        let text = r#"
seed = 9
bits = [2, 4.5]
schedulers = ["subii", "ces"]

[channel]
kind = "truncated-exponential"
rate = 2.0
floor = 0.01

[mobility]
mode = "fixed-p"
probs = [0.25]

[grid]
beta_nodes = 33
"#;
        let cfg = ConfigFile::parse(text).unwrap().apply(online_defaults());
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.bits, vec![2.0, 4.5]);
        assert_eq!(cfg.schedulers, vec![Scheduler::SubII, Scheduler::Ces]);
        assert_eq!(cfg.channel, ChannelModel::truncated_exponential(2.0, 0.01).unwrap());
        assert_eq!(cfg.mobility, MobilityMode::FixedP { probs: vec![0.25] });
        assert_eq!(cfg.grid.beta_nodes, 33);
        assert_eq!(cfg.grid.gain_nodes, GridSpec::default().gain_nodes);
        assert_eq!(cfg.windows, vec![4]);
    }

    #[test]
    fn explicit_markov_model() {
        let text = r#"
[mobility]
mode = "markov"
model = { transition = [[0.5, 0.5], [0.2, 0.8]], request = [1.0, 0.0] }
"#;
        let cfg = ConfigFile::parse(text).unwrap().apply(offline_defaults());
        match cfg.mobility {
            MobilityMode::Markov { model: Some(m), .. } => assert_eq!(m.locations(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = ConfigFile::parse("bits = [1, 2]\ntrails = 5\n").unwrap_err().to_string();
        assert!(err.contains("trails"), "{err}");
        assert!(err.contains("line 2"), "{err}");
        assert!(ConfigFile::parse("schedulers = [\"fast\"]").is_err());
    }
}
