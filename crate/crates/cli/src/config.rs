//! Run configuration file. Every key is optional; command-line flags win.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use formation_core::experiment::{ExperimentKind, ExperimentSpec};
use formation_core::formation::GainSet;
use formation_core::nn::TrainConfig;
use formation_core::policy::PolicyKind;
use formation_core::sim::{MonitorConfig, SimConfig};
use serde::{Deserialize, Serialize};

/// Partial overrides of an experiment's scale.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecOverrides {
    pub training_trajectories: Option<usize>,
    pub samples_per_trajectory: Option<usize>,
    pub train_instances: Option<usize>,
    pub test_instances: Option<usize>,
    pub duration: Option<f64>,
    pub switch_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub full: bool,
    pub spec: SpecOverrides,
    /// Replaces the experiment's integration settings.
    pub sim: Option<SimConfig>,
    pub monitor: MonitorConfig,
    pub train: TrainConfig,
    pub policy: Option<PolicyKind>,
    pub policies: Option<Vec<PolicyKind>>,
    pub gains: Option<GainSet>,
    pub d_hat0: Option<f64>,
    /// Instance file for `simulate`.
    pub instance: Option<PathBuf>,
    /// Dataset directory for `train`.
    pub data: Option<PathBuf>,
    /// Weight directory for `simulate` and `evaluate`.
    pub weights: Option<PathBuf>,
    /// Run directory for `plot`.
    pub runs: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn spec(&self, kind: ExperimentKind, seed: u64, full: bool) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::for_kind(kind, seed, full);
        let o = &self.spec;
        if let Some(v) = o.training_trajectories {
            spec.training_trajectories = v;
        }
        if let Some(v) = o.samples_per_trajectory {
            spec.samples_per_trajectory = v;
        }
        if let Some(v) = o.train_instances {
            spec.train_instances = v;
        }
        if let Some(v) = o.test_instances {
            spec.test_instances = v;
        }
        if let Some(v) = o.duration {
            spec.duration = v;
        }
        if let Some(v) = &o.switch_times {
            spec.switch_times = v.clone();
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn data_sim(&self, spec: &ExperimentSpec) -> SimConfig {
        self.sim.clone().unwrap_or_else(|| spec.data_sim_config())
    }

    pub fn eval_sim(&self, spec: &ExperimentSpec) -> SimConfig {
        self.sim.clone().unwrap_or_else(|| spec.eval_sim_config())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"seed": 1, "colour": "red"}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"spec": {"instances": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"sim": {"dt": 0.01, "stride": 2}}"#).is_err());
    }

    #[test]
    fn overrides_apply() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"experiment": "exp3_randomized", "spec": {"train_instances": 2, "test_instances": 1, "duration": 3.0},
                "train": {"epochs": 4}, "policies": ["adaptive", "oracle"]}"#,
        )
        .unwrap();
        let spec = cfg.spec(cfg.experiment.unwrap(), 5, false).unwrap();
        assert_eq!((spec.train_instances, spec.test_instances, spec.duration), (2, 1, 3.0));
        assert_eq!(cfg.train.epochs, 4);
        assert_eq!(cfg.train.batch_size, 256);
        assert_eq!(cfg.eval_sim(&spec).dt, 1e-4);
        assert_eq!(cfg.data_sim(&spec).dt, 1e-3);
    }

    #[test]
    fn invalid_overrides_fail() {
        let cfg: RunConfig = serde_json::from_str(r#"{"spec": {"samples_per_trajectory": 1}}"#).unwrap();
        assert!(cfg.spec(ExperimentKind::Exp1Stabilization, 0, false).is_err());
    }
}
