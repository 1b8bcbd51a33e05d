//! Fixed-step closed-loop simulation with monitors and recording.

mod engine;
mod integrator;
mod record;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{run, Controller};
pub use integrator::{step_rk4, Integrator, Stepper};
pub use record::{lyapunov_terms, RunStatus, Sample, SimRecord, SimSummary, RECORD_SCHEMA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub integrator: Integrator,
    /// Record every `record_stride`-th step.
    pub record_stride: usize,
    /// Network outputs are refreshed every `nn_stride` steps and held in between.
    pub nn_stride: usize,
    /// A state norm above this ends the run as diverged.
    pub blow_up: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            duration: 55.0,
            integrator: Integrator::Rk4,
            record_stride: 10,
            nn_stride: 1,
            blow_up: 1e6,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn with_duration(duration: f64) -> Self {
        Self {
            duration,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.duration >= self.dt) || self.record_stride == 0 || self.nn_stride == 0 {
            return Err(Error::Config(format!(
                "need dt > 0, duration >= dt and positive strides (dt {}, duration {}, strides {}/{})",
                self.dt, self.duration, self.record_stride, self.nn_stride
            )));
        }
        if !(self.blow_up > 0.0) {
            return Err(Error::Config("blow-up threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Number of recorded rows of a run that does not diverge.
    pub fn expected_rows(&self) -> usize {
        self.steps() / self.record_stride + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorVariant {
    /// `− κ‖e2‖²`
    Quadratic,
    /// `− κ‖e2‖`
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    pub kappa: f64,
    /// Variant whose violations are counted in summaries. Both are always recorded.
    pub variant: MonitorVariant,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            kappa: 100.0,
            variant: MonitorVariant::Linear,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Config(format!("monitor kappa must be positive, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// Assumption-3 residual `e2ᵀ a − bound` where `a = f + g u_nn − ẍ̄01`.
pub fn ch_monitor(e2: &[f64], drift_residual: &[f64], kappa: f64, variant: MonitorVariant) -> f64 {
    let inner: f64 = e2.iter().zip(drift_residual).map(|(a, b)| a * b).sum();
    let sq: f64 = e2.iter().map(|v| v * v).sum();
    match variant {
        MonitorVariant::Quadratic => inner - kappa * sq,
        MonitorVariant::Linear => inner - kappa * sq.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_count_arithmetic() {
        let cfg = SimConfig {
            dt: 1e-3,
            duration: 55.0,
            record_stride: 7,
            ..SimConfig::default()
        };
        assert_eq!(cfg.expected_rows(), (55.0f64 / 7e-3).floor() as usize + 1);
        assert_eq!(SimConfig::default().expected_rows(), 5501);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { dt: 0.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { duration: 1e-4, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { record_stride: 0, ..SimConfig::default() }.validate().is_err());
        assert!(MonitorConfig { kappa: 0.0, ..MonitorConfig::default() }.validate().is_err());
    }

    #[test]
    fn monitor_cases() {
        for v in [MonitorVariant::Quadratic, MonitorVariant::Linear] {
            assert_eq!(ch_monitor(&[0.0; 3], &[4.0, -2.0, 1.0], 100.0, v), 0.0);
        }
        // Perfect cancellation: the residual is zero.
        let e2 = [0.3, -0.4, 0.0];
        assert!((ch_monitor(&e2, &[0.0; 3], 2.0, MonitorVariant::Quadratic) + 0.5).abs() < 1e-15);
        assert!((ch_monitor(&e2, &[0.0; 3], 2.0, MonitorVariant::Linear) + 1.0).abs() < 1e-15);
    }
}
