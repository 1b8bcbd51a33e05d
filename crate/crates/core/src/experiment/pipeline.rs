//! Data generation → training → evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::GainSet;
use crate::instance::FormationInstance;
use crate::nn::{build_dataset, train, Dataset, FoldedMlp, InputLayout, Mlp, TrainConfig, TrainOutcome, Trajectory};
use crate::parallel::{derive_seed, map};
use crate::policy::PolicyKind;
use crate::sim::{run, Controller, MonitorConfig, SimConfig, SimRecord};

/// Per-agent datasets from oracle runs, plus what happened to each run.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub datasets: Vec<Dataset>,
    /// `‖e1(T)‖ + ‖ė1(T)‖` of every completed oracle run.
    pub final_errors: Vec<f64>,
    /// Runs left out, with the reason.
    pub skipped: Vec<(usize, String)>,
}

fn trajectory_of(inst: &FormationInstance, rec: &SimRecord) -> Trajectory {
    Trajectory {
        topology: inst.topology().clone(),
        times: rec.times(),
        states: rec.samples.iter().map(|s| s.x.clone()).collect(),
        controls: rec.samples.iter().map(|s| s.u.clone()).collect(),
    }
}

/// Runs the oracle on every instance and samples `samples` uniformly spaced
/// points from each trajectory into one dataset per agent.
pub fn generate_training_data(
    instances: &[FormationInstance],
    sim: &SimConfig,
    samples: usize,
) -> Result<GeneratedData> {
    let first = instances
        .first()
        .ok_or_else(|| Error::Config("no instances to generate data from".into()))?;
    let big_n = first.n_agents();
    let mon = MonitorConfig::default();
    let runs = map(instances, |_, inst| {
        run(inst, &Controller::oracle(GainSet::standard(inst.n_agents())), sim, &mon)
    });
    let mut trajectories = Vec::new();
    let mut final_errors = Vec::new();
    let mut skipped = Vec::new();
    for (k, (inst, rec)) in instances.iter().zip(runs).enumerate() {
        match rec {
            Ok(rec) if !rec.diverged() => {
                final_errors.push(rec.last().error_norm());
                trajectories.push(trajectory_of(inst, &rec));
            }
            Ok(rec) => skipped.push((k, format!("oracle run diverged: {:?}", rec.status))),
            Err(e) => skipped.push((k, e.to_string())),
        }
    }
    for (k, why) in &skipped {
        log::warn!("instance {k} skipped: {why}");
    }
    if trajectories.is_empty() {
        return Err(Error::Data("every oracle run failed".into()));
    }
    let datasets = (0..big_n)
        .map(|i| build_dataset(i, &trajectories, samples))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratedData {
        datasets,
        final_errors,
        skipped,
    })
}

/// Trains one network per dataset, each with its own derived seed.
pub fn train_agents(datasets: &[Dataset], cfg: &TrainConfig) -> Result<Vec<(Mlp<f32>, TrainOutcome)>> {
    map(datasets, |i, ds| {
        let widths = ds.layout.standard_widths();
        let seed = derive_seed(cfg.seed, 10, i as u64);
        let mut net = Mlp::<f32>::new(&widths, seed)?;
        let cfg = TrainConfig {
            seed: derive_seed(cfg.seed, 11, i as u64),
            ..cfg.clone()
        };
        let outcome = train(&mut net, ds, &cfg)?;
        Ok((net, outcome))
    })
    .into_iter()
    .collect()
}

pub fn fold_all(nets: &[Mlp<f32>]) -> Vec<FoldedMlp> {
    nets.iter().map(FoldedMlp::from_mlp).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance: usize,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    pub final_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub policy: PolicyKind,
    pub runs: Vec<InstanceResult>,
    pub divergences: usize,
    /// Over non-diverged runs; `None` if every run diverged.
    pub mean_final_error: Option<f64>,
    pub std_final_error: Option<f64>,
    pub times: Vec<f64>,
    /// Mean and standard deviation of `‖e1(t)‖ + ‖ė1(t)‖` over non-diverged runs.
    pub mean_curve: Vec<f64>,
    pub std_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub label: String,
    pub instances: usize,
    pub policies: Vec<PolicyStats>,
}

impl ComparisonReport {
    pub fn policy(&self, kind: PolicyKind) -> Option<&PolicyStats> {
        self.policies.iter().find(|p| p.policy == kind)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates per-policy records (one per instance, same sampling grid).
pub fn aggregate(policy: PolicyKind, records: &[SimRecord]) -> PolicyStats {
    let runs: Vec<InstanceResult> = records
        .iter()
        .enumerate()
        .map(|(k, r)| InstanceResult {
            instance: k,
            diverged: r.diverged(),
            divergence_time: match &r.status {
                crate::sim::RunStatus::Diverged { time, .. } => Some(*time),
                _ => None,
            },
            final_error: (!r.diverged()).then(|| r.last().error_norm()),
        })
        .collect();
    let ok: Vec<&SimRecord> = records.iter().filter(|r| !r.diverged()).collect();
    let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_error).collect();
    let (mean_final_error, std_final_error) = if finals.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&finals);
        (Some(m), Some(s))
    };
    let len = ok.iter().map(|r| r.samples.len()).min().unwrap_or(0);
    let times = ok.first().map(|r| r.times()[..len].to_vec()).unwrap_or_default();
    let (mut mean_curve, mut std_curve) = (Vec::with_capacity(len), Vec::with_capacity(len));
    for j in 0..len {
        let col: Vec<f64> = ok.iter().map(|r| r.samples[j].error_norm()).collect();
        let (m, s) = mean_std(&col);
        mean_curve.push(m);
        std_curve.push(s);
    }
    PolicyStats {
        policy,
        divergences: runs.iter().filter(|r| r.diverged).count(),
        runs,
        mean_final_error,
        std_final_error,
        times,
        mean_curve,
        std_curve,
    }
}

/// Runs every controller on every instance. Divergence is data, not failure;
/// other errors (bad configuration) abort.
pub fn evaluate_comparison(
    label: &str,
    instances: &[FormationInstance],
    controllers: &[Controller],
    sim: &SimConfig,
    mon: &MonitorConfig,
) -> Result<(ComparisonReport, Vec<Vec<SimRecord>>)> {
    let jobs: Vec<(usize, usize)> = (0..controllers.len())
        .flat_map(|c| (0..instances.len()).map(move |k| (c, k)))
        .collect();
    let results = map(&jobs, |_, &(c, k)| run(&instances[k], &controllers[c], sim, mon));
    let mut per_policy: Vec<Vec<SimRecord>> = vec![Vec::new(); controllers.len()];
    for ((c, _), r) in jobs.into_iter().zip(results) {
        per_policy[c].push(r?);
    }
    let policies = controllers
        .iter()
        .zip(&per_policy)
        .map(|(ctrl, recs)| aggregate(ctrl.kind, recs))
        .collect();
    Ok((
        ComparisonReport {
            label: label.to_string(),
            instances: instances.len(),
            policies,
        },
        per_policy,
    ))
}

/// The three learned/adaptive policies sharing one set of networks.
pub fn comparison_controllers(nets: &[FoldedMlp], n_agents: usize) -> Result<Vec<Controller>> {
    [PolicyKind::Adaptive, PolicyKind::NoNn, PolicyKind::NonAdaptive]
        .into_iter()
        .map(|k| Controller::new(k, GainSet::standard(n_agents), nets.to_vec()))
        .collect()
}

/// Input layout shared by every instance of a list.
pub fn common_layout(instances: &[FormationInstance]) -> Result<InputLayout> {
    let first = instances.first().ok_or_else(|| Error::Config("no instances".into()))?;
    let layout = InputLayout::of(first.topology());
    if instances.iter().any(|i| InputLayout::of(i.topology()) != layout) {
        return Err(Error::Config("instances differ in agent count or dimension".into()));
    }
    Ok(layout)
}
