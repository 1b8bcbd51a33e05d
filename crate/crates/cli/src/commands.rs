//! The five verbs. Every path is checked before any simulation or training
//! starts, and every random draw derives from the command seed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use formation_core::config::{load_instance, InstanceConfig};
use formation_core::experiment::{
    aggregate, evaluation_instances, evaluate_comparison, generate_training_data, train_agents,
    training_instances, ExperimentKind, ExperimentSpec,
};
use formation_core::formation::GainSet;
use formation_core::instance::FormationInstance;
use formation_core::nn::{load_weights, save_weights, Dataset, FoldedMlp, Mlp, TrainConfig};
use formation_core::policy::PolicyKind;
use formation_core::sim::{run, Controller, SimConfig, SimRecord};
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::{file_entry, sha256_file, write_json, FileEntry, Manifest, MANIFEST};
use crate::plot::{plot_comparison, plot_record};
use crate::{Cli, Command, Common};

pub enum Outcome {
    Done,
    TargetUnmet,
}

/// A mistake in the invocation or configuration rather than a runtime failure.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn is_usage_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<UsageError>()
            || matches!(
                c.downcast_ref::<formation_core::Error>(),
                Some(formation_core::Error::Config(_) | formation_core::Error::Validation(_))
            )
    })
}

/// Configuration merged from the file and the flags.
struct Ctx {
    cfg: RunConfig,
    kind: ExperimentKind,
    seed: u64,
    full: bool,
    out: PathBuf,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let cfg = match &common.config {
            Some(p) => RunConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
            None => RunConfig::default(),
        };
        Ok(Self {
            kind: common.experiment.or(cfg.experiment).unwrap_or(ExperimentKind::Exp1Stabilization),
            seed: common.seed.or(cfg.seed).unwrap_or(0),
            full: common.full || cfg.full,
            out: common.out.clone(),
            cfg,
        })
    }

    fn spec(&self) -> Result<ExperimentSpec> {
        self.cfg.spec(self.kind, self.seed, self.full)
    }

    fn exp_dir(&self) -> PathBuf {
        self.out.join(self.kind.short_name())
    }

    fn gains(&self, n_agents: usize) -> Result<GainSet> {
        let g = self.cfg.gains.clone().unwrap_or_else(|| GainSet::standard(n_agents));
        g.validate(n_agents)?;
        Ok(g)
    }

    fn controller(&self, kind: PolicyKind, n_agents: usize, nets: &[FoldedMlp]) -> Result<Controller> {
        let mut c = Controller::new(kind, self.gains(n_agents)?, nets.to_vec())?;
        if let Some(d) = self.cfg.d_hat0 {
            c = c.with_d_hat0(d);
        }
        Ok(c)
    }
}

pub fn dispatch(cli: &Cli) -> Result<Outcome> {
    let ctx = Ctx::new(&cli.common)?;
    match &cli.command {
        Command::GenData => gen_data(&ctx),
        Command::Train { data, epochs } => train(&ctx, data.as_deref(), *epochs),
        Command::Simulate {
            instance,
            policy,
            weights,
        } => simulate(&ctx, instance.as_deref(), *policy, weights.as_deref()),
        Command::Evaluate { weights, policies } => evaluate(&ctx, weights.as_deref(), policies.clone()),
        Command::Plot { runs } => plot(&ctx, runs.as_deref()),
    }
}

/// Creates `dir` and proves it writable.
fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let probe = dir.join(".write-test");
    std::fs::write(&probe, b"").with_context(|| format!("{} is not writable", dir.display()))?;
    std::fs::remove_file(&probe)?;
    Ok(())
}

fn dataset_name(i: usize) -> String {
    format!("agent{}.csv", i + 1)
}

fn weight_name(i: usize) -> String {
    format!("agent{}.fmlp", i + 1)
}

fn gen_data(ctx: &Ctx) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let sim = ctx.cfg.data_sim(&spec);
    sim.validate()?;
    let dir = ctx.exp_dir().join("data");
    prepare_dir(&dir)?;

    let instances = training_instances(&spec)?;
    log::info!("{} oracle runs of {} s", instances.len(), sim.duration);
    let data = generate_training_data(&instances, &sim, spec.samples_per_trajectory)?;
    let mut files = Vec::new();
    for (i, ds) in data.datasets.iter().enumerate() {
        let name = dataset_name(i);
        ds.save(&dir.join(&name))?;
        files.push(file_entry(&dir, &name, Some(ds.len()))?);
    }
    Manifest::new(
        "gen-data",
        ctx.seed,
        files,
        json!({
            "spec": spec,
            "sim": sim,
            "trajectories": instances.len(),
            "skipped": data.skipped,
            "oracle_final_errors": data.final_errors,
        }),
    )
    .write(&dir)?;
    println!("wrote {} datasets to {}", data.datasets.len(), dir.display());
    Ok(Outcome::Done)
}

/// Files listed in a directory's manifest, which must match their recorded
/// checksums; without a manifest, `name(0), name(1), …` up to the first gap.
fn agent_files(dir: &Path, name: fn(usize) -> String) -> Result<Vec<PathBuf>> {
    if !dir.join(MANIFEST).is_file() {
        return Ok((0..).map(|i| dir.join(name(i))).take_while(|p| p.exists()).collect());
    }
    let manifest = Manifest::read(dir)?;
    let mut paths = Vec::new();
    for f in &manifest.files {
        let p = dir.join(&f.path);
        if !p.is_file() {
            bail!(usage(format!("{} is listed in the manifest but missing", p.display())));
        }
        if sha256_file(&p)? != f.sha256 {
            bail!("{} does not match its manifest checksum", p.display());
        }
        paths.push(p);
    }
    Ok(paths)
}

fn train(ctx: &Ctx, data: Option<&Path>, epochs: Option<usize>) -> Result<Outcome> {
    let data_dir = data
        .map(Path::to_path_buf)
        .or_else(|| ctx.cfg.data.clone())
        .unwrap_or_else(|| ctx.exp_dir().join("data"));
    let paths = agent_files(&data_dir, dataset_name)?;
    if paths.is_empty() {
        bail!(usage(format!("no datasets ({}) in {}", dataset_name(0), data_dir.display())));
    }
    let out = ctx.exp_dir().join("weights");
    prepare_dir(&out)?;

    let datasets = paths
        .iter()
        .map(|p| Dataset::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        epochs: epochs.unwrap_or(ctx.cfg.train.epochs),
        seed: ctx.seed,
        ..ctx.cfg.train.clone()
    };
    log::info!("training {} networks for up to {} epochs", datasets.len(), cfg.epochs);
    let trained = train_agents(&datasets, &cfg)?;

    let mut files = Vec::new();
    let mut results = Vec::new();
    for (i, (net, outcome)) in trained.iter().enumerate() {
        let w = weight_name(i);
        save_weights(net, &out.join(&w))?;
        files.push(file_entry(&out, &w, None)?);
        let loss = format!("loss_agent{}.csv", i + 1);
        write_loss_history(&out.join(&loss), &outcome.history)?;
        files.push(file_entry(&out, &loss, Some(outcome.history.len()))?);
        results.push(json!({
            "agent": i + 1,
            "widths": net.widths(),
            "best_epoch": outcome.best_epoch,
            "best_loss": outcome.best_loss,
            "reached_target": outcome.reached_target,
        }));
        println!(
            "agent {}: best loss {:.3e} at epoch {}{}",
            i + 1,
            outcome.best_loss,
            outcome.best_epoch,
            if outcome.reached_target { "" } else { " (target not reached)" }
        );
    }
    let unmet = trained.iter().any(|(_, o)| !o.reached_target);
    Manifest::new(
        "train",
        ctx.seed,
        files,
        json!({"data": data_dir, "train": cfg, "agents": results}),
    )
    .write(&out)?;
    Ok(if unmet { Outcome::TargetUnmet } else { Outcome::Done })
}

fn write_loss_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut text = String::from("epoch,loss,best_so_far\n");
    let mut best = f64::INFINITY;
    for (k, l) in history.iter().enumerate() {
        best = best.min(*l);
        text.push_str(&format!("{},{l},{best}\n", k + 1));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Networks for `policies`, or none when no policy needs them. Missing
/// files are a configuration error naming every absent path.
fn load_nets(ctx: &Ctx, weights: Option<&Path>, policies: &[PolicyKind], n_agents: usize) -> Result<Vec<FoldedMlp>> {
    if !policies.iter().any(|p| p.uses_nn()) {
        return Ok(Vec::new());
    }
    let dir = weights
        .map(Path::to_path_buf)
        .or_else(|| ctx.cfg.weights.clone())
        .unwrap_or_else(|| ctx.exp_dir().join("weights"));
    let paths: Vec<PathBuf> = (0..n_agents).map(|i| dir.join(weight_name(i))).collect();
    let missing: Vec<String> = paths.iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        bail!(usage(format!("missing weights: {}", missing.join(", "))));
    }
    paths
        .iter()
        .map(|p| {
            let net: Mlp<f32> = load_weights(p).with_context(|| format!("loading {}", p.display()))?;
            Ok(FoldedMlp::from_mlp(&net))
        })
        .collect()
}

/// The instances to run and the directory their runs go to.
fn run_targets(ctx: &Ctx, spec: &ExperimentSpec, instance: Option<&Path>) -> Result<(Vec<FormationInstance>, PathBuf)> {
    match instance.or(ctx.cfg.instance.as_deref()) {
        Some(p) => {
            let inst = load_instance(p).map_err(|e| usage(format!("instance {}: {e}", p.display())))?;
            let stem = p.file_stem().map_or("instance".into(), |s| s.to_string_lossy().into_owned());
            Ok((vec![inst], ctx.out.join(stem).join("runs")))
        }
        None => Ok((evaluation_instances(spec)?, ctx.exp_dir().join("runs"))),
    }
}

/// Writes one record with its summary under `runs/<k>/<policy>/`.
fn write_run(runs: &Path, k: usize, rec: &SimRecord) -> Result<Vec<FileEntry>> {
    let rel = format!("{k}/{}", rec.policy);
    let dir = runs.join(&rel);
    std::fs::create_dir_all(&dir)?;
    rec.save_csv(&dir.join("record.csv"))?;
    write_json(&dir.join("summary.json"), &rec.summary())?;
    Ok(vec![
        file_entry(runs, &format!("{rel}/record.csv"), Some(rec.samples.len()))?,
        file_entry(runs, &format!("{rel}/summary.json"), None)?,
    ])
}

fn write_instances(runs: &Path, instances: &[FormationInstance], seed: u64) -> Result<Vec<FileEntry>> {
    instances
        .iter()
        .enumerate()
        .map(|(k, inst)| {
            std::fs::create_dir_all(runs.join(k.to_string()))?;
            let rel = format!("{k}/instance.json");
            InstanceConfig::from_instance(inst, Some(seed)).save(&runs.join(&rel))?;
            file_entry(runs, &rel, None)
        })
        .collect()
}

fn eval_sim(ctx: &Ctx, spec: &ExperimentSpec) -> Result<SimConfig> {
    let sim = SimConfig {
        seed: ctx.seed,
        ..ctx.cfg.eval_sim(spec)
    };
    sim.validate()?;
    ctx.cfg.monitor.validate()?;
    Ok(sim)
}

fn simulate(ctx: &Ctx, instance: Option<&Path>, policy: Option<PolicyKind>, weights: Option<&Path>) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let sim = eval_sim(ctx, &spec)?;
    let policy = policy.or(ctx.cfg.policy).unwrap_or(PolicyKind::Adaptive);
    let (instances, runs) = run_targets(ctx, &spec, instance)?;
    let n_agents = instances[0].n_agents();
    let nets = load_nets(ctx, weights, &[policy], n_agents)?;
    let ctrl = ctx.controller(policy, n_agents, &nets)?;
    prepare_dir(&runs)?;

    let mut files = write_instances(&runs, &instances, ctx.seed)?;
    let mut summaries = Vec::new();
    for (k, inst) in instances.iter().enumerate() {
        let rec = run(inst, &ctrl, &sim, &ctx.cfg.monitor)?;
        let s = rec.summary();
        println!(
            "instance {k} {policy}: {:?}, final ‖e1‖+‖ė1‖ = {:.4}, CH violations {:.1}%",
            s.status,
            s.final_error,
            100.0 * s.ch_violation_fraction
        );
        files.extend(write_run(&runs, k, &rec)?);
        summaries.push(s);
    }
    // One manifest per simulated policy, so runs of several policies coexist.
    let manifest = Manifest::new(
        "simulate",
        ctx.seed,
        files,
        json!({"policy": policy, "sim": sim, "monitor": ctx.cfg.monitor, "summaries": summaries}),
    );
    write_json(&runs.join(format!("manifest-simulate-{policy}.json")), &manifest)?;
    Ok(Outcome::Done)
}

fn evaluate(ctx: &Ctx, weights: Option<&Path>, policies: Option<Vec<PolicyKind>>) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let sim = eval_sim(ctx, &spec)?;
    let policies = policies
        .or_else(|| ctx.cfg.policies.clone())
        .unwrap_or_else(|| vec![PolicyKind::Adaptive, PolicyKind::NoNn, PolicyKind::NonAdaptive]);
    if policies.is_empty() {
        bail!(usage("no policies to evaluate"));
    }
    let instances = evaluation_instances(&spec)?;
    let n_agents = instances[0].n_agents();
    let nets = load_nets(ctx, weights, &policies, n_agents)?;
    let controllers = policies
        .iter()
        .map(|&p| ctx.controller(p, n_agents, &nets))
        .collect::<Result<Vec<_>>>()?;
    let runs = ctx.exp_dir().join("runs");
    prepare_dir(&runs)?;

    let (report, records) = evaluate_comparison(ctx.kind.short_name(), &instances, &controllers, &sim, &ctx.cfg.monitor)?;
    let mut files = write_instances(&runs, &instances, ctx.seed)?;
    for recs in &records {
        for (k, rec) in recs.iter().enumerate() {
            files.extend(write_run(&runs, k, rec)?);
        }
    }
    write_json(&runs.join("comparison.json"), &report)?;
    files.push(file_entry(&runs, "comparison.json", None)?);
    for p in &report.policies {
        println!(
            "{:>12}: mean {} std {} divergences {}/{}",
            p.policy.name(),
            p.mean_final_error.map_or("-".into(), |v| format!("{v:.4}")),
            p.std_final_error.map_or("-".into(), |v| format!("{v:.4}")),
            p.divergences,
            p.runs.len()
        );
    }
    Manifest::new(
        "evaluate",
        ctx.seed,
        files,
        json!({"spec": spec, "sim": sim, "monitor": ctx.cfg.monitor, "policies": policies}),
    )
    .write(&runs)?;
    Ok(Outcome::Done)
}

/// Instance directories `0, 1, …` of a run directory with the policies each holds.
fn scan_runs(runs: &Path) -> Result<BTreeMap<usize, Vec<PolicyKind>>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(runs).with_context(|| format!("reading run directory {}", runs.display()))?;
    for e in entries {
        let e = e?;
        let Some(k) = e.file_name().to_str().and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        let mut policies = Vec::new();
        for p in std::fs::read_dir(e.path())? {
            let p = p?;
            if let Some(kind) = p.file_name().to_str().and_then(|s| s.parse::<PolicyKind>().ok()) {
                policies.push(kind);
            }
        }
        policies.sort_by_key(|p| PolicyKind::ALL.iter().position(|q| q == p));
        out.insert(k, policies);
    }
    Ok(out)
}

fn plot(ctx: &Ctx, runs: Option<&Path>) -> Result<Outcome> {
    let runs = runs
        .map(Path::to_path_buf)
        .or_else(|| ctx.cfg.runs.clone())
        .unwrap_or_else(|| ctx.exp_dir().join("runs"));
    let layout = scan_runs(&runs)?;

    // Every record the directory promises: the comparison's grid if there is
    // one, otherwise whatever policy directories exist.
    let mut expected: Vec<(usize, PolicyKind)> = layout.iter().flat_map(|(&k, ps)| ps.iter().map(move |&p| (k, p))).collect();
    let comparison = runs.join("comparison.json");
    if comparison.is_file() {
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&comparison)?)?;
        let n = report["instances"].as_u64().unwrap_or(0) as usize;
        let policies: Vec<PolicyKind> = report["policies"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|p| p["policy"].as_str()?.parse().ok())
            .collect();
        for k in 0..n {
            for &p in &policies {
                if !expected.contains(&(k, p)) {
                    expected.push((k, p));
                }
            }
        }
    }
    let missing: Vec<String> = expected
        .iter()
        .map(|(k, p)| runs.join(k.to_string()).join(p.name()).join("record.csv"))
        .chain(layout.keys().map(|k| runs.join(k.to_string()).join("instance.json")))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        bail!("missing records: {}", missing.join(", "));
    }
    if expected.is_empty() {
        bail!("no records under {}", runs.display());
    }

    let mut by_policy: BTreeMap<usize, (PolicyKind, Vec<SimRecord>)> = BTreeMap::new();
    let mut written = 0;
    for (&k, policies) in &layout {
        let inst = load_instance(&runs.join(k.to_string()).join("instance.json"))?;
        for &p in policies {
            let dir = runs.join(k.to_string()).join(p.name());
            let rec = SimRecord::load_csv(&dir.join("record.csv")).with_context(|| format!("reading {}", dir.display()))?;
            written += plot_record(&rec, inst.topology(), &dir, &format!("instance {k}, {p}"))?.len();
            let slot = PolicyKind::ALL.iter().position(|q| *q == p).unwrap_or(usize::MAX);
            by_policy.entry(slot).or_insert_with(|| (p, Vec::new())).1.push(rec);
        }
    }
    let stats: Vec<_> = by_policy.values().map(|(p, recs)| aggregate(*p, recs)).collect();
    plot_comparison(&stats, &runs.join("comparison.svg"), ctx.kind.short_name())?;
    println!("wrote {} figures under {}", written + 1, runs.display());
    Ok(Outcome::Done)
}
