//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//!
//! `cargo test --release -p formation-core --test acceptance` runs at desk
//! scale (bounded epoch budget, 20/5 randomized instances). Append `-- --full`
//! for the 500-epoch cap and 100/20 instances.

use std::time::Instant;

use formation_core::experiment::{
    comparison_controllers, evaluate_comparison, evaluation_instances, fold_all, generate_training_data,
    make_exp1, random_topology, train_agents, ExperimentSpec,
};
use formation_core::formation::GainSet;
use formation_core::nn::{gradient_check, AdamState, FoldedMlp, Mlp, TrainConfig, TrainOutcome};
use formation_core::parallel::{map, map_seq};
use formation_core::policy::PolicyKind;
use formation_core::sim::{run, step_rk4, Controller, MonitorConfig, MonitorVariant, SimConfig, SimRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const DESK_EPOCHS: usize = 30;
const FULL_EPOCHS: usize = 500;
/// End of the initial transient: d̂ plateau reference and start of the V̇2 window.
const T_TRANSIENT: f64 = 10.0;
const SEED: u64 = 0;

struct Ledger {
    lines: Vec<serde_json::Value>,
    failed: usize,
}

impl Ledger {
    fn check(&mut self, id: &str, name: &str, pass: bool, detail: String) {
        println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed += 1;
        }
        self.lines.push(json!({"id": id, "name": name, "pass": pass, "detail": detail}));
    }

    fn info(&mut self, detail: String) {
        println!("INFO {detail}");
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn train_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        seed: SEED,
        ..TrainConfig::default()
    }
}

fn nets_of(trained: Vec<(Mlp<f32>, TrainOutcome)>) -> (Vec<FoldedMlp>, Vec<TrainOutcome>) {
    let (nets, outcomes): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    (fold_all(&nets), outcomes)
}

fn fmt_list(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", s.join(", "))
}

fn main() {
    let full = std::env::args().any(|a| a == "--full");
    let epochs = if full { FULL_EPOCHS } else { DESK_EPOCHS };
    let mon = MonitorConfig::default();
    let mut ledger = Ledger {
        lines: Vec::new(),
        failed: 0,
    };
    let mut records: Vec<(String, SimRecord)> = Vec::new();
    println!(
        "acceptance: {} scale, epoch cap {epochs}, seed {SEED}",
        if full { "full" } else { "desk" }
    );

    // 1. Oracle closed loop on the experiment-1 instance.
    let (exp1, _) = make_exp1(SEED).expect("experiment-1 instance");
    let gains = GainSet::standard(exp1.n_agents());
    let sim55 = SimConfig::default();
    let t = Instant::now();
    let oracle = run(&exp1, &Controller::oracle(gains.clone()), &sim55, &mon).expect("oracle run");
    let elapsed = secs(t);
    let err = oracle.last().error_norm();
    ledger.check(
        "1",
        "oracle closed loop",
        !oracle.diverged() && err < 1e-3 && elapsed < 60.0,
        format!("‖e1(55)‖+‖ė1(55)‖ = {err:.3e} (need < 1e-3), {elapsed:.1} s"),
    );
    records.push(("exp1/oracle".into(), oracle));

    // Experiment-1 pipeline: oracle data → per-agent training → adaptive run.
    let spec1 = ExperimentSpec::exp1(SEED);
    let t = Instant::now();
    let train_inst = formation_core::experiment::training_instances(&spec1).expect("training instances");
    let data = generate_training_data(&train_inst, &spec1.data_sim_config(), spec1.samples_per_trajectory)
        .expect("training data");
    let mut oracle_finals = data.final_errors.clone();
    oracle_finals.sort_by(f64::total_cmp);
    ledger.info(format!(
        "exp1 data: {} trajectories ({} skipped), {} rows per agent, oracle final error median {:.3e}, {:.1} s",
        data.final_errors.len(),
        data.skipped.len(),
        data.datasets[0].len(),
        oracle_finals[oracle_finals.len() / 2],
        secs(t)
    ));
    let t = Instant::now();
    let (nets1, outcomes1) = nets_of(train_agents(&data.datasets, &train_cfg(epochs)).expect("training"));
    let best: Vec<f64> = outcomes1.iter().map(|o| o.best_loss).collect();
    let epochs_run: Vec<usize> = outcomes1.iter().map(|o| o.history.len()).collect();
    ledger.info(format!("exp1 training: {:.1} s, epochs run {epochs_run:?}", secs(t)));

    // 4. Training loss.
    let worst = best.iter().copied().fold(0.0, f64::max);
    ledger.check(
        "4",
        "training loss",
        worst <= 5e-4,
        format!("best per-batch mean loss per agent {} (need ≤ 5e-4 within {epochs} epochs)", fmt_list(&best)),
    );

    let t = Instant::now();
    let adaptive = run(
        &exp1,
        &Controller::new(PolicyKind::Adaptive, gains.clone(), nets1.clone()).expect("controller"),
        &sim55,
        &mon,
    )
    .expect("adaptive run");
    let sim_time = secs(t);

    // 2. Experiment-1 reproduction.
    let last = adaptive.last();
    let max_agent = last.max_agent_error(adaptive.state_dim);
    let plateau = adaptive
        .samples
        .iter()
        .find(|s| s.t >= T_TRANSIENT)
        .map(|s| s.d_hat.clone())
        .unwrap_or_else(|| last.d_hat.clone());
    let bounded = last.d_hat.iter().zip(&plateau).all(|(f, p)| *f < 10.0 * p);
    ledger.check(
        "2",
        "experiment-1 reproduction",
        !adaptive.diverged() && max_agent < 0.5 && bounded,
        format!(
            "max_i ‖e_i1(55)‖+‖ė_i1(55)‖ = {max_agent:.3e} (need < 0.5); d̂(55) {} vs 10× d̂({T_TRANSIENT}) {}; {sim_time:.1} s",
            fmt_list(&last.d_hat),
            fmt_list(&plateau.iter().map(|p| 10.0 * p).collect::<Vec<_>>())
        ),
    );

    // 3. Monitor sign on the same run.
    let rows = adaptive.samples.len();
    let viol: Vec<f64> = adaptive
        .samples
        .iter()
        .filter(|s| s.ch(MonitorVariant::Linear) >= 0.0)
        .map(|s| s.t)
        .collect();
    let negative = 1.0 - viol.len() as f64 / rows as f64;
    ledger.check(
        "3",
        "assumption monitor",
        negative >= 0.99,
        format!(
            "CH < 0 at {:.2}% of {rows} samples (need ≥ 99%); violations at t = {:?}{}",
            100.0 * negative,
            &viol[..viol.len().min(10)],
            if viol.len() > 10 { " ..." } else { "" }
        ),
    );

    // 7. Lyapunov diagnostic on the same run.
    let (frac, bad) = adaptive.v2_report(T_TRANSIENT, 0.0);
    ledger.check(
        "7",
        "Lyapunov diagnostic",
        frac >= 0.95,
        format!(
            "V̇2 ≤ 0 at {:.2}% of samples with t ≥ {T_TRANSIENT} (need ≥ 95%; g̲ = {:.3}, κ = {}); increases at t = {:?}{}",
            100.0 * frac,
            adaptive.g_lower,
            adaptive.kappa,
            &bad[..bad.len().min(10)],
            if bad.len() > 10 { " ..." } else { "" }
        ),
    );

    for kind in [PolicyKind::NonAdaptive, PolicyKind::NoNn] {
        let ctrl = Controller::new(kind, gains.clone(), nets1.clone()).expect("controller");
        let rec = run(&exp1, &ctrl, &sim55, &mon).expect("baseline run");
        ledger.info(format!(
            "exp1 {kind}: {:?}, final ‖e1‖+‖ė1‖ {:.3e} (adaptive {:.3e})",
            rec.status,
            rec.last().error_norm(),
            adaptive.last().error_norm()
        ));
        records.push((format!("exp1/{kind}"), rec));
    }

    // 5. Randomized comparison.
    let spec3 = ExperimentSpec::exp3(SEED, full);
    let t = Instant::now();
    let train3 = formation_core::experiment::training_instances(&spec3).expect("exp3 training instances");
    let data3 = generate_training_data(&train3, &spec3.data_sim_config(), spec3.samples_per_trajectory)
        .expect("exp3 data");
    let (nets3, outcomes3) = nets_of(train_agents(&data3.datasets, &train_cfg(epochs)).expect("exp3 training"));
    ledger.info(format!(
        "exp3 data+training: {:.1} s, {} oracle runs skipped, best losses {}",
        secs(t),
        data3.skipped.len(),
        fmt_list(&outcomes3.iter().map(|o| o.best_loss).collect::<Vec<_>>())
    ));
    let test3 = evaluation_instances(&spec3).expect("exp3 test instances");
    let sim3 = spec3.eval_sim_config();
    let t = Instant::now();
    let ctrls = comparison_controllers(&nets3, test3[0].n_agents()).expect("controllers");
    let (report, per_policy) = evaluate_comparison("exp3", &test3, &ctrls, &sim3, &mon).expect("comparison");
    let mean = |k: PolicyKind| {
        report
            .policy(k)
            .and_then(|p| p.mean_final_error)
            .unwrap_or(f64::INFINITY)
    };
    let divs = |k: PolicyKind| report.policy(k).map_or(0, |p| p.divergences);
    let (a, na, nn) = (mean(PolicyKind::Adaptive), mean(PolicyKind::NonAdaptive), mean(PolicyKind::NoNn));
    ledger.check(
        "5",
        "comparison study",
        a < na && a < nn && divs(PolicyKind::Adaptive) == 0,
        format!(
            "{} test instances; mean final ‖e1‖+‖ė1‖ adaptive {a:.3e} / non_adaptive {na:.3e} / no_nn {nn:.3e}; divergences {} / {} / {}; {:.1} s",
            test3.len(),
            divs(PolicyKind::Adaptive),
            divs(PolicyKind::NonAdaptive),
            divs(PolicyKind::NoNn),
            secs(t)
        ),
    );
    for (ctrl, recs) in ctrls.iter().zip(per_policy) {
        for (k, rec) in recs.into_iter().enumerate() {
            records.push((format!("exp3/{k}/{}", ctrl.kind), rec));
        }
    }
    records.push(("exp1/adaptive".into(), adaptive));

    // 6. Property suites.
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let topo_ok = (0..100).all(|k| {
        let t = random_topology(&mut rng, 2 + k % 7, 0.3).expect("topology");
        let d = t.derive().expect("derived matrices");
        let rows_zero = (0..t.n_agents()).all(|r| d.laplacian.row(r).sum() == 0.0);
        let sym = d.laplacian == d.laplacian.transpose() && d.lb == d.lb.transpose();
        rows_zero && sym && d.lb.clone().symmetric_eigenvalues().min() > 0.0
    });
    ledger.check("6a", "Laplacian invariants", topo_ok, "100 random validated topologies".into());

    let worst_ratio = records
        .iter()
        .map(|(_, r)| r.disagreement_bound_ratio())
        .fold(0.0, f64::max);
    ledger.check(
        "6b",
        "disagreement bound",
        worst_ratio <= 1.0 + 1e-9,
        format!(
            "max σ_min(H)‖δ1‖/‖e1‖ = {worst_ratio:.6} over {} records (need ≤ 1 + 1e-9)",
            records.len()
        ),
    );

    let non_monotone: Vec<&str> = records
        .iter()
        .filter(|(_, r)| !r.d_hat_monotone())
        .map(|(n, _)| n.as_str())
        .collect();
    ledger.check(
        "6c",
        "d̂ monotonicity",
        non_monotone.is_empty(),
        format!("{} records checked, non-monotone: {non_monotone:?}", records.len()),
    );

    let grad_worst = [(vec![3, 4, 4, 2], 5usize, 1u64), (vec![5, 8, 6, 8, 3], 7, 2), (vec![2, 3, 1], 4, 3)]
        .into_iter()
        .map(|(widths, rows, seed)| {
            let mut net = Mlp::<f64>::new(&widths, seed).expect("toy net");
            for (k, p) in net.params_mut().iter_mut().enumerate() {
                *p += 0.05 * ((k as f64) * 0.7).sin();
            }
            let x: Vec<f64> = (0..rows * widths[0]).map(|k| ((k as f64) * 1.3).cos() * 2.0).collect();
            let y: Vec<f64> = (0..rows * widths[widths.len() - 1]).map(|k| ((k as f64) * 0.9).sin()).collect();
            gradient_check(&net, &x, &y, rows, 1e-6).expect("gradient check")
        })
        .fold(0.0, f64::max);
    ledger.check(
        "6d",
        "NN gradient check",
        grad_worst < 1e-5,
        format!("worst relative error {grad_worst:.2e} on 3 toy nets, f64 (need < 1e-5)"),
    );

    let mut adam = AdamState::<f64>::new(1, 1e-3);
    let mut p = [0.0];
    adam.step(&mut p, &[1.0]).expect("adam step");
    let expected = -1e-3 / (1.0 + 1e-8);
    ledger.check(
        "6e",
        "Adam first step",
        (p[0] - expected).abs() < 1e-12,
        format!("update {:.12} vs {expected:.12}", p[0]),
    );

    let steps = [10usize, 20, 40, 80];
    let errs: Vec<f64> = steps
        .iter()
        .map(|&n| {
            let dt = 1.0 / n as f64;
            let mut x = vec![1.0];
            for k in 0..n {
                x = step_rk4(
                    |_, x: &[f64], dx: &mut [f64]| {
                        dx.copy_from_slice(x);
                        Ok(())
                    },
                    &x,
                    k as f64 * dt,
                    dt,
                )
                .expect("rk4 step");
            }
            (x[0] - std::f64::consts::E).abs()
        })
        .collect();
    let lx: Vec<f64> = steps.iter().map(|&n| (1.0 / n as f64).ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / 4.0, ly.iter().sum::<f64>() / 4.0);
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    ledger.check(
        "6f",
        "RK4 order",
        (slope - 4.0).abs() <= 0.2,
        format!("log-log slope {slope:.3} on ẋ = x (need 4 ± 0.2)"),
    );

    let short = SimConfig::with_duration(5.0);
    let ctrls1: Vec<Controller> = [PolicyKind::Adaptive, PolicyKind::NonAdaptive, PolicyKind::NoNn]
        .into_iter()
        .map(|k| Controller::new(k, gains.clone(), nets1.clone()).expect("controller"))
        .chain([Controller::oracle(gains.clone())])
        .collect();
    let first = map(&ctrls1, |_, c| run(&exp1, c, &short, &mon).expect("run"));
    let second = map_seq(&ctrls1, |_, c| run(&exp1, c, &short, &mon).expect("run"));
    ledger.check(
        "6g",
        "determinism",
        first == second,
        "4 policies × 2 schedules (parallel, sequential), bit-identical records".into(),
    );

    let report_path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_report.json");
    let doc = json!({
        "scale": if full { "full" } else { "desk" },
        "epochs": epochs,
        "seed": SEED,
        "criteria": ledger.lines,
        "exp1_training": outcomes1,
        "exp3_comparison": report,
    });
    match std::fs::write(&report_path, serde_json::to_string_pretty(&doc).expect("report json")) {
        Ok(()) => println!("report: {}", report_path.display()),
        Err(e) => println!("report not written: {e}"),
    }
    let total = ledger.lines.len();
    println!("acceptance: {} of {total} criteria passed", total - ledger.failed);
    if ledger.failed > 0 {
        std::process::exit(1);
    }
}
