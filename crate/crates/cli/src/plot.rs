//! Static SVG figures: trajectory snapshots with graph edges, error norms,
//! adaptation signals, the monitor signal and comparison mean/std curves.

use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::Result;
use formation_core::experiment::PolicyStats;
use formation_core::sim::{Sample, SimRecord};
use formation_core::topology::Topology;
use plotters::prelude::*;

const SIZE: (u32, u32) = (900, 600);

pub type Segment = [(f64, f64); 2];

fn planar(p: &[f64], t: f64) -> (f64, f64) {
    match p {
        [x, y, ..] => (*x, *y),
        [x] => (t, *x),
        [] => (t, 0.0),
    }
}

fn agent_position(s: &Sample, i: usize, n: usize) -> (f64, f64) {
    planar(&s.x[i * 2 * n..i * 2 * n + n], s.t)
}

/// Lines of the communication graph at one sample: every follower edge and
/// every leader link. In one dimension the first axis is time.
pub fn snapshot_segments(topology: &Topology, s: &Sample) -> Vec<Segment> {
    let n = topology.state_dim();
    let leader = planar(&s.leader_position, s.t);
    let mut out: Vec<Segment> = topology
        .edges()
        .iter()
        .map(|&(i, j)| [agent_position(s, i, n), agent_position(s, j, n)])
        .collect();
    for (i, &b) in topology.leader_access().iter().enumerate() {
        if b {
            out.push([agent_position(s, i, n), leader]);
        }
    }
    out
}

fn span(values: impl Iterator<Item = f64>) -> Range<f64> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return -1.0..1.0;
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
    lo - pad..hi + pad
}

fn color(k: usize) -> RGBColor {
    let c = Palette99::pick(k).to_rgba();
    RGBColor(c.0, c.1, c.2)
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn line_chart(area: &DrawingArea<SVGBackend<'_>, plotters::coord::Shift>, title: &str, y_desc: &str, series: &[Series]) -> Result<()> {
    let x = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let y = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x, y)?;
    chart.configure_mesh().x_desc("t [s]").y_desc(y_desc).draw()?;
    for (k, s) in series.iter().enumerate() {
        let c = color(k);
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), c.stroke_width(2)))?
            .label(s.name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    Ok(())
}

fn save_lines(path: &Path, title: &str, y_desc: &str, series: &[Series]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    line_chart(&root, title, y_desc, series)?;
    root.present()?;
    Ok(())
}

fn block_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Snapshot times: start, middle and end of the record.
fn snapshot_indices(len: usize) -> Vec<usize> {
    let mut v = vec![0, len / 2, len.saturating_sub(1)];
    v.dedup();
    v
}

pub fn plot_trajectory(rec: &SimRecord, topology: &Topology, path: &Path, title: &str) -> Result<()> {
    let (big_n, n) = (rec.n_agents, rec.state_dim);
    let paths: Vec<Vec<(f64, f64)>> = (0..big_n)
        .map(|i| rec.samples.iter().map(|s| agent_position(s, i, n)).collect())
        .collect();
    let leader: Vec<(f64, f64)> = rec.samples.iter().map(|s| planar(&s.leader_position, s.t)).collect();
    let all = || paths.iter().flatten().chain(&leader);
    let x = span(all().map(|p| p.0));
    let y = span(all().map(|p| p.1));

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x, y)?;
    let (xd, yd) = if n >= 2 { ("x [m]", "y [m]") } else { ("t [s]", "x [m]") };
    chart.configure_mesh().x_desc(xd).y_desc(yd).draw()?;
    chart
        .draw_series(LineSeries::new(leader.iter().copied(), BLACK.stroke_width(2)))?
        .label("leader")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK.stroke_width(2)));
    for (i, p) in paths.iter().enumerate() {
        let c = color(i);
        chart
            .draw_series(LineSeries::new(p.iter().copied(), c.stroke_width(1)))?
            .label(format!("agent {}", i + 1))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c.stroke_width(2)));
    }
    for k in snapshot_indices(rec.samples.len()) {
        let s = &rec.samples[k];
        chart.draw_series(
            snapshot_segments(topology, s)
                .into_iter()
                .map(|seg| PathElement::new(seg.to_vec(), RGBColor(110, 110, 110).stroke_width(1))),
        )?;
        chart.draw_series(
            (0..big_n).map(|i| Circle::new(agent_position(s, i, n), 4, color(i).filled())),
        )?;
        chart.draw_series(std::iter::once(TriangleMarker::new(
            planar(&s.leader_position, s.t),
            6,
            BLACK.filled(),
        )))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// Every figure of one record, written into `dir`.
pub fn plot_record(rec: &SimRecord, topology: &Topology, dir: &Path, label: &str) -> Result<Vec<PathBuf>> {
    let (big_n, n) = (rec.n_agents, rec.state_dim);
    let mut written = Vec::new();

    let p = dir.join("trajectory.svg");
    plot_trajectory(rec, topology, &p, &format!("{label}: trajectories and graph snapshots"))?;
    written.push(p);

    let errors: Vec<Series> = (0..big_n)
        .map(|i| Series {
            name: format!("agent {}", i + 1),
            points: rec
                .samples
                .iter()
                .map(|s| (s.t, block_norm(&s.e1[i * n..(i + 1) * n]) + block_norm(&s.e1_dot[i * n..(i + 1) * n])))
                .collect(),
        })
        .collect();
    let p = dir.join("errors.svg");
    save_lines(&p, &format!("{label}: local errors"), "‖e_i1‖ + ‖ė_i1‖", &errors)?;
    written.push(p);

    let adaptation: Vec<Series> = (0..big_n)
        .map(|i| Series {
            name: format!("agent {}", i + 1),
            points: rec.samples.iter().map(|s| (s.t, s.d_hat[i])).collect(),
        })
        .collect();
    let p = dir.join("adaptation.svg");
    save_lines(&p, &format!("{label}: adaptive gains"), "d̂_i", &adaptation)?;
    written.push(p);

    let monitor = vec![
        Series {
            name: format!("−κ‖e2‖ (κ = {})", rec.kappa),
            points: rec.samples.iter().map(|s| (s.t, s.ch_linear)).collect(),
        },
        Series {
            name: format!("−κ‖e2‖² (κ = {})", rec.kappa),
            points: rec.samples.iter().map(|s| (s.t, s.ch_quadratic)).collect(),
        },
    ];
    let p = dir.join("monitor.svg");
    save_lines(&p, &format!("{label}: assumption monitor"), "CH", &monitor)?;
    written.push(p);
    Ok(written)
}

/// Mean (left) and standard deviation (right) of `‖e1‖ + ‖ė1‖` per policy.
pub fn plot_comparison(stats: &[PolicyStats], path: &Path, title: &str) -> Result<()> {
    let root = SVGBackend::new(path, (1400, 560)).into_drawing_area();
    root.fill(&WHITE)?;
    let (left, right) = root.split_horizontally(700);
    let curves = |pick: fn(&PolicyStats) -> &Vec<f64>| -> Vec<Series> {
        stats
            .iter()
            .map(|p| Series {
                name: p.policy.to_string(),
                points: p.times.iter().copied().zip(pick(p).iter().copied()).collect(),
            })
            .collect()
    };
    line_chart(&left, &format!("{title}: mean"), "mean ‖e1‖ + ‖ė1‖", &curves(|p| &p.mean_curve))?;
    line_chart(&right, &format!("{title}: std"), "std ‖e1‖ + ‖ė1‖", &curves(|p| &p.std_curve))?;
    root.present()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use formation_core::experiment::{aggregate, make_exp1};
    use formation_core::formation::GainSet;
    use formation_core::policy::PolicyKind;
    use formation_core::sim::{run, Controller, MonitorConfig, SimConfig};

    fn short_exp1() -> (formation_core::instance::FormationInstance, SimRecord) {
        let (inst, _) = make_exp1(0).unwrap();
        let rec = run(
            &inst,
            &Controller::oracle(GainSet::standard(5)),
            &SimConfig::with_duration(1.0),
            &MonitorConfig::default(),
        )
        .unwrap();
        (inst, rec)
    }

    #[test]
    fn exp1_snapshot_has_seven_edges() {
        let (inst, rec) = short_exp1();
        let segs = snapshot_segments(inst.topology(), &rec.samples[0]);
        assert_eq!(segs.len(), 7);
        // Agent 1 → leader link ends at the leader's planar position.
        let leader = (rec.samples[0].leader_position[0], rec.samples[0].leader_position[1]);
        assert_eq!(segs.iter().filter(|s| s[1] == leader).count(), 3);
    }

    #[test]
    fn plots_are_deterministic() {
        let (inst, rec) = short_exp1();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let fa = plot_record(&rec, inst.topology(), a.path(), "exp1").unwrap();
        let fb = plot_record(&rec, inst.topology(), b.path(), "exp1").unwrap();
        assert_eq!(fa.len(), 4);
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }

    #[test]
    fn comparison_lists_given_policies() {
        let (_, rec) = short_exp1();
        let stats = vec![aggregate(PolicyKind::Oracle, std::slice::from_ref(&rec)), aggregate(PolicyKind::NoNn, &[rec])];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cmp.svg");
        plot_comparison(&stats, &p, "test").unwrap();
        let svg = std::fs::read_to_string(&p).unwrap();
        let labels: Vec<&str> = svg.lines().filter(|l| PolicyKind::ALL.iter().any(|p| p.name() == *l)).collect();
        // One legend per panel.
        assert_eq!(labels, ["oracle", "no_nn", "oracle", "no_nn"]);
    }
}
