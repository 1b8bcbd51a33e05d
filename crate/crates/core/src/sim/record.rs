use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MonitorVariant;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;

pub const RECORD_SCHEMA: &str = "formation-record/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { time: f64, reason: String },
}

/// One recorded instant. Vectors are stacked over agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// Per-agent `[position, velocity]` blocks.
    pub x: Vec<f64>,
    pub leader_position: Vec<f64>,
    pub leader_velocity: Vec<f64>,
    pub leader_command: Vec<f64>,
    pub u: Vec<f64>,
    pub u_nn: Vec<f64>,
    pub e1: Vec<f64>,
    pub e1_dot: Vec<f64>,
    pub e2: Vec<f64>,
    pub delta1: Vec<f64>,
    pub d_hat: Vec<f64>,
    pub ch_quadratic: f64,
    pub ch_linear: f64,
    /// Smallest input gain over agents at this instant.
    pub g_min: f64,
    pub v1: f64,
    pub v2: f64,
    pub v2_dot: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Sample {
    pub fn error_norm(&self) -> f64 {
        norm(&self.e1) + norm(&self.e1_dot)
    }

    /// `max_i ‖e_i1‖ + ‖ė_i1‖`.
    pub fn max_agent_error(&self, n: usize) -> f64 {
        self.e1
            .chunks(n)
            .zip(self.e1_dot.chunks(n))
            .map(|(a, b)| norm(a) + norm(b))
            .fold(0.0, f64::max)
    }

    pub fn ch(&self, variant: MonitorVariant) -> f64 {
        match variant {
            MonitorVariant::Quadratic => self.ch_quadratic,
            MonitorVariant::Linear => self.ch_linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub n_agents: usize,
    pub state_dim: usize,
    pub policy: PolicyKind,
    pub kappa: f64,
    pub variant: MonitorVariant,
    pub sigma_min_h: f64,
    /// Empirical lower bound of the input gains over the whole record.
    pub g_lower: f64,
    /// Adaptation target `‖H⁻¹K1‖/g̲ + κ/g̲`.
    pub d1: f64,
    pub samples: Vec<Sample>,
    pub status: RunStatus,
}

/// `(V1, V2)` for one sample.
///
/// `V1 = (e1ᵀK1²H⁻¹e1 + e2ᵀH⁻¹e2) / 2g̲`, `V2 = V1 + ½ Σ (d̂_i − d1)² / μ_i`.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_terms(
    h_inv: &DMatrix<f64>,
    k1: &DVector<f64>,
    mu: &[f64],
    g_lower: f64,
    d1: f64,
    e1: &[f64],
    e2: &[f64],
    d_hat: &[f64],
) -> Result<(f64, f64)> {
    if !(g_lower > 0.0) {
        return Err(Error::Assumption(format!("input gain lower bound {g_lower} is not positive")));
    }
    let e1 = DVector::from_column_slice(e1);
    let e2 = DVector::from_column_slice(e2);
    let k1e1 = k1.component_mul(&e1);
    // Literal e1ᵀK1²H⁻¹e1: K1 and H⁻¹ need not commute when gains differ per agent.
    let q1 = k1.component_mul(&k1e1).dot(&(h_inv * &e1));
    let q2 = e2.dot(&(h_inv * &e2));
    let v1 = (q1 + q2) / (2.0 * g_lower);
    let adapt: f64 = d_hat.iter().zip(mu).map(|(d, m)| (d - d1).powi(2) / m).sum();
    Ok((v1, v1 + 0.5 * adapt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub policy: PolicyKind,
    #[serde(flatten)]
    pub status: RunStatus,
    pub rows: usize,
    pub final_time: f64,
    pub final_e1_norm: f64,
    pub final_e1_dot_norm: f64,
    /// `‖e1‖ + ‖ė1‖` at the last sample.
    pub final_error: f64,
    pub final_max_agent_error: f64,
    /// Largest `‖[e1; e2]‖` seen, for judging the operating region of the monitor.
    pub max_error_norm: f64,
    pub monitor_variant: MonitorVariant,
    pub kappa: f64,
    pub ch_violations: usize,
    pub ch_violation_fraction: f64,
    /// Times of the first violations (at most 100).
    pub ch_violation_times: Vec<f64>,
    pub ch_quadratic_violations: usize,
    pub ch_linear_violations: usize,
    pub d_hat_initial: Vec<f64>,
    pub d_hat_final: Vec<f64>,
    pub d_hat_monotone: bool,
    pub g_lower: f64,
    pub d1: f64,
    /// Worst `σ_min(H)‖δ1‖ / ‖e1‖`; at most 1 up to round-off.
    pub disagreement_bound_ratio: f64,
    pub v2_nonincreasing_fraction: f64,
}

impl SimRecord {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a record holds at least the initial sample")
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Fraction of samples from `t_start` on with `V̇2 ≤ tol`, plus the offending times.
    pub fn v2_report(&self, t_start: f64, tol: f64) -> (f64, Vec<f64>) {
        let post: Vec<&Sample> = self.samples.iter().filter(|s| s.t >= t_start).collect();
        if post.is_empty() {
            return (1.0, Vec::new());
        }
        let bad: Vec<f64> = post.iter().filter(|s| s.v2_dot > tol).map(|s| s.t).collect();
        (1.0 - bad.len() as f64 / post.len() as f64, bad)
    }

    pub fn d_hat_monotone(&self) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[0].d_hat.iter().zip(&w[1].d_hat).all(|(a, b)| b >= a))
    }

    /// Largest `σ_min(H)‖δ1‖ / ‖e1‖` over samples with nonzero `e1`.
    pub fn disagreement_bound_ratio(&self) -> f64 {
        self.samples
            .iter()
            .filter_map(|s| {
                let e = norm(&s.e1);
                (e > 0.0).then(|| self.sigma_min_h * norm(&s.delta1) / e)
            })
            .fold(0.0, f64::max)
    }

    pub fn summary(&self) -> SimSummary {
        let last = self.last();
        let n = self.state_dim;
        let viol = |v: MonitorVariant| self.samples.iter().filter(move |s| s.ch(v) >= 0.0 && norm(&s.e2) > 0.0);
        let ch_violation_times: Vec<f64> = viol(self.variant).take(100).map(|s| s.t).collect();
        let ch_violations = viol(self.variant).count();
        let max_error_norm = self
            .samples
            .iter()
            .map(|s| (norm(&s.e1).powi(2) + norm(&s.e2).powi(2)).sqrt())
            .fold(0.0, f64::max);
        SimSummary {
            policy: self.policy,
            status: self.status.clone(),
            rows: self.samples.len(),
            final_time: last.t,
            final_e1_norm: norm(&last.e1),
            final_e1_dot_norm: norm(&last.e1_dot),
            final_error: last.error_norm(),
            final_max_agent_error: last.max_agent_error(n),
            max_error_norm,
            monitor_variant: self.variant,
            kappa: self.kappa,
            ch_violations,
            ch_violation_fraction: ch_violations as f64 / self.samples.len() as f64,
            ch_violation_times,
            ch_quadratic_violations: viol(MonitorVariant::Quadratic).count(),
            ch_linear_violations: viol(MonitorVariant::Linear).count(),
            d_hat_initial: self.samples[0].d_hat.clone(),
            d_hat_final: last.d_hat.clone(),
            d_hat_monotone: self.d_hat_monotone(),
            g_lower: self.g_lower,
            d1: self.d1,
            disagreement_bound_ratio: self.disagreement_bound_ratio(),
            v2_nonincreasing_fraction: self.v2_report(0.0, 0.0).0,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        columns(self.n_agents, self.state_dim)
    }

    /// Versioned CSV: a metadata comment line, a header, one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let (status, time, reason) = match &self.status {
            RunStatus::Completed => ("completed", f64::NAN, ""),
            RunStatus::Diverged { time, reason } => ("diverged", *time, reason.as_str()),
        };
        writeln!(
            w,
            "# schema={RECORD_SCHEMA} n_agents={} state_dim={} policy={} kappa={} variant={} sigma_min_h={} g_lower={} d1={} status={status} divergence_time={time} reason={}",
            self.n_agents,
            self.state_dim,
            self.policy,
            self.kappa,
            match self.variant {
                MonitorVariant::Quadratic => "quadratic",
                MonitorVariant::Linear => "linear",
            },
            self.sigma_min_h,
            self.g_lower,
            self.d1,
            reason.replace(['\n', '\r'], " "),
        )?;
        writeln!(w, "{}", self.column_names().join(","))?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            let scalars_head = [s.t];
            let scalars_tail = [s.ch_quadratic, s.ch_linear, s.g_min, s.v1, s.v2, s.v2_dot];
            let fields = scalars_head
                .iter()
                .chain(&s.x)
                .chain(&s.leader_position)
                .chain(&s.leader_velocity)
                .chain(&s.leader_command)
                .chain(&s.u)
                .chain(&s.u_nn)
                .chain(&s.e1)
                .chain(&s.e1_dot)
                .chain(&s.e2)
                .chain(&s.delta1)
                .chain(&s.d_hat)
                .chain(&scalars_tail);
            for (k, v) in fields.enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let meta = first
            .trim()
            .strip_prefix("# ")
            .ok_or_else(|| Error::Format("record is missing its schema line".into()))?;
        // `reason` is free text and always the last key.
        let (meta, reason) = meta.split_once(" reason=").unwrap_or((meta, ""));
        let get = |key: &str| {
            meta.split_whitespace()
                .find_map(|kv| kv.split_once('=').filter(|(k, _)| *k == key).map(|(_, v)| v.to_string()))
                .ok_or_else(|| Error::Format(format!("record metadata lacks {key}")))
        };
        let schema = get("schema")?;
        if schema != RECORD_SCHEMA {
            return Err(Error::Format(format!("unsupported record schema {schema}")));
        }
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("bad {key}: {e}")))
        };
        let n_agents = num("n_agents")? as usize;
        let n = num("state_dim")? as usize;
        let policy: PolicyKind = get("policy")?.parse()?;
        let variant = match get("variant")?.as_str() {
            "quadratic" => MonitorVariant::Quadratic,
            "linear" => MonitorVariant::Linear,
            v => return Err(Error::Format(format!("unknown monitor variant {v}"))),
        };
        let status = match get("status")?.as_str() {
            "completed" => RunStatus::Completed,
            "diverged" => RunStatus::Diverged {
                time: num("divergence_time")?,
                reason: reason.to_string(),
            },
            s => return Err(Error::Format(format!("unknown run status {s}"))),
        };

        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = csv.headers()?.clone();
        let expected = columns(n_agents, n);
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Format("record header does not match its metadata".into()));
        }
        let (bn, bx) = (n_agents * n, 2 * n_agents * n);
        let mut samples = Vec::new();
        for rec in csv.records() {
            let rec = rec?;
            let v = rec
                .iter()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Format(format!("bad number in record: {e}")))?;
            let mut at = 0;
            let mut take = |k: usize| {
                let s = v[at..at + k].to_vec();
                at += k;
                s
            };
            let t = take(1)[0];
            let x = take(bx);
            let (leader_position, leader_velocity, leader_command) = (take(n), take(n), take(n));
            let (u, u_nn, e1, e1_dot, e2, delta1) = (take(bn), take(bn), take(bn), take(bn), take(bn), take(bn));
            let d_hat = take(n_agents);
            let tail = take(6);
            samples.push(Sample {
                t,
                x,
                leader_position,
                leader_velocity,
                leader_command,
                u,
                u_nn,
                e1,
                e1_dot,
                e2,
                delta1,
                d_hat,
                ch_quadratic: tail[0],
                ch_linear: tail[1],
                g_min: tail[2],
                v1: tail[3],
                v2: tail[4],
                v2_dot: tail[5],
            });
        }
        if samples.is_empty() {
            return Err(Error::Format("record has no samples".into()));
        }
        Ok(Self {
            n_agents,
            state_dim: n,
            policy,
            kappa: num("kappa")?,
            variant,
            sigma_min_h: num("sigma_min_h")?,
            g_lower: num("g_lower")?,
            d1: num("d1")?,
            samples,
            status,
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn columns(n_agents: usize, n: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    for i in 1..=n_agents {
        for kind in ["p", "v"] {
            for d in 1..=n {
                c.push(format!("x{i}_{kind}{d}"));
            }
        }
    }
    for kind in ["x0_p", "x0_v", "u0_"] {
        for d in 1..=n {
            c.push(format!("{kind}{d}"));
        }
    }
    for name in ["u", "unn", "e1_", "e1dot_", "e2_", "delta1_"] {
        for i in 1..=n_agents {
            for d in 1..=n {
                c.push(format!("{name}{i}_{d}"));
            }
        }
    }
    for i in 1..=n_agents {
        c.push(format!("dhat{i}"));
    }
    for s in ["ch_quadratic", "ch_linear", "g_min", "v1", "v2", "v2_dot"] {
        c.push(s.to_string());
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v2_vanishes_at_its_minimum() {
        let h_inv = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let k1 = DVector::from_element(2, 0.1);
        let (v1, v2) = lyapunov_terms(&h_inv, &k1, &[0.5, 0.5], 2.0, 3.0, &[0.0; 2], &[0.0; 2], &[3.0, 3.0]).unwrap();
        assert_eq!((v1, v2), (0.0, 0.0));
        assert!(lyapunov_terms(&h_inv, &k1, &[0.5; 2], 0.0, 3.0, &[0.0; 2], &[0.0; 2], &[3.0; 2]).is_err());
    }

    #[test]
    fn v1_positive_for_nonzero_errors() {
        let h_inv = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let k1 = DVector::from_element(2, 0.1);
        for (e1, e2) in [([1.0, 0.0], [0.0, 0.0]), ([0.0, 0.0], [0.0, -1.0]), ([0.3, -0.3], [0.1, 0.2])] {
            let (v1, _) = lyapunov_terms(&h_inv, &k1, &[0.5; 2], 1.0, 0.0, &e1, &e2, &[0.0; 2]).unwrap();
            assert!(v1 > 0.0);
        }
    }
}
