//! Per-agent training sets built from recorded trajectories.
//!
//! Input layout for agent `i` (width `2 N n + N + 1`):
//! the full stacked state in per-agent `[position, velocity]` blocks with every
//! block outside `{i} ∪ N_i` zeroed, followed by one visibility bit per
//! follower and a final bit for leader access.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::topology::Topology;

pub const DATASET_SCHEMA: &str = "formation-dataset/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputLayout {
    pub n_agents: usize,
    pub state_dim: usize,
}

impl InputLayout {
    pub fn new(n_agents: usize, state_dim: usize) -> Self {
        Self { n_agents, state_dim }
    }

    pub fn of(topology: &Topology) -> Self {
        Self::new(topology.n_agents(), topology.state_dim())
    }

    pub fn state_width(&self) -> usize {
        2 * self.n_agents * self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.state_width() + self.n_agents + 1
    }

    /// Network widths `[input, 512, 512, 512, 512, n]`.
    pub fn standard_widths(&self) -> Vec<usize> {
        vec![self.input_dim(), 512, 512, 512, 512, self.state_dim]
    }

    /// Writes the masked input of `agent` for stacked state `x` into `out`.
    pub fn assemble(&self, topology: &Topology, agent: usize, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.input_dim());
        debug_assert_eq!(x.len(), self.state_width());
        let w = 2 * self.state_dim;
        let sw = self.state_width();
        out.fill(0.0);
        let show = |j: usize, out: &mut [f64]| {
            out[j * w..(j + 1) * w].copy_from_slice(&x[j * w..(j + 1) * w]);
            out[sw + j] = 1.0;
        };
        show(agent, out);
        for &j in topology.neighbors(agent) {
            show(j, out);
        }
        if topology.leader_access()[agent] {
            out[sw + self.n_agents] = 1.0;
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.input_dim() + self.state_dim);
        for j in 1..=self.n_agents {
            for kind in ["p", "v"] {
                for d in 1..=self.state_dim {
                    names.push(format!("x{j}_{kind}{d}"));
                }
            }
        }
        for j in 1..=self.n_agents {
            names.push(format!("m{j}"));
        }
        names.push("m0".into());
        for d in 1..=self.state_dim {
            names.push(format!("u{d}"));
        }
        names
    }
}

/// One recorded closed-loop run, as seen by the data collector.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub topology: Topology,
    pub times: Vec<f64>,
    /// Full stacked state at every recorded time.
    pub states: Vec<Vec<f64>>,
    /// Applied stacked input at every recorded time.
    pub controls: Vec<Vec<f64>>,
}

/// A borrowed input/target pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample<'a> {
    pub input: &'a [f64],
    pub target: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub agent: usize,
    pub layout: InputLayout,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

/// `count` indices spread uniformly over `0..len`, first and last included.
pub fn uniform_indices(len: usize, count: usize) -> Vec<usize> {
    match count {
        0 => Vec::new(),
        1 => vec![0],
        _ => (0..count)
            .map(|k| ((k as f64) * (len - 1) as f64 / (count - 1) as f64).round() as usize)
            .collect(),
    }
}

impl Dataset {
    pub fn empty(agent: usize, layout: InputLayout) -> Self {
        Self {
            agent,
            layout,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len() / self.layout.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn sample(&self, k: usize) -> TrainingSample<'_> {
        let (d, n) = (self.layout.input_dim(), self.layout.state_dim);
        TrainingSample {
            input: &self.inputs[k * d..(k + 1) * d],
            target: &self.targets[k * n..(k + 1) * n],
        }
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) -> Result<()> {
        if input.len() != self.layout.input_dim() || target.len() != self.layout.state_dim {
            return Err(Error::Dimension("sample does not match dataset layout".into()));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite control target".into()));
        }
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.layout != self.layout {
            return Err(Error::Dimension("datasets have different layouts".into()));
        }
        self.inputs.extend_from_slice(&other.inputs);
        self.targets.extend_from_slice(&other.targets);
        Ok(())
    }

    /// Writes the versioned CSV: a schema comment line, a header naming every
    /// input slot and target component, then one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# schema={DATASET_SCHEMA} agent={}", self.agent + 1)?;
        writeln!(w, "{}", self.layout.column_names().join(","))?;
        let (d, n) = (self.layout.input_dim(), self.layout.state_dim);
        let mut line = String::new();
        for k in 0..self.len() {
            line.clear();
            let row = self.inputs[k * d..(k + 1) * d].iter().chain(&self.targets[k * n..(k + 1) * n]);
            for (c, v) in row.enumerate() {
                if c > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let meta = first
            .trim()
            .strip_prefix("# ")
            .ok_or_else(|| Error::Format("dataset is missing its schema line".into()))?;
        let mut schema = None;
        let mut agent = None;
        for kv in meta.split_whitespace() {
            match kv.split_once('=') {
                Some(("schema", v)) => schema = Some(v.to_string()),
                Some(("agent", v)) => agent = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        if schema.as_deref() != Some(DATASET_SCHEMA) {
            return Err(Error::Format(format!("unsupported dataset schema {schema:?}")));
        }
        let agent = agent
            .filter(|&a| a >= 1)
            .ok_or_else(|| Error::Format("dataset schema line lacks a 1-based agent".into()))?
            - 1;

        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = csv.headers()?.clone();
        let n_agents = header.iter().filter(|h| h.starts_with('m') && *h != "m0").count();
        let state_dim = header.iter().filter(|h| h.starts_with('u')).count();
        if n_agents == 0 || state_dim == 0 {
            return Err(Error::Format("dataset header has no mask or target columns".into()));
        }
        let layout = InputLayout::new(n_agents, state_dim);
        let expected = layout.column_names();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Format("dataset header does not match the input layout".into()));
        }
        let mut out = Self::empty(agent, layout);
        let d = layout.input_dim();
        for rec in csv.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Format(format!("bad number in dataset: {e}")))?;
            out.push(&vals[..d], &vals[d..])?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Builds the training set of `agent` from `trajectories`, taking
/// `sample_count` uniformly spaced recorded instants from each.
pub fn build_dataset(agent: usize, trajectories: &[Trajectory], sample_count: usize) -> Result<Dataset> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Data("no trajectories to build a dataset from".into()))?;
    let layout = InputLayout::of(&first.topology);
    let n = layout.state_dim;
    let mut out = Dataset::empty(agent, layout);
    let mut input = vec![0.0; layout.input_dim()];
    for (k, traj) in trajectories.iter().enumerate() {
        if InputLayout::of(&traj.topology) != layout {
            return Err(Error::Data(format!("trajectory {k} has a different agent count or dimension")));
        }
        if agent >= layout.n_agents {
            return Err(Error::Index {
                index: agent,
                len: layout.n_agents,
            });
        }
        let len = traj.states.len();
        if len < 2 || traj.controls.len() != len || traj.times.len() != len {
            return Err(Error::Data(format!(
                "trajectory {k} has {len} states, {} controls and {} times; need >= 2 aligned samples",
                traj.controls.len(),
                traj.times.len()
            )));
        }
        for idx in uniform_indices(len, sample_count) {
            layout.assemble(&traj.topology, agent, &traj.states[idx], &mut input);
            out.push(&input, &traj.controls[idx][agent * n..(agent + 1) * n])?;
        }
    }
    Ok(out)
}
