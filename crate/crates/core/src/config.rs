//! JSON form of a [`FormationInstance`].
//!
//! Agents are numbered from 1 in files; 0 denotes the leader. Unknown keys are
//! rejected.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::AgentModel;
use crate::error::{Error, Result};
use crate::formation::{EdgeOffsets, Peer};
use crate::instance::FormationInstance;
use crate::leader::LeaderProfile;
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub n_agents: usize,
    /// Follower pairs `[i, j]`, 1-based.
    pub edges: Vec<[usize; 2]>,
    /// One 0/1 flag per follower.
    pub leader_access: Vec<u8>,
    pub state_dim: usize,
}

/// Offset `c_ij`; `j = 0` is the leader link `c_i0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetEntry {
    pub i: usize,
    pub j: usize,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetSwitch {
    pub start: f64,
    pub offsets: Vec<OffsetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub leader: LeaderProfile,
    pub dynamics: Vec<AgentModel>,
    pub offsets: Vec<OffsetEntry>,
    /// Later offset sets, in increasing `start` order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub switches: Vec<OffsetSwitch>,
    pub topology: TopologyConfig,
    /// Per-agent `[position, velocity]`.
    pub x_init: Vec<Vec<f64>>,
    /// Seed the instance was drawn with, if any. Informational.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn follower_index(id: usize, n_agents: usize, what: &str) -> Result<usize> {
    if id == 0 || id > n_agents {
        return Err(Error::Config(format!(
            "{what}: agent id {id} outside 1..={n_agents}"
        )));
    }
    Ok(id - 1)
}

fn offsets_from(entries: &[OffsetEntry], n_agents: usize, dim: usize) -> Result<EdgeOffsets> {
    let mut parsed = Vec::with_capacity(entries.len());
    for e in entries {
        let i = follower_index(e.i, n_agents, "offset")?;
        let peer = if e.j == 0 {
            Peer::Leader
        } else {
            Peer::Follower(follower_index(e.j, n_agents, "offset")?)
        };
        parsed.push((i, peer, e.c.clone()));
    }
    EdgeOffsets::from_entries(dim, parsed)
}

fn offsets_to(offsets: &EdgeOffsets) -> Vec<OffsetEntry> {
    offsets
        .entries()
        .into_iter()
        .map(|(i, peer, c)| OffsetEntry {
            i: i + 1,
            j: match peer {
                Peer::Leader => 0,
                Peer::Follower(j) => j + 1,
            },
            c,
        })
        .collect()
}

impl TopologyConfig {
    pub fn to_topology(&self) -> Result<Topology> {
        if self.leader_access.len() != self.n_agents {
            return Err(Error::Config(format!(
                "{} leader-access flags for {} agents",
                self.leader_access.len(),
                self.n_agents
            )));
        }
        if let Some(bad) = self.leader_access.iter().find(|&&b| b > 1) {
            return Err(Error::Config(format!("leader-access flag {bad} is not 0 or 1")));
        }
        let edges = self
            .edges
            .iter()
            .map(|&[i, j]| {
                Ok((
                    follower_index(i, self.n_agents, "edge")?,
                    follower_index(j, self.n_agents, "edge")?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let t = Topology::new(
            self.n_agents,
            edges,
            self.leader_access.iter().map(|&b| b == 1).collect(),
            self.state_dim,
        );
        t.validate()?;
        Ok(t)
    }

    pub fn from_topology(t: &Topology) -> Self {
        Self {
            n_agents: t.n_agents(),
            edges: t.edges().iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            leader_access: t.leader_access().iter().map(|&b| b as u8).collect(),
            state_dim: t.state_dim(),
        }
    }
}

impl InstanceConfig {
    pub fn to_instance(&self) -> Result<FormationInstance> {
        let topology = self.topology.to_topology()?;
        let (big_n, n) = (topology.n_agents(), topology.state_dim());
        if self.x_init.len() != big_n {
            return Err(Error::Config(format!(
                "x_init has {} agent blocks, expected {big_n}",
                self.x_init.len()
            )));
        }
        if let Some(b) = self.x_init.iter().find(|b| b.len() != 2 * n) {
            return Err(Error::Config(format!(
                "x_init block has {} entries, expected {}",
                b.len(),
                2 * n
            )));
        }
        let x_init = DVector::from_iterator(2 * n * big_n, self.x_init.iter().flatten().copied());
        if x_init.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("x_init has non-finite entries".into()));
        }
        let offsets = offsets_from(&self.offsets, big_n, n)?;
        let mut inst = FormationInstance::new(self.leader.clone(), self.dynamics.clone(), offsets, topology, x_init)?;
        for sw in &self.switches {
            inst = inst.with_offset_switch(sw.start, offsets_from(&sw.offsets, big_n, n)?)?;
        }
        Ok(inst)
    }

    pub fn from_instance(inst: &FormationInstance, seed: Option<u64>) -> Self {
        let w = 2 * inst.state_dim();
        let phases = inst.phases();
        Self {
            leader: inst.leader.clone(),
            dynamics: inst.dynamics.clone(),
            offsets: offsets_to(&phases[0].offsets),
            switches: phases[1..]
                .iter()
                .map(|p| OffsetSwitch {
                    start: p.start,
                    offsets: offsets_to(&p.offsets),
                })
                .collect(),
            topology: TopologyConfig::from_topology(inst.topology()),
            x_init: inst.x_init.as_slice().chunks(w).map(<[f64]>::to_vec).collect(),
            seed,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

pub fn load_instance(path: &Path) -> Result<FormationInstance> {
    InstanceConfig::load(path)?.to_instance()
}
