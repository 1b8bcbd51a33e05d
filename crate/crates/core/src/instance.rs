//! A formation instance: leader profile, follower dynamics, offsets, graph and
//! initial condition.

use nalgebra::DVector;

use crate::dynamics::AgentModel;
use crate::error::{Error, Result};
use crate::formation::{check_feasible, offsets_to_c, EdgeOffsets, ErrorModel, GainSet, OffsetVector};
use crate::leader::{LeaderProfile, LeaderState};
use crate::topology::{DerivedMatrices, Topology};

/// Offsets active from `start` until the next phase begins.
#[derive(Debug, Clone)]
pub struct OffsetPhase {
    pub start: f64,
    pub offsets: EdgeOffsets,
    pub c: OffsetVector,
}

#[derive(Debug, Clone)]
pub struct FormationInstance {
    pub leader: LeaderProfile,
    pub dynamics: Vec<AgentModel>,
    topology: Topology,
    derived: DerivedMatrices,
    phases: Vec<OffsetPhase>,
    /// Initial follower state, per-agent `[position, velocity]` blocks.
    pub x_init: DVector<f64>,
}

impl FormationInstance {
    pub fn new(
        leader: LeaderProfile,
        dynamics: Vec<AgentModel>,
        offsets: EdgeOffsets,
        topology: Topology,
        x_init: DVector<f64>,
    ) -> Result<Self> {
        let derived = topology.derive()?;
        let big_n = topology.n_agents();
        let n = topology.state_dim();
        if dynamics.len() != big_n {
            return Err(Error::Config(format!(
                "{} dynamics models for {big_n} agents",
                dynamics.len()
            )));
        }
        if let Some(bad) = dynamics.iter().find_map(|m| m.required_dim().filter(|&d| d != n)) {
            return Err(Error::Config(format!(
                "dynamics model requires state dimension {bad}, topology has {n}"
            )));
        }
        if leader.dim() != n {
            return Err(Error::Dimension(format!("leader has dimension {}, agents {n}", leader.dim())));
        }
        if x_init.len() != 2 * big_n * n {
            return Err(Error::Dimension(format!(
                "initial state has {} entries, expected {}",
                x_init.len(),
                2 * big_n * n
            )));
        }
        let mut leader = leader;
        leader.prepare()?;
        let phase = Self::make_phase(&topology, &derived, 0.0, offsets)?;
        Ok(Self {
            leader,
            dynamics,
            topology,
            derived,
            phases: vec![phase],
            x_init,
        })
    }

    fn make_phase(topology: &Topology, derived: &DerivedMatrices, start: f64, offsets: EdgeOffsets) -> Result<OffsetPhase> {
        let c = offsets_to_c(topology, derived, &offsets)?;
        check_feasible(topology, &offsets, &c)?;
        Ok(OffsetPhase { start, offsets, c })
    }

    /// Switches to a new offset set at time `start` (strictly after the previous switch).
    pub fn with_offset_switch(mut self, start: f64, offsets: EdgeOffsets) -> Result<Self> {
        let last = self.phases.last().expect("at least one phase").start;
        if !(start > last) {
            return Err(Error::Config(format!(
                "offset switch at {start} must come after {last}"
            )));
        }
        let phase = Self::make_phase(&self.topology, &self.derived, start, offsets)?;
        self.phases.push(phase);
        Ok(self)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn derived(&self) -> &DerivedMatrices {
        &self.derived
    }

    pub fn n_agents(&self) -> usize {
        self.topology.n_agents()
    }

    pub fn state_dim(&self) -> usize {
        self.topology.state_dim()
    }

    pub fn phases(&self) -> &[OffsetPhase] {
        &self.phases
    }

    pub fn phase_index_at(&self, t: f64) -> usize {
        self.phases.partition_point(|p| p.start <= t).saturating_sub(1)
    }

    pub fn phase_at(&self, t: f64) -> &OffsetPhase {
        &self.phases[self.phase_index_at(t)]
    }

    /// Offsets of the initial phase.
    pub fn offsets(&self) -> &EdgeOffsets {
        &self.phases[0].offsets
    }

    pub fn leader_state(&self, t: f64) -> LeaderState {
        self.leader.leader_state(t)
    }

    pub fn error_model(&self, gains: &GainSet, t: f64) -> Result<ErrorModel> {
        ErrorModel::new(&self.topology, &self.derived, &self.phase_at(t).c, gains)
    }

    /// Block of follower `i` in a stacked state.
    pub fn agent_block<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        let w = 2 * self.state_dim();
        &x[i * w..(i + 1) * w]
    }

    /// State in exact formation at time `t`: `x_i1 = x_01 - c_i`, `x_i2 = x_02`.
    pub fn formation_state(&self, t: f64) -> DVector<f64> {
        let n = self.state_dim();
        let leader = self.leader_state(t);
        let c = &self.phase_at(t).c;
        let mut x = DVector::zeros(2 * n * self.n_agents());
        for i in 0..self.n_agents() {
            let ci = c.agent(i, n);
            for d in 0..n {
                x[i * 2 * n + d] = leader.position[d] - ci[d];
                x[i * 2 * n + n + d] = leader.velocity[d];
            }
        }
        x
    }

    /// Stacked open-loop derivative for inputs `u` (`N n`).
    pub fn stacked_rhs(&self, x: &[f64], u: &[f64], t: f64) -> Result<DVector<f64>> {
        let n = self.state_dim();
        let big_n = self.n_agents();
        if x.len() != 2 * n * big_n || u.len() != n * big_n {
            return Err(Error::Dimension(format!(
                "state {} / input {} entries, expected {} / {}",
                x.len(),
                u.len(),
                2 * n * big_n,
                n * big_n
            )));
        }
        let mut out = DVector::zeros(x.len());
        let mut f = vec![0.0; n];
        for (i, model) in self.dynamics.iter().enumerate() {
            let xi = self.agent_block(x, i);
            model.drift_into(xi, t, &mut f);
            let g = model.gain(xi, t)?;
            for d in 0..n {
                out[i * 2 * n + d] = xi[n + d];
                out[i * 2 * n + n + d] = f[d] + g * u[i * n + d];
            }
        }
        Ok(out)
    }
}
