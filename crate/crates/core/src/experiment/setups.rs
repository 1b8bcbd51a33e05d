//! The three experiment setups: stabilization around a moving leader,
//! three-area surveillance, and randomized instances.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentDynamicsParams, AgentModel};
use crate::error::{Error, Result};
use crate::formation::{EdgeOffsets, Peer};
use crate::instance::FormationInstance;
use crate::leader::{Interpolation, LeaderProfile, WaypointPath};
use crate::parallel::derive_seed;
use crate::sim::SimConfig;
use crate::topology::Topology;

pub const N_AGENTS: usize = 5;
pub const DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Exp1Stabilization,
    Exp2Surveillance,
    Exp3Randomized,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" | "exp1_stabilization" => Ok(Self::Exp1Stabilization),
            "exp2" | "exp2_surveillance" => Ok(Self::Exp2Surveillance),
            "exp3" | "exp3_randomized" => Ok(Self::Exp3Randomized),
            _ => Err(Error::Config(format!("unknown experiment {s:?} (exp1, exp2, exp3)"))),
        }
    }
}

impl ExperimentKind {
    pub fn short_name(self) -> &'static str {
        match self {
            Self::Exp1Stabilization => "exp1",
            Self::Exp2Surveillance => "exp2",
            Self::Exp3Randomized => "exp3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Oracle trajectories used for training data (exp1, exp2).
    pub training_trajectories: usize,
    pub samples_per_trajectory: usize,
    /// Randomized instance counts (exp3).
    pub train_instances: usize,
    pub test_instances: usize,
    pub duration: f64,
    /// Half-width of the initial position spread around the leader (exp1, exp2) or the origin (exp3).
    pub position_spread: f64,
    pub velocity_spread: f64,
    /// Offset switch times (exp2).
    pub switch_times: Vec<f64>,
    pub base_seed: u64,
}

impl ExperimentSpec {
    pub fn exp1(seed: u64) -> Self {
        Self {
            kind: ExperimentKind::Exp1Stabilization,
            training_trajectories: 100,
            samples_per_trajectory: 500,
            train_instances: 0,
            test_instances: 0,
            duration: 55.0,
            position_spread: 4.0,
            velocity_spread: 2.0,
            switch_times: Vec::new(),
            base_seed: seed,
        }
    }

    pub fn exp2(seed: u64) -> Self {
        Self {
            kind: ExperimentKind::Exp2Surveillance,
            duration: 225.0,
            position_spread: 10.0,
            switch_times: vec![75.0, 150.0],
            ..Self::exp1(seed)
        }
    }

    /// Desk scale uses 20 training and 5 test instances; `full` restores 100/20.
    pub fn exp3(seed: u64, full: bool) -> Self {
        let (train, test) = if full { (100, 20) } else { (20, 5) };
        Self {
            kind: ExperimentKind::Exp3Randomized,
            training_trajectories: train,
            train_instances: train,
            test_instances: test,
            duration: 40.0,
            position_spread: 10.0,
            velocity_spread: 2.5,
            ..Self::exp1(seed)
        }
    }

    pub fn for_kind(kind: ExperimentKind, seed: u64, full: bool) -> Self {
        match kind {
            ExperimentKind::Exp1Stabilization => Self::exp1(seed),
            ExperimentKind::Exp2Surveillance => Self::exp2(seed),
            ExperimentKind::Exp3Randomized => Self::exp3(seed, full),
        }
    }

    /// Integration settings for the oracle runs that produce training data.
    pub fn data_sim_config(&self) -> SimConfig {
        SimConfig::with_duration(self.duration)
    }

    /// Integration settings for policy evaluation. Light randomized agents far
    /// from the origin have large input gains, which makes the learned and
    /// adaptive loops stiff; experiment 3 therefore steps at 0.1 ms and holds
    /// network outputs for 1 ms. Rows stay 10 ms apart in every case.
    pub fn eval_sim_config(&self) -> SimConfig {
        match self.kind {
            ExperimentKind::Exp3Randomized => SimConfig {
                dt: 1e-4,
                record_stride: 100,
                nn_stride: 10,
                ..SimConfig::with_duration(self.duration)
            },
            _ => SimConfig::with_duration(self.duration),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts_ok = match self.kind {
            ExperimentKind::Exp3Randomized => self.train_instances > 0 && self.test_instances > 0,
            _ => self.training_trajectories > 0,
        };
        if !counts_ok || self.samples_per_trajectory < 2 || !(self.duration > 0.0) {
            return Err(Error::Config("experiment counts and duration must be positive".into()));
        }
        if !(self.position_spread >= 0.0 && self.velocity_spread >= 0.0) {
            return Err(Error::Config("spreads must be non-negative".into()));
        }
        Ok(())
    }
}

// Seed streams.
const STREAM_EVAL: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_EXP3: u64 = 3;

/// Follower edges `(1,2), (2,3), (3,4), (4,5)`; agents 1, 3, 5 see the leader.
pub fn exp1_topology() -> Topology {
    Topology::new(N_AGENTS, [(0, 1), (1, 2), (2, 3), (3, 4)], vec![true, false, true, false, true], DIM)
}

fn chain_offsets(edges: [[f64; 3]; 4], leader: [[f64; 3]; 3]) -> EdgeOffsets {
    let mut entries: Vec<(usize, Peer, Vec<f64>)> = edges
        .iter()
        .enumerate()
        .map(|(k, c)| (k, Peer::Follower(k + 1), c.to_vec()))
        .collect();
    for (agent, c) in [0, 2, 4].into_iter().zip(leader) {
        entries.push((agent, Peer::Leader, c.to_vec()));
    }
    EdgeOffsets::from_entries(DIM, entries).expect("constant offsets are well formed")
}

pub fn exp1_offsets() -> EdgeOffsets {
    chain_offsets(
        [[1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, -2.0, 0.0], [-2.0, 0.0, 0.0]],
        [[1.0, -1.0, 0.0], [-1.0, -1.0, 0.0], [1.0, 1.0, 0.0]],
    )
}

pub const EXP1_LEADER_POSITION: [f64; 3] = [5.0, 2.0, 10.0];
pub const EXP1_LEADER_VELOCITY: [f64; 3] = [0.0039, -0.9836, 0.0];
pub const EXP1_LEADER_RADIUS: f64 = 5.0;

/// Horizontal circle through the stated initial leader position and velocity.
pub fn exp1_leader() -> LeaderProfile {
    LeaderProfile::circle_through(&EXP1_LEADER_POSITION, &EXP1_LEADER_VELOCITY, EXP1_LEADER_RADIUS)
        .expect("nonzero initial speed")
}

fn random_dynamics(rng: &mut ChaCha8Rng) -> Vec<AgentModel> {
    (0..N_AGENTS)
        .map(|_| AgentModel::Aerial(AgentDynamicsParams::random(rng)))
        .collect()
}

/// Per-agent `center + rand(−p, p)·1`, velocity `rand(−v, v)·1`.
fn random_initial_state(rng: &mut ChaCha8Rng, center: &[f64], p: f64, v: f64) -> DVector<f64> {
    let mut x = DVector::zeros(2 * N_AGENTS * DIM);
    for i in 0..N_AGENTS {
        let sp = if p > 0.0 { rng.random_range(-p..p) } else { 0.0 };
        let sv = if v > 0.0 { rng.random_range(-v..v) } else { 0.0 };
        for d in 0..DIM {
            x[i * 2 * DIM + d] = center[d] + sp;
            x[i * 2 * DIM + DIM + d] = sv;
        }
    }
    x
}

fn exp1_like(spec: &ExperimentSpec, seed: u64) -> Result<FormationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dynamics = random_dynamics(&mut rng);
    let x = random_initial_state(&mut rng, &EXP1_LEADER_POSITION, spec.position_spread, spec.velocity_spread);
    FormationInstance::new(exp1_leader(), dynamics, exp1_offsets(), exp1_topology(), x)
}

/// The experiment-1 evaluation instance.
pub fn make_exp1(seed: u64) -> Result<(FormationInstance, ExperimentSpec)> {
    let spec = ExperimentSpec::exp1(seed);
    Ok((exp1_like(&spec, derive_seed(seed, STREAM_EVAL, 0))?, spec))
}

/// Area centers; the leader visits the first region of each.
pub const EXP2_AREAS: [[f64; 3]; 3] = [[-50.0, -50.0, -10.0], [50.0, 50.0, 10.0], [50.0, -50.0, 10.0]];
pub const EXP2_LEADER_START: [f64; 3] = [0.0, 0.0, 10.0];

/// Offset sets of the three areas. In area 2 the leader link of agent 5 is
/// `[0, 10, 0]`: the only value consistent with the other six constraints.
pub fn exp2_offsets() -> [EdgeOffsets; 3] {
    [
        chain_offsets(
            [[10.0, 10.0, 0.0], [20.0, 0.0, 0.0], [0.0, -20.0, 0.0], [-20.0, 0.0, 0.0]],
            [[20.0, 0.0, 0.0], [-10.0, -10.0, 0.0], [10.0, 10.0, 0.0]],
        ),
        chain_offsets(
            [[0.0, 20.0, 0.0], [10.0, 0.0, 0.0], [10.0, -10.0, 0.0], [-10.0, -10.0, 0.0]],
            [[10.0, 10.0, 0.0], [0.0, -10.0, 0.0], [0.0, 10.0, 0.0]],
        ),
        chain_offsets(
            [[20.0, 0.0, 0.0], [0.0, -10.0, 0.0], [-20.0, -10.0, 0.0], [0.0, 10.0, 0.0]],
            [[10.0, -10.0, 0.0], [-10.0, 0.0, 0.0], [10.0, 0.0, 0.0]],
        ),
    ]
}

/// Leader comes to rest at each area center, 30 s transfer then a dwell until
/// the next offset switch; the last dwell runs to the end of the horizon.
pub fn exp2_leader(spec: &ExperimentSpec) -> Result<LeaderProfile> {
    let transfer = 30.0;
    let mut starts = vec![0.0];
    starts.extend(spec.switch_times.iter().copied());
    if starts.len() != EXP2_AREAS.len() {
        return Err(Error::Config(format!(
            "surveillance needs {} switch times, got {}",
            EXP2_AREAS.len() - 1,
            spec.switch_times.len()
        )));
    }
    let mut points = vec![EXP2_LEADER_START.to_vec()];
    let mut times = vec![0.0];
    for (k, area) in EXP2_AREAS.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(spec.duration);
        if !(end > starts[k] + transfer) {
            return Err(Error::Config("surveillance phases must be longer than the 30 s transfer".into()));
        }
        points.push(area.to_vec());
        times.push(starts[k] + transfer);
        points.push(area.to_vec());
        times.push(end);
    }
    Ok(LeaderProfile::WaypointPath(WaypointPath::new(points, times, Interpolation::RestToRest)?))
}

fn exp2_like(spec: &ExperimentSpec, seed: u64) -> Result<FormationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dynamics = random_dynamics(&mut rng);
    let x = random_initial_state(&mut rng, &EXP2_LEADER_START, spec.position_spread, spec.velocity_spread);
    let [a1, a2, a3] = exp2_offsets();
    let mut inst = FormationInstance::new(exp2_leader(spec)?, dynamics, a1, exp1_topology(), x)?;
    for (t, offsets) in spec.switch_times.iter().zip([a2, a3]) {
        inst = inst.with_offset_switch(*t, offsets)?;
    }
    Ok(inst)
}

pub fn make_exp2(seed: u64) -> Result<(FormationInstance, ExperimentSpec)> {
    let spec = ExperimentSpec::exp2(seed);
    Ok((exp2_like(&spec, derive_seed(seed, STREAM_EVAL, 0))?, spec))
}

/// Connected follower graph: a random spanning tree plus independent extra
/// edges with probability `density`; leader bits Bernoulli(1/2) until one is set.
pub fn random_topology(rng: &mut ChaCha8Rng, n_agents: usize, density: f64) -> Result<Topology> {
    for _ in 0..100 {
        let mut order: Vec<usize> = (0..n_agents).collect();
        order.shuffle(rng);
        let mut edges = Vec::new();
        for k in 1..n_agents {
            let parent = order[rng.random_range(0..k)];
            edges.push((order[k], parent));
        }
        for i in 0..n_agents {
            for j in i + 1..n_agents {
                if rng.random_bool(density) {
                    edges.push((i, j));
                }
            }
        }
        let mut leader = vec![false; n_agents];
        while !leader.iter().any(|&b| b) {
            leader.iter_mut().for_each(|b| *b = rng.random_bool(0.5));
        }
        let topo = Topology::new(n_agents, edges, leader, DIM);
        if topo.validate()? {
            return Ok(topo);
        }
    }
    Err(Error::Config("random topology sampler failed to produce a connected graph".into()))
}

fn exp3_instance(spec: &ExperimentSpec, seed: u64) -> Result<FormationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dynamics = random_dynamics(&mut rng);
    let topo = random_topology(&mut rng, N_AGENTS, 0.4)?;
    // Leader-relative offsets s_i·1 with s_i in (−2.5, 2.5) keep every
    // pairwise offset c_i − c_j inside (−5, 5)·1 and the set consistent.
    let targets: Vec<Vec<f64>> = (0..N_AGENTS).map(|_| vec![rng.random_range(-2.5..2.5); DIM]).collect();
    let offsets = EdgeOffsets::from_leader_relative(&topo, &targets)?;
    let x = random_initial_state(&mut rng, &[0.0; DIM], spec.position_spread, spec.velocity_spread);
    let mut points: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            vec![
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(1.0..20.0),
            ]
        })
        .collect();
    points.shuffle(&mut rng);
    let leader = LeaderProfile::WaypointPath(WaypointPath::evenly_timed(points, spec.duration, Interpolation::Spline)?);
    FormationInstance::new(leader, dynamics, offsets, topo, x)
}

/// All randomized instances; the first `train_instances` form the training split.
pub fn make_exp3(spec: &ExperimentSpec) -> Result<Vec<FormationInstance>> {
    spec.validate()?;
    (0..spec.train_instances + spec.test_instances)
        .map(|k| exp3_instance(spec, derive_seed(spec.base_seed, STREAM_EXP3, k as u64)))
        .collect()
}

/// Instances whose oracle runs make up the training data.
pub fn training_instances(spec: &ExperimentSpec) -> Result<Vec<FormationInstance>> {
    spec.validate()?;
    match spec.kind {
        ExperimentKind::Exp1Stabilization => (0..spec.training_trajectories)
            .map(|k| exp1_like(spec, derive_seed(spec.base_seed, STREAM_TRAIN, k as u64)))
            .collect(),
        ExperimentKind::Exp2Surveillance => (0..spec.training_trajectories)
            .map(|k| exp2_like(spec, derive_seed(spec.base_seed, STREAM_TRAIN, k as u64)))
            .collect(),
        ExperimentKind::Exp3Randomized => {
            let mut all = make_exp3(spec)?;
            all.truncate(spec.train_instances);
            Ok(all)
        }
    }
}

/// Instances the policies are evaluated on.
pub fn evaluation_instances(spec: &ExperimentSpec) -> Result<Vec<FormationInstance>> {
    match spec.kind {
        ExperimentKind::Exp1Stabilization => Ok(vec![exp1_like(spec, derive_seed(spec.base_seed, STREAM_EVAL, 0))?]),
        ExperimentKind::Exp2Surveillance => Ok(vec![exp2_like(spec, derive_seed(spec.base_seed, STREAM_EVAL, 0))?]),
        ExperimentKind::Exp3Randomized => Ok(make_exp3(spec)?.split_off(spec.train_instances)),
    }
}
