//! Formation offsets and the error algebra.
//!
//! Stacked vectors of dimension `N n` (positions, errors, offsets) are laid out
//! agent by agent: entries `i*n .. (i+1)*n` belong to follower `i`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leader::LeaderState;
use crate::topology::{DerivedMatrices, Topology};

/// The other end of an offset constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Peer {
    Leader,
    Follower(usize),
}

/// Desired relative displacements `c_ij` (follower pairs) and `c_i0` (leader links).
///
/// Agent `i` aims for `x_i = x_j - c_ij`. Follower offsets are stored for both
/// orientations with `c_ji = -c_ij`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeOffsets {
    dim: usize,
    follower: BTreeMap<(usize, usize), Vec<f64>>,
    leader: BTreeMap<usize, Vec<f64>>,
}

impl EdgeOffsets {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    /// Builds the offset table from `(i, peer, c)` entries. Giving both `c_ij`
    /// and `c_ji` is allowed only when they are exact negatives.
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (usize, Peer, Vec<f64>)>) -> Result<Self> {
        let mut out = Self::new(dim);
        for (i, peer, c) in entries {
            match peer {
                Peer::Leader => out.set_leader(i, c)?,
                Peer::Follower(j) => out.set_follower(i, j, c)?,
            }
        }
        Ok(out)
    }

    /// Offsets `c_ij = c_i - c_j` and `c_i0 = c_i` from leader-relative
    /// targets `c_i`, for every edge of `topology`. Always feasible.
    pub fn from_leader_relative(topology: &Topology, targets: &[Vec<f64>]) -> Result<Self> {
        let n = topology.state_dim();
        let mut out = Self::new(n);
        for &(i, j) in topology.edges() {
            let c: Vec<f64> = (0..n).map(|d| targets[i][d] - targets[j][d]).collect();
            out.set_follower(i, j, c)?;
        }
        for (i, &b) in topology.leader_access().iter().enumerate() {
            if b {
                out.set_leader(i, targets[i].clone())?;
            }
        }
        Ok(out)
    }

    /// All-zero offsets for every edge of `topology` (consensus on the leader).
    pub fn zeros(topology: &Topology) -> Self {
        let zero = vec![0.0; topology.state_dim()];
        let targets = vec![zero; topology.n_agents()];
        Self::from_leader_relative(topology, &targets).expect("zero offsets are consistent")
    }

    fn check_len(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.dim {
            return Err(Error::Dimension(format!(
                "offset has {} components, expected {}",
                c.len(),
                self.dim
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("offset has non-finite components".into()));
        }
        Ok(())
    }

    pub fn set_follower(&mut self, i: usize, j: usize, c: Vec<f64>) -> Result<()> {
        self.check_len(&c)?;
        if i == j {
            return Err(Error::Config(format!("offset c_{i}{i} on a self-loop")));
        }
        let neg: Vec<f64> = c.iter().map(|v| -v).collect();
        for (key, val) in [((i, j), &c), ((j, i), &neg)] {
            if let Some(existing) = self.follower.get(&key) {
                if existing != val {
                    return Err(Error::Config(format!(
                        "offsets for edge ({}, {}) are not antisymmetric",
                        key.0, key.1
                    )));
                }
            }
        }
        self.follower.insert((j, i), neg);
        self.follower.insert((i, j), c);
        Ok(())
    }

    pub fn set_leader(&mut self, i: usize, c: Vec<f64>) -> Result<()> {
        self.check_len(&c)?;
        self.leader.insert(i, c);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn follower(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.follower.get(&(i, j)).map(Vec::as_slice)
    }

    pub fn leader(&self, i: usize) -> Option<&[f64]> {
        self.leader.get(&i).map(Vec::as_slice)
    }

    /// Every stored entry as `(i, peer, c)`, follower pairs once with `i < j`.
    pub fn entries(&self) -> Vec<(usize, Peer, Vec<f64>)> {
        let mut out: Vec<_> = self
            .follower
            .iter()
            .filter(|((i, j), _)| i < j)
            .map(|(&(i, j), c)| (i, Peer::Follower(j), c.clone()))
            .collect();
        out.extend(self.leader.iter().map(|(&i, c)| (i, Peer::Leader, c.clone())));
        out
    }

    /// Checks that every edge and leader link of `topology` has an offset.
    pub fn check_covers(&self, topology: &Topology) -> Result<()> {
        if self.dim != topology.state_dim() {
            return Err(Error::Dimension(format!(
                "offsets have dimension {}, topology {}",
                self.dim,
                topology.state_dim()
            )));
        }
        for &(i, j) in topology.edges() {
            if self.follower(i, j).is_none() {
                return Err(Error::Config(format!("missing offset for edge ({i}, {j})")));
            }
        }
        for (i, &b) in topology.leader_access().iter().enumerate() {
            if b && self.leader(i).is_none() {
                return Err(Error::Config(format!("missing leader offset for agent {i}")));
            }
        }
        Ok(())
    }
}

/// Positive control gains `k_i1`, `k_i2` and adaptation rates `mu_i1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSet {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub mu1: Vec<f64>,
}

impl GainSet {
    pub fn uniform(n_agents: usize, k1: f64, k2: f64, mu1: f64) -> Result<Self> {
        let g = Self {
            k1: vec![k1; n_agents],
            k2: vec![k2; n_agents],
            mu1: vec![mu1; n_agents],
        };
        g.validate(n_agents)?;
        Ok(g)
    }

    /// `k1 = 0.1`, `k2 = mu1 = 0.5` for every agent.
    pub fn standard(n_agents: usize) -> Self {
        Self::uniform(n_agents, 0.1, 0.5, 0.5).expect("standard gains are positive")
    }

    pub fn validate(&self, n_agents: usize) -> Result<()> {
        for (name, v) in [("k1", &self.k1), ("k2", &self.k2), ("mu1", &self.mu1)] {
            if v.len() != n_agents {
                return Err(Error::Config(format!("{name} has {} entries for {n_agents} agents", v.len())));
            }
            if v.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
                return Err(Error::Config(format!("{name} gains must be strictly positive")));
            }
        }
        Ok(())
    }
}

/// Stacked leader-relative offsets `c = H^-1 [sum_j c_ij + b_i c_i0]_i`.
///
/// The same vector appears as `c̄` in the stacked error expression.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetVector {
    pub c: DVector<f64>,
    pub rhs: DVector<f64>,
}

impl OffsetVector {
    /// Leader-relative offset `c_i` of follower `i`.
    pub fn agent(&self, i: usize, n: usize) -> &[f64] {
        &self.c.as_slice()[i * n..(i + 1) * n]
    }
}

pub fn offsets_to_c(topology: &Topology, derived: &DerivedMatrices, offsets: &EdgeOffsets) -> Result<OffsetVector> {
    offsets.check_covers(topology)?;
    let n = topology.state_dim();
    let big_n = topology.n_agents();
    let mut rhs = DVector::zeros(big_n * n);
    for i in 0..big_n {
        for &j in topology.neighbors(i) {
            let c = offsets.follower(i, j).expect("coverage checked");
            for d in 0..n {
                rhs[i * n + d] += c[d];
            }
        }
        if topology.leader_access()[i] {
            let c = offsets.leader(i).expect("coverage checked");
            for d in 0..n {
                rhs[i * n + d] += c[d];
            }
        }
    }
    let c = &derived.h_inv * &rhs;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Assumption("H is singular; offsets are undefined".into()));
    }
    Ok(OffsetVector { c, rhs })
}

/// Whether the formation set is non-empty: the unique candidate `x_1 = x̄_01 - c`
/// must satisfy every edge and leader constraint.
pub fn check_feasible(topology: &Topology, offsets: &EdgeOffsets, c: &OffsetVector) -> Result<()> {
    let n = topology.state_dim();
    let scale = 1.0 + c.c.amax();
    let tol = 1e-9 * scale;
    // Leader at the origin; x_i = -c_i.
    for &(i, j) in topology.edges() {
        let cij = offsets.follower(i, j).expect("coverage checked");
        let (ci, cj) = (c.agent(i, n), c.agent(j, n));
        let res = (0..n).map(|d| (-ci[d] + cj[d] + cij[d]).abs()).fold(0.0, f64::max);
        if res > tol {
            return Err(Error::Config(format!(
                "formation offsets are inconsistent around edge ({i}, {j}) (residual {res:e})"
            )));
        }
    }
    for (i, &b) in topology.leader_access().iter().enumerate() {
        if b {
            let ci0 = offsets.leader(i).expect("coverage checked");
            let ci = c.agent(i, n);
            let res = (0..n).map(|d| (-ci[d] + ci0[d]).abs()).fold(0.0, f64::max);
            if res > tol {
                return Err(Error::Config(format!(
                    "formation offsets are inconsistent at the leader link of agent {i} (residual {res:e})"
                )));
            }
        }
    }
    Ok(())
}

/// Local formation error `e_i1` from relative measurements only.
///
/// `x1` stacks follower positions (`N n`), `x01` is the leader position.
pub fn local_error(topology: &Topology, offsets: &EdgeOffsets, x1: &[f64], x01: &[f64], i: usize) -> Result<DVector<f64>> {
    let n = topology.state_dim();
    if i >= topology.n_agents() {
        return Err(Error::Index {
            index: i,
            len: topology.n_agents(),
        });
    }
    let mut e = DVector::zeros(n);
    let xi = &x1[i * n..(i + 1) * n];
    for &j in topology.neighbors(i) {
        let c = offsets
            .follower(i, j)
            .ok_or_else(|| Error::Config(format!("missing offset for edge ({i}, {j})")))?;
        let xj = &x1[j * n..(j + 1) * n];
        for d in 0..n {
            e[d] += xi[d] - xj[d] + c[d];
        }
    }
    if topology.leader_access()[i] {
        let c = offsets
            .leader(i)
            .ok_or_else(|| Error::Config(format!("missing leader offset for agent {i}")))?;
        for d in 0..n {
            e[d] += xi[d] - x01[d] + c[d];
        }
    }
    Ok(e)
}

/// Local errors of one agent: `e_i1`, `ė_i1` and `e_i2 = ė_i1 + k_i1 e_i1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalErrors {
    pub e1: Vec<f64>,
    pub e1_dot: Vec<f64>,
    pub e2: Vec<f64>,
}

/// Computes [`LocalErrors`] for agent `i` reading only its own, its neighbors'
/// and (if linked) the leader's state. `x` uses the per-agent
/// `[position, velocity]` block layout.
pub(crate) fn local_errors(
    topology: &Topology,
    offsets: &EdgeOffsets,
    x: &[f64],
    leader: &LeaderState,
    k1: f64,
    i: usize,
) -> LocalErrors {
    let n = topology.state_dim();
    let block = |a: usize| &x[a * 2 * n..(a + 1) * 2 * n];
    let xi = block(i);
    let mut e1 = vec![0.0; n];
    let mut e1_dot = vec![0.0; n];
    for &j in topology.neighbors(i) {
        let c = offsets.follower(i, j).expect("instance offsets cover every edge");
        let xj = block(j);
        for d in 0..n {
            e1[d] += xi[d] - xj[d] + c[d];
            e1_dot[d] += xi[n + d] - xj[n + d];
        }
    }
    if topology.leader_access()[i] {
        let c = offsets.leader(i).expect("instance offsets cover every leader link");
        for d in 0..n {
            e1[d] += xi[d] - leader.position[d] + c[d];
            e1_dot[d] += xi[n + d] - leader.velocity[d];
        }
    }
    let e2 = (0..n).map(|d| e1_dot[d] + k1 * e1[d]).collect();
    LocalErrors { e1, e1_dot, e2 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub e1: DVector<f64>,
    pub e1_dot: DVector<f64>,
    pub e2: DVector<f64>,
    /// Disagreement `x_1 - x̄_01 + c`; global, not locally measurable.
    pub delta1: DVector<f64>,
    n: usize,
}

impl ErrorState {
    pub fn e1_of(&self, i: usize) -> &[f64] {
        &self.e1.as_slice()[i * self.n..(i + 1) * self.n]
    }

    pub fn e2_of(&self, i: usize) -> &[f64] {
        &self.e2.as_slice()[i * self.n..(i + 1) * self.n]
    }

    pub fn e1_dot_of(&self, i: usize) -> &[f64] {
        &self.e1_dot.as_slice()[i * self.n..(i + 1) * self.n]
    }
}

/// Splits a per-agent `[pos, vel]` state into stacked positions and velocities.
pub fn split_state(x: &[f64], n: usize) -> (DVector<f64>, DVector<f64>) {
    let big_n = x.len() / (2 * n);
    let mut x1 = DVector::zeros(big_n * n);
    let mut x2 = DVector::zeros(big_n * n);
    for i in 0..big_n {
        for d in 0..n {
            x1[i * n + d] = x[i * 2 * n + d];
            x2[i * n + d] = x[i * 2 * n + n + d];
        }
    }
    (x1, x2)
}

/// Repeats an `n`-vector `copies` times.
pub fn stack_copies(v: &DVector<f64>, copies: usize) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(n * copies, |r, _| v[r % n])
}

/// Matrix form of the error algebra for one graph and offset set.
#[derive(Debug, Clone)]
pub struct ErrorModel {
    pub h: DMatrix<f64>,
    pub h_inv: DMatrix<f64>,
    /// Diagonal of `K1 = diag(k_i1) ⊗ I_n`.
    pub k1: DVector<f64>,
    pub c: DVector<f64>,
    pub sigma_min_h: f64,
    n: usize,
}

impl ErrorModel {
    pub fn new(topology: &Topology, derived: &DerivedMatrices, c: &OffsetVector, gains: &GainSet) -> Result<Self> {
        let n = topology.state_dim();
        gains.validate(topology.n_agents())?;
        let k1 = DVector::from_fn(topology.n_agents() * n, |r, _| gains.k1[r / n]);
        Ok(Self {
            h: derived.h.clone(),
            h_inv: derived.h_inv.clone(),
            k1,
            c: c.c.clone(),
            sigma_min_h: derived.sigma_min_h,
            n,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    /// `e1 = H(x1 - x̄01 + c)`, `ė1 = H(x2 - x̄02)`, `e2 = ė1 + K1 e1`.
    pub fn error_state(&self, x: &[f64], leader: &LeaderState) -> ErrorState {
        let (x1, x2) = split_state(x, self.n);
        let copies = x1.len() / self.n;
        let delta1 = &x1 - stack_copies(&leader.position, copies) + &self.c;
        let e1 = &self.h * &delta1;
        let e1_dot = &self.h * (&x2 - stack_copies(&leader.velocity, copies));
        let e2 = &e1_dot + self.k1.component_mul(&e1);
        ErrorState {
            e1,
            e1_dot,
            e2,
            delta1,
            n: self.n,
        }
    }

    /// Error dynamics `ė1 = -K1 e1 + e2`,
    /// `ė2 = H(f + g u - ẍ̄01) - K1² e1 + K1 e2`.
    pub fn error_rhs(
        &self,
        errs: &ErrorState,
        f: &DVector<f64>,
        g: &DMatrix<f64>,
        u: &DVector<f64>,
        ddx01: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let k1e1 = self.k1.component_mul(&errs.e1);
        let de1 = &errs.e2 - &k1e1;
        let accel = f + g * u - ddx01;
        let de2 = &self.h * accel - self.k1.component_mul(&k1e1) + self.k1.component_mul(&errs.e2);
        (de1, de2)
    }
}
