//! Undirected follower graph with leader access, and the matrices derived from it.
//!
//! Followers are indexed `0..n_agents` in the API. Configuration files use the
//! conventional 1-based numbering with `0` reserved for the leader; the
//! conversion happens in [`crate::config`].

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n_agents: usize,
    edges: Vec<(usize, usize)>,
    leader_access: Vec<bool>,
    state_dim: usize,
    adjacency: Vec<Vec<usize>>,
}

/// Ordered neighbor set of one follower.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    /// Follower neighbors in ascending index order.
    pub followers: Vec<usize>,
    /// Whether the agent measures the leader directly.
    pub leader: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedMatrices {
    pub laplacian: DMatrix<f64>,
    pub lb: DMatrix<f64>,
    pub lb_inv: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub h_inv: DMatrix<f64>,
    /// Smallest singular value of `H`, equal to the smallest eigenvalue of `L + B`.
    pub sigma_min_h: f64,
}

impl Topology {
    /// Builds a topology. Edges are stored as unordered pairs; duplicates and
    /// reversed duplicates collapse. Structural problems are reported by
    /// [`Topology::validate`], not here.
    pub fn new(
        n_agents: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        leader_access: Vec<bool>,
        state_dim: usize,
    ) -> Self {
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(i, j)| if i <= j { (i, j) } else { (j, i) })
            .collect();
        edges.sort_unstable();
        edges.dedup();

        let mut adjacency = vec![Vec::new(); n_agents];
        for &(i, j) in &edges {
            if i != j && j < n_agents {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        Self {
            n_agents,
            edges,
            leader_access,
            state_dim,
            adjacency,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn leader_access(&self) -> &[bool] {
        &self.leader_access
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.edges.binary_search(&key).is_ok()
    }

    fn check_well_formed(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::Validation("topology has no agents".into()));
        }
        if self.state_dim == 0 {
            return Err(Error::Validation("state dimension must be positive".into()));
        }
        if self.leader_access.len() != self.n_agents {
            return Err(Error::Validation(format!(
                "leader_access has {} entries for {} agents",
                self.leader_access.len(),
                self.n_agents
            )));
        }
        for &(i, j) in &self.edges {
            if i == j {
                return Err(Error::Validation(format!("self-loop on agent {i}")));
            }
            if j >= self.n_agents {
                return Err(Error::Validation(format!(
                    "edge ({i}, {j}) references an agent outside 0..{}",
                    self.n_agents
                )));
            }
        }
        Ok(())
    }

    /// True iff the follower graph is connected and at least one follower sees the leader.
    pub fn validate(&self) -> Result<bool> {
        self.check_well_formed()?;
        Ok(self.leader_access.iter().any(|&b| b) && self.is_connected())
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_agents];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n_agents
    }

    pub fn neighbor_blocks(&self, i: usize) -> Result<Neighborhood> {
        if i >= self.n_agents || i >= self.leader_access.len() {
            return Err(Error::Index {
                index: i,
                len: self.n_agents,
            });
        }
        Ok(Neighborhood {
            followers: self.adjacency[i].clone(),
            leader: self.leader_access[i],
        })
    }

    /// Follower neighbors of `i` without allocation. Panics if `i` is out of range.
    pub(crate) fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_agents;
        let mut l = DMatrix::zeros(n, n);
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            l[(i, i)] = nbrs.len() as f64;
            for &j in nbrs {
                l[(i, j)] = -1.0;
            }
        }
        l
    }

    pub fn derive(&self) -> Result<DerivedMatrices> {
        if !self.validate()? {
            return Err(Error::Assumption(
                "follower graph must be connected with at least one leader link".into(),
            ));
        }
        let laplacian = self.laplacian();
        let mut lb = laplacian.clone();
        for (i, &b) in self.leader_access.iter().enumerate() {
            if b {
                lb[(i, i)] += 1.0;
            }
        }

        let eig = SymmetricEigen::new(lb.clone());
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if !(lambda_min > 1e-12 * lambda_max.max(1.0)) {
            return Err(Error::Assumption(format!(
                "L + B is not positive definite (smallest eigenvalue {lambda_min:e})"
            )));
        }
        let lb_inv = lb
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Assumption("L + B is numerically singular".into()))?
            .inverse();

        let eye = DMatrix::<f64>::identity(self.state_dim, self.state_dim);
        let h = lb.kronecker(&eye);
        let h_inv = lb_inv.kronecker(&eye);

        Ok(DerivedMatrices {
            laplacian,
            lb,
            lb_inv,
            h,
            h_inv,
            sigma_min_h: lambda_min,
        })
    }
}
