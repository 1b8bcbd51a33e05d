//! Follower dynamics `x_i1' = x_i2`, `x_i2' = f_i(x_i, t) + g_i(x_i, t) u_i`.
//!
//! The controllers never see these models; they are used to simulate the
//! plant, to generate oracle training data, and by the runtime monitors.

use nalgebra::DMatrix;
use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: [f64; 3] = [0.0, 0.0, 9.81];

/// Parameters of the aerial-vehicle family with unknown sinusoidal
/// disturbances and quadratic drag-like velocity coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDynamicsParams {
    pub mass: f64,
    pub amp: [f64; 3],
    pub freq: [f64; 3],
    pub phase: [f64; 3],
    pub f_mat: [[f64; 6]; 3],
}

/// The six quadratic velocity monomials `[v1², v2², v3², v1v2, v1v3, v2v3]`.
pub fn velocity_monomials(v: &[f64]) -> [f64; 6] {
    [
        v[0] * v[0],
        v[1] * v[1],
        v[2] * v[2],
        v[0] * v[1],
        v[0] * v[2],
        v[1] * v[2],
    ]
}

impl AgentDynamicsParams {
    /// Draws every constant independently from the open interval (0, 1).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut u = || -> f64 { rng.sample(Open01) };
        let mass = u();
        let amp = [u(), u(), u()];
        let freq = [u(), u(), u()];
        let phase = [u(), u(), u()];
        let mut f_mat = [[0.0; 6]; 3];
        for row in &mut f_mat {
            for v in row.iter_mut() {
                *v = u();
            }
        }
        Self {
            mass,
            amp,
            freq,
            phase,
            f_mat,
        }
    }

    /// All constants as a flat list, for range audits.
    pub fn constants(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.mass)
            .chain(self.amp)
            .chain(self.freq)
            .chain(self.phase)
            .chain(self.f_mat.iter().flatten().copied())
    }

    /// Drift `(1/m)(g_r + d1(t) + F y(v))` for the 6-dimensional agent state `x_i`.
    pub fn eval_f(&self, x_i: &[f64], t: f64) -> [f64; 3] {
        let y = velocity_monomials(&x_i[3..6]);
        let mut out = [0.0; 3];
        for (l, o) in out.iter_mut().enumerate() {
            let disturbance = self.amp[l] * (self.freq[l] * t + self.phase[l]).sin();
            let coupling: f64 = self.f_mat[l].iter().zip(&y).map(|(a, b)| a * b).sum();
            *o = (GRAVITY[l] + disturbance + coupling) / self.mass;
        }
        out
    }

    /// Scalar `(‖x_i‖ + 0.5 sin(0.1 t) + 1) / m`; the input matrix is this times `I3`.
    pub fn gain_factor(&self, x_i: &[f64], t: f64) -> f64 {
        let norm = x_i.iter().map(|v| v * v).sum::<f64>().sqrt();
        (norm + 0.5 * (0.1 * t).sin() + 1.0) / self.mass
    }

    pub fn eval_g(&self, x_i: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let s = checked_gain(self.gain_factor(x_i, t))?;
        Ok(DMatrix::identity(3, 3) * s)
    }
}

fn checked_gain(s: f64) -> Result<f64> {
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::Assumption(format!(
            "input gain factor {s} is not positive; g_i is not positive definite"
        )))
    }
}

/// Per-agent plant model. Every model has an input matrix `g_i = s(x_i, t) I_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum AgentModel {
    Aerial(AgentDynamicsParams),
    /// `f_i = 0`, `g_i = gain * I`.
    DoubleIntegrator { gain: f64 },
}

impl AgentModel {
    /// The state dimension `n` this model requires, if fixed.
    pub fn required_dim(&self) -> Option<usize> {
        match self {
            AgentModel::Aerial(_) => Some(3),
            AgentModel::DoubleIntegrator { .. } => None,
        }
    }

    /// Writes `f_i(x_i, t)` into `out` (length `n`).
    pub fn drift_into(&self, x_i: &[f64], t: f64, out: &mut [f64]) {
        match self {
            AgentModel::Aerial(p) => out.copy_from_slice(&p.eval_f(x_i, t)),
            AgentModel::DoubleIntegrator { .. } => out.fill(0.0),
        }
    }

    pub fn drift(&self, x_i: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; x_i.len() / 2];
        self.drift_into(x_i, t, &mut out);
        out
    }

    /// Positive scalar `s` with `g_i = s I_n`.
    pub fn gain(&self, x_i: &[f64], t: f64) -> Result<f64> {
        match self {
            AgentModel::Aerial(p) => checked_gain(p.gain_factor(x_i, t)),
            AgentModel::DoubleIntegrator { gain } => checked_gain(*gain),
        }
    }

    pub fn gain_matrix(&self, x_i: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let n = x_i.len() / 2;
        Ok(DMatrix::identity(n, n) * self.gain(x_i, t)?)
    }
}
