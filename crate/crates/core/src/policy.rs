//! Online controllers.
//!
//! The distributed policies are plain functions of an agent's augmented error,
//! its network output, its gains and its adaptation variable. They receive
//! nothing else, so locality holds by construction. Only the oracle, used to
//! generate training data, reads the white-box dynamics.

use serde::{Deserialize, Serialize};

use crate::dynamics::AgentModel;
use crate::error::{Error, Result};

/// Initial adaptation variable `d̂_i1(0)`.
pub const DEFAULT_D_HAT0: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// `u = u_nn − (k2 + d̂) e2`, `d̂̇ = μ‖e2‖²`.
    Adaptive,
    /// Adaptive law without the network term.
    NoNn,
    /// `u = u_nn − k2 e2` with `d̂` frozen.
    NonAdaptive,
    /// White-box data-generating controller.
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [Self::Adaptive, Self::NoNn, Self::NonAdaptive, Self::Oracle];

    pub fn uses_nn(self) -> bool {
        matches!(self, Self::Adaptive | Self::NonAdaptive)
    }

    pub fn adapts(self) -> bool {
        matches!(self, Self::Adaptive | Self::NoNn)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Adaptive => "adaptive",
            Self::NoNn => "no_nn",
            Self::NonAdaptive => "non_adaptive",
            Self::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s || p.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

/// What a distributed controller may see of agent `i`.
#[derive(Debug, Clone, Copy)]
pub struct LocalFeedback<'a> {
    pub e2: &'a [f64],
    pub u_nn: &'a [f64],
    pub k2: f64,
    pub d_hat: f64,
}

pub fn adaptive_control(fb: LocalFeedback<'_>, out: &mut [f64]) {
    debug_assert!(fb.d_hat > 0.0);
    let gain = fb.k2 + fb.d_hat;
    for ((o, &un), &e) in out.iter_mut().zip(fb.u_nn).zip(fb.e2) {
        *o = un - gain * e;
    }
}

pub fn adaptation_rhs(e2: &[f64], mu: f64) -> f64 {
    mu * e2.iter().map(|v| v * v).sum::<f64>()
}

/// Control of the two ablations. `no_nn` runs the adaptive law on a zero
/// network output, so it agrees bit for bit with [`adaptive_control`] fed zeros.
pub fn baseline_control(kind: PolicyKind, fb: LocalFeedback<'_>, out: &mut [f64]) -> Result<()> {
    match kind {
        PolicyKind::NoNn => {
            let zeros = vec![0.0; fb.e2.len()];
            adaptive_control(LocalFeedback { u_nn: &zeros, ..fb }, out);
        }
        PolicyKind::NonAdaptive => {
            for ((o, &un), &e) in out.iter_mut().zip(fb.u_nn).zip(fb.e2) {
                *o = un - fb.k2 * e;
            }
        }
        other => return Err(Error::Config(format!("{other} is not a baseline policy"))),
    }
    Ok(())
}

/// `u_i = g_i⁻¹ (u0 − e_i2 − f_i)`; needs the true dynamics.
pub fn oracle_control(model: &AgentModel, x_i: &[f64], t: f64, u0: &[f64], e2: &[f64], out: &mut [f64]) -> Result<()> {
    let g = model.gain(x_i, t)?;
    let mut f = vec![0.0; out.len()];
    model.drift_into(x_i, t, &mut f);
    for d in 0..out.len() {
        out[d] = (u0[d] - e2[d] - f[d]) / g;
    }
    Ok(())
}

/// Applies any non-oracle policy; returns `d̂̇`.
pub fn local_control(kind: PolicyKind, fb: LocalFeedback<'_>, mu: f64, out: &mut [f64]) -> Result<f64> {
    match kind {
        PolicyKind::Adaptive => adaptive_control(fb, out),
        PolicyKind::NoNn | PolicyKind::NonAdaptive => baseline_control(kind, fb, out)?,
        PolicyKind::Oracle => {
            return Err(Error::Config("the oracle needs white-box dynamics".into()));
        }
    }
    Ok(if kind.adapts() { adaptation_rhs(fb.e2, mu) } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AgentDynamicsParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fb<'a>(e2: &'a [f64], u_nn: &'a [f64], d_hat: f64) -> LocalFeedback<'a> {
        LocalFeedback { e2, u_nn, k2: 0.5, d_hat }
    }

    #[test]
    fn adaptive_examples() {
        let mut u = [0.0; 3];
        adaptive_control(fb(&[0.0; 3], &[0.3, -1.0, 2.0], 0.1), &mut u);
        assert_eq!(u, [0.3, -1.0, 2.0]);
        adaptive_control(fb(&[1.0, 0.0, 0.0], &[0.0; 3], 0.1), &mut u);
        assert_eq!(u, [-0.6, 0.0, 0.0]);
        let mut u2 = [0.0; 3];
        adaptive_control(fb(&[0.7, -0.2, 0.1], &[0.0; 3], 0.3), &mut u);
        adaptive_control(fb(&[1.4, -0.4, 0.2], &[0.0; 3], 0.3), &mut u2);
        for d in 0..3 {
            assert_eq!(u2[d], 2.0 * u[d]);
        }
    }

    #[test]
    fn adaptation_examples() {
        assert_eq!(adaptation_rhs(&[0.0; 3], 0.5), 0.0);
        let rate = adaptation_rhs(&[2.0, 0.0, 0.0], 0.5);
        assert_eq!(rate, 2.0);
        assert!((0.1 + 0.1 * rate - 0.3).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let e: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            assert!(adaptation_rhs(&e, rng.random_range(0.01..2.0)) >= 0.0);
        }
    }

    #[test]
    fn baselines() {
        let mut u = [9.0; 3];
        baseline_control(PolicyKind::NonAdaptive, fb(&[2.0, 0.0, 0.0], &[0.0; 3], 0.1), &mut u).unwrap();
        assert_eq!(u, [-1.0, 0.0, 0.0]);
        baseline_control(PolicyKind::NoNn, fb(&[0.0; 3], &[5.0; 3], 0.1), &mut u).unwrap();
        assert_eq!(u, [0.0; 3]);
        assert!(baseline_control(PolicyKind::Adaptive, fb(&[0.0; 3], &[0.0; 3], 0.1), &mut u).is_err());
    }

    #[test]
    fn no_nn_equals_adaptive_with_zero_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let e: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let noise: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let d_hat = rng.random_range(0.01..5.0);
            let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
            adaptive_control(fb(&e, &[0.0; 3], d_hat), &mut a);
            baseline_control(PolicyKind::NoNn, fb(&e, &noise, d_hat), &mut b).unwrap();
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
    }

    #[test]
    fn non_adaptive_freezes_adaptation() {
        let mut u = [0.0; 3];
        let rate = local_control(PolicyKind::NonAdaptive, fb(&[1.0; 3], &[0.0; 3], 0.1), 0.5, &mut u).unwrap();
        assert_eq!(rate, 0.0);
        let rate = local_control(PolicyKind::NoNn, fb(&[1.0; 3], &[0.0; 3], 0.1), 0.5, &mut u).unwrap();
        assert_eq!(rate, 1.5);
    }

    #[test]
    fn oracle_identity_and_trivial_case() {
        let mut u = [0.0; 3];
        let di = AgentModel::DoubleIntegrator { gain: 1.0 };
        oracle_control(&di, &[0.0; 6], 0.0, &[0.0; 3], &[1.0, 0.0, 0.0], &mut u).unwrap();
        assert_eq!(u, [-1.0, 0.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let model = AgentModel::Aerial(AgentDynamicsParams::random(&mut rng));
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..10.0)).collect();
            let u0: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let e2: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t = rng.random_range(0.0..100.0);
            oracle_control(&model, &x, t, &u0, &e2, &mut u).unwrap();
            let f = model.drift(&x, t);
            let g = model.gain(&x, t).unwrap();
            for d in 0..3 {
                let lhs = f[d] + g * u[d];
                let rhs = u0[d] - e2[d];
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + f[d].abs()), "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("bogus".parse::<PolicyKind>().is_err());
    }
}
