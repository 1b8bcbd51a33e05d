use formation_core::experiment::random_topology;
use formation_core::formation::{offsets_to_c, EdgeOffsets, GainSet};
use formation_core::leader::{Interpolation, LeaderProfile, WaypointPath};
use formation_core::topology::Topology;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Connected topologies of 2..=8 agents, 1..=3 dimensions, with a random
/// nonempty leader set.
fn arb_topology() -> impl Strategy<Value = Topology> {
    (2usize..=8, 1usize..=3).prop_flat_map(|(n, dim)| {
        let parents = proptest::collection::vec(any::<prop::sample::Index>(), n - 1);
        let extra = proptest::collection::vec(any::<bool>(), n * (n - 1) / 2);
        let leader = proptest::collection::vec(any::<bool>(), n);
        let forced = 0..n;
        (parents, extra, leader, forced).prop_map(move |(parents, extra, mut leader, forced)| {
            let mut edges: Vec<(usize, usize)> = parents
                .iter()
                .enumerate()
                .map(|(k, p)| (k + 1, p.index(k + 1)))
                .collect();
            let mut flag = extra.iter();
            for i in 0..n {
                for j in i + 1..n {
                    if *flag.next().unwrap() {
                        edges.push((i, j));
                    }
                }
            }
            leader[forced] = true;
            Topology::new(n, edges, leader, dim)
        })
    })
}

fn sym_max_abs(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn laplacian_invariants(t in arb_topology()) {
        prop_assert!(t.validate().unwrap());
        let d = t.derive().unwrap();
        for r in 0..t.n_agents() {
            prop_assert_eq!(d.laplacian.row(r).sum(), 0.0);
        }
        prop_assert_eq!(sym_max_abs(&d.laplacian), 0.0);
        prop_assert_eq!(sym_max_abs(&d.lb), 0.0);
        let eig = d.lb.clone().symmetric_eigenvalues();
        prop_assert!(eig.min() > 0.0);
        let n = t.n_agents() * t.state_dim();
        let id = &d.h * &d.h_inv;
        prop_assert!((id - DMatrix::<f64>::identity(n, n)).abs().max() < 1e-9);
        prop_assert!((d.sigma_min_h - eig.min()).abs() < 1e-9 * eig.max());
    }

    #[test]
    fn inverse_gain_bound(t in arb_topology(), seed in any::<u64>()) {
        // σ_min(H)·‖H⁻¹v‖ ≤ ‖v‖ for every v.
        let d = t.derive().unwrap();
        let n = t.n_agents() * t.state_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let v = DVector::<f64>::from_fn(n, |_, _| rand::Rng::random_range(&mut rng, -10.0..10.0));
            let lhs = d.sigma_min_h * (&d.h_inv * &v).norm();
            prop_assert!(lhs <= v.norm() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn disagreement_bound(t in arb_topology(), seed in any::<u64>()) {
        // δ1 = x1 − x̄0 + c and e1 = H δ1, so ‖δ1‖ ≤ ‖e1‖ / σ_min(H).
        let d = t.derive().unwrap();
        let (big_n, n) = (t.n_agents(), t.state_dim());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = || rand::Rng::random_range(&mut rng, -5.0..5.0);
        let targets: Vec<Vec<f64>> = (0..big_n).map(|_| (0..n).map(|_| r()).collect()).collect();
        let offsets = EdgeOffsets::from_leader_relative(&t, &targets).unwrap();
        let c = offsets_to_c(&t, &d, &offsets).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| r()).collect();
        let x1: Vec<f64> = (0..big_n * n).map(|_| r()).collect();
        let delta = DVector::from_fn(big_n * n, |k, _| x1[k] - x0[k % n] + c.agent(k / n, n)[k % n]);
        let e1 = &d.h * &delta;
        prop_assert!(d.sigma_min_h * delta.norm() <= e1.norm() * (1.0 + 1e-9));
    }

    #[test]
    fn leader_relative_offsets_recover_targets(t in arb_topology(), seed in any::<u64>()) {
        let d = t.derive().unwrap();
        let (big_n, n) = (t.n_agents(), t.state_dim());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let targets: Vec<Vec<f64>> = (0..big_n)
            .map(|_| (0..n).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect())
            .collect();
        let offsets = EdgeOffsets::from_leader_relative(&t, &targets).unwrap();
        for &(i, j) in t.edges() {
            let a = offsets.follower(i, j).unwrap();
            let b = offsets.follower(j, i).unwrap();
            prop_assert!(a.iter().zip(b).all(|(x, y)| *x == -*y));
        }
        let c = offsets_to_c(&t, &d, &offsets).unwrap();
        for (i, target) in targets.iter().enumerate() {
            for (got, want) in c.agent(i, n).iter().zip(target) {
                prop_assert!((got - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn antisymmetry_violation_is_rejected(c in proptest::collection::vec(-5.0f64..5.0, 3), bump in 0.01f64..1.0) {
        let mut o = EdgeOffsets::new(3);
        o.set_follower(0, 1, c.clone()).unwrap();
        let mut wrong: Vec<f64> = c.iter().map(|v| -v).collect();
        wrong[0] += bump;
        prop_assert!(o.set_follower(1, 0, wrong).is_err());
        let right: Vec<f64> = c.iter().map(|v| -v).collect();
        prop_assert!(o.set_follower(1, 0, right).is_ok());
    }

    #[test]
    fn leader_profiles_are_consistent(seed in any::<u64>(), rest in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rand::Rng::random_range(&mut rng, -10.0..10.0)).collect())
            .collect();
        let interp = if rest { Interpolation::RestToRest } else { Interpolation::Spline };
        let mut leader = LeaderProfile::WaypointPath(WaypointPath::evenly_timed(points, 40.0, interp).unwrap());
        leader.prepare().unwrap();
        // Centered differences with h = 1e-3 carry an O(h²) error.
        let t = rand::Rng::random_range(&mut rng, 1.0..39.0);
        let h = 1e-3;
        let s = leader.leader_state(t);
        let (a, b) = (leader.leader_state(t + h), leader.leader_state(t - h));
        for k in 0..3 {
            let v = (a.position[k] - b.position[k]) / (2.0 * h);
            let acc = (a.velocity[k] - b.velocity[k]) / (2.0 * h);
            prop_assert!((v - s.velocity[k]).abs() < 1e-4 * (1.0 + s.velocity[k].abs()));
            prop_assert!((acc - s.command[k]).abs() < 1e-2 * (1.0 + s.command[k].abs()));
        }
    }
}

#[test]
fn random_experiment_topologies_are_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let t = random_topology(&mut rng, 5, 0.4).unwrap();
        assert!(t.validate().unwrap());
        assert!(t.leader_access().iter().any(|&b| b));
        let d = t.derive().unwrap();
        assert!(d.lb.clone().symmetric_eigenvalues().min() > 0.0);
    }
}

#[test]
fn gains_must_be_positive() {
    assert!(GainSet::uniform(3, 0.1, 0.5, 0.5).is_ok());
    assert!(GainSet::uniform(3, 0.0, 0.5, 0.5).is_err());
    assert!(GainSet::uniform(3, 0.1, -0.5, 0.5).is_err());
    assert!(GainSet::uniform(3, 0.1, 0.5, f64::NAN).is_err());
}
