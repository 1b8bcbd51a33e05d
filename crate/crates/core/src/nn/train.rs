use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::dataset::Dataset;
use super::mlp::Mlp;
use super::scalar::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Training stops early once an epoch's mean loss falls below this.
    pub target_loss: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 256,
            lr: 1e-3,
            target_loss: 5e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean minibatch loss per epoch.
    pub history: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub reached_target: bool,
}

/// Trains `net` in place on `data`. On return `net` holds the weights of the
/// epoch with the lowest mean loss.
///
/// A trailing minibatch with fewer than two rows is dropped, since batch
/// statistics are undefined for it.
pub fn train<T: Real>(net: &mut Mlp<T>, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.layout.input_dim() != net.input_dim() || data.layout.state_dim != net.output_dim() {
        return Err(Error::Dimension(format!(
            "dataset is {}→{}, network is {}→{}",
            data.layout.input_dim(),
            data.layout.state_dim,
            net.input_dim(),
            net.output_dim()
        )));
    }
    if data.len() < 2 {
        return Err(Error::Data(format!("{} samples; need at least 2", data.len())));
    }
    if cfg.batch_size < 2 || !(cfg.lr > 0.0) {
        return Err(Error::Config("batch size must be >= 2 and learning rate positive".into()));
    }
    let (d, n) = (net.input_dim(), net.output_dim());
    let inputs: Vec<T> = data.inputs().iter().map(|&v| T::from_f64(v)).collect();
    let targets: Vec<T> = data.targets().iter().map(|&v| T::from_f64(v)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut opt = AdamState::<T>::new(net.params().len(), cfg.lr);
    let mut batch_x = Vec::with_capacity(cfg.batch_size * d);
    let mut batch_y = Vec::with_capacity(cfg.batch_size * n);

    let mut best = net.clone();
    let mut outcome = TrainOutcome {
        history: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_loss: f64::INFINITY,
        reached_target: false,
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            batch_x.clear();
            batch_y.clear();
            for &k in chunk {
                batch_x.extend_from_slice(&inputs[k * d..(k + 1) * d]);
                batch_y.extend_from_slice(&targets[k * n..(k + 1) * n]);
            }
            let cache = net.forward_train(&batch_x, chunk.len())?;
            let (loss, grads) = net.backward(&cache, &batch_y)?;
            opt.step(net.params_mut(), &grads)?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        outcome.history.push(mean);
        log::debug!("epoch {epoch}: loss {mean:.3e}");
        if mean < outcome.best_loss {
            outcome.best_loss = mean;
            outcome.best_epoch = epoch;
            best.clone_from(net);
        }
        if mean < cfg.target_loss {
            outcome.reached_target = true;
            break;
        }
    }
    *net = best;
    Ok(outcome)
}

/// Mean `‖output − target‖²` of `net` in inference mode.
pub fn evaluate_loss<T: Real>(net: &Mlp<T>, data: &Dataset) -> Result<f64> {
    let inputs: Vec<T> = data.inputs().iter().map(|&v| T::from_f64(v)).collect();
    let out = net.infer(&inputs, data.len())?;
    let sq: f64 = out
        .iter()
        .zip(data.targets())
        .map(|(&o, &t)| (o.as_f64() - t).powi(2))
        .sum();
    Ok(sq / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dataset::InputLayout;

    fn toy_data() -> Dataset {
        // One follower, scalar state: target u = -(p + 2v).
        let layout = InputLayout::new(1, 1);
        let mut ds = Dataset::empty(0, layout);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..512 {
            let p: f64 = rng.random_range(-1.0..1.0);
            let v: f64 = rng.random_range(-1.0..1.0);
            ds.push(&[p, v, 1.0, 1.0], &[-(p + 2.0 * v)]).unwrap();
        }
        ds
    }

    #[test]
    fn learns_a_linear_map() {
        let data = toy_data();
        let mut net = Mlp::<f32>::new(&[4, 32, 32, 1], 1).unwrap();
        let before = evaluate_loss(&net, &data).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 64,
            target_loss: 1e-3,
            ..TrainConfig::default()
        };
        let out = train(&mut net, &data, &cfg).unwrap();
        let after = evaluate_loss(&net, &data).unwrap();
        assert!(out.best_loss < before / 10.0, "{before} -> {}", out.best_loss);
        assert!(after < before / 10.0, "{before} -> {after}");
        assert_eq!(out.history[out.best_epoch], out.best_loss);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let data = toy_data();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 50,
            ..TrainConfig::default()
        };
        let mut a = Mlp::<f32>::new(&[4, 8, 1], 5).unwrap();
        let mut b = a.clone();
        let oa = train(&mut a, &data, &cfg).unwrap();
        let ob = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(a, b);
    }

    #[test]
    fn single_sample_is_rejected() {
        let mut ds = Dataset::empty(0, InputLayout::new(1, 1));
        ds.push(&[0.0, 0.0, 1.0, 1.0], &[0.0]).unwrap();
        let mut net = Mlp::<f32>::new(&[4, 8, 1], 0).unwrap();
        assert!(matches!(train(&mut net, &ds, &TrainConfig::default()), Err(Error::Data(_))));
    }
}
