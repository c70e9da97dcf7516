use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backprop_grads, init_params, AdamState, AeParams, DecoderActivation, CODE_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Passes over the training set; the deployed pipeline uses exactly one.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub code_dim: usize,
    pub decoder_activation: DecoderActivation,
    pub shuffle_seed: u64,
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 32,
            learning_rate: 0.001,
            code_dim: CODE_DIM,
            decoder_activation: DecoderActivation::Relu,
            shuffle_seed: 0,
            init_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs != 1 {
            return Err(Error::Config(format!(
                "autoencoder trains for exactly one epoch, got {}",
                self.epochs
            )));
        }
        if self.batch_size == 0 || self.code_dim == 0 {
            return Err(Error::Config("batch_size and code_dim must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AeParams,
    pub batch_losses: Vec<f64>,
}

/// One epoch of mini-batch Adam over `data`, visiting samples in a seeded
/// shuffled order. Every sample lands in exactly one batch.
pub fn train<X: AsRef<[f64]> + Sync>(data: &[X], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let first = data.first().ok_or(Error::Empty)?;
    let d = first.as_ref().len();
    if let Some(bad) = data.iter().find(|x| x.as_ref().len() != d) {
        return Err(Error::Shape {
            expected: d,
            got: bad.as_ref().len(),
        });
    }

    let mut params = init_params(d, config.code_dim, d, config.init_seed)?;
    params.decoder_activation = config.decoder_activation;
    let mut adam = AdamState::new(&params, config.learning_rate);

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.shuffle_seed));

    let mut batch_losses = Vec::with_capacity(order.len().div_ceil(config.batch_size));
    for (i, idx) in order.chunks(config.batch_size).enumerate() {
        let batch: Vec<&[f64]> = idx.iter().map(|&k| data[k].as_ref()).collect();
        let (grads, batch_loss) = backprop_grads(&params, &batch)?;
        adam.step(&mut params, &grads)?;
        debug!("autoencoder batch {i}: loss {batch_loss:.6e}");
        batch_losses.push(batch_loss);
    }
    if !params.is_finite() {
        return Err(Error::NonFiniteValue("autoencoder parameters"));
    }
    Ok(TrainOutcome {
        params,
        batch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::loss;
    use rand::Rng;

    fn mean_loss(p: &AeParams, data: &[Vec<f64>]) -> f64 {
        data.iter()
            .map(|x| loss(x, &p.reconstruct(x).unwrap()).unwrap())
            .sum::<f64>()
            / data.len() as f64
    }

    #[test]
    fn descends_on_constant_data() {
        let data = vec![vec![0.8; 16]; 400];
        let cfg = TrainConfig {
            batch_size: 4,
            code_dim: 2,
            ..TrainConfig::default()
        };
        let out = train(&data, &cfg).unwrap();
        let initial = mean_loss(&init_params(16, 2, 16, cfg.init_seed).unwrap(), &data);
        assert!(mean_loss(&out.params, &data) < initial);
        assert_eq!(out.batch_losses.len(), 100);
    }

    #[test]
    fn deterministic_for_fixed_seeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..10).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let cfg = TrainConfig {
            batch_size: 8,
            code_dim: 3,
            shuffle_seed: 4,
            init_seed: 5,
            ..TrainConfig::default()
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.batch_losses, b.batch_losses);
        // 50 samples in batches of 8: six full batches and one of two.
        assert_eq!(a.batch_losses.len(), 7);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = TrainConfig::default();
        assert!(matches!(train::<Vec<f64>>(&[], &cfg), Err(Error::Empty)));
        let ragged = vec![vec![0.0; 3], vec![0.0; 4]];
        assert!(train(&ragged, &cfg).is_err());
        let two = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        assert!(train(&[vec![0.0; 3]], &two).is_err());
    }
}
