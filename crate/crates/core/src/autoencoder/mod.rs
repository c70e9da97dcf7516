//! Single-hidden-layer autoencoder `d -> L -> d` with ReLU on both layers,
//! trained offline with Adam; only the encoder half is deployed.

mod adam;
mod encoder;
mod train;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::AdamState;
pub use encoder::{load_encoder, save_encoder, Encoder, EncoderProvenance};
pub use train::{train, TrainConfig, TrainOutcome};

/// Input dimension after 5-sample averaging of a 20480-sample snapshot.
pub const INPUT_DIM: usize = 4096;
/// Width of the code layer.
pub const CODE_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DecoderActivation {
    #[default]
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeParams {
    /// Encoder weights, `L x d`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Decoder weights, `m x L`.
    pub w0: DMatrix<f64>,
    pub b0: DVector<f64>,
    pub decoder_activation: DecoderActivation,
}

/// Gradient (or Adam moment) buffers, shaped like [`AeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AeGrads {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub w0: DMatrix<f64>,
    pub b0: DVector<f64>,
}

impl AeGrads {
    pub fn zeros_like(p: &AeParams) -> Self {
        Self {
            w: DMatrix::zeros(p.w.nrows(), p.w.ncols()),
            b: DVector::zeros(p.b.len()),
            w0: DMatrix::zeros(p.w0.nrows(), p.w0.ncols()),
            b0: DVector::zeros(p.b0.len()),
        }
    }

    pub(crate) fn groups(&self) -> [&[f64]; 4] {
        [
            self.w.as_slice(),
            self.b.as_slice(),
            self.w0.as_slice(),
            self.b0.as_slice(),
        ]
    }

    pub(crate) fn groups_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w.as_mut_slice(),
            self.b.as_mut_slice(),
            self.w0.as_mut_slice(),
            self.b0.as_mut_slice(),
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn glorot(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
) -> DMatrix<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    // Fill row-major so the draw order does not depend on nalgebra's storage.
    let vals: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    DMatrix::from_row_slice(rows, cols, &vals)
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(d: usize, l: usize, m: usize, seed: u64) -> Result<AeParams> {
    if d == 0 || l == 0 || m == 0 {
        return Err(Error::Config(format!(
            "autoencoder dims must be positive: {d}x{l}x{m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = glorot(&mut rng, l, d, d, l);
    let w0 = glorot(&mut rng, m, l, l, m);
    Ok(AeParams {
        w,
        b: DVector::zeros(l),
        w0,
        b0: DVector::zeros(m),
        decoder_activation: DecoderActivation::Relu,
    })
}

impl AeParams {
    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn code_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w0.nrows()
    }

    fn check_len(expected: usize, got: usize) -> Result<()> {
        if expected != got {
            return Err(Error::Shape { expected, got });
        }
        Ok(())
    }

    fn encoder_preact(&self, x: &[f64]) -> Result<DVector<f64>> {
        Self::check_len(self.input_dim(), x.len())?;
        Ok(&self.w * DVector::from_column_slice(x) + &self.b)
    }

    fn decoder_preact(&self, h: &DVector<f64>) -> DVector<f64> {
        &self.w0 * h + &self.b0
    }

    fn out_act(&self, z: f64) -> f64 {
        match self.decoder_activation {
            DecoderActivation::Relu => relu(z),
            DecoderActivation::Linear => z,
        }
    }

    /// `h = ReLU(W x + b)`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encoder_preact(x)?.iter().map(|&z| relu(z)).collect())
    }

    /// `x_hat = act(W0 h + b0)`.
    pub fn decode(&self, h: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(self.code_dim(), h.len())?;
        let z = self.decoder_preact(&DVector::from_column_slice(h));
        Ok(z.iter().map(|&v| self.out_act(v)).collect())
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(x)?)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.w.as_slice(),
            self.b.as_slice(),
            self.w0.as_slice(),
            self.b0.as_slice(),
        ]
        .iter()
        .all(|g| g.iter().all(|v| v.is_finite()))
    }

    /// The deployable encoder half.
    pub fn encoder(&self, provenance: EncoderProvenance) -> Encoder {
        Encoder::new(self.w.clone(), self.b.clone(), provenance)
    }

    pub(crate) fn groups_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w.as_mut_slice(),
            self.b.as_mut_slice(),
            self.w0.as_mut_slice(),
            self.b0.as_mut_slice(),
        ]
    }
}

/// Mean squared error `(1/d) sum (x_hat - x)^2`.
pub fn loss(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Shape {
            expected: x.len(),
            got: x_hat.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty);
    }
    Ok(x.iter()
        .zip(x_hat)
        .map(|(a, b)| (b - a).powi(2))
        .sum::<f64>()
        / x.len() as f64)
}

/// Exact gradients of the batch-mean reconstruction MSE. ReLU derivative at
/// exactly zero is taken as 0. Returns the gradients and the batch loss.
pub fn backprop_grads<X: AsRef<[f64]>>(params: &AeParams, batch: &[X]) -> Result<(AeGrads, f64)> {
    if batch.is_empty() {
        return Err(Error::Empty);
    }
    if params.output_dim() != params.input_dim() {
        return Err(Error::Shape {
            expected: params.input_dim(),
            got: params.output_dim(),
        });
    }
    let mut grads = AeGrads::zeros_like(params);
    let m = params.output_dim();
    let scale = 2.0 / (m as f64 * batch.len() as f64);
    let mut total_loss = 0.0;

    for x in batch {
        let x = x.as_ref();
        let z1 = params.encoder_preact(x)?;
        let h = z1.map(relu);
        let z2 = params.decoder_preact(&h);
        if z2.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("autoencoder activation"));
        }

        let mut dz2 = DVector::zeros(m);
        let mut sq = 0.0;
        for i in 0..m {
            let out = params.out_act(z2[i]);
            let r = out - x[i];
            sq += r * r;
            let active = match params.decoder_activation {
                DecoderActivation::Relu => z2[i] > 0.0,
                DecoderActivation::Linear => true,
            };
            dz2[i] = if active { scale * r } else { 0.0 };
        }
        total_loss += sq / m as f64;

        grads.w0.ger(1.0, &dz2, &h, 1.0);
        grads.b0 += &dz2;

        let mut dz1 = params.w0.tr_mul(&dz2);
        for (d, z) in dz1.iter_mut().zip(z1.iter()) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        let xv = DVector::from_column_slice(x);
        grads.w.ger(1.0, &dz1, &xv, 1.0);
        grads.b += &dz1;
    }
    Ok((grads, total_loss / batch.len() as f64))
}
