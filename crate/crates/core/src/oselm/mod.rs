//! One-class online-sequential extreme learning machine.
//!
//! A fixed random sigmoid layer maps each feature vector to `Lh` hidden
//! activations; only the output weights `beta` are learned, against the
//! constant target 1 ("healthy"). The first [`INIT_BATCH`] samples seed the
//! regularized least-squares solution
//!
//! ```text
//! M0 = I/C + H0' H0,   beta0 = M0^-1 H0' Y0
//! ```
//!
//! and every later sample is folded in by recursive least squares
//!
//! ```text
//! M_n = M_{n-1} + h h',   beta_n = beta_{n-1} + M_n^-1 h (y - h' beta_{n-1})
//! ```
//!
//! so that `beta_n` always equals the one-shot ridge solution over every row
//! seen so far. `M` is the information matrix; its inverse is either kept up
//! to date by Sherman-Morrison rank-one downdates or applied through a fresh
//! Cholesky solve, see [`UpdateRule`].

mod monitor;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub use monitor::{observe, ConvergenceMonitor, CONVERGENCE_TC_PERCENT, CONVERGENCE_WINDOW};

/// Samples in the batch that initializes `beta`.
pub const INIT_BATCH: usize = 10;
pub const DEFAULT_HIDDEN: usize = 10;
pub const DEFAULT_C: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    CollectingInitBatch,
    OnlineTraining,
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// Maintain `M^-1` with rank-one Sherman-Morrison updates, O(Lh^2) per sample.
    #[default]
    ShermanMorrison,
    /// Factor `M` and solve each step, O(Lh^3) per sample.
    Cholesky,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OselmModel {
    w_star: DMatrix<f64>,
    b_star: DVector<f64>,
    beta: Option<DVector<f64>>,
    info: Option<DMatrix<f64>>,
    info_inv: Option<DMatrix<f64>>,
    c: f64,
    seed: u64,
    phase: Phase,
    update_rule: UpdateRule,
    samples_seen: usize,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)
}

impl OselmModel {
    /// Random input weights uniform in `[-1, 1]`, biases uniform in `[0, 1]`.
    pub fn init_random(n_in: usize, hidden: usize, c: f64, seed: u64) -> Result<Self> {
        if n_in == 0 || hidden == 0 {
            return Err(Error::Config(format!(
                "OS-ELM dims must be positive: n_in={n_in}, hidden={hidden}"
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {c}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..hidden * n_in)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let b: Vec<f64> = (0..hidden).map(|_| rng.random_range(0.0..=1.0)).collect();
        Ok(Self {
            w_star: DMatrix::from_row_slice(hidden, n_in, &w),
            b_star: DVector::from_vec(b),
            beta: None,
            info: None,
            info_inv: None,
            c,
            seed,
            phase: Phase::CollectingInitBatch,
            update_rule: UpdateRule::default(),
            samples_seen: 0,
        })
    }

    pub fn with_update_rule(mut self, rule: UpdateRule) -> Self {
        self.update_rule = rule;
        self
    }

    pub fn n_in(&self) -> usize {
        self.w_star.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_star.nrows()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn update_rule(&self) -> UpdateRule {
        self.update_rule
    }

    /// Samples absorbed into `beta` so far (init batch included).
    pub fn samples_seen(&self) -> usize {
        self.samples_seen
    }

    pub fn input_weights(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.w_star, &self.b_star)
    }

    pub fn beta(&self) -> Option<&DVector<f64>> {
        self.beta.as_ref()
    }

    pub fn info_matrix(&self) -> Option<&DMatrix<f64>> {
        self.info.as_ref()
    }

    /// Test hook: overwrite `beta` directly.
    pub fn set_beta(&mut self, beta: Vec<f64>) -> Result<()> {
        if beta.len() != self.hidden_dim() {
            return Err(Error::Shape {
                expected: self.hidden_dim(),
                got: beta.len(),
            });
        }
        self.beta = Some(DVector::from_vec(beta));
        Ok(())
    }

    /// Test hook: overwrite the random layer.
    pub fn set_input_weights(&mut self, w: DMatrix<f64>, b: DVector<f64>) -> Result<()> {
        if w.shape() != self.w_star.shape() || b.len() != self.b_star.len() {
            return Err(Error::Shape {
                expected: self.w_star.len(),
                got: w.len(),
            });
        }
        self.w_star = w;
        self.b_star = b;
        Ok(())
    }

    /// Sigmoid hidden-layer row for one input.
    pub fn hidden(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.n_in() {
            return Err(Error::Shape {
                expected: self.n_in(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("OS-ELM input"));
        }
        let z = &self.w_star * DVector::from_column_slice(x) + &self.b_star;
        Ok(z.map(sigmoid))
    }

    fn hidden_matrix<X: AsRef<[f64]>>(&self, samples: &[X]) -> Result<DMatrix<f64>> {
        let mut h = DMatrix::zeros(samples.len(), self.hidden_dim());
        for (i, x) in samples.iter().enumerate() {
            h.set_row(i, &self.hidden(x.as_ref())?.transpose());
        }
        Ok(h)
    }

    /// Batch initialization from the first [`INIT_BATCH`] samples, all with target 1.
    pub fn init_batch<X: AsRef<[f64]>>(&mut self, samples: &[X]) -> Result<()> {
        self.init_batch_with_targets(samples, &vec![1.0; samples.len()])
    }

    pub fn init_batch_with_targets<X: AsRef<[f64]>>(
        &mut self,
        samples: &[X],
        targets: &[f64],
    ) -> Result<()> {
        if self.phase != Phase::CollectingInitBatch {
            return Err(Error::Phase {
                op: "init_batch",
                phase: self.phase,
            });
        }
        if samples.len() != INIT_BATCH || targets.len() != INIT_BATCH {
            return Err(Error::InitBatchSize {
                expected: INIT_BATCH,
                got: samples.len().min(targets.len()),
            });
        }
        let h0 = self.hidden_matrix(samples)?;
        let lh = self.hidden_dim();
        let info = DMatrix::identity(lh, lh) / self.c + h0.tr_mul(&h0);
        let chol = cholesky(&info)?;
        let rhs = h0.tr_mul(&DVector::from_column_slice(targets));
        let beta = chol.solve(&rhs);
        self.info_inv = Some(chol.inverse());
        self.info = Some(info);
        self.beta = Some(beta);
        self.phase = Phase::OnlineTraining;
        self.samples_seen = INIT_BATCH;
        Ok(())
    }

    /// One recursive least-squares step with target 1. Returns
    /// `%dbeta = 100 |beta_n - beta_{n-1}| / |beta_{n-1}|`, which is infinite
    /// when the previous weights are all zero.
    pub fn sequential_update(&mut self, x: &[f64]) -> Result<f64> {
        self.sequential_update_with_target(x, 1.0)
    }

    pub fn sequential_update_with_target(&mut self, x: &[f64], target: f64) -> Result<f64> {
        if self.phase != Phase::OnlineTraining {
            return Err(Error::Phase {
                op: "sequential_update",
                phase: self.phase,
            });
        }
        let h = self.hidden(x)?;
        let beta = self.beta.as_ref().ok_or(Error::Uninitialized)?;
        let innovation = target - h.dot(beta);

        let info = self.info.as_mut().ok_or(Error::Uninitialized)?;
        info.ger(1.0, &h, &h, 1.0);

        let gain = match self.update_rule {
            UpdateRule::ShermanMorrison => {
                let p = self.info_inv.as_mut().ok_or(Error::Uninitialized)?;
                let ph = &*p * &h;
                let denom = 1.0 + h.dot(&ph);
                if !(denom > 0.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                p.ger(-1.0 / denom, &ph, &ph, 1.0);
                // M_n^-1 h = P_{n-1} h / (1 + h' P_{n-1} h)
                ph / denom
            }
            UpdateRule::Cholesky => {
                let chol = cholesky(info)?;
                let gain = chol.solve(&h);
                self.info_inv = Some(chol.inverse());
                gain
            }
        };

        let delta = gain * innovation;
        let prev_norm = beta.norm();
        let pct = if prev_norm == 0.0 {
            f64::INFINITY
        } else {
            100.0 * delta.norm() / prev_norm
        };
        let beta = self.beta.as_mut().ok_or(Error::Uninitialized)?;
        *beta += delta;
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("OS-ELM output weights"));
        }
        self.samples_seen += 1;
        Ok(pct)
    }

    /// Output `y = h(x) . beta` and its deviation `|1 - y|` from the healthy target.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let beta = self.beta.as_ref().ok_or(Error::Uninitialized)?;
        let y = self.hidden(x)?.dot(beta);
        Ok((y, (1.0 - y).abs()))
    }

    /// Freezes the model; no further updates are accepted.
    pub fn enter_inference(&mut self) -> Result<()> {
        if self.phase != Phase::OnlineTraining {
            return Err(Error::Phase {
                op: "enter_inference",
                phase: self.phase,
            });
        }
        self.phase = Phase::Inference;
        Ok(())
    }

    /// Symmetry residual `max |M - M'|` and a Cholesky factorization check.
    pub fn check_information_matrix(&self) -> Result<f64> {
        let m = self.info.as_ref().ok_or(Error::Uninitialized)?;
        cholesky(m)?;
        Ok((m - m.transpose()).amax())
    }

    /// Binary state, little-endian: magic `BMOSELM\0`, version u32, then
    /// `n_in` u32, `Lh` u32, `C` f64, seed u64, update rule u8, phase u8,
    /// samples seen u64, `W*` row-major, `b*`, a u8 flag, and when the flag is 1
    /// `beta`, `M` and `M^-1` (both row-major).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(OSELM_MAGIC, OSELM_VERSION);
        self.write_into(&mut w);
        w.finish()
    }

    pub(crate) fn write_into(&self, w: &mut Writer) {
        let (lh, n_in) = (self.hidden_dim(), self.n_in());
        w.u32(n_in as u32);
        w.u32(lh as u32);
        w.f64(self.c);
        w.u64(self.seed);
        w.u8(match self.update_rule {
            UpdateRule::ShermanMorrison => 0,
            UpdateRule::Cholesky => 1,
        });
        w.u8(match self.phase {
            Phase::CollectingInitBatch => 0,
            Phase::OnlineTraining => 1,
            Phase::Inference => 2,
        });
        w.u64(self.samples_seen as u64);
        for r in 0..lh {
            w.f64s(self.w_star.row(r).iter());
        }
        w.f64s(self.b_star.iter());
        match (&self.beta, &self.info, &self.info_inv) {
            (Some(beta), Some(m), Some(p)) => {
                w.u8(1);
                w.f64s(beta.iter());
                for r in 0..lh {
                    w.f64s(m.row(r).iter());
                }
                for r in 0..lh {
                    w.f64s(p.row(r).iter());
                }
            }
            _ => w.u8(0),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, OSELM_MAGIC, OSELM_VERSION)?;
        let model = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(model)
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        let n_in = r.dim("n_in")?;
        let lh = r.dim("hidden dim")?;
        let c = r.f64()?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(bad("C must be positive"));
        }
        let seed = r.u64()?;
        let update_rule = match r.u8()? {
            0 => UpdateRule::ShermanMorrison,
            1 => UpdateRule::Cholesky,
            _ => return Err(bad("unknown update rule")),
        };
        let phase = match r.u8()? {
            0 => Phase::CollectingInitBatch,
            1 => Phase::OnlineTraining,
            2 => Phase::Inference,
            _ => return Err(bad("unknown phase")),
        };
        let samples_seen = r.u64()? as usize;
        let w_star = DMatrix::from_row_slice(lh, n_in, &r.f64s(lh * n_in)?);
        let b_star = DVector::from_vec(r.f64s(lh)?);
        let (beta, info, info_inv) = match r.u8()? {
            0 => (None, None, None),
            1 => (
                Some(DVector::from_vec(r.f64s(lh)?)),
                Some(DMatrix::from_row_slice(lh, lh, &r.f64s(lh * lh)?)),
                Some(DMatrix::from_row_slice(lh, lh, &r.f64s(lh * lh)?)),
            ),
            _ => return Err(bad("bad beta flag")),
        };
        if (phase == Phase::CollectingInitBatch) != beta.is_none() {
            return Err(bad("phase inconsistent with stored weights"));
        }
        Ok(Self {
            w_star,
            b_star,
            beta,
            info,
            info_inv,
            c,
            seed,
            phase,
            update_rule,
            samples_seen,
        })
    }
}

const OSELM_MAGIC: &[u8; 8] = b"BMOSELM\0";
const OSELM_VERSION: u32 = 1;
