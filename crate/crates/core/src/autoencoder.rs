//! Single-hidden-layer autoencoder with hand-written backpropagation.
//!
//! `z = ReLU(X W_e + b_e)`, `X̂ = z W_d + b_d`. The loss is
//!
//! ```text
//! L = (1/(B·D)) Σ (X̂ − X)² + l1·Σ|W| + l2·Σ W²
//! ```
//!
//! with penalties on the two weight matrices only. Training uses mini-batch
//! Adam and inverted dropout on the hidden activations.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::serde_util::{array1_sig17, matrix_sig17, sig17};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l1: f64,
    pub l2: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Permit `latent_dim >= input dim`.
    pub allow_overcomplete: bool,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            latent_dim: 64,
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            l1: 1e-4,
            l2: 0.0,
            dropout: 0.01,
            seed: 0,
            allow_overcomplete: false,
        }
    }
}

/// Epoch counts explored in the original grid search.
pub const EPOCH_GRID: [usize; 5] = [50, 100, 200, 300, 500];

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.latent_dim == 0 {
            return bad("autoencoder latent_dim must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("autoencoder batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("autoencoder learning_rate must be positive");
        }
        if !(self.l1 >= 0.0 && self.l2 >= 0.0) {
            return bad("autoencoder l1/l2 must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("autoencoder dropout must be in [0, 1)");
        }
        Ok(())
    }
}

/// Adam moments for one flat parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay (AdamW); 0 gives plain Adam.
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = eps;
        self
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        if state.weight_decay != 0.0 {
            params[i] -= lr * state.weight_decay * params[i];
        }
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    #[serde(with = "sig17")]
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeModel {
    #[serde(with = "matrix_sig17")]
    pub w_enc: Array2<f64>,
    #[serde(with = "array1_sig17")]
    pub b_enc: Array1<f64>,
    #[serde(with = "matrix_sig17")]
    pub w_dec: Array2<f64>,
    #[serde(with = "array1_sig17")]
    pub b_dec: Array1<f64>,
    pub config: AeConfig,
    #[serde(with = "sig17")]
    pub initial_loss: f64,
    pub history: Vec<EpochLoss>,
}

/// Gradients of the total loss, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AeGradients {
    pub w_enc: Array2<f64>,
    pub b_enc: Array1<f64>,
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

fn l1_subgradient(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl AeModel {
    /// Builds a model from explicit weights; `config` supplies the penalties.
    pub fn from_weights(
        w_enc: Array2<f64>,
        b_enc: Array1<f64>,
        w_dec: Array2<f64>,
        b_dec: Array1<f64>,
        config: AeConfig,
    ) -> Result<Self> {
        let (d, h) = w_enc.dim();
        if b_enc.len() != h || w_dec.dim() != (h, d) || b_dec.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "inconsistent autoencoder shapes: W_e {:?}, b_e {}, W_d {:?}, b_d {}",
                w_enc.dim(),
                b_enc.len(),
                w_dec.dim(),
                b_dec.len()
            )));
        }
        Ok(AeModel {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
            config,
            initial_loss: f64::NAN,
            history: Vec::new(),
        })
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng>(input_dim: usize, config: AeConfig, rng: &mut R) -> Self {
        let h = config.latent_dim;
        let w_enc = glorot(input_dim, h, rng);
        let w_dec = glorot(h, input_dim, rng);
        AeModel {
            w_enc,
            b_enc: Array1::zeros(h),
            w_dec,
            b_dec: Array1::zeros(input_dim),
            config,
            initial_loss: f64::NAN,
            history: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_enc.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_enc.ncols()
    }

    fn check_input(&self, data: &Array2<f64>) -> Result<()> {
        if data.ncols() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                found: data.ncols(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, data: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(data)?;
        Ok((data.dot(&self.w_enc) + &self.b_enc).mapv(relu))
    }

    pub fn reconstruct(&self, data: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.encode(data)?.dot(&self.w_dec) + &self.b_dec)
    }

    /// Mean squared reconstruction error over all entries.
    pub fn reconstruction_mse(&self, data: &Array2<f64>) -> Result<f64> {
        let diff = self.reconstruct(data)? - data;
        Ok(diff.mapv(|x| x * x).sum() / diff.len() as f64)
    }

    /// l1·Σ|W| + l2·ΣW² over both weight matrices.
    pub fn penalty(&self) -> f64 {
        let ws = self.w_enc.iter().chain(self.w_dec.iter());
        let (abs, sq) = ws.fold((0.0, 0.0), |(a, s), &w| (a + w.abs(), s + w * w));
        self.config.l1 * abs + self.config.l2 * sq
    }

    pub fn loss(&self, data: &Array2<f64>) -> Result<f64> {
        Ok(self.reconstruction_mse(data)? + self.penalty())
    }

    /// Loss and gradients on a batch. `mask` holds per-activation dropout
    /// multipliers (already scaled by 1/(1-p)); `None` disables dropout.
    pub fn loss_and_gradients(
        &self,
        x: &Array2<f64>,
        mask: Option<&Array2<f64>>,
    ) -> Result<(f64, AeGradients)> {
        self.check_input(x)?;
        let pre = x.dot(&self.w_enc) + &self.b_enc;
        let mut act = pre.mapv(relu);
        if let Some(m) = mask {
            act *= m;
        }
        let out = act.dot(&self.w_dec) + &self.b_dec;
        let diff = &out - x;
        let scale = 1.0 / diff.len() as f64;
        let loss = diff.mapv(|v| v * v).sum() * scale + self.penalty();

        let g_out = diff * (2.0 * scale);
        let (l1, l2) = (self.config.l1, self.config.l2);
        let pen = |w: &f64| l1 * l1_subgradient(*w) + 2.0 * l2 * w;
        let w_dec = act.t().dot(&g_out) + self.w_dec.map(pen);
        let b_dec = g_out.sum_axis(Axis(0));
        let mut g_act = g_out.dot(&self.w_dec.t());
        if let Some(m) = mask {
            g_act *= m;
        }
        g_act.zip_mut_with(&pre, |g, &z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
        let w_enc = x.t().dot(&g_act) + self.w_enc.map(pen);
        let b_enc = g_act.sum_axis(Axis(0));
        Ok((
            loss,
            AeGradients {
                w_enc,
                b_enc,
                w_dec,
                b_dec,
            },
        ))
    }

    /// Per-epoch history as `epoch,train_loss,val_loss` CSV.
    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::from(e).at_path(path))?;
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for e in &self.history {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w_enc.as_slice_mut().expect("standard layout"),
            self.b_enc.as_slice_mut().expect("standard layout"),
            self.w_dec.as_slice_mut().expect("standard layout"),
            self.b_dec.as_slice_mut().expect("standard layout"),
        ]
    }
}

impl AeGradients {
    fn slices(&self) -> [&[f64]; 4] {
        [
            self.w_enc.as_slice().expect("standard layout"),
            self.b_enc.as_slice().expect("standard layout"),
            self.w_dec.as_slice().expect("standard layout"),
            self.b_dec.as_slice().expect("standard layout"),
        ]
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Row indices for training and validation: an id goes to validation when
/// its FNV-1a hash is divisible by 10. If either side would be empty, every
/// row trains and there is no validation set.
pub fn split_by_id(ids: &[String]) -> (Vec<usize>, Vec<usize>) {
    let (val, train): (Vec<usize>, Vec<usize>) =
        (0..ids.len()).partition(|&i| fnv1a(ids[i].as_bytes()).is_multiple_of(10));
    if train.is_empty() || val.is_empty() {
        ((0..ids.len()).collect(), Vec::new())
    } else {
        (train, val)
    }
}

pub fn train_autoencoder(data: &Array2<f64>, ids: &[String], config: &AeConfig) -> Result<AeModel> {
    config.validate()?;
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if ids.len() != data.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} ids for {} rows",
            ids.len(),
            data.nrows()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("autoencoder input".into()));
    }
    if config.latent_dim >= data.ncols() && !config.allow_overcomplete {
        return Err(Error::InvalidParameter(format!(
            "latent_dim {} does not compress input dim {}",
            config.latent_dim,
            data.ncols()
        )));
    }

    let (train_idx, val_idx) = split_by_id(ids);
    let train = data.select(Axis(0), &train_idx);
    let val = (!val_idx.is_empty()).then(|| data.select(Axis(0), &val_idx));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = AeModel::init(data.ncols(), config.clone(), &mut rng);
    model.initial_loss = model.loss(&train)?;
    let mut opt: Vec<AdamState> = [
        model.w_enc.len(),
        model.b_enc.len(),
        model.w_dec.len(),
        model.b_dec.len(),
    ]
    .into_iter()
    .map(AdamState::new)
    .collect();

    let keep = 1.0 - config.dropout;
    let mut order: Vec<usize> = (0..train.nrows()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = train.select(Axis(0), chunk);
            let mask = (config.dropout > 0.0).then(|| {
                Array2::from_shape_simple_fn((batch.nrows(), config.latent_dim), || {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            });
            let (_, grads) = model.loss_and_gradients(&batch, mask.as_ref())?;
            for ((p, g), st) in model.params_mut().into_iter().zip(grads.slices()).zip(&mut opt) {
                adam_step(p, g, st, config.learning_rate)?;
            }
        }
        let train_loss = model.loss(&train)?;
        if !train_loss.is_finite() || train_loss > 1e6 * model.initial_loss {
            return Err(Error::Divergence {
                epoch,
                loss: train_loss,
            });
        }
        let val_loss = val.as_ref().map(|v| model.loss(v)).transpose()?;
        log::debug!("ae epoch {epoch}: train {train_loss:.6e} val {val_loss:?}");
        model.history.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok(model)
}

/// Largest relative error between analytic and central-difference gradients
/// of the total loss on one sample, `|g_a − g_n| / max(|g_a|, |g_n|, 1e-8)`.
/// With `l1 > 0`, weights within 1e-6 of zero are skipped.
pub fn gradient_check(model: &AeModel, sample: ArrayView1<f64>) -> Result<f64> {
    const H: f64 = 1e-5;
    let x = sample.to_owned().insert_axis(Axis(0));
    let (_, grads) = model.loss_and_gradients(&x, None)?;
    let analytic = grads.slices();
    let skip_near_zero = model.config.l1 > 0.0;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for block in 0..4 {
        let is_weight = block == 0 || block == 2;
        for i in 0..analytic[block].len() {
            let orig = probe.params_mut()[block][i];
            if is_weight && skip_near_zero && orig.abs() < 1e-6 {
                continue;
            }
            probe.params_mut()[block][i] = orig + H;
            let plus = probe.loss(&x)?;
            probe.params_mut()[block][i] = orig - H;
            let minus = probe.loss(&x)?;
            probe.params_mut()[block][i] = orig;
            let numeric = (plus - minus) / (2.0 * H);
            let ga = analytic[block][i];
            let err = (ga - numeric).abs() / ga.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn adam_first_step_hand_trace() {
        let mut p = [0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut st, 0.1).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-8);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = [1.5, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 0.1).unwrap();
        assert_eq!(p, [1.5, -2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_equal_gradients_equal_updates() {
        let mut p = [0.3, 0.3];
        let mut st = AdamState::new(2);
        for _ in 0..3 {
            adam_step(&mut p, &[0.7, 0.7], &mut st, 0.01).unwrap();
        }
        assert_eq!(p[0], p[1]);
        assert!(adam_step(&mut p, &[1.0], &mut st, 0.1).is_err());
    }

    #[test]
    fn zero_model_encodes_to_zero() {
        let m = AeModel::from_weights(
            Array2::zeros((3, 2)),
            Array1::zeros(2),
            Array2::zeros((2, 3)),
            Array1::zeros(3),
            AeConfig::default(),
        )
        .unwrap();
        assert_eq!(m.encode(&array![[1.0, -2.0, 3.0]]).unwrap(), Array2::<f64>::zeros((1, 2)));
        assert!(m.encode(&array![[1.0]]).is_err());
    }

    #[test]
    fn negative_preactivations_are_clipped() {
        let m = AeModel::from_weights(
            array![[1.0, 1.0]],
            array![-5.0, -1.0],
            Array2::zeros((2, 1)),
            Array1::zeros(1),
            AeConfig::default(),
        )
        .unwrap();
        assert_eq!(m.encode(&array![[0.5]]).unwrap(), array![[0.0, 0.0]]);
    }

    #[test]
    fn identity_model_reconstructs_nonnegative_input() {
        let eye = Array2::eye(3);
        let m = AeModel::from_weights(eye.clone(), Array1::zeros(3), eye, Array1::zeros(3), AeConfig::default())
            .unwrap();
        let x = array![[0.0, 1.0, 2.5], [3.0, 0.25, 0.0]];
        assert_eq!(m.reconstruct(&x).unwrap(), x);
    }

    #[test]
    fn zero_everything_has_zero_gradient() {
        let cfg = AeConfig { l1: 0.0, ..Default::default() };
        let m = AeModel::from_weights(
            Array2::zeros((4, 2)),
            Array1::zeros(2),
            Array2::zeros((2, 4)),
            Array1::zeros(4),
            cfg,
        )
        .unwrap();
        assert_eq!(gradient_check(&m, Array1::zeros(4).view()).unwrap(), 0.0);
    }

    #[test]
    fn split_is_stable_and_nonempty() {
        let ids: Vec<String> = (0..200).map(|i| format!("doc{i}")).collect();
        let (train, val) = split_by_id(&ids);
        assert_eq!(train.len() + val.len(), 200);
        assert!(!val.is_empty());
        assert_eq!(split_by_id(&ids), (train, val));
        let (train, val) = split_by_id(&["only".to_string()]);
        assert_eq!((train, val), (vec![0], vec![]));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn rejects_expanding_latent() {
        let x = Array2::ones((4, 2));
        let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        let cfg = AeConfig { latent_dim: 2, ..Default::default() };
        assert!(train_autoencoder(&x, &ids, &cfg).is_err());
        let cfg = AeConfig { latent_dim: 2, allow_overcomplete: true, epochs: 1, ..Default::default() };
        assert!(train_autoencoder(&x, &ids, &cfg).is_ok());
    }
}
