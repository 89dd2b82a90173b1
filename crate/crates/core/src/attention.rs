//! Reference multi-head self-attention encoder block (forward only).
//!
//! One block computes `X' = X + MultiHead(X)` then `H = X' + FFN(X')`, where
//! the feed-forward layer is `ReLU(X' W1 + b1) W2 + b2`. There is no layer
//! normalization.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-head projections plus output projection and feed-forward weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub d_model: usize,
    pub n_heads: usize,
    /// `n_heads` matrices of shape d_model × d_head.
    pub w_q: Vec<Array2<f64>>,
    pub w_k: Vec<Array2<f64>>,
    pub w_v: Vec<Array2<f64>>,
    /// (n_heads · d_head) × d_model.
    pub w_m: Array2<f64>,
    pub ffn_w1: Array2<f64>,
    pub ffn_b1: Array1<f64>,
    pub ffn_w2: Array2<f64>,
    pub ffn_b2: Array1<f64>,
}

impl AttentionParams {
    /// All-zero parameters; a block built from these is the identity map.
    pub fn zeros(d_model: usize, n_heads: usize, d_ff: usize) -> Result<Self> {
        let d_head = head_dim(d_model, n_heads)?;
        let proj = || vec![Array2::zeros((d_model, d_head)); n_heads];
        Ok(AttentionParams {
            d_model,
            n_heads,
            w_q: proj(),
            w_k: proj(),
            w_v: proj(),
            w_m: Array2::zeros((n_heads * d_head, d_model)),
            ffn_w1: Array2::zeros((d_model, d_ff)),
            ffn_b1: Array1::zeros(d_ff),
            ffn_w2: Array2::zeros((d_ff, d_model)),
            ffn_b2: Array1::zeros(d_model),
        })
    }

    /// Gaussian weights with variance 1/fan_in.
    pub fn random<R: Rng + ?Sized>(
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(d_model, n_heads, d_ff)?;
        let mut fill = |m: &mut Array2<f64>| {
            let normal = Normal::new(0.0, 1.0 / (m.nrows() as f64).sqrt()).expect("valid std");
            m.mapv_inplace(|_| normal.sample(rng));
        };
        for w in p.w_q.iter_mut().chain(&mut p.w_k).chain(&mut p.w_v) {
            fill(w);
        }
        fill(&mut p.w_m);
        fill(&mut p.ffn_w1);
        fill(&mut p.ffn_w2);
        Ok(p)
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let d_head = head_dim(self.d_model, self.n_heads)?;
        for group in [&self.w_q, &self.w_k, &self.w_v] {
            if group.len() != self.n_heads {
                return Err(Error::ShapeMismatch(format!(
                    "expected {} head projections, found {}",
                    self.n_heads,
                    group.len()
                )));
            }
            for w in group {
                expect_shape("head projection", w.view(), (self.d_model, d_head))?;
            }
        }
        expect_shape("W^M", self.w_m.view(), (self.n_heads * d_head, self.d_model))?;
        let d_ff = self.ffn_w1.ncols();
        expect_shape("FFN W1", self.ffn_w1.view(), (self.d_model, d_ff))?;
        expect_shape("FFN W2", self.ffn_w2.view(), (d_ff, self.d_model))?;
        if self.ffn_b1.len() != d_ff || self.ffn_b2.len() != self.d_model {
            return Err(Error::ShapeMismatch("FFN bias length".into()));
        }
        let all = self
            .w_q
            .iter()
            .chain(&self.w_k)
            .chain(&self.w_v)
            .chain([&self.w_m, &self.ffn_w1, &self.ffn_w2])
            .flat_map(|m| m.iter())
            .chain(self.ffn_b1.iter())
            .chain(self.ffn_b2.iter());
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("attention parameters".into()));
        }
        Ok(())
    }
}

fn head_dim(d_model: usize, n_heads: usize) -> Result<usize> {
    if n_heads == 0 || d_model == 0 || !d_model.is_multiple_of(n_heads) {
        return Err(Error::InvalidParameter(format!(
            "d_model {d_model} must be a positive multiple of n_heads {n_heads}"
        )));
    }
    Ok(d_model / n_heads)
}

fn expect_shape(what: &str, m: ArrayView2<f64>, shape: (usize, usize)) -> Result<()> {
    if m.dim() != shape {
        return Err(Error::ShapeMismatch(format!(
            "{what}: expected {shape:?}, found {:?}",
            m.dim()
        )));
    }
    Ok(())
}

/// Token embeddings for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Array2<f64>,
    pub positions: bool,
}

impl TokenSequence {
    pub fn new(tokens: Array2<f64>, positions: bool) -> Result<Self> {
        if tokens.nrows() == 0 {
            return Err(Error::InvalidParameter("empty token sequence".into()));
        }
        if tokens.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("token embeddings".into()));
        }
        Ok(TokenSequence { tokens, positions })
    }
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// softmax(QKᵀ/√d_k) as a T×T matrix.
pub fn attention_weights(q: &Array2<f64>, k: &Array2<f64>) -> Result<Array2<f64>> {
    if q.ncols() != k.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "Q has {} columns, K has {}",
            q.ncols(),
            k.ncols()
        )));
    }
    let scale = (q.ncols() as f64).sqrt();
    let logits = q.dot(&k.t()) / scale;
    Ok(softmax_rows(&logits))
}

pub fn scaled_dot_attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
) -> Result<Array2<f64>> {
    if k.nrows() != v.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "K has {} rows, V has {}",
            k.nrows(),
            v.nrows()
        )));
    }
    Ok(attention_weights(q, k)?.dot(v))
}

pub fn multi_head(x: &Array2<f64>, params: &AttentionParams) -> Result<Array2<f64>> {
    params.validate()?;
    if x.ncols() != params.d_model {
        return Err(Error::ShapeMismatch(format!(
            "input has {} columns, d_model is {}",
            x.ncols(),
            params.d_model
        )));
    }
    let heads = (0..params.n_heads)
        .map(|h| {
            scaled_dot_attention(
                &x.dot(&params.w_q[h]),
                &x.dot(&params.w_k[h]),
                &x.dot(&params.w_v[h]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = heads.iter().map(|h| h.view()).collect();
    let concat = concatenate(Axis(1), &views).expect("equal row counts");
    Ok(concat.dot(&params.w_m))
}

/// Sinusoidal position table: sin on even columns, cos on odd ones.
pub fn sinusoidal_positions(t: usize, d_model: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, d_model), |(pos, j)| {
        let i = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / d_model as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

pub fn feed_forward(x: &Array2<f64>, params: &AttentionParams) -> Array2<f64> {
    let inner = (x.dot(&params.ffn_w1) + &params.ffn_b1).mapv(|v| v.max(0.0));
    inner.dot(&params.ffn_w2) + &params.ffn_b2
}

/// One residual encoder block.
pub fn encode(seq: &TokenSequence, params: &AttentionParams) -> Result<Array2<f64>> {
    let mut x = seq.tokens.clone();
    if seq.positions {
        x += &sinusoidal_positions(x.nrows(), x.ncols());
    }
    let x1 = &x + &multi_head(&x, params)?;
    Ok(&x1 + &feed_forward(&x1, params))
}

/// Splits W^M into its per-head row blocks.
pub fn output_blocks(params: &AttentionParams) -> Vec<Array2<f64>> {
    let d_head = params.d_head();
    (0..params.n_heads)
        .map(|h| params.w_m.slice(s![h * d_head..(h + 1) * d_head, ..]).to_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a} vs {b}");
        }
    }

    #[test]
    fn single_token_returns_value_row() {
        let q = array![[0.3, -1.2]];
        let k = array![[2.0, 0.5]];
        let v = array![[4.0, 5.0, 6.0]];
        assert_eq!(scaled_dot_attention(&q, &k, &v).unwrap(), v);
    }

    #[test]
    fn zero_query_averages_values() {
        let q = Array2::zeros((3, 2));
        let k = array![[1.0, 2.0], [3.0, -1.0], [0.0, 5.0]];
        let v = array![[1.0, 0.0], [2.0, 3.0], [6.0, 3.0]];
        let out = scaled_dot_attention(&q, &k, &v).unwrap();
        for row in out.rows() {
            assert_abs_diff_eq!(row[0], 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(row[1], 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_by_two_hand_computation() {
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        let out = scaled_dot_attention(&eye, &eye, &eye).unwrap();
        let a = 1.0 / 2f64.sqrt();
        let hi = a.exp() / (a.exp() + 1.0);
        let lo = 1.0 / (a.exp() + 1.0);
        assert_close(&out, &array![[hi, lo], [lo, hi]], 1e-15);
    }

    #[test]
    fn shape_errors() {
        let a = Array2::zeros((2, 3));
        let b = Array2::zeros((2, 2));
        assert!(scaled_dot_attention(&a, &b, &b).is_err());
        assert!(scaled_dot_attention(&b, &b, &a.slice(s![..1, ..]).to_owned()).is_err());
        assert!(AttentionParams::zeros(6, 4, 3).is_err());
    }

    #[test]
    fn identity_single_head_matches_plain_attention() {
        let mut p = AttentionParams::zeros(3, 1, 2).unwrap();
        let eye = Array2::eye(3);
        p.w_q[0] = eye.clone();
        p.w_k[0] = eye.clone();
        p.w_v[0] = eye.clone();
        p.w_m = eye;
        let x = array![[0.1, 0.2, -0.3], [1.0, 0.0, 0.5], [-0.4, 0.7, 0.2]];
        assert_eq!(
            multi_head(&x, &p).unwrap(),
            scaled_dot_attention(&x, &x, &x).unwrap()
        );
    }

    #[test]
    fn zero_weights_give_identity_block() {
        let p = AttentionParams::zeros(4, 2, 8).unwrap();
        let x = array![[1.0, 2.0, 3.0, 4.0], [-1.0, 0.5, 0.0, 2.0]];
        let seq = TokenSequence::new(x.clone(), false).unwrap();
        assert_eq!(encode(&seq, &p).unwrap(), x);
    }

    #[test]
    fn head_order_permutation_with_matching_output_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = AttentionParams::random(6, 3, 4, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 6), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6);
        let order = [2, 0, 1];
        let blocks = output_blocks(&p);
        let mut q = p.clone();
        q.w_q = order.iter().map(|&h| p.w_q[h].clone()).collect();
        q.w_k = order.iter().map(|&h| p.w_k[h].clone()).collect();
        q.w_v = order.iter().map(|&h| p.w_v[h].clone()).collect();
        let views: Vec<_> = order.iter().map(|&h| blocks[h].view()).collect();
        q.w_m = concatenate(Axis(0), &views).unwrap();
        assert_close(&multi_head(&x, &p).unwrap(), &multi_head(&x, &q).unwrap(), 1e-12);
    }

    #[test]
    fn params_json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = AttentionParams::random(4, 2, 3, &mut rng).unwrap();
        let back: AttentionParams =
            serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn positions_table_first_row() {
        let pe = sinusoidal_positions(2, 4);
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert_abs_diff_eq!(pe[[1, 0]], 1f64.sin(), epsilon = 1e-15);
    }
}
