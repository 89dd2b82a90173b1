//! Three-class softmax regression over sentence embeddings, trained with
//! AdamW on mean cross-entropy.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{adam_step, AdamState};
use crate::embeddings::EmbeddingMatrix;
use crate::metrics::{accuracy, per_class_accuracy, weighted_f1, ConfusionCounts};
use crate::serde_util::{array1_sig17, matrix_sig17, sig17, vec_sig17};
use crate::{Error, Result};

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Negative,
    Neutral,
}

impl Sentiment {
    pub const ALL: [Sentiment; N_CLASSES] = [Sentiment::Positive, Sentiment::Negative, Sentiment::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "positive",
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sentiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Sentiment::Positive),
            "negative" => Ok(Sentiment::Negative),
            "neutral" => Ok(Sentiment::Neutral),
            other => Err(Error::InvalidParameter(format!("unknown sentiment label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Array2<f64>,
    pub labels: Vec<Sentiment>,
}

impl LabeledSet {
    pub fn new(features: Array2<f64>, labels: Vec<Sentiment>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(LabeledSet { features, labels })
    }

    pub fn from_embeddings(m: &EmbeddingMatrix, labels: Vec<Sentiment>) -> Result<Self> {
        Self::new(m.to_f64(), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentimentTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// One unshuffled step per epoch over the whole set.
    pub full_batch: bool,
}

impl Default for SentimentTrainConfig {
    fn default() -> Self {
        SentimentTrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            epsilon: 1e-8,
            seed: 0,
            full_batch: false,
        }
    }
}

impl SentimentTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("sentiment epochs and batch_size must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("sentiment learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("sentiment weight_decay ≥ 0 and epsilon > 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentModel {
    pub classes: [Sentiment; N_CLASSES],
    /// d × 3
    #[serde(with = "matrix_sig17")]
    pub weights: Array2<f64>,
    #[serde(with = "array1_sig17")]
    pub bias: Array1<f64>,
    pub config: SentimentTrainConfig,
    #[serde(with = "sig17")]
    pub initial_loss: f64,
    #[serde(with = "vec_sig17")]
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub class: Sentiment,
    pub probabilities: [f64; N_CLASSES],
}

fn softmax3(logits: ArrayView1<f64>) -> [f64; N_CLASSES] {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let e: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    [e[0] / s, e[1] / s, e[2] / s]
}

fn argmax(p: &[f64; N_CLASSES]) -> usize {
    let mut best = 0;
    for c in 1..N_CLASSES {
        if p[c] > p[best] {
            best = c;
        }
    }
    best
}

impl SentimentModel {
    pub fn zeros(dim: usize) -> Self {
        SentimentModel {
            classes: Sentiment::ALL,
            weights: Array2::zeros((dim, N_CLASSES)),
            bias: Array1::zeros(N_CLASSES),
            config: SentimentTrainConfig::default(),
            initial_loss: f64::NAN,
            loss_history: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn logits(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        Ok(x.dot(&self.weights) + &self.bias)
    }

    pub fn probabilities(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut logits = self.logits(x)?;
        for mut row in logits.rows_mut() {
            let p = softmax3(row.view());
            row.assign(&ArrayView1::from(&p));
        }
        Ok(logits)
    }

    /// Mean cross-entropy and its gradients with respect to weights and bias.
    pub fn loss_and_gradients(&self, x: &Array2<f64>, labels: &[Sentiment]) -> Result<(f64, Array2<f64>, Array1<f64>)> {
        let mut p = self.probabilities(x)?;
        let n = x.nrows() as f64;
        let mut loss = 0.0;
        for (i, y) in labels.iter().enumerate() {
            loss -= p[[i, y.index()]].max(f64::MIN_POSITIVE).ln();
            p[[i, y.index()]] -= 1.0;
        }
        p /= n;
        Ok((loss / n, x.t().dot(&p), p.sum_axis(Axis(0))))
    }

    pub fn loss(&self, data: &LabeledSet) -> Result<f64> {
        Ok(self.loss_and_gradients(&data.features, &data.labels)?.0)
    }
}

pub fn train_classifier(data: &LabeledSet, config: &SentimentTrainConfig) -> Result<SentimentModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut present = data.labels.clone();
    present.sort();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::SingleClass);
    }
    if data.features.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sentiment features".into()));
    }

    let mut model = SentimentModel::zeros(data.features.ncols());
    model.config = config.clone();
    model.initial_loss = model.loss(data)?;
    let new_state = |len| {
        AdamState::new(len)
            .with_epsilon(config.epsilon)
            .with_weight_decay(config.weight_decay)
    };
    let mut w_state = new_state(model.weights.len());
    let mut b_state = new_state(N_CLASSES);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = if config.full_batch { data.len() } else { config.batch_size };

    for epoch in 1..=config.epochs {
        if !config.full_batch {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let x = data.features.select(Axis(0), chunk);
            let y: Vec<Sentiment> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (_, gw, gb) = model.loss_and_gradients(&x, &y)?;
            adam_step(
                model.weights.as_slice_mut().expect("standard layout"),
                gw.as_slice().expect("standard layout"),
                &mut w_state,
                config.learning_rate,
            )?;
            adam_step(
                model.bias.as_slice_mut().expect("standard layout"),
                gb.as_slice().expect("standard layout"),
                &mut b_state,
                config.learning_rate,
            )?;
        }
        let loss = model.loss(data)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}

pub fn predict(model: &SentimentModel, x: &Array2<f64>) -> Result<Vec<Prediction>> {
    let probs = model.probabilities(x)?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|r| {
            let p = [r[0], r[1], r[2]];
            Prediction {
                class: Sentiment::ALL[argmax(&p)],
                probabilities: p,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub confusion: ConfusionCounts,
    pub accuracy: f64,
    pub per_class_accuracy: BTreeMap<Sentiment, f64>,
    pub weighted_f1: f64,
}

pub fn evaluate(model: &SentimentModel, data: &LabeledSet) -> Result<Evaluation> {
    let preds: Vec<Sentiment> = predict(model, &data.features)?.into_iter().map(|p| p.class).collect();
    let truth: Vec<usize> = data.labels.iter().map(|s| s.index()).collect();
    let pred_idx: Vec<usize> = preds.iter().map(|s| s.index()).collect();
    let confusion = ConfusionCounts::from_labels(&truth, &pred_idx, N_CLASSES)?;
    Ok(Evaluation {
        accuracy: accuracy(&confusion)?,
        per_class_accuracy: per_class_accuracy(&data.labels, &preds)?,
        weighted_f1: weighted_f1(&confusion),
        confusion,
    })
}

/// Max relative error between analytic and central-difference gradients of
/// the mean cross-entropy.
pub fn head_gradient_check(model: &SentimentModel, data: &LabeledSet) -> Result<f64> {
    const H: f64 = 1e-5;
    let (_, gw, gb) = model.loss_and_gradients(&data.features, &data.labels)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut check = |ga: f64, numeric: f64| {
        worst = worst.max((ga - numeric).abs() / ga.abs().max(numeric.abs()).max(1e-8));
    };
    for i in 0..gw.len() {
        let idx = (i / N_CLASSES, i % N_CLASSES);
        let orig = probe.weights[idx];
        probe.weights[idx] = orig + H;
        let plus = probe.loss(data)?;
        probe.weights[idx] = orig - H;
        let minus = probe.loss(data)?;
        probe.weights[idx] = orig;
        check(gw[idx], (plus - minus) / (2.0 * H));
    }
    for c in 0..N_CLASSES {
        let orig = probe.bias[c];
        probe.bias[c] = orig + H;
        let plus = probe.loss(data)?;
        probe.bias[c] = orig - H;
        let minus = probe.loss(data)?;
        probe.bias[c] = orig;
        check(gb[c], (plus - minus) / (2.0 * H));
    }
    Ok(worst)
}

/// `{"happy": "positive", ...}`; keys are matched case-insensitively.
pub type LabelMap = BTreeMap<String, Sentiment>;

pub fn read_label_map(path: &Path) -> Result<LabelMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
    let raw: BTreeMap<String, Sentiment> =
        serde_json::from_str(&text).map_err(|e| Error::from(e).at_path(path))?;
    Ok(raw.into_iter().map(|(k, v)| (k.trim().to_ascii_lowercase(), v)).collect())
}

pub fn resolve_label(raw: &str, map: Option<&LabelMap>) -> Result<Sentiment> {
    if let Some(s) = map.and_then(|m| m.get(&raw.trim().to_ascii_lowercase())) {
        return Ok(*s);
    }
    raw.parse()
}

/// Reads `id,label` rows, mapping labels through `map` when given.
pub fn read_labels_csv(path: &Path, map: Option<&LabelMap>) -> Result<Vec<(String, Sentiment)>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        label: String,
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::from(e).at_path(path))?;
    r.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok((row.id, resolve_label(&row.label, map)?))
        })
        .collect::<Result<_>>()
        .map_err(|e: Error| e.at_path(path))
}

pub fn write_labels_csv(path: &Path, rows: &[(String, Sentiment)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::from(e).at_path(path))?;
    w.write_record(["id", "label"])?;
    for (id, s) in rows {
        w.write_record([id.as_str(), s.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// `id,sentiment,p_positive,p_negative,p_neutral`
pub fn write_predictions_csv(path: &Path, ids: &[String], preds: &[Prediction]) -> Result<()> {
    if ids.len() != preds.len() {
        return Err(Error::ShapeMismatch(format!("{} ids for {} predictions", ids.len(), preds.len())));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::from(e).at_path(path))?;
    w.write_record(["id", "sentiment", "p_positive", "p_negative", "p_neutral"])?;
    for (id, p) in ids.iter().zip(preds) {
        let [a, b, c] = p.probabilities.map(|x| format!("{x:.16e}"));
        w.write_record([id.as_str(), p.class.as_str(), &a, &b, &c])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `id` and `sentiment` columns of a predictions CSV.
pub fn read_predictions_csv(path: &Path) -> Result<Vec<(String, Sentiment)>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        sentiment: String,
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::from(e).at_path(path))?;
    r.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok((row.id, row.sentiment.parse()?))
        })
        .collect::<Result<_>>()
        .map_err(|e: Error| e.at_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_model_ties_to_positive() {
        let m = SentimentModel::zeros(2);
        let p = predict(&m, &array![[1.0, -4.0]]).unwrap();
        assert_eq!(p[0].class, Sentiment::Positive);
        for x in p[0].probabilities {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_logit_dominates() {
        let mut m = SentimentModel::zeros(1);
        m.bias = array![10.0, 0.0, 0.0];
        let p = predict(&m, &array![[0.0]]).unwrap();
        assert!(p[0].probabilities[0] > 0.9999);
    }

    #[test]
    fn logit_shift_invariance() {
        let mut m = SentimentModel::zeros(1);
        m.bias = array![0.3, -1.2, 2.0];
        let a = m.probabilities(&array![[0.0]]).unwrap();
        m.bias += 1e3;
        let b = m.probabilities(&array![[0.0]]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_rejected() {
        let d = LabeledSet::new(array![[0.0], [1.0]], vec![Sentiment::Neutral; 2]).unwrap();
        assert!(matches!(train_classifier(&d, &Default::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn dim_mismatch() {
        assert!(predict(&SentimentModel::zeros(3), &array![[1.0]]).is_err());
    }

    #[test]
    fn label_parsing_and_map() {
        assert_eq!("Positive".parse::<Sentiment>().unwrap(), Sentiment::Positive);
        assert!("happy".parse::<Sentiment>().is_err());
        let map: LabelMap = [("happy".to_string(), Sentiment::Positive)].into();
        assert_eq!(resolve_label("HAPPY", Some(&map)).unwrap(), Sentiment::Positive);
        assert_eq!(resolve_label("neutral", Some(&map)).unwrap(), Sentiment::Neutral);
    }

    #[test]
    fn majority_predictor_on_balanced_data() {
        let labels = vec![Sentiment::Positive, Sentiment::Negative, Sentiment::Neutral];
        let d = LabeledSet::new(Array2::zeros((3, 2)), labels).unwrap();
        let e = evaluate(&SentimentModel::zeros(2), &d).unwrap();
        assert!((e.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.per_class_accuracy[&Sentiment::Positive], 1.0);
        assert_eq!(e.per_class_accuracy[&Sentiment::Negative], 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut m = SentimentModel::zeros(2);
        m.weights = array![[0.4, -0.3, 0.1], [0.2, 0.5, -0.6]];
        m.bias = array![0.1, 0.0, -0.2];
        let d = LabeledSet::new(
            array![[1.0, 0.5], [-0.3, 0.8], [0.2, -1.0]],
            vec![Sentiment::Positive, Sentiment::Neutral, Sentiment::Negative],
        )
        .unwrap();
        assert!(head_gradient_check(&m, &d).unwrap() < 1e-6);
    }

    #[test]
    fn label_and_prediction_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![("a".to_string(), Sentiment::Negative), ("b".to_string(), Sentiment::Neutral)];
        let labels = dir.path().join("labels.csv");
        write_labels_csv(&labels, &rows).unwrap();
        assert_eq!(read_labels_csv(&labels, None).unwrap(), rows);

        let preds: Vec<Prediction> = rows
            .iter()
            .map(|(_, s)| Prediction { class: *s, probabilities: [0.25, 0.5, 0.25] })
            .collect();
        let ids: Vec<String> = rows.iter().map(|(id, _)| id.clone()).collect();
        let path = dir.path().join("pred.csv");
        write_predictions_csv(&path, &ids, &preds).unwrap();
        assert_eq!(read_predictions_csv(&path).unwrap(), rows);
    }
}
