//! K-Means with k-means++ seeding and best-of-n restarts, plus per-cluster
//! keyword counts.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::BowCorpus;
use crate::serde_util::{matrix_sig17, sig17, vec_sig17};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub n_init: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 8,
            max_iters: 300,
            n_init: 10,
            seed: 0,
            tol: 1e-6,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_init == 0 {
            return Err(Error::InvalidParameter("kmeans needs k ≥ 1 and n_init ≥ 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("kmeans tol must be ≥ 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    #[serde(with = "matrix_sig17")]
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    #[serde(with = "sig17")]
    pub inertia: f64,
    /// Lloyd iterations used by the winning restart.
    pub iterations: usize,
    #[serde(with = "vec_sig17")]
    pub restart_inertias: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Nearest-centroid labels for new rows.
    pub fn predict(&self, data: &Array2<f64>) -> Result<Vec<usize>> {
        if data.ncols() != self.centroids.ncols() {
            return Err(Error::DimMismatch {
                expected: self.centroids.ncols(),
                found: data.ncols(),
            });
        }
        Ok(data.rows().into_iter().map(|r| nearest(&self.centroids, r).0).collect())
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of and squared distance to the closest centroid; ties go to the
/// lowest index.
pub fn nearest(centroids: &Array2<f64>, point: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(row, point);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(data: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut centroids = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&data.row(first));
    let mut d2: Vec<f64> = data.rows().into_iter().map(|r| sq_dist(r, data.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&data.row(pick));
        for (i, row) in data.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, data.row(pick)));
        }
    }
    centroids
}

struct Run {
    centroids: Array2<f64>,
    assignments: Vec<usize>,
    inertia: f64,
    iterations: usize,
}

fn assign(data: &Array2<f64>, centroids: &Array2<f64>, out: &mut [usize]) -> (bool, f64) {
    let mut changed = false;
    let mut inertia = 0.0;
    for (i, row) in data.rows().into_iter().enumerate() {
        let (c, d) = nearest(centroids, row);
        changed |= out[i] != c;
        out[i] = c;
        inertia += d;
    }
    (changed, inertia)
}

fn lloyd(data: &Array2<f64>, config: &KMeansConfig, seed: u64) -> Run {
    let k = config.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(data, k, &mut rng);
    let mut assignments = vec![usize::MAX; data.nrows()];
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        let (changed, _) = assign(data, &centroids, &mut assignments);
        if !changed && iterations > 1 {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut sizes = vec![0usize; k];
        for (i, row) in data.rows().into_iter().enumerate() {
            let mut s = sums.row_mut(assignments[i]);
            s += &row;
            sizes[assignments[i]] += 1;
        }
        let mut taken = vec![false; data.nrows()];
        for c in 0..k {
            if sizes[c] > 0 {
                sums.row_mut(c).mapv_inplace(|x| x / sizes[c] as f64);
            } else {
                // reseed to the point farthest from its own centroid
                let far = (0..data.nrows())
                    .filter(|&i| !taken[i])
                    .map(|i| (i, sq_dist(data.row(i), centroids.row(assignments[i]))))
                    .fold((0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b })
                    .0;
                taken[far] = true;
                sums.row_mut(c).assign(&data.row(far));
            }
        }
        let shift = centroids
            .rows()
            .into_iter()
            .zip(sums.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = sums;
        if shift < config.tol {
            break;
        }
    }
    let (_, inertia) = assign(data, &centroids, &mut assignments);
    Run {
        centroids,
        assignments,
        inertia,
        iterations,
    }
}

/// Best of `n_init` k-means++/Lloyd runs by inertia. Restart `r` uses seed
/// `seed + r`.
pub fn kmeans(data: &Array2<f64>, config: &KMeansConfig) -> Result<ClusterModel> {
    config.validate()?;
    if data.nrows() < config.k {
        return Err(Error::InvalidParameter(format!(
            "kmeans needs at least k = {} points, got {}",
            config.k,
            data.nrows()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("kmeans input".into()));
    }
    let mut best: Option<Run> = None;
    let mut restart_inertias = Vec::with_capacity(config.n_init);
    for r in 0..config.n_init {
        let run = lloyd(data, config, config.seed.wrapping_add(r as u64));
        restart_inertias.push(run.inertia);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("n_init ≥ 1");
    Ok(ClusterModel {
        centroids: best.centroids,
        assignments: best.assignments,
        inertia: best.inertia,
        iterations: best.iterations,
        restart_inertias,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCount {
    pub term: String,
    pub count: u64,
}

/// Per cluster, the `n` most frequent term ids with their total counts over
/// member documents (ties by term index).
pub fn cluster_top_term_ids(
    assignments: &[usize],
    k: usize,
    corpus: &BowCorpus,
    n: usize,
) -> Result<Vec<Vec<(usize, u64)>>> {
    if assignments.len() != corpus.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} assignments for {} documents",
            assignments.len(),
            corpus.len()
        )));
    }
    if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
        return Err(Error::IndexOutOfRange { index: bad, len: k });
    }
    let mut totals = vec![vec![0u64; corpus.vocab().len()]; k];
    for (doc, &c) in corpus.docs().iter().zip(assignments) {
        for &(t, cnt) in &doc.counts {
            totals[c][t] += u64::from(cnt);
        }
    }
    Ok(totals
        .into_iter()
        .map(|counts| {
            let mut ranked: Vec<(usize, u64)> =
                counts.into_iter().enumerate().filter(|&(_, c)| c > 0).collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.truncate(n);
            ranked
        })
        .collect())
}

/// [`cluster_top_term_ids`] with terms spelled out, for word-cloud data.
pub fn cluster_top_terms(
    model: &ClusterModel,
    corpus: &BowCorpus,
    n: usize,
) -> Result<Vec<Vec<TermCount>>> {
    let vocab = corpus.vocab();
    Ok(cluster_top_term_ids(&model.assignments, model.k(), corpus, n)?
        .into_iter()
        .map(|ranked| {
            ranked
                .into_iter()
                .map(|(t, count)| TermCount {
                    term: vocab.term(t).expect("valid index").to_owned(),
                    count,
                })
                .collect()
        })
        .collect())
}

pub fn write_assignments_csv(path: &Path, ids: &[String], assignments: &[usize]) -> Result<()> {
    if ids.len() != assignments.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ids for {} assignments",
            ids.len(),
            assignments.len()
        )));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::from(e).at_path(path))?;
    w.write_record(["id", "cluster"])?;
    for (id, c) in ids.iter().zip(assignments) {
        w.write_record([id.as_str(), &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignments_csv(path: &Path) -> Result<Vec<(String, usize)>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        cluster: usize,
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::from(e).at_path(path))?;
    r.deserialize::<Row>()
        .map(|row| row.map(|r| (r.id, r.cluster)).map_err(Error::from))
        .collect()
}

/// `{"0": [{"term": ..., "count": ...}, ...], "1": ...}`
pub fn write_wordcloud_json(path: &Path, top_terms: &[Vec<TermCount>]) -> Result<()> {
    let map: BTreeMap<usize, &Vec<TermCount>> = top_terms.iter().enumerate().collect();
    std::fs::write(path, serde_json::to_string_pretty(&map)? + "\n")
        .map_err(|e| Error::from(e).at_path(path))
}
