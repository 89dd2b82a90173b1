use ndarray::{Array2, ArrayView1};

use crate::{Error, Result};

fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-point silhouette values. Points in singleton clusters score 0.
pub fn silhouette_samples(data: &Array2<f64>, assignments: &[usize]) -> Result<Vec<f64>> {
    let n = data.nrows();
    if assignments.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} rows but {} assignments",
            assignments.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("silhouette needs at least 2 points".into()));
    }
    let n_labels = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_labels];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::InvalidParameter("silhouette needs at least 2 clusters".into()));
    }

    let mut sums = vec![0.0; n_labels];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            out.push(0.0);
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += euclidean(data.row(i), data.row(j));
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..n_labels)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        out.push(if denom == 0.0 { 0.0 } else { (b - a) / denom });
    }
    Ok(out)
}

/// Mean silhouette over all points, in [-1, 1].
pub fn silhouette(data: &Array2<f64>, assignments: &[usize]) -> Result<f64> {
    let s = silhouette_samples(data, assignments)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn four_point_example() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let s = silhouette(&x, &[0, 0, 1, 1]).unwrap();
        let b = (10.0 + 101f64.sqrt()) / 2.0;
        assert!((s - (b - 1.0) / b).abs() < 1e-12);
        assert!((s - 0.900).abs() < 1e-3);
    }

    #[test]
    fn coincident_points_score_one() {
        let x = array![[0.0], [0.0], [5.0], [5.0]];
        assert_eq!(silhouette(&x, &[0, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn singleton_scores_zero() {
        let x = array![[0.0], [1.0], [1.2]];
        let s = silhouette_samples(&x, &[0, 1, 1]).unwrap();
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn errors() {
        assert!(silhouette(&array![[0.0], [1.0]], &[0, 0]).is_err());
        assert!(silhouette(&array![[0.0]], &[0]).is_err());
        assert!(silhouette(&array![[0.0], [1.0]], &[0]).is_err());
    }
}
