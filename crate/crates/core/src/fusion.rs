//! Contextual topic vectors: each row is `[γ·ω ; H]`, the scaled topic
//! mixture concatenated with the sentence embedding.

use std::path::{Path, PathBuf};

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::embeddings::{l2_normalize, load_embeddings, write_tbem, EmbeddingMatrix};
use crate::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub gamma: f64,
    /// L2-normalize embedding rows before concatenation.
    pub normalize_embeddings: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            gamma: DEFAULT_GAMMA,
            normalize_embeddings: true,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be finite and non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedMatrix {
    pub data: Array2<f64>,
    pub k: usize,
    pub d: usize,
    pub gamma: f64,
}

impl FusedMatrix {
    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn topic_block(&self) -> ArrayView2<'_, f64> {
        self.data.slice(s![.., ..self.k])
    }

    pub fn embedding_block(&self) -> ArrayView2<'_, f64> {
        self.data.slice(s![.., self.k..])
    }
}

pub fn fuse(omega: &Array2<f64>, h: &Array2<f64>, config: &FusionConfig) -> Result<FusedMatrix> {
    config.validate()?;
    if omega.nrows() != h.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} topic rows but {} embedding rows",
            omega.nrows(),
            h.nrows()
        )));
    }
    if omega.iter().chain(h.iter()).any(|x| x.is_nan()) {
        return Err(Error::NonFinite("NaN in fusion input".into()));
    }
    let scaled = omega * config.gamma;
    let data = concatenate(Axis(1), &[scaled.view(), h.view()]).expect("row counts checked");
    Ok(FusedMatrix {
        data,
        k: omega.ncols(),
        d: h.ncols(),
        gamma: config.gamma,
    })
}

/// Fuses topic mixtures with provider embeddings, normalizing rows first when
/// the config asks for it.
pub fn fuse_embeddings(
    omega: &Array2<f64>,
    embeddings: &EmbeddingMatrix,
    config: &FusionConfig,
) -> Result<FusedMatrix> {
    let h = if config.normalize_embeddings {
        l2_normalize(embeddings).0.to_f64()
    } else {
        embeddings.to_f64()
    };
    fuse(omega, &h, config)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    k: usize,
    d: usize,
    gamma: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the fused rows as TBEM (stored as f32) plus a `<path>.json` sidecar.
pub fn save_fused(path: &Path, fused: &FusedMatrix, ids: &[String]) -> Result<()> {
    let m = EmbeddingMatrix::new(ids.to_vec(), fused.data.mapv(|x| x as f32))?;
    write_tbem(path, &m)?;
    let side = Sidecar {
        k: fused.k,
        d: fused.d,
        gamma: fused.gamma,
    };
    let sp = sidecar_path(path);
    std::fs::write(&sp, serde_json::to_string_pretty(&side)? + "\n")
        .map_err(|e| Error::from(e).at_path(&sp))?;
    Ok(())
}

pub fn load_fused(path: &Path) -> Result<(FusedMatrix, Vec<String>)> {
    let m = load_embeddings(path)?;
    let sp = sidecar_path(path);
    let text = std::fs::read_to_string(&sp).map_err(|e| Error::from(e).at_path(&sp))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::from(e).at_path(&sp))?;
    if side.k + side.d != m.dim() {
        return Err(Error::DimMismatch {
            expected: side.k + side.d,
            found: m.dim(),
        });
    }
    let fused = FusedMatrix {
        data: m.to_f64(),
        k: side.k,
        d: side.d,
        gamma: side.gamma,
    };
    Ok((fused, m.ids().to_vec()))
}
