//! JSON helpers for model files: floats are written with 17 significant
//! digits so that every `f64` survives a text round trip bit-exactly.

use ndarray::Array2;
use serde::de::Error as _;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

fn raw<E: serde::ser::Error>(x: f64) -> Result<Box<RawValue>, E> {
    if !x.is_finite() {
        return Err(E::custom(format!("cannot serialize non-finite value {x}")));
    }
    RawValue::from_string(format!("{x:.16e}")).map_err(E::custom)
}

pub(crate) mod sig17 {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        raw::<S::Error>(*x)?.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }
}

pub(crate) mod vec_sig17 {
    use super::*;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for &x in xs {
            seq.serialize_element(&raw::<S::Error>(x)?)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<f64>::deserialize(d)
    }
}

/// Row-major flat view of a matrix with its shape.
#[derive(Serialize, Deserialize)]
pub(crate) struct FlatMatrix {
    pub rows: usize,
    pub cols: usize,
    #[serde(with = "vec_sig17")]
    pub data: Vec<f64>,
}

impl From<&Array2<f64>> for FlatMatrix {
    fn from(m: &Array2<f64>) -> Self {
        FlatMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().copied().collect(),
        }
    }
}

impl FlatMatrix {
    pub fn into_array<E: serde::de::Error>(self) -> Result<Array2<f64>, E> {
        Array2::from_shape_vec((self.rows, self.cols), self.data).map_err(E::custom)
    }
}

pub(crate) mod matrix_sig17 {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        FlatMatrix::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let flat = FlatMatrix::deserialize(d)?;
        if flat.rows.checked_mul(flat.cols) != Some(flat.data.len()) {
            return Err(D::Error::custom("matrix data length does not match shape"));
        }
        flat.into_array()
    }
}

pub(crate) mod array1_sig17 {
    use super::*;
    use ndarray::Array1;

    pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
        vec_sig17::serialize(&v.to_vec(), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
        Ok(Array1::from(Vec::<f64>::deserialize(d)?))
    }
}
