//! Complex numbers as `[re, im]` pairs; matrices as nested row arrays of
//! such pairs.

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::numerics::ComplexMatrix;

pub fn pair(z: &Complex64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn matrix_rows(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| pair(&m[(i, j)])).collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<[f64; 2]>]) -> Result<ComplexMatrix, String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err("ragged matrix rows".into());
    }
    if rows.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err("non-finite matrix entry".into());
    }
    Ok(ComplexMatrix::from_fn(r, c, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        pair(z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(pair).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComplexMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        matrix_from_rows(&rows).map_err(D::Error::custom)
    }
}

pub mod opt_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<Vec<Complex64>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|v| v.iter().map(pair).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Complex64>>, D::Error> {
        let raw = Option::<Vec<[f64; 2]>>::deserialize(d)?;
        Ok(raw.map(|v| v.into_iter().map(|[re, im]| Complex64::new(re, im)).collect()))
    }
}
