//! Fixed-width feature rows keyed by `(event_id, line_no)`.
//!
//! On disk a matrix is a CSV with header `event_id,line_no,f0,...,f{d-1}`;
//! values are printed with 9 significant digits so an `f32` survives the
//! round trip exactly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::corpus::{Utterance, UtteranceKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    keys: Vec<UtteranceKey>,
    data: Array2<f64>,
    index: HashMap<UtteranceKey, usize>,
}

impl FeatureMatrix {
    pub fn new(keys: Vec<UtteranceKey>, data: Array2<f64>) -> Result<Self> {
        if keys.len() != data.nrows() {
            return Err(Error::Shape(format!(
                "{} keys for {} feature rows",
                keys.len(),
                data.nrows()
            )));
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate feature row {k}")));
            }
        }
        Ok(Self { keys, data, index })
    }

    pub fn from_rows(rows: Vec<(UtteranceKey, Vec<f64>)>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.1.len());
        let mut data = Array2::zeros((rows.len(), dim));
        let mut keys = Vec::with_capacity(rows.len());
        for (i, (k, v)) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Shape(format!("row {k} has width {} (expected {dim})", v.len())));
            }
            data.row_mut(i).assign(&ArrayView1::from(&v));
            keys.push(k);
        }
        Self::new(keys, data)
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[UtteranceKey] {
        &self.keys
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn row(&self, key: &UtteranceKey) -> Option<ArrayView1<'_, f64>> {
        self.index.get(key).map(|&i| self.data.row(i))
    }

    /// Gathers rows for `utterances` in order, failing on the first missing key.
    pub fn gather<'a>(&self, utterances: impl IntoIterator<Item = &'a Utterance>, what: &str) -> Result<Array2<f64>> {
        let idx = utterances
            .into_iter()
            .map(|u| {
                self.index.get(&u.key()).copied().ok_or_else(|| Error::MissingKey {
                    what: what.to_string(),
                    event_id: u.event_id.clone(),
                    line_no: u.line_no,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.data.select(Axis(0), &idx))
    }

    /// Column-wise concatenation of two matrices over the keys of `self`.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        let mut data = Array2::zeros((self.len(), self.dim() + other.dim()));
        for (i, k) in self.keys.iter().enumerate() {
            let r = other.row(k).ok_or_else(|| Error::MissingKey {
                what: "feature matrix".into(),
                event_id: k.event_id.clone(),
                line_no: k.line_no,
            })?;
            let mut dst = data.row_mut(i);
            dst.slice_mut(ndarray::s![..self.dim()]).assign(&self.data.row(i));
            dst.slice_mut(ndarray::s![self.dim()..]).assign(&r);
        }
        FeatureMatrix::new(self.keys.clone(), data)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("event_id,line_no");
        for j in 0..self.dim() {
            let _ = write!(out, ",f{j}");
        }
        out.push('\n');
        for (k, row) in self.keys.iter().zip(self.data.rows()) {
            let _ = write!(out, "{},{}", k.event_id, k.line_no);
            for v in row {
                let _ = write!(out, ",{}", format_sig9(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(content: &str, origin: &Path) -> Result<Self> {
        let mut lines = content.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "missing header"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[0] != "event_id" || cols[1] != "line_no" {
            return Err(Error::parse(origin, 1, "header must start with event_id,line_no"));
        }
        let dim = cols.len() - 2;
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != dim + 2 {
                return Err(Error::parse(origin, i + 1, format!("expected {} columns", dim + 2)));
            }
            let line_no = cols[1]
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, "bad line_no"))?;
            let values = cols[2..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::parse(origin, i + 1, format!("bad value {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push((UtteranceKey::new(cols[0], line_no), values));
        }
        if rows.is_empty() {
            return FeatureMatrix::new(Vec::new(), Array2::zeros((0, dim)));
        }
        Self::from_rows(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&content, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Nine significant digits in scientific notation, e.g. `1.23456789e-3`.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v:.8e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_round_trip_preserves_f32_values() {
        let keys = vec![UtteranceKey::new("a", 1), UtteranceKey::new("a", 2)];
        let data = array![[0.1f32 as f64, -3.25], [1e-7f32 as f64, 0.0]];
        let m = FeatureMatrix::new(keys, data).unwrap();
        let csv = m.to_csv();
        assert!(csv.starts_with("event_id,line_no,f0,f1\n"));
        let back = FeatureMatrix::parse_csv(&csv, Path::new("m.csv")).unwrap();
        for (x, y) in m.data().iter().zip(back.data()) {
            assert_eq!(*x as f32, *y as f32);
        }
    }

    #[test]
    fn duplicate_keys_rejected() {
        let keys = vec![UtteranceKey::new("a", 1), UtteranceKey::new("a", 1)];
        assert!(FeatureMatrix::new(keys, Array2::zeros((2, 1))).is_err());
    }

    #[test]
    fn gather_reports_missing_key() {
        let m = FeatureMatrix::from_rows(vec![(UtteranceKey::new("a", 1), vec![1.0])]).unwrap();
        let u = Utterance {
            event_id: "a".into(),
            line_no: 2,
            speaker: "S".into(),
            text: String::new(),
            label: 0,
        };
        let err = m.gather([&u], "text features").unwrap_err();
        assert!(err.to_string().contains("a:2"));
    }
}
