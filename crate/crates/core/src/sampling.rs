//! Training-set variants: original, upsampled positives (`x15`, `x30`, any
//! `xK`) and negatives undersampled to a 1:1 ratio.
//!
//! Variants only change row multiplicity, never row contents. Undersampling
//! draws from `ChaCha8Rng` seeded with [`VariantSpec::seed`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Utterance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKind {
    Original,
    /// `k` extra copies of every check-worthy row.
    Upsample(usize),
    Balanced,
}

impl VariantKind {
    /// File-name suffix, e.g. `.x15`; empty for the original.
    pub fn suffix(self) -> String {
        match self {
            VariantKind::Original => String::new(),
            VariantKind::Upsample(k) => format!(".x{k}"),
            VariantKind::Balanced => ".1to1".into(),
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariantKind::Original => f.write_str("original"),
            VariantKind::Upsample(k) => write!(f, "x{k}"),
            VariantKind::Balanced => f.write_str("1to1"),
        }
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "original" | "none" => Ok(VariantKind::Original),
            "1to1" | "1:1" | "balanced" => Ok(VariantKind::Balanced),
            other => other
                .strip_prefix('x')
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(VariantKind::Upsample)
                .ok_or_else(|| Error::Config(format!("unknown variant {other:?} (original, xK, 1to1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantSpec {
    pub kind: VariantKind,
    pub seed: u64,
}

/// Appends `k` copies of every positive after all original rows, copies of
/// the same source row adjacent and in source order.
pub fn upsample_positives(train: &[Utterance], k: usize) -> Result<Vec<Utterance>> {
    if k == 0 {
        return Err(Error::Config("upsampling factor must be >= 1".into()));
    }
    let mut out = train.to_vec();
    for u in train.iter().filter(|u| u.is_checkworthy()) {
        out.extend(std::iter::repeat_n(u, k).cloned());
    }
    Ok(out)
}

/// Keeps every positive and a uniform sample of as many negatives, in input order.
pub fn undersample_balanced(train: &[Utterance], seed: u64) -> Result<Vec<Utterance>> {
    let n_pos = train.iter().filter(|u| u.is_checkworthy()).count();
    if n_pos == 0 {
        return Err(Error::Validation("cannot balance: no check-worthy rows".into()));
    }
    let negatives: Vec<usize> = (0..train.len()).filter(|&i| !train[i].is_checkworthy()).collect();
    if negatives.len() < n_pos {
        return Err(Error::Validation(format!(
            "cannot balance: {} negatives for {n_pos} positives",
            negatives.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; train.len()];
    for i in rand::seq::index::sample(&mut rng, negatives.len(), n_pos) {
        keep[negatives[i]] = true;
    }
    Ok(train
        .iter()
        .zip(keep)
        .filter(|(u, k)| u.is_checkworthy() || *k)
        .map(|(u, _)| u.clone())
        .collect())
}

pub fn make_variant(train: &[Utterance], spec: &VariantSpec) -> Result<Vec<Utterance>> {
    match spec.kind {
        VariantKind::Original => Ok(train.to_vec()),
        VariantKind::Upsample(k) => upsample_positives(train, k),
        VariantKind::Balanced => undersample_balanced(train, spec.seed),
    }
}

/// Variant rows are transcript rows prefixed with their event id, since a
/// training set spans events and may repeat a line.
pub fn write_variant(rows: &[Utterance]) -> String {
    rows.iter()
        .map(|u| format!("{}\t{}\t{}\t{}\t{}\n", u.event_id, u.line_no, u.speaker, u.text, u.label))
        .collect()
}

pub fn parse_variant(content: &str, origin: &Path) -> Result<Vec<Utterance>> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, row)| {
            let cols: Vec<&str> = row.split('\t').collect();
            if cols.len() != 5 {
                return Err(Error::parse(origin, i + 1, format!("expected 5 columns, found {}", cols.len())));
            }
            let line_no = cols[1]
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, "bad line_no"))?;
            let label = match cols[4] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(origin, i + 1, format!("label {other:?} is not 0 or 1"))),
            };
            Ok(Utterance {
                event_id: cols[0].to_string(),
                line_no,
                speaker: cols[2].to_string(),
                text: cols[3].to_string(),
                label,
            })
        })
        .collect()
}

pub fn load_variant(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_variant(&content, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelCounts {
    pub positives: usize,
    pub negatives: usize,
}

impl LabelCounts {
    pub fn of(rows: &[Utterance]) -> Self {
        let positives = rows.iter().filter(|u| u.is_checkworthy()).count();
        Self {
            positives,
            negatives: rows.len() - positives,
        }
    }

    pub fn positive_fraction(&self) -> f64 {
        let n = self.positives + self.negatives;
        if n == 0 {
            0.0
        } else {
            self.positives as f64 / n as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(labels: &[u8]) -> Vec<Utterance> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| Utterance {
                event_id: format!("e{}", i % 3),
                line_no: i as u32 + 1,
                speaker: "S".into(),
                text: format!("sentence {i}"),
                label,
            })
            .collect()
    }

    #[test]
    fn parses_kinds() {
        assert_eq!("x15".parse::<VariantKind>().unwrap(), VariantKind::Upsample(15));
        assert_eq!("1:1".parse::<VariantKind>().unwrap(), VariantKind::Balanced);
        assert_eq!("original".parse::<VariantKind>().unwrap(), VariantKind::Original);
        assert!("x0".parse::<VariantKind>().is_err());
        assert!("y3".parse::<VariantKind>().is_err());
        assert_eq!(VariantKind::Upsample(30).suffix(), ".x30");
        assert_eq!(VariantKind::Balanced.suffix(), ".1to1");
    }

    #[test]
    fn copies_follow_originals_grouped_by_source() {
        let d = rows(&[0, 1, 0, 1]);
        let out = upsample_positives(&d, 2).unwrap();
        let lines: Vec<u32> = out.iter().map(|u| u.line_no).collect();
        assert_eq!(lines, vec![1, 2, 3, 4, 2, 2, 4, 4]);
    }

    #[test]
    fn no_positives_is_identity() {
        let d = rows(&[0, 0, 0]);
        assert_eq!(upsample_positives(&d, 15).unwrap(), d);
    }

    #[test]
    fn balanced_errors_and_identity() {
        assert!(matches!(undersample_balanced(&rows(&[0, 0]), 1), Err(Error::Validation(m)) if m.contains("cannot balance")));
        let d = rows(&[1, 0, 0, 1]);
        assert_eq!(undersample_balanced(&d, 9).unwrap(), d);
    }

    #[test]
    fn original_is_identity() {
        let d = rows(&[1, 0, 0]);
        let spec = VariantSpec {
            kind: VariantKind::Original,
            seed: 0,
        };
        assert_eq!(make_variant(&d, &spec).unwrap(), d);
    }

    #[test]
    fn variant_file_round_trip() {
        let d = upsample_positives(&rows(&[0, 1, 1]), 3).unwrap();
        assert_eq!(parse_variant(&write_variant(&d), Path::new("v.tsv")).unwrap(), d);
    }

    proptest! {
        #[test]
        fn upsample_counts(labels in proptest::collection::vec(0u8..2, 0..200), k in 1usize..40) {
            let d = rows(&labels);
            let before = LabelCounts::of(&d);
            let out = upsample_positives(&d, k).unwrap();
            let after = LabelCounts::of(&out);
            prop_assert_eq!(out.len(), d.len() + k * before.positives);
            prop_assert_eq!(after.positives, before.positives * (k + 1));
            prop_assert_eq!(after.negatives, before.negatives);
            prop_assert!(out.iter().all(|u| d.contains(u)));
        }

        #[test]
        fn balanced_invariants(labels in proptest::collection::vec(0u8..2, 1..200), seed in any::<u64>()) {
            let d = rows(&labels);
            let c = LabelCounts::of(&d);
            prop_assume!(c.positives > 0 && c.negatives >= c.positives);
            let out = undersample_balanced(&d, seed).unwrap();
            let oc = LabelCounts::of(&out);
            prop_assert_eq!(oc.positives, oc.negatives);
            prop_assert_eq!(oc.positives, c.positives);
            // Survivors keep their relative order and exist in the input.
            let mut last = 0;
            for u in &out {
                let pos = d.iter().position(|x| x == u).unwrap();
                prop_assert!(pos >= last);
                last = pos;
            }
            prop_assert_eq!(undersample_balanced(&d, seed).unwrap(), out);
        }
    }
}
