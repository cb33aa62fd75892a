use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfConfig {
    pub lowercase: bool,
    pub min_df: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            min_df: 1,
        }
    }
}

/// `(index, value)` pairs sorted by index.
pub type SparseVector = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    pub config: TfidfConfig,
}

/// Fits a vocabulary (sorted lexicographically) and smooth idf
/// `ln((1 + N) / (1 + df)) + 1`.
pub fn fit_tfidf(docs: &[Vec<String>], config: TfidfConfig) -> Result<TfidfModel> {
    if docs.iter().all(|d| d.is_empty()) {
        return Err(Error::Validation("cannot fit TF.IDF on an empty corpus".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let unique: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = docs.len() as f64;
    let mut vocabulary = BTreeMap::new();
    let mut idf = Vec::new();
    for (term, count) in df.into_iter().filter(|(_, c)| *c >= config.min_df.max(1)) {
        vocabulary.insert(term.to_string(), idf.len());
        idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
    }
    if vocabulary.is_empty() {
        return Err(Error::Validation(format!("no term reaches min_df {}", config.min_df)));
    }
    Ok(TfidfModel { vocabulary, idf, config })
}

impl TfidfModel {
    pub fn vocab_len(&self) -> usize {
        self.idf.len()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index_of(term).map(|i| self.idf[i])
    }

    /// Raw counts times idf, L2-normalized. Unknown terms are ignored; a
    /// document with no known term maps to the empty (zero) vector.
    pub fn transform(&self, doc: &[String]) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in doc {
            if let Some(&i) = self.vocabulary.get(t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut v: SparseVector = counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, x) in v.iter_mut() {
                *x /= norm;
            }
        }
        v
    }

    pub fn transform_dense(&self, doc: &[String]) -> Vec<f64> {
        let mut dense = vec![0.0; self.vocab_len()];
        for (i, x) in self.transform(doc) {
            dense[i] = x;
        }
        dense
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        super::tokenize_with(text, self.config.lowercase)
    }

    /// Writes `vocab.txt` (term per line, index = line number) and `idf.csv`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut vocab = String::new();
        let mut idf = String::from("index,idf\n");
        for (term, &i) in &self.vocabulary {
            debug_assert_eq!(i, vocab.lines().count());
            vocab.push_str(term);
            vocab.push('\n');
            let _ = writeln!(idf, "{i},{}", self.idf[i]);
        }
        let meta = format!("lowercase={}\nmin_df={}\n", self.config.lowercase, self.config.min_df);
        for (name, body) in [("vocab.txt", vocab), ("idf.csv", idf), ("tfidf.conf", meta)] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let vocabulary: BTreeMap<String, usize> = read("vocab.txt")?
            .lines()
            .enumerate()
            .map(|(i, t)| (t.to_string(), i))
            .collect();
        let idf_path = dir.join("idf.csv");
        let idf = read("idf.csv")?
            .lines()
            .enumerate()
            .skip(1)
            .map(|(i, l)| {
                l.split(',')
                    .nth(1)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::parse(&idf_path, i + 1, "bad idf row"))
            })
            .collect::<Result<Vec<_>>>()?;
        if idf.len() != vocabulary.len() {
            return Err(Error::Validation("vocabulary and idf lengths differ".into()));
        }
        let mut config = TfidfConfig::default();
        if let Ok(meta) = read("tfidf.conf") {
            for line in meta.lines() {
                match line.split_once('=') {
                    Some(("lowercase", v)) => config.lowercase = v == "true",
                    Some(("min_df", v)) => config.min_df = v.parse().unwrap_or(1),
                    _ => {}
                }
            }
        }
        Ok(Self { vocabulary, idf, config })
    }
}

/// Dense TF.IDF rows for `utterances`, keyed by utterance.
pub fn tfidf_feature_matrix<'a>(
    model: &TfidfModel,
    utterances: impl IntoIterator<Item = &'a Utterance>,
) -> Result<FeatureMatrix> {
    let utts: Vec<&Utterance> = utterances.into_iter().collect();
    let mut data = Array2::zeros((utts.len(), model.vocab_len()));
    for (r, u) in utts.iter().enumerate() {
        for (i, x) in model.transform(&model.tokenize(&u.text)) {
            data[[r, i]] = x;
        }
    }
    FeatureMatrix::new(utts.iter().map(|u| u.key()).collect(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(xs: &[&[&str]]) -> Vec<Vec<String>> {
        xs.iter().map(|d| d.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn smooth_idf_by_hand() {
        let m = fit_tfidf(&docs(&[&["the", "cat"], &["the", "dog"]]), TfidfConfig::default()).unwrap();
        assert_eq!(m.idf("the"), Some(1.0));
        let cat = (3.0f64 / 2.0).ln() + 1.0;
        assert!((m.idf("cat").unwrap() - 1.405465).abs() < 1e-6);
        assert!((m.idf("cat").unwrap() - cat).abs() < 1e-15);
        // Vocabulary is lexicographic.
        assert_eq!(m.index_of("cat"), Some(0));
        assert_eq!(m.index_of("dog"), Some(1));
        assert_eq!(m.index_of("the"), Some(2));

        let v = m.transform(&docs(&[&["the", "cat"]])[0]);
        let norm = (1.0 + cat * cat).sqrt();
        assert_eq!(v.len(), 2);
        assert!((v[0].1 - cat / norm).abs() < 1e-12);
        assert!((v[1].1 - 1.0 / norm).abs() < 1e-12);
        assert!((v[1].1 - 0.579739).abs() < 1e-6);
        assert!((v[0].1 - 0.814802).abs() < 1e-6);

        assert!(m.transform(&docs(&[&["zebra", "yak"]])[0]).is_empty());
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(fit_tfidf(&docs(&[&[], &[]]), TfidfConfig::default()).is_err());
    }

    #[test]
    fn min_df_prunes_rare_terms() {
        let m = fit_tfidf(
            &docs(&[&["a", "b"], &["a", "c"]]),
            TfidfConfig {
                min_df: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.vocab_len(), 1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = fit_tfidf(&docs(&[&["x", "y"], &["y", "z", "z"]]), TfidfConfig::default()).unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(TfidfModel::load(dir.path()).unwrap(), m);
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]).prop_map(String::from)
    }

    proptest! {
        #[test]
        fn term_in_every_doc_has_unit_idf(mut corpus in prop::collection::vec(prop::collection::vec(word(), 0..6), 1..10)) {
            for d in corpus.iter_mut() {
                d.push("common".into());
            }
            let m = fit_tfidf(&corpus, TfidfConfig::default()).unwrap();
            prop_assert_eq!(m.idf("common"), Some(1.0));
        }

        #[test]
        fn norm_is_one_or_zero(corpus in prop::collection::vec(prop::collection::vec(word(), 1..6), 1..10),
                               doc in prop::collection::vec(prop::sample::select(vec!["a", "b", "zz", "qq"]).prop_map(String::from), 0..8)) {
            let m = fit_tfidf(&corpus, TfidfConfig::default()).unwrap();
            let v = m.transform(&doc);
            let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
            prop_assert!(v.is_empty() || (norm - 1.0).abs() < 1e-9);
        }

        #[test]
        fn fit_is_order_invariant(corpus in prop::collection::vec(prop::collection::vec(word(), 1..6), 1..10)) {
            let mut rev = corpus.clone();
            rev.reverse();
            let a = fit_tfidf(&corpus, TfidfConfig::default()).unwrap();
            let b = fit_tfidf(&rev, TfidfConfig::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
