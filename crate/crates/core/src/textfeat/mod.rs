//! Text features for the baseline classifiers: TF.IDF vectors and
//! named-entity count vectors.

mod entities;
mod tfidf;

pub use entities::{
    load_sidecar, ne_counts, ne_feature_matrix, EntityKind, EntityTagger, Mention, NeCountVector, RegexTagger,
    SidecarTagger, ENTITY_KINDS,
};
pub use tfidf::{fit_tfidf, tfidf_feature_matrix, SparseVector, TfidfConfig, TfidfModel};

/// Lowercases and splits on every character that is neither a letter nor a digit.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, true)
}

pub fn tokenize_with(text: &str, lowercase: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("They want to expand it"), ["they", "want", "to", "expand", "it"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("single-payer program."), ["single", "payer", "program"]);
        assert_eq!(tokenize("  Über\u{00a0}ALLES!! "), ["über", "alles"]);
    }
}
