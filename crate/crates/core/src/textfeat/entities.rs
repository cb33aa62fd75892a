//! Named-entity count vectors.
//!
//! Entity mentions come from a pluggable [`EntityTagger`]. The default reads
//! precomputed counts from a sidecar TSV; [`RegexTagger`] is a self-contained
//! fallback built from digit patterns, small gazetteers and
//! capitalization heuristics.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use regex::Regex;

use crate::corpus::{Utterance, UtteranceKey};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// The 18 conventional entity types, in frozen alphabetical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    Cardinal,
    Date,
    Event,
    Fac,
    Gpe,
    Language,
    Law,
    Loc,
    Money,
    Norp,
    Ordinal,
    Org,
    Percent,
    Person,
    Product,
    Quantity,
    Time,
    WorkOfArt,
}

pub const ENTITY_KINDS: [EntityKind; 18] = [
    EntityKind::Cardinal,
    EntityKind::Date,
    EntityKind::Event,
    EntityKind::Fac,
    EntityKind::Gpe,
    EntityKind::Language,
    EntityKind::Law,
    EntityKind::Loc,
    EntityKind::Money,
    EntityKind::Norp,
    EntityKind::Ordinal,
    EntityKind::Org,
    EntityKind::Percent,
    EntityKind::Person,
    EntityKind::Product,
    EntityKind::Quantity,
    EntityKind::Time,
    EntityKind::WorkOfArt,
];

impl EntityKind {
    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Cardinal => "CARDINAL",
            EntityKind::Date => "DATE",
            EntityKind::Event => "EVENT",
            EntityKind::Fac => "FAC",
            EntityKind::Gpe => "GPE",
            EntityKind::Language => "LANGUAGE",
            EntityKind::Law => "LAW",
            EntityKind::Loc => "LOC",
            EntityKind::Money => "MONEY",
            EntityKind::Norp => "NORP",
            EntityKind::Ordinal => "ORDINAL",
            EntityKind::Org => "ORG",
            EntityKind::Percent => "PERCENT",
            EntityKind::Person => "PERSON",
            EntityKind::Product => "PRODUCT",
            EntityKind::Quantity => "QUANTITY",
            EntityKind::Time => "TIME",
            EntityKind::WorkOfArt => "WORK_OF_ART",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ENTITY_KINDS
            .iter()
            .copied()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Validation(format!("unknown entity type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct NeCountVector(pub [u32; 18]);

impl NeCountVector {
    pub fn get(&self, kind: EntityKind) -> u32 {
        self.0[kind.index()]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub kind: EntityKind,
    /// Byte span in the sentence, when the source knows it.
    pub span: Option<Range<usize>>,
}

pub trait EntityTagger: Send + Sync {
    fn mentions(&self, utterance: &Utterance) -> Result<Vec<Mention>>;
}

pub fn ne_counts(utterance: &Utterance, tagger: &dyn EntityTagger) -> Result<NeCountVector> {
    let mut v = NeCountVector::default();
    for m in tagger.mentions(utterance)? {
        v.0[m.kind.index()] += 1;
    }
    Ok(v)
}

pub fn ne_feature_matrix<'a>(
    utterances: impl IntoIterator<Item = &'a Utterance>,
    tagger: &dyn EntityTagger,
) -> Result<FeatureMatrix> {
    let utts: Vec<&Utterance> = utterances.into_iter().collect();
    let mut data = Array2::zeros((utts.len(), ENTITY_KINDS.len()));
    for (r, u) in utts.iter().enumerate() {
        for (c, x) in ne_counts(u, tagger)?.0.iter().enumerate() {
            data[[r, c]] = *x as f64;
        }
    }
    FeatureMatrix::new(utts.iter().map(|u| u.key()).collect(), data)
}

/// Precomputed counts: `<event_id>\t<line_no>\t<TYPE:count,...>`.
#[derive(Debug, Clone, Default)]
pub struct SidecarTagger {
    rows: HashMap<UtteranceKey, Vec<(EntityKind, u32)>>,
}

impl SidecarTagger {
    pub fn parse(content: &str, origin: &Path) -> Result<Self> {
        let mut rows = HashMap::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if !(2..=3).contains(&cols.len()) {
                return Err(Error::parse(origin, i + 1, "expected <event_id>\\t<line_no>\\t<TYPE:count,...>"));
            }
            let line_no = cols[1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, "bad line_no"))?;
            let mut counts = Vec::new();
            for item in cols.get(2).map_or("", |s| s.trim()).split(',').filter(|s| !s.is_empty()) {
                let (kind, n) = item
                    .split_once(':')
                    .ok_or_else(|| Error::parse(origin, i + 1, format!("bad entry {item:?}")))?;
                let kind = kind
                    .parse()
                    .map_err(|_| Error::parse(origin, i + 1, format!("unknown entity type {kind:?}")))?;
                let n = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(origin, i + 1, format!("bad count in {item:?}")))?;
                counts.push((kind, n));
            }
            rows.insert(UtteranceKey::new(cols[0].trim(), line_no), counts);
        }
        Ok(Self { rows })
    }

    /// Serializes counts for `utterances` using `tagger`, in sidecar format.
    pub fn render<'a>(utterances: impl IntoIterator<Item = &'a Utterance>, tagger: &dyn EntityTagger) -> Result<String> {
        let mut out = String::new();
        for u in utterances {
            let v = ne_counts(u, tagger)?;
            let items: Vec<String> = ENTITY_KINDS
                .iter()
                .filter(|k| v.get(**k) > 0)
                .map(|k| format!("{}:{}", k.name(), v.get(*k)))
                .collect();
            out.push_str(&format!("{}\t{}\t{}\n", u.event_id, u.line_no, items.join(",")));
        }
        Ok(out)
    }
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<SidecarTagger> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SidecarTagger::parse(&content, path)
}

impl EntityTagger for SidecarTagger {
    fn mentions(&self, u: &Utterance) -> Result<Vec<Mention>> {
        let counts = self.rows.get(&u.key()).ok_or_else(|| Error::MissingKey {
            what: "entity sidecar".into(),
            event_id: u.event_id.clone(),
            line_no: u.line_no,
        })?;
        Ok(counts
            .iter()
            .flat_map(|&(kind, n)| std::iter::repeat_n(Mention { kind, span: None }, n as usize))
            .collect())
    }
}

const MONTHS: &str = "January|February|March|April|May|June|July|August|September|October|November|December";
const SCALES: &str = "thousand|million|billion|trillion";

const GPE: &[&str] = &[
    "America", "United States", "China", "Iran", "Iraq", "Israel", "Mexico", "Russia", "Syria", "Canada", "Japan",
    "Germany", "Texas", "Ohio", "Florida", "Washington", "New York", "California", "Michigan", "Pennsylvania",
    "Afghanistan", "Libya", "Cuba", "Korea", "North Korea", "Europe", "Chicago",
];
const NORP: &[&str] = &[
    "Americans", "American", "Democrats", "Democrat", "Democratic", "Republicans", "Republican", "Mexicans",
    "Chinese", "Muslims", "Muslim", "Christians", "Christian", "Russians", "Iranian", "Hispanics", "Latinos",
];
const ORG_SUFFIXES: &[&str] = &[
    "Foundation", "Party", "Congress", "Senate", "House", "Department", "Administration", "Agency", "Corporation",
    "Company", "Reserve", "Pentagon", "University", "Association", "Bank", "Court", "Council", "Committee",
];
const NOT_NAMES: &[&str] = &[
    "I", "The", "It", "They", "We", "But", "And", "My", "Our", "You", "He", "She", "This", "That", "There", "So",
    "If", "When", "What", "Well", "Now", "In", "On", "A", "An", "Yes", "No", "Let", "Look",
];

/// Gazetteer and pattern fallback tagger.
pub struct RegexTagger {
    rules: Vec<(EntityKind, Regex)>,
    capitalized: Regex,
}

impl Default for RegexTagger {
    fn default() -> Self {
        Self::new()
    }
}

impl RegexTagger {
    pub fn new() -> Self {
        let alt = |xs: &[&str]| {
            let mut xs = xs.to_vec();
            xs.sort_by_key(|s| std::cmp::Reverse(s.len()));
            xs.iter().map(|s| regex::escape(s)).collect::<Vec<_>>().join("|")
        };
        let num = r"\d[\d,]*(?:\.\d+)?";
        let rules = [
            (
                EntityKind::Money,
                format!(r"\$\s?{num}(?:\s(?:{SCALES}))?|\b{num}(?:\s(?:{SCALES}))?\s(?:dollars|bucks)\b"),
            ),
            (EntityKind::Percent, format!(r"\b{num}\s?(?:%|percent\b)")),
            (
                EntityKind::Date,
                format!(r"\b(?:{MONTHS})(?:\s\d{{1,2}})?(?:,?\s\d{{4}})?\b|\b(?:1[89]|20)\d{{2}}\b|\b(?:yesterday|today|tomorrow|last year|next year)\b"),
            ),
            (EntityKind::Time, r"(?i)\b\d{1,2}(?::\d{2})?\s?(?:a\.m\.|p\.m\.|am\b|pm\b)".to_string()),
            (
                EntityKind::Ordinal,
                r"(?i)\b\d+(?:st|nd|rd|th)\b|\b(?:first|second|third|fourth|fifth|tenth)\b".to_string(),
            ),
            (EntityKind::Cardinal, format!(r"\b{num}(?:\s(?:{SCALES}|hundred))?\b")),
            (EntityKind::Norp, format!(r"\b(?:{})\b", alt(NORP))),
            (EntityKind::Gpe, format!(r"\b(?:{})\b", alt(GPE))),
            (
                EntityKind::Org,
                format!(r"\b(?:[A-Z][a-z]+\s)*(?:{})\b|\b[A-Z]{{2,6}}\b", alt(ORG_SUFFIXES)),
            ),
        ];
        Self {
            rules: rules
                .into_iter()
                .map(|(k, p)| (k, Regex::new(&p).expect("static pattern")))
                .collect(),
            capitalized: Regex::new(r"\b[A-Z][a-z]+(?:\s[A-Z][a-z]+)*\b").expect("static pattern"),
        }
    }

    pub fn tag_text(&self, text: &str) -> Vec<Mention> {
        let mut taken = vec![false; text.len()];
        let mut out = Vec::new();
        let claim = |span: Range<usize>, taken: &mut [bool]| {
            if taken[span.clone()].iter().any(|t| *t) {
                return false;
            }
            taken[span].iter_mut().for_each(|t| *t = true);
            true
        };
        for (kind, re) in &self.rules {
            for m in re.find_iter(text) {
                if claim(m.range(), &mut taken) {
                    out.push(Mention {
                        kind: *kind,
                        span: Some(m.range()),
                    });
                }
            }
        }
        for m in self.capitalized.find_iter(text) {
            let words: Vec<&str> = m.as_str().split(' ').filter(|w| !NOT_NAMES.contains(w)).collect();
            let at_start = text[..m.start()].trim().is_empty();
            if words.is_empty() || (at_start && words.len() < 2) {
                continue;
            }
            if claim(m.range(), &mut taken) {
                out.push(Mention {
                    kind: EntityKind::Person,
                    span: Some(m.range()),
                });
            }
        }
        out.sort_by_key(|m| m.span.as_ref().map(|s| s.start));
        out
    }
}

impl EntityTagger for RegexTagger {
    fn mentions(&self, u: &Utterance) -> Result<Vec<Mention>> {
        Ok(self.tag_text(&u.text))
    }
}
