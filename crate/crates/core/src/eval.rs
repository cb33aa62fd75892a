//! Ranking, average precision and MAP over events.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split, Utterance, UtteranceKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub event_id: String,
    pub line_no: u32,
    pub score: f64,
}

impl Prediction {
    pub fn key(&self) -> UtteranceKey {
        UtteranceKey::new(self.event_id.clone(), self.line_no)
    }
}

/// Line numbers by descending score; ties go to the lower line number.
pub fn rank_event(scored: &[(u32, f64)]) -> Result<Vec<u32>> {
    let mut seen = HashSet::new();
    for &(line, score) in scored {
        if !seen.insert(line) {
            return Err(Error::Validation(format!("duplicate line_no {line} in ranking")));
        }
        if !score.is_finite() {
            return Err(Error::Numerical(format!("non-finite score for line {line}")));
        }
    }
    let mut v = scored.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(v.into_iter().map(|(l, _)| l).collect())
}

/// Mean of precision@k over the ranks k holding a positive. `None` when
/// there is no positive.
pub fn average_precision(ranked_labels: &[u8]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    // Exact running sum num/den while it fits, so small cases round once.
    let mut exact = Some((0u128, 1u128));
    for (i, &y) in ranked_labels.iter().enumerate() {
        if y == 1 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
            exact = exact.and_then(|(n, d)| add_ratio(n, d, hits as u128, (i + 1) as u128));
        }
    }
    if hits == 0 {
        return None;
    }
    const F64_EXACT: u128 = 1 << 53;
    match exact.and_then(|(n, d)| Some((n, d.checked_mul(hits as u128)?))) {
        Some((n, d)) if n <= F64_EXACT && d <= F64_EXACT => Some(n as f64 / d as f64),
        _ => Some(sum / hits as f64),
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn add_ratio(n: u128, d: u128, p: u128, q: u128) -> Option<(u128, u128)> {
    let g = gcd(d, q);
    let den = (d / g).checked_mul(q)?;
    let num = n.checked_mul(q / g)?.checked_add(p.checked_mul(d / g)?)?;
    let r = gcd(num, den);
    Some((num / r, den / r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub map: f64,
    pub per_event: BTreeMap<String, f64>,
    pub excluded_events: Vec<String>,
}

/// Per-event APs and the events left out for having no positive.
pub fn event_aps<'a>(
    rows: impl IntoIterator<Item = (&'a Utterance, f64)>,
) -> Result<(BTreeMap<String, f64>, Vec<String>)> {
    let mut by_event: BTreeMap<&str, Vec<(u32, f64, u8)>> = BTreeMap::new();
    for (u, s) in rows {
        by_event.entry(&u.event_id).or_default().push((u.line_no, s, u.label));
    }
    let mut aps = BTreeMap::new();
    let mut excluded = Vec::new();
    for (event, rows) in by_event {
        let labels: HashMap<u32, u8> = rows.iter().map(|r| (r.0, r.2)).collect();
        let scored: Vec<(u32, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
        let ranked: Vec<u8> = rank_event(&scored)?.iter().map(|l| labels[l]).collect();
        match average_precision(&ranked) {
            Some(ap) => {
                aps.insert(event.to_string(), ap);
            }
            None => excluded.push(event.to_string()),
        }
    }
    Ok((aps, excluded))
}

fn mean_ap(aps: &BTreeMap<String, f64>) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::Validation("no event with a check-worthy sentence; MAP undefined".into()));
    }
    Ok(aps.values().sum::<f64>() / aps.len() as f64)
}

/// MAP of `scores` (aligned with `utterances`), grouping rows by event.
pub fn map_of_scores(utterances: &[Utterance], scores: &[f64]) -> Result<f64> {
    if utterances.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} utterances but {} scores",
            utterances.len(),
            scores.len()
        )));
    }
    let (aps, _) = event_aps(utterances.iter().zip(scores.iter().copied()))?;
    mean_ap(&aps)
}

/// Scores every event of `split`. Predictions must cover the split exactly.
pub fn map_over_events(predictions: &[Prediction], corpus: &Corpus, split: Split, run_id: &str) -> Result<EvalReport> {
    let mut scores: HashMap<UtteranceKey, f64> = HashMap::new();
    let mut problems = Vec::new();
    for p in predictions {
        if scores.insert(p.key(), p.score).is_some() {
            problems.push(format!("duplicate {}", p.key()));
        }
    }
    let mut rows = Vec::new();
    for u in corpus.utterances_in(split) {
        match scores.remove(&u.key()) {
            Some(s) => rows.push((u, s)),
            None => problems.push(format!("missing {}", u.key())),
        }
    }
    let mut extra: Vec<String> = scores.keys().map(|k| format!("extra {k}")).collect();
    extra.sort();
    problems.extend(extra);
    if !problems.is_empty() {
        let shown = problems.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
        return Err(Error::Coverage(format!(
            "{} prediction problem(s) on {split}: {shown}",
            problems.len()
        )));
    }
    let (per_event, excluded_events) = event_aps(rows)?;
    Ok(EvalReport {
        run_id: run_id.to_string(),
        split: split.to_string(),
        checkpoint: None,
        timestamp: None,
        map: mean_ap(&per_event)?,
        per_event,
        excluded_events,
    })
}

pub fn write_predictions(predictions: &[Prediction]) -> String {
    predictions
        .iter()
        .map(|p| format!("{}\t{}\t{:.6}\n", p.event_id, p.line_no, p.score))
        .collect()
}

pub fn parse_predictions(content: &str, origin: &Path) -> Result<Vec<Prediction>> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(origin, i + 1, "expected <event_id>\\t<line_no>\\t<score>"));
            }
            Ok(Prediction {
                event_id: cols[0].to_string(),
                line_no: cols[1].parse().map_err(|_| Error::parse(origin, i + 1, "bad line_no"))?,
                score: cols[2].parse().map_err(|_| Error::parse(origin, i + 1, "bad score"))?,
            })
        })
        .collect()
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&content, path)
}

pub fn write_report(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&content).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

/// Reports ordered by MAP, highest first; equal MAPs keep run-id order.
pub fn rank_runs(reports: &[EvalReport]) -> Vec<&EvalReport> {
    let mut v: Vec<&EvalReport> = reports.iter().collect();
    v.sort_by(|a, b| b.map.total_cmp(&a.map).then_with(|| a.run_id.cmp(&b.run_id)));
    v
}

/// Plain-text comparison table with MAP shown as a percentage.
pub fn compare_runs(reports: &[EvalReport]) -> String {
    let ranked = rank_runs(reports);
    let width = ranked.iter().map(|r| r.run_id.len()).max().unwrap_or(0).max(3);
    let mut out = format!("{:<width$}  {:<5}  {:>6}  events\n", "run", "split", "MAP");
    for r in ranked {
        let _ = writeln!(
            out,
            "{:<width$}  {:<5}  {:>6.2}  {}",
            r.run_id,
            r.split,
            100.0 * r.map,
            r.per_event.len()
        );
    }
    out
}
