//! Transcripts, split manifests and audio-segment maps.
//!
//! A corpus directory looks like
//!
//! ```text
//! <dir>/splits.tsv                 event_id \t train|dev|test
//! <dir>/transcripts/<event>.tsv    line_no \t speaker \t sentence \t label
//! <dir>/segments.tsv               event_id \t line_no \t audio_path \t start_ms \t end_ms   (optional)
//! ```
//!
//! Audio paths in a segment map are resolved relative to the map's directory.

pub mod fixture;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "splits.tsv";
pub const TRANSCRIPT_DIR: &str = "transcripts";
pub const SEGMENT_FILE: &str = "segments.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split {other:?}"))),
        }
    }
}

/// Identifies one sentence: the event it belongs to and its transcript line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UtteranceKey {
    pub event_id: String,
    pub line_no: u32,
}

impl UtteranceKey {
    pub fn new(event_id: impl Into<String>, line_no: u32) -> Self {
        Self {
            event_id: event_id.into(),
            line_no,
        }
    }
}

impl fmt::Display for UtteranceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.event_id, self.line_no)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Utterance {
    pub event_id: String,
    pub line_no: u32,
    /// Stored as written in the transcript; comparisons trim it.
    pub speaker: String,
    pub text: String,
    pub label: u8,
}

impl Utterance {
    pub fn key(&self) -> UtteranceKey {
        UtteranceKey::new(self.event_id.clone(), self.line_no)
    }

    pub fn is_checkworthy(&self) -> bool {
        self.label == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub event_id: String,
    pub split: Split,
    pub utterances: Vec<Utterance>,
}

impl Event {
    pub fn n_checkworthy(&self) -> usize {
        self.utterances.iter().filter(|u| u.is_checkworthy()).count()
    }
}

/// An ordered collection of events. Event order is the manifest order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub events: Vec<Event>,
}

impl Corpus {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        let mut seen = HashSet::new();
        for ev in &events {
            if !seen.insert(ev.event_id.as_str()) {
                return Err(Error::Validation(format!("duplicate event {}", ev.event_id)));
            }
            if ev.utterances.is_empty() {
                return Err(Error::Validation(format!("event {} has no utterances", ev.event_id)));
            }
            if let Some(u) = ev.utterances.iter().find(|u| u.event_id != ev.event_id) {
                return Err(Error::Validation(format!(
                    "utterance {} does not belong to event {}",
                    u.key(),
                    ev.event_id
                )));
            }
        }
        Ok(Self { events })
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events_in(&self, split: Split) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.split == split)
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.events.iter().flat_map(|e| e.utterances.iter())
    }

    pub fn utterances_in(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.events_in(split).flat_map(|e| e.utterances.iter())
    }

    pub fn event(&self, event_id: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.event_id == event_id)
    }

    pub fn contains(&self, key: &UtteranceKey) -> bool {
        self.event(&key.event_id)
            .is_some_and(|e| e.utterances.iter().any(|u| u.line_no == key.line_no))
    }

    /// Index from key to utterance, for repeated lookups.
    pub fn index(&self) -> HashMap<UtteranceKey, &Utterance> {
        self.utterances().map(|u| (u.key(), u)).collect()
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_transcript_row(path: &Path, lineno: usize, row: &str, event_id: &str) -> Result<Utterance> {
    let cols: Vec<&str> = row.split('\t').collect();
    if cols.len() != 4 {
        return Err(Error::parse(
            path,
            lineno,
            format!("expected 4 tab-separated columns, found {}", cols.len()),
        ));
    }
    let line_no: u32 = cols[0]
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::parse(path, lineno, format!("line number {:?} is not a positive integer", cols[0])))?;
    if cols[1].trim().is_empty() {
        return Err(Error::parse(path, lineno, "empty speaker"));
    }
    let label = match cols[3].trim() {
        "0" => 0,
        "1" => 1,
        other => return Err(Error::parse(path, lineno, format!("label {other:?} is not 0 or 1"))),
    };
    Ok(Utterance {
        event_id: event_id.to_string(),
        line_no,
        speaker: cols[1].to_string(),
        text: cols[2].to_string(),
        label,
    })
}

/// Parses a transcript from a string. `origin` is only used in error messages.
pub fn parse_transcript(content: &str, origin: &Path, event_id: &str, split: Split) -> Result<Event> {
    let mut utterances: Vec<Utterance> = Vec::new();
    for (i, row) in content.lines().enumerate() {
        let u = parse_transcript_row(origin, i + 1, row, event_id)?;
        if let Some(prev) = utterances.last() {
            if u.line_no <= prev.line_no && utterances.iter().any(|p| p.line_no == u.line_no) {
                return Err(Error::Validation(format!(
                    "{}:{}: duplicate line_no {}",
                    origin.display(),
                    i + 1,
                    u.line_no
                )));
            }
            if u.line_no < prev.line_no {
                return Err(Error::Validation(format!(
                    "{}:{}: line_no {} is not increasing (previous {})",
                    origin.display(),
                    i + 1,
                    u.line_no,
                    prev.line_no
                )));
            }
        }
        utterances.push(u);
    }
    if utterances.is_empty() {
        return Err(Error::Validation(format!("{}: no utterances", origin.display())));
    }
    Ok(Event {
        event_id: event_id.to_string(),
        split,
        utterances,
    })
}

pub fn load_transcript(path: impl AsRef<Path>, event_id: &str, split: Split) -> Result<Event> {
    let path = path.as_ref();
    parse_transcript(&read_text(path)?, path, event_id, split)
}

pub fn write_transcript(event: &Event) -> String {
    let mut out = String::new();
    for u in &event.utterances {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", u.line_no, u.speaker, u.text, u.label));
    }
    out
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<(String, Split)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in read_text(path)?.lines().enumerate() {
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 2 {
            return Err(Error::parse(path, i + 1, "expected <event_id>\\t<split>"));
        }
        let split = cols[1]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("unknown split {:?}", cols[1])))?;
        let id = cols[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Validation(format!("{}: event {id} listed twice", path.display())));
        }
        out.push((id, split));
    }
    Ok(out)
}

pub fn write_manifest(corpus: &Corpus) -> String {
    corpus
        .events
        .iter()
        .map(|e| format!("{}\t{}\n", e.event_id, e.split))
        .collect()
}

/// Loads `<dir>/splits.tsv` and every transcript it names.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir.join(MANIFEST_FILE))?;
    let events = manifest
        .iter()
        .map(|(id, split)| load_transcript(dir.join(TRANSCRIPT_DIR).join(format!("{id}.tsv")), id, *split))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(events)
}

/// Writes manifest and transcripts into `dir`, creating it if needed.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let tdir = dir.join(TRANSCRIPT_DIR);
    fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
    let manifest = dir.join(MANIFEST_FILE);
    fs::write(&manifest, write_manifest(corpus)).map_err(|e| Error::io(&manifest, e))?;
    for ev in &corpus.events {
        let p = tdir.join(format!("{}.tsv", ev.event_id));
        fs::write(&p, write_transcript(ev)).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub event_id: String,
    pub line_no: u32,
    pub audio_path: PathBuf,
    pub start_ms: u64,
    pub end_ms: u64,
}

impl SegmentRef {
    pub fn key(&self) -> UtteranceKey {
        UtteranceKey::new(self.event_id.clone(), self.line_no)
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

pub fn parse_segment_map(content: &str, origin: &Path, corpus: &Corpus) -> Result<Vec<SegmentRef>> {
    let index = corpus.index();
    let base = origin.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, row) in content.lines().enumerate() {
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("expected 5 tab-separated columns, found {}", cols.len()),
            ));
        }
        let int = |s: &str, what: &str| -> Result<u64> {
            s.trim()
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, format!("{what} {s:?} is not a non-negative integer")))
        };
        let line_no = int(cols[1], "line_no")? as u32;
        let start_ms = int(cols[3], "start_ms")?;
        let end_ms = int(cols[4], "end_ms")?;
        let key = UtteranceKey::new(cols[0].trim(), line_no);
        if !index.contains_key(&key) {
            return Err(Error::Validation(format!(
                "{}:{}: segment refers to unknown utterance {key}",
                origin.display(),
                i + 1
            )));
        }
        if end_ms <= start_ms {
            return Err(Error::Validation(format!(
                "{}:{}: end_ms {end_ms} is not after start_ms {start_ms}",
                origin.display(),
                i + 1
            )));
        }
        let audio = PathBuf::from(cols[2].trim());
        let audio_path = if audio.is_absolute() { audio } else { base.join(audio) };
        out.push(SegmentRef {
            event_id: key.event_id,
            line_no,
            audio_path,
            start_ms,
            end_ms,
        });
    }
    Ok(out)
}

pub fn load_segment_map(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Vec<SegmentRef>> {
    let path = path.as_ref();
    parse_segment_map(&read_text(path)?, path, corpus)
}

/// Serializes segment refs; audio paths are written relative to `base` when possible.
pub fn write_segment_map(segments: &[SegmentRef], base: &Path) -> String {
    segments
        .iter()
        .map(|s| {
            let p = s.audio_path.strip_prefix(base).unwrap_or(&s.audio_path);
            format!(
                "{}\t{}\t{}\t{}\t{}\n",
                s.event_id,
                s.line_no,
                p.display(),
                s.start_ms,
                s.end_ms
            )
        })
        .collect()
}

/// Keeps utterances whose trimmed speaker equals the trimmed argument.
/// Events left without utterances are dropped.
pub fn filter_speaker(corpus: &Corpus, speaker: &str) -> Corpus {
    let wanted = speaker.trim();
    let events = corpus
        .events
        .iter()
        .filter_map(|ev| {
            let utterances: Vec<Utterance> = ev
                .utterances
                .iter()
                .filter(|u| u.speaker.trim() == wanted)
                .cloned()
                .collect();
            (!utterances.is_empty()).then(|| Event {
                event_id: ev.event_id.clone(),
                split: ev.split,
                utterances,
            })
        })
        .collect();
    Corpus { events }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub n_events: usize,
    pub n_sentences: usize,
    pub n_checkworthy: usize,
}

impl SplitStats {
    pub fn checkworthy_fraction(&self) -> f64 {
        if self.n_sentences == 0 {
            0.0
        } else {
            self.n_checkworthy as f64 / self.n_sentences as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_split: BTreeMap<Split, SplitStats>,
    pub all: SplitStats,
}

impl CorpusStats {
    pub fn split(&self, split: Split) -> SplitStats {
        self.per_split.get(&split).copied().unwrap_or_default()
    }

    /// Plain-text table, one row per split plus a total.
    pub fn to_table(&self) -> String {
        let mut out = String::from("split\tevents\tsentences\tcheckworthy\tfraction\n");
        let rows = Split::ALL
            .iter()
            .map(|s| (s.as_str(), self.split(*s)))
            .chain(std::iter::once(("all", self.all)));
        for (name, s) in rows {
            out.push_str(&format!(
                "{name}\t{}\t{}\t{}\t{:.4}\n",
                s.n_events,
                s.n_sentences,
                s.n_checkworthy,
                s.checkworthy_fraction()
            ));
        }
        out
    }
}

pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for split in Split::ALL {
        stats.per_split.insert(split, SplitStats::default());
    }
    for ev in &corpus.events {
        let n = ev.utterances.len();
        let k = ev.n_checkworthy();
        for s in [stats.per_split.get_mut(&ev.split).unwrap(), &mut stats.all] {
            s.n_events += 1;
            s.n_sentences += n;
            s.n_checkworthy += k;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> &'static Path {
        Path::new("t.tsv")
    }

    const SNIPPET: &str = "146\tPENCE\tBut Hillary Clinton and Tim Kaine want to build on Obamacare.\t0\n\
147\tPENCE\tThey want to expand it into a single-payer program.\t1\n\
842\tKAINE\tThe Clinton Foundation is one of the highest-rated charities in the world.\t0\n\
843\tKAINE\tIt provides AIDS drugs to about 11.5 million people.\t1\n";

    #[test]
    fn parses_snippet_rows() {
        let ev = parse_transcript(SNIPPET, origin(), "vp", Split::Train).unwrap();
        assert_eq!(ev.utterances.len(), 4);
        let u = &ev.utterances[1];
        assert_eq!(u.line_no, 147);
        assert_eq!(u.speaker, "PENCE");
        assert_eq!(u.text, "They want to expand it into a single-payer program.");
        assert_eq!(u.label, 1);
        assert!(ev.utterances.iter().all(|u| u.event_id == "vp"));
    }

    #[test]
    fn round_trips_byte_for_byte() {
        let ev = parse_transcript(SNIPPET, origin(), "vp", Split::Dev).unwrap();
        assert_eq!(write_transcript(&ev), SNIPPET);
        let no_trailing = SNIPPET.trim_end_matches('\n');
        let ev = parse_transcript(no_trailing, origin(), "vp", Split::Dev).unwrap();
        assert_eq!(write_transcript(&ev).trim_end_matches('\n'), no_trailing);
    }

    #[test]
    fn empty_file_has_no_utterances() {
        let err = parse_transcript("", origin(), "e", Split::Train).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("no utterances")));
    }

    #[test]
    fn bad_label_names_the_row() {
        let err = parse_transcript("1\tA\tfine\t0\n2\tA\tbad\t2\n", origin(), "e", Split::Train).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("\"2\""));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_rows() {
        for bad in ["x\tA\ts\t0", "0\tA\ts\t0", "1\tA\ts", "1\tA\ts\tx\t0", "1\t \ts\t0"] {
            let err = parse_transcript(bad, origin(), "e", Split::Train).unwrap_err();
            assert!(matches!(err, Error::Parse { line: 1, .. }), "{bad:?} gave {err:?}");
        }
    }

    #[test]
    fn rejects_duplicate_and_decreasing_line_numbers() {
        let err = parse_transcript("1\tA\ts\t0\n1\tA\tt\t0\n", origin(), "e", Split::Train).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate")));
        let err = parse_transcript("2\tA\ts\t0\n1\tA\tt\t0\n", origin(), "e", Split::Train).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    fn small_corpus() -> Corpus {
        let a = parse_transcript("1\tX\ta\t0\n2\tY\tb\t1\n5\tX\tc\t1\n", origin(), "ev1", Split::Train).unwrap();
        let b = parse_transcript("1\tY\td\t0\n", origin(), "ev2", Split::Test).unwrap();
        Corpus::new(vec![a, b]).unwrap()
    }

    #[test]
    fn segment_map_validation() {
        let corpus = small_corpus();
        let segs = parse_segment_map("ev1\t5\tev1.wav\t1000\t3500\n", Path::new("/data/segments.tsv"), &corpus).unwrap();
        assert_eq!(segs[0].duration_ms(), 2500);
        assert_eq!(segs[0].audio_path, PathBuf::from("/data/ev1.wav"));

        let err = parse_segment_map("ev1\t999\tev1.wav\t0\t10\n", origin(), &corpus).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("unknown utterance")));
        let err = parse_segment_map("ev1\t5\tev1.wav\t3500\t1000\n", origin(), &corpus).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = parse_segment_map("ev1\t5\tev1.wav\t3500\t3500\n", origin(), &corpus).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn filter_speaker_cases() {
        let corpus = small_corpus();
        let x = filter_speaker(&corpus, " X ");
        assert_eq!(x.events.len(), 1);
        assert_eq!(x.events[0].utterances.len(), 2);
        assert!(filter_speaker(&corpus, "NOBODY").is_empty());

        let single = Corpus::new(vec![corpus.events[1].clone()]).unwrap();
        assert_eq!(filter_speaker(&single, "Y"), single);
    }

    #[test]
    fn stats_cases() {
        let s = compute_stats(&Corpus::default());
        assert_eq!(s.all, SplitStats::default());
        assert_eq!(s.all.checkworthy_fraction(), 0.0);

        let one = parse_transcript("3\tA\tclaim\t1\n", origin(), "e", Split::Dev).unwrap();
        let s = compute_stats(&Corpus::new(vec![one]).unwrap());
        assert_eq!(s.split(Split::Dev).checkworthy_fraction(), 1.0);
        assert_eq!(s.all.n_events, 1);

        let s = compute_stats(&small_corpus());
        assert_eq!(s.split(Split::Train), SplitStats { n_events: 1, n_sentences: 3, n_checkworthy: 2 });
        assert_eq!(s.all.n_sentences, 4);
    }

    #[test]
    fn corpus_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus();
        write_corpus(&corpus, dir.path()).unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap(), corpus);
    }
}
