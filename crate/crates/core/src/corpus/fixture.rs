//! Deterministic synthetic corpora.
//!
//! Three generators:
//! - [`generate_fixture`]: `E` events of `S` sentences with Bernoulli labels,
//!   optionally with one synthetic recording per event;
//! - [`fixture_from_quotas`]: exact per-split event/sentence/positive counts,
//!   with an optional quota for one named speaker;
//! - [`complementary_fixture`]: paired text/audio feature rows where half the
//!   positives are visible only in the text and half only in the audio.
//!
//! All of them draw from `ChaCha8Rng` seeded with the caller's seed.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{write_corpus, write_segment_map, Corpus, Event, SegmentRef, Split, Utterance, SEGMENT_FILE};
use crate::audio::{write_wav, Waveform, TARGET_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const SPEAKERS: [&str; 4] = ["ADAMS", "BAKER", "CLARK", "DAVIS"];

const OPENERS: [&str; 6] = ["We", "They", "My opponent", "The American people", "Our families", "I"];
const PLAIN_VERBS: [&str; 6] = ["believe in", "care about", "talk about", "need", "deserve", "fight for"];
const PLAIN_OBJECTS: [&str; 8] = [
    "a better future",
    "our children",
    "working together",
    "common sense",
    "the truth",
    "good jobs",
    "this great country",
    "real leadership",
];
const CLAIM_SUBJECTS: [&str; 8] = [
    "Unemployment",
    "The deficit",
    "Violent crime",
    "Health insurance premiums",
    "Exports to China",
    "Manufacturing in Ohio",
    "The Clinton Foundation budget",
    "Spending in Washington",
];
const CLAIM_VERBS: [&str; 4] = ["went up by", "fell by", "grew by", "dropped by"];
const ORGS: [&str; 4] = ["The Clinton Foundation", "The Pentagon", "Congress", "The Federal Reserve"];
const PLACES: [&str; 4] = ["Iran", "Mexico", "Texas", "Syria"];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

/// A sentence whose wording correlates with the label: claims carry
/// numbers, years and named entities; other sentences mostly do not.
pub fn synth_sentence(rng: &mut ChaCha8Rng, checkworthy: bool) -> String {
    if checkworthy {
        if rng.random_bool(0.5) {
            format!(
                "{} {} {} percent since {}.",
                pick(rng, &CLAIM_SUBJECTS),
                pick(rng, &CLAIM_VERBS),
                rng.random_range(2..60),
                rng.random_range(1990..2016)
            )
        } else {
            format!(
                "{} sent {}.{} million dollars to {}.",
                pick(rng, &ORGS),
                rng.random_range(1..90),
                rng.random_range(0..10),
                pick(rng, &PLACES)
            )
        }
    } else if rng.random_bool(0.1) {
        format!("I have said this {} times.", rng.random_range(2..20))
    } else {
        format!("{} {} {}.", pick(rng, &OPENERS), pick(rng, &PLAIN_VERBS), pick(rng, &PLAIN_OBJECTS))
    }
}

/// Splits `n` events: 60/20/20 train/dev/test with at least one dev and
/// one test event once there are three or more events.
pub fn split_for_index(i: usize, n: usize) -> Split {
    if n < 3 {
        return Split::Train;
    }
    let n_dev = ((n as f64 * 0.2).round() as usize).max(1);
    let n_test = ((n as f64 * 0.2).round() as usize).max(1);
    let n_train = n - n_dev - n_test;
    if i < n_train {
        Split::Train
    } else if i < n_train + n_dev {
        Split::Dev
    } else {
        Split::Test
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub n_events: usize,
    pub n_sentences_per_event: usize,
    pub positive_rate: f64,
    pub seed: u64,
    pub with_audio: bool,
}

/// One recording per event plus the segment map into it.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureAudio {
    pub recordings: Vec<(String, Waveform)>,
    pub segments: Vec<SegmentRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub corpus: Corpus,
    pub audio: Option<FixtureAudio>,
}

/// Tone frequency for a segment: the label is audible.
pub fn tone_hz(label: u8) -> f64 {
    if label == 1 {
        440.0
    } else {
        220.0
    }
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    if !(0.0..=1.0).contains(&spec.positive_rate) {
        return Err(Error::Config(format!("positive_rate {} outside [0, 1]", spec.positive_rate)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut events = Vec::with_capacity(spec.n_events);
    for e in 0..spec.n_events {
        let event_id = format!("ev{:03}", e + 1);
        let utterances = (0..spec.n_sentences_per_event)
            .map(|s| {
                let label = u8::from(rng.random_bool(spec.positive_rate));
                Utterance {
                    event_id: event_id.clone(),
                    line_no: s as u32 + 1,
                    speaker: SPEAKERS[(s + e) % SPEAKERS.len()].to_string(),
                    text: synth_sentence(&mut rng, label == 1),
                    label,
                }
            })
            .collect();
        events.push(Event {
            event_id,
            split: split_for_index(e, spec.n_events),
            utterances,
        });
    }
    let corpus = Corpus::new(events)?;
    let audio = spec.with_audio.then(|| synth_audio(&corpus, &mut rng));
    Ok(Fixture { corpus, audio })
}

fn synth_audio(corpus: &Corpus, rng: &mut ChaCha8Rng) -> FixtureAudio {
    let sr = TARGET_SAMPLE_RATE;
    let noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let gap_ms = 200u64;
    let mut recordings = Vec::new();
    let mut segments = Vec::new();
    for ev in &corpus.events {
        let mut samples = Vec::new();
        let mut cursor_ms = gap_ms;
        let mut spans = Vec::new();
        for u in &ev.utterances {
            let dur = rng.random_range(600..1600u64);
            spans.push((u, cursor_ms, cursor_ms + dur));
            cursor_ms += dur + gap_ms;
        }
        let total = (cursor_ms as usize * sr as usize) / 1000;
        samples.resize(total, 0.0);
        for &(u, start, end) in &spans {
            let a = (start as usize * sr as usize) / 1000;
            let b = (end as usize * sr as usize) / 1000;
            let f = tone_hz(u.label);
            for (i, s) in samples[a..b].iter_mut().enumerate() {
                *s = 0.3 * (2.0 * PI * f * i as f64 / sr as f64).sin();
            }
        }
        for s in samples.iter_mut() {
            *s = (*s + noise.sample(rng)).clamp(-1.0, 1.0);
        }
        let file = format!("audio/{}.wav", ev.event_id);
        for &(u, start, end) in &spans {
            segments.push(SegmentRef {
                event_id: ev.event_id.clone(),
                line_no: u.line_no,
                audio_path: PathBuf::from(&file),
                start_ms: start,
                end_ms: end,
            });
        }
        recordings.push((file, Waveform { samples, sample_rate: sr }));
    }
    FixtureAudio { recordings, segments }
}

/// Writes the corpus, and when present the recordings and `segments.tsv`.
pub fn write_fixture(fixture: &Fixture, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    write_corpus(&fixture.corpus, dir)?;
    if let Some(audio) = &fixture.audio {
        let adir = dir.join("audio");
        fs::create_dir_all(&adir).map_err(|e| Error::io(&adir, e))?;
        for (file, w) in &audio.recordings {
            write_wav(dir.join(file), w)?;
        }
        let map = dir.join(SEGMENT_FILE);
        fs::write(&map, write_segment_map(&audio.segments, dir)).map_err(|e| Error::io(&map, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerQuota {
    pub name: String,
    pub n_sentences: usize,
    pub n_checkworthy: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitQuota {
    pub split: Split,
    pub n_events: usize,
    pub n_sentences: usize,
    pub n_checkworthy: usize,
    pub speaker: Option<SpeakerQuota>,
}

/// Split sizes of the multimodal debate corpus, with the single-speaker
/// (TRUMP) subset embedded as a speaker quota.
pub fn debate_quotas() -> Vec<SplitQuota> {
    let q = |split, n_events, n_sentences, n_checkworthy, sp: usize, sp_pos: usize| SplitQuota {
        split,
        n_events,
        n_sentences,
        n_checkworthy,
        speaker: Some(SpeakerQuota {
            name: "TRUMP".into(),
            n_sentences: sp,
            n_checkworthy: sp_pos,
        }),
    };
    vec![
        q(Split::Train, 38, 28_715, 417, 8_191, 213),
        q(Split::Dev, 7, 1_896, 40, 1_650, 39),
        q(Split::Test, 8, 3_878, 291, 3_489, 278),
    ]
}

/// Builds a corpus with exactly the requested counts per split. Rows are
/// dealt to events in contiguous, near-equal chunks after a seeded shuffle
/// of row roles.
pub fn fixture_from_quotas(quotas: &[SplitQuota], seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut next_event = 1;
    for q in quotas {
        if q.n_checkworthy > q.n_sentences || q.n_events == 0 || q.n_events > q.n_sentences {
            return Err(Error::Config(format!("inconsistent quota for {}", q.split)));
        }
        // Roles: (is_named_speaker, label)
        let (sp_n, sp_pos, sp_name) = match &q.speaker {
            Some(s) => (s.n_sentences, s.n_checkworthy, Some(s.name.as_str())),
            None => (0, 0, None),
        };
        if sp_pos > sp_n || sp_n > q.n_sentences || sp_pos > q.n_checkworthy || sp_n - sp_pos > q.n_sentences - q.n_checkworthy {
            return Err(Error::Config(format!("inconsistent speaker quota for {}", q.split)));
        }
        let mut roles = Vec::with_capacity(q.n_sentences);
        roles.extend(std::iter::repeat_n((true, 1u8), sp_pos));
        roles.extend(std::iter::repeat_n((true, 0u8), sp_n - sp_pos));
        roles.extend(std::iter::repeat_n((false, 1u8), q.n_checkworthy - sp_pos));
        roles.extend(std::iter::repeat_n((false, 0u8), q.n_sentences - sp_n - (q.n_checkworthy - sp_pos)));
        roles.shuffle(&mut rng);

        let base = q.n_sentences / q.n_events;
        let extra = q.n_sentences % q.n_events;
        let mut offset = 0;
        for e in 0..q.n_events {
            let len = base + usize::from(e < extra);
            let event_id = format!("ev{next_event:03}");
            next_event += 1;
            let utterances = roles[offset..offset + len]
                .iter()
                .enumerate()
                .map(|(i, &(named, label))| {
                    let speaker = match (named, sp_name) {
                        (true, Some(name)) => name.to_string(),
                        _ => SPEAKERS[i % SPEAKERS.len()].to_string(),
                    };
                    Utterance {
                        event_id: event_id.clone(),
                        line_no: i as u32 + 1,
                        speaker,
                        text: synth_sentence(&mut rng, label == 1),
                        label,
                    }
                })
                .collect();
            offset += len;
            events.push(Event {
                event_id,
                split: q.split,
                utterances,
            });
        }
    }
    Corpus::new(events)
}

/// Which modality carries the evidence for a check-worthy row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cue {
    None,
    Text,
    Audio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplementarySpec {
    pub n_events: usize,
    pub sentences_per_event: usize,
    pub positive_rate: f64,
    pub text_dim: usize,
    /// Width of the audio channel that carries a noisy view of the text.
    pub lexical_dim: usize,
    /// Width of the audio channel independent of the text.
    pub prosody_dim: usize,
    /// Width of the shared latent content both modalities observe.
    pub content_dim: usize,
    /// Shift along the cue direction for rows carrying a cue.
    pub cue_strength: f64,
    /// Std of the noise on the lexical channel.
    pub audio_noise: f64,
    pub seed: u64,
}

impl Default for ComplementarySpec {
    fn default() -> Self {
        Self {
            n_events: 40,
            sentences_per_event: 60,
            positive_rate: 0.1,
            text_dim: 16,
            lexical_dim: 24,
            prosody_dim: 8,
            content_dim: 8,
            cue_strength: 2.5,
            audio_noise: 0.5,
            seed: 7,
        }
    }
}

impl ComplementarySpec {
    pub fn audio_dim(&self) -> usize {
        self.lexical_dim + self.prosody_dim
    }
}

#[derive(Debug, Clone)]
pub struct ComplementaryFixture {
    pub corpus: Corpus,
    pub text: FeatureMatrix,
    pub audio: FeatureMatrix,
    /// Cue per utterance, in corpus order.
    pub cues: Vec<Cue>,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    let v: Array1<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.dot(&v).sqrt();
    v / n
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

/// Paired text/audio features where the modalities are complementary.
///
/// Per utterance, with latent content `c ~ N(0, I)`:
///
/// ```text
/// text    = T c + N(0, I) + strength * [cue = Text] * u_t
/// audio   = lexical ++ prosody
/// lexical = A text + N(0, audio_noise^2 I)
/// prosody = N(0, I) + strength * [cue = Audio] * u_p
/// ```
///
/// Positives alternate between a text cue and an audio cue, so the text
/// resolves only half of them. The lexical channel repeats the text (cue
/// included) through a random map with added noise, the way speech carries
/// the words less cleanly than a transcript; the prosodic channel holds the
/// other half of the evidence and nothing about the text.
pub fn complementary_fixture(spec: &ComplementarySpec) -> Result<ComplementaryFixture> {
    if !(0.0..=1.0).contains(&spec.positive_rate) {
        return Err(Error::Config(format!("positive_rate {} outside [0, 1]", spec.positive_rate)));
    }
    if spec.text_dim == 0 || spec.prosody_dim == 0 || spec.content_dim == 0 {
        return Err(Error::Config("fixture widths must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mix_text = gaussian_matrix(&mut rng, spec.text_dim, spec.content_dim, 1.0 / (spec.content_dim as f64).sqrt());
    let mix_audio = gaussian_matrix(&mut rng, spec.lexical_dim, spec.text_dim, 1.0 / (spec.text_dim as f64).sqrt());
    let text_dir = random_unit(&mut rng, spec.text_dim);
    let prosody_dir = random_unit(&mut rng, spec.prosody_dim);
    let audio_noise = Normal::new(0.0, spec.audio_noise).map_err(|e| Error::Config(e.to_string()))?;

    let mut events = Vec::new();
    let mut text_rows = Vec::new();
    let mut audio_rows = Vec::new();
    let mut cues = Vec::new();
    let mut next_cue = Cue::Text;
    for e in 0..spec.n_events {
        let event_id = format!("ev{:03}", e + 1);
        let mut utterances = Vec::new();
        for s in 0..spec.sentences_per_event {
            let label = u8::from(rng.random_bool(spec.positive_rate));
            let cue = if label == 1 {
                let c = next_cue;
                next_cue = if c == Cue::Text { Cue::Audio } else { Cue::Text };
                c
            } else {
                Cue::None
            };
            let content: Array1<f64> = (0..spec.content_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut text = mix_text.dot(&content);
            for t in text.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *t += z;
            }
            if cue == Cue::Text {
                text.scaled_add(spec.cue_strength, &text_dir);
            }
            let mut audio = mix_audio.dot(&text).to_vec();
            for a in audio.iter_mut() {
                *a += audio_noise.sample(&mut rng);
            }
            let mut prosody: Array1<f64> = (0..spec.prosody_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if cue == Cue::Audio {
                prosody.scaled_add(spec.cue_strength, &prosody_dir);
            }
            audio.extend(prosody.iter());
            let u = Utterance {
                event_id: event_id.clone(),
                line_no: s as u32 + 1,
                speaker: SPEAKERS[s % SPEAKERS.len()].to_string(),
                text: synth_sentence(&mut rng, label == 1),
                label,
            };
            text_rows.push((u.key(), text.to_vec()));
            audio_rows.push((u.key(), audio));
            cues.push(cue);
            utterances.push(u);
        }
        events.push(Event {
            event_id,
            split: split_for_index(e, spec.n_events),
            utterances,
        });
    }
    Ok(ComplementaryFixture {
        corpus: Corpus::new(events)?,
        text: FeatureMatrix::from_rows(text_rows)?,
        audio: FeatureMatrix::from_rows(audio_rows)?,
        cues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{compute_stats, filter_speaker, write_transcript};

    fn spec(rate: f64) -> FixtureSpec {
        FixtureSpec {
            n_events: 2,
            n_sentences_per_event: 10,
            positive_rate: rate,
            seed: 7,
            with_audio: false,
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_fixture(&spec(0.2)).unwrap();
        let b = generate_fixture(&spec(0.2)).unwrap();
        let bytes = |f: &Fixture| f.corpus.events.iter().map(write_transcript).collect::<String>();
        assert_eq!(bytes(&a), bytes(&b));
    }

    #[test]
    fn boundary_rates() {
        let none = generate_fixture(&spec(0.0)).unwrap();
        assert_eq!(compute_stats(&none.corpus).all.n_checkworthy, 0);
        let all = generate_fixture(&spec(1.0)).unwrap();
        assert_eq!(compute_stats(&all.corpus).all.n_checkworthy, 20);
        assert!(generate_fixture(&spec(1.5)).is_err());
    }

    #[test]
    fn sentences_never_contain_tabs() {
        let f = generate_fixture(&FixtureSpec {
            n_events: 5,
            n_sentences_per_event: 50,
            positive_rate: 0.3,
            seed: 1,
            with_audio: false,
        })
        .unwrap();
        assert!(f.corpus.utterances().all(|u| !u.text.contains('\t') && !u.text.contains('\n')));
    }

    #[test]
    fn audio_segments_cover_every_utterance() {
        let f = generate_fixture(&FixtureSpec {
            with_audio: true,
            ..spec(0.5)
        })
        .unwrap();
        let audio = f.audio.unwrap();
        assert_eq!(audio.segments.len(), 20);
        assert_eq!(audio.recordings.len(), 2);
        for (_, w) in &audio.recordings {
            assert!(w.peak() <= 1.0);
        }
    }

    #[test]
    fn quota_fixture_matches_counts() {
        let corpus = fixture_from_quotas(&debate_quotas(), 3).unwrap();
        let stats = compute_stats(&corpus);
        assert_eq!(stats.all.n_sentences, 34_489);
        assert_eq!(stats.all.n_checkworthy, 748);
        assert_eq!(stats.all.n_events, 53);
        assert_eq!(stats.split(Split::Train).n_sentences, 28_715);
        assert_eq!(stats.split(Split::Train).n_checkworthy, 417);

        let trump = compute_stats(&filter_speaker(&corpus, "TRUMP"));
        assert_eq!(trump.split(Split::Train).n_sentences, 8_191);
        assert_eq!(trump.split(Split::Train).n_checkworthy, 213);
        assert_eq!(trump.split(Split::Dev).n_sentences, 1_650);
        assert_eq!(trump.split(Split::Test).n_checkworthy, 278);
        assert_eq!(trump.all.n_sentences, 13_330);
        assert_eq!(trump.all.n_checkworthy, 530);
    }

    #[test]
    fn complementary_cues_split_positives_in_half() {
        let f = complementary_fixture(&ComplementarySpec::default()).unwrap();
        let n_text = f.cues.iter().filter(|c| **c == Cue::Text).count();
        let n_audio = f.cues.iter().filter(|c| **c == Cue::Audio).count();
        let n_pos = compute_stats(&f.corpus).all.n_checkworthy;
        assert_eq!(n_text + n_audio, n_pos);
        assert!(n_text.abs_diff(n_audio) <= 1);
        assert_eq!(f.text.len(), 2400);
        assert_eq!(f.audio.dim(), 32);
    }
}
