use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use claimrank::align::{extract_teacher_reps, train_aligned_student, AlignedSet, TeacherBundle};
use claimrank::audio::{cut_segment, read_wav, resample, segment_features, spectral_gate_denoise, write_wav, Waveform};
use claimrank::audio::TARGET_SAMPLE_RATE;
use claimrank::corpus::fixture::{
    complementary_fixture, debate_quotas, fixture_from_quotas, generate_fixture, write_fixture, ComplementarySpec,
    FixtureSpec,
};
use claimrank::corpus::{
    compute_stats, filter_speaker, load_corpus, load_segment_map, write_corpus, write_segment_map, Corpus, SegmentRef,
    Split, Utterance, SEGMENT_FILE,
};
use claimrank::eval::{compare_runs, load_predictions, load_report, map_over_events, write_predictions, write_report, Prediction};
use claimrank::features::FeatureMatrix;
use claimrank::fusion::{fused_features, predict_fused, preset, train_fusion_head, BaseModel, FusionMode};
use claimrank::nn::{gradcheck_suite, predict_scores, train_classifier, Checkpoint, DevSet, MlpSpec, TrainSet};
use claimrank::sampling::{load_variant, make_variant, write_variant, LabelCounts, VariantKind, VariantSpec};
use claimrank::textfeat::{
    fit_tfidf, load_sidecar, ne_feature_matrix, tfidf_feature_matrix, tokenize_with, EntityTagger, RegexTagger,
    TfidfConfig,
};
use claimrank::{Error, Result};

use crate::args::*;
use crate::runlog::Record;

fn write(path: &Path, content: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn split_rows(corpus: &Corpus, split: Split) -> Vec<Utterance> {
    corpus.utterances_in(split).cloned().collect()
}

fn train_rows(corpus: &Corpus, variant: Option<&Path>) -> Result<Vec<Utterance>> {
    match variant {
        Some(p) => load_variant(p),
        None => Ok(split_rows(corpus, Split::Train)),
    }
}

fn segments_path(corpus: &Path, given: Option<&PathBuf>) -> PathBuf {
    given.cloned().unwrap_or_else(|| corpus.join(SEGMENT_FILE))
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn ingest(a: &IngestArgs) -> Result<Record> {
    let corpus = load_corpus(&a.corpus)?;
    write_corpus(&corpus, &a.out)?;
    let mut rec = Record::default().input(&a.corpus).output(&a.out);
    let seg = a.segments.clone().or_else(|| {
        let p = a.corpus.join(SEGMENT_FILE);
        p.exists().then_some(p)
    });
    if let Some(seg) = seg {
        let segments = load_segment_map(&seg, &corpus)?;
        let out = a.out.join(SEGMENT_FILE);
        // Audio stays where it is; paths become absolute so the copy resolves.
        let absolute: Vec<SegmentRef> = segments
            .into_iter()
            .map(|s| SegmentRef {
                audio_path: fs::canonicalize(&s.audio_path).unwrap_or(s.audio_path.clone()),
                ..s
            })
            .collect();
        write(&out, write_segment_map(&absolute, &a.out))?;
        rec = rec.input(seg);
    }
    eprint!("{}", compute_stats(&corpus).to_table());
    Ok(rec)
}

pub fn stats(a: &StatsArgs) -> Result<Record> {
    let table = compute_stats(&load_corpus(&a.corpus)?).to_table();
    let rec = Record::default().input(&a.corpus);
    match &a.out {
        Some(out) => {
            write(out, &table)?;
            Ok(rec.output(out))
        }
        None => {
            print!("{table}");
            Ok(rec)
        }
    }
}

pub fn variant(a: &VariantArgs) -> Result<Record> {
    let kind: VariantKind = a.kind.parse()?;
    let corpus = load_corpus(&a.corpus)?;
    let rows = make_variant(&split_rows(&corpus, Split::Train), &VariantSpec { kind, seed: a.seed })?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.corpus.join(format!("train{}.tsv", kind.suffix())));
    write(&out, write_variant(&rows))?;
    let c = LabelCounts::of(&rows);
    eprintln!(
        "{kind}: {} positives, {} negatives ({:.2}% positive)",
        c.positives,
        c.negatives,
        100.0 * c.positive_fraction()
    );
    Ok(Record::default().input(&a.corpus).output(out).seed(a.seed))
}

pub fn filter_speaker_cmd(a: &FilterSpeakerArgs) -> Result<Record> {
    let corpus = filter_speaker(&load_corpus(&a.corpus)?, &a.speaker);
    if corpus.is_empty() {
        return Err(Error::Validation(format!("no sentences by speaker {:?}", a.speaker)));
    }
    write_corpus(&corpus, &a.out)?;
    eprint!("{}", compute_stats(&corpus).to_table());
    Ok(Record::default().input(&a.corpus).output(&a.out))
}

/// Every distinct recording in `segments`, decoded once.
type Recordings = HashMap<PathBuf, Arc<Waveform>>;

fn load_recordings(segments: &[SegmentRef]) -> Result<Recordings> {
    let mut paths: Vec<&PathBuf> = segments.iter().map(|s| &s.audio_path).collect();
    paths.sort();
    paths.dedup();
    paths
        .into_par_iter()
        .map(|p| Ok((p.clone(), Arc::new(read_wav(p)?))))
        .collect()
}

fn sorted_segments(corpus_dir: &Path, map: &Path) -> Result<(Vec<SegmentRef>, Recordings)> {
    let corpus = load_corpus(corpus_dir)?;
    let mut segments = load_segment_map(map, &corpus)?;
    segments.sort_by_key(|s| s.key());
    let recordings = load_recordings(&segments)?;
    Ok((segments, recordings))
}

fn segment_file(seg: &SegmentRef, suffix: &str) -> String {
    format!("{}_{}{suffix}", seg.event_id, seg.line_no)
}

/// Segment map written by `denoise`, so it can share a directory with the
/// map it was made from.
pub const DENOISED_MAP: &str = "segments.denoised.tsv";

/// Writes one WAV per segment via `f` plus a segment map pointing at them.
fn rewrite_segments<F>(a_corpus: &Path, map: &Path, out: &Path, suffix: &str, map_name: &str, f: F) -> Result<Record>
where
    F: Fn(&Waveform, &SegmentRef) -> Result<Waveform> + Sync,
{
    let (segments, recordings) = sorted_segments(a_corpus, map)?;
    mkdir(out)?;
    let written: Vec<SegmentRef> = segments
        .par_iter()
        .map(|s| {
            let w = f(&recordings[&s.audio_path], s)?;
            let path = out.join(segment_file(s, suffix));
            write_wav(&path, &w)?;
            let ms = (w.len() as u128 * 1000 / w.sample_rate as u128) as u64;
            Ok(SegmentRef {
                audio_path: path,
                start_ms: 0,
                end_ms: ms.max(1),
                ..s.clone()
            })
        })
        .collect::<Result<_>>()?;
    let out_map = out.join(map_name);
    write(&out_map, write_segment_map(&written, out))?;
    Ok(Record::default().input(a_corpus).input(map).output(out_map))
}

pub fn segment(a: &SegmentArgs) -> Result<Record> {
    let map = segments_path(&a.corpus, a.segments.as_ref());
    rewrite_segments(&a.corpus, &map, &a.out, ".wav", SEGMENT_FILE, |rec, s| {
        resample(&cut_segment(rec, s, a.max_seconds)?, TARGET_SAMPLE_RATE)
    })
}

pub fn denoise(a: &DenoiseArgs) -> Result<Record> {
    let gate = a.gate.config();
    gate.validate()?;
    let map = segments_path(&a.corpus, a.segments.as_ref());
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| map.parent().map(Path::to_path_buf).unwrap_or_default());
    rewrite_segments(&a.corpus, &map, &out, ".denoised.wav", DENOISED_MAP, |rec, s| {
        spectral_gate_denoise(&cut_segment(rec, s, a.max_seconds)?, &gate)
    })
}

fn text_features(
    corpus: &Corpus,
    kind: FeatureKind,
    sidecar: Option<&Path>,
    tfidf: (TfidfConfig, &Path),
) -> Result<FeatureMatrix> {
    match kind {
        FeatureKind::Ne => {
            let tagger: Box<dyn EntityTagger> = match sidecar {
                Some(p) => Box::new(load_sidecar(p)?),
                None => Box::new(RegexTagger::new()),
            };
            ne_feature_matrix(corpus.utterances(), tagger.as_ref())
        }
        FeatureKind::Tfidf => {
            let (cfg, dir) = tfidf;
            let docs: Vec<Vec<String>> = corpus
                .utterances_in(Split::Train)
                .map(|u| tokenize_with(&u.text, cfg.lowercase))
                .collect();
            let model = fit_tfidf(&docs, cfg)?;
            model.save(dir)?;
            tfidf_feature_matrix(&model, corpus.utterances())
        }
        FeatureKind::Mfcc => unreachable!("audio features are handled separately"),
    }
}

pub fn features(a: &FeaturesArgs) -> Result<Record> {
    let mut rec = Record::default().input(&a.corpus);
    let fm = match a.kind {
        FeatureKind::Mfcc => {
            let map = segments_path(&a.corpus, a.segments.as_ref());
            let cfg = a.mfcc.config();
            let gate = a.denoise.then(|| a.gate.config());
            if let Some(g) = &gate {
                g.validate()?;
            }
            let (segments, recordings) = sorted_segments(&a.corpus, &map)?;
            let rows = segments
                .par_iter()
                .map(|s| {
                    let v = segment_features(&recordings[&s.audio_path], s, a.max_seconds, gate.as_ref(), &cfg)
                        .map_err(|e| Error::Validation(format!("segment {}: {e}", s.key())))?;
                    Ok((s.key(), v))
                })
                .collect::<Result<Vec<_>>>()?;
            rec = rec.input(map);
            FeatureMatrix::from_rows(rows)?
        }
        kind => {
            let corpus = load_corpus(&a.corpus)?;
            if let Some(s) = &a.sidecar {
                rec = rec.input(s);
            }
            let dir = a.tfidf_dir.clone().unwrap_or_else(|| with_suffix(&a.out, ".tfidf"));
            let cfg = TfidfConfig {
                lowercase: !a.keep_case,
                min_df: a.min_df,
            };
            let fm = text_features(&corpus, kind, a.sidecar.as_deref(), (cfg, &dir))?;
            if kind == FeatureKind::Tfidf {
                rec = rec.output(dir);
            }
            fm
        }
    };
    write(&a.out, fm.to_csv())?;
    eprintln!("{} rows x {} features", fm.len(), fm.dim());
    rec.outputs.insert(0, a.out.clone());
    Ok(rec)
}

fn report_checkpoint(ck: &Checkpoint) {
    eprintln!("selected epoch {} with dev MAP {:.4}", ck.epoch, ck.dev_map);
}

fn fit_classifier(
    corpus: &Corpus,
    feats: &FeatureMatrix,
    rows: &[Utterance],
    hidden: &Dims,
    dropout: f64,
    loss: LossKind,
    train: &TrainArgs,
) -> Result<Checkpoint> {
    let x = feats.gather(rows, "training features")?;
    let labels: Vec<u8> = rows.iter().map(|u| u.label).collect();
    let dev = split_rows(corpus, Split::Dev);
    let dx = feats.gather(&dev, "dev features")?;
    let n_classes = match loss {
        LossKind::Ce => 2,
        LossKind::Hinge => 1,
    };
    let spec = MlpSpec::new(feats.dim(), &hidden.0, n_classes, dropout);
    let ck = train_classifier(
        &TrainSet::new(&x, &labels),
        &DevSet {
            x: &dx,
            utterances: &dev,
        },
        &spec,
        &train.config(),
    )?;
    report_checkpoint(&ck);
    Ok(ck)
}

pub fn train(a: &TrainCmdArgs) -> Result<Record> {
    let corpus = load_corpus(&a.corpus)?;
    let feats = FeatureMatrix::load(&a.features)?;
    let rows = train_rows(&corpus, a.variant.as_deref())?;
    let ck = fit_classifier(&corpus, &feats, &rows, &a.hidden, a.dropout, a.loss, &a.train)?;
    ck.save(&a.out)?;
    let mut rec = Record::default().input(&a.corpus).input(&a.features);
    if let Some(v) = &a.variant {
        rec = rec.input(v);
    }
    Ok(rec.output(&a.out).seed(a.train.schedule.seed))
}

pub fn align(a: &AlignArgs) -> Result<Record> {
    let corpus = load_corpus(&a.corpus)?;
    let teacher = TeacherBundle::load(&a.teacher)?;
    let text = FeatureMatrix::load(&a.text_features)?;
    let audio = FeatureMatrix::load(&a.audio_features)?;
    let rows = train_rows(&corpus, a.variant.as_deref())?;
    let dev = split_rows(&corpus, Split::Dev);

    let x = audio.gather(&rows, "training audio features")?;
    let labels: Vec<u8> = rows.iter().map(|u| u.label).collect();
    let reps = extract_teacher_reps(&teacher, &text, &rows)?;
    let dx = audio.gather(&dev, "dev audio features")?;
    let hidden = a
        .hidden
        .clone()
        .unwrap_or_else(|| Dims(teacher.model().spec().hidden_dims.clone()));
    let spec = MlpSpec::new(audio.dim(), &hidden.0, teacher.model().spec().n_classes, a.dropout);
    let config = claimrank::nn::TrainConfig {
        lambda: a.lambda,
        ..a.train.config()
    };
    let ck = train_aligned_student(
        &AlignedSet {
            audio: &x,
            labels: &labels,
            teacher_reps: reps.data(),
        },
        &DevSet {
            x: &dx,
            utterances: &dev,
        },
        &teacher,
        &spec,
        &config,
    )?;
    report_checkpoint(&ck);
    ck.save(&a.out)?;
    let mut rec = Record::default()
        .input(&a.corpus)
        .input(&a.teacher)
        .input(&a.text_features)
        .input(&a.audio_features);
    if let Some(v) = &a.variant {
        rec = rec.input(v);
    }
    Ok(rec.output(&a.out).seed(a.train.schedule.seed))
}

pub fn fuse(a: &FuseArgs) -> Result<Record> {
    let p = preset(&a.preset)?;
    let corpus = load_corpus(&a.corpus)?;
    let text_ck = Checkpoint::load(&a.text_model)?;
    let audio_ck = Checkpoint::load(&a.audio_model)?;
    let text_fm = FeatureMatrix::load(&a.text_features)?;
    let audio_fm = FeatureMatrix::load(&a.audio_features)?;
    let mut spec = p.spec(a.schedule.config(p.learning_rate));
    if let Some(lr) = a.lr {
        spec.config.learning_rate = lr;
    }
    let bt = BaseModel {
        model: &text_ck.model,
        features: &text_fm,
    };
    let ba = BaseModel {
        model: &audio_ck.model,
        features: &audio_fm,
    };
    let all: Vec<Utterance> = corpus.utterances().cloned().collect();
    let fused = fused_features(spec.mode, bt, ba, &all)?;
    let (tr, dv) = (split_rows(&corpus, Split::Train), split_rows(&corpus, Split::Dev));
    let (td, ad) = match spec.mode {
        FusionMode::Early => (text_ck.spec().rep_dim(), audio_ck.spec().rep_dim()),
        FusionMode::Late => (1, 1),
    };
    let ck = train_fusion_head(&fused, &tr, &fused, &dv, &spec, td, ad)?;
    report_checkpoint(&ck);
    ck.save(&a.out)?;
    let fused_out = a.fused_out.clone().unwrap_or_else(|| with_suffix(&a.out, ".fused.csv"));
    write(&fused_out, fused.to_csv())?;
    Ok(Record::default()
        .input(&a.corpus)
        .input(&a.text_model)
        .input(&a.text_features)
        .input(&a.audio_model)
        .input(&a.audio_features)
        .output(&a.out)
        .output(fused_out)
        .seed(a.schedule.seed))
}

fn predict_split(corpus: &Corpus, ck: &Checkpoint, feats: &FeatureMatrix, split: Split) -> Result<Vec<Prediction>> {
    let rows = split_rows(corpus, split);
    if ck.extra.contains_key(claimrank::fusion::MODE_KEY) {
        return predict_fused(&ck.model, feats, &rows);
    }
    let x = feats.gather(&rows, "features")?;
    Ok(rows
        .iter()
        .zip(predict_scores(&ck.model, &x)?)
        .map(|(u, score)| Prediction {
            event_id: u.event_id.clone(),
            line_no: u.line_no,
            score,
        })
        .collect())
}

pub fn predict(a: &PredictArgs) -> Result<Record> {
    let split: Split = a.split.parse()?;
    let corpus = load_corpus(&a.corpus)?;
    let ck = Checkpoint::load(&a.model)?;
    let preds = predict_split(&corpus, &ck, &FeatureMatrix::load(&a.features)?, split)?;
    write(&a.out, write_predictions(&preds))?;
    Ok(Record::default()
        .input(&a.corpus)
        .input(&a.model)
        .input(&a.features)
        .output(&a.out))
}

pub fn eval(a: &EvalArgs) -> Result<Record> {
    let split: Split = a.split.parse()?;
    let corpus = load_corpus(&a.corpus)?;
    let preds = load_predictions(&a.predictions)?;
    let run_id = a.run_id.clone().unwrap_or_else(|| {
        a.predictions
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    });
    let mut report = map_over_events(&preds, &corpus, split, &run_id)?;
    report.checkpoint = a.checkpoint.clone();
    let text = write_report(&report);
    eprintln!(
        "{run_id}: MAP {:.4} over {} events ({} excluded)",
        report.map,
        report.per_event.len(),
        report.excluded_events.len()
    );
    let rec = Record::default().input(&a.corpus).input(&a.predictions);
    match &a.out {
        Some(out) => {
            write(out, text)?;
            Ok(rec.output(out))
        }
        None => {
            print!("{text}");
            Ok(rec)
        }
    }
}

pub fn report(a: &ReportArgs) -> Result<Record> {
    let reports = a.reports.iter().map(load_report).collect::<Result<Vec<_>>>()?;
    let table = compare_runs(&reports);
    let rec = Record {
        inputs: a.reports.clone(),
        ..Record::default()
    };
    match &a.out {
        Some(out) => {
            write(out, &table)?;
            Ok(rec.output(out))
        }
        None => {
            print!("{table}");
            Ok(rec)
        }
    }
}

pub fn fixture(a: &FixtureArgs) -> Result<Record> {
    match a.kind {
        FixtureKind::Basic => {
            let fx = generate_fixture(&FixtureSpec {
                n_events: a.events.unwrap_or(10),
                n_sentences_per_event: a.sentences.unwrap_or(50),
                positive_rate: a.positive_rate,
                seed: a.seed,
                with_audio: a.audio,
            })?;
            write_fixture(&fx, &a.out)?;
        }
        FixtureKind::Debate => {
            write_corpus(&fixture_from_quotas(&debate_quotas(), a.seed)?, &a.out)?;
        }
        FixtureKind::Complementary => {
            let d = ComplementarySpec::default();
            let fx = complementary_fixture(&ComplementarySpec {
                n_events: a.events.unwrap_or(d.n_events),
                sentences_per_event: a.sentences.unwrap_or(d.sentences_per_event),
                positive_rate: a.positive_rate,
                seed: a.seed,
                ..d
            })?;
            write_corpus(&fx.corpus, &a.out)?;
            write(&a.out.join("text.csv"), fx.text.to_csv())?;
            write(&a.out.join("audio.csv"), fx.audio.to_csv())?;
        }
    }
    Ok(Record::default().output(&a.out).seed(a.seed))
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<Record> {
    let cases = gradcheck_suite(a.seed)?;
    let mut table = String::from("case\tmax_rel_error\n");
    for c in &cases {
        table.push_str(&format!("{}\t{:.3e}\n", c.name, c.max_rel_error));
    }
    let worst = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let mut rec = Record::default().seed(a.seed);
    match &a.out {
        Some(out) => {
            write(out, &table)?;
            rec = rec.output(out);
        }
        None => print!("{table}"),
    }
    if worst.is_nan() || worst > a.tolerance {
        return Err(Error::Numerical(format!(
            "max relative gradient error {worst:.3e} exceeds {:.1e}",
            a.tolerance
        )));
    }
    eprintln!("{} cases, max relative error {worst:.3e}", cases.len());
    Ok(rec)
}

pub fn pipeline(a: &PipelineArgs) -> Result<Record> {
    let split: Split = a.split.parse()?;
    let kind: VariantKind = a.variant.parse()?;
    let out = &a.out;
    mkdir(out)?;

    let corpus = load_corpus(&a.corpus)?;
    let corpus_dir = out.join("corpus");
    write_corpus(&corpus, &corpus_dir)?;

    let rows = make_variant(
        &split_rows(&corpus, Split::Train),
        &VariantSpec {
            kind,
            seed: a.train.schedule.seed,
        },
    )?;
    let variant_path = out.join(format!("train{}.tsv", kind.suffix()));
    write(&variant_path, write_variant(&rows))?;

    let fkind = match a.features {
        TextFeature::Ne => FeatureKind::Ne,
        TextFeature::Tfidf => FeatureKind::Tfidf,
    };
    let feats = text_features(&corpus, fkind, a.sidecar.as_deref(), (TfidfConfig::default(), &out.join("tfidf")))?;
    let feats_path = out.join("features.csv");
    write(&feats_path, feats.to_csv())?;

    let ck = fit_classifier(&corpus, &feats, &rows, &a.hidden, a.dropout, a.loss, &a.train)?;
    let model_path = out.join("model.ckpt");
    ck.save(&model_path)?;

    let preds = predict_split(&corpus, &ck, &feats, split)?;
    let preds_path = out.join("predictions.tsv");
    write(&preds_path, write_predictions(&preds))?;

    let mut report = map_over_events(&preds, &corpus, split, &a.run_id)?;
    report.checkpoint = Some("model.ckpt".into());
    let report_path = out.join("report.json");
    write(&report_path, write_report(&report))?;
    eprintln!("{}: MAP {:.4} on {split}", a.run_id, report.map);

    let mut rec = Record::default().input(&a.corpus);
    if let Some(s) = &a.sidecar {
        rec = rec.input(s);
    }
    Ok(rec
        .output(out)
        .output(variant_path)
        .output(feats_path)
        .output(model_path)
        .output(preds_path)
        .output(report_path)
        .seed(a.train.schedule.seed))
}
