use std::collections::HashMap;

use proptest::prelude::*;

use claimrank::audio::{read_wav, segment_features, MfccConfig};
use claimrank::corpus::fixture::{generate_fixture, write_fixture, FixtureSpec};
use claimrank::corpus::{load_corpus, load_segment_map, Split, Utterance, SEGMENT_FILE};
use claimrank::eval::map_of_scores;
use claimrank::features::FeatureMatrix;
use claimrank::nn::{predict_scores, train_classifier, Checkpoint, DevSet, MlpSpec, TrainConfig, TrainSet};
use claimrank::sampling::{make_variant, parse_variant, write_variant, VariantKind, VariantSpec};

fn spec(seed: u64, with_audio: bool) -> FixtureSpec {
    FixtureSpec {
        n_events: 12,
        n_sentences_per_event: 20,
        positive_rate: 0.25,
        seed,
        with_audio,
    }
}

/// Fixture on disk, MFCC features from the written WAVs, a trained model,
/// and a checkpoint round trip. The fixture's tones encode the label, so the
/// audio model must rank well above chance.
#[test]
fn audio_fixture_round_trip_trains_a_ranker() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(&generate_fixture(&spec(3, true)).unwrap(), dir.path()).unwrap();
    let corpus = load_corpus(dir.path()).unwrap();
    let segments = load_segment_map(dir.path().join(SEGMENT_FILE), &corpus).unwrap();
    assert_eq!(segments.len(), corpus.utterances().count());

    let mut recordings = HashMap::new();
    let cfg = MfccConfig::default();
    let rows = segments
        .iter()
        .map(|s| {
            let rec = recordings
                .entry(s.audio_path.clone())
                .or_insert_with(|| read_wav(&s.audio_path).unwrap());
            (s.key(), segment_features(rec, s, 8.0, None, &cfg).unwrap())
        })
        .collect();
    let fm = FeatureMatrix::from_rows(rows).unwrap();
    assert_eq!(fm.dim(), 2 * cfg.n_coeffs);

    let split = |s| corpus.utterances_in(s).cloned().collect::<Vec<Utterance>>();
    let (tr, dv, te) = (split(Split::Train), split(Split::Dev), split(Split::Test));
    let (xtr, xdv, xte) = (fm.gather(&tr, "mfcc").unwrap(), fm.gather(&dv, "mfcc").unwrap(), fm.gather(&te, "mfcc").unwrap());
    let labels: Vec<u8> = tr.iter().map(|u| u.label).collect();
    let config = TrainConfig {
        learning_rate: 1e-2,
        epochs: 10,
        ..TrainConfig::default()
    };
    let ck = train_classifier(
        &TrainSet::new(&xtr, &labels),
        &DevSet { x: &xdv, utterances: &dv },
        &MlpSpec::new(fm.dim(), &[16], 2, 0.0),
        &config,
    )
    .unwrap();
    let scores = predict_scores(&ck.model, &xte).unwrap();
    let map = map_of_scores(&te, &scores).unwrap();
    assert!(map > 0.9, "test MAP {map}");

    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.fingerprint(), ck.fingerprint());
    assert_eq!(predict_scores(&back.model, &xte).unwrap(), scores);
}

#[test]
fn transcripts_survive_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fx = generate_fixture(&spec(5, false)).unwrap();
    write_fixture(&fx, dir.path()).unwrap();
    assert_eq!(load_corpus(dir.path()).unwrap(), fx.corpus);
    assert!(!dir.path().join(SEGMENT_FILE).exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn variants_only_change_multiplicity(seed in 0u64..1000, k in 1usize..6) {
        let fx = generate_fixture(&spec(seed, false)).unwrap();
        let train: Vec<Utterance> = fx.corpus.utterances_in(Split::Train).cloned().collect();
        let pos = train.iter().filter(|u| u.label == 1).count();
        prop_assume!(pos > 0 && pos <= train.len() - pos);
        for kind in [VariantKind::Original, VariantKind::Upsample(k), VariantKind::Balanced] {
            let rows = make_variant(&train, &VariantSpec { kind, seed }).unwrap();
            prop_assert!(rows.iter().all(|r| train.contains(r)));
            let n_pos = rows.iter().filter(|u| u.label == 1).count();
            match kind {
                VariantKind::Original => prop_assert_eq!(&rows, &train),
                VariantKind::Upsample(k) => prop_assert_eq!(n_pos, pos * (k + 1)),
                VariantKind::Balanced => prop_assert_eq!(n_pos * 2, rows.len()),
            }
            let text = write_variant(&rows);
            prop_assert_eq!(parse_variant(&text, "v.tsv".as_ref()).unwrap(), rows);
        }
    }
}
