//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL ...` line
//! and fails when its criterion does. Run with `--nocapture` to see them:
//!
//! ```text
//! cargo test -p claimrank-cli --test acceptance -- --nocapture
//! ```

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use claimrank::align::{alignment_mse, extract_teacher_reps, fit_teacher, train_aligned_student, AlignedSet};
use claimrank::audio::{cut_segment, mfcc, spectral_gate_denoise, MfccConfig, NoiseGateConfig, Waveform};
use claimrank::corpus::fixture::{complementary_fixture, ComplementaryFixture, ComplementarySpec};
use claimrank::corpus::{Corpus, Event, SegmentRef, Split, Utterance};
use claimrank::eval::{average_precision, map_of_scores, map_over_events, Prediction};
use claimrank::features::FeatureMatrix;
use claimrank::fusion::{fused_features, predict_fused, preset, train_fusion_head, BaseModel};
use claimrank::nn::{
    composite_loss, fingerprint, gradcheck_model, gradcheck_suite, head_bytes, loss_and_grads, predict_scores,
    train_classifier, DevSet, Loss, Mlp, MlpSpec, TrainConfig, TrainSet,
};

fn report(n: &str, pass: bool, detail: &str, elapsed: Duration) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} | {detail} | {:.2}s", elapsed.as_secs_f64());
}

fn claimrank(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_claimrank"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn label_counts(path: &Path) -> (usize, usize) {
    let text = fs::read_to_string(path).unwrap();
    let pos = text.lines().filter(|l| l.ends_with("\t1")).count();
    (pos, text.lines().count() - pos)
}

#[test]
fn c1_sampling_exactness() {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    claimrank(d, &["fixture", "--kind", "debate", "--out", "deb"]);
    let mut notes = Vec::new();
    let mut pass = true;
    for (kind, want_pos, want_pct) in [("x15", 6_672, 19.1), ("x30", 12_927, 31.4), ("1to1", 417, 50.0)] {
        let out = format!("{kind}.tsv");
        claimrank(d, &["variant", "--corpus", "deb", "--kind", kind, "--out", &out]);
        let (pos, neg) = label_counts(&d.join(&out));
        let pct = 100.0 * pos as f64 / (pos + neg) as f64;
        let tol = if kind == "1to1" { 0.0 } else { 0.05 };
        let ok = pos == want_pos && (pct - want_pct).abs() <= tol + 1e-12 && (kind != "1to1" || neg == 417);
        pass &= ok;
        notes.push(format!("{kind} {pos}/{neg} ({pct:.2}%)"));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    report("1", pass, &notes.join(", "), elapsed);
    assert!(pass);
}

/// Brute-force AP: each positive's rank counted directly from the scores.
fn oracle_ap(rows: &[(u32, f64, u8)]) -> Option<f64> {
    let rank = |i: usize| {
        1 + rows
            .iter()
            .filter(|r| r.1 > rows[i].1 || (r.1 == rows[i].1 && r.0 < rows[i].0))
            .count()
    };
    let pos: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].2 == 1).collect();
    if pos.is_empty() {
        return None;
    }
    let sum: f64 = pos
        .iter()
        .map(|&i| {
            let r = rank(i);
            let hits = pos.iter().filter(|&&j| rank(j) <= r).count();
            hits as f64 / r as f64
        })
        .sum();
    Some(sum / pos.len() as f64)
}

#[test]
fn c2_map_oracle_equivalence() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for set in 0..1000 {
        let n_events = rng.random_range(1..=8);
        let mut events = Vec::new();
        let mut preds = Vec::new();
        let mut oracle = Vec::new();
        for e in 0..n_events {
            let id = format!("s{set}e{e}");
            let n = rng.random_range(1..=50);
            let mut utts = Vec::new();
            let mut rows = Vec::new();
            for line in 1..=n as u32 {
                let label = u8::from(rng.random_bool(0.3));
                // Coarse scores so ties are common.
                let score = rng.random_range(0..10) as f64 / 10.0;
                utts.push(Utterance {
                    event_id: id.clone(),
                    line_no: line,
                    speaker: "S".into(),
                    text: "x".into(),
                    label,
                });
                preds.push(Prediction {
                    event_id: id.clone(),
                    line_no: line,
                    score,
                });
                rows.push((line, score, label));
            }
            oracle.extend(oracle_ap(&rows));
            events.push(Event {
                event_id: id,
                split: Split::Test,
                utterances: utts,
            });
        }
        if oracle.is_empty() {
            continue;
        }
        let want = oracle.iter().sum::<f64>() / oracle.len() as f64;
        let got = map_over_events(&preds, &Corpus::new(events).unwrap(), Split::Test, "r").unwrap().map;
        worst = worst.max((got - want).abs());
        compared += 1;
    }
    let hand = average_precision(&[1, 0, 1, 0]) == Some(5.0 / 6.0) && average_precision(&[0, 0, 1]) == Some(1.0 / 3.0);
    let pass = worst <= 1e-12 && hand && compared > 900;
    report(
        "2",
        pass,
        &format!("{compared} sets, max |MAP - oracle| = {worst:.1e}, hand cases {}", if hand { "exact" } else { "wrong" }),
        t0.elapsed(),
    );
    assert!(pass);
}

#[test]
fn c3_gradient_correctness() {
    let t0 = Instant::now();
    let cases = gradcheck_suite(0).unwrap();
    let worst = cases.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    let covered = ["/ce", "/logit-mse", "/hinge", "/composite-0", "/composite-0.25", "/composite-0.75", "/composite-1"]
        .iter()
        .all(|suffix| cases.iter().any(|c| c.name.ends_with(suffix)));
    let elapsed = t0.elapsed();
    let pass = worst.max_rel_error <= 1e-4 && covered && elapsed < Duration::from_secs(120);
    report(
        "3",
        pass,
        &format!("{} cases, worst {} at {:.2e}", cases.len(), worst.name, worst.max_rel_error),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn c4_composite_loss_identities() {
    let t0 = Instant::now();
    let (a, c) = (1.234_567, 0.765_432);
    let values = composite_loss(a, c, 1.0).unwrap() == a
        && composite_loss(a, c, 0.0).unwrap() == c
        && composite_loss(2.0, 4.0, 0.75).unwrap() == 2.5;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = MlpSpec::new(5, &[6, 4], 2, 0.0);
    let model = gradcheck_model(&spec, 9).unwrap();
    let x = Array2::from_shape_simple_fn((9, 5), || rng.sample(StandardNormal));
    let reps = Array2::from_shape_simple_fn((9, 4), || rng.sample(StandardNormal));
    let labels: Vec<u8> = (0..9).map(|i| u8::from(i % 2 == 0)).collect();
    let set = TrainSet::new(&x, &labels).with_targets(&reps);
    let (_, g_mix) = loss_and_grads(&model, Loss::Composite { lambda: 0.75 }, &set).unwrap();
    let (_, g_align) = loss_and_grads(&model, Loss::Composite { lambda: 1.0 }, &set).unwrap();
    let (_, g_ce) = loss_and_grads(&model, Loss::Composite { lambda: 0.0 }, &set).unwrap();
    let mut worst = 0.0f64;
    for ((m, al), ce) in g_mix.iter().zip(&g_align).zip(&g_ce) {
        for ((p, q), r) in m.w.iter().chain(m.b.iter()).zip(al.w.iter().chain(al.b.iter())).zip(ce.w.iter().chain(ce.b.iter())) {
            worst = worst.max((p - (0.75 * q + 0.25 * r)).abs());
        }
    }
    let pass = values && worst <= 1e-6;
    report(
        "4",
        pass,
        &format!("boundary/arithmetic identities {}, gradient decomposition error {worst:.1e}", if values { "exact" } else { "wrong" }),
        t0.elapsed(),
    );
    assert!(pass);
}

/// Learning rate for every model trained on the complementary fixture.
const FIXTURE_LR: f64 = 1e-2;
const SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Debug, Clone)]
struct SeedRun {
    text_map: f64,
    audio_map: f64,
    student0_map: f64,
    student_map: f64,
    mse0: f64,
    mse: f64,
    early_map: f64,
    late_map: f64,
    teacher_unchanged: bool,
    head_shared: bool,
}

struct Experiment {
    runs: Vec<SeedRun>,
    elapsed: Duration,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn rows(fx: &ComplementaryFixture, split: Split) -> Vec<Utterance> {
    fx.corpus.utterances_in(split).cloned().collect()
}

fn fused_map(
    name: &str,
    seed: u64,
    text: BaseModel,
    audio: BaseModel,
    splits: [&[Utterance]; 3],
    dims: (usize, usize),
) -> f64 {
    let [tr, dv, te] = splits;
    let spec = preset(name).unwrap().spec(TrainConfig {
        seed,
        ..TrainConfig::default()
    });
    let spec = claimrank::fusion::FusionSpec {
        config: TrainConfig {
            learning_rate: FIXTURE_LR,
            ..spec.config.clone()
        },
        ..spec
    };
    let f = |u: &[Utterance]| fused_features(spec.mode, text, audio, u).unwrap();
    let ck = train_fusion_head(&f(tr), tr, &f(dv), dv, &spec, dims.0, dims.1).unwrap();
    let p = predict_fused(&ck.model, &f(te), te).unwrap();
    map_of_scores(te, &p.iter().map(|p| p.score).collect::<Vec<_>>()).unwrap()
}

fn run_seed(fx: &ComplementaryFixture, seed: u64) -> SeedRun {
    let (tr, dv, te) = (rows(fx, Split::Train), rows(fx, Split::Dev), rows(fx, Split::Test));
    let labels: Vec<u8> = tr.iter().map(|u| u.label).collect();
    let g = |m: &FeatureMatrix, u: &[Utterance]| m.gather(u, "fixture").unwrap();
    let (ttr, tdv, tte) = (g(&fx.text, &tr), g(&fx.text, &dv), g(&fx.text, &te));
    let (atr, adv, ate) = (g(&fx.audio, &tr), g(&fx.audio, &dv), g(&fx.audio, &te));
    let cfg = TrainConfig {
        seed,
        learning_rate: FIXTURE_LR,
        ..TrainConfig::default()
    };
    let tdev = DevSet { x: &tdv, utterances: &dv };
    let adev = DevSet { x: &adv, utterances: &dv };
    let text_spec = MlpSpec::new(ttr.ncols(), &[32], 2, 0.1);
    let audio_spec = MlpSpec::new(atr.ncols(), &[64, 32], 2, 0.1);
    let map_of = |m: &Mlp, x: &Array2<f64>| map_of_scores(&te, &predict_scores(m, x).unwrap()).unwrap();

    let teacher = fit_teacher(&TrainSet::new(&ttr, &labels), &tdev, &text_spec, &cfg).unwrap();
    let fp_before = fingerprint(teacher.model());
    let audio = train_classifier(&TrainSet::new(&atr, &labels), &adev, &audio_spec, &cfg).unwrap();

    let reps_tr = extract_teacher_reps(&teacher, &fx.text, &tr).unwrap();
    let reps_dv = extract_teacher_reps(&teacher, &fx.text, &dv).unwrap();
    let student = |lambda: f64| {
        let set = AlignedSet {
            audio: &atr,
            labels: &labels,
            teacher_reps: reps_tr.data(),
        };
        train_aligned_student(&set, &adev, &teacher, &audio_spec, &TrainConfig { lambda, ..cfg.clone() }).unwrap()
    };
    let s0 = student(0.0);
    let s75 = student(0.75);

    let bt = BaseModel {
        model: teacher.model(),
        features: &fx.text,
    };
    let ba = BaseModel {
        model: &audio.model,
        features: &fx.audio,
    };
    let dims = (teacher.rep_dim(), audio.spec().rep_dim());
    let early = fused_map("early-large", seed, bt, ba, [&tr, &dv, &te], dims);
    let late = fused_map("late-small", seed, bt, ba, [&tr, &dv, &te], dims);

    SeedRun {
        text_map: map_of(teacher.model(), &tte),
        audio_map: map_of(&audio.model, &ate),
        student0_map: map_of(&s0.model, &ate),
        student_map: map_of(&s75.model, &ate),
        mse0: alignment_mse(&s0.model, reps_dv.data(), &adv).unwrap(),
        mse: alignment_mse(&s75.model, reps_dv.data(), &adv).unwrap(),
        early_map: early,
        late_map: late,
        teacher_unchanged: fingerprint(teacher.model()) == fp_before && teacher.verify().is_ok(),
        head_shared: head_bytes(&s75.model) == head_bytes(teacher.model())
            && head_bytes(&s0.model) == head_bytes(teacher.model()),
    }
}

fn experiment() -> &'static Experiment {
    static EXP: OnceLock<Experiment> = OnceLock::new();
    EXP.get_or_init(|| {
        let t0 = Instant::now();
        let fx = complementary_fixture(&ComplementarySpec::default()).unwrap();
        assert!(fx.corpus.utterances().count() >= 2_000);
        let runs = SEEDS.iter().map(|&s| run_seed(&fx, s)).collect();
        Experiment {
            runs,
            elapsed: t0.elapsed(),
        }
    })
}

fn per_seed(runs: &[SeedRun], f: impl Fn(&SeedRun) -> f64) -> String {
    runs.iter().map(|r| format!("{:.3}", f(r))).collect::<Vec<_>>().join("/")
}

#[test]
fn c5_alignment_efficacy() {
    let exp = experiment();
    let r = &exp.runs;
    let (mse, mse0) = (mean(r.iter().map(|x| x.mse)), mean(r.iter().map(|x| x.mse0)));
    let (student, audio, student0) = (
        mean(r.iter().map(|x| x.student_map)),
        mean(r.iter().map(|x| x.audio_map)),
        mean(r.iter().map(|x| x.student0_map)),
    );
    let a = mse <= 0.5 * mse0;
    let b = student >= audio;
    let pass = a && b && exp.elapsed < Duration::from_secs(300);
    report(
        "5",
        pass,
        &format!(
            "(a) dev MSE {mse:.3} vs {mse0:.3} at lambda 0, ratio {:.2} [{}]; (b) test MAP aligned {student:.4} [{}] vs unaligned audio {audio:.4} [{}] (lambda-0 student {student0:.4})",
            mse / mse0,
            if a { "ok" } else { "no" },
            per_seed(r, |x| x.student_map),
            per_seed(r, |x| x.audio_map),
        ),
        exp.elapsed,
    );
    assert!(pass);
}

#[test]
fn c6_fusion_efficacy() {
    let exp = experiment();
    let r = &exp.runs;
    let text = mean(r.iter().map(|x| x.text_map));
    let audio = mean(r.iter().map(|x| x.audio_map));
    let early = mean(r.iter().map(|x| x.early_map));
    let late = mean(r.iter().map(|x| x.late_map));
    let floor = text.max(audio) - 0.01;
    let pass = early >= floor && late >= floor && exp.elapsed < Duration::from_secs(300);
    report(
        "6",
        pass,
        &format!(
            "early {early:.4} [{}], late {late:.4} [{}], floor max(text {text:.4}, audio {audio:.4}) - 0.01 = {floor:.4}",
            per_seed(r, |x| x.early_map),
            per_seed(r, |x| x.late_map),
        ),
        exp.elapsed,
    );
    assert!(pass);
}

#[test]
fn c7_teacher_frozenness() {
    let exp = experiment();
    let frozen = exp.runs.iter().all(|r| r.teacher_unchanged);
    let shared = exp.runs.iter().all(|r| r.head_shared);

    // Also through the CLI: checkpoint file bytes survive align and fuse.
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    claimrank(d, &["fixture", "--kind", "complementary", "--out", "c", "--events", "10", "--sentences", "30"]);
    let common = ["--corpus", "c", "--epochs", "2"];
    let run = |args: &[&str]| {
        let mut v = args.to_vec();
        v.extend_from_slice(&common);
        claimrank(d, &v);
    };
    run(&["train", "--features", "c/text.csv", "--hidden", "16", "--out", "t.ckpt"]);
    run(&["train", "--features", "c/audio.csv", "--hidden", "16", "--out", "a.ckpt"]);
    let before = fs::read(d.join("t.ckpt")).unwrap();
    run(&["align", "--teacher", "t.ckpt", "--text-features", "c/text.csv", "--audio-features", "c/audio.csv", "--out", "s.ckpt"]);
    run(&[
        "fuse", "--preset", "late-small", "--text-model", "t.ckpt", "--text-features", "c/text.csv", "--audio-model", "s.ckpt",
        "--audio-features", "c/audio.csv", "--out", "f.ckpt",
    ]);
    let file_same = fs::read(d.join("t.ckpt")).unwrap() == before;
    let t = claimrank::nn::Checkpoint::load(d.join("t.ckpt")).unwrap();
    let s = claimrank::nn::Checkpoint::load(d.join("s.ckpt")).unwrap();
    let cli_head = head_bytes(&s.model) == head_bytes(&t.model);

    let pass = frozen && shared && file_same && cli_head;
    report(
        "7",
        pass,
        &format!(
            "fingerprint unchanged {frozen}, student head bytes equal teacher {shared}; CLI teacher file unchanged {file_same}, CLI head equal {cli_head}"
        ),
        exp.elapsed,
    );
    assert!(pass);
}

/// SNR of `x` against a known clean reference, by projecting onto it.
fn snr_db(x: &[f64], clean: &[f64]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let alpha = dot(x, clean) / dot(clean, clean);
    let signal: f64 = clean.iter().map(|c| (alpha * c).powi(2)).sum();
    let noise: f64 = x.iter().zip(clean).map(|(v, c)| (v - alpha * c).powi(2)).sum();
    10.0 * (signal / noise).log10()
}

#[test]
fn c8_audio_contracts() {
    let t0 = Instant::now();
    let sr = 16_000u32;

    let ten_s = Waveform::new(vec![0.1; 10 * sr as usize], sr).unwrap();
    let seg = SegmentRef {
        event_id: "e".into(),
        line_no: 1,
        audio_path: "e.wav".into(),
        start_ms: 0,
        end_ms: 10_000,
    };
    let cut = cut_segment(&ten_s, &seg, 8.0).unwrap().len();
    let truncation = cut == 128_000;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 2 * sr as usize;
    let amp = 0.25;
    let clean: Vec<f64> = (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin())
        .collect();
    // Noise power equals sine power (amp^2 / 2): 0 dB.
    let sigma = amp / 2f64.sqrt();
    let noisy: Vec<f64> = clean
        .iter()
        .map(|c| (c + sigma * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0))
        .collect();
    let out = spectral_gate_denoise(&Waveform::new(noisy.clone(), sr).unwrap(), &NoiseGateConfig::default()).unwrap();
    let (snr_in, snr_out) = (snr_db(&noisy, &clean), snr_db(&out.samples, &clean));
    let denoise = snr_out - snr_in >= 5.0;

    let one_s: Vec<f64> = (0..sr as usize).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).map(|v: f64| v.clamp(-1.0, 1.0)).collect();
    let cfg = MfccConfig::default();
    let m1 = mfcc(&Waveform::new(one_s.clone(), sr).unwrap(), &cfg).unwrap();
    let shape = m1.dim() == (98, 13);
    let m2 = mfcc(&Waveform::new(one_s.iter().map(|v| v * 2.0).collect(), sr).unwrap(), &cfg).unwrap();
    let diff = &m2 - &m1;
    let c0 = diff.column(0);
    let c0_const = c0.iter().all(|d| (d - c0[0]).abs() <= 1e-6) && c0[0].abs() > 0.1;
    let others = diff.columns().into_iter().skip(1).flat_map(|c| c.to_vec()).fold(0.0f64, |m, d| m.max(d.abs()));
    let scaling = c0_const && others <= 1e-6;

    let pass = truncation && denoise && shape && scaling;
    report(
        "8",
        pass,
        &format!(
            "truncation {cut} samples [{}]; denoise SNR {snr_in:.1} -> {snr_out:.1} dB ({:+.1} dB) [{}]; MFCC {}x{} [{}]; doubling shifts c0 by {:.4}, others by <= {others:.1e} [{}]",
            ok(truncation),
            snr_out - snr_in,
            ok(denoise),
            m1.nrows(),
            m1.ncols(),
            ok(shape),
            c0[0],
            ok(scaling),
        ),
        t0.elapsed(),
    );
    assert!(pass);
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "no"
    }
}

#[test]
fn c9_pipeline_determinism() {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    claimrank(d, &["fixture", "--out", "fx", "--events", "15", "--sentences", "40", "--seed", "9"]);
    for out in ["run1", "run2"] {
        claimrank(d, &["pipeline", "--corpus", "fx", "--out", out, "--variant", "x15", "--seed", "9"]);
    }
    let same = |f: &str| fs::read(d.join("run1").join(f)).unwrap() == fs::read(d.join("run2").join(f)).unwrap();
    let (preds, rep) = (same("predictions.tsv"), same("report.json"));
    let pass = preds && rep;
    report(
        "9",
        pass,
        &format!("predictions identical {preds}, report identical {rep}"),
        t0.elapsed(),
    );
    assert!(pass);
}
