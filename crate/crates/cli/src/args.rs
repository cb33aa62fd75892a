use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};

use claimrank::audio::{MfccConfig, NoiseGateConfig};
use claimrank::nn::TrainConfig;

/// Check-worthiness ranking over debate transcripts with aligned audio.
#[derive(Debug, Parser)]
#[command(name = "claimrank", version)]
pub struct Cli {
    /// `key = value` config file with optional `[subcommand]` sections; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Provenance log to append to [default: run.log next to the first output]
    #[arg(long, global = true, value_name = "FILE")]
    pub run_log: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cmd {
    /// Validate a corpus directory and write a normalized copy.
    Ingest(IngestArgs),
    /// Per-split event, sentence and check-worthy counts.
    Stats(StatsArgs),
    /// Build a training-set variant (original, xK upsampling, 1to1).
    Variant(VariantArgs),
    /// Keep only one speaker's sentences.
    FilterSpeaker(FilterSpeakerArgs),
    /// Spectral-gating noise reduction, one output file per segment.
    Denoise(DenoiseArgs),
    /// Cut segments out of recordings (head kept, 16 kHz output).
    Segment(SegmentArgs),
    /// Extract a feature CSV (named entities, TF.IDF or pooled MFCC).
    Features(FeaturesArgs),
    /// Train a feed-forward classifier with dev-MAP checkpoint selection.
    Train(TrainCmdArgs),
    /// Train an audio student aligned to a frozen text teacher.
    Align(AlignArgs),
    /// Train an early or late fusion head over two frozen base models.
    Fuse(FuseArgs),
    /// Score every utterance of a split with a checkpoint.
    Predict(PredictArgs),
    /// Compute MAP of a predictions file and write a report.
    Eval(EvalArgs),
    /// Rank evaluation reports by MAP.
    Report(ReportArgs),
    /// Write a synthetic corpus.
    Fixture(FixtureArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// ingest, variant, features, train, predict and eval in one run.
    Pipeline(PipelineArgs),
}

/// Hidden layer widths: `8`, `256,64`, or `none`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims(pub Vec<usize>);

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Dims(Vec::new()));
        }
        s.split(',')
            .map(|p| match p.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(format!("bad layer width {p:?}")),
            })
            .collect::<Result<_, _>>()
            .map(Dims)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl Serialize for Dims {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 15)]
    pub epochs: usize,
    /// Fraction of steps spent in linear warmup.
    #[arg(long, default_value_t = 0.1)]
    pub warmup: f64,
    #[arg(long, default_value_t = 0.02)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ScheduleArgs {
    pub fn config(&self, learning_rate: f64) -> TrainConfig {
        TrainConfig {
            learning_rate,
            epochs: self.epochs,
            warmup_proportion: self.warmup,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Peak learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        self.schedule.config(self.lr)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GateArgs {
    #[arg(long, default_value_t = 1024)]
    pub gate_n_fft: usize,
    #[arg(long, default_value_t = 256)]
    pub gate_hop: usize,
    /// Threshold = mean + this many standard deviations, per frequency bin.
    #[arg(long, default_value_t = 1.5)]
    pub gate_n_std: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gate_prop_decrease: f64,
    #[arg(long, default_value_t = 2)]
    pub gate_freq_smooth: usize,
    #[arg(long, default_value_t = 4)]
    pub gate_time_smooth: usize,
}

impl GateArgs {
    pub fn config(&self) -> NoiseGateConfig {
        NoiseGateConfig {
            n_fft: self.gate_n_fft,
            hop: self.gate_hop,
            n_std_thresh: self.gate_n_std,
            prop_decrease: self.gate_prop_decrease,
            freq_smooth_bins: self.gate_freq_smooth,
            time_smooth_frames: self.gate_time_smooth,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MfccArgs {
    #[arg(long, default_value_t = 25.0)]
    pub win_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    pub hop_ms: f64,
    #[arg(long, default_value_t = 26)]
    pub n_mels: usize,
    #[arg(long, default_value_t = 13)]
    pub n_coeffs: usize,
    #[arg(long, default_value_t = 0.97)]
    pub preemphasis: f64,
}

impl MfccArgs {
    pub fn config(&self) -> MfccConfig {
        MfccConfig {
            win_ms: self.win_ms,
            hop_ms: self.hop_ms,
            n_mels: self.n_mels,
            n_coeffs: self.n_coeffs,
            preemphasis: self.preemphasis,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Segment map to validate and copy [default: <corpus>/segments.tsv if present]
    #[arg(long)]
    pub segments: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VariantArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// original, xK (K extra copies of each positive) or 1to1.
    #[arg(long, default_value = "original")]
    pub kind: String,
    /// Seed for 1to1 undersampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output rows [default: <corpus>/train<suffix>.tsv, e.g. train.x15.tsv]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FilterSpeakerArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub speaker: String,
    /// Output corpus directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SegmentArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// [default: <corpus>/segments.tsv]
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Output directory for segment WAVs and their segments.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8.0)]
    pub max_seconds: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// [default: <corpus>/segments.tsv]
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Output directory [default: the segment map's directory]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 8.0)]
    pub max_seconds: f64,
    #[command(flatten)]
    pub gate: GateArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Ne,
    Tfidf,
    Mfcc,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub kind: FeatureKind,
    /// Feature CSV covering every utterance.
    #[arg(long)]
    pub out: PathBuf,
    /// ne: precomputed entity counts; without it a rule-based tagger is used.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// tfidf: minimum document frequency over the training split.
    #[arg(long, default_value_t = 1)]
    pub min_df: usize,
    /// tfidf: do not lowercase tokens.
    #[arg(long)]
    pub keep_case: bool,
    /// tfidf: where to save the fitted model [default: <out>.tfidf]
    #[arg(long)]
    pub tfidf_dir: Option<PathBuf>,
    /// mfcc: [default: <corpus>/segments.tsv]
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// mfcc: keep at most this much of each segment.
    #[arg(long, default_value_t = 8.0)]
    pub max_seconds: f64,
    #[command(flatten)]
    pub mfcc: MfccArgs,
    /// mfcc: denoise each segment before extraction.
    #[arg(long)]
    pub denoise: bool,
    #[command(flatten)]
    pub gate: GateArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Two-logit softmax head, cross-entropy.
    Ce,
    /// One-score linear-margin head, hinge loss.
    Hinge,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainCmdArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Training rows from `variant` [default: the corpus train split]
    #[arg(long)]
    pub variant: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "8")]
    pub hidden: Dims,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, value_enum, default_value_t = LossKind::Ce)]
    pub loss: LossKind,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AlignArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Trained text classifier.
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long)]
    pub text_features: PathBuf,
    #[arg(long)]
    pub audio_features: PathBuf,
    /// Training rows from `variant` [default: the corpus train split]
    #[arg(long)]
    pub variant: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Student hidden widths; the last must equal the teacher's [default: the teacher's]
    #[arg(long)]
    pub hidden: Option<Dims>,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// Weight of the alignment MSE; 1 - lambda weighs cross-entropy.
    #[arg(long, default_value_t = 0.75)]
    pub lambda: f64,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FuseArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// early-large, late-small, early-aligned or late-aligned.
    #[arg(long)]
    pub preset: String,
    #[arg(long)]
    pub text_model: PathBuf,
    #[arg(long)]
    pub text_features: PathBuf,
    #[arg(long)]
    pub audio_model: PathBuf,
    #[arg(long)]
    pub audio_features: PathBuf,
    /// Fusion head checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Fused feature CSV for every utterance [default: <out>.fused.csv]
    #[arg(long)]
    pub fused_out: Option<PathBuf>,
    /// Peak learning rate [default: the preset's]
    #[arg(long)]
    pub lr: Option<f64>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// [default: the predictions file stem]
    #[arg(long)]
    pub run_id: Option<String>,
    /// Recorded verbatim in the report.
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Report JSON [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Report files written by `eval`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureKind {
    /// Bernoulli labels, templated sentences, optional tone audio.
    Basic,
    /// Debate-sized splits with exact per-split quotas and a named speaker.
    Debate,
    /// Paired text/audio feature CSVs where each modality sees half the positives.
    Complementary,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FixtureArgs {
    #[arg(long, value_enum, default_value_t = FixtureKind::Basic)]
    pub kind: FixtureKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// [default: 10 basic, 40 complementary]
    #[arg(long)]
    pub events: Option<usize>,
    /// Sentences per event [default: 50 basic, 60 complementary]
    #[arg(long)]
    pub sentences: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub positive_rate: f64,
    /// basic: also write one tone recording per event and a segment map.
    #[arg(long)]
    pub audio: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TextFeature {
    Ne,
    Tfidf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for every intermediate artifact.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "original")]
    pub variant: String,
    #[arg(long, value_enum, default_value_t = TextFeature::Ne)]
    pub features: TextFeature,
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    #[arg(long, default_value = "8")]
    pub hidden: Dims,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, value_enum, default_value_t = LossKind::Ce)]
    pub loss: LossKind,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value = "pipeline")]
    pub run_id: String,
    #[command(flatten)]
    pub train: TrainArgs,
}
