//! Combining a text model and an audio model. Early fusion concatenates the
//! two representations (optionally projecting each first); late fusion
//! stacks the two class-1 confidences. Either way a small feed-forward head
//! is trained on top while the base models stay frozen.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::eval::Prediction;
use crate::features::FeatureMatrix;
use crate::nn::{positive_scores, predict_scores, train_classifier, Checkpoint, Dense, DevSet, InputBlock, Mlp, MlpSpec, TrainConfig, TrainSet};

pub const MODE_KEY: &str = "fusion_mode";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Early,
    Late,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Early => "early",
            FusionMode::Late => "late",
        })
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "early" => Ok(FusionMode::Early),
            "late" => Ok(FusionMode::Late),
            other => Err(Error::Config(format!("unknown fusion mode {other:?} (early, late)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub mode: FusionMode,
    /// Early mode only: project the text representation to this width.
    pub text_projection: Option<usize>,
    /// Early mode only: project the audio representation to this width.
    pub audio_projection: Option<usize>,
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    pub config: TrainConfig,
}

/// Named fusion configurations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub mode: FusionMode,
    pub hidden: [usize; 2],
    pub dropout: f64,
    pub learning_rate: f64,
    pub audio_projection: Option<usize>,
}

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "early-large",
        mode: FusionMode::Early,
        hidden: [256, 64],
        dropout: 0.1,
        learning_rate: 1e-3,
        audio_projection: Some(256),
    },
    Preset {
        name: "late-small",
        mode: FusionMode::Late,
        hidden: [6, 6],
        dropout: 0.0,
        learning_rate: 1e-3,
        audio_projection: None,
    },
    Preset {
        name: "early-aligned",
        mode: FusionMode::Early,
        hidden: [512, 256],
        dropout: 0.4,
        learning_rate: 1e-4,
        audio_projection: None,
    },
    Preset {
        name: "late-aligned",
        mode: FusionMode::Late,
        hidden: [6, 6],
        dropout: 0.0,
        learning_rate: 1e-3,
        audio_projection: None,
    },
];

pub fn preset(name: &str) -> Result<Preset> {
    PRESETS.iter().copied().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::Config(format!("unknown fusion preset {name:?} ({})", names.join(", ")))
    })
}

impl Preset {
    pub fn spec(&self, config: TrainConfig) -> FusionSpec {
        FusionSpec {
            mode: self.mode,
            text_projection: None,
            audio_projection: self.audio_projection,
            hidden_dims: self.hidden.to_vec(),
            dropout: self.dropout,
            config: TrainConfig {
                learning_rate: self.learning_rate,
                ..config
            },
        }
    }
}

impl FusionSpec {
    /// Head architecture for base representations of the given widths.
    pub fn head_spec(&self, text_dim: usize, audio_dim: usize) -> Result<MlpSpec> {
        let spec = match self.mode {
            FusionMode::Late => {
                if self.text_projection.is_some() || self.audio_projection.is_some() {
                    return Err(Error::Config("projections only apply to early fusion".into()));
                }
                MlpSpec::new(2, &self.hidden_dims, 2, self.dropout)
            }
            FusionMode::Early => {
                let spec = MlpSpec::new(text_dim + audio_dim, &self.hidden_dims, 2, self.dropout);
                if self.text_projection.is_none() && self.audio_projection.is_none() {
                    spec
                } else {
                    spec.with_blocks(vec![
                        InputBlock {
                            dim: text_dim,
                            project_to: self.text_projection,
                        },
                        InputBlock {
                            dim: audio_dim,
                            project_to: self.audio_projection,
                        },
                    ])
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Concatenation of (optionally projected) text and audio representations.
pub fn early_fuse(text_rep: &[f64], audio_rep: &[f64], projections: [Option<&Dense>; 2]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (rep, proj) in [text_rep, audio_rep].into_iter().zip(projections) {
        match proj {
            None => out.extend_from_slice(rep),
            Some(d) => {
                if d.n_in() != rep.len() {
                    return Err(Error::Shape(format!(
                        "projection expects width {}, representation has {}",
                        d.n_in(),
                        rep.len()
                    )));
                }
                out.extend((Array1::from(rep.to_vec()).dot(&d.w) + &d.b).iter());
            }
        }
    }
    Ok(out)
}

/// `[conf_text, conf_audio]`, both required to lie in [0, 1].
pub fn late_fuse(conf_text: f64, conf_audio: f64) -> Result<[f64; 2]> {
    for (what, c) in [("text", conf_text), ("audio", conf_audio)] {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Validation(format!("{what} confidence {c} outside [0, 1]")));
        }
    }
    Ok([conf_text, conf_audio])
}

/// A frozen base model and its input features.
#[derive(Debug, Clone, Copy)]
pub struct BaseModel<'a> {
    pub model: &'a Mlp,
    pub features: &'a FeatureMatrix,
}

impl BaseModel<'_> {
    fn forward(&self, utterances: &[Utterance], what: &str) -> Result<(Array2<f64>, Array2<f64>)> {
        let x = self.features.gather(utterances, what)?;
        let out = self.model.forward(&x)?;
        Ok((out.rep, out.logits))
    }
}

/// Fusion inputs for `utterances`: concatenated representations (early) or
/// the two class-1 confidences (late).
pub fn fused_features(mode: FusionMode, text: BaseModel, audio: BaseModel, utterances: &[Utterance]) -> Result<FeatureMatrix> {
    let (t_rep, t_logits) = text.forward(utterances, "text features")?;
    let (a_rep, a_logits) = audio.forward(utterances, "audio features")?;
    let keys = utterances.iter().map(|u| u.key()).collect();
    let data = match mode {
        FusionMode::Early => ndarray::concatenate(ndarray::Axis(1), &[t_rep.view(), a_rep.view()])
            .map_err(|e| Error::Shape(e.to_string()))?,
        FusionMode::Late => {
            let t = positive_scores(&t_logits);
            let a = positive_scores(&a_logits);
            let mut m = Array2::zeros((utterances.len(), 2));
            for i in 0..utterances.len() {
                let v = late_fuse(t[i], a[i])?;
                m[[i, 0]] = v[0];
                m[[i, 1]] = v[1];
            }
            m
        }
    };
    FeatureMatrix::new(keys, data)
}

/// Trains the fusion head on precomputed fused vectors, selecting on dev MAP.
pub fn train_fusion_head(
    train: &FeatureMatrix,
    train_utts: &[Utterance],
    dev: &FeatureMatrix,
    dev_utts: &[Utterance],
    spec: &FusionSpec,
    text_dim: usize,
    audio_dim: usize,
) -> Result<Checkpoint> {
    let head_spec = spec.head_spec(text_dim, audio_dim)?;
    let x = train.gather(train_utts, "fused training features")?;
    let labels: Vec<u8> = train_utts.iter().map(|u| u.label).collect();
    let dx = dev.gather(dev_utts, "fused dev features")?;
    let mut ck = train_classifier(
        &TrainSet::new(&x, &labels),
        &DevSet {
            x: &dx,
            utterances: dev_utts,
        },
        &head_spec,
        &spec.config,
    )?;
    ck.extra.insert(MODE_KEY.into(), spec.mode.to_string());
    Ok(ck)
}

/// Class-1 probabilities of the fusion head, one prediction per utterance.
pub fn predict_fused(head: &Mlp, fused: &FeatureMatrix, utterances: &[Utterance]) -> Result<Vec<Prediction>> {
    let x = fused.gather(utterances, "fused features")?;
    let scores = predict_scores(head, &x)?;
    Ok(utterances
        .iter()
        .zip(scores)
        .map(|(u, score)| Prediction {
            event_id: u.event_id.clone(),
            line_no: u.line_no,
            score,
        })
        .collect())
}
