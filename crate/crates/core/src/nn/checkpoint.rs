//! Checkpoint file: the magic `CWCKPT1`, a little-endian `u32` byte length,
//! that many bytes of JSON metadata, then every layer's weights and bias as
//! little-endian `f32`, layers in [`Mlp::layers`] order, row-major.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mlp::{Dense, Mlp, MlpSpec};
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 7] = b"CWCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_map: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Weights are always `f32`-representable.
    pub model: Mlp,
    pub config: TrainConfig,
    /// 1-based epoch the weights come from.
    pub epoch: usize,
    pub dev_map: f64,
    pub history: Vec<EpochLog>,
    /// Free-form annotations (role, teacher fingerprint, ...).
    pub extra: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    spec: MlpSpec,
    config: TrainConfig,
    epoch: usize,
    dev_map: f64,
    seed: u64,
    fingerprint: String,
    layers: Vec<(usize, usize)>,
    history: Vec<EpochLog>,
    #[serde(default)]
    extra: BTreeMap<String, String>,
}

fn layer_bytes(d: &Dense, out: &mut Vec<u8>) {
    for &v in d.w.iter().chain(d.b.iter()) {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Weight bytes exactly as stored in a checkpoint.
pub fn weight_bytes(model: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * model.n_params());
    for d in model.layers() {
        layer_bytes(d, &mut out);
    }
    out
}

/// SHA-256 (hex) of the stored weight bytes.
pub fn fingerprint(model: &Mlp) -> String {
    sha256_hex(&weight_bytes(model))
}

pub fn head_bytes(model: &Mlp) -> Vec<u8> {
    let mut out = Vec::new();
    layer_bytes(model.head(), &mut out);
    out
}

impl Checkpoint {
    pub fn new(mut model: Mlp, config: TrainConfig, epoch: usize, dev_map: f64, history: Vec<EpochLog>) -> Self {
        model.round_to_f32();
        Self {
            model,
            config,
            epoch,
            dev_map,
            history,
            extra: BTreeMap::new(),
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        self.model.spec()
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let weights = weight_bytes(&self.model);
        let meta = Meta {
            format_version: FORMAT_VERSION,
            spec: self.spec().clone(),
            config: self.config.clone(),
            epoch: self.epoch,
            dev_map: self.dev_map,
            seed: self.seed(),
            fingerprint: sha256_hex(&weights),
            layers: self.model.layers().iter().map(|d| (d.n_in(), d.n_out())).collect(),
            history: self.history.clone(),
            extra: self.extra.clone(),
        };
        let json = serde_json::to_vec(&meta).expect("metadata serializes");
        let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + weights.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&weights);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("missing CWCKPT1 header"));
        }
        let len_at = MAGIC.len();
        let meta_len = u32::from_le_bytes(bytes[len_at..len_at + 4].try_into().expect("4 bytes")) as usize;
        let meta_end = len_at + 4 + meta_len;
        if bytes.len() < meta_end {
            return Err(bad("truncated metadata"));
        }
        let meta: Meta = serde_json::from_slice(&bytes[len_at + 4..meta_end])
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {}", meta.format_version)));
        }
        let blob = &bytes[meta_end..];
        let n_floats: usize = meta.layers.iter().map(|(i, o)| i * o + o).sum();
        if blob.len() != 4 * n_floats {
            return Err(Error::Checkpoint(format!(
                "expected {} weight bytes, found {}",
                4 * n_floats,
                blob.len()
            )));
        }
        if sha256_hex(blob) != meta.fingerprint {
            return Err(bad("weight fingerprint mismatch"));
        }
        let mut floats = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
        let layers = meta
            .layers
            .iter()
            .map(|&(n_in, n_out)| {
                let mut d = Dense::zeros(n_in, n_out);
                d.w.iter_mut().for_each(|v| *v = floats.next().expect("length checked"));
                d.b.iter_mut().for_each(|v| *v = floats.next().expect("length checked"));
                d
            })
            .collect();
        let model = Mlp::from_layers(&meta.spec, layers).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            model,
            config: meta.config,
            epoch: meta.epoch,
            dev_map: meta.dev_map,
            history: meta.history,
            extra: meta.extra,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
