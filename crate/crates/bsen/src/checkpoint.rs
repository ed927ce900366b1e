//! Versioned binary checkpoints:
//!
//! ```text
//! magic "BSENCKPT" | version u32 LE | header length u64 LE | JSON header
//! | parameters and buffers as f32 LE, in header order | centers m x D f32 LE
//! ```

use std::fs;
use std::path::Path;

use bsen_core::model::{BehaviorTest, Bsen, BsenConfig, CenterBank};
use bsen_core::volume::Dims;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const MAGIC: &[u8; 8] = b"BSENCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    input_dims: Dims,
    channels: [usize; 3],
    alpha: f64,
    delta: f64,
    batch_size: usize,
    epochs: usize,
    lr_stage1: f64,
    lr_stage2: f64,
    center_momentum: f64,
    seed: u64,
}

impl From<&BsenConfig> for ModelHeader {
    fn from(c: &BsenConfig) -> Self {
        Self {
            input_dims: c.input_dims,
            channels: c.channels,
            alpha: c.alpha,
            delta: c.delta,
            batch_size: c.batch_size,
            epochs: c.epochs,
            lr_stage1: c.lr_stage1,
            lr_stage2: c.lr_stage2,
            center_momentum: c.center_momentum,
            seed: c.seed,
        }
    }
}

impl From<&ModelHeader> for BsenConfig {
    fn from(h: &ModelHeader) -> Self {
        BsenConfig {
            input_dims: h.input_dims,
            channels: h.channels,
            alpha: h.alpha,
            delta: h.delta,
            batch_size: h.batch_size,
            epochs: h.epochs,
            lr_stage1: h.lr_stage1,
            lr_stage2: h.lr_stage2,
            center_momentum: h.center_momentum,
            seed: h.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelHeader,
    layers: Vec<TensorEntry>,
    seed: u64,
    epoch: usize,
    behavior_test: String,
    /// `[clusters, dim]` of the trailing centers block.
    centers: Option<[usize; 2]>,
    fold: Option<usize>,
    config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Bsen<f32>,
    pub centers: Option<CenterBank>,
    pub behavior_test: Option<BehaviorTest>,
    /// Epochs completed in the stage that produced the model.
    pub epoch: usize,
    pub fold: Option<usize>,
    pub config_hash: String,
}

fn tag(test: Option<BehaviorTest>) -> &'static str {
    test.map_or("none", BehaviorTest::as_str)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.model.named_tensors();
        let header = Header {
            config: ModelHeader::from(&self.model.config),
            layers: tensors.iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
            seed: self.model.config.seed,
            epoch: self.epoch,
            behavior_test: tag(self.behavior_test).into(),
            centers: self.centers.as_ref().map(|c| [c.centers().len(), c.dim()]),
            fold: self.fold,
            config_hash: self.config_hash.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &tensors {
            for v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(c) = &self.centers {
            for v in c.centers().iter().flatten() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    /// Parses a checkpoint; `origin` only labels error messages.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::data(origin, msg);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a BSEN checkpoint (bad magic or truncated preamble)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(format!("checkpoint version {version} is not supported (expected {VERSION})")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let body = &bytes[20..];
        if hlen > body.len() as u64 {
            return Err(bad(format!("truncated header: {hlen} bytes declared, {} present", body.len())));
        }
        let (json, payload) = body.split_at(hlen as usize);
        let header: Header = serde_json::from_slice(json).map_err(|e| bad(format!("corrupt header: {e}")))?;
        let config = BsenConfig::from(&header.config);
        let mut model = Bsen::<f32>::build(&config).map_err(|e| bad(e.to_string()))?;
        let expected: Vec<TensorEntry> = model
            .named_tensors()
            .iter()
            .map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() })
            .collect();
        if expected != header.layers {
            return Err(bad("layer list does not match the architecture in the header".into()));
        }
        let n_params: usize = expected.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        let n_centers = header.centers.map_or(0, |[m, d]| m * d);
        let needed = 4 * (n_params + n_centers);
        if payload.len() != needed {
            return Err(bad(format!("payload has {} bytes, header describes {needed}", payload.len())));
        }
        let values: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("payload contains non-finite values".into()));
        }
        model.load_flat(&values[..n_params]).map_err(|e| bad(e.to_string()))?;
        let centers = match header.centers {
            None => None,
            Some([m, d]) => {
                if d != config.latent_dim() {
                    return Err(bad(format!("centers have dim {d}, latent dim is {}", config.latent_dim())));
                }
                let rows = values[n_params..].chunks(d).take(m).map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
                Some(CenterBank::from_centers(rows).map_err(|e| bad(e.to_string()))?)
            }
        };
        let behavior_test = match header.behavior_test.as_str() {
            "CDR" => Some(BehaviorTest::Cdr),
            "MMSE" => Some(BehaviorTest::Mmse),
            "none" => None,
            other => return Err(bad(format!("unknown behavior_test tag {other:?}"))),
        };
        if header.seed != config.seed {
            return Err(bad("header seed disagrees with the model config".into()));
        }
        Ok(Self { model, centers, behavior_test, epoch: header.epoch, fold: header.fold, config_hash: header.config_hash })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).at(dir)?;
        }
        fs::write(path, self.to_bytes()).at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).at(path)?;
        Self::from_bytes(&bytes, path)
    }
}
