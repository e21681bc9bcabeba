//! Checkpoint persistence: a single archive with a JSON header followed by
//! raw little-endian `f64` tensor data.
//!
//! Layout: 8-byte magic, format version (u32 LE), header length (u64 LE),
//! header JSON, then the tensors in header order. Reloading reproduces
//! bit-identical parameters.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{DomainParams, ModelConfig, Parameters};
use crate::training::AdamState;

const MAGIC: &[u8; 8] = b"PRERECK\0";
const VERSION: u32 = 1;

/// One pre-training / fine-tuning epoch record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_r_ndcg: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: Parameters,
    pub optimizer: Option<AdamState>,
    pub epoch: u32,
    pub best_metric: f64,
    pub history: Vec<EpochLog>,
    /// Configuration fingerprint of the run that produced this checkpoint.
    pub fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    input_dim: usize,
    epoch: u32,
    best_metric: f64,
    history: Vec<EpochLog>,
    optimizer_step: Option<u64>,
    #[serde(default)]
    fingerprint: String,
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    len: usize,
}

impl Checkpoint {
    pub fn fresh(params: Parameters) -> Self {
        Checkpoint {
            params,
            optimizer: None,
            epoch: 0,
            best_metric: f64::NEG_INFINITY,
            history: Vec::new(),
            fingerprint: String::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors: Vec<TensorMeta> = Vec::new();
        let mut data: Vec<u8> = Vec::new();
        let push =
            |name: String, values: &[f64], tensors: &mut Vec<TensorMeta>, data: &mut Vec<u8>| {
                tensors.push(TensorMeta {
                    name,
                    len: values.len(),
                });
                for v in values {
                    data.extend_from_slice(&v.to_le_bytes());
                }
            };
        self.params
            .for_each_tensor(|name, values| push(name.to_string(), values, &mut tensors, &mut data));
        if let Some(adam) = &self.optimizer {
            for (name, values) in adam.first_moments() {
                push(format!("adam.m/{name}"), values, &mut tensors, &mut data);
            }
            for (name, values) in adam.second_moments() {
                push(format!("adam.v/{name}"), values, &mut tensors, &mut data);
            }
        }
        let header = Header {
            version: VERSION,
            config: self.params.config.clone(),
            input_dim: self.params.input_dim,
            epoch: self.epoch,
            best_metric: self.best_metric,
            history: self.history.clone(),
            optimizer_step: self.optimizer.as_ref().map(|a| a.step()),
            fingerprint: self.fingerprint.clone(),
            tensors,
        };
        let header_json = serde_json::to_vec(&header).map_err(|e| Error::json(path, e))?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
        f.write_all(&VERSION.to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
        f.write_all(&(header_json.len() as u64).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
        f.write_all(&header_json).map_err(|e| Error::io(path, e))?;
        f.write_all(&data).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != MAGIC {
            return Err(Error::Data(format!(
                "{} is not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let mut word = [0u8; 4];
        f.read_exact(&mut word).map_err(|e| Error::io(path, e))?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Data(format!(
                "checkpoint version {version} does not match supported version {VERSION}"
            )));
        }
        let mut len_bytes = [0u8; 8];
        f.read_exact(&mut len_bytes)
            .map_err(|e| Error::io(path, e))?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_json = vec![0u8; header_len];
        f.read_exact(&mut header_json)
            .map_err(|e| Error::io(path, e))?;
        let header: Header =
            serde_json::from_slice(&header_json).map_err(|e| Error::json(path, e))?;
        let mut rest = Vec::new();
        f.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
        let expected: usize = header.tensors.iter().map(|t| t.len * 8).sum();
        if rest.len() != expected {
            return Err(Error::Data(format!(
                "checkpoint data holds {} bytes, header expects {expected}",
                rest.len()
            )));
        }

        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut offset = 0usize;
        for meta in &header.tensors {
            let mut v = Vec::with_capacity(meta.len);
            for k in 0..meta.len {
                let at = offset + k * 8;
                v.push(f64::from_le_bytes(rest[at..at + 8].try_into().unwrap()));
            }
            offset += meta.len * 8;
            values.insert(meta.name.clone(), v);
        }

        let b = header.config.embed_dim;
        let mut params = Parameters::init(header.config, header.input_dim)?;
        // Rebuild domain tables from the tensor manifest shapes.
        let mut domains: BTreeMap<String, DomainParams> = BTreeMap::new();
        for meta in &header.tensors {
            let Some(rest_name) = meta.name.strip_prefix("dom/") else {
                continue;
            };
            let Some((id, field)) = rest_name.rsplit_once('/') else {
                continue;
            };
            let dom = domains
                .entry(id.to_string())
                .or_insert_with(|| DomainParams {
                    d: vec![0.0; b],
                    v_offsets: Mat::zeros(0, b),
                    z_offsets: None,
                    u_offsets: None,
                });
            match field {
                "d" => {}
                "voff" => dom.v_offsets = Mat::zeros(meta.len / b, b),
                "zoff" => dom.z_offsets = Some(Mat::zeros(meta.len / b, b)),
                "uoff" => dom.u_offsets = Some(Mat::zeros(meta.len / b, b)),
                other => {
                    return Err(Error::Data(format!(
                        "unknown domain tensor field {other} in checkpoint"
                    )))
                }
            }
        }
        params.domains = domains;

        let mut problems = Vec::new();
        params.for_each_tensor_mut(|name, data| match values.get(name) {
            Some(src) if src.len() == data.len() => data.copy_from_slice(src),
            Some(src) => problems.push(format!(
                "{name}: length {} in file, {} expected",
                src.len(),
                data.len()
            )),
            None => problems.push(format!("{name}: absent from file")),
        });
        if !problems.is_empty() {
            return Err(Error::Data(format!(
                "checkpoint tensors inconsistent: {}",
                problems.join("; ")
            )));
        }

        let optimizer = header.optimizer_step.map(|step| {
            let mut m = BTreeMap::new();
            let mut v = BTreeMap::new();
            for (name, data) in &values {
                if let Some(base) = name.strip_prefix("adam.m/") {
                    m.insert(base.to_string(), data.clone());
                } else if let Some(base) = name.strip_prefix("adam.v/") {
                    v.insert(base.to_string(), data.clone());
                }
            }
            AdamState::restore(step, m, v)
        });

        Ok(Checkpoint {
            params,
            optimizer,
            epoch: header.epoch,
            best_metric: header.best_metric,
            history: header.history,
            fingerprint: header.fingerprint,
        })
    }
}
