//! Universal item embeddings: precomputed tables, the learnable projection,
//! and an optional remote text-encoder client.
//!
//! The text encoder itself is external and frozen; this module only consumes
//! its vectors. Training touches nothing here except [`ProjectionParams`].

pub mod remote;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Immutable table of per-item input vectors (row-major `f32`).
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    rows: Vec<f32>,
    index: BTreeMap<String, usize>,
}

/// JSON manifest describing an embedding blob on disk.
#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub count: usize,
    pub dim: usize,
    /// Path of the binary blob, relative to the manifest file.
    pub blob: String,
    pub ids: BTreeMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, rows: Vec<f32>, index: BTreeMap<String, usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if rows.len() % dim != 0 {
            return Err(Error::Data(format!(
                "embedding data length {} is not a multiple of dim {dim}",
                rows.len()
            )));
        }
        let table = EmbeddingTable { dim, rows, index };
        table.validate_finite()?;
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, idx: usize) -> &[f32] {
        &self.rows[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn row_index(&self, item_id: &str) -> Option<usize> {
        self.index.get(item_id).copied()
    }

    pub fn get(&self, item_id: &str) -> Option<&[f32]> {
        self.row_index(item_id).map(|i| self.row(i))
    }

    pub fn ids(&self) -> &BTreeMap<String, usize> {
        &self.index
    }

    fn validate_finite(&self) -> Result<()> {
        for (row, chunk) in self.rows.chunks(self.dim).enumerate() {
            if chunk.iter().any(|v| !v.is_finite()) {
                let name = self
                    .index
                    .iter()
                    .find(|(_, &r)| r == row)
                    .map(|(id, _)| id.clone())
                    .unwrap_or_else(|| format!("row {row}"));
                return Err(Error::Data(format!(
                    "embedding for {name} contains a non-finite value"
                )));
            }
        }
        Ok(())
    }

    /// Loads a table from a JSON manifest plus its little-endian `f32` blob.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path)
            .map_err(|e| Error::io(manifest_path, e))?;
        let manifest: EmbeddingManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
        let blob_path = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&manifest.blob);
        let mut bytes = Vec::new();
        std::fs::File::open(&blob_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&blob_path, e))?;
        let expected = manifest.count * manifest.dim * 4;
        if bytes.len() != expected {
            return Err(Error::Data(format!(
                "embedding blob {} holds {} bytes, manifest expects {expected}",
                blob_path.display(),
                bytes.len()
            )));
        }
        let rows: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        for (id, &row) in &manifest.ids {
            if row >= manifest.count {
                return Err(Error::Data(format!(
                    "manifest maps {id} to row {row}, blob has {} rows",
                    manifest.count
                )));
            }
        }
        EmbeddingTable::new(manifest.dim, rows, manifest.ids)
    }

    /// Writes the manifest and blob next to each other.
    pub fn save(&self, manifest_path: &Path, blob_name: &str) -> Result<()> {
        let manifest = EmbeddingManifest {
            count: self.len(),
            dim: self.dim,
            blob: blob_name.to_string(),
            ids: self.index.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::json(manifest_path, e))?;
        std::fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
        let blob_path = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(blob_name);
        let mut bytes = Vec::with_capacity(self.rows.len() * 4);
        for v in &self.rows {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&blob_path, e))?;
        Ok(())
    }
}

/// The learnable affine map from raw encoder vectors to model space.
///
/// `weight` has one row per output dimension, so the map is
/// `out[r] = sum_c weight[r][c] * input[c] + bias[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl ProjectionParams {
    pub fn init(input_dim: usize, output_dim: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        ProjectionParams {
            weight: Mat::xavier(output_dim, input_dim, rng),
            bias: vec![0.0; output_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows
    }
}

/// Applies the projection: `weight * input + bias`.
pub fn project(input: &[f64], params: &ProjectionParams) -> Result<Vec<f64>> {
    if input.len() != params.input_dim() {
        return Err(Error::Config(format!(
            "projection expects input dim {}, got {}",
            params.input_dim(),
            input.len()
        )));
    }
    let mut out = params.bias.clone();
    for r in 0..params.output_dim() {
        let w = params.weight.row(r);
        let mut s = 0.0;
        for c in 0..input.len() {
            s += w[c] * input[c];
        }
        out[r] += s;
    }
    Ok(out)
}

/// Projects a raw `f32` table row.
pub fn project_row(row: &[f32], params: &ProjectionParams) -> Result<Vec<f64>> {
    let input: Vec<f64> = row.iter().map(|&v| v as f64).collect();
    project(&input, params)
}

/// Builds a table directly from id -> vector pairs (used by the synthetic
/// generator and the `embed` command).
pub fn table_from_vectors(pairs: &[(String, Vec<f32>)]) -> Result<EmbeddingTable> {
    let dim = pairs.first().map(|(_, v)| v.len()).unwrap_or(1);
    let mut rows = Vec::with_capacity(pairs.len() * dim);
    let mut index = BTreeMap::new();
    for (i, (id, vec)) in pairs.iter().enumerate() {
        if vec.len() != dim {
            return Err(Error::Data(format!(
                "embedding for {id} has dim {}, expected {dim}",
                vec.len()
            )));
        }
        if index.insert(id.clone(), i).is_some() {
            return Err(Error::Data(format!("duplicate embedding id {id}")));
        }
        rows.extend_from_slice(vec);
    }
    EmbeddingTable::new(dim, rows, index)
}

pub fn save_manifest_pair(table: &EmbeddingTable, dir: &Path, stem: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join(format!("{stem}.json"));
    table.save(&manifest, &format!("{stem}.bin"))?;
    Ok(manifest)
}
