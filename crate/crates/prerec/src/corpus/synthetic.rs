//! Multi-domain synthetic benchmark with planted biases.
//!
//! Interactions are sampled from the same family the model assumes: a user
//! picks the next item by softmax over content affinity, a sequential term
//! driven by the previously chosen item, a per-domain taste vector (planted
//! cross-domain bias, entering both the item representations used by the
//! sampler and the logits), and a per-interval popularity boost on trending
//! items (planted in-domain bias). The planted quantities go into a ground
//! truth record so tests can check what a debiased model recovers.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Interaction, InteractionLog, ItemCatalog, ItemRecord};
use crate::embedding::{table_from_vectors, EmbeddingTable};
use crate::error::{Error, Result};
use crate::mat::gaussian_sample;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub domains: usize,
    pub items_per_domain: usize,
    pub users_per_domain: usize,
    pub embed_dim: usize,
    pub seq_len_min: usize,
    pub seq_len_max: usize,
    /// Norm of the planted per-domain taste vector; 0 disables the bias.
    pub domain_bias_scale: f64,
    /// Logit boost for trending items; 0 disables the bias.
    pub pop_boost_scale: f64,
    /// Fraction of items trending in each block.
    pub pop_boost_fraction: f64,
    /// Trend persistence: number of consecutive intervals sharing one
    /// trending set.
    pub pop_block_intervals: usize,
    pub n_intervals: usize,
    pub interval_secs: i64,
    /// Weight of the user-content affinity term.
    pub content_sharpness: f64,
    /// Weight of the previous-item similarity term.
    pub seq_sharpness: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            domains: 4,
            items_per_domain: 60,
            users_per_domain: 260,
            embed_dim: 16,
            seq_len_min: 6,
            seq_len_max: 12,
            domain_bias_scale: 1.2,
            pop_boost_scale: 4.0,
            pop_boost_fraction: 0.1,
            pop_block_intervals: 4,
            n_intervals: 8,
            interval_secs: 15 * 24 * 3600,
            content_sharpness: 3.0,
            seq_sharpness: 2.0,
        }
    }
}

/// Planted quantities for one domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainGroundTruth {
    pub domain_id: String,
    pub item_ids: Vec<String>,
    /// The planted taste vector g_k (norm = `domain_bias_scale`).
    pub domain_vec: Vec<f64>,
    /// Trending item indexes per block of `pop_block_intervals` intervals.
    pub trending_blocks: Vec<Vec<usize>>,
    /// Per-item logit shift induced by the domain vector: g_k . x_j.
    pub domain_logit_shift: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthGroundTruth {
    pub config: SynthConfig,
    pub seed: u64,
    pub domains: Vec<DomainGroundTruth>,
}

impl SynthGroundTruth {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| gaussian_sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws an index from softmax(logits) by inverse CDF.
fn sample_softmax(logits: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen_range(0.0..1.0) * total;
    for (i, w) in weights.iter().enumerate() {
        r -= w;
        if r <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Generates the benchmark. Returns the multi-domain log, the catalog, the
/// exposed content embedding table (the planted content vectors), and the
/// ground truth record.
pub fn generate_synthetic(
    config: &SynthConfig,
    seed: u64,
) -> Result<(InteractionLog, ItemCatalog, EmbeddingTable, SynthGroundTruth)> {
    if config.domains == 0
        || config.items_per_domain == 0
        || config.users_per_domain == 0
        || config.embed_dim == 0
        || config.seq_len_min == 0
        || config.n_intervals == 0
    {
        return Err(Error::Config("synthetic sizes must be positive".into()));
    }
    if config.seq_len_max < config.seq_len_min {
        return Err(Error::Config("seq_len_max must be >= seq_len_min".into()));
    }
    if config.interval_secs <= 0 {
        return Err(Error::Config("interval_secs must be positive".into()));
    }
    if config.pop_block_intervals == 0 {
        return Err(Error::Config("pop_block_intervals must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = config.n_intervals as i64 * config.interval_secs;
    let n_blocks = config.n_intervals.div_ceil(config.pop_block_intervals);

    let mut events = Vec::new();
    let mut records = Vec::new();
    let mut pairs: Vec<(String, Vec<f32>)> = Vec::new();
    let mut domains_truth = Vec::new();

    for k in 0..config.domains {
        let domain_id = format!("syn{k}");
        let item_ids: Vec<String> = (0..config.items_per_domain)
            .map(|j| format!("{domain_id}_i{j:05}"))
            .collect();

        // Planted content vectors (exposed as the embedding table).
        let content: Vec<Vec<f64>> = (0..config.items_per_domain)
            .map(|_| unit_vector(config.embed_dim, &mut rng))
            .collect();
        // Planted domain taste vector.
        let mut domain_vec = unit_vector(config.embed_dim, &mut rng);
        domain_vec
            .iter_mut()
            .for_each(|x| *x *= config.domain_bias_scale);
        // Item representations as the sampler sees them.
        let shifted: Vec<Vec<f64>> = content
            .iter()
            .map(|x| x.iter().zip(&domain_vec).map(|(a, b)| a + b).collect())
            .collect();
        let domain_logit_shift: Vec<f64> = content.iter().map(|x| dot(&domain_vec, x)).collect();

        // Trending sets per block.
        let trending_blocks: Vec<Vec<usize>> = (0..n_blocks)
            .map(|_| {
                (0..config.items_per_domain)
                    .filter(|_| rng.gen_range(0.0..1.0) < config.pop_boost_fraction)
                    .collect()
            })
            .collect();
        let mut boost = vec![vec![0.0f64; config.items_per_domain]; config.n_intervals];
        for (interval, row) in boost.iter_mut().enumerate() {
            let block = interval / config.pop_block_intervals;
            for &j in &trending_blocks[block] {
                row[j] = config.pop_boost_scale;
            }
        }

        for (j, id) in item_ids.iter().enumerate() {
            records.push(ItemRecord {
                item_id: id.clone(),
                domain_id: domain_id.clone(),
                text: None,
                embedding_ref: Some(pairs.len()),
            });
            pairs.push((id.clone(), content[j].iter().map(|&x| x as f32).collect()));
        }

        for u in 0..config.users_per_domain {
            let user_id = format!("{domain_id}_u{u:05}");
            let taste = unit_vector(config.embed_dim, &mut rng);
            let len = rng.gen_range(config.seq_len_min..=config.seq_len_max);
            let mut times: Vec<i64> = (0..len).map(|_| rng.gen_range(0..span)).collect();
            times.sort_unstable();

            let content_logits: Vec<f64> = content
                .iter()
                .map(|x| config.content_sharpness * dot(&taste, x))
                .collect();
            let mut prev: Option<usize> = None;
            for &ts in &times {
                let interval = (ts / config.interval_secs) as usize;
                let mut logits = content_logits.clone();
                for (j, l) in logits.iter_mut().enumerate() {
                    *l += domain_logit_shift[j] + boost[interval][j];
                }
                if let Some(p) = prev {
                    for (j, l) in logits.iter_mut().enumerate() {
                        *l += config.seq_sharpness * dot(&shifted[p], &shifted[j]);
                    }
                }
                let choice = sample_softmax(&logits, &mut rng);
                events.push(Interaction {
                    user_id: user_id.clone(),
                    item_id: item_ids[choice].clone(),
                    domain_id: domain_id.clone(),
                    timestamp: ts,
                });
                prev = Some(choice);
            }
        }

        domains_truth.push(DomainGroundTruth {
            domain_id,
            item_ids,
            domain_vec,
            trending_blocks,
            domain_logit_shift,
        });
    }

    let log = InteractionLog::from_events(events)?;
    let catalog = ItemCatalog::from_records(records)?;
    let table = table_from_vectors(&pairs)?;
    let truth = SynthGroundTruth {
        config: config.clone(),
        seed,
        domains: domains_truth,
    };
    Ok((log, catalog, table, truth))
}

/// Writes the four artifacts into `dir`: interactions CSV, catalog JSONL,
/// embedding manifest + blob, and the ground truth JSON.
pub struct SynthArtifacts {
    pub interactions: PathBuf,
    pub catalog: PathBuf,
    pub embedding_manifest: PathBuf,
    pub ground_truth: PathBuf,
}

pub fn write_synthetic_artifacts(
    dir: &Path,
    config: &SynthConfig,
    seed: u64,
) -> Result<SynthArtifacts> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (log, catalog, table, truth) = generate_synthetic(config, seed)?;
    let interactions = dir.join("interactions.csv");
    crate::corpus::load::write_interactions_csv(&log, &interactions)?;
    let catalog_path = dir.join("catalog.jsonl");
    crate::corpus::load::write_catalog(&catalog, &catalog_path)?;
    let embedding_manifest = crate::embedding::save_manifest_pair(&table, dir, "embeddings")?;
    let ground_truth = dir.join("ground_truth.json");
    truth.save(&ground_truth)?;
    Ok(SynthArtifacts {
        interactions,
        catalog: catalog_path,
        embedding_manifest,
        ground_truth,
    })
}
