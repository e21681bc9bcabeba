//! Scoring and ranking: causally debiased zero-shot inference and in-domain
//! inference with re-estimated latents.
//!
//! Zero-shot scoring drops every domain-specific quantity: the user encoder
//! runs with a zero prefix, item vectors are `Z_j + m_j` with offsets
//! removed, and the `D . W_d` logit term is omitted. Because that term is
//! shared by every candidate in a domain, dropping it equals integrating the
//! domain latent out under its prior, so the procedure computes
//! `P(R | do(U, V, Z)) = softmax(U . V_j + Z_j . W_z)` exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::split::SplitAssignment;
use crate::corpus::DomainDataset;
use crate::error::{Error, Result};
use crate::model::{softmax, user_embedding, Parameters};
use crate::popularity::{pop_embed, DomainIntervalCounts};

/// Everything inference and evaluation need for one domain.
#[derive(Debug, Clone)]
pub struct DomainData {
    pub dataset: DomainDataset,
    pub split: SplitAssignment,
    pub counts: DomainIntervalCounts,
}

impl DomainData {
    pub fn new(
        dataset: DomainDataset,
        split: SplitAssignment,
        interval_secs: i64,
    ) -> Result<Self> {
        let counts = DomainIntervalCounts::from_dataset(&dataset, interval_secs)?;
        Ok(DomainData {
            dataset,
            split,
            counts,
        })
    }

    pub fn domain_id(&self) -> &str {
        &self.dataset.domain_id
    }
}

/// A batch scoring request: rank a domain's full catalog for one history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingRequest {
    #[serde(default)]
    pub user_id: String,
    /// Ordered item ids, oldest first.
    pub history: Vec<String>,
    pub time: i64,
    #[serde(default)]
    pub k_pct: Option<f64>,
}

/// Ranked items with their scores, best first. Ranks are 1-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedList {
    pub items: Vec<String>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Debiased inference for unseen domains: zero prefix, offsets removed,
    /// no domain logit term.
    ZeroShot,
    /// Inference with the domain's re-estimated latents (pre-trained source
    /// domains or a fine-tuned target).
    InDomain,
}

/// Scores a domain catalog under a fixed parameter snapshot. Caches the
/// projected content embeddings and the per-interval popularity embeddings.
pub struct ModelScorer<'a> {
    params: &'a Parameters,
    dataset: &'a DomainDataset,
    counts: &'a DomainIntervalCounts,
    mode: ScoreMode,
    /// Projected content embedding per item, plus offsets and domain shift
    /// where the mode calls for them.
    base_vectors: Vec<Vec<f64>>,
    /// Per interval index: the candidate-dependent popularity logit and the
    /// popularity embedding's contribution folded into item vectors.
    z_cache: BTreeMap<i64, ZBlock>,
    domain_prior: Vec<f64>,
    domain_logit_shift: f64,
}

struct ZBlock {
    /// `Z_j` per item (offset included in InDomain mode).
    z: Vec<Vec<f64>>,
    /// `Z_j . W_z` per item.
    z_score: Vec<f64>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(
        params: &'a Parameters,
        dataset: &'a DomainDataset,
        counts: &'a DomainIntervalCounts,
        mode: ScoreMode,
    ) -> Result<Self> {
        if dataset.embedding_dim() != params.input_dim {
            return Err(Error::Config(format!(
                "dataset embedding dim {} does not match the checkpoint's input dim {}",
                dataset.embedding_dim(),
                params.input_dim
            )));
        }
        let b = params.config.embed_dim;
        let (domain_prior, domain_logit_shift, offsets) = match mode {
            ScoreMode::ZeroShot => (vec![0.0; b], 0.0, None),
            ScoreMode::InDomain => {
                let dom = params.domain(&dataset.domain_id)?;
                let shift = if params.config.use_domain_bias {
                    dom.d.iter().zip(&params.w_d).map(|(a, b)| a * b).sum()
                } else {
                    0.0
                };
                (dom.d.clone(), shift, Some(dom))
            }
        };
        let mut base_vectors = Vec::with_capacity(dataset.n_items());
        for (j, raw) in dataset.embeddings.iter().enumerate() {
            let mut v = crate::embedding::project_row(raw, &params.projection)?;
            if let Some(dom) = offsets {
                for (x, off) in v.iter_mut().zip(dom.v_offsets.row(j)) {
                    *x += off;
                }
                if params.config.use_domain_bias {
                    for (x, d) in v.iter_mut().zip(&dom.d) {
                        *x += d;
                    }
                }
            }
            base_vectors.push(v);
        }
        Ok(ModelScorer {
            params,
            dataset,
            counts,
            mode,
            base_vectors,
            z_cache: BTreeMap::new(),
            domain_prior,
            domain_logit_shift,
        })
    }

    pub fn zero_shot(
        params: &'a Parameters,
        dataset: &'a DomainDataset,
        counts: &'a DomainIntervalCounts,
    ) -> Result<Self> {
        Self::new(params, dataset, counts, ScoreMode::ZeroShot)
    }

    pub fn in_domain(
        params: &'a Parameters,
        dataset: &'a DomainDataset,
        counts: &'a DomainIntervalCounts,
    ) -> Result<Self> {
        Self::new(params, dataset, counts, ScoreMode::InDomain)
    }

    /// Ensures the popularity block for `t`'s interval is cached and returns
    /// the interval key.
    fn ensure_z_block(&mut self, t: i64) -> Result<i64> {
        let interval = self.counts.interval_index(t);
        if !self.z_cache.contains_key(&interval) {
            let n = self.dataset.n_items();
            let mut z = Vec::with_capacity(n);
            let mut z_score = Vec::with_capacity(n);
            let use_pop = self.params.config.use_popularity;
            let dom = match self.mode {
                ScoreMode::InDomain => Some(self.params.domain(&self.dataset.domain_id)?),
                ScoreMode::ZeroShot => None,
            };
            for j in 0..n {
                let mut zj = if use_pop {
                    let f = self.counts.factors(j, t)?;
                    pop_embed(&f, &self.params.pop)?
                } else {
                    vec![0.0; self.params.config.embed_dim]
                };
                if use_pop {
                    if let Some(dom) = dom {
                        if let Some(zoff) = &dom.z_offsets {
                            for (x, off) in zj.iter_mut().zip(zoff.row(j)) {
                                *x += off;
                            }
                        }
                    }
                }
                let score: f64 = zj
                    .iter()
                    .zip(&self.params.pop.score_weight)
                    .map(|(a, b)| a * b)
                    .sum();
                z.push(zj);
                z_score.push(if use_pop { score } else { 0.0 });
            }
            self.z_cache.insert(interval, ZBlock { z, z_score });
        }
        Ok(interval)
    }

    /// Pre-softmax logits over the full catalog for a history at time `t`.
    pub fn logits(&mut self, history: &[usize], t: i64) -> Result<Vec<f64>> {
        self.logits_for_user(history, t, None)
    }

    /// Like [`Self::logits`]; `user_idx` attaches the learned per-user offset
    /// when the mode and configuration carry one.
    pub fn logits_for_user(
        &mut self,
        history: &[usize],
        t: i64,
        user_idx: Option<usize>,
    ) -> Result<Vec<f64>> {
        if self.dataset.n_items() == 0 {
            return Err(Error::Data(format!(
                "domain {} has an empty catalog",
                self.dataset.domain_id
            )));
        }
        for &item in history {
            if item >= self.dataset.n_items() {
                return Err(Error::Data(format!(
                    "history item index {item} out of range for domain {}",
                    self.dataset.domain_id
                )));
            }
        }
        let hist_rows: Vec<&[f32]> = history
            .iter()
            .map(|&i| self.dataset.embeddings[i].as_slice())
            .collect();
        let mut u = user_embedding(self.params, &self.domain_prior, &hist_rows)?;
        if self.mode == ScoreMode::InDomain {
            if let Some(idx) = user_idx {
                let dom = self.params.domain(&self.dataset.domain_id)?;
                if let Some(uoff) = &dom.u_offsets {
                    if idx < uoff.rows {
                        for (x, off) in u.iter_mut().zip(uoff.row(idx)) {
                            *x += off;
                        }
                    }
                }
            }
        }
        let shift = self.domain_logit_shift;
        let use_pop = self.params.config.use_popularity;
        let interval = self.ensure_z_block(t)?;
        let zb = &self.z_cache[&interval];
        let mut logits = Vec::with_capacity(self.base_vectors.len());
        for (j, base) in self.base_vectors.iter().enumerate() {
            let mut dot = 0.0;
            if use_pop {
                let zj = &zb.z[j];
                for k in 0..u.len() {
                    dot += u[k] * (base[k] + zj[k]);
                }
            } else {
                for k in 0..u.len() {
                    dot += u[k] * base[k];
                }
            }
            logits.push(dot + zb.z_score[j] + shift);
        }
        Ok(logits)
    }

    /// Softmax probabilities over the full catalog.
    pub fn probabilities(&mut self, history: &[usize], t: i64) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(history, t)?))
    }

    pub fn probabilities_for_user(
        &mut self,
        history: &[usize],
        t: i64,
        user_idx: Option<usize>,
    ) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits_for_user(history, t, user_idx)?))
    }
}

/// Debiased zero-shot probabilities over the domain catalog.
pub fn zero_shot_scores(
    params: &Parameters,
    dataset: &DomainDataset,
    counts: &DomainIntervalCounts,
    history: &[usize],
    t: i64,
) -> Result<Vec<f64>> {
    ModelScorer::zero_shot(params, dataset, counts)?.probabilities(history, t)
}

/// Probabilities using the domain's re-estimated latents (after
/// fine-tuning, or in-domain during pre-training).
pub fn finetuned_scores(
    params: &Parameters,
    dataset: &DomainDataset,
    counts: &DomainIntervalCounts,
    history: &[usize],
    t: i64,
) -> Result<Vec<f64>> {
    ModelScorer::in_domain(params, dataset, counts)?.probabilities(history, t)
}

/// Maps item ids to catalog indexes, dropping unknown ids. Returns the
/// resolved history and how many ids were skipped.
pub fn resolve_history(dataset: &DomainDataset, ids: &[String]) -> (Vec<usize>, usize) {
    let mut out = Vec::with_capacity(ids.len());
    let mut skipped = 0;
    for id in ids {
        match dataset.item_index.get(id) {
            Some(&idx) => out.push(idx),
            None => skipped += 1,
        }
    }
    (out, skipped)
}

/// Catalog-size cutoff for top-K%: `ceil(N * K% / 100)`, at least 1. A small
/// epsilon guards against float noise pushing exact products past the next
/// integer.
pub fn top_cutoff(n_items: usize, k_pct: f64) -> usize {
    let raw = n_items as f64 * k_pct / 100.0;
    ((raw - 1e-9).ceil().max(1.0)) as usize
}

/// Ranks a score vector: descending score, ties broken by item id, truncated
/// to the top K% of the catalog.
pub fn rank_topk(item_ids: &[String], scores: &[f64], k_pct: f64) -> Result<RankedList> {
    if !(k_pct > 0.0 && k_pct <= 100.0) {
        return Err(Error::Config(format!(
            "K% must lie in (0, 100], got {k_pct}"
        )));
    }
    if item_ids.len() != scores.len() {
        return Err(Error::Config("scores and items are not aligned".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score in ranking".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Catalog order is sorted by item id, so index order breaks ties.
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(item_ids[a].cmp(&item_ids[b]))
    });
    let cutoff = top_cutoff(item_ids.len(), k_pct).min(order.len());
    order.truncate(cutoff);
    Ok(RankedList {
        items: order.iter().map(|&i| item_ids[i].clone()).collect(),
        scores: order.iter().map(|&i| scores[i]).collect(),
    })
}
