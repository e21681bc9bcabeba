//! Time-interval interaction counts, normalized popularity factors, and the
//! learnable popularity embedding.
//!
//! For an event at time `t` falling into interval `T_{l+1}`, the popularity
//! factors of item `j` are its previous-interval count divided by four
//! power-mean normalizers over the domain catalog:
//! `F_j[w-1] = c_j / (sum_i c_i^w / J)^(1/w)` for `w = 1..4`, with zero-count
//! catalog items included in the mean. Using the previous interval prevents
//! temporal leakage. The first interval, and any interval whose predecessor
//! saw no traffic, maps to `F = 0`.
//!
//! Factors are evaluated as `(c^w / mean_w)^(1/w)`, which is algebraically
//! `c / s_w` but keeps `F = 1` exact when every item has the same count.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{DomainDataset, InteractionLog, ItemCatalog};
use crate::error::{Error, Result};
use crate::mat::Mat;

/// Number of power-mean orders (`w` runs 1..=4).
pub const POP_FACTOR_DIM: usize = 4;

/// Default interval length: 15 days.
pub const DEFAULT_INTERVAL_SECS: i64 = 15 * 24 * 3600;

/// Normalized previous-interval popularity of one item at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopularityFactors(pub [f64; POP_FACTOR_DIM]);

impl PopularityFactors {
    pub const ZERO: PopularityFactors = PopularityFactors([0.0; POP_FACTOR_DIM]);

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-domain interval counts plus power-mean normalizers.
#[derive(Debug, Clone)]
pub struct DomainIntervalCounts {
    pub domain_id: String,
    pub interval_secs: i64,
    pub t_min: i64,
    pub n_intervals: usize,
    pub n_items: usize,
    /// Interval-major dense counts: `counts[interval * n_items + item]`.
    counts: Vec<u32>,
    /// Mean of `c^w` per interval, `None` when the interval saw no traffic.
    power_means: Vec<Option<[f64; POP_FACTOR_DIM]>>,
}

impl DomainIntervalCounts {
    /// Builds counts from `(item index, timestamp)` events of one domain.
    /// `n_items` is the full catalog size; intervals are anchored at the
    /// domain's earliest event and tile its time range.
    pub fn from_events(
        domain_id: &str,
        n_items: usize,
        events: impl Iterator<Item = (usize, i64)>,
        interval_secs: i64,
    ) -> Result<Self> {
        if interval_secs <= 0 {
            return Err(Error::Config(format!(
                "interval length must be positive, got {interval_secs}"
            )));
        }
        if n_items == 0 {
            return Err(Error::Data(format!("domain {domain_id} has no items")));
        }
        let events: Vec<(usize, i64)> = events.collect();
        if events.is_empty() {
            return Err(Error::Data(format!(
                "cannot compute interval counts for domain {domain_id}: no interactions"
            )));
        }
        let t_min = events.iter().map(|&(_, t)| t).min().unwrap();
        let t_max = events.iter().map(|&(_, t)| t).max().unwrap();
        let n_intervals = ((t_max - t_min) / interval_secs) as usize + 1;
        let mut counts = vec![0u32; n_intervals * n_items];
        for &(item, t) in &events {
            if item >= n_items {
                return Err(Error::Data(format!(
                    "item index {item} out of range for domain {domain_id} ({n_items} items)"
                )));
            }
            let interval = ((t - t_min) / interval_secs) as usize;
            counts[interval * n_items + item] += 1;
        }
        let power_means = (0..n_intervals)
            .map(|l| {
                let slice = &counts[l * n_items..(l + 1) * n_items];
                if slice.iter().all(|&c| c == 0) {
                    return None;
                }
                let mut means = [0.0; POP_FACTOR_DIM];
                for &c in slice {
                    let c = c as f64;
                    let mut p = c;
                    for m in means.iter_mut() {
                        *m += p;
                        p *= c;
                    }
                }
                means.iter_mut().for_each(|m| *m /= n_items as f64);
                Some(means)
            })
            .collect();
        Ok(DomainIntervalCounts {
            domain_id: domain_id.to_string(),
            interval_secs,
            t_min,
            n_intervals,
            n_items,
            counts,
            power_means,
        })
    }

    pub fn from_dataset(ds: &DomainDataset, interval_secs: i64) -> Result<Self> {
        let events = ds
            .users
            .iter()
            .flat_map(|u| u.items.iter().copied().zip(u.times.iter().copied()));
        Self::from_events(&ds.domain_id, ds.n_items(), events, interval_secs)
    }

    /// Signed interval index of a timestamp; negative before the log starts.
    pub fn interval_index(&self, t: i64) -> i64 {
        (t - self.t_min).div_euclid(self.interval_secs)
    }

    pub fn count(&self, item: usize, interval: usize) -> u32 {
        if interval >= self.n_intervals || item >= self.n_items {
            return 0;
        }
        self.counts[interval * self.n_items + item]
    }

    /// The classic normalizers `s_w = mean(c^w)^(1/w)`; `None` when the
    /// interval is degenerate (no traffic).
    pub fn normalizers(&self, interval: usize) -> Option<[f64; POP_FACTOR_DIM]> {
        let means = *self.power_means.get(interval)?;
        means.map(|m| {
            [
                m[0],
                m[1].sqrt(),
                m[2].cbrt(),
                m[3].sqrt().sqrt(),
            ]
        })
    }

    /// Popularity factors of `item` for an event at time `t`, computed from
    /// the interval strictly before `t`'s interval.
    pub fn factors(&self, item: usize, t: i64) -> Result<PopularityFactors> {
        if item >= self.n_items {
            return Err(Error::Data(format!(
                "unknown item index {item} in domain {}",
                self.domain_id
            )));
        }
        let idx = self.interval_index(t);
        if idx <= 0 {
            return Ok(PopularityFactors::ZERO);
        }
        let prev = (idx - 1) as usize;
        let Some(means) = self.power_means.get(prev).copied().flatten() else {
            return Ok(PopularityFactors::ZERO);
        };
        let c = self.count(item, prev) as f64;
        let mut f = [0.0; POP_FACTOR_DIM];
        let mut p = c;
        for (w, out) in f.iter_mut().enumerate() {
            let ratio = p / means[w];
            *out = match w {
                0 => ratio,
                1 => ratio.sqrt(),
                2 => ratio.cbrt(),
                _ => ratio.sqrt().sqrt(),
            };
            p *= c;
        }
        Ok(PopularityFactors(f))
    }
}

/// Computes per-domain interval counts for every domain in the log.
/// Normalizer means run over the domain's full catalog, zero counts included.
pub fn count_intervals(
    log: &InteractionLog,
    catalog: &ItemCatalog,
    interval_secs: i64,
) -> Result<BTreeMap<String, DomainIntervalCounts>> {
    if log.is_empty() {
        return Err(Error::Data("cannot compute interval counts for an empty log".into()));
    }
    let mut out = BTreeMap::new();
    for domain_id in log.domain_ids() {
        let items = catalog.domain_items(&domain_id);
        if items.is_empty() {
            return Err(Error::Data(format!(
                "log references domain {domain_id} with no catalog items"
            )));
        }
        let index: BTreeMap<&str, usize> = items
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut events = Vec::new();
        for e in log.events().iter().filter(|e| e.domain_id == domain_id) {
            let item = *index.get(e.item_id.as_str()).ok_or_else(|| {
                Error::Data(format!(
                    "interaction references item {} missing from domain {domain_id} catalog",
                    e.item_id
                ))
            })?;
            events.push((item, e.timestamp));
        }
        out.insert(
            domain_id.clone(),
            DomainIntervalCounts::from_events(&domain_id, items.len(), events.into_iter(), interval_secs)?,
        );
    }
    Ok(out)
}

/// Writes nonzero counts as `domain,interval,item,count` CSV for debugging.
pub fn export_counts_csv(
    counts: &BTreeMap<String, DomainIntervalCounts>,
    catalog: &ItemCatalog,
    path: &Path,
) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "domain,interval,item,count").map_err(|e| Error::io(path, e))?;
    for (domain_id, dc) in counts {
        let items = catalog.domain_items(domain_id);
        for interval in 0..dc.n_intervals {
            for (j, item_id) in items.iter().enumerate() {
                let c = dc.count(j, interval);
                if c > 0 {
                    writeln!(f, "{domain_id},{interval},{item_id},{c}")
                        .map_err(|e| Error::io(path, e))?;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopActivation {
    Tanh,
    Identity,
    Relu,
}

impl PopActivation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            PopActivation::Tanh => x.tanh(),
            PopActivation::Identity => x,
            PopActivation::Relu => x.max(0.0),
        }
    }
}

/// The trainable single-layer popularity net plus the scoring weight that
/// turns the embedding into a scalar logit contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PopNetParams {
    /// (embedding dim x 4).
    pub weight: Mat,
    pub bias: Vec<f64>,
    /// W_z: the popularity embedding's logit weight.
    pub score_weight: Vec<f64>,
    pub activation: PopActivation,
}

impl PopNetParams {
    pub fn init(dim: usize, activation: PopActivation, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        PopNetParams {
            weight: Mat::xavier(dim, POP_FACTOR_DIM, rng),
            bias: vec![0.0; dim],
            score_weight: vec![0.0; dim],
            activation,
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.rows
    }
}

/// Popularity embedding `Z = activation(weight . F + bias)`.
pub fn pop_embed(factors: &PopularityFactors, params: &PopNetParams) -> Result<Vec<f64>> {
    if params.weight.cols != POP_FACTOR_DIM || params.bias.len() != params.weight.rows {
        return Err(Error::Config(format!(
            "popularity net expects a (dim x {POP_FACTOR_DIM}) weight with matching bias, got ({} x {}) and {}",
            params.weight.rows,
            params.weight.cols,
            params.bias.len()
        )));
    }
    let mut out = Vec::with_capacity(params.weight.rows);
    for r in 0..params.weight.rows {
        let w = params.weight.row(r);
        let pre: f64 = w
            .iter()
            .zip(factors.as_slice())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + params.bias[r];
        out.push(params.activation.apply(pre));
    }
    Ok(out)
}

/// Scalar logit contribution `Z . W_z`.
pub fn pop_score(z: &[f64], score_weight: &[f64]) -> f64 {
    z.iter().zip(score_weight).map(|(a, b)| a * b).sum()
}
