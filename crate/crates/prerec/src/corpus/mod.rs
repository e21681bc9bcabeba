//! Dataset model: interaction logs, item catalogs, user splits, and the
//! synthetic multi-domain benchmark generator.

pub mod load;
pub mod split;
pub mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

/// One observed (user, item, domain, time) event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub domain_id: String,
    /// Seconds since epoch; non-negative.
    pub timestamp: i64,
}

/// An immutable log with per-user chronological ordering.
///
/// Events keep their input order in `events`; each user's view is sorted by
/// `(timestamp, input index)`, so ties resolve to file order.
#[derive(Debug, Clone, Default)]
pub struct InteractionLog {
    events: Vec<Interaction>,
    per_user: BTreeMap<String, Vec<usize>>,
}

impl InteractionLog {
    pub fn from_events(events: Vec<Interaction>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if e.timestamp < 0 {
                return Err(Error::Data(format!(
                    "negative timestamp {} for user {} (event {})",
                    e.timestamp, e.user_id, i
                )));
            }
        }
        let mut per_user: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            per_user.entry(e.user_id.clone()).or_default().push(i);
        }
        for idxs in per_user.values_mut() {
            idxs.sort_by_key(|&i| (events[i].timestamp, i));
        }
        Ok(InteractionLog { events, per_user })
    }

    pub fn events(&self) -> &[Interaction] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }

    /// User ids in sorted order.
    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.per_user.keys().map(|s| s.as_str())
    }

    /// Chronological event indexes for one user.
    pub fn user_events(&self, user_id: &str) -> Option<&[usize]> {
        self.per_user.get(user_id).map(|v| v.as_slice())
    }

    pub fn domain_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .events
            .iter()
            .map(|e| e.domain_id.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        ids.sort();
        ids
    }

    pub fn item_id_set(&self) -> std::collections::BTreeSet<String> {
        self.events.iter().map(|e| e.item_id.clone()).collect()
    }

    pub fn user_id_set(&self) -> std::collections::BTreeSet<String> {
        self.per_user.keys().cloned().collect()
    }

    /// The events of a single domain, preserving relative order.
    pub fn restrict_to_domain(&self, domain_id: &str) -> InteractionLog {
        let events: Vec<Interaction> = self
            .events
            .iter()
            .filter(|e| e.domain_id == domain_id)
            .cloned()
            .collect();
        InteractionLog::from_events(events).expect("restricting cannot invalidate timestamps")
    }

    pub fn min_timestamp(&self) -> Option<i64> {
        self.events.iter().map(|e| e.timestamp).min()
    }

    pub fn max_timestamp(&self) -> Option<i64> {
        self.events.iter().map(|e| e.timestamp).max()
    }
}

/// Catalog entry: domain, optional description text, optional row into an
/// embedding table. At least one of `text` / `embedding_ref` must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub domain_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct ItemCatalog {
    records: Vec<ItemRecord>,
    index: BTreeMap<String, usize>,
}

impl ItemCatalog {
    pub fn from_records(records: Vec<ItemRecord>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.text.is_none() && r.embedding_ref.is_none() {
                return Err(Error::Data(format!(
                    "catalog item {} carries neither text nor an embedding reference",
                    r.item_id
                )));
            }
            if index.insert(r.item_id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate catalog item {}", r.item_id)));
            }
        }
        Ok(ItemCatalog { records, index })
    }

    pub fn records(&self) -> &[ItemRecord] {
        &self.records
    }

    pub fn get(&self, item_id: &str) -> Option<&ItemRecord> {
        self.index.get(item_id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Item ids of one domain, sorted.
    pub fn domain_items(&self, domain_id: &str) -> Vec<String> {
        let mut ids: Vec<String> = self
            .records
            .iter()
            .filter(|r| r.domain_id == domain_id)
            .map(|r| r.item_id.clone())
            .collect();
        ids.sort();
        ids
    }
}

/// Per-domain counts, checked against the log and catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainMeta {
    pub domain_id: String,
    pub item_count: usize,
    pub user_count: usize,
}

pub fn domain_meta(log: &InteractionLog, catalog: &ItemCatalog) -> Vec<DomainMeta> {
    let mut users_per_domain: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
    for e in log.events() {
        users_per_domain
            .entry(e.domain_id.as_str())
            .or_default()
            .insert(e.user_id.as_str());
    }
    let mut items_per_domain: BTreeMap<&str, usize> = BTreeMap::new();
    for r in catalog.records() {
        *items_per_domain.entry(r.domain_id.as_str()).or_default() += 1;
    }
    let mut domains: std::collections::BTreeSet<&str> = items_per_domain.keys().copied().collect();
    domains.extend(users_per_domain.keys().copied());
    domains
        .into_iter()
        .map(|d| DomainMeta {
            domain_id: d.to_string(),
            item_count: items_per_domain.get(d).copied().unwrap_or(0),
            user_count: users_per_domain.get(d).map(|s| s.len()).unwrap_or(0),
        })
        .collect()
}


/// One user's chronological sequence inside a [`DomainDataset`].
#[derive(Debug, Clone)]
pub struct UserSeq {
    pub user_id: String,
    /// Indexes into the dataset's item list.
    pub items: Vec<usize>,
    pub times: Vec<i64>,
}

/// A fully resolved single-domain dataset: catalog order, raw input
/// embeddings aligned with it, and per-user chronological sequences.
///
/// Users with fewer than two events cannot produce a (history, target) pair
/// and are dropped; `dropped_short_users` records how many.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    pub domain_id: String,
    pub items: Vec<String>,
    pub item_index: BTreeMap<String, usize>,
    pub embeddings: Vec<Vec<f32>>,
    pub users: Vec<UserSeq>,
    pub dropped_short_users: usize,
}

impl DomainDataset {
    pub fn assemble(
        log: &InteractionLog,
        catalog: &ItemCatalog,
        table: &EmbeddingTable,
        domain_id: &str,
    ) -> Result<Self> {
        let items = catalog.domain_items(domain_id);
        if items.is_empty() {
            return Err(Error::Data(format!(
                "catalog holds no items for domain {domain_id}"
            )));
        }
        let item_index: BTreeMap<String, usize> = items
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let mut embeddings = Vec::with_capacity(items.len());
        let mut dim = None;
        for id in &items {
            let record = catalog.get(id).expect("domain_items came from the catalog");
            let row = match record.embedding_ref {
                Some(r) => {
                    if r * table.dim() >= table.len() * table.dim() {
                        return Err(Error::Data(format!(
                            "embedding_ref {r} for item {id} exceeds table size {}",
                            table.len()
                        )));
                    }
                    table.row(r)
                }
                None => table.get(id).ok_or_else(|| {
                    Error::Data(format!(
                        "item {id} has no embedding; encode its text or extend the table"
                    ))
                })?,
            };
            if let Some(d) = dim {
                if row.len() != d {
                    return Err(Error::Data(format!(
                        "embedding dim for item {id} is {}, expected {d}",
                        row.len()
                    )));
                }
            } else {
                dim = Some(row.len());
            }
            embeddings.push(row.to_vec());
        }

        let domain_log = log.restrict_to_domain(domain_id);
        let mut users = Vec::new();
        let mut dropped = 0usize;
        for user_id in domain_log.user_id_set() {
            let idxs = domain_log.user_events(&user_id).unwrap();
            if idxs.len() < 2 {
                dropped += 1;
                continue;
            }
            let mut seq_items = Vec::with_capacity(idxs.len());
            let mut times = Vec::with_capacity(idxs.len());
            for &i in idxs {
                let e = &domain_log.events()[i];
                let item = *item_index.get(&e.item_id).ok_or_else(|| {
                    Error::Data(format!(
                        "interaction references item {} missing from domain {domain_id} catalog",
                        e.item_id
                    ))
                })?;
                seq_items.push(item);
                times.push(e.timestamp);
            }
            users.push(UserSeq {
                user_id,
                items: seq_items,
                times,
            });
        }
        Ok(DomainDataset {
            domain_id: domain_id.to_string(),
            items,
            item_index,
            embeddings,
            users,
            dropped_short_users: dropped,
        })
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.first().map(|v| v.len()).unwrap_or(0)
    }

    pub fn user(&self, user_id: &str) -> Option<&UserSeq> {
        self.users.iter().find(|u| u.user_id == user_id)
    }
}
