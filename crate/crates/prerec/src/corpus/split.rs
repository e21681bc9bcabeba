//! User-based train/validation/test splitting and unseen-test filtering.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Interaction, InteractionLog};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

/// Deterministic user -> split assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub roles: BTreeMap<String, SplitRole>,
}

impl SplitAssignment {
    pub fn role(&self, user_id: &str) -> Option<SplitRole> {
        self.roles.get(user_id).copied()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for r in self.roles.values() {
            match r {
                SplitRole::Train => c.0 += 1,
                SplitRole::Validation => c.1 += 1,
                SplitRole::Test => c.2 += 1,
            }
        }
        c
    }

    pub fn users_with_role(&self, role: SplitRole) -> Vec<&str> {
        self.roles
            .iter()
            .filter(|(_, &r)| r == role)
            .map(|(u, _)| u.as_str())
            .collect()
    }
}

/// Splits the log's users into train/validation/test by shuffled assignment.
///
/// Users are shuffled with a seeded RNG, then the first `n_train` go to
/// train, the next `n_val` to validation, the rest to test. Counts follow
/// largest-remainder apportionment of `ratios`, so a 4:3:3 request over 10
/// users yields exactly 4/3/3.
pub fn split_users(log: &InteractionLog, ratios: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
    let total_ratio = ratios.0 + ratios.1 + ratios.2;
    if !(total_ratio > 0.0) || ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(Error::Config(format!(
            "split ratios must be non-negative with positive sum, got {ratios:?}"
        )));
    }
    let mut users: Vec<String> = log.user_ids().map(str::to_string).collect();
    if users.is_empty() {
        return Err(Error::Data("cannot split an empty user set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);

    let n = users.len();
    let counts = apportion(n, [ratios.0, ratios.1, ratios.2], total_ratio);
    let mut roles = BTreeMap::new();
    for (i, user) in users.into_iter().enumerate() {
        let role = if i < counts[0] {
            SplitRole::Train
        } else if i < counts[0] + counts[1] {
            SplitRole::Validation
        } else {
            SplitRole::Test
        };
        roles.insert(user, role);
    }
    Ok(SplitAssignment { seed, roles })
}

/// Derives a per-domain split seed from the experiment seed. FNV-1a keeps
/// the mapping stable across toolchains.
pub fn domain_split_seed(base: u64, domain_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in domain_id.as_bytes() {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    base ^ h
}

/// Largest-remainder apportionment; ties favor the earlier bucket.
fn apportion(n: usize, ratios: [f64; 3], total: f64) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| n as f64 * r / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for k in 0..(n - assigned) {
        counts[order[k % 3]] += 1;
    }
    [counts[0], counts[1], counts[2]]
}

/// Removes from `test_log` every user and item whose id appears in any
/// source log. Remaining interactions are the "unseen" test set.
pub fn filter_unseen(test_log: &InteractionLog, source_logs: &[&InteractionLog]) -> InteractionLog {
    let mut seen_users = std::collections::BTreeSet::new();
    let mut seen_items = std::collections::BTreeSet::new();
    for log in source_logs {
        seen_users.extend(log.user_id_set());
        seen_items.extend(log.item_id_set());
    }
    let events: Vec<Interaction> = test_log
        .events()
        .iter()
        .filter(|e| !seen_users.contains(&e.user_id) && !seen_items.contains(&e.item_id))
        .cloned()
        .collect();
    InteractionLog::from_events(events).expect("filtering cannot invalidate timestamps")
}
