//! The MAP training objective and its gradients.
//!
//! For a batch of next-item events the loss is the summed sampled-softmax
//! cross-entropy plus the Gaussian-prior residual terms:
//! `lambda_z/2 ||eps_z||^2 + lambda_v/2 ||eps_v||^2 + lambda_u/2 ||eps_u||^2
//! + lambda_d/2 ||D_k||^2`, summed over the distinct items, users, and
//! domains the batch touches. Offsets that are disabled by configuration are
//! pinned to zero, so their residual terms vanish identically.

use std::collections::BTreeMap;

use crate::autodiff::{Graph, TensorId};
use crate::corpus::DomainDataset;
use crate::error::{Error, Result};
use crate::model::{ParamLeaves, Parameters};
use crate::popularity::{PopActivation, POP_FACTOR_DIM};

/// One supervised next-item event. `candidates` holds the positive item
/// first, then the sampled negatives; `factors` are the candidates'
/// popularity factors at the event time.
#[derive(Debug, Clone)]
pub struct TrainEvent {
    pub domain_id: String,
    /// Index into the domain dataset's user list.
    pub user_idx: usize,
    pub history: Vec<usize>,
    pub time: i64,
    pub candidates: Vec<usize>,
    pub factors: Vec<[f64; POP_FACTOR_DIM]>,
}

/// Accumulated gradients keyed by the parameter tensor names of
/// [`Parameters::for_each_tensor`].
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    map: BTreeMap<String, Vec<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Gradients::default()
    }

    pub fn add(&mut self, name: &str, data: &[f64]) {
        match self.map.get_mut(name) {
            Some(existing) => {
                for (e, d) in existing.iter_mut().zip(data) {
                    *e += d;
                }
            }
            None => {
                self.map.insert(name.to_string(), data.to_vec());
            }
        }
    }

    /// Scatter-adds `rows x cols` gradient rows into a full-size tensor grad.
    pub fn add_rows(
        &mut self,
        name: &str,
        full_len: usize,
        cols: usize,
        row_indexes: &[usize],
        data: &[f64],
    ) {
        let entry = self
            .map
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; full_len]);
        for (local, &row) in row_indexes.iter().enumerate() {
            for c in 0..cols {
                entry[row * cols + c] += data[local * cols + c];
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.map.get(name).map(|v| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }
}

/// Per-domain bookkeeping for one batch: which item/user rows participate.
struct DomainSlots {
    items: Vec<usize>,
    item_pos: BTreeMap<usize, usize>,
    users: Vec<usize>,
    user_pos: BTreeMap<usize, usize>,
    d_leaf: Option<TensorId>,
    voff_leaf: TensorId,
    zoff_leaf: Option<TensorId>,
    uoff_leaf: Option<TensorId>,
}

fn activation_apply(g: &mut Graph, x: TensorId, act: PopActivation) -> TensorId {
    match act {
        PopActivation::Tanh => g.tanh(x),
        PopActivation::Identity => x,
        PopActivation::Relu => g.relu(x),
    }
}

fn batch_layout(
    g: &mut Graph,
    params: &Parameters,
    events: &[TrainEvent],
) -> Result<BTreeMap<String, DomainSlots>> {
    let b = params.config.embed_dim;
    let mut per_domain: BTreeMap<String, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for ev in events {
        let entry = per_domain.entry(ev.domain_id.clone()).or_default();
        entry.0.extend(ev.candidates.iter().copied());
        entry.1.push(ev.user_idx);
    }
    let mut out = BTreeMap::new();
    for (domain_id, (mut items, mut users)) in per_domain {
        let dom = params.domain(&domain_id)?;
        items.sort_unstable();
        items.dedup();
        users.sort_unstable();
        users.dedup();
        let item_pos: BTreeMap<usize, usize> =
            items.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let user_pos: BTreeMap<usize, usize> =
            users.iter().enumerate().map(|(p, &u)| (u, p)).collect();

        let d_leaf = params
            .config
            .use_domain_bias
            .then(|| g.leaf_from(1, b, &dom.d));
        let mut voff_rows = Vec::with_capacity(items.len() * b);
        for &i in &items {
            if i >= dom.v_offsets.rows {
                return Err(Error::Data(format!(
                    "item index {i} out of range for domain {domain_id}"
                )));
            }
            voff_rows.extend_from_slice(dom.v_offsets.row(i));
        }
        let voff_leaf = g.leaf(items.len(), b, voff_rows);
        let zoff_leaf = match &dom.z_offsets {
            Some(z) if params.config.use_popularity => {
                let mut rows = Vec::with_capacity(items.len() * b);
                for &i in &items {
                    rows.extend_from_slice(z.row(i));
                }
                Some(g.leaf(items.len(), b, rows))
            }
            _ => None,
        };
        let uoff_leaf = match &dom.u_offsets {
            Some(u) => {
                let mut rows = Vec::with_capacity(users.len() * b);
                for &i in &users {
                    if i >= u.rows {
                        return Err(Error::Data(format!(
                            "user index {i} out of range for domain {domain_id}"
                        )));
                    }
                    rows.extend_from_slice(u.row(i));
                }
                Some(g.leaf(users.len(), b, rows))
            }
            None => None,
        };
        out.insert(
            domain_id,
            DomainSlots {
                items,
                item_pos,
                users,
                user_pos,
                d_leaf,
                voff_leaf,
                zoff_leaf,
                uoff_leaf,
            },
        );
    }
    Ok(out)
}

fn build_loss(
    g: &mut Graph,
    params: &Parameters,
    events: &[TrainEvent],
    data: &BTreeMap<String, &DomainDataset>,
) -> Result<(TensorId, ParamLeaves, BTreeMap<String, DomainSlots>)> {
    let b = params.config.embed_dim;
    let cfg = &params.config;
    let leaves = ParamLeaves::new(g, params);
    let slots = batch_layout(g, params, events)?;

    let mut total = g.zeros(1, 1);
    for (ev_idx, ev) in events.iter().enumerate() {
        if ev.candidates.is_empty() {
            return Err(Error::Data(format!("event {ev_idx} has no candidates")));
        }
        if ev.candidates.len() != ev.factors.len() {
            return Err(Error::Data(format!(
                "event {ev_idx}: {} candidates but {} factor rows",
                ev.candidates.len(),
                ev.factors.len()
            )));
        }
        let ds = data.get(&ev.domain_id).ok_or_else(|| {
            Error::Data(format!("no dataset supplied for domain {}", ev.domain_id))
        })?;
        let slot = &slots[&ev.domain_id];

        // User side: prefix token, projected history, encoder, last position.
        let prior = match slot.d_leaf {
            Some(d) => d,
            None => g.zeros(1, b),
        };
        let keep = ev.history.len().min(cfg.max_seq_len);
        let hist: Vec<&[f32]> = ev.history[ev.history.len() - keep..]
            .iter()
            .map(|&i| ds.embeddings[i].as_slice())
            .collect();
        let enc = super::seq::encode_history(g, params, &leaves, prior, &hist);
        let (rows, _) = g.shape(enc);
        let mut u = g.slice_rows(enc, rows - 1, 1);
        if let Some(uoff) = slot.uoff_leaf {
            let local = [slot.user_pos[&ev.user_idx]];
            let off = g.gather_rows(uoff, &local);
            u = g.add(u, off);
        }

        // Item side: projected content, popularity embedding, offsets.
        let c = ev.candidates.len();
        let mut cand_flat = Vec::with_capacity(c * params.input_dim);
        for &item in &ev.candidates {
            cand_flat.extend(ds.embeddings[item].iter().map(|&v| v as f64));
        }
        let cand_x = g.leaf(c, params.input_dim, cand_flat);
        let m_c = g.matmul_trans_b(cand_x, leaves.proj_w);
        let m_c = g.add_row(m_c, leaves.proj_b);

        let local_pos: Vec<usize> = ev.candidates.iter().map(|i| slot.item_pos[i]).collect();
        let mut v = m_c;
        let mut z_opt = None;
        if cfg.use_popularity {
            let f_flat: Vec<f64> = ev.factors.iter().flatten().copied().collect();
            let f_leaf = g.leaf(c, POP_FACTOR_DIM, f_flat);
            let z_pre = g.matmul_trans_b(f_leaf, leaves.pop_w);
            let z_pre = g.add_row(z_pre, leaves.pop_b);
            let mut z = activation_apply(g, z_pre, cfg.pop_activation);
            if let Some(zoff) = slot.zoff_leaf {
                let off = g.gather_rows(zoff, &local_pos);
                z = g.add(z, off);
            }
            v = g.add(v, z);
            z_opt = Some(z);
        }
        let voff = g.gather_rows(slot.voff_leaf, &local_pos);
        v = g.add(v, voff);
        if let Some(d) = slot.d_leaf {
            v = g.add_row(v, d);
        }

        let mut logits = g.matmul_trans_b(u, v);
        if let Some(z) = z_opt {
            let z_score = g.matmul_trans_b(leaves.w_z, z);
            logits = g.add(logits, z_score);
        }
        if let Some(d) = slot.d_leaf {
            let shift = g.dot(d, leaves.w_d);
            logits = g.add_scalar_t(logits, shift);
        }
        let lsm = g.log_softmax_rows(logits);
        let pos_ll = g.slice_cols(lsm, 0, 1);
        let ce = g.scale(pos_ll, -1.0);
        let ce_val = g.scalar_value(ce);
        if !ce_val.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite cross-entropy ({ce_val}) for event {ev_idx} in domain {}",
                ev.domain_id
            )));
        }
        total = g.add(total, ce);
    }

    // Prior residual terms over the batch's distinct domains/items/users.
    for slot in slots.values() {
        if let Some(d) = slot.d_leaf {
            if cfg.lambda_d > 0.0 {
                let sq = g.squared_norm(d);
                let term = g.scale(sq, cfg.lambda_d / 2.0);
                total = g.add(total, term);
            }
        }
        if cfg.lambda_v > 0.0 {
            let sq = g.squared_norm(slot.voff_leaf);
            let term = g.scale(sq, cfg.lambda_v / 2.0);
            total = g.add(total, term);
        }
        if let Some(z) = slot.zoff_leaf {
            if cfg.lambda_z > 0.0 {
                let sq = g.squared_norm(z);
                let term = g.scale(sq, cfg.lambda_z / 2.0);
                total = g.add(total, term);
            }
        }
        if let Some(u) = slot.uoff_leaf {
            if cfg.lambda_u > 0.0 {
                let sq = g.squared_norm(u);
                let term = g.scale(sq, cfg.lambda_u / 2.0);
                total = g.add(total, term);
            }
        }
    }

    let value = g.scalar_value(total);
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss ({value}) over a batch of {} events",
            events.len()
        )));
    }
    Ok((total, leaves, slots))
}

/// Loss value for a batch.
pub fn map_loss(
    params: &Parameters,
    events: &[TrainEvent],
    data: &BTreeMap<String, &DomainDataset>,
) -> Result<f64> {
    if events.is_empty() {
        return Ok(0.0);
    }
    let mut g = Graph::new();
    let (total, _, _) = build_loss(&mut g, params, events, data)?;
    Ok(g.scalar_value(total))
}

/// Loss value plus gradients for every touched parameter tensor.
pub fn map_loss_with_grads(
    params: &Parameters,
    events: &[TrainEvent],
    data: &BTreeMap<String, &DomainDataset>,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::new();
    if events.is_empty() {
        return Ok((0.0, grads));
    }
    let mut g = Graph::new();
    let (total, leaves, slots) = build_loss(&mut g, params, events, data)?;
    let value = g.scalar_value(total);
    g.backward(total);
    leaves.collect_grads(&g, &mut grads);
    let b = params.config.embed_dim;
    for (domain_id, slot) in &slots {
        let dom = params.domain(domain_id)?;
        if let Some(d) = slot.d_leaf {
            grads.add(&format!("dom/{domain_id}/d"), g.grad(d));
        }
        grads.add_rows(
            &format!("dom/{domain_id}/voff"),
            dom.v_offsets.data.len(),
            b,
            &slot.items,
            g.grad(slot.voff_leaf),
        );
        if let (Some(zoff), Some(z)) = (&dom.z_offsets, slot.zoff_leaf) {
            grads.add_rows(
                &format!("dom/{domain_id}/zoff"),
                zoff.data.len(),
                b,
                &slot.items,
                g.grad(z),
            );
        }
        if let (Some(uoff), Some(u)) = (&dom.u_offsets, slot.uoff_leaf) {
            grads.add_rows(
                &format!("dom/{domain_id}/uoff"),
                uoff.data.len(),
                b,
                &slot.users,
                g.grad(u),
            );
        }
    }
    Ok((value, grads))
}
