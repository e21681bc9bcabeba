//! Multi-domain pre-training, fine-tuning, and incremental fine-tuning.
//!
//! Training events slide a next-item target over every training user's
//! sequence. Each event draws uniform in-domain negatives (with replacement,
//! the positive excluded) and optimizes the MAP objective with Adam. After
//! every epoch the in-domain construction is scored on the validation users;
//! the best epoch's snapshot is kept and training stops once `patience`
//! epochs pass without improvement.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, EpochLog};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport, MetricSettings, ModelRanker, TestMode};
use crate::inference::DomainData;
use crate::model::loss::{map_loss_with_grads, Gradients, TrainEvent};
use crate::model::{ModelConfig, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Extra epochs tolerated after the best validation epoch; 0 stops
    /// immediately after the first epoch.
    pub patience: usize,
    /// L2 weight decay added to gradients (PyTorch-Adam style).
    pub weight_decay: f64,
    pub seed: u64,
    /// Metric used for validation early stopping (and reported per epoch).
    pub metric: MetricSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0003,
            batch_size: 256,
            max_epochs: 30,
            patience: 3,
            weight_decay: 0.0,
            seed: 0,
            metric: MetricSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        self.metric.validate()
    }
}

/// Adam with bias correction; weight decay is added to the raw gradient.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new() -> Self {
        AdamState {
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn restore(
        step: u64,
        m: BTreeMap<String, Vec<f64>>,
        v: BTreeMap<String, Vec<f64>>,
    ) -> Self {
        AdamState { step, m, v }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> impl Iterator<Item = (&String, &Vec<f64>)> {
        self.m.iter()
    }

    pub fn second_moments(&self) -> impl Iterator<Item = (&String, &Vec<f64>)> {
        self.v.iter()
    }

    /// One update over every parameter tensor; tensors without gradients
    /// this step still move under their accumulated momentum, which keeps
    /// the update dense and deterministic.
    pub fn apply(
        &mut self,
        params: &mut Parameters,
        grads: &Gradients,
        lr: f64,
        weight_decay: f64,
    ) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - BETA1.powf(t);
        let bc2 = 1.0 - BETA2.powf(t);
        let m_map = &mut self.m;
        let v_map = &mut self.v;
        params.for_each_tensor_mut(|name, data| {
            let m = m_map
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; data.len()]);
            let v = v_map
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; data.len()]);
            let grad = grads.get(name);
            for i in 0..data.len() {
                let mut gi = grad.map(|g| g[i]).unwrap_or(0.0);
                if weight_decay > 0.0 {
                    gi += weight_decay * data[i];
                }
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        });
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new()
    }
}

/// Uniform in-domain negatives, positive excluded, drawn with replacement.
pub fn sample_negatives(
    n_items: usize,
    positive: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if n_items < 2 {
        return Err(Error::Data(format!(
            "cannot sample negatives from a domain with {n_items} item(s)"
        )));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let candidate = rng.gen_range(0..n_items);
        if candidate != positive {
            out.push(candidate);
        }
    }
    Ok(out)
}

/// A (domain, user, position) triple identifying one supervised event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRef {
    pub domain: usize,
    pub user: usize,
    pub pos: usize,
}

/// All next-item events of the given split role, in deterministic order.
pub fn split_events(domains: &[&DomainData], role: crate::corpus::split::SplitRole) -> Vec<EventRef> {
    let mut out = Vec::new();
    for (d, data) in domains.iter().enumerate() {
        for (u, user) in data.dataset.users.iter().enumerate() {
            if data.split.role(&user.user_id) != Some(role) {
                continue;
            }
            for pos in 1..user.items.len() {
                out.push(EventRef {
                    domain: d,
                    user: u,
                    pos,
                });
            }
        }
    }
    out
}

fn build_train_event(
    domains: &[&DomainData],
    ev: EventRef,
    negatives: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainEvent> {
    let data = domains[ev.domain];
    let user = &data.dataset.users[ev.user];
    let positive = user.items[ev.pos];
    let time = user.times[ev.pos];
    let negs = sample_negatives(data.dataset.n_items(), positive, negatives, rng)?;
    let mut candidates = Vec::with_capacity(negs.len() + 1);
    candidates.push(positive);
    candidates.extend(negs);
    let mut factors = Vec::with_capacity(candidates.len());
    for &item in &candidates {
        factors.push(data.counts.factors(item, time)?.0);
    }
    Ok(TrainEvent {
        domain_id: data.dataset.domain_id.clone(),
        user_idx: ev.user,
        history: user.items[..ev.pos].to_vec(),
        time,
        candidates,
        factors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    /// Loss became non-finite; the best snapshot so far was kept.
    Diverged,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub stop: StopReason,
}

/// Mean validation r-NDCG@K% across domains, scoring each domain with its
/// own re-estimated latents.
fn validation_metric(
    params: &Parameters,
    domains: &[&DomainData],
    metric: &MetricSettings,
) -> Result<f64> {
    let mut scores = Vec::new();
    for data in domains {
        let mut ranker = ModelRanker::in_domain(params, data, "validation")?;
        match evaluate_on_role(
            &mut ranker,
            data,
            crate::corpus::split::SplitRole::Validation,
            metric,
        ) {
            Ok(report) => scores.push(report.r_ndcg),
            Err(Error::Data(_)) => continue, // domain without validation events
            Err(e) => return Err(e),
        }
    }
    if scores.is_empty() {
        return Err(Error::Data(
            "no domain produced validation events for early stopping".into(),
        ));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Runs the next-item protocol over an arbitrary split role (the public
/// [`evaluate`] covers the test role).
pub fn evaluate_on_role(
    ranker: &mut dyn crate::evaluation::Ranker,
    data: &DomainData,
    role: crate::corpus::split::SplitRole,
    metric: &MetricSettings,
) -> Result<EvalReport> {
    // Reuse the test-path implementation by remapping roles.
    let mut remapped = data.split.clone();
    for (_, r) in remapped.roles.iter_mut() {
        *r = if *r == role {
            crate::corpus::split::SplitRole::Test
        } else {
            crate::corpus::split::SplitRole::Train
        };
    }
    let view = DomainData {
        dataset: data.dataset.clone(),
        split: remapped,
        counts: data.counts.clone(),
    };
    evaluate(ranker, &view, TestMode::All, metric, None)
}

struct LoopSettings<'a> {
    domains: Vec<&'a DomainData>,
    events: Vec<EventRef>,
    train: TrainConfig,
}

/// The shared epoch loop behind pre-training and fine-tuning.
fn train_loop(mut params: Parameters, settings: LoopSettings<'_>) -> Result<TrainOutcome> {
    settings.train.validate()?;
    let datasets: BTreeMap<String, &crate::corpus::DomainDataset> = settings
        .domains
        .iter()
        .map(|d| (d.dataset.domain_id.clone(), &d.dataset))
        .collect();
    let negatives = params.config.negatives;
    let mut adam = AdamState::new();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.train.seed);
    let mut history: Vec<EpochLog> = Vec::new();
    // Epoch 0 (the untouched parameters) anchors early stopping, so a run
    // whose every epoch hurts validation returns the initial snapshot.
    let mut best_metric =
        validation_metric(&params, &settings.domains, &settings.train.metric)?;
    let mut best_params = params.clone();
    let mut best_adam = adam.clone();
    let mut best_epoch = 0u32;
    let mut since_best = 0usize;
    let mut stop = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..settings.events.len()).collect();

    'epochs: for epoch in 1..=settings.train.max_epochs {
        let t0 = Instant::now();
        // Fisher-Yates with the loop's own stream keeps epochs reproducible.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(settings.train.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                batch.push(build_train_event(
                    &settings.domains,
                    settings.events[idx],
                    negatives,
                    &mut rng,
                )?);
            }
            match map_loss_with_grads(&params, &batch, &datasets) {
                Ok((loss, grads)) => {
                    epoch_loss += loss;
                    adam.apply(
                        &mut params,
                        &grads,
                        settings.train.learning_rate,
                        settings.train.weight_decay,
                    );
                }
                Err(Error::Numeric(msg)) => {
                    history.push(EpochLog {
                        epoch: epoch as u32,
                        train_loss: f64::NAN,
                        val_r_ndcg: f64::NAN,
                        wallclock_s: t0.elapsed().as_secs_f64(),
                    });
                    eprintln!("training diverged at epoch {epoch}: {msg}; keeping best snapshot");
                    stop = StopReason::Diverged;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let val = validation_metric(&params, &settings.domains, &settings.train.metric)?;
        history.push(EpochLog {
            epoch: epoch as u32,
            train_loss: epoch_loss,
            val_r_ndcg: val,
            wallclock_s: t0.elapsed().as_secs_f64(),
        });
        if val > best_metric {
            best_metric = val;
            best_params = params.clone();
            best_adam = adam.clone();
            best_epoch = epoch as u32;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= settings.train.patience {
            stop = StopReason::EarlyStop;
            break;
        }
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params: best_params,
            optimizer: Some(best_adam),
            epoch: best_epoch,
            best_metric,
            history,
            fingerprint: String::new(),
        },
        stop,
    })
}

/// Pre-trains on the union of the source domains' training events.
pub fn pretrain(
    sources: &[&DomainData],
    model_config: ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    if sources.is_empty() {
        return Err(Error::Config("pre-training needs at least one source domain".into()));
    }
    let input_dim = sources[0].dataset.embedding_dim();
    for s in sources {
        if s.dataset.embedding_dim() != input_dim {
            return Err(Error::Data(format!(
                "domain {} has embedding dim {}, expected {input_dim}",
                s.dataset.domain_id,
                s.dataset.embedding_dim()
            )));
        }
    }
    let mut params = Parameters::init(model_config, input_dim)?;
    for s in sources {
        params.add_domain(&s.dataset.domain_id, s.dataset.n_items(), s.dataset.users.len());
    }
    let events = split_events(sources, crate::corpus::split::SplitRole::Train);
    if events.is_empty() {
        return Err(Error::Data("no training events in the source domains".into()));
    }
    train_loop(
        params,
        LoopSettings {
            domains: sources.to_vec(),
            events,
            train: train_config.clone(),
        },
    )
}

/// Fine-tunes a pre-trained checkpoint on a target domain: all parameters
/// unfreeze, and the target gets fresh latent state (D at the prior mean,
/// offsets at zero).
pub fn finetune(
    base: &Checkpoint,
    target: &DomainData,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    let events = split_events(
        &[target],
        crate::corpus::split::SplitRole::Train,
    );
    finetune_on_events(base, target, &events, train_config)
}

fn finetune_on_events(
    base: &Checkpoint,
    target: &DomainData,
    events: &[EventRef],
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    if target.dataset.embedding_dim() != base.params.input_dim {
        return Err(Error::Data(format!(
            "target domain embedding dim {} does not match the checkpoint's {}",
            target.dataset.embedding_dim(),
            base.params.input_dim
        )));
    }
    let mut params = base.params.clone();
    params.add_domain(
        &target.dataset.domain_id,
        target.dataset.n_items(),
        target.dataset.users.len(),
    );
    if train_config.max_epochs == 0 || events.is_empty() {
        return Ok(TrainOutcome {
            checkpoint: Checkpoint::fresh(params),
            stop: StopReason::MaxEpochs,
        });
    }
    train_loop(
        params,
        LoopSettings {
            domains: vec![target],
            events: events.to_vec(),
            train: train_config.clone(),
        },
    )
}

/// Fine-tunes fresh copies of the checkpoint on chronologically-ordered
/// prefixes of the target training events and evaluates each on the fixed
/// test split. `sizes` must be strictly ascending; size 0 is the zero-shot
/// anchor.
pub fn incremental_schedule(
    base: &Checkpoint,
    target: &DomainData,
    sizes: &[usize],
    train_config: &TrainConfig,
) -> Result<Vec<(usize, EvalReport)>> {
    for w in sizes.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config(format!(
                "incremental sizes must be strictly ascending, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let mut events = split_events(&[target], crate::corpus::split::SplitRole::Train);
    // Chronological order of the target events: time, then user id, then
    // position, so prefixes simulate accumulating data.
    events.sort_by(|a, b| {
        let ua = &target.dataset.users[a.user];
        let ub = &target.dataset.users[b.user];
        ua.times[a.pos]
            .cmp(&ub.times[b.pos])
            .then(ua.user_id.cmp(&ub.user_id))
            .then(a.pos.cmp(&b.pos))
    });
    if let Some(&max) = sizes.last() {
        if max > events.len() {
            return Err(Error::Data(format!(
                "requested {max} training events, target has only {}",
                events.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let outcome = finetune_on_events(base, target, &events[..size], train_config)?;
        let label = if size == 0 { "zero_shot" } else { "finetuned" };
        let mut ranker = ModelRanker::in_domain(&outcome.checkpoint.params, target, label)?;
        let report = evaluate(
            &mut ranker,
            target,
            TestMode::All,
            &train_config.metric,
            None,
        )?;
        out.push((size, report));
    }
    Ok(out)
}
