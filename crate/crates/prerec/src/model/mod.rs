//! Model state and scoring: latent tables, the sequential user encoder, the
//! item encoder, and the training objective.
//!
//! The item encoder is additive: `V_j = D_k + Z_j + m_j + eps_j`, where `D_k`
//! is the per-domain latent (zero-mean Gaussian prior, precision `lambda_d`),
//! `Z_j` the popularity embedding, `m_j` the projected content embedding, and
//! `eps_j` a free per-item offset (prior precision `lambda_v`). Logits are
//! `U_i . V_j + D_k . W_d + Z_j . W_z`, softmax-normalized over the domain's
//! candidate set.

pub mod loss;
pub mod seq;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_in_place, Graph, TensorId};
use crate::embedding::ProjectionParams;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::popularity::{PopActivation, PopNetParams, POP_FACTOR_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeqEncoderKind {
    Transformer,
    Gru,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden dimension B shared by all latents.
    pub embed_dim: usize,
    /// Encoder depth (attention layers, or GRU layers for the GRU variant).
    pub layers: usize,
    pub heads: usize,
    /// Maximum history length; the domain-prior prefix token is extra.
    pub max_seq_len: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_d: f64,
    pub lambda_z: f64,
    /// Negative samples per positive during training.
    pub negatives: usize,
    pub seed: u64,
    pub encoder: SeqEncoderKind,
    pub pop_activation: PopActivation,
    /// Free per-item popularity offsets eps_z.
    pub free_z_offsets: bool,
    /// Free per-user offsets eps_u.
    pub free_u_offsets: bool,
    /// Learn the cross-domain bias terms (D_k and W_d). Disabled for the
    /// debiasing ablation.
    pub use_domain_bias: bool,
    /// Learn the popularity path (Z_j and W_z). Disabled for the ablation.
    pub use_popularity: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 256,
            layers: 2,
            heads: 2,
            max_seq_len: 50,
            lambda_u: 0.0,
            lambda_v: 100.0,
            lambda_d: 0.3,
            lambda_z: 100.0,
            negatives: 255,
            seed: 0,
            encoder: SeqEncoderKind::Transformer,
            pop_activation: PopActivation::Tanh,
            free_z_offsets: false,
            free_u_offsets: false,
            use_domain_bias: true,
            use_popularity: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "heads ({}) must divide embed_dim ({})",
                self.heads, self.embed_dim
            )));
        }
        if self.max_seq_len == 0 {
            return Err(Error::Config("max_seq_len must be positive".into()));
        }
        for (name, l) in [
            ("lambda_u", self.lambda_u),
            ("lambda_v", self.lambda_v),
            ("lambda_d", self.lambda_d),
            ("lambda_z", self.lambda_z),
        ] {
            if !(l >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {l}")));
            }
        }
        Ok(())
    }

    /// The ablated variant: no cross-domain and no popularity bias terms.
    pub fn ablated(mut self) -> Self {
        self.use_domain_bias = false;
        self.use_popularity = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLayerParams {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub bq: Vec<f64>,
    pub bk: Vec<f64>,
    pub bv: Vec<f64>,
    pub bo: Vec<f64>,
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub ffn_w1: Mat,
    pub ffn_b1: Vec<f64>,
    pub ffn_w2: Mat,
    pub ffn_b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    pub layers: Vec<TransformerLayerParams>,
    pub final_gain: Vec<f64>,
    pub final_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    pub w_xz: Mat,
    pub w_hz: Mat,
    pub b_z: Vec<f64>,
    pub w_xr: Mat,
    pub w_hr: Mat,
    pub b_r: Vec<f64>,
    pub w_xh: Mat,
    pub w_hh: Mat,
    pub b_h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams {
    Transformer(TransformerParams),
    Gru(Vec<GruLayerParams>),
}

/// Per-domain latent state: the domain vector and free offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainParams {
    /// D_k; initialized at the prior mean 0.
    pub d: Vec<f64>,
    /// eps_v, one row per catalog item.
    pub v_offsets: Mat,
    /// eps_z rows, present when `free_z_offsets`.
    pub z_offsets: Option<Mat>,
    /// eps_u rows aligned with the dataset's user order, when `free_u_offsets`.
    pub u_offsets: Option<Mat>,
}

/// All learnable state.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub projection: ProjectionParams,
    /// f_pop plus its scoring weight W_z.
    pub pop: PopNetParams,
    /// W_d.
    pub w_d: Vec<f64>,
    /// Learned positions, one row per sequence slot (prefix + history).
    pub pos_emb: Mat,
    pub encoder: EncoderParams,
    pub domains: BTreeMap<String, DomainParams>,
}

const INIT_SIGMA: f64 = 0.02;

impl Parameters {
    pub fn init(config: ModelConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input embedding dim must be positive".into()));
        }
        let b = config.embed_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let projection = ProjectionParams::init(input_dim, b, &mut rng);
        let mut pop = PopNetParams::init(b, config.pop_activation, &mut rng);
        pop.score_weight = Mat::gaussian(1, b, INIT_SIGMA, &mut rng).data;
        let w_d = Mat::gaussian(1, b, INIT_SIGMA, &mut rng).data;
        let pos_emb = Mat::gaussian(config.max_seq_len + 1, b, INIT_SIGMA, &mut rng);
        let encoder = match config.encoder {
            SeqEncoderKind::Transformer => {
                let layers = (0..config.layers)
                    .map(|_| TransformerLayerParams {
                        wq: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        wk: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        wv: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        wo: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        bq: vec![0.0; b],
                        bk: vec![0.0; b],
                        bv: vec![0.0; b],
                        bo: vec![0.0; b],
                        ln1_gain: vec![1.0; b],
                        ln1_bias: vec![0.0; b],
                        ln2_gain: vec![1.0; b],
                        ln2_bias: vec![0.0; b],
                        ffn_w1: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        ffn_b1: vec![0.0; b],
                        ffn_w2: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        ffn_b2: vec![0.0; b],
                    })
                    .collect();
                EncoderParams::Transformer(TransformerParams {
                    layers,
                    final_gain: vec![1.0; b],
                    final_bias: vec![0.0; b],
                })
            }
            SeqEncoderKind::Gru => {
                let layers = (0..config.layers)
                    .map(|_| GruLayerParams {
                        w_xz: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        w_hz: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        b_z: vec![0.0; b],
                        w_xr: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        w_hr: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        b_r: vec![0.0; b],
                        w_xh: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        w_hh: Mat::gaussian(b, b, INIT_SIGMA, &mut rng),
                        b_h: vec![0.0; b],
                    })
                    .collect();
                EncoderParams::Gru(layers)
            }
        };
        Ok(Parameters {
            config,
            input_dim,
            projection,
            pop,
            w_d,
            pos_emb,
            encoder,
            domains: BTreeMap::new(),
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Registers fresh latent state for a domain: D at the prior mean, all
    /// offsets zero. Replaces any existing entry for the id.
    pub fn add_domain(&mut self, domain_id: &str, n_items: usize, n_users: usize) {
        let b = self.config.embed_dim;
        let domain = DomainParams {
            d: vec![0.0; b],
            v_offsets: Mat::zeros(n_items, b),
            z_offsets: self.config.free_z_offsets.then(|| Mat::zeros(n_items, b)),
            u_offsets: self.config.free_u_offsets.then(|| Mat::zeros(n_users, b)),
        };
        self.domains.insert(domain_id.to_string(), domain);
    }

    pub fn domain(&self, domain_id: &str) -> Result<&DomainParams> {
        self.domains
            .get(domain_id)
            .ok_or_else(|| Error::Data(format!("domain {domain_id} absent from the checkpoint")))
    }

    /// Visits every tensor (name, data) in a fixed, deterministic order.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&str, &[f64])) {
        f("proj/w", &self.projection.weight.data);
        f("proj/b", &self.projection.bias);
        f("pop/w", &self.pop.weight.data);
        f("pop/b", &self.pop.bias);
        f("score/wz", &self.pop.score_weight);
        f("score/wd", &self.w_d);
        f("pos", &self.pos_emb.data);
        match &self.encoder {
            EncoderParams::Transformer(t) => {
                for (i, l) in t.layers.iter().enumerate() {
                    f(&format!("tf/{i}/wq"), &l.wq.data);
                    f(&format!("tf/{i}/wk"), &l.wk.data);
                    f(&format!("tf/{i}/wv"), &l.wv.data);
                    f(&format!("tf/{i}/wo"), &l.wo.data);
                    f(&format!("tf/{i}/bq"), &l.bq);
                    f(&format!("tf/{i}/bk"), &l.bk);
                    f(&format!("tf/{i}/bv"), &l.bv);
                    f(&format!("tf/{i}/bo"), &l.bo);
                    f(&format!("tf/{i}/ln1g"), &l.ln1_gain);
                    f(&format!("tf/{i}/ln1b"), &l.ln1_bias);
                    f(&format!("tf/{i}/ln2g"), &l.ln2_gain);
                    f(&format!("tf/{i}/ln2b"), &l.ln2_bias);
                    f(&format!("tf/{i}/ffw1"), &l.ffn_w1.data);
                    f(&format!("tf/{i}/ffb1"), &l.ffn_b1);
                    f(&format!("tf/{i}/ffw2"), &l.ffn_w2.data);
                    f(&format!("tf/{i}/ffb2"), &l.ffn_b2);
                }
                f("tf/final_g", &t.final_gain);
                f("tf/final_b", &t.final_bias);
            }
            EncoderParams::Gru(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    f(&format!("gru/{i}/wxz"), &l.w_xz.data);
                    f(&format!("gru/{i}/whz"), &l.w_hz.data);
                    f(&format!("gru/{i}/bz"), &l.b_z);
                    f(&format!("gru/{i}/wxr"), &l.w_xr.data);
                    f(&format!("gru/{i}/whr"), &l.w_hr.data);
                    f(&format!("gru/{i}/br"), &l.b_r);
                    f(&format!("gru/{i}/wxh"), &l.w_xh.data);
                    f(&format!("gru/{i}/whh"), &l.w_hh.data);
                    f(&format!("gru/{i}/bh"), &l.b_h);
                }
            }
        }
        for (id, dom) in self.domains.iter() {
            f(&format!("dom/{id}/d"), &dom.d);
            f(&format!("dom/{id}/voff"), &dom.v_offsets.data);
            if let Some(z) = &dom.z_offsets {
                f(&format!("dom/{id}/zoff"), &z.data);
            }
            if let Some(u) = &dom.u_offsets {
                f(&format!("dom/{id}/uoff"), &u.data);
            }
        }
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut Vec<f64>)) {
        f("proj/w", &mut self.projection.weight.data);
        f("proj/b", &mut self.projection.bias);
        f("pop/w", &mut self.pop.weight.data);
        f("pop/b", &mut self.pop.bias);
        f("score/wz", &mut self.pop.score_weight);
        f("score/wd", &mut self.w_d);
        f("pos", &mut self.pos_emb.data);
        match &mut self.encoder {
            EncoderParams::Transformer(t) => {
                for (i, l) in t.layers.iter_mut().enumerate() {
                    f(&format!("tf/{i}/wq"), &mut l.wq.data);
                    f(&format!("tf/{i}/wk"), &mut l.wk.data);
                    f(&format!("tf/{i}/wv"), &mut l.wv.data);
                    f(&format!("tf/{i}/wo"), &mut l.wo.data);
                    f(&format!("tf/{i}/bq"), &mut l.bq);
                    f(&format!("tf/{i}/bk"), &mut l.bk);
                    f(&format!("tf/{i}/bv"), &mut l.bv);
                    f(&format!("tf/{i}/bo"), &mut l.bo);
                    f(&format!("tf/{i}/ln1g"), &mut l.ln1_gain);
                    f(&format!("tf/{i}/ln1b"), &mut l.ln1_bias);
                    f(&format!("tf/{i}/ln2g"), &mut l.ln2_gain);
                    f(&format!("tf/{i}/ln2b"), &mut l.ln2_bias);
                    f(&format!("tf/{i}/ffw1"), &mut l.ffn_w1.data);
                    f(&format!("tf/{i}/ffb1"), &mut l.ffn_b1);
                    f(&format!("tf/{i}/ffw2"), &mut l.ffn_w2.data);
                    f(&format!("tf/{i}/ffb2"), &mut l.ffn_b2);
                }
                f("tf/final_g", &mut t.final_gain);
                f("tf/final_b", &mut t.final_bias);
            }
            EncoderParams::Gru(layers) => {
                for (i, l) in layers.iter_mut().enumerate() {
                    f(&format!("gru/{i}/wxz"), &mut l.w_xz.data);
                    f(&format!("gru/{i}/whz"), &mut l.w_hz.data);
                    f(&format!("gru/{i}/bz"), &mut l.b_z);
                    f(&format!("gru/{i}/wxr"), &mut l.w_xr.data);
                    f(&format!("gru/{i}/whr"), &mut l.w_hr.data);
                    f(&format!("gru/{i}/br"), &mut l.b_r);
                    f(&format!("gru/{i}/wxh"), &mut l.w_xh.data);
                    f(&format!("gru/{i}/whh"), &mut l.w_hh.data);
                    f(&format!("gru/{i}/bh"), &mut l.b_h);
                }
            }
        }
        for (id, dom) in self.domains.iter_mut() {
            f(&format!("dom/{id}/d"), &mut dom.d);
            f(&format!("dom/{id}/voff"), &mut dom.v_offsets.data);
            if let Some(z) = &mut dom.z_offsets {
                f(&format!("dom/{id}/zoff"), &mut z.data);
            }
            if let Some(u) = &mut dom.u_offsets {
                f(&format!("dom/{id}/uoff"), &mut u.data);
            }
        }
    }
}

/// The additive item encoder: `V = D + Z + m + offset`.
pub fn item_latent(d: &[f64], z: &[f64], m: &[f64], offset: &[f64]) -> Result<Vec<f64>> {
    let b = d.len();
    if z.len() != b || m.len() != b || offset.len() != b {
        return Err(Error::Config(format!(
            "item encoder dims differ: {} {} {} {}",
            b,
            z.len(),
            m.len(),
            offset.len()
        )));
    }
    // D added last keeps the domain shift exactly recoverable by
    // subtraction whenever the remaining sum is representable.
    Ok((0..b).map(|i| z[i] + m[i] + offset[i] + d[i]).collect())
}

/// Logits over an aligned candidate list:
/// `logit_j = U . V_j + D . W_d + Z_j . W_z`.
pub fn score_logits(
    u: &[f64],
    v_candidates: &[Vec<f64>],
    d: &[f64],
    z_candidates: &[Vec<f64>],
    w_d: &[f64],
    w_z: &[f64],
) -> Result<Vec<f64>> {
    if v_candidates.is_empty() {
        return Err(Error::Data("empty candidate set".into()));
    }
    if v_candidates.len() != z_candidates.len() {
        return Err(Error::Config("candidate lists are not aligned".into()));
    }
    let b = u.len();
    if d.len() != b || w_d.len() != b || w_z.len() != b {
        return Err(Error::Config("scoring dims differ".into()));
    }
    let d_shift: f64 = d.iter().zip(w_d).map(|(a, b)| a * b).sum();
    let mut logits = Vec::with_capacity(v_candidates.len());
    for (v, z) in v_candidates.iter().zip(z_candidates) {
        if v.len() != b || z.len() != b {
            return Err(Error::Config("candidate dims differ".into()));
        }
        let uv: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let zw: f64 = z.iter().zip(w_z).map(|(a, b)| a * b).sum();
        logits.push(uv + d_shift + zw);
    }
    Ok(logits)
}

/// Softmax over a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut probs = logits.to_vec();
    softmax_in_place(&mut probs);
    probs
}

/// Leaf handles for every shared parameter tensor, in one graph.
pub struct ParamLeaves {
    pub proj_w: TensorId,
    pub proj_b: TensorId,
    pub pop_w: TensorId,
    pub pop_b: TensorId,
    pub w_z: TensorId,
    pub w_d: TensorId,
    pub pos: TensorId,
    pub encoder: EncoderLeaves,
}

pub struct TransformerLayerLeaves {
    pub wq: TensorId,
    pub wk: TensorId,
    pub wv: TensorId,
    pub wo: TensorId,
    pub bq: TensorId,
    pub bk: TensorId,
    pub bv: TensorId,
    pub bo: TensorId,
    pub ln1_gain: TensorId,
    pub ln1_bias: TensorId,
    pub ln2_gain: TensorId,
    pub ln2_bias: TensorId,
    pub ffn_w1: TensorId,
    pub ffn_b1: TensorId,
    pub ffn_w2: TensorId,
    pub ffn_b2: TensorId,
}

pub struct GruLayerLeaves {
    pub w_xz: TensorId,
    pub w_hz: TensorId,
    pub b_z: TensorId,
    pub w_xr: TensorId,
    pub w_hr: TensorId,
    pub b_r: TensorId,
    pub w_xh: TensorId,
    pub w_hh: TensorId,
    pub b_h: TensorId,
}

pub enum EncoderLeaves {
    Transformer {
        layers: Vec<TransformerLayerLeaves>,
        final_gain: TensorId,
        final_bias: TensorId,
    },
    Gru(Vec<GruLayerLeaves>),
}

impl ParamLeaves {
    pub fn new(g: &mut Graph, p: &Parameters) -> Self {
        let b = p.config.embed_dim;
        let proj_w = g.leaf_from(b, p.input_dim, &p.projection.weight.data);
        let proj_b = g.leaf_from(1, b, &p.projection.bias);
        let pop_w = g.leaf_from(b, POP_FACTOR_DIM, &p.pop.weight.data);
        let pop_b = g.leaf_from(1, b, &p.pop.bias);
        let w_z = g.leaf_from(1, b, &p.pop.score_weight);
        let w_d = g.leaf_from(1, b, &p.w_d);
        let pos = g.leaf_from(p.pos_emb.rows, b, &p.pos_emb.data);
        let encoder = match &p.encoder {
            EncoderParams::Transformer(t) => EncoderLeaves::Transformer {
                layers: t
                    .layers
                    .iter()
                    .map(|l| TransformerLayerLeaves {
                        wq: g.leaf_from(b, b, &l.wq.data),
                        wk: g.leaf_from(b, b, &l.wk.data),
                        wv: g.leaf_from(b, b, &l.wv.data),
                        wo: g.leaf_from(b, b, &l.wo.data),
                        bq: g.leaf_from(1, b, &l.bq),
                        bk: g.leaf_from(1, b, &l.bk),
                        bv: g.leaf_from(1, b, &l.bv),
                        bo: g.leaf_from(1, b, &l.bo),
                        ln1_gain: g.leaf_from(1, b, &l.ln1_gain),
                        ln1_bias: g.leaf_from(1, b, &l.ln1_bias),
                        ln2_gain: g.leaf_from(1, b, &l.ln2_gain),
                        ln2_bias: g.leaf_from(1, b, &l.ln2_bias),
                        ffn_w1: g.leaf_from(b, b, &l.ffn_w1.data),
                        ffn_b1: g.leaf_from(1, b, &l.ffn_b1),
                        ffn_w2: g.leaf_from(b, b, &l.ffn_w2.data),
                        ffn_b2: g.leaf_from(1, b, &l.ffn_b2),
                    })
                    .collect(),
                final_gain: g.leaf_from(1, b, &t.final_gain),
                final_bias: g.leaf_from(1, b, &t.final_bias),
            },
            EncoderParams::Gru(layers) => EncoderLeaves::Gru(
                layers
                    .iter()
                    .map(|l| GruLayerLeaves {
                        w_xz: g.leaf_from(b, b, &l.w_xz.data),
                        w_hz: g.leaf_from(b, b, &l.w_hz.data),
                        b_z: g.leaf_from(1, b, &l.b_z),
                        w_xr: g.leaf_from(b, b, &l.w_xr.data),
                        w_hr: g.leaf_from(b, b, &l.w_hr.data),
                        b_r: g.leaf_from(1, b, &l.b_r),
                        w_xh: g.leaf_from(b, b, &l.w_xh.data),
                        w_hh: g.leaf_from(b, b, &l.w_hh.data),
                        b_h: g.leaf_from(1, b, &l.b_h),
                    })
                    .collect(),
            ),
        };
        ParamLeaves {
            proj_w,
            proj_b,
            pop_w,
            pop_b,
            w_z,
            w_d,
            pos,
            encoder,
        }
    }

    /// Collects leaf gradients into named tensors, mirroring the names used
    /// by [`Parameters::for_each_tensor`].
    pub fn collect_grads(&self, g: &Graph, grads: &mut loss::Gradients) {
        grads.add("proj/w", g.grad(self.proj_w));
        grads.add("proj/b", g.grad(self.proj_b));
        grads.add("pop/w", g.grad(self.pop_w));
        grads.add("pop/b", g.grad(self.pop_b));
        grads.add("score/wz", g.grad(self.w_z));
        grads.add("score/wd", g.grad(self.w_d));
        grads.add("pos", g.grad(self.pos));
        match &self.encoder {
            EncoderLeaves::Transformer {
                layers,
                final_gain,
                final_bias,
            } => {
                for (i, l) in layers.iter().enumerate() {
                    grads.add(&format!("tf/{i}/wq"), g.grad(l.wq));
                    grads.add(&format!("tf/{i}/wk"), g.grad(l.wk));
                    grads.add(&format!("tf/{i}/wv"), g.grad(l.wv));
                    grads.add(&format!("tf/{i}/wo"), g.grad(l.wo));
                    grads.add(&format!("tf/{i}/bq"), g.grad(l.bq));
                    grads.add(&format!("tf/{i}/bk"), g.grad(l.bk));
                    grads.add(&format!("tf/{i}/bv"), g.grad(l.bv));
                    grads.add(&format!("tf/{i}/bo"), g.grad(l.bo));
                    grads.add(&format!("tf/{i}/ln1g"), g.grad(l.ln1_gain));
                    grads.add(&format!("tf/{i}/ln1b"), g.grad(l.ln1_bias));
                    grads.add(&format!("tf/{i}/ln2g"), g.grad(l.ln2_gain));
                    grads.add(&format!("tf/{i}/ln2b"), g.grad(l.ln2_bias));
                    grads.add(&format!("tf/{i}/ffw1"), g.grad(l.ffn_w1));
                    grads.add(&format!("tf/{i}/ffb1"), g.grad(l.ffn_b1));
                    grads.add(&format!("tf/{i}/ffw2"), g.grad(l.ffn_w2));
                    grads.add(&format!("tf/{i}/ffb2"), g.grad(l.ffn_b2));
                }
                grads.add("tf/final_g", g.grad(*final_gain));
                grads.add("tf/final_b", g.grad(*final_bias));
            }
            EncoderLeaves::Gru(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    grads.add(&format!("gru/{i}/wxz"), g.grad(l.w_xz));
                    grads.add(&format!("gru/{i}/whz"), g.grad(l.w_hz));
                    grads.add(&format!("gru/{i}/bz"), g.grad(l.b_z));
                    grads.add(&format!("gru/{i}/wxr"), g.grad(l.w_xr));
                    grads.add(&format!("gru/{i}/whr"), g.grad(l.w_hr));
                    grads.add(&format!("gru/{i}/br"), g.grad(l.b_r));
                    grads.add(&format!("gru/{i}/wxh"), g.grad(l.w_xh));
                    grads.add(&format!("gru/{i}/whh"), g.grad(l.w_hh));
                    grads.add(&format!("gru/{i}/bh"), g.grad(l.b_h));
                }
            }
        }
    }
}

/// Runs the sequence encoder over a history, returning the final-position
/// representation. `domain_prior` is the D_k prefix token; pass zeros for the
/// debiased and zero-shot paths. History rows are raw input-space embeddings;
/// only the most recent `max_seq_len` items are kept.
pub fn user_embedding(
    params: &Parameters,
    domain_prior: &[f64],
    history: &[&[f32]],
) -> Result<Vec<f64>> {
    let all = user_embedding_positions(params, domain_prior, history)?;
    Ok(all.last().cloned().expect("at least the prefix position"))
}

/// Like [`user_embedding`] but returns the encoder output at every position,
/// prefix first. Exposed for causality checks.
pub fn user_embedding_positions(
    params: &Parameters,
    domain_prior: &[f64],
    history: &[&[f32]],
) -> Result<Vec<Vec<f64>>> {
    let b = params.config.embed_dim;
    if domain_prior.len() != b {
        return Err(Error::Config(format!(
            "domain prior dim {} does not match embed dim {b}",
            domain_prior.len()
        )));
    }
    let keep = history.len().min(params.config.max_seq_len);
    let hist = &history[history.len() - keep..];
    for row in hist {
        if row.len() != params.input_dim {
            return Err(Error::Config(format!(
                "history embedding dim {} does not match input dim {}",
                row.len(),
                params.input_dim
            )));
        }
    }
    let mut g = Graph::new();
    let leaves = ParamLeaves::new(&mut g, params);
    let prior = g.leaf_from(1, b, domain_prior);
    let out = seq::encode_history(&mut g, params, &leaves, prior, hist);
    let (rows, _) = g.shape(out);
    let v = g.value(out);
    Ok((0..rows).map(|r| v[r * b..(r + 1) * b].to_vec()).collect())
}
