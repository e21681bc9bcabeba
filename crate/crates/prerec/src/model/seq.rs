//! Sequence encoders on the autodiff tape.
//!
//! Both encoders consume the domain prior as a prefix token ahead of the
//! projected history embeddings, so an empty history still yields a usable
//! representation. The transformer uses causal masking, learned positions,
//! and pre-norm residual blocks; the GRU consumes the same prefixed sequence
//! recurrently.

use crate::autodiff::{Graph, TensorId};
use crate::model::{EncoderLeaves, ParamLeaves, Parameters, SeqEncoderKind};

const MASKED: f64 = -1e9;
const LN_EPS: f64 = 1e-8;

/// Encodes a (prefix + history) sequence, returning the encoder output at
/// every position. `hist` rows are raw input-space vectors; projection to
/// model space happens in-graph so gradients reach the projection.
pub(crate) fn encode_history(
    g: &mut Graph,
    params: &Parameters,
    leaves: &ParamLeaves,
    prior: TensorId,
    hist: &[&[f32]],
) -> TensorId {
    let seq_in = if hist.is_empty() {
        prior
    } else {
        let flat: Vec<f64> = hist
            .iter()
            .flat_map(|row| row.iter().map(|&v| v as f64))
            .collect();
        let hist_leaf = g.leaf(hist.len(), params.input_dim, flat);
        let projected = g.matmul_trans_b(hist_leaf, leaves.proj_w);
        let projected = g.add_row(projected, leaves.proj_b);
        g.concat_rows(prior, projected)
    };
    encode_projected(g, params, leaves, seq_in)
}

/// Encodes an already-projected (L, B) sequence whose first row is the prefix.
pub(crate) fn encode_projected(
    g: &mut Graph,
    params: &Parameters,
    leaves: &ParamLeaves,
    seq_in: TensorId,
) -> TensorId {
    match (&leaves.encoder, params.config.encoder) {
        (
            EncoderLeaves::Transformer {
                layers,
                final_gain,
                final_bias,
            },
            SeqEncoderKind::Transformer,
        ) => transformer_forward(
            g,
            layers,
            *final_gain,
            *final_bias,
            leaves.pos,
            seq_in,
            params.config.heads,
        ),
        (EncoderLeaves::Gru(layers), SeqEncoderKind::Gru) => gru_forward(g, layers, seq_in),
        _ => unreachable!("encoder leaves always match the configured encoder"),
    }
}

fn affine_norm(g: &mut Graph, x: TensorId, gain: TensorId, bias: TensorId) -> TensorId {
    let n = g.layer_norm_rows(x, LN_EPS);
    let scaled = g.mul_row(n, gain);
    g.add_row(scaled, bias)
}

fn transformer_forward(
    g: &mut Graph,
    layers: &[super::TransformerLayerLeaves],
    final_gain: TensorId,
    final_bias: TensorId,
    pos: TensorId,
    seq_in: TensorId,
    heads: usize,
) -> TensorId {
    let (len, dim) = g.shape(seq_in);
    let head_dim = dim / heads;
    let pos_rows = g.slice_rows(pos, 0, len);
    let mut x = g.add(seq_in, pos_rows);

    let mut mask_data = vec![0.0; len * len];
    for r in 0..len {
        for c in (r + 1)..len {
            mask_data[r * len + c] = MASKED;
        }
    }
    let mask = g.leaf(len, len, mask_data);

    for l in layers {
        let a = affine_norm(g, x, l.ln1_gain, l.ln1_bias);
        let q = g.matmul(a, l.wq);
        let q = g.add_row(q, l.bq);
        let k = g.matmul(a, l.wk);
        let k = g.add_row(k, l.bk);
        let v = g.matmul(a, l.wv);
        let v = g.add_row(v, l.bv);

        let mut merged: Option<TensorId> = None;
        for h in 0..heads {
            let qh = g.slice_cols(q, h * head_dim, head_dim);
            let kh = g.slice_cols(k, h * head_dim, head_dim);
            let vh = g.slice_cols(v, h * head_dim, head_dim);
            let scores = g.matmul_trans_b(qh, kh);
            let scores = g.scale(scores, 1.0 / (head_dim as f64).sqrt());
            let masked = g.add(scores, mask);
            let att = g.softmax_rows(masked);
            let oh = g.matmul(att, vh);
            merged = Some(match merged {
                None => oh,
                Some(m) => g.concat_cols(m, oh),
            });
        }
        let o = g.matmul(merged.unwrap(), l.wo);
        let o = g.add_row(o, l.bo);
        x = g.add(x, o);

        let f = affine_norm(g, x, l.ln2_gain, l.ln2_bias);
        let h1 = g.matmul(f, l.ffn_w1);
        let h1 = g.add_row(h1, l.ffn_b1);
        let h1 = g.gelu(h1);
        let h2 = g.matmul(h1, l.ffn_w2);
        let h2 = g.add_row(h2, l.ffn_b2);
        x = g.add(x, h2);
    }
    affine_norm(g, x, final_gain, final_bias)
}

fn gru_forward(g: &mut Graph, layers: &[super::GruLayerLeaves], seq_in: TensorId) -> TensorId {
    let (len, dim) = g.shape(seq_in);
    let mut input = seq_in;
    for l in layers {
        let mut h = g.zeros(1, dim);
        let mut outputs: Option<TensorId> = None;
        for t in 0..len {
            let xt = g.slice_rows(input, t, 1);
            let xz = g.matmul(xt, l.w_xz);
            let hz = g.matmul(h, l.w_hz);
            let z_pre = g.add(xz, hz);
            let z_pre = g.add(z_pre, l.b_z);
            let z = g.sigmoid(z_pre);

            let xr = g.matmul(xt, l.w_xr);
            let hr = g.matmul(h, l.w_hr);
            let r_pre = g.add(xr, hr);
            let r_pre = g.add(r_pre, l.b_r);
            let r = g.sigmoid(r_pre);

            let rh = g.mul(r, h);
            let xh = g.matmul(xt, l.w_xh);
            let hh = g.matmul(rh, l.w_hh);
            let cand_pre = g.add(xh, hh);
            let cand_pre = g.add(cand_pre, l.b_h);
            let cand = g.tanh(cand_pre);

            let neg_z = g.scale(z, -1.0);
            let one_minus_z = g.add_const(neg_z, 1.0);
            let keep = g.mul(one_minus_z, h);
            let update = g.mul(z, cand);
            h = g.add(keep, update);

            outputs = Some(match outputs {
                None => h,
                Some(o) => g.concat_rows(o, h),
            });
        }
        input = outputs.expect("sequence has at least the prefix row");
    }
    input
}
