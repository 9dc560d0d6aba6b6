//! The transformer itself: embedding with sinusoidal positions, encoder and
//! decoder stacks, tied output projection. Every weight is fetched through
//! a [`SlotId`], so the same forward code serves any sharing plan — which
//! decoder actually owns a matrix is the parameter table's business.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sharing::{Component, ParameterTable, Role, SlotId, Sublayer};
use crate::tensor::graph::{Graph, Value};
use crate::tensor::{Scalar, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    /// Model width d_m.
    pub d_m: usize,
    /// FFN hidden width d_h.
    pub d_h: usize,
    pub heads: usize,
    pub vocab_size: usize,
    pub p_drop: f64,
    pub max_position: usize,
    /// Post-norm sublayer arrangement instead of the default pre-norm.
    pub post_norm: bool,
    /// Scale attention scores by 1/√d_m instead of the per-head 1/√(d_m/ℓ).
    pub literal_scale: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_layers: 6,
            d_m: 512,
            d_h: 2048,
            heads: 8,
            vocab_size: 33_200,
            p_drop: 0.1,
            max_position: 1024,
            post_norm: false,
            literal_scale: false,
        }
    }
}

impl ModelConfig {
    /// `num_layers: 0` is legal (an empty stack degenerates to
    /// layer_norm∘embed), everything else must be at least 1.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d_m < 2 {
            return bad(format!("d_m must be ≥ 2, got {}", self.d_m));
        }
        if self.d_h < 1 || self.vocab_size < 1 || self.heads < 1 || self.max_position < 1 {
            return bad("d_h, vocab_size, heads and max_position must be ≥ 1".into());
        }
        if self.d_m % self.heads != 0 {
            return bad(format!("heads ({}) must divide d_m ({})", self.heads, self.d_m));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return bad(format!("p_drop {} outside [0, 1)", self.p_drop));
        }
        Ok(())
    }
}

/// The four projection slots of one attention sublayer (no biases).
pub struct AttentionParams {
    pub w_k: SlotId,
    pub w_q: SlotId,
    pub w_v: SlotId,
    pub w_f: SlotId,
}

impl AttentionParams {
    pub fn at(component: Component, layer: u32, sublayer: Sublayer, target: &str) -> Self {
        AttentionParams {
            w_k: SlotId::layered(component, layer, sublayer, Role::K, target),
            w_q: SlotId::layered(component, layer, sublayer, Role::Q, target),
            w_v: SlotId::layered(component, layer, sublayer, Role::V, target),
            w_f: SlotId::layered(component, layer, sublayer, Role::F, target),
        }
    }
}

pub struct FfnParams {
    pub w_l1: SlotId,
    pub b1: SlotId,
    pub w_l2: SlotId,
    pub b2: SlotId,
}

impl FfnParams {
    pub fn at(component: Component, layer: u32, target: &str) -> Self {
        FfnParams {
            w_l1: SlotId::layered(component, layer, Sublayer::Ffn, Role::L1, target),
            b1: SlotId::layered(component, layer, Sublayer::Ffn, Role::B1, target),
            w_l2: SlotId::layered(component, layer, Sublayer::Ffn, Role::L2, target),
            b2: SlotId::layered(component, layer, Sublayer::Ffn, Role::B2, target),
        }
    }
}

pub struct LayerNormParams {
    pub gain: SlotId,
    pub bias: SlotId,
}

impl LayerNormParams {
    pub fn at(component: Component, layer: u32, sublayer: Sublayer, target: &str) -> Self {
        LayerNormParams {
            gain: SlotId::layered(component, layer, sublayer, Role::Gain, target),
            bias: SlotId::layered(component, layer, sublayer, Role::Bias, target),
        }
    }

    pub fn stack_final(component: Component, target: &str) -> Self {
        LayerNormParams {
            gain: SlotId::norm_final(component, Role::Gain, target),
            bias: SlotId::norm_final(component, Role::Bias, target),
        }
    }
}

/// Bind a slot's cell into the graph.
fn param<T: Scalar>(g: &mut Graph<T>, table: &ParameterTable<T>, slot: &SlotId) -> Result<Value> {
    let i = table.cell_index(slot)?;
    Ok(g.param(i, &table.cells()[i].value))
}

/// Sinusoidal position encodings: even channel 2i is sin(pos/10000^(2i/d)),
/// odd channel 2i+1 the matching cos.
pub fn sinusoidal_positions<T: Scalar>(t_len: usize, config: &ModelConfig) -> Result<Tensor<T>> {
    if t_len > config.max_position {
        return Err(Error::InvalidConfig(format!(
            "sequence length {} exceeds max_position {}",
            t_len, config.max_position
        )));
    }
    let d = config.d_m;
    let mut out = Tensor::zeros(vec![t_len, d]);
    for pos in 0..t_len {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10_000f64.powf(2.0 * i as f64 / d as f64);
            out.set2(pos, 2 * i, T::from_f64(angle.sin()));
            out.set2(pos, 2 * i + 1, T::from_f64(angle.cos()));
        }
    }
    Ok(out)
}

/// Strictly upper-triangular -inf, zero elsewhere: position i may attend
/// to positions j ≤ i only.
pub fn causal_mask<T: Scalar>(t: usize) -> Tensor<T> {
    let mut m = Tensor::zeros(vec![t, t]);
    for i in 0..t {
        for j in (i + 1)..t {
            m.set2(i, j, T::neg_infinity());
        }
    }
    m
}

/// Additive mask hiding pad keys from every query: column j is -inf when
/// key_ids[j] is the pad token.
pub fn pad_key_mask<T: Scalar>(q_len: usize, key_ids: &[usize], pad: usize) -> Tensor<T> {
    let mut m = Tensor::zeros(vec![q_len, key_ids.len()]);
    for (j, &id) in key_ids.iter().enumerate() {
        if id == pad {
            for i in 0..q_len {
                m.set2(i, j, T::neg_infinity());
            }
        }
    }
    m
}

/// Combine a causal mask with a pad mask (entrywise min keeps any -inf).
fn merge_masks<T: Scalar>(a: Tensor<T>, b: Option<Tensor<T>>) -> Tensor<T> {
    match b {
        None => a,
        Some(b) => {
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x.min(y)).collect();
            Tensor::new(a.shape().to_vec(), data).expect("mask shapes agree")
        }
    }
}

/// Embedding lookup × √d_m, plus position encodings, plus dropout.
pub fn embed<T: Scalar>(
    g: &mut Graph<T>,
    table: &ParameterTable<T>,
    target: &str,
    ids: &[usize],
) -> Result<Value> {
    let config = table.config();
    let we = param(g, table, &SlotId::embedding(target))?;
    let x = g.gather_rows(we, ids)?;
    let x = g.scale(x, T::from_f64((config.d_m as f64).sqrt()));
    let pe = g.leaf(sinusoidal_positions(ids.len(), config)?);
    let x = g.add(x, pe)?;
    g.dropout(x, config.p_drop)
}

/// Scaled dot-product attention over ℓ heads, with attention dropout.
pub fn multi_head_attention<T: Scalar>(
    g: &mut Graph<T>,
    table: &ParameterTable<T>,
    q_in: Value,
    kv_in: Value,
    p: &AttentionParams,
    mask: Option<&Tensor<T>>,
) -> Result<Value> {
    let config = table.config();
    let w_k = param(g, table, &p.w_k)?;
    let w_q = param(g, table, &p.w_q)?;
    let w_v = param(g, table, &p.w_v)?;
    let w_f = param(g, table, &p.w_f)?;

    let k = g.matmul(kv_in, w_k)?;
    let v = g.matmul(kv_in, w_v)?;
    let q = g.matmul(q_in, w_q)?;

    let d_k = config.d_m / config.heads;
    let scale = if config.literal_scale {
        1.0 / (config.d_m as f64).sqrt()
    } else {
        1.0 / (d_k as f64).sqrt()
    };

    let k_heads = g.split_last(k, config.heads)?;
    let v_heads = g.split_last(v, config.heads)?;
    let q_heads = g.split_last(q, config.heads)?;

    let mut outs = Vec::with_capacity(config.heads);
    for h in 0..config.heads {
        let scores = g.matmul_nt(q_heads[h], k_heads[h])?;
        let scores = g.scale(scores, T::from_f64(scale));
        let scores = match mask {
            Some(m) => g.add_mask(scores, m)?,
            None => scores,
        };
        let alpha = g.softmax_rows(scores)?;
        let alpha = g.dropout(alpha, config.p_drop)?;
        outs.push(g.matmul(alpha, v_heads[h])?);
    }
    let cat = g.concat_last(&outs)?;
    g.matmul(cat, w_f)
}

/// Position-wise FFN: max(0, z·W_L1 + b1)·W_L2 + b2, dropout on the ReLU.
pub fn feed_forward<T: Scalar>(
    g: &mut Graph<T>,
    table: &ParameterTable<T>,
    z: Value,
    p: &FfnParams,
) -> Result<Value> {
    let config = table.config();
    let w1 = param(g, table, &p.w_l1)?;
    let b1 = param(g, table, &p.b1)?;
    let w2 = param(g, table, &p.w_l2)?;
    let b2 = param(g, table, &p.b2)?;
    let h = g.matmul(z, w1)?;
    let h = g.add_row(h, b1)?;
    let h = g.relu(h);
    let h = g.dropout(h, config.p_drop)?;
    let out = g.matmul(h, w2)?;
    g.add_row(out, b2)
}

/// Residual sublayer wrapper. Pre-norm (default):
/// x + dropout(body(layer_norm(x))); post-norm behind the config flag:
/// layer_norm(x + dropout(body(x))).
fn wrap_sublayer<T: Scalar, F>(
    g: &mut Graph<T>,
    table: &ParameterTable<T>,
    x: Value,
    norm: &LayerNormParams,
    body: F,
) -> Result<Value>
where
    F: FnOnce(&mut Graph<T>, Value) -> Result<Value>,
{
    let config = table.config();
    let gain = param(g, table, &norm.gain)?;
    let bias = param(g, table, &norm.bias)?;
    if config.post_norm {
        let y = body(g, x)?;
        let y = g.dropout(y, config.p_drop)?;
        let res = g.add(x, y)?;
        g.layer_norm(res, gain, bias, LAYER_NORM_EPS)
    } else {
        let normed = g.layer_norm(x, gain, bias, LAYER_NORM_EPS)?;
        let y = body(g, normed)?;
        let y = g.dropout(y, config.p_drop)?;
        g.add(x, y)
    }
}

/// Encoder stack for one sentence. `pad` masks pad keys out of
/// self-attention so padded positions cannot influence real ones.
pub fn encoder_forward<T: Scalar>(
    g: &mut Graph<T>,
    table: &ParameterTable<T>,
    target: &str,
    src_ids: &[usize],
    pad: Option<usize>,
) -> Result<Value> {
    let config = table.config();
    let mut x = embed(g, table, target, src_ids)?;
    let mask = pad.map(|p| pad_key_mask::<T>(src_ids.len(), src_ids, p));
    for l in 0..config.num_layers as u32 {
        let attn = AttentionParams::at(Component::Encoder, l, Sublayer::SelfAttn, target);
        let attn_norm = LayerNormParams::at(Component::Encoder, l, Sublayer::SelfAttn, target);
        x = wrap_sublayer(g, table, x, &attn_norm, |g, z| {
            multi_head_attention(g, table, z, z, &attn, mask.as_ref())
        })?;
        let ffn = FfnParams::at(Component::Encoder, l, target);
        let ffn_norm = LayerNormParams::at(Component::Encoder, l, Sublayer::Ffn, target);
        x = wrap_sublayer(g, table, x, &ffn_norm, |g, z| feed_forward(g, table, z, &ffn))?;
    }
    let fin = LayerNormParams::stack_final(Component::Encoder, target);
    let gain = param(g, table, &fin.gain)?;
    let bias = param(g, table, &fin.bias)?;
    g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
}

/// Decoder stack: masked self-attention, encoder-decoder attention (queries
/// from the decoder, keys/values from `enc_out`), FFN. When `pad` is given,
/// padded source positions are masked out of the cross-attention using
/// `src_ids` (which must match the rows of `enc_out`).
pub fn decoder_forward<T: Scalar>(
    g: &mut Graph<T>,
    table: &ParameterTable<T>,
    target: &str,
    tgt_ids: &[usize],
    enc_out: Value,
    src_ids: &[usize],
    pad: Option<usize>,
) -> Result<Value> {
    let config = table.config();
    let t = tgt_ids.len();
    let mut x = embed(g, table, target, tgt_ids)?;
    let self_mask = causal_mask::<T>(t);
    let cross_mask: Option<Tensor<T>> = pad.map(|p| pad_key_mask(t, src_ids, p));
    for l in 0..config.num_layers as u32 {
        let self_attn = AttentionParams::at(Component::Decoder, l, Sublayer::SelfAttn, target);
        let self_norm = LayerNormParams::at(Component::Decoder, l, Sublayer::SelfAttn, target);
        let m = self_mask.clone();
        x = wrap_sublayer(g, table, x, &self_norm, |g, z| {
            multi_head_attention(g, table, z, z, &self_attn, Some(&m))
        })?;

        let cross = AttentionParams::at(Component::Decoder, l, Sublayer::EncDecAttn, target);
        let cross_norm = LayerNormParams::at(Component::Decoder, l, Sublayer::EncDecAttn, target);
        x = wrap_sublayer(g, table, x, &cross_norm, |g, z| {
            cross_attention(g, table, z, enc_out, &cross, cross_mask.as_ref())
        })?;

        let ffn = FfnParams::at(Component::Decoder, l, target);
        let ffn_norm = LayerNormParams::at(Component::Decoder, l, Sublayer::Ffn, target);
        x = wrap_sublayer(g, table, x, &ffn_norm, |g, z| feed_forward(g, table, z, &ffn))?;
    }
    let fin = LayerNormParams::stack_final(Component::Decoder, target);
    let gain = param(g, table, &fin.gain)?;
    let bias = param(g, table, &fin.bias)?;
    g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
}

/// Pre-norm wrapping normalizes the *query* stream only; keys and values
/// come from the encoder output unchanged.
fn cross_attention<T: Scalar>(
    g: &mut Graph<T>,
    table: &ParameterTable<T>,
    q_in: Value,
    enc_out: Value,
    p: &AttentionParams,
    mask: Option<&Tensor<T>>,
) -> Result<Value> {
    multi_head_attention(g, table, q_in, enc_out, p, mask)
}

/// Tied output projection: logits = dec_out · W_Eᵀ (no bias).
pub fn output_logits<T: Scalar>(
    g: &mut Graph<T>,
    table: &ParameterTable<T>,
    target: &str,
    dec_out: Value,
) -> Result<Value> {
    let we = param(g, table, &SlotId::embedding(target))?;
    g.matmul_nt(dec_out, we)
}

/// Decoder self-attention mask for right-padded batch rows would go here;
/// per-sentence processing keeps rows trimmed instead, so the causal mask
/// alone is sufficient (pads only ever follow real tokens).
pub fn combined_causal_pad_mask<T: Scalar>(ids: &[usize], pad: usize) -> Tensor<T> {
    merge_masks(causal_mask(ids.len()), Some(pad_key_mask(ids.len(), ids, pad)))
}
