//! Forward and reverse passes over a packed batch.
//!
//! Sequences of a batch are stacked row-wise into one `T × d_model` matrix so
//! every position-wise operation runs as a single matrix product; attention is
//! evaluated per sequence segment. No padding is needed between sequences.

use std::ops::Range;

use rayon::prelude::*;

use super::params::{AttentionParams, ModelConfig, NormParams, Params};
use crate::error::{Error, Result};
use crate::kernel::{
    attention_backward, attention_forward, feed_forward_backward, feed_forward_forward,
    layer_norm_backward, layer_norm_forward, AttentionMask, FeedForwardCache, FeedForwardGrads,
    LayerNormCache, Matrix, LAYER_NORM_EPS,
};
use crate::text::PAD;

const OUTPUT_CHUNK_ROWS: usize = 256;

pub(crate) struct Layout {
    pub segments: Vec<Range<usize>>,
    pub ids: Vec<usize>,
    pub pad: Vec<bool>,
}

impl Layout {
    pub fn new(seqs: &[&[usize]]) -> Self {
        let mut segments = Vec::with_capacity(seqs.len());
        let mut ids = Vec::new();
        for s in seqs {
            let start = ids.len();
            ids.extend_from_slice(s);
            segments.push(start..ids.len());
        }
        let pad = ids.iter().map(|&i| i == PAD).collect();
        Self { segments, ids, pad }
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn encoder_masks(&self) -> Result<Vec<AttentionMask>> {
        self.segments
            .iter()
            .map(|r| {
                let pad = &self.pad[r.clone()];
                if pad.iter().all(|&p| p) {
                    return Err(Error::AllPadding);
                }
                Ok(AttentionMask::key_padding(r.len(), pad))
            })
            .collect()
    }

    /// Decoder queries over encoder keys, hiding encoder padding.
    fn cross_masks(&self, enc: &Layout) -> Result<Vec<AttentionMask>> {
        if self.segments.len() != enc.segments.len() {
            return Err(Error::shape(
                "decode",
                format!("{} decoder vs {} encoder sequences", self.segments.len(), enc.segments.len()),
            ));
        }
        self.segments
            .iter()
            .zip(&enc.segments)
            .map(|(rq, rk)| {
                let pad = &enc.pad[rk.clone()];
                if pad.iter().all(|&p| p) {
                    return Err(Error::AllPadding);
                }
                Ok(AttentionMask::key_padding(rq.len(), pad))
            })
            .collect()
    }

    /// Causal, and a key is hidden when the token shifted into it is padding.
    fn decoder_masks(&self) -> Vec<AttentionMask> {
        self.segments
            .iter()
            .map(|r| {
                let pad = &self.pad[r.clone()];
                AttentionMask::from_fn(r.len(), r.len(), |i, j| j <= i && (j == 0 || !pad[j - 1]))
            })
            .collect()
    }
}

/// Sinusoidal encoding: `sin(pos / 10000^(2i/d))` on even columns, `cos` on odd.
pub(crate) fn positional_encoding(pos: usize, d: usize, out: &mut [f64]) {
    for (j, v) in out.iter_mut().enumerate().take(d) {
        let exponent = (j - j % 2) as f64 / d as f64;
        let angle = pos as f64 / 10000f64.powf(exponent);
        *v = if j % 2 == 0 { angle.sin() } else { angle.cos() };
    }
}

fn add_positions(cfg: &ModelConfig, layout: &Layout, x: &mut Matrix) {
    if !cfg.positional_encoding {
        return;
    }
    let d = cfg.d_model;
    let mut pe = vec![0.0; d];
    for r in &layout.segments {
        for (pos, row) in r.clone().enumerate() {
            positional_encoding(pos, d, &mut pe);
            x.row_mut(row).iter_mut().zip(&pe).for_each(|(a, b)| *a += b);
        }
    }
}

pub(crate) fn check_ids(cfg: &ModelConfig, ids: &[usize]) -> Result<()> {
    match ids.iter().find(|&&i| i >= cfg.vocab_size) {
        Some(&id) => Err(Error::TokenOutOfRange {
            id,
            size: cfg.vocab_size,
        }),
        None => Ok(()),
    }
}

/// Encoder input: token embedding plus position.
pub(crate) fn embed_rows(cfg: &ModelConfig, params: &Params, layout: &Layout) -> Matrix {
    let mut x = Matrix::zeros(layout.rows(), cfg.d_model);
    for (t, &id) in layout.ids.iter().enumerate() {
        x.row_mut(t).copy_from_slice(params.embedding.row(id));
    }
    add_positions(cfg, layout, &mut x);
    x
}

/// Decoder input `(0, x_1, …, x_{n−1})`: embeddings shifted right by one with a
/// zero vector in front, then positions of the shifted sequence.
pub(crate) fn decoder_input(cfg: &ModelConfig, params: &Params, layout: &Layout) -> Matrix {
    let mut x = Matrix::zeros(layout.rows(), cfg.d_model);
    for r in &layout.segments {
        for t in r.start + 1..r.end {
            x.row_mut(t)
                .copy_from_slice(params.embedding.row(layout.ids[t - 1]));
        }
    }
    add_positions(cfg, layout, &mut x);
    x
}

pub(crate) struct AttnCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    weights: Vec<Matrix>,
}

fn attn_forward(
    p: &AttentionParams,
    xq: &Matrix,
    q_segments: &[Range<usize>],
    xkv: &Matrix,
    kv_segments: &[Range<usize>],
    masks: &[AttentionMask],
) -> Result<(Matrix, AttnCache)> {
    let q = xq.matmul(&p.wq)?;
    let k = xkv.matmul(&p.wk)?;
    let v = xkv.matmul(&p.wv)?;
    let per_segment: Vec<Result<(Matrix, Matrix)>> = q_segments
        .par_iter()
        .zip(kv_segments.par_iter())
        .zip(masks.par_iter())
        .map(|((rq, rk), mask)| {
            attention_forward(
                &q.slice_rows(rq.clone()),
                &k.slice_rows(rk.clone()),
                &v.slice_rows(rk.clone()),
                mask,
            )
        })
        .collect();
    let mut out = Matrix::zeros(q.rows(), v.cols());
    let mut weights = Vec::with_capacity(per_segment.len());
    for (r, res) in q_segments.iter().zip(per_segment) {
        let (o, w) = res?;
        out.write_rows(r.start, &o);
        weights.push(w);
    }
    Ok((out, AttnCache { q, k, v, weights }))
}

/// Returns `(d xq, d xkv)` and accumulates projection gradients into `g`.
#[allow(clippy::too_many_arguments)]
fn attn_backward(
    p: &AttentionParams,
    cache: &AttnCache,
    d_out: &Matrix,
    xq: &Matrix,
    q_segments: &[Range<usize>],
    xkv: &Matrix,
    kv_segments: &[Range<usize>],
    g: &mut AttentionParams,
) -> Result<(Matrix, Matrix)> {
    let per_segment: Vec<Result<_>> = q_segments
        .par_iter()
        .zip(kv_segments.par_iter())
        .zip(cache.weights.par_iter())
        .map(|((rq, rk), w)| {
            attention_backward(
                &d_out.slice_rows(rq.clone()),
                &cache.q.slice_rows(rq.clone()),
                &cache.k.slice_rows(rk.clone()),
                &cache.v.slice_rows(rk.clone()),
                w,
            )
        })
        .collect();
    let mut dq = Matrix::zeros(cache.q.rows(), cache.q.cols());
    let mut dk = Matrix::zeros(cache.k.rows(), cache.k.cols());
    let mut dv = Matrix::zeros(cache.v.rows(), cache.v.cols());
    for ((rq, rk), res) in q_segments.iter().zip(kv_segments).zip(per_segment) {
        let grads = res?;
        dq.write_rows(rq.start, &grads.dq);
        dk.write_rows(rk.start, &grads.dk);
        dv.write_rows(rk.start, &grads.dv);
    }
    g.wq.add_t_matmul(xq, &dq);
    g.wk.add_t_matmul(xkv, &dk);
    g.wv.add_t_matmul(xkv, &dv);
    let dxq = dq.matmul_t(&p.wq)?;
    let mut dxkv = dk.matmul_t(&p.wk)?;
    dxkv.add_assign(&dv.matmul_t(&p.wv)?)?;
    Ok((dxq, dxkv))
}

fn norm_forward(x: &Matrix, p: &NormParams) -> Result<(Matrix, LayerNormCache)> {
    layer_norm_forward(x, &p.gain, &p.bias, LAYER_NORM_EPS)
}

fn norm_backward(dy: &Matrix, cache: &LayerNormCache, p: &NormParams, g: &mut NormParams) -> Matrix {
    layer_norm_backward(dy, cache, &p.gain, &mut g.gain, &mut g.bias)
}

pub(crate) struct EncoderCache {
    input: Matrix,
    attn: AttnCache,
    ln1: LayerNormCache,
    mid: Matrix,
    ffn: FeedForwardCache,
    ln2: LayerNormCache,
}

pub(crate) struct DecoderCache {
    input: Matrix,
    self_attn: AttnCache,
    ln1: LayerNormCache,
    ad: Matrix,
    cross: AttnCache,
    ln2: LayerNormCache,
    aed: Matrix,
    ffn: FeedForwardCache,
    ln3: LayerNormCache,
}

pub(crate) struct Forward {
    pub h_e: Matrix,
    pub h_d: Matrix,
    enc: Vec<EncoderCache>,
    dec: Vec<DecoderCache>,
}

pub(crate) fn encode_packed(
    params: &Params,
    layout: &Layout,
    x: Matrix,
) -> Result<(Matrix, Vec<EncoderCache>)> {
    let masks = layout.encoder_masks()?;
    let mut h = x;
    let mut caches = Vec::with_capacity(params.encoder.len());
    for layer in &params.encoder {
        let segs = &layout.segments;
        let (mut a, attn) = attn_forward(&layer.attn, &h, segs, &h, segs, &masks)?;
        a.add_assign(&h)?;
        let (mid, ln1) = norm_forward(&a, &layer.norm1)?;
        let f = &layer.ffn;
        let (mut hf, ffn) = feed_forward_forward(&mid, &f.w1, &f.b1, &f.w2, &f.b2)?;
        hf.add_assign(&mid)?;
        let (out, ln2) = norm_forward(&hf, &layer.norm2)?;
        caches.push(EncoderCache {
            input: h,
            attn,
            ln1,
            mid,
            ffn,
            ln2,
        });
        h = out;
    }
    Ok((h, caches))
}

/// Decoder stack. `enc_layout` describes the sequences behind `h_e`; its
/// segments pair one-to-one with those of `layout` but may differ in length.
pub(crate) fn decode_packed(
    params: &Params,
    layout: &Layout,
    dec_in: Matrix,
    h_e: &Matrix,
    enc_layout: &Layout,
) -> Result<(Matrix, Vec<DecoderCache>)> {
    let self_masks = layout.decoder_masks();
    let cross_masks = layout.cross_masks(enc_layout)?;
    let segs = &layout.segments;
    let enc_segs = &enc_layout.segments;
    let mut h = dec_in;
    let mut caches = Vec::with_capacity(params.decoder.len());
    for layer in &params.decoder {
        let (mut a, self_attn) = attn_forward(&layer.self_attn, &h, segs, &h, segs, &self_masks)?;
        a.add_assign(&h)?;
        let (ad, ln1) = norm_forward(&a, &layer.norm1)?;
        let (mut c, cross) = attn_forward(&layer.cross_attn, &ad, segs, h_e, enc_segs, &cross_masks)?;
        c.add_assign(&ad)?;
        let (aed, ln2) = norm_forward(&c, &layer.norm2)?;
        let f = &layer.ffn;
        let (mut hf, ffn) = feed_forward_forward(&aed, &f.w1, &f.b1, &f.w2, &f.b2)?;
        hf.add_assign(&aed)?;
        let (out, ln3) = norm_forward(&hf, &layer.norm3)?;
        caches.push(DecoderCache {
            input: h,
            self_attn,
            ln1,
            ad,
            cross,
            ln2,
            aed,
            ffn,
            ln3,
        });
        h = out;
    }
    Ok((h, caches))
}

pub(crate) fn forward(cfg: &ModelConfig, params: &Params, layout: &Layout) -> Result<Forward> {
    check_ids(cfg, &layout.ids)?;
    let x = embed_rows(cfg, params, layout);
    let (h_e, enc) = encode_packed(params, layout, x)?;
    let dec_in = decoder_input(cfg, params, layout);
    let (h_d, dec) = decode_packed(params, layout, dec_in, &h_e, layout)?;
    Ok(Forward { h_e, h_d, enc, dec })
}

pub(crate) fn logits(params: &Params, h_d: &Matrix) -> Result<Matrix> {
    let mut l = h_d.matmul(&params.output_w)?;
    l.add_row_vector(&params.output_b)?;
    Ok(l)
}

/// Summed negative log-likelihood over non-padding targets.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossSum {
    pub total: f64,
    pub tokens: usize,
}

impl LossSum {
    pub fn mean(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.total / self.tokens as f64
        }
    }

    pub fn merge(&mut self, other: LossSum) {
        self.total += other.total;
        self.tokens += other.tokens;
    }
}

/// Output projection, softmax and NLL, in row chunks to bound memory.
/// With `grads`, returns `d h_d` for the objective `scale · Σ NLL`.
pub(crate) fn output_loss(
    params: &Params,
    h_d: &Matrix,
    targets: &[usize],
    mut grads: Option<(&mut Params, f64)>,
) -> Result<(LossSum, Option<Matrix>)> {
    let mut loss = LossSum::default();
    let mut d_hd = grads
        .as_ref()
        .map(|_| Matrix::zeros(h_d.rows(), h_d.cols()));
    let mut start = 0;
    while start < h_d.rows() {
        let end = (start + OUTPUT_CHUNK_ROWS).min(h_d.rows());
        let h = h_d.slice_rows(start..end);
        let mut l = logits(params, &h)?;
        for (r, t) in (start..end).enumerate() {
            let target = targets[t];
            let row = l.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            if target != PAD {
                loss.total += lse - row[target];
                loss.tokens += 1;
            }
            if let Some((_, scale)) = &grads {
                if target == PAD {
                    row.iter_mut().for_each(|v| *v = 0.0);
                } else {
                    row.iter_mut().for_each(|v| *v = (*v - lse).exp() * scale);
                    row[target] -= scale;
                }
            }
        }
        if let (Some((g, _)), Some(d)) = (grads.as_mut(), d_hd.as_mut()) {
            g.output_w.add_t_matmul(&h, &l);
            l.add_col_sums_into(&mut g.output_b);
            d.write_rows(start, &l.matmul_t(&params.output_w)?);
        }
        start = end;
    }
    if !loss.total.is_finite() {
        return Err(Error::NonFinite("reconstruction loss".into()));
    }
    Ok((loss, d_hd))
}

fn decoder_backward(
    params: &Params,
    fwd: &Forward,
    layout: &Layout,
    d_hd: Matrix,
    grads: &mut Params,
    d_he: &mut Matrix,
) -> Result<Matrix> {
    let segs = &layout.segments;
    let mut d = d_hd;
    for (i, c) in fwd.dec.iter().enumerate().rev() {
        let p = &params.decoder[i];
        let g = &mut grads.decoder[i];
        let dz3 = norm_backward(&d, &c.ln3, &p.norm3, &mut g.norm3);
        let mut d_aed = feed_forward_backward(
            &dz3,
            &c.aed,
            &c.ffn,
            &p.ffn.w1,
            &p.ffn.w2,
            FeedForwardGrads {
                w1: &mut g.ffn.w1,
                b1: &mut g.ffn.b1,
                w2: &mut g.ffn.w2,
                b2: &mut g.ffn.b2,
            },
        )?;
        d_aed.add_assign(&dz3)?;
        let dz2 = norm_backward(&d_aed, &c.ln2, &p.norm2, &mut g.norm2);
        let (mut d_ad, d_kv) =
            attn_backward(&p.cross_attn, &c.cross, &dz2, &c.ad, segs, &fwd.h_e, segs, &mut g.cross_attn)?;
        d_he.add_assign(&d_kv)?;
        d_ad.add_assign(&dz2)?;
        let dz1 = norm_backward(&d_ad, &c.ln1, &p.norm1, &mut g.norm1);
        let (mut dx, d_kv) =
            attn_backward(&p.self_attn, &c.self_attn, &dz1, &c.input, segs, &c.input, segs, &mut g.self_attn)?;
        dx.add_assign(&d_kv)?;
        dx.add_assign(&dz1)?;
        d = dx;
    }
    Ok(d)
}

fn encoder_backward(
    params: &Params,
    fwd: &Forward,
    layout: &Layout,
    d_he: Matrix,
    grads: &mut Params,
) -> Result<Matrix> {
    let segs = &layout.segments;
    let mut d = d_he;
    for (i, c) in fwd.enc.iter().enumerate().rev() {
        let p = &params.encoder[i];
        let g = &mut grads.encoder[i];
        let dz2 = norm_backward(&d, &c.ln2, &p.norm2, &mut g.norm2);
        let mut d_mid = feed_forward_backward(
            &dz2,
            &c.mid,
            &c.ffn,
            &p.ffn.w1,
            &p.ffn.w2,
            FeedForwardGrads {
                w1: &mut g.ffn.w1,
                b1: &mut g.ffn.b1,
                w2: &mut g.ffn.w2,
                b2: &mut g.ffn.b2,
            },
        )?;
        d_mid.add_assign(&dz2)?;
        let dz1 = norm_backward(&d_mid, &c.ln1, &p.norm1, &mut g.norm1);
        let (mut dx, d_kv) =
            attn_backward(&p.attn, &c.attn, &dz1, &c.input, segs, &c.input, segs, &mut g.attn)?;
        dx.add_assign(&d_kv)?;
        dx.add_assign(&dz1)?;
        d = dx;
    }
    Ok(d)
}

/// Loss and gradient of `scale · Σ NLL` over the batch.
pub(crate) fn loss_and_grad(
    cfg: &ModelConfig,
    params: &Params,
    layout: &Layout,
    scale: f64,
) -> Result<(LossSum, Params)> {
    let fwd = forward(cfg, params, layout)?;
    let mut grads = Params::zeros(cfg);
    let (loss, d_hd) = output_loss(params, &fwd.h_d, &layout.ids, Some((&mut grads, scale)))?;
    let d_hd = d_hd.expect("gradient requested");
    let mut d_he = Matrix::zeros(fwd.h_e.rows(), fwd.h_e.cols());
    let d_dec_in = decoder_backward(params, &fwd, layout, d_hd, &mut grads, &mut d_he)?;
    let d_x = encoder_backward(params, &fwd, layout, d_he, &mut grads)?;
    for (t, &id) in layout.ids.iter().enumerate() {
        grads
            .embedding
            .row_mut(id)
            .iter_mut()
            .zip(d_x.row(t))
            .for_each(|(a, b)| *a += b);
    }
    for r in &layout.segments {
        for t in r.start + 1..r.end {
            let id = layout.ids[t - 1];
            grads
                .embedding
                .row_mut(id)
                .iter_mut()
                .zip(d_dec_in.row(t))
                .for_each(|(a, b)| *a += b);
        }
    }
    Ok((loss, grads))
}

pub(crate) fn loss_only(cfg: &ModelConfig, params: &Params, layout: &Layout) -> Result<LossSum> {
    let fwd = forward(cfg, params, layout)?;
    output_loss(params, &fwd.h_d, &layout.ids, None).map(|(l, _)| l)
}
