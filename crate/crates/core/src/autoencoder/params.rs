use rand::Rng;

use crate::kernel::{orthogonal_init, uniform_init, Matrix, ParamSet};

pub const FFN_INIT_RANGE: f64 = 0.1;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub layers: usize,
    pub positional_encoding: bool,
}

impl ModelConfig {
    pub const D_MODEL: usize = 200;
    pub const D_FF: usize = 800;
    pub const LAYERS: usize = 2;

    /// 2 layers, width 200, inner width 800, positional encoding on.
    pub fn standard(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: Self::D_MODEL,
            d_ff: Self::D_FF,
            layers: Self::LAYERS,
            positional_encoding: true,
        }
    }
}

/// Single-head projections; `d_k = d_v = d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attn: AttentionParams,
    pub norm1: NormParams,
    pub ffn: FeedForwardParams,
    pub norm2: NormParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub self_attn: AttentionParams,
    pub norm1: NormParams,
    pub cross_attn: AttentionParams,
    pub norm2: NormParams,
    pub ffn: FeedForwardParams,
    pub norm3: NormParams,
}

/// Every trainable tensor of the autoencoder. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embedding: Matrix,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<DecoderLayer>,
    pub output_w: Matrix,
    pub output_b: Vec<f64>,
}

impl AttentionParams {
    fn init(d: usize, rng: &mut impl Rng) -> Self {
        Self {
            wq: orthogonal_init(d, d, rng),
            wk: orthogonal_init(d, d, rng),
            wv: orthogonal_init(d, d, rng),
        }
    }

    fn zeros(d: usize) -> Self {
        Self {
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
        }
    }

    fn push<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        out.extend([self.wq.data(), self.wk.data(), self.wv.data()]);
    }

    fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.extend([self.wq.data_mut(), self.wk.data_mut(), self.wv.data_mut()]);
    }
}

impl NormParams {
    fn identity(d: usize) -> Self {
        Self {
            gain: vec![1.0; d],
            bias: vec![0.0; d],
        }
    }

    fn zeros(d: usize) -> Self {
        Self {
            gain: vec![0.0; d],
            bias: vec![0.0; d],
        }
    }

    fn push<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        out.extend([self.gain.as_slice(), self.bias.as_slice()]);
    }

    fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.extend([self.gain.as_mut_slice(), self.bias.as_mut_slice()]);
    }
}

impl FeedForwardParams {
    fn init(d: usize, d_ff: usize, rng: &mut impl Rng) -> Self {
        let r = FFN_INIT_RANGE;
        Self {
            w1: uniform_init(d, d_ff, -r, r, rng).expect("valid range"),
            b1: vec![0.0; d_ff],
            w2: uniform_init(d_ff, d, -r, r, rng).expect("valid range"),
            b2: vec![0.0; d],
        }
    }

    fn zeros(d: usize, d_ff: usize) -> Self {
        Self {
            w1: Matrix::zeros(d, d_ff),
            b1: vec![0.0; d_ff],
            w2: Matrix::zeros(d_ff, d),
            b2: vec![0.0; d],
        }
    }

    fn push<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        out.extend([self.w1.data(), self.b1.as_slice(), self.w2.data(), self.b2.as_slice()]);
    }

    fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.extend([
            self.w1.data_mut(),
            self.b1.as_mut_slice(),
            self.w2.data_mut(),
            self.b2.as_mut_slice(),
        ]);
    }
}

impl Params {
    /// Attention projections orthogonal, feed-forward weights, embeddings and
    /// the output projection uniform in [-0.1, 0.1); biases zero, norm gains one.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let (v, d, f) = (cfg.vocab_size, cfg.d_model, cfg.d_ff);
        let r = FFN_INIT_RANGE;
        let embedding = uniform_init(v, d, -r, r, rng).expect("valid range");
        let encoder = (0..cfg.layers)
            .map(|_| EncoderLayer {
                attn: AttentionParams::init(d, rng),
                norm1: NormParams::identity(d),
                ffn: FeedForwardParams::init(d, f, rng),
                norm2: NormParams::identity(d),
            })
            .collect();
        let decoder = (0..cfg.layers)
            .map(|_| DecoderLayer {
                self_attn: AttentionParams::init(d, rng),
                norm1: NormParams::identity(d),
                cross_attn: AttentionParams::init(d, rng),
                norm2: NormParams::identity(d),
                ffn: FeedForwardParams::init(d, f, rng),
                norm3: NormParams::identity(d),
            })
            .collect();
        let output_w = uniform_init(d, v, -r, r, rng).expect("valid range");
        Self {
            embedding,
            encoder,
            decoder,
            output_w,
            output_b: vec![0.0; v],
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (v, d, f) = (cfg.vocab_size, cfg.d_model, cfg.d_ff);
        Self {
            embedding: Matrix::zeros(v, d),
            encoder: (0..cfg.layers)
                .map(|_| EncoderLayer {
                    attn: AttentionParams::zeros(d),
                    norm1: NormParams::zeros(d),
                    ffn: FeedForwardParams::zeros(d, f),
                    norm2: NormParams::zeros(d),
                })
                .collect(),
            decoder: (0..cfg.layers)
                .map(|_| DecoderLayer {
                    self_attn: AttentionParams::zeros(d),
                    norm1: NormParams::zeros(d),
                    cross_attn: AttentionParams::zeros(d),
                    norm2: NormParams::zeros(d),
                    ffn: FeedForwardParams::zeros(d, f),
                    norm3: NormParams::zeros(d),
                })
                .collect(),
            output_w: Matrix::zeros(d, v),
            output_b: vec![0.0; v],
        }
    }

    /// All values in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrites every value from a flat buffer in canonical order.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, flat.len(), "flat buffer length");
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl ParamSet for Params {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embedding.data()];
        for l in &self.encoder {
            l.attn.push(&mut out);
            l.norm1.push(&mut out);
            l.ffn.push(&mut out);
            l.norm2.push(&mut out);
        }
        for l in &self.decoder {
            l.self_attn.push(&mut out);
            l.norm1.push(&mut out);
            l.cross_attn.push(&mut out);
            l.norm2.push(&mut out);
            l.ffn.push(&mut out);
            l.norm3.push(&mut out);
        }
        out.push(self.output_w.data());
        out.push(self.output_b.as_slice());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.data_mut()];
        for l in &mut self.encoder {
            l.attn.push_mut(&mut out);
            l.norm1.push_mut(&mut out);
            l.ffn.push_mut(&mut out);
            l.norm2.push_mut(&mut out);
        }
        for l in &mut self.decoder {
            l.self_attn.push_mut(&mut out);
            l.norm1.push_mut(&mut out);
            l.cross_attn.push_mut(&mut out);
            l.norm2.push_mut(&mut out);
            l.ffn.push_mut(&mut out);
            l.norm3.push_mut(&mut out);
        }
        out.push(self.output_w.data_mut());
        out.push(self.output_b.as_mut_slice());
        out
    }
}
