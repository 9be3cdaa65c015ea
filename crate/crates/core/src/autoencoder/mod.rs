//! Attention autoencoder: a two-layer encoder/decoder built from single-head
//! attention and position-wise feed-forward blocks, trained to reconstruct
//! its own input. The encoder outputs are the question representations used
//! for matching; the decoder only exists to train them.

mod checkpoint;
mod embeddings;
mod network;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use embeddings::load_pretrained_embeddings;
pub use network::LossSum;
pub use params::{
    AttentionParams, DecoderLayer, EncoderLayer, FeedForwardParams, ModelConfig, NormParams,
    Params,
};
pub use train::{train, EarlyStopping, EpochRecord, StopDecision, TrainConfig, TrainLog};

use network::Layout;

use crate::error::{Error, Result};
use crate::kernel::{seeded_rng, Matrix};
use crate::text::{TokenSequence, PAD, UNK};

/// Embedded sequence with its padding flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub x: Matrix,
    pub pad: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    config: ModelConfig,
    params: Params,
    vocab_fingerprint: u64,
}

impl AutoencoderModel {
    pub fn new(config: ModelConfig, vocab_fingerprint: u64, seed: u64) -> Self {
        let params = Params::init(&config, &mut seeded_rng(seed));
        Self {
            config,
            params,
            vocab_fingerprint,
        }
    }

    pub fn from_parts(config: ModelConfig, params: Params, vocab_fingerprint: u64) -> Result<Self> {
        use crate::kernel::ParamSet;
        let expected = Params::zeros(&config);
        let shapes = |p: &Params| p.tensors().iter().map(|t| t.len()).collect::<Vec<_>>();
        if shapes(&expected) != shapes(&params)
            || params.embedding.shape() != expected.embedding.shape()
            || params.output_w.shape() != expected.output_w.shape()
        {
            return Err(Error::shape("AutoencoderModel::from_parts", "parameters do not match config"));
        }
        Ok(Self {
            config,
            params,
            vocab_fingerprint,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn vocab_fingerprint(&self) -> u64 {
        self.vocab_fingerprint
    }

    /// Row `i` is `E[id_i]` plus the positional encoding of `i` (when enabled).
    pub fn embed(&self, seq: &TokenSequence) -> Result<Embedded> {
        network::check_ids(&self.config, &seq.ids)?;
        let layout = Layout::new(&[&seq.ids]);
        Ok(Embedded {
            x: network::embed_rows(&self.config, &self.params, &layout),
            pad: layout.pad,
        })
    }

    /// Encoder stack over one embedded sequence; padding positions are never attended.
    pub fn encode(&self, x: &Matrix, pad: &[bool]) -> Result<Matrix> {
        if x.rows() != pad.len() || x.cols() != self.config.d_model {
            return Err(Error::shape(
                "encode",
                format!("input {:?} with {} pad flags", x.shape(), pad.len()),
            ));
        }
        let ids: Vec<usize> = pad.iter().map(|&p| if p { PAD } else { UNK }).collect();
        let layout = Layout::new(&[&ids]);
        network::encode_packed(&self.params, &layout, x.clone()).map(|(h, _)| h)
    }

    /// Teacher-forced decoder logits (`n × |V|`) given encoder outputs for `seq`.
    pub fn decode_teacher_forced(&self, h_e: &Matrix, seq: &TokenSequence) -> Result<Matrix> {
        if h_e.rows() != seq.len() || h_e.cols() != self.config.d_model {
            return Err(Error::shape(
                "decode_teacher_forced",
                format!("encoder output {:?} for sequence of {}", h_e.shape(), seq.len()),
            ));
        }
        network::check_ids(&self.config, &seq.ids)?;
        let layout = Layout::new(&[&seq.ids]);
        let dec_in = network::decoder_input(&self.config, &self.params, &layout);
        let (h_d, _) = network::decode_packed(&self.params, &layout, dec_in, h_e, &layout)?;
        network::logits(&self.params, &h_d)
    }

    /// Encoder outputs for the non-padding positions of `seq`.
    pub fn encode_sequence(&self, seq: &TokenSequence) -> Result<Matrix> {
        let e = self.embed(seq)?;
        let h = self.encode(&e.x, &e.pad)?;
        let keep: Vec<&[f64]> = (0..h.rows()).filter(|&i| !e.pad[i]).map(|i| h.row(i)).collect();
        Ok(Matrix::from_rows(&keep))
    }

    /// Free-running greedy reconstruction of `seq`, one token per input position.
    pub fn greedy_decode(&self, seq: &TokenSequence) -> Result<Vec<usize>> {
        let e = self.embed(seq)?;
        let h_e = self.encode(&e.x, &e.pad)?;
        let enc_layout = Layout::new(&[&seq.ids]);
        let mut out: Vec<usize> = Vec::with_capacity(seq.len());
        for i in 0..seq.len() {
            // The trailing id is never read: decoder position i sees tokens 0..i.
            let mut ids = out.clone();
            ids.push(UNK);
            let layout = Layout::new(&[&ids]);
            let dec_in = network::decoder_input(&self.config, &self.params, &layout);
            let (h_d, _) = network::decode_packed(&self.params, &layout, dec_in, &h_e, &enc_layout)?;
            let logits = network::logits(&self.params, &h_d.slice_rows(i..i + 1))?;
            out.push(argmax_non_pad(logits.row(0)));
        }
        Ok(out)
    }

    /// Summed NLL over the non-padding tokens of a batch.
    pub fn batch_loss(&self, seqs: &[&TokenSequence]) -> Result<LossSum> {
        let ids: Vec<&[usize]> = seqs.iter().map(|s| s.ids.as_slice()).collect();
        network::loss_only(&self.config, &self.params, &Layout::new(&ids))
    }

    /// Loss and the gradient of `scale · Σ NLL` with respect to every parameter.
    pub fn batch_loss_and_grad(&self, seqs: &[&TokenSequence], scale: f64) -> Result<(LossSum, Params)> {
        let ids: Vec<&[usize]> = seqs.iter().map(|s| s.ids.as_slice()).collect();
        network::loss_and_grad(&self.config, &self.params, &Layout::new(&ids), scale)
    }
}

fn argmax_non_pad(row: &[f64]) -> usize {
    let mut best = (UNK, f64::NEG_INFINITY);
    for (id, &v) in row.iter().enumerate() {
        if id != PAD && v > best.1 {
            best = (id, v);
        }
    }
    best.0
}

/// `−Σ log softmax(logits_i)[target_i]` over non-padding positions.
pub fn reconstruction_loss(logits: &Matrix, targets: &TokenSequence) -> Result<f64> {
    if logits.rows() != targets.len() {
        return Err(Error::shape(
            "reconstruction_loss",
            format!("{} logit rows for {} targets", logits.rows(), targets.len()),
        ));
    }
    let mut loss = 0.0;
    for (i, &t) in targets.ids.iter().enumerate() {
        if t == PAD {
            continue;
        }
        let row = logits.row(i);
        if t >= row.len() {
            return Err(Error::TokenOutOfRange { id: t, size: row.len() });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[t];
    }
    Ok(loss)
}
