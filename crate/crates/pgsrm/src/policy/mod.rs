//! The trainable child policy: a small autoregressive transformer with a
//! scalar value head, plus its tokenizer and sampler.
//!
//! Pre-norm blocks, learned positional embeddings, GELU feed-forward, untied
//! output projection. Positions are counted over non-pad tokens, so logits at
//! real tokens are invariant to padding layout and generation-time positions
//! agree with training-time positions even when prompts are padded mid-row.

mod tokenizer;

pub use tokenizer::{segment_word_level, Tokenizer, TokenizerError, TokenizerMode};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;
use crate::rng::Rng;
use crate::tensor::{Graph, Tensor, TensorError, TensorId};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("sequence of {needed} tokens exceeds context length {context}")]
    ContextOverflow { needed: usize, context: usize },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    InvalidTokenId { id: u32, vocab: usize },
    #[error("row {row} has no response tokens")]
    DegenerateEpisode { row: usize },
    #[error("d_model {d_model} is not divisible by {n_heads} heads")]
    BadHeadCount { d_model: usize, n_heads: usize },
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("checkpoint i/o error on {path}: {source}")]
    CheckpointIo {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint parse error: {0}")]
    CheckpointFormat(String),
}

pub type Result<T> = std::result::Result<T, PolicyError>;

/// Transformer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub context: usize,
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model % self.n_heads != 0 {
            return Err(PolicyError::BadHeadCount {
                d_model: self.d_model,
                n_heads: self.n_heads,
            });
        }
        Ok(())
    }
}

/// Rectangular batch of token ids, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMatrix {
    pub rows: usize,
    pub cols: usize,
    pub ids: Vec<u32>,
}

impl TokenMatrix {
    pub fn new(rows: usize, cols: usize, ids: Vec<u32>) -> Self {
        assert_eq!(rows * cols, ids.len(), "token matrix shape mismatch");
        Self { rows, cols, ids }
    }

    /// Right-pads variable-length rows to a common width.
    pub fn from_rows(rows: &[Vec<u32>], pad_id: u32) -> Self {
        let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            ids.extend_from_slice(row);
            ids.extend(std::iter::repeat_n(pad_id, cols - row.len()));
        }
        Self {
            rows: rows.len(),
            cols,
            ids,
        }
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.ids[r * self.cols..(r + 1) * self.cols]
    }

    /// 0/1 mask of non-pad positions.
    pub fn attn_mask<S: Real>(&self, pad_id: u32) -> Vec<S> {
        self.ids
            .iter()
            .map(|&id| if id == pad_id { S::ZERO } else { S::ONE })
            .collect()
    }

    /// Row-wise concatenation of two equally-tall matrices.
    pub fn concat(&self, other: &TokenMatrix) -> TokenMatrix {
        assert_eq!(self.rows, other.rows, "row count mismatch");
        let cols = self.cols + other.cols;
        let mut ids = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            ids.extend_from_slice(self.row(r));
            ids.extend_from_slice(other.row(r));
        }
        TokenMatrix {
            rows: self.rows,
            cols,
            ids,
        }
    }
}

#[derive(Debug, Clone)]
struct BlockParams<S> {
    ln1_g: Tensor<S>,
    ln1_b: Tensor<S>,
    wq: Tensor<S>,
    bq: Tensor<S>,
    wk: Tensor<S>,
    bk: Tensor<S>,
    wv: Tensor<S>,
    bv: Tensor<S>,
    wo: Tensor<S>,
    bo: Tensor<S>,
    ln2_g: Tensor<S>,
    ln2_b: Tensor<S>,
    w1: Tensor<S>,
    b1: Tensor<S>,
    w2: Tensor<S>,
    b2: Tensor<S>,
}

/// The policy: transformer body with language-model head plus a scalar value
/// head on final hidden states.
#[derive(Debug, Clone)]
pub struct PolicyModel<S> {
    cfg: ModelConfig,
    tok_emb: Tensor<S>,
    pos_emb: Tensor<S>,
    blocks: Vec<BlockParams<S>>,
    lnf_g: Tensor<S>,
    lnf_b: Tensor<S>,
    lm_w: Tensor<S>,
    lm_b: Tensor<S>,
    vh_w: Tensor<S>,
    vh_b: Tensor<S>,
}

/// Graph handles produced by one recorded forward pass.
pub struct ForwardPass {
    /// `[B, T, V]` actor logits.
    pub logits: TensorId,
    /// `[B*T, d]` final hidden states (after the last layer norm).
    pub hidden: TensorId,
    /// Leaves for every actor parameter, aligned with
    /// [`PolicyModel::actor_param_names`].
    pub actor_leaves: Vec<TensorId>,
}

const LN_EPS: f64 = 1e-5;
const MASK_BIAS: f64 = -1e9;
const INIT_STD: f64 = 0.02;

impl<S: Real> PolicyModel<S> {
    /// Random initialization: normal(0, 0.02) weights, unit layer-norm gains,
    /// zero biases.
    pub fn init(cfg: ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let v = cfg.vocab;
        let ff = 4 * d;
        let mut normal = |shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            let data: Vec<S> = (0..n)
                .map(|_| S::from_f64(rng.normal() * INIT_STD))
                .collect();
            Tensor::new(shape, data).expect("valid init shape")
        };
        let ones = |n: usize| Tensor::new(vec![n], vec![S::ONE; n]).expect("valid shape");
        let zeros = |shape: Vec<usize>| Tensor::zeros(shape);

        let blocks = (0..cfg.n_layers)
            .map(|_| BlockParams {
                ln1_g: ones(d),
                ln1_b: zeros(vec![d]),
                wq: normal(vec![d, d]),
                bq: zeros(vec![d]),
                wk: normal(vec![d, d]),
                bk: zeros(vec![d]),
                wv: normal(vec![d, d]),
                bv: zeros(vec![d]),
                wo: normal(vec![d, d]),
                bo: zeros(vec![d]),
                ln2_g: ones(d),
                ln2_b: zeros(vec![d]),
                w1: normal(vec![d, ff]),
                b1: zeros(vec![ff]),
                w2: normal(vec![ff, d]),
                b2: zeros(vec![d]),
            })
            .collect();

        Ok(Self {
            tok_emb: normal(vec![v, d]),
            pos_emb: normal(vec![cfg.context, d]),
            blocks,
            lnf_g: ones(d),
            lnf_b: zeros(vec![d]),
            lm_w: normal(vec![d, v]),
            lm_b: zeros(vec![v]),
            vh_w: normal(vec![d, 1]),
            vh_b: zeros(vec![1]),
            cfg,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Actor parameter names in optimizer order (everything but the value
    /// head).
    pub fn actor_param_names(&self) -> Vec<String> {
        let mut names = vec!["tok_emb".to_string(), "pos_emb".to_string()];
        for i in 0..self.blocks.len() {
            for field in [
                "ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_g",
                "ln2_b", "w1", "b1", "w2", "b2",
            ] {
                names.push(format!("block{i}.{field}"));
            }
        }
        names.extend(["lnf_g", "lnf_b", "lm_w", "lm_b"].map(String::from));
        names
    }

    pub fn actor_params(&self) -> Vec<&Tensor<S>> {
        let mut out: Vec<&Tensor<S>> = vec![&self.tok_emb, &self.pos_emb];
        for b in &self.blocks {
            out.extend([
                &b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo,
                &b.ln2_g, &b.ln2_b, &b.w1, &b.b1, &b.w2, &b.b2,
            ]);
        }
        out.extend([&self.lnf_g, &self.lnf_b, &self.lm_w, &self.lm_b]);
        out
    }

    pub fn actor_params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out: Vec<&mut Tensor<S>> = vec![&mut self.tok_emb, &mut self.pos_emb];
        for b in &mut self.blocks {
            out.extend([
                &mut b.ln1_g, &mut b.ln1_b, &mut b.wq, &mut b.bq, &mut b.wk, &mut b.bk,
                &mut b.wv, &mut b.bv, &mut b.wo, &mut b.bo, &mut b.ln2_g, &mut b.ln2_b,
                &mut b.w1, &mut b.b1, &mut b.w2, &mut b.b2,
            ]);
        }
        out.extend([
            &mut self.lnf_g,
            &mut self.lnf_b,
            &mut self.lm_w,
            &mut self.lm_b,
        ]);
        out
    }

    pub fn value_params(&self) -> Vec<&Tensor<S>> {
        vec![&self.vh_w, &self.vh_b]
    }

    pub fn value_params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.vh_w, &mut self.vh_b]
    }

    /// FNV-1a checksum over the little-endian bytes of every parameter, in
    /// optimizer order. Used to verify paired runs share their init.
    pub fn param_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |t: &Tensor<S>| {
            for &v in t.data() {
                for b in v.to_f64().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        };
        for t in self.actor_params() {
            eat(t);
        }
        for t in self.value_params() {
            eat(t);
        }
        h
    }

    fn validate_ids(&self, x: &TokenMatrix) -> Result<()> {
        if x.cols > self.cfg.context {
            return Err(PolicyError::ContextOverflow {
                needed: x.cols,
                context: self.cfg.context,
            });
        }
        for &id in &x.ids {
            if id as usize >= self.cfg.vocab {
                return Err(PolicyError::InvalidTokenId {
                    id,
                    vocab: self.cfg.vocab,
                });
            }
        }
        Ok(())
    }

    /// Records the full forward pass on `g` and returns logit/hidden handles
    /// plus the actor parameter leaves (for gradient harvesting).
    ///
    /// `m_attn` must hold one 0/1 entry per position of `x`; pad positions
    /// are excluded from attention and from position counting.
    pub fn forward_on_graph(
        &self,
        g: &mut Graph<S>,
        x: &TokenMatrix,
        m_attn: &[S],
        requires_grad: bool,
    ) -> Result<ForwardPass> {
        self.validate_ids(x)?;
        assert_eq!(m_attn.len(), x.ids.len(), "mask length mismatch");
        let (b, t, d) = (x.rows, x.cols, self.cfg.d_model);
        let heads = self.cfg.n_heads;
        let hd = self.cfg.head_dim();

        // Positions count non-pad tokens, so padding layout cannot shift real
        // tokens' positional embeddings.
        let mut pos_ids = vec![0usize; b * t];
        for r in 0..b {
            let mut pos = 0usize;
            for c in 0..t {
                pos_ids[r * t + c] = pos.min(self.cfg.context - 1);
                if m_attn[r * t + c] == S::ONE {
                    pos += 1;
                }
            }
        }

        let leaf = |g: &mut Graph<S>, tensor: &Tensor<S>| {
            if requires_grad {
                g.leaf(tensor.clone().requiring_grad())
            } else {
                g.leaf(tensor.clone())
            }
        };

        let mut actor_leaves = Vec::new();
        let tok_emb = leaf(g, &self.tok_emb);
        let pos_emb = leaf(g, &self.pos_emb);
        actor_leaves.extend([tok_emb, pos_emb]);

        let token_ids: Vec<usize> = x.ids.iter().map(|&i| i as usize).collect();
        let tok = g.gather_rows(tok_emb, &token_ids)?;
        let pos = g.gather_rows(pos_emb, &pos_ids)?;
        let mut h = g.add(tok, pos)?; // [B*T, d]

        // Shared attention bias: causal and pad-key masking.
        let bias = self.attention_bias(b, t, heads, m_attn);
        let bias_leaf = g.constant(Tensor::new(vec![b * heads, t, t], bias).expect("bias shape"));

        let scale = S::ONE / S::from_usize(hd).sqrt();
        for block in &self.blocks {
            let ln1_g = leaf(g, &block.ln1_g);
            let ln1_b = leaf(g, &block.ln1_b);
            let wq = leaf(g, &block.wq);
            let bq = leaf(g, &block.bq);
            let wk = leaf(g, &block.wk);
            let bk = leaf(g, &block.bk);
            let wv = leaf(g, &block.wv);
            let bv = leaf(g, &block.bv);
            let wo = leaf(g, &block.wo);
            let bo = leaf(g, &block.bo);
            let ln2_g = leaf(g, &block.ln2_g);
            let ln2_b = leaf(g, &block.ln2_b);
            let w1 = leaf(g, &block.w1);
            let b1 = leaf(g, &block.b1);
            let w2 = leaf(g, &block.w2);
            let b2 = leaf(g, &block.b2);
            actor_leaves.extend([
                ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2,
            ]);

            let a = g.layer_norm(h, ln1_g, ln1_b, S::from_f64(LN_EPS))?;
            let to_heads = |g: &mut Graph<S>, m: TensorId| -> crate::tensor::Result<TensorId> {
                let r = g.reshape(m, vec![b, t, heads, hd])?;
                let p = g.permute(r, &[0, 2, 1, 3])?;
                g.reshape(p, vec![b * heads, t, hd])
            };
            let q = g.matmul(a, wq)?;
            let q = g.add_bias(q, bq)?;
            let q4 = to_heads(g, q)?;
            let k = g.matmul(a, wk)?;
            let k = g.add_bias(k, bk)?;
            let k4 = to_heads(g, k)?;
            let v = g.matmul(a, wv)?;
            let v = g.add_bias(v, bv)?;
            let v4 = to_heads(g, v)?;

            let kt = g.transpose_last2(k4)?;
            let scores = g.bmm(q4, kt)?;
            let scores = g.scale(scores, scale)?;
            let scores = g.add(scores, bias_leaf)?;
            let probs = g.softmax_last(scores)?;
            let ctx = g.bmm(probs, v4)?; // [B*H, T, hd]

            let ctx = g.reshape(ctx, vec![b, heads, t, hd])?;
            let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
            let ctx = g.reshape(ctx, vec![b * t, d])?;
            let o = g.matmul(ctx, wo)?;
            let o = g.add_bias(o, bo)?;
            h = g.add(h, o)?;

            let f = g.layer_norm(h, ln2_g, ln2_b, S::from_f64(LN_EPS))?;
            let f = g.matmul(f, w1)?;
            let f = g.add_bias(f, b1)?;
            let f = g.gelu(f)?;
            let f = g.matmul(f, w2)?;
            let f = g.add_bias(f, b2)?;
            h = g.add(h, f)?;
        }

        let lnf_g = leaf(g, &self.lnf_g);
        let lnf_b = leaf(g, &self.lnf_b);
        let lm_w = leaf(g, &self.lm_w);
        let lm_b = leaf(g, &self.lm_b);
        actor_leaves.extend([lnf_g, lnf_b, lm_w, lm_b]);

        let hidden = g.layer_norm(h, lnf_g, lnf_b, S::from_f64(LN_EPS))?;
        let logits_flat = g.matmul(hidden, lm_w)?;
        let logits_flat = g.add_bias(logits_flat, lm_b)?;
        let logits = g.reshape(logits_flat, vec![b, t, self.cfg.vocab])?;

        Ok(ForwardPass {
            logits,
            hidden,
            actor_leaves,
        })
    }

    fn attention_bias(&self, b: usize, t: usize, heads: usize, m_attn: &[S]) -> Vec<S> {
        let neg = S::from_f64(MASK_BIAS);
        let mut bias = vec![S::ZERO; b * heads * t * t];
        for bi in 0..b {
            for hi in 0..heads {
                let base = (bi * heads + hi) * t * t;
                for q in 0..t {
                    for k in 0..t {
                        let visible = k <= q && m_attn[bi * t + k] == S::ONE;
                        if !visible {
                            bias[base + q * t + k] = neg;
                        }
                    }
                }
            }
        }
        bias
    }

    /// Plain forward pass: `[B, T, V]` logits and `[B, T, d]` hidden states.
    pub fn forward(&self, x: &TokenMatrix, m_attn: &[S]) -> Result<(Tensor<S>, Tensor<S>)> {
        let mut g = Graph::new();
        let pass = self.forward_on_graph(&mut g, x, m_attn, false)?;
        let logits = g.value(pass.logits).clone();
        let hidden_flat = g.value(pass.hidden).clone();
        let hidden = Tensor::new(
            vec![x.rows, x.cols, self.cfg.d_model],
            hidden_flat.data().to_vec(),
        )
        .expect("hidden shape");
        Ok((logits, hidden))
    }

    /// Applies the value head to selected rows of the `[B*T, d]` hidden node.
    /// Returns the `[B]` value handle and the two value-head leaves.
    pub fn value_head_on_graph(
        &self,
        g: &mut Graph<S>,
        hidden: TensorId,
        flat_indices: &[usize],
        requires_grad: bool,
    ) -> Result<(TensorId, [TensorId; 2])> {
        let vh_w = if requires_grad {
            g.leaf(self.vh_w.clone().requiring_grad())
        } else {
            g.leaf(self.vh_w.clone())
        };
        let vh_b = if requires_grad {
            g.leaf(self.vh_b.clone().requiring_grad())
        } else {
            g.leaf(self.vh_b.clone())
        };
        let picked = g.gather_rows(hidden, flat_indices)?; // [B, d]
        let v = g.matmul(picked, vh_w)?; // [B, 1]
        let v = g.add_bias(v, vh_b)?;
        let v = g.reshape(v, vec![flat_indices.len()])?;
        Ok((v, [vh_w, vh_b]))
    }

    /// Index of the last non-pad response position per row, flattened into
    /// `[B*T]` coordinates. `m_resp` is the 0/1 response mask over `[B, T]`.
    pub fn last_response_indices(m_resp: &[S], rows: usize, cols: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut found = None;
            for c in (0..cols).rev() {
                if m_resp[r * cols + c] == S::ONE {
                    found = Some(r * cols + c);
                    break;
                }
            }
            out.push(found.ok_or(PolicyError::DegenerateEpisode { row: r })?);
        }
        Ok(out)
    }

    /// Value head output at each row's last non-pad response token.
    pub fn value_at_last_response_token(
        &self,
        x: &TokenMatrix,
        m_attn: &[S],
        m_resp: &[S],
    ) -> Result<Tensor<S>> {
        let mut g = Graph::new();
        let pass = self.forward_on_graph(&mut g, x, m_attn, false)?;
        let idx = Self::last_response_indices(m_resp, x.rows, x.cols)?;
        let (v, _) = self.value_head_on_graph(&mut g, pass.hidden, &idx, false)?;
        Ok(g.value(v).clone())
    }

    /// Freezes a deep copy of the current parameters.
    pub fn snapshot_reference(&self) -> ReferencePolicy<S> {
        ReferencePolicy(self.clone())
    }
}

/// How [`generate`] picks tokens.
#[derive(Debug, Clone, Copy)]
pub enum Sampling {
    /// Argmax decoding (ties break toward the lowest id).
    Greedy,
    /// Ancestral sampling from `softmax(logits / temperature)`.
    Temperature(f64),
}

impl<S: Real> PolicyModel<S> {
    /// Samples a response for one prompt. Returns only the response ids,
    /// including the end-of-sequence token when one was emitted.
    pub fn generate(
        &self,
        prompt: &[u32],
        max_new: usize,
        sampling: Sampling,
        eos_id: u32,
        pad_id: u32,
        rng: &mut Rng,
    ) -> Result<Vec<u32>> {
        let out = self.generate_batch(
            std::slice::from_ref(&prompt.to_vec()),
            max_new,
            sampling,
            eos_id,
            pad_id,
            rng,
        )?;
        Ok(out.into_iter().next().expect("one row"))
    }

    /// Samples responses for a batch of prompts, row by row in fixed order so
    /// results are reproducible. Finished rows stop consuming randomness.
    pub fn generate_batch(
        &self,
        prompts: &[Vec<u32>],
        max_new: usize,
        sampling: Sampling,
        eos_id: u32,
        pad_id: u32,
        rng: &mut Rng,
    ) -> Result<Vec<Vec<u32>>> {
        assert!(max_new >= 1, "max_new must be at least 1");
        if let Sampling::Temperature(t) = sampling {
            if !(t > 0.0) {
                return Err(PolicyError::BadTemperature(t));
            }
        }
        let longest = prompts.iter().map(Vec::len).max().unwrap_or(0);
        if longest + max_new > self.cfg.context {
            return Err(PolicyError::ContextOverflow {
                needed: longest + max_new,
                context: self.cfg.context,
            });
        }

        let mut cur: Vec<Vec<u32>> = prompts.to_vec();
        let mut active: Vec<bool> = prompts.iter().map(|p| !p.is_empty()).collect();
        let prompt_lens: Vec<usize> = prompts.iter().map(Vec::len).collect();

        for _ in 0..max_new {
            if active.iter().all(|a| !a) {
                break;
            }
            let x = TokenMatrix::from_rows(&cur, pad_id);
            let m_attn: Vec<S> = x.attn_mask(pad_id);
            let mut g = Graph::new();
            let pass = self.forward_on_graph(&mut g, &x, &m_attn, false)?;
            let logits = g.value(pass.logits);
            let v = self.cfg.vocab;
            for r in 0..cur.len() {
                if !active[r] {
                    continue;
                }
                let at = cur[r].len() - 1;
                let row = &logits.data()[(r * x.cols + at) * v..(r * x.cols + at) * v + v];
                // The pad token is never a legal output.
                let next = match sampling {
                    Sampling::Greedy => {
                        let mut best = usize::from(pad_id == 0);
                        for (j, &z) in row.iter().enumerate() {
                            if j as u32 != pad_id && z > row[best] {
                                best = j;
                            }
                        }
                        best as u32
                    }
                    Sampling::Temperature(temp) => {
                        let scaled: Vec<f64> = row.iter().map(|&z| z.to_f64() / temp).collect();
                        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let weights: Vec<f64> = scaled
                            .iter()
                            .enumerate()
                            .map(|(j, &z)| {
                                if j as u32 == pad_id {
                                    0.0
                                } else {
                                    (z - max).exp()
                                }
                            })
                            .collect();
                        rng.categorical(&weights) as u32
                    }
                };
                cur[r].push(next);
                if next == eos_id {
                    active[r] = false;
                }
            }
        }

        Ok(cur
            .into_iter()
            .zip(prompt_lens)
            .map(|(row, plen)| row[plen..].to_vec())
            .collect())
    }
}

/// Immutable snapshot of a [`PolicyModel`]; only shared access is exposed.
#[derive(Debug, Clone)]
pub struct ReferencePolicy<S>(PolicyModel<S>);

impl<S: Real> ReferencePolicy<S> {
    pub fn model(&self) -> &PolicyModel<S> {
        &self.0
    }
}

// ---- checkpoints -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

/// On-disk checkpoint: JSON with hyperparameters, tokenizer, and all
/// parameter arrays (f32 values round-trip exactly through JSON).
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: ModelConfig,
    tokenizer_mode: TokenizerMode,
    tokens: Vec<String>,
    params: Vec<NamedArray>,
}

const CHECKPOINT_FORMAT: &str = "pgsrm-checkpoint-v1";

pub fn save_checkpoint(
    model: &PolicyModel<f32>,
    tok: &Tokenizer,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut params = Vec::new();
    let names = model.actor_param_names();
    for (name, tensor) in names.iter().zip(model.actor_params()) {
        params.push(NamedArray {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            data: tensor.data().to_vec(),
        });
    }
    for (name, tensor) in ["vh_w", "vh_b"].iter().zip(model.value_params()) {
        params.push(NamedArray {
            name: (*name).to_string(),
            shape: tensor.shape().to_vec(),
            data: tensor.data().to_vec(),
        });
    }
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        config: *model.config(),
        tokenizer_mode: tok.mode(),
        tokens: tok.user_tokens().to_vec(),
        params,
    };
    let json = serde_json::to_string(&file).expect("serializable checkpoint");
    fs::write(path, json).map_err(|source| PolicyError::CheckpointIo {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(PolicyModel<f32>, Tokenizer)> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| PolicyError::CheckpointIo {
        path: path.display().to_string(),
        source,
    })?;
    let file: CheckpointFile =
        serde_json::from_str(&content).map_err(|e| PolicyError::CheckpointFormat(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(PolicyError::CheckpointFormat(format!(
            "unsupported format '{}'",
            file.format
        )));
    }
    let tok = Tokenizer::from_token_list(file.tokenizer_mode, file.tokens);
    let mut rng = Rng::new(0);
    let mut model: PolicyModel<f32> = PolicyModel::init(file.config, &mut rng)?;
    let mut by_name: std::collections::HashMap<String, NamedArray> = file
        .params
        .into_iter()
        .map(|p| (p.name.clone(), p))
        .collect();
    let names = model.actor_param_names();
    for (name, tensor) in names.iter().zip(model.actor_params_mut()) {
        restore(tensor, by_name.remove(name), name)?;
    }
    for (name, tensor) in ["vh_w", "vh_b"].iter().zip(model.value_params_mut()) {
        restore(tensor, by_name.remove(*name), name)?;
    }
    if !by_name.is_empty() {
        let extra: Vec<String> = by_name.into_keys().collect();
        return Err(PolicyError::CheckpointFormat(format!(
            "unexpected parameters: {extra:?}"
        )));
    }
    Ok((model, tok))
}

fn restore(tensor: &mut Tensor<f32>, entry: Option<NamedArray>, name: &str) -> Result<()> {
    let entry = entry.ok_or_else(|| {
        PolicyError::CheckpointFormat(format!("missing parameter '{name}'"))
    })?;
    if entry.shape != tensor.shape() || entry.data.len() != tensor.numel() {
        return Err(PolicyError::CheckpointFormat(format!(
            "parameter '{name}' has shape {:?}, expected {:?}",
            entry.shape,
            tensor.shape()
        )));
    }
    tensor.data_mut().copy_from_slice(&entry.data);
    Ok(())
}

#[cfg(test)]
mod tests;
