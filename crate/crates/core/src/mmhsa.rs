//! Attention-based position regression: a ViT-style encoder over channel
//! patches with two learnable estimation tokens, mapping a `2 x N x L`
//! channel estimate to a 2D position, plus its SGD training loop.
//!
//! The estimate is laid out as an `(N, 2L)` real matrix (real subcarriers
//! first, then imaginary), tiled into `p x p` patches, linearly embedded,
//! and prepended with two estimation tokens. Sinusoidal positional
//! embeddings use base `2N`. The head consumes the concatenation of both
//! final token embeddings and outputs `(x, y)` in meters.

use rand::Rng;
use rand::seq::SliceRandom;

use crate::autograd::{sgd_step, NodeId, Tape, Tensor};
use crate::dma::ChannelEstimate;
use crate::error::{Error, Result};
use crate::rng;

/// Architecture hyperparameters; `n` and `l` pin the expected input size.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmhsaConfig {
    /// DMA element count N of the expected input.
    pub n: usize,
    /// Subcarrier count L of the expected input.
    pub l: usize,
    /// Patch side length p; must divide both N and 2L.
    pub patch: usize,
    pub d_hidden: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    /// Encoder MLP width multiplier.
    pub mlp_ratio: usize,
    /// Hidden width of the regression head MLP.
    pub head_hidden: usize,
    /// Fixed scale applied to the raw channel estimate before patching;
    /// physical channel magnitudes are far below 1, and without this the
    /// signal would be dwarfed by the positional embeddings.
    pub input_scale: f64,
}

impl MmhsaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.n % self.patch != 0 || (2 * self.l) % self.patch != 0 {
            return Err(Error::Config(format!(
                "patch size {} must divide N = {} and 2L = {}",
                self.patch,
                self.n,
                2 * self.l
            )));
        }
        if self.n_heads == 0 || self.d_hidden % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_hidden = {} must be divisible by n_heads = {}",
                self.d_hidden, self.n_heads
            )));
        }
        if self.n_blocks < 1 {
            return Err(Error::Config("n_blocks must be at least 1".into()));
        }
        if self.mlp_ratio < 1 || self.head_hidden < 1 {
            return Err(Error::Config("mlp_ratio and head_hidden must be at least 1".into()));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::Config(format!("input_scale must be positive, got {}", self.input_scale)));
        }
        Ok(())
    }

    /// Positional-embedding base frequency, `2N`.
    pub fn pe_base(&self) -> f64 {
        2.0 * self.n as f64
    }

    pub fn n_patches(&self) -> usize {
        (self.n / self.patch) * (2 * self.l / self.patch)
    }

    /// Sequence length including the two estimation tokens.
    pub fn seq_len(&self) -> usize {
        self.n_patches() + 2
    }
}

/// Per-encoder-block weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_scale: Tensor,
    pub ln1_shift: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_scale: Tensor,
    pub ln2_shift: Tensor,
    pub mlp_w1: Tensor,
    pub mlp_b1: Tensor,
    pub mlp_w2: Tensor,
    pub mlp_b2: Tensor,
}

/// All learnable weights of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MmhsaParams {
    pub patch_w: Tensor,
    pub patch_b: Tensor,
    /// The two estimation tokens, `(2, d_hidden)`.
    pub tokens: Tensor,
    pub blocks: Vec<BlockParams>,
    pub final_ln_scale: Tensor,
    pub final_ln_shift: Tensor,
    pub head_w1: Tensor,
    pub head_b1: Tensor,
    pub head_w2: Tensor,
    pub head_b2: Tensor,
}

fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect();
    Tensor::param(vec![rows, cols], data).expect("sized init")
}

fn zeros_param(len: usize) -> Tensor {
    Tensor::param(vec![len], vec![0.0; len]).expect("sized init")
}

fn ones_param(len: usize) -> Tensor {
    Tensor::param(vec![len], vec![1.0; len]).expect("sized init")
}

impl MmhsaParams {
    /// Xavier-uniform projections, zero biases, unit layer-norm scales, and
    /// small Gaussian estimation tokens.
    pub fn init(config: &MmhsaConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, "mmhsa-init");
        let d = config.d_hidden;
        let p_sq = config.patch * config.patch;
        let token_data = (0..2 * d).map(|_| 0.02 * rng::normal(&mut rng)).collect();
        let blocks = (0..config.n_blocks)
            .map(|_| BlockParams {
                ln1_scale: ones_param(d),
                ln1_shift: zeros_param(d),
                wq: xavier(d, d, &mut rng),
                bq: zeros_param(d),
                wk: xavier(d, d, &mut rng),
                bk: zeros_param(d),
                wv: xavier(d, d, &mut rng),
                bv: zeros_param(d),
                wo: xavier(d, d, &mut rng),
                bo: zeros_param(d),
                ln2_scale: ones_param(d),
                ln2_shift: zeros_param(d),
                mlp_w1: xavier(d, config.mlp_ratio * d, &mut rng),
                mlp_b1: zeros_param(config.mlp_ratio * d),
                mlp_w2: xavier(config.mlp_ratio * d, d, &mut rng),
                mlp_b2: zeros_param(d),
            })
            .collect();
        Ok(Self {
            patch_w: xavier(p_sq, d, &mut rng),
            patch_b: zeros_param(d),
            tokens: Tensor::param(vec![2, d], token_data)?,
            blocks,
            final_ln_scale: ones_param(d),
            final_ln_shift: zeros_param(d),
            head_w1: xavier(2 * d, config.head_hidden, &mut rng),
            head_b1: zeros_param(config.head_hidden),
            head_w2: xavier(config.head_hidden, 2, &mut rng),
            head_b2: zeros_param(2),
        })
    }

    /// Stable (name, tensor) enumeration; defines the checkpoint order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("patch/w".into(), &self.patch_w),
            ("patch/b".into(), &self.patch_b),
            ("tokens".into(), &self.tokens),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (suffix, t) in [
                ("ln1_scale", &b.ln1_scale),
                ("ln1_shift", &b.ln1_shift),
                ("wq", &b.wq),
                ("bq", &b.bq),
                ("wk", &b.wk),
                ("bk", &b.bk),
                ("wv", &b.wv),
                ("bv", &b.bv),
                ("wo", &b.wo),
                ("bo", &b.bo),
                ("ln2_scale", &b.ln2_scale),
                ("ln2_shift", &b.ln2_shift),
                ("mlp_w1", &b.mlp_w1),
                ("mlp_b1", &b.mlp_b1),
                ("mlp_w2", &b.mlp_w2),
                ("mlp_b2", &b.mlp_b2),
            ] {
                out.push((format!("block{i}/{suffix}"), t));
            }
        }
        out.push(("final_ln/scale".into(), &self.final_ln_scale));
        out.push(("final_ln/shift".into(), &self.final_ln_shift));
        out.push(("head/w1".into(), &self.head_w1));
        out.push(("head/b1".into(), &self.head_b1));
        out.push(("head/w2".into(), &self.head_w2));
        out.push(("head/b2".into(), &self.head_b2));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.patch_w, &mut self.patch_b, &mut self.tokens];
        for b in &mut self.blocks {
            out.extend([
                &mut b.ln1_scale,
                &mut b.ln1_shift,
                &mut b.wq,
                &mut b.bq,
                &mut b.wk,
                &mut b.bk,
                &mut b.wv,
                &mut b.bv,
                &mut b.wo,
                &mut b.bo,
                &mut b.ln2_scale,
                &mut b.ln2_shift,
                &mut b.mlp_w1,
                &mut b.mlp_b1,
                &mut b.mlp_w2,
                &mut b.mlp_b2,
            ]);
        }
        out.extend([
            &mut self.final_ln_scale,
            &mut self.final_ln_shift,
            &mut self.head_w1,
            &mut self.head_b1,
            &mut self.head_w2,
            &mut self.head_b2,
        ]);
        out
    }
}

/// Lay the `2 x N x L` estimate out as an `(N, 2L)` matrix (real columns
/// first, then imaginary) and tile it into row-major `p x p` patches, each
/// flattened row-major. Returns the `(n_patches, p^2)` matrix.
pub fn patchify(estimate: &ChannelEstimate, patch: usize) -> Result<(Vec<f64>, usize)> {
    let n = estimate.n;
    let cols = 2 * estimate.l;
    if patch == 0 || n % patch != 0 || cols % patch != 0 {
        return Err(Error::Config(format!(
            "patch size {patch} must divide N = {n} and 2L = {cols}"
        )));
    }
    let l = estimate.l;
    let value_at = |row: usize, col: usize| {
        if col < l {
            estimate.real[row * l + col]
        } else {
            estimate.imag[row * l + (col - l)]
        }
    };
    let tiles_per_row = cols / patch;
    let n_patches = (n / patch) * tiles_per_row;
    let mut out = Vec::with_capacity(n_patches * patch * patch);
    for tile_row in 0..n / patch {
        for tile_col in 0..tiles_per_row {
            for r in 0..patch {
                for c in 0..patch {
                    out.push(value_at(tile_row * patch + r, tile_col * patch + c));
                }
            }
        }
    }
    Ok((out, n_patches))
}

/// Sinusoidal positional embeddings with the given base:
/// `PE(pos, 2k) = sin(pos / base^{2k/d})`, `PE(pos, 2k+1) = cos(same)`.
pub fn positional_embeddings(seq_len: usize, d: usize, base: f64) -> Vec<f64> {
    let mut out = vec![0.0; seq_len * d];
    for pos in 0..seq_len {
        for k in 0..d.div_ceil(2) {
            let angle = pos as f64 / base.powf(2.0 * k as f64 / d as f64);
            out[pos * d + 2 * k] = angle.sin();
            if 2 * k + 1 < d {
                out[pos * d + 2 * k + 1] = angle.cos();
            }
        }
    }
    out
}

/// Tape handles for every parameter, bound once per tape so gradients of a
/// whole batch accumulate on the same leaves.
pub struct BoundParams {
    patch_w: NodeId,
    patch_b: NodeId,
    tokens: NodeId,
    blocks: Vec<BoundBlock>,
    final_ln_scale: NodeId,
    final_ln_shift: NodeId,
    head_w1: NodeId,
    head_b1: NodeId,
    head_w2: NodeId,
    head_b2: NodeId,
}

struct BoundBlock {
    ln1_scale: NodeId,
    ln1_shift: NodeId,
    wq: NodeId,
    bq: NodeId,
    wk: NodeId,
    bk: NodeId,
    wv: NodeId,
    bv: NodeId,
    wo: NodeId,
    bo: NodeId,
    ln2_scale: NodeId,
    ln2_shift: NodeId,
    mlp_w1: NodeId,
    mlp_b1: NodeId,
    mlp_w2: NodeId,
    mlp_b2: NodeId,
}

/// Record every parameter on the tape. Node order matches
/// [`MmhsaParams::named_tensors`].
pub fn bind_params(tape: &mut Tape, params: &MmhsaParams) -> BoundParams {
    BoundParams {
        patch_w: tape.leaf(&params.patch_w),
        patch_b: tape.leaf(&params.patch_b),
        tokens: tape.leaf(&params.tokens),
        blocks: params
            .blocks
            .iter()
            .map(|b| BoundBlock {
                ln1_scale: tape.leaf(&b.ln1_scale),
                ln1_shift: tape.leaf(&b.ln1_shift),
                wq: tape.leaf(&b.wq),
                bq: tape.leaf(&b.bq),
                wk: tape.leaf(&b.wk),
                bk: tape.leaf(&b.bk),
                wv: tape.leaf(&b.wv),
                bv: tape.leaf(&b.bv),
                wo: tape.leaf(&b.wo),
                bo: tape.leaf(&b.bo),
                ln2_scale: tape.leaf(&b.ln2_scale),
                ln2_shift: tape.leaf(&b.ln2_shift),
                mlp_w1: tape.leaf(&b.mlp_w1),
                mlp_b1: tape.leaf(&b.mlp_b1),
                mlp_w2: tape.leaf(&b.mlp_w2),
                mlp_b2: tape.leaf(&b.mlp_b2),
            })
            .collect(),
        final_ln_scale: tape.leaf(&params.final_ln_scale),
        final_ln_shift: tape.leaf(&params.final_ln_shift),
        head_w1: tape.leaf(&params.head_w1),
        head_b1: tape.leaf(&params.head_b1),
        head_w2: tape.leaf(&params.head_w2),
        head_b2: tape.leaf(&params.head_b2),
    }
}

impl BoundParams {
    /// Tape node ids in [`MmhsaParams::tensors_mut`] order.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut out = vec![self.patch_w, self.patch_b, self.tokens];
        for b in &self.blocks {
            out.extend([
                b.ln1_scale, b.ln1_shift, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo,
                b.ln2_scale, b.ln2_shift, b.mlp_w1, b.mlp_b1, b.mlp_w2, b.mlp_b2,
            ]);
        }
        out.extend([
            self.final_ln_scale,
            self.final_ln_shift,
            self.head_w1,
            self.head_b1,
            self.head_w2,
            self.head_b2,
        ]);
        out
    }
}

/// Linear patch embedding plus token prepending and positional embeddings.
pub fn embed(
    tape: &mut Tape,
    bound: &BoundParams,
    patches: NodeId,
    config: &MmhsaConfig,
) -> Result<NodeId> {
    let projected = tape.matmul(patches, bound.patch_w)?;
    let projected = tape.add_row(projected, bound.patch_b)?;
    let seq = tape.concat_rows(&[bound.tokens, projected])?;
    let seq_len = tape.shape(seq)[0];
    let pe = positional_embeddings(seq_len, config.d_hidden, config.pe_base());
    let pe_node = tape.leaf_from(vec![seq_len, config.d_hidden], pe)?;
    tape.add(seq, pe_node)
}

/// Pre-norm encoder block: `x + MHSA(LN(x))` then `x + MLP(LN(x))`.
fn encoder_block(
    tape: &mut Tape,
    block: &BoundBlock,
    x: NodeId,
    config: &MmhsaConfig,
) -> Result<NodeId> {
    let d = config.d_hidden;
    let d_head = d / config.n_heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    let normed = tape.layer_norm(x)?;
    let normed = tape.mul_row(normed, block.ln1_scale)?;
    let normed = tape.add_row(normed, block.ln1_shift)?;

    let q = tape.matmul(normed, block.wq)?;
    let q = tape.add_row(q, block.bq)?;
    let k = tape.matmul(normed, block.wk)?;
    let k = tape.add_row(k, block.bk)?;
    let v = tape.matmul(normed, block.wv)?;
    let v = tape.add_row(v, block.bv)?;

    let mut heads = Vec::with_capacity(config.n_heads);
    for h in 0..config.n_heads {
        let (lo, hi) = (h * d_head, (h + 1) * d_head);
        let qh = tape.slice_cols(q, lo, hi)?;
        let kh = tape.slice_cols(k, lo, hi)?;
        let vh = tape.slice_cols(v, lo, hi)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax(scores)?;
        heads.push(tape.matmul(attn, vh)?);
    }
    let ctx = tape.concat_cols(&heads)?;
    let ctx = tape.matmul(ctx, block.wo)?;
    let ctx = tape.add_row(ctx, block.bo)?;
    let x = tape.add(x, ctx)?;

    let normed = tape.layer_norm(x)?;
    let normed = tape.mul_row(normed, block.ln2_scale)?;
    let normed = tape.add_row(normed, block.ln2_shift)?;
    let hidden = tape.matmul(normed, block.mlp_w1)?;
    let hidden = tape.add_row(hidden, block.mlp_b1)?;
    let hidden = tape.gelu(hidden);
    let out = tape.matmul(hidden, block.mlp_w2)?;
    let out = tape.add_row(out, block.mlp_b2)?;
    tape.add(x, out)
}

/// Full forward pass on an existing tape; returns a `(1, 2)` node holding
/// the position estimate.
pub fn forward_on_tape(
    tape: &mut Tape,
    bound: &BoundParams,
    estimate: &ChannelEstimate,
    config: &MmhsaConfig,
) -> Result<NodeId> {
    if estimate.n != config.n || estimate.l != config.l {
        return Err(Error::Dimension(format!(
            "estimate is {}x{}, network expects {}x{}",
            estimate.n, estimate.l, config.n, config.l
        )));
    }
    let (mut patch_data, n_patches) = patchify(estimate, config.patch)?;
    for v in &mut patch_data {
        *v *= config.input_scale;
    }
    let patch_len = config.patch * config.patch;
    let patches = tape.leaf_from(vec![n_patches, patch_len], patch_data)?;
    let mut x = embed(tape, bound, patches, config)?;
    for block in &bound.blocks {
        x = encoder_block(tape, block, x, config)?;
    }
    let x = tape.layer_norm(x)?;
    let x = tape.mul_row(x, bound.final_ln_scale)?;
    let x = tape.add_row(x, bound.final_ln_shift)?;
    let tokens = tape.slice_rows(x, 0, 2)?;
    let flat = tape.reshape(tokens, vec![1, 2 * config.d_hidden])?;
    let hidden = tape.matmul(flat, bound.head_w1)?;
    let hidden = tape.add_row(hidden, bound.head_b1)?;
    let hidden = tape.gelu(hidden);
    let out = tape.matmul(hidden, bound.head_w2)?;
    tape.add_row(out, bound.head_b2)
}

/// Inference-only forward pass.
pub fn forward(
    estimate: &ChannelEstimate,
    params: &MmhsaParams,
    config: &MmhsaConfig,
) -> Result<[f64; 2]> {
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, params);
    let out = forward_on_tape(&mut tape, &bound, estimate, config)?;
    let v = tape.value(out);
    Ok([v[0], v[1]])
}

/// Euclidean-distance loss node for one sample.
pub fn sample_loss(
    tape: &mut Tape,
    prediction: NodeId,
    target: [f64; 2],
) -> Result<NodeId> {
    let t = tape.leaf_from(vec![1, 2], target.to_vec())?;
    let diff = tape.sub(prediction, t)?;
    let sq = tape.square(diff);
    let ssq = tape.sum(sq);
    tape.sqrt(ssq)
}

/// Train on a flat (estimate, position) sample set by minibatch SGD on the
/// mean Euclidean distance loss. Returns the trained parameters and the
/// per-epoch mean training loss.
pub fn train(
    samples: &[(&ChannelEstimate, [f64; 2])],
    config: &MmhsaConfig,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<(MmhsaParams, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Domain("training requires a non-empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Domain("batch size must be positive".into()));
    }
    let mut params = MmhsaParams::init(config, seed)?;
    let mut history = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..epochs {
        let mut shuffle_rng = rng::stream(seed, &format!("epoch-shuffle-{epoch}"));
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let mut tape = Tape::new();
            let bound = bind_params(&mut tape, &params);
            let mut total: Option<NodeId> = None;
            for &idx in batch {
                let (estimate, target) = samples[idx];
                let pred = forward_on_tape(&mut tape, &bound, estimate, config)?;
                let loss = sample_loss(&mut tape, pred, target)?;
                epoch_loss += tape.value(loss)[0];
                total = Some(match total {
                    Some(acc) => tape.add(acc, loss)?,
                    None => loss,
                });
            }
            let total = total.expect("non-empty batch");
            let mean = tape.scale(total, 1.0 / batch.len() as f64);
            let mean_value = tape.value(mean)[0];
            if !mean_value.is_finite() {
                return Err(Error::State(format!(
                    "training diverged: non-finite batch loss {mean_value} at epoch {epoch} (lr = {learning_rate})"
                )));
            }
            tape.backward(mean)?;
            if learning_rate != 0.0 {
                let node_ids = bound.node_ids();
                for (tensor, node) in params.tensors_mut().into_iter().zip(node_ids) {
                    tensor.accumulate_grad(tape.grad(node))?;
                }
                sgd_step(params.tensors_mut(), learning_rate)?;
            }
        }
        history.push(epoch_loss / samples.len() as f64);
    }
    Ok((params, history))
}
