//! Pre-norm decoder-only transformer: forward pass, masked next-token loss
//! and the analytic backward pass.

use super::ops::*;
use super::params::{LayerTensor as LT, ModelParams, WPE, WTE};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// `n` sequences of `t` tokens, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub n: usize,
    pub t: usize,
    pub tokens: Vec<u32>,
}

impl TokenBatch {
    pub fn new(n: usize, t: usize, tokens: Vec<u32>) -> Result<Self> {
        if tokens.len() != n * t || n == 0 || t == 0 {
            return Err(Error::Shape(format!("{} tokens do not form a {n}x{t} batch", tokens.len())));
        }
        Ok(Self { n, t, tokens })
    }

    pub fn single(tokens: &[u32]) -> Result<Self> {
        Self::new(1, tokens.len(), tokens.to_vec())
    }
}

#[derive(Debug, Clone)]
struct LayerActs<T> {
    ln1: Vec<T>,
    ln1_mean: Vec<T>,
    ln1_rstd: Vec<T>,
    qkv: Vec<T>,
    att: Vec<T>,
    atty: Vec<T>,
    res2: Vec<T>,
    ln2: Vec<T>,
    ln2_mean: Vec<T>,
    ln2_rstd: Vec<T>,
    fch: Vec<T>,
    fch_gelu: Vec<T>,
    res3: Vec<T>,
}

/// Activations retained from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub n: usize,
    pub t: usize,
    pub vocab_size: usize,
    tokens: Vec<u32>,
    encoded: Vec<T>,
    layers: Vec<LayerActs<T>>,
    lnf: Vec<T>,
    lnf_mean: Vec<T>,
    lnf_rstd: Vec<T>,
    /// `n x t x vocab_size` unnormalized scores.
    pub logits: Vec<T>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn logits_at(&self, b: usize, pos: usize) -> &[T] {
        let v = self.vocab_size;
        &self.logits[(b * self.t + pos) * v..][..v]
    }

    /// Final hidden state (after the last layer norm) at one position.
    pub fn hidden_at(&self, b: usize, pos: usize, c: usize) -> &[T] {
        &self.lnf[(b * self.t + pos) * c..][..c]
    }
}

fn check_batch<T: Scalar>(params: &ModelParams<T>, batch: &TokenBatch) -> Result<()> {
    let cfg = &params.config;
    if batch.t > cfg.block_size {
        return Err(Error::Shape(format!("sequence length {} exceeds block size {}", batch.t, cfg.block_size)));
    }
    if batch.tokens.len() != batch.n * batch.t {
        return Err(Error::Shape("token buffer does not match batch shape".into()));
    }
    if let Some(&bad) = batch.tokens.iter().find(|&&tok| tok as usize >= cfg.vocab_size) {
        return Err(Error::Shape(format!("token {bad} outside vocabulary of size {}", cfg.vocab_size)));
    }
    Ok(())
}

pub fn forward<T: Scalar>(params: &ModelParams<T>, batch: &TokenBatch) -> Result<ForwardPass<T>> {
    check_batch(params, batch)?;
    let cfg = params.config;
    let (n, t, c, v, nh) = (batch.n, batch.t, cfg.embed_dim, cfg.vocab_size, cfg.n_heads);
    let rows = n * t;
    let lay = &params.layout;

    let mut encoded = vec![T::zero(); rows * c];
    let (wte, wpe) = (params.wte(), params.wpe());
    for (r, out) in encoded.chunks_exact_mut(c).enumerate() {
        let tok = batch.tokens[r] as usize;
        let pos = r % t;
        for i in 0..c {
            out[i] = wte[tok * c + i] + wpe[pos * c + i];
        }
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let p = |x: LT| params.tensor(lay.layer(l, x));
        let x: &[T] = if l == 0 { &encoded } else { &layers.last().map(|a: &LayerActs<T>| a.res3.as_slice()).unwrap() };
        let mut a = LayerActs {
            ln1: vec![T::zero(); rows * c],
            ln1_mean: vec![T::zero(); rows],
            ln1_rstd: vec![T::zero(); rows],
            qkv: vec![T::zero(); rows * 3 * c],
            att: vec![T::zero(); n * nh * t * t],
            atty: vec![T::zero(); rows * c],
            res2: vec![T::zero(); rows * c],
            ln2: vec![T::zero(); rows * c],
            ln2_mean: vec![T::zero(); rows],
            ln2_rstd: vec![T::zero(); rows],
            fch: vec![T::zero(); rows * 4 * c],
            fch_gelu: vec![T::zero(); rows * 4 * c],
            res3: vec![T::zero(); rows * c],
        };
        layernorm_forward(&mut a.ln1, &mut a.ln1_mean, &mut a.ln1_rstd, x, p(LT::Ln1W), p(LT::Ln1B), c);
        matmul_forward(&mut a.qkv, &a.ln1, p(LT::QkvW), Some(p(LT::QkvB)), rows, c, 3 * c);
        attention_forward(&mut a.atty, &mut a.att, &a.qkv, n, t, c, nh);
        matmul_forward(&mut a.res2, &a.atty, p(LT::AttProjW), Some(p(LT::AttProjB)), rows, c, c);
        for (r, &xi) in a.res2.iter_mut().zip(x) {
            *r += xi;
        }
        layernorm_forward(&mut a.ln2, &mut a.ln2_mean, &mut a.ln2_rstd, &a.res2, p(LT::Ln2W), p(LT::Ln2B), c);
        matmul_forward(&mut a.fch, &a.ln2, p(LT::FcW), Some(p(LT::FcB)), rows, c, 4 * c);
        gelu_forward(&mut a.fch_gelu, &a.fch);
        matmul_forward(&mut a.res3, &a.fch_gelu, p(LT::FcProjW), Some(p(LT::FcProjB)), rows, 4 * c, c);
        for (r, &xi) in a.res3.iter_mut().zip(&a.res2) {
            *r += xi;
        }
        layers.push(a);
    }

    let last: &[T] = layers.last().map_or(&encoded, |a| &a.res3);
    let mut lnf = vec![T::zero(); rows * c];
    let mut lnf_mean = vec![T::zero(); rows];
    let mut lnf_rstd = vec![T::zero(); rows];
    layernorm_forward(&mut lnf, &mut lnf_mean, &mut lnf_rstd, last, params.tensor(lay.lnf_w()), params.tensor(lay.lnf_b()), c);
    let mut logits = vec![T::zero(); rows * v];
    // Tied output projection: logits = lnf * wte^T.
    matmul_forward(&mut logits, &lnf, wte, None, rows, c, v);

    Ok(ForwardPass { n, t, vocab_size: v, tokens: batch.tokens.clone(), encoded, layers, lnf, lnf_mean, lnf_rstd, logits })
}

fn check_targets(rows: usize, targets: &[u32], mask: &[bool], v: usize) -> Result<usize> {
    if targets.len() != rows || mask.len() != rows {
        return Err(Error::Shape(format!(
            "targets ({}) and mask ({}) must have {rows} entries",
            targets.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::DegenerateBatch);
    }
    if let Some((&bad, _)) = targets.iter().zip(mask).find(|(&tg, &m)| m && tg as usize >= v) {
        return Err(Error::Shape(format!("target {bad} outside vocabulary")));
    }
    Ok(count)
}

/// Mean negative log-likelihood over the masked positions.
pub fn loss_masked<T: Scalar>(logits: &[T], vocab_size: usize, targets: &[u32], mask: &[bool]) -> Result<f64> {
    let rows = logits.len() / vocab_size;
    let count = check_targets(rows, targets, mask, vocab_size)?;
    let mut total = 0.0;
    for (r, row) in logits.chunks_exact(vocab_size).enumerate() {
        if !mask[r] {
            continue;
        }
        let max = row.iter().map(|x| x.f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x.f64() - max).exp()).sum::<f64>().ln();
        total += lse - row[targets[r] as usize].f64();
    }
    Ok(total / count as f64)
}

/// Loss and exact gradient of [`loss_masked`] with respect to every
/// parameter. The token-embedding gradient sums its input-lookup and
/// output-projection contributions.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    pass: &ForwardPass<T>,
    targets: &[u32],
    mask: &[bool],
) -> Result<(f64, Vec<T>)> {
    let cfg = params.config;
    let (n, t, c, v, nh) = (pass.n, pass.t, cfg.embed_dim, cfg.vocab_size, cfg.n_heads);
    let rows = n * t;
    let count = check_targets(rows, targets, mask, v)?;
    let lay = &params.layout;
    let mut grads = vec![T::zero(); params.data.len()];

    // Softmax cross-entropy.
    let mut loss = 0.0;
    let inv = T::of(1.0 / count as f64);
    let mut dlogits = vec![T::zero(); rows * v];
    for (r, (d, row)) in dlogits.chunks_exact_mut(v).zip(pass.logits.chunks_exact(v)).enumerate() {
        if !mask[r] {
            continue;
        }
        d.copy_from_slice(row);
        softmax_in_place(d);
        let tg = targets[r] as usize;
        loss -= d[tg].f64().max(f64::MIN_POSITIVE).ln();
        d[tg] -= T::one();
        d.iter_mut().for_each(|x| *x *= inv);
    }
    loss /= count as f64;

    let wte_range = lay.entries[WTE].range();
    let mut dlnf = vec![T::zero(); rows * c];
    matmul_backward(&mut dlnf, &mut grads[wte_range.clone()], None, &dlogits, &pass.lnf, params.wte(), rows, c, v);
    drop(dlogits);

    let mut dx = vec![T::zero(); rows * c];
    {
        let last: &[T] = pass.layers.last().map_or(&pass.encoded, |a| &a.res3);
        let (gw, gb) = split_two(&mut grads, lay.entries[lay.lnf_w()].range(), lay.entries[lay.lnf_b()].range());
        layernorm_backward(&mut dx, gw, gb, &dlnf, last, params.tensor(lay.lnf_w()), &pass.lnf_mean, &pass.lnf_rstd, c);
    }

    let mut dtmp4 = vec![T::zero(); rows * 4 * c];
    let mut dfch = vec![T::zero(); rows * 4 * c];
    let mut dln = vec![T::zero(); rows * c];
    let mut datty = vec![T::zero(); rows * c];
    let mut dqkv = vec![T::zero(); rows * 3 * c];
    for l in (0..cfg.n_layers).rev() {
        let a = &pass.layers[l];
        let x_in: &[T] = if l == 0 { &pass.encoded } else { &pass.layers[l - 1].res3 };
        let idx = |x: LT| lay.layer(l, x);
        let p = |x: LT| params.tensor(idx(x));

        // MLP branch: res3 = res2 + proj(gelu(fc(ln2(res2)))); dx holds d res3.
        dtmp4.iter_mut().for_each(|x| *x = T::zero());
        {
            let (gw, gb) = split_two(&mut grads, lay.entries[idx(LT::FcProjW)].range(), lay.entries[idx(LT::FcProjB)].range());
            matmul_backward(&mut dtmp4, gw, Some(gb), &dx, &a.fch_gelu, p(LT::FcProjW), rows, 4 * c, c);
        }
        dfch.iter_mut().for_each(|x| *x = T::zero());
        gelu_backward(&mut dfch, &a.fch, &dtmp4);
        dln.iter_mut().for_each(|x| *x = T::zero());
        {
            let (gw, gb) = split_two(&mut grads, lay.entries[idx(LT::FcW)].range(), lay.entries[idx(LT::FcB)].range());
            matmul_backward(&mut dln, gw, Some(gb), &dfch, &a.ln2, p(LT::FcW), rows, c, 4 * c);
        }
        {
            let (gw, gb) = split_two(&mut grads, lay.entries[idx(LT::Ln2W)].range(), lay.entries[idx(LT::Ln2B)].range());
            // dx now becomes d res2 (residual path plus the layer-norm path).
            layernorm_backward(&mut dx, gw, gb, &dln, &a.res2, p(LT::Ln2W), &a.ln2_mean, &a.ln2_rstd, c);
        }

        // Attention branch: res2 = x + proj(attn(qkv(ln1(x)))).
        datty.iter_mut().for_each(|x| *x = T::zero());
        {
            let (gw, gb) = split_two(&mut grads, lay.entries[idx(LT::AttProjW)].range(), lay.entries[idx(LT::AttProjB)].range());
            matmul_backward(&mut datty, gw, Some(gb), &dx, &a.atty, p(LT::AttProjW), rows, c, c);
        }
        dqkv.iter_mut().for_each(|x| *x = T::zero());
        attention_backward(&mut dqkv, &datty, &a.qkv, &a.att, n, t, c, nh);
        dln.iter_mut().for_each(|x| *x = T::zero());
        {
            let (gw, gb) = split_two(&mut grads, lay.entries[idx(LT::QkvW)].range(), lay.entries[idx(LT::QkvB)].range());
            matmul_backward(&mut dln, gw, Some(gb), &dqkv, &a.ln1, p(LT::QkvW), rows, c, 3 * c);
        }
        {
            let (gw, gb) = split_two(&mut grads, lay.entries[idx(LT::Ln1W)].range(), lay.entries[idx(LT::Ln1B)].range());
            layernorm_backward(&mut dx, gw, gb, &dln, x_in, p(LT::Ln1W), &a.ln1_mean, &a.ln1_rstd, c);
        }
    }

    // Embedding lookups.
    let wpe_off = lay.entries[WPE].offset;
    for (r, d) in dx.chunks_exact(c).enumerate() {
        let tok = pass.tokens[r] as usize;
        let pos = r % t;
        for i in 0..c {
            grads[wte_range.start + tok * c + i] += d[i];
            grads[wpe_off + pos * c + i] += d[i];
        }
    }
    Ok((loss, grads))
}

/// Two disjoint mutable sub-slices; `a` must precede `b`.
fn split_two<T>(buf: &mut [T], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [T], &mut [T]) {
    assert!(a.end <= b.start);
    let (left, right) = buf.split_at_mut(b.start);
    (&mut left[a], &mut right[..b.end - b.start])
}
