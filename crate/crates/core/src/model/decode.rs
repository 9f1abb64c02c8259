//! Incremental decoding with a key/value cache. Feeding tokens one at a
//! time yields the same logits as a full forward pass over the prefix.

use super::ops::*;
use super::params::{LayerTensor as LT, ModelParams};
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KvCache<T> {
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct Decoder<'a, T: Scalar> {
    params: &'a ModelParams<T>,
    cache: KvCache<T>,
    x: Vec<T>,
    ln: Vec<T>,
    qkv: Vec<T>,
    atty: Vec<T>,
    tmp: Vec<T>,
    fch: Vec<T>,
    fch_gelu: Vec<T>,
    scores: Vec<T>,
    logits: Vec<T>,
}

impl<'a, T: Scalar> Decoder<'a, T> {
    pub fn new(params: &'a ModelParams<T>) -> Self {
        let cfg = params.config;
        let c = cfg.embed_dim;
        let per_layer = || vec![vec![T::zero(); cfg.block_size * c]; cfg.n_layers];
        Self {
            params,
            cache: KvCache { keys: per_layer(), values: per_layer(), len: 0 },
            x: vec![T::zero(); c],
            ln: vec![T::zero(); c],
            qkv: vec![T::zero(); 3 * c],
            atty: vec![T::zero(); c],
            tmp: vec![T::zero(); c],
            fch: vec![T::zero(); 4 * c],
            fch_gelu: vec![T::zero(); 4 * c],
            scores: vec![T::zero(); cfg.block_size],
            logits: vec![T::zero(); cfg.vocab_size],
        }
    }

    pub fn len(&self) -> usize {
        self.cache.len
    }

    pub fn is_empty(&self) -> bool {
        self.cache.len == 0
    }

    /// Forgets every position at or after `len`.
    pub fn truncate(&mut self, len: usize) {
        self.cache.len = self.cache.len.min(len);
    }

    /// Logits produced by the most recent [`Decoder::push`].
    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    /// Feeds every token of `tokens` and returns the logits after the last.
    pub fn push_all(&mut self, tokens: &[u32]) -> Result<&[T]> {
        for &tok in tokens {
            self.step(tok)?;
        }
        Ok(&self.logits)
    }

    /// Appends one token and returns the next-token logits.
    pub fn push(&mut self, token: u32) -> Result<&[T]> {
        self.step(token)?;
        Ok(&self.logits)
    }

    fn step(&mut self, token: u32) -> Result<()> {
        let p = self.params;
        let cfg = p.config;
        let (c, nh) = (cfg.embed_dim, cfg.n_heads);
        let hs = c / nh;
        let pos = self.cache.len;
        if pos >= cfg.block_size {
            return Err(Error::ContextOverflow { needed: pos + 1, block_size: cfg.block_size });
        }
        if token as usize >= cfg.vocab_size {
            return Err(Error::Shape(format!("token {token} outside vocabulary of size {}", cfg.vocab_size)));
        }
        let lay = &p.layout;
        let (wte, wpe) = (p.wte(), p.wpe());
        for i in 0..c {
            self.x[i] = wte[token as usize * c + i] + wpe[pos * c + i];
        }
        let scale = T::of(1.0 / (hs as f64).sqrt());
        let (mut m, mut s) = ([T::zero()], [T::zero()]);
        for l in 0..cfg.n_layers {
            let w = |x: LT| p.tensor(lay.layer(l, x));
            layernorm_forward(&mut self.ln, &mut m, &mut s, &self.x, w(LT::Ln1W), w(LT::Ln1B), c);
            matmul_forward(&mut self.qkv, &self.ln, w(LT::QkvW), Some(w(LT::QkvB)), 1, c, 3 * c);
            let (keys, values) = (&mut self.cache.keys[l], &mut self.cache.values[l]);
            keys[pos * c..(pos + 1) * c].copy_from_slice(&self.qkv[c..2 * c]);
            values[pos * c..(pos + 1) * c].copy_from_slice(&self.qkv[2 * c..]);
            for h in 0..nh {
                let q = &self.qkv[h * hs..(h + 1) * hs];
                let sc = &mut self.scores[..=pos];
                for (t2, out) in sc.iter_mut().enumerate() {
                    let k = &keys[t2 * c + h * hs..][..hs];
                    *out = q.iter().zip(k).map(|(&a, &b)| a * b).sum::<T>() * scale;
                }
                softmax_in_place(sc);
                let y = &mut self.atty[h * hs..(h + 1) * hs];
                y.iter_mut().for_each(|v| *v = T::zero());
                for (t2, &a) in sc.iter().enumerate() {
                    let v = &values[t2 * c + h * hs..][..hs];
                    for (yi, &vi) in y.iter_mut().zip(v) {
                        *yi += a * vi;
                    }
                }
            }
            matmul_forward(&mut self.tmp, &self.atty, w(LT::AttProjW), Some(w(LT::AttProjB)), 1, c, c);
            for (x, &d) in self.x.iter_mut().zip(&self.tmp) {
                *x += d;
            }
            layernorm_forward(&mut self.ln, &mut m, &mut s, &self.x, w(LT::Ln2W), w(LT::Ln2B), c);
            matmul_forward(&mut self.fch, &self.ln, w(LT::FcW), Some(w(LT::FcB)), 1, c, 4 * c);
            gelu_forward(&mut self.fch_gelu, &self.fch);
            matmul_forward(&mut self.tmp, &self.fch_gelu, w(LT::FcProjW), Some(w(LT::FcProjB)), 1, 4 * c, c);
            for (x, &d) in self.x.iter_mut().zip(&self.tmp) {
                *x += d;
            }
        }
        layernorm_forward(&mut self.ln, &mut m, &mut s, &self.x, p.tensor(lay.lnf_w()), p.tensor(lay.lnf_b()), c);
        matmul_forward(&mut self.logits, &self.ln, wte, None, 1, c, cfg.vocab_size);
        self.cache.len += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gpt::{forward, TokenBatch};
    use crate::model::params::ModelConfig;

    #[test]
    fn incremental_matches_full_forward() {
        let cfg = ModelConfig { vocab_size: 40, block_size: 12, n_layers: 2, n_heads: 2, embed_dim: 16, dropout_rate: 0.0, init_scale: 0.02 };
        let mut p = ModelParams::<f64>::zeros(cfg).unwrap();
        p.randomize_all(0.3, 5);
        let tokens: Vec<u32> = vec![1, 7, 39, 0, 12, 12, 5, 33, 2, 8];
        let full = forward(&p, &TokenBatch::single(&tokens).unwrap()).unwrap();
        let mut dec = Decoder::new(&p);
        for (i, &tok) in tokens.iter().enumerate() {
            let got = dec.push(tok).unwrap();
            for (a, b) in got.iter().zip(full.logits_at(0, i)) {
                assert!((a - b).abs() < 1e-10, "position {i}: {a} vs {b}");
            }
        }
        // Rewinding and replaying a different suffix matches too.
        dec.truncate(4);
        let mut alt = tokens[..4].to_vec();
        alt.extend([9, 9, 3]);
        let full_alt = forward(&p, &TokenBatch::single(&alt).unwrap()).unwrap();
        let got = dec.push_all(&[9, 9, 3]).unwrap().to_vec();
        for (a, b) in got.iter().zip(full_alt.logits_at(0, 6)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let cfg = ModelConfig { vocab_size: 10, block_size: 2, n_layers: 1, n_heads: 1, embed_dim: 4, dropout_rate: 0.0, init_scale: 0.02 };
        let p = ModelParams::<f32>::init(cfg, 0).unwrap();
        let mut dec = Decoder::new(&p);
        dec.push_all(&[1, 2]).unwrap();
        assert!(matches!(dec.push(3), Err(Error::ContextOverflow { needed: 3, block_size: 2 })));
    }
}
