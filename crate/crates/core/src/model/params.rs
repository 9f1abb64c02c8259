use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub block_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub embed_dim: usize,
    /// Must be zero; dropout is not implemented.
    pub dropout_rate: f64,
    /// Standard deviation of the normal initialization of weight matrices
    /// and embeddings.
    pub init_scale: f64,
}

impl ModelConfig {
    /// Desk-scale defaults: 4 layers, 4 heads, 128-dimensional embeddings.
    pub fn desk(vocab_size: usize, block_size: usize) -> Self {
        Self { vocab_size, block_size, n_layers: 4, n_heads: 4, embed_dim: 128, dropout_rate: 0.0, init_scale: 0.02 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.block_size == 0 || self.n_layers == 0 || self.n_heads == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if self.embed_dim % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        if self.dropout_rate != 0.0 {
            return Err(Error::InvalidArgument("dropout is not supported; use dropout_rate = 0".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidArgument("init_scale must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Per-layer tensors, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerTensor {
    Ln1W,
    Ln1B,
    QkvW,
    QkvB,
    AttProjW,
    AttProjB,
    Ln2W,
    Ln2B,
    FcW,
    FcB,
    FcProjW,
    FcProjB,
}

impl LayerTensor {
    pub const ALL: [LayerTensor; 12] = [
        LayerTensor::Ln1W,
        LayerTensor::Ln1B,
        LayerTensor::QkvW,
        LayerTensor::QkvB,
        LayerTensor::AttProjW,
        LayerTensor::AttProjB,
        LayerTensor::Ln2W,
        LayerTensor::Ln2B,
        LayerTensor::FcW,
        LayerTensor::FcB,
        LayerTensor::FcProjW,
        LayerTensor::FcProjB,
    ];

    fn name(self) -> &'static str {
        match self {
            LayerTensor::Ln1W => "ln1.weight",
            LayerTensor::Ln1B => "ln1.bias",
            LayerTensor::QkvW => "attn.qkv.weight",
            LayerTensor::QkvB => "attn.qkv.bias",
            LayerTensor::AttProjW => "attn.proj.weight",
            LayerTensor::AttProjB => "attn.proj.bias",
            LayerTensor::Ln2W => "ln2.weight",
            LayerTensor::Ln2B => "ln2.bias",
            LayerTensor::FcW => "mlp.fc.weight",
            LayerTensor::FcB => "mlp.fc.bias",
            LayerTensor::FcProjW => "mlp.proj.weight",
            LayerTensor::FcProjB => "mlp.proj.bias",
        }
    }

    fn shape(self, c: usize) -> Vec<usize> {
        match self {
            LayerTensor::Ln1W | LayerTensor::Ln1B | LayerTensor::Ln2W | LayerTensor::Ln2B => vec![c],
            LayerTensor::AttProjB | LayerTensor::FcProjB => vec![c],
            LayerTensor::QkvW => vec![3 * c, c],
            LayerTensor::QkvB => vec![3 * c],
            LayerTensor::AttProjW => vec![c, c],
            LayerTensor::FcW => vec![4 * c, c],
            LayerTensor::FcB => vec![4 * c],
            LayerTensor::FcProjW => vec![c, 4 * c],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Normal,
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    #[serde(skip)]
    pub decay: bool,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Tensor table over one flat parameter buffer: `wte`, `wpe`, twelve
/// tensors per layer, then the final layer norm. The token embedding is
/// also the output projection; there is no separate unembedding tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub entries: Vec<TensorEntry>,
    pub total: usize,
    n_layers: usize,
}

pub const WTE: usize = 0;
pub const WPE: usize = 1;

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let c = cfg.embed_dim;
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>, decay: bool| {
            let e = TensorEntry { name, shape, offset, decay };
            offset += e.len();
            entries.push(e);
        };
        push("wte".into(), vec![cfg.vocab_size, c], true);
        push("wpe".into(), vec![cfg.block_size, c], true);
        for l in 0..cfg.n_layers {
            for t in LayerTensor::ALL {
                let shape = t.shape(c);
                let decay = shape.len() == 2;
                push(format!("h.{l}.{}", t.name()), shape, decay);
            }
        }
        push("ln_f.weight".into(), vec![c], false);
        push("ln_f.bias".into(), vec![c], false);
        Self { entries, total: offset, n_layers: cfg.n_layers }
    }

    pub fn layer(&self, l: usize, t: LayerTensor) -> usize {
        debug_assert!(l < self.n_layers);
        2 + l * LayerTensor::ALL.len() + LayerTensor::ALL.iter().position(|&x| x == t).unwrap()
    }

    pub fn lnf_w(&self) -> usize {
        self.entries.len() - 2
    }

    pub fn lnf_b(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn init_kind(&self, idx: usize) -> Init {
        let name = &self.entries[idx].name;
        if name.ends_with("ln1.weight") || name.ends_with("ln2.weight") || name == "ln_f.weight" {
            Init::One
        } else if name.ends_with(".bias") || name.ends_with("attn.proj.weight") || name.ends_with("mlp.proj.weight") {
            // Residual-branch output projections start at zero.
            Init::Zero
        } else {
            Init::Normal
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelParams<T: Scalar> {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub data: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let data = vec![T::zero(); layout.total];
        Ok(Self { config, layout, data })
    }

    /// Normal(0, init_scale) weights and embeddings, zero biases and
    /// residual output projections, unit layer-norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for idx in 0..p.layout.entries.len() {
            let range = p.layout.entries[idx].range();
            match p.layout.init_kind(idx) {
                Init::One => p.data[range].iter_mut().for_each(|x| *x = T::one()),
                Init::Zero => {}
                Init::Normal => {
                    for x in &mut p.data[range] {
                        *x = T::of(config.init_scale * standard_normal(&mut rng));
                    }
                }
            }
        }
        Ok(p)
    }

    /// Fills every tensor, including biases and output projections, with
    /// normal noise of the given scale. Used to exercise all gradient paths.
    pub fn randomize_all(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for idx in 0..self.layout.entries.len() {
            let range = self.layout.entries[idx].range();
            let base = if self.layout.init_kind(idx) == Init::One { 1.0 } else { 0.0 };
            for x in &mut self.data[range] {
                *x = T::of(base + scale * standard_normal(&mut rng));
            }
        }
    }

    pub fn tensor(&self, idx: usize) -> &[T] {
        &self.data[self.layout.entries[idx].range()]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut [T] {
        let r = self.layout.entries[idx].range();
        &mut self.data[r]
    }

    pub fn wte(&self) -> &[T] {
        self.tensor(WTE)
    }

    pub fn wpe(&self) -> &[T] {
        self.tensor(WPE)
    }

    pub fn num_parameters(&self) -> usize {
        self.data.len()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            layout: self.layout.clone(),
            data: self.data.iter().map(|&x| U::of(x.f64())).collect(),
        }
    }

    /// Row of the shared embedding matrix.
    pub fn embedding_row(&self, token: usize) -> &[T] {
        let c = self.config.embed_dim;
        &self.wte()[token * c..(token + 1) * c]
    }
}

/// Box-Muller transform; keeps initialization independent of any
/// distribution crate's sampling algorithm.
pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
