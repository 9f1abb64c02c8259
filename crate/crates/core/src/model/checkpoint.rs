//! Binary checkpoint: magic, format version, a length-prefixed JSON header
//! (model config, vocabulary manifest and hash, tensor table, free-form
//! metadata) and the parameters as little-endian f32.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams, ParamLayout, TensorEntry};
use crate::codec::{VocabManifest, Vocabulary};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PLAYSEQ\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: VocabManifest,
    vocab_hash: String,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// A trained model together with the vocabulary it was trained on.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub vocab: Vocabulary,
    /// Training metadata (loss curve, configuration); not interpreted here.
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>, vocab: Vocabulary) -> Result<Self> {
        if params.config.vocab_size != vocab.size() {
            return Err(Error::Checkpoint(format!(
                "model vocabulary size {} does not match vocabulary of {} tokens",
                params.config.vocab_size,
                vocab.size()
            )));
        }
        Ok(Self { params, vocab, meta: serde_json::Value::Null })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = Header {
            config: self.params.config,
            vocab: self.vocab.manifest(),
            vocab_hash: self.vocab.hash(),
            tensors: self.params.layout.entries.clone(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.params.data.len() * 4);
        for x in &self.params.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Checkpoint("file too short".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b)?;
        let version = u32::from_le_bytes(u32b);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b)?;
        let hlen = u64::from_le_bytes(u64b) as usize;
        if hlen > 1 << 30 {
            return Err(Error::Checkpoint("header length is implausible".into()));
        }
        let mut json = vec![0u8; hlen];
        r.read_exact(&mut json).map_err(|_| Error::Checkpoint("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&json)?;

        let vocab = Vocabulary::from_manifest(&header.vocab)?;
        if vocab.hash() != header.vocab_hash {
            return Err(Error::VocabMismatch { expected: header.vocab_hash, found: vocab.hash() });
        }
        let mut params = ModelParams::<f32>::zeros(header.config)?;
        let layout = ParamLayout::new(&header.config);
        let same_table = layout.entries.len() == header.tensors.len()
            && layout.entries.iter().zip(&header.tensors).all(|(a, b)| a.name == b.name && a.shape == b.shape && a.offset == b.offset);
        if !same_table {
            return Err(Error::Checkpoint("tensor table does not match the model configuration".into()));
        }
        let mut raw = vec![0u8; layout.total * 4];
        r.read_exact(&mut raw).map_err(|_| Error::Checkpoint("truncated parameter data".into()))?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after parameter data".into()));
        }
        for (x, b) in params.data.iter_mut().zip(raw.chunks_exact(4)) {
            *x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
        let mut ck = Self::new(params, vocab)?;
        ck.meta = header.meta;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}
