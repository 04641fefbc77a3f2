//! Checkpoint format: magic + JSON header (config, head selection,
//! vocabulary hash, tensor index) + raw row-major little-endian f64 payload.
//! Reload is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{HeadSelection, ModelConfig};
use super::GptModel;
use crate::error::{Error, Result};
use crate::tokenizer::Vocabulary;

const MAGIC: &[u8; 8] = b"TPLANT01";

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    selection: HeadSelection,
    vocab_sha256: String,
    tensors: Vec<TensorMeta>,
}

/// A trained model bundled with its head selection and the hash of the
/// vocabulary it was trained with.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: GptModel,
    pub selection: HeadSelection,
    pub vocab_sha256: String,
}

/// Canonical fingerprint of a vocabulary: SHA-256 of its JSON serialization.
pub fn vocab_sha256(vocab: &Vocabulary) -> Result<String> {
    let json = vocab.to_json()?;
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn new(model: GptModel, selection: HeadSelection, vocab: &Vocabulary) -> Result<Self> {
        selection.validate(&model.config)?;
        Ok(Self {
            model,
            selection,
            vocab_sha256: vocab_sha256(vocab)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let named = self.model.params.named_tensors();
        let header = Header {
            config: self.model.config.clone(),
            selection: self.selection.clone(),
            vocab_sha256: self.vocab_sha256.clone(),
            tensors: named
                .iter()
                .map(|(name, t, _)| TensorMeta {
                    name: name.clone(),
                    rows: t.nrows(),
                    cols: t.ncols(),
                })
                .collect(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(MAGIC)?;
        file.write_all(&(header_json.len() as u64).to_le_bytes())?;
        file.write_all(&header_json)?;
        for (_, tensor, _) in named {
            for v in tensor.iter() {
                file.write_all(&v.to_le_bytes())?;
            }
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        file.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic in {}",
                path.display()
            )));
        }
        let mut len_bytes = [0u8; 8];
        file.read_exact(&mut len_bytes)?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_json = vec![0u8; header_len];
        file.read_exact(&mut header_json)?;
        let header: Header = serde_json::from_slice(&header_json)?;
        header.config.validate()?;
        header.selection.validate(&header.config)?;

        // Allocate storage with the right shapes, then overwrite from the
        // payload.
        let mut model = GptModel::new(header.config, 0)?;
        {
            let expected: Vec<(String, usize, usize)> = model
                .params
                .named_tensors()
                .iter()
                .map(|(n, t, _)| (n.clone(), t.nrows(), t.ncols()))
                .collect();
            if expected.len() != header.tensors.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor count {} does not match config ({})",
                    header.tensors.len(),
                    expected.len()
                )));
            }
            let mut slots = model.params.tensors_mut();
            for (i, meta) in header.tensors.iter().enumerate() {
                let (name, rows, cols) = &expected[i];
                if &meta.name != name || meta.rows != *rows || meta.cols != *cols {
                    return Err(Error::Checkpoint(format!(
                        "tensor {i} is {} ({}x{}), expected {} ({}x{})",
                        meta.name, meta.rows, meta.cols, name, rows, cols
                    )));
                }
                let mut data = vec![0u8; rows * cols * 8];
                file.read_exact(&mut data)?;
                let values: Vec<f64> = data
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect();
                *slots[i].0 = Array2::from_shape_vec((*rows, *cols), values)
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
            }
        }
        let mut trailing = [0u8; 1];
        if file.read(&mut trailing)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after payload".into()));
        }
        Ok(Self {
            model,
            selection: header.selection,
            vocab_sha256: header.vocab_sha256,
        })
    }

    /// Fails unless the given vocabulary hashes to the recorded fingerprint.
    pub fn verify_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let actual = vocab_sha256(vocab)?;
        if actual != self.vocab_sha256 {
            return Err(Error::Checkpoint(format!(
                "vocabulary hash {actual} does not match checkpoint ({})",
                self.vocab_sha256
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::train_vocab;
    use crate::treebank::Sentence;

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let config = ModelConfig {
            layers: 2,
            heads: 2,
            d_model: 8,
            d_ff: 12,
            max_seq: 10,
            dropout: 0.1,
            vocab_size: 260,
        };
        let model = GptModel::new(config.clone(), 9).unwrap();
        let vocab = train_vocab(
            &[Sentence::new(vec!["ab".into(), "abab".into()]).unwrap()],
            260,
        )
        .unwrap();
        let sel = HeadSelection::single_last_layer(&config);
        let ckpt = Checkpoint::new(model, sel.clone(), &vocab).unwrap();
        ckpt.save(&path).unwrap();

        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.model.config, config);
        assert_eq!(loaded.selection, sel);
        assert_eq!(loaded.vocab_sha256, ckpt.vocab_sha256);
        let a = ckpt.model.params.named_tensors();
        let b = loaded.model.params.named_tensors();
        for ((n1, t1, _), (n2, t2, _)) in a.iter().zip(b.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1, t2, "tensor {n1} changed across reload");
        }
        loaded.verify_vocab(&vocab).unwrap();

        let other = train_vocab(
            &[Sentence::new(vec!["zz".into(), "zzz".into()]).unwrap()],
            259,
        )
        .unwrap();
        assert!(loaded.verify_vocab(&other).is_err());
    }

    #[test]
    fn rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
