//! Model geometry and tree-planted head placement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq: usize,
    pub dropout: f64,
    pub vocab_size: usize,
}

impl ModelConfig {
    /// Small geometry for laptop-scale runs.
    pub fn desk_default(vocab_size: usize) -> Self {
        Self {
            layers: 4,
            heads: 4,
            d_model: 128,
            d_ff: 512,
            max_seq: 128,
            dropout: 0.1,
            vocab_size,
        }
    }

    /// GPT-2-small geometry, kept as a preset for full-scale runs.
    pub fn gpt2_small(vocab_size: usize) -> Self {
        Self {
            layers: 12,
            heads: 12,
            d_model: 768,
            d_ff: 3072,
            max_seq: 1024,
            dropout: 0.1,
            vocab_size,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.max_seq == 0 || self.vocab_size == 0 {
            return Err(Error::Config("max_seq and vocab_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// The set of (layer, head) pairs whose attention receives tree supervision.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HeadSelection {
    pub pairs: Vec<(usize, usize)>,
}

impl HeadSelection {
    pub fn empty() -> Self {
        Self { pairs: Vec::new() }
    }

    /// A single head (index 0) on the last layer.
    pub fn single_last_layer(config: &ModelConfig) -> Self {
        Self { pairs: vec![(config.layers - 1, 0)] }
    }

    /// The first `count` heads of the last layer.
    pub fn last_layer_heads(config: &ModelConfig, count: usize) -> Self {
        Self {
            pairs: (0..count).map(|h| (config.layers - 1, h)).collect(),
        }
    }

    /// Head 0 of each of the bottom `count` layers.
    pub fn bottom_layers(count: usize) -> Self {
        Self { pairs: (0..count).map(|l| (l, 0)).collect() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, layer: usize, head: usize) -> bool {
        self.pairs.contains(&(layer, head))
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for &(layer, head) in &self.pairs {
            if layer >= config.layers || head >= config.heads {
                return Err(Error::Config(format!(
                    "head selection ({layer}, {head}) outside a {}x{} model",
                    config.layers, config.heads
                )));
            }
            if !seen.insert((layer, head)) {
                return Err(Error::Config(format!(
                    "duplicate head selection ({layer}, {head})"
                )));
            }
        }
        Ok(())
    }
}
