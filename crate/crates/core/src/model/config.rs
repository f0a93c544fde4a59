use crate::error::{Error, Result};

/// Width and depth of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub num_blocks: usize,
    pub base_channels: usize,
    pub attn_heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_blocks: 5,
            base_channels: 32,
            attn_heads: 4,
        }
    }
}

pub const MAX_BLOCKS: usize = 8;
/// The mask predictor narrows to a quarter of the base width.
pub const MIN_BASE_CHANNELS: usize = 4;

impl ModelConfig {
    pub fn new(num_blocks: usize, base_channels: usize, attn_heads: usize) -> Result<Self> {
        let cfg = Self {
            num_blocks,
            base_channels,
            attn_heads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_BLOCKS).contains(&self.num_blocks) {
            return Err(Error::Config(format!(
                "num_blocks must be in [1, {MAX_BLOCKS}], got {}",
                self.num_blocks
            )));
        }
        if self.base_channels < MIN_BASE_CHANNELS {
            return Err(Error::Config(format!(
                "base_channels must be at least {MIN_BASE_CHANNELS}, got {}",
                self.base_channels
            )));
        }
        if self.attn_heads == 0 || !self.base_channels.is_multiple_of(self.attn_heads) {
            return Err(Error::Config(format!(
                "base_channels ({}) must be divisible by attn_heads ({})",
                self.base_channels, self.attn_heads
            )));
        }
        Ok(())
    }

    /// Channels per attention head.
    pub fn head_dim(&self) -> usize {
        self.base_channels / self.attn_heads
    }

    /// Softmax temperature `sqrt(head_dim)`.
    pub fn temperature(&self) -> f64 {
        (self.head_dim() as f64).sqrt()
    }
}
