use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Sinkhorn,
    SoftSort,
}

impl DecoderKind {
    pub fn token(self) -> &'static str {
        match self {
            DecoderKind::Sinkhorn => "sinkhorn",
            DecoderKind::SoftSort => "softsort",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            DecoderKind::Sinkhorn => 0,
            DecoderKind::SoftSort => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(DecoderKind::Sinkhorn),
            1 => Some(DecoderKind::SoftSort),
            _ => None,
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinkhorn" => Ok(DecoderKind::Sinkhorn),
            "softsort" => Ok(DecoderKind::SoftSort),
            other => Err(Error::Config(format!(
                "unknown decoder `{other}` (expected sinkhorn or softsort)"
            ))),
        }
    }
}

pub const LATENT_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n: usize,
    pub decoder: DecoderKind,
    pub tau: f64,
    pub sinkhorn_iters: usize,
    pub lambda: f64,
    pub sw_projections: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(n: usize, decoder: DecoderKind) -> Self {
        Self {
            n,
            decoder,
            tau: 1.0,
            sinkhorn_iters: 20,
            lambda: 1.0,
            sw_projections: 50,
            batch_size: 64,
            epochs: 500,
            learning_rate: 0.001,
            seed: 0,
        }
    }

    pub fn latent_dim(&self) -> usize {
        LATENT_DIM
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n", self.n),
            ("sinkhorn_iters", self.sinkhorn_iters),
            ("sw_projections", self.sw_projections),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Layer widths of the encoder and decoder MLPs, input to output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
}

impl Architecture {
    /// `n² → ⌊n/2⌋² → ⌊n/4⌋² → ⌊n/8⌋² → 2` and its mirror (Sinkhorn), or
    /// `2 → 8n → 8n → 8n → n` (SoftSort). Requires `n ≥ 8`.
    pub fn for_config(config: &ModelConfig) -> Result<Self> {
        if config.n < 8 {
            return Err(Error::Config(format!(
                "the MLP encoder needs n >= 8 so that ⌊n/8⌋² >= 1 (n = {})",
                config.n
            )));
        }
        Ok(Self::build(config.n, config.decoder, 0))
    }

    /// Same shape rules with every width floored at 1, so graphs with fewer
    /// than 8 nodes still get a (degenerate) network.
    pub fn floored(config: &ModelConfig) -> Self {
        Self::build(config.n, config.decoder, 1)
    }

    fn build(n: usize, decoder: DecoderKind, floor: usize) -> Self {
        let w = |shift: u32| ((n >> shift) * (n >> shift)).max(floor);
        let encoder = vec![n * n, w(1), w(2), w(3), LATENT_DIM];
        let decoder = match decoder {
            DecoderKind::Sinkhorn => vec![LATENT_DIM, w(3), w(2), w(1), n * n],
            DecoderKind::SoftSort => vec![LATENT_DIM, 8 * n, 8 * n, 8 * n, n],
        };
        Self { encoder, decoder }
    }
}
