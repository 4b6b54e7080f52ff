//! Training configuration: the eight ablation variants, hyperparameters,
//! and the flat `key=value` config-file format.

use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unknown variant `{0}`; expected one of {names}", names = Variant::ALL.map(|v| v.name()).join(", "))]
    UnknownVariant(String),
    #[error("bad value `{value}` for key `{key}`")]
    BadValue { key: String, value: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("malformed config line `{0}` (expected key=value)")]
    MalformedLine(String),
}

/// The ablation variants. The letters name which pieces are active on top
/// of the encoder-decoder base: L = local cross-entropy, P = pairwise
/// discriminator loss, G = adversarial alternation between the two losses,
/// S = discriminator shares the encoder weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Edl,
    Edp,
    Edg,
    Edpg,
    Edlp,
    Edlps,
    Edlpg,
    Edlpgs,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Edl,
        Variant::Edp,
        Variant::Edg,
        Variant::Edpg,
        Variant::Edlp,
        Variant::Edlps,
        Variant::Edlpg,
        Variant::Edlpgs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Edl => "EDL",
            Variant::Edp => "EDP",
            Variant::Edg => "EDG",
            Variant::Edpg => "EDPG",
            Variant::Edlp => "EDLP",
            Variant::Edlps => "EDLPS",
            Variant::Edlpg => "EDLPG",
            Variant::Edlpgs => "EDLPGS",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let up = s.trim().to_uppercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == up)
            .ok_or_else(|| ConfigError::UnknownVariant(s.to_string()))
    }

    pub fn id(self) -> u8 {
        Variant::ALL.iter().position(|v| *v == self).unwrap() as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Variant::ALL.get(id as usize).copied()
    }

    /// Local per-token cross-entropy is part of the objective.
    pub fn uses_local(self) -> bool {
        self.name().contains('L')
    }

    /// The pairwise margin loss is part of the joint objective.
    pub fn uses_pairwise(self) -> bool {
        self.name().contains('P')
    }

    /// Training alternates decoder-side and encoder-side updates instead of
    /// minimizing one joint sum.
    pub fn adversarial_alternation(self) -> bool {
        self.name().contains('G')
    }

    /// The discriminator pass reuses the encoder weights.
    pub fn shared_discriminator(self) -> bool {
        self.name().contains('S')
    }

    /// Whether any discriminator pass runs at all. Adversarial variants
    /// need the pairwise loss as their alternating objective even when `P`
    /// is absent from the name.
    pub fn uses_discriminator(self) -> bool {
        self.uses_pairwise() || self.adversarial_alternation()
    }

    /// Whether the model carries separate discriminator LSTM weights.
    pub fn separate_discriminator(self) -> bool {
        self.uses_discriminator() && !self.shared_discriminator()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which previous token the decoder consumes during training: the ground
/// truth (teacher forcing) or its own argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderFeed {
    Teacher,
    Greedy,
}

impl DecoderFeed {
    pub fn name(self) -> &'static str {
        match self {
            DecoderFeed::Teacher => "teacher",
            DecoderFeed::Greedy => "greedy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "teacher" => Some(DecoderFeed::Teacher),
            "greedy" => Some(DecoderFeed::Greedy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub decay_a: u64,
    pub decay_b: u64,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    pub decoder_feed: DecoderFeed,
    pub max_len: usize,
    pub vocab_size: usize,
    pub d: usize,
    pub kernel_widths: Vec<usize>,
    pub min_freq: usize,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0008,
            batch_size: 150,
            alpha: 0.99,
            epsilon: 1e-8,
            decay_a: 1500,
            decay_b: 1250,
            epochs: 10,
            seed: 0,
            variant: Variant::Edlps,
            decoder_feed: DecoderFeed::Teacher,
            max_len: 26,
            vocab_size: 8000,
            d: 60,
            kernel_widths: vec![1],
            min_freq: 1,
            init_scale: 0.3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String| ConfigError::BadValue {
            key: key.to_string(),
            value,
        };
        if !(self.learning_rate > 0.0) {
            return Err(bad("learning_rate", self.learning_rate.to_string()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(bad("alpha", self.alpha.to_string()));
        }
        if !(self.epsilon > 0.0) {
            return Err(bad("epsilon", self.epsilon.to_string()));
        }
        if self.decay_a == 0 || self.decay_b == 0 {
            return Err(bad("decay_a/decay_b", "0".into()));
        }
        if self.variant.uses_discriminator() && self.batch_size < 2 {
            return Err(bad("batch_size", self.batch_size.to_string()));
        }
        if self.max_len < 2 {
            return Err(bad("max_len", self.max_len.to_string()));
        }
        if self.d == 0 {
            return Err(bad("d", "0".into()));
        }
        if self.kernel_widths.is_empty() || self.kernel_widths.contains(&0) {
            return Err(bad("kernel_widths", format!("{:?}", self.kernel_widths)));
        }
        if !(self.init_scale > 0.0) {
            return Err(bad("init_scale", self.init_scale.to_string()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "learning_rate" => self.learning_rate = value.parse().map_err(|_| bad())?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad())?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad())?,
            "epsilon" => self.epsilon = value.parse().map_err(|_| bad())?,
            "decay_a" => self.decay_a = value.parse().map_err(|_| bad())?,
            "decay_b" => self.decay_b = value.parse().map_err(|_| bad())?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "variant" => self.variant = Variant::parse(value)?,
            "decoder_feed" => self.decoder_feed = DecoderFeed::parse(value).ok_or_else(bad)?,
            "max_len" => self.max_len = value.parse().map_err(|_| bad())?,
            "vocab_size" => self.vocab_size = value.parse().map_err(|_| bad())?,
            "d" => self.d = value.parse().map_err(|_| bad())?,
            "kernel_widths" => {
                let widths: Result<Vec<usize>, _> =
                    value.split(',').map(|w| w.trim().parse()).collect();
                self.kernel_widths = widths.map_err(|_| bad())?;
            }
            "min_freq" => self.min_freq = value.parse().map_err(|_| bad())?,
            "init_scale" => self.init_scale = value.parse().map_err(|_| bad())?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` lines. Blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::MalformedLine(line.to_string()))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Canonical `key=value` rendering; parsing it back reproduces the
    /// config exactly (floats print in shortest round-trip form).
    pub fn to_kv_string(&self) -> String {
        let widths = self
            .kernel_widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "learning_rate={}\nbatch_size={}\nalpha={}\nepsilon={}\ndecay_a={}\ndecay_b={}\nepochs={}\nseed={}\nvariant={}\ndecoder_feed={}\nmax_len={}\nvocab_size={}\nd={}\nkernel_widths={}\nmin_freq={}\ninit_scale={}\n",
            self.learning_rate,
            self.batch_size,
            self.alpha,
            self.epsilon,
            self.decay_a,
            self.decay_b,
            self.epochs,
            self.seed,
            self.variant,
            self.decoder_feed.name(),
            self.max_len,
            self.vocab_size,
            self.d,
            widths,
            self.min_freq,
            self.init_scale,
        )
    }
}
