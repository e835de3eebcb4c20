//! JSON run configuration shared by all CLI subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{synth_generate, synth_vocab, Dataset, EncodedDataset, Vocab, SYNTH_MAX_CLASSES};
use crate::diagnostics::{ProbeCircuit, MIN_PROBE_SAMPLES};
use crate::encoder::{FfnKind, ModelConfig};
use crate::error::{Error, Result};
use crate::io::read_string;
use crate::pqc::{Variant, REFERENCE_DEPTHS};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: 128,
            num_layers: 2,
            num_heads: 2,
            intermediate: 512,
            max_seq_len: 128,
            dropout: 0.0,
            layer_norm_eps: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Synth {
        train_examples: usize,
        val_examples: usize,
        num_classes: usize,
    },
    /// Paths are resolved against the config file's directory.
    Tsv {
        train: PathBuf,
        val: PathBuf,
        #[serde(default)]
        vocab: Option<PathBuf>,
        num_classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub depths: Vec<usize>,
    pub fractions: Vec<f64>,
    pub include_baseline: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            depths: REFERENCE_DEPTHS.to_vec(),
            fractions: vec![1.0, 0.2, 0.1],
            include_baseline: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Optimized,
    Vanilla,
    SingleQubitRy,
}

impl ProbeKind {
    pub fn circuit(self) -> ProbeCircuit {
        match self {
            ProbeKind::Optimized => ProbeCircuit::Pqc(Variant::Optimized),
            ProbeKind::Vanilla => ProbeCircuit::Pqc(Variant::Vanilla),
            ProbeKind::SingleQubitRy => ProbeCircuit::SingleQubitRy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSpec {
    pub variants: Vec<ProbeKind>,
    pub depths: Vec<usize>,
    pub num_samples: usize,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            variants: vec![ProbeKind::Optimized, ProbeKind::Vanilla],
            depths: REFERENCE_DEPTHS.to_vec(),
            num_samples: 200,
        }
    }
}

fn default_ffn_kind() -> FfnKind {
    FfnKind::Qffn
}

fn default_pqc_layers() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// One document fully describes a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default = "default_ffn_kind")]
    pub ffn_kind: FfnKind,
    #[serde(default = "default_pqc_layers")]
    pub pqc_layers: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Restricts quantum depths to {1, 2, 4, 8}.
    #[serde(default = "default_true")]
    pub strict_depths: bool,
    /// Writes the measured wall-clock time into `metrics.json`; off by
    /// default so that repeated runs produce identical files.
    #[serde(default)]
    pub record_wall_clock: bool,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub probe: ProbeSpec,
}

/// Which subcommand a config is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Sweep,
    Probe,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = read_string(path)?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok((config, text))
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Some(DataSpec::Tsv { train, val, vocab, .. }) = &mut self.data {
            for p in [Some(train), Some(val), vocab.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.data {
            Some(DataSpec::Synth { num_classes, .. }) | Some(DataSpec::Tsv { num_classes, .. }) => Some(*num_classes),
            None => None,
        }
    }

    /// Model configuration for a given FFN kind and depth.
    pub fn model_config(&self, ffn_kind: FfnKind, pqc_layers: usize, vocab_size: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            vocab_size,
            hidden: m.hidden,
            num_layers: m.num_layers,
            num_heads: m.num_heads,
            intermediate: m.intermediate,
            max_seq_len: m.max_seq_len,
            ffn_kind,
            pqc_layers,
            num_classes: self.num_classes().unwrap_or(2),
            dropout: m.dropout,
            layer_norm_eps: m.layer_norm_eps,
        }
    }

    /// Checks everything that can be checked without running compute.
    pub fn validate(&self, command: Command) -> Result<()> {
        match command {
            Command::Train | Command::Sweep => {
                self.validate_data()?;
                self.train.validate()?;
                let depths: &[usize] = if command == Command::Sweep {
                    &self.sweep.depths
                } else {
                    std::slice::from_ref(&self.pqc_layers)
                };
                let kind = if command == Command::Sweep && self.ffn_kind == FfnKind::Classical {
                    FfnKind::Qffn
                } else {
                    self.ffn_kind
                };
                for &d in depths {
                    self.model_config(kind, d, SPECIAL_MIN_VOCAB)
                        .validate(self.strict_depths)
                        .map_err(|e| prefix_field(e, if command == Command::Sweep { "sweep.depths" } else { "" }))?;
                }
                if self.model.max_seq_len < 2 {
                    return Err(Error::config("model.max_seq_len", "must be at least 2"));
                }
                if command == Command::Sweep {
                    if self.sweep.depths.is_empty() {
                        return Err(Error::config("sweep.depths", "must not be empty"));
                    }
                    if self.sweep.fractions.is_empty() {
                        return Err(Error::config("sweep.fractions", "must not be empty"));
                    }
                    if let Some(f) = self.sweep.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
                        return Err(Error::config("sweep.fractions", format!("{f} is not in (0, 1]")));
                    }
                }
                Ok(())
            }
            Command::Probe => {
                let p = &self.probe;
                if p.num_samples < MIN_PROBE_SAMPLES {
                    return Err(Error::config(
                        "probe.num_samples",
                        format!("at least {MIN_PROBE_SAMPLES} required, got {}", p.num_samples),
                    ));
                }
                if p.depths.is_empty() || p.depths.contains(&0) {
                    return Err(Error::config("probe.depths", "need a non-empty list of positive depths"));
                }
                if p.variants.is_empty() {
                    return Err(Error::config("probe.variants", "must not be empty"));
                }
                Ok(())
            }
        }
    }

    fn validate_data(&self) -> Result<()> {
        match &self.data {
            None => Err(Error::config("data", "missing dataset description")),
            Some(DataSpec::Synth {
                train_examples,
                val_examples,
                num_classes,
            }) => {
                if *train_examples == 0 {
                    return Err(Error::config("data.synth.train_examples", "must be positive"));
                }
                if *val_examples == 0 {
                    return Err(Error::config("data.synth.val_examples", "must be positive"));
                }
                if !(2..=SYNTH_MAX_CLASSES).contains(num_classes) {
                    return Err(Error::config(
                        "data.synth.num_classes",
                        format!("must be in 2..={SYNTH_MAX_CLASSES}"),
                    ));
                }
                Ok(())
            }
            Some(DataSpec::Tsv {
                train,
                val,
                vocab,
                num_classes,
            }) => {
                if *num_classes < 2 {
                    return Err(Error::config("data.tsv.num_classes", "need at least two classes"));
                }
                let files = [("data.tsv.train", Some(train)), ("data.tsv.val", Some(val)), ("data.tsv.vocab", vocab.as_ref())];
                for (field, path) in files {
                    if let Some(p) = path {
                        if !p.is_file() {
                            return Err(Error::config(field, format!("file not found: {}", p.display())));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Loads (or generates) and tokenizes both splits.
    pub fn prepare_data(&self) -> Result<PreparedData> {
        let seed = self.train.seed;
        let (train, val, vocab) = match self.data.as_ref().ok_or_else(|| Error::config("data", "missing"))? {
            DataSpec::Synth {
                train_examples,
                val_examples,
                num_classes,
            } => (
                synth_generate(*train_examples, *num_classes, seed)?,
                synth_generate(*val_examples, *num_classes, seed.wrapping_add(1))?,
                synth_vocab(*num_classes),
            ),
            DataSpec::Tsv {
                train,
                val,
                vocab,
                num_classes,
            } => {
                let train = Dataset::load_tsv(train, *num_classes, "train")?;
                let val = Dataset::load_tsv(val, *num_classes, "validation")?;
                let vocab = match vocab {
                    Some(p) => Vocab::load(p)?,
                    None => Vocab::from_corpus(train.examples.iter().map(|e| e.text.as_str())),
                };
                (train, val, vocab)
            }
        };
        let max_len = self.model.max_seq_len;
        Ok(PreparedData {
            train: train.encode(&vocab, max_len),
            val: val.encode(&vocab, max_len),
            vocab_size: vocab.len(),
        })
    }
}

/// Vocabulary size used when validating model shapes before data is read.
const SPECIAL_MIN_VOCAB: usize = 4;

fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { field, message } if !prefix.is_empty() => Error::Config {
            field: format!("{prefix} ({field})"),
            message,
        },
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: EncodedDataset,
    pub val: EncodedDataset,
    pub vocab_size: usize,
}
