//! Run configuration: defaults, then the TOML file, then flags on top.
//!
//! The file mirrors the resolved structure one-to-one, so the snapshot a
//! run directory receives is itself a valid `--config` input:
//!
//! ```toml
//! [run]
//! # library = "cells.lib"   # omitted = built-in demo library
//! out = "gatetag-run"
//! k = 2
//! seed = 0
//! workers = 0
//!
//! [train]
//! tau = 0.07
//! mask_ratio = 0.15
//! batch = 32
//! lr = 0.001
//! epochs = 1
//! raw_size_targets = false
//!
//! [encoder]
//! vocab = 8192
//! text_width = 128
//! embed_dim = 64
//! graph_width = 128
//! max_tokens = 512
//! ```
//!
//! The gate-type class count is always derived from the cell library and
//! is deliberately not configurable.

use crate::{Cli, CliError};
use gatetag::encoder::EncoderCfg;
use gatetag::netlist::{demo_library, load_library as parse_library, CellLibrary};
use gatetag::pretrain::TrainConfig;
use gatetag::util::fnv1a64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::PathBuf;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    run: Option<RunFile>,
    train: Option<TrainFile>,
    encoder: Option<EncoderFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    library: Option<PathBuf>,
    out: Option<PathBuf>,
    k: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    tau: Option<f64>,
    mask_ratio: Option<f64>,
    batch: Option<usize>,
    lr: Option<f64>,
    epochs: Option<usize>,
    raw_size_targets: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncoderFile {
    vocab: Option<usize>,
    text_width: Option<usize>,
    embed_dim: Option<usize>,
    graph_width: Option<usize>,
    max_tokens: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub run: RunValues,
    pub train: TrainValues,
    pub encoder: EncoderValues,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunValues {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub library: Option<PathBuf>,
    pub out: PathBuf,
    pub k: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainValues {
    pub tau: f64,
    pub mask_ratio: f64,
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    pub raw_size_targets: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EncoderValues {
    pub vocab: usize,
    pub text_width: usize,
    pub embed_dim: usize,
    pub graph_width: usize,
    pub max_tokens: usize,
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            tau: self.train.tau,
            mask_ratio: self.train.mask_ratio,
            batch: self.train.batch,
            lr: self.train.lr,
            epochs: self.train.epochs,
            seed: self.run.seed,
            raw_size_targets: self.train.raw_size_targets,
        }
    }

    pub fn encoder_cfg(&self, lib: &CellLibrary) -> EncoderCfg {
        EncoderCfg {
            vocab: self.encoder.vocab,
            text_width: self.encoder.text_width,
            embed_dim: self.encoder.embed_dim,
            graph_width: self.encoder.graph_width,
            max_tokens: self.encoder.max_tokens,
            classes: lib.sorted_names().len(),
        }
    }

    /// Seed of a named derived stream.
    pub fn subseed(&self, tag: &str) -> u64 {
        fnv1a64(format!("{}:{tag}", self.run.seed).as_bytes())
    }

    /// Resolved configuration rendered back as a config file.
    pub fn snapshot(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            toml::from_str::<FileConfig>(&text).map_err(|e| {
                CliError::Config(format!("config {}: {e}", path.display()))
            })?
        }
        None => FileConfig::default(),
    };
    let frun = file.run.unwrap_or_default();
    let ftrain = file.train.unwrap_or_default();
    let fenc = file.encoder.unwrap_or_default();
    let tdef = TrainConfig::default();
    let edef = EncoderCfg::default();

    let rc = RunConfig {
        run: RunValues {
            library: cli.library.clone().or(frun.library),
            out: cli.out.clone().or(frun.out).unwrap_or_else(|| PathBuf::from("gatetag-run")),
            k: cli.k.or(frun.k).unwrap_or(2),
            seed: cli.seed.or(frun.seed).unwrap_or(0),
            workers: cli.workers.or(frun.workers).unwrap_or(0),
        },
        train: TrainValues {
            tau: ftrain.tau.unwrap_or(tdef.tau),
            mask_ratio: ftrain.mask_ratio.unwrap_or(tdef.mask_ratio),
            batch: ftrain.batch.unwrap_or(tdef.batch),
            lr: ftrain.lr.unwrap_or(tdef.lr),
            epochs: ftrain.epochs.unwrap_or(tdef.epochs),
            raw_size_targets: ftrain.raw_size_targets.unwrap_or(tdef.raw_size_targets),
        },
        encoder: EncoderValues {
            vocab: fenc.vocab.unwrap_or(edef.vocab),
            text_width: fenc.text_width.unwrap_or(edef.text_width),
            embed_dim: fenc.embed_dim.unwrap_or(edef.embed_dim),
            graph_width: fenc.graph_width.unwrap_or(edef.graph_width),
            max_tokens: fenc.max_tokens.unwrap_or(edef.max_tokens),
        },
    };
    validate(&rc)?;
    Ok(rc)
}

fn validate(rc: &RunConfig) -> Result<(), CliError> {
    let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
    if rc.run.k == 0 {
        return bad("run.k must be at least 1");
    }
    if !(rc.train.tau.is_finite() && rc.train.tau > 0.0) {
        return bad("train.tau must be a positive finite number");
    }
    if !(rc.train.mask_ratio > 0.0 && rc.train.mask_ratio < 1.0) {
        return bad("train.mask_ratio must lie strictly between 0 and 1");
    }
    if rc.train.batch == 0 {
        return bad("train.batch must be at least 1");
    }
    if !(rc.train.lr.is_finite() && rc.train.lr > 0.0) {
        return bad("train.lr must be a positive finite number");
    }
    if rc.train.epochs == 0 {
        return bad("train.epochs must be at least 1");
    }
    for (name, v) in [
        ("encoder.vocab", rc.encoder.vocab),
        ("encoder.text_width", rc.encoder.text_width),
        ("encoder.embed_dim", rc.encoder.embed_dim),
        ("encoder.graph_width", rc.encoder.graph_width),
        ("encoder.max_tokens", rc.encoder.max_tokens),
    ] {
        if v == 0 {
            return Err(CliError::Config(format!("{name} must be at least 1")));
        }
    }
    Ok(())
}

pub fn load_library(rc: &RunConfig) -> Result<CellLibrary, CliError> {
    match &rc.run.library {
        None => Ok(demo_library()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Data(format!("cannot read library {}: {e}", path.display()))
            })?;
            parse_library(&text)
                .map_err(|e| CliError::Data(format!("library {}: {e}", path.display())))
        }
    }
}
