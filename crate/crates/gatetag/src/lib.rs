//! Gate-level netlists as text-attributed graphs.
//!
//! The pipeline turns structural netlists into per-register combinational
//! cones, annotates every gate with a symbolic expression and physical
//! attributes, and trains a small multimodal encoder (text + graph) on the
//! result with contrastive, masked-prediction, size-regression, and
//! cross-stage alignment objectives.
//!
//! Modules follow the data flow:
//!
//! * [`expr`] — Boolean expression trees: parsing, printing, truth tables,
//!   equivalence checking, and equivalence-preserving rewrites.
//! * [`netlist`] — cell libraries and the validated circuit IR, with a
//!   simulator used as the functional oracle throughout.
//! * [`cone`] — chunking sequential circuits into register cones.
//! * [`tag`] — text-attributed graph assembly, function-preserving graph
//!   augmentation, and the dataset format.
//! * [`encoder`] — the trainable text/graph encoder proxies with exact
//!   reverse-mode gradients.
//! * [`pretrain`] — the self-supervised objectives and the two-step schedule.
//! * [`downstream`] — fine-tuning heads, toy task generators, and metrics.
//! * [`par`] — data-parallel map helpers (rayon behind the `parallel`
//!   feature, with a sequential fallback).

pub mod cone;
pub mod downstream;
pub mod encoder;
pub mod expr;
pub mod netlist;
pub mod par;
pub mod pretrain;
pub mod tag;
pub mod util;
