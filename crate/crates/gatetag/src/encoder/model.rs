//! The trainable encoders and task heads.
//!
//! Two small transformers: a text encoder (token + position embeddings,
//! one bidirectional self-attention block, a feed-forward block, mean
//! pooling, projection to the shared embedding width) and a graph encoder
//! (feature map over concatenated text embedding + physical attributes,
//! one global-attention block over all nodes plus a learned summary seed,
//! projection back to the shared width). The summary row plays the [CLS]
//! role: its post-attention state is the whole-graph embedding.
//!
//! Parameters live in plain structs of named matrices. `bind` inserts them
//! into a tape once per batch; the returned binding runs forwards and maps
//! gradients back to the named parameters. Every draw during `init` happens
//! in field order from one seeded stream, so a seed pins the full model.

use super::matrix::Matrix;
use super::optim::Adam;
use super::tape::{Grads, NodeId, Tape};
use crate::netlist::{CellLibrary, PHYS_DIMS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderCfg {
    /// Hashed token id space of the text encoder.
    pub vocab: usize,
    /// Text encoder width (d).
    pub text_width: usize,
    /// Shared embedding width (D) produced by both encoders.
    pub embed_dim: usize,
    /// Graph encoder width.
    pub graph_width: usize,
    /// Position table size; longer token streams are truncated.
    pub max_tokens: usize,
    /// Gate-type classes for the heads (vocabulary size of the library).
    pub classes: usize,
}

impl Default for EncoderCfg {
    /// Desk-scale defaults; `classes` matches the built-in demo library.
    fn default() -> Self {
        EncoderCfg {
            vocab: 8192,
            text_width: 128,
            embed_dim: 64,
            graph_width: 128,
            max_tokens: 512,
            classes: 17,
        }
    }
}

impl EncoderCfg {
    pub fn for_library(lib: &CellLibrary) -> Self {
        EncoderCfg { classes: lib.sorted_names().len(), ..Default::default() }
    }

    /// Width of the graph encoder's node input (text embedding ∥ phys).
    pub fn node_feat_dim(&self) -> usize {
        self.embed_dim + PHYS_DIMS
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncoderError {
    #[error("cannot encode an empty token stream")]
    EmptyText,
}

const MLP_HIDDEN: usize = 256;

/// Named views used by the optimizer, checkpoints, and gradient checks.
/// `named()` and the binding's `ids()` list fields in the same order.
#[derive(Debug, Clone)]
pub struct TextEncoderParams {
    pub cfg: EncoderCfg,
    tok: Matrix,
    pos: Matrix,
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
    wo: Matrix,
    ff1: Matrix,
    fb1: Matrix,
    ff2: Matrix,
    fb2: Matrix,
    proj: Matrix,
    pb: Matrix,
}

impl TextEncoderParams {
    pub fn init(cfg: EncoderCfg, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.text_width;
        TextEncoderParams {
            cfg,
            tok: Matrix::uniform(cfg.vocab, d, 0.05, &mut rng),
            pos: Matrix::uniform(cfg.max_tokens, d, 0.05, &mut rng),
            wq: Matrix::glorot(d, d, &mut rng),
            wk: Matrix::glorot(d, d, &mut rng),
            wv: Matrix::glorot(d, d, &mut rng),
            wo: Matrix::glorot(d, d, &mut rng),
            ff1: Matrix::glorot(d, 4 * d, &mut rng),
            fb1: Matrix::zeros(1, 4 * d),
            ff2: Matrix::glorot(4 * d, d, &mut rng),
            fb2: Matrix::zeros(1, d),
            proj: Matrix::glorot(d, cfg.embed_dim, &mut rng),
            pb: Matrix::zeros(1, cfg.embed_dim),
        }
    }

    /// All-zero weights; forwards become constant (used by tests).
    pub fn zeroed(cfg: EncoderCfg) -> Self {
        let mut p = Self::init(cfg, 0);
        for (_, m) in p.named_mut() {
            m.data.fill(0.0);
        }
        p
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("text.tok", &self.tok),
            ("text.pos", &self.pos),
            ("text.wq", &self.wq),
            ("text.wk", &self.wk),
            ("text.wv", &self.wv),
            ("text.wo", &self.wo),
            ("text.ff1", &self.ff1),
            ("text.fb1", &self.fb1),
            ("text.ff2", &self.ff2),
            ("text.fb2", &self.fb2),
            ("text.proj", &self.proj),
            ("text.pb", &self.pb),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("text.tok", &mut self.tok),
            ("text.pos", &mut self.pos),
            ("text.wq", &mut self.wq),
            ("text.wk", &mut self.wk),
            ("text.wv", &mut self.wv),
            ("text.wo", &mut self.wo),
            ("text.ff1", &mut self.ff1),
            ("text.fb1", &mut self.fb1),
            ("text.ff2", &mut self.ff2),
            ("text.fb2", &mut self.fb2),
            ("text.proj", &mut self.proj),
            ("text.pb", &mut self.pb),
        ]
    }

    pub fn bind(&self, t: &mut Tape) -> TextBinding {
        TextBinding {
            cfg: self.cfg,
            tok: t.leaf(self.tok.clone()),
            pos: t.leaf(self.pos.clone()),
            wq: t.leaf(self.wq.clone()),
            wk: t.leaf(self.wk.clone()),
            wv: t.leaf(self.wv.clone()),
            wo: t.leaf(self.wo.clone()),
            ff1: t.leaf(self.ff1.clone()),
            fb1: t.leaf(self.fb1.clone()),
            ff2: t.leaf(self.ff2.clone()),
            fb2: t.leaf(self.fb2.clone()),
            proj: t.leaf(self.proj.clone()),
            pb: t.leaf(self.pb.clone()),
        }
    }

    /// Apply one optimizer step from this binding's gradients.
    pub fn apply(&mut self, b: &TextBinding, grads: &mut Grads, opt: &mut Adam) {
        apply_named(self.named_mut(), &b.ids(), grads, opt);
    }
}

#[derive(Clone, Copy)]
pub struct TextBinding {
    cfg: EncoderCfg,
    tok: NodeId,
    pos: NodeId,
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
    wo: NodeId,
    ff1: NodeId,
    fb1: NodeId,
    ff2: NodeId,
    fb2: NodeId,
    proj: NodeId,
    pb: NodeId,
}

impl TextBinding {
    pub fn ids(&self) -> Vec<(&'static str, NodeId)> {
        vec![
            ("text.tok", self.tok),
            ("text.pos", self.pos),
            ("text.wq", self.wq),
            ("text.wk", self.wk),
            ("text.wv", self.wv),
            ("text.wo", self.wo),
            ("text.ff1", self.ff1),
            ("text.fb1", self.fb1),
            ("text.ff2", self.ff2),
            ("text.fb2", self.fb2),
            ("text.proj", self.proj),
            ("text.pb", self.pb),
        ]
    }

    /// Encode one token stream to a 1×D embedding row.
    pub fn encode(&self, t: &mut Tape, token_ids: &[usize]) -> Result<NodeId, EncoderError> {
        if token_ids.is_empty() {
            return Err(EncoderError::EmptyText);
        }
        let ids: Vec<usize> = token_ids.iter().take(self.cfg.max_tokens).copied().collect();
        let n = ids.len();
        let x0 = t.gather_rows(self.tok, ids);
        let p = t.gather_rows(self.pos, (0..n).collect());
        let x = t.add(x0, p);
        let x = attention_block(t, x, self.wq, self.wk, self.wv, self.wo, self.cfg.text_width);
        let x = feed_forward_block(t, x, self.ff1, self.fb1, self.ff2, self.fb2);
        let pooled = t.mean_rows(x);
        let out = t.matmul(pooled, self.proj);
        Ok(t.add_row_bias(out, self.pb))
    }
}

/// Residual single-head self-attention: `x + softmax(QKᵀ/√d)·V·Wo`.
fn attention_block(
    t: &mut Tape,
    x: NodeId,
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
    wo: NodeId,
    width: usize,
) -> NodeId {
    let q = t.matmul(x, wq);
    let k = t.matmul(x, wk);
    let v = t.matmul(x, wv);
    let scores = t.matmul_t(q, k);
    let scores = t.scale(scores, 1.0 / (width as f64).sqrt());
    let probs = t.softmax_rows(scores);
    let mixed = t.matmul(probs, v);
    let att = t.matmul(mixed, wo);
    t.add(x, att)
}

/// Residual two-layer feed-forward: `x + relu(x·W1 + b1)·W2 + b2`.
fn feed_forward_block(
    t: &mut Tape,
    x: NodeId,
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
) -> NodeId {
    let h = t.matmul(x, w1);
    let h = t.add_row_bias(h, b1);
    let h = t.relu(h);
    let h = t.matmul(h, w2);
    let h = t.add_row_bias(h, b2);
    t.add(x, h)
}

#[derive(Debug, Clone)]
pub struct GraphEncoderParams {
    pub cfg: EncoderCfg,
    win: Matrix,
    bin: Matrix,
    cls: Matrix,
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
    wo: Matrix,
    ff1: Matrix,
    fb1: Matrix,
    ff2: Matrix,
    fb2: Matrix,
    wout: Matrix,
    bout: Matrix,
}

impl GraphEncoderParams {
    pub fn init(cfg: EncoderCfg, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dg = cfg.graph_width;
        GraphEncoderParams {
            cfg,
            win: Matrix::glorot(cfg.node_feat_dim(), dg, &mut rng),
            bin: Matrix::zeros(1, dg),
            cls: Matrix::uniform(1, dg, 0.1, &mut rng),
            wq: Matrix::glorot(dg, dg, &mut rng),
            wk: Matrix::glorot(dg, dg, &mut rng),
            wv: Matrix::glorot(dg, dg, &mut rng),
            wo: Matrix::glorot(dg, dg, &mut rng),
            ff1: Matrix::glorot(dg, 4 * dg, &mut rng),
            fb1: Matrix::zeros(1, 4 * dg),
            ff2: Matrix::glorot(4 * dg, dg, &mut rng),
            fb2: Matrix::zeros(1, dg),
            wout: Matrix::glorot(dg, cfg.embed_dim, &mut rng),
            bout: Matrix::zeros(1, cfg.embed_dim),
        }
    }

    pub fn zeroed(cfg: EncoderCfg) -> Self {
        let mut p = Self::init(cfg, 0);
        for (_, m) in p.named_mut() {
            m.data.fill(0.0);
        }
        p
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("graph.win", &self.win),
            ("graph.bin", &self.bin),
            ("graph.cls", &self.cls),
            ("graph.wq", &self.wq),
            ("graph.wk", &self.wk),
            ("graph.wv", &self.wv),
            ("graph.wo", &self.wo),
            ("graph.ff1", &self.ff1),
            ("graph.fb1", &self.fb1),
            ("graph.ff2", &self.ff2),
            ("graph.fb2", &self.fb2),
            ("graph.wout", &self.wout),
            ("graph.bout", &self.bout),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("graph.win", &mut self.win),
            ("graph.bin", &mut self.bin),
            ("graph.cls", &mut self.cls),
            ("graph.wq", &mut self.wq),
            ("graph.wk", &mut self.wk),
            ("graph.wv", &mut self.wv),
            ("graph.wo", &mut self.wo),
            ("graph.ff1", &mut self.ff1),
            ("graph.fb1", &mut self.fb1),
            ("graph.ff2", &mut self.ff2),
            ("graph.fb2", &mut self.fb2),
            ("graph.wout", &mut self.wout),
            ("graph.bout", &mut self.bout),
        ]
    }

    pub fn bind(&self, t: &mut Tape) -> GraphBinding {
        GraphBinding {
            cfg: self.cfg,
            win: t.leaf(self.win.clone()),
            bin: t.leaf(self.bin.clone()),
            cls: t.leaf(self.cls.clone()),
            wq: t.leaf(self.wq.clone()),
            wk: t.leaf(self.wk.clone()),
            wv: t.leaf(self.wv.clone()),
            wo: t.leaf(self.wo.clone()),
            ff1: t.leaf(self.ff1.clone()),
            fb1: t.leaf(self.fb1.clone()),
            ff2: t.leaf(self.ff2.clone()),
            fb2: t.leaf(self.fb2.clone()),
            wout: t.leaf(self.wout.clone()),
            bout: t.leaf(self.bout.clone()),
        }
    }

    pub fn apply(&mut self, b: &GraphBinding, grads: &mut Grads, opt: &mut Adam) {
        apply_named(self.named_mut(), &b.ids(), grads, opt);
    }
}

#[derive(Clone, Copy)]
pub struct GraphBinding {
    cfg: EncoderCfg,
    win: NodeId,
    bin: NodeId,
    cls: NodeId,
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
    wo: NodeId,
    ff1: NodeId,
    fb1: NodeId,
    ff2: NodeId,
    fb2: NodeId,
    wout: NodeId,
    bout: NodeId,
}

/// Output of one graph forward: per-node and whole-graph embeddings.
pub struct GraphOut {
    /// m×D.
    pub nodes: NodeId,
    /// 1×D summary embedding.
    pub cls: NodeId,
}

impl GraphBinding {
    pub fn ids(&self) -> Vec<(&'static str, NodeId)> {
        vec![
            ("graph.win", self.win),
            ("graph.bin", self.bin),
            ("graph.cls", self.cls),
            ("graph.wq", self.wq),
            ("graph.wk", self.wk),
            ("graph.wv", self.wv),
            ("graph.wo", self.wo),
            ("graph.ff1", self.ff1),
            ("graph.fb1", self.fb1),
            ("graph.ff2", self.ff2),
            ("graph.fb2", self.fb2),
            ("graph.wout", self.wout),
            ("graph.bout", self.bout),
        ]
    }

    /// Encode one graph from its m×(D+8) node feature matrix. Attention is
    /// global over the m nodes plus the summary row; an empty graph still
    /// produces a summary embedding.
    pub fn encode(&self, t: &mut Tape, feats: NodeId) -> GraphOut {
        let m = t.value(feats).rows;
        assert_eq!(
            t.value(feats).cols,
            self.cfg.node_feat_dim(),
            "node feature width mismatch"
        );
        let x = t.matmul(feats, self.win);
        let x = t.add_row_bias(x, self.bin);
        let x = t.concat_rows(x, self.cls);
        let x = attention_block(t, x, self.wq, self.wk, self.wv, self.wo, self.cfg.graph_width);
        let x = feed_forward_block(t, x, self.ff1, self.fb1, self.ff2, self.fb2);
        let out = t.matmul(x, self.wout);
        let out = t.add_row_bias(out, self.bout);
        GraphOut {
            nodes: t.gather_rows(out, (0..m).collect()),
            cls: t.gather_rows(out, vec![m]),
        }
    }
}

/// Task heads trained in the second step: gate-type classifier, per-type
/// count regressor (fed a sum-pooled node readout), contrastive
/// projections, and the learned replacement embedding for masked node
/// text.
#[derive(Debug, Clone)]
pub struct Heads {
    pub cfg: EncoderCfg,
    cw1: Matrix,
    cb1: Matrix,
    cw2: Matrix,
    cb2: Matrix,
    cw3: Matrix,
    cb3: Matrix,
    rw1: Matrix,
    rb1: Matrix,
    rw2: Matrix,
    rb2: Matrix,
    rw3: Matrix,
    rb3: Matrix,
    graph_proj: Matrix,
    align_proj: Matrix,
    mask_emb: Matrix,
}

impl Heads {
    pub fn init(cfg: EncoderCfg, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.embed_dim;
        let n = cfg.classes;
        let h = MLP_HIDDEN;
        Heads {
            cfg,
            cw1: Matrix::glorot(d, h, &mut rng),
            cb1: Matrix::zeros(1, h),
            cw2: Matrix::glorot(h, h, &mut rng),
            cb2: Matrix::zeros(1, h),
            cw3: Matrix::glorot(h, n, &mut rng),
            cb3: Matrix::zeros(1, n),
            rw1: Matrix::glorot(d, h, &mut rng),
            rb1: Matrix::zeros(1, h),
            rw2: Matrix::glorot(h, h, &mut rng),
            rb2: Matrix::zeros(1, h),
            rw3: Matrix::glorot(h, n, &mut rng),
            rb3: Matrix::zeros(1, n),
            graph_proj: Matrix::glorot(d, d, &mut rng),
            align_proj: Matrix::glorot(d, d, &mut rng),
            mask_emb: Matrix::uniform(1, d, 0.1, &mut rng),
        }
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("heads.cw1", &self.cw1),
            ("heads.cb1", &self.cb1),
            ("heads.cw2", &self.cw2),
            ("heads.cb2", &self.cb2),
            ("heads.cw3", &self.cw3),
            ("heads.cb3", &self.cb3),
            ("heads.rw1", &self.rw1),
            ("heads.rb1", &self.rb1),
            ("heads.rw2", &self.rw2),
            ("heads.rb2", &self.rb2),
            ("heads.rw3", &self.rw3),
            ("heads.rb3", &self.rb3),
            ("heads.graph_proj", &self.graph_proj),
            ("heads.align_proj", &self.align_proj),
            ("heads.mask_emb", &self.mask_emb),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("heads.cw1", &mut self.cw1),
            ("heads.cb1", &mut self.cb1),
            ("heads.cw2", &mut self.cw2),
            ("heads.cb2", &mut self.cb2),
            ("heads.cw3", &mut self.cw3),
            ("heads.cb3", &mut self.cb3),
            ("heads.rw1", &mut self.rw1),
            ("heads.rb1", &mut self.rb1),
            ("heads.rw2", &mut self.rw2),
            ("heads.rb2", &mut self.rb2),
            ("heads.rw3", &mut self.rw3),
            ("heads.rb3", &mut self.rb3),
            ("heads.graph_proj", &mut self.graph_proj),
            ("heads.align_proj", &mut self.align_proj),
            ("heads.mask_emb", &mut self.mask_emb),
        ]
    }

    pub fn bind(&self, t: &mut Tape) -> HeadsBinding {
        HeadsBinding {
            cw1: t.leaf(self.cw1.clone()),
            cb1: t.leaf(self.cb1.clone()),
            cw2: t.leaf(self.cw2.clone()),
            cb2: t.leaf(self.cb2.clone()),
            cw3: t.leaf(self.cw3.clone()),
            cb3: t.leaf(self.cb3.clone()),
            rw1: t.leaf(self.rw1.clone()),
            rb1: t.leaf(self.rb1.clone()),
            rw2: t.leaf(self.rw2.clone()),
            rb2: t.leaf(self.rb2.clone()),
            rw3: t.leaf(self.rw3.clone()),
            rb3: t.leaf(self.rb3.clone()),
            graph_proj: t.leaf(self.graph_proj.clone()),
            align_proj: t.leaf(self.align_proj.clone()),
            mask_emb: t.leaf(self.mask_emb.clone()),
        }
    }

    pub fn apply(&mut self, b: &HeadsBinding, grads: &mut Grads, opt: &mut Adam) {
        apply_named(self.named_mut(), &b.ids(), grads, opt);
    }
}

#[derive(Clone, Copy)]
pub struct HeadsBinding {
    cw1: NodeId,
    cb1: NodeId,
    cw2: NodeId,
    cb2: NodeId,
    cw3: NodeId,
    cb3: NodeId,
    rw1: NodeId,
    rb1: NodeId,
    rw2: NodeId,
    rb2: NodeId,
    rw3: NodeId,
    rb3: NodeId,
    graph_proj: NodeId,
    align_proj: NodeId,
    mask_emb: NodeId,
}

fn mlp3(
    t: &mut Tape,
    x: NodeId,
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
    w3: NodeId,
    b3: NodeId,
) -> NodeId {
    let h = t.matmul(x, w1);
    let h = t.add_row_bias(h, b1);
    let h = t.relu(h);
    let h = t.matmul(h, w2);
    let h = t.add_row_bias(h, b2);
    let h = t.relu(h);
    let h = t.matmul(h, w3);
    t.add_row_bias(h, b3)
}

impl HeadsBinding {
    pub fn ids(&self) -> Vec<(&'static str, NodeId)> {
        vec![
            ("heads.cw1", self.cw1),
            ("heads.cb1", self.cb1),
            ("heads.cw2", self.cw2),
            ("heads.cb2", self.cb2),
            ("heads.cw3", self.cw3),
            ("heads.cb3", self.cb3),
            ("heads.rw1", self.rw1),
            ("heads.rb1", self.rb1),
            ("heads.rw2", self.rw2),
            ("heads.rb2", self.rb2),
            ("heads.rw3", self.rw3),
            ("heads.rb3", self.rb3),
            ("heads.graph_proj", self.graph_proj),
            ("heads.align_proj", self.align_proj),
            ("heads.mask_emb", self.mask_emb),
        ]
    }

    /// Gate-type logits, one row per input embedding.
    pub fn class_logits(&self, t: &mut Tape, x: NodeId) -> NodeId {
        mlp3(t, x, self.cw1, self.cb1, self.cw2, self.cb2, self.cw3, self.cb3)
    }

    /// Per-type count predictions, one row per graph embedding.
    pub fn regress(&self, t: &mut Tape, x: NodeId) -> NodeId {
        mlp3(t, x, self.rw1, self.rb1, self.rw2, self.rb2, self.rw3, self.rb3)
    }

    pub fn project_graph(&self, t: &mut Tape, x: NodeId) -> NodeId {
        t.matmul(x, self.graph_proj)
    }

    pub fn project_align(&self, t: &mut Tape, x: NodeId) -> NodeId {
        t.matmul(x, self.align_proj)
    }

    /// The learned 1×D row standing in for a masked node's text embedding.
    pub fn mask_row(&self) -> NodeId {
        self.mask_emb
    }
}

/// One Adam step over every bound parameter that received a gradient.
/// Parameters off the loss path are left untouched.
fn apply_named(
    named: Vec<(&'static str, &mut Matrix)>,
    ids: &[(&'static str, NodeId)],
    grads: &mut Grads,
    opt: &mut Adam,
) {
    assert_eq!(named.len(), ids.len());
    for ((name, param), (id_name, id)) in named.into_iter().zip(ids) {
        assert_eq!(name, *id_name, "binding order must mirror parameter order");
        if let Some(g) = grads.take(*id) {
            opt.update(name, param, &g);
        }
    }
}

/// Collect this binding's gradients keyed by parameter name (finite
/// difference checks and tests consume this form).
pub fn grads_by_name(ids: &[(&'static str, NodeId)], grads: &mut Grads) -> BTreeMap<String, Matrix> {
    let mut out = BTreeMap::new();
    for (name, id) in ids {
        if let Some(g) = grads.take(*id) {
            out.insert((*name).to_string(), g);
        }
    }
    out
}

/// Forward a batch of texts through a frozen text encoder, in parallel
/// chunks, without keeping any tape state. Token streams must be non-empty.
pub fn encode_texts_frozen(
    p: &TextEncoderParams,
    tk: &super::tokenize::Tokenizer,
    texts: &[String],
) -> Vec<Vec<f64>> {
    let chunks: Vec<&[String]> = texts.chunks(64).collect();
    let per_chunk = crate::par::ordered_map(&chunks, |_, chunk| {
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        chunk
            .iter()
            .map(|text| {
                let (ids, _) = tk.ids(text);
                let out = b.encode(&mut t, &ids).expect("non-empty card text");
                t.value(out).data.clone()
            })
            .collect::<Vec<_>>()
    });
    per_chunk.concat()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::tokenize::Tokenizer;
    use crate::util::{fmt_f64, fnv1a64};

    fn tiny_cfg() -> EncoderCfg {
        EncoderCfg {
            vocab: 64,
            text_width: 8,
            embed_dim: 6,
            graph_width: 10,
            max_tokens: 16,
            classes: 5,
        }
    }

    #[test]
    fn binding_orders_mirror_parameter_orders() {
        let cfg = tiny_cfg();
        let mut t = Tape::new();
        let text = TextEncoderParams::init(cfg, 1);
        let names: Vec<_> = text.named().into_iter().map(|(n, _)| n).collect();
        let ids: Vec<_> = text.bind(&mut t).ids().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ids);

        let graph = GraphEncoderParams::init(cfg, 2);
        let names: Vec<_> = graph.named().into_iter().map(|(n, _)| n).collect();
        let ids: Vec<_> = graph.bind(&mut t).ids().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ids);

        let heads = Heads::init(cfg, 3);
        let names: Vec<_> = heads.named().into_iter().map(|(n, _)| n).collect();
        let ids: Vec<_> = heads.bind(&mut t).ids().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ids);
    }

    #[test]
    fn zero_weights_encode_any_text_to_zero() {
        let p = TextEncoderParams::zeroed(tiny_cfg());
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        for ids in [vec![1usize], vec![5, 9, 13, 2], vec![0; 16]] {
            let out = b.encode(&mut t, &ids).unwrap();
            assert!(t.value(out).data.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn empty_token_stream_is_an_error() {
        let p = TextEncoderParams::init(tiny_cfg(), 4);
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        assert_eq!(b.encode(&mut t, &[]).unwrap_err(), EncoderError::EmptyText);
    }

    #[test]
    fn token_order_matters_through_positions() {
        let p = TextEncoderParams::init(tiny_cfg(), 42);
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        let a = b.encode(&mut t, &[3, 7, 11, 19, 23]).unwrap();
        let bb = b.encode(&mut t, &[3, 23, 11, 19, 7]).unwrap();
        let (va, vb) = (t.value(a).clone(), t.value(bb));
        let diff: f64 = va.data.iter().zip(&vb.data).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-6, "swapping non-adjacent tokens must move the embedding");
    }

    #[test]
    fn text_embedding_golden_checksum() {
        // Frozen first-run output for the default configuration, seed 42,
        // on the token stream of `!(a|b)`. Guards accidental forward or
        // init changes.
        let cfg = EncoderCfg::default();
        let p = TextEncoderParams::init(cfg, 42);
        let tk = Tokenizer::new(cfg.vocab, cfg.max_tokens);
        let (ids, _) = tk.ids("!(a|b)");
        assert_eq!(ids.len(), 6);
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        let out = b.encode(&mut t, &ids).unwrap();
        let text: String = t
            .value(out)
            .data
            .iter()
            .map(|&x| fmt_f64(x))
            .collect::<Vec<_>>()
            .join(",");
        assert_eq!(fnv1a64(text.as_bytes()), 0x5b79035becb89928);
    }

    #[test]
    fn zero_weight_graph_encoder_emits_its_output_bias() {
        let cfg = tiny_cfg();
        let mut p = GraphEncoderParams::zeroed(cfg);
        p.bout = Matrix::filled(1, cfg.embed_dim, 0.5);
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        let feats = t.leaf(Matrix::filled(1, cfg.node_feat_dim(), 3.0));
        let out = b.encode(&mut t, feats);
        assert_eq!(t.value(out.cls).data, vec![0.5; cfg.embed_dim]);
        assert_eq!(t.value(out.nodes).data, vec![0.5; cfg.embed_dim]);
    }

    #[test]
    fn summary_embedding_ignores_node_order() {
        let cfg = tiny_cfg();
        let p = GraphEncoderParams::init(cfg, 9);
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feats = Matrix::uniform(6, cfg.node_feat_dim(), 1.0, &mut rng);
        let mut permuted_rows: Vec<Vec<f64>> = (0..6).map(|r| feats.row(r).to_vec()).collect();
        permuted_rows.reverse();
        permuted_rows.swap(1, 3);
        let fa = t.leaf(feats);
        let fb = t.leaf(Matrix::from_rows(&permuted_rows));
        let oa = b.encode(&mut t, fa);
        let ob = b.encode(&mut t, fb);
        let (ca, cb) = (t.value(oa.cls).clone(), t.value(ob.cls));
        for (x, y) in ca.data.iter().zip(&cb.data) {
            assert!((x - y).abs() < 1e-9, "summary must be permutation-invariant");
        }
    }

    #[test]
    fn summary_embedding_sees_single_node_changes() {
        let cfg = tiny_cfg();
        let p = GraphEncoderParams::init(cfg, 9);
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let feats = Matrix::uniform(5, cfg.node_feat_dim(), 1.0, &mut rng);
        let mut bumped = feats.clone();
        let c = cfg.node_feat_dim() - 1; // a phys component
        bumped.set(2, c, bumped.get(2, c) + 0.25);
        let fa = t.leaf(feats);
        let fb = t.leaf(bumped);
        let oa = b.encode(&mut t, fa);
        let ob = b.encode(&mut t, fb);
        let diff: f64 = t
            .value(oa.cls)
            .data
            .iter()
            .zip(&t.value(ob.cls).data)
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-9);
    }

    #[test]
    fn empty_graph_still_has_a_summary() {
        let cfg = tiny_cfg();
        let p = GraphEncoderParams::init(cfg, 11);
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        let feats = t.leaf(Matrix::zeros(0, cfg.node_feat_dim()));
        let out = b.encode(&mut t, feats);
        assert_eq!(t.value(out.nodes).rows, 0);
        assert_eq!(t.value(out.cls).shape(), (1, cfg.embed_dim));
        assert!(t.value(out.cls).is_finite());
    }

    #[test]
    fn heads_have_expected_shapes() {
        let cfg = tiny_cfg();
        let h = Heads::init(cfg, 12);
        let mut t = Tape::new();
        let b = h.bind(&mut t);
        let x = t.leaf(Matrix::filled(3, cfg.embed_dim, 0.1));
        let logits = b.class_logits(&mut t, x);
        assert_eq!(t.value(logits).shape(), (3, cfg.classes));
        let pred = b.regress(&mut t, x);
        assert_eq!(t.value(pred).shape(), (3, cfg.classes));
        let pg = b.project_graph(&mut t, x);
        assert_eq!(t.value(pg).shape(), (3, cfg.embed_dim));
    }

    #[test]
    fn frozen_batch_encoding_matches_single_forwards() {
        let cfg = tiny_cfg();
        let p = TextEncoderParams::init(cfg, 21);
        let tk = Tokenizer::new(cfg.vocab, cfg.max_tokens);
        let texts: Vec<String> =
            (0..70).map(|i| format!("name=g{i} type=X expr=(a & b{i})")).collect();
        let batched = encode_texts_frozen(&p, &tk, &texts);
        assert_eq!(batched.len(), texts.len());
        for (text, row) in texts.iter().zip(&batched) {
            let mut t = Tape::new();
            let b = p.bind(&mut t);
            let (ids, _) = tk.ids(text);
            let out = b.encode(&mut t, &ids).unwrap();
            assert_eq!(&t.value(out).data, row);
        }
    }
}
