//! Self-supervised objectives and the two-step training schedule.
//!
//! Step 1 trains the text encoder contrastively on expression pairs: an
//! expression and a random equivalence-preserving rewrite of it. Step 2
//! freezes the text encoder and trains the graph encoder plus heads on
//! four objectives at once — masked gate-type prediction, graph-level
//! contrast against an augmented view of the same cone, per-type gate
//! count regression, and alignment to frozen earlier-stage (RTL-like) and
//! later-stage (layout-like) proxy embeddings of the same cone.
//!
//! All contrastive terms share one [`info_nce`] form: embeddings are
//! L2-normalized, anchor `i`'s positive is candidate `i`, and the
//! denominator runs over the whole candidate side of the batch. A batch
//! whose similarities are all equal therefore scores exactly `ln k`, and a
//! batch of one pair scores zero.

use crate::encoder::{
    checkpoint_bytes, encode_texts_frozen, finite_diff_check, grads_by_name, EncoderCfg,
    GradCheckReport, GraphBinding, GraphEncoderParams, Heads, HeadsBinding, Matrix, NodeId,
    Tape, TextEncoderParams, Tokenizer,
};
use crate::expr::{random_expr, rewrite_equiv, to_text};
use crate::netlist::{CellLibrary, CellKind, Netlist, PHYS_DIMS};
use crate::par::ordered_map;
use crate::tag::{augment_graph, build_tag, GateTypeVocab, PhysStats, TagGraph};
use crate::util::fnv1a64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Contrastive temperature.
    pub tau: f64,
    /// Fraction of nodes masked per graph (at least one node).
    pub mask_ratio: f64,
    /// Pairs (step 1) or graphs (step 2) per optimizer step.
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Regress raw counts instead of log1p-scaled counts.
    pub raw_size_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.07,
            mask_ratio: 0.15,
            batch: 32,
            lr: 1e-3,
            epochs: 1,
            seed: 0,
            raw_size_targets: false,
        }
    }
}

/// Deterministic stream splitting: one run seed, independent streams per
/// purpose and index.
fn subseed(seed: u64, tag: &str, i: u64) -> u64 {
    fnv1a64(format!("{seed}:{tag}:{i}").as_bytes())
}

// ---------------------------------------------------------------------
// Losses.

/// InfoNCE over index-aligned anchor/candidate rows (k×D each). Both sides
/// are L2-normalized here; candidate `i` is anchor `i`'s positive and all
/// other candidates are its negatives.
pub fn info_nce(t: &mut Tape, anchors: NodeId, candidates: NodeId, tau: f64) -> NodeId {
    let k = t.value(anchors).rows;
    assert!(k >= 1, "empty contrastive batch");
    assert_eq!(k, t.value(candidates).rows, "anchors and positives must align");
    assert!(tau > 0.0, "temperature must be positive");
    let a = t.normalize_rows(anchors);
    let c = t.normalize_rows(candidates);
    let sims = t.matmul_t(a, c);
    let sims = t.scale(sims, 1.0 / tau);
    let lse = t.log_sum_exp_rows(sims);
    let pos = t.gather_elems(sims, (0..k).map(|i| (i, i)).collect());
    let diff = t.sub(lse, pos);
    t.mean_all(diff)
}

/// Mean cross-entropy of gate-type logits for the masked nodes.
pub fn masked_gate_loss(t: &mut Tape, masked_logits: NodeId, labels: &[usize]) -> NodeId {
    assert!(!labels.is_empty(), "empty mask set");
    assert_eq!(t.value(masked_logits).rows, labels.len());
    let lse = t.log_sum_exp_rows(masked_logits);
    let picked =
        t.gather_elems(masked_logits, labels.iter().enumerate().map(|(i, &y)| (i, y)).collect());
    let diff = t.sub(lse, picked);
    t.mean_all(diff)
}

/// Apply log1p to raw per-type counts unless raw mode is requested.
pub fn scale_size_targets(counts: &[f64], raw: bool) -> Vec<f64> {
    if raw {
        counts.to_vec()
    } else {
        counts.iter().map(|&c| c.ln_1p()).collect()
    }
}

/// Mean squared error between count predictions and (scaled) targets,
/// averaged over every (graph, type) entry.
pub fn size_loss(t: &mut Tape, pred: NodeId, counts: &Matrix, raw: bool) -> NodeId {
    assert_eq!(t.value(pred).shape(), counts.shape(), "size target shape mismatch");
    let scaled = Matrix {
        rows: counts.rows,
        cols: counts.cols,
        data: scale_size_targets(&counts.data, raw),
    };
    let target = t.leaf(scaled);
    let diff = t.sub(pred, target);
    let sq = t.square(diff);
    t.mean_all(sq)
}

/// Cross-stage alignment: one InfoNCE term against the earlier-stage
/// embeddings, one against the later-stage embeddings, summed.
pub fn align_loss(
    t: &mut Tape,
    anchors: NodeId,
    rtl: NodeId,
    layout: NodeId,
    tau: f64,
) -> NodeId {
    let a = info_nce(t, anchors, rtl, tau);
    let b = info_nce(t, anchors, layout, tau);
    t.add(a, b)
}

// ---------------------------------------------------------------------
// Mask planning.

/// Nodes whose text embedding is replaced before the graph forward, with
/// their ground-truth gate-type labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub masked: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Choose `ratio` of the graph's nodes (at least one) to mask.
pub fn plan_masks(g: &TagGraph, ratio: f64, rng: &mut ChaCha8Rng) -> MaskPlan {
    assert!(!g.nodes.is_empty(), "cannot mask an empty graph");
    assert!(ratio > 0.0 && ratio < 1.0, "mask ratio must be in (0,1)");
    let want = ((g.nodes.len() as f64 * ratio).round() as usize).max(1);
    let mut ids: Vec<usize> = (0..g.nodes.len()).collect();
    ids.shuffle(rng);
    let mut masked: Vec<usize> = ids.into_iter().take(want).collect();
    masked.sort_unstable();
    let labels = masked.iter().map(|&i| g.nodes[i].gate_type_label).collect();
    MaskPlan { masked, labels }
}

// ---------------------------------------------------------------------
// Frozen cross-stage proxies.

/// Hashed bag-of-tokens embedding of an expression multiset, unit-norm.
/// Stands in for an RTL-stage encoder: deterministic, text-only, frozen.
pub fn rtl_proxy_embed(expr_texts: &[String], dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for text in expr_texts {
        for tok in crate::encoder::split_tokens(text) {
            let h = fnv1a64(tok.as_bytes());
            let slot = (h % dim as u64) as usize;
            let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
            v[slot] += sign;
        }
    }
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-12 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

const LAYOUT_PROXY_SEED: u64 = 0x6c61796f;

/// Frozen random-weight graph encoder standing in for a layout-stage
/// encoder. Text features are zeroed; physical attributes are jittered
/// ±10% by `jitter_seed`, so re-embedding with another seed moves the
/// point only slightly.
pub struct LayoutProxy {
    params: GraphEncoderParams,
    cfg: EncoderCfg,
}

impl LayoutProxy {
    pub fn new(cfg: EncoderCfg) -> Self {
        LayoutProxy { params: GraphEncoderParams::init(cfg, LAYOUT_PROXY_SEED), cfg }
    }

    pub fn embed(&self, g: &TagGraph, jitter_seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(jitter_seed, "layout-jitter", 0));
        let d = self.cfg.embed_dim;
        let mut feats = Matrix::zeros(g.nodes.len(), self.cfg.node_feat_dim());
        for (i, node) in g.nodes.iter().enumerate() {
            for (j, &p) in node.phys.norm.iter().enumerate() {
                feats.set(i, d + j, p * rng.gen_range(0.9..1.1));
            }
        }
        let mut t = Tape::new();
        let b = self.params.bind(&mut t);
        let feats = t.leaf(feats);
        let out = b.encode(&mut t, feats);
        let mut v = t.value(out.cls).data.clone();
        normalize(&mut v);
        v
    }
}

// ---------------------------------------------------------------------
// Corpora.

/// Expression/rewrite pairs for step 1, rendered in canonical text form.
pub fn build_expr_pairs(count: usize, max_vars: usize, seed: u64) -> Vec<(String, String)> {
    assert!(max_vars >= 1);
    let idx: Vec<usize> = (0..count).collect();
    ordered_map(&idx, |_, &i| {
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, "expr-pair", i as u64));
        let nvars = rng.gen_range(1..=max_vars);
        let vars: Vec<String> = (0..nvars).map(|v| format!("v{v}")).collect();
        let budget = rng.gen_range(3..=24);
        let e = random_expr(&mut rng, &vars, budget);
        let steps = rng.gen_range(1..=6);
        let rewritten = rewrite_equiv(&e, subseed(seed, "expr-rewrite", i as u64), steps);
        (to_text(&e), to_text(&rewritten))
    })
}

/// One register cone prepared for step 2: its graph, an augmented view,
/// raw per-type gate counts, and the two frozen cross-stage embeddings.
#[derive(Debug, Clone)]
pub struct Step2Item {
    pub graph: TagGraph,
    pub augmented: TagGraph,
    pub counts: Vec<f64>,
    /// Per-type node counts of the augmented view. The count regressor
    /// trains on the unmasked augmented encode, so its targets must
    /// describe that graph, not the original.
    pub aug_counts: Vec<f64>,
    pub rtl: Vec<f64>,
    pub layout: Vec<f64>,
}

fn type_counts(g: &TagGraph, classes: usize) -> Vec<f64> {
    let mut counts = vec![0.0; classes];
    for n in &g.nodes {
        counts[n.gate_type_label] += 1.0;
    }
    counts
}

/// Chunk netlists into cones and prepare every non-empty cone. Pass-through
/// cones (no gates) carry nothing to mask or count and are skipped.
pub fn build_step2_corpus(
    netlists: &[Netlist],
    lib: &CellLibrary,
    k: usize,
    vocab: &GateTypeVocab,
    stats: &PhysStats,
    ecfg: EncoderCfg,
    seed: u64,
) -> Vec<Step2Item> {
    let layout_proxy = LayoutProxy::new(ecfg);
    let mut subs: Vec<(Netlist, Vec<String>)> = Vec::new();
    for n in netlists {
        for cone in crate::cone::chunk(n, lib).cones() {
            if cone.subnetlist.gates().is_empty() {
                continue;
            }
            let exprs = crate::cone::cone_expr(cone, lib, k)
                .expect("cone expressions extract cleanly")
                .into_iter()
                .filter(|(name, _)| {
                    let g = cone.subnetlist.gate_by_name(name).expect("own gate");
                    cone.subnetlist.gate(g).kind == CellKind::Combinational
                })
                .map(|(_, e)| to_text(&e))
                .collect();
            subs.push((cone.subnetlist.clone(), exprs));
        }
    }
    ordered_map(&subs, |i, (sub, exprs)| {
        let graph = build_tag(sub, lib, k, vocab, stats).expect("cone graph builds");
        let (augmented, _) = augment_graph(
            sub,
            lib,
            k,
            vocab,
            stats,
            subseed(seed, "augment", i as u64),
        )
        .expect("augmented cone graph builds");
        let counts = type_counts(&graph, ecfg.classes);
        let aug_counts = type_counts(&augmented, ecfg.classes);
        let rtl = rtl_proxy_embed(exprs, ecfg.embed_dim);
        let layout = layout_proxy.embed(&graph, subseed(seed, "layout", i as u64));
        Step2Item { graph, augmented, counts, aug_counts, rtl, layout }
    })
}

// ---------------------------------------------------------------------
// Step 1: contrastive text pre-training.

#[derive(Debug)]
pub struct Step1Out {
    pub params: TextEncoderParams,
    /// Mean loss per optimizer step.
    pub curve: Vec<f64>,
}

/// Training aborted on a non-finite loss; `last_good` is the state saved
/// at the start of the failing epoch.
#[derive(Debug)]
pub struct Diverged<T> {
    pub step: usize,
    pub last_good: T,
}

pub fn train_step1(
    pairs: &[(String, String)],
    tcfg: &TrainConfig,
    ecfg: EncoderCfg,
) -> Result<Step1Out, Diverged<Step1Out>> {
    assert!(pairs.len() >= 2, "need at least two pairs for negatives");
    let tk = Tokenizer::new(ecfg.vocab, ecfg.max_tokens);
    let tokens: Vec<(Vec<usize>, Vec<usize>)> = pairs
        .iter()
        .map(|(a, b)| (tk.ids(a).0, tk.ids(b).0))
        .collect();

    let mut params = TextEncoderParams::init(ecfg, tcfg.seed);
    let mut opt = crate::encoder::Adam::new(tcfg.lr);
    let mut curve = Vec::new();
    let mut step = 0usize;

    for epoch in 0..tcfg.epochs {
        let snapshot = checkpoint_bytes(&params.named());
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(subseed(
            tcfg.seed,
            "step1-epoch",
            epoch as u64,
        )));
        for batch in order.chunks(tcfg.batch) {
            if batch.len() < 2 {
                continue; // a lone pair has no negatives and no gradient
            }
            let mut t = Tape::new();
            let b = params.bind(&mut t);
            let mut anchor_rows = Vec::with_capacity(batch.len());
            let mut pos_rows = Vec::with_capacity(batch.len());
            for &i in batch {
                anchor_rows
                    .push(b.encode(&mut t, &tokens[i].0).expect("pair texts are non-empty"));
                pos_rows
                    .push(b.encode(&mut t, &tokens[i].1).expect("pair texts are non-empty"));
            }
            let anchors = t.stack_rows(&anchor_rows, ecfg.embed_dim);
            let positives = t.stack_rows(&pos_rows, ecfg.embed_dim);
            let loss = info_nce(&mut t, anchors, positives, tcfg.tau);
            let value = t.scalar(loss);
            if !value.is_finite() {
                let mut last = TextEncoderParams::init(ecfg, tcfg.seed);
                crate::encoder::restore(
                    last.named_mut(),
                    &crate::encoder::parse_checkpoint(&snapshot).expect("own snapshot"),
                )
                .expect("own snapshot");
                return Err(Diverged { step, last_good: Step1Out { params: last, curve } });
            }
            let mut grads = t.backward(loss);
            opt.begin_step();
            params.apply(&b, &mut grads, &mut opt);
            curve.push(value);
            step += 1;
        }
    }
    Ok(Step1Out { params, curve })
}

/// Fraction of held-out pairs whose positive ranks first by cosine among
/// `candidates` rewrites (the positive plus sampled others).
pub fn retrieval_accuracy(
    params: &TextEncoderParams,
    pairs: &[(String, String)],
    candidates: usize,
    seed: u64,
) -> f64 {
    assert!(pairs.len() >= candidates, "need enough pairs to sample candidates from");
    let tk = Tokenizer::new(params.cfg.vocab, params.cfg.max_tokens);
    let anchor_texts: Vec<String> = pairs.iter().map(|(a, _)| a.clone()).collect();
    let pos_texts: Vec<String> = pairs.iter().map(|(_, b)| b.clone()).collect();
    let mut anchors = encode_texts_frozen(params, &tk, &anchor_texts);
    let mut positives = encode_texts_frozen(params, &tk, &pos_texts);
    for v in anchors.iter_mut().chain(positives.iter_mut()) {
        normalize(v);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, "retrieval", 0));
    let mut hits = 0usize;
    for i in 0..pairs.len() {
        let own = dot(&anchors[i], &positives[i]);
        let mut beaten = false;
        let mut drawn = 0;
        while drawn < candidates - 1 {
            let j = rng.gen_range(0..pairs.len());
            if j == i {
                continue;
            }
            drawn += 1;
            if dot(&anchors[i], &positives[j]) >= own {
                beaten = true;
                // keep drawing so the RNG stream per anchor has fixed length
            }
        }
        if !beaten {
            hits += 1;
        }
    }
    hits as f64 / pairs.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------
// Step 2: graph encoder and heads over frozen text embeddings.

#[derive(Debug)]
pub struct Step2Out {
    pub graph: GraphEncoderParams,
    pub heads: Heads,
    /// Per-objective loss value at every optimizer step, plus "total".
    pub curves: BTreeMap<&'static str, Vec<f64>>,
}

/// Precomputed per-item state reused every epoch: frozen text embeddings
/// for the original and augmented node cards, and normalized phys rows.
pub(crate) struct ItemCache {
    text_orig: Vec<Vec<f64>>,
    text_aug: Vec<Vec<f64>>,
    phys_orig: Matrix,
    phys_aug: Matrix,
}

pub(crate) fn phys_matrix(g: &TagGraph) -> Matrix {
    let mut m = Matrix::zeros(g.nodes.len(), PHYS_DIMS);
    for (i, n) in g.nodes.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&n.phys.norm);
    }
    m
}

pub(crate) fn cache_items(items: &[Step2Item], text: &TextEncoderParams) -> Vec<ItemCache> {
    let tk = Tokenizer::new(text.cfg.vocab, text.cfg.max_tokens);
    // one flat batch over every card text keeps the chunked encoder busy
    let mut all_texts = Vec::new();
    for item in items {
        for n in &item.graph.nodes {
            all_texts.push(n.text.clone());
        }
        for n in &item.augmented.nodes {
            all_texts.push(n.text.clone());
        }
    }
    let mut rows = encode_texts_frozen(text, &tk, &all_texts).into_iter();
    items
        .iter()
        .map(|item| {
            let text_orig: Vec<Vec<f64>> =
                item.graph.nodes.iter().map(|_| rows.next().expect("row per text")).collect();
            let text_aug: Vec<Vec<f64>> = item
                .augmented
                .nodes
                .iter()
                .map(|_| rows.next().expect("row per text"))
                .collect();
            ItemCache {
                text_orig,
                text_aug,
                phys_orig: phys_matrix(&item.graph),
                phys_aug: phys_matrix(&item.augmented),
            }
        })
        .collect()
}

/// Assemble the m×(D+8) node features: cached text rows (or the learned
/// mask row) concatenated with normalized physical attributes.
pub(crate) fn node_feats(
    t: &mut Tape,
    texts: &[Vec<f64>],
    phys: &Matrix,
    masked: &[usize],
    hb: Option<&HeadsBinding>,
    dim: usize,
) -> NodeId {
    let mut rows = Vec::with_capacity(texts.len());
    let mut next_mask = 0;
    for (i, row) in texts.iter().enumerate() {
        if next_mask < masked.len() && masked[next_mask] == i {
            next_mask += 1;
            rows.push(hb.expect("mask plan needs bound heads").mask_row());
        } else {
            rows.push(t.leaf(Matrix { rows: 1, cols: dim, data: row.clone() }));
        }
    }
    let text_block = t.stack_rows(&rows, dim);
    let phys_block = t.leaf(phys.clone());
    t.concat_cols(text_block, phys_block)
}

/// Sum-pooled node readout (1×D), the input of the count regressor. The
/// attention summary row is a weighted mean and thus nearly invariant to
/// graph size; absolute counts need a readout that grows with the graph.
pub(crate) fn sum_pool(t: &mut Tape, nodes: NodeId) -> NodeId {
    let m = t.value(nodes).rows;
    let ones = t.leaf(Matrix { rows: 1, cols: m, data: vec![1.0; m] });
    t.matmul(ones, nodes)
}

pub(crate) struct Step2Losses {
    pub gate: NodeId,
    pub graph: NodeId,
    pub size: NodeId,
    pub align: NodeId,
    pub total: NodeId,
}

/// One optimizer step's forward pass: encode every batch graph twice
/// (masked original, unmasked augmentation) and assemble the four losses.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step2_batch_losses(
    t: &mut Tape,
    items: &[Step2Item],
    cache: &[ItemCache],
    batch: &[usize],
    plans: &[MaskPlan],
    gb: &GraphBinding,
    hb: &HeadsBinding,
    ecfg: EncoderCfg,
    tau: f64,
    raw_size: bool,
) -> Step2Losses {
    assert_eq!(batch.len(), plans.len());
    let mut cls_rows = Vec::with_capacity(batch.len());
    let mut cls_aug_rows = Vec::with_capacity(batch.len());
    let mut pooled_rows = Vec::with_capacity(batch.len());
    let mut masked_embs: Vec<NodeId> = Vec::new();
    let mut masked_labels: Vec<usize> = Vec::new();
    let mut count_rows: Vec<f64> = Vec::new();
    let mut rtl_rows: Vec<f64> = Vec::new();
    let mut layout_rows: Vec<f64> = Vec::new();

    for (&i, plan) in batch.iter().zip(plans) {
        let item = &items[i];
        let feats = node_feats(
            t,
            &cache[i].text_orig,
            &cache[i].phys_orig,
            &plan.masked,
            Some(hb),
            ecfg.embed_dim,
        );
        let out = gb.encode(t, feats);
        masked_embs.push(t.gather_rows(out.nodes, plan.masked.clone()));
        masked_labels.extend_from_slice(&plan.labels);
        cls_rows.push(out.cls);

        // The count regressor trains on the unmasked view: sums over
        // mask-substituted rows would not match what it sees at inference.
        let aug_feats =
            node_feats(t, &cache[i].text_aug, &cache[i].phys_aug, &[], None, ecfg.embed_dim);
        let aug_out = gb.encode(t, aug_feats);
        cls_aug_rows.push(aug_out.cls);
        pooled_rows.push(sum_pool(t, aug_out.nodes));

        count_rows.extend_from_slice(&item.aug_counts);
        rtl_rows.extend_from_slice(&item.rtl);
        layout_rows.extend_from_slice(&item.layout);
    }

    let cls = t.stack_rows(&cls_rows, ecfg.embed_dim);
    let cls_aug = t.stack_rows(&cls_aug_rows, ecfg.embed_dim);

    let masked_all = masked_embs
        .into_iter()
        .reduce(|a, b| t.concat_rows(a, b))
        .expect("every graph masks at least one node");
    let logits = hb.class_logits(t, masked_all);
    let gate = masked_gate_loss(t, logits, &masked_labels);

    let proj = hb.project_graph(t, cls);
    let proj_aug = hb.project_graph(t, cls_aug);
    let graph = info_nce(t, proj, proj_aug, tau);

    let pooled = t.stack_rows(&pooled_rows, ecfg.embed_dim);
    let pred = hb.regress(t, pooled);
    let counts = Matrix { rows: batch.len(), cols: ecfg.classes, data: count_rows };
    let size = size_loss(t, pred, &counts, raw_size);

    let aligned = hb.project_align(t, cls);
    let rtl = t.leaf(Matrix { rows: batch.len(), cols: ecfg.embed_dim, data: rtl_rows });
    let layout = t.leaf(Matrix { rows: batch.len(), cols: ecfg.embed_dim, data: layout_rows });
    let align = align_loss(t, aligned, rtl, layout, tau);

    let partial = t.add(gate, graph);
    let partial = t.add(partial, size);
    let total = t.add(partial, align);
    Step2Losses { gate, graph, size, align, total }
}

pub fn train_step2(
    items: &[Step2Item],
    text: &TextEncoderParams,
    tcfg: &TrainConfig,
    ecfg: EncoderCfg,
) -> Result<Step2Out, Diverged<Step2Out>> {
    assert!(!items.is_empty(), "empty corpus");
    assert!(items.iter().all(|i| !i.graph.nodes.is_empty()), "corpus holds an empty graph");
    let cache = cache_items(items, text);

    let mut graph = GraphEncoderParams::init(ecfg, subseed(tcfg.seed, "graph-init", 0));
    let mut heads = Heads::init(ecfg, subseed(tcfg.seed, "heads-init", 0));
    let mut opt = crate::encoder::Adam::new(tcfg.lr);
    let mut curves: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    let mut step = 0usize;

    for epoch in 0..tcfg.epochs {
        let snap_graph = checkpoint_bytes(&graph.named());
        let snap_heads = checkpoint_bytes(&heads.named());
        let mut rng =
            ChaCha8Rng::seed_from_u64(subseed(tcfg.seed, "step2-epoch", epoch as u64));
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng);

        for batch in order.chunks(tcfg.batch) {
            let mut t = Tape::new();
            let gb = graph.bind(&mut t);
            let hb = heads.bind(&mut t);
            let plans: Vec<MaskPlan> = batch
                .iter()
                .map(|&i| plan_masks(&items[i].graph, tcfg.mask_ratio, &mut rng))
                .collect();
            let losses = step2_batch_losses(
                &mut t,
                items,
                &cache,
                batch,
                &plans,
                &gb,
                &hb,
                ecfg,
                tcfg.tau,
                tcfg.raw_size_targets,
            );
            let total = losses.total;

            let values = [
                ("gate", t.scalar(losses.gate)),
                ("graph", t.scalar(losses.graph)),
                ("size", t.scalar(losses.size)),
                ("align", t.scalar(losses.align)),
                ("total", t.scalar(losses.total)),
            ];
            if values.iter().any(|(_, v)| !v.is_finite()) {
                let mut g = GraphEncoderParams::init(ecfg, 0);
                let mut h = Heads::init(ecfg, 0);
                crate::encoder::restore(
                    g.named_mut(),
                    &crate::encoder::parse_checkpoint(&snap_graph).expect("own snapshot"),
                )
                .expect("own snapshot");
                crate::encoder::restore(
                    h.named_mut(),
                    &crate::encoder::parse_checkpoint(&snap_heads).expect("own snapshot"),
                )
                .expect("own snapshot");
                return Err(Diverged {
                    step,
                    last_good: Step2Out { graph: g, heads: h, curves },
                });
            }
            let mut grads = t.backward(total);
            opt.begin_step();
            graph.apply(&gb, &mut grads, &mut opt);
            heads.apply(&hb, &mut grads, &mut opt);
            for (name, v) in values {
                curves.entry(name).or_default().push(v);
            }
            step += 1;
        }
    }
    Ok(Step2Out { graph, heads, curves })
}

// ---------------------------------------------------------------------
// Step-2 evaluation helpers.

/// Forward one graph (no masking) through frozen encoders; returns the
/// per-node embedding matrix and the summary row.
pub fn embed_graph(
    g: &TagGraph,
    text: &TextEncoderParams,
    graph: &GraphEncoderParams,
) -> (Matrix, Vec<f64>) {
    let tk = Tokenizer::new(text.cfg.vocab, text.cfg.max_tokens);
    let texts: Vec<String> = g.nodes.iter().map(|n| n.text.clone()).collect();
    let rows = encode_texts_frozen(text, &tk, &texts);
    let mut t = Tape::new();
    let gb = graph.bind(&mut t);
    let feats = node_feats(&mut t, &rows, &phys_matrix(g), &[], None, text.cfg.embed_dim);
    let out = gb.encode(&mut t, feats);
    (t.value(out.nodes).clone(), t.value(out.cls).data.clone())
}

/// Masked gate-type accuracy with fresh mask plans on held-out graphs.
pub fn masked_type_accuracy(
    items: &[Step2Item],
    text: &TextEncoderParams,
    graph: &GraphEncoderParams,
    heads: &Heads,
    mask_ratio: f64,
    seed: u64,
) -> f64 {
    let cache = cache_items(items, text);
    let ecfg = graph.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, "mask-eval", 0));
    let mut correct = 0usize;
    let mut total = 0usize;
    for (item, cached) in items.iter().zip(&cache) {
        let plan = plan_masks(&item.graph, mask_ratio, &mut rng);
        let mut t = Tape::new();
        let gb = graph.bind(&mut t);
        let hb = heads.bind(&mut t);
        let feats = node_feats(
            &mut t,
            &cached.text_orig,
            &cached.phys_orig,
            &plan.masked,
            Some(&hb),
            ecfg.embed_dim,
        );
        let out = gb.encode(&mut t, feats);
        let gathered = t.gather_rows(out.nodes, plan.masked.clone());
        let logits = hb.class_logits(&mut t, gathered);
        let lv = t.value(logits);
        for (r, &label) in plan.labels.iter().enumerate() {
            let row = lv.row(r);
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                .map(|(i, _)| i)
                .expect("non-empty logits");
            correct += usize::from(argmax == label);
            total += 1;
        }
    }
    correct as f64 / total as f64
}

/// Pooled (prediction, target) pairs of the count regressor over held-out
/// graphs, in the target scale used for training.
pub fn size_predictions(
    items: &[Step2Item],
    text: &TextEncoderParams,
    graph: &GraphEncoderParams,
    heads: &Heads,
    raw: bool,
) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for item in items {
        let (nodes, _) = embed_graph(&item.graph, text, graph);
        let mut t = Tape::new();
        let hb = heads.bind(&mut t);
        let rows = t.leaf(nodes);
        let x = sum_pool(&mut t, rows);
        let pred = hb.regress(&mut t, x);
        let targets = scale_size_targets(&item.counts, raw);
        for (p, y) in t.value(pred).data.iter().zip(targets) {
            out.push((*p, y));
        }
    }
    out
}

// ---------------------------------------------------------------------
// Finite-difference verification of every training objective.

struct Step2Net {
    graph: GraphEncoderParams,
    heads: Heads,
}

impl Step2Net {
    fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut v = self.graph.named_mut();
        v.extend(self.heads.named_mut());
        v
    }
}

/// Central-difference gradient checks for all five training objectives,
/// each on a small fixed-seed batch through the production forward pass.
/// `samples` parameters are probed per objective.
pub fn gradcheck_losses(samples: usize, seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    let ecfg = EncoderCfg {
        vocab: 128,
        text_width: 12,
        embed_dim: 8,
        graph_width: 12,
        max_tokens: 48,
        classes: 17,
    };
    let tau = 0.07;
    let mut out = Vec::new();

    // step-1 contrastive objective, through the text encoder
    let pairs = build_expr_pairs(3, 3, subseed(seed, "gc-pairs", 0));
    let tk = Tokenizer::new(ecfg.vocab, ecfg.max_tokens);
    let tokens: Vec<(Vec<usize>, Vec<usize>)> =
        pairs.iter().map(|(a, b)| (tk.ids(a).0, tk.ids(b).0)).collect();
    let mut text = TextEncoderParams::init(ecfg, subseed(seed, "gc-text", 0));
    let report = finite_diff_check(
        &mut text,
        &mut |m: &mut TextEncoderParams| m.named_mut(),
        &mut |m: &TextEncoderParams| {
            let mut t = Tape::new();
            let b = m.bind(&mut t);
            let anchors: Vec<NodeId> = tokens
                .iter()
                .map(|(a, _)| b.encode(&mut t, a).expect("pair texts are non-empty"))
                .collect();
            let positives: Vec<NodeId> = tokens
                .iter()
                .map(|(_, p)| b.encode(&mut t, p).expect("pair texts are non-empty"))
                .collect();
            let a = t.stack_rows(&anchors, ecfg.embed_dim);
            let c = t.stack_rows(&positives, ecfg.embed_dim);
            let loss = info_nce(&mut t, a, c, tau);
            let value = t.scalar(loss);
            let mut grads = t.backward(loss);
            (value, grads_by_name(&b.ids(), &mut grads))
        },
        samples,
        subseed(seed, "gc-sample", 0),
    );
    out.push(("contrastive-text", report));

    // shared environment for the four step-2 objectives
    let lib = crate::netlist::demo_library();
    let netlists: Vec<Netlist> = (0..2)
        .map(|i| {
            crate::netlist::random_netlist(
                &lib,
                &crate::netlist::RandomNetlistCfg {
                    seed: subseed(seed, "gc-net", i),
                    num_inputs: 3,
                    num_outputs: 1,
                    comb_gates: 8,
                    registers: 2,
                },
            )
        })
        .collect();
    let vocab = GateTypeVocab::from_library(&lib);
    let stats = PhysStats::fit_netlists(netlists.iter(), &lib);
    let items =
        build_step2_corpus(&netlists, &lib, 1, &vocab, &stats, ecfg, subseed(seed, "gc-corpus", 0));
    let items: Vec<Step2Item> = items.into_iter().take(3).collect();
    assert!(items.len() >= 2, "need at least two cones for in-batch negatives");
    let frozen = TextEncoderParams::init(ecfg, subseed(seed, "gc-frozen", 0));
    let cache = cache_items(&items, &frozen);
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, "gc-mask", 0));
    let batch: Vec<usize> = (0..items.len()).collect();
    let plans: Vec<MaskPlan> =
        batch.iter().map(|&i| plan_masks(&items[i].graph, 0.25, &mut rng)).collect();

    let mut net = Step2Net {
        graph: GraphEncoderParams::init(ecfg, subseed(seed, "gc-graph", 0)),
        heads: Heads::init(ecfg, subseed(seed, "gc-heads", 0)),
    };
    let picks: [(&'static str, usize); 4] = [
        ("masked-gate", 0),
        ("graph-contrast", 1),
        ("size", 2),
        ("cross-stage-align", 3),
    ];
    for (name, pick) in picks {
        let report = finite_diff_check(
            &mut net,
            &mut |m: &mut Step2Net| m.named_mut(),
            &mut |m: &Step2Net| {
                let mut t = Tape::new();
                let gb = m.graph.bind(&mut t);
                let hb = m.heads.bind(&mut t);
                let losses = step2_batch_losses(
                    &mut t, &items, &cache, &batch, &plans, &gb, &hb, ecfg, tau, false,
                );
                let loss = match pick {
                    0 => losses.gate,
                    1 => losses.graph,
                    2 => losses.size,
                    _ => losses.align,
                };
                let value = t.scalar(loss);
                let mut grads = t.backward(loss);
                let mut ids = gb.ids();
                ids.extend(hb.ids());
                (value, grads_by_name(&ids, &mut grads))
            },
            samples,
            subseed(seed, "gc-sample", 1 + pick as u64),
        );
        out.push((name, report));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{demo_library, random_netlist, RandomNetlistCfg};

    fn tiny_ecfg() -> EncoderCfg {
        EncoderCfg {
            vocab: 128,
            text_width: 12,
            embed_dim: 8,
            graph_width: 12,
            max_tokens: 48,
            classes: 17,
        }
    }

    fn unit_rows(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn uniform_batches_score_ln_k() {
        for k in [2usize, 4, 16, 256] {
            let row = vec![0.3, -0.7, 0.2, 0.9];
            let m = unit_rows(&vec![row; k]);
            let mut t = Tape::new();
            let a = t.leaf(m.clone());
            let c = t.leaf(m);
            let loss = info_nce(&mut t, a, c, 0.07);
            assert!(
                (t.scalar(loss) - (k as f64).ln()).abs() < 1e-9,
                "k={k}: {} != ln {k}",
                t.scalar(loss)
            );
        }
    }

    #[test]
    fn single_pair_batch_scores_zero() {
        let mut t = Tape::new();
        let a = t.leaf(unit_rows(&[vec![0.1, 0.2, 0.3]]));
        let c = t.leaf(unit_rows(&[vec![0.9, -0.4, 0.5]]));
        let loss = info_nce(&mut t, a, c, 0.5);
        assert_eq!(t.scalar(loss), 0.0);
    }

    #[test]
    fn separated_batch_matches_the_closed_form() {
        let k = 4;
        let tau = 0.07;
        // aligned batch where candidates alternate between two antipodal
        // points: every anchor sees its positive at +1 and half the batch
        // at each pole
        let anchors: Vec<Vec<f64>> =
            (0..k).map(|i| if i % 2 == 0 { vec![1.0, 0.0] } else { vec![-1.0, 0.0] }).collect();
        let mut t = Tape::new();
        let a = t.leaf(unit_rows(&anchors));
        let c = t.leaf(unit_rows(&anchors));
        let loss = info_nce(&mut t, a, c, tau);
        // per anchor: positive at +1/τ, k/2 candidates at +1/τ total
        // (including itself), k/2 at −1/τ
        let half = k as f64 / 2.0;
        let expect = -((1.0f64 / tau).exp()
            / (half * (1.0 / tau).exp() + half * (-1.0 / tau).exp()))
        .ln();
        assert!((t.scalar(loss) - expect).abs() < 1e-9);
    }

    #[test]
    fn one_hot_and_uniform_classifier_losses() {
        // near-one-hot correct logits → loss ≈ 0
        let mut t = Tape::new();
        let logits = t.leaf(Matrix::from_rows(&[
            vec![50.0, 0.0, 0.0],
            vec![0.0, 50.0, 0.0],
        ]));
        let loss = masked_gate_loss(&mut t, logits, &[0, 1]);
        assert!(t.scalar(loss) < 1e-9);

        // uniform logits → exactly ln n per node
        let n = 7;
        let mut t = Tape::new();
        let logits = t.leaf(Matrix::zeros(3, n));
        let loss = masked_gate_loss(&mut t, logits, &[2, 0, 6]);
        assert!((t.scalar(loss) - (n as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn size_loss_identities() {
        let counts = Matrix::from_rows(&[vec![4.0, 0.0, 1.0, 9.0]]);
        // perfect prediction in log space → 0
        let mut t = Tape::new();
        let pred = t.leaf(Matrix::from_rows(&[scale_size_targets(&counts.data, false)]));
        let loss = size_loss(&mut t, pred, &counts, false);
        assert_eq!(t.scalar(loss), 0.0);

        // zero prediction vs all-ones target, raw mode → 1.0
        let ones = Matrix::filled(1, 4, 1.0);
        let mut t = Tape::new();
        let pred = t.leaf(Matrix::zeros(1, 4));
        let loss = size_loss(&mut t, pred, &ones, true);
        assert!((t.scalar(loss) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn align_loss_is_the_sum_of_its_terms_and_zero_on_one_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Matrix::uniform(3, 5, 1.0, &mut rng);
        let r = Matrix::uniform(3, 5, 1.0, &mut rng);
        let l = Matrix::uniform(3, 5, 1.0, &mut rng);
        let mut t = Tape::new();
        let (ai, ri, li) = (t.leaf(a.clone()), t.leaf(r.clone()), t.leaf(l.clone()));
        let total = align_loss(&mut t, ai, ri, li, 0.2);
        let (ai2, ri2) = (t.leaf(a.clone()), t.leaf(r));
        let term_r = info_nce(&mut t, ai2, ri2, 0.2);
        let (ai3, li3) = (t.leaf(a.clone()), t.leaf(l));
        let term_l = info_nce(&mut t, ai3, li3, 0.2);
        let want = t.scalar(term_r) + t.scalar(term_l);
        assert!((t.scalar(total) - want).abs() < 1e-12);

        let mut t = Tape::new();
        let one = t.leaf(Matrix::from_rows(&[vec![0.2, 0.8]]));
        let r1 = t.leaf(Matrix::from_rows(&[vec![-0.4, 0.1]]));
        let l1 = t.leaf(Matrix::from_rows(&[vec![0.9, 0.9]]));
        let loss = align_loss(&mut t, one, r1, l1, 0.07);
        assert_eq!(t.scalar(loss), 0.0);
    }

    #[test]
    fn mask_plans_cover_every_graph_and_respect_the_floor() {
        let lib = demo_library();
        let vocab = GateTypeVocab::from_library(&lib);
        let n = random_netlist(&lib, &RandomNetlistCfg { seed: 3, ..Default::default() });
        let g = build_tag(&n, &lib, 1, &vocab, &PhysStats::identity()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = plan_masks(&g, 0.15, &mut rng);
        assert!(!plan.masked.is_empty());
        assert!(plan.masked.len() <= g.nodes.len());
        assert!(plan.masked.windows(2).all(|w| w[0] < w[1]));
        for (&m, &l) in plan.masked.iter().zip(&plan.labels) {
            assert_eq!(g.nodes[m].gate_type_label, l);
        }
    }

    #[test]
    fn proxies_are_deterministic_and_stable_under_jitter() {
        let texts = vec!["(a & b)".to_string(), "!(c | d)".to_string()];
        let r1 = rtl_proxy_embed(&texts, 16);
        let r2 = rtl_proxy_embed(&texts, 16);
        assert_eq!(r1, r2);
        let other = rtl_proxy_embed(&["(a ^ b)".to_string()], 16);
        assert_ne!(r1, other);
        let norm: f64 = r1.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);

        let lib = demo_library();
        let vocab = GateTypeVocab::from_library(&lib);
        let n = random_netlist(&lib, &RandomNetlistCfg { seed: 5, ..Default::default() });
        let stats = PhysStats::fit_netlists(std::iter::once(&n), &lib);
        let g = build_tag(&n, &lib, 1, &vocab, &stats).unwrap();
        let proxy = LayoutProxy::new(tiny_ecfg());
        let a = proxy.embed(&g, 1);
        let b = proxy.embed(&g, 1);
        assert_eq!(a, b);
        let c = proxy.embed(&g, 2);
        assert_ne!(a, c);
        let cos = dot(&a, &c);
        assert!(cos > 0.8, "jitter moved the layout proxy too far: {cos}");
    }

    fn tiny_corpus(ecfg: EncoderCfg, circuits: usize) -> Vec<Step2Item> {
        let lib = demo_library();
        let vocab = GateTypeVocab::from_library(&lib);
        let netlists: Vec<Netlist> = (0..circuits)
            .map(|i| {
                random_netlist(
                    &lib,
                    &RandomNetlistCfg {
                        seed: 100 + i as u64,
                        comb_gates: 12,
                        registers: 2,
                        ..Default::default()
                    },
                )
            })
            .collect();
        let stats = PhysStats::fit_netlists(netlists.iter(), &lib);
        build_step2_corpus(&netlists, &lib, 2, &vocab, &stats, ecfg, 7)
    }

    #[test]
    fn step1_loss_decreases_on_a_tiny_corpus() {
        let ecfg = tiny_ecfg();
        let pairs = build_expr_pairs(48, 4, 11);
        let tcfg = TrainConfig { epochs: 4, batch: 16, seed: 1, ..Default::default() };
        let out = train_step1(&pairs, &tcfg, ecfg).expect("no divergence");
        let head: f64 = out.curve[..3].iter().sum::<f64>() / 3.0;
        let tail: f64 = out.curve[out.curve.len() - 3..].iter().sum::<f64>() / 3.0;
        assert!(tail < head, "loss went {head} -> {tail}");
    }

    #[test]
    fn step2_losses_decrease_and_text_stays_frozen() {
        let ecfg = tiny_ecfg();
        let items = tiny_corpus(ecfg, 3);
        assert!(items.len() >= 4, "expected several cones, got {}", items.len());
        let text = TextEncoderParams::init(ecfg, 5);
        let before = checkpoint_bytes(&text.named());
        let tcfg = TrainConfig { epochs: 6, batch: 8, seed: 2, ..Default::default() };
        let out = train_step2(&items, &text, &tcfg, ecfg).expect("no divergence");
        assert_eq!(checkpoint_bytes(&text.named()), before, "text params must not move");

        let total = &out.curves["total"];
        let head: f64 = total[..2].iter().sum::<f64>() / 2.0;
        let tail: f64 = total[total.len() - 2..].iter().sum::<f64>() / 2.0;
        assert!(tail < head, "total loss went {head} -> {tail}");
        for name in ["gate", "graph", "size", "align", "total"] {
            assert!(out.curves.contains_key(name));
            assert!(out.curves[name].iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn training_is_deterministic_across_worker_counts() {
        let ecfg = tiny_ecfg();
        let pairs = build_expr_pairs(24, 3, 9);
        let tcfg = TrainConfig { epochs: 1, batch: 8, seed: 3, ..Default::default() };
        let one = crate::par::with_pool(1, || train_step1(&pairs, &tcfg, ecfg))
            .expect("no divergence");
        let four = crate::par::with_pool(4, || train_step1(&pairs, &tcfg, ecfg))
            .expect("no divergence");
        assert_eq!(
            checkpoint_bytes(&one.params.named()),
            checkpoint_bytes(&four.params.named())
        );
        assert_eq!(one.curve, four.curve);
    }

    #[test]
    fn retrieval_on_an_untrained_encoder_is_weak() {
        let ecfg = tiny_ecfg();
        let pairs = build_expr_pairs(64, 4, 21);
        let params = TextEncoderParams::init(ecfg, 1);
        let acc = retrieval_accuracy(&params, &pairs, 16, 5);
        assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn every_objective_passes_a_small_gradient_check() {
        let reports = gradcheck_losses(40, 11);
        assert_eq!(reports.len(), 5);
        for (name, r) in reports {
            assert!(r.passes(), "{name}: max rel err {}", r.max_rel_err);
        }
    }
}
