//! Task heads and evaluation on top of frozen circuit embeddings.
//!
//! Downstream tasks never touch the encoders' weights: graphs are embedded
//! once, and a small 3-layer MLP head is trained on the resulting vectors.
//! Three toy task families are generated locally — gate-function
//! classification over circuits assembled from labeled functional blocks,
//! register-role classification (state machine vs. pipeline stage), and
//! per-cone size regression (synthetic area and a critical-path proxy).
//!
//! The gate-function generator deliberately builds every block from the
//! same small cell palette (NAND2/NOR2/INV), so per-node physical
//! attributes alone carry almost no class signal and the expression text
//! has to do the work. That makes the text-ablation comparison meaningful.

use crate::cone::{chunk, ConeRoot, RegisterCone};
use crate::encoder::{
    encode_texts_frozen, GraphEncoderParams, Matrix, NodeId, Tape, TextEncoderParams, Tokenizer,
};
use crate::netlist::{
    random_netlist, topo_order, CellKind, CellLibrary, Netlist, NetlistBuilder, RandomNetlistCfg,
};
use crate::par::ordered_map;
use crate::pretrain::{masked_gate_loss, node_feats, phys_matrix, size_loss};
use crate::tag::{build_tag, GateTypeVocab, PhysStats, TagGraph};
use crate::util::fnv1a64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

// ---------------------------------------------------------------------
// Metrics.

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Classification fields are set by [`classification_metrics`], regression
/// fields by [`regression_metrics`]; the rest stay `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub n: usize,
    pub accuracy: Option<f64>,
    /// Macro averages over classes that appear in the ground truth.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub pearson_r: Option<f64>,
    /// Mean |pred−truth|/|truth| over entries with non-negligible truth.
    pub mape: Option<f64>,
    pub per_class: Vec<ClassStats>,
}

impl MetricReport {
    /// Multi-line human-readable table.
    pub fn render(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        let mut line = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.push_str(&format!("{k} {v:.4}\n"));
            }
        };
        line("accuracy", self.accuracy);
        line("precision", self.precision);
        line("recall", self.recall);
        line("f1", self.f1);
        line("pearson_r", self.pearson_r);
        line("mape", self.mape);
        for c in &self.per_class {
            out.push_str(&format!(
                "class {} support {} precision {:.4} recall {:.4} f1 {:.4}\n",
                c.class, c.support, c.precision, c.recall, c.f1
            ));
        }
        out
    }

    /// Single-line machine-readable record.
    pub fn record(&self) -> String {
        let mut parts = vec![format!("n={}", self.n)];
        let mut push = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                parts.push(format!("{k}={v:.6}"));
            }
        };
        push("acc", self.accuracy);
        push("prec", self.precision);
        push("recall", self.recall);
        push("f1", self.f1);
        push("r", self.pearson_r);
        push("mape", self.mape);
        parts.join(" ")
    }
}

/// Accuracy plus per-class precision/recall/F1 and their macro averages.
/// Classes absent from the ground truth contribute no per-class row and do
/// not dilute the macro averages.
pub fn classification_metrics(pred: &[usize], truth: &[usize], classes: usize) -> MetricReport {
    assert_eq!(pred.len(), truth.len());
    assert!(!truth.is_empty(), "empty evaluation set");
    assert!(pred.iter().chain(truth).all(|&c| c < classes), "label out of range");
    let n = truth.len();
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fnc = vec![0usize; classes];
    for (&p, &y) in pred.iter().zip(truth) {
        if p == y {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fnc[y] += 1;
        }
    }
    let mut per_class = Vec::new();
    for c in 0..classes {
        let support = tp[c] + fnc[c];
        if support == 0 {
            continue;
        }
        let precision = safe_div(tp[c] as f64, (tp[c] + fp[c]) as f64);
        let recall = tp[c] as f64 / support as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassStats { class: c, support, precision, recall, f1 });
    }
    let k = per_class.len() as f64;
    let correct = tp.iter().sum::<usize>();
    MetricReport {
        n,
        accuracy: Some(correct as f64 / n as f64),
        precision: Some(per_class.iter().map(|c| c.precision).sum::<f64>() / k),
        recall: Some(per_class.iter().map(|c| c.recall).sum::<f64>() / k),
        f1: Some(per_class.iter().map(|c| c.f1).sum::<f64>() / k),
        pearson_r: None,
        mape: None,
        per_class,
    }
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

const MAPE_FLOOR: f64 = 1e-9;

/// Pearson correlation and MAPE over (prediction, truth) pairs. Degenerate
/// inputs (either side constant) correlate at 1 when the pairs are exactly
/// equal and 0 otherwise; MAPE skips truths below `1e-9` in magnitude.
pub fn regression_metrics(pairs: &[(f64, f64)]) -> MetricReport {
    assert!(!pairs.is_empty(), "empty evaluation set");
    let n = pairs.len() as f64;
    let (mp, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(p, y)| (a + p / n, b + y / n));
    let mut cov = 0.0;
    let mut vp = 0.0;
    let mut vy = 0.0;
    for &(p, y) in pairs {
        cov += (p - mp) * (y - my);
        vp += (p - mp) * (p - mp);
        vy += (y - my) * (y - my);
    }
    let denom = (vp * vy).sqrt();
    let pearson_r = if denom > 1e-24 {
        (cov / denom).clamp(-1.0, 1.0)
    } else if pairs.iter().all(|&(p, y)| p == y) {
        1.0
    } else {
        0.0
    };
    let mut ape = 0.0;
    let mut counted = 0usize;
    for &(p, y) in pairs {
        if y.abs() > MAPE_FLOOR {
            ape += (p - y).abs() / y.abs();
            counted += 1;
        }
    }
    MetricReport {
        n: pairs.len(),
        pearson_r: Some(pearson_r),
        mape: (counted > 0).then(|| ape / counted as f64),
        ..MetricReport::default()
    }
}

// ---------------------------------------------------------------------
// Circuit embeddings.

/// Whole-circuit embedding: the component-wise sum of its cones' summary
/// vectors. `None` on an empty cone set.
pub fn circuit_embedding(cone_cls: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = cone_cls.first()?;
    let mut sum = vec![0.0; first.len()];
    for v in cone_cls {
        assert_eq!(v.len(), sum.len(), "mixed embedding widths");
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    Some(sum)
}

/// Per-node embedding matrix and summary vector for one graph. With
/// `text: None` the text half of every node feature is zeroed — the
/// ablation used to measure what the expression text contributes.
pub fn node_embeddings(
    g: &TagGraph,
    text: Option<&TextEncoderParams>,
    graph: &GraphEncoderParams,
) -> (Matrix, Vec<f64>) {
    let d = graph.cfg.embed_dim;
    let rows: Vec<Vec<f64>> = match text {
        Some(p) => {
            let tk = Tokenizer::new(p.cfg.vocab, p.cfg.max_tokens);
            let texts: Vec<String> = g.nodes.iter().map(|n| n.text.clone()).collect();
            encode_texts_frozen(p, &tk, &texts)
        }
        None => vec![vec![0.0; d]; g.nodes.len()],
    };
    let mut t = Tape::new();
    let gb = graph.bind(&mut t);
    let feats = node_feats(&mut t, &rows, &phys_matrix(g), &[], None, d);
    let out = gb.encode(&mut t, feats);
    (t.value(out.nodes).clone(), t.value(out.cls).data.clone())
}

/// Embed a whole sequential circuit: chunk into register cones, embed each
/// cone's graph, and sum the summaries. `None` when chunking yields nothing.
pub fn embed_circuit(
    n: &Netlist,
    lib: &CellLibrary,
    k: usize,
    vocab: &GateTypeVocab,
    stats: &PhysStats,
    text: Option<&TextEncoderParams>,
    graph: &GraphEncoderParams,
) -> Option<Vec<f64>> {
    let cones = chunk(n, lib);
    let cls: Vec<Vec<f64>> = cones
        .cones()
        .iter()
        .map(|c| {
            let g = build_tag(&c.subnetlist, lib, k, vocab, stats)
                .expect("cone graphs build from validated netlists");
            node_embeddings(&g, text, graph).1
        })
        .collect();
    circuit_embedding(&cls)
}

// ---------------------------------------------------------------------
// Datasets and the fine-tuning head.

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class(usize),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskItem {
    pub features: Vec<f64>,
    pub label: Label,
    /// Source circuit index; splits never separate items of one group.
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub name: String,
    /// `Some(k)` for k-way classification, `None` for regression.
    pub classes: Option<usize>,
    pub items: Vec<TaskItem>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskError {
    #[error("training split holds a single class")]
    SingleClass,
    #[error("dataset `{0}` was not split")]
    NoSplit(String),
    #[error("item {item} carries a label outside the declared range")]
    BadLabel { item: usize },
    #[error("need at least two groups for a grouped split, found {0}")]
    TooFewGroups(usize),
}

impl TaskDataset {
    pub fn new(name: impl Into<String>, classes: Option<usize>, items: Vec<TaskItem>) -> Self {
        TaskDataset { name: name.into(), classes, items, train: Vec::new(), test: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        for (i, item) in self.items.iter().enumerate() {
            let ok = match (&item.label, self.classes) {
                (Label::Class(c), Some(k)) => *c < k,
                (Label::Value(v), None) => v.is_finite(),
                _ => false,
            };
            if !ok {
                return Err(TaskError::BadLabel { item: i });
            }
        }
        Ok(())
    }

    /// Split by group so no circuit contributes to both sides. At least
    /// one group lands in each split.
    pub fn assign_splits(&mut self, test_fraction: f64, seed: u64) -> Result<(), TaskError> {
        assert!(test_fraction > 0.0 && test_fraction < 1.0);
        let mut groups: Vec<usize> =
            self.items.iter().map(|i| i.group).collect::<BTreeSet<_>>().into_iter().collect();
        if groups.len() < 2 {
            return Err(TaskError::TooFewGroups(groups.len()));
        }
        groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((groups.len() as f64 * test_fraction).round() as usize)
            .clamp(1, groups.len() - 1);
        let test_groups: BTreeSet<usize> = groups[..n_test].iter().copied().collect();
        self.train.clear();
        self.test.clear();
        for (i, item) in self.items.iter().enumerate() {
            if test_groups.contains(&item.group) {
                self.test.push(i);
            } else {
                self.train.push(i);
            }
        }
        Ok(())
    }

    fn features(&self, idx: &[usize]) -> Matrix {
        let dim = self.items[0].features.len();
        let mut m = Matrix::zeros(idx.len(), dim);
        for (r, &i) in idx.iter().enumerate() {
            m.row_mut(r).copy_from_slice(&self.items[i].features);
        }
        m
    }
}

/// Fraction of test items matching the most common training label —
/// the floor any useful classifier has to beat.
pub fn majority_class_baseline(ds: &TaskDataset) -> f64 {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &i in &ds.train {
        if let Label::Class(c) = ds.items[i].label {
            *counts.entry(c).or_default() += 1;
        }
    }
    let majority = counts
        .into_iter()
        .max_by_key(|&(c, n)| (n, std::cmp::Reverse(c)))
        .map(|(c, _)| c)
        .expect("non-empty training split");
    let hits = ds
        .test
        .iter()
        .filter(|&&i| ds.items[i].label == Label::Class(majority))
        .count();
    hits as f64 / ds.test.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneCfg {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub test_fraction: f64,
}

impl Default for FinetuneCfg {
    fn default() -> Self {
        FinetuneCfg { hidden: 32, lr: 1e-2, epochs: 80, batch: 32, seed: 0, test_fraction: 0.25 }
    }
}

/// 3-layer MLP head trained on frozen embeddings.
#[derive(Debug, Clone)]
pub struct MlpHead {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub w3: Matrix,
    pub b3: Matrix,
}

impl MlpHead {
    fn init(inputs: usize, hidden: usize, outputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpHead {
            w1: Matrix::glorot(inputs, hidden, &mut rng),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::glorot(hidden, hidden, &mut rng),
            b2: Matrix::zeros(1, hidden),
            w3: Matrix::glorot(hidden, outputs, &mut rng),
            b3: Matrix::zeros(1, outputs),
        }
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("head.w1", &self.w1),
            ("head.b1", &self.b1),
            ("head.w2", &self.w2),
            ("head.b2", &self.b2),
            ("head.w3", &self.w3),
            ("head.b3", &self.b3),
        ]
    }

    fn bind(&self, t: &mut Tape) -> [NodeId; 6] {
        [
            t.leaf(self.w1.clone()),
            t.leaf(self.b1.clone()),
            t.leaf(self.w2.clone()),
            t.leaf(self.b2.clone()),
            t.leaf(self.w3.clone()),
            t.leaf(self.b3.clone()),
        ]
    }

    fn forward(t: &mut Tape, ids: &[NodeId; 6], x: NodeId) -> NodeId {
        let h = t.matmul(x, ids[0]);
        let h = t.add_row_bias(h, ids[1]);
        let h = t.relu(h);
        let h = t.matmul(h, ids[2]);
        let h = t.add_row_bias(h, ids[3]);
        let h = t.relu(h);
        let h = t.matmul(h, ids[4]);
        t.add_row_bias(h, ids[5])
    }

    fn apply(&mut self, ids: &[NodeId; 6], grads: &mut crate::encoder::Grads, opt: &mut crate::encoder::Adam) {
        let names = ["head.w1", "head.b1", "head.w2", "head.b2", "head.w3", "head.b3"];
        let params: [&mut Matrix; 6] =
            [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3, &mut self.b3];
        for ((name, id), param) in names.into_iter().zip(ids).zip(params) {
            if let Some(g) = grads.take(*id) {
                opt.update(name, param, &g);
            }
        }
    }

    /// Raw head outputs for a feature matrix (logits or predictions).
    pub fn outputs(&self, feats: &Matrix) -> Matrix {
        let mut t = Tape::new();
        let ids = self.bind(&mut t);
        let x = t.leaf(feats.clone());
        let out = Self::forward(&mut t, &ids, x);
        t.value(out).clone()
    }
}

/// Train an MLP head on the dataset's training split and score the test
/// split. The backbone embeddings in `items` stay untouched.
pub fn finetune(ds: &TaskDataset, cfg: &FinetuneCfg) -> Result<(MlpHead, MetricReport), TaskError> {
    ds.validate()?;
    if ds.train.is_empty() || ds.test.is_empty() {
        return Err(TaskError::NoSplit(ds.name.clone()));
    }
    let outputs = match ds.classes {
        Some(k) => {
            let seen: BTreeSet<usize> = ds
                .train
                .iter()
                .filter_map(|&i| match ds.items[i].label {
                    Label::Class(c) => Some(c),
                    Label::Value(_) => None,
                })
                .collect();
            if seen.len() < 2 {
                return Err(TaskError::SingleClass);
            }
            k
        }
        None => 1,
    };
    let dim = ds.items[0].features.len();
    let mut head = MlpHead::init(dim, cfg.hidden, outputs, fnv1a64(ds.name.as_bytes()) ^ cfg.seed);
    let mut opt = crate::encoder::Adam::new(cfg.lr);
    let mut order = ds.train.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            let mut t = Tape::new();
            let ids = head.bind(&mut t);
            let x = t.leaf(ds.features(batch));
            let out = MlpHead::forward(&mut t, &ids, x);
            let loss = match ds.classes {
                Some(_) => {
                    let labels: Vec<usize> = batch
                        .iter()
                        .map(|&i| match ds.items[i].label {
                            Label::Class(c) => c,
                            Label::Value(_) => unreachable!("validated as classification"),
                        })
                        .collect();
                    masked_gate_loss(&mut t, out, &labels)
                }
                None => {
                    let targets = Matrix {
                        rows: batch.len(),
                        cols: 1,
                        data: batch
                            .iter()
                            .map(|&i| match ds.items[i].label {
                                Label::Value(v) => v,
                                Label::Class(_) => unreachable!("validated as regression"),
                            })
                            .collect(),
                    };
                    size_loss(&mut t, out, &targets, true)
                }
            };
            let mut grads = t.backward(loss);
            opt.begin_step();
            head.apply(&ids, &mut grads, &mut opt);
        }
    }
    let report = score(ds, &head, &ds.test);
    Ok((head, report))
}

/// Score a trained head on an index subset of the dataset.
pub fn score(ds: &TaskDataset, head: &MlpHead, idx: &[usize]) -> MetricReport {
    let out = head.outputs(&ds.features(idx));
    match ds.classes {
        Some(k) => {
            let pred: Vec<usize> = (0..idx.len())
                .map(|r| {
                    let row = out.row(r);
                    (0..row.len())
                        .max_by(|&a, &b| row[a].partial_cmp(&row[b]).expect("finite logits"))
                        .expect("non-empty logits")
                })
                .collect();
            let truth: Vec<usize> = idx
                .iter()
                .map(|&i| match ds.items[i].label {
                    Label::Class(c) => c,
                    Label::Value(_) => unreachable!("classification dataset"),
                })
                .collect();
            classification_metrics(&pred, &truth, k)
        }
        None => {
            let pairs: Vec<(f64, f64)> = idx
                .iter()
                .enumerate()
                .map(|(r, &i)| match ds.items[i].label {
                    Label::Value(v) => (out.get(r, 0), v),
                    Label::Class(_) => unreachable!("regression dataset"),
                })
                .collect();
            regression_metrics(&pairs)
        }
    }
}

// ---------------------------------------------------------------------
// Toy task generators.

pub const GATE_FN_CLASSES: [&str; 4] = ["adder", "multiplier", "comparator", "mux"];
pub const REG_ROLE_CLASSES: [&str; 2] = ["state", "data"];

/// A combinational circuit assembled from labeled functional blocks.
#[derive(Debug, Clone)]
pub struct GateFnCircuit {
    pub netlist: Netlist,
    /// Instance name → index into [`GATE_FN_CLASSES`].
    pub labels: BTreeMap<String, usize>,
}

/// A sequential circuit whose registers all play one role.
#[derive(Debug, Clone)]
pub struct RegRoleCircuit {
    pub netlist: Netlist,
    /// Index into [`REG_ROLE_CLASSES`].
    pub role: usize,
}

#[derive(Debug, Clone)]
pub struct ToyTasks {
    pub gate_fn: Vec<GateFnCircuit>,
    pub reg_role: Vec<RegRoleCircuit>,
    pub size: Vec<Netlist>,
}

/// Gate-level builder over the shared NAND2/NOR2/INV palette, tracking a
/// block label per emitted instance.
struct BlockBuilder {
    b: NetlistBuilder,
    labels: BTreeMap<String, usize>,
    counter: usize,
}

impl BlockBuilder {
    fn new(name: &str) -> Self {
        BlockBuilder { b: NetlistBuilder::new(name), labels: BTreeMap::new(), counter: 0 }
    }

    fn emit(&mut self, class: usize, cell: &str, ins: &[usize]) -> usize {
        let name = format!("g{}", self.counter);
        self.counter += 1;
        let out = self.b.fresh_wire("w");
        self.b.add_gate(&name, cell, ins, out).expect("generated gates are well-formed");
        self.labels.insert(name, class);
        out
    }

    fn inv(&mut self, c: usize, x: usize) -> usize {
        self.emit(c, "INV", &[x])
    }
    fn nand(&mut self, c: usize, x: usize, y: usize) -> usize {
        self.emit(c, "NAND2", &[x, y])
    }
    fn nor(&mut self, c: usize, x: usize, y: usize) -> usize {
        self.emit(c, "NOR2", &[x, y])
    }
    fn and(&mut self, c: usize, x: usize, y: usize) -> usize {
        let t = self.nand(c, x, y);
        self.inv(c, t)
    }
    fn or(&mut self, c: usize, x: usize, y: usize) -> usize {
        let t = self.nor(c, x, y);
        self.inv(c, t)
    }
    fn xor(&mut self, c: usize, x: usize, y: usize) -> usize {
        let t = self.nand(c, x, y);
        let u = self.nand(c, x, t);
        let v = self.nand(c, y, t);
        self.nand(c, u, v)
    }
    fn xnor(&mut self, c: usize, x: usize, y: usize) -> usize {
        let t = self.xor(c, x, y);
        self.inv(c, t)
    }
    /// a·!s + b·s
    fn mux(&mut self, c: usize, a: usize, b: usize, s: usize) -> usize {
        let ns = self.inv(c, s);
        let t = self.nand(c, a, ns);
        let u = self.nand(c, b, s);
        self.nand(c, t, u)
    }
    /// Majority of three — a ripple carry.
    fn maj(&mut self, c: usize, x: usize, y: usize, z: usize) -> usize {
        let t1 = self.nand(c, x, y);
        let t2 = self.nand(c, x, z);
        let t3 = self.nand(c, y, z);
        let u = self.and(c, t1, t2);
        self.nand(c, u, t3)
    }

    /// Route `net` to a fresh primary output via a labeled buffer pair, so
    /// block outputs stay inside the palette.
    fn expose(&mut self, class: usize, net: usize, po: &str) {
        let inv = self.inv(class, net);
        let name = format!("g{}", self.counter);
        self.counter += 1;
        let out = self.b.add_output(po).expect("fresh output name");
        self.b.add_gate(&name, "INV", &[inv], out).expect("generated gates are well-formed");
        self.labels.insert(name, class);
    }
}

const ADDER: usize = 0;
const MULTIPLIER: usize = 1;
const COMPARATOR: usize = 2;
const MUX: usize = 3;

/// One combinational circuit holding all four block kinds side by side on
/// shared inputs. Width and per-block wiring vary with the seed.
pub fn gate_fn_circuit(lib: &CellLibrary, seed: u64, index: usize) -> GateFnCircuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(format!("gatefn{index}").as_bytes()));
    let w = rng.gen_range(2..=3usize);
    let mut bb = BlockBuilder::new(&format!("gatefn_{index}"));
    let a: Vec<usize> =
        (0..w).map(|i| bb.b.add_input(&format!("a{i}")).expect("fresh input")).collect();
    let b: Vec<usize> =
        (0..w).map(|i| bb.b.add_input(&format!("b{i}")).expect("fresh input")).collect();
    let cin = bb.b.add_input("cin").expect("fresh input");
    let s0 = bb.b.add_input("s0").expect("fresh input");
    let s1 = bb.b.add_input("s1").expect("fresh input");

    // adder: ripple-carry, optionally subtracting (inverted b operand)
    let subtract = rng.gen_bool(0.5);
    let mut carry = cin;
    for i in 0..w {
        let rhs = if subtract { bb.inv(ADDER, b[i]) } else { b[i] };
        let half = bb.xor(ADDER, a[i], rhs);
        let sum = bb.xor(ADDER, half, carry);
        let next = bb.maj(ADDER, a[i], rhs, carry);
        bb.expose(ADDER, sum, &format!("add_s{i}"));
        carry = next;
    }
    bb.expose(ADDER, carry, "add_c");

    // multiplier: 2×2 array over the low operand bits
    let pp: Vec<Vec<usize>> = (0..2)
        .map(|i| (0..2).map(|j| bb.and(MULTIPLIER, a[i], b[j])).collect())
        .collect();
    let p1 = bb.xor(MULTIPLIER, pp[0][1], pp[1][0]);
    let c1 = bb.and(MULTIPLIER, pp[0][1], pp[1][0]);
    let p2 = bb.xor(MULTIPLIER, pp[1][1], c1);
    let p3 = bb.and(MULTIPLIER, pp[1][1], c1);
    bb.expose(MULTIPLIER, pp[0][0], "mul_p0");
    bb.expose(MULTIPLIER, p1, "mul_p1");
    bb.expose(MULTIPLIER, p2, "mul_p2");
    bb.expose(MULTIPLIER, p3, "mul_p3");

    // comparator: bitwise equality chain plus ordered comparison
    let flip = rng.gen_bool(0.5); // compare a>b or a<b
    let mut eq = bb.xnor(COMPARATOR, a[0], b[0]);
    for i in 1..w {
        let e = bb.xnor(COMPARATOR, a[i], b[i]);
        eq = bb.and(COMPARATOR, eq, e);
    }
    let mut gt = {
        let (x, y) = if flip { (b[0], a[0]) } else { (a[0], b[0]) };
        let nb = bb.inv(COMPARATOR, y);
        bb.and(COMPARATOR, x, nb)
    };
    for i in 1..w {
        let (x, y) = if flip { (b[i], a[i]) } else { (a[i], b[i]) };
        let nb = bb.inv(COMPARATOR, y);
        let here = bb.and(COMPARATOR, x, nb);
        let e = bb.xnor(COMPARATOR, x, y);
        let lower = bb.and(COMPARATOR, e, gt);
        gt = bb.or(COMPARATOR, here, lower);
    }
    bb.expose(COMPARATOR, eq, "cmp_eq");
    bb.expose(COMPARATOR, gt, "cmp_gt");

    // mux: 4:1 selector tree over a/b bits
    let lanes = [a[0], b[0], a[w - 1], b[w - 1]];
    let lo = bb.mux(MUX, lanes[0], lanes[1], s0);
    let hi = bb.mux(MUX, lanes[2], lanes[3], s0);
    let y = bb.mux(MUX, lo, hi, s1);
    bb.expose(MUX, y, "mux_y");

    let netlist = bb.b.finish(lib).expect("generated circuits validate");
    GateFnCircuit { netlist, labels: bb.labels }
}

/// Toggle-style state machine: every register's next state mixes its own
/// value back in, so each cone sees its register on the frontier.
pub fn fsm_circuit(lib: &CellLibrary, seed: u64, index: usize) -> RegRoleCircuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(format!("fsm{index}").as_bytes()));
    let k = rng.gen_range(2..=4usize);
    let mut b = NetlistBuilder::new(&format!("fsm_{index}"));
    let in0 = b.add_input("in0").expect("fresh input");
    let in1 = b.add_input("in1").expect("fresh input");
    let q: Vec<usize> = (0..k).map(|_| b.fresh_wire("q")).collect();
    let mut counter = 0;
    let mut emit = |b: &mut NetlistBuilder, cell: &str, ins: &[usize]| {
        let name = format!("g{counter}");
        counter += 1;
        let out = b.fresh_wire("w");
        b.add_gate(&name, cell, ins, out).expect("generated gates are well-formed");
        out
    };
    for i in 0..k {
        // enable = f(other state, inputs); next = q_i ^ enable
        let peer = q[(i + 1) % k];
        let pick = if rng.gen_bool(0.5) { in0 } else { in1 };
        let t = emit(&mut b, "NAND2", &[peer, pick]);
        let en = if rng.gen_bool(0.5) {
            emit(&mut b, "INV", &[t])
        } else {
            emit(&mut b, "NOR2", &[t, in1])
        };
        let d = emit(&mut b, "XOR2", &[q[i], en]);
        b.add_gate(&format!("r{i}"), "DFF", &[d], q[i]).expect("register wiring is valid");
    }
    let out = b.add_output("out").expect("fresh output");
    let t = emit(&mut b, "NAND2", &[q[0], q[1]]);
    b.add_gate("gout", "INV", &[t], out).expect("generated gates are well-formed");
    RegRoleCircuit { netlist: b.finish(lib).expect("generated circuits validate"), role: 0 }
}

/// Feed-forward pipeline: stage `s+1` registers read only stage `s`
/// values, so no cone's frontier mentions its own register.
pub fn pipeline_circuit(lib: &CellLibrary, seed: u64, index: usize) -> RegRoleCircuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(format!("pipe{index}").as_bytes()));
    let stages = rng.gen_range(2..=3usize);
    let width = rng.gen_range(2..=3usize);
    let mut b = NetlistBuilder::new(&format!("pipe_{index}"));
    let mut prev: Vec<usize> = (0..width + 1)
        .map(|i| b.add_input(&format!("x{i}")).expect("fresh input"))
        .collect();
    let mut counter = 0;
    let mut emit = |b: &mut NetlistBuilder, cell: &str, ins: &[usize]| {
        let name = format!("g{counter}");
        counter += 1;
        let out = b.fresh_wire("w");
        b.add_gate(&name, cell, ins, out).expect("generated gates are well-formed");
        out
    };
    let mut reg = 0;
    for _ in 0..stages {
        let mut next = Vec::with_capacity(width);
        for j in 0..width {
            let x = prev[j % prev.len()];
            let y = prev[(j + 1) % prev.len()];
            let d = match rng.gen_range(0..3) {
                0 => emit(&mut b, "XOR2", &[x, y]),
                1 => {
                    let t = emit(&mut b, "NAND2", &[x, y]);
                    emit(&mut b, "INV", &[t])
                }
                _ => emit(&mut b, "NOR2", &[x, y]),
            };
            let q = b.fresh_wire("q");
            b.add_gate(&format!("r{reg}"), "DFF", &[d], q).expect("register wiring is valid");
            reg += 1;
            next.push(q);
        }
        prev = next;
    }
    let out = b.add_output("out").expect("fresh output");
    let t = emit(&mut b, "NAND2", &[prev[0], prev[prev.len() - 1]]);
    b.add_gate("gout", "INV", &[t], out).expect("generated gates are well-formed");
    RegRoleCircuit { netlist: b.finish(lib).expect("generated circuits validate"), role: 1 }
}

/// All three toy corpora at fixed sizes, deterministic in the seed.
pub fn gen_toy_tasks(lib: &CellLibrary, seed: u64) -> ToyTasks {
    let gate_fn = (0..16).map(|i| gate_fn_circuit(lib, seed, i)).collect();
    let mut reg_role: Vec<RegRoleCircuit> = Vec::new();
    for i in 0..8 {
        reg_role.push(fsm_circuit(lib, seed, i));
        reg_role.push(pipeline_circuit(lib, seed, i));
    }
    let size = (0..12)
        .map(|i| {
            random_netlist(
                lib,
                &RandomNetlistCfg {
                    seed: seed ^ fnv1a64(format!("size{i}").as_bytes()),
                    num_inputs: 4,
                    num_outputs: 2,
                    comb_gates: 16 + 9 * i,
                    registers: 2 + i % 4,
                },
            )
        })
        .collect();
    ToyTasks { gate_fn, reg_role, size }
}

// ---------------------------------------------------------------------
// Cone-level regression targets.

/// Synthetic area: the sum of cell areas over the cone's gates (the
/// bounding registers are frontier sources, not members).
pub fn cone_area(c: &RegisterCone, lib: &CellLibrary) -> f64 {
    c.subnetlist
        .gates()
        .iter()
        .map(|g| lib.get(&g.cell).expect("validated against this library").phys.area)
        .sum()
}

/// Critical-path proxy: the largest delay-weighted path through the cone's
/// combinational gates, ending at the cone output.
pub fn cone_path_delay(c: &RegisterCone, lib: &CellLibrary) -> f64 {
    let n = &c.subnetlist;
    let mut at = vec![0.0f64; n.nets().len()];
    for gid in topo_order(n) {
        let g = n.gate(gid);
        if g.kind != CellKind::Combinational {
            continue; // register outputs launch new paths
        }
        let delay = lib.get(&g.cell).expect("validated against this library").phys.delay;
        let arrive = g
            .input_nets
            .iter()
            .map(|&net| at[net])
            .fold(0.0f64, f64::max)
            + delay;
        at[g.output_net] = arrive;
    }
    at[c.root_net]
}

// ---------------------------------------------------------------------
// Dataset assembly from trained encoders.

/// Per-gate classification items from whole-circuit graphs. Node order in
/// a graph follows gate order in its netlist, which keys the label lookup.
pub fn gate_fn_dataset(
    circuits: &[GateFnCircuit],
    lib: &CellLibrary,
    k: usize,
    vocab: &GateTypeVocab,
    stats: &PhysStats,
    text: Option<&TextEncoderParams>,
    graph: &GraphEncoderParams,
) -> TaskDataset {
    let per_circuit = ordered_map(circuits, |gi, c| {
        let g = build_tag(&c.netlist, lib, k, vocab, stats).expect("generated circuits build");
        let (nodes, _) = node_embeddings(&g, text, graph);
        let mut items = Vec::new();
        for (i, gate) in c.netlist.gates().iter().enumerate() {
            if let Some(&class) = c.labels.get(&gate.instance_name) {
                items.push(TaskItem {
                    features: nodes.row(i).to_vec(),
                    label: Label::Class(class),
                    group: gi,
                });
            }
        }
        items
    });
    let name = if text.is_some() { "gate-fn" } else { "gate-fn-phys-only" };
    TaskDataset::new(name, Some(GATE_FN_CLASSES.len()), per_circuit.concat())
}

/// Per-register-cone classification items: state-machine vs. pipeline role.
pub fn reg_role_dataset(
    circuits: &[RegRoleCircuit],
    lib: &CellLibrary,
    k: usize,
    vocab: &GateTypeVocab,
    stats: &PhysStats,
    text: Option<&TextEncoderParams>,
    graph: &GraphEncoderParams,
) -> TaskDataset {
    let per_circuit = ordered_map(circuits, |gi, c| {
        let mut items = Vec::new();
        for cone in chunk(&c.netlist, lib).cones() {
            if !matches!(cone.root, ConeRoot::Register(_)) {
                continue;
            }
            let g = build_tag(&cone.subnetlist, lib, k, vocab, stats)
                .expect("generated circuits build");
            let (_, cls) = node_embeddings(&g, text, graph);
            items.push(TaskItem { features: cls, label: Label::Class(c.role), group: gi });
        }
        items
    });
    TaskDataset::new("reg-role", Some(REG_ROLE_CLASSES.len()), per_circuit.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeTarget {
    Area,
    PathDelay,
}

/// Per-cone regression items against a synthetic physical target.
pub fn size_dataset(
    circuits: &[Netlist],
    lib: &CellLibrary,
    k: usize,
    vocab: &GateTypeVocab,
    stats: &PhysStats,
    text: Option<&TextEncoderParams>,
    graph: &GraphEncoderParams,
    target: SizeTarget,
) -> TaskDataset {
    let per_circuit = ordered_map(circuits, |gi, n| {
        let mut items = Vec::new();
        for cone in chunk(n, lib).cones() {
            if cone.subnetlist.num_comb_gates() == 0 {
                continue;
            }
            let g = build_tag(&cone.subnetlist, lib, k, vocab, stats)
                .expect("generated circuits build");
            let (_, cls) = node_embeddings(&g, text, graph);
            let value = match target {
                SizeTarget::Area => cone_area(cone, lib),
                SizeTarget::PathDelay => cone_path_delay(cone, lib),
            };
            items.push(TaskItem { features: cls, label: Label::Value(value), group: gi });
        }
        items
    });
    let name = match target {
        SizeTarget::Area => "size-area",
        SizeTarget::PathDelay => "size-delay",
    };
    TaskDataset::new(name, None, per_circuit.concat())
}
