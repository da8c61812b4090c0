//! One function per subcommand.

use crate::config::RunConfig;
use crate::rundir::RunDir;
use crate::{CliError, TaskName};
use gatetag::cone::{chunk as chunk_netlist, manifest, ConeSet};
use gatetag::downstream::{
    finetune as finetune_head, gate_fn_dataset, gen_toy_tasks, reg_role_dataset, size_dataset,
    FinetuneCfg, MetricReport, MlpHead, SizeTarget, TaskDataset,
};
use gatetag::encoder::{
    checkpoint_bytes, parse_checkpoint, restore, split_tokens, EncoderCfg, GradCheckReport,
    GraphEncoderParams, Heads, Matrix, Tape, TextEncoderParams, GRAD_CHECK_TOL,
};
use gatetag::expr::{
    equivalent, parse_expr, random_expr, rewrite_equiv, to_text,
};
use gatetag::netlist::{
    demo_library, describe, emit_netlist, netlists_equivalent, parse_netlist, random_netlist,
    CellKind, CellLibrary, Netlist, RandomNetlistCfg,
};
use gatetag::par::ordered_map;
use gatetag::pretrain::{
    build_expr_pairs, build_step2_corpus, embed_graph, gradcheck_losses, info_nce,
    masked_gate_loss, size_loss, train_step1, train_step2,
};
use gatetag::tag::{
    augment_netlist as rewire_netlist, build_tag, corpus_stats, deserialize_corpus,
    serialize_corpus, GateTypeVocab, PhysStats, TagGraph,
};
use gatetag::util::fmt_f64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn load_netlist(path: &Path, lib: &CellLibrary) -> Result<Netlist, CliError> {
    let text = read_input(path)?;
    parse_netlist(&text, lib)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_netlists(paths: &[PathBuf], lib: &CellLibrary) -> Result<Vec<Netlist>, CliError> {
    paths.iter().map(|p| load_netlist(p, lib)).collect()
}

/// Open the run directory and snapshot the resolved configuration into it.
fn open_run(rc: &RunConfig) -> Result<RunDir, CliError> {
    let mut rd = RunDir::open(&rc.run.out)?;
    rd.write("config.toml", rc.snapshot().as_bytes())?;
    Ok(rd)
}

pub fn parse(paths: &[PathBuf], lib: &CellLibrary) -> Result<(), CliError> {
    for p in paths {
        let n = load_netlist(p, lib)?;
        println!("{}", describe(&n));
    }
    Ok(())
}

pub fn chunk(paths: &[PathBuf], lib: &CellLibrary) -> Result<(), CliError> {
    for p in paths {
        let n = load_netlist(p, lib)?;
        let set = chunk_netlist(&n, lib);
        print!("{}", manifest(&set));
        let c = set.coverage();
        println!(
            "coverage circuit={} covered={}/{} register_fanin={} members_total={}",
            set.circuit(),
            c.covered,
            c.comb_total,
            c.register_fanin,
            c.total_members
        );
    }
    Ok(())
}

pub fn expr(
    path: &Path,
    gate: Option<&str>,
    rc: &RunConfig,
    lib: &CellLibrary,
) -> Result<(), CliError> {
    let n = load_netlist(path, lib)?;
    let ids = match gate {
        Some(name) => {
            let id = n.gate_by_name(name).ok_or_else(|| {
                CliError::Data(format!("{}: no gate named {name}", path.display()))
            })?;
            if n.gate(id).kind == CellKind::Register {
                return Err(CliError::Data(format!(
                    "{name} is a register; expressions are extracted for combinational gates"
                )));
            }
            vec![id]
        }
        None => n
            .gates()
            .iter()
            .filter(|g| g.kind == CellKind::Combinational)
            .map(|g| g.id)
            .collect(),
    };
    for id in ids {
        let e = gatetag::expr::expr_of_gate(&n, lib, id, rc.run.k)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        println!("{} = {}", n.gate(id).instance_name, to_text(&e));
    }
    Ok(())
}

pub fn augment(
    paths: &[PathBuf],
    count: usize,
    rc: &RunConfig,
    lib: &CellLibrary,
) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Config("--count must be at least 1".to_string()));
    }
    let netlists = load_netlists(paths, lib)?;
    let mut rd = open_run(rc)?;
    let variants: Vec<(String, String)> = netlists
        .iter()
        .flat_map(|n| (0..count).map(move |v| (n, v)))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(n, v)| {
            let seed = rc.subseed(&format!("augment:{}:{v}", n.name()));
            let a = rewire_netlist(n, lib, seed);
            (format!("augment/{}_v{v}.net", n.name()), emit_netlist(&a, lib))
        })
        .collect();
    for (rel, text) in &variants {
        rd.write(rel, text.as_bytes())?;
    }
    rd.finish()?;
    println!("augment: wrote {} variants of {} circuits", variants.len(), netlists.len());
    Ok(())
}

/// Every non-empty cone subnetlist of every circuit, chunking order.
fn cone_subnetlists(netlists: &[Netlist], lib: &CellLibrary) -> Vec<(String, String, Netlist)> {
    let mut subs = Vec::new();
    for n in netlists {
        let set: ConeSet = chunk_netlist(n, lib);
        for cone in set.cones() {
            if cone.subnetlist.gates().is_empty() {
                continue;
            }
            subs.push((set.circuit().to_string(), cone.root_name.clone(), cone.subnetlist.clone()));
        }
    }
    subs
}

pub fn tag(paths: &[PathBuf], rc: &RunConfig, lib: &CellLibrary) -> Result<(), CliError> {
    let netlists = load_netlists(paths, lib)?;
    let vocab = GateTypeVocab::from_library(lib);
    let stats = PhysStats::fit_netlists(netlists.iter(), lib);
    let subs = cone_subnetlists(&netlists, lib);
    if subs.is_empty() {
        return Err(CliError::Data("no non-empty cones in the inputs".to_string()));
    }
    let graphs: Vec<TagGraph> = ordered_map(&subs, |_, (_, _, sub)| {
        build_tag(sub, lib, rc.run.k, &vocab, &stats).expect("validated netlists build")
    });
    let mut rd = open_run(rc)?;
    rd.write("corpus.tag", serialize_corpus(&graphs).as_bytes())?;
    rd.finish()?;
    println!("tag: {} graphs from {} circuits", graphs.len(), netlists.len());
    Ok(())
}

pub fn stats(corpus: &Path) -> Result<(), CliError> {
    let text = read_input(corpus)?;
    let graphs = deserialize_corpus(&text, None)
        .map_err(|e| CliError::Data(format!("{}: {e}", corpus.display())))?;
    let s = corpus_stats(&graphs, &|t| split_tokens(t).len());
    print!("{}", s.report());
    Ok(())
}

fn curve_tsv(names: &[&str], columns: &[&[f64]]) -> String {
    let mut out = format!("step\t{}\n", names.join("\t"));
    for step in 0..columns[0].len() {
        let row: Vec<String> = columns.iter().map(|c| fmt_f64(c[step])).collect();
        out.push_str(&format!("{step}\t{}\n", row.join("\t")));
    }
    out
}

fn load_ckpt(
    rd: &RunDir,
    rel: &str,
    hint: &str,
) -> Result<Vec<(String, Matrix)>, CliError> {
    let path = rd.root().join(rel);
    let bytes = fs::read(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}; {hint}", path.display())))?;
    parse_checkpoint(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn pretrain(
    step: u8,
    pairs: usize,
    max_vars: usize,
    paths: &[PathBuf],
    rc: &RunConfig,
    lib: &CellLibrary,
) -> Result<(), CliError> {
    let ecfg = rc.encoder_cfg(lib);
    let tcfg = rc.train_config();
    match step {
        1 => {
            if pairs < 2 {
                return Err(CliError::Config(
                    "--pairs must be at least 2 for in-batch negatives".to_string(),
                ));
            }
            if max_vars == 0 {
                return Err(CliError::Config("--max-vars must be at least 1".to_string()));
            }
            if !paths.is_empty() {
                return Err(CliError::Config(
                    "step 1 trains on generated expression pairs, not netlists".to_string(),
                ));
            }
            let data = build_expr_pairs(pairs, max_vars, rc.subseed("pairs"));
            let out = train_step1(&data, &tcfg, ecfg).map_err(|d| {
                CliError::Numeric(format!("step 1 diverged at optimizer step {}", d.step))
            })?;
            let mut rd = open_run(rc)?;
            rd.write("text.ckpt", &checkpoint_bytes(&out.params.named()))?;
            rd.write("step1_curve.tsv", curve_tsv(&["loss"], &[&out.curve]).as_bytes())?;
            rd.finish()?;
            println!(
                "pretrain step 1: {} pairs, {} steps, final loss {}",
                pairs,
                out.curve.len(),
                fmt_f64(*out.curve.last().expect("at least one step"))
            );
        }
        2 => {
            if paths.is_empty() {
                return Err(CliError::Config(
                    "step 2 needs netlist inputs for the cone corpus".to_string(),
                ));
            }
            let netlists = load_netlists(paths, lib)?;
            let rd0 = RunDir::open(&rc.run.out)?;
            let loaded = load_ckpt(&rd0, "text.ckpt", "run `pretrain --step 1` first")?;
            let mut text = TextEncoderParams::init(ecfg, 0);
            restore(text.named_mut(), &loaded).map_err(|e| {
                CliError::Data(format!("text.ckpt does not fit the configured encoder: {e}"))
            })?;
            let vocab = GateTypeVocab::from_library(lib);
            let stats = PhysStats::fit_netlists(netlists.iter(), lib);
            let items = build_step2_corpus(
                &netlists,
                lib,
                rc.run.k,
                &vocab,
                &stats,
                ecfg,
                rc.subseed("step2-corpus"),
            );
            if items.is_empty() {
                return Err(CliError::Data("no non-empty cones in the inputs".to_string()));
            }
            let out = train_step2(&items, &text, &tcfg, ecfg).map_err(|d| {
                CliError::Numeric(format!("step 2 diverged at optimizer step {}", d.step))
            })?;
            let mut rd = open_run(rc)?;
            rd.write("graph.ckpt", &checkpoint_bytes(&out.graph.named()))?;
            rd.write("heads.ckpt", &checkpoint_bytes(&out.heads.named()))?;
            let names: Vec<&str> = out.curves.keys().copied().collect();
            let columns: Vec<&[f64]> = out.curves.values().map(|v| v.as_slice()).collect();
            rd.write("step2_curves.tsv", curve_tsv(&names, &columns).as_bytes())?;
            rd.finish()?;
            println!(
                "pretrain step 2: {} cones, {} steps, final total loss {}",
                items.len(),
                out.curves["total"].len(),
                fmt_f64(*out.curves["total"].last().expect("at least one step"))
            );
        }
        _ => unreachable!("clap restricts --step to 1..=2"),
    }
    Ok(())
}

/// Load trained encoders from the run directory, or fall back to untrained
/// seed-initialized ones when no pre-training has happened there yet.
fn encoders(
    rc: &RunConfig,
    ecfg: EncoderCfg,
    rd: &RunDir,
) -> Result<(TextEncoderParams, GraphEncoderParams, bool), CliError> {
    let have_text = rd.root().join("text.ckpt").exists();
    let have_graph = rd.root().join("graph.ckpt").exists();
    match (have_text, have_graph) {
        (true, true) => {
            let mut text = TextEncoderParams::init(ecfg, 0);
            restore(text.named_mut(), &load_ckpt(rd, "text.ckpt", "")?).map_err(|e| {
                CliError::Data(format!("text.ckpt does not fit the configured encoder: {e}"))
            })?;
            let mut graph = GraphEncoderParams::init(ecfg, 0);
            restore(graph.named_mut(), &load_ckpt(rd, "graph.ckpt", "")?).map_err(|e| {
                CliError::Data(format!("graph.ckpt does not fit the configured encoder: {e}"))
            })?;
            Ok((text, graph, true))
        }
        (false, false) => Ok((
            TextEncoderParams::init(ecfg, rc.subseed("text-init")),
            GraphEncoderParams::init(ecfg, rc.subseed("graph-init")),
            false,
        )),
        _ => Err(CliError::Data(format!(
            "{} holds only one of text.ckpt/graph.ckpt; run both pre-training steps",
            rd.root().display()
        ))),
    }
}

pub fn embed(paths: &[PathBuf], rc: &RunConfig, lib: &CellLibrary) -> Result<(), CliError> {
    let ecfg = rc.encoder_cfg(lib);
    let netlists = load_netlists(paths, lib)?;
    let mut rd = open_run(rc)?;
    let (text, graph, trained) = encoders(rc, ecfg, &rd)?;
    if !trained {
        println!("note: no checkpoints in {}; using untrained encoders", rd.root().display());
    }
    let vocab = GateTypeVocab::from_library(lib);
    let stats = PhysStats::fit_netlists(netlists.iter(), lib);
    let subs = cone_subnetlists(&netlists, lib);
    if subs.is_empty() {
        return Err(CliError::Data("no non-empty cones in the inputs".to_string()));
    }
    let rows: Vec<String> = ordered_map(&subs, |_, (circuit, root, sub)| {
        let g = build_tag(sub, lib, rc.run.k, &vocab, &stats).expect("validated netlists build");
        let (_, cls) = embed_graph(&g, &text, &graph);
        let vals: Vec<String> = cls.iter().map(|&v| fmt_f64(v)).collect();
        format!("{circuit}\t{root}\t{}\n", vals.join("\t"))
    });
    rd.write("embeddings.tsv", rows.concat().as_bytes())?;
    rd.finish()?;
    println!("embed: {} cones from {} circuits", rows.len(), netlists.len());
    Ok(())
}

struct TaskEnv {
    tasks: gatetag::downstream::ToyTasks,
    vocab: GateTypeVocab,
    stats: PhysStats,
    text: TextEncoderParams,
    graph: GraphEncoderParams,
}

fn task_env(rc: &RunConfig, lib: &CellLibrary, rd: &RunDir) -> Result<TaskEnv, CliError> {
    let ecfg = rc.encoder_cfg(lib);
    let (text, graph, trained) = encoders(rc, ecfg, rd)?;
    if !trained {
        println!("note: no checkpoints in {}; using untrained encoders", rd.root().display());
    }
    let tasks = gen_toy_tasks(lib, rc.subseed("toy-tasks"));
    let all: Vec<&Netlist> = tasks
        .gate_fn
        .iter()
        .map(|c| &c.netlist)
        .chain(tasks.reg_role.iter().map(|c| &c.netlist))
        .chain(tasks.size.iter())
        .collect();
    let stats = PhysStats::fit_netlists(all.into_iter(), lib);
    let vocab = GateTypeVocab::from_library(lib);
    Ok(TaskEnv { tasks, vocab, stats, text, graph })
}

fn build_task(env: &TaskEnv, rc: &RunConfig, lib: &CellLibrary, task: TaskName, ablate_text: bool) -> TaskDataset {
    let text = (!ablate_text).then_some(&env.text);
    let k = rc.run.k;
    match task {
        TaskName::GateFn => {
            gate_fn_dataset(&env.tasks.gate_fn, lib, k, &env.vocab, &env.stats, text, &env.graph)
        }
        TaskName::RegRole => {
            reg_role_dataset(&env.tasks.reg_role, lib, k, &env.vocab, &env.stats, text, &env.graph)
        }
        TaskName::SizeArea => size_dataset(
            &env.tasks.size, lib, k, &env.vocab, &env.stats, text, &env.graph, SizeTarget::Area,
        ),
        TaskName::SizeDelay => size_dataset(
            &env.tasks.size, lib, k, &env.vocab, &env.stats, text, &env.graph, SizeTarget::PathDelay,
        ),
    }
}

fn run_task(
    env: &TaskEnv,
    rc: &RunConfig,
    lib: &CellLibrary,
    task: TaskName,
    ablate_text: bool,
) -> Result<(String, MlpHead, MetricReport), CliError> {
    let mut ds = build_task(env, rc, lib, task, ablate_text);
    let fcfg = FinetuneCfg { seed: rc.subseed("finetune"), ..Default::default() };
    ds.assign_splits(fcfg.test_fraction, rc.subseed("split"))
        .map_err(|e| CliError::Data(format!("{}: {e}", ds.name)))?;
    let (head, report) =
        finetune_head(&ds, &fcfg).map_err(|e| CliError::Data(format!("{}: {e}", ds.name)))?;
    Ok((ds.name.clone(), head, report))
}

pub fn finetune(task: TaskName, rc: &RunConfig, lib: &CellLibrary) -> Result<(), CliError> {
    let mut rd = open_run(rc)?;
    let env = task_env(rc, lib, &rd)?;
    let (name, head, report) = run_task(&env, rc, lib, task, false)?;
    println!("{name} {}", report.record());
    rd.write(&format!("finetune/{name}.txt"), report.render().as_bytes())?;
    rd.write(&format!("finetune/{name}.ckpt"), &checkpoint_bytes(&head.named()))?;
    rd.finish()?;
    Ok(())
}

pub fn eval(rc: &RunConfig, lib: &CellLibrary) -> Result<(), CliError> {
    let mut rd = open_run(rc)?;
    let env = task_env(rc, lib, &rd)?;
    let runs = [
        (TaskName::GateFn, false),
        (TaskName::GateFn, true),
        (TaskName::RegRole, false),
        (TaskName::SizeArea, false),
        (TaskName::SizeDelay, false),
    ];
    let mut lines = String::new();
    let mut gate_fn_acc = (0.0, 0.0); // (full, phys-only)
    for (task, ablate) in runs {
        let (name, _, report) = run_task(&env, rc, lib, task, ablate)?;
        println!("{name} {}", report.record());
        lines.push_str(&format!("{name}\t{}\n", report.record()));
        if task == TaskName::GateFn {
            let acc = report.accuracy.expect("classification task");
            if ablate {
                gate_fn_acc.1 = acc;
            } else {
                gate_fn_acc.0 = acc;
            }
        }
    }
    let delta = (gate_fn_acc.0 - gate_fn_acc.1) * 100.0;
    println!("text-ablation gate-fn accuracy delta: {:.2} percentage points", delta);
    lines.push_str(&format!("text-ablation-delta-pp\t{:.2}\n", delta));
    rd.write("eval.tsv", lines.as_bytes())?;
    rd.finish()?;
    Ok(())
}

pub fn gradcheck(samples: usize, rc: &RunConfig) -> Result<(), CliError> {
    if samples == 0 {
        return Err(CliError::Config("--samples must be at least 1".to_string()));
    }
    let reports: Vec<(&'static str, GradCheckReport)> =
        gradcheck_losses(samples, rc.subseed("gradcheck"));
    let mut failed = Vec::new();
    for (name, r) in &reports {
        println!("{name}: max relative error {:.3e} ({} samples, worst {})", r.max_rel_err, r.samples, r.worst);
        if !r.passes() {
            failed.push(*name);
        }
    }
    println!("tolerance {GRAD_CHECK_TOL:.0e}");
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check above tolerance for: {}",
            failed.join(", ")
        )))
    }
}

// ---------------------------------------------------------------------
// Self-test: analytic loss identities and serialization round trips, all
// on inputs the binary builds for itself.

fn approx(value: f64, want: f64, tol: f64) -> Result<(), String> {
    if (value - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("got {value}, want {want} within {tol}"))
    }
}

fn check_infonce_uniform() -> Result<(), String> {
    for k in [2usize, 4, 16] {
        let mut t = Tape::new();
        let row = vec![1.0, 0.0, 0.0, 0.0];
        let m = Matrix { rows: k, cols: 4, data: row.repeat(k) };
        let a = t.leaf(m.clone());
        let c = t.leaf(m);
        let loss = info_nce(&mut t, a, c, 0.07);
        approx(t.scalar(loss), (k as f64).ln(), 1e-9).map_err(|e| format!("k={k}: {e}"))?;
    }
    Ok(())
}

fn check_one_hot_gate_loss() -> Result<(), String> {
    let mut t = Tape::new();
    let mut m = Matrix::zeros(3, 5);
    for (r, &label) in [1usize, 4, 0].iter().enumerate() {
        m.row_mut(r)[label] = 50.0;
    }
    let logits = t.leaf(m);
    let loss = masked_gate_loss(&mut t, logits, &[1, 4, 0]);
    approx(t.scalar(loss), 0.0, 1e-9)
}

fn check_uniform_classifier_loss() -> Result<(), String> {
    let mut t = Tape::new();
    let logits = t.leaf(Matrix::zeros(4, 7));
    let loss = masked_gate_loss(&mut t, logits, &[0, 1, 2, 3]);
    approx(t.scalar(loss), 7f64.ln(), 1e-9)
}

fn check_perfect_size_loss() -> Result<(), String> {
    let counts = Matrix { rows: 1, cols: 3, data: vec![4.0, 0.0, 9.0] };
    let mut t = Tape::new();
    let pred = t.leaf(Matrix {
        rows: 1,
        cols: 3,
        data: counts.data.iter().map(|c| c.ln_1p()).collect(),
    });
    let loss = size_loss(&mut t, pred, &counts, false);
    approx(t.scalar(loss), 0.0, 0.0)
}

fn check_expr_roundtrip() -> Result<(), String> {
    let vars: Vec<String> = (0..4).map(|i| format!("v{i}")).collect();
    for seed in 0..16u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_expr(&mut rng, &vars, 12);
        let back = parse_expr(&to_text(&e)).map_err(|err| format!("seed {seed}: {err}"))?;
        if !equivalent(&e, &back) {
            return Err(format!("seed {seed}: reparse changed the function"));
        }
        let rewritten = rewrite_equiv(&e, seed, 4);
        if !equivalent(&e, &rewritten) {
            return Err(format!("seed {seed}: rewrite changed the function"));
        }
    }
    Ok(())
}

fn selftest_netlist(lib: &CellLibrary, seed: u64) -> Netlist {
    random_netlist(
        lib,
        &RandomNetlistCfg { seed, num_inputs: 4, num_outputs: 2, comb_gates: 24, registers: 3 },
    )
}

fn check_netlist_roundtrip(lib: &CellLibrary) -> Result<(), String> {
    for seed in 0..4u64 {
        let n = selftest_netlist(lib, seed);
        let back = parse_netlist(&emit_netlist(&n, lib), lib)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        if !netlists_equivalent(&n, &back, lib, 64, seed) {
            return Err(format!("seed {seed}: reparse changed the circuit"));
        }
    }
    Ok(())
}

fn check_augment_equivalence(lib: &CellLibrary) -> Result<(), String> {
    for seed in 0..4u64 {
        let n = selftest_netlist(lib, seed);
        let a = rewire_netlist(&n, lib, seed ^ 0x5eed);
        if !netlists_equivalent(&n, &a, lib, 64, seed) {
            return Err(format!("seed {seed}: augmentation changed the circuit"));
        }
    }
    Ok(())
}

fn check_corpus_roundtrip(lib: &CellLibrary) -> Result<(), String> {
    let netlists: Vec<Netlist> = (0..3).map(|s| selftest_netlist(lib, s)).collect();
    let vocab = GateTypeVocab::from_library(lib);
    let stats = PhysStats::fit_netlists(netlists.iter(), lib);
    let subs = cone_subnetlists(&netlists, lib);
    let graphs: Vec<TagGraph> = subs
        .iter()
        .map(|(_, _, sub)| build_tag(sub, lib, 2, &vocab, &stats).expect("generated netlists build"))
        .collect();
    let corpus = serialize_corpus(&graphs);
    let back = deserialize_corpus(&corpus, Some(vocab.hash())).map_err(|e| e.to_string())?;
    if serialize_corpus(&back) != corpus {
        return Err("serialize → parse → serialize is not the identity".to_string());
    }
    Ok(())
}

fn check_checkpoint_roundtrip() -> Result<(), String> {
    let ecfg = EncoderCfg {
        vocab: 64,
        text_width: 8,
        embed_dim: 6,
        graph_width: 8,
        max_tokens: 16,
        classes: 5,
    };
    let text = TextEncoderParams::init(ecfg, 3);
    let graph = GraphEncoderParams::init(ecfg, 4);
    let heads = Heads::init(ecfg, 5);
    for (label, named) in [
        ("text", text.named()),
        ("graph", graph.named()),
        ("heads", heads.named()),
    ] {
        let bytes = checkpoint_bytes(&named);
        let loaded = parse_checkpoint(&bytes).map_err(|e| format!("{label}: {e}"))?;
        let reround: Vec<(&str, &Matrix)> =
            loaded.iter().map(|(n, m)| (n.as_str(), m)).collect();
        if checkpoint_bytes(&reround) != bytes {
            return Err(format!("{label}: checkpoint bytes changed across a round trip"));
        }
    }
    Ok(())
}

pub fn selftest(lib: &CellLibrary) -> Result<(), CliError> {
    // Checks run against the built-in library regardless of --library, so
    // the suite exercises the same fixtures everywhere.
    let _ = lib;
    let demo = demo_library();
    let checks: Vec<(&str, Result<(), String>)> = vec![
        ("infonce-uniform-batch", check_infonce_uniform()),
        ("masked-gate-one-hot", check_one_hot_gate_loss()),
        ("classifier-uniform", check_uniform_classifier_loss()),
        ("size-loss-perfect", check_perfect_size_loss()),
        ("expr-roundtrip-and-rewrite", check_expr_roundtrip()),
        ("netlist-roundtrip", check_netlist_roundtrip(&demo)),
        ("augment-equivalence", check_augment_equivalence(&demo)),
        ("corpus-roundtrip", check_corpus_roundtrip(&demo)),
        ("checkpoint-roundtrip", check_checkpoint_roundtrip()),
    ];
    let mut failures = 0;
    for (name, result) in checks {
        match result {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                println!("FAIL {name}: {msg}");
                failures += 1;
            }
        }
    }
    if failures == 0 {
        println!("PASS selftest");
        Ok(())
    } else {
        Err(CliError::Check(format!("{failures} self-test check(s) failed")))
    }
}
