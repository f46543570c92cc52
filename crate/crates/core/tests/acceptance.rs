//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criterion 2 asks for a 9-word tree whose row from one word reads
//! 0;1,1,1;2,2;4,4,4. No tree has that row (a word four edges away needs a
//! word three edges away on its path), so the check reports FAIL after an
//! exhaustive search and is listed in `KNOWN_UNATTAINABLE`; the process
//! exits nonzero only for other failures.

#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdnmt::attention::{
    gaussian_factor, global_weights, local_weights, sdatt_scores, sdatt_weights, AttentionKind,
};
use sdnmt::cli::{model_check, op_checks};
use sdnmt::deptree::{sdc_matrix, sdc_row, DepTree};
use sdnmt::diffcore::Tensor;
use sdnmt::eval::{bleu_single, BleuOptions};
use sdnmt::model::synthetic::{generate, Task, TaskSpec};
use sdnmt::model::{
    beam_search, decode_step, train, AttentionName, Checkpoint, Encoded, ModelConfig, ModelParams,
    TrainOptions, Vocab,
};

const KNOWN_UNATTAINABLE: &[u32] = &[2];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = (u32, &'static str, fn() -> Outcome);

fn main() {
    let checks: Vec<Check> = vec![
        (
            1,
            "tree distance matrix equals Floyd-Warshall",
            c1_floyd_warshall,
        ),
        (2, "9-word fenzi row 0;1,1,1;2,2;4,4,4", c2_fenzi_row),
        (3, "attention weight invariants", c3_attention_invariants),
        (4, "Gaussian factor spot values", c4_gaussian),
        (5, "gradient checks", c5_gradients),
        (
            6,
            "double context with zero L_cs equals global",
            c6_double_context,
        ),
        (7, "beam 12 equals exhaustive search", c7_beam),
        (8, "desk training runs", c8_training),
        (9, "BLEU sanity", c9_bleu),
        (10, "determinism and checkpoint round trip", c10_determinism),
    ];
    let mut unexpected = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        let status = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && KNOWN_UNATTAINABLE.contains(&id) {
            " [known unattainable]"
        } else {
            ""
        };
        println!(
            "criterion {id:>2}: {status}{note} - {name} ({}; {secs:.1}s)",
            o.detail
        );
        if !o.pass && note.is_empty() {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}

fn c1_floyd_warshall() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let trees = 1000;
    for t in 0..trees {
        let len = rng.gen_range(2..=50);
        let heads = common::random_heads(len, &mut rng);
        let m = sdc_matrix(&DepTree::from_heads(heads.clone()).unwrap());
        let fw = common::floyd_warshall(&heads);
        for a in 0..len {
            for b in 0..len {
                if m.get(a, b) != fw[a][b] {
                    return outcome(
                        false,
                        format!("tree {t}: entry ({a},{b}) {} vs {}", m.get(a, b), fw[a][b]),
                    );
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        secs < 10.0,
        format!("{trees} trees, J in [2, 50], {secs:.2}s"),
    )
}

/// Every labelled tree on `n` nodes from its Prüfer sequence, as 1-based
/// heads rooted at node 0.
fn prufer_heads(seq: &[usize], n: usize) -> Vec<usize> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut adj = vec![Vec::new(); n];
    for &s in seq {
        let leaf = (0..n).find(|&k| degree[k] == 1).unwrap();
        adj[leaf].push(s);
        adj[s].push(leaf);
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&k| degree[k] == 1).collect();
    adj[rest[0]].push(rest[1]);
    adj[rest[1]].push(rest[0]);
    let mut heads = vec![usize::MAX; n];
    heads[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if heads[v] == usize::MAX {
                heads[v] = u + 1;
                queue.push_back(v);
            }
        }
    }
    heads
}

fn c2_fenzi_row() -> Outcome {
    let target = [0, 1, 1, 1, 2, 2, 4, 4, 4];
    let n: usize = 9;
    let total = n.pow(7);
    let mut seq = vec![0usize; n - 2];
    let mut found = None;
    let mut checked = 0;
    for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut() {
            *s = c % n;
            c /= n;
        }
        let tree = DepTree::from_heads(prufer_heads(&seq, n)).unwrap();
        let mut row = sdc_row(&sdc_matrix(&tree), 0).unwrap();
        checked += 1;
        row.sort_unstable();
        if row == target {
            found = Some(tree);
            break;
        }
    }
    // The same nine words plus one unnamed word at distance 3.
    let words = [
        "zhexie",
        "weixian",
        "fenzi",
        "yanzhong",
        "yingxiang",
        "zhengchang",
        "yimin",
        "de",
        "zhengce",
        "<gap>",
    ];
    let tree = DepTree::new(
        words.iter().map(|w| w.to_string()).collect(),
        vec![3, 3, 0, 5, 3, 10, 10, 10, 5, 9],
    )
    .unwrap();
    let row = sdc_row(&sdc_matrix(&tree), 2).unwrap();
    let named: Vec<u32> = row[..9].to_vec();
    let ten_ok = named == [1, 1, 0, 2, 1, 4, 4, 4, 2] && row[9] == 3;
    match found {
        Some(t) => outcome(true, format!("heads {:?}", t.heads())),
        None => outcome(
            false,
            format!(
                "none of {checked} labelled 9-node trees has this row; with one unnamed word at distance 3 the nine \
                 named words match exactly: {}",
                if ten_ok { "yes" } else { "no" }
            ),
        ),
    }
}

fn c3_attention_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let instances = 10_000;
    let mut worst_global: f64 = 0.0;
    let mut worst_sd: f64 = 0.0;
    for i in 0..instances {
        let len = rng.gen_range(1..=40);
        let scale = [1.0, 10.0, 300.0][i % 3];
        let e: Vec<f64> = (0..len).map(|_| rng.gen_range(-scale..scale)).collect();
        let g = global_weights(&e).unwrap();
        worst_global = worst_global.max((g.iter().sum::<f64>() - 1.0).abs());

        let d = rng.gen_range(1..=12);
        let p = rng.gen_range(0.0..len as f64);
        let l = local_weights(&g, p, d).unwrap();
        for j in 0..len {
            let x = j as f64;
            let outside = x < p - f64::from(d) || x > p + f64::from(d);
            if (outside && l[j] != 0.0) || l[j] > g[j] {
                return outcome(
                    false,
                    format!("instance {i}: local weight {} at {j}, p {p}, D {d}", l[j]),
                );
            }
        }

        let m = sdc_matrix(&common::random_tree(len, &mut rng));
        let row = m.row(rng.gen_range(0..len)).unwrap();
        let n = rng.gen_range(1..=6);
        let es = sdatt_scores(&e, row, f64::from(n) / 2.0).unwrap();
        let w = sdatt_weights(&es, row, n).unwrap();
        let mut on = 0.0;
        for j in 0..len {
            if row[j] > n {
                if w[j] != 0.0 {
                    return outcome(
                        false,
                        format!("instance {i}: weight {} at distance {}", w[j], row[j]),
                    );
                }
            } else {
                on += w[j];
            }
        }
        worst_sd = worst_sd.max((on - 1.0).abs());
    }
    outcome(
        worst_global <= 1e-9 && worst_sd <= 1e-9,
        format!("{instances} instances; worst sum error global {worst_global:.1e}, syntax {worst_sd:.1e}"),
    )
}

fn c4_gaussian() -> Outcome {
    let window = 8.0;
    let a = gaussian_factor(window, window / 2.0);
    let b = gaussian_factor(2.0, 2.0);
    outcome(
        (a - 0.135335).abs() < 1e-6 && (b - 0.606531).abs() < 1e-6,
        format!("{a:.6} at |j-p| = D, {b:.6} at distance 2 with sigma 2"),
    )
}

fn c5_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0, String::new());
    let mut count = 0;
    for seed in 1..=3 {
        let mut results = op_checks(seed).unwrap();
        for kind in [
            AttentionKind::Global,
            AttentionKind::Local(10),
            AttentionKind::SyntaxDirected(4),
            AttentionKind::DoubleContext(4),
        ] {
            results.push(model_check(kind, seed).unwrap());
        }
        for r in results {
            count += 1;
            if r.max_rel_error > worst.0 {
                worst = (r.max_rel_error, format!("{} seed {seed}", r.name));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.0 < 1e-4 && secs < 60.0,
        format!(
            "{count} checks at eps 1e-5, worst {:.2e} ({})",
            worst.0, worst.1
        ),
    )
}

fn c6_double_context() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let steps = 100;
    for step in 0..steps {
        let dc_cfg = ModelConfig {
            src_vocab_size: 12,
            tgt_vocab_size: 10,
            embedding_dim: 5,
            hidden_dim: 6,
            attention: AttentionName::Double,
            init_scale: 0.5,
            seed: step,
            ..ModelConfig::default()
        };
        let mut dc = ModelParams::init(&dc_cfg).unwrap();
        dc.l_cs.as_mut().unwrap().data_mut().fill(0.0);
        let global_cfg = ModelConfig {
            attention: AttentionName::Global,
            ..dc_cfg.clone()
        };
        let global = dc.for_config(&global_cfg).unwrap();
        let len = rng.gen_range(1..=12);
        let src: Vec<usize> = (0..len).map(|_| rng.gen_range(4..12)).collect();
        let mask = sdc_matrix(&common::random_tree(len, &mut rng));
        let state = Tensor::new(6, 1, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y_prev = rng.gen_range(0..10);
        let enc_dc = Encoded::new(&dc, &src).unwrap();
        let enc_g = Encoded::new(&global, &src).unwrap();
        let a = decode_step(&dc, dc_cfg.kind(), &enc_dc, Some(&mask), &state, y_prev).unwrap();
        let b = decode_step(&global, global_cfg.kind(), &enc_g, None, &state, y_prev).unwrap();
        let same = a
            .logits
            .iter()
            .zip(&b.logits)
            .all(|(x, y)| x.to_bits() == y.to_bits());
        if !same || a.state != b.state {
            return outcome(false, format!("step {step} differs"));
        }
    }
    outcome(true, format!("{steps} random steps bit-identical"))
}

/// Best complete sequence by enumerating every path, scored with the plain
/// reference step.
fn exhaustive_best(p: &ModelParams, src: &[usize], max_len: usize) -> (Vec<usize>, f64) {
    let (hs, s0) = common::encode(p, src);
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut stack = vec![(Vec::<usize>::new(), 0.0, s0)];
    while let Some((prefix, lp, s)) = stack.pop() {
        let prev = prefix.last().copied().unwrap_or(common::BOS);
        let (logits, s2) = common::step(p, AttentionKind::Global, &hs, None, &s, prev);
        for (k, l) in common::log_softmax(&logits).into_iter().enumerate() {
            let mut seq = prefix.clone();
            seq.push(k);
            let score = lp + l;
            if k == common::EOS || seq.len() == max_len {
                if score > best.1 {
                    best = (seq, score);
                }
            } else {
                stack.push((seq, score, s2.clone()));
            }
        }
    }
    best
}

fn c7_beam() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 50;
    let (mut agree, mut longer) = (0, 0);
    let mut misses = Vec::new();
    for draw in 0..draws {
        let cfg = ModelConfig {
            src_vocab_size: 8,
            tgt_vocab_size: 4,
            embedding_dim: 4,
            hidden_dim: 5,
            init_scale: rng.gen_range(0.5..2.0),
            seed: 1000 + draw,
            ..ModelConfig::default()
        };
        let p = ModelParams::init(&cfg).unwrap();
        let max_len = rng.gen_range(1..=6);
        let len = rng.gen_range(1..=6);
        let src: Vec<usize> = (0..len).map(|_| rng.gen_range(4..8)).collect();
        let beam = beam_search(&p, cfg.kind(), &src, None, 12, max_len).unwrap();
        let (seq, score) = exhaustive_best(&p, &src, max_len);
        if seq.len() > 1 {
            longer += 1;
        }
        if beam.tokens == seq && (beam.log_prob - score).abs() < 1e-9 {
            agree += 1;
        } else {
            misses.push(format!(
                "draw {draw}: beam {:?} {:.4} vs {seq:?} {score:.4}",
                beam.tokens, beam.log_prob
            ));
        }
    }
    let mut detail = format!("{agree}/{draws} draws agree, {longer} optima longer than one token");
    if !misses.is_empty() {
        detail.push_str(&format!("; {}", misses.join("; ")));
    }
    outcome(agree == draws, detail)
}

/// Best dev token accuracy and wall time of one desk run.
fn desk_run(
    task: Task,
    attention: AttentionName,
    seed: u64,
    stop_above: Option<f64>,
) -> (f64, f64, usize) {
    let start = Instant::now();
    let spec = TaskSpec::desk(task);
    let train_set = generate(spec, seed, 0).unwrap();
    let dev_set = generate(TaskSpec { pairs: 100, ..spec }, seed, 1).unwrap();
    let sv = Vocab::build(train_set.src.iter(), 200);
    let tv = Vocab::build(train_set.tgt.iter(), 200);
    let cfg = ModelConfig {
        src_vocab_size: sv.len(),
        tgt_vocab_size: tv.len(),
        embedding_dim: 32,
        hidden_dim: 64,
        attention,
        batch_size: 4,
        dropout: 0.2,
        epochs: 30,
        seed,
        ..ModelConfig::default()
    };
    let tr = train_set.to_examples(&sv, &tv, spec.max_len);
    let dv = dev_set.to_examples(&sv, &tv, spec.max_len);
    let mut best: f64 = 0.0;
    let mut epochs = 0;
    train(
        &cfg,
        ModelParams::init(&cfg).unwrap(),
        &tr,
        &dv,
        &TrainOptions { stop_above },
        |r| {
            best = best.max(r.dev_metric.unwrap_or(0.0));
            epochs = r.epoch;
        },
    )
    .unwrap();
    (best, start.elapsed().as_secs_f64(), epochs)
}

fn c8_training() -> Outcome {
    let (g, g_secs, g_epochs) = desk_run(Task::Copy, AttentionName::Global, 1, Some(0.95));
    let (s, s_secs, s_epochs) = desk_run(Task::Copy, AttentionName::Syntax, 1, Some(0.90));
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 1..=5 {
        let (sd, _, _) = desk_run(Task::TreeNeighbor, AttentionName::Syntax, seed, None);
        let (lo, _, _) = desk_run(Task::TreeNeighbor, AttentionName::Local, seed, None);
        if sd >= lo {
            wins += 1;
        }
        pairs.push(format!("{sd:.3}/{lo:.3}"));
    }
    let pass = g > 0.95 && g_secs < 600.0 && s > 0.90 && s_secs < 600.0 && wins >= 3;
    outcome(
        pass,
        format!(
            "copy global {g:.3} after {g_epochs} epochs in {g_secs:.0}s, copy syntax {s:.3} after {s_epochs} epochs in \
             {s_secs:.0}s; tree-neighbor syntax/local {} (syntax >= local on {wins}/5)",
            pairs.join(" ")
        ),
    )
}

fn c9_bleu() -> Outcome {
    let w = |s: &str| -> Vec<String> { s.split_whitespace().map(String::from).collect() };
    let opts = BleuOptions {
        case_insensitive: false,
        ..BleuOptions::default()
    };
    let corpus = vec![w("a b c d e f"), w("the cat sat on the mat")];
    let same = bleu_single(&corpus, &corpus, opts).unwrap().bleu;
    let disjoint = bleu_single(&corpus, &[w("u v w x y z"), w("k l m n o p")], opts)
        .unwrap()
        .bleu;
    let clipped = bleu_single(&[w("the the the cat")], &[w("the cat sat down")], opts).unwrap();
    let ok = same == 1.0
        && disjoint == 0.0
        && clipped.matches[0] == 2
        && clipped.totals[0] == 4
        && clipped.precisions[0] == 0.5;
    outcome(
        ok,
        format!(
            "identity {same}, disjoint {disjoint}, clipped unigram {}/{}",
            clipped.matches[0], clipped.totals[0]
        ),
    )
}

fn c10_determinism() -> Outcome {
    let run = || {
        let spec = TaskSpec {
            pairs: 80,
            ..TaskSpec::desk(Task::TreeNeighbor)
        };
        let data = generate(spec, 3, 0).unwrap();
        let sv = Vocab::build(data.src.iter(), 200);
        let tv = Vocab::build(data.tgt.iter(), 200);
        let cfg = ModelConfig {
            src_vocab_size: sv.len(),
            tgt_vocab_size: tv.len(),
            embedding_dim: 8,
            hidden_dim: 8,
            attention: AttentionName::Double,
            batch_size: 4,
            epochs: 2,
            seed: 3,
            ..ModelConfig::default()
        };
        let ex = data.to_examples(&sv, &tv, spec.max_len);
        let out = train(
            &cfg,
            ModelParams::init(&cfg).unwrap(),
            &ex,
            &ex[..10],
            &TrainOptions::default(),
            |_| {},
        )
        .unwrap();
        Checkpoint::new(cfg, out.params)
    };
    let (a, b) = (run(), run());
    let (ja, jb) = (a.to_json().unwrap(), b.to_json().unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    a.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    let bits = |p: &ModelParams| -> Vec<u64> {
        p.values()
            .iter()
            .flat_map(|t| t.data().iter().map(|x| x.to_bits()))
            .collect()
    };
    let round_trip = bits(&back.params) == bits(&a.params) && back.config == a.config;
    outcome(
        ja == jb && round_trip,
        format!(
            "same-seed checkpoints identical: {}, save/load bit-exact: {round_trip}",
            ja == jb
        ),
    )
}
