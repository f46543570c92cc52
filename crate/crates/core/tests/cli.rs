use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sdnmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdnmt"))
        .args(args)
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mask_of_a_chain() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("t.conllu"), dir.path().join("m.tsv"));
    fs::write(&inp, "1\ta\t0\n2\tb\t1\n3\tc\t2\n").unwrap();
    let o = sdnmt(&["mask", "--conllu", arg(&inp), "--out", arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "0\t1\t2\n1\t0\t1\n2\t1\t0\n"
    );
}

#[test]
fn mask_rejects_a_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("t.conllu"), dir.path().join("m.tsv"));
    fs::write(&inp, "1\ta\t2\n2\tb\t3\n3\tc\t1\n").unwrap();
    let o = sdnmt(&["mask", "--conllu", arg(&inp), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn eval_identity_is_100() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("ref.txt");
    fs::write(&f, "a b c d e\nf g h i\n").unwrap();
    let o = sdnmt(&["eval", "--hyp", arg(&f), "--reference", arg(&f)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("BLEU = 100.00"));
}

#[test]
fn eval_line_count_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (h, r) = (dir.path().join("h"), dir.path().join("r"));
    fs::write(&h, "a\n").unwrap();
    fs::write(&r, "a\nb\n").unwrap();
    assert_eq!(
        sdnmt(&["eval", "--hyp", arg(&h), "--reference", arg(&r)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(sdnmt(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        sdnmt(&["gradcheck", "--attention", "sideways"])
            .status
            .code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"hidden_dim": 8, "colour": "red"}"#).unwrap();
    let o = sdnmt(&[
        "train",
        "--config",
        arg(&cfg),
        "--synthetic",
        "copy",
        "--out-dir",
        arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_passes() {
    let o = sdnmt(&["gradcheck"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn train_translate_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = sdnmt(&[
        "train",
        "--synthetic",
        "copy",
        "--pairs",
        "60",
        "--dev-pairs",
        "10",
        "--attention",
        "syntax",
        "--epochs",
        "2",
        "--batch-size",
        "4",
        "--embedding-dim",
        "8",
        "--hidden-dim",
        "8",
        "--out-dir",
        arg(d),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(d.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["train_loss"].as_f64().unwrap().is_finite());
        assert!(v["dev_metric"].as_f64().is_some());
    }
    let model = d.join("model.json");
    let out = d.join("hyp.txt");
    let src = d.join("dev.src");

    // Syntax attention needs trees.
    let o = sdnmt(&[
        "translate",
        "--checkpoint",
        arg(&model),
        "--src",
        arg(&src),
        "--out",
        arg(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    let o = sdnmt(&[
        "translate",
        "--checkpoint",
        arg(&model),
        "--src",
        arg(&src),
        "--conllu",
        arg(&d.join("dev.conllu")),
        "--out",
        arg(&out),
        "--beam",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = fs::read_to_string(&out).unwrap().lines().count();
    assert_eq!(lines, fs::read_to_string(&src).unwrap().lines().count());

    // A syntax checkpoint cannot decode with double context: no L_cs for c^g.
    let o = sdnmt(&[
        "translate",
        "--checkpoint",
        arg(&model),
        "--src",
        arg(&src),
        "--conllu",
        arg(&d.join("dev.conllu")),
        "--out",
        arg(&d.join("x.txt")),
        "--attention",
        "double",
    ]);
    assert_eq!(o.status.code(), Some(1));

    let json = d.join("bleu.json");
    let o = sdnmt(&[
        "eval",
        "--hyp",
        arg(&out),
        "--reference",
        arg(&d.join("dev.tgt")),
        "--src",
        arg(&src),
        "--bucket-width",
        "5",
        "--smoothing",
        "--json",
        arg(&json),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert!(v.to_string().contains("bleu"));
}

#[test]
fn generate_writes_three_aligned_files() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("tn");
    let o = sdnmt(&[
        "generate",
        "--task",
        "tree-neighbor",
        "--pairs",
        "25",
        "--out-prefix",
        arg(&prefix),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = |ext: &str| fs::read_to_string(dir.path().join(format!("tn.{ext}"))).unwrap();
    let (src, tgt) = (read("src"), read("tgt"));
    assert_eq!(src.lines().count(), 25);
    assert_eq!(tgt.lines().count(), 25);
    let trees = sdnmt::deptree::parse_conllu(&read("conllu")).unwrap();
    assert_eq!(trees.len(), 25);
    for (t, s) in trees.iter().zip(src.lines()) {
        assert_eq!(t.len(), s.split_whitespace().count());
    }
}
