//! The `sdnmt` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;

use crate::attention::AttentionKind;
use crate::deptree::{mask_to_tsv, parse_conllu, sdc_matrix, write_conllu, SdcMatrix};
use crate::diffcore::{grad_check_detailed, stream_rng, Graph, NodeId, Stream, Tensor};
use crate::error::{Error, Result};
use crate::eval::{bleu, bucket_report, format_bleu, format_buckets, BleuOptions};
use crate::model::checkpoint::{write_atomic, Checkpoint, Vocabs};
use crate::model::data::{parse_lines, read_text, TextCorpus};
use crate::model::network::loss_node;
use crate::model::synthetic::{generate, Task, TaskSpec};
use crate::model::{
    beam_search, train, AttentionName, Example, ModelConfig, ModelParams, TrainOptions, Vocab,
};

#[derive(Debug, Parser)]
#[command(
    name = "sdnmt",
    version,
    about = "Attention-based translation with dependency-distance masks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the tree-distance matrix of every sentence in a CoNLL-U file.
    Mask {
        #[arg(long)]
        conllu: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write `model.json` and `train_log.jsonl`.
    Train(Box<TrainArgs>),
    /// Beam-search translate a source file with a trained checkpoint.
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        src: PathBuf,
        /// Source dependency trees, required by syntax and double attention.
        #[arg(long)]
        conllu: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        /// Longest output, counting the end-of-sentence token.
        #[arg(long)]
        max_len: Option<usize>,
        /// Decode with a different attention kind than the one trained.
        #[arg(long)]
        attention: Option<String>,
    },
    /// Corpus BLEU, optionally bucketed by source length.
    Eval {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        src: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        bucket_width: usize,
        #[arg(long)]
        smoothing: bool,
        #[arg(long)]
        case_sensitive: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// `global`, `local`, `syntax`, `double` or `all`.
        #[arg(long, default_value = "all")]
        attention: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Write a synthetic parallel corpus as `<prefix>.src`, `.tgt`, `.conllu`.
    Generate {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 20)]
        words: usize,
        #[arg(long, default_value_t = 10)]
        max_len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Independent stream index, e.g. 0 for train and 1 for dev.
        #[arg(long, default_value_t = 0)]
        split: u32,
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON object of model settings; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    pub src: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    pub tgt: Option<PathBuf>,
    #[arg(long)]
    pub trees: Option<PathBuf>,
    #[arg(long)]
    pub dev_src: Option<PathBuf>,
    #[arg(long)]
    pub dev_tgt: Option<PathBuf>,
    #[arg(long)]
    pub dev_trees: Option<PathBuf>,
    /// Train on a generated task (`copy`, `reverse`, `tree-neighbor`)
    /// instead of files; the data is written next to the model.
    #[arg(long, conflicts_with_all = ["src", "tgt", "trees"])]
    pub synthetic: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 100)]
    pub dev_pairs: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Stop once dev token accuracy exceeds this value.
    #[arg(long)]
    pub stop_above: Option<f64>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub attention: Option<String>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub window: Option<u32>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub src_vocab_size: Option<usize>,
    #[arg(long)]
    pub tgt_vocab_size: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: ModelConfig) -> Result<ModelConfig> {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        set!(
            seed,
            n,
            window,
            epochs,
            batch_size,
            embedding_dim,
            hidden_dim,
            dropout,
            max_len,
            beam_size
        );
        set!(src_vocab_size, tgt_vocab_size);
        if let Some(a) = &self.attention {
            cfg.attention = a.parse::<AttentionName>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// 0 success, 1 usage or configuration, 2 data, 3 numeric failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Numeric { .. } | Error::GradientMismatch(_) => 3,
        _ => 2,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mask { conllu, out } => cmd_mask(&conllu, &out),
        Command::Train(args) => cmd_train(&args),
        Command::Translate {
            checkpoint,
            src,
            conllu,
            out,
            beam,
            max_len,
            attention,
        } => cmd_translate(
            &checkpoint,
            &src,
            conllu.as_deref(),
            &out,
            beam,
            max_len,
            attention.as_deref(),
        ),
        Command::Eval {
            hyp,
            reference,
            src,
            bucket_width,
            smoothing,
            case_sensitive,
            json,
        } => {
            let opts = BleuOptions {
                max_n: 4,
                case_insensitive: !case_sensitive,
                smoothing,
            };
            cmd_eval(
                &hyp,
                &reference,
                src.as_deref(),
                bucket_width,
                opts,
                json.as_deref(),
            )
        }
        Command::Gradcheck {
            attention,
            seed,
            tolerance,
        } => cmd_gradcheck(&attention, seed, tolerance),
        Command::Generate {
            task,
            pairs,
            words,
            max_len,
            seed,
            split,
            out_prefix,
        } => {
            let spec = TaskSpec {
                task: task.parse()?,
                pairs,
                words,
                max_len,
            };
            let corpus = generate(spec, seed, split)?;
            write_corpus(&corpus, &out_prefix)
        }
    }
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_corpus(corpus: &TextCorpus, prefix: &Path) -> Result<()> {
    let (src, tgt) = corpus.to_text();
    write_atomic(&with_ext(prefix, "src"), src.as_bytes())?;
    write_atomic(&with_ext(prefix, "tgt"), tgt.as_bytes())?;
    if let Some(trees) = &corpus.trees {
        write_atomic(&with_ext(prefix, "conllu"), write_conllu(trees).as_bytes())?;
    }
    Ok(())
}

pub fn cmd_mask(conllu: &Path, out: &Path) -> Result<()> {
    let trees = parse_conllu(&read_text(conllu)?)?;
    let blocks: Vec<String> = trees.iter().map(|t| mask_to_tsv(&sdc_matrix(t))).collect();
    write_atomic(out, blocks.join("\n").as_bytes())
}

fn load_config(args: &TrainArgs) -> Result<ModelConfig> {
    let base = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            ModelConfig::from_json(&text)?
        }
        None => ModelConfig::default(),
    };
    args.overrides.apply(base)
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(args)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let (train_text, dev_text) = match &args.synthetic {
        Some(task) => {
            let spec = TaskSpec::desk(task.parse::<Task>()?);
            let tr = generate(
                TaskSpec {
                    pairs: args.pairs,
                    ..spec
                },
                cfg.seed,
                0,
            )?;
            let dv = generate(
                TaskSpec {
                    pairs: args.dev_pairs,
                    ..spec
                },
                cfg.seed,
                1,
            )?;
            write_corpus(&tr, &args.out_dir.join("train"))?;
            write_corpus(&dv, &args.out_dir.join("dev"))?;
            (tr, Some(dv))
        }
        None => {
            let (src, tgt) = (
                args.src.as_ref().expect("clap"),
                args.tgt.as_ref().expect("clap"),
            );
            let tr = TextCorpus::load(src, tgt, args.trees.as_deref())?;
            let dv = match (&args.dev_src, &args.dev_tgt) {
                (Some(s), Some(t)) => Some(TextCorpus::load(s, t, args.dev_trees.as_deref())?),
                (None, None) => None,
                _ => return Err(Error::Config("--dev-src and --dev-tgt go together".into())),
            };
            (tr, dv)
        }
    };
    if cfg.kind().needs_tree() && train_text.trees.is_none() {
        return Err(Error::Config(format!(
            "{} attention needs --trees",
            cfg.kind().name()
        )));
    }
    let source = Vocab::build(train_text.src.iter(), cfg.src_vocab_size);
    let target = Vocab::build(train_text.tgt.iter(), cfg.tgt_vocab_size);
    cfg.src_vocab_size = source.len();
    cfg.tgt_vocab_size = target.len();
    let train_ex = train_text.to_examples(&source, &target, cfg.max_len);
    let dev_ex: Vec<Example> = dev_text
        .map(|d| d.to_examples(&source, &target, cfg.max_len))
        .unwrap_or_default();

    let options = TrainOptions {
        stop_above: args.stop_above,
    };
    let outcome = train(
        &cfg,
        ModelParams::init(&cfg)?,
        &train_ex,
        &dev_ex,
        &options,
        |r| {
            eprintln!(
                "epoch {:>3}  loss {:.4}  dev {}  {:.1}s",
                r.epoch,
                r.train_loss,
                r.dev_metric.map_or("-".into(), |m| format!("{m:.4}")),
                r.wall_time
            );
        },
    )?;
    let mut log = String::new();
    for r in &outcome.log {
        log.push_str(&serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?);
        log.push('\n');
    }
    write_atomic(&args.out_dir.join("train_log.jsonl"), log.as_bytes())?;
    let ck = Checkpoint {
        config: cfg,
        vocab: Some(Vocabs { source, target }),
        params: outcome.params,
    };
    ck.save(&args.out_dir.join("model.json"))?;
    eprintln!("best epoch {}", outcome.best_epoch);
    Ok(())
}

pub fn cmd_translate(
    checkpoint: &Path,
    src: &Path,
    conllu: Option<&Path>,
    out: &Path,
    beam: Option<usize>,
    max_len: Option<usize>,
    attention: Option<&str>,
) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut cfg = ck.config.clone();
    if let Some(a) = attention {
        cfg.attention = a.parse()?;
    }
    let kind = cfg.kind();
    if kind.needs_tree() && conllu.is_none() {
        return Err(Error::Config(format!(
            "{} attention needs source trees (--conllu)",
            kind.name()
        )));
    }
    let params = ck.params_for(&cfg)?;
    let vocab = ck
        .vocab
        .as_ref()
        .ok_or_else(|| Error::Checkpoint("checkpoint carries no vocabulary".into()))?;
    let beam = beam.unwrap_or(cfg.beam_size);
    let max_len = max_len.unwrap_or(2 * cfg.max_len + 1);
    if beam == 0 || max_len == 0 {
        return Err(Error::Config("beam and max length must be positive".into()));
    }

    let sentences = parse_lines(&read_text(src)?);
    let masks: Option<Vec<SdcMatrix>> = match conllu.filter(|_| kind.needs_tree()) {
        Some(p) => {
            let trees = parse_conllu(&read_text(p)?)?;
            TextCorpus::from_parts(
                sentences.clone(),
                sentences.clone(),
                Some(trees.clone()),
                [&src.display().to_string(), "", &p.display().to_string()],
            )?;
            Some(trees.iter().map(sdc_matrix).collect())
        }
        None => None,
    };
    let lines = sentences
        .par_iter()
        .enumerate()
        .map(|(i, words)| {
            if words.is_empty() {
                return Ok(String::new());
            }
            let ids = vocab.source.encode(words);
            let mask = masks.as_ref().map(|m| &m[i]);
            let hyp = beam_search(&params, kind, &ids, mask, beam, max_len)?;
            Ok(vocab.target.decode(hyp.words())?.join(" "))
        })
        .collect::<Result<Vec<_>>>()?;
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    write_atomic(out, text.as_bytes())
}

pub fn cmd_eval(
    hyp: &Path,
    reference: &Path,
    src: Option<&Path>,
    width: usize,
    opts: BleuOptions,
    json: Option<&Path>,
) -> Result<()> {
    let hyps = parse_lines(&read_text(hyp)?);
    let refs = parse_lines(&read_text(reference)?);
    if hyps.len() != refs.len() {
        return Err(Error::Data(format!(
            "{} has {} lines but {} has {}",
            hyp.display(),
            hyps.len(),
            reference.display(),
            refs.len()
        )));
    }
    let refs: Vec<Vec<Vec<String>>> = refs.into_iter().map(|r| vec![r]).collect();
    let report = bleu(&hyps, &refs, opts)?;
    println!("{}", format_bleu(&report));
    let buckets = match src {
        Some(s) => {
            let lens: Vec<usize> = parse_lines(&read_text(s)?).iter().map(Vec::len).collect();
            if lens.len() != hyps.len() {
                return Err(Error::Data(format!(
                    "{} has {} lines but {} has {}",
                    s.display(),
                    lens.len(),
                    hyp.display(),
                    hyps.len()
                )));
            }
            let b = bucket_report(&hyps, &refs, &lens, width, opts)?;
            print!("{}", format_buckets(&b));
            Some(b)
        }
        None => None,
    };
    if let Some(path) = json {
        let doc = serde_json::json!({ "bleu": report, "buckets": buckets });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Data(e.to_string()))?;
        write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}

/// Name and worst relative error of one gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
}

type Builder = Box<dyn Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>>;

/// Entries of magnitude in [0.5, 1.5] with random sign. Keeping them away
/// from zero keeps every checked gradient well above difference roundoff.
fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.gen_range(0.5..1.5);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(rows, cols, data).expect("positive shape")
}

/// Every graph operation, each reduced to a scalar through a fixed random
/// projection so no gradient is trivially uniform.
pub fn op_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = stream_rng(seed, Stream::Data, 99, 0);
    let mut t = |r: usize, c: usize| random_tensor(&mut rng, r, c);
    let (a, b, v, w) = (t(3, 4), t(4, 2), t(3, 1), t(3, 1));
    let (sq, sq2, row) = (t(3, 4), t(3, 4), t(4, 1));
    let proj = |g: &mut Graph<'_>, x: NodeId, seed: u64| -> Result<NodeId> {
        let (r, c) = (g.value(x).rows(), g.value(x).cols());
        let p = g.constant(random_tensor(
            &mut stream_rng(seed, Stream::Data, 98, (r * 31 + c) as u64),
            r,
            c,
        ));
        g.dot(x, p)
    };
    let cases: Vec<(&str, Vec<Tensor>, Builder)> = vec![
        (
            "matmul",
            vec![a.clone(), b.clone()],
            Box::new(move |g, x| {
                let y = g.matmul(x[0], x[1])?;
                proj(g, y, seed)
            }),
        ),
        (
            "add",
            vec![sq.clone(), sq2.clone()],
            Box::new(move |g, x| {
                let y = g.add(x[0], x[1])?;
                proj(g, y, seed)
            }),
        ),
        (
            "sub",
            vec![sq.clone(), sq2.clone()],
            Box::new(move |g, x| {
                let y = g.sub(x[0], x[1])?;
                proj(g, y, seed)
            }),
        ),
        (
            "mul",
            vec![sq.clone(), sq2.clone()],
            Box::new(move |g, x| {
                let y = g.mul(x[0], x[1])?;
                proj(g, y, seed)
            }),
        ),
        (
            "scalar_mul",
            vec![sq.clone()],
            Box::new(move |g, x| {
                let y = g.scalar_mul(x[0], -1.7)?;
                proj(g, y, seed)
            }),
        ),
        (
            "add_row",
            vec![sq.clone(), row.clone()],
            Box::new(move |g, x| {
                let y = g.add_row(x[0], x[1])?;
                proj(g, y, seed)
            }),
        ),
        (
            "concat",
            vec![v.clone(), w.clone()],
            Box::new(move |g, x| {
                let y = g.concat(&[x[0], x[1]])?;
                proj(g, y, seed)
            }),
        ),
        (
            "reshape",
            vec![sq.clone()],
            Box::new(move |g, x| {
                let y = g.reshape(x[0], 2, 6)?;
                proj(g, y, seed)
            }),
        ),
        (
            "transpose",
            vec![sq.clone()],
            Box::new(move |g, x| {
                let y = g.transpose(x[0])?;
                proj(g, y, seed)
            }),
        ),
        (
            "tanh",
            vec![sq.clone()],
            Box::new(move |g, x| {
                let y = g.tanh(x[0])?;
                proj(g, y, seed)
            }),
        ),
        (
            "sigmoid",
            vec![sq.clone()],
            Box::new(move |g, x| {
                let y = g.sigmoid(x[0])?;
                proj(g, y, seed)
            }),
        ),
        (
            "exp",
            vec![sq.clone()],
            Box::new(move |g, x| {
                let y = g.exp(x[0])?;
                proj(g, y, seed)
            }),
        ),
        (
            "softmax",
            vec![v.clone()],
            Box::new(move |g, x| {
                let y = g.softmax(x[0])?;
                proj(g, y, seed)
            }),
        ),
        (
            "softmax_over",
            vec![v.clone()],
            Box::new(move |g, x| {
                let y = g.softmax_over(x[0], &[true, false, true])?;
                proj(g, y, seed)
            }),
        ),
        (
            "embedding",
            vec![sq.clone()],
            Box::new(move |g, x| {
                let y = g.embedding(x[0], 1)?;
                proj(g, y, seed)
            }),
        ),
        (
            "dropout",
            vec![sq.clone()],
            Box::new(move |g, x| {
                let y = g.dropout(x[0], 0.3, &mut stream_rng(seed, Stream::Dropout, 0, 0))?;
                proj(g, y, seed)
            }),
        ),
        (
            "masked_fill",
            vec![v.clone()],
            Box::new(move |g, x| {
                let y = g.masked_fill(x[0], &[1], 0.0)?;
                proj(g, y, seed)
            }),
        ),
        (
            "sum",
            vec![sq.clone()],
            Box::new(|g, x| {
                let y = g.mul(x[0], x[0])?;
                g.sum(y)
            }),
        ),
        (
            "dot",
            vec![sq.clone(), sq2.clone()],
            Box::new(|g, x| g.dot(x[0], x[1])),
        ),
        (
            "cross_entropy",
            vec![v.clone()],
            Box::new(|g, x| g.softmax_cross_entropy(x[0], 2)),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, inputs, f)| {
            let r = grad_check_detailed(f, &inputs, 1e-5)?;
            Ok(CheckResult {
                name: name.to_string(),
                max_rel_error: r.max_rel_error,
            })
        })
        .collect()
}

/// A small model configuration for whole-model gradient checks.
pub fn toy_config(kind: AttentionKind, seed: u64) -> ModelConfig {
    ModelConfig {
        src_vocab_size: 7,
        tgt_vocab_size: 6,
        embedding_dim: 3,
        hidden_dim: 3,
        dropout: 0.0,
        init_scale: 0.5,
        seed,
        ..ModelConfig::default()
    }
    .with_kind(kind)
}

/// Three-token sentence with a small tree, used for whole-model checks.
pub fn toy_example() -> Example {
    let tree = crate::deptree::DepTree::from_heads(vec![2, 0, 2]).expect("valid tree");
    Example {
        src: vec![4, 5, 6],
        tgt: vec![5, 4],
        mask: Some(sdc_matrix(&tree)),
    }
}

/// Gradient check of the teacher-forced loss with respect to every weight.
pub fn model_check(kind: AttentionKind, seed: u64) -> Result<CheckResult> {
    let cfg = toy_config(kind, seed);
    let params = ModelParams::init(&cfg)?;
    let ex = toy_example();
    let inputs: Vec<Tensor> = params.values().into_iter().cloned().collect();
    let layout = params.clone();
    let r = grad_check_detailed(
        move |g, ids| {
            let w = layout.with_values(ids.to_vec())?;
            loss_node(g, &w, kind, &ex, &mut None)
        },
        &inputs,
        1e-5,
    )?;
    Ok(CheckResult {
        name: format!("model/{}", kind.name()),
        max_rel_error: r.max_rel_error,
    })
}

pub fn cmd_gradcheck(attention: &str, seed: u64, tolerance: f64) -> Result<()> {
    let base = ModelConfig::default();
    let kinds: Vec<AttentionKind> = if attention == "all" {
        [
            AttentionName::Global,
            AttentionName::Local,
            AttentionName::Syntax,
            AttentionName::Double,
        ]
        .into_iter()
        .map(|a| {
            ModelConfig {
                attention: a,
                ..base.clone()
            }
            .kind()
        })
        .collect()
    } else {
        vec![ModelConfig {
            attention: attention.parse()?,
            ..base
        }
        .kind()]
    };
    let mut results = op_checks(seed)?;
    for k in kinds {
        results.push(model_check(k, seed)?);
    }
    let mut failed = Vec::new();
    for r in &results {
        let ok = r.max_rel_error < tolerance;
        println!(
            "{:<20} {:.3e}  {}",
            r.name,
            r.max_rel_error,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::GradientMismatch(failed.join(", ")))
    }
}
