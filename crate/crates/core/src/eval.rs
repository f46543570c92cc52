//! Corpus BLEU and source-length bucketed reports.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BleuOptions {
    pub max_n: usize,
    pub case_insensitive: bool,
    /// Add one to every n-gram match and total count.
    pub smoothing: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        BleuOptions {
            max_n: 4,
            case_insensitive: true,
            smoothing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// In [0, 1].
    pub bleu: f64,
    /// Modified precision for n = 1..=max_n.
    pub precisions: Vec<f64>,
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn fold(s: &[String], lower: bool) -> Vec<String> {
    if lower {
        s.iter().map(|t| t.to_lowercase()).collect()
    } else {
        s.to_vec()
    }
}

/// Corpus-level BLEU with clipped n-gram counts and the brevity penalty
/// `exp(1 − r/c)` for `c < r`. `refs[i]` lists the references of `hyps[i]`;
/// `r` sums, per sentence, the reference length closest to the hypothesis
/// length (the shorter one on ties).
pub fn bleu(
    hyps: &[Vec<String>],
    refs: &[Vec<Vec<String>>],
    opts: BleuOptions,
) -> Result<BleuReport> {
    if hyps.len() != refs.len() {
        return Err(Error::Data(format!(
            "{} hypotheses but {} reference sets",
            hyps.len(),
            refs.len()
        )));
    }
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if opts.max_n == 0 {
        return Err(Error::Config("max_n must be at least 1".into()));
    }
    let mut matches = vec![0usize; opts.max_n];
    let mut totals = vec![0usize; opts.max_n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);

    for (i, (hyp, rs)) in hyps.iter().zip(refs).enumerate() {
        if rs.is_empty() {
            return Err(Error::Data(format!("sentence {} has no reference", i + 1)));
        }
        let hyp = fold(hyp, opts.case_insensitive);
        let rs: Vec<Vec<String>> = rs.iter().map(|r| fold(r, opts.case_insensitive)).collect();
        hyp_len += hyp.len();
        ref_len += rs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(hyp.len()), l))
            .expect("non-empty references");
        for n in 1..=opts.max_n {
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &rs {
                for (g, c) in ngram_counts(r, n) {
                    let m = max_ref.entry(g).or_insert(0);
                    *m = (*m).max(c);
                }
            }
            for (g, c) in ngram_counts(&hyp, n) {
                matches[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
                totals[n - 1] += c;
            }
        }
    }

    let precisions: Vec<f64> = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| {
            if opts.smoothing {
                (m as f64 + 1.0) / (t as f64 + 1.0)
            } else if t == 0 {
                0.0
            } else {
                m as f64 / t as f64
            }
        })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = if precisions.contains(&0.0) || brevity_penalty == 0.0 {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / opts.max_n as f64;
        brevity_penalty * mean_log.exp()
    };
    Ok(BleuReport {
        bleu,
        precisions,
        matches,
        totals,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

/// Single-reference convenience wrapper.
pub fn bleu_single(
    hyps: &[Vec<String>],
    refs: &[Vec<String>],
    opts: BleuOptions,
) -> Result<BleuReport> {
    let refs: Vec<Vec<Vec<String>>> = refs.iter().map(|r| vec![r.clone()]).collect();
    bleu(hyps, &refs, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// Source lengths in `(lower, upper]`.
    pub lower: usize,
    pub upper: usize,
    pub sentences: usize,
    /// `None` for an empty bucket.
    pub bleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub width: usize,
    pub buckets: Vec<Bucket>,
}

/// Scores each source-length bucket `(k·width, (k+1)·width]` on its own,
/// from the first bucket up to the one holding the longest sentence.
/// Length-0 sources count toward the first bucket.
pub fn bucket_report(
    hyps: &[Vec<String>],
    refs: &[Vec<Vec<String>>],
    src_lens: &[usize],
    width: usize,
    opts: BleuOptions,
) -> Result<BucketReport> {
    if width == 0 {
        return Err(Error::Config("bucket width must be positive".into()));
    }
    if hyps.len() != refs.len() || hyps.len() != src_lens.len() {
        return Err(Error::Data(format!(
            "{} hypotheses, {} reference sets, {} source lengths",
            hyps.len(),
            refs.len(),
            src_lens.len()
        )));
    }
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let slot = |len: usize| len.max(1).div_ceil(width) - 1;
    let count = src_lens.iter().map(|&l| slot(l)).max().expect("non-empty") + 1;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &l) in src_lens.iter().enumerate() {
        members[slot(l)].push(i);
    }
    let buckets = members
        .into_iter()
        .enumerate()
        .map(|(k, idx)| {
            let bleu = if idx.is_empty() {
                None
            } else {
                let h: Vec<_> = idx.iter().map(|&i| hyps[i].clone()).collect();
                let r: Vec<_> = idx.iter().map(|&i| refs[i].clone()).collect();
                Some(bleu(&h, &r, opts)?.bleu)
            };
            Ok(Bucket {
                lower: k * width,
                upper: (k + 1) * width,
                sentences: idx.len(),
                bleu,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BucketReport { width, buckets })
}

/// BLEU as a percentage with two decimals, e.g. `BLEU = 100.00`.
pub fn format_bleu(r: &BleuReport) -> String {
    let precisions: Vec<String> = r
        .precisions
        .iter()
        .map(|p| format!("{:.1}", 100.0 * p))
        .collect();
    format!(
        "BLEU = {:.2}, {} (BP={:.3}, hyp_len={}, ref_len={})",
        100.0 * r.bleu,
        precisions.join("/"),
        r.brevity_penalty,
        r.hyp_len,
        r.ref_len
    )
}

pub fn format_buckets(r: &BucketReport) -> String {
    let mut out = String::from("length      sentences    BLEU\n");
    for b in &r.buckets {
        let score = b
            .bleu
            .map_or_else(|| "-".to_string(), |s| format!("{:.2}", 100.0 * s));
        let _ = writeln!(
            out,
            "({:>3}, {:>3}]  {:>9}  {:>7}",
            b.lower, b.upper, b.sentences, score
        );
    }
    out
}
