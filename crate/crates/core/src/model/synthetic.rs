//! Generated parallel corpora that need no external data.

use rand::seq::SliceRandom;
use rand::Rng;

use super::data::TextCorpus;
use crate::deptree::DepTree;
use crate::diffcore::{stream_rng, Stream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Target equals source; trees are chains.
    Copy,
    /// Target is the source reversed; trees are chains.
    Reverse,
    /// Random trees; each target word is the source word's head, and the
    /// root copies itself.
    TreeNeighbor,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(Task::Copy),
            "reverse" => Ok(Task::Reverse),
            "tree-neighbor" | "tree_neighbor" => Ok(Task::TreeNeighbor),
            _ => Err(Error::Config(format!("unknown synthetic task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskSpec {
    pub task: Task,
    pub pairs: usize,
    /// Content words `t0 .. t{words-1}`.
    pub words: usize,
    pub max_len: usize,
}

impl TaskSpec {
    /// 1000 training pairs over 20 words of length at most 10.
    pub fn desk(task: Task) -> Self {
        TaskSpec {
            task,
            pairs: 1000,
            words: 20,
            max_len: 10,
        }
    }
}

fn chain(len: usize) -> Vec<usize> {
    (0..len).collect()
}

fn random_heads<R: Rng>(len: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    let mut heads = vec![0; len];
    for k in 1..len {
        let parent = order[rng.gen_range(0..k)];
        heads[order[k]] = parent + 1;
    }
    heads
}

/// Draws `spec.pairs` sentences. `split` selects an independent stream so
/// train and dev sets from the same seed do not overlap by construction.
pub fn generate(spec: TaskSpec, seed: u64, split: u32) -> Result<TextCorpus> {
    if spec.words == 0 || spec.max_len == 0 {
        return Err(Error::Config(
            "synthetic task needs at least one word and length 1".into(),
        ));
    }
    let mut rng = stream_rng(seed, Stream::Data, u64::from(split), 0);
    let mut src = Vec::with_capacity(spec.pairs);
    let mut tgt = Vec::with_capacity(spec.pairs);
    let mut trees = Vec::with_capacity(spec.pairs);
    for _ in 0..spec.pairs {
        let len = rng.gen_range(1..=spec.max_len);
        let words: Vec<String> = (0..len)
            .map(|_| format!("t{}", rng.gen_range(0..spec.words)))
            .collect();
        let heads = match spec.task {
            Task::Copy | Task::Reverse => chain(len),
            Task::TreeNeighbor => random_heads(len, &mut rng),
        };
        let target = match spec.task {
            Task::Copy => words.clone(),
            Task::Reverse => words.iter().rev().cloned().collect(),
            Task::TreeNeighbor => heads
                .iter()
                .enumerate()
                .map(|(j, &h)| {
                    if h == 0 {
                        words[j].clone()
                    } else {
                        words[h - 1].clone()
                    }
                })
                .collect(),
        };
        trees.push(DepTree::new(words.clone(), heads)?);
        src.push(words);
        tgt.push(target);
    }
    Ok(TextCorpus {
        src,
        tgt,
        trees: Some(trees),
    })
}
