//! Parallel corpora: whitespace-tokenized text plus optional source trees.

use std::path::Path;

use super::vocab::Vocab;
use crate::deptree::{parse_conllu, sdc_matrix, DepTree, SdcMatrix};
use crate::error::{Error, Result};

/// One training or evaluation pair in id space.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
    pub mask: Option<SdcMatrix>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextCorpus {
    pub src: Vec<Vec<String>>,
    pub tgt: Vec<Vec<String>>,
    pub trees: Option<Vec<DepTree>>,
}

pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One tokenized sentence per line. A trailing newline does not add a line.
pub fn parse_lines(text: &str) -> Vec<Vec<String>> {
    text.lines().map(tokenize).collect()
}

impl TextCorpus {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// Checks alignment of the sides. `names` label the source, target and
    /// tree inputs in error messages.
    pub fn from_parts(
        src: Vec<Vec<String>>,
        tgt: Vec<Vec<String>>,
        trees: Option<Vec<DepTree>>,
        names: [&str; 3],
    ) -> Result<Self> {
        if src.len() != tgt.len() {
            return Err(Error::Data(format!(
                "{} has {} lines but {} has {}",
                names[0],
                src.len(),
                names[1],
                tgt.len()
            )));
        }
        if let Some(trees) = &trees {
            if trees.len() != src.len() {
                return Err(Error::Data(format!(
                    "{} has {} sentences but {} has {} lines",
                    names[2],
                    trees.len(),
                    names[0],
                    src.len()
                )));
            }
            for (i, (t, s)) in trees.iter().zip(&src).enumerate() {
                if t.len() != s.len() {
                    return Err(Error::Data(format!(
                        "sentence {}: {} has {} tokens but {} has {}",
                        i + 1,
                        names[2],
                        t.len(),
                        names[0],
                        s.len()
                    )));
                }
            }
        }
        Ok(TextCorpus { src, tgt, trees })
    }

    pub fn load(src: &Path, tgt: &Path, trees: Option<&Path>) -> Result<Self> {
        let s = parse_lines(&read_text(src)?);
        let t = parse_lines(&read_text(tgt)?);
        let tr = trees
            .map(|p| read_text(p).and_then(|text| parse_conllu(&text)))
            .transpose()?;
        let tree_name = trees.map(|p| p.display().to_string()).unwrap_or_default();
        Self::from_parts(
            s,
            t,
            tr,
            [
                &src.display().to_string(),
                &tgt.display().to_string(),
                &tree_name,
            ],
        )
    }

    /// Converts to ids, dropping pairs with an empty side or a side longer
    /// than `max_len`.
    pub fn to_examples(
        &self,
        src_vocab: &Vocab,
        tgt_vocab: &Vocab,
        max_len: usize,
    ) -> Vec<Example> {
        (0..self.len())
            .filter(|&i| {
                let (s, t) = (&self.src[i], &self.tgt[i]);
                !s.is_empty() && !t.is_empty() && s.len() <= max_len && t.len() <= max_len
            })
            .map(|i| Example {
                src: src_vocab.encode(&self.src[i]),
                tgt: tgt_vocab.encode(&self.tgt[i]),
                mask: self.trees.as_ref().map(|t| sdc_matrix(&t[i])),
            })
            .collect()
    }

    pub fn to_text(&self) -> (String, String) {
        let join =
            |side: &[Vec<String>]| side.iter().map(|s| s.join(" ") + "\n").collect::<String>();
        (join(&self.src), join(&self.tgt))
    }
}
