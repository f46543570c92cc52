//! Dependency trees and syntax-distance masks.
//!
//! A [`DepTree`] is read from a CoNLL-U subset (ID, FORM and HEAD columns).
//! [`sdc_matrix`] turns it into a [`SdcMatrix`]: the J×J table of tree hop
//! counts between every pair of source words. Row `p` of that table is the
//! mask used by syntax-directed attention when the decoder aligns to word `p`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One dependency-parsed source sentence.
///
/// `heads[j]` is the 1-based index of the head of token `j`, or 0 for the
/// root. Construction through [`DepTree::new`] guarantees the links form a
/// single rooted tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepTree {
    tokens: Vec<String>,
    heads: Vec<usize>,
}

impl DepTree {
    pub fn new(tokens: Vec<String>, heads: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Structure("empty sentence".into()));
        }
        if tokens.len() != heads.len() {
            return Err(Error::Structure(format!(
                "{} tokens but {} heads",
                tokens.len(),
                heads.len()
            )));
        }
        validate_heads(&heads)?;
        Ok(DepTree { tokens, heads })
    }

    /// Builds a tree with placeholder token forms `w1..wJ`.
    pub fn from_heads(heads: Vec<usize>) -> Result<Self> {
        let tokens = (1..=heads.len()).map(|i| format!("w{i}")).collect();
        Self::new(tokens, heads)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    /// 0-based index of the root token.
    pub fn root(&self) -> usize {
        self.heads
            .iter()
            .position(|&h| h == 0)
            .expect("validated tree has a root")
    }

    /// 0-based head of token `j`, `None` for the root.
    pub fn head_of(&self, j: usize) -> Option<usize> {
        match self.heads[j] {
            0 => None,
            h => Some(h - 1),
        }
    }

    /// Undirected adjacency lists over 0-based node indices.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for j in 0..self.len() {
            if let Some(h) = self.head_of(j) {
                adj[j].push(h);
                adj[h].push(j);
            }
        }
        adj
    }
}

fn validate_heads(heads: &[usize]) -> Result<()> {
    let n = heads.len();
    if let Some((j, &h)) = heads.iter().enumerate().find(|(_, &h)| h > n) {
        return Err(Error::Structure(format!(
            "token {} has head {h} outside [0, {n}]",
            j + 1
        )));
    }
    let roots = heads.iter().filter(|&&h| h == 0).count();
    if roots != 1 {
        return Err(Error::Structure(format!(
            "expected exactly one root, found {roots}"
        )));
    }
    // With exactly one root and n-1 head links, the graph is a tree iff
    // every node reaches the root by following heads.
    let mut state = vec![0u8; n]; // 0 unvisited, 1 on current path, 2 reaches root
    for start in 0..n {
        let mut path = Vec::new();
        let mut j = start;
        loop {
            match state[j] {
                2 => break,
                1 => return Err(Error::Structure(format!("cycle through token {}", j + 1))),
                _ => {}
            }
            state[j] = 1;
            path.push(j);
            if heads[j] == 0 {
                break;
            }
            if heads[j] - 1 == j {
                return Err(Error::Structure(format!("token {} is its own head", j + 1)));
            }
            j = heads[j] - 1;
        }
        for p in path {
            state[p] = 2;
        }
    }
    Ok(())
}

/// Parses blank-line separated sentences in the CoNLL-U subset.
///
/// Rows with 3 fields are read as `ID FORM HEAD`; rows with 7 or more fields
/// follow the CoNLL-U column layout (HEAD is field 7). Comment lines,
/// multiword-token ranges (`3-4`) and empty nodes (`5.1`) are skipped.
pub fn parse_conllu(text: &str) -> Result<Vec<DepTree>> {
    let mut trees = Vec::new();
    let mut tokens = Vec::new();
    let mut heads = Vec::new();
    let mut first_line = 0;

    let mut flush = |tokens: &mut Vec<String>, heads: &mut Vec<usize>, line: usize| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let tree =
            DepTree::new(std::mem::take(tokens), std::mem::take(heads)).map_err(|e| match e {
                Error::Structure(msg) => {
                    Error::Structure(format!("sentence at line {line}: {msg}"))
                }
                other => other,
            })?;
        trees.push(tree);
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut heads, first_line)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let head_col = match fields.len() {
            3 => 2,
            n if n >= 7 => 6,
            n => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 3 or at least 7 tab-separated fields, found {n}"),
                })
            }
        };
        let id = fields[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("non-integer ID {id:?}"),
        })?;
        if tokens.is_empty() {
            first_line = lineno;
        }
        if id != tokens.len() + 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected ID {}, found {id}", tokens.len() + 1),
            });
        }
        let head: usize = fields[head_col].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("non-integer HEAD {:?}", fields[head_col]),
        })?;
        tokens.push(fields[1].to_string());
        heads.push(head);
    }
    flush(&mut tokens, &mut heads, first_line)?;
    Ok(trees)
}

/// Writes trees as 10-column CoNLL-U with unused columns set to `_`.
pub fn write_conllu(trees: &[DepTree]) -> String {
    let mut out = String::new();
    for (k, tree) in trees.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for (j, (form, head)) in tree.tokens.iter().zip(&tree.heads).enumerate() {
            let _ = writeln!(out, "{}\t{form}\t_\t_\t_\t_\t{head}\t_\t_\t_", j + 1);
        }
    }
    out
}

/// Pairwise tree distances between the words of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdcMatrix {
    len: usize,
    dist: Vec<u32>,
}

impl SdcMatrix {
    /// Wraps a row-major J×J table. Only shape is checked here.
    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self> {
        let len = rows.len();
        if len == 0 {
            return Err(Error::Format("empty mask".into()));
        }
        let mut dist = Vec::with_capacity(len * len);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != len {
                return Err(Error::Format(format!(
                    "row {} has {} fields, expected {len}",
                    i + 1,
                    row.len()
                )));
            }
            dist.extend(row);
        }
        Ok(SdcMatrix { len, dist })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.dist[a * self.len + b]
    }

    pub fn row(&self, p: usize) -> Result<&[u32]> {
        if p >= self.len {
            return Err(Error::Index {
                index: p,
                len: self.len,
            });
        }
        Ok(&self.dist[p * self.len..(p + 1) * self.len])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.dist.chunks(self.len)
    }
}

/// All-pairs hop counts by breadth-first search from every node.
pub fn sdc_matrix(tree: &DepTree) -> SdcMatrix {
    let n = tree.len();
    let adj = tree.adjacency();
    let mut dist = vec![u32::MAX; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for src in 0..n {
        let row = &mut dist[src * n..(src + 1) * n];
        row[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let d = row[u] + 1;
            for &v in &adj[u] {
                if row[v] == u32::MAX {
                    row[v] = d;
                    queue.push_back(v);
                }
            }
        }
    }
    SdcMatrix { len: n, dist }
}

/// Mask row for aligned word `p`.
pub fn sdc_row(m: &SdcMatrix, p: usize) -> Result<Vec<u32>> {
    m.row(p).map(<[u32]>::to_vec)
}

pub fn write_mask_tsv<W: Write>(m: &SdcMatrix, mut sink: W) -> std::io::Result<()> {
    let mut line = String::new();
    for row in m.rows() {
        line.clear();
        for (k, d) in row.iter().enumerate() {
            if k > 0 {
                line.push('\t');
            }
            let _ = write!(line, "{d}");
        }
        line.push('\n');
        sink.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn mask_to_tsv(m: &SdcMatrix) -> String {
    let mut buf = Vec::new();
    write_mask_tsv(m, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

/// Reads one J×J mask. Blank lines are not allowed inside a block.
pub fn read_mask_tsv<R: BufRead>(source: R) -> Result<SdcMatrix> {
    let mut rows = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            return Err(Error::Format(format!(
                "line {}: blank line inside mask",
                i + 1
            )));
        }
        let row = line
            .split('\t')
            .map(|f| {
                f.parse::<u32>()
                    .map_err(|_| Error::Format(format!("line {}: non-integer field {f:?}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    SdcMatrix::from_rows(rows)
}

/// Reads a blank-line separated sequence of masks.
pub fn read_mask_blocks(text: &str) -> Result<Vec<SdcMatrix>> {
    let normalized = text.replace("\r\n", "\n");
    normalized
        .split("\n\n")
        .map(|b| b.trim_matches('\n'))
        .filter(|b| !b.is_empty())
        .map(|b| read_mask_tsv(b.as_bytes()))
        .collect()
}
