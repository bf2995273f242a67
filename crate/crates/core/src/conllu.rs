//! CoNLL-U ingestion.
//!
//! Only the basic dependency layer is read: FORM, HEAD and DEPREL of regular
//! word lines. Multiword-token ranges (`3-4`) and empty nodes (`5.1`) are
//! skipped, comment lines start with `#`, and sentences are separated by blank
//! lines.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A validated dependency tree. `heads` are 1-based with 0 marking the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepTree {
    tokens: Vec<String>,
    heads: Vec<usize>,
    rels: Vec<String>,
}

impl DepTree {
    pub fn new(tokens: Vec<String>, heads: Vec<usize>, rels: Vec<String>) -> Result<Self> {
        validate_tree(&tokens, &heads, &rels).map_err(Error::InvalidArgument)?;
        Ok(DepTree {
            tokens,
            heads,
            rels,
        })
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

    pub fn rels(&self) -> &[String] {
        &self.rels
    }

    /// 0-based head of token `i`, `None` for the root.
    pub fn head_of(&self, i: usize) -> Option<usize> {
        self.heads[i].checked_sub(1)
    }

    /// Undirected neighbours of every token with the relation label of the
    /// connecting arc (the dependent's DEPREL), sorted by token index.
    pub fn undirected_adjacency(&self) -> Vec<Vec<(usize, &str)>> {
        let mut adj: Vec<Vec<(usize, &str)>> = vec![Vec::new(); self.len()];
        for i in 0..self.len() {
            if let Some(h) = self.head_of(i) {
                adj[i].push((h, &self.rels[i]));
                adj[h].push((i, &self.rels[i]));
            }
        }
        adj.iter_mut().for_each(|n| n.sort_by_key(|&(j, _)| j));
        adj
    }

    /// Relation label on the arc between adjacent tokens `a` and `b`.
    pub fn arc_label(&self, a: usize, b: usize) -> Option<&str> {
        if self.head_of(a) == Some(b) {
            Some(&self.rels[a])
        } else if self.head_of(b) == Some(a) {
            Some(&self.rels[b])
        } else {
            None
        }
    }
}

/// Checks the single-root, in-range, acyclic head structure.
pub fn validate_tree(
    tokens: &[String],
    heads: &[usize],
    rels: &[String],
) -> std::result::Result<(), String> {
    let n = tokens.len();
    if n == 0 {
        return Err("empty sentence".into());
    }
    if heads.len() != n || rels.len() != n {
        return Err(format!(
            "parallel arrays differ in length: {} tokens, {} heads, {} rels",
            n,
            heads.len(),
            rels.len()
        ));
    }
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            return Err(format!("token {} has head {h} outside [0, {n}]", i + 1));
        }
        if h == i + 1 {
            return Err(format!("token {} is its own head", i + 1));
        }
    }
    let roots: Vec<usize> = (0..n).filter(|&i| heads[i] == 0).map(|i| i + 1).collect();
    match roots.len() {
        0 => {}
        1 => {}
        _ => return Err(format!("multiple roots at tokens {roots:?}")),
    }
    // 0 = unvisited, 1 = on current walk, 2 = known to reach the root
    let mut state = vec![0u8; n];
    for start in 0..n {
        let mut walk = Vec::new();
        let mut cur = start;
        loop {
            match state[cur] {
                2 => break,
                1 => {
                    let pos = walk.iter().position(|&w| w == cur).unwrap();
                    let cycle: Vec<String> = walk[pos..]
                        .iter()
                        .chain([&cur])
                        .map(|&t| (t + 1).to_string())
                        .collect();
                    return Err(format!("cycle through tokens {}", cycle.join(" -> ")));
                }
                _ => {}
            }
            state[cur] = 1;
            walk.push(cur);
            match heads[cur] {
                0 => break,
                h => cur = h - 1,
            }
        }
        walk.into_iter().for_each(|w| state[w] = 2);
    }
    if roots.is_empty() {
        return Err("no root token".into());
    }
    Ok(())
}

struct Pending {
    first_line: usize,
    tokens: Vec<String>,
    heads: Vec<usize>,
    rels: Vec<String>,
}

impl Pending {
    fn new(line: usize) -> Self {
        Pending {
            first_line: line,
            tokens: Vec::new(),
            heads: Vec::new(),
            rels: Vec::new(),
        }
    }

    fn finish(self, out: &mut Vec<DepTree>) -> Result<()> {
        if self.tokens.is_empty() {
            return Ok(());
        }
        let line = self.first_line;
        let tree = DepTree::new(self.tokens, self.heads, self.rels).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::Parse { line, msg },
            other => other,
        })?;
        out.push(tree);
        Ok(())
    }
}

/// Parse every sentence in a CoNLL-U document.
pub fn parse_conllu(text: &str) -> Result<Vec<DepTree>> {
    let mut out = Vec::new();
    let mut cur: Option<Pending> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(p) = cur.take() {
                p.finish(&mut out)?;
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let p = cur.get_or_insert_with(|| Pending::new(line_no));
        let id: usize = id.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("non-integer ID {id:?}"),
        })?;
        if id != p.tokens.len() + 1 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected token ID {}, found {id}", p.tokens.len() + 1),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("non-integer HEAD {:?}", cols[6]),
        })?;
        p.tokens.push(cols[1].to_string());
        p.heads.push(head);
        p.rels.push(cols[7].to_string());
    }
    if let Some(p) = cur.take() {
        p.finish(&mut out)?;
    }
    Ok(out)
}

/// Read a UTF-8 CoNLL-U stream.
pub fn read_conllu(mut reader: impl Read) -> Result<Vec<DepTree>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        msg: format!("input is not UTF-8: {e}"),
    })?;
    parse_conllu(&text)
}
