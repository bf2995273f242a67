//! Token and dependency-tag vocabularies and the lookup tables built on them.
//!
//! Token rows stand in for contextual encoder output: a sentence becomes the
//! matrix of its token rows, which both encoders consume. Composed tags are
//! encoded at a fixed width of `(kappa_max + 1) * d_tag`: `kappa_max` tag slots
//! right-padded with `PAD_TAG`, followed by a hop-count embedding.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::awig::ComposedTag;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TAG: usize = 0;
pub const UNK_TAG: usize = 1;

/// String-to-id map with the two reserved ids `PAD = 0` and `UNK = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    items: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from(vec!["<pad>".to_string(), "<unk>".to_string()])
    }
}

impl From<Vec<String>> for Vocab {
    fn from(items: Vec<String>) -> Self {
        let ids = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Vocab { items, ids }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.items
    }
}

impl Vocab {
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Vocab::default();
        for w in words {
            v.insert(w);
        }
        v
    }

    pub fn insert(&mut self, w: &str) -> usize {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.items.len();
        self.items.push(w.to_string());
        self.ids.insert(w.to_string(), id);
        id
    }

    /// Id of `w`, or `UNK` if it is out of vocabulary.
    pub fn id(&self, w: &str) -> usize {
        match self.ids.get(w) {
            Some(&id) if id > UNK => id,
            _ => UNK,
        }
    }

    pub fn contains(&self, w: &str) -> bool {
        self.ids.get(w).is_some_and(|&id| id > UNK)
    }

    pub fn item(&self, id: usize) -> Option<&str> {
        self.items.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.len() <= 2
    }
}

/// Dependency relations plus the hop-count range `1..=kappa_max`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagVocab {
    pub tags: Vocab,
    pub kappa_max: usize,
}

impl TagVocab {
    pub fn build<'a>(rels: impl IntoIterator<Item = &'a str>, kappa_max: usize) -> Self {
        TagVocab {
            tags: Vocab::build(rels),
            kappa_max,
        }
    }

    pub fn tag_id(&self, rel: &str) -> usize {
        self.tags.id(rel)
    }

    /// Row of hop count `hops` in the hop table.
    pub fn hop_id(&self, hops: usize) -> Result<usize> {
        if hops == 0 || hops > self.kappa_max {
            return Err(Error::invalid(format!(
                "hop count {hops} outside 1..={}",
                self.kappa_max
            )));
        }
        Ok(hops - 1)
    }

    /// Tag-table rows of the padded path and the hop-table row of `tag`.
    pub fn encode(&self, tag: &ComposedTag) -> Result<(Vec<usize>, usize)> {
        let hop = self.hop_id(tag.hops())?;
        let mut ids: Vec<usize> = tag.path().iter().map(|r| self.tag_id(r)).collect();
        ids.resize(self.kappa_max, PAD_TAG);
        Ok((ids, hop))
    }

    pub fn edge_width(&self, d_tag: usize) -> usize {
        (self.kappa_max + 1) * d_tag
    }
}

/// A lookup table `[rows, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Tensor,
}

impl EmbeddingTable {
    pub fn new(weights: Tensor) -> Result<Self> {
        weights.dims2("embedding table")?;
        Ok(EmbeddingTable { weights })
    }

    pub fn rows(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn lookup(&self, ids: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let table = tape.leaf(self.weights.clone());
        let out = tape.gather_rows(table, ids)?;
        Ok(tape.value(out).clone())
    }
}

/// `[n, d_model]` matrix of token rows.
pub fn embed_tokens(tokens: &[String], vocab: &Vocab, table: &EmbeddingTable) -> Result<Tensor> {
    if tokens.is_empty() {
        return Err(Error::invalid("cannot embed an empty token list"));
    }
    let ids: Vec<usize> = tokens.iter().map(|t| vocab.id(t)).collect();
    table.lookup(&ids)
}

/// Fixed-width edge vector for one composed tag.
pub fn embed_composed_tag(
    tag: &ComposedTag,
    vocab: &TagVocab,
    tag_table: &EmbeddingTable,
    hop_table: &EmbeddingTable,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let tags = tape.leaf(tag_table.weights.clone());
    let hops = tape.leaf(hop_table.weights.clone());
    let out = edge_features(&mut tape, tags, hops, vocab, std::slice::from_ref(tag))?;
    let flat = tape.flatten(out)?;
    Ok(tape.value(flat).clone())
}

/// `[m, (kappa_max + 1) * d_tag]` edge matrix for a list of composed tags.
pub fn edge_features(
    tape: &mut Tape,
    tag_table: Var,
    hop_table: Var,
    vocab: &TagVocab,
    tags: &[ComposedTag],
) -> Result<Var> {
    let d_tag = tape.value(tag_table).dims2("tag table")?.1;
    if tape.value(hop_table).dims2("hop table")?.1 != d_tag {
        return Err(Error::shape(
            "edge_features",
            tape.value(tag_table).shape(),
            tape.value(hop_table).shape(),
        ));
    }
    let mut tag_ids = Vec::with_capacity(tags.len() * vocab.kappa_max);
    let mut hop_ids = Vec::with_capacity(tags.len());
    for t in tags {
        let (ids, hop) = vocab.encode(t)?;
        tag_ids.extend(ids);
        hop_ids.push(hop);
    }
    let slots = tape.gather_rows(tag_table, &tag_ids)?;
    let slots = tape.reshape(slots, &[tags.len(), vocab.kappa_max * d_tag])?;
    let hop = tape.gather_rows(hop_table, &hop_ids)?;
    tape.concat(&[slots, hop])
}

#[derive(Debug, Deserialize)]
struct VectorRecord {
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

/// Externally computed per-token vectors, keyed by the sentence's tokens.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedVectors {
    dim: usize,
    by_sentence: HashMap<Vec<String>, Tensor>,
}

impl PrecomputedVectors {
    /// Reads JSON Lines records `{"tokens": [...], "vectors": [[...], ...]}`.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut out = PrecomputedVectors::default();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: VectorRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            if rec.tokens.is_empty() || rec.vectors.len() != rec.tokens.len() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "{} vectors for {} tokens",
                        rec.vectors.len(),
                        rec.tokens.len()
                    ),
                });
            }
            let t = Tensor::from_rows(&rec.vectors).map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            let dim = t.shape()[1];
            if out.dim != 0 && out.dim != dim {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("vector width {dim} differs from earlier width {}", out.dim),
                });
            }
            out.dim = dim;
            out.by_sentence.insert(rec.tokens, t);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.by_sentence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_sentence.is_empty()
    }

    pub fn get(&self, tokens: &[String]) -> Option<&Tensor> {
        self.by_sentence.get(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::awig::compose_tag;
    use crate::rng::Rng;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn vocab_reserved_ids_and_unk() {
        let v = Vocab::build(["food", "great", "food"]);
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("food"), 2);
        assert_eq!(v.id("great"), 3);
        assert_eq!(v.id("nope"), UNK);
        assert_eq!(v.id("<pad>"), UNK);
        let round: Vocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(round, v);
    }

    #[test]
    fn token_embedding_rows() {
        let v = Vocab::build(["a", "b"]);
        let table = EmbeddingTable::new(Rng::new(1).uniform(&[4, 3], 1.0)).unwrap();
        let h = embed_tokens(&s(&["a"]), &v, &table).unwrap();
        assert_eq!(h.shape(), &[1, 3]);
        let h = embed_tokens(&s(&["b", "b", "zzz"]), &v, &table).unwrap();
        assert_eq!(h.row(0), h.row(1));
        assert_eq!(h.row(2), table.weights.row(UNK));
        assert!(embed_tokens(&[], &v, &table).is_err());
    }

    #[test]
    fn composed_tag_padding_rule() {
        let vocab = TagVocab::build(["nsubj", "amod"], 3);
        let d = 2;
        let tags = EmbeddingTable::new(Rng::new(2).uniform(&[vocab.tags.len(), d], 1.0)).unwrap();
        let hops = EmbeddingTable::new(Rng::new(3).uniform(&[3, d], 1.0)).unwrap();
        let row = |t: &EmbeddingTable, i: usize| t.weights.row(i).to_vec();

        let one = compose_tag(s(&["nsubj"]), 1).unwrap();
        let got = embed_composed_tag(&one, &vocab, &tags, &hops).unwrap();
        let want = [
            row(&tags, vocab.tag_id("nsubj")),
            row(&tags, PAD_TAG),
            row(&tags, PAD_TAG),
            row(&hops, 0),
        ]
        .concat();
        assert_eq!(got.data(), &want[..]);
        assert_eq!(got.len(), vocab.edge_width(d));

        let two = compose_tag(s(&["amod", "nsubj"]), 2).unwrap();
        let got = embed_composed_tag(&two, &vocab, &tags, &hops).unwrap();
        let want = [
            row(&tags, vocab.tag_id("amod")),
            row(&tags, vocab.tag_id("nsubj")),
            row(&tags, PAD_TAG),
            row(&hops, 1),
        ]
        .concat();
        assert_eq!(got.data(), &want[..]);
        assert_eq!(got, embed_composed_tag(&two, &vocab, &tags, &hops).unwrap());

        let unseen = compose_tag(s(&["xcomp"]), 1).unwrap();
        let got = embed_composed_tag(&unseen, &vocab, &tags, &hops).unwrap();
        assert_eq!(&got.data()[..d], tags.weights.row(UNK_TAG));

        let far = compose_tag(s(&["a", "b", "c", "d"]), 4).unwrap();
        assert!(embed_composed_tag(&far, &vocab, &tags, &hops).is_err());
    }

    #[test]
    fn gather_gradient_is_sparse() {
        let mut tape = Tape::new();
        let table = tape.leaf(Rng::new(4).uniform(&[5, 3], 1.0));
        let rows = tape.gather_rows(table, &[1, 3, 3]).unwrap();
        let loss = tape.sum_squares(rows, 0);
        let g = tape.backward(loss).unwrap();
        let g = g.get(table).unwrap();
        for untouched in [0, 2, 4] {
            assert!(g.row(untouched).iter().all(|&x| x == 0.0));
        }
        assert!(g.row(3).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn precomputed_vectors() {
        let text = "{\"tokens\":[\"a\",\"b\"],\"vectors\":[[1,2],[3,4]]}\n\n{\"tokens\":[\"c\"],\"vectors\":[[5,6]]}\n";
        let pv = PrecomputedVectors::read(text.as_bytes()).unwrap();
        assert_eq!(pv.len(), 2);
        assert_eq!(pv.dim(), 2);
        assert_eq!(pv.get(&s(&["a", "b"])).unwrap().row(1), &[3.0, 4.0]);
        let bad = "{\"tokens\":[\"a\",\"b\"],\"vectors\":[[1,2]]}";
        let err = PrecomputedVectors::read(bad.as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("line 1"), "{err}");
        let ragged =
            "{\"tokens\":[\"a\"],\"vectors\":[[1,2]]}\n{\"tokens\":[\"b\"],\"vectors\":[[1]]}";
        assert!(PrecomputedVectors::read(ragged.as_bytes()).is_err());
    }
}
