//! Aspect-word interactive graphs.
//!
//! The dependency tree is treated as undirected, the aspect tokens are
//! contracted into a single super-node, and every token within `kappa_max`
//! hops of it becomes a word node joined to the aspect by one edge. The edge
//! carries a composed tag: the relation labels along the shortest path plus
//! the hop count, rendered `dep1:...:depK:K`.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::conllu::DepTree;
use crate::error::{Error, Result};
use crate::span::Span;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComposedTag {
    path: Vec<String>,
}

impl ComposedTag {
    pub fn path(&self) -> &[String] {
        &self.path
    }

    pub fn hops(&self) -> usize {
        self.path.len()
    }
}

impl fmt::Display for ComposedTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for dep in &self.path {
            write!(f, "{dep}:")?;
        }
        write!(f, "{}", self.hops())
    }
}

pub fn compose_tag(path_tags: Vec<String>, hops: usize) -> Result<ComposedTag> {
    if hops == 0 {
        return Err(Error::invalid("composed tag needs at least one hop"));
    }
    if path_tags.len() != hops {
        return Err(Error::invalid(format!(
            "composed tag: {} labels for {hops} hops",
            path_tags.len()
        )));
    }
    Ok(ComposedTag { path: path_tags })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AwigOptions {
    pub kappa_max: usize,
    /// Ignore `punct` arcs while traversing.
    pub drop_punct: bool,
}

impl Default for AwigOptions {
    fn default() -> Self {
        AwigOptions {
            kappa_max: 3,
            drop_punct: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwigEdge {
    /// Index into [`Awig::word_nodes`].
    pub node: usize,
    pub tag: ComposedTag,
    /// Token path from an aspect token to the word, both ends included.
    pub via: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Awig {
    pub aspect_tokens: Vec<usize>,
    /// Source token index of each word node; node ids are positions here.
    pub word_nodes: Vec<usize>,
    /// One edge per word node, parallel to `word_nodes`.
    pub edges: Vec<AwigEdge>,
}

impl Awig {
    pub fn num_words(&self) -> usize {
        self.word_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_nodes.is_empty()
    }

    /// JSON rendering used by `build-graph`.
    pub fn to_json(&self, tree: &DepTree) -> Value {
        let nodes: Vec<Value> = self
            .word_nodes
            .iter()
            .map(|&t| json!({"token": t, "text": tree.tokens()[t]}))
            .collect();
        let edges: Vec<Value> = self
            .edges
            .iter()
            .map(|e| {
                json!({
                    "node": e.node,
                    "path": e.tag.path(),
                    "hops": e.tag.hops(),
                    "tag": e.tag.to_string(),
                })
            })
            .collect();
        json!({"aspect_tokens": self.aspect_tokens, "nodes": nodes, "edges": edges})
    }
}

/// Builds the graph for one aspect.
///
/// The search is level-synchronous: each BFS frontier is kept sorted by token
/// index and a newly reached token takes the smallest-index frontier token
/// adjacent to it as its predecessor, so equal-length paths are resolved
/// deterministically.
pub fn build_awig(tree: &DepTree, span: Span, opts: &AwigOptions) -> Result<Awig> {
    let n = tree.len();
    let span = Span::new(span.start, span.end, n)?;
    let adj = tree.undirected_adjacency();

    const UNSEEN: usize = usize::MAX;
    let mut parent = vec![UNSEEN; n];
    let mut depth = vec![0usize; n];
    let mut seen = vec![false; n];
    span.indices().into_iter().for_each(|i| seen[i] = true);

    let mut frontier = span.indices();
    let mut level = 0;
    while !frontier.is_empty() && level < opts.kappa_max {
        level += 1;
        let mut next = Vec::new();
        for &u in &frontier {
            for &(v, rel) in &adj[u] {
                if seen[v] || (opts.drop_punct && rel == "punct") {
                    continue;
                }
                seen[v] = true;
                parent[v] = u;
                depth[v] = level;
                next.push(v);
            }
        }
        next.sort_unstable();
        frontier = next;
    }

    let mut word_nodes = Vec::new();
    let mut edges = Vec::new();
    for t in (0..n).filter(|&t| parent[t] != UNSEEN) {
        let mut via = vec![t];
        let mut cur = t;
        while !span.contains(cur) {
            cur = parent[cur];
            via.push(cur);
        }
        via.reverse();
        let labels: Vec<String> = via
            .windows(2)
            .map(|w| {
                tree.arc_label(w[0], w[1])
                    .expect("BFS follows tree arcs")
                    .to_string()
            })
            .collect();
        debug_assert_eq!(labels.len(), depth[t]);
        let node = word_nodes.len();
        word_nodes.push(t);
        edges.push(AwigEdge {
            node,
            tag: compose_tag(labels, depth[t])?,
            via,
        });
    }
    Ok(Awig {
        aspect_tokens: span.indices(),
        word_nodes,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    /// root <- w1 <- w2 <- aspect
    fn chain() -> DepTree {
        DepTree::new(
            strings(&["w1", "w2", "aspect"]),
            vec![0, 1, 2],
            strings(&["root", "dep_a", "dep_b"]),
        )
        .unwrap()
    }

    #[test]
    fn chain_tree_tags() {
        let g = build_awig(
            &chain(),
            Span::new(2, 3, 3).unwrap(),
            &AwigOptions::default(),
        )
        .unwrap();
        assert_eq!(g.aspect_tokens, vec![2]);
        assert_eq!(g.word_nodes, vec![0, 1]);
        let w1 = &g.edges[0];
        let w2 = &g.edges[1];
        assert_eq!(w2.tag.path(), &["dep_b"]);
        assert_eq!(w2.tag.to_string(), "dep_b:1");
        assert_eq!(w1.tag.path(), &["dep_b", "dep_a"]);
        assert_eq!(w1.tag.to_string(), "dep_b:dep_a:2");
        assert_eq!(w1.via, vec![2, 1, 0]);
    }

    #[test]
    fn kappa_cutoff_discards_far_words() {
        let opts = AwigOptions {
            kappa_max: 1,
            drop_punct: false,
        };
        let g = build_awig(&chain(), Span::new(2, 3, 3).unwrap(), &opts).unwrap();
        assert_eq!(g.word_nodes, vec![1]);
    }

    #[test]
    fn whole_sentence_aspect_has_no_words() {
        let g = build_awig(
            &chain(),
            Span::new(0, 3, 3).unwrap(),
            &AwigOptions::default(),
        )
        .unwrap();
        assert!(g.is_empty());
        assert_eq!(g.aspect_tokens, vec![0, 1, 2]);
    }

    #[test]
    fn invalid_span() {
        assert!(build_awig(&chain(), Span { start: 2, end: 5 }, &AwigOptions::default()).is_err());
    }

    #[test]
    fn compose_tag_rendering() {
        assert_eq!(
            compose_tag(strings(&["nsubj"]), 1).unwrap().to_string(),
            "nsubj:1"
        );
        assert_eq!(
            compose_tag(strings(&["amod", "nsubj"]), 2)
                .unwrap()
                .to_string(),
            "amod:nsubj:2"
        );
        assert!(compose_tag(vec![], 0).is_err());
        assert!(compose_tag(strings(&["a"]), 2).is_err());
    }

    #[test]
    fn punct_arcs_can_be_dropped() {
        // the(det) food(nsubj) was(cop) great(root) !(punct)
        let t = DepTree::new(
            strings(&["the", "food", "was", "great", "!"]),
            vec![2, 4, 4, 0, 4],
            strings(&["det", "nsubj", "cop", "root", "punct"]),
        )
        .unwrap();
        let span = Span::new(1, 2, 5).unwrap();
        let keep = build_awig(&t, span, &AwigOptions::default()).unwrap();
        assert_eq!(keep.word_nodes, vec![0, 2, 3, 4]);
        let tags: Vec<String> = keep.edges.iter().map(|e| e.tag.to_string()).collect();
        assert_eq!(tags, ["det:1", "nsubj:cop:2", "nsubj:1", "nsubj:punct:2"]);
        let drop = build_awig(
            &t,
            span,
            &AwigOptions {
                kappa_max: 3,
                drop_punct: true,
            },
        )
        .unwrap();
        assert_eq!(drop.word_nodes, vec![0, 2, 3]);
    }

    #[test]
    fn contraction_breaks_ties_by_token_index() {
        // aspect = {a, b}; both depend on p, so p is one hop away through either.
        let t = DepTree::new(
            strings(&["p", "a", "b", "q"]),
            vec![0, 1, 1, 1],
            strings(&["root", "r_a", "r_b", "r_q"]),
        )
        .unwrap();
        let g = build_awig(&t, Span::new(1, 3, 4).unwrap(), &AwigOptions::default()).unwrap();
        assert_eq!(g.word_nodes, vec![0, 3]);
        assert_eq!(g.edges[0].tag.to_string(), "r_a:1");
        assert_eq!(g.edges[0].via, vec![1, 0]);
        assert_eq!(g.edges[1].tag.to_string(), "r_a:r_q:2");
        assert_eq!(
            build_awig(&t, Span::new(1, 3, 4).unwrap(), &AwigOptions::default()).unwrap(),
            g
        );
    }

    #[test]
    fn json_schema() {
        let tree = chain();
        let g = build_awig(&tree, Span::new(2, 3, 3).unwrap(), &AwigOptions::default()).unwrap();
        let v = g.to_json(&tree);
        assert_eq!(v["aspect_tokens"], json!([2]));
        assert_eq!(v["nodes"][1], json!({"token": 1, "text": "w2"}));
        assert_eq!(
            v["edges"][0],
            json!({"node": 0, "path": ["dep_b", "dep_a"], "hops": 2, "tag": "dep_b:dep_a:2"})
        );
    }
}
