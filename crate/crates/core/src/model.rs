//! The full classifier: token embeddings feed a local encoder (Gaussian mask
//! plus covariance self-attention) and a graph encoder over the aspect-word
//! graph; their outputs are concatenated and mapped to three class logits.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::awig::{build_awig, Awig, AwigOptions};
use crate::data::{Example, Label, NUM_CLASSES};
use crate::dgat::{
    global_forward_on, DgatOptions, Dropout, DualHeadVars, GlobalTrace, LayerVars, RelHeadVars,
};
use crate::embeddings::{edge_features, PrecomputedVectors, TagVocab, Vocab, PAD};
use crate::error::{Error, Result};
use crate::gradcheck::{finite_diff_grad, max_relative_error};
use crate::local::{
    local_forward_on, AttentionVariant, AttnVars, LocalOptions, LocalTrace, MaskVars,
};
use crate::rng::{init_weight, Rng};
use crate::span::Span;
use crate::tape::{Tape, Var};
use crate::tensor::{softmax, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub d_tag: usize,
    pub d_head: usize,
    /// Hidden width of the sigma network.
    pub d_hid: usize,
    pub dual_heads: usize,
    pub rel_heads: usize,
    pub layers: usize,
    pub local_heads: usize,
    pub kappa_max: usize,
    pub sample_interval: f64,
    pub dropout: f64,
    pub lr: f64,
    /// Weight of the squared-norm penalty.
    pub l2: f64,
    pub epochs: usize,
    /// Gradients are accumulated over this many examples per update.
    pub batch_size: usize,
    /// Stop after this many epochs without a lower training loss; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub normalize_mask: bool,
    pub use_mask: bool,
    pub attention: AttentionVariant,
    pub scale_logits: bool,
    pub drop_punct: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            d_tag: 16,
            d_head: 16,
            d_hid: 32,
            dual_heads: 3,
            rel_heads: 3,
            layers: 2,
            local_heads: 1,
            kappa_max: 3,
            sample_interval: 0.2,
            dropout: 0.0,
            lr: 5e-5,
            l2: 1e-5,
            epochs: 30,
            batch_size: 1,
            patience: 0,
            seed: 42,
            normalize_mask: false,
            use_mask: true,
            attention: AttentionVariant::Covariance,
            scale_logits: false,
            drop_punct: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

impl ModelConfig {
    pub const KEYS: &'static [&'static str] = &[
        "d_model",
        "d_tag",
        "d_head",
        "d_hid",
        "dual_heads",
        "rel_heads",
        "layers",
        "local_heads",
        "kappa_max",
        "sample_interval",
        "dropout",
        "lr",
        "l2",
        "epochs",
        "batch_size",
        "patience",
        "seed",
        "normalize_mask",
        "use_mask",
        "attention",
        "scale_logits",
        "drop_punct",
    ];

    /// Small dimensions used by the gradient check and the overfit run.
    pub fn toy() -> Self {
        ModelConfig {
            d_model: 8,
            d_tag: 4,
            d_head: 4,
            d_hid: 8,
            dual_heads: 1,
            rel_heads: 1,
            layers: 1,
            ..ModelConfig::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "d_model" => self.d_model = parse_value(key, value)?,
            "d_tag" => self.d_tag = parse_value(key, value)?,
            "d_head" => self.d_head = parse_value(key, value)?,
            "d_hid" => self.d_hid = parse_value(key, value)?,
            "dual_heads" => self.dual_heads = parse_value(key, value)?,
            "rel_heads" => self.rel_heads = parse_value(key, value)?,
            "layers" => self.layers = parse_value(key, value)?,
            "local_heads" => self.local_heads = parse_value(key, value)?,
            "kappa_max" => self.kappa_max = parse_value(key, value)?,
            "sample_interval" => self.sample_interval = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "l2" => self.l2 = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "normalize_mask" => self.normalize_mask = parse_value(key, value)?,
            "use_mask" => self.use_mask = parse_value(key, value)?,
            "attention" => self.attention = parse_value(key, value)?,
            "scale_logits" => self.scale_logits = parse_value(key, value)?,
            "drop_punct" => self.drop_punct = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| {
                Error::Config(format!(
                    "line {}: {}",
                    idx + 1,
                    e.to_string().trim_start_matches("config: ")
                ))
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_model", self.d_model),
            ("d_tag", self.d_tag),
            ("d_head", self.d_head),
            ("d_hid", self.d_hid),
            ("layers", self.layers),
            ("local_heads", self.local_heads),
            ("kappa_max", self.kappa_max),
            ("batch_size", self.batch_size),
        ];
        if let Some((k, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if self.dual_heads + self.rel_heads == 0 {
            return Err(Error::Config(
                "dual_heads + rel_heads must be positive".into(),
            ));
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(Error::Config(format!(
                "sample_interval must be positive, got {}",
                self.sample_interval
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!(
                "l2 must be non-negative, got {}",
                self.l2
            )));
        }
        Ok(())
    }

    pub fn d_edge(&self) -> usize {
        (self.kappa_max + 1) * self.d_tag
    }

    pub fn graph_width(&self) -> usize {
        (self.dual_heads + self.rel_heads) * self.d_head
    }

    pub fn final_width(&self) -> usize {
        self.local_heads * self.d_head + self.graph_width()
    }

    pub fn awig_options(&self) -> AwigOptions {
        AwigOptions {
            kappa_max: self.kappa_max,
            drop_punct: self.drop_punct,
        }
    }

    fn local_options(&self) -> LocalOptions {
        LocalOptions {
            sample_interval: self.sample_interval,
            normalize_mask: self.normalize_mask,
            use_mask: self.use_mask,
            variant: self.attention,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
    /// Lookup table whose first `pad_rows` rows are left out of the penalty.
    Embedding {
        pad_rows: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// Every trainable tensor, addressable by a unique hierarchical name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    pub fn push(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, kind, value });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.params[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.position(name).map(|i| &mut self.params[i].value)
    }

    pub fn by_index(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn set_value(&mut self, i: usize, value: Tensor) -> Result<()> {
        let p = &mut self.params[i];
        if p.value.shape() != value.shape() {
            return Err(Error::shape(
                "set parameter",
                p.value.shape(),
                value.shape(),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn values(&self) -> Vec<&Tensor> {
        self.params.iter().map(|p| &p.value).collect()
    }

    pub fn values_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.iter_mut().map(|p| &mut p.value).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.position(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
    }
}

pub const TOKEN_TABLE: &str = "embed.tokens";
pub const TAG_TABLE: &str = "embed.tags";
pub const HOP_TABLE: &str = "embed.hops";

fn local_attn_name(h: usize, w: &str) -> String {
    format!("local.attn.h{h}.{w}")
}

fn dual_name(l: usize, u: usize, w: &str) -> String {
    format!("dgat.l{l}.dual.u{u}.{w}")
}

fn rel_name(l: usize, v: usize, w: &str) -> String {
    format!("dgat.l{l}.rel.v{v}.{w}")
}

fn relation_name(l: usize) -> String {
    format!("dgat.l{l}.W_r")
}

/// Everything the forward pass needs for one (sentence, aspect) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub tokens: Vec<String>,
    pub span: Span,
    pub awig: Awig,
    pub label: Label,
    /// Externally supplied token vectors replacing the token table.
    pub vectors: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Tensor,
    pub label: Label,
}

impl Prediction {
    fn from_logits(logits: &Tensor) -> Result<Prediction> {
        let probs = softmax(logits, 0)?;
        let best = probs
            .data()
            .iter()
            .enumerate()
            .fold(0, |b, (i, &p)| if p > probs.data()[b] { i } else { b });
        Ok(Prediction {
            probs,
            label: Label::from_index(best)?,
        })
    }
}

/// Tape handles of one forward pass.
pub struct ForwardPass {
    pub logits: Var,
    pub local: LocalTrace,
    pub global: GlobalTrace,
    leaves: Vec<Option<Var>>,
    token_leaf: Option<(Var, Vec<usize>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub analytic_max_abs: f64,
    pub numeric_max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub eps: f64,
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < tolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub tags: TagVocab,
    pub params: ModelParams,
}

impl Model {
    /// Fresh parameters drawn from `config.seed`: Glorot-uniform matrices and
    /// tables, zero biases, zero padding token row.
    pub fn new(config: ModelConfig, vocab: Vocab, tags: TagVocab) -> Result<Model> {
        config.validate()?;
        if tags.kappa_max != config.kappa_max {
            return Err(Error::Config(format!(
                "tag vocabulary built for kappa_max {} but config has {}",
                tags.kappa_max, config.kappa_max
            )));
        }
        let c = &config;
        let mut rng = Rng::new(c.seed);
        let mut p = ModelParams::default();
        let mut weight = |p: &mut ModelParams, name: String, shape: &[usize]| -> Result<()> {
            let value = init_weight(&mut rng, shape)?;
            p.push(name, ParamKind::Weight, value)
        };
        let bias = |p: &mut ModelParams, name: String, n: usize| {
            p.push(name, ParamKind::Bias, Tensor::zeros(&[n]))
        };

        let mut tokens = init_weight(&mut Rng::new(c.seed ^ 0x746f6b), &[vocab.len(), c.d_model])?;
        tokens.data_mut()[PAD * c.d_model..(PAD + 1) * c.d_model].fill(0.0);
        p.push(TOKEN_TABLE, ParamKind::Embedding { pad_rows: 1 }, tokens)?;
        let tag_rows = init_weight(
            &mut Rng::new(c.seed ^ 0x746167),
            &[tags.tags.len(), c.d_tag],
        )?;
        p.push(TAG_TABLE, ParamKind::Embedding { pad_rows: 1 }, tag_rows)?;
        let hops = init_weight(&mut Rng::new(c.seed ^ 0x686f70), &[c.kappa_max, c.d_tag])?;
        p.push(HOP_TABLE, ParamKind::Embedding { pad_rows: 0 }, hops)?;

        weight(&mut p, "local.mask.W1".into(), &[c.d_model, c.d_hid])?;
        bias(&mut p, "local.mask.b1".into(), c.d_hid)?;
        weight(&mut p, "local.mask.W2".into(), &[c.d_hid, 1])?;
        bias(&mut p, "local.mask.b2".into(), 1)?;
        for h in 0..c.local_heads {
            for w in ["Wq", "Wk", "Wv"] {
                weight(&mut p, local_attn_name(h, w), &[c.d_model, c.d_head])?;
            }
        }

        let d_edge = c.d_edge();
        for l in 0..c.layers {
            let d_aspect = if l == 0 { c.d_model } else { c.graph_width() };
            for u in 0..c.dual_heads {
                weight(&mut p, dual_name(l, u, "W_a"), &[d_aspect, c.d_head])?;
                weight(&mut p, dual_name(l, u, "W_e"), &[d_edge, c.d_head])?;
                weight(&mut p, dual_name(l, u, "W_i"), &[c.d_model, c.d_head])?;
            }
            for v in 0..c.rel_heads {
                weight(&mut p, rel_name(l, v, "W_v"), &[c.d_model, c.d_head])?;
                weight(&mut p, rel_name(l, v, "W_v1"), &[d_edge, c.d_head])?;
                bias(&mut p, rel_name(l, v, "b_v1"), c.d_head)?;
                weight(&mut p, rel_name(l, v, "W_v2"), &[c.d_head, 1])?;
                bias(&mut p, rel_name(l, v, "b_v2"), 1)?;
            }
            if l + 1 < c.layers {
                weight(&mut p, relation_name(l), &[d_edge, d_edge])?;
            }
        }
        weight(&mut p, "out.W_P".into(), &[c.final_width(), NUM_CLASSES])?;
        bias(&mut p, "out.b_P".into(), NUM_CLASSES)?;
        Ok(Model {
            config,
            vocab,
            tags,
            params: p,
        })
    }

    /// Builds both vocabularies from the training examples.
    pub fn from_training_data(config: ModelConfig, examples: &[Example]) -> Result<Model> {
        let vocab = Vocab::build(
            examples
                .iter()
                .flat_map(|e| e.tokens.iter().map(String::as_str)),
        );
        let tags = TagVocab::build(
            examples
                .iter()
                .flat_map(|e| e.dep_rels.iter().map(String::as_str)),
            config.kappa_max,
        );
        Model::new(config, vocab, tags)
    }

    pub fn prepare(&self, ex: &Example, vectors: Option<&PrecomputedVectors>) -> Result<Instance> {
        ex.validate()?;
        let span = ex.span()?;
        let awig = build_awig(&ex.tree()?, span, &self.config.awig_options())?;
        let vectors = match vectors.and_then(|v| v.get(&ex.tokens)) {
            Some(t) if t.shape()[1] != self.config.d_model => {
                return Err(Error::Config(format!(
                    "precomputed vectors have width {} but d_model is {}",
                    t.shape()[1],
                    self.config.d_model
                )))
            }
            other => other.cloned(),
        };
        Ok(Instance {
            tokens: ex.tokens.clone(),
            span,
            awig,
            label: ex.label,
            vectors,
        })
    }

    pub fn prepare_all(
        &self,
        examples: &[Example],
        vectors: Option<&PrecomputedVectors>,
    ) -> Result<Vec<Instance>> {
        examples.iter().map(|e| self.prepare(e, vectors)).collect()
    }

    fn var(&self, leaves: &[Option<Var>], name: &str) -> Result<Var> {
        leaves[self.params.index_of(name)?]
            .ok_or_else(|| Error::invalid(format!("parameter {name} not bound")))
    }

    /// Records the forward pass on `tape`. Dropout is applied only when
    /// `dropout_rng` is given and the configured rate is positive.
    pub fn forward_on(
        &self,
        tape: &mut Tape,
        inst: &Instance,
        dropout_rng: Option<&mut Rng>,
    ) -> Result<ForwardPass> {
        let c = &self.config;
        let token_idx = self.params.index_of(TOKEN_TABLE)?;
        let mut leaves: Vec<Option<Var>> = vec![None; self.params.len()];
        for (i, p) in self.params.iter().enumerate() {
            if i != token_idx {
                leaves[i] = Some(tape.leaf(p.value.clone()));
            }
        }

        // only the rows this sentence uses enter the tape
        let (h, token_leaf) = match &inst.vectors {
            Some(v) => (tape.leaf(v.clone()), None),
            None => {
                let ids: Vec<usize> = inst.tokens.iter().map(|t| self.vocab.id(t)).collect();
                let mut rows = ids.clone();
                rows.sort_unstable();
                rows.dedup();
                let table = self.params.by_index(token_idx).value.clone();
                let sub = Tensor::from_rows(
                    &rows
                        .iter()
                        .map(|&r| table.row(r).to_vec())
                        .collect::<Vec<_>>(),
                )?;
                let leaf = tape.leaf(sub);
                let local_ids: Vec<usize> = ids
                    .iter()
                    .map(|id| rows.binary_search(id).expect("row present"))
                    .collect();
                (tape.gather_rows(leaf, &local_ids)?, Some((leaf, rows)))
            }
        };

        let mask = MaskVars {
            w1: self.var(&leaves, "local.mask.W1")?,
            b1: self.var(&leaves, "local.mask.b1")?,
            w2: self.var(&leaves, "local.mask.W2")?,
            b2: self.var(&leaves, "local.mask.b2")?,
        };
        let heads = (0..c.local_heads)
            .map(|hd| {
                Ok(AttnVars {
                    wq: self.var(&leaves, &local_attn_name(hd, "Wq"))?,
                    wk: self.var(&leaves, &local_attn_name(hd, "Wk"))?,
                    wv: self.var(&leaves, &local_attn_name(hd, "Wv"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let local = local_forward_on(tape, h, inst.span, &mask, &heads, &c.local_options())?;

        let aspect_rows = tape.gather_rows(h, &inst.span.indices())?;
        let h_a = tape.sum_rows(aspect_rows)?;
        let (h_n, edges) = if inst.awig.is_empty() {
            (
                tape.leaf(Tensor::zeros(&[0, c.d_model])),
                tape.leaf(Tensor::zeros(&[0, c.d_edge()])),
            )
        } else {
            let tags: Vec<_> = inst.awig.edges.iter().map(|e| e.tag.clone()).collect();
            let e = edge_features(
                tape,
                self.var(&leaves, TAG_TABLE)?,
                self.var(&leaves, HOP_TABLE)?,
                &self.tags,
                &tags,
            )?;
            (tape.gather_rows(h, &inst.awig.word_nodes)?, e)
        };
        let layers = (0..c.layers)
            .map(|l| {
                Ok(LayerVars {
                    dual: (0..c.dual_heads)
                        .map(|u| {
                            Ok(DualHeadVars {
                                w_a: self.var(&leaves, &dual_name(l, u, "W_a"))?,
                                w_e: self.var(&leaves, &dual_name(l, u, "W_e"))?,
                                w_i: self.var(&leaves, &dual_name(l, u, "W_i"))?,
                            })
                        })
                        .collect::<Result<_>>()?,
                    rel: (0..c.rel_heads)
                        .map(|v| {
                            Ok(RelHeadVars {
                                w_v: self.var(&leaves, &rel_name(l, v, "W_v"))?,
                                w_v1: self.var(&leaves, &rel_name(l, v, "W_v1"))?,
                                b_v1: self.var(&leaves, &rel_name(l, v, "b_v1"))?,
                                w_v2: self.var(&leaves, &rel_name(l, v, "W_v2"))?,
                                b_v2: self.var(&leaves, &rel_name(l, v, "b_v2"))?,
                            })
                        })
                        .collect::<Result<_>>()?,
                    w_r: if l + 1 < c.layers {
                        Some(self.var(&leaves, &relation_name(l))?)
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut dropout = dropout_rng.filter(|_| c.dropout > 0.0).map(|rng| Dropout {
            rate: c.dropout,
            rng,
        });
        let opts = DgatOptions {
            scale_logits: c.scale_logits,
        };
        let global = global_forward_on(tape, h_a, h_n, edges, &layers, &opts, dropout.as_mut())?;

        let h_final = tape.concat(&[local.output, global.output])?;
        let row = tape.as_row(h_final)?;
        let z = tape.matmul(row, self.var(&leaves, "out.W_P")?)?;
        let z = tape.add_bias(z, self.var(&leaves, "out.b_P")?)?;
        let logits = tape.flatten(z)?;
        Ok(ForwardPass {
            logits,
            local,
            global,
            leaves,
            token_leaf,
        })
    }

    /// Full-size gradient of `out` for every parameter, in parameter order.
    fn collect_gradients(&self, tape: &Tape, pass: &ForwardPass, out: Var) -> Result<Vec<Tensor>> {
        let grads = tape.backward(out)?;
        let token_idx = self.params.index_of(TOKEN_TABLE)?;
        let mut result = Vec::with_capacity(self.params.len());
        for (i, p) in self.params.iter().enumerate() {
            let g = match (pass.leaves[i], i == token_idx, &pass.token_leaf) {
                (Some(v), _, _) => grads.get_or_zeros(v, &p.value),
                (None, true, Some((leaf, rows))) => {
                    let d = p.value.shape()[1];
                    let mut full = Tensor::zeros(p.value.shape());
                    if let Some(sub) = grads.get(*leaf) {
                        for (r, &row) in rows.iter().enumerate() {
                            full.data_mut()[row * d..(row + 1) * d].copy_from_slice(sub.row(r));
                        }
                    }
                    full
                }
                _ => Tensor::zeros(p.value.shape()),
            };
            result.push(g);
        }
        Ok(result)
    }

    pub fn predict(&self, inst: &Instance) -> Result<Prediction> {
        let mut tape = Tape::new();
        let pass = self.forward_on(&mut tape, inst, None)?;
        Prediction::from_logits(tape.value(pass.logits))
    }

    /// Cross-entropy of one example.
    pub fn example_loss(&self, inst: &Instance) -> Result<f64> {
        let mut tape = Tape::new();
        let pass = self.forward_on(&mut tape, inst, None)?;
        let ce = tape.softmax_cross_entropy(pass.logits, inst.label.index())?;
        Ok(tape.value(ce).data()[0])
    }

    /// Cross-entropy of one example, its gradients and the prediction made on
    /// the way.
    pub fn example_loss_and_grads(
        &self,
        inst: &Instance,
        dropout_rng: Option<&mut Rng>,
    ) -> Result<(f64, Vec<Tensor>, Prediction)> {
        let mut tape = Tape::new();
        let pass = self.forward_on(&mut tape, inst, dropout_rng)?;
        let ce = tape.softmax_cross_entropy(pass.logits, inst.label.index())?;
        let grads = self.collect_gradients(&tape, &pass, ce)?;
        let pred = Prediction::from_logits(tape.value(pass.logits))?;
        Ok((tape.value(ce).data()[0], grads, pred))
    }

    /// `l2 * sum ||W||^2` over weight matrices and embedding tables (padding
    /// rows excluded), with its gradient.
    pub fn penalty_and_grads(&self) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let mut terms = Vec::new();
        let mut leaves = Vec::with_capacity(self.params.len());
        for p in self.params.iter() {
            let skip = match p.kind {
                ParamKind::Weight => Some(0),
                ParamKind::Embedding { pad_rows } => Some(pad_rows),
                ParamKind::Bias => None,
            };
            match skip {
                Some(skip) => {
                    let v = tape.leaf(p.value.clone());
                    terms.push(tape.sum_squares(v, skip));
                    leaves.push(Some(v));
                }
                None => leaves.push(None),
            }
        }
        let total = tape.add_all(&terms)?;
        let total = tape.scale(total, self.config.l2);
        let value = tape.value(total).data()[0];
        let grads = tape.backward(total)?;
        let out = self
            .params
            .iter()
            .zip(leaves)
            .map(|(p, v)| match v {
                Some(v) => grads.get_or_zeros(v, &p.value),
                None => Tensor::zeros(p.value.shape()),
            })
            .collect();
        Ok((value, out))
    }

    pub fn penalty(&self) -> Result<f64> {
        Ok(self.penalty_and_grads()?.0)
    }

    /// Sum of per-example cross-entropies plus one penalty term.
    pub fn dataset_loss(&self, insts: &[Instance]) -> Result<f64> {
        let mut total = self.penalty()?;
        for inst in insts {
            total += self.example_loss(inst)?;
        }
        Ok(total)
    }

    /// Compares analytic and central-difference gradients of
    /// `cross_entropy + penalty` for every parameter tensor.
    pub fn gradcheck(&self, inst: &Instance, eps: f64) -> Result<GradcheckReport> {
        let (_, ce_grads, _) = self.example_loss_and_grads(inst, None)?;
        let (_, pen_grads) = self.penalty_and_grads()?;
        let mut probe = self.clone();
        let mut entries = Vec::with_capacity(self.params.len());
        for i in 0..self.params.len() {
            let analytic = ce_grads[i].add(&pen_grads[i])?;
            let original = self.params.by_index(i).value.clone();
            let numeric = finite_diff_grad(
                |t| {
                    probe.params.set_value(i, t.clone())?;
                    Ok(probe.example_loss(inst)? + probe.penalty()?)
                },
                &original,
                eps,
            )?;
            probe.params.set_value(i, original)?;
            if !analytic.data().iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite("analytic gradient"));
            }
            entries.push(GradcheckEntry {
                name: self.params.by_index(i).name.clone(),
                max_rel_error: max_relative_error(&analytic, &numeric)?,
                analytic_max_abs: analytic.max_abs(),
                numeric_max_abs: numeric.max_abs(),
            });
        }
        Ok(GradcheckReport { eps, entries })
    }

    /// Mask, attention and graph-attention values for plotting.
    pub fn trace(&self, inst: &Instance) -> Result<Value> {
        let mut tape = Tape::new();
        let pass = self.forward_on(&mut tape, inst, None)?;
        let pred = Prediction::from_logits(tape.value(pass.logits))?;
        let vec_of = |v: Var| tape.value(v).data().to_vec();
        let per_layer = |pick: fn(&crate::dgat::LayerTrace) -> &Vec<Var>| -> Vec<Vec<Vec<f64>>> {
            pass.global
                .layers
                .iter()
                .map(|l| pick(l).iter().map(|&v| vec_of(v)).collect())
                .collect()
        };
        let node_tokens: Vec<&str> = inst
            .awig
            .word_nodes
            .iter()
            .map(|&t| inst.tokens[t].as_str())
            .collect();
        let edge_tags: Vec<String> = inst.awig.edges.iter().map(|e| e.tag.to_string()).collect();
        Ok(json!({
            "tokens": inst.tokens,
            "aspect": [inst.span.start, inst.span.end],
            "sigma": pass.local.sigma.map(|s| tape.value(s).data()[0]),
            "mask": pass.local.mask.map(vec_of),
            "local_attention": tape.value(pass.local.attention[0]).to_rows(),
            "dgat": {
                "nodes": node_tokens,
                "tags": edge_tags,
                "empty_graph": pass.global.empty_graph,
                "beta": per_layer(|l| &l.beta),
                "omega": per_layer(|l| &l.omega),
                "rho": per_layer(|l| &l.rho),
            },
            "probs": pred.probs.data(),
            "prediction": pred.label.as_str(),
            "gold": inst.label.as_str(),
        }))
    }
}
