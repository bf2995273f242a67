//! Dual-level graph attention over an aspect-word graph.
//!
//! Each layer has `U` dual-level heads and `V` relational heads. A dual-level
//! head first scores every edge against the aspect (`beta`), then scores every
//! neighbour with its logit multiplied by the edge score (`omega`), and sums
//! the circular correlation of projected node and edge vectors under `omega`.
//! A relational head weights the projected neighbours by a softmax over an MLP
//! of the edge vectors alone. The head outputs are concatenated into the new
//! aspect vector; edge vectors are multiplied by a square relation matrix
//! before the next layer, while neighbour vectors stay at their input values.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DualHeadParams {
    /// `[d_aspect, d_head]`
    pub w_a: Tensor,
    /// `[d_edge, d_head]`
    pub w_e: Tensor,
    /// `[d_node, d_head]`
    pub w_i: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelHeadParams {
    /// `[d_node, d_head]`
    pub w_v: Tensor,
    /// `[d_edge, d_hidden]`
    pub w_v1: Tensor,
    pub b_v1: Tensor,
    /// `[d_hidden, 1]`
    pub w_v2: Tensor,
    pub b_v2: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgatLayerParams {
    pub dual: Vec<DualHeadParams>,
    pub rel: Vec<RelHeadParams>,
    /// `[d_edge, d_edge]`; absent on the last layer.
    pub w_r: Option<Tensor>,
}

/// Aspect vector, neighbour rows and the parallel edge rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub h_a: Tensor,
    pub h_n: Tensor,
    pub e: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct DualHeadVars {
    pub w_a: Var,
    pub w_e: Var,
    pub w_i: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct RelHeadVars {
    pub w_v: Var,
    pub w_v1: Var,
    pub b_v1: Var,
    pub w_v2: Var,
    pub b_v2: Var,
}

#[derive(Debug, Clone)]
pub struct LayerVars {
    pub dual: Vec<DualHeadVars>,
    pub rel: Vec<RelHeadVars>,
    pub w_r: Option<Var>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DgatOptions {
    /// Divide both attention logits by `sqrt(d_head)`.
    pub scale_logits: bool,
}

/// Inverted dropout applied to each layer output.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut Rng,
}

impl Dropout<'_> {
    fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        if self.rate >= 1.0 {
            return Err(Error::invalid(format!(
                "dropout rate must be below 1, got {}",
                self.rate
            )));
        }
        let keep = 1.0 - self.rate;
        let n = tape.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if self.rng.next_f64() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let m = tape.leaf(Tensor::new(tape.value(x).shape().to_vec(), mask)?);
        tape.mul(x, m)
    }
}

/// Per-layer attention distributions, one entry per head.
#[derive(Debug, Clone, Default)]
pub struct LayerTrace {
    pub beta: Vec<Var>,
    pub omega: Vec<Var>,
    pub rho: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct GlobalTrace {
    pub output: Var,
    pub layers: Vec<LayerTrace>,
    /// The graph had no word nodes and the output is all zeros.
    pub empty_graph: bool,
}

impl DualHeadVars {
    pub fn register(tape: &mut Tape, p: &DualHeadParams) -> Self {
        DualHeadVars {
            w_a: tape.leaf(p.w_a.clone()),
            w_e: tape.leaf(p.w_e.clone()),
            w_i: tape.leaf(p.w_i.clone()),
        }
    }
}

impl RelHeadVars {
    pub fn register(tape: &mut Tape, p: &RelHeadParams) -> Self {
        RelHeadVars {
            w_v: tape.leaf(p.w_v.clone()),
            w_v1: tape.leaf(p.w_v1.clone()),
            b_v1: tape.leaf(p.b_v1.clone()),
            w_v2: tape.leaf(p.w_v2.clone()),
            b_v2: tape.leaf(p.b_v2.clone()),
        }
    }
}

impl LayerVars {
    pub fn register(tape: &mut Tape, p: &DgatLayerParams) -> Self {
        LayerVars {
            dual: p
                .dual
                .iter()
                .map(|h| DualHeadVars::register(tape, h))
                .collect(),
            rel: p
                .rel
                .iter()
                .map(|h| RelHeadVars::register(tape, h))
                .collect(),
            w_r: p.w_r.as_ref().map(|w| tape.leaf(w.clone())),
        }
    }
}

impl DgatLayerParams {
    pub fn output_width(&self) -> usize {
        let dual: usize = self.dual.iter().map(|h| h.w_a.shape()[1]).sum();
        let rel: usize = self.rel.iter().map(|h| h.w_v.shape()[1]).sum();
        dual + rel
    }
}

fn rows_of(tape: &Tape, v: Var, what: &'static str) -> Result<usize> {
    Ok(tape.value(v).dims2(what)?.0)
}

fn require_neighbours(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("graph has no neighbours"));
    }
    Ok(())
}

/// `x W` projected and flattened for a `[d]` vector `x`.
fn project_vector(tape: &mut Tape, x: Var, w: Var) -> Result<Var> {
    let row = tape.as_row(x)?;
    tape.matmul(row, w)
}

/// `rows . query` for rows `[m, k]` and a `[1, k]` query, as `[m]`.
fn row_dots(tape: &mut Tape, rows: Var, query_row: Var) -> Result<Var> {
    let qt = tape.transpose(query_row)?;
    let s = tape.matmul(rows, qt)?;
    tape.flatten(s)
}

/// Weighted sum `sum_i w_i rows_i` for weights `[m]`.
fn weighted_sum(tape: &mut Tape, weights: Var, rows: Var) -> Result<Var> {
    let w = tape.as_row(weights)?;
    let s = tape.matmul(w, rows)?;
    tape.flatten(s)
}

fn maybe_scale(tape: &mut Tape, logits: Var, d_head: usize, opts: &DgatOptions) -> Var {
    if opts.scale_logits {
        tape.scale(logits, 1.0 / (d_head as f64).sqrt())
    } else {
        logits
    }
}

struct DualParts {
    beta: Var,
    omega: Var,
    output: Var,
}

fn dual_head_parts(
    tape: &mut Tape,
    h_a: Var,
    h_n: Var,
    e: Var,
    head: &DualHeadVars,
    opts: &DgatOptions,
) -> Result<DualParts> {
    require_neighbours(rows_of(tape, h_n, "neighbour rows")?)?;
    let qa = project_vector(tape, h_a, head.w_a)?;
    let d_head = tape.value(qa).shape()[1];
    let ep = tape.matmul(e, head.w_e)?;
    let edge_logits = row_dots(tape, ep, qa)?;
    let edge_logits = maybe_scale(tape, edge_logits, d_head, opts);
    let beta = tape.softmax(edge_logits);

    let hp = tape.matmul(h_n, head.w_i)?;
    let node_logits = row_dots(tape, hp, qa)?;
    let node_logits = tape.mul(beta, node_logits)?;
    let node_logits = maybe_scale(tape, node_logits, d_head, opts);
    let omega = tape.softmax(node_logits);

    let composed = tape.circ_corr_rows(hp, ep)?;
    let output = weighted_sum(tape, omega, composed)?;
    Ok(DualParts {
        beta,
        omega,
        output,
    })
}

pub fn target_edge_attention_on(
    tape: &mut Tape,
    h_a: Var,
    e: Var,
    head: &DualHeadVars,
    opts: &DgatOptions,
) -> Result<Var> {
    require_neighbours(rows_of(tape, e, "edge rows")?)?;
    let qa = project_vector(tape, h_a, head.w_a)?;
    let d_head = tape.value(qa).shape()[1];
    let ep = tape.matmul(e, head.w_e)?;
    let logits = row_dots(tape, ep, qa)?;
    let logits = maybe_scale(tape, logits, d_head, opts);
    Ok(tape.softmax(logits))
}

pub fn target_node_attention_on(
    tape: &mut Tape,
    h_a: Var,
    h_n: Var,
    beta: Var,
    head: &DualHeadVars,
    opts: &DgatOptions,
) -> Result<Var> {
    require_neighbours(rows_of(tape, h_n, "neighbour rows")?)?;
    let qa = project_vector(tape, h_a, head.w_a)?;
    let d_head = tape.value(qa).shape()[1];
    let hp = tape.matmul(h_n, head.w_i)?;
    let logits = row_dots(tape, hp, qa)?;
    let logits = tape.mul(beta, logits)?;
    let logits = maybe_scale(tape, logits, d_head, opts);
    Ok(tape.softmax(logits))
}

/// Relational head output and its neighbour weights.
pub fn relational_head_on(
    tape: &mut Tape,
    h_n: Var,
    e: Var,
    head: &RelHeadVars,
) -> Result<(Var, Var)> {
    require_neighbours(rows_of(tape, h_n, "neighbour rows")?)?;
    let z = tape.matmul(e, head.w_v1)?;
    let z = tape.add_bias(z, head.b_v1)?;
    let z = tape.relu(z);
    let z = tape.matmul(z, head.w_v2)?;
    let z = tape.add_bias(z, head.b_v2)?;
    let logits = tape.flatten(z)?;
    let rho = tape.softmax(logits);
    let values = tape.matmul(h_n, head.w_v)?;
    Ok((weighted_sum(tape, rho, values)?, rho))
}

/// One layer. Returns the new aspect vector and the edges for the next layer.
pub fn dgat_layer_on(
    tape: &mut Tape,
    h_a: Var,
    h_n: Var,
    e: Var,
    layer: &LayerVars,
    opts: &DgatOptions,
    trace: &mut LayerTrace,
) -> Result<(Var, Var)> {
    if layer.dual.is_empty() && layer.rel.is_empty() {
        return Err(Error::invalid("layer has no heads"));
    }
    let mut heads = Vec::with_capacity(layer.dual.len() + layer.rel.len());
    for head in &layer.dual {
        let parts = dual_head_parts(tape, h_a, h_n, e, head, opts)?;
        trace.beta.push(parts.beta);
        trace.omega.push(parts.omega);
        heads.push(parts.output);
    }
    for head in &layer.rel {
        let (out, rho) = relational_head_on(tape, h_n, e, head)?;
        trace.rho.push(rho);
        heads.push(out);
    }
    let h_next = tape.concat(&heads)?;
    let e_next = match layer.w_r {
        Some(w_r) => tape.matmul(e, w_r)?,
        None => e,
    };
    Ok((h_next, e_next))
}

fn zero_width(tape: &Tape, layer: &LayerVars) -> usize {
    let dual: usize = layer
        .dual
        .iter()
        .map(|h| tape.value(h.w_a).shape()[1])
        .sum();
    let rel: usize = layer.rel.iter().map(|h| tape.value(h.w_v).shape()[1]).sum();
    dual + rel
}

/// Stacked layers. An empty neighbour set yields a zero vector of the last
/// layer's width.
pub fn global_forward_on(
    tape: &mut Tape,
    h_a: Var,
    h_n: Var,
    e: Var,
    layers: &[LayerVars],
    opts: &DgatOptions,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<GlobalTrace> {
    let last = layers
        .last()
        .ok_or_else(|| Error::invalid("global encoder needs at least one layer"))?;
    let m = rows_of(tape, h_n, "neighbour rows")?;
    if m != rows_of(tape, e, "edge rows")? {
        return Err(Error::shape(
            "global encoder rows",
            tape.value(h_n).shape(),
            tape.value(e).shape(),
        ));
    }
    if m == 0 {
        let width = zero_width(tape, last);
        return Ok(GlobalTrace {
            output: tape.leaf(Tensor::zeros(&[width])),
            layers: vec![LayerTrace::default(); layers.len()],
            empty_graph: true,
        });
    }
    let (mut h, mut edges) = (h_a, e);
    let mut traces = Vec::with_capacity(layers.len());
    for layer in layers {
        let mut trace = LayerTrace::default();
        let (h_next, e_next) = dgat_layer_on(tape, h, h_n, edges, layer, opts, &mut trace)?;
        h = match dropout.as_deref_mut() {
            Some(d) => d.apply(tape, h_next)?,
            None => h_next,
        };
        edges = e_next;
        traces.push(trace);
    }
    Ok(GlobalTrace {
        output: h,
        layers: traces,
        empty_graph: false,
    })
}

struct Leaves {
    tape: Tape,
    h_a: Var,
    h_n: Var,
    e: Var,
}

impl Leaves {
    fn new(h_a: &Tensor, h_n: &Tensor, e: &Tensor) -> Self {
        let mut tape = Tape::new();
        let h_a = tape.leaf(h_a.clone());
        let h_n = tape.leaf(h_n.clone());
        let e = tape.leaf(e.clone());
        Leaves { tape, h_a, h_n, e }
    }
}

pub fn target_edge_attention(h_a: &Tensor, e: &Tensor, head: &DualHeadParams) -> Result<Tensor> {
    let mut l = Leaves::new(h_a, &Tensor::zeros(&[0, 1]), e);
    let hv = DualHeadVars::register(&mut l.tape, head);
    let beta = target_edge_attention_on(&mut l.tape, l.h_a, l.e, &hv, &DgatOptions::default())?;
    Ok(l.tape.value(beta).clone())
}

pub fn target_node_attention(
    h_a: &Tensor,
    h_n: &Tensor,
    beta: &Tensor,
    head: &DualHeadParams,
) -> Result<Tensor> {
    let mut l = Leaves::new(h_a, h_n, &Tensor::zeros(&[0, 1]));
    let hv = DualHeadVars::register(&mut l.tape, head);
    let b = l.tape.leaf(beta.clone());
    let omega =
        target_node_attention_on(&mut l.tape, l.h_a, l.h_n, b, &hv, &DgatOptions::default())?;
    Ok(l.tape.value(omega).clone())
}

/// Concatenated output of all dual-level heads.
pub fn dual_head(batch: &GraphBatch, heads: &[DualHeadParams]) -> Result<Tensor> {
    let mut l = Leaves::new(&batch.h_a, &batch.h_n, &batch.e);
    let mut outs = Vec::with_capacity(heads.len());
    for p in heads {
        let hv = DualHeadVars::register(&mut l.tape, p);
        outs.push(
            dual_head_parts(&mut l.tape, l.h_a, l.h_n, l.e, &hv, &DgatOptions::default())?.output,
        );
    }
    let out = l.tape.concat(&outs)?;
    Ok(l.tape.value(out).clone())
}

pub fn relation_update(e: &Tensor, w_r: &Tensor) -> Result<Tensor> {
    e.matmul(w_r)
}

pub fn relational_head(h_n: &Tensor, e: &Tensor, head: &RelHeadParams) -> Result<Tensor> {
    let mut l = Leaves::new(&Tensor::zeros(&[1]), h_n, e);
    let hv = RelHeadVars::register(&mut l.tape, head);
    let (out, _) = relational_head_on(&mut l.tape, l.h_n, l.e, &hv)?;
    Ok(l.tape.value(out).clone())
}

/// Output of a plain-tensor global pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalOutput {
    pub h_global: Tensor,
    pub empty_graph: bool,
}

/// One layer on plain tensors; returns `(h_a', E')`.
pub fn dgat_layer(
    batch: &GraphBatch,
    params: &DgatLayerParams,
    opts: &DgatOptions,
) -> Result<(Tensor, Tensor)> {
    let mut l = Leaves::new(&batch.h_a, &batch.h_n, &batch.e);
    let lv = LayerVars::register(&mut l.tape, params);
    if batch.h_n.shape()[0] == 0 {
        let e_next = match &params.w_r {
            Some(w) => relation_update(&batch.e, w)?,
            None => batch.e.clone(),
        };
        return Ok((Tensor::zeros(&[params.output_width()]), e_next));
    }
    let mut trace = LayerTrace::default();
    let (h, e) = dgat_layer_on(&mut l.tape, l.h_a, l.h_n, l.e, &lv, opts, &mut trace)?;
    Ok((l.tape.value(h).clone(), l.tape.value(e).clone()))
}

pub fn global_forward(
    batch: &GraphBatch,
    layers: &[DgatLayerParams],
    opts: &DgatOptions,
) -> Result<GlobalOutput> {
    let mut l = Leaves::new(&batch.h_a, &batch.h_n, &batch.e);
    let lvs: Vec<LayerVars> = layers
        .iter()
        .map(|p| LayerVars::register(&mut l.tape, p))
        .collect();
    let trace = global_forward_on(&mut l.tape, l.h_a, l.h_n, l.e, &lvs, opts, None)?;
    Ok(GlobalOutput {
        h_global: l.tape.value(trace.output).clone(),
        empty_graph: trace.empty_graph,
    })
}
