//! Local encoder: an adaptive Gaussian mask around the aspect followed by
//! covariance self-attention.
//!
//! `sigma = softplus(W2 relu(W1 mean(H) + b1) + b2) + SIGMA_FLOOR` sets the width of a
//! zero-mean Gaussian that is sampled at `distance * interval` for every token;
//! aspect tokens sit at distance 0. The masked rows go through self-attention
//! whose queries and keys are mean-centred across tokens before the score
//! product. The encoder output is the mean of the attention output rows over
//! the aspect span.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::span::Span;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttentionVariant {
    #[default]
    Covariance,
    Original,
}

impl std::str::FromStr for AttentionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "covariance" => Ok(AttentionVariant::Covariance),
            "original" => Ok(AttentionVariant::Original),
            other => Err(Error::invalid(format!(
                "unknown attention variant {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttentionVariant::Covariance => "covariance",
            AttentionVariant::Original => "original",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMaskParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub sample_interval: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
}

/// Tape handles for the sigma network.
#[derive(Debug, Clone, Copy)]
pub struct MaskVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Tape handles for one attention head.
#[derive(Debug, Clone, Copy)]
pub struct AttnVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    pub sample_interval: f64,
    pub normalize_mask: bool,
    pub use_mask: bool,
    pub variant: AttentionVariant,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            sample_interval: 0.2,
            normalize_mask: false,
            use_mask: true,
            variant: AttentionVariant::Covariance,
        }
    }
}

/// Handles produced by [`local_forward_on`], kept for traces.
#[derive(Debug, Clone)]
pub struct LocalTrace {
    pub output: Var,
    pub sigma: Option<Var>,
    pub mask: Option<Var>,
    pub attention: Vec<Var>,
}

impl MaskVars {
    pub fn register(tape: &mut Tape, p: &GaussianMaskParams) -> Self {
        MaskVars {
            w1: tape.leaf(p.w1.clone()),
            b1: tape.leaf(p.b1.clone()),
            w2: tape.leaf(p.w2.clone()),
            b2: tape.leaf(p.b2.clone()),
        }
    }
}

impl AttnVars {
    pub fn register(tape: &mut Tape, p: &AttentionParams) -> Self {
        AttnVars {
            wq: tape.leaf(p.wq.clone()),
            wk: tape.leaf(p.wk.clone()),
            wv: tape.leaf(p.wv.clone()),
        }
    }
}

/// `GK(x) = exp(-x^2 / (2 sigma^2)) / (sigma sqrt(2 pi))`.
pub fn gaussian_pdf(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok((-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt()))
}

/// Sample points `distance(j) * interval` for every token position.
pub fn mask_points(n: usize, span: Span, interval: f64) -> Result<Vec<f64>> {
    let span = Span::new(span.start, span.end, n)?;
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::invalid(format!(
            "sample interval must be positive, got {interval}"
        )));
    }
    Ok((0..n).map(|j| span.distance(j) as f64 * interval).collect())
}

pub fn build_gaussian_mask(n: usize, span: Span, sigma: f64, interval: f64) -> Result<Tensor> {
    build_gaussian_mask_with(n, span, sigma, interval, false)
}

/// As [`build_gaussian_mask`]; `normalize` rescales so the aspect value is 1.
pub fn build_gaussian_mask_with(
    n: usize,
    span: Span,
    sigma: f64,
    interval: f64,
    normalize: bool,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let s = tape.leaf(Tensor::scalar(sigma));
    let m = tape.gaussian_mask(s, mask_points(n, span, interval)?, normalize)?;
    Ok(tape.value(m).clone())
}

/// Row `j` of `h` scaled by `mask[j]`.
pub fn apply_mask(mask: &Tensor, h: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let m = tape.leaf(mask.clone());
    let hv = tape.leaf(h.clone());
    let out = tape.row_scale(m, hv)?;
    Ok(tape.value(out).clone())
}

/// Added to the softplus output so sigma stays positive after underflow.
pub const SIGMA_FLOOR: f64 = 1e-6;

pub fn sigma_on(tape: &mut Tape, h: Var, p: &MaskVars) -> Result<Var> {
    let pooled = tape.mean_rows(h)?;
    let pooled = tape.as_row(pooled)?;
    let z = tape.matmul(pooled, p.w1)?;
    let z = tape.add_bias(z, p.b1)?;
    let z = tape.relu(z);
    let z = tape.matmul(z, p.w2)?;
    let z = tape.add_bias(z, p.b2)?;
    let s = tape.softplus(z);
    let s = tape.flatten(s)?;
    let floor = tape.leaf(Tensor::scalar(SIGMA_FLOOR));
    tape.add(s, floor)
}

pub fn compute_sigma(h: &Tensor, p: &GaussianMaskParams) -> Result<f64> {
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let vars = MaskVars::register(&mut tape, p);
    let s = sigma_on(&mut tape, hv, &vars)?;
    Ok(tape.value(s).data()[0])
}

/// `softmax(q k^T / sqrt(d_k)) v` with scores `[i, j] = <q_i, k_j>`.
/// Returns the output and the attention matrix.
pub fn scaled_dot_on(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let d_k = tape.value(q).dims2("attention")?.1;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (d_k as f64).sqrt());
    let weights = tape.softmax(scores);
    let out = tape.matmul(weights, v)?;
    Ok((out, weights))
}

pub fn attention_on(
    tape: &mut Tape,
    h: Var,
    p: &AttnVars,
    variant: AttentionVariant,
) -> Result<(Var, Var)> {
    let mut q = tape.matmul(h, p.wq)?;
    let mut k = tape.matmul(h, p.wk)?;
    let v = tape.matmul(h, p.wv)?;
    if variant == AttentionVariant::Covariance {
        q = tape.center_rows(q)?;
        k = tape.center_rows(k)?;
    }
    scaled_dot_on(tape, q, k, v)
}

/// Attention output `[n, d_k]` together with its `[n, n]` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: Tensor,
    pub weights: Tensor,
}

fn attention_tensor(
    h: &Tensor,
    p: &AttentionParams,
    variant: AttentionVariant,
) -> Result<AttentionOutput> {
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let vars = AttnVars::register(&mut tape, p);
    let (out, w) = attention_on(&mut tape, hv, &vars, variant)?;
    Ok(AttentionOutput {
        output: tape.value(out).clone(),
        weights: tape.value(w).clone(),
    })
}

pub fn original_attention(h_g: &Tensor, p: &AttentionParams) -> Result<AttentionOutput> {
    attention_tensor(h_g, p, AttentionVariant::Original)
}

pub fn covariance_attention(h_g: &Tensor, p: &AttentionParams) -> Result<AttentionOutput> {
    attention_tensor(h_g, p, AttentionVariant::Covariance)
}

/// Scaled dot-product attention on explicit query, key and value matrices.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<AttentionOutput> {
    let mut tape = Tape::new();
    let (qv, kv, vv) = (
        tape.leaf(q.clone()),
        tape.leaf(k.clone()),
        tape.leaf(v.clone()),
    );
    let (out, w) = scaled_dot_on(&mut tape, qv, kv, vv)?;
    Ok(AttentionOutput {
        output: tape.value(out).clone(),
        weights: tape.value(w).clone(),
    })
}

/// Full local encoder on the tape. With several heads the pooled head outputs
/// are concatenated.
pub fn local_forward_on(
    tape: &mut Tape,
    h: Var,
    span: Span,
    mask: &MaskVars,
    heads: &[AttnVars],
    opts: &LocalOptions,
) -> Result<LocalTrace> {
    let n = tape.value(h).dims2("local encoder input")?.0;
    let span = Span::new(span.start, span.end, n)?;
    if heads.is_empty() {
        return Err(Error::invalid(
            "local encoder needs at least one attention head",
        ));
    }
    let (masked, sigma, mask_var) = if opts.use_mask {
        let sigma = sigma_on(tape, h, mask)?;
        let m = tape.gaussian_mask(
            sigma,
            mask_points(n, span, opts.sample_interval)?,
            opts.normalize_mask,
        )?;
        (tape.row_scale(m, h)?, Some(sigma), Some(m))
    } else {
        (h, None, None)
    };
    let mut pooled = Vec::with_capacity(heads.len());
    let mut attention = Vec::with_capacity(heads.len());
    for head in heads {
        let (out, w) = attention_on(tape, masked, head, opts.variant)?;
        let rows = tape.gather_rows(out, &span.indices())?;
        pooled.push(tape.mean_rows(rows)?);
        attention.push(w);
    }
    let output = if pooled.len() == 1 {
        pooled[0]
    } else {
        tape.concat(&pooled)?
    };
    Ok(LocalTrace {
        output,
        sigma,
        mask: mask_var,
        attention,
    })
}

/// Single-head local encoder on plain tensors; returns `h_local` of width `d_k`.
pub fn local_forward(
    h: &Tensor,
    span: Span,
    mask: &GaussianMaskParams,
    attn: &AttentionParams,
    normalize_mask: bool,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let mv = MaskVars::register(&mut tape, mask);
    let av = AttnVars::register(&mut tape, attn);
    let opts = LocalOptions {
        sample_interval: mask.sample_interval,
        normalize_mask,
        ..LocalOptions::default()
    };
    let trace = local_forward_on(&mut tape, hv, span, &mv, &[av], &opts)?;
    Ok(tape.value(trace.output).clone())
}
