//! A small reverse-mode automatic differentiation tape over [`Tensor`]s.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep from the
//! output visits every node after all of its consumers. Only the operations
//! the model actually needs are provided; each one carries its own adjoint.

use crate::error::{Error, Result};
use crate::fft::{circ_conv_slice, circ_corr_slice};
use crate::tensor::{self, matmul, sigmoid, softmax_slice, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Reshape(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    RowScale(Var, Var),
    CenterRows(Var),
    MeanRows(Var),
    SumRows(Var),
    GatherRows(Var, Vec<usize>),
    ConcatLast(Vec<Var>),
    Softmax(Var),
    Relu(Var),
    Softplus(Var),
    GaussianMask {
        sigma: Var,
        points: Vec<f64>,
        normalize: bool,
    },
    CircCorrRows(Var, Var),
    SoftmaxCrossEntropy {
        logits: Var,
        gold: usize,
    },
    SumSquares {
        a: Var,
        skip_rows: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node reached by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// The adjoint of `v`, or zeros shaped like `like` if `v` did not
    /// influence the output.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn gaussian_value(sigma: f64, x: f64, normalize: bool) -> f64 {
    let e = (-0.5 * (x / sigma).powi(2)).exp();
    if normalize {
        e
    } else {
        e / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    }
}

fn last_dim(t: &Tensor) -> usize {
    *t.shape().last().unwrap()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// View a vector `[d]` as a single row `[1, d]`.
    pub fn as_row(&mut self, a: Var) -> Result<Var> {
        let d = self.value(a).len();
        self.reshape(a, &[1, d])
    }

    /// Flatten any tensor to 1-D.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let d = self.value(a).len();
        self.reshape(a, &[d])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose()?;
        Ok(self.push(v, Op::Transpose(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// `[m, n] + [n]`, the bias broadcast over rows.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (_, n) = av.dims2("add_bias")?;
        if bv.shape() != [n] {
            return Err(Error::shape("add_bias", av.shape(), bv.shape()));
        }
        let mut out = av.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, x) in row.iter_mut().zip(bv.data()) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::AddBias(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    /// Row `j` of `h` multiplied by `s[j]`.
    pub fn row_scale(&mut self, s: Var, h: Var) -> Result<Var> {
        let (sv, hv) = (self.value(s), self.value(h));
        let (n, d) = hv.dims2("row_scale")?;
        if sv.shape() != [n] {
            return Err(Error::shape("row_scale", sv.shape(), hv.shape()));
        }
        let mut out = hv.clone();
        for (row, &k) in out.data_mut().chunks_mut(d).zip(sv.data()) {
            row.iter_mut().for_each(|x| *x *= k);
        }
        Ok(self.push(out, Op::RowScale(s, h)))
    }

    /// Subtract the column means: every row minus the average row.
    pub fn center_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (_, d) = av.dims2("center_rows")?;
        let mean = av.mean_rows()?;
        let mut out = av.clone();
        for row in out.data_mut().chunks_mut(d) {
            for (o, m) in row.iter_mut().zip(mean.data()) {
                *o -= m;
            }
        }
        Ok(self.push(out, Op::CenterRows(a)))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mean_rows()?;
        Ok(self.push(v, Op::MeanRows(a)))
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (r, _) = av.dims2("sum_rows")?;
        let v = av.mean_rows()?.scale(r as f64);
        Ok(self.push(v, Op::SumRows(a)))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let (r, d) = av.dims2("gather_rows")?;
        if rows.is_empty() {
            return Err(Error::invalid("gather_rows: empty index list"));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::invalid(format!(
                "gather_rows: row {bad} out of range for {r} rows"
            )));
        }
        let data = rows
            .iter()
            .flat_map(|&i| av.row(i).iter().copied())
            .collect();
        let v = Tensor::from_parts(vec![rows.len(), d], data);
        Ok(self.push(v, Op::GatherRows(a, rows.to_vec())))
    }

    /// Concatenate along the last axis. Inputs must agree on all other axes.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self
            .value(
                *parts
                    .first()
                    .ok_or_else(|| Error::invalid("concat of nothing"))?,
            )
            .clone();
        let lead: Vec<usize> = first.shape()[..first.ndim() - 1].to_vec();
        let rows: usize = lead.iter().product();
        let mut width = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.shape()[..pv.ndim() - 1] != lead[..] {
                return Err(Error::shape("concat", first.shape(), pv.shape()));
            }
            width += last_dim(pv);
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                let pv = self.value(p);
                let w = last_dim(pv);
                data.extend_from_slice(&pv.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(width);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::ConcatLast(parts.to_vec()),
        ))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let d = last_dim(av);
        let mut out = av.clone();
        for (o, x) in out.data_mut().chunks_mut(d).zip(av.data().chunks(d)) {
            softmax_slice(x, o);
        }
        self.push(out, Op::Softmax(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = tensor::relu_tensor(self.value(a));
        self.push(v, Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = tensor::softplus_tensor(self.value(a));
        self.push(v, Op::Softplus(a))
    }

    /// Zero-mean Gaussian density with scale `sigma` (shape `[1]`) sampled at
    /// `points`. With `normalize` the peak is 1 instead of `1/(sigma sqrt(2 pi))`.
    pub fn gaussian_mask(&mut self, sigma: Var, points: Vec<f64>, normalize: bool) -> Result<Var> {
        let sv = self.value(sigma);
        if sv.shape() != [1] {
            return Err(Error::shape("gaussian_mask", sv.shape(), &[1]));
        }
        let s = sv.data()[0];
        if s.is_nan() || s <= 0.0 {
            return Err(Error::invalid(format!("sigma must be positive, got {s}")));
        }
        if points.is_empty() {
            return Err(Error::invalid("gaussian_mask: no sample points"));
        }
        let data: Vec<f64> = points
            .iter()
            .map(|&x| gaussian_value(s, x, normalize))
            .collect();
        let v = Tensor::from_parts(vec![points.len()], data);
        Ok(self.push(
            v,
            Op::GaussianMask {
                sigma,
                points,
                normalize,
            },
        ))
    }

    /// Row-wise circular correlation of two equally shaped tensors.
    pub fn circ_corr_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape("circ_corr_rows", av.shape(), bv.shape()));
        }
        let d = last_dim(av);
        let mut data = Vec::with_capacity(av.len());
        for (x, y) in av.data().chunks(d).zip(bv.data().chunks(d)) {
            data.extend(circ_corr_slice(x, y)?);
        }
        let v = Tensor::from_parts(av.shape().to_vec(), data);
        Ok(self.push(v, Op::CircCorrRows(a, b)))
    }

    /// `logsumexp(logits) - logits[gold]`, the negative log-likelihood of a
    /// softmax classifier.
    pub fn softmax_cross_entropy(&mut self, logits: Var, gold: usize) -> Result<Var> {
        let lv = self.value(logits);
        if lv.ndim() != 1 || gold >= lv.len() {
            return Err(Error::invalid(format!(
                "cross entropy: gold {gold} for logits {:?}",
                lv.shape()
            )));
        }
        let max = lv.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let v = Tensor::scalar(lse - lv.data()[gold]);
        Ok(self.push(v, Op::SoftmaxCrossEntropy { logits, gold }))
    }

    /// Sum of squared entries, ignoring the first `skip_rows` rows.
    pub fn sum_squares(&mut self, a: Var, skip_rows: usize) -> Var {
        let av = self.value(a);
        let d = last_dim(av);
        let s: f64 = av.data().iter().skip(skip_rows * d).map(|x| x * x).sum();
        self.push(Tensor::scalar(s), Op::SumSquares { a, skip_rows })
    }

    /// Sum of several `[1]`-shaped scalars.
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var> {
        let mut it = xs.iter();
        let mut acc = *it
            .next()
            .ok_or_else(|| Error::invalid("add_all of nothing"))?;
        for &x in it {
            acc = self.add(acc, x)?;
        }
        Ok(acc)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        if self.value(out).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got {:?}",
                self.value(out).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(Tensor::full(self.value(out).shape(), 1.0));

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |v: Var, delta: Tensor| match &mut grads[v.0] {
            Some(existing) => existing
                .data_mut()
                .iter_mut()
                .zip(delta.data())
                .for_each(|(e, d)| *e += d),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Reshape(a) => acc(*a, g.reshape(self.value(*a).shape())?),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, matmul(g, &bv.transpose()?)?);
                acc(*b, matmul(&av.transpose()?, g)?);
            }
            Op::Transpose(a) => acc(*a, g.transpose()?),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.zip_map(bv, "mul'", |x, y| x * y)?);
                acc(*b, g.zip_map(av, "mul'", |x, y| x * y)?);
            }
            Op::AddBias(a, b) => {
                acc(*a, g.clone());
                let (r, _) = g.dims2("add_bias'")?;
                acc(*b, g.mean_rows()?.scale(r as f64));
            }
            Op::Scale(a, c) => acc(*a, g.scale(*c)),
            Op::RowScale(s, h) => {
                let (sv, hv) = (self.value(*s), self.value(*h));
                let d = last_dim(hv);
                let ds: Vec<f64> = g
                    .data()
                    .chunks(d)
                    .zip(hv.data().chunks(d))
                    .map(|(gr, hr)| gr.iter().zip(hr).map(|(x, y)| x * y).sum())
                    .collect();
                let mut dh = g.clone();
                for (row, &k) in dh.data_mut().chunks_mut(d).zip(sv.data()) {
                    row.iter_mut().for_each(|x| *x *= k);
                }
                acc(*s, Tensor::from_parts(sv.shape().to_vec(), ds));
                acc(*h, dh);
            }
            Op::CenterRows(a) => {
                let d = last_dim(g);
                let mean = g.mean_rows()?;
                let mut da = g.clone();
                for row in da.data_mut().chunks_mut(d) {
                    for (o, m) in row.iter_mut().zip(mean.data()) {
                        *o -= m;
                    }
                }
                acc(*a, da);
            }
            Op::MeanRows(a) | Op::SumRows(a) => {
                let (r, d) = self.value(*a).dims2("rows'")?;
                let k = if matches!(node.op, Op::MeanRows(_)) {
                    1.0 / r as f64
                } else {
                    1.0
                };
                let data = (0..r)
                    .flat_map(|_| g.data().iter().map(move |x| x * k))
                    .collect();
                acc(*a, Tensor::from_parts(vec![r, d], data));
            }
            Op::GatherRows(a, rows) => {
                let av = self.value(*a);
                let d = last_dim(av);
                let mut da = Tensor::zeros(av.shape());
                for (r, &src) in rows.iter().enumerate() {
                    let dst = &mut da.data_mut()[src * d..(src + 1) * d];
                    for (o, x) in dst.iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                acc(*a, da);
            }
            Op::ConcatLast(parts) => {
                let total = last_dim(g);
                let rows = g.len() / total;
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let w = last_dim(pv);
                    let mut data = Vec::with_capacity(pv.len());
                    for r in 0..rows {
                        data.extend_from_slice(
                            &g.data()[r * total + offset..r * total + offset + w],
                        );
                    }
                    acc(p, Tensor::from_parts(pv.shape().to_vec(), data));
                    offset += w;
                }
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let d = last_dim(y);
                let mut da = g.clone();
                for (o, (yr, gr)) in da
                    .data_mut()
                    .chunks_mut(d)
                    .zip(y.data().chunks(d).zip(g.data().chunks(d)))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((oo, p), q) in o.iter_mut().zip(yr).zip(gr) {
                        *oo = p * (q - dot);
                    }
                }
                acc(*a, da);
            }
            Op::Relu(a) => {
                acc(
                    *a,
                    g.zip_map(
                        self.value(*a),
                        "relu'",
                        |gg, x| if x > 0.0 { gg } else { 0.0 },
                    )?,
                );
            }
            Op::Softplus(a) => {
                acc(
                    *a,
                    g.zip_map(self.value(*a), "softplus'", |gg, x| gg * sigmoid(x))?,
                );
            }
            Op::GaussianMask {
                sigma,
                points,
                normalize,
            } => {
                let s = self.value(*sigma).data()[0];
                let ds: f64 = points
                    .iter()
                    .zip(node.value.data())
                    .zip(g.data())
                    .map(|((&x, &y), &gg)| {
                        let dy = if *normalize {
                            y * x * x / (s * s * s)
                        } else {
                            y * (x * x / (s * s * s) - 1.0 / s)
                        };
                        gg * dy
                    })
                    .sum();
                acc(*sigma, Tensor::scalar(ds));
            }
            Op::CircCorrRows(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let d = last_dim(av);
                let mut da = Vec::with_capacity(av.len());
                let mut db = Vec::with_capacity(bv.len());
                for ((ar, br), gr) in av
                    .data()
                    .chunks(d)
                    .zip(bv.data().chunks(d))
                    .zip(g.data().chunks(d))
                {
                    da.extend(circ_corr_slice(gr, br)?);
                    db.extend(circ_conv_slice(ar, gr)?);
                }
                acc(*a, Tensor::from_parts(av.shape().to_vec(), da));
                acc(*b, Tensor::from_parts(bv.shape().to_vec(), db));
            }
            Op::SoftmaxCrossEntropy { logits, gold } => {
                let lv = self.value(*logits);
                let mut p = lv.clone();
                softmax_slice(lv.data(), p.data_mut());
                p.data_mut()[*gold] -= 1.0;
                acc(*logits, p.scale(g.data()[0]));
            }
            Op::SumSquares { a, skip_rows } => {
                let av = self.value(*a);
                let d = last_dim(av);
                let k = 2.0 * g.data()[0];
                let mut da = av.scale(k);
                da.data_mut()[..(*skip_rows * d).min(av.len())]
                    .iter_mut()
                    .for_each(|x| *x = 0.0);
                acc(*a, da);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, max_relative_error};
    use crate::rng::Rng;

    /// Checks the tape gradient of `build` at `x` against central differences.
    fn check<F>(x: Tensor, build: F)
    where
        F: Fn(&mut Tape, Var) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let out = build(&mut tape, xv).unwrap();
        let grads = tape.backward(out).unwrap();
        let analytic = grads.get_or_zeros(xv, &x);
        let numeric = finite_diff_grad(
            |t| {
                let mut tp = Tape::new();
                let v = tp.leaf(t.clone());
                let o = build(&mut tp, v)?;
                Ok(tp.value(o).data()[0])
            },
            &x,
            1e-6,
        )
        .unwrap();
        let err = max_relative_error(&analytic, &numeric).unwrap();
        assert!(
            err < 1e-6,
            "relative error {err}\n{analytic:?}\n{numeric:?}"
        );
    }

    fn weights(tape: &mut Tape, seed: u64, shape: &[usize]) -> Var {
        tape.leaf(Rng::new(seed).uniform(shape, 1.0))
    }

    fn probe(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
        // Random linear functional of y, so every output entry matters.
        let shape = tape.value(y).shape().to_vec();
        let w = weights(tape, seed, &shape);
        let p = tape.mul(y, w)?;
        let flat = tape.flatten(p)?;
        let row = tape.as_row(flat)?;
        let ones = tape.leaf(Tensor::full(&[tape.value(flat).len(), 1], 1.0));
        let s = tape.matmul(row, ones)?;
        tape.flatten(s)
    }

    #[test]
    fn matmul_transpose_bias() {
        check(Rng::new(1).uniform(&[3, 4], 1.0), |t, x| {
            let w = weights(t, 2, &[4, 2]);
            let b = weights(t, 3, &[2]);
            let y = t.matmul(x, w)?;
            let y = t.add_bias(y, b)?;
            let y = t.transpose(y)?;
            probe(t, y, 4)
        });
    }

    #[test]
    fn softmax_and_centering() {
        check(Rng::new(5).uniform(&[4, 3], 1.0), |t, x| {
            let c = t.center_rows(x)?;
            let s = t.softmax(c);
            probe(t, s, 6)
        });
    }

    #[test]
    fn rowscale_wrt_scale() {
        check(Rng::new(7).uniform(&[4], 1.0), |t, s| {
            let h = weights(t, 8, &[4, 3]);
            let y = t.row_scale(s, h)?;
            probe(t, y, 9)
        });
    }

    #[test]
    fn gather_sum_mean_concat() {
        check(Rng::new(10).uniform(&[5, 2], 1.0), |t, x| {
            let g = t.gather_rows(x, &[4, 1, 1])?;
            let s = t.sum_rows(g)?;
            let m = t.mean_rows(x)?;
            let c = t.concat(&[s, m])?;
            probe(t, c, 11)
        });
    }

    #[test]
    fn nonlinearities_and_cross_entropy() {
        check(Rng::new(12).uniform(&[3], 2.0), |t, x| {
            let a = t.relu(x);
            let b = t.softplus(x);
            let c = t.add(a, b)?;
            let d = t.sub(c, x)?;
            let e = t.scale(d, 1.7);
            t.softmax_cross_entropy(e, 1)
        });
    }

    #[test]
    fn gaussian_mask_sigma_gradient() {
        for normalize in [false, true] {
            check(Tensor::scalar(0.8), move |t, s| {
                let m = t.gaussian_mask(s, vec![0.4, 0.2, 0.0, 0.2, 0.6], normalize)?;
                probe(t, m, 13)
            });
        }
    }

    #[test]
    fn circular_correlation_both_operands() {
        for d in [4, 5] {
            check(Rng::new(14).uniform(&[2, d], 1.0), |t, a| {
                let b = weights(t, 15, &[2, d]);
                let y = t.circ_corr_rows(a, b)?;
                probe(t, y, 16)
            });
            check(Rng::new(17).uniform(&[2, d], 1.0), |t, b| {
                let a = weights(t, 18, &[2, d]);
                let y = t.circ_corr_rows(a, b)?;
                probe(t, y, 19)
            });
        }
    }

    #[test]
    fn sum_squares_skips_rows() {
        let x = Rng::new(20).uniform(&[3, 2], 1.0);
        check(x.clone(), |t, x| Ok(t.sum_squares(x, 1)));
        let mut t = Tape::new();
        let v = t.leaf(x);
        let s = t.sum_squares(v, 1);
        let g = t.backward(s).unwrap();
        assert_eq!(&g.get(v).unwrap().data()[..2], &[0.0, 0.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let v = t.leaf(Tensor::zeros(&[2]));
        assert!(t.backward(v).is_err());
    }
}
