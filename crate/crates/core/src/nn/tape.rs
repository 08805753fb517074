//! Reverse-mode differentiation over shared tensors.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::party::Party;
use crate::ring::{col2im, im2col, Conv2dParams, FixedPointEncoder, RingTensor};
use crate::shares::ArithShare;

/// Handle of a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    /// `[R, C] + [C]`.
    AddBias(Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        params: Conv2dParams,
    },
    /// `[N, O, H, W] + [O]`.
    ChannelBias(Var, Var),
    Relu {
        x: Var,
        mask: ArithShare,
    },
    Sigmoid(Var),
    Softmax(Var),
    MaxPool {
        x: Var,
        mask: ArithShare,
        kernel: usize,
        stride: usize,
    },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    /// Terminal loss whose gradient with respect to its input was computed
    /// during the forward pass.
    FusedLoss {
        input: Var,
        grad: ArithShare,
    },
}

struct Node {
    value: ArithShare,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one forward pass; [`Tape::backward`] consumes it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    frozen: bool,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<ArithShare>>,
    params: BTreeMap<String, Var>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&ArithShare> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a parameter registered under `name`.
    pub fn param(&self, name: &str) -> Option<&ArithShare> {
        self.params.get(name).and_then(|&v| self.get(v))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// A tape on which parameters do not require gradients.
    pub fn inference() -> Self {
        Tape {
            frozen: true,
            ..Tape::default()
        }
    }

    fn push(&mut self, value: ArithShare, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: ArithShare, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that gradients are not propagated to.
    pub fn input(&mut self, value: ArithShare) -> Var {
        self.leaf(value, false)
    }

    /// A value whose gradient is wanted.
    pub fn variable(&mut self, value: ArithShare) -> Var {
        self.leaf(value, true)
    }

    /// A named trainable value.
    pub fn param(&mut self, name: &str, value: ArithShare) -> Var {
        let v = self.leaf(value, !self.frozen);
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn value(&self, v: Var) -> &ArithShare {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, p: &mut Party, a: Var, b: Var) -> Result<Var> {
        let out = p.mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn matmul(&mut self, p: &mut Party, a: Var, b: Var) -> Result<Var> {
        let out = p.matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// Adds a bias vector to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let b = self.value(bias);
        let out = self.value(x).map_share(|s| s.add_row_vector(b.share()))?;
        Ok(self.push(out, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn conv2d(&mut self, p: &mut Party, x: Var, w: Var, params: Conv2dParams) -> Result<Var> {
        let out = p.conv2d(self.value(x), self.value(w), params)?;
        Ok(self.push(out, Op::Conv2d { x, w, params }, &[x, w]))
    }

    /// Adds a per-channel bias to `[N, O, H, W]`.
    pub fn channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let b = self.value(bias);
        let [_, o, h, w] = dims4(xv.dims())?;
        if b.len() != o {
            return Err(Error::shape(format!("bias of {} for {o} channels", b.len())));
        }
        let plane = h * w;
        let bd = b.share().data();
        let out = xv.map_share(|s| {
            let mut t = s.clone();
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                *v = v.wrapping_add(bd[(i / plane) % o]);
            }
            Ok(t)
        })?;
        Ok(self.push(out, Op::ChannelBias(x, bias), &[x, bias]))
    }

    pub fn relu(&mut self, p: &mut Party, x: Var) -> Result<Var> {
        let (out, mask) = p.relu_with_mask(self.value(x))?;
        Ok(self.push(out, Op::Relu { x, mask }, &[x]))
    }

    pub fn sigmoid(&mut self, p: &mut Party, x: Var) -> Result<Var> {
        let out = p.sigmoid(self.value(x))?;
        Ok(self.push(out, Op::Sigmoid(x), &[x]))
    }

    /// Softmax along the last dimension.
    pub fn softmax(&mut self, p: &mut Party, x: Var) -> Result<Var> {
        let out = p.softmax(self.value(x))?;
        Ok(self.push(out, Op::Softmax(x), &[x]))
    }

    pub fn max_pool2d(&mut self, p: &mut Party, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let (out, mask) = p.max_pool2d_with_mask(self.value(x), kernel, stride)?;
        Ok(self.push(
            out,
            Op::MaxPool {
                x,
                mask,
                kernel,
                stride,
            },
            &[x],
        ))
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(dims)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).reshape(&[self.value(x).len()])?.sum_last().reshape(&[1])?;
        Ok(self.push(out, Op::Sum(x), &[x]))
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, p: &mut Party, x: Var) -> Result<Var> {
        let v = self.value(x);
        let n = v.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let total = v.reshape(&[n])?.sum_last().reshape(&[1])?;
        let out = p.div_public(&total, n as u64)?;
        Ok(self.push(out, Op::Mean(x), &[x]))
    }

    /// Mean cross-entropy of `softmax(logits)` against one-hot `target`
    /// rows. The gradient `(softmax - target) / batch` is formed directly.
    pub fn softmax_cross_entropy(&mut self, p: &mut Party, logits: Var, target: &ArithShare) -> Result<Var> {
        let z = self.value(logits).clone();
        if z.dims() != target.dims() {
            return Err(Error::shape(format!("{:?} vs {:?}", z.dims(), target.dims())));
        }
        let (batch, _) = z.share().rows_cols();
        let log_probs = p.log_softmax(&z)?;
        let probs = p.softmax(&z)?;
        let picked = p.mul(target, &log_probs)?;
        let loss = mean_rows(p, &picked, batch)?.neg();
        let grad = batch_mean_grad(p, &probs.sub(target)?, batch)?;
        Ok(self.push(loss, Op::FusedLoss { input: logits, grad }, &[logits]))
    }

    /// Mean binary cross-entropy of `sigmoid(z)` against 0/1 labels. The
    /// gradient `(sigmoid(z) - y) / batch` is formed directly.
    pub fn sigmoid_binary_cross_entropy(&mut self, p: &mut Party, z: Var, labels: &ArithShare) -> Result<Var> {
        let zv = self.value(z).clone();
        if zv.dims() != labels.dims() {
            return Err(Error::shape(format!("{:?} vs {:?}", zv.dims(), labels.dims())));
        }
        let batch = zv.dims().first().copied().unwrap_or(1);
        let n = zv.len();
        let s = p.sigmoid(&zv)?.reshape(&[n])?;
        let y = labels.reshape(&[n])?;
        // Probability of the true label: 1 - y + (2y - 1) s.
        let sign = p.add_const(&y.mul_int(2), -1.0)?;
        let agree = p.mul(&sign, &s)?;
        let correct = p.rsub_const(1.0, &y)?.add(&agree)?;
        let logs = p.log(&correct)?;
        let loss = mean_rows(p, &logs, batch)?.neg();
        let grad = batch_mean_grad(p, &s.sub(&y)?.reshape(zv.dims())?, batch)?;
        Ok(self.push(loss, Op::FusedLoss { input: z, grad }, &[z]))
    }

    /// Propagates gradients from `root`, seeded with ones.
    pub fn backward(self, p: &mut Party, root: Var) -> Result<Gradients> {
        let Tape { nodes, params, .. } = self;
        let mut grads: Vec<Option<ArithShare>> = (0..nodes.len()).map(|_| None).collect();
        let rv = &nodes[root.0].value;
        let enc = rv.encoder();
        grads[root.0] = Some(p.public(&RingTensor::filled(rv.dims(), enc.encode(1.0)?.0), enc));
        for i in (0..=root.0).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let at_root = i == root.0;
            let mut out: Vec<(Var, ArithShare)> = Vec::new();
            let wants = |v: Var| nodes[v.0].needs_grad;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    out.push((*a, g.clone()));
                    out.push((*b, g));
                }
                Op::Sub(a, b) => {
                    out.push((*a, g.clone()));
                    out.push((*b, g.neg()));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    match (wants(*a), wants(*b)) {
                        (true, true) if av.encoder() == bv.encoder() => {
                            let n = g.len();
                            let flat = g.reshape(&[n])?;
                            let prod = p.mul(
                                &ArithShare::cat0(&[&flat, &flat])?,
                                &ArithShare::cat0(&[&bv.reshape(&[n])?, &av.reshape(&[n])?])?,
                            )?;
                            out.push((*a, prod.slice_rows(0, n)?.reshape(av.dims())?));
                            out.push((*b, prod.slice_rows(n, 2 * n)?.reshape(bv.dims())?));
                        }
                        (wa, wb) => {
                            if wa {
                                out.push((*a, p.mul(&g, bv)?));
                            }
                            if wb {
                                out.push((*b, p.mul(&g, av)?));
                            }
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        let bt = nodes[b.0].value.transpose()?;
                        out.push((*a, p.matmul(&g, &bt)?));
                    }
                    if wants(*b) {
                        let at = nodes[a.0].value.transpose()?;
                        out.push((*b, p.matmul(&at, &g)?));
                    }
                }
                Op::AddBias(x, b) => {
                    if wants(*b) {
                        out.push((*b, g.transpose()?.sum_last()));
                    }
                    out.push((*x, g));
                }
                Op::Conv2d { x, w, params } => {
                    let xv = &nodes[x.0].value;
                    let wv = &nodes[w.0].value;
                    let [n, c, h, wd] = dims4(xv.dims())?;
                    let [o, _, kh, kw] = dims4(wv.dims())?;
                    let g_mat = channels_last(&g)?;
                    let w_mat = wv.reshape(&[o, c * kh * kw])?;
                    if wants(*w) {
                        let cols = ArithShare::new(im2col(xv.share(), kh, kw, *params)?, xv.encoder());
                        let gw = p.matmul(&g_mat.transpose()?, &cols)?;
                        out.push((*w, gw.reshape(wv.dims())?));
                    }
                    if wants(*x) {
                        let gcols = p.matmul(&g_mat, &w_mat)?;
                        let gx = col2im(gcols.share(), [n, c, h, wd], kh, kw, *params)?;
                        out.push((*x, ArithShare::new(gx, gcols.encoder())));
                    }
                }
                Op::ChannelBias(x, b) => {
                    if wants(*b) {
                        let gb = channels_last(&g)?.transpose()?.sum_last();
                        out.push((*b, gb));
                    }
                    out.push((*x, g));
                }
                Op::Relu { x, mask } => out.push((*x, p.mul(&g, mask)?)),
                Op::Sigmoid(x) => {
                    let s = &node.value;
                    let ds = p.mul(s, &p.rsub_const(1.0, s)?)?;
                    out.push((*x, p.mul(&g, &ds)?));
                }
                Op::Softmax(x) => {
                    let s = &node.value;
                    let (_, k) = s.share().rows_cols();
                    let gs = p.mul(&g, s)?;
                    let dot = gs.sum_last().repeat_last(k).reshape(s.dims())?;
                    out.push((*x, p.mul(s, &g.sub(&dot)?)?));
                }
                Op::MaxPool {
                    x,
                    mask,
                    kernel,
                    stride,
                } => {
                    let xv = &nodes[x.0].value;
                    let [n, c, h, w] = dims4(xv.dims())?;
                    let kk = kernel * kernel;
                    let spread = g.reshape(&[g.len()])?.repeat_last(kk);
                    let routed = p.mul(mask, &spread.reshape(mask.dims())?)?;
                    let params = Conv2dParams {
                        stride: *stride,
                        padding: 0,
                    };
                    let gx = col2im(routed.share(), [n * c, 1, h, w], *kernel, *kernel, params)?;
                    out.push((*x, ArithShare::new(gx.into_reshaped(xv.dims())?, routed.encoder())));
                }
                Op::Reshape(x) => out.push((*x, g.reshape(nodes[x.0].value.dims())?)),
                Op::Sum(x) => {
                    let dims = nodes[x.0].value.dims();
                    out.push((*x, broadcast_scalar(&g, dims)?));
                }
                Op::Mean(x) => {
                    let xv = &nodes[x.0].value;
                    let n = xv.len();
                    let gx = if at_root {
                        let fine = FixedPointEncoder::new(enc.precision_bits() + extra_bits(n));
                        let e = fine.encode(1.0 / n as f64)?;
                        p.public(&RingTensor::filled(xv.dims(), e.0), fine)
                    } else {
                        let spread = broadcast_scalar(&g, xv.dims())?;
                        p.div_public(&spread, n as u64)?
                    };
                    out.push((*x, gx));
                }
                Op::FusedLoss { input, grad } => {
                    let gx = if at_root {
                        grad.clone()
                    } else {
                        let spread = broadcast_scalar(&g, grad.dims())?;
                        p.mul(&spread, grad)?
                    };
                    out.push((*input, gx));
                }
            }
            for (v, gv) in out {
                if !wants(v) {
                    continue;
                }
                grads[v.0] = Some(match grads[v.0].take() {
                    Some(prev) => {
                        let (a, b) = (prev.precision_bits(), gv.precision_bits());
                        prev.widen(b.saturating_sub(a)).add(&gv.widen(a.saturating_sub(b)))?
                    }
                    None => gv,
                });
            }
        }
        Ok(Gradients { grads, params })
    }
}

fn dims4(dims: &[usize]) -> Result<[usize; 4]> {
    match dims {
        &[a, b, c, d] => Ok([a, b, c, d]),
        other => Err(Error::shape(format!("expected 4-D tensor, got {other:?}"))),
    }
}

/// `[N, O, H, W]` to `[N*H*W, O]`.
fn channels_last(g: &ArithShare) -> Result<ArithShare> {
    let [n, o, h, w] = dims4(g.dims())?;
    g.map_share(|s| {
        let src = s.data();
        let mut data = vec![0u64; src.len()];
        for b in 0..n {
            for c in 0..o {
                for y in 0..h {
                    for x in 0..w {
                        data[((b * h + y) * w + x) * o + c] = src[((b * o + c) * h + y) * w + x];
                    }
                }
            }
        }
        RingTensor::new(vec![n * h * w, o], data)
    })
}

fn broadcast_scalar(g: &ArithShare, dims: &[usize]) -> Result<ArithShare> {
    if g.len() != 1 {
        return Err(Error::shape(format!("expected a scalar gradient, got {:?}", g.dims())));
    }
    let n: usize = dims.iter().product();
    g.reshape(&[1])?.repeat_last(n).reshape(dims)
}

/// Sum of all elements divided by `rows`, shape `[1]`.
/// Fractional bits added to a gradient divided by `n`, so that the
/// division does not cost precision.
fn extra_bits(n: usize) -> u32 {
    n.max(1).next_power_of_two().trailing_zeros()
}

/// `x / batch` carried at `extra_bits(batch)` finer precision.
fn batch_mean_grad(p: &mut Party, x: &ArithShare, batch: usize) -> Result<ArithShare> {
    p.div_public(&x.widen(extra_bits(batch)), batch.max(1) as u64)
}

fn mean_rows(p: &mut Party, x: &ArithShare, rows: usize) -> Result<ArithShare> {
    let total = x.reshape(&[x.len()])?.sum_last().reshape(&[1])?;
    p.div_public(&total, rows.max(1) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::party::{simulate, PartyConfig};

    #[test]
    fn identity_gradient_is_one_and_relu_gradient_is_the_mask() {
        let out = simulate(2, 4, &PartyConfig::default(), |p| {
            let mut tape = Tape::new();
            let x = p.share_f64(0, Some((&[1], &[3.25])))?;
            let xv = tape.variable(x);
            let grads = tape.backward(p, xv)?;
            let one = p.reveal_f64(grads.get(xv).expect("gradient"))?;

            let mut tape = Tape::new();
            let v = p.share_f64(0, Some((&[4], &[-2.0, 0.0, 1.5, 3.0])))?;
            let vv = tape.variable(v);
            let r = tape.relu(p, vv)?;
            let s = tape.sum(r)?;
            let grads = tape.backward(p, s)?;
            let mask = p.reveal_f64(grads.get(vv).expect("gradient"))?;
            Ok((one, mask))
        })
        .unwrap();
        assert_eq!(out[0].0, vec![1.0]);
        assert_eq!(out[0].1, vec![0.0, 0.0, 1.0, 1.0]);
    }
}
