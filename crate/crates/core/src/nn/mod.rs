//! Small neural-network layer: modules, autograd, SGD and a weight file.
//!
//! Plaintext and private execution share one code path: a model run by a
//! single party is the plaintext fixed-point computation.

mod optim;
mod tape;
mod weights;

use rand::Rng;

pub use optim::Sgd;
pub use tape::{Gradients, Tape, Var};
pub use weights::{load_weights, read_weights, save_weights, write_weights};

use crate::error::{Error, Result};
use crate::party::Party;
use crate::ring::Conv2dParams;
use crate::shares::ArithShare;

/// A trainable tensor, plaintext until [`Module::encrypt`].
#[derive(Clone, Debug)]
pub enum Param {
    Plain { dims: Vec<usize>, values: Vec<f64> },
    Shared(ArithShare),
}

impl Param {
    pub fn plain(dims: &[usize], values: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != values.len() {
            return Err(Error::shape(format!("{} values for {dims:?}", values.len())));
        }
        Ok(Param::Plain {
            dims: dims.to_vec(),
            values,
        })
    }

    /// Uniform on `[-bound, bound]`.
    fn uniform(dims: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let n = dims.iter().product();
        Param::Plain {
            dims: dims.to_vec(),
            values: (0..n).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            Param::Plain { dims, .. } => dims,
            Param::Shared(s) => s.dims(),
        }
    }

    pub fn shared(&self) -> Result<&ArithShare> {
        match self {
            Param::Shared(s) => Ok(s),
            Param::Plain { .. } => Err(Error::Config("model is not encrypted".into())),
        }
    }

    pub fn plain_values(&self) -> Result<&[f64]> {
        match self {
            Param::Plain { values, .. } => Ok(values),
            Param::Shared(_) => Err(Error::Config("model is encrypted".into())),
        }
    }
}

/// Network layers. Linear weights are stored `[in, out]`; convolution
/// weights `[out, in, kh, kw]`; activations are `[batch, ...]`.
#[derive(Clone, Debug)]
pub enum Module {
    Linear { weight: Param, bias: Option<Param> },
    Conv2d { weight: Param, bias: Option<Param>, params: Conv2dParams },
    ReLU,
    Sigmoid,
    /// Softmax over the last dimension.
    Softmax,
    MaxPool2d { kernel: usize, stride: usize },
    /// `[N, ...]` to `[N, rest]`.
    Flatten,
    Sequential(Vec<Module>),
}

impl Module {
    /// Linear layer with weights and bias uniform on `+-1/sqrt(in)`.
    pub fn linear(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        Module::Linear {
            weight: Param::uniform(&[inputs, outputs], bound, rng),
            bias: Some(Param::uniform(&[outputs], bound, rng)),
        }
    }

    pub fn conv2d(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        params: Conv2dParams,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / ((in_channels * kernel * kernel).max(1) as f64).sqrt();
        Module::Conv2d {
            weight: Param::uniform(&[out_channels, in_channels, kernel, kernel], bound, rng),
            bias: Some(Param::uniform(&[out_channels], bound, rng)),
            params,
        }
    }

    /// Named parameters in a fixed order; nested modules are prefixed with
    /// their index (`"0.weight"`).
    pub fn parameters(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        match self {
            Module::Linear { weight, bias } | Module::Conv2d { weight, bias, .. } => {
                out.push((format!("{prefix}weight"), weight));
                if let Some(b) = bias {
                    out.push((format!("{prefix}bias"), b));
                }
            }
            Module::Sequential(children) => {
                for (i, c) in children.iter().enumerate() {
                    c.collect(&format!("{prefix}{i}."), out);
                }
            }
            _ => {}
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        match self {
            Module::Linear { weight, bias } | Module::Conv2d { weight, bias, .. } => {
                out.push((format!("{prefix}weight"), weight));
                if let Some(b) = bias {
                    out.push((format!("{prefix}bias"), b));
                }
            }
            Module::Sequential(children) => {
                for (i, c) in children.iter_mut().enumerate() {
                    c.collect_mut(&format!("{prefix}{i}."), out);
                }
            }
            _ => {}
        }
    }

    pub fn is_encrypted(&self) -> bool {
        self.parameters().iter().all(|(_, p)| matches!(p, Param::Shared(_)))
    }

    /// Secret-shares every plaintext parameter from party `src`. The other
    /// parties' plaintext values are ignored; only the shapes must agree.
    pub fn encrypt(&mut self, p: &mut Party, src: usize) -> Result<()> {
        let rank = p.rank();
        for (_, param) in self.parameters_mut() {
            if let Param::Plain { dims, values } = param {
                let share = if rank == src {
                    p.share_f64(src, Some((dims.as_slice(), values.as_slice())))?
                } else {
                    p.share_f64(src, None)?
                };
                *param = Param::Shared(share);
            }
        }
        Ok(())
    }

    /// Reveals every parameter to all parties.
    pub fn decrypt(&mut self, p: &mut Party) -> Result<()> {
        for (_, param) in self.parameters_mut() {
            if let Param::Shared(s) = param {
                let values = p.reveal_f64(s)?;
                *param = Param::Plain {
                    dims: s.dims().to_vec(),
                    values,
                };
            }
        }
        Ok(())
    }

    /// Records the forward pass on `tape`.
    pub fn forward(&self, p: &mut Party, tape: &mut Tape, x: Var) -> Result<Var> {
        self.forward_named(p, tape, x, "")
    }

    fn forward_named(&self, p: &mut Party, tape: &mut Tape, x: Var, prefix: &str) -> Result<Var> {
        match self {
            Module::Linear { weight, bias } => {
                let w = tape.param(&format!("{prefix}weight"), weight.shared()?.clone());
                let mut y = tape.matmul(p, x, w)?;
                if let Some(b) = bias {
                    let b = tape.param(&format!("{prefix}bias"), b.shared()?.clone());
                    y = tape.add_bias(y, b)?;
                }
                Ok(y)
            }
            Module::Conv2d {
                weight,
                bias,
                params,
            } => {
                let w = tape.param(&format!("{prefix}weight"), weight.shared()?.clone());
                let mut y = tape.conv2d(p, x, w, *params)?;
                if let Some(b) = bias {
                    let b = tape.param(&format!("{prefix}bias"), b.shared()?.clone());
                    y = tape.channel_bias(y, b)?;
                }
                Ok(y)
            }
            Module::ReLU => tape.relu(p, x),
            Module::Sigmoid => tape.sigmoid(p, x),
            Module::Softmax => tape.softmax(p, x),
            Module::MaxPool2d { kernel, stride } => tape.max_pool2d(p, x, *kernel, *stride),
            Module::Flatten => {
                let dims = tape.value(x).dims().to_vec();
                let lead = *dims.first().ok_or(Error::EmptyInput)?;
                let rest: usize = dims[1..].iter().product();
                tape.reshape(x, &[lead, rest])
            }
            Module::Sequential(children) => {
                let mut y = x;
                for (i, c) in children.iter().enumerate() {
                    y = c.forward_named(p, tape, y, &format!("{prefix}{i}."))?;
                }
                Ok(y)
            }
        }
    }

    /// Forward pass without recording gradients.
    pub fn infer(&self, p: &mut Party, x: &ArithShare) -> Result<ArithShare> {
        let mut tape = Tape::inference();
        let input = tape.input(x.clone());
        let out = self.forward(p, &mut tape, input)?;
        Ok(tape.value(out).clone())
    }
}

/// Training objective applied to the model output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    /// Softmax cross-entropy against one-hot rows.
    CrossEntropy,
    /// Sigmoid binary cross-entropy against 0/1 labels.
    BinaryCrossEntropy,
}

/// One forward, backward and optimizer step; returns the loss (shape `[1]`).
pub fn train_step(
    p: &mut Party,
    model: &mut Module,
    optimizer: &mut Sgd,
    x: &ArithShare,
    target: &ArithShare,
    loss: Loss,
) -> Result<ArithShare> {
    let mut tape = Tape::new();
    let input = tape.input(x.clone());
    let out = model.forward(p, &mut tape, input)?;
    let l = match loss {
        Loss::CrossEntropy => tape.softmax_cross_entropy(p, out, target)?,
        Loss::BinaryCrossEntropy => tape.sigmoid_binary_cross_entropy(p, out, target)?,
    };
    let value = tape.value(l).clone();
    let grads = tape.backward(p, l)?;
    optimizer.step(p, model, &grads)?;
    Ok(value)
}
