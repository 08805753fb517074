use std::f64::consts::PI;

use mpc_engine::nn::{load_weights, train_step, Loss, Module, Param, Sgd};
use mpc_engine::{ArgmaxMethod, ArithShare, Error, Party, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::config::{Program, Settings};
use crate::metrics::{Recorder, Record};

/// What one party brings back from a program.
pub struct Outcome {
    pub records: Vec<Record>,
    /// Human-readable results; filled by rank 0 only.
    pub report: Vec<String>,
    /// Whether rank 0's result checks passed.
    pub ok: bool,
}

struct Report {
    lines: Vec<String>,
    ok: bool,
}

impl Report {
    fn new() -> Self {
        Report {
            lines: Vec::new(),
            ok: true,
        }
    }

    fn check(&mut self, what: &str, ok: bool) {
        self.lines.push(format!("{what}: {}", if ok { "ok" } else { "FAILED" }));
        self.ok &= ok;
    }
}

pub fn run(p: &mut Party, s: &Settings) -> Result<Outcome> {
    let mut rec = Recorder::new(s.batch_size);
    // Every party draws the same data; only rank 0's copy is shared.
    let mut rng = ChaCha20Rng::seed_from_u64(s.seed);
    let report = match s.program {
        Program::Roundtrip => roundtrip(p, s, &mut rec, &mut rng)?,
        Program::MlpInfer => mlp_infer(p, s, &mut rec, &mut rng)?,
        Program::LogregTrain => logreg_train(p, s, &mut rec, &mut rng)?,
        Program::ArgmaxBench => argmax_bench(p, s, &mut rec, &mut rng)?,
        Program::ApproxSweep => approx_sweep(p, s, &mut rec)?,
        Program::SamplerStats => sampler_stats(p, s, &mut rec)?,
    };
    let lead = p.rank() == 0;
    Ok(Outcome {
        records: rec.into_records(),
        report: if lead { report.lines } else { Vec::new() },
        ok: !lead || report.ok,
    })
}

fn input(p: &mut Party, dims: &[usize], values: &[f64]) -> Result<ArithShare> {
    if p.rank() == 0 {
        p.share_f64(0, Some((dims, values)))
    } else {
        p.share_f64(0, None)
    }
}

/// Runs `batch` once unmeasured, then `s.batches` times measured.
fn batches(
    s: &Settings,
    rec: &mut Recorder,
    mut batch: impl FnMut(&mut Recorder) -> Result<()>,
) -> Result<()> {
    for b in 0..=s.batches {
        rec.set_measuring(b > 0);
        batch(rec)?;
    }
    Ok(())
}

fn roundtrip(p: &mut Party, s: &Settings, rec: &mut Recorder, rng: &mut ChaCha20Rng) -> Result<Report> {
    let n = s.batch_size * 16;
    let enc = p.encoder();
    let (mut reveal_ok, mut convert_ok, mut mul_err) = (true, true, 0.0f64);
    batches(s, rec, |rec| {
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let x = rec.step(p, "share", |p| input(p, &[n], &values))?;
        let back = rec.step(p, "reveal", |p| p.reveal_f64(&x))?;
        let expected: Vec<f64> = values
            .iter()
            .map(|&v| enc.encode(v).map(|e| enc.decode(e)))
            .collect::<Result<_>>()?;
        reveal_ok &= back == expected;
        let sq = rec.step(p, "mul", |p| p.mul(&x, &x))?;
        let sq = p.reveal_f64(&sq)?;
        for (a, e) in sq.iter().zip(&expected) {
            mul_err = mul_err.max((a - e * e).abs());
        }
        let b = rec.step(p, "a2b", |p| p.a2b(&x))?;
        let a = rec.step(p, "b2a", |p| p.b2a(&b))?;
        let (orig, conv) = (p.reveal(&x)?, p.reveal(&a)?);
        convert_ok &= orig == conv;
        Ok(())
    })?;
    let mut r = Report::new();
    r.check("reveal==input", reveal_ok);
    r.check("b2a(a2b(x))==x", convert_ok);
    let bound = p.world_size() as f64 * 2f64.powi(-(s.precision_bits as i32));
    r.lines.push(format!("mul max abs error: {mul_err:.3e}"));
    r.check("mul within truncation bound", mul_err <= bound);
    Ok(r)
}

/// Plaintext float forward pass of the layers `mlp_infer` accepts.
fn float_forward(m: &Module, x: Vec<f64>, rows: usize) -> Result<Vec<f64>> {
    Ok(match m {
        Module::Linear { weight, bias } => {
            let (i, o) = (weight.dims()[0], weight.dims()[1]);
            let w = weight.plain_values()?;
            let mut y = vec![0.0; rows * o];
            for r in 0..rows {
                for k in 0..i {
                    let xv = x[r * i + k];
                    for j in 0..o {
                        y[r * o + j] += xv * w[k * o + j];
                    }
                }
                if let Some(b) = bias {
                    for (j, bv) in b.plain_values()?.iter().enumerate() {
                        y[r * o + j] += bv;
                    }
                }
            }
            y
        }
        Module::ReLU => x.into_iter().map(|v| v.max(0.0)).collect(),
        Module::Sigmoid => x.into_iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
        Module::Flatten => x,
        Module::Sequential(children) => {
            let mut y = x;
            for c in children {
                y = float_forward(c, y, rows)?;
            }
            y
        }
        other => return Err(Error::Config(format!("mlp_infer does not support {other:?}"))),
    })
}

fn input_width(m: &Module) -> Result<usize> {
    match m.parameters().first() {
        Some((_, w)) if w.dims().len() == 2 => Ok(w.dims()[0]),
        _ => Err(Error::Config("mlp_infer needs a model starting with a linear layer".into())),
    }
}

fn mlp_infer(p: &mut Party, s: &Settings, rec: &mut Recorder, rng: &mut ChaCha20Rng) -> Result<Report> {
    let plain = match &s.weights {
        Some(path) => load_weights(path)?.0,
        None => Module::Sequential(vec![
            Module::linear(784, 128, rng),
            Module::ReLU,
            Module::linear(128, 10, rng),
        ]),
    };
    let width = input_width(&plain)?;
    let mut model = plain.clone();
    model.encrypt(p, 0)?;
    let rows = s.batch_size;
    let (mut err, mut energy) = (0.0, 0.0);
    batches(s, rec, |rec| {
        let x: Vec<f64> = (0..rows * width).map(|_| rng.gen::<f64>()).collect();
        let xs = rec.step(p, "share_input", |p| input(p, &[rows, width], &x))?;
        let y = rec.step(p, "mlp_infer", |p| model.infer(p, &xs))?;
        let got = rec.step(p, "reveal", |p| p.reveal_f64(&y))?;
        let want = float_forward(&plain, x, rows)?;
        for (g, w) in got.iter().zip(&want) {
            err += (g - w) * (g - w);
            energy += w * w;
        }
        Ok(())
    })?;
    let nmse = err / energy.max(f64::MIN_POSITIVE);
    let mut r = Report::new();
    r.lines.push(format!("NMSE vs float reference: {nmse:.3e}"));
    r.check("NMSE < 4e-4", nmse < 4e-4);
    Ok(r)
}

fn logreg_train(p: &mut Party, s: &Settings, rec: &mut Recorder, rng: &mut ChaCha20Rng) -> Result<Report> {
    const FEATURES: usize = 8;
    const HELD_OUT: usize = 256;
    let truth: Vec<f64> = (0..FEATURES).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut sample = |rows: usize| {
        let mut x = Vec::with_capacity(rows * FEATURES);
        let mut y = Vec::with_capacity(rows);
        for _ in 0..rows {
            let row: Vec<f64> = (0..FEATURES).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.3..0.3);
            y.push(if z > 0.0 { 1.0 } else { 0.0 });
            x.extend(row);
        }
        (x, y)
    };
    let (test_x, test_y) = sample(HELD_OUT);
    let batches_x: Vec<(Vec<f64>, Vec<f64>)> = (0..=s.batches).map(|_| sample(s.batch_size)).collect();
    let mut model = Module::Linear {
        weight: Param::plain(&[FEATURES, 1], vec![0.0; FEATURES])?,
        bias: Some(Param::plain(&[1], vec![0.0])?),
    };
    model.encrypt(p, 0)?;
    let mut opt = Sgd::new(0.5, 0.0);
    let rows = s.batch_size;
    let mut losses = Vec::new();
    let mut next = batches_x.iter();
    batches(s, rec, |rec| {
        let (bx, by) = next.next().expect("one batch per step");
        let x = input(p, &[rows, FEATURES], bx)?;
        let y = input(p, &[rows, 1], by)?;
        let loss = rec.step(p, "train_step", |p| {
            train_step(p, &mut model, &mut opt, &x, &y, Loss::BinaryCrossEntropy)
        })?;
        losses.push(p.reveal_f64(&loss)?[0]);
        Ok(())
    })?;
    rec.set_measuring(true);
    let x = input(p, &[HELD_OUT, FEATURES], &test_x)?;
    let z = rec.step(p, "predict", |p| model.infer(p, &x))?;
    let z = p.reveal_f64(&z)?;
    let correct = z
        .iter()
        .zip(&test_y)
        .filter(|(z, y)| (**z > 0.0) == (**y > 0.5))
        .count();
    let mut r = Report::new();
    let (first, last) = (losses[0], losses[losses.len() - 1]);
    r.lines.push(format!("loss {first:.4} -> {last:.4} over {} steps", losses.len()));
    r.lines.push(format!("held-out accuracy {correct}/{HELD_OUT}"));
    r.check("loss decreased", last < first);
    Ok(r)
}

fn argmax_bench(p: &mut Party, s: &Settings, rec: &mut Recorder, rng: &mut ChaCha20Rng) -> Result<Report> {
    let (rows, n) = (s.batch_size, s.vector_len);
    let method = p.config().argmax;
    let mut ok = true;
    batches(s, rec, |rec| {
        // Few distinct values, so ties are common.
        let x: Vec<f64> = (0..rows * n).map(|_| rng.gen_range(0..16) as f64).collect();
        let xs = input(p, &[rows, n], &x)?;
        let onehot = rec.step(p, "argmax", |p| p.argmax(&xs, method))?;
        let onehot = p.reveal_f64(&onehot)?;
        for r in 0..rows {
            let row = &x[r * n..(r + 1) * n];
            let hot = &onehot[r * n..(r + 1) * n];
            let picked: Vec<usize> = (0..n).filter(|&i| hot[i] == 1.0).collect();
            let clean = hot.iter().all(|&h| h == 0.0 || h == 1.0) && picked.len() == 1;
            let best = row.iter().cloned().fold(f64::MIN, f64::max);
            ok &= clean
                && match method {
                    ArgmaxMethod::Pairwise => row.iter().position(|&v| v == best) == Some(picked[0]),
                    ArgmaxMethod::Tree => row[picked[0]] == best,
                };
        }
        Ok(())
    })?;
    let mut r = Report::new();
    r.lines.push(format!("method {method:?}, {rows} vectors of length {n} per batch"));
    r.check("one-hot selects a maximum under the tie rule", ok);
    Ok(r)
}

type Approx = fn(&mut Party, &ArithShare) -> Result<ArithShare>;

struct Sweep {
    name: &'static str,
    lo: f64,
    hi: f64,
    geometric: bool,
    reference: fn(f64) -> f64,
    private: Approx,
}

fn erf_ref(x: f64) -> f64 {
    // Simpson's rule on 2/sqrt(pi) exp(-t^2).
    let steps = 2000;
    let h = x / steps as f64;
    let f = |t: f64| (-t * t).exp();
    let mut acc = f(0.0) + f(x);
    for i in 1..steps {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0 * 2.0 / PI.sqrt()
}

fn sweeps() -> Vec<Sweep> {
    vec![
        Sweep { name: "exp", lo: -4.0, hi: 4.0, geometric: false, reference: f64::exp, private: |p, x| p.exp(x) },
        Sweep { name: "log", lo: 1e-4, hi: 1e2, geometric: true, reference: f64::ln, private: |p, x| p.log(x) },
        Sweep {
            name: "reciprocal",
            lo: 0.1,
            hi: 100.0,
            geometric: true,
            reference: |x| 1.0 / x,
            private: |p, x| p.reciprocal(x),
        },
        Sweep { name: "sqrt", lo: 0.1, hi: 100.0, geometric: true, reference: f64::sqrt, private: |p, x| p.sqrt(x) },
        Sweep {
            name: "inv_sqrt",
            lo: 0.1,
            hi: 100.0,
            geometric: true,
            reference: |x| 1.0 / x.sqrt(),
            private: |p, x| p.inv_sqrt(x),
        },
        Sweep {
            name: "sigmoid",
            lo: -10.0,
            hi: 10.0,
            geometric: false,
            reference: |x| 1.0 / (1.0 + (-x).exp()),
            private: |p, x| p.sigmoid(x),
        },
        Sweep { name: "tanh", lo: -4.0, hi: 4.0, geometric: false, reference: f64::tanh, private: |p, x| p.tanh(x) },
        Sweep { name: "erf", lo: -1.0, hi: 1.0, geometric: false, reference: erf_ref, private: |p, x| p.erf(x) },
        Sweep { name: "sin", lo: -PI, hi: PI, geometric: false, reference: f64::sin, private: |p, x| p.sin(x) },
        Sweep { name: "cos", lo: -PI, hi: PI, geometric: false, reference: f64::cos, private: |p, x| p.cos(x) },
    ]
}

fn grid(lo: f64, hi: f64, n: usize, geometric: bool) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            if geometric {
                lo * (hi / lo).powf(t)
            } else {
                lo + (hi - lo) * t
            }
        })
        .collect()
}

fn softmax_ref(x: &[f64], width: usize) -> Vec<f64> {
    x.chunks(width)
        .flat_map(|row| {
            let m = row.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let total: f64 = e.iter().sum();
            e.into_iter().map(move |v| v / total)
        })
        .collect()
}

/// Grid points as the encoder represents them, so that errors measure the
/// approximation rather than input rounding.
fn encoded_grid(p: &Party, lo: f64, hi: f64, n: usize, geometric: bool) -> Result<Vec<f64>> {
    let enc = p.encoder();
    grid(lo, hi, n, geometric)
        .into_iter()
        .map(|v| enc.encode(v).map(|e| enc.decode(e)))
        .collect()
}

fn approx_sweep(p: &mut Party, s: &Settings, rec: &mut Recorder) -> Result<Report> {
    let n = s.batch_size * 64;
    let list = sweeps();
    let mut worst = vec![0.0f64; list.len() + 1];
    batches(s, rec, |rec| {
        for (k, f) in list.iter().enumerate() {
            let x = encoded_grid(p, f.lo, f.hi, n, f.geometric)?;
            let xs = input(p, &[n], &x)?;
            let y = rec.step(p, f.name, |p| (f.private)(p, &xs))?;
            for (got, v) in p.reveal_f64(&y)?.iter().zip(&x) {
                worst[k] = worst[k].max((got - (f.reference)(*v)).abs());
            }
        }
        const WIDTH: usize = 8;
        let x = encoded_grid(p, -4.0, 4.0, n, false)?;
        let xs = input(p, &[n / WIDTH, WIDTH], &x)?;
        let y = rec.step(p, "softmax", |p| p.softmax(&xs))?;
        for (got, want) in p.reveal_f64(&y)?.iter().zip(softmax_ref(&x, WIDTH)) {
            worst[list.len()] = worst[list.len()].max((got - want).abs());
        }
        Ok(())
    })?;
    let mut r = Report::new();
    for (f, w) in list.iter().zip(&worst) {
        r.lines.push(format!("{:<10} [{}, {}] max abs error {w:.3e}", f.name, f.lo, f.hi));
    }
    r.lines.push(format!("{:<10} rows of 8 on [-4, 4] max abs error {:.3e}", "softmax", worst[list.len()]));
    Ok(r)
}

fn sampler_stats(p: &mut Party, s: &Settings, rec: &mut Recorder) -> Result<Report> {
    let n = s.batch_size * 1024;
    let dims = [n];
    // (name, mean, variance)
    let expected = [
        ("rand_uniform", 0.5, 1.0 / 12.0),
        ("bernoulli", 0.3, 0.21),
        ("gaussian", 0.0, 1.0),
        ("exponential", 1.0, 1.0),
        ("laplace", 0.0, 2.0),
    ];
    let mut draws: Vec<Vec<f64>> = vec![Vec::new(); expected.len()];
    let mut batch = 0;
    batches(s, rec, |rec| {
        let measuring = batch > 0;
        batch += 1;
        let samples = [
            rec.step(p, "rand_uniform", |p| p.rand_uniform(&dims))?,
            rec.step(p, "bernoulli", |p| p.bernoulli(0.3, &dims))?,
            rec.step(p, "gaussian", |p| p.gaussian(0.0, 1.0, &dims))?,
            rec.step(p, "exponential", |p| p.exponential(1.0, &dims))?,
            rec.step(p, "laplace", |p| p.laplace(0.0, 1.0, &dims))?,
        ];
        if measuring {
            for (d, x) in draws.iter_mut().zip(&samples) {
                d.extend(p.reveal_f64(x)?);
            }
        }
        Ok(())
    })?;
    let mut r = Report::new();
    for ((name, mean, var), d) in expected.iter().zip(&draws) {
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let v = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (d.len() - 1) as f64;
        let z = (m - mean) / (var / d.len() as f64).sqrt();
        r.lines.push(format!("{name:<12} mean {m:>8.4} (want {mean}) var {v:>7.4} (want {var:.4}) z {z:>6.2}"));
        r.check(&format!("{name} mean within 6 standard errors"), z.abs() < 6.0);
    }
    Ok(r)
}
