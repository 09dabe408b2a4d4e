//! Small convolutional regressors with hand-written backpropagation.
//!
//! Activations and gradients are computed in `f64`. Weights are kept at
//! `f32` precision (rounded after initialisation and after every update) so
//! the on-disk `f32` format round-trips bit-exactly.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

pub const MODEL_MAGIC: &str = "ALCON-MODEL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Conv { out: usize, kernel: usize, stride: usize },
    Relu,
    Dense { out: usize },
    Sigmoid,
}

/// Activation shape `(channels, height, width)`; dense outputs are `(n, 1, 1)`.
type Shape = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_side: usize,
    pub layers: Vec<Layer>,
}

impl Architecture {
    /// conv(8,5,4) relu conv(16,5,4) relu dense(head), plus a logistic
    /// squashing for the two-output actor.
    pub fn default_for(input_side: usize, head_dim: usize) -> Self {
        let mut layers = vec![
            Layer::Conv { out: 8, kernel: 5, stride: 4 },
            Layer::Relu,
            Layer::Conv { out: 16, kernel: 5, stride: 4 },
            Layer::Relu,
            Layer::Dense { out: head_dim },
        ];
        if head_dim == 2 {
            layers.push(Layer::Sigmoid);
        }
        Architecture { input_side, layers }
    }

    fn shapes(&self) -> Result<Vec<Shape>> {
        let mut s = (1, self.input_side, self.input_side);
        let mut out = vec![s];
        for l in &self.layers {
            s = match *l {
                Layer::Conv { out, kernel, stride } => {
                    if kernel == 0 || stride == 0 || out == 0 || s.1 < kernel || s.2 < kernel {
                        return Err(Error::ShapeMismatch {
                            expected: format!("input of at least {kernel}x{kernel}"),
                            actual: format!("{}x{}", s.1, s.2),
                        });
                    }
                    (out, (s.1 - kernel) / stride + 1, (s.2 - kernel) / stride + 1)
                }
                Layer::Dense { out } => (out, 1, 1),
                Layer::Relu | Layer::Sigmoid => s,
            };
            out.push(s);
        }
        Ok(out)
    }

    fn param_counts(&self, shapes: &[Shape]) -> Vec<usize> {
        self.layers
            .iter()
            .zip(shapes)
            .map(|(l, &(c, h, w))| match *l {
                Layer::Conv { out, kernel, .. } => out * (c * kernel * kernel + 1),
                Layer::Dense { out } => out * (c * h * w + 1),
                _ => 0,
            })
            .collect()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input({})", self.input_side)?;
        for l in &self.layers {
            match l {
                Layer::Conv { out, kernel, stride } => write!(f, " conv({out},{kernel},{stride})")?,
                Layer::Relu => write!(f, " relu")?,
                Layer::Dense { out } => write!(f, " dense({out})")?,
                Layer::Sigmoid => write!(f, " sigmoid")?,
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |t: &str| Error::ModelFormat(format!("bad architecture token {t:?}"));
        let args = |t: &str, name: &str| -> Option<Vec<usize>> {
            let inner = t.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')?;
            inner.split(',').map(|x| x.trim().parse().ok()).collect()
        };
        let mut toks = s.split_whitespace();
        let first = toks.next().ok_or_else(|| bad(""))?;
        let input_side = match args(first, "input").as_deref() {
            Some([n]) => *n,
            _ => return Err(bad(first)),
        };
        let mut layers = Vec::new();
        for t in toks {
            let l = match t {
                "relu" => Layer::Relu,
                "sigmoid" => Layer::Sigmoid,
                _ => {
                    if let Some([o, k, st]) = args(t, "conv").as_deref() {
                        Layer::Conv { out: *o, kernel: *k, stride: *st }
                    } else if let Some([o]) = args(t, "dense").as_deref() {
                        Layer::Dense { out: *o }
                    } else {
                        return Err(bad(t));
                    }
                }
            };
            layers.push(l);
        }
        Ok(Architecture { input_side, layers })
    }
}

/// Training hyper-parameters shared by the actor and the critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    /// Weight of the oracle term in the critic loss.
    pub k: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Input side is 240 / downsample.
    pub downsample: usize,
    /// Scale each actor sample's loss by a clamped `exp(A)`.
    pub advantage_weighting: bool,
    /// Spacing of reward evaluations along the oracle path, metres.
    pub oracle_step_m: f64,
    /// Fraction of the dataset held out for evaluation.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            gamma: 0.9,
            k: 0.1,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            downsample: 1,
            advantage_weighting: false,
            oracle_step_m: 2.0,
            holdout_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", "must lie in [0, 1)"));
        }
        if !(self.k >= 0.0) {
            return Err(Error::param("k", "must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if self.downsample == 0 || crate::gridmap::MODEL_INPUT_SIDE % self.downsample != 0 {
            return Err(Error::param("downsample", "must divide 240"));
        }
        if !(self.oracle_step_m > 0.0) {
            return Err(Error::param("oracle_step_m", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::param("holdout_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn input_side(&self) -> usize {
        crate::gridmap::MODEL_INPUT_SIDE / self.downsample
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    arch: Architecture,
    shapes: Vec<Shape>,
    offsets: Vec<usize>,
    weights: Vec<f64>,
    seed: u64,
}

/// Activations recorded by a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds the input")
    }
}

fn quantize(w: f64) -> f64 {
    w as f32 as f64
}

impl RegressionModel {
    /// He-uniform initialisation from `seed`, zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(arch)?;
        m.seed = seed;
        let mut rng = seed::stream(seed, "model-init", 0);
        for (i, l) in m.arch.layers.iter().enumerate() {
            let (c, h, w) = m.shapes[i];
            let (outs, fan_in) = match *l {
                Layer::Conv { out, kernel, .. } => (out, c * kernel * kernel),
                Layer::Dense { out } => (out, c * h * w),
                _ => continue,
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            let base = m.offsets[i];
            for x in &mut m.weights[base..base + outs * fan_in] {
                *x = quantize(rng.gen_range(-limit..limit));
            }
        }
        Ok(m)
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        let shapes = arch.shapes()?;
        let counts = arch.param_counts(&shapes);
        let mut offsets = Vec::with_capacity(counts.len() + 1);
        let mut total = 0;
        for c in &counts {
            offsets.push(total);
            total += c;
        }
        offsets.push(total);
        Ok(RegressionModel {
            arch,
            shapes,
            offsets,
            weights: vec![0.0; total],
            seed: 0,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_side(&self) -> usize {
        self.arch.input_side
    }

    pub fn head_dim(&self) -> usize {
        let (c, h, w) = *self.shapes.last().expect("non-empty");
        c * h * w
    }

    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Replace the weights without rounding; used by gradient checks.
    pub fn set_weights(&mut self, w: Vec<f64>) -> Result<()> {
        if w.len() != self.weights.len() {
            return Err(Error::ShapeMismatch {
                expected: self.weights.len().to_string(),
                actual: w.len().to_string(),
            });
        }
        self.weights = w;
        Ok(())
    }

    pub fn forward(&self, input: &[f32]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.acts.pop().expect("non-empty"))
    }

    pub fn forward_trace(&self, input: &[f32]) -> Result<Trace> {
        let n = self.arch.input_side * self.arch.input_side;
        if input.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} input values"),
                actual: input.len().to_string(),
            });
        }
        let mut acts = Vec::with_capacity(self.arch.layers.len() + 1);
        acts.push(input.iter().map(|&x| x as f64).collect::<Vec<f64>>());
        for (i, l) in self.arch.layers.iter().enumerate() {
            let x = acts.last().expect("non-empty");
            let w = &self.weights[self.offsets[i]..self.offsets[i + 1]];
            let y = match *l {
                Layer::Conv { kernel, stride, .. } => conv_forward(x, self.shapes[i], self.shapes[i + 1], kernel, stride, w),
                Layer::Dense { out } => dense_forward(x, out, w),
                Layer::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
                Layer::Sigmoid => x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
            };
            acts.push(y);
        }
        Ok(Trace { acts })
    }

    /// Gradient of the loss with respect to every weight, given the loss
    /// gradient at the output.
    pub fn backward(&self, trace: &Trace, out_grad: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.weights.len()];
        self.backward_into(trace, out_grad, &mut grad)?;
        Ok(grad)
    }

    /// Like [`backward`](Self::backward) but accumulates into `grad`.
    pub fn backward_into(&self, trace: &Trace, out_grad: &[f64], grad: &mut [f64]) -> Result<()> {
        if out_grad.len() != self.head_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.head_dim().to_string(),
                actual: out_grad.len().to_string(),
            });
        }
        assert_eq!(grad.len(), self.weights.len());
        let mut g = out_grad.to_vec();
        for (i, l) in self.arch.layers.iter().enumerate().rev() {
            let x = &trace.acts[i];
            let y = &trace.acts[i + 1];
            let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
            g = match *l {
                Layer::Relu => g.iter().zip(x).map(|(&d, &v)| if v > 0.0 { d } else { 0.0 }).collect(),
                Layer::Sigmoid => g.iter().zip(y).map(|(&d, &s)| d * s * (1.0 - s)).collect(),
                Layer::Dense { out } => dense_backward(x, out, &self.weights[lo..hi], &g, &mut grad[lo..hi], i > 0),
                Layer::Conv { kernel, stride, .. } => conv_backward(
                    x,
                    self.shapes[i],
                    self.shapes[i + 1],
                    kernel,
                    stride,
                    &self.weights[lo..hi],
                    &g,
                    &mut grad[lo..hi],
                    i > 0,
                ),
            };
        }
        Ok(())
    }

    /// `w <- w - lr * g`, rounded to `f32`. Fails without touching the
    /// weights if the update would produce a non-finite value.
    pub fn sgd_step(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != self.weights.len() {
            return Err(Error::ShapeMismatch {
                expected: self.weights.len().to_string(),
                actual: grad.len().to_string(),
            });
        }
        let next: Vec<f64> = self.weights.iter().zip(grad).map(|(&w, &g)| quantize(w - lr * g)).collect();
        if next.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("weights", "update produced a non-finite value"));
        }
        self.weights = next;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "{MODEL_MAGIC}\nversion={MODEL_VERSION}\nseed={}\narch={}\nparams={}\nend\n",
            self.seed,
            self.arch,
            self.weights.len()
        )
        .into_bytes();
        for &w in &self.weights {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_owned());
        let end = bytes
            .windows(5)
            .position(|w| w == b"\nend\n")
            .ok_or_else(|| bad("header terminator not found"))?;
        let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8"))?;
        let mut lines = header.lines();
        if lines.next() != Some(MODEL_MAGIC) {
            return Err(bad("bad magic"));
        }
        let kv = crate::config::parse_kv(&lines.collect::<Vec<_>>().join("\n"))?;
        let field = |k: &str| kv.get(k).ok_or_else(|| Error::ModelFormat(format!("missing header field {k}")));
        let version: u32 = field("version")?.parse().map_err(|_| bad("bad version"))?;
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version}, expected {MODEL_VERSION}"
            )));
        }
        let seed: u64 = field("seed")?.parse().map_err(|_| bad("bad seed"))?;
        let arch: Architecture = field("arch")?.parse()?;
        let params: usize = field("params")?.parse().map_err(|_| bad("bad params"))?;
        let mut m = RegressionModel::zeros(arch)?;
        if params != m.weights.len() {
            return Err(bad("parameter count does not match the architecture"));
        }
        let body = &bytes[end + 5..];
        if body.len() != 4 * params {
            return Err(Error::ModelFormat(format!(
                "expected {} weight bytes, found {}",
                4 * params,
                body.len()
            )));
        }
        for (w, chunk) in m.weights.iter_mut().zip(body.chunks_exact(4)) {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(bad("non-finite weight"));
            }
            *w = v as f64;
        }
        m.seed = seed;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::ModelFormat(m) => Error::ModelFormat(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn conv_forward(x: &[f64], (c, h, w): Shape, (o, oh, ow): Shape, k: usize, s: usize, wt: &[f64]) -> Vec<f64> {
    let bias = &wt[o * c * k * k..];
    let mut y = vec![0.0; o * oh * ow];
    for oc in 0..o {
        let wo = &wt[oc * c * k * k..(oc + 1) * c * k * k];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[oc];
                for ic in 0..c {
                    for ky in 0..k {
                        let row = &x[ic * h * w + (oy * s + ky) * w + ox * s..][..k];
                        let wr = &wo[(ic * k + ky) * k..][..k];
                        for (a, b) in row.iter().zip(wr) {
                            acc += a * b;
                        }
                    }
                }
                y[oc * oh * ow + oy * ow + ox] = acc;
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    (c, h, w): Shape,
    (o, oh, ow): Shape,
    k: usize,
    s: usize,
    wt: &[f64],
    gy: &[f64],
    gw: &mut [f64],
    need_input: bool,
) -> Vec<f64> {
    let mut gx = if need_input { vec![0.0; c * h * w] } else { Vec::new() };
    let nw = o * c * k * k;
    for oc in 0..o {
        let wo = &wt[oc * c * k * k..(oc + 1) * c * k * k];
        for oy in 0..oh {
            for ox in 0..ow {
                let d = gy[oc * oh * ow + oy * ow + ox];
                if d == 0.0 {
                    continue;
                }
                gw[nw + oc] += d;
                for ic in 0..c {
                    for ky in 0..k {
                        let base = ic * h * w + (oy * s + ky) * w + ox * s;
                        let woff = oc * c * k * k + (ic * k + ky) * k;
                        for kx in 0..k {
                            gw[woff + kx] += d * x[base + kx];
                        }
                        if need_input {
                            let wr = &wo[(ic * k + ky) * k..][..k];
                            for kx in 0..k {
                                gx[base + kx] += d * wr[kx];
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

fn dense_forward(x: &[f64], out: usize, wt: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..out)
        .map(|o| {
            let row = &wt[o * n..(o + 1) * n];
            wt[out * n + o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

fn dense_backward(x: &[f64], out: usize, wt: &[f64], gy: &[f64], gw: &mut [f64], need_input: bool) -> Vec<f64> {
    let n = x.len();
    let mut gx = if need_input { vec![0.0; n] } else { Vec::new() };
    for o in 0..out {
        let d = gy[o];
        gw[out * n + o] += d;
        for j in 0..n {
            gw[o * n + j] += d * x[j];
        }
        if need_input {
            for j in 0..n {
                gx[j] += d * wt[o * n + j];
            }
        }
    }
    gx
}

/// Central finite-difference gradient of `loss(model(input))`, for checks.
pub fn numeric_gradient(
    model: &RegressionModel,
    input: &[f32],
    loss: impl Fn(&[f64]) -> f64,
    eps: f64,
) -> Result<Vec<f64>> {
    let mut m = model.clone();
    let base = model.weights.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut w = base.clone();
        w[i] = base[i] + eps;
        m.weights.clone_from(&w);
        let up = loss(&m.forward(input)?);
        w[i] = base[i] - eps;
        m.weights = w;
        let down = loss(&m.forward(input)?);
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_arch(head: usize) -> Architecture {
        Architecture {
            input_side: 12,
            layers: vec![
                Layer::Conv { out: 3, kernel: 3, stride: 2 },
                Layer::Relu,
                Layer::Conv { out: 4, kernel: 3, stride: 2 },
                Layer::Relu,
                Layer::Dense { out: head },
                Layer::Sigmoid,
            ],
        }
    }

    fn random_input(side: usize, seed: u64) -> Vec<f32> {
        let mut rng = seed::rng(seed);
        (0..side * side).map(|_| rng.gen::<f32>()).collect()
    }

    #[test]
    fn shapes_of_default_architecture() {
        let m = RegressionModel::new(Architecture::default_for(240, 2), 1).unwrap();
        assert_eq!(m.shapes[2], (8, 59, 59));
        assert_eq!(m.shapes[4], (16, 14, 14));
        assert_eq!(m.head_dim(), 2);
        let m = RegressionModel::new(Architecture::default_for(60, 1), 1).unwrap();
        assert_eq!(m.shapes[4], (16, 3, 3));
        assert_eq!(m.head_dim(), 1);
        assert_eq!(m.num_params(), 8 * 26 + 16 * 201 + 145);
    }

    #[test]
    fn zero_model_outputs_half() {
        let m = RegressionModel::zeros(Architecture::default_for(60, 2)).unwrap();
        assert_eq!(m.forward(&random_input(60, 3)).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = RegressionModel::zeros(Architecture::default_for(60, 2)).unwrap();
        assert!(matches!(m.forward(&[0.0; 10]), Err(Error::ShapeMismatch { .. })));
        assert!(Architecture::default_for(4, 2).shapes().is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let m = RegressionModel::new(toy_arch(2), seed).unwrap();
            let x = random_input(12, seed + 100);
            let t = m.forward_trace(&x).unwrap();
            // loss = 0.5 * |y - target|^2
            let target = [0.3, 0.8];
            let y = t.output().to_vec();
            let g_out: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
            let analytic = m.backward(&t, &g_out).unwrap();
            let numeric = numeric_gradient(
                &m,
                &x,
                |y| 0.5 * y.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
                1e-4,
            )
            .unwrap();
            for (a, n) in analytic.iter().zip(&numeric) {
                let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                assert!(err < 1e-3, "seed {seed}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn backward_is_linear_in_loss_gradient() {
        let m = RegressionModel::new(toy_arch(2), 9).unwrap();
        let t = m.forward_trace(&random_input(12, 1)).unwrap();
        assert!(m.backward(&t, &[0.0, 0.0]).unwrap().iter().all(|&g| g == 0.0));
        let a = m.backward(&t, &[1.0, 0.0]).unwrap();
        let b = m.backward(&t, &[0.0, 2.0]).unwrap();
        let ab = m.backward(&t, &[1.0, 2.0]).unwrap();
        for i in 0..a.len() {
            assert!((a[i] + b[i] - ab[i]).abs() <= 1e-12 * (1.0 + ab[i].abs()));
        }
    }

    #[test]
    fn sgd_arithmetic() {
        let arch = Architecture {
            input_side: 1,
            layers: vec![Layer::Dense { out: 1 }],
        };
        let mut m = RegressionModel::zeros(arch).unwrap();
        m.set_weights(vec![1.0, 0.0]).unwrap();
        let before = m.weights.clone();
        m.sgd_step(&[5.0, 5.0], 0.0).unwrap();
        assert_eq!(m.weights, before);
        m.sgd_step(&[2.0, 0.0], 0.001).unwrap();
        assert_eq!(m.weights[0], 0.998f32 as f64);
        assert!(m.sgd_step(&[f64::INFINITY, 0.0], 1.0).is_err());
        assert_eq!(m.weights[0], 0.998f32 as f64);
    }

    #[test]
    fn descent_on_fixed_batch() {
        let mut m = RegressionModel::new(toy_arch(2), 4).unwrap();
        let xs: Vec<Vec<f32>> = (0..4).map(|i| random_input(12, 50 + i)).collect();
        let target = [0.2, 0.7];
        let loss = |m: &RegressionModel| -> f64 {
            xs.iter()
                .map(|x| {
                    let y = m.forward(x).unwrap();
                    0.5 * y.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                })
                .sum()
        };
        let mut prev = loss(&m);
        for _ in 0..5 {
            let mut g = vec![0.0; m.num_params()];
            for x in &xs {
                let t = m.forward_trace(x).unwrap();
                let d: Vec<f64> = t.output().iter().zip(&target).map(|(a, b)| a - b).collect();
                m.backward_into(&t, &d, &mut g).unwrap();
            }
            m.sgd_step(&g, 0.05).unwrap();
            let now = loss(&m);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn save_load_round_trip_and_errors() {
        let m = RegressionModel::new(Architecture::default_for(60, 2), 17).unwrap();
        let bytes = m.to_bytes();
        let back = RegressionModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        let x = random_input(60, 5);
        assert_eq!(back.forward(&x).unwrap(), m.forward(&x).unwrap());
        assert!(RegressionModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let text = String::from_utf8_lossy(&bytes).replace("version=1", "version=7");
        let mut bad = text.into_bytes();
        bad.truncate(bytes.len());
        let bad = [&bad[..bytes.len() - 4 * m.num_params()], &bytes[bytes.len() - 4 * m.num_params()..]].concat();
        match RegressionModel::from_bytes(&bad) {
            Err(Error::ModelFormat(msg)) => assert!(msg.contains("version 7")),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn architecture_text_round_trip() {
        let a = Architecture::default_for(60, 2);
        assert_eq!(a.to_string().parse::<Architecture>().unwrap(), a);
        assert!("input(3) pool".parse::<Architecture>().is_err());
    }
}
