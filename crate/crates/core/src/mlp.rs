//! Fully-connected networks trained with minibatch SGD.
//!
//! Every network has a linear output layer; hidden layers use a single
//! configurable nonlinearity. Two losses are supported: a masked squared
//! error (used for Q-learning, where only the taken action's unit carries
//! a target) and a one-vs-rest hinge loss with margin 1 (used by the domain
//! classifier, targets are `+1` for the true class and `-1` otherwise).
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)` per layer.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};

const FORMAT_HEADER: &str = "ndqn-network 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// How the (always linear) output layer is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Linear,
    HingeMargin,
}

impl OutputKind {
    fn name(self) -> &'static str {
        match self {
            OutputKind::Linear => "linear",
            OutputKind::HingeMargin => "hinge_margin",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SquaredError,
    Hinge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_decay: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            l2_decay: 0.0,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return error::config(format!("learning rate {} is invalid", self.learning_rate));
        }
        if self.l2_decay.is_nan() || self.l2_decay < 0.0 {
            return error::config(format!("l2 decay {} is negative", self.l2_decay));
        }
        Ok(())
    }
}

/// Which output units contribute to the loss of one example.
#[derive(Clone, Copy, Debug)]
pub enum Mask<'a> {
    All,
    Single(usize),
    Units(&'a [bool]),
}

impl Mask<'_> {
    #[inline]
    fn includes(&self, k: usize) -> bool {
        match self {
            Mask::All => true,
            Mask::Single(i) => *i == k,
            Mask::Units(m) => m[k],
        }
    }
}

/// One supervised example: input, per-unit target, and the loss mask.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub input: &'a [f64],
    pub target: &'a [f64],
    pub mask: Mask<'a>,
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    #[inline]
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.biases).map(|(row, b)| {
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

/// Per-parameter gradients with the same layout as the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    dims: Vec<usize>,
    layers: Vec<Layer>,
    hidden: Activation,
    output: OutputKind,
}

/// Builds a network with seeded uniform weights in `±1/sqrt(fan_in)` and zero biases.
pub fn init_network(dims: &[usize], activation: Activation, seed: u64) -> Result<Network> {
    Network::new(dims, activation, OutputKind::Linear, seed)
}

impl Network {
    pub fn new(dims: &[usize], hidden: Activation, output: OutputKind, seed: u64) -> Result<Self> {
        if dims.len() < 3 {
            return error::config(format!(
                "a network needs an input, at least one hidden and an output layer, got dims {dims:?}"
            ));
        }
        if dims.contains(&0) {
            return error::config(format!("layer sizes must be positive, got {dims:?}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            hidden,
            output,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("dims validated on construction")
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_kind(&self) -> OutputKind {
        self.output
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Row-major weights of layer `l`, shape `(dims[l+1], dims[l])`.
    pub fn weights(&self, l: usize) -> &[f64] {
        &self.layers[l].weights
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.layers[l].biases
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.layers[l].weights
    }

    pub fn biases_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.layers[l].biases
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn same_architecture(&self, other: &Network) -> bool {
        self.dims == other.dims && self.hidden == other.hidden && self.output == other.output
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return error::input(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if l < last {
                next.iter_mut().for_each(|v| *v = self.hidden.apply(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass keeping every layer's pre-activations and outputs.
    fn forward_trace(&self, x: &[f64], pre: &mut [Vec<f64>], post: &mut [Vec<f64>]) {
        post[0].clear();
        post[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (input, rest) = post.split_at_mut(l + 1);
            layer.affine(&input[l], &mut pre[l]);
            let out = &mut rest[0];
            out.clear();
            if l < last {
                out.extend(pre[l].iter().map(|&z| self.hidden.apply(z)));
            } else {
                out.extend_from_slice(&pre[l]);
            }
        }
    }

    fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn check_example(&self, ex: &Example<'_>) -> Result<()> {
        self.check_input(ex.input)?;
        if ex.target.len() != self.output_dim() {
            return error::input(format!(
                "target has {} units, network outputs {}",
                ex.target.len(),
                self.output_dim()
            ));
        }
        match ex.mask {
            Mask::Single(k) if k >= self.output_dim() => {
                error::input(format!("mask unit {k} out of range"))
            }
            Mask::Units(m) if m.len() != self.output_dim() => {
                error::input(format!("mask has {} units, network outputs {}", m.len(), self.output_dim()))
            }
            _ => Ok(()),
        }
    }

    /// Mean masked loss over `batch`, without touching the weights.
    pub fn loss(&self, batch: &[Example<'_>], loss: LossKind) -> Result<f64> {
        if batch.is_empty() {
            return error::input("empty batch");
        }
        let mut total = 0.0;
        for ex in batch {
            self.check_example(ex)?;
            let out = self.forward(ex.input)?;
            total += sample_loss(&out, ex, loss, None);
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean masked loss and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, batch: &[Example<'_>], loss: LossKind) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return error::input("empty batch");
        }
        for ex in batch {
            self.check_example(ex)?;
        }
        let n = self.layers.len();
        let scale = 1.0 / batch.len() as f64;
        let mut grads = self.zero_gradients();
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut post: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        let mut delta = Vec::new();
        let mut prev_delta = Vec::new();
        let mut total = 0.0;

        for ex in batch {
            self.forward_trace(ex.input, &mut pre, &mut post);
            delta.clear();
            delta.resize(self.output_dim(), 0.0);
            total += sample_loss(&post[n], ex, loss, Some(&mut delta));
            delta.iter_mut().for_each(|d| *d *= scale);

            for l in (0..n).rev() {
                let layer = &self.layers[l];
                let input = &post[l];
                let gw = &mut grads.weights[l];
                let gb = &mut grads.biases[l];
                for (i, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[i] += d;
                    let row = &mut gw[i * layer.in_dim..(i + 1) * layer.in_dim];
                    row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                }
                if l == 0 {
                    break;
                }
                prev_delta.clear();
                prev_delta.resize(layer.in_dim, 0.0);
                for (i, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                    prev_delta.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
                }
                for (j, p) in prev_delta.iter_mut().enumerate() {
                    *p *= self.hidden.derivative(pre[l - 1][j], post[l][j]);
                }
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
        Ok((total * scale, grads))
    }

    /// One minibatch SGD step. Returns the mean masked loss before the update.
    pub fn sgd_step(&mut self, batch: &[Example<'_>], cfg: &TrainConfig, loss: LossKind) -> Result<f64> {
        cfg.validate()?;
        let (value, grads) = self.loss_and_gradients(batch, loss)?;
        self.apply_gradients(&grads, cfg.learning_rate, cfg.l2_decay);
        Ok(value)
    }

    fn apply_gradients(&mut self, grads: &Gradients, lr: f64, l2: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weights.iter_mut().zip(&grads.weights[l]) {
                *w -= lr * (g + l2 * *w);
            }
            for (b, g) in layer.biases.iter_mut().zip(&grads.biases[l]) {
                *b -= lr * g;
            }
        }
    }

    /// Copies all parameters of `src` into `self` (target-network sync).
    pub fn copy_weights_from(&mut self, src: &Network) -> Result<()> {
        if !self.same_architecture(src) {
            return error::input(format!(
                "cannot copy weights between architectures {:?} and {:?}",
                src.dims, self.dims
            ));
        }
        for (dst, s) in self.layers.iter_mut().zip(&src.layers) {
            dst.weights.copy_from_slice(&s.weights);
            dst.biases.copy_from_slice(&s.biases);
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "activation {}", self.hidden.name());
        let _ = writeln!(out, "output {}", self.output.name());
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "dims {}", dims.join(" "));
        for (l, layer) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "layer {l}");
            for row in layer.weights.chunks_exact(layer.in_dim) {
                out.push_str(&join_floats(row));
                out.push('\n');
            }
            out.push_str(&join_floats(&layer.biases));
            out.push('\n');
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::Parse {
                    line: 0,
                    msg: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let (n, header) = next("header")?;
        if header.trim() != FORMAT_HEADER {
            return Err(Error::Parse {
                line: n,
                msg: format!("expected header `{FORMAT_HEADER}`"),
            });
        }
        let (n, act) = next("activation")?;
        let hidden = match act.trim() {
            "activation relu" => Activation::Relu,
            "activation tanh" => Activation::Tanh,
            other => return Err(Error::Parse { line: n, msg: format!("bad activation line `{other}`") }),
        };
        let (n, outk) = next("output kind")?;
        let output = match outk.trim() {
            "output linear" => OutputKind::Linear,
            "output hinge_margin" => OutputKind::HingeMargin,
            other => return Err(Error::Parse { line: n, msg: format!("bad output line `{other}`") }),
        };
        let (n, dims_line) = next("dims")?;
        let dims: Vec<usize> = dims_line
            .strip_prefix("dims ")
            .ok_or_else(|| Error::Parse { line: n, msg: "expected `dims`".into() })?
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: n, msg: e.to_string() })?;
        let mut net = Network::new(&dims, hidden, output, 0).map_err(|e| Error::Parse {
            line: n,
            msg: e.to_string(),
        })?;
        for l in 0..net.layers.len() {
            let (n, tag) = next("layer tag")?;
            if tag.trim() != format!("layer {l}") {
                return Err(Error::Parse { line: n, msg: format!("expected `layer {l}`") });
            }
            let (in_dim, out_dim) = (net.layers[l].in_dim, net.layers[l].out_dim);
            for i in 0..out_dim {
                let (n, row) = next("weight row")?;
                let vals = parse_floats(&row, in_dim, n)?;
                net.layers[l].weights[i * in_dim..(i + 1) * in_dim].copy_from_slice(&vals);
            }
            let (n, row) = next("biases")?;
            net.layers[l].biases = parse_floats(&row, out_dim, n)?;
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Copies `src` into `dst`; both must share an architecture.
pub fn clone_weights(src: &Network, dst: &mut Network) -> Result<()> {
    dst.copy_weights_from(src)
}

fn sample_loss(out: &[f64], ex: &Example<'_>, loss: LossKind, mut grad: Option<&mut Vec<f64>>) -> f64 {
    let mut total = 0.0;
    let mut unit = |k: usize| {
        let (o, t) = (out[k], ex.target[k]);
        match loss {
            LossKind::SquaredError => {
                let e = o - t;
                total += e * e;
                if let Some(g) = grad.as_deref_mut() {
                    g[k] = 2.0 * e;
                }
            }
            LossKind::Hinge => {
                let margin = 1.0 - t * o;
                if margin > 0.0 {
                    total += margin;
                    if let Some(g) = grad.as_deref_mut() {
                        g[k] = -t;
                    }
                }
            }
        }
    };
    match ex.mask {
        Mask::Single(k) => unit(k),
        _ => {
            for k in 0..out.len() {
                if ex.mask.includes(k) {
                    unit(k);
                }
            }
        }
    }
    total
}

fn join_floats(vals: &[f64]) -> String {
    let mut s = String::with_capacity(vals.len() * 20);
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:?}");
    }
    s
}

fn parse_floats(line: &str, expected: usize, n: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: n, msg: e.to_string() })?;
    if vals.len() != expected {
        return Err(Error::Parse {
            line: n,
            msg: format!("expected {expected} values, found {}", vals.len()),
        });
    }
    Ok(vals)
}
