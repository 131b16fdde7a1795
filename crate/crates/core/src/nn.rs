//! Dense multilayer perceptrons with exact reverse-mode gradients and Adam.
//!
//! Batches are row-major `batch × features` matrices. Weights are stored
//! `out × in`, so a layer computes `act(X · Wᵀ + b)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Single-row matrix.
    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    /// `n × 1` matrix.
    pub fn column_vector(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.rows != other.rows {
            return Err(Error::shape(format!(
                "cannot concatenate {} rows with {} rows",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Tensor2 {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Columns `[start, end)` as a new matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Tensor2 {
        assert!(
            start <= end && end <= self.cols,
            "column range out of bounds"
        );
        let cols = end - start;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Tensor2 {
            rows: self.rows,
            cols,
            data,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the post-activation output.
    #[inline]
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`.
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn width(&self) -> usize {
        self.weights.rows()
    }
}

/// Adam first/second moments for one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMoments {
    pub m_weights: Vec<f64>,
    pub v_weights: Vec<f64>,
    pub m_bias: Vec<f64>,
    pub v_bias: Vec<f64>,
}

impl LayerMoments {
    fn zeros(layer: &DenseLayer) -> Self {
        let nw = layer.weights.data().len();
        let nb = layer.bias.len();
        Self {
            m_weights: vec![0.0; nw],
            v_weights: vec![0.0; nw],
            m_bias: vec![0.0; nb],
            v_bias: vec![0.0; nb],
        }
    }

    pub fn is_zero(&self) -> bool {
        [&self.m_weights, &self.v_weights, &self.m_bias, &self.v_bias]
            .iter()
            .all(|v| v.iter().all(|x| *x == 0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub layers: Vec<LayerMoments>,
    pub step: u64,
}

impl AdamState {
    pub fn is_reset(&self) -> bool {
        self.step == 0 && self.layers.iter().all(LayerMoments::is_zero)
    }
}

/// Layer widths and activations, enough to draw a fresh network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl Architecture {
    pub fn new(sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least an input and an output width, got {sizes:?}"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Config(format!("zero-width layer in {sizes:?}")));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::Config(format!(
                "{} activations for {} layers",
                activations.len(),
                sizes.len() - 1
            )));
        }
        let hidden = &activations[..activations.len() - 1];
        if let Some(i) = hidden.iter().position(|a| *a == Activation::Identity) {
            return Err(Error::Config(format!(
                "identity activation only allowed on the output layer (layer {i})"
            )));
        }
        Ok(Self { sizes, activations })
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    /// Fan-in scaled uniform weights, bound `1/√fan_in`; zero biases.
    pub fn init(&self, seed: u64) -> NetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers: Vec<DenseLayer> = self
            .sizes
            .windows(2)
            .zip(&self.activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..=bound))
                    .collect();
                DenseLayer {
                    weights: Tensor2 {
                        rows: fan_out,
                        cols: fan_in,
                        data,
                    },
                    bias: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        let optimizer = AdamState {
            layers: layers.iter().map(LayerMoments::zeros).collect(),
            step: 0,
        };
        NetworkParams { layers, optimizer }
    }
}

/// Builds a freshly initialized network. Deterministic for a fixed seed.
pub fn init_network(
    layer_sizes: &[usize],
    activations: &[Activation],
    seed: u64,
) -> Result<NetworkParams> {
    Ok(Architecture::new(layer_sizes.to_vec(), activations.to_vec())?.init(seed))
}

/// Post-activation outputs of every layer for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Tensor2,
    pub outputs: Vec<Tensor2>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    pub fn output(&self) -> &Tensor2 {
        self.outputs.last().expect("trace has at least one layer")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

/// Parameter gradients plus the gradient with respect to the network input.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    pub input: Tensor2,
}

impl Gradients {
    /// Gradients flattened in [`NetworkParams::flat_params`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend_from_slice(g.weights.data());
            out.extend_from_slice(&g.bias);
        }
        out
    }
}

/// `C = A·B (+ beta·C)` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: the debug assertions above describe the extents every caller
    // guarantees; C is densely row-major `m × n`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<DenseLayer>,
    pub optimizer: AdamState,
}

impl NetworkParams {
    pub fn architecture(&self) -> Architecture {
        let mut sizes = vec![self.layers[0].fan_in()];
        sizes.extend(self.layers.iter().map(DenseLayer::width));
        Architecture {
            sizes,
            activations: self.layers.iter().map(|l| l.activation).collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].width()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    /// All weights and biases, layer by layer, weights before bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.data.len();
            l.weights.data.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn reset_optimizer(&mut self) {
        self.optimizer = AdamState {
            layers: self.layers.iter().map(LayerMoments::zeros).collect(),
            step: 0,
        };
    }

    /// Euclidean distance between the parameter vectors of two networks.
    pub fn distance(&self, other: &NetworkParams) -> f64 {
        self.flat_params()
            .iter()
            .zip(other.flat_params())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn check_same_shape(&self, other: &NetworkParams, what: &str) -> Result<()> {
        if self.architecture() != other.architecture() {
            return Err(Error::shape(format!(
                "{what}: architectures differ ({:?} vs {:?})",
                self.architecture().sizes,
                other.architecture().sizes
            )));
        }
        Ok(())
    }

    /// Runs the batch through every layer, recording each layer's output.
    pub fn forward(&self, batch: &Tensor2) -> Result<(Tensor2, ForwardTrace)> {
        if batch.cols() != self.input_width() {
            return Err(Error::shape(format!(
                "batch has {} features, network expects {}",
                batch.cols(),
                self.input_width()
            )));
        }
        if !batch.is_finite() {
            return Err(Error::non_finite("forward input", None));
        }
        let n = batch.rows();
        let mut outputs: Vec<Tensor2> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = outputs.last().unwrap_or(batch);
            let (fan_in, width) = (layer.fan_in(), layer.width());
            let mut z = Tensor2::zeros(n, width);
            for r in 0..n {
                z.data[r * width..(r + 1) * width].copy_from_slice(&layer.bias);
            }
            // Z = X · Wᵀ + 1·bᵀ
            gemm(
                n,
                fan_in,
                width,
                &x.data,
                (fan_in, 1),
                &layer.weights.data,
                (1, fan_in),
                &mut z.data,
                1.0,
            );
            let act = layer.activation;
            z.data.iter_mut().for_each(|v| *v = act.apply(*v));
            outputs.push(z);
        }
        let out = outputs.last().cloned().expect("at least one layer");
        Ok((
            out,
            ForwardTrace {
                input: batch.clone(),
                outputs,
            },
        ))
    }

    /// Outputs only.
    pub fn predict(&self, batch: &Tensor2) -> Result<Tensor2> {
        self.forward(batch).map(|(out, _)| out)
    }

    /// Gradients of `Σ outputs ⊙ output_grad` with respect to every
    /// parameter and to the input batch.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &Tensor2) -> Result<Gradients> {
        let (layers, input) = self.backprop(trace, output_grad, true)?;
        Ok(Gradients { layers, input })
    }

    /// Gradient with respect to the input batch only; skips the parameter
    /// gradients.
    pub fn input_gradient(&self, trace: &ForwardTrace, output_grad: &Tensor2) -> Result<Tensor2> {
        self.backprop(trace, output_grad, false)
            .map(|(_, input)| input)
    }

    fn backprop(
        &self,
        trace: &ForwardTrace,
        output_grad: &Tensor2,
        with_params: bool,
    ) -> Result<(Vec<LayerGradient>, Tensor2)> {
        if trace.outputs.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "trace has {} layers, network has {}",
                trace.outputs.len(),
                self.layers.len()
            )));
        }
        for (i, (out, layer)) in trace.outputs.iter().zip(&self.layers).enumerate() {
            if out.cols() != layer.width() || out.rows() != trace.batch_size() {
                return Err(Error::shape(format!(
                    "trace layer {i} is {}x{}, expected {}x{}",
                    out.rows(),
                    out.cols(),
                    trace.batch_size(),
                    layer.width()
                )));
            }
        }
        if trace.input.cols() != self.input_width() {
            return Err(Error::shape("trace input width does not match network"));
        }
        let out = trace.output();
        if output_grad.rows() != out.rows() || output_grad.cols() != out.cols() {
            return Err(Error::shape(format!(
                "output gradient is {}x{}, output is {}x{}",
                output_grad.rows(),
                output_grad.cols(),
                out.rows(),
                out.cols()
            )));
        }
        if !output_grad.is_finite() {
            return Err(Error::non_finite("output gradient", None));
        }

        let n = trace.batch_size();
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (fan_in, width) = (layer.fan_in(), layer.width());
            let y = &trace.outputs[i];
            let x = if i == 0 {
                &trace.input
            } else {
                &trace.outputs[i - 1]
            };

            // dZ = dY ⊙ act'(Y)
            let mut dz = upstream;
            let act = layer.activation;
            for (g, &yv) in dz.data.iter_mut().zip(&y.data) {
                *g *= act.derivative_from_output(yv);
            }

            if with_params {
                // dW = dZᵀ · X
                let mut dw = Tensor2::zeros(width, fan_in);
                gemm(
                    width,
                    n,
                    fan_in,
                    &dz.data,
                    (1, width),
                    &x.data,
                    (fan_in, 1),
                    &mut dw.data,
                    0.0,
                );
                let mut db = vec![0.0; width];
                for r in 0..n {
                    for (acc, g) in db.iter_mut().zip(dz.row(r)) {
                        *acc += g;
                    }
                }
                layers.push(LayerGradient {
                    weights: dw,
                    bias: db,
                });
            }

            // dX = dZ · W
            let mut dx = Tensor2::zeros(n, fan_in);
            gemm(
                n,
                width,
                fan_in,
                &dz.data,
                (width, 1),
                &layer.weights.data,
                (fan_in, 1),
                &mut dx.data,
                0.0,
            );
            upstream = dx;
        }
        layers.reverse();
        Ok((layers, upstream))
    }

    /// One Adam step with bias-corrected moments.
    pub fn adam_step(&mut self, gradients: &Gradients, lr: f64) -> Result<()> {
        if gradients.layers.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "{} gradient layers for {} network layers",
                gradients.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (g, l)) in gradients.layers.iter().zip(&self.layers).enumerate() {
            if g.weights.rows() != l.weights.rows()
                || g.weights.cols() != l.weights.cols()
                || g.bias.len() != l.bias.len()
            {
                return Err(Error::shape(format!(
                    "gradient shape mismatch at layer {i}"
                )));
            }
            if !g.weights.is_finite() || g.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite("gradient", Some(i)));
            }
        }

        self.optimizer.step += 1;
        let t = self.optimizer.step as f64;
        let bc1 = 1.0 - ADAM_BETA1.powf(t);
        let bc2 = 1.0 - ADAM_BETA2.powf(t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        };
        for ((layer, g), mom) in self
            .layers
            .iter_mut()
            .zip(&gradients.layers)
            .zip(&mut self.optimizer.layers)
        {
            update(
                &mut layer.weights.data,
                &g.weights.data,
                &mut mom.m_weights,
                &mut mom.v_weights,
            );
            update(&mut layer.bias, &g.bias, &mut mom.m_bias, &mut mom.v_bias);
        }
        Ok(())
    }

    /// Polyak averaging `self ← (1−rate)·self + rate·online`.
    pub fn soft_update_from(&mut self, online: &NetworkParams, rate: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::usage(format!(
                "soft update rate {rate} outside [0, 1]"
            )));
        }
        self.check_same_shape(online, "soft update")?;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            for (a, &b) in t.weights.data.iter_mut().zip(&o.weights.data) {
                *a = (1.0 - rate) * *a + rate * b;
            }
            for (a, &b) in t.bias.iter_mut().zip(&o.bias) {
                *a = (1.0 - rate) * *a + rate * b;
            }
        }
        Ok(())
    }

    /// Copies parameters from `online` without touching this network's optimizer.
    pub fn hard_update_from(&mut self, online: &NetworkParams) -> Result<()> {
        self.check_same_shape(online, "hard update")?;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.weights.data.copy_from_slice(&o.weights.data);
            t.bias.copy_from_slice(&o.bias);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> NetworkCheckpoint {
        let arch = self.architecture();
        NetworkCheckpoint {
            format: NETWORK_CHECKPOINT_FORMAT.to_string(),
            version: NETWORK_CHECKPOINT_VERSION,
            layer_sizes: arch.sizes,
            activations: arch.activations,
            params: self.flat_params(),
            adam_step: self.optimizer.step,
            adam_moments: self
                .optimizer
                .layers
                .iter()
                .flat_map(|m| {
                    m.m_weights
                        .iter()
                        .chain(&m.v_weights)
                        .chain(&m.m_bias)
                        .chain(&m.v_bias)
                        .copied()
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &NetworkCheckpoint) -> Result<Self> {
        if ckpt.format != NETWORK_CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown format `{}`",
                ckpt.format
            )));
        }
        if ckpt.version != NETWORK_CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} not supported (expected {NETWORK_CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        let arch = Architecture::new(ckpt.layer_sizes.clone(), ckpt.activations.clone())?;
        let mut net = arch.init(0);
        net.set_flat_params(&ckpt.params)?;
        if ckpt.adam_moments.len() != 2 * net.param_count() {
            return Err(Error::Checkpoint(format!(
                "{} optimizer moments for {} parameters",
                ckpt.adam_moments.len(),
                net.param_count()
            )));
        }
        let mut it = ckpt.adam_moments.iter().copied();
        for m in &mut net.optimizer.layers {
            for buf in [
                &mut m.m_weights,
                &mut m.v_weights,
                &mut m.m_bias,
                &mut m.v_bias,
            ] {
                buf.iter_mut()
                    .for_each(|x| *x = it.next().expect("length checked"));
            }
        }
        net.optimizer.step = ckpt.adam_step;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

/// Polyak averaging of `target` toward `online`.
pub fn soft_update(target: &mut NetworkParams, online: &NetworkParams, rate: f64) -> Result<()> {
    target.soft_update_from(online, rate)
}

pub const NETWORK_CHECKPOINT_FORMAT: &str = "drm-network";
pub const NETWORK_CHECKPOINT_VERSION: u32 = 1;

/// Versioned text dump of a network: layer sizes plus flat parameter and
/// optimizer arrays. Floats are written in shortest round-trip form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub params: Vec<f64>,
    pub adam_step: u64,
    /// Per layer: m_w, v_w, m_b, v_b.
    pub adam_moments: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use Activation::*;

    fn straight_line_forward(net: &NetworkParams, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in &net.layers {
            let mut next = Vec::with_capacity(l.width());
            for o in 0..l.width() {
                let mut z = l.bias[o];
                for (i, hv) in h.iter().enumerate() {
                    z += l.weights.get(o, i) * hv;
                }
                next.push(match l.activation {
                    Relu => z.max(0.0),
                    Tanh => z.tanh(),
                    Identity => z,
                });
            }
            h = next;
        }
        h
    }

    fn loss_at(net: &NetworkParams, x: &Tensor2, g: &Tensor2) -> f64 {
        let out = net.predict(x).unwrap();
        out.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_network(&[2, 4, 1], &[Relu, Identity], 7).unwrap();
        let b = init_network(&[2, 4, 1], &[Relu, Identity], 7).unwrap();
        let bits = |n: &NetworkParams| {
            n.flat_params()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = init_network(&[2, 4, 1], &[Relu, Identity], 8).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = init_network(&[2, 4, 1], &[Relu, Identity], 7).unwrap();
        let bound = 1.0 / 2f64.sqrt();
        assert!(net.layers[0]
            .weights
            .data()
            .iter()
            .all(|w| w.abs() <= bound));
        assert!(net.layers.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
        assert!(net.optimizer.is_reset());
    }

    #[test]
    fn parameter_count_by_shape() {
        let net = init_network(&[3, 8, 8, 2], &[Relu, Relu, Tanh], 1).unwrap();
        assert_eq!(net.layers.len(), 3);
        assert_eq!(net.param_count(), 3 * 8 + 8 + 8 * 8 + 8 + 8 * 2 + 2);
        assert_eq!(net.param_count(), 122);
    }

    #[test]
    fn architecture_validation() {
        assert!(matches!(init_network(&[], &[], 0), Err(Error::Config(_))));
        assert!(matches!(init_network(&[3], &[], 0), Err(Error::Config(_))));
        assert!(matches!(
            init_network(&[3, 2], &[Relu, Relu], 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            init_network(&[3, 4, 2], &[Identity, Tanh], 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = init_network(&[3, 5, 2], &[Relu, Relu], 0).unwrap();
        let zeros = vec![0.0; net.param_count()];
        net.set_flat_params(&zeros).unwrap();
        let x = Tensor2::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]).unwrap();
        let (out, trace) = net.forward(&x).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
        assert_eq!(trace.outputs.len(), 2);
        assert_eq!(&out, trace.output());
    }

    #[test]
    fn tanh_of_zero() {
        let mut net = init_network(&[1, 1], &[Tanh], 3).unwrap();
        net.set_flat_params(&[1.0, 0.0]).unwrap();
        let out = net.predict(&Tensor2::column_vector(&[0.0])).unwrap();
        assert_eq!(out.data(), &[0.0]);
    }

    #[test]
    fn forward_matches_straight_line_evaluation() {
        let net = init_network(&[4, 6, 3], &[Relu, Tanh], 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x = Tensor2::from_rows(&rows).unwrap();
        let out = net.predict(&x).unwrap();
        for (r, row) in rows.iter().enumerate() {
            let expected = straight_line_forward(&net, row);
            for (c, e) in expected.iter().enumerate() {
                assert!((out.get(r, c) - e).abs() <= 1e-12 * (1.0 + e.abs()));
            }
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = init_network(&[2, 3, 1], &[Relu, Identity], 0).unwrap();
        let wrong = Tensor2::zeros(4, 3);
        assert!(matches!(net.forward(&wrong), Err(Error::Shape(_))));
        let nan = Tensor2::from_rows(&[[f64::NAN, 0.0]]).unwrap();
        assert!(matches!(net.forward(&nan), Err(Error::NonFinite { .. })));
        let inf = Tensor2::from_rows(&[[0.0, f64::INFINITY]]).unwrap();
        assert!(matches!(net.forward(&inf), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = init_network(&[3, 7, 5, 2], &[Relu, Tanh, Identity], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x =
            Tensor2::from_vec(4, 3, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let g =
            Tensor2::from_vec(4, 2, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (_, trace) = net.forward(&x).unwrap();
        let grads = net.backward(&trace, &g).unwrap().flatten();
        let base = net.flat_params();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut p = base.clone();
            let mut probe = net.clone();
            p[i] = base[i] + h;
            probe.set_flat_params(&p).unwrap();
            let up = loss_at(&probe, &x, &g);
            p[i] = base[i] - h;
            probe.set_flat_params(&p).unwrap();
            let down = loss_at(&probe, &x, &g);
            let fd = (up - down) / (2.0 * h);
            let err = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-6);
            assert!(err <= 1e-4, "param {i}: analytic {} vs fd {fd}", grads[i]);
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let net = init_network(&[3, 4, 2], &[Relu, Tanh], 2).unwrap();
        let x = Tensor2::from_rows(&[[0.3, -0.2, 0.9]]).unwrap();
        let (_, trace) = net.forward(&x).unwrap();
        let grads = net.backward(&trace, &Tensor2::zeros(1, 2)).unwrap();
        assert!(grads.flatten().iter().all(|v| *v == 0.0));
        assert!(grads.input.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        let mut net = init_network(&[1, 1, 1], &[Relu, Identity], 0).unwrap();
        // hidden pre-activation = 1·x − 1 < 0 for x = 0.5
        net.set_flat_params(&[1.0, -1.0, 2.0, 0.0]).unwrap();
        let x = Tensor2::column_vector(&[0.5]);
        let (_, trace) = net.forward(&x).unwrap();
        let grads = net
            .backward(&trace, &Tensor2::column_vector(&[1.0]))
            .unwrap();
        assert_eq!(grads.layers[0].weights.data(), &[0.0]);
        assert_eq!(grads.layers[0].bias, vec![0.0]);
        assert_eq!(grads.input.data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_mismatched_trace() {
        let a = init_network(&[3, 4, 2], &[Relu, Tanh], 2).unwrap();
        let b = init_network(&[3, 5, 2], &[Relu, Tanh], 2).unwrap();
        let x = Tensor2::zeros(2, 3);
        let (_, trace) = b.forward(&x).unwrap();
        assert!(matches!(
            a.backward(&trace, &Tensor2::zeros(2, 2)),
            Err(Error::Shape(_))
        ));
        let (_, trace) = a.forward(&x).unwrap();
        assert!(matches!(
            a.backward(&trace, &Tensor2::zeros(2, 3)),
            Err(Error::Shape(_))
        ));
    }

    fn constant_gradients(net: &NetworkParams, value: f64) -> Gradients {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Tensor2::from_vec(
                        l.weights.rows(),
                        l.weights.cols(),
                        vec![value; l.weights.data().len()],
                    )
                    .unwrap(),
                    bias: vec![value; l.bias.len()],
                })
                .collect(),
            input: Tensor2::zeros(1, net.input_width()),
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = init_network(&[2, 3, 1], &[Relu, Identity], 4).unwrap();
        let before = net.flat_params();
        let mut grads = constant_gradients(&net, 0.5);
        grads.layers[0].weights.data_mut()[0] = -3.0;
        net.adam_step(&grads, 1e-3).unwrap();
        let after = net.flat_params();
        for ((b, a), g) in before.iter().zip(&after).zip(grads.flatten()) {
            let delta = a - b;
            assert!(
                (delta + 1e-3 * g.signum()).abs() < 1e-9,
                "delta {delta} grad {g}"
            );
        }
        assert_eq!(net.optimizer.step, 1);
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut net = init_network(&[2, 3, 1], &[Relu, Identity], 4).unwrap();
        let before = net.flat_params();
        net.adam_step(&constant_gradients(&net, 0.0), 1e-3).unwrap();
        assert_eq!(before, net.flat_params());
        assert_eq!(net.optimizer.step, 1);
    }

    #[test]
    fn adam_is_deterministic() {
        let mut a = init_network(&[2, 3, 1], &[Relu, Identity], 4).unwrap();
        let mut b = a.clone();
        for k in 0..20 {
            let g = constant_gradients(&a, (k as f64 * 0.37).sin());
            a.adam_step(&g, 1e-2).unwrap();
            b.adam_step(&g, 1e-2).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn adam_rejects_non_finite_gradient_with_layer() {
        let mut net = init_network(&[2, 3, 1], &[Relu, Identity], 4).unwrap();
        let mut g = constant_gradients(&net, 0.1);
        g.layers[1].bias[0] = f64::NAN;
        match net.adam_step(&g, 1e-3) {
            Err(Error::NonFinite { layer, .. }) => assert_eq!(layer, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(net.optimizer.step, 0);
    }

    #[test]
    fn soft_update_endpoints() {
        let online = init_network(&[2, 3, 1], &[Relu, Identity], 1).unwrap();
        let original = init_network(&[2, 3, 1], &[Relu, Identity], 2).unwrap();

        let mut t = original.clone();
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t.flat_params(), online.flat_params());

        let mut t = original.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t.flat_params(), original.flat_params());

        let mut t = original.clone();
        t.set_flat_params(&vec![0.0; t.param_count()]).unwrap();
        let mut ones = online.clone();
        ones.set_flat_params(&vec![1.0; ones.param_count()])
            .unwrap();
        soft_update(&mut t, &ones, 0.01).unwrap();
        assert!(t.flat_params().iter().all(|v| *v == 0.01));
        assert_eq!(t.optimizer, original.optimizer);
    }

    #[test]
    fn soft_update_rejects_mismatch() {
        let mut a = init_network(&[2, 3, 1], &[Relu, Identity], 1).unwrap();
        let b = init_network(&[2, 4, 1], &[Relu, Identity], 1).unwrap();
        assert!(matches!(soft_update(&mut a, &b, 0.5), Err(Error::Shape(_))));
        assert!(matches!(
            soft_update(&mut a.clone(), &a, 1.5),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn checkpoint_rejects_wrong_version() {
        let net = init_network(&[2, 3, 1], &[Relu, Identity], 1).unwrap();
        let mut ckpt = net.to_checkpoint();
        ckpt.version = 99;
        assert!(matches!(
            NetworkParams::from_checkpoint(&ckpt),
            Err(Error::Checkpoint(_))
        ));
    }
}
