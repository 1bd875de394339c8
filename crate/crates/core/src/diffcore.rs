//! A fixed-chain multilayer perceptron with planar input and output.
//!
//! Parameters live in one flat `Vec<f64>` in canonical order: for each layer,
//! the weight matrix row-major with shape `(fan_out, fan_in)`, then its bias.
//! The reverse pass is written layer by layer; there is no tape because the
//! graph never changes shape.

use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, StateVector};

/// Version written into every checkpoint document.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Layer widths plus the hidden activation. Input and output are both 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawArchitecture", into = "RawArchitecture")]
pub struct MlpArchitecture {
    layer_widths: Vec<usize>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct RawArchitecture {
    layer_widths: Vec<usize>,
    activation: Activation,
}

impl TryFrom<RawArchitecture> for MlpArchitecture {
    type Error = Error;

    fn try_from(raw: RawArchitecture) -> Result<Self> {
        MlpArchitecture::new(raw.layer_widths, raw.activation)
    }
}

impl From<MlpArchitecture> for RawArchitecture {
    fn from(a: MlpArchitecture) -> Self {
        RawArchitecture {
            layer_widths: a.layer_widths,
            activation: a.activation,
        }
    }
}

impl MlpArchitecture {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_widths.len() < 3 {
            return Err(Error::config(format!(
                "architecture needs at least one hidden layer, got widths {layer_widths:?}"
            )));
        }
        if layer_widths.contains(&0) {
            return Err(Error::config(format!(
                "layer widths must be positive, got {layer_widths:?}"
            )));
        }
        if layer_widths[0] != 2 || layer_widths[layer_widths.len() - 1] != 2 {
            return Err(Error::config(format!(
                "input and output widths must be 2, got {layer_widths:?}"
            )));
        }
        Ok(Self {
            layer_widths,
            activation,
        })
    }

    /// `[2, 64, 64, 2]` with tanh.
    pub fn default_field() -> Self {
        Self::new(vec![2, 64, 64, 2], Activation::Tanh).expect("valid default")
    }

    pub fn widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_widths
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    offset,
                };
                offset += w[0] * w[1] + w[1];
                shape
            })
            .collect()
    }
}

impl Default for MlpArchitecture {
    fn default() -> Self {
        Self::default_field()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    fan_in: usize,
    fan_out: usize,
    /// Start of this layer's weights in the flat parameter vector.
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

/// All trainable weights of the network together with its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    arch: MlpArchitecture,
    values: Vec<f64>,
    layers: Vec<LayerShape>,
}

/// Reusable activation buffers for forward and reverse passes.
///
/// After [`ParamVector::forward_with`] the buffers hold every layer's output,
/// which is exactly what [`ParamVector::backward_accumulate`] consumes.
#[derive(Debug, Clone)]
pub struct MlpScratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl MlpScratch {
    pub fn new(arch: &MlpArchitecture) -> Self {
        let max_width = arch.widths().iter().copied().max().unwrap_or(2);
        Self {
            acts: arch.widths().iter().map(|&w| vec![0.0; w]).collect(),
            delta: vec![0.0; max_width],
            delta_prev: vec![0.0; max_width],
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl ParamVector {
    pub fn from_values(arch: MlpArchitecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.n_params() {
            return Err(Error::config(format!(
                "architecture {:?} needs {} parameters, got {}",
                arch.widths(),
                arch.n_params(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericInput(format!("parameter {i} is not finite")));
        }
        let layers = arch.layer_shapes();
        Ok(Self {
            arch,
            values,
            layers,
        })
    }

    pub fn zeros(arch: MlpArchitecture) -> Self {
        let n = arch.n_params();
        Self::from_values(arch, vec![0.0; n]).expect("zeros are finite")
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Replaces the values; the caller guarantees finiteness.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Mutable views of one layer's weight matrix and bias, for hand-built nets.
    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let shape = self.layers[layer];
        let (head, tail) = self.values[shape.offset..].split_at_mut(shape.fan_in * shape.fan_out);
        (head, &mut tail[..shape.fan_out])
    }

    pub fn scratch(&self) -> MlpScratch {
        MlpScratch::new(&self.arch)
    }

    /// Raw network output; leaves every layer's activations in `scratch`.
    pub fn forward_with(&self, x: [f64; 2], scratch: &mut MlpScratch) -> [f64; 2] {
        let act = self.arch.activation;
        let last = self.layers.len() - 1;
        scratch.acts[0][0] = x[0];
        scratch.acts[0][1] = x[1];
        for (l, shape) in self.layers.iter().enumerate() {
            let w = &self.values[shape.weights()];
            let b = &self.values[shape.bias()];
            let (before, after) = scratch.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            for (o, out_o) in out.iter_mut().enumerate() {
                let z = b[o] + dot(&w[o * shape.fan_in..(o + 1) * shape.fan_in], input);
                *out_o = if l == last { z } else { act.apply(z) };
            }
        }
        let out = &scratch.acts[self.layers.len()];
        [out[0], out[1]]
    }

    /// Reverse pass for the forward call that last filled `scratch`.
    ///
    /// Adds `cotangentᵀ ∂g/∂p` into `grad_params` and returns `cotangentᵀ ∂g/∂x`.
    pub fn backward_accumulate(
        &self,
        cotangent: [f64; 2],
        scratch: &mut MlpScratch,
        grad_params: &mut [f64],
    ) -> [f64; 2] {
        debug_assert_eq!(grad_params.len(), self.values.len());
        let act = self.arch.activation;
        let MlpScratch {
            acts,
            delta,
            delta_prev,
        } = scratch;
        delta[0] = cotangent[0];
        delta[1] = cotangent[1];
        for (l, shape) in self.layers.iter().enumerate().rev() {
            let w = &self.values[shape.weights()];
            let input = &acts[l];
            let fi = shape.fan_in;
            delta_prev[..fi].iter_mut().for_each(|d| *d = 0.0);
            let (gw, gb) = grad_params[shape.offset..shape.offset + fi * shape.fan_out + shape.fan_out]
                .split_at_mut(fi * shape.fan_out);
            for o in 0..shape.fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                axpy(d, input, &mut gw[o * fi..(o + 1) * fi]);
                axpy(d, &w[o * fi..(o + 1) * fi], &mut delta_prev[..fi]);
            }
            if l > 0 {
                for (d, &a) in delta_prev[..fi].iter_mut().zip(input.iter()) {
                    *d *= act.derivative_from_output(a);
                }
            }
            std::mem::swap(delta, delta_prev);
        }
        [delta[0], delta[1]]
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_widths: self.arch.widths().to_vec(),
            activation: self.arch.activation(),
            values: self.values.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint format_version {} (expected {})",
                ckpt.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        let arch = MlpArchitecture::new(ckpt.layer_widths, ckpt.activation)?;
        Self::from_values(arch, ckpt.values)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_checkpoint())?;
        fs::write(path, text + "\n").map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::from_checkpoint(ckpt)
    }
}

/// On-disk form of a [`ParamVector`]: a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub values: Vec<f64>,
}

/// Glorot-uniform weights, zero biases; fully determined by `seed`.
pub fn init_params(arch: &MlpArchitecture, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamVector::zeros(arch.clone());
    for l in 0..arch.n_layers() {
        let shape = params.layers[l];
        let limit = (6.0 / (shape.fan_in + shape.fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        for w in &mut params.values[shape.weights()] {
            *w = dist.sample(&mut rng);
        }
    }
    params
}

fn check_finite(x: StateVector) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericInput(format!("input ({}, {})", x.x, x.y)))
    }
}

/// Unnormalised network output at `x`.
pub fn mlp_forward(params: &ParamVector, x: StateVector) -> Result<[f64; 2]> {
    check_finite(x)?;
    let mut scratch = params.scratch();
    Ok(params.forward_with(x.into(), &mut scratch))
}

/// `(cotangentᵀ ∂g/∂p, cotangentᵀ ∂g/∂x)` for the raw network output.
pub fn mlp_vjp(
    params: &ParamVector,
    x: StateVector,
    cotangent: [f64; 2],
) -> Result<(Vec<f64>, [f64; 2])> {
    check_finite(x)?;
    if !cotangent.iter().all(|c| c.is_finite()) {
        return Err(Error::NumericInput(format!("cotangent {cotangent:?}")));
    }
    let mut scratch = params.scratch();
    let mut grad = vec![0.0; params.len()];
    params.forward_with(x.into(), &mut scratch);
    let gx = params.backward_accumulate(cotangent, &mut scratch, &mut grad);
    Ok((grad, gx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn arch(widths: &[usize]) -> MlpArchitecture {
        MlpArchitecture::new(widths.to_vec(), Activation::Tanh).unwrap()
    }

    /// Straightforward forward pass with no shared code.
    fn naive_forward(p: &ParamVector, x: [f64; 2]) -> [f64; 2] {
        let widths = p.arch().widths();
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..widths.len() - 1 {
            let (fi, fo) = (widths[l], widths[l + 1]);
            let w = &p.values()[off..off + fi * fo];
            let b = &p.values()[off + fi * fo..off + fi * fo + fo];
            off += fi * fo + fo;
            let mut next = vec![0.0; fo];
            for o in 0..fo {
                let mut z = b[o];
                for i in 0..fi {
                    z += w[o * fi + i] * a[i];
                }
                next[o] = if l + 2 == widths.len() { z } else { z.tanh() };
            }
            a = next;
        }
        [a[0], a[1]]
    }

    #[test]
    fn param_counts() {
        assert_eq!(init_params(&arch(&[2, 8, 2]), 3).len(), 42);
        // 2*64+64 + 64*64+64 + 64*2+2
        let expected: usize = [(2, 64), (64, 64), (64, 2)]
            .iter()
            .map(|&(i, o)| i * o + o)
            .sum();
        assert_eq!(expected, 4482);
        assert_eq!(init_params(&arch(&[2, 64, 64, 2]), 0).len(), 4482);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = arch(&[2, 16, 16, 2]);
        let p = init_params(&a, 11);
        let q = init_params(&a, 11);
        assert_eq!(p.values(), q.values());
        assert_ne!(p.values(), init_params(&a, 12).values());
        for shape in &p.layers {
            let lim = (6.0 / (shape.fan_in + shape.fan_out) as f64).sqrt();
            assert!(p.values()[shape.weights()].iter().all(|w| w.abs() <= lim));
            assert!(p.values()[shape.bias()].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn invalid_architectures() {
        assert!(MlpArchitecture::new(vec![2, 0, 2], Activation::Tanh).is_err());
        assert!(MlpArchitecture::new(vec![2, 2], Activation::Tanh).is_err());
        assert!(MlpArchitecture::new(vec![3, 4, 2], Activation::Tanh).is_err());
        assert!(MlpArchitecture::new(vec![2, 4, 1], Activation::Relu).is_err());
    }

    #[test]
    fn zero_net_outputs_zero() {
        let p = ParamVector::zeros(arch(&[2, 8, 8, 2]));
        assert_eq!(mlp_forward(&p, StateVector::new(0.3, -7.0)).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_single_layer() {
        // hidden unit h = tanh(eps * x), output = (h / eps, 2 h / eps) ≈ (x, 2x)
        let eps = 1e-5;
        let mut p = ParamVector::zeros(arch(&[2, 1, 2]));
        {
            let (w, _) = p.layer_mut(0);
            w.copy_from_slice(&[eps, 0.0]);
        }
        {
            let (w, b) = p.layer_mut(1);
            w.copy_from_slice(&[1.0 / eps, 2.0 / eps]);
            b.copy_from_slice(&[0.5, -0.5]);
        }
        let x = 0.7;
        let h = (eps * x).tanh();
        let out = mlp_forward(&p, StateVector::new(x, 3.0)).unwrap();
        assert_relative_eq!(out[0], h / eps + 0.5, epsilon = 1e-12);
        assert_relative_eq!(out[1], 2.0 * h / eps - 0.5, epsilon = 1e-12);
        assert!((out[0] - (x + 0.5)).abs() < 1e-9);
        assert!((out[1] - (2.0 * x - 0.5)).abs() < 1e-9);
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        let p = init_params(&arch(&[2, 13, 7, 2]), 5);
        for k in 0..50 {
            let x = [(k as f64 * 0.37).sin() * 3.0, (k as f64 * 0.11).cos() * 2.0];
            let fast = mlp_forward(&p, x.into()).unwrap();
            let slow = naive_forward(&p, x);
            assert!((fast[0] - slow[0]).abs() < 1e-12);
            assert!((fast[1] - slow[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let p = init_params(&arch(&[2, 4, 2]), 0);
        assert!(matches!(
            mlp_forward(&p, StateVector::new(f64::NAN, 0.0)),
            Err(Error::NumericInput(_))
        ));
        assert!(mlp_vjp(&p, StateVector::new(0.0, 0.0), [f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let p = init_params(&arch(&[2, 8, 2]), 1);
        let (gp, gx) = mlp_vjp(&p, StateVector::new(0.2, 0.1), [0.0, 0.0]).unwrap();
        assert!(gp.iter().all(|&g| g == 0.0));
        assert_eq!(gx, [0.0, 0.0]);
    }

    #[test]
    fn param_gradient_matches_central_differences() {
        for activation in [Activation::Tanh, Activation::Relu] {
            let a = MlpArchitecture::new(vec![2, 6, 5, 2], activation).unwrap();
            let p = init_params(&a, 9);
            let x = StateVector::new(0.4, -0.3);
            let c = [0.7, -1.3];
            let (gp, _) = mlp_vjp(&p, x, c).unwrap();
            let h = 1e-5;
            for k in 0..p.len() {
                let mut plus = p.values().to_vec();
                let mut minus = p.values().to_vec();
                plus[k] += h;
                minus[k] -= h;
                let fp = mlp_forward(&ParamVector::from_values(a.clone(), plus).unwrap(), x).unwrap();
                let fm = mlp_forward(&ParamVector::from_values(a.clone(), minus).unwrap(), x).unwrap();
                let fd = (c[0] * (fp[0] - fm[0]) + c[1] * (fp[1] - fm[1])) / (2.0 * h);
                let scale = fd.abs().max(gp[k].abs()).max(1e-3);
                assert!(
                    (fd - gp[k]).abs() / scale < 1e-6,
                    "{activation:?} param {k}: fd {fd} vs {}",
                    gp[k]
                );
            }
        }
    }

    #[test]
    fn input_gradient_of_near_linear_net_is_weight_product() {
        // Tiny first-layer weights keep tanh in its linear regime.
        let mut p = init_params(&arch(&[2, 5, 2]), 4);
        {
            let (w, _) = p.layer_mut(0);
            w.iter_mut().for_each(|v| *v *= 1e-5);
        }
        let w1: Vec<f64> = p.layer_mut(0).0.to_vec();
        let w2: Vec<f64> = p.layer_mut(1).0.to_vec();
        let c = [0.3, -0.9];
        let (_, gx) = mlp_vjp(&p, StateVector::new(1e-3, -2e-3), c).unwrap();
        // (W2 W1)ᵀ c
        for i in 0..2 {
            let mut expect = 0.0;
            for h in 0..5 {
                let back = c[0] * w2[h] + c[1] * w2[5 + h];
                expect += back * w1[h * 2 + i];
            }
            assert!((gx[i] - expect).abs() < 1e-8, "{} vs {expect}", gx[i]);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = init_params(&arch(&[2, 9, 3, 2]), 77);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        p.save_checkpoint(&path).unwrap();
        let q = ParamVector::load_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        let text = std::fs::read_to_string(&path).unwrap();
        for field in ["format_version", "layer_widths", "activation", "values"] {
            assert!(text.contains(field));
        }
    }

    #[test]
    fn checkpoint_rejects_wrong_length() {
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_widths: vec![2, 3, 2],
            activation: Activation::Tanh,
            values: vec![0.0; 5],
        };
        assert!(ParamVector::from_checkpoint(ckpt).is_err());
    }

    proptest::proptest! {
        #[test]
        fn vjp_matches_finite_differences(
            seed in 0u64..1000,
            h1 in 1usize..=16,
            h2 in 1usize..=16,
            x in -2.0f64..2.0,
            y in -2.0f64..2.0,
            c0 in -1.0f64..1.0,
            c1 in -1.0f64..1.0,
        ) {
            let a = arch(&[2, h1, h2, 2]);
            let p = init_params(&a, seed);
            let pt = StateVector::new(x, y);
            let (_, gx) = mlp_vjp(&p, pt, [c0, c1]).unwrap();
            let h = 1e-5;
            let f = |q: StateVector| {
                let o = mlp_forward(&p, q).unwrap();
                c0 * o[0] + c1 * o[1]
            };
            let fdx = (f(StateVector::new(x + h, y)) - f(StateVector::new(x - h, y))) / (2.0 * h);
            let fdy = (f(StateVector::new(x, y + h)) - f(StateVector::new(x, y - h))) / (2.0 * h);
            for (fd, an) in [(fdx, gx[0]), (fdy, gx[1])] {
                let scale = fd.abs().max(an.abs()).max(1e-3);
                proptest::prop_assert!((fd - an).abs() / scale < 1e-5, "fd {} vs {}", fd, an);
            }
        }

        #[test]
        fn forward_is_pure(seed in 0u64..100, x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let p = init_params(&arch(&[2, 8, 8, 2]), seed);
            let a = mlp_forward(&p, StateVector::new(x, y)).unwrap();
            let b = mlp_forward(&p, StateVector::new(x, y)).unwrap();
            proptest::prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
            proptest::prop_assert_eq!(a[1].to_bits(), b[1].to_bits());
        }

        #[test]
        fn checkpoint_values_round_trip_exactly(seed in 0u64..1000) {
            let p = init_params(&arch(&[2, 4, 2]), seed);
            let text = serde_json::to_string(&p.to_checkpoint()).unwrap();
            let back: Checkpoint = serde_json::from_str(&text).unwrap();
            let q = ParamVector::from_checkpoint(back).unwrap();
            for (a, b) in p.values().iter().zip(q.values()) {
                proptest::prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
