//! Small reverse-mode gradient engine: tensors, a parameter store with Adam
//! state, and the handful of layers the networks need.
//!
//! Each layer exposes `forward` and `backward`. `backward` takes the same
//! input that was fed forward plus the upstream gradient, accumulates
//! parameter gradients into the [`ParamStore`] and returns the input
//! gradient. Networks chain these by hand in reverse order.

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("non-finite value produced by {0}")]
    NonFiniteValue(&'static str),
    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
}

pub type NnResult<T> = Result<T, NnError>;

/// Dense row-major `f64` tensor of rank 1 to 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> NnResult<Self> {
        let count: usize = shape.iter().product();
        if shape.is_empty() || shape.len() > 3 || count != data.len() {
            return Err(NnError::ShapeMismatch {
                op: "tensor",
                expected: shape,
                found: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> NnResult<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NnError::ShapeMismatch {
                op: "reshape",
                expected: shape.to_vec(),
                found: self.shape,
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn check_finite(self, op: &'static str) -> NnResult<Self> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(NnError::NonFiniteValue(op))
        }
    }

    fn expect_shape(&self, op: &'static str, expected: &[usize]) -> NnResult<()> {
        if self.shape == expected {
            Ok(())
        } else {
            Err(NnError::ShapeMismatch {
                op,
                expected: expected.to_vec(),
                found: self.shape.clone(),
            })
        }
    }
}

/// Owner network of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Extractor,
    Composition,
    Watson,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [ParamGroup::Extractor, ParamGroup::Composition, ParamGroup::Watson];

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
    pub grad: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    has_grad: bool,
}

/// Named parameters with gradient accumulators and Adam moments, plus one
/// step counter per owner group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    steps: [u64; 3],
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> ParamId {
        let shape = value.shape().to_vec();
        self.params.push(Param {
            name: name.into(),
            group,
            grad: Tensor::zeros(&shape),
            first_moment: Tensor::zeros(&shape),
            second_moment: Tensor::zeros(&shape),
            value,
            has_grad: false,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    /// Mutable access to the gradient accumulator; marks it populated.
    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        let p = &mut self.params[id.0];
        p.has_grad = true;
        &mut p.grad
    }

    /// Value and gradient accumulator of one parameter at once.
    fn value_and_grad(&mut self, id: ParamId) -> (&Tensor, &mut Tensor) {
        let p = &mut self.params[id.0];
        p.has_grad = true;
        (&p.value, &mut p.grad)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self, group: ParamGroup) -> impl Iterator<Item = ParamId> + '_ {
        self.params
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.group == group)
            .map(|(i, _)| ParamId(i))
    }

    pub fn step_count(&self, group: ParamGroup) -> u64 {
        self.steps[group.slot()]
    }

    pub fn set_step_count(&mut self, group: ParamGroup, steps: u64) {
        self.steps[group.slot()] = steps;
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
            p.has_grad = false;
        }
    }

    /// SHA-256 over the names and values of one group.
    pub fn digest(&self, group: ParamGroup) -> [u8; 32] {
        let mut h = Sha256::new();
        for p in self.params.iter().filter(|p| p.group == group) {
            h.update(p.name.as_bytes());
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> NnResult<()> {
        let beta_ok = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if !beta_ok(self.beta1) || !beta_ok(self.beta2) {
            return Err(NnError::InvalidConfig(format!(
                "betas ({}, {}) must lie in (0, 1)",
                self.beta1, self.beta2
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(NnError::InvalidConfig(format!("epsilon {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Bias-corrected Adam update of every parameter in `group`. Gradients of
/// the group are zeroed afterwards.
pub fn adam_step(store: &mut ParamStore, group: ParamGroup, cfg: &AdamConfig) -> NnResult<()> {
    if let Some(p) = store.params.iter().find(|p| p.group == group && !p.has_grad) {
        return Err(NnError::MissingGradient(p.name.clone()));
    }
    let t = store.steps[group.slot()] + 1;
    store.steps[group.slot()] = t;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for p in store.params.iter_mut().filter(|p| p.group == group) {
        let values = p.value.data.iter_mut();
        let moments = p.first_moment.data.iter_mut().zip(p.second_moment.data.iter_mut());
        for ((theta, g), (m, v)) in values.zip(p.grad.data.iter_mut()).zip(moments) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * *g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * *g * *g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            *g = 0.0;
        }
        p.has_grad = false;
        if p.value.data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteValue("adam_step"));
        }
    }
    Ok(())
}

/// Uniform He-style initialization: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub fn he_uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-bound..bound);
    }
    t
}

/// Fully connected layer, `y = x W^T + b`, with `W` of shape `(out, in)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        group: ParamGroup,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            group,
            he_uniform(rng, &[out_dim, in_dim], in_dim),
        );
        let bias = store.add(format!("{name}.bias"), group, Tensor::zeros(&[out_dim]));
        Self { weight, bias, in_dim, out_dim }
    }

    fn batch_of(&self, x: &Tensor) -> NnResult<usize> {
        match x.shape() {
            &[b, d] if d == self.in_dim && b > 0 => Ok(b),
            other => Err(NnError::ShapeMismatch {
                op: "dense",
                expected: vec![0, self.in_dim],
                found: other.to_vec(),
            }),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> NnResult<Tensor> {
        let batch = self.batch_of(x)?;
        let w = store.value(self.weight).data();
        let b = store.value(self.bias).data();
        let mut out = vec![0.0; batch * self.out_dim];
        for (xi, yi) in x.data().chunks_exact(self.in_dim).zip(out.chunks_exact_mut(self.out_dim)) {
            for ((y, wrow), bias) in yi.iter_mut().zip(w.chunks_exact(self.in_dim)).zip(b) {
                *y = bias + dot(wrow, xi);
            }
        }
        Tensor::new(vec![batch, self.out_dim], out)?.check_finite("dense")
    }

    pub fn backward(&self, store: &mut ParamStore, x: &Tensor, grad_out: &Tensor) -> NnResult<Tensor> {
        let batch = self.batch_of(x)?;
        grad_out.expect_shape("dense backward", &[batch, self.out_dim])?;
        let mut grad_in = vec![0.0; batch * self.in_dim];
        {
            let (w, gw) = store.value_and_grad(self.weight);
            let w = w.data();
            let gw = gw.data_mut();
            for ((xi, gi), go) in x
                .data()
                .chunks_exact(self.in_dim)
                .zip(grad_in.chunks_exact_mut(self.in_dim))
                .zip(grad_out.data().chunks_exact(self.out_dim))
            {
                for ((g, wrow), gwrow) in go
                    .iter()
                    .zip(w.chunks_exact(self.in_dim))
                    .zip(gw.chunks_exact_mut(self.in_dim))
                {
                    if *g == 0.0 {
                        continue;
                    }
                    axpy(*g, xi, gwrow);
                    axpy(*g, wrow, gi);
                }
            }
        }
        let gb = store.grad_mut(self.bias).data_mut();
        for go in grad_out.data().chunks_exact(self.out_dim) {
            for (b, g) in gb.iter_mut().zip(go) {
                *b += g;
            }
        }
        Tensor::new(vec![batch, self.in_dim], grad_in)
    }
}

/// 1D convolution over `(batch, channels, length)` with kernel 3, stride 1
/// and one sample of zero padding on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
}

pub const CONV_KERNEL: usize = 3;

impl Conv1d {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        group: ParamGroup,
        in_channels: usize,
        out_channels: usize,
    ) -> Self {
        let fan_in = in_channels * CONV_KERNEL;
        let weight = store.add(
            format!("{name}.weight"),
            group,
            he_uniform(rng, &[out_channels, in_channels, CONV_KERNEL], fan_in),
        );
        let bias = store.add(format!("{name}.bias"), group, Tensor::zeros(&[out_channels]));
        Self { weight, bias, in_channels, out_channels }
    }

    fn dims_of(&self, x: &Tensor) -> NnResult<(usize, usize)> {
        match x.shape() {
            &[b, c, l] if c == self.in_channels && b > 0 && l > 0 => Ok((b, l)),
            other => Err(NnError::ShapeMismatch {
                op: "conv1d",
                expected: vec![0, self.in_channels, 0],
                found: other.to_vec(),
            }),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> NnResult<Tensor> {
        let (batch, len) = self.dims_of(x)?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let w = store.value(self.weight).data();
        let bias = store.value(self.bias).data();
        let mut out = vec![0.0; batch * cout * len];
        for (xb, yb) in x.data().chunks_exact(cin * len).zip(out.chunks_exact_mut(cout * len)) {
            for (o, y) in yb.chunks_exact_mut(len).enumerate() {
                y.fill(bias[o]);
                for (i, xr) in xb.chunks_exact(len).enumerate() {
                    let k = &w[(o * cin + i) * CONV_KERNEL..][..CONV_KERNEL];
                    // taps: k[0] reads t-1, k[1] reads t, k[2] reads t+1
                    axpy(k[1], xr, y);
                    axpy(k[0], &xr[..len - 1], &mut y[1..]);
                    axpy(k[2], &xr[1..], &mut y[..len - 1]);
                }
            }
        }
        Tensor::new(vec![batch, cout, len], out)?.check_finite("conv1d")
    }

    pub fn backward(&self, store: &mut ParamStore, x: &Tensor, grad_out: &Tensor) -> NnResult<Tensor> {
        let (batch, len) = self.dims_of(x)?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        grad_out.expect_shape("conv1d backward", &[batch, cout, len])?;
        let mut grad_in = vec![0.0; batch * cin * len];
        {
            let (w, gw) = store.value_and_grad(self.weight);
            let w = w.data();
            let gw = gw.data_mut();
            for ((xb, gib), gob) in x
                .data()
                .chunks_exact(cin * len)
                .zip(grad_in.chunks_exact_mut(cin * len))
                .zip(grad_out.data().chunks_exact(cout * len))
            {
                for (o, go) in gob.chunks_exact(len).enumerate() {
                    for (i, (xr, gi)) in xb.chunks_exact(len).zip(gib.chunks_exact_mut(len)).enumerate() {
                        let base = (o * cin + i) * CONV_KERNEL;
                        let k = &w[base..base + CONV_KERNEL];
                        gw[base] += dot(&go[1..], &xr[..len - 1]);
                        gw[base + 1] += dot(go, xr);
                        gw[base + 2] += dot(&go[..len - 1], &xr[1..]);
                        axpy(k[1], go, gi);
                        axpy(k[0], &go[1..], &mut gi[..len - 1]);
                        axpy(k[2], &go[..len - 1], &mut gi[1..]);
                    }
                }
            }
        }
        let gb = store.grad_mut(self.bias).data_mut();
        for gob in grad_out.data().chunks_exact(cout * len) {
            for (b, go) in gb.iter_mut().zip(gob.chunks_exact(len)) {
                *b += go.iter().sum::<f64>();
            }
        }
        Tensor::new(vec![batch, cin, len], grad_in)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Gates `grad_out` by the sign of the forward input.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> NnResult<Tensor> {
    grad_out.expect_shape("relu backward", x.shape())?;
    Ok(Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
    })
}

/// `(batch, channels, length)` to `(batch, channels * length)`.
pub fn flatten(x: Tensor) -> NnResult<Tensor> {
    let batch = x.shape()[0];
    let rest = x.len() / batch.max(1);
    x.reshape(&[batch, rest])
}

/// Elementwise sum of the residual branch and the skip connection. Its
/// backward passes the upstream gradient to both operands unchanged.
pub fn residual_add(branch: &Tensor, skip: &Tensor) -> NnResult<Tensor> {
    branch.expect_shape("residual_add", skip.shape())?;
    Ok(Tensor {
        shape: branch.shape.clone(),
        data: branch.data.iter().zip(&skip.data).map(|(a, b)| a + b).collect(),
    })
}

/// Batch mean of the per-sample squared L2 error, with its gradient.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> NnResult<(f64, Tensor)> {
    target.expect_shape("mse_loss", pred.shape())?;
    let batch = pred.shape()[0] as f64;
    let mut total = 0.0;
    let grad = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(p, t)| {
            let d = p - t;
            total += d * d;
            2.0 * d / batch
        })
        .collect();
    let value = total / batch;
    if !value.is_finite() {
        return Err(NnError::NonFiniteValue("mse_loss"));
    }
    Ok((value, Tensor { shape: pred.shape.clone(), data: grad }))
}

/// Adds `other` into `acc` elementwise.
pub fn accumulate(acc: &mut Tensor, other: &Tensor) -> NnResult<()> {
    other.expect_shape("accumulate", &acc.shape.clone())?;
    for (a, b) in acc.data.iter_mut().zip(&other.data) {
        *a += b;
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
