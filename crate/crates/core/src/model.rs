//! Compact trainable actor and critic.
//!
//! Both roles share one architecture: a feed-forward net
//! `in_dim -> h1 -> h2 -> 3` with tanh hidden activations, trained with
//! exact analytic gradients under an L1 loss and AdamW updates. The actor
//! squashes its output into (0,1)^3 via `0.5 * (tanh + 1)`; the critic
//! applies ReLU so predicted returns stay nonnegative.
//!
//! The input is an engineered feature vector over the canvas: pooled
//! occupancy, pooled wirelength-increase and difference maps, next-module
//! and remaining-module descriptors, the normalized return-to-go, episode
//! progress, and the previous action.

use ndarray::{Array2, ArrayView2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::env::{Anchor, CanvasState, Env, FeatureMaps};
use crate::sldas::{normalize, ContinuousAction};
use crate::{Result, SgfError};

pub const HIDDEN: usize = 256;
/// Pooling resolution: each layer is summarized as a 6x6 tile grid.
pub const POOL: usize = 6;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Decoupled weight decay applied on every optimizer step.
pub const WEIGHT_DECAY: f64 = 1e-4;

pub const LR_ACTOR: f64 = 5e-4;
pub const LR_CRITIC: f64 = 5e-3;

/// Per-component mean and standard deviation of episode returns.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RtgStats {
    pub mu: [f64; 3],
    pub sigma: [f64; 3],
}

impl RtgStats {
    pub fn new(mu: [f64; 3], sigma: [f64; 3]) -> Self {
        let mut s = sigma;
        for v in &mut s {
            *v = v.max(1e-6);
        }
        RtgStats { mu, sigma: s }
    }

    /// Feature-space normalization: centered and scaled.
    pub fn normalize_feature(&self, g: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| (g[i] - self.mu[i]) / self.sigma[i])
    }

    /// Target-space normalization: scaled only, so nonnegative returns stay
    /// nonnegative and remain representable under the critic's ReLU head.
    pub fn normalize_target(&self, g: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| g[i] / self.sigma[i])
    }

    pub fn denormalize_target(&self, g: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| g[i] * self.sigma[i])
    }
}

/// Length of the feature vector for a given canvas and netlist.
pub fn feature_len(z_layers: usize) -> usize {
    3 * POOL * POOL * z_layers + 13
}

/// Deterministic feature extraction for the current decision point.
///
/// `rtg` is the raw (unnormalized) target return-to-go at this step and
/// `prev` the previous step's action, if any.
pub fn features(
    env: &Env,
    s: &CanvasState,
    maps: &FeatureMaps,
    rtg: [f64; 3],
    stats: &RtgStats,
    prev: Option<Anchor>,
) -> Vec<f64> {
    let cfg = env.cfg();
    let n = s.n_modules();
    let mut out = Vec::with_capacity(feature_len(cfg.z));

    // Pooled occupancy, one 6x6 grid per layer.
    pool_into(&mut out, cfg.w, cfg.h, cfg.z, |x, y, z| f64::from(s.occupant(x, y, z).is_some()));

    // Pooled wirelength-increase map, squashed into [0,1] per cell.
    let d = cfg.wl_scale() as f64;
    pool_into(&mut out, cfg.w, cfg.h, cfg.z, |x, y, z| {
        let v = maps.wl_increase[(z * cfg.h + y) * cfg.w + x];
        if v.is_finite() {
            d / (d + v)
        } else {
            0.0
        }
    });

    // Pooled difference map.
    pool_into(&mut out, cfg.w, cfg.h, cfg.z, |x, y, z| maps.diff[(z * cfg.h + y) * cfg.w + x]);

    // Next-module descriptor.
    let next = s.next_module().expect("features requested on a finished episode");
    let module = &env.netlist().modules[next];
    let max_degree = env.matrix().max_degree();
    out.push(module.width as f64 / cfg.w as f64);
    out.push(module.height as f64 / cfg.h as f64);
    out.push(module.area() as f64 / (cfg.w * cfg.h) as f64);
    out.push(if max_degree == 0 {
        0.0
    } else {
        env.matrix().degree(next) as f64 / max_degree as f64
    });

    // Remaining-module aggregates (current module counts as remaining).
    let total_area: usize = env.netlist().modules.iter().map(|m| m.area()).sum();
    let remaining_area: usize =
        s.placed_order()[s.t()..].iter().map(|&id| env.netlist().modules[id].area()).sum();
    out.push((n - s.t()) as f64 / n as f64);
    out.push(remaining_area as f64 / total_area as f64);

    // Normalized return-to-go.
    out.extend(stats.normalize_feature(rtg));

    // Episode progress.
    out.push(s.t() as f64 / n as f64);

    // Previous action, normalized; zero vector when absent.
    match prev {
        Some(a) => out.extend(normalize(a, &cfg).as_array()),
        None => out.extend([0.0; 3]),
    }

    debug_assert_eq!(out.len(), feature_len(cfg.z));
    out
}

/// Average-pool one scalar map into 6x6 tiles per layer. Tile boundaries
/// follow the near-equal integer split `i * extent / POOL`; an empty tile
/// contributes 0.
fn pool_into<F: Fn(usize, usize, usize) -> f64>(
    out: &mut Vec<f64>,
    w: usize,
    h: usize,
    z_layers: usize,
    cell: F,
) {
    for z in 0..z_layers {
        for ty in 0..POOL {
            let (y0, y1) = (ty * h / POOL, (ty + 1) * h / POOL);
            for tx in 0..POOL {
                let (x0, x1) = (tx * w / POOL, (tx + 1) * w / POOL);
                let count = (y1 - y0) * (x1 - x0);
                if count == 0 {
                    out.push(0.0);
                    continue;
                }
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += cell(x, y, z);
                    }
                }
                out.push(sum / count as f64);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Actor,
    Critic,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Actor => "actor",
            Role::Critic => "critic",
        }
    }

    pub fn parse(s: &str) -> Result<Role> {
        match s {
            "actor" => Ok(Role::Actor),
            "critic" => Ok(Role::Critic),
            other => Err(SgfError::Invalid(format!("unknown role {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Tensor {
    value: Array2<f64>,
    m: Array2<f64>,
    v: Array2<f64>,
}

impl Tensor {
    fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            value: Array2::zeros((rows, cols)),
            m: Array2::zeros((rows, cols)),
            v: Array2::zeros((rows, cols)),
        }
    }
}

/// Feed-forward network parameters plus AdamW optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    role: Role,
    dims: [usize; 4],
    // weights and biases per layer; biases stored as 1 x n matrices
    tensors: [Tensor; 6],
    step: u64,
}

/// Gradients in the same tensor order as [`Mlp::tensors`].
pub struct Grads {
    g: [Array2<f64>; 6],
    /// Mean batch loss at the point the gradients were taken.
    pub loss: f64,
}

impl Mlp {
    /// Standard-size network (`in_dim -> 256 -> 256 -> 3`).
    pub fn new(role: Role, in_dim: usize, seed: u64) -> Self {
        Self::with_dims(role, [in_dim, HIDDEN, HIDDEN, 3], seed)
    }

    pub fn with_dims(role: Role, dims: [usize; 4], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let mut t = Tensor::zeros(rows, cols);
            for v in t.value.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
            t
        };
        let tensors = [
            init(dims[0], dims[1]),
            Tensor::zeros(1, dims[1]),
            init(dims[1], dims[2]),
            Tensor::zeros(1, dims[2]),
            init(dims[2], dims[3]),
            Tensor::zeros(1, dims[3]),
        ];
        Mlp { role, dims, tensors, step: 0 }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    fn output_activation(&self, raw: f64) -> f64 {
        match self.role {
            Role::Actor => 0.5 * (raw.tanh() + 1.0),
            Role::Critic => raw.max(0.0),
        }
    }

    /// Derivative of the output activation expressed via the activated value.
    fn output_activation_grad(&self, out: f64) -> f64 {
        match self.role {
            // out = 0.5 (tanh + 1)  =>  d out / d raw = 2 out (1 - out)
            Role::Actor => 2.0 * out * (1.0 - out),
            Role::Critic => f64::from(out > 0.0),
        }
    }

    /// Batched forward pass: rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (_, _, _, out) = self.forward_trace(x);
        out
    }

    fn forward_trace(
        &self,
        x: ArrayView2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        assert_eq!(x.ncols(), self.dims[0], "input width mismatch");
        let h1 = (x.dot(&self.tensors[0].value) + &self.tensors[1].value).mapv(f64::tanh);
        let h2 = (h1.dot(&self.tensors[2].value) + &self.tensors[3].value).mapv(f64::tanh);
        let raw = h2.dot(&self.tensors[4].value) + &self.tensors[5].value;
        let out = raw.mapv(|v| self.output_activation(v));
        (x.to_owned(), h1, h2, out)
    }

    /// Single-sample forward pass.
    pub fn forward_one(&self, x: &[f64]) -> [f64; 3] {
        let arr = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let out = self.forward(arr.view());
        [out[[0, 0]], out[[0, 1]], out[[0, 2]]]
    }

    /// Actor-shaped convenience wrapper.
    pub fn propose(&self, x: &[f64]) -> ContinuousAction {
        debug_assert_eq!(self.role, Role::Actor);
        ContinuousAction::from_array(self.forward_one(x))
    }

    /// Exact gradients of the mean L1 loss over the batch. The L1
    /// subgradient at zero is taken as zero.
    pub fn gradients(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Grads {
        let batch = x.nrows() as f64;
        let (x_owned, h1, h2, out) = self.forward_trace(x);

        let mut loss = 0.0;
        let mut delta_out = Array2::zeros(out.raw_dim());
        for ((idx, o), t) in out.indexed_iter().zip(y.iter()) {
            let diff = o - t;
            loss += diff.abs();
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            delta_out[idx] = sign / batch * self.output_activation_grad(*o);
        }
        loss /= batch;

        let g_w3 = h2.t().dot(&delta_out);
        let g_b3 = delta_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut delta2 = delta_out.dot(&self.tensors[4].value.t());
        delta2.zip_mut_with(&h2, |d, &h| *d *= 1.0 - h * h);
        let g_w2 = h1.t().dot(&delta2);
        let g_b2 = delta2.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut delta1 = delta2.dot(&self.tensors[2].value.t());
        delta1.zip_mut_with(&h1, |d, &h| *d *= 1.0 - h * h);
        let g_w1 = x_owned.t().dot(&delta1);
        let g_b1 = delta1.sum_axis(Axis(0)).insert_axis(Axis(0));

        Grads { g: [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3], loss }
    }

    /// One AdamW update with decoupled weight decay.
    pub fn optimizer_step(&mut self, grads: &Grads, lr: f64, weight_decay: f64) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (tensor, g) in self.tensors.iter_mut().zip(&grads.g) {
            azip_update(tensor, g, lr, weight_decay, bc1, bc2);
        }
    }

    /// Forward, backward, and update in one call; returns the batch loss.
    pub fn train_batch(
        &mut self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        lr: f64,
        weight_decay: f64,
    ) -> f64 {
        let grads = self.gradients(x, y);
        self.optimizer_step(&grads, lr, weight_decay);
        grads.loss
    }

    /// Mean L1 loss without updating anything.
    pub fn eval_loss(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
        let out = self.forward(x);
        let batch = x.nrows() as f64;
        out.iter().zip(y.iter()).map(|(o, t)| (o - t).abs()).sum::<f64>() / batch
    }

    // -- flat parameter access (finite-difference checks, tests) ----------

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn get_param(&self, mut idx: usize) -> f64 {
        for t in &self.tensors {
            if idx < t.value.len() {
                return *t.value.as_slice().unwrap().get(idx).unwrap();
            }
            idx -= t.value.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for t in &mut self.tensors {
            if idx < t.value.len() {
                t.value.as_slice_mut().unwrap()[idx] = value;
                return;
            }
            idx -= t.value.len();
        }
        panic!("parameter index out of range");
    }

    pub fn grad_flat(grads: &Grads) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &grads.g {
            out.extend(g.iter().copied());
        }
        out
    }

    // -- checkpoint format -------------------------------------------------

    /// Serialize as `sgf-ckpt v1 <role> <dims...>` followed by one line per
    /// tensor (values, then first and second Adam moments) and the step
    /// count. Decimal rendering is shortest-round-trip, so read back is
    /// bit-identical.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!(
            "sgf-ckpt v1 {} {} {} {} {}\n",
            self.role.as_str(),
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.dims[3]
        );
        let mut push_line = |values: &Array2<f64>| {
            let mut first = true;
            for v in values.iter() {
                if !first {
                    out.push(' ');
                }
                out.push_str(&format!("{v}"));
                first = false;
            }
            out.push('\n');
        };
        for t in &self.tensors {
            push_line(&t.value);
        }
        for t in &self.tensors {
            push_line(&t.m);
        }
        for t in &self.tensors {
            push_line(&t.v);
        }
        out.push_str(&format!("{}\n", self.step));
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Mlp> {
        let mut lines = text.lines();
        let header =
            lines.next().ok_or_else(|| SgfError::Invalid("empty checkpoint".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "sgf-ckpt" || fields[1] != "v1" {
            return Err(SgfError::Invalid(format!("bad checkpoint header: {header}")));
        }
        let role = Role::parse(fields[2])?;
        let mut dims = [0usize; 4];
        for (slot, tok) in dims.iter_mut().zip(&fields[3..]) {
            *slot = tok
                .parse()
                .map_err(|_| SgfError::Invalid(format!("bad dimension {tok} in header")))?;
        }
        let mut tokens = lines.flat_map(str::split_whitespace);
        let mut net = Mlp::with_dims(role, dims, 0);
        let shapes: Vec<(usize, usize)> = (0..3)
            .flat_map(|l| [(dims[l], dims[l + 1]), (1, dims[l + 1])])
            .collect();
        for field in 0..3 {
            for (i, &(rows, cols)) in shapes.iter().enumerate() {
                let mut arr = Array2::zeros((rows, cols));
                for v in arr.iter_mut() {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| SgfError::Invalid("checkpoint truncated".into()))?;
                    *v = tok
                        .parse()
                        .map_err(|_| SgfError::Invalid(format!("bad parameter {tok}")))?;
                }
                match field {
                    0 => net.tensors[i].value = arr,
                    1 => net.tensors[i].m = arr,
                    _ => net.tensors[i].v = arr,
                }
            }
        }
        let step_tok = tokens
            .next()
            .ok_or_else(|| SgfError::Invalid("checkpoint missing step count".into()))?;
        net.step = step_tok
            .parse()
            .map_err(|_| SgfError::Invalid(format!("bad step count {step_tok}")))?;
        if tokens.next().is_some() {
            return Err(SgfError::Invalid("trailing data in checkpoint".into()));
        }
        Ok(net)
    }
}

fn azip_update(
    tensor: &mut Tensor,
    grad: &Array2<f64>,
    lr: f64,
    weight_decay: f64,
    bc1: f64,
    bc2: f64,
) {
    for ((value, m), (v, g)) in tensor
        .value
        .iter_mut()
        .zip(tensor.m.iter_mut())
        .zip(tensor.v.iter_mut().zip(grad.iter()))
    {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *value -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS) + lr * weight_decay * *value;
    }
}
