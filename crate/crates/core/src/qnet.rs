//! Convolutional Q-network with hand-written forward and reverse passes.
//!
//! Layout: `conv1 → ReLU → conv2 → ReLU → flatten → fc → head → min-max`.
//! Both convolutions are stride 1 with zero padding that preserves the
//! `5 × width` plane. The network emits one score per switch; an action closes
//! the `k` best-scored switches and its Q-value is the mean of their scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{InputTensor, INPUT_ROWS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::topology::SwitchConfig;

pub const CHECKPOINT_FORMAT: &str = "gridform-qnet-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadActivation {
    #[default]
    Linear,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum KernelPreset {
    #[default]
    #[serde(rename = "3x3")]
    K3,
    #[serde(rename = "5x5")]
    K5,
}

impl KernelPreset {
    pub fn size(self) -> usize {
        match self {
            KernelPreset::K3 => 3,
            KernelPreset::K5 => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub rows: usize,
    pub width: usize,
    pub outputs: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub head: HeadActivation,
}

impl Architecture {
    pub fn new(width: usize, outputs: usize, kernel: KernelPreset) -> Self {
        Self {
            rows: INPUT_ROWS,
            width,
            outputs,
            kernel_h: kernel.size(),
            kernel_w: kernel.size(),
            conv1_filters: 12,
            conv2_filters: 24,
            head: HeadActivation::Linear,
        }
    }

    fn plane(&self) -> usize {
        self.rows * self.width
    }

    pub fn features(&self) -> usize {
        self.conv2_filters * self.plane()
    }

    fn taps(&self) -> usize {
        self.kernel_h * self.kernel_w
    }

    fn lengths(&self) -> [usize; 6] {
        [
            self.conv1_filters * self.taps(),
            self.conv1_filters,
            self.conv2_filters * self.conv1_filters * self.taps(),
            self.conv2_filters,
            self.outputs * self.features(),
            self.outputs,
        ]
    }
}

/// All trainable tensors. Also used for gradients and optimizer moments.
///
/// Conv weights are `[out][in][kh][kw]`; fc weights are `[output][feature]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub conv1_w: Vec<T>,
    pub conv1_b: Vec<T>,
    pub conv2_w: Vec<T>,
    pub conv2_b: Vec<T>,
    pub fc_w: Vec<T>,
    pub fc_b: Vec<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(arch: &Architecture) -> Self {
        let [a, b, c, d, e, f] = arch.lengths().map(|n| vec![T::zero(); n]);
        Self {
            conv1_w: a,
            conv1_b: b,
            conv2_w: c,
            conv2_b: d,
            fc_w: e,
            fc_b: f,
        }
    }

    pub fn tensors(&self) -> [&[T]; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.fc_w,
            &self.fc_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc_w,
            &mut self.fc_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat coordinate access across all tensors in declaration order.
    pub fn get(&self, mut index: usize) -> T {
        for t in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn get_mut(&mut self, mut index: usize) -> &mut T {
        for t in self.tensors_mut() {
            if index < t.len() {
                return &mut t[index];
            }
            index -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn shapes_match(&self, arch: &Architecture) -> bool {
        self.tensors().map(<[T]>::len) == arch.lengths()
    }
}

/// Min-max normalized switch scores.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputVector<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> OutputVector<T> {
    /// Maps scores to `[0, 1]`; all-equal scores map to 0.5.
    pub fn normalize(raw: &[T]) -> Self {
        let (lo, hi) = min_max(raw);
        let values = if hi > lo {
            raw.iter().map(|&z| (z - lo) / (hi - lo)).collect()
        } else {
            vec![T::of(0.5); raw.len()]
        };
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn min_max<T: Scalar>(xs: &[T]) -> (T, T) {
    xs.iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// First index of the smallest and of the largest entry.
fn arg_min_max<T: Scalar>(xs: &[T]) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[lo] {
            lo = i;
        }
        if x > xs[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

/// Indices of the `k` largest entries, ties broken by lower index.
pub fn top_k<T: Scalar>(values: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Closes the `k` highest-valued switches.
pub fn decode_action<T: Scalar>(v: &OutputVector<T>, k: usize) -> SwitchConfig {
    SwitchConfig::from_closed(v.len(), top_k(&v.values, k))
}

/// Mean of the `k` largest entries.
pub fn q_value<T: Scalar>(v: &OutputVector<T>, k: usize) -> T {
    if k == 0 {
        return T::zero();
    }
    let idx = top_k(&v.values, k);
    idx.iter().map(|&i| v.values[i]).sum::<T>() / T::of(k as f64)
}

/// Mean of the entries of the switches `action` closes.
pub fn action_value<T: Scalar>(v: &OutputVector<T>, action: &SwitchConfig) -> T {
    let k = action.closed_count();
    if k == 0 {
        return T::zero();
    }
    action.closed_indices().map(|i| v.values[i]).sum::<T>() / T::of(k as f64)
}

/// Intermediate activations kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input: Vec<T>,
    act1: Vec<T>,
    act2: Vec<T>,
    /// fc output before the head activation.
    pre_head: Vec<T>,
    /// Head output, the input of the normalization.
    raw: Vec<T>,
    pub output: OutputVector<T>,
}

/// Loss and parameter gradient for one transition.
#[derive(Debug, Clone)]
pub struct Backward<T> {
    pub q: T,
    pub loss: T,
    pub grads: Params<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<T> {
    pub arch: Architecture,
    pub params: Params<T>,
    pub seed: u64,
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Scalar>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[T],
    bias: &[T],
    c_out: usize,
    kh: usize,
    kw: usize,
    out: &mut [T],
) {
    let (ph, pw) = (kh / 2, kw / 2);
    let plane = h * w;
    for co in 0..c_out {
        let dst = &mut out[co * plane..(co + 1) * plane];
        dst.iter_mut().for_each(|x| *x = bias[co]);
        for ci in 0..c_in {
            let src = &input[ci * plane..(ci + 1) * plane];
            for di in 0..kh {
                for dj in 0..kw {
                    let wt = weights[((co * c_in + ci) * kh + di) * kw + dj];
                    let j_lo = pw.saturating_sub(dj);
                    let j_hi = (w + pw).saturating_sub(dj).min(w);
                    for i in 0..h {
                        let si = i + di;
                        if si < ph || si - ph >= h {
                            continue;
                        }
                        let si = si - ph;
                        let d = &mut dst[i * w + j_lo..i * w + j_hi];
                        let s = &src[si * w + j_lo + dj - pw..si * w + j_hi + dj - pw];
                        for (o, &x) in d.iter_mut().zip(s) {
                            *o += wt * x;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight, bias, and (optionally) input gradients of a convolution.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[T],
    c_out: usize,
    kh: usize,
    kw: usize,
    g_out: &[T],
    g_w: &mut [T],
    g_b: &mut [T],
    mut g_in: Option<&mut [T]>,
) {
    let (ph, pw) = (kh / 2, kw / 2);
    let plane = h * w;
    for co in 0..c_out {
        let go = &g_out[co * plane..(co + 1) * plane];
        g_b[co] += go.iter().copied().sum::<T>();
        for ci in 0..c_in {
            let src = &input[ci * plane..(ci + 1) * plane];
            for di in 0..kh {
                for dj in 0..kw {
                    let widx = ((co * c_in + ci) * kh + di) * kw + dj;
                    let wt = weights[widx];
                    let j_lo = pw.saturating_sub(dj);
                    let j_hi = (w + pw).saturating_sub(dj).min(w);
                    let mut acc = T::zero();
                    for i in 0..h {
                        let si = i + di;
                        if si < ph || si - ph >= h {
                            continue;
                        }
                        let si = si - ph;
                        let g = &go[i * w + j_lo..i * w + j_hi];
                        let s_off = si * w + j_lo + dj - pw;
                        let s = &src[s_off..s_off + g.len()];
                        for (&gv, &x) in g.iter().zip(s) {
                            acc += gv * x;
                        }
                        if let Some(gi) = g_in.as_deref_mut() {
                            let gi = &mut gi[ci * plane + s_off..ci * plane + s_off + g.len()];
                            for (dst, &gv) in gi.iter_mut().zip(g) {
                                *dst += wt * gv;
                            }
                        }
                    }
                    g_w[widx] += acc;
                }
            }
        }
    }
}

impl<T: Scalar> QNetwork<T> {
    /// Zero biases, fan-in-scaled uniform weights drawn from `seed`.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        assert!(
            arch.kernel_h % 2 == 1 && arch.kernel_w % 2 == 1,
            "kernel sizes must be odd"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&arch);
        let taps = arch.taps() as f64;
        let mut fill = |xs: &mut [T], bound: f64| {
            for x in xs {
                *x = T::of(rng.random_range(-bound..bound));
            }
        };
        fill(&mut params.conv1_w, (6.0 / taps).sqrt());
        fill(
            &mut params.conv2_w,
            (6.0 / (taps * arch.conv1_filters as f64)).sqrt(),
        );
        fill(&mut params.fc_w, (3.0 / arch.features() as f64).sqrt());
        Self { arch, params, seed }
    }

    pub fn outputs(&self) -> usize {
        self.arch.outputs
    }

    fn check(&self, input: &InputTensor<T>) -> Result<()> {
        let expected = (self.arch.rows, self.arch.width);
        if input.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: input.shape(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &InputTensor<T>) -> Result<OutputVector<T>> {
        Ok(self.forward_cached(input)?.output)
    }

    pub fn forward_cached(&self, input: &InputTensor<T>) -> Result<ForwardCache<T>> {
        self.check(input)?;
        let a = &self.arch;
        let p = &self.params;
        let (h, w) = (a.rows, a.width);
        let plane = a.plane();
        let mut act1 = vec![T::zero(); a.conv1_filters * plane];
        conv_forward(
            input.as_slice(),
            1,
            h,
            w,
            &p.conv1_w,
            &p.conv1_b,
            a.conv1_filters,
            a.kernel_h,
            a.kernel_w,
            &mut act1,
        );
        act1.iter_mut().for_each(|x| *x = x.max(T::zero()));
        let mut act2 = vec![T::zero(); a.conv2_filters * plane];
        conv_forward(
            &act1,
            a.conv1_filters,
            h,
            w,
            &p.conv2_w,
            &p.conv2_b,
            a.conv2_filters,
            a.kernel_h,
            a.kernel_w,
            &mut act2,
        );
        act2.iter_mut().for_each(|x| *x = x.max(T::zero()));
        let f = a.features();
        let pre_head: Vec<T> = (0..a.outputs)
            .map(|o| {
                let row = &p.fc_w[o * f..(o + 1) * f];
                p.fc_b[o] + row.iter().zip(&act2).map(|(&wt, &x)| wt * x).sum::<T>()
            })
            .collect();
        let raw: Vec<T> = match a.head {
            HeadActivation::Linear => pre_head.clone(),
            HeadActivation::Relu => pre_head.iter().map(|x| x.max(T::zero())).collect(),
        };
        let output = OutputVector::normalize(&raw);
        Ok(ForwardCache {
            input: input.as_slice().to_vec(),
            act1,
            act2,
            pre_head,
            raw,
            output,
        })
    }

    /// Gradient of `(target - Q(s, a))^2`, where `Q(s, a)` averages the
    /// normalized scores of the switches `action` closes.
    ///
    /// The normalization is differentiated exactly, including its dependence
    /// on the current minimum and maximum entries.
    pub fn backward(&self, cache: &ForwardCache<T>, action: &SwitchConfig, target: T) -> Backward<T> {
        let a = &self.arch;
        let p = &self.params;
        let mut grads = Params::zeros(a);
        let v = &cache.output.values;
        let q = action_value(&cache.output, action);
        let diff = target - q;
        let loss = diff * diff;
        let k = action.closed_count();
        if k == 0 {
            return Backward { q, loss, grads };
        }

        // dL/dv: only the action's switches feed Q.
        let dq = -(diff + diff) / T::of(k as f64);
        let mut g_v = vec![T::zero(); a.outputs];
        for i in action.closed_indices() {
            g_v[i] = dq;
        }

        // Through the min-max normalization.
        let (lo_i, hi_i) = arg_min_max(&cache.raw);
        let span = cache.raw[hi_i] - cache.raw[lo_i];
        let mut g_raw = vec![T::zero(); a.outputs];
        if span > T::zero() {
            let mut to_min = T::zero();
            let mut to_max = T::zero();
            for i in 0..a.outputs {
                g_raw[i] = g_v[i] / span;
                to_min += g_v[i] * (v[i] - T::one()) / span;
                to_max -= g_v[i] * v[i] / span;
            }
            g_raw[lo_i] += to_min;
            g_raw[hi_i] += to_max;
        }

        let g_pre: Vec<T> = match a.head {
            HeadActivation::Linear => g_raw,
            HeadActivation::Relu => g_raw
                .iter()
                .zip(&cache.pre_head)
                .map(|(&g, &z)| if z > T::zero() { g } else { T::zero() })
                .collect(),
        };

        // Fully connected layer.
        let f = a.features();
        let mut g_act2 = vec![T::zero(); f];
        for (o, &g) in g_pre.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grads.fc_b[o] += g;
            let row = &p.fc_w[o * f..(o + 1) * f];
            let g_row = &mut grads.fc_w[o * f..(o + 1) * f];
            for ((gw, &x), (ga, &wt)) in g_row.iter_mut().zip(&cache.act2).zip(g_act2.iter_mut().zip(row)) {
                *gw += g * x;
                *ga += g * wt;
            }
        }

        let (h, w) = (a.rows, a.width);
        for (g, &x) in g_act2.iter_mut().zip(&cache.act2) {
            if x <= T::zero() {
                *g = T::zero();
            }
        }
        let mut g_act1 = vec![T::zero(); cache.act1.len()];
        conv_backward(
            &cache.act1,
            a.conv1_filters,
            h,
            w,
            &p.conv2_w,
            a.conv2_filters,
            a.kernel_h,
            a.kernel_w,
            &g_act2,
            &mut grads.conv2_w,
            &mut grads.conv2_b,
            Some(&mut g_act1),
        );
        for (g, &x) in g_act1.iter_mut().zip(&cache.act1) {
            if x <= T::zero() {
                *g = T::zero();
            }
        }
        conv_backward(
            &cache.input,
            1,
            h,
            w,
            &p.conv1_w,
            a.conv1_filters,
            a.kernel_h,
            a.kernel_w,
            &g_act1,
            &mut grads.conv1_w,
            &mut grads.conv1_b,
            None,
        );
        Backward { q, loss, grads }
    }

    /// Loss `(target - Q(s, a))^2` without gradients; used by the finite-difference check.
    pub fn loss(&self, input: &InputTensor<T>, action: &SwitchConfig, target: T) -> Result<T> {
        let out = self.forward(input)?;
        let d = target - action_value(&out, action);
        Ok(d * d)
    }

    pub fn to_checkpoint(&self) -> String {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            scalar: std::any::type_name::<T>().to_string(),
            seed: self.seed,
            architecture: self.arch,
            params: Params {
                conv1_w: widen(&self.params.conv1_w),
                conv1_b: widen(&self.params.conv1_b),
                conv2_w: widen(&self.params.conv2_w),
                conv2_b: widen(&self.params.conv2_b),
                fc_w: widen(&self.params.fc_w),
                fc_b: widen(&self.params.fc_b),
            },
        };
        serde_json::to_string(&ckpt).expect("checkpoint serialization cannot fail")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format {:?}, expected {CHECKPOINT_FORMAT:?}",
                ckpt.format
            )));
        }
        let narrow = |xs: &[f64]| xs.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        let params = Params {
            conv1_w: narrow(&ckpt.params.conv1_w),
            conv1_b: narrow(&ckpt.params.conv1_b),
            conv2_w: narrow(&ckpt.params.conv2_w),
            conv2_b: narrow(&ckpt.params.conv2_b),
            fc_w: narrow(&ckpt.params.fc_w),
            fc_b: narrow(&ckpt.params.fc_b),
        };
        if !params.shapes_match(&ckpt.architecture) {
            return Err(Error::Checkpoint("tensor sizes do not match architecture".into()));
        }
        Ok(Self {
            arch: ckpt.architecture,
            params,
            seed: ckpt.seed,
        })
    }
}

fn widen<T: Scalar>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.to_f64_lossless()).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    scalar: String,
    seed: u64,
    architecture: Architecture,
    params: Params<f64>,
}

/// `r` on terminal transitions, else `r + gamma * Q_target(s', top-k)`.
pub fn td_target<T: Scalar>(
    reward: T,
    terminal: bool,
    target: &QNetwork<T>,
    next_input: &InputTensor<T>,
    k: usize,
    gamma: T,
) -> Result<T> {
    if terminal || gamma == T::zero() {
        return Ok(reward);
    }
    let v = target.forward(next_input)?;
    Ok(reward + gamma * q_value(&v, k))
}

/// Double-DQN target: `online` picks the next configuration by top-k decoding
/// and `target` values it.
pub fn double_td_target<T: Scalar>(
    reward: T,
    terminal: bool,
    online: &QNetwork<T>,
    target: &QNetwork<T>,
    next_input: &InputTensor<T>,
    k: usize,
    gamma: T,
) -> Result<T> {
    if terminal || gamma == T::zero() {
        return Ok(reward);
    }
    let next = decode_action(&online.forward(next_input)?, k);
    let v = target.forward(next_input)?;
    Ok(reward + gamma * action_value(&v, &next))
}

/// Adaptive-moment optimizer.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub m: Params<T>,
    pub v: Params<T>,
    pub steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(arch: &Architecture, learning_rate: f64) -> Self {
        Self {
            learning_rate: T::of(learning_rate),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
            m: Params::zeros(arch),
            v: Params::zeros(arch),
            steps: 0,
        }
    }

    /// One in-place update. Rejects non-finite gradients.
    pub fn apply(&mut self, params: &mut Params<T>, grads: &Params<T>) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Diverged("non-finite gradient".into()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let one = T::one();
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Summary of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub seed: u64,
    pub coordinates: usize,
    /// Coordinates in fc rows that cannot influence the loss.
    pub zero_coordinates: usize,
    pub max_relative_error: f64,
    pub max_zero_gradient: f64,
}

/// Compares [`QNetwork::backward`] with central differences of
/// [`QNetwork::loss`] at `coordinates` parameters of a randomly initialized
/// 8-input, 8-output network. One in eight sampled coordinates is taken from
/// fc rows of outputs outside the action that are neither the minimum nor the
/// maximum score; their analytic gradient must be exactly zero.
///
/// The relative error is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn gradient_check(seed: u64, coordinates: usize) -> Result<GradCheck> {
    let arch = Architecture::new(8, 8, KernelPreset::K3);
    let net = QNetwork::<f64>::new(arch, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let input = InputTensor::from_rows(std::array::from_fn(|_| {
        (0..arch.width).map(|_| rng.random_range(0.0..1.0)).collect()
    }));
    let cache = net.forward_cached(&input)?;
    let k = 5;
    let action = decode_action(&cache.output, k);
    let target = q_value(&cache.output, k) + rng.random_range(-1.0..1.0);
    let analytic = net.backward(&cache, &action, target).grads;

    let (lo, hi) = arg_min_max(&cache.raw);
    let f = arch.features();
    let fc_offset = net.params.conv1_w.len()
        + net.params.conv1_b.len()
        + net.params.conv2_w.len()
        + net.params.conv2_b.len();
    let idle: Vec<usize> = (0..arch.outputs)
        .filter(|&o| !action.is_closed(o) && o != lo && o != hi)
        .collect();
    let total = net.params.len();
    let mut picks: Vec<(usize, bool)> = Vec::with_capacity(coordinates);
    for i in 0..coordinates {
        if i % 8 == 7 && !idle.is_empty() {
            let o = idle[rng.random_range(0..idle.len())];
            picks.push((fc_offset + o * f + rng.random_range(0..f), true));
        } else {
            picks.push((rng.random_range(0..total), false));
        }
    }

    let h = 1e-5;
    let mut max_rel = 0.0f64;
    let mut max_zero = 0.0f64;
    let mut probe = net.clone();
    for &(idx, must_vanish) in &picks {
        let base = net.params.get(idx);
        *probe.params.get_mut(idx) = base + h;
        let plus = probe.loss(&input, &action, target)?;
        *probe.params.get_mut(idx) = base - h;
        let minus = probe.loss(&input, &action, target)?;
        *probe.params.get_mut(idx) = base;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.get(idx);
        if must_vanish {
            max_zero = max_zero.max(a.abs());
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheck {
        seed,
        coordinates,
        zero_coordinates: picks.iter().filter(|p| p.1).count(),
        max_relative_error: max_rel,
        max_zero_gradient: max_zero,
    })
}
