//! Feed-forward network model: layers, forward evaluation and the
//! monotonicity conditions under which neuron-wise tightness composes.

use serde::{Deserialize, Serialize};

pub use crate::activation::ActivationKind;
use crate::activation::act_eval;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// 2-D convolution over a channel-major (CHW) input.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    /// `out_ch × in_ch × kh × kw`, row-major.
    pub kernels: Vec<f64>,
    pub kernel_shape: [usize; 4],
    pub bias: Vector,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    /// `(channels, height, width)`
    pub in_shape: (usize, usize, usize),
}

impl Conv {
    pub fn out_hw(&self) -> (usize, usize) {
        let (_, h, w) = self.in_shape;
        let [_, _, kh, kw] = self.kernel_shape;
        let oh = (h + 2 * self.padding.0 - kh) / self.stride.0 + 1;
        let ow = (w + 2 * self.padding.1 - kw) / self.stride.1 + 1;
        (oh, ow)
    }

    pub fn in_dim(&self) -> usize {
        let (c, h, w) = self.in_shape;
        c * h * w
    }

    pub fn out_dim(&self) -> usize {
        let (oh, ow) = self.out_hw();
        self.kernel_shape[0] * oh * ow
    }

    fn kernel(&self, o: usize, c: usize, i: usize, j: usize) -> f64 {
        let [_, ic, kh, kw] = self.kernel_shape;
        self.kernels[((o * ic + c) * kh + i) * kw + j]
    }

    fn validate(&self, layer: usize) -> Result<()> {
        let shape_err = |reason: String| Error::Shape { layer, reason };
        let [oc, ic, kh, kw] = self.kernel_shape;
        let (c, h, w) = self.in_shape;
        if self.kernels.len() != oc * ic * kh * kw {
            return Err(shape_err(format!(
                "kernel data has {} values, shape {:?} needs {}",
                self.kernels.len(),
                self.kernel_shape,
                oc * ic * kh * kw
            )));
        }
        if ic != c {
            return Err(shape_err(format!("kernel expects {ic} input channels, input has {c}")));
        }
        if self.bias.len() != oc {
            return Err(shape_err(format!("{} biases for {oc} output channels", self.bias.len())));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(shape_err("stride must be positive".into()));
        }
        if kh == 0 || kw == 0 || kh > h + 2 * self.padding.0 || kw > w + 2 * self.padding.1 {
            return Err(shape_err(format!("kernel {kh}×{kw} does not fit padded input {h}×{w}")));
        }
        if self.kernels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("convolution kernel"));
        }
        Ok(())
    }

    /// Sliding-window evaluation.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let [oc, ic, kh, kw] = self.kernel_shape;
        let (_, h, w) = self.in_shape;
        let (oh, ow) = self.out_hw();
        let mut out = vec![0.0; oc * oh * ow];
        for o in 0..oc {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = self.bias[o];
                    for c in 0..ic {
                        for i in 0..kh {
                            let row = (y * self.stride.0 + i) as isize - self.padding.0 as isize;
                            if row < 0 || row >= h as isize {
                                continue;
                            }
                            for j in 0..kw {
                                let col = (xo * self.stride.1 + j) as isize - self.padding.1 as isize;
                                if col < 0 || col >= w as isize {
                                    continue;
                                }
                                acc += self.kernel(o, c, i, j) * x[(c * h + row as usize) * w + col as usize];
                            }
                        }
                    }
                    out[(o * oh + y) * ow + xo] = acc;
                }
            }
        }
        out
    }
}

/// Lower a convolution to the dense affine map it computes on flattened
/// CHW tensors.
pub fn conv_to_affine(conv: &Conv) -> (Matrix, Vector) {
    let [oc, ic, kh, kw] = conv.kernel_shape;
    let (_, h, w) = conv.in_shape;
    let (oh, ow) = conv.out_hw();
    let n_in = conv.in_dim();
    let mut data = vec![0.0; conv.out_dim() * n_in];
    let mut bias = Vec::with_capacity(conv.out_dim());
    for o in 0..oc {
        for y in 0..oh {
            for xo in 0..ow {
                let r = (o * oh + y) * ow + xo;
                bias.push(conv.bias[o]);
                for c in 0..ic {
                    for i in 0..kh {
                        let row = (y * conv.stride.0 + i) as isize - conv.padding.0 as isize;
                        if row < 0 || row >= h as isize {
                            continue;
                        }
                        for j in 0..kw {
                            let col = (xo * conv.stride.1 + j) as isize - conv.padding.1 as isize;
                            if col < 0 || col >= w as isize {
                                continue;
                            }
                            data[r * n_in + (c * h + row as usize) * w + col as usize] += conv.kernel(o, c, i, j);
                        }
                    }
                }
            }
        }
    }
    (Matrix::from_raw(conv.out_dim(), n_in, data), Vector::from_raw(bias))
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Affine { w: Matrix, b: Vector },
    Conv(Conv),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub activation: ActivationKind,
}

impl Layer {
    pub fn affine(w: Matrix, b: Vector, activation: ActivationKind) -> Self {
        Self {
            kind: LayerKind::Affine { w, b },
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        match &self.kind {
            LayerKind::Affine { w, .. } => w.cols(),
            LayerKind::Conv(c) => c.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match &self.kind {
            LayerKind::Affine { w, .. } => w.rows(),
            LayerKind::Conv(c) => c.out_dim(),
        }
    }
}

/// A layer lowered to `activation(W·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vector,
    pub activation: ActivationKind,
}

/// Validated feed-forward network `f = f^k ∘ σ^{k−1} ∘ … ∘ f^1`.
///
/// Convolutions are lowered to dense matrices at construction, so the
/// verification code only ever sees [`DenseLayer`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    dense: Vec<DenseLayer>,
    input_dim: usize,
    num_labels: usize,
}

impl Network {
    pub fn new(layers: Vec<Layer>, input_dim: usize, num_labels: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Structure("network has no layers".into()));
        }
        let mut width = input_dim;
        let mut dense = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            if let LayerKind::Affine { w, b } = &layer.kind {
                if w.rows() != b.len() {
                    return Err(Error::Shape {
                        layer: i,
                        reason: format!("weight matrix has {} rows but {} biases", w.rows(), b.len()),
                    });
                }
            }
            if let LayerKind::Conv(c) = &layer.kind {
                c.validate(i)?;
            }
            if layer.in_dim() != width {
                return Err(Error::Shape {
                    layer: i,
                    reason: format!("expects {} inputs, previous layer provides {width}", layer.in_dim()),
                });
            }
            width = layer.out_dim();
            let (w, b) = match &layer.kind {
                LayerKind::Affine { w, b } => (w.clone(), b.clone()),
                LayerKind::Conv(c) => conv_to_affine(c),
            };
            dense.push(DenseLayer {
                w,
                b,
                activation: layer.activation,
            });
        }
        let last = layers.len() - 1;
        if width != num_labels {
            return Err(Error::Shape {
                layer: last,
                reason: format!("output width {width} differs from num_labels {num_labels}"),
            });
        }
        if layers[last].activation != ActivationKind::Identity {
            return Err(Error::Shape {
                layer: last,
                reason: format!("output layer must use identity activation, found {}", layers[last].activation),
            });
        }
        Ok(Self {
            layers,
            dense,
            input_dim,
            num_labels,
        })
    }

    /// Convenience constructor from dense `(W, b, activation)` triples.
    pub fn from_dense(layers: Vec<(Matrix, Vector, ActivationKind)>) -> Result<Self> {
        let input_dim = layers.first().map_or(0, |l| l.0.cols());
        let num_labels = layers.last().map_or(0, |l| l.0.rows());
        Self::new(
            layers.into_iter().map(|(w, b, a)| Layer::affine(w, b, a)).collect(),
            input_dim,
            num_labels,
        )
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn dense_layers(&self) -> &[DenseLayer] {
        &self.dense
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn neuron_count(&self) -> usize {
        self.dense.iter().map(|l| l.w.rows()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::dim("network input", self.input_dim, x.len()));
        }
        let mut scratch = Scratch::default();
        Ok(self.forward_with(x, &mut scratch).to_vec())
    }

    /// Forward pass reusing caller-owned buffers; `x` must have `input_dim`
    /// entries.
    pub fn forward_with<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        scratch.cur.clear();
        scratch.cur.extend_from_slice(x);
        for layer in &self.dense {
            scratch.next.clear();
            scratch.next.extend_from_slice(&layer.b);
            for (r, out) in scratch.next.iter_mut().enumerate() {
                *out += crate::linalg::dot(layer.w.row(r), &scratch.cur);
            }
            if layer.activation != ActivationKind::Identity {
                for v in scratch.next.iter_mut() {
                    *v = act_eval(layer.activation, *v);
                }
            }
            std::mem::swap(&mut scratch.cur, &mut scratch.next);
        }
        &scratch.cur
    }

    /// Pre-activation values `φ^t(x)` of every layer.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_dim {
            return Err(Error::dim("network input", self.input_dim, x.len()));
        }
        let mut cur = x.to_vec();
        let mut out = Vec::with_capacity(self.dense.len());
        for layer in &self.dense {
            let mut z = layer.b.to_vec();
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += crate::linalg::dot(layer.w.row(r), &cur);
            }
            cur = z.iter().map(|&v| act_eval(layer.activation, v)).collect();
            out.push(z);
        }
        Ok(out)
    }

    pub fn predict_label(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }
}

/// Reusable buffers for [`Network::forward_with`].
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    cur: Vec<f64>,
    next: Vec<f64>,
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// The ℓ∞ ball `B∞(x0, eps)`, optionally intersected with a global box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub x0: Vector,
    pub eps: f64,
    pub clip: Option<(f64, f64)>,
}

impl InputSpec {
    pub fn new(x0: Vec<f64>, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("radius must be finite and non-negative, got {eps}")));
        }
        Ok(Self {
            x0: Vector::new(x0)?,
            eps,
            clip: None,
        })
    }

    pub fn with_clip(mut self, lo: f64, hi: f64) -> Self {
        self.clip = Some((lo, hi));
        self
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self {
            x0: self.x0.clone(),
            eps,
            clip: self.clip,
        }
    }

    pub fn check(&self, net: &Network) -> Result<()> {
        if self.x0.len() != net.input_dim() {
            return Err(Error::dim("input centre", net.input_dim(), self.x0.len()));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::Domain(format!("radius must be non-negative, got {}", self.eps)));
        }
        Ok(())
    }

    /// Per-coordinate box `[lo, hi]` of the (clipped) ball.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo: Vec<f64> = self.x0.iter().map(|c| c - self.eps).collect();
        let mut hi: Vec<f64> = self.x0.iter().map(|c| c + self.eps).collect();
        if let Some((a, b)) = self.clip {
            for (l, h) in lo.iter_mut().zip(hi.iter_mut()) {
                *l = l.max(a).min(b);
                *h = h.min(b).max(a);
            }
        }
        (lo, hi)
    }
}

/// Which of the two monotonicity conditions a network meets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonotonicityReport {
    /// Every first-layer column has nonzero entries of one sign.
    pub condition1_ok: bool,
    /// Every weight after the first layer is non-negative.
    pub condition2_ok: bool,
    pub qualifies: bool,
}

pub fn check_monotonic_conditions(net: &Network) -> MonotonicityReport {
    let first = &net.dense[0].w;
    let condition1_ok = (0..first.cols()).all(|c| {
        let mut pos = false;
        let mut neg = false;
        for r in 0..first.rows() {
            let v = first.get(r, c);
            pos |= v > 0.0;
            neg |= v < 0.0;
        }
        !(pos && neg)
    });
    let condition2_ok = net.dense[1..].iter().all(|l| l.w.data().iter().all(|&v| v >= 0.0));
    MonotonicityReport {
        condition1_ok,
        condition2_ok,
        qualifies: condition1_ok && condition2_ok,
    }
}

/// Sign (+1, −1 or 0) of each first-layer column; the direction in which
/// every hidden pre-activation of a qualifying network moves with that input.
pub fn first_layer_column_signs(net: &Network) -> Vec<f64> {
    let first = &net.dense[0].w;
    (0..first.cols())
        .map(|c| {
            let s: f64 = (0..first.rows()).map(|r| first.get(r, c)).sum();
            if s > 0.0 {
                1.0
            } else if s < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}
