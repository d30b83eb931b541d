//! Recorded forward graph and its reverse sweep.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{conv2d_backward, conv2d_forward};
use super::{shape_err, ConvSpec, NnError, Scalar, Tensor};
use crate::annotation::TopViewLabel;
use crate::pointcloud::Label;

/// Smallest probability fed to `ln` in the loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Counter-based dropout randomness: one stream per layer, one window per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub layer: u64,
    pub step: u64,
}

impl DropoutKey {
    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.layer);
        rng.set_word_pos((self.step as u128) << 32);
        rng
    }
}

/// Argmax positions recorded by a 2×2 max pool: for every output element,
/// the flat index into the pooled input.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    input_shape: [usize; 4],
    output_shape: [usize; 4],
    indices: Vec<usize>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    pub fn output_shape(&self) -> [usize; 4] {
        self.output_shape
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// What to do with Unknown cells when building loss targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownPolicy {
    /// Excluded from the loss and from its normalizer.
    #[default]
    Mask,
    /// Counted as NotRoad.
    NotRoad,
}

/// Per-pixel class indices for a batch; `None` marks an ignored pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTargets {
    n: usize,
    h: usize,
    w: usize,
    classes: Vec<Option<u8>>,
}

impl ClassTargets {
    pub fn new(n: usize, h: usize, w: usize, classes: Vec<Option<u8>>) -> Result<Self, NnError> {
        if classes.len() != n * h * w {
            return Err(shape_err("targets", &[n, h, w], &[classes.len()]));
        }
        Ok(Self { n, h, w, classes })
    }

    /// Road → class 1, NotRoad → class 0.
    pub fn from_labels(labels: &[&TopViewLabel], policy: UnknownPolicy) -> Result<Self, NnError> {
        let first = labels
            .first()
            .ok_or_else(|| NnError::Contract("empty target batch".into()))?;
        let (h, w) = (first.height, first.width);
        let mut classes = Vec::with_capacity(labels.len() * h * w);
        for l in labels {
            if (l.height, l.width) != (h, w) {
                return Err(shape_err("targets", &[h, w], &[l.height, l.width]));
            }
            classes.extend(l.cells.iter().map(|c| match (c, policy) {
                (Label::Road, _) => Some(1),
                (Label::NotRoad, _) | (Label::Unknown, UnknownPolicy::NotRoad) => Some(0),
                (Label::Unknown, UnknownPolicy::Mask) => None,
            }));
        }
        Self::new(labels.len(), h, w, classes)
    }

    pub fn classes(&self) -> &[Option<u8>] {
        &self.classes
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.n, self.h, self.w]
    }

    /// Pixels that contribute to the loss.
    pub fn counted(&self) -> usize {
        self.classes.iter().filter(|c| c.is_some()).count()
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        spec: ConvSpec,
    },
    Elu(Var),
    MaxPool {
        input: Var,
        indices: Arc<PoolIndices>,
    },
    MaxUnpool {
        input: Var,
        indices: Arc<PoolIndices>,
    },
    Dropout {
        input: Var,
        /// One multiplier per (n, c) plane.
        scale: Vec<T>,
    },
    Softmax(Var),
    CrossEntropy {
        probs: Var,
        targets: Arc<ClassTargets>,
        normalizer: f64,
    },
    Sum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Gradients of every leaf after a reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf; unreachable leaves hold zeros.
    pub fn get(&self, v: Var) -> &Tensor<T> {
        self.grads[v.0].as_ref().expect("gradients are kept for leaves only")
    }

    pub fn take(&mut self, v: Var) -> Tensor<T> {
        self.grads[v.0].take().expect("gradients are kept for leaves only")
    }
}

/// A single-use forward recording.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    released: bool,
    clamp_events: usize,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            released: false,
            clamp_events: 0,
        }
    }

    /// How often the loss floored a probability before taking its log.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        assert!(!self.released, "tape values are released by backward");
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var, NnError> {
        if self.released {
            return Err(NnError::AlreadyBackpropagated);
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        assert!(!self.released, "record a new tape after backward");
        self.nodes.push(Node { value, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, spec: ConvSpec) -> Result<Var, NnError> {
        let out = conv2d_forward(self.value(input), self.value(weight), self.value(bias), &spec)?;
        self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            },
        )
    }

    /// `x` for positive inputs, `exp(x) − 1` otherwise.
    pub fn elu(&mut self, input: Var) -> Result<Var, NnError> {
        let x = self.value(input);
        let data = x
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { v.exp_m1() })
            .collect();
        let out = Tensor::from_vec(x.shape(), data)?;
        self.push(out, Op::Elu(input))
    }

    /// 2×2 max pool with stride 2; ties go to the first element in row-major
    /// window order.
    pub fn maxpool2(&mut self, input: Var) -> Result<(Var, Arc<PoolIndices>), NnError> {
        let x = self.value(input);
        let [n, c, h, w] = x.dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(NnError::Contract(format!("max pool needs even spatial size, got {h}×{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut indices = Vec::with_capacity(n * c * oh * ow);
        let xd = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for cand in [best + 1, best + w, best + w + 1] {
                        if xd[cand] > xd[best] {
                            best = cand;
                        }
                    }
                    out.push(xd[best]);
                    indices.push(best);
                }
            }
        }
        let indices = Arc::new(PoolIndices {
            input_shape: [n, c, h, w],
            output_shape: [n, c, oh, ow],
            indices,
        });
        let out = Tensor::from_vec(&[n, c, oh, ow], out)?;
        let v = self.push(
            out,
            Op::MaxPool {
                input,
                indices: Arc::clone(&indices),
            },
        )?;
        Ok((v, indices))
    }

    /// Scatters `input` back to the argmax positions of an earlier pool.
    pub fn maxunpool2(&mut self, input: Var, indices: &Arc<PoolIndices>) -> Result<Var, NnError> {
        let x = self.value(input);
        if x.shape() != indices.output_shape {
            return Err(shape_err("max unpool", x.shape(), &indices.output_shape));
        }
        let mut out = Tensor::zeros(&indices.input_shape);
        let len = out.len();
        let od = out.data_mut();
        for (&i, &v) in indices.indices.iter().zip(x.data()) {
            if i >= len {
                return Err(NnError::Contract(format!("unpool index {i} out of bounds ({len})")));
            }
            od[i] = v;
        }
        self.push(
            out,
            Op::MaxUnpool {
                input,
                indices: Arc::clone(indices),
            },
        )
    }

    /// Zeroes whole channels with probability `p_drop` and rescales the rest;
    /// the identity at inference or when `p_drop == 0`.
    pub fn spatial_dropout(&mut self, input: Var, p_drop: f64, training: bool, key: DropoutKey) -> Result<Var, NnError> {
        if !(0.0..1.0).contains(&p_drop) {
            return Err(NnError::Contract(format!("dropout probability {p_drop} outside [0, 1)")));
        }
        if !training || p_drop == 0.0 {
            return Ok(input);
        }
        let x = self.value(input);
        let [n, c, h, w] = x.dims4()?;
        let mut rng = key.rng();
        let keep = T::from_f64_lossy(1.0 / (1.0 - p_drop));
        let scale: Vec<T> = (0..n * c)
            .map(|_| if rng.random::<f64>() < p_drop { T::zero() } else { keep })
            .collect();
        let mut out = x.clone();
        for (plane, &s) in out.data_mut().chunks_exact_mut(h * w).zip(&scale) {
            plane.iter_mut().for_each(|v| *v = *v * s);
        }
        self.push(out, Op::Dropout { input, scale })
    }

    /// Softmax across channels at every pixel.
    pub fn softmax_channels(&mut self, input: Var) -> Result<Var, NnError> {
        let x = self.value(input);
        let [n, c, h, w] = x.dims4()?;
        if c < 2 {
            return Err(NnError::Contract(format!("softmax needs at least 2 channels, got {c}")));
        }
        let hw = h * w;
        let mut out = Tensor::zeros(x.shape());
        let (xd, od) = (x.data(), out.data_mut());
        let mut buf = vec![0.0f64; c];
        for b in 0..n {
            for p in 0..hw {
                let at = |k: usize| b * c * hw + k * hw + p;
                let max = (0..c).map(|k| xd[at(k)].as_f64()).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (k, e) in buf.iter_mut().enumerate() {
                    *e = (xd[at(k)].as_f64() - max).exp();
                    total += *e;
                }
                for (k, e) in buf.iter().enumerate() {
                    od[at(k)] = T::from_f64_lossy(e / total);
                }
            }
        }
        self.push(out, Op::Softmax(input))
    }

    /// Mean negative log-probability of the target class over counted pixels.
    pub fn cross_entropy(&mut self, probs: Var, targets: &Arc<ClassTargets>) -> Result<Var, NnError> {
        let p = self.value(probs);
        let [n, c, h, w] = p.dims4()?;
        if targets.dims() != [n, h, w] {
            return Err(shape_err("cross entropy", p.shape(), &targets.dims()));
        }
        let hw = h * w;
        let mut total = 0.0f64;
        let mut clamped = 0;
        for (i, cls) in targets.classes.iter().enumerate() {
            let Some(k) = cls else { continue };
            let k = *k as usize;
            if k >= c {
                return Err(NnError::Contract(format!("target class {k} with {c} channels")));
            }
            let (b, px) = (i / hw, i % hw);
            let v = p.data()[b * c * hw + k * hw + px].as_f64();
            if v < PROB_FLOOR {
                clamped += 1;
            }
            total -= v.max(PROB_FLOOR).ln();
        }
        let count = targets.counted();
        let normalizer = count.max(1) as f64;
        self.clamp_events += clamped;
        let out = Tensor::scalar(T::from_f64_lossy(total / normalizer));
        self.push(
            out,
            Op::CrossEntropy {
                probs,
                targets: Arc::clone(targets),
                normalizer,
            },
        )
    }

    pub fn sum(&mut self, input: Var) -> Result<Var, NnError> {
        let s = self.value(input).sum();
        self.push(Tensor::scalar(T::from_f64_lossy(s)), Op::Sum(input))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>, NnError> {
        if self.released {
            return Err(NnError::AlreadyBackpropagated);
        }
        let shape = self.nodes[loss.0].value.shape().to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(NnError::Contract(format!("backward needs a scalar, got shape {shape:?}")));
        }
        self.backward_with(loss, Tensor::full(&shape, T::one()))
    }

    /// Reverse sweep seeded with an arbitrary output gradient. Releases the
    /// recorded graph.
    pub fn backward_with(&mut self, output: Var, seed: Tensor<T>) -> Result<Gradients<T>, NnError> {
        if self.released {
            return Err(NnError::AlreadyBackpropagated);
        }
        if seed.shape() != self.nodes[output.0].value.shape() {
            return Err(shape_err("backward seed", seed.shape(), self.nodes[output.0].value.shape()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) {
                if grads[i].is_none() {
                    grads[i] = Some(Tensor::zeros(node.value.shape()));
                }
            } else {
                grads[i] = None;
            }
        }
        self.nodes.clear();
        self.released = true;
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            } => {
                let (dx, dw, db) = conv2d_backward(&self.nodes[input.0].value, &self.nodes[weight.0].value, spec, &g);
                accumulate(grads, *input, dx);
                accumulate(grads, *weight, dw);
                accumulate(grads, *bias, db);
            }
            Op::Elu(input) => {
                let x = &self.nodes[input.0].value;
                let mut dx = g;
                for ((d, &xv), &yv) in dx.data_mut().iter_mut().zip(x.data()).zip(node.value.data()) {
                    if xv <= T::zero() {
                        *d = *d * (yv + T::one());
                    }
                }
                accumulate(grads, *input, dx);
            }
            Op::MaxPool { input, indices } => {
                let mut dx = Tensor::zeros(&indices.input_shape);
                let dd = dx.data_mut();
                for (&idx, &gv) in indices.indices.iter().zip(g.data()) {
                    dd[idx] = dd[idx] + gv;
                }
                accumulate(grads, *input, dx);
            }
            Op::MaxUnpool { input, indices } => {
                let gd = g.data();
                let data = indices.indices.iter().map(|&idx| gd[idx]).collect();
                let dx = Tensor::from_vec(&indices.output_shape, data).expect("pooled shape");
                accumulate(grads, *input, dx);
            }
            Op::Dropout { input, scale } => {
                let mut dx = g;
                let plane = dx.len() / scale.len();
                for (chunk, &s) in dx.data_mut().chunks_exact_mut(plane).zip(scale) {
                    chunk.iter_mut().for_each(|v| *v = *v * s);
                }
                accumulate(grads, *input, dx);
            }
            Op::Softmax(input) => {
                let y = &node.value;
                let [n, c, h, w] = y.dims4().expect("recorded as NCHW");
                let hw = h * w;
                let mut dx = Tensor::zeros(y.shape());
                let (yd, gd) = (y.data(), g.data());
                let dd = dx.data_mut();
                for b in 0..n {
                    for p in 0..hw {
                        let at = |k: usize| b * c * hw + k * hw + p;
                        let dot: f64 = (0..c).map(|k| yd[at(k)].as_f64() * gd[at(k)].as_f64()).sum();
                        for k in 0..c {
                            let j = at(k);
                            dd[j] = T::from_f64_lossy(yd[j].as_f64() * (gd[j].as_f64() - dot));
                        }
                    }
                }
                accumulate(grads, *input, dx);
            }
            Op::CrossEntropy {
                probs,
                targets,
                normalizer,
            } => {
                let p = &self.nodes[probs.0].value;
                let [_, c, h, w] = p.dims4().expect("recorded as NCHW");
                let hw = h * w;
                let upstream = g.data()[0].as_f64();
                let mut dp = Tensor::zeros(p.shape());
                let dd = dp.data_mut();
                for (i, cls) in targets.classes.iter().enumerate() {
                    let Some(k) = cls else { continue };
                    let j = (i / hw) * c * hw + *k as usize * hw + i % hw;
                    let v = p.data()[j].as_f64();
                    if v >= PROB_FLOOR {
                        dd[j] = T::from_f64_lossy(-upstream / (normalizer * v));
                    }
                }
                accumulate(grads, *probs, dp);
            }
            Op::Sum(input) => {
                let shape = self.nodes[input.0].value.shape();
                accumulate(grads, *input, Tensor::full(shape, g.data()[0]));
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e = *e + *x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn elu_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[0.0, 2.5, -1.0]));
        let y = tape.elu(x).unwrap();
        let v = tape.value(y).data();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 2.5);
        assert!((v[2] - (-1.0f64).exp_m1()).abs() < 1e-15);
        assert!((v[2] + 0.63212).abs() < 1e-5);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]));
        let s = tape.sum(x).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).data(), &[1.0; 4]);
    }

    #[test]
    fn second_backward_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1], &[1.0]));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(NnError::AlreadyBackpropagated)));
    }

    #[test]
    fn disconnected_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let unused = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let s = tape.sum(x).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(unused).data(), &[0.0; 3]);
    }

    #[test]
    fn pool_tie_and_max_rules() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[1, 1, 2, 4], 7.0));
        let (_, idx) = tape.maxpool2(x).unwrap();
        assert_eq!(idx.indices(), &[0, 2]);

        let x = tape.leaf(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let (p, idx) = tape.maxpool2(x).unwrap();
        assert_eq!(tape.value(p).data(), &[4.0]);
        assert_eq!(idx.indices(), &[3]);
        let u = tape.maxunpool2(p, &idx).unwrap();
        assert_eq!(tape.value(u).data(), &[0.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn odd_pool_rejected() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::zeros(&[1, 1, 3, 4]));
        assert!(matches!(tape.maxpool2(x), Err(NnError::Contract(_))));
    }

    #[test]
    fn unpool_shape_checked() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::zeros(&[1, 1, 4, 4]));
        let (_, idx) = tape.maxpool2(x).unwrap();
        let wrong = tape.leaf(Tensor::zeros(&[1, 2, 2, 2]));
        assert!(tape.maxunpool2(wrong, &idx).is_err());
    }

    #[test]
    fn dropout_identity_cases() {
        let key = DropoutKey { seed: 1, layer: 0, step: 0 };
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1, 2, 1, 1], &[1.0, 2.0]));
        assert_eq!(tape.spatial_dropout(x, 0.25, false, key).unwrap(), x);
        assert_eq!(tape.spatial_dropout(x, 0.0, true, key).unwrap(), x);
        assert!(tape.spatial_dropout(x, 1.0, true, key).is_err());
    }

    #[test]
    fn dropout_is_reproducible_and_keyed() {
        let run = |key: DropoutKey| {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::<f64>::full(&[1, 64, 1, 1], 1.0));
            let y = tape.spatial_dropout(x, 0.5, true, key).unwrap();
            tape.value(y).clone()
        };
        let k = DropoutKey { seed: 9, layer: 2, step: 5 };
        assert_eq!(run(k), run(k));
        assert_ne!(run(k), run(DropoutKey { step: 6, ..k }));
        assert_ne!(run(k), run(DropoutKey { layer: 3, ..k }));
        assert!(run(k).data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn softmax_equal_and_huge_logits() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1, 2, 1, 2], &[0.3, 1000.0, 0.3, 1000.0]));
        let y = tape.softmax_channels(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5, 0.5, 0.5]);
        let one = tape.leaf(Tensor::zeros(&[1, 1, 1, 1]));
        assert!(tape.softmax_channels(one).is_err());
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let targets = Arc::new(ClassTargets::new(1, 1, 2, vec![Some(1), Some(0)]).unwrap());
        let mut tape = Tape::new();
        let perfect = tape.leaf(t(&[1, 2, 1, 2], &[0.0, 1.0, 1.0, 0.0]));
        let l = tape.cross_entropy(perfect, &targets).unwrap();
        assert_eq!(tape.value(l).data()[0], 0.0);
        let uniform = tape.leaf(Tensor::full(&[1, 2, 1, 2], 0.5));
        let l = tape.cross_entropy(uniform, &targets).unwrap();
        assert!((tape.value(l).data()[0] - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_masks_and_clamps() {
        let targets = Arc::new(ClassTargets::new(1, 1, 2, vec![Some(1), None]).unwrap());
        let mut tape = Tape::new();
        let p = tape.leaf(t(&[1, 2, 1, 2], &[1.0, 0.5, 0.0, 0.5]));
        let l = tape.cross_entropy(p, &targets).unwrap();
        assert!((tape.value(l).data()[0] + PROB_FLOOR.ln()).abs() < 1e-9);
        assert_eq!(tape.clamp_events(), 1);
    }
}
