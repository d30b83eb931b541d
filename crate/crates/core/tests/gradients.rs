//! Central finite-difference checks of every differentiable operator and of
//! the full network, all in f64.

use std::sync::Arc;

use lodnn::model::Mode;
use lodnn::nn::gradcheck::check_gradients;
use lodnn::nn::{ClassTargets, ConvSpec, DropoutKey, Tape, Tensor, Var};
use lodnn::{Lodnn, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn check<F>(inputs: &[Tensor<f64>], limit: Option<usize>, build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let r = check_gradients(inputs, limit, 99, build);
    assert!(r.worst < TOL, "worst relative error {} at {:?}", r.worst, r.at);
    r.worst
}

fn conv_case(spec: ConvSpec, h: usize, w: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = [
        random(&[2, spec.in_channels, h, w], &mut rng, 1.0),
        random(&spec.weight_shape(), &mut rng, 0.5),
        random(&[spec.out_channels], &mut rng, 0.5),
    ];
    check(&inputs, None, |t, v| t.conv2d(v[0], v[1], v[2], spec).unwrap());
}

#[test]
fn conv_3x3_gradients() {
    conv_case(ConvSpec::new(3, 4, (3, 3), (1, 1)).unwrap(), 5, 6, 1);
}

#[test]
fn dilated_conv_gradients() {
    conv_case(ConvSpec::new(2, 3, (3, 3), (2, 1)).unwrap(), 7, 6, 2);
    conv_case(ConvSpec::new(2, 2, (3, 3), (4, 8)).unwrap(), 6, 5, 3);
}

#[test]
fn pointwise_and_rectangular_conv_gradients() {
    conv_case(ConvSpec::new(3, 2, (1, 1), (1, 1)).unwrap(), 4, 4, 4);
    conv_case(ConvSpec::new(2, 2, (3, 5), (1, 2)).unwrap(), 6, 7, 5);
}

#[test]
fn elu_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    check(&[random(&[1, 3, 4, 5], &mut rng, 2.0)], None, |t, v| t.elu(v[0]).unwrap());
}

/// Distinct values spaced far beyond the probe step so no window's argmax
/// flips under perturbation.
fn spaced(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    use rand::seq::SliceRandom;
    vals.shuffle(&mut rng);
    Tensor::from_vec(shape, vals).unwrap()
}

#[test]
fn maxpool_gradients() {
    check(&[spaced(&[2, 2, 6, 8], 7)], None, |t, v| t.maxpool2(v[0]).unwrap().0);
}

#[test]
fn maxunpool_gradients() {
    let pooled_src = spaced(&[1, 2, 4, 6], 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let small = random(&[1, 2, 2, 3], &mut rng, 1.0);
    let mut tape = Tape::new();
    let src = tape.leaf(pooled_src);
    let (_, idx) = tape.maxpool2(src).unwrap();
    check(&[small], None, move |t, v| t.maxunpool2(v[0], &idx).unwrap());
}

#[test]
fn spatial_dropout_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let key = DropoutKey { seed: 4, layer: 2, step: 17 };
    check(&[random(&[2, 8, 3, 3], &mut rng, 1.0)], None, |t, v| t.spatial_dropout(v[0], 0.25, true, key).unwrap());
}

#[test]
fn softmax_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    check(&[random(&[2, 3, 3, 4], &mut rng, 3.0)], None, |t, v| t.softmax_channels(v[0]).unwrap());
}

fn targets(n: usize, h: usize, w: usize, seed: u64) -> Arc<ClassTargets> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = (0..n * h * w)
        .map(|_| match rng.random_range(0..3) {
            0 => None,
            k => Some(k as u8 - 1),
        })
        .collect();
    Arc::new(ClassTargets::new(n, h, w, classes).unwrap())
}

#[test]
fn cross_entropy_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let logits = random(&[2, 2, 4, 4], &mut rng, 2.0);
    let tg = targets(2, 4, 4, 13);
    check(&[logits], None, move |t, v| {
        let p = t.softmax_channels(v[0]).unwrap();
        t.cross_entropy(p, &tg).unwrap()
    });
}

#[test]
fn sum_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    check(&[random(&[1, 2, 3, 3], &mut rng, 1.0)], None, |t, v| t.sum(v[0]).unwrap());
}

#[test]
fn full_network_gradients() {
    let net: Lodnn<f64> = Lodnn::build(ModelConfig::default(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut inputs = vec![random(&[1, 6, 8, 8], &mut rng, 1.0)];
    inputs.extend(net.params().iter().map(|(_, t)| t.clone()));
    // zero biases make every pre-activation symmetric; jitter them so the
    // check exercises generic operating points
    for t in inputs.iter_mut().skip(1).filter(|t| t.shape().len() == 1) {
        for v in t.data_mut() {
            *v = rng.random_range(-0.05..0.05);
        }
    }
    let tg = targets(1, 8, 8, 16);
    let worst = check(&inputs, Some(12), |t, v| {
        let out = net.forward(t, &v[1..], v[0], Mode::Training { seed: 3, step: 1 }).unwrap();
        t.cross_entropy(out.probs, &tg).unwrap()
    });
    assert!(worst < TOL);
}
