use lodnn::model::{context_layers, receptive_field, road_channel, LayerSpec, Mode, ReceptiveField};
use lodnn::nn::{ConvSpec, Tape, Tensor};
use lodnn::{Lodnn, ModelConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn default_network_keeps_the_input_size() {
    let net: Lodnn<f32> = Lodnn::build(ModelConfig::default(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::from_vec(&[1, 6, 400, 200], (0..6 * 400 * 200).map(|_| rng.random::<f32>()).collect()).unwrap();
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let xv = tape.leaf(x);
    let out = net.forward(&mut tape, &bound, xv, Mode::Inference).unwrap();
    // 100 wide by 200 tall entering the context module
    assert_eq!(out.context_dims, [1, 32, 200, 100]);
    let p = tape.value(out.probs);
    assert_eq!(p.shape(), &[1, 2, 400, 200]);
    let plane = 400 * 200;
    for i in 0..plane {
        let s = p.data()[i] as f64 + p.data()[plane + i] as f64;
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn occupancy_network_has_the_same_spatial_contract() {
    let net: Lodnn<f32> = Lodnn::build(ModelConfig::with_widths(1, 16), 0).unwrap();
    let x = Tensor::full(&[1, 1, 400, 200], 0.5f32);
    assert_eq!(net.predict(&x).unwrap().shape(), &[1, 2, 400, 200]);
}

#[test]
fn inference_is_repeatable() {
    let net: Lodnn<f32> = Lodnn::build(ModelConfig::with_widths(6, 16), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::from_vec(&[1, 6, 32, 24], (0..6 * 32 * 24).map(|_| rng.random::<f32>()).collect()).unwrap();
    let a = net.predict(&x).unwrap();
    let b = net.predict(&x).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn zero_input_gives_constant_interior() {
    let net: Lodnn<f32> = Lodnn::build(ModelConfig::default(), 9).unwrap();
    let p = net.predict(&Tensor::zeros(&[1, 6, 64, 48])).unwrap();
    let road = road_channel(&p, 0);
    let (h, w) = (64, 48);
    let v0 = road[(h / 2) * w + w / 2];
    for r in h / 4..3 * h / 4 {
        for c in w / 4..3 * w / 4 {
            assert_eq!(road[r * w + c], v0);
        }
    }
}

#[test]
fn frozen_parameter_count() {
    assert_eq!(ModelConfig::default().param_count(), 947_458);
    let net: Lodnn<f32> = Lodnn::build(ModelConfig::default(), 0).unwrap();
    assert_eq!(net.params().scalar_count(), 947_458);
}

#[test]
fn last_context_field_exceeds_the_feature_maps() {
    let rf = receptive_field(&context_layers(128, 32));
    let last = rf.last().unwrap();
    assert!(last.height_px > 200);
    assert!(2 * last.width_px > 100);
    let rows: Vec<String> = rf.iter().map(ToString::to_string).collect();
    assert_eq!(rows, ["3x3", "5x7", "9x15", "17x31", "33x63", "65x127", "129x255", "129x255"]);
}

/// Bounding box of nonzero input gradient when a single output pixel at the
/// map center is seeded, through a randomly weighted copy of the stack.
fn gradient_support(layers: &[LayerSpec], h: usize, w: usize, seed: u64) -> ReceptiveField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape: Tape<f64> = Tape::new();
    let chans = 2;
    let mut rand_t = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(0.1..1.0)).collect()).unwrap()
    };
    let input = tape.leaf(rand_t(&[1, chans, h, w]));
    let mut x = input;
    for l in layers {
        let (dw, dh) = l.dilation.unwrap_or((1, 1));
        let spec = ConvSpec::new(chans, chans, l.kernel, (dw, dh)).unwrap();
        let wt = tape.leaf(rand_t(&spec.weight_shape()));
        let b = tape.leaf(rand_t(&[chans]));
        x = tape.conv2d(x, wt, b, spec).unwrap();
        x = tape.elu(x).unwrap();
    }
    let mut seed_t = Tensor::zeros(&[1, chans, h, w]);
    seed_t.data_mut()[(h / 2) * w + w / 2] = 1.0;
    let mut g = tape.backward_with(x, seed_t).unwrap();
    let gi = g.take(input);
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for ch in 0..chans {
        for r in 0..h {
            for c in 0..w {
                if gi.data()[(ch * h + r) * w + c] != 0.0 {
                    r0 = r0.min(r);
                    r1 = r1.max(r);
                    c0 = c0.min(c);
                    c1 = c1.max(c);
                }
            }
        }
    }
    ReceptiveField {
        width_px: c1 - c0 + 1,
        height_px: r1 - r0 + 1,
    }
}

#[test]
fn published_row_matches_gradient_support() {
    let layers = context_layers(2, 2);
    let formula = receptive_field(&layers);
    for k in [1, 3, 8] {
        assert_eq!(gradient_support(&layers[..k], 301, 161, k as u64), formula[k - 1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn receptive_field_matches_gradient_support(
        stack in prop::collection::vec((0usize..3, 0usize..3, 1usize..4, 1usize..4), 1..5),
        seed in 0u64..1000,
    ) {
        let layers: Vec<LayerSpec> = stack
            .iter()
            .map(|&(kh, kw, dw, dh)| LayerSpec::dilated(2 * kh + 1, 2 * kw + 1, (dw, dh), 2))
            .collect();
        let formula = *receptive_field(&layers).last().unwrap();
        let h = 2 * formula.height_px + 3;
        let w = 2 * formula.width_px + 3;
        prop_assert_eq!(gradient_support(&layers, h, w, seed), formula);
    }

    #[test]
    fn output_size_equals_input_size(hh in 1usize..8, ww in 1usize..8) {
        let net: Lodnn<f32> = Lodnn::build(ModelConfig::with_widths(6, 4), 1).unwrap();
        let x = Tensor::full(&[1, 6, 2 * hh, 2 * ww], 0.3f32);
        let p = net.predict(&x).unwrap();
        prop_assert_eq!(p.shape(), &[1, 2, 2 * hh, 2 * ww][..]);
    }
}
