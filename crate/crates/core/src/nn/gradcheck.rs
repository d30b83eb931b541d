//! Central finite-difference gradient checking for tape graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};

/// Probe step.
pub const STEP: f64 = 1e-5;
/// Denominator floor so entries that are zero in both forms compare equal.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|a − n| / max(|a| + |n|, FLOOR)` seen.
    pub worst: f64,
    /// `(input, entry)` at which `worst` occurred.
    pub at: (usize, usize),
    pub probes: usize,
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Projects the graph output onto a seeded random direction so any output
/// shape reduces to a scalar, then compares the analytic gradient of that
/// scalar with respect to every input against central differences.
/// `limit` caps how many randomly chosen entries of each input are probed.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], limit: Option<usize>, seed: u64, build: F) -> GradCheck
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let shape = tape.value(out).shape().to_vec();
    let n_out: usize = shape.iter().product();
    let dir = Tensor::from_vec(&shape, (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("sized");
    let mut grads = tape.backward_with(out, dir.clone()).expect("backward on a fresh tape");
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.take(v)).collect();

    let eval = |perturbed: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        dot(tape.value(out), &dir)
    };

    let mut report = GradCheck {
        worst: 0.0,
        at: (0, 0),
        probes: 0,
    };
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.len();
        let probes: Vec<usize> = match limit {
            Some(k) if k < n => (0..k).map(|_| rng.random_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        for j in probes {
            let x = input.data()[j];
            work[i].data_mut()[j] = x + STEP;
            let up = eval(&work);
            work[i].data_mut()[j] = x - STEP;
            let down = eval(&work);
            work[i].data_mut()[j] = x;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[i].data()[j];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(FLOOR);
            if rel > report.worst || rel.is_nan() {
                report.worst = if rel.is_nan() { f64::INFINITY } else { rel };
                report.at = (i, j);
            }
            report.probes += 1;
        }
    }
    report
}
