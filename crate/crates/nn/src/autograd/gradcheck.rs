//! Central finite-difference checks for tape operations.

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Var};

pub fn random(shape: &[usize], seed: u64) -> ArrayD<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    ArrayD::from_shape_vec(IxDyn(shape), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Compares analytic and numeric gradients of `Σ w ⊙ f(inputs)` for fixed random `w`.
pub fn check(inputs: &[ArrayD<f64>], f: impl Fn(&Tape<f64>, &[Var<f64>]) -> Var<f64>) {
    let eval = |xs: &[ArrayD<f64>], weights: Option<&ArrayD<f64>>| -> (f64, Vec<ArrayD<f64>>, ArrayD<f64>) {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&tape, &vars);
        let w = weights.cloned().unwrap_or_else(|| random(out.shape(), 99));
        let wv = tape.constant(w.clone());
        let loss = tape.sum(&tape.mul(&out, &wv));
        let grads = tape.backward(&loss);
        (loss.item(), vars.iter().map(|v| grads.wrt(v)).collect(), w)
    };
    let (_, analytic, w) = eval(inputs, None);
    let h = 1e-6;
    for (k, x) in inputs.iter().enumerate() {
        for i in 0..x.len() {
            let mut plus = inputs.to_vec();
            plus[k].as_slice_mut().unwrap()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].as_slice_mut().unwrap()[i] -= h;
            let numeric = (eval(&plus, Some(&w)).0 - eval(&minus, Some(&w)).0) / (2.0 * h);
            let a = analytic[k].as_slice().unwrap()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            assert!(err < 1e-5, "input {k}, element {i}: analytic {a} vs numeric {numeric}");
        }
    }
}
