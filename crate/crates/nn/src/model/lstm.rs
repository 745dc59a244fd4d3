use nsx_core::Real;

use crate::autograd::{Tape, Var};
use crate::layers::{Blstm, Linear};
use crate::params::{Bound, Init, ParamStore};

/// Stacked BLSTM over frames of magnitude and real/imaginary features, with a
/// linear head predicting a real/imaginary correction that is added to the
/// mixture. The head starts at zero, so an untrained network passes the
/// mixture through.
#[derive(Debug, Clone)]
pub struct LstmBaseline {
    layers: Vec<Blstm>,
    head: Linear,
    bins: usize,
}

impl LstmBaseline {
    pub fn new<T: Real>(s: &mut ParamStore<T>, init: &mut Init, bins: usize, layers: usize, units: usize) -> Self {
        let layers = (0..layers)
            .map(|i| Blstm::new(s, init, &format!("lstm.{i}"), if i == 0 { 3 * bins } else { 2 * units }, units))
            .collect();
        let head = Linear::new(s, init, "head", 2 * units, 2 * bins);
        s.get_mut(head.weight).fill(T::zero());
        Self { layers, head, bins }
    }

    pub fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, spec: &Var<T>) -> Var<T> {
        let (f, t) = (self.bins, spec.shape()[2]);
        assert_eq!(spec.shape()[1], f, "bins");
        let mag = tape.magnitude(spec, T::lit(1e-8));
        let ri = tape.reshape(spec, &[2 * f, t]);
        let feats = tape.concat(&[&ri, &mag], 0);
        let mut x = tape.reshape(&tape.permute(&feats, &[1, 0]), &[t, 1, 3 * f]);
        for l in &self.layers {
            x = l.forward(tape, p, &x);
        }
        let y = self.head.forward(tape, p, &x);
        let y = tape.permute(&tape.reshape(&y, &[t, 2 * f]), &[1, 0]);
        tape.add(&tape.reshape(&y, &[2, f, t]), spec)
    }
}
