use nsx_core::Real;

use crate::autograd::{ConvGeom, Tape, Var};
use crate::layers::{dims3, Conv2d, ConvTranspose2d};
use crate::params::{Bound, Init, ParamStore};

const SLOPE: f64 = 0.2;

fn stride2() -> ConvGeom {
    ConvGeom::new((3, 3), (2, 2), (1, 1))
}

/// Convolutional encoder/decoder with skip connections over `[2, T, F]`.
/// Each encoder layer halves both axes (rounding up); each decoder layer restores
/// the exact size of the matching encoder input, so any `T` and `F` are accepted.
#[derive(Debug, Clone)]
pub struct Unet {
    pub(crate) down: Vec<Conv2d>,
    up: Vec<ConvTranspose2d>,
}

impl Unet {
    pub fn new<T: Real>(s: &mut ParamStore<T>, init: &mut Init, filters: &[usize]) -> Self {
        let mut down = Vec::new();
        let mut cin = 2;
        for (i, &c) in filters.iter().enumerate() {
            down.push(Conv2d::new(s, init, &format!("down.{i}"), cin, c, stride2()));
            cin = c;
        }
        let n = filters.len();
        let mut up = Vec::new();
        for i in (0..n).rev() {
            let cin = if i == n - 1 { filters[i] } else { 2 * filters[i] };
            let cout = if i == 0 { 2 } else { filters[i - 1] };
            up.push(ConvTranspose2d::new(s, init, &format!("up.{i}"), cin, cout, stride2()));
        }
        Self { down, up }
    }

    pub fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, spec: &Var<T>) -> Var<T> {
        let mut x = tape.permute(spec, &[0, 2, 1]);
        let mut skips = Vec::new();
        let mut sizes = Vec::new();
        for conv in &self.down {
            let (_, h, w) = dims3(&x);
            sizes.push((h, w));
            x = tape.leaky_relu(&conv.forward(tape, p, &x), T::lit(SLOPE));
            skips.push(x.clone());
        }
        skips.pop();
        for (k, deconv) in self.up.iter().enumerate() {
            let size = sizes[sizes.len() - 1 - k];
            x = deconv.forward(tape, p, &x, size);
            if let Some(skip) = skips.pop() {
                x = tape.leaky_relu(&x, T::lit(SLOPE));
                x = tape.concat(&[&x, &skip], 0);
            }
        }
        tape.permute(&x, &[0, 2, 1])
    }
}
