//! Parameterised building blocks. Layers hold [`ParamId`]s; values live in a
//! [`ParamStore`] and are read from a [`Bound`] during a forward pass.

use nsx_core::Real;

use crate::autograd::{ConvGeom, Tape, Var};
use crate::params::{Bound, Init, ParamId, ParamStore};

/// Normalisation epsilon used throughout the models.
pub const EPS: f64 = 1e-5;

/// 2-D convolution over `[C, H, W]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geom: ConvGeom,
    pub channels: (usize, usize),
}

impl Conv2d {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, cin: usize, cout: usize, geom: ConvGeom) -> Self {
        let (kh, kw) = geom.kernel;
        let fan_in = cin * kh * kw;
        Self {
            weight: store.add(format!("{name}.weight"), init.kaiming(&[cout, cin, kh, kw], fan_in)),
            bias: store.add(format!("{name}.bias"), init.constant(&[cout], 0.0)),
            geom,
            channels: (cin, cout),
        }
    }

    pub fn pointwise<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, cin: usize, cout: usize) -> Self {
        Self::new(store, init, name, cin, cout, ConvGeom::same(1, 1))
    }

    pub fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>) -> Var<T> {
        let (cin, cout) = self.channels;
        let (_, h, w) = dims3(x);
        assert_eq!(x.shape()[0], cin, "conv input channels");
        let (kh, kw) = self.geom.kernel;
        let wm = tape.reshape(&p[self.weight], &[cout, cin * kh * kw]);
        let (ho, wo) = self.geom.output(h, w);
        let cols = if self.geom == ConvGeom::same(1, 1) {
            tape.reshape(x, &[cin, h * w])
        } else {
            let c = tape.im2col(x, self.geom);
            tape.reshape(&c, &[cin * kh * kw, ho * wo])
        };
        let y = tape.matmul(&wm, &cols, false, false);
        let y = tape.reshape(&y, &[cout, ho, wo]);
        tape.add_channel(&y, &p[self.bias], 0)
    }
}

/// Transposed 2-D convolution (the adjoint of [`Conv2d`] with the same geometry).
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geom: ConvGeom,
    pub channels: (usize, usize),
}

impl ConvTranspose2d {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, cin: usize, cout: usize, geom: ConvGeom) -> Self {
        let (kh, kw) = geom.kernel;
        // each output receives about cin·kh·kw / (sh·sw) contributions
        let fan_in = (cin * kh * kw / (geom.stride.0 * geom.stride.1)).max(1);
        Self {
            weight: store.add(format!("{name}.weight"), init.kaiming(&[cin, cout, kh, kw], fan_in)),
            bias: store.add(format!("{name}.bias"), init.constant(&[cout], 0.0)),
            geom,
            channels: (cin, cout),
        }
    }

    /// Output spatial size `(h, w)` must be consistent with the geometry.
    pub fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>, out: (usize, usize)) -> Var<T> {
        let (cin, cout) = self.channels;
        let (_, h, w) = dims3(x);
        assert_eq!(self.geom.output(out.0, out.1), (h, w), "transposed conv output size {out:?}");
        let (kh, kw) = self.geom.kernel;
        let wm = tape.reshape(&p[self.weight], &[cin, cout * kh * kw]);
        let xm = tape.reshape(x, &[cin, h * w]);
        let cols = tape.matmul(&wm, &xm, true, false);
        let cols = tape.reshape(&cols, &[cout * kh * kw, h, w]);
        let y = tape.col2im(&cols, (cout, out.0, out.1), self.geom);
        tape.add_channel(&y, &p[self.bias], 0)
    }
}

/// Affine map over the last axis: `x·Wᵀ + b` with `W: [out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub dims: (usize, usize),
}

impl Linear {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, din: usize, dout: usize) -> Self {
        let bound = 1.0 / (din as f64).sqrt();
        Self {
            weight: store.add(format!("{name}.weight"), init.uniform(&[dout, din], bound)),
            bias: store.add(format!("{name}.bias"), init.constant(&[dout], 0.0)),
            dims: (din, dout),
        }
    }

    pub fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>) -> Var<T> {
        let (din, dout) = self.dims;
        let lead: Vec<usize> = x.shape()[..x.shape().len() - 1].to_vec();
        let rows = lead.iter().product();
        let x2 = tape.reshape(x, &[rows, din]);
        let y = tape.matmul(&x2, &p[self.weight], false, true);
        let y = tape.add_channel(&y, &p[self.bias], 1);
        let mut shape = lead;
        shape.push(dout);
        tape.reshape(&y, &shape)
    }
}

/// PReLU with one slope per channel, initialised to 0.25.
#[derive(Debug, Clone)]
pub struct PRelu {
    pub slope: ParamId,
}

impl PRelu {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, channels: usize) -> Self {
        Self { slope: store.add(format!("{name}.slope"), init.constant(&[channels], 0.25)) }
    }

    pub fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>, axis: usize) -> Var<T> {
        tape.prelu(x, &p[self.slope], axis)
    }
}

/// Normalisation over a set of axes followed by a per-channel affine map.
#[derive(Debug, Clone)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), init.constant(&[channels], 1.0)),
            beta: store.add(format!("{name}.beta"), init.constant(&[channels], 0.0)),
        }
    }

    pub fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>, axes: &[usize], channel_axis: usize) -> Var<T> {
        let n = tape.normalize(x, axes, T::lit(EPS));
        self.affine(tape, p, &n, channel_axis)
    }

    /// The affine map alone, for callers that normalise a reshaped view.
    pub fn affine<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>, channel_axis: usize) -> Var<T> {
        let s = tape.mul_channel(x, &p[self.gamma], channel_axis);
        tape.add_channel(&s, &p[self.beta], channel_axis)
    }
}

/// One LSTM direction.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
}

impl LstmCell {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, input: usize, hidden: usize) -> Self {
        let mut bias = vec![0.0; 4 * hidden];
        // forget-gate bias of 1 keeps early gradients alive
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        Self {
            w_ih: store.add(format!("{name}.w_ih"), init.uniform(&[4 * hidden, input], 1.0 / (hidden as f64).sqrt())),
            w_hh: store.add(format!("{name}.w_hh"), init.orthogonal_blocks(4, hidden)),
            bias: store.add(
                format!("{name}.bias"),
                ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&[4 * hidden]), bias.into_iter().map(T::lit).collect())
                    .expect("bias"),
            ),
        }
    }

    fn params<'a, T: Real>(&self, p: &'a Bound<T>) -> [&'a Var<T>; 3] {
        [&p[self.w_ih], &p[self.w_hh], &p[self.bias]]
    }
}

/// Bidirectional LSTM over time-major `[S, B, In]`, producing `[S, B, 2H]`.
#[derive(Debug, Clone)]
pub struct Blstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

impl Blstm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, input: usize, hidden: usize) -> Self {
        Self {
            fwd: LstmCell::new(store, init, &format!("{name}.fwd"), input, hidden),
            bwd: LstmCell::new(store, init, &format!("{name}.bwd"), input, hidden),
        }
    }

    pub fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>) -> Var<T> {
        tape.blstm(x, self.fwd.params(p), self.bwd.params(p))
    }
}

pub(crate) fn dims3<T: Real>(x: &Var<T>) -> (usize, usize, usize) {
    match x.shape() {
        &[a, b, c] => (a, b, c),
        s => panic!("expected a 3-d value, got {s:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn init() -> Init {
        Init::new(ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn conv_shapes() {
        let mut s = ParamStore::<f64>::new();
        let mut i = init();
        let same = Conv2d::new(&mut s, &mut i, "a", 2, 5, ConvGeom::same(3, 3));
        let down = Conv2d::new(&mut s, &mut i, "b", 5, 3, ConvGeom::new((3, 3), (2, 2), (1, 1)));
        let up = ConvTranspose2d::new(&mut s, &mut i, "c", 3, 4, ConvGeom::new((3, 3), (2, 2), (1, 1)));
        let tape = Tape::inference();
        let p = s.bind(&tape);
        let x = tape.constant(random(&[2, 9, 13], 1));
        let y = same.forward(&tape, &p, &x);
        assert_eq!(y.shape(), [5, 9, 13]);
        let z = down.forward(&tape, &p, &y);
        assert_eq!(z.shape(), [3, 5, 7]);
        let u = up.forward(&tape, &p, &z, (9, 13));
        assert_eq!(u.shape(), [4, 9, 13]);
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        let mut s = ParamStore::<f64>::new();
        let mut i = init();
        let geom = ConvGeom::new((3, 4), (2, 1), (1, 1));
        let conv = Conv2d::new(&mut s, &mut i, "a", 3, 2, geom);
        let tconv = ConvTranspose2d::new(&mut s, &mut i, "b", 2, 3, geom);
        // share weights ([Co, Ci, kh, kw] is read as [Ci', Co', kh, kw] by the transpose), zero biases
        let w = s.get(conv.weight).clone();
        *s.get_mut(tconv.weight) = w;
        let tape = Tape::inference();
        let p = s.bind(&tape);
        let x = random(&[3, 7, 6], 2);
        let (ho, wo) = geom.output(7, 6);
        let y = random(&[2, ho, wo], 3);
        let cx = conv.forward(&tape, &p, &tape.constant(x.clone()));
        let ty = tconv.forward(&tape, &p, &tape.constant(y.clone()), (7, 6));
        let lhs = (cx.value() * &y).sum();
        let rhs = (&x * ty.value()).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn linear_over_last_axis() {
        let mut s = ParamStore::<f64>::new();
        let lin = Linear::new(&mut s, &mut init(), "l", 4, 3);
        let tape = Tape::inference();
        let p = s.bind(&tape);
        let y = lin.forward(&tape, &p, &tape.constant(random(&[2, 5, 4], 4)));
        assert_eq!(y.shape(), [2, 5, 3]);
    }
}
