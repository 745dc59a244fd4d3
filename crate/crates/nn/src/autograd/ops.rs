use ndarray::{concatenate, Array2, ArrayD, ArrayView2, ArrayViewD, Axis, Ix2, IxDyn, Slice, Zip};
use nsx_core::Real;

use super::{Tape, Var};

/// Row-major copy, reusing the buffer when the layout already is standard.
pub(crate) fn standard<T: Real>(a: ArrayD<T>) -> ArrayD<T> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

pub(crate) fn reshaped<T: Real>(a: ArrayD<T>, shape: &[usize]) -> ArrayD<T> {
    let a = standard(a);
    let len = a.len();
    a.into_shape_with_order(IxDyn(shape))
        .unwrap_or_else(|_| panic!("cannot reshape {len} elements to {shape:?}"))
}

pub(crate) fn as2<T: Real>(a: &ArrayD<T>) -> ArrayView2<'_, T> {
    a.view().into_dimensionality::<Ix2>().expect("expected a matrix")
}

fn channel_shape(ndim: usize, axis: usize, c: usize) -> Vec<usize> {
    let mut s = vec![1; ndim];
    s[axis] = c;
    s
}

fn broadcast_channel<'a, T: Real>(v: &'a ArrayD<T>, ndim: usize, axis: usize) -> ArrayViewD<'a, T> {
    v.view().into_shape_with_order(IxDyn(&channel_shape(ndim, axis, v.len()))).expect("per-channel vector")
}

/// Sums every axis except `axis`, giving a vector of length `shape[axis]`.
pub(crate) fn sum_except<T: Real>(a: &ArrayD<T>, axis: usize) -> ArrayD<T> {
    let c = a.shape()[axis];
    let mut out = vec![T::zero(); c];
    for (k, lane) in a.axis_iter(Axis(axis)).enumerate() {
        out[k] = lane.sum();
    }
    ArrayD::from_shape_vec(IxDyn(&[c]), out).expect("vector")
}

fn perm_grouping(ndim: usize, axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..ndim).filter(|a| !axes.contains(a)).collect();
    perm.extend_from_slice(axes);
    let mut inv = vec![0; ndim];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    (perm, inv)
}

/// Views `a` as `[groups, reduced]` with `axes` flattened into the second dimension.
fn grouped<T: Real>(a: &ArrayD<T>, perm: &[usize], reduced: usize) -> Array2<T> {
    let p = a.view().permuted_axes(IxDyn(perm)).as_standard_layout().into_owned();
    let groups = p.len() / reduced;
    p.into_shape_with_order((groups, reduced)).expect("grouping")
}

fn ungrouped<T: Real>(a: Array2<T>, shape: &[usize], perm: &[usize], inv: &[usize]) -> ArrayD<T> {
    let pshape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    standard(a.into_shape_with_order(IxDyn(&pshape)).expect("ungrouping").permuted_axes(IxDyn(inv)))
}

impl<T: Real> Tape<T> {
    pub fn add(&self, a: &Var<T>, b: &Var<T>) -> Var<T> {
        assert_eq!(a.shape(), b.shape(), "add shape mismatch");
        let (sa, sb) = (a.slot(), b.slot());
        self.record(&*a.value + &*b.value, &[a, b], move |g, sink| {
            sink.add_opt(sa, || g.clone());
            sink.add_opt(sb, || g.clone());
        })
    }

    pub fn sub(&self, a: &Var<T>, b: &Var<T>) -> Var<T> {
        assert_eq!(a.shape(), b.shape(), "sub shape mismatch");
        let (sa, sb) = (a.slot(), b.slot());
        self.record(&*a.value - &*b.value, &[a, b], move |g, sink| {
            sink.add_opt(sa, || g.clone());
            sink.add_opt(sb, || g.mapv(|v| -v));
        })
    }

    pub fn mul(&self, a: &Var<T>, b: &Var<T>) -> Var<T> {
        assert_eq!(a.shape(), b.shape(), "mul shape mismatch");
        let (sa, sb) = (a.slot(), b.slot());
        let (va, vb) = (a.value.clone(), b.value.clone());
        self.record(&*a.value * &*b.value, &[a, b], move |g, sink| {
            sink.add_opt(sa, || g * &*vb);
            sink.add_opt(sb, || g * &*va);
        })
    }

    pub fn scale(&self, a: &Var<T>, c: T) -> Var<T> {
        let sa = a.slot();
        self.record(a.value.mapv(|v| v * c), &[a], move |g, sink| sink.add_opt(sa, || g.mapv(|v| v * c)))
    }

    /// Sum of all elements as a 0-d array.
    pub fn sum(&self, a: &Var<T>) -> Var<T> {
        let sa = a.slot();
        let shape = a.shape().to_vec();
        let total = ArrayD::from_elem(IxDyn(&[]), a.value.sum());
        self.record(total, &[a], move |g, sink| {
            let v = *g.iter().next().expect("scalar");
            sink.add_opt(sa, || ArrayD::from_elem(IxDyn(&shape), v));
        })
    }

    /// `x + b` with the vector `b` broadcast along `axis`.
    pub fn add_channel(&self, x: &Var<T>, b: &Var<T>, axis: usize) -> Var<T> {
        assert_eq!(b.value.len(), x.shape()[axis], "bias length");
        let (sx, sb) = (x.slot(), b.slot());
        let out = &*x.value + &broadcast_channel(&b.value, x.value.ndim(), axis);
        self.record(out, &[x, b], move |g, sink| {
            sink.add_opt(sx, || g.clone());
            sink.add_opt(sb, || sum_except(g, axis));
        })
    }

    /// `x · s` with the vector `s` broadcast along `axis`.
    pub fn mul_channel(&self, x: &Var<T>, s: &Var<T>, axis: usize) -> Var<T> {
        assert_eq!(s.value.len(), x.shape()[axis], "scale length");
        let (sx, ss) = (x.slot(), s.slot());
        let (vx, vs) = (x.value.clone(), s.value.clone());
        let nd = x.value.ndim();
        let out = &*x.value * &broadcast_channel(&s.value, nd, axis);
        self.record(out, &[x, s], move |g, sink| {
            sink.add_opt(sx, || g * &broadcast_channel(&vs, nd, axis));
            sink.add_opt(ss, || sum_except(&(g * &*vx), axis));
        })
    }

    /// Parametric ReLU with one slope per index of `axis`.
    pub fn prelu(&self, x: &Var<T>, slope: &Var<T>, axis: usize) -> Var<T> {
        assert_eq!(slope.value.len(), x.shape()[axis], "slope length");
        let (sx, ss) = (x.slot(), slope.slot());
        let (vx, vs) = (x.value.clone(), slope.value.clone());
        let nd = x.value.ndim();
        let mut out = x.value.as_ref().clone();
        Zip::from(&mut out).and_broadcast(&broadcast_channel(&vs, nd, axis)).for_each(|o, &a| {
            if *o < T::zero() {
                *o = *o * a
            }
        });
        self.record(out, &[x, slope], move |g, sink| {
            sink.add_opt(sx, || {
                let mut dx = g.clone();
                Zip::from(&mut dx).and(&*vx).and_broadcast(&broadcast_channel(&vs, nd, axis)).for_each(|d, &x, &a| {
                    if x < T::zero() {
                        *d = *d * a
                    }
                });
                dx
            });
            sink.add_opt(ss, || {
                let mut t = g.clone();
                Zip::from(&mut t).and(&*vx).for_each(|d, &x| *d = if x < T::zero() { *d * x } else { T::zero() });
                sum_except(&t, axis)
            });
        })
    }

    pub fn leaky_relu(&self, x: &Var<T>, slope: T) -> Var<T> {
        let sx = x.slot();
        let vx = x.value.clone();
        let out = x.value.mapv(|v| if v < T::zero() { v * slope } else { v });
        self.record(out, &[x], move |g, sink| {
            sink.add_opt(sx, || {
                let mut d = g.clone();
                Zip::from(&mut d).and(&*vx).for_each(|d, &x| {
                    if x < T::zero() {
                        *d = *d * slope
                    }
                });
                d
            })
        })
    }

    pub fn reshape(&self, x: &Var<T>, shape: &[usize]) -> Var<T> {
        let sx = x.slot();
        let old = x.shape().to_vec();
        self.record(reshaped(x.value.as_ref().clone(), shape), &[x], move |g, sink| {
            sink.add_opt(sx, || reshaped(g.clone(), &old))
        })
    }

    pub fn permute(&self, x: &Var<T>, axes: &[usize]) -> Var<T> {
        let sx = x.slot();
        let mut inv = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inv[a] = i;
        }
        let out = standard(x.value.view().permuted_axes(IxDyn(axes)).to_owned());
        self.record(out, &[x], move |g, sink| {
            sink.add_opt(sx, || standard(g.view().permuted_axes(IxDyn(&inv)).to_owned()))
        })
    }

    /// `x[.., start..end, ..]` along `axis`.
    pub fn slice(&self, x: &Var<T>, axis: usize, start: usize, end: usize) -> Var<T> {
        assert!(start <= end && end <= x.shape()[axis], "slice {start}..{end} of {:?}", x.shape());
        let sx = x.slot();
        let shape = x.shape().to_vec();
        let out = x.value.slice_axis(Axis(axis), Slice::from(start..end)).to_owned();
        self.record(out, &[x], move |g, sink| {
            sink.add_opt(sx, || {
                let mut d = ArrayD::zeros(IxDyn(&shape));
                d.slice_axis_mut(Axis(axis), Slice::from(start..end)).assign(g);
                d
            })
        })
    }

    /// Zero padding along `axis`.
    pub fn pad(&self, x: &Var<T>, axis: usize, before: usize, after: usize) -> Var<T> {
        let sx = x.slot();
        let n = x.shape()[axis];
        let mut shape = x.shape().to_vec();
        shape[axis] += before + after;
        let mut out = ArrayD::zeros(IxDyn(&shape));
        out.slice_axis_mut(Axis(axis), Slice::from(before..before + n)).assign(&*x.value);
        self.record(out, &[x], move |g, sink| {
            sink.add_opt(sx, || g.slice_axis(Axis(axis), Slice::from(before..before + n)).to_owned())
        })
    }

    pub fn concat(&self, xs: &[&Var<T>], axis: usize) -> Var<T> {
        let views: Vec<_> = xs.iter().map(|v| v.value.view()).collect();
        let out = concatenate(Axis(axis), &views).expect("concat shapes");
        let parts: Vec<(Option<usize>, usize)> = xs.iter().map(|v| (v.slot(), v.shape()[axis])).collect();
        self.record(out, xs, move |g, sink| {
            let mut start = 0;
            for &(slot, len) in &parts {
                sink.add_opt(slot, || g.slice_axis(Axis(axis), Slice::from(start..start + len)).to_owned());
                start += len;
            }
        })
    }

    /// Zero-mean, unit-variance normalisation over `axes`, independently for every
    /// index of the remaining axes.
    pub fn normalize(&self, x: &Var<T>, axes: &[usize], eps: T) -> Var<T> {
        let sx = x.slot();
        let shape = x.shape().to_vec();
        let (perm, inv) = perm_grouping(shape.len(), axes);
        let reduced: usize = axes.iter().map(|&a| shape[a]).product();
        let n = T::from_usize_lossy(reduced);
        let mut y = grouped(&x.value, &perm, reduced);
        let mut inv_std = Vec::with_capacity(y.nrows());
        for mut row in y.rows_mut() {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).sum::<T>() / n;
            let s = T::one() / (var + eps).sqrt();
            row.mapv_inplace(|v| v * s);
            inv_std.push(s);
        }
        let out = ungrouped(y.clone(), &shape, &perm, &inv);
        self.record(out, &[x], move |g, sink| {
            sink.add_opt(sx, || {
                let mut d = grouped(g, &perm, reduced);
                for ((mut drow, yrow), &s) in d.rows_mut().into_iter().zip(y.rows()).zip(&inv_std) {
                    let mg = drow.sum() / n;
                    let mgy = drow.iter().zip(yrow).map(|(&a, &b)| a * b).sum::<T>() / n;
                    Zip::from(&mut drow).and(&yrow).for_each(|d, &yv| *d = s * (*d - mg - yv * mgy));
                }
                ungrouped(d, &shape, &perm, &inv)
            })
        })
    }

    /// `sqrt(re² + im² + eps)` where `x[0]` and `x[1]` are the real and imaginary planes.
    pub fn magnitude(&self, x: &Var<T>, eps: T) -> Var<T> {
        assert_eq!(x.shape()[0], 2, "magnitude expects a leading real/imaginary axis");
        let sx = x.slot();
        let (re, im) = (x.value.index_axis(Axis(0), 0), x.value.index_axis(Axis(0), 1));
        let mag = Zip::from(&re).and(&im).map_collect(|&a, &b| (a * a + b * b + eps).sqrt());
        let (vx, vm) = (x.value.clone(), std::rc::Rc::new(mag.clone()));
        self.record(mag, &[x], move |g, sink| {
            sink.add_opt(sx, || {
                let mut d = ArrayD::zeros(vx.raw_dim());
                for k in 0..2 {
                    let plane = vx.index_axis(Axis(0), k);
                    let dk = Zip::from(g).and(&plane).and(&*vm).map_collect(|&g, &v, &m| g * v / m);
                    d.index_axis_mut(Axis(0), k).assign(&dk);
                }
                d
            })
        })
    }

    /// Softmax over the last axis.
    pub fn softmax(&self, x: &Var<T>) -> Var<T> {
        let sx = x.slot();
        let shape = x.shape().to_vec();
        let last = *shape.last().expect("softmax of a scalar");
        let mut y = reshaped(x.value.as_ref().clone(), &[x.value.len() / last, last]);
        for mut row in y.axis_iter_mut(Axis(0)) {
            let m = row.fold(T::neg_infinity(), |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let y = std::rc::Rc::new(reshaped(y, &shape));
        let yk = y.clone();
        self.record(y.as_ref().clone(), &[x], move |g, sink| {
            sink.add_opt(sx, || {
                let mut d = g.clone();
                for (mut drow, yrow) in d.lanes_mut(Axis(shape.len() - 1)).into_iter().zip(yk.lanes(Axis(shape.len() - 1))) {
                    let dot = drow.iter().zip(yrow).map(|(&a, &b)| a * b).sum::<T>();
                    Zip::from(&mut drow).and(&yrow).for_each(|d, &yv| *d = yv * (*d - dot));
                }
                d
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::check;
    use ndarray::ArrayD;

    fn arr(shape: &[usize], seed: u64) -> ArrayD<f64> {
        crate::autograd::gradcheck::random(shape, seed)
    }

    #[test]
    fn elementwise_gradients() {
        check(&[arr(&[3, 4], 1), arr(&[3, 4], 2)], |t, v| {
            let p = t.mul(&v[0], &v[1]);
            let q = t.sub(&p, &v[1]);
            let r = t.add(&q, &v[0]);
            t.scale(&r, 1.7)
        });
    }

    #[test]
    fn channel_ops_gradients() {
        check(&[arr(&[2, 3, 5], 3), arr(&[3], 4), arr(&[3], 5)], |t, v| {
            let a = t.mul_channel(&v[0], &v[1], 1);
            t.add_channel(&a, &v[2], 1)
        });
        check(&[arr(&[4, 3], 6), arr(&[3], 7)], |t, v| t.prelu(&v[0], &v[1], 1));
        check(&[arr(&[4, 3], 8)], |t, v| t.leaky_relu(&v[0], 0.2));
    }

    #[test]
    fn shape_gradients() {
        check(&[arr(&[2, 3, 4], 9)], |t, v| {
            let p = t.permute(&v[0], &[2, 0, 1]);
            let r = t.reshape(&p, &[8, 3]);
            let s = t.slice(&r, 0, 2, 7);
            t.pad(&s, 1, 1, 2)
        });
        check(&[arr(&[2, 3], 10), arr(&[2, 5], 11)], |t, v| t.concat(&[&v[0], &v[1]], 1));
    }

    #[test]
    fn normalize_statistics_and_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(arr(&[3, 4, 5], 12));
        let y = tape.normalize(&x, &[0, 2], 0.0);
        for j in 0..4 {
            let lane = y.value().index_axis(Axis(1), j);
            let mean = lane.sum() / 15.0;
            let var = lane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 15.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-10);
        }
        check(&[arr(&[3, 4, 5], 13)], |t, v| t.normalize(&v[0], &[0, 2], 1e-5));
        check(&[arr(&[3, 4, 5], 14)], |t, v| t.normalize(&v[0], &[0, 1, 2], 1e-5));
    }

    #[test]
    fn magnitude_gradient() {
        check(&[arr(&[2, 3, 4], 17)], |t, v| t.magnitude(&v[0], 1e-8));
    }

    #[test]
    fn softmax_rows_and_gradient() {
        let tape = Tape::<f64>::new();
        let y = tape.softmax(&tape.leaf(arr(&[4, 6], 15).mapv(|v| 30.0 * v)));
        for row in y.value().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        check(&[arr(&[2, 3, 4], 16)], |t, v| t.softmax(&v[0]));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::<f64>::new();
        let c = tape.constant(arr(&[3], 1));
        let x = tape.leaf(arr(&[3], 2));
        let y = tape.sum(&tape.mul(&c, &x));
        let g = tape.backward(&y);
        assert_eq!(g.wrt(&x), *c.value());
        assert!(!c.tracked());
        let inf = Tape::<f64>::inference();
        let z = inf.mul(&inf.leaf(arr(&[3], 1)), &inf.leaf(arr(&[3], 2)));
        assert!(!z.tracked());
    }
}
