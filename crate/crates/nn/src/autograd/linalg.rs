use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, ArrayD, ArrayView2, ArrayView3, Axis, Ix3};
use nsx_core::Real;

use super::ops::as2;
use super::{Tape, Var};

/// Kernel, stride and zero padding of a 2-D sliding window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvGeom {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), padding: (usize, usize)) -> Self {
        Self { kernel, stride, padding }
    }

    /// Stride 1 with "same" padding for odd kernels.
    pub fn same(kh: usize, kw: usize) -> Self {
        Self::new((kh, kw), (1, 1), (kh / 2, kw / 2))
    }

    pub fn output(&self, h: usize, w: usize) -> (usize, usize) {
        let dim = |n: usize, k: usize, s: usize, p: usize| {
            assert!(n + 2 * p >= k, "window {k} larger than padded input {}", n + 2 * p);
            (n + 2 * p - k) / s + 1
        };
        (dim(h, self.kernel.0, self.stride.0, self.padding.0), dim(w, self.kernel.1, self.stride.1, self.padding.1))
    }
}

/// Gathers every `kh × kw` window of `x: [C, H, W]` into `[C·kh·kw, Ho, Wo]`.
pub fn im2col<T: Real>(x: ArrayView3<'_, T>, g: &ConvGeom) -> Array3<T> {
    let (c, h, w) = x.dim();
    let (kh, kw) = g.kernel;
    let (ho, wo) = g.output(h, w);
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut out = Array3::<T>::zeros((c * kh * kw, ho, wo));
    let os = out.as_slice_mut().expect("standard layout");
    for ci in 0..c {
        for i in 0..kh {
            for j in 0..kw {
                let row = (ci * kh + i) * kw + j;
                for oh in 0..ho {
                    let ih = (oh * g.stride.0 + i) as isize - g.padding.0 as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let src = &xs[(ci * h + ih as usize) * w..][..w];
                    let dst = &mut os[(row * ho + oh) * wo..][..wo];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * g.stride.1 + j) as isize - g.padding.1 as isize;
                        if iw >= 0 && iw < w as isize {
                            *d = src[iw as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters `[C·kh·kw, Ho, Wo]` windows back onto `[C, H, W]`, summing overlaps.
pub fn col2im<T: Real>(cols: ArrayView3<'_, T>, shape: (usize, usize, usize), g: &ConvGeom) -> Array3<T> {
    let (c, h, w) = shape;
    let (kh, kw) = g.kernel;
    let (ho, wo) = g.output(h, w);
    assert_eq!(cols.dim(), (c * kh * kw, ho, wo), "col2im geometry");
    let cols = cols.as_standard_layout();
    let cs = cols.as_slice().expect("standard layout");
    let mut out = Array3::<T>::zeros((c, h, w));
    let os = out.as_slice_mut().expect("standard layout");
    for ci in 0..c {
        for i in 0..kh {
            for j in 0..kw {
                let row = (ci * kh + i) * kw + j;
                for oh in 0..ho {
                    let ih = (oh * g.stride.0 + i) as isize - g.padding.0 as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let src = &cs[(row * ho + oh) * wo..][..wo];
                    let dst = &mut os[(ci * h + ih as usize) * w..][..w];
                    for (ow, &v) in src.iter().enumerate() {
                        let iw = (ow * g.stride.1 + j) as isize - g.padding.1 as isize;
                        if iw >= 0 && iw < w as isize {
                            dst[iw as usize] += v;
                        }
                    }
                }
            }
        }
    }
    out
}

fn as3<T: Real>(a: &ArrayD<T>) -> ArrayView3<'_, T> {
    a.view().into_dimensionality::<Ix3>().expect("expected a 3-d array")
}

fn op<T: Real>(a: ArrayView2<'_, T>, transpose: bool) -> ArrayView2<'_, T> {
    if transpose {
        a.reversed_axes()
    } else {
        a
    }
}

fn mm<T: Real>(a: ArrayView2<'_, T>, ta: bool, b: ArrayView2<'_, T>, tb: bool) -> Array2<T> {
    let (a, b) = (op(a, ta), op(b, tb));
    assert_eq!(a.ncols(), b.nrows(), "matmul inner dimensions");
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    general_mat_mul(T::one(), &a, &b, T::zero(), &mut out);
    out
}

/// Gradients of `op(A)·op(B)` given the upstream `g`.
fn mm_grads<T: Real>(
    g: ArrayView2<'_, T>,
    a: ArrayView2<'_, T>,
    ta: bool,
    b: ArrayView2<'_, T>,
    tb: bool,
    need_a: bool,
    need_b: bool,
) -> (Option<Array2<T>>, Option<Array2<T>>) {
    let da = need_a.then(|| if ta { mm(op(b, tb), false, g, true) } else { mm(g, false, op(b, tb), true) });
    let db = need_b.then(|| if tb { mm(g, true, op(a, ta), false) } else { mm(op(a, ta), true, g, false) });
    (da, db)
}

impl<T: Real> Tape<T> {
    /// `op(a)·op(b)` for matrices, where `op` optionally transposes.
    pub fn matmul(&self, a: &Var<T>, b: &Var<T>, ta: bool, tb: bool) -> Var<T> {
        let out = mm(as2(&a.value), ta, as2(&b.value), tb).into_dyn();
        let (sa, sb) = (a.slot(), b.slot());
        let (va, vb) = (a.value.clone(), b.value.clone());
        self.record(out, &[a, b], move |g, sink| {
            let (da, db) = mm_grads(as2(g), as2(&va), ta, as2(&vb), tb, sa.is_some(), sb.is_some());
            if let (Some(s), Some(d)) = (sa, da) {
                sink.add(s, d.into_dyn());
            }
            if let (Some(s), Some(d)) = (sb, db) {
                sink.add(s, d.into_dyn());
            }
        })
    }

    /// Batched [`Tape::matmul`] over the leading axis of 3-d arrays.
    pub fn bmm(&self, a: &Var<T>, b: &Var<T>, ta: bool, tb: bool) -> Var<T> {
        let (a3, b3) = (as3(&a.value), as3(&b.value));
        assert_eq!(a3.dim().0, b3.dim().0, "bmm batch sizes");
        let mats: Vec<Array2<T>> =
            a3.outer_iter().zip(b3.outer_iter()).map(|(x, y)| mm(x, ta, y, tb)).collect();
        let views: Vec<_> = mats.iter().map(|m| m.view()).collect();
        let out = ndarray::stack(Axis(0), &views).expect("bmm stack").into_dyn();
        let (sa, sb) = (a.slot(), b.slot());
        let (va, vb) = (a.value.clone(), b.value.clone());
        self.record(out, &[a, b], move |g, sink| {
            let (a3, b3, g3) = (as3(&va), as3(&vb), as3(g));
            let mut da = sa.map(|_| Array3::<T>::zeros(a3.dim()));
            let mut db = sb.map(|_| Array3::<T>::zeros(b3.dim()));
            for k in 0..g3.dim().0 {
                let (ga, gb) = mm_grads(
                    g3.index_axis(Axis(0), k),
                    a3.index_axis(Axis(0), k),
                    ta,
                    b3.index_axis(Axis(0), k),
                    tb,
                    sa.is_some(),
                    sb.is_some(),
                );
                if let (Some(d), Some(x)) = (da.as_mut(), ga) {
                    d.index_axis_mut(Axis(0), k).assign(&x);
                }
                if let (Some(d), Some(x)) = (db.as_mut(), gb) {
                    d.index_axis_mut(Axis(0), k).assign(&x);
                }
            }
            if let (Some(s), Some(d)) = (sa, da) {
                sink.add(s, d.into_dyn());
            }
            if let (Some(s), Some(d)) = (sb, db) {
                sink.add(s, d.into_dyn());
            }
        })
    }

    /// Differentiable [`im2col`] of a `[C, H, W]` value.
    pub fn im2col(&self, x: &Var<T>, geom: ConvGeom) -> Var<T> {
        let x3 = as3(&x.value);
        let shape = x3.dim();
        let out = im2col(x3, &geom).into_dyn();
        let sx = x.slot();
        self.record(out, &[x], move |g, sink| sink.add_opt(sx, || col2im(as3(g), shape, &geom).into_dyn()))
    }

    /// Differentiable [`col2im`] onto a `[C, H, W]` canvas.
    pub fn col2im(&self, cols: &Var<T>, shape: (usize, usize, usize), geom: ConvGeom) -> Var<T> {
        let out = col2im(as3(&cols.value), shape, &geom).into_dyn();
        let sc = cols.slot();
        self.record(out, &[cols], move |g, sink| sink.add_opt(sc, || im2col(as3(g), &geom).into_dyn()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::{check, random};
    use ndarray::Array3;

    #[test]
    fn matmul_gradients_all_transpose_modes() {
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let a = if ta { [4, 3] } else { [3, 4] };
            let b = if tb { [5, 4] } else { [4, 5] };
            check(&[random(&a, 1), random(&b, 2)], move |t, v| t.matmul(&v[0], &v[1], ta, tb));
            let a3 = [2, a[0], a[1]];
            let b3 = [2, b[0], b[1]];
            check(&[random(&a3, 3), random(&b3, 4)], move |t, v| t.bmm(&v[0], &v[1], ta, tb));
        }
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let x = random(&[2, 5, 7], 5).into_dimensionality::<Ix3>().unwrap();
        let w = random(&[3, 2, 3, 2], 6);
        let geom = ConvGeom::new((3, 2), (2, 1), (1, 1));
        let (ho, wo) = geom.output(5, 7);
        let cols = im2col(x.view(), &geom);
        let wm = w.clone().into_shape_with_order((3, 12)).unwrap();
        let via = wm.dot(&cols.into_shape_with_order((12, ho * wo)).unwrap());
        for co in 0..3 {
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..2 {
                        for i in 0..3 {
                            for j in 0..2 {
                                let ih = (oh * 2 + i) as isize - 1;
                                let iw = (ow + j) as isize - 1;
                                if ih >= 0 && ih < 5 && iw >= 0 && iw < 7 {
                                    acc += w[[co, ci, i, j]] * x[[ci, ih as usize, iw as usize]];
                                }
                            }
                        }
                    }
                    assert!((via[[co, oh * wo + ow]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let geom = ConvGeom::new((3, 4), (1, 2), (1, 2));
        let x: Array3<f64> = random(&[2, 6, 9], 7).into_dimensionality().unwrap();
        let (ho, wo) = geom.output(6, 9);
        let y: Array3<f64> = random(&[24, ho, wo], 8).into_dimensionality().unwrap();
        let lhs = (&im2col(x.view(), &geom) * &y).sum();
        let rhs = (&x * &col2im(y.view(), (2, 6, 9), &geom)).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        check(&[random(&[2, 4, 5], 9)], move |t, v| t.im2col(&v[0], ConvGeom::same(3, 3)));
    }
}
