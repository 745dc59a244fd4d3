use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, Axis, Ix3};
use nsx_core::Real;

use super::ops::as2;
use super::{Tape, Var};

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

struct Saved<T> {
    /// Gate activations `[S, B, 4H]` in `i, f, g, o` order.
    gates: Array3<T>,
    cells: Array3<T>,
    hidden: Array3<T>,
}

impl<T: Real> Tape<T> {
    /// Single-direction LSTM over time-major input `x: [S, B, In]`, returning
    /// `[S, B, H]`. Weights follow the `i, f, g, o` gate layout with
    /// `w_ih: [4H, In]`, `w_hh: [4H, H]` and one bias `b: [4H]`. With `reverse`
    /// the sequence is consumed from the last step, and outputs stay aligned
    /// with their input positions.
    pub fn lstm(&self, x: &Var<T>, w_ih: &Var<T>, w_hh: &Var<T>, b: &Var<T>, reverse: bool) -> Var<T> {
        let x3 = x.value.view().into_dimensionality::<Ix3>().expect("lstm input [S, B, In]");
        let (steps, batch, input) = x3.dim();
        let hidden = w_hh.shape()[1];
        assert_eq!(w_ih.shape(), [4 * hidden, input], "w_ih shape");
        assert_eq!(w_hh.shape(), [4 * hidden, hidden], "w_hh shape");
        assert_eq!(b.shape(), [4 * hidden], "bias shape");
        let wi = as2(&w_ih.value);
        let wh = as2(&w_hh.value);

        // input projections for every step at once
        let flat = x3.as_standard_layout().into_owned().into_shape_with_order((steps * batch, input)).expect("flat");
        let mut pre = flat.dot(&wi.t());
        pre += &b.value.view().into_shape_with_order(4 * hidden).expect("bias");
        let pre = pre.into_shape_with_order((steps, batch, 4 * hidden)).expect("pre");

        let mut gates = Array3::<T>::zeros((steps, batch, 4 * hidden));
        let mut cells = Array3::<T>::zeros((steps, batch, hidden));
        let mut hid = Array3::<T>::zeros((steps, batch, hidden));
        let mut h = Array2::<T>::zeros((batch, hidden));
        let mut c = Array2::<T>::zeros((batch, hidden));
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        let mut a = Array2::<T>::zeros((batch, 4 * hidden));
        for &t in &order {
            a.assign(&pre.index_axis(Axis(0), t));
            general_mat_mul(T::one(), &h, &wh.t(), T::one(), &mut a);
            for n in 0..batch {
                for k in 0..hidden {
                    let ig = sigmoid(a[[n, k]]);
                    let fg = sigmoid(a[[n, hidden + k]]);
                    let gg = a[[n, 2 * hidden + k]].tanh();
                    let og = sigmoid(a[[n, 3 * hidden + k]]);
                    let cn = fg * c[[n, k]] + ig * gg;
                    c[[n, k]] = cn;
                    h[[n, k]] = og * cn.tanh();
                    gates[[t, n, k]] = ig;
                    gates[[t, n, hidden + k]] = fg;
                    gates[[t, n, 2 * hidden + k]] = gg;
                    gates[[t, n, 3 * hidden + k]] = og;
                }
            }
            cells.index_axis_mut(Axis(0), t).assign(&c);
            hid.index_axis_mut(Axis(0), t).assign(&h);
        }
        let out = hid.clone().into_dyn();
        let saved = Saved { gates, cells, hidden: hid };
        let (sx, si, sh, sb) = (x.slot(), w_ih.slot(), w_hh.slot(), b.slot());
        let (vx, vwi, vwh) = (x.value.clone(), w_ih.value.clone(), w_hh.value.clone());
        self.record(out, &[x, w_ih, w_hh, b], move |g, sink| {
            let g3 = g.view().into_dimensionality::<Ix3>().expect("grad");
            let wh = as2(&vwh);
            let mut dpre = Array3::<T>::zeros((steps, batch, 4 * hidden));
            let mut dh_next = Array2::<T>::zeros((batch, hidden));
            let mut dc_next = Array2::<T>::zeros((batch, hidden));
            let mut dwh = Array2::<T>::zeros((4 * hidden, hidden));
            let zeros = Array2::<T>::zeros((batch, hidden));
            for (pos, &t) in order.iter().enumerate().rev() {
                let prev = (pos > 0).then(|| order[pos - 1]);
                let c_prev = prev.map(|p| saved.cells.index_axis(Axis(0), p)).unwrap_or(zeros.view());
                let h_prev = prev.map(|p| saved.hidden.index_axis(Axis(0), p)).unwrap_or(zeros.view());
                let mut da = dpre.index_axis_mut(Axis(0), t);
                for n in 0..batch {
                    for k in 0..hidden {
                        let ig = saved.gates[[t, n, k]];
                        let fg = saved.gates[[t, n, hidden + k]];
                        let gg = saved.gates[[t, n, 2 * hidden + k]];
                        let og = saved.gates[[t, n, 3 * hidden + k]];
                        let tc = saved.cells[[t, n, k]].tanh();
                        let dh = g3[[t, n, k]] + dh_next[[n, k]];
                        let dc = dc_next[[n, k]] + dh * og * (T::one() - tc * tc);
                        da[[n, k]] = dc * gg * ig * (T::one() - ig);
                        da[[n, hidden + k]] = dc * c_prev[[n, k]] * fg * (T::one() - fg);
                        da[[n, 2 * hidden + k]] = dc * ig * (T::one() - gg * gg);
                        da[[n, 3 * hidden + k]] = dh * tc * og * (T::one() - og);
                        dc_next[[n, k]] = dc * fg;
                    }
                }
                dh_next = da.dot(&wh);
                if sh.is_some() {
                    general_mat_mul(T::one(), &da.t(), &h_prev, T::one(), &mut dwh);
                }
            }
            let dflat = dpre.into_shape_with_order((steps * batch, 4 * hidden)).expect("flat grad");
            sink.add_opt(sx, || {
                dflat.dot(&as2(&vwi)).into_shape_with_order((steps, batch, input)).expect("dx").into_dyn()
            });
            sink.add_opt(si, || {
                let xf = vx.as_standard_layout().into_owned().into_shape_with_order((steps * batch, input)).expect("x flat");
                dflat.t().dot(&xf).into_dyn()
            });
            sink.add_opt(sh, || dwh.clone().into_dyn());
            sink.add_opt(sb, || dflat.sum_axis(Axis(0)).into_dyn());
        })
    }

    /// Bidirectional LSTM: forward and reverse outputs concatenated on the last axis.
    pub fn blstm(&self, x: &Var<T>, fwd: [&Var<T>; 3], bwd: [&Var<T>; 3]) -> Var<T> {
        let f = self.lstm(x, fwd[0], fwd[1], fwd[2], false);
        let r = self.lstm(x, bwd[0], bwd[1], bwd[2], true);
        self.concat(&[&f, &r], 2)
    }
}

/// First hidden state of a reverse LSTM, for tests.
#[cfg(test)]
fn reference_step(x: &[f64], w_ih: &Array2<f64>, w_hh: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let h4 = w_ih.nrows();
    let hidden = h4 / 4;
    let _ = w_hh;
    let a: Vec<f64> = (0..h4).map(|r| b[r] + (0..x.len()).map(|c| w_ih[[r, c]] * x[c]).sum::<f64>()).collect();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    (0..hidden)
        .map(|k| {
            let c = sig(a[k]) * a[2 * hidden + k].tanh();
            sig(a[3 * hidden + k]) * c.tanh()
        })
        .collect()
}
