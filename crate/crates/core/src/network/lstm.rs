//! Peephole LSTM with forget gates.
//!
//! ```text
//! i = sigmoid(W_xi x + W_hi h' + w_ci * c' + b_i)
//! f = sigmoid(W_xf x + W_hf h' + w_cf * c' + b_f)
//! c = f * c' + i * tanh(W_xc x + W_hc h' + b_c)
//! o = sigmoid(W_xo x + W_ho h' + w_co * c + b_o)
//! h = tanh(c) * o
//! ```
//!
//! `h'`, `c'` are the previous step's states and `*` is elementwise; note
//! the output gate peeks at the *current* cell. Peephole weights are
//! diagonal (one vector per gate).

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Gate order of the stacked `4H` rows in [`LstmParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H x D`, rows stacked `[W_xi; W_xf; W_xc; W_xo]`.
    pub w_x: Array2<f64>,
    /// `4H x H`, rows stacked `[W_hi; W_hf; W_hc; W_ho]`.
    pub w_h: Array2<f64>,
    pub peep_i: Array1<f64>,
    pub peep_f: Array1<f64>,
    pub peep_o: Array1<f64>,
    /// `4H`, stacked `[b_i; b_f; b_c; b_o]`.
    pub bias: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_x: Array2::zeros((4 * hidden, input)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            peep_i: Array1::zeros(hidden),
            peep_f: Array1::zeros(hidden),
            peep_o: Array1::zeros(hidden),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_x.ncols()
    }

    pub fn input_weights(&self, g: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden();
        self.w_x.slice(s![g as usize * h..(g as usize + 1) * h, ..])
    }

    pub fn recurrent_weights(&self, g: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden();
        self.w_h.slice(s![g as usize * h..(g as usize + 1) * h, ..])
    }

    pub fn gate_bias(&self, g: Gate) -> ArrayView1<'_, f64> {
        let h = self.hidden();
        self.bias.slice(s![g as usize * h..(g as usize + 1) * h])
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let h = self.hidden();
        let ok = self.w_x.nrows() == 4 * h
            && self.w_h.nrows() == 4 * h
            && self.peep_i.len() == h
            && self.peep_f.len() == h
            && self.peep_o.len() == h
            && self.bias.len() == 4 * h;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "inconsistent LSTM parameter shapes for hidden size {h}"
            )))
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate activations of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    /// `tanh` of the cell candidate.
    pub g: Array1<f64>,
    pub o: Array1<f64>,
}

/// One LSTM step; returns `(h, c, gates)`.
pub fn lstm_step(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    p: &LstmParams,
) -> Result<(Array1<f64>, Array1<f64>, StepCache)> {
    p.check_shapes()?;
    if x.len() != p.input() {
        return Err(Error::dim("LSTM input", p.input(), x.len()));
    }
    if h_prev.len() != p.hidden() || c_prev.len() != p.hidden() {
        return Err(Error::dim("LSTM state", p.hidden(), h_prev.len().max(c_prev.len())));
    }
    if x.iter().chain(h_prev).chain(c_prev).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite LSTM input".into()));
    }
    let a = |g: Gate| -> Array1<f64> {
        p.input_weights(g).dot(&x) + p.recurrent_weights(g).dot(&h_prev) + p.gate_bias(g)
    };
    let i = (a(Gate::Input) + &p.peep_i * &c_prev).mapv(sigmoid);
    let f = (a(Gate::Forget) + &p.peep_f * &c_prev).mapv(sigmoid);
    let g = a(Gate::Cell).mapv(f64::tanh);
    let c = &f * &c_prev + &i * &g;
    let o = (a(Gate::Output) + &p.peep_o * &c).mapv(sigmoid);
    let h = c.mapv(f64::tanh) * &o;
    Ok((h, c, StepCache { i, f, g, o }))
}

/// Activations of one LSTM pass over a sequence, indexed by original time.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    /// `T x 4H`: post-activation `[i | f | g | o]`.
    pub gates: Array2<f64>,
    pub c: Array2<f64>,
    pub h: Array2<f64>,
    pub reverse: bool,
}

fn time_order(t_len: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..t_len).rev())
    } else {
        Box::new(0..t_len)
    }
}

/// Index of the step processed just before `t`, if any.
fn prev_step(t: usize, t_len: usize, reverse: bool) -> Option<usize> {
    if reverse {
        (t + 1 < t_len).then_some(t + 1)
    } else {
        t.checked_sub(1)
    }
}

/// Runs the recursion over `x` (`T x D`) from zero states, right-to-left
/// when `reverse` is set.
pub fn lstm_sequence(p: &LstmParams, x: ArrayView2<f64>, reverse: bool) -> LstmTrace {
    let t_len = x.nrows();
    let hd = p.hidden();
    let mut pre = x.dot(&p.w_x.t());
    pre += &p.bias;
    let mut gates = Array2::zeros((t_len, 4 * hd));
    let mut c = Array2::zeros((t_len, hd));
    let mut h = Array2::zeros((t_len, hd));
    let zeros = Array1::<f64>::zeros(hd);

    for t in time_order(t_len, reverse) {
        let prev = prev_step(t, t_len, reverse);
        let (h_prev, c_prev) = match prev {
            Some(k) => (h.row(k).to_owned(), c.row(k).to_owned()),
            None => (zeros.clone(), zeros.clone()),
        };
        let mut a = pre.row(t).to_owned();
        if prev.is_some() {
            a += &p.w_h.dot(&h_prev);
        }
        let mut gr = gates.row_mut(t);
        for j in 0..hd {
            let i = sigmoid(a[j] + p.peep_i[j] * c_prev[j]);
            let f = sigmoid(a[hd + j] + p.peep_f[j] * c_prev[j]);
            let g = a[2 * hd + j].tanh();
            let cj = f * c_prev[j] + i * g;
            let o = sigmoid(a[3 * hd + j] + p.peep_o[j] * cj);
            gr[j] = i;
            gr[hd + j] = f;
            gr[2 * hd + j] = g;
            gr[3 * hd + j] = o;
            c[[t, j]] = cj;
            h[[t, j]] = cj.tanh() * o;
        }
    }
    LstmTrace {
        gates,
        c,
        h,
        reverse,
    }
}

/// Injected sign error in one gate derivative, used to show that the
/// gradient check catches faulty backpropagation.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackpropFault {
    NegateForgetGate,
}

/// Backpropagation through time for one pass.
///
/// `d_h` is the loss gradient w.r.t. every output `h[t]`. Gradients are
/// accumulated into `grads`; the gradient w.r.t. the input sequence is returned.
pub(crate) fn lstm_sequence_backward(
    p: &LstmParams,
    x: ArrayView2<f64>,
    tr: &LstmTrace,
    d_h: ArrayView2<f64>,
    grads: &mut LstmParams,
    fault: Option<BackpropFault>,
) -> Array2<f64> {
    let t_len = x.nrows();
    let hd = p.hidden();
    let reverse = tr.reverse;
    let mut d_a = Array2::<f64>::zeros((t_len, 4 * hd));
    let mut h_prev_all = Array2::<f64>::zeros((t_len, hd));
    let mut dh_rec = Array1::<f64>::zeros(hd);
    let mut dc_rec = Array1::<f64>::zeros(hd);

    for t in time_order(t_len, !reverse) {
        let prev = prev_step(t, t_len, reverse);
        if let Some(k) = prev {
            h_prev_all.row_mut(t).assign(&tr.h.row(k));
        }
        let gr = tr.gates.row(t);
        let mut da = d_a.row_mut(t);
        for j in 0..hd {
            let (i, f, g, o) = (gr[j], gr[hd + j], gr[2 * hd + j], gr[3 * hd + j]);
            let c = tr.c[[t, j]];
            let c_prev = prev.map_or(0.0, |k| tr.c[[k, j]]);
            let tc = c.tanh();
            let dh = d_h[[t, j]] + dh_rec[j];
            let da_o = dh * tc * o * (1.0 - o);
            let dc = dc_rec[j] + dh * o * (1.0 - tc * tc) + da_o * p.peep_o[j];
            let da_i = dc * g * i * (1.0 - i);
            let da_g = dc * i * (1.0 - g * g);
            let mut da_f = dc * c_prev * f * (1.0 - f);
            if fault == Some(BackpropFault::NegateForgetGate) {
                da_f = -da_f;
            }
            grads.peep_i[j] += da_i * c_prev;
            grads.peep_f[j] += da_f * c_prev;
            grads.peep_o[j] += da_o * c;
            dc_rec[j] = dc * f + da_i * p.peep_i[j] + da_f * p.peep_f[j];
            da[j] = da_i;
            da[hd + j] = da_f;
            da[2 * hd + j] = da_g;
            da[3 * hd + j] = da_o;
        }
        dh_rec = p.w_h.t().dot(&da);
    }
    grads.w_x += &d_a.t().dot(&x);
    grads.w_h += &d_a.t().dot(&h_prev_all);
    grads.bias += &d_a.sum_axis(Axis(0));
    d_a.dot(&p.w_x)
}
