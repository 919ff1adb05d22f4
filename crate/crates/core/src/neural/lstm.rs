//! Stacked bidirectional LSTM with exact backpropagation through time.
//!
//! Gate layout inside the 4H pre-activation vector is `[input, forget, cell, output]`.
//! Initial states are indexed `layer * 2 + direction` (0 = forward, 1 = backward).

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::dropout::{dropout, Mode};
use super::loss::sigmoid;
use super::{shape_err, NeuralError, Parameters};

/// One direction of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// 4H x input
    pub w_ih: Array2<f64>,
    /// 4H x H
    pub w_hh: Array2<f64>,
    /// 4H
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
struct CellCache {
    input: Array2<f64>,
    /// H state entering each processed step, in time order.
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    /// Activated gates i, f, g, o (T x 4H), in time order.
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
    reverse: bool,
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    /// Uniform in ±1/sqrt(H), the usual LSTM initialization.
    pub fn random(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut u = || rng.random_range(-k..=k);
        Self {
            w_ih: Array2::from_shape_simple_fn((4 * hidden, input), &mut u),
            w_hh: Array2::from_shape_simple_fn((4 * hidden, hidden), &mut u),
            bias: Array1::from_shape_simple_fn(4 * hidden, &mut u),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.ncols()
    }

    fn forward(
        &self,
        input: ArrayView2<f64>,
        h0: ArrayView1<f64>,
        c0: ArrayView1<f64>,
        reverse: bool,
    ) -> (Array2<f64>, CellCache) {
        let h = self.hidden();
        let t_len = input.nrows();
        let projected = input.dot(&self.w_ih.t()) + &self.bias;
        let mut out = Array2::zeros((t_len, h));
        let mut h_prev_all = Array2::zeros((t_len, h));
        let mut c_prev_all = Array2::zeros((t_len, h));
        let mut gates = Array2::zeros((t_len, 4 * h));
        let mut tanh_c = Array2::zeros((t_len, h));
        let mut h_cur = h0.to_owned();
        let mut c_cur = c0.to_owned();
        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            let z = &projected.row(t) + &self.w_hh.dot(&h_cur);
            let i = z.slice(s![0..h]).mapv(sigmoid);
            let f = z.slice(s![h..2 * h]).mapv(sigmoid);
            let g = z.slice(s![2 * h..3 * h]).mapv(f64::tanh);
            let o = z.slice(s![3 * h..4 * h]).mapv(sigmoid);
            let c = &f * &c_cur + &i * &g;
            let tc = c.mapv(f64::tanh);
            let h_new = &o * &tc;

            h_prev_all.row_mut(t).assign(&h_cur);
            c_prev_all.row_mut(t).assign(&c_cur);
            let mut gr = gates.row_mut(t);
            gr.slice_mut(s![0..h]).assign(&i);
            gr.slice_mut(s![h..2 * h]).assign(&f);
            gr.slice_mut(s![2 * h..3 * h]).assign(&g);
            gr.slice_mut(s![3 * h..4 * h]).assign(&o);
            tanh_c.row_mut(t).assign(&tc);
            out.row_mut(t).assign(&h_new);
            h_cur = h_new;
            c_cur = c;
        }
        let cache = CellCache {
            input: input.to_owned(),
            h_prev: h_prev_all,
            c_prev: c_prev_all,
            gates,
            tanh_c,
            reverse,
        };
        (out, cache)
    }

    /// Returns (parameter grads, d input, d h0, d c0).
    fn backward(&self, cache: &CellCache, d_out: ArrayView2<f64>) -> (LstmCell, Array2<f64>, Array1<f64>, Array1<f64>) {
        let h = self.hidden();
        let t_len = d_out.nrows();
        let mut dz_all = Array2::zeros((t_len, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for step in (0..t_len).rev() {
            let t = if cache.reverse { t_len - 1 - step } else { step };
            let gates = cache.gates.row(t);
            let i = gates.slice(s![0..h]);
            let f = gates.slice(s![h..2 * h]);
            let g = gates.slice(s![2 * h..3 * h]);
            let o = gates.slice(s![3 * h..4 * h]);
            let tc = cache.tanh_c.row(t);
            let c_prev = cache.c_prev.row(t);

            let dh = &d_out.row(t) + &dh_next;
            let d_o = &dh * &tc;
            let dc = &dc_next + &(&dh * &o * &tc.mapv(|v| 1.0 - v * v));
            let d_i = &dc * &g;
            let d_g = &dc * &i;
            let d_f = &dc * &c_prev;
            dc_next = &dc * &f;

            let mut dz = dz_all.row_mut(t);
            dz.slice_mut(s![0..h]).assign(&(&d_i * &i.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![h..2 * h]).assign(&(&d_f * &f.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![2 * h..3 * h])
                .assign(&(&d_g * &g.mapv(|v| 1.0 - v * v)));
            dz.slice_mut(s![3 * h..4 * h])
                .assign(&(&d_o * &o.mapv(|v| v * (1.0 - v))));
            dh_next = self.w_hh.t().dot(&dz);
        }
        let grads = LstmCell {
            w_ih: dz_all.t().dot(&cache.input),
            w_hh: dz_all.t().dot(&cache.h_prev),
            bias: dz_all.sum_axis(Axis(0)),
        };
        let d_input = dz_all.dot(&self.w_ih);
        (grads, d_input, dh_next, dc_next)
    }
}

impl Parameters for LstmCell {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        vec![
            ("w_ih".into(), self.w_ih.view().into_dyn()),
            ("w_hh".into(), self.w_hh.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        vec![
            self.w_ih.view_mut().into_dyn(),
            self.w_hh.view_mut().into_dyn(),
            self.bias.view_mut().into_dyn(),
        ]
    }
}

/// Stacked bidirectional LSTM; each layer's output is the concatenation of
/// the forward and backward hidden states (T x 2H).
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    /// `[forward, backward]` cells per layer.
    pub layers: Vec<[LstmCell; 2]>,
    /// Dropout applied to the outputs of every layer except the last.
    pub dropout: f64,
}

/// Intermediate values kept by [`BiLstm::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct BiLstmCache {
    cells: Vec<[CellCache; 2]>,
    /// Dropout multipliers applied to the input of layers 1..L.
    masks: Vec<Array2<f64>>,
}

/// Gradients from [`BiLstm::backward`].
#[derive(Debug, Clone)]
pub struct BiLstmGrads {
    pub params: BiLstm,
    pub d_input: Array2<f64>,
    pub d_h0: Array2<f64>,
    pub d_c0: Array2<f64>,
}

impl BiLstm {
    pub fn new(input: usize, hidden: usize, layers: usize, dropout: f64, rng: &mut impl Rng) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let in_dim = if l == 0 { input } else { 2 * hidden };
                [
                    LstmCell::random(in_dim, hidden, rng),
                    LstmCell::random(in_dim, hidden, rng),
                ]
            })
            .collect();
        Self { layers, dropout }
    }

    pub fn zeros(input: usize, hidden: usize, layers: usize, dropout: f64) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let in_dim = if l == 0 { input } else { 2 * hidden };
                [LstmCell::zeros(in_dim, hidden), LstmCell::zeros(in_dim, hidden)]
            })
            .collect();
        Self { layers, dropout }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0][0].hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0][0].input_dim()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Number of initial state rows: 2 per layer.
    pub fn state_rows(&self) -> usize {
        2 * self.layers.len()
    }

    /// Runs the stack over `input` (T x D) from initial states `h0`, `c0`
    /// (2L x H). Returns the top layer output (T x 2H).
    pub fn forward(
        &self,
        input: ArrayView2<f64>,
        h0: ArrayView2<f64>,
        c0: ArrayView2<f64>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Array2<f64>, BiLstmCache), NeuralError> {
        let h = self.hidden();
        if input.ncols() != self.input_dim() {
            return Err(shape_err(format!(
                "input has {} features, LSTM expects {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        for (name, state) in [("h0", &h0), ("c0", &c0)] {
            if state.dim() != (self.state_rows(), h) {
                return Err(shape_err(format!(
                    "{name} is {:?}, expected ({}, {h})",
                    state.dim(),
                    self.state_rows()
                )));
            }
        }
        let t_len = input.nrows();
        let mut layer_input = input.to_owned();
        let mut cells = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::new();
        for (l, [fwd, bwd]) in self.layers.iter().enumerate() {
            if l > 0 {
                let (dropped, mask) = dropout(&layer_input, self.dropout, mode, rng)?;
                layer_input = dropped;
                masks.push(mask);
            }
            let (out_f, cache_f) = fwd.forward(layer_input.view(), h0.row(2 * l), c0.row(2 * l), false);
            let (out_b, cache_b) = bwd.forward(layer_input.view(), h0.row(2 * l + 1), c0.row(2 * l + 1), true);
            let mut out = Array2::zeros((t_len, 2 * h));
            out.slice_mut(s![.., 0..h]).assign(&out_f);
            out.slice_mut(s![.., h..2 * h]).assign(&out_b);
            cells.push([cache_f, cache_b]);
            layer_input = out;
        }
        Ok((layer_input, BiLstmCache { cells, masks }))
    }

    /// Exact gradients of a scalar loss given `d_output` (T x 2H).
    pub fn backward(&self, cache: &BiLstmCache, d_output: ArrayView2<f64>) -> Result<BiLstmGrads, NeuralError> {
        let h = self.hidden();
        let t_len = cache.cells.first().map_or(0, |c| c[0].input.nrows());
        if d_output.dim() != (t_len, 2 * h) {
            return Err(shape_err(format!(
                "d_output is {:?}, expected ({t_len}, {})",
                d_output.dim(),
                2 * h
            )));
        }
        let mut params = self.clone();
        let mut d_h0 = Array2::zeros((self.state_rows(), h));
        let mut d_c0 = Array2::zeros((self.state_rows(), h));
        let mut d_upper = d_output.to_owned();
        for l in (0..self.layers.len()).rev() {
            let [fwd, bwd] = &self.layers[l];
            let [cache_f, cache_b] = &cache.cells[l];
            let (g_f, dx_f, dh_f, dc_f) = fwd.backward(cache_f, d_upper.slice(s![.., 0..h]));
            let (g_b, dx_b, dh_b, dc_b) = bwd.backward(cache_b, d_upper.slice(s![.., h..2 * h]));
            params.layers[l] = [g_f, g_b];
            d_h0.row_mut(2 * l).assign(&dh_f);
            d_h0.row_mut(2 * l + 1).assign(&dh_b);
            d_c0.row_mut(2 * l).assign(&dc_f);
            d_c0.row_mut(2 * l + 1).assign(&dc_b);
            let mut d_in = dx_f + dx_b;
            if l > 0 {
                d_in *= &cache.masks[l - 1];
            }
            d_upper = d_in;
        }
        Ok(BiLstmGrads {
            params,
            d_input: d_upper,
            d_h0,
            d_c0,
        })
    }
}

impl Parameters for BiLstm {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for (l, cells) in self.layers.iter().enumerate() {
            for (d, cell) in cells.iter().enumerate() {
                let dir = if d == 0 { "fwd" } else { "bwd" };
                for (name, t) in cell.tensors() {
                    out.push((format!("l{l}.{dir}.{name}"), t));
                }
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        self.layers
            .iter_mut()
            .flat_map(|cells| cells.iter_mut())
            .flat_map(|c| c.tensors_mut())
            .collect()
    }
}
