use rand::Rng;

use super::spec::LayerSpec;
use super::{NnError, Tensor};

fn shape_err(expected: &[usize], got: &[usize]) -> NnError {
    NnError::ShapeMismatch {
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

#[inline]
fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise `x` for `x >= 0`, `alpha * x` otherwise.
pub fn leaky_relu(input: &Tensor, alpha: f64) -> Tensor {
    input.map(|x| if x >= 0.0 { x } else { alpha * x })
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

/// Same-padded 2D cross-correlation over `[T, L, C]` with TensorFlow padding
/// semantics: output extent `ceil(n / stride)`, the smaller half of the
/// padding before the signal.
///
/// Weights are stored `[kh][kw][in][out]` followed by `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: (usize, usize),
    pub params: Vec<f64>,
}

struct ConvGeom {
    t: usize,
    l: usize,
    to: usize,
    lo: usize,
    pad_t: usize,
    pad_l: usize,
}

impl Conv2d {
    pub fn new(
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let taps = kernel.0 * kernel.1;
        let mut params = glorot(
            rng,
            taps * in_channels,
            taps * out_channels,
            taps * in_channels * out_channels,
        );
        params.extend(std::iter::repeat_n(0.0, out_channels));
        Self {
            kernel,
            in_channels,
            out_channels,
            stride,
            params,
        }
    }

    fn n_weights(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.in_channels * self.out_channels
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize, c: usize, o: usize) -> f64 {
        self.params[((i * self.kernel.1 + j) * self.in_channels + c) * self.out_channels + o]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.n_weights()..]
    }

    fn geometry(&self, shape: &[usize]) -> Result<ConvGeom, NnError> {
        let [t, l, c] = shape else {
            return Err(shape_err(&[0, 0, self.in_channels], shape));
        };
        if *c != self.in_channels {
            return Err(shape_err(&[*t, *l, self.in_channels], shape));
        }
        let pad = |n: usize, k: usize, s: usize| {
            let out = n.div_ceil(s);
            (((out - 1) * s + k).saturating_sub(n)) / 2
        };
        Ok(ConvGeom {
            t: *t,
            l: *l,
            to: t.div_ceil(self.stride.0),
            lo: l.div_ceil(self.stride.1),
            pad_t: pad(*t, self.kernel.0, self.stride.0),
            pad_l: pad(*l, self.kernel.1, self.stride.1),
        })
    }

    /// Weights regrouped as `[out][kw][in][kh]` so every tap column is
    /// contiguous.
    fn tap_columns(&self, reversed: bool) -> Vec<f64> {
        let (kh, kw) = self.kernel;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let mut cols = Vec::with_capacity(self.n_weights());
        for o in 0..cout {
            for j in 0..kw {
                for c in 0..cin {
                    for i in 0..kh {
                        let ii = if reversed { kh - 1 - i } else { i };
                        cols.push(self.weight(ii, j, c, o));
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        let g = self.geometry(input.shape())?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let (kh, kw) = self.kernel;
        let (st, sl) = self.stride;
        let tp = padded_len(&g, kh, st);
        // planar layouts: x[l][c][tp] zero padded, y[l][o][to]
        let x = to_planar_padded(input.data(), g.t, g.l, cin, tp, g.pad_t);
        let cols = self.tap_columns(false);
        let bias = self.bias();
        let mut y = vec![0.0; g.lo * cout * g.to];
        for lo in 0..g.lo {
            for o in 0..cout {
                let yrow = &mut y[(lo * cout + o) * g.to..][..g.to];
                yrow.fill(bias[o]);
                for j in 0..kw {
                    let Some(li) = (lo * sl + j).checked_sub(g.pad_l).filter(|&v| v < g.l) else {
                        continue;
                    };
                    for c in 0..cin {
                        let w = &cols[((o * kw + j) * cin + c) * kh..][..kh];
                        correlate_acc(yrow, &x[(li * cin + c) * tp..][..tp], w, st);
                    }
                }
            }
        }
        Ok(Tensor::from_parts(
            vec![g.to, g.lo, cout],
            from_planar(&y, g.to, g.lo, cout),
        ))
    }

    /// Returns `(input gradient, parameter gradient)`.
    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Vec<f64>), NnError> {
        self.backward_parts(input, grad_out, true)
    }

    /// With `params` false the parameter gradient is left empty and not
    /// computed.
    fn backward_parts(&self, input: &Tensor, grad_out: &Tensor, params: bool) -> Result<(Tensor, Vec<f64>), NnError> {
        let g = self.geometry(input.shape())?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        if grad_out.shape() != [g.to, g.lo, cout] {
            return Err(shape_err(&[g.to, g.lo, cout], grad_out.shape()));
        }
        let (kh, kw) = self.kernel;
        let (st, sl) = self.stride;
        let tp = padded_len(&g, kh, st);
        let x = to_planar_padded(input.data(), g.t, g.l, cin, tp, g.pad_t);
        let gy = to_planar(grad_out.data(), g.to, g.lo, cout);
        let rev = self.tap_columns(true);
        let mut gx = vec![0.0; g.l * cin * tp];
        let mut gcols = vec![0.0; self.n_weights()];
        let mut gbias = vec![0.0; cout];
        // gradient rows dilated by the stride and zero-extended by kh - 1 on
        // both sides, so both products run as stride-1 correlations
        let dilated = (g.to - 1) * st + 1;
        let mut gext = vec![0.0; tp + kh - 1];
        for lo in 0..g.lo {
            for o in 0..cout {
                let grow = &gy[(lo * cout + o) * g.to..][..g.to];
                gbias[o] += lane_sum(grow);
                for (t, &v) in grow.iter().enumerate() {
                    gext[kh - 1 + t * st] = v;
                }
                let gdil = &gext[kh - 1..kh - 1 + dilated];
                for j in 0..kw {
                    let Some(li) = (lo * sl + j).checked_sub(g.pad_l).filter(|&v| v < g.l) else {
                        continue;
                    };
                    for c in 0..cin {
                        let col = ((o * kw + j) * cin + c) * kh;
                        let xrow = &x[(li * cin + c) * tp..][..tp];
                        if params {
                            correlate_weights(&mut gcols[col..col + kh], gdil, xrow);
                        }
                        let gxrow = &mut gx[(li * cin + c) * tp..][..tp];
                        // full convolution of the gradient with the kernel
                        correlate_acc(gxrow, &gext, &rev[col..col + kh], 1);
                    }
                }
            }
        }
        let gx = from_planar_padded(&gx, g.t, g.l, cin, tp, g.pad_t);
        let gx = Tensor::from_parts(input.shape().to_vec(), gx);
        if !params {
            return Ok((gx, Vec::new()));
        }
        let mut gp = vec![0.0; self.params.len()];
        for o in 0..cout {
            for j in 0..kw {
                for c in 0..cin {
                    for i in 0..kh {
                        gp[((i * kw + j) * cin + c) * cout + o] = gcols[((o * kw + j) * cin + c) * kh + i];
                    }
                }
            }
        }
        gp[self.n_weights()..].copy_from_slice(&gbias);
        Ok((gx, gp))
    }
}

fn padded_len(g: &ConvGeom, kh: usize, stride: usize) -> usize {
    ((g.to - 1) * stride + kh).max(g.t + g.pad_t)
}

const LANES: usize = 16;

/// `y[t] += Σ_i w[i] · x[t·stride + i]`; `x` must cover every tap.
#[inline]
fn correlate_acc(y: &mut [f64], x: &[f64], w: &[f64], stride: usize) {
    let n = y.len();
    let k = w.len();
    if stride == 1 {
        let blocks = n / LANES * LANES;
        let mut t = 0;
        assert!(x.len() + 1 >= blocks + k);
        while t < blocks {
            let mut acc: [f64; LANES] = y[t..t + LANES].try_into().unwrap();
            let window = &x[t..t + k - 1 + LANES];
            for (i, &wi) in w.iter().enumerate() {
                let xs: &[f64; LANES] = window[i..i + LANES].try_into().unwrap();
                for l in 0..LANES {
                    acc[l] += wi * xs[l];
                }
            }
            y[t..t + LANES].copy_from_slice(&acc);
            t += LANES;
        }
        for (t, yv) in y.iter_mut().enumerate().skip(blocks) {
            let mut acc = *yv;
            for (i, &wi) in w.iter().enumerate() {
                acc += wi * x[t + i];
            }
            *yv = acc;
        }
    } else {
        for (t, yv) in y.iter_mut().enumerate() {
            let xs = &x[t * stride..t * stride + k];
            let mut acc = *yv;
            for (wi, xv) in w.iter().zip(xs) {
                acc += wi * xv;
            }
            *yv = acc;
        }
    }
}

/// `out[i] += Σ_t g[t] · x[t + i]`.
#[inline]
fn correlate_weights(out: &mut [f64], g: &[f64], x: &[f64]) {
    for (i, ov) in out.iter_mut().enumerate() {
        *ov += lane_dot(g, &x[i..i + g.len()]);
    }
}

/// Dot product with sixteen interleaved partial sums combined in fixed order.
#[inline]
fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut s = acc.iter().sum::<f64>();
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn lane_sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let chunks = a.chunks_exact(LANES);
    let rest = chunks.remainder();
    for c in chunks {
        for l in 0..LANES {
            acc[l] += c[l];
        }
    }
    acc.iter().sum::<f64>() + rest.iter().sum::<f64>()
}

fn to_planar_padded(data: &[f64], t: usize, l: usize, c: usize, tp: usize, pad: usize) -> Vec<f64> {
    let mut out = vec![0.0; l * c * tp];
    for ti in 0..t {
        for li in 0..l {
            for ci in 0..c {
                out[(li * c + ci) * tp + pad + ti] = data[(ti * l + li) * c + ci];
            }
        }
    }
    out
}

fn from_planar_padded(data: &[f64], t: usize, l: usize, c: usize, tp: usize, pad: usize) -> Vec<f64> {
    let mut out = vec![0.0; t * l * c];
    for li in 0..l {
        for ci in 0..c {
            let row = &data[(li * c + ci) * tp + pad..][..t];
            for (ti, v) in row.iter().enumerate() {
                out[(ti * l + li) * c + ci] = *v;
            }
        }
    }
    out
}

fn to_planar(data: &[f64], t: usize, l: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for ti in 0..t {
        for li in 0..l {
            for ci in 0..c {
                out[(li * c + ci) * t + ti] = data[(ti * l + li) * c + ci];
            }
        }
    }
    out
}

fn from_planar(data: &[f64], t: usize, l: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for li in 0..l {
        for ci in 0..c {
            let row = &data[(li * c + ci) * t..][..t];
            for (ti, v) in row.iter().enumerate() {
                out[(ti * l + li) * c + ci] = *v;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// BiLSTM
// ---------------------------------------------------------------------------

/// Bidirectional LSTM, gate order `i, f, g, o` (input, forget, cell, output).
///
/// Per direction the parameters are the input kernel `[F][4H]`, the recurrent
/// kernel `[H][4H]` and the bias `[4H]`; the forward direction comes first.
/// The output at step `t` concatenates the forward state after reading
/// `x[0..=t]` and the backward state after reading `x[t..]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm {
    pub input: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

/// Per-direction activations kept for backpropagation through time.
#[derive(Clone, Debug)]
pub(crate) struct LstmTrace {
    /// `[T][4H]` post-activation gates, in processing order.
    gates: Vec<f64>,
    /// `[T+1][H]` cell states, `c[0]` is the zero initial state.
    cells: Vec<f64>,
    /// `[T+1][H]` hidden states.
    hiddens: Vec<f64>,
}

impl BiLstm {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let g = 4 * hidden;
        let mut params = Vec::with_capacity(2 * ((input + hidden) * g + g));
        for _ in 0..2 {
            params.extend(glorot(rng, input, g, input * g));
            params.extend(glorot(rng, hidden, g, hidden * g));
            params.extend((0..g).map(|k| if (hidden..2 * hidden).contains(&k) { 1.0 } else { 0.0 }));
        }
        Self {
            input,
            hidden,
            params,
        }
    }

    fn dir_len(&self) -> usize {
        let g = 4 * self.hidden;
        (self.input + self.hidden) * g + g
    }

    fn dir_params(&self, dir: usize) -> (&[f64], &[f64], &[f64]) {
        let g = 4 * self.hidden;
        let p = &self.params[dir * self.dir_len()..][..self.dir_len()];
        let (w, rest) = p.split_at(self.input * g);
        let (u, b) = rest.split_at(self.hidden * g);
        (w, u, b)
    }

    fn check(&self, input: &Tensor) -> Result<usize, NnError> {
        match input.shape() {
            [t, f] if *f == self.input => Ok(*t),
            s => Err(shape_err(&[0, self.input], s)),
        }
    }

    fn run_direction(&self, x: &[f64], steps: usize, dir: usize) -> LstmTrace {
        let (f, h) = (self.input, self.hidden);
        let g4 = 4 * h;
        let (w, u, b) = self.dir_params(dir);
        let mut gates = vec![0.0; steps * g4];
        let mut cells = vec![0.0; (steps + 1) * h];
        let mut hiddens = vec![0.0; (steps + 1) * h];
        let mut z = vec![0.0; g4];
        for s in 0..steps {
            let t = if dir == 0 { s } else { steps - 1 - s };
            let xt = &x[t * f..][..f];
            z.copy_from_slice(b);
            for (k, &xv) in xt.iter().enumerate() {
                for (zv, wv) in z.iter_mut().zip(&w[k * g4..][..g4]) {
                    *zv += xv * wv;
                }
            }
            let (hp, hn) = hiddens.split_at_mut((s + 1) * h);
            let hprev = &hp[s * h..];
            for (k, &hv) in hprev.iter().enumerate() {
                for (zv, uv) in z.iter_mut().zip(&u[k * g4..][..g4]) {
                    *zv += hv * uv;
                }
            }
            let gs = &mut gates[s * g4..][..g4];
            for k in 0..h {
                gs[k] = sigmoid_scalar(z[k]);
                gs[h + k] = sigmoid_scalar(z[h + k]);
                gs[2 * h + k] = z[2 * h + k].tanh();
                gs[3 * h + k] = sigmoid_scalar(z[3 * h + k]);
            }
            let (cp, cn) = cells.split_at_mut((s + 1) * h);
            let cprev = &cp[s * h..];
            for k in 0..h {
                let c = gs[h + k] * cprev[k] + gs[k] * gs[2 * h + k];
                cn[k] = c;
                hn[k] = gs[3 * h + k] * c.tanh();
            }
        }
        LstmTrace {
            gates,
            cells,
            hiddens,
        }
    }

    fn assemble(&self, steps: usize, traces: &[LstmTrace; 2]) -> Tensor {
        let h = self.hidden;
        let mut out = vec![0.0; steps * 2 * h];
        for t in 0..steps {
            let fwd = &traces[0].hiddens[(t + 1) * h..][..h];
            let bwd = &traces[1].hiddens[(steps - t) * h..][..h];
            out[t * 2 * h..][..h].copy_from_slice(fwd);
            out[t * 2 * h + h..][..h].copy_from_slice(bwd);
        }
        Tensor::from_parts(vec![steps, 2 * h], out)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.forward_traced(input)?.0)
    }

    pub(crate) fn forward_traced(&self, input: &Tensor) -> Result<(Tensor, [LstmTrace; 2]), NnError> {
        let steps = self.check(input)?;
        let traces = [
            self.run_direction(input.data(), steps, 0),
            self.run_direction(input.data(), steps, 1),
        ];
        Ok((self.assemble(steps, &traces), traces))
    }

    pub(crate) fn backward(
        &self,
        input: &Tensor,
        traces: &[LstmTrace; 2],
        grad_out: &Tensor,
    ) -> Result<(Tensor, Vec<f64>), NnError> {
        let steps = self.check(input)?;
        let (f, h) = (self.input, self.hidden);
        if grad_out.shape() != [steps, 2 * h] {
            return Err(shape_err(&[steps, 2 * h], grad_out.shape()));
        }
        let g4 = 4 * h;
        let x = input.data();
        let go = grad_out.data();
        let mut gx = vec![0.0; steps * f];
        let mut gp = vec![0.0; self.params.len()];
        for (dir, tr) in traces.iter().enumerate() {
            let (w, u, _) = self.dir_params(dir);
            let base = dir * self.dir_len();
            let (gw, rest) = gp[base..base + self.dir_len()].split_at_mut(f * g4);
            let (gu, gb) = rest.split_at_mut(h * g4);
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut dz = vec![0.0; g4];
            for s in (0..steps).rev() {
                let t = if dir == 0 { s } else { steps - 1 - s };
                let gs = &tr.gates[s * g4..][..g4];
                let cprev = &tr.cells[s * h..][..h];
                let c = &tr.cells[(s + 1) * h..][..h];
                let hprev = &tr.hiddens[s * h..][..h];
                for k in 0..h {
                    let dh = go[t * 2 * h + dir * h + k] + dh_next[k];
                    let (ig, fg, gg, og) = (gs[k], gs[h + k], gs[2 * h + k], gs[3 * h + k]);
                    let tc = c[k].tanh();
                    let dc = dh * og * (1.0 - tc * tc) + dc_next[k];
                    dz[k] = dc * gg * ig * (1.0 - ig);
                    dz[h + k] = dc * cprev[k] * fg * (1.0 - fg);
                    dz[2 * h + k] = dc * ig * (1.0 - gg * gg);
                    dz[3 * h + k] = dh * tc * og * (1.0 - og);
                    dc_next[k] = dc * fg;
                }
                let xt = &x[t * f..][..f];
                for (kx, &xv) in xt.iter().enumerate() {
                    let row = &w[kx * g4..][..g4];
                    let grow = &mut gw[kx * g4..][..g4];
                    let mut acc = 0.0;
                    for ((gv, wv), d) in grow.iter_mut().zip(row).zip(&dz) {
                        *gv += xv * d;
                        acc += wv * d;
                    }
                    gx[t * f + kx] += acc;
                }
                for (kh, &hv) in hprev.iter().enumerate() {
                    let row = &u[kh * g4..][..g4];
                    let grow = &mut gu[kh * g4..][..g4];
                    let mut acc = 0.0;
                    for ((gv, uv), d) in grow.iter_mut().zip(row).zip(&dz) {
                        *gv += hv * d;
                        acc += uv * d;
                    }
                    dh_next[kh] = acc;
                }
                for (gv, d) in gb.iter_mut().zip(&dz) {
                    *gv += d;
                }
            }
        }
        Ok((Tensor::from_parts(vec![steps, f], gx), gp))
    }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// `y = x·W + b` with `W` stored `[inputs][outputs]`, biases last.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub params: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let mut params = glorot(rng, inputs, outputs, inputs * outputs);
        params.extend(std::iter::repeat_n(0.0, outputs));
        Self {
            inputs,
            outputs,
            params,
        }
    }

    fn check(&self, input: &Tensor) -> Result<(), NnError> {
        if input.len() != self.inputs {
            return Err(shape_err(&[self.inputs], input.shape()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        self.check(input)?;
        let (w, b) = self.params.split_at(self.inputs * self.outputs);
        let mut y = b.to_vec();
        if self.outputs == 1 {
            y[0] += input.data().iter().zip(w).map(|(x, w)| x * w).sum::<f64>();
        } else {
            for (k, &xv) in input.data().iter().enumerate() {
                for (yv, wv) in y.iter_mut().zip(&w[k * self.outputs..][..self.outputs]) {
                    *yv += xv * wv;
                }
            }
        }
        Ok(Tensor::from_parts(vec![self.outputs], y))
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Vec<f64>), NnError> {
        self.check(input)?;
        if grad_out.len() != self.outputs {
            return Err(shape_err(&[self.outputs], grad_out.shape()));
        }
        let n = self.outputs;
        let w = &self.params[..self.inputs * n];
        let g = grad_out.data();
        let mut gp = vec![0.0; self.params.len()];
        let mut gx = vec![0.0; self.inputs];
        for (k, &xv) in input.data().iter().enumerate() {
            let mut acc = 0.0;
            for o in 0..n {
                gp[k * n + o] = xv * g[o];
                acc += w[k * n + o] * g[o];
            }
            gx[k] = acc;
        }
        gp[self.inputs * n..].copy_from_slice(g);
        Ok((Tensor::from_parts(input.shape().to_vec(), gx), gp))
    }
}

// ---------------------------------------------------------------------------
// Layer enum
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    BiLstm(BiLstm),
    Conv2d(Conv2d),
    Dense(Dense),
    LeakyRelu(f64),
    Sigmoid,
    Reshape(Vec<usize>),
}

/// What a layer keeps from its forward pass.
#[derive(Clone, Debug)]
pub(crate) enum Cache {
    Input(Tensor),
    Lstm(Tensor, Box<[LstmTrace; 2]>),
    Output(Tensor),
    Shape(Vec<usize>),
}

impl Layer {
    pub fn from_spec(spec: &LayerSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        spec.validate()?;
        Ok(match spec {
            LayerSpec::BiLstm { input, hidden } => Layer::BiLstm(BiLstm::new(*input, *hidden, rng)),
            LayerSpec::Conv2d {
                kernel,
                in_channels,
                out_channels,
                stride,
            } => Layer::Conv2d(Conv2d::new(*kernel, *in_channels, *out_channels, *stride, rng)),
            LayerSpec::Dense { inputs, outputs } => Layer::Dense(Dense::new(*inputs, *outputs, rng)),
            LayerSpec::LeakyRelu { alpha } => Layer::LeakyRelu(*alpha),
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::Reshape { shape } => Layer::Reshape(shape.clone()),
        })
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Layer::BiLstm(l) => &l.params,
            Layer::Conv2d(l) => &l.params,
            Layer::Dense(l) => &l.params,
            _ => &[],
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Layer::BiLstm(l) => &mut l.params,
            Layer::Conv2d(l) => &mut l.params,
            Layer::Dense(l) => &mut l.params,
            _ => &mut [],
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        match self {
            Layer::BiLstm(l) => l.forward(input),
            Layer::Conv2d(l) => l.forward(input),
            Layer::Dense(l) => l.forward(input),
            Layer::LeakyRelu(a) => Ok(leaky_relu(input, *a)),
            Layer::Sigmoid => Ok(sigmoid(input)),
            Layer::Reshape(s) => input.clone().reshape(s.clone()),
        }
    }

    pub(crate) fn forward_cached(&self, input: Tensor) -> Result<(Tensor, Cache), NnError> {
        Ok(match self {
            Layer::BiLstm(l) => {
                let (out, tr) = l.forward_traced(&input)?;
                (out, Cache::Lstm(input, Box::new(tr)))
            }
            Layer::Sigmoid => {
                let out = sigmoid(&input);
                (out.clone(), Cache::Output(out))
            }
            Layer::Reshape(s) => {
                let shape = input.shape().to_vec();
                (input.reshape(s.clone())?, Cache::Shape(shape))
            }
            _ => (self.forward(&input)?, Cache::Input(input)),
        })
    }

    /// `params` false lets convolutions skip their parameter gradient.
    pub(crate) fn backward(&self, cache: &Cache, grad_out: &Tensor, params: bool) -> Result<(Tensor, Vec<f64>), NnError> {
        match (self, cache) {
            (Layer::BiLstm(l), Cache::Lstm(x, tr)) => l.backward(x, tr, grad_out),
            (Layer::Conv2d(l), Cache::Input(x)) => l.backward_parts(x, grad_out, params),
            (Layer::Dense(l), Cache::Input(x)) => l.backward(x, grad_out),
            (Layer::LeakyRelu(a), Cache::Input(x)) => {
                if x.shape() != grad_out.shape() {
                    return Err(shape_err(x.shape(), grad_out.shape()));
                }
                let data = x
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&xv, &g)| if xv >= 0.0 { g } else { a * g })
                    .collect();
                Ok((Tensor::from_parts(x.shape().to_vec(), data), Vec::new()))
            }
            (Layer::Sigmoid, Cache::Output(y)) => {
                if y.shape() != grad_out.shape() {
                    return Err(shape_err(y.shape(), grad_out.shape()));
                }
                let data = y
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&yv, &g)| g * yv * (1.0 - yv))
                    .collect();
                Ok((Tensor::from_parts(y.shape().to_vec(), data), Vec::new()))
            }
            (Layer::Reshape(_), Cache::Shape(s)) => Ok((grad_out.clone().reshape(s.clone())?, Vec::new())),
            _ => Err(NnError::NotRecorded),
        }
    }
}
