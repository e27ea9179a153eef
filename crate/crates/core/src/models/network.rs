//! From-scratch text classifiers over a flat parameter vector.
//!
//! Layout: `[embedding | encoder | head]`. Every block is a row-major
//! matrix addressed through a [`Span`]. The encoders (multi-width CNN,
//! stacked Elman RNN, stacked LSTM, mean+max pooling) map an embedded
//! sequence `T x E` to a feature vector; the head is dropout, a dense
//! layer and a softmax. Backward passes are hand-written and return the
//! gradient with respect to the embedded input so it can be scattered
//! into the embedding table.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

use crate::models::config::{ModelConfig, Topology};
use crate::models::vocab::PAD_ID;
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Span {
    off: usize,
    rows: usize,
    cols: usize,
}

impl Span {
    fn len(&self) -> usize {
        self.rows * self.cols
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.off..self.off + self.len()
    }

    fn mat<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &p[self.range()]).expect("span shape")
    }

    fn mat_mut<'a>(&self, p: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut p[self.range()]).expect("span shape")
    }

    fn vec<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[self.range()])
    }

    fn vec_mut<'a>(&self, p: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut p[self.range()])
    }
}

struct Allocator {
    next: usize,
}

impl Allocator {
    fn take(&mut self, rows: usize, cols: usize) -> Span {
        let s = Span {
            off: self.next,
            rows,
            cols,
        };
        self.next += rows * cols;
        s
    }
}

#[derive(Clone, Debug)]
struct ConvBranch {
    width: usize,
    w: Span,
    b: Span,
}

#[derive(Clone, Debug)]
struct RecurrentLayer {
    w: Span,
    u: Span,
    b: Span,
}

#[derive(Clone, Debug)]
enum Encoder {
    Cnn(Vec<ConvBranch>),
    Rnn(Vec<RecurrentLayer>),
    Lstm(Vec<RecurrentLayer>),
    Pooled,
}

#[derive(Clone, Debug)]
pub(crate) struct Network {
    emb_dim: usize,
    hidden: usize,
    num_classes: usize,
    feature_dim: usize,
    dropout: f64,
    embedding: Span,
    encoder: Encoder,
    head_w: Span,
    head_b: Span,
    n_params: usize,
}

enum EncoderCache {
    Cnn {
        windows: Vec<Array2<f64>>,
        argmax: Vec<Vec<usize>>,
        active: Vec<Vec<bool>>,
    },
    Rnn {
        inputs: Vec<Array2<f64>>,
        states: Vec<Array2<f64>>,
    },
    Lstm {
        inputs: Vec<Array2<f64>>,
        gates: Vec<Array2<f64>>,
        cells: Vec<Array2<f64>>,
        states: Vec<Array2<f64>>,
    },
    Pooled {
        argmax: Vec<usize>,
    },
}

/// Everything the backward pass needs from one forward pass.
pub(crate) struct Forward {
    input_rows: usize,
    cache: EncoderCache,
    mask: Option<Array1<f64>>,
    features: Array1<f64>,
    pub probs: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

impl Network {
    pub fn new(config: &ModelConfig, vocab_size: usize, num_classes: usize) -> Self {
        let e = config.embedding_dim;
        let mut a = Allocator { next: 0 };
        let embedding = a.take(vocab_size, e);
        let (encoder, feature_dim) = match config.topology {
            Topology::Cnn => {
                let branches = config
                    .conv_widths
                    .iter()
                    .map(|&w| ConvBranch {
                        width: w,
                        w: a.take(config.units, w * e),
                        b: a.take(1, config.units),
                    })
                    .collect::<Vec<_>>();
                let d = branches.len() * config.units;
                (Encoder::Cnn(branches), d)
            }
            Topology::Rnn | Topology::Lstm => {
                let gates = if config.topology == Topology::Lstm { 4 } else { 1 };
                let h = config.units;
                let layers = (0..config.layers)
                    .map(|l| {
                        let input = if l == 0 { e } else { h };
                        RecurrentLayer {
                            w: a.take(gates * h, input),
                            u: a.take(gates * h, h),
                            b: a.take(1, gates * h),
                        }
                    })
                    .collect();
                let enc = if gates == 4 {
                    Encoder::Lstm(layers)
                } else {
                    Encoder::Rnn(layers)
                };
                (enc, h)
            }
            Topology::Pretrained => (Encoder::Pooled, 2 * e),
        };
        let head_w = a.take(num_classes, feature_dim);
        let head_b = a.take(1, num_classes);
        Network {
            emb_dim: e,
            hidden: config.units,
            num_classes,
            feature_dim,
            dropout: config.dropout,
            embedding,
            encoder,
            head_w,
            head_b,
            n_params: a.next,
        }
    }

    pub fn num_params(&self) -> usize {
        self.n_params
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn embedding_range(&self) -> std::ops::Range<usize> {
        self.embedding.range()
    }

    /// Shortest sequence the encoder accepts; shorter inputs are padded.
    fn min_len(&self) -> usize {
        match &self.encoder {
            Encoder::Cnn(b) => b.iter().map(|b| b.width).max().unwrap_or(1),
            _ => 1,
        }
    }

    pub fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params];
        for v in &mut p[self.embedding.range()] {
            *v = 0.1 * rng::normal(rng);
        }
        for v in &mut p[self.embedding.off..self.embedding.off + self.emb_dim] {
            *v = 0.0;
        }
        let uniform = |rng: &mut Rng, a: f64| (2.0 * rng::unit(rng) - 1.0) * a;
        match &self.encoder {
            Encoder::Cnn(branches) => {
                for br in branches {
                    let std = (2.0 / br.w.cols as f64).sqrt();
                    for v in &mut p[br.w.range()] {
                        *v = std * rng::normal(rng);
                    }
                }
            }
            Encoder::Rnn(layers) | Encoder::Lstm(layers) => {
                let a = 1.0 / (self.hidden as f64).sqrt();
                for l in layers {
                    for v in &mut p[l.w.range()] {
                        *v = uniform(rng, a);
                    }
                    for v in &mut p[l.u.range()] {
                        *v = uniform(rng, a);
                    }
                }
                if let Encoder::Lstm(layers) = &self.encoder {
                    let h = self.hidden;
                    for l in layers {
                        for v in &mut p[l.b.off + h..l.b.off + 2 * h] {
                            *v = 1.0;
                        }
                    }
                }
            }
            Encoder::Pooled => {}
        }
        let a = (6.0 / (self.feature_dim + self.num_classes) as f64).sqrt();
        for v in &mut p[self.head_w.range()] {
            *v = uniform(rng, a);
        }
        p
    }

    /// Overwrites embedding rows (pretrained initialization).
    pub fn set_embedding_row(&self, p: &mut [f64], id: usize, values: &[f64]) {
        let e = self.emb_dim;
        let off = self.embedding.off + id * e;
        p[off..off + e].copy_from_slice(values);
    }

    fn padded_len(&self, n: usize) -> usize {
        n.max(self.min_len())
    }

    fn add_embedded(&self, p: &[f64], ids: &[u32], scale: f64, x: &mut Array2<f64>) {
        let table = self.embedding.mat(p);
        for (t, &id) in ids.iter().enumerate() {
            if id != PAD_ID {
                x.row_mut(t).scaled_add(scale, &table.row(id as usize));
            }
        }
    }

    pub fn embed(&self, p: &[f64], ids: &[u32]) -> Array2<f64> {
        let mut x = Array2::zeros((self.padded_len(ids.len()), self.emb_dim));
        self.add_embedded(p, ids, 1.0, &mut x);
        x
    }

    /// `(1 - lambda) * embed(a) + lambda * embed(b)`, aligned by position.
    pub fn embed_mix(&self, p: &[f64], a: &[u32], b: &[u32], lambda: f64) -> Array2<f64> {
        let mut x = Array2::zeros((self.padded_len(a.len().max(b.len())), self.emb_dim));
        self.add_embedded(p, a, 1.0 - lambda, &mut x);
        self.add_embedded(p, b, lambda, &mut x);
        x
    }

    pub fn scatter_embedding(&self, grad: &mut [f64], ids: &[u32], dx: &Array2<f64>, scale: f64) {
        let mut table = self.embedding.mat_mut(grad);
        for (t, &id) in ids.iter().enumerate() {
            if id != PAD_ID {
                table.row_mut(id as usize).scaled_add(scale, &dx.row(t));
            }
        }
    }

    /// Mean of the embedding rows of `ids` (pads skipped).
    pub fn mean_embedding(&self, p: &[f64], ids: &[u32]) -> Vec<f64> {
        let table = self.embedding.mat(p);
        let mut acc = Array1::<f64>::zeros(self.emb_dim);
        let mut n = 0;
        for &id in ids.iter().filter(|&&id| id != PAD_ID) {
            acc += &table.row(id as usize);
            n += 1;
        }
        if n > 0 {
            acc /= n as f64;
        }
        acc.to_vec()
    }

    pub fn forward(&self, p: &[f64], x: &Array2<f64>, dropout_rng: Option<&mut Rng>) -> Forward {
        let (features, cache) = match &self.encoder {
            Encoder::Cnn(branches) => self.cnn_forward(p, branches, x),
            Encoder::Rnn(layers) => self.rnn_forward(p, layers, x),
            Encoder::Lstm(layers) => self.lstm_forward(p, layers, x),
            Encoder::Pooled => pooled_forward(x),
        };
        let mask = match dropout_rng {
            Some(r) if self.dropout > 0.0 => {
                let keep = 1.0 - self.dropout;
                Some(Array1::from_iter((0..self.feature_dim).map(|_| {
                    if rng::unit(r) < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })))
            }
            _ => None,
        };
        let dropped = match &mask {
            Some(m) => &features * m,
            None => features.clone(),
        };
        let logits = self.head_w.mat(p).dot(&dropped) + self.head_b.vec(p);
        Forward {
            input_rows: x.nrows(),
            cache,
            mask,
            features: dropped,
            probs: softmax(logits.as_slice().expect("contiguous")),
        }
    }

    /// Accumulates parameter gradients into `grad` and returns the
    /// gradient with respect to the embedded input.
    pub fn backward(&self, p: &[f64], fwd: &Forward, dlogits: &[f64], grad: &mut [f64]) -> Array2<f64> {
        let dz = ArrayView1::from(dlogits);
        {
            let mut gw = self.head_w.mat_mut(grad);
            for (c, &d) in dlogits.iter().enumerate() {
                gw.row_mut(c).scaled_add(d, &fwd.features);
            }
        }
        self.head_b.vec_mut(grad).scaled_add(1.0, &dz);
        let mut dfeat = self.head_w.mat(p).t().dot(&dz);
        if let Some(m) = &fwd.mask {
            dfeat *= m;
        }
        match (&self.encoder, &fwd.cache) {
            (Encoder::Cnn(branches), EncoderCache::Cnn { windows, argmax, active }) => {
                self.cnn_backward(p, branches, windows, argmax, active, &dfeat, fwd.input_rows, grad)
            }
            (Encoder::Rnn(layers), EncoderCache::Rnn { inputs, states }) => {
                self.rnn_backward(p, layers, inputs, states, &dfeat, grad)
            }
            (Encoder::Lstm(layers), EncoderCache::Lstm { inputs, gates, cells, states }) => {
                self.lstm_backward(p, layers, inputs, gates, cells, states, &dfeat, grad)
            }
            (Encoder::Pooled, EncoderCache::Pooled { argmax }) => {
                pooled_backward(argmax, &dfeat, fwd.input_rows, self.emb_dim)
            }
            _ => unreachable!("cache does not match encoder"),
        }
    }

    // -- CNN ---------------------------------------------------------------

    fn cnn_forward(&self, p: &[f64], branches: &[ConvBranch], x: &Array2<f64>) -> (Array1<f64>, EncoderCache) {
        let e = self.emb_dim;
        let flat = x.as_slice().expect("standard layout");
        let mut features = Vec::with_capacity(self.feature_dim);
        let mut windows = Vec::with_capacity(branches.len());
        let mut argmax = Vec::with_capacity(branches.len());
        let mut active = Vec::with_capacity(branches.len());
        for br in branches {
            let positions = x.nrows() + 1 - br.width;
            let cols = br.width * e;
            let mut win = Array2::zeros((positions, cols));
            for pos in 0..positions {
                win.row_mut(pos)
                    .assign(&ArrayView1::from(&flat[pos * e..pos * e + cols]));
            }
            let mut z = win.dot(&br.w.mat(p).t());
            z += &br.b.vec(p);
            let mut am = Vec::with_capacity(z.ncols());
            let mut act = Vec::with_capacity(z.ncols());
            for col in z.axis_iter(Axis(1)) {
                let (best, val) = col
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
                am.push(best);
                act.push(val > 0.0);
                features.push(val.max(0.0));
            }
            windows.push(win);
            argmax.push(am);
            active.push(act);
        }
        (
            Array1::from(features),
            EncoderCache::Cnn {
                windows,
                argmax,
                active,
            },
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn cnn_backward(
        &self,
        p: &[f64],
        branches: &[ConvBranch],
        windows: &[Array2<f64>],
        argmax: &[Vec<usize>],
        active: &[Vec<bool>],
        dfeat: &Array1<f64>,
        rows: usize,
        grad: &mut [f64],
    ) -> Array2<f64> {
        let e = self.emb_dim;
        let mut dx = Array2::<f64>::zeros((rows, e));
        let mut offset = 0;
        for (bi, br) in branches.iter().enumerate() {
            let filters = br.w.rows;
            let w = br.w.mat(p);
            {
                let dxs = dx.as_slice_mut().expect("standard layout");
                for f in 0..filters {
                    let g = dfeat[offset + f];
                    if !active[bi][f] || g == 0.0 {
                        continue;
                    }
                    let pos = argmax[bi][f];
                    let seg = &mut dxs[pos * e..pos * e + br.width * e];
                    for (d, wv) in seg.iter_mut().zip(w.row(f)) {
                        *d += g * wv;
                    }
                }
            }
            let mut gw = br.w.mat_mut(grad);
            for f in 0..filters {
                let g = dfeat[offset + f];
                if active[bi][f] && g != 0.0 {
                    gw.row_mut(f).scaled_add(g, &windows[bi].row(argmax[bi][f]));
                }
            }
            let mut gb = br.b.vec_mut(grad);
            for f in 0..filters {
                if active[bi][f] {
                    gb[f] += dfeat[offset + f];
                }
            }
            offset += filters;
        }
        dx
    }

    // -- Elman RNN ---------------------------------------------------------

    fn rnn_forward(&self, p: &[f64], layers: &[RecurrentLayer], x: &Array2<f64>) -> (Array1<f64>, EncoderCache) {
        let h = self.hidden;
        let t_len = x.nrows();
        let mut inputs = Vec::with_capacity(layers.len());
        let mut states = Vec::with_capacity(layers.len());
        let mut current = x.clone();
        for l in layers {
            let mut pre = current.dot(&l.w.mat(p).t());
            pre += &l.b.vec(p);
            let u = l.u.mat(p);
            let mut hs = Array2::<f64>::zeros((t_len + 1, h));
            for t in 0..t_len {
                let a = &pre.row(t) + &u.dot(&hs.row(t));
                hs.row_mut(t + 1).assign(&a.mapv(f64::tanh));
            }
            inputs.push(current);
            current = hs.slice(s![1.., ..]).to_owned();
            states.push(hs);
        }
        let out = states.last().expect("at least one layer").row(t_len).to_owned();
        (out, EncoderCache::Rnn { inputs, states })
    }

    fn rnn_backward(
        &self,
        p: &[f64],
        layers: &[RecurrentLayer],
        inputs: &[Array2<f64>],
        states: &[Array2<f64>],
        dfeat: &Array1<f64>,
        grad: &mut [f64],
    ) -> Array2<f64> {
        let h = self.hidden;
        let t_len = inputs[0].nrows();
        let mut d_out = Array2::<f64>::zeros((t_len, h));
        d_out.row_mut(t_len - 1).assign(dfeat);
        for (li, l) in layers.iter().enumerate().rev() {
            let hs = &states[li];
            let u = l.u.mat(p);
            let mut da = Array2::<f64>::zeros((t_len, h));
            let mut carry = Array1::<f64>::zeros(h);
            for t in (0..t_len).rev() {
                let dh = &d_out.row(t) + &carry;
                let ht = hs.row(t + 1);
                let a = Array1::from_iter(dh.iter().zip(ht.iter()).map(|(d, y)| d * (1.0 - y * y)));
                carry = u.t().dot(&a);
                da.row_mut(t).assign(&a);
            }
            general_mat_mul(1.0, &da.t(), &inputs[li], 1.0, &mut l.w.mat_mut(grad));
            general_mat_mul(1.0, &da.t(), &hs.slice(s![..t_len, ..]), 1.0, &mut l.u.mat_mut(grad));
            l.b.vec_mut(grad).scaled_add(1.0, &da.sum_axis(Axis(0)));
            d_out = da.dot(&l.w.mat(p));
        }
        d_out
    }

    // -- LSTM --------------------------------------------------------------

    fn lstm_forward(&self, p: &[f64], layers: &[RecurrentLayer], x: &Array2<f64>) -> (Array1<f64>, EncoderCache) {
        let h = self.hidden;
        let t_len = x.nrows();
        let mut inputs = Vec::with_capacity(layers.len());
        let mut gates_all = Vec::with_capacity(layers.len());
        let mut cells_all = Vec::with_capacity(layers.len());
        let mut states = Vec::with_capacity(layers.len());
        let mut current = x.clone();
        for l in layers {
            let mut pre = current.dot(&l.w.mat(p).t());
            pre += &l.b.vec(p);
            let u = l.u.mat(p);
            let mut gates = Array2::<f64>::zeros((t_len, 4 * h));
            let mut cs = Array2::<f64>::zeros((t_len + 1, h));
            let mut hs = Array2::<f64>::zeros((t_len + 1, h));
            for t in 0..t_len {
                let a = &pre.row(t) + &u.dot(&hs.row(t));
                let mut g = gates.row_mut(t);
                for j in 0..h {
                    g[j] = sigmoid(a[j]);
                    g[h + j] = sigmoid(a[h + j]);
                    g[2 * h + j] = a[2 * h + j].tanh();
                    g[3 * h + j] = sigmoid(a[3 * h + j]);
                }
                for j in 0..h {
                    let c = g[h + j] * cs[[t, j]] + g[j] * g[2 * h + j];
                    cs[[t + 1, j]] = c;
                    hs[[t + 1, j]] = g[3 * h + j] * c.tanh();
                }
            }
            inputs.push(current);
            current = hs.slice(s![1.., ..]).to_owned();
            gates_all.push(gates);
            cells_all.push(cs);
            states.push(hs);
        }
        let out = states.last().expect("at least one layer").row(t_len).to_owned();
        (
            out,
            EncoderCache::Lstm {
                inputs,
                gates: gates_all,
                cells: cells_all,
                states,
            },
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        p: &[f64],
        layers: &[RecurrentLayer],
        inputs: &[Array2<f64>],
        gates: &[Array2<f64>],
        cells: &[Array2<f64>],
        states: &[Array2<f64>],
        dfeat: &Array1<f64>,
        grad: &mut [f64],
    ) -> Array2<f64> {
        let h = self.hidden;
        let t_len = inputs[0].nrows();
        let mut d_out = Array2::<f64>::zeros((t_len, h));
        d_out.row_mut(t_len - 1).assign(dfeat);
        for (li, l) in layers.iter().enumerate().rev() {
            let (g_all, cs, hs) = (&gates[li], &cells[li], &states[li]);
            let u = l.u.mat(p);
            let mut da = Array2::<f64>::zeros((t_len, 4 * h));
            let mut dh_next = Array1::<f64>::zeros(h);
            let mut dc_next = Array1::<f64>::zeros(h);
            for t in (0..t_len).rev() {
                let g = g_all.row(t);
                let mut row = da.row_mut(t);
                for j in 0..h {
                    let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let c = cs[[t + 1, j]];
                    let tc = c.tanh();
                    let dh = d_out[[t, j]] + dh_next[j];
                    let d_o = dh * tc;
                    let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                    let d_i = dc * gg;
                    let d_g = dc * i;
                    let d_f = dc * cs[[t, j]];
                    dc_next[j] = dc * f;
                    row[j] = d_i * i * (1.0 - i);
                    row[h + j] = d_f * f * (1.0 - f);
                    row[2 * h + j] = d_g * (1.0 - gg * gg);
                    row[3 * h + j] = d_o * o * (1.0 - o);
                }
                dh_next = u.t().dot(&da.row(t));
            }
            general_mat_mul(1.0, &da.t(), &inputs[li], 1.0, &mut l.w.mat_mut(grad));
            general_mat_mul(1.0, &da.t(), &hs.slice(s![..t_len, ..]), 1.0, &mut l.u.mat_mut(grad));
            l.b.vec_mut(grad).scaled_add(1.0, &da.sum_axis(Axis(0)));
            d_out = da.dot(&l.w.mat(p));
        }
        d_out
    }
}

// -- mean + max pooling ------------------------------------------------------

fn pooled_forward(x: &Array2<f64>) -> (Array1<f64>, EncoderCache) {
    let e = x.ncols();
    let mean = x.mean_axis(Axis(0)).expect("non-empty input");
    let mut argmax = Vec::with_capacity(e);
    let mut maxes = Vec::with_capacity(e);
    for col in x.axis_iter(Axis(1)) {
        let (bi, bv) = col
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        argmax.push(bi);
        maxes.push(bv);
    }
    let mut features = mean.to_vec();
    features.extend(maxes);
    (Array1::from(features), EncoderCache::Pooled { argmax })
}

fn pooled_backward(argmax: &[usize], dfeat: &Array1<f64>, rows: usize, e: usize) -> Array2<f64> {
    let mut dx = Array2::<f64>::zeros((rows, e));
    let inv = 1.0 / rows as f64;
    for j in 0..e {
        for t in 0..rows {
            dx[[t, j]] += dfeat[j] * inv;
        }
        dx[[argmax[j], j]] += dfeat[e + j];
    }
    dx
}
