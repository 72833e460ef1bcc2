//! Dense layers with hand-written reverse-mode gradients.
//!
//! Layers do not own their weights. Each one holds indices into a
//! [`ParamSet`], so the whole model is a flat, addressable list of named
//! tensors and gradients live in a second `ParamSet` of the same layout.
//! Sequences are `Vec<Vec<f64>>`, one row per position.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let len = shape.iter().product();
        self.tensors.push(Tensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: vec![0.0; len],
        });
        self.tensors.len() - 1
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![0.0; t.data.len()],
                })
                .collect(),
        }
    }

    pub fn data(&self, idx: usize) -> &[f64] {
        &self.tensors[idx].data
    }

    pub fn data_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.tensors[idx].data
    }

    pub fn find(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (i, t) in self.tensors.iter().enumerate() {
            if flat < t.data.len() {
                return (i, flat);
            }
            flat -= t.data.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn get_flat(&self, flat: usize) -> f64 {
        let (t, i) = self.locate(flat);
        self.tensors[t].data[i]
    }

    pub fn set_flat(&mut self, flat: usize, value: f64) {
        let (t, i) = self.locate(flat);
        self.tensors[t].data[i] = value;
    }

    /// Name and in-tensor offset of a flat index.
    pub fn describe_flat(&self, flat: usize) -> (String, usize) {
        let (t, i) = self.locate(flat);
        (self.tensors[t].name.clone(), i)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn fill_uniform<R: Rng>(&mut self, idx: usize, bound: f64, rng: &mut R) {
        for v in self.data_mut(idx) {
            *v = rng.gen_range(-bound..=bound);
        }
    }

    pub fn fill(&mut self, idx: usize, value: f64) {
        self.data_mut(idx).iter_mut().for_each(|v| *v = value);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y = W x + b` with `W` stored row-major `[out, in]`.
fn affine(w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    let inp = x.len();
    for (o, yo) in y.iter_mut().enumerate() {
        let row = &w[o * inp..(o + 1) * inp];
        *yo = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// `dx += W^T dy`, `dW += dy x^T`.
fn affine_backward(w: &[f64], dw: &mut [f64], x: &[f64], dy: &[f64], dx: &mut [f64]) {
    let inp = x.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[o * inp..(o + 1) * inp];
        let drow = &mut dw[o * inp..(o + 1) * inp];
        for i in 0..inp {
            dx[i] += row[i] * g;
            drow[i] += g * x[i];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    pub fn register(ps: &mut ParamSet, name: &str, inp: usize, out: usize) -> Self {
        Linear {
            w: ps.push(format!("{name}.weight"), &[out, inp]),
            b: ps.push(format!("{name}.bias"), &[out]),
            inp,
            out,
        }
    }

    pub fn init<R: Rng>(&self, ps: &mut ParamSet, rng: &mut R) {
        let bound = 1.0 / (self.inp as f64).sqrt();
        ps.fill_uniform(self.w, bound, rng);
        ps.fill_uniform(self.b, bound, rng);
    }

    pub fn forward(&self, ps: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.out];
        affine(ps.data(self.w), ps.data(self.b), x, &mut y);
        y
    }

    pub fn forward_seq(&self, ps: &ParamSet, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.forward(ps, x)).collect()
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, ps: &ParamSet, grads: &mut ParamSet, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.inp];
        affine_backward(ps.data(self.w), grads.data_mut(self.w), x, dy, &mut dx);
        for (db, g) in grads.data_mut(self.b).iter_mut().zip(dy) {
            *db += g;
        }
        dx
    }

    pub fn backward_seq(
        &self,
        ps: &ParamSet,
        grads: &mut ParamSet,
        xs: &[Vec<f64>],
        dys: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        xs.iter()
            .zip(dys)
            .map(|(x, dy)| self.backward(ps, grads, x, dy))
            .collect()
    }
}

/// Unidirectional LSTM, gates stacked as (input, forget, cell, output).
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub w_ih: usize,
    pub w_hh: usize,
    pub b: usize,
    pub inp: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    xs: Vec<Vec<f64>>,
    /// `hs[0]` and `cs[0]` are the zero initial state.
    hs: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    /// Post-activation gates per step, `4 * hidden`.
    gates: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
}

impl Lstm {
    pub fn register(ps: &mut ParamSet, name: &str, inp: usize, hidden: usize) -> Self {
        Lstm {
            w_ih: ps.push(format!("{name}.weight_ih"), &[4 * hidden, inp]),
            w_hh: ps.push(format!("{name}.weight_hh"), &[4 * hidden, hidden]),
            b: ps.push(format!("{name}.bias"), &[4 * hidden]),
            inp,
            hidden,
        }
    }

    pub fn init<R: Rng>(&self, ps: &mut ParamSet, rng: &mut R) {
        let bound = 1.0 / (self.hidden as f64).sqrt();
        ps.fill_uniform(self.w_ih, bound, rng);
        ps.fill_uniform(self.w_hh, bound, rng);
        ps.fill_uniform(self.b, bound, rng);
    }

    pub fn forward(&self, ps: &ParamSet, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, LstmCache) {
        let h = self.hidden;
        let (w_ih, w_hh, b) = (ps.data(self.w_ih), ps.data(self.w_hh), ps.data(self.b));
        let mut cache = LstmCache {
            xs: xs.to_vec(),
            hs: vec![vec![0.0; h]],
            cs: vec![vec![0.0; h]],
            gates: Vec::with_capacity(xs.len()),
            tanh_c: Vec::with_capacity(xs.len()),
        };
        let mut z = vec![0.0; 4 * h];
        let mut zh = vec![0.0; 4 * h];
        let zero = vec![0.0; 4 * h];
        for x in xs {
            affine(w_ih, b, x, &mut z);
            affine(w_hh, &zero, cache.hs.last().expect("initial state"), &mut zh);
            let c_prev = cache.cs.last().expect("initial state");
            let mut gates = vec![0.0; 4 * h];
            let mut c = vec![0.0; h];
            let mut tc = vec![0.0; h];
            let mut hn = vec![0.0; h];
            for j in 0..h {
                let i_g = sigmoid(z[j] + zh[j]);
                let f_g = sigmoid(z[h + j] + zh[h + j]);
                let g_g = (z[2 * h + j] + zh[2 * h + j]).tanh();
                let o_g = sigmoid(z[3 * h + j] + zh[3 * h + j]);
                c[j] = f_g * c_prev[j] + i_g * g_g;
                tc[j] = c[j].tanh();
                hn[j] = o_g * tc[j];
                gates[j] = i_g;
                gates[h + j] = f_g;
                gates[2 * h + j] = g_g;
                gates[3 * h + j] = o_g;
            }
            cache.gates.push(gates);
            cache.cs.push(c);
            cache.tanh_c.push(tc);
            cache.hs.push(hn);
        }
        (cache.hs[1..].to_vec(), cache)
    }

    /// Backpropagation through time given `dL/dh_t` for every step.
    pub fn backward(
        &self,
        ps: &ParamSet,
        grads: &mut ParamSet,
        cache: &LstmCache,
        dhs: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let h = self.hidden;
        let steps = cache.xs.len();
        let mut dxs = vec![vec![0.0; self.inp]; steps];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let gates = &cache.gates[t];
            let c_prev = &cache.cs[t];
            let tc = &cache.tanh_c[t];
            for j in 0..h {
                let (i_g, f_g, g_g, o_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let dh = dhs[t][j] + dh_next[j];
                let dc = dc_next[j] + dh * o_g * (1.0 - tc[j] * tc[j]);
                dz[j] = dc * g_g * i_g * (1.0 - i_g);
                dz[h + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
                dz[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
                dz[3 * h + j] = dh * tc[j] * o_g * (1.0 - o_g);
                dc_next[j] = dc * f_g;
            }
            affine_backward(
                ps.data(self.w_ih),
                grads.data_mut(self.w_ih),
                &cache.xs[t],
                &dz,
                &mut dxs[t],
            );
            let mut dh_prev = vec![0.0; h];
            affine_backward(
                ps.data(self.w_hh),
                grads.data_mut(self.w_hh),
                &cache.hs[t],
                &dz,
                &mut dh_prev,
            );
            for (db, g) in grads.data_mut(self.b).iter_mut().zip(&dz) {
                *db += g;
            }
            dh_next = dh_prev;
        }
        dxs
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: usize,
    pub bias: usize,
    pub dim: usize,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn register(ps: &mut ParamSet, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: ps.push(format!("{name}.gain"), &[dim]),
            bias: ps.push(format!("{name}.bias"), &[dim]),
            dim,
        }
    }

    pub fn init(&self, ps: &mut ParamSet) {
        ps.fill(self.gain, 1.0);
        ps.fill(self.bias, 0.0);
    }

    pub fn forward(&self, ps: &ParamSet, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, LayerNormCache) {
        let (g, b) = (ps.data(self.gain), ps.data(self.bias));
        let n = self.dim as f64;
        let mut cache = LayerNormCache {
            xhat: Vec::with_capacity(xs.len()),
            inv_std: Vec::with_capacity(xs.len()),
        };
        let ys = xs
            .iter()
            .map(|x| {
                let mean = x.iter().sum::<f64>() / n;
                let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv).collect();
                let y = xhat.iter().zip(g.iter().zip(b)).map(|(xh, (gg, bb))| xh * gg + bb).collect();
                cache.xhat.push(xhat);
                cache.inv_std.push(inv);
                y
            })
            .collect();
        (ys, cache)
    }

    pub fn backward(
        &self,
        ps: &ParamSet,
        grads: &mut ParamSet,
        cache: &LayerNormCache,
        dys: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let g = ps.data(self.gain).to_vec();
        let n = self.dim as f64;
        let mut dxs = Vec::with_capacity(dys.len());
        for ((dy, xhat), &inv) in dys.iter().zip(&cache.xhat).zip(&cache.inv_std) {
            {
                let dg = grads.data_mut(self.gain);
                for k in 0..self.dim {
                    dg[k] += dy[k] * xhat[k];
                }
            }
            {
                let db = grads.data_mut(self.bias);
                for k in 0..self.dim {
                    db[k] += dy[k];
                }
            }
            let dxhat: Vec<f64> = dy.iter().zip(&g).map(|(a, b)| a * b).collect();
            let mean_d = dxhat.iter().sum::<f64>() / n;
            let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
            dxs.push(
                dxhat
                    .iter()
                    .zip(xhat)
                    .map(|(d, xh)| inv * (d - mean_d - xh * mean_dx))
                    .collect(),
            );
        }
        dxs
    }
}

/// Scaled dot-product attention with queries from one sequence and keys and
/// values from another. With `out_proj == None` the heads are concatenated
/// directly.
#[derive(Debug, Clone)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out_proj: Option<Linear>,
    pub heads: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    xq: Vec<Vec<f64>>,
    xkv: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// `weights[head][query][key]`
    pub weights: Vec<Vec<Vec<f64>>>,
    concat: Vec<Vec<f64>>,
}

impl Attention {
    pub fn register(ps: &mut ParamSet, name: &str, dim: usize, heads: usize, out_proj: bool) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim must divide into heads");
        Attention {
            query: Linear::register(ps, &format!("{name}.query"), dim, dim),
            key: Linear::register(ps, &format!("{name}.key"), dim, dim),
            value: Linear::register(ps, &format!("{name}.value"), dim, dim),
            out_proj: out_proj.then(|| Linear::register(ps, &format!("{name}.out"), dim, dim)),
            heads,
            dim,
        }
    }

    pub fn init<R: Rng>(&self, ps: &mut ParamSet, rng: &mut R) {
        self.query.init(ps, rng);
        self.key.init(ps, rng);
        self.value.init(ps, rng);
        if let Some(o) = &self.out_proj {
            o.init(ps, rng);
        }
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn forward(&self, ps: &ParamSet, xq: &[Vec<f64>], xkv: &[Vec<f64>]) -> (Vec<Vec<f64>>, AttentionCache) {
        let q = self.query.forward_seq(ps, xq);
        let k = self.key.forward_seq(ps, xkv);
        let v = self.value.forward_seq(ps, xkv);
        let hd = self.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut concat = vec![vec![0.0; self.dim]; xq.len()];
        let mut weights = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let r = head * hd..(head + 1) * hd;
            let mut hw = Vec::with_capacity(xq.len());
            for (qi, qrow) in q.iter().enumerate() {
                let scores: Vec<f64> = k
                    .iter()
                    .map(|krow| scale * qrow[r.clone()].iter().zip(&krow[r.clone()]).map(|(a, b)| a * b).sum::<f64>())
                    .collect();
                let w = softmax(&scores);
                for (wj, vrow) in w.iter().zip(&v) {
                    for (c, vv) in concat[qi][r.clone()].iter_mut().zip(&vrow[r.clone()]) {
                        *c += wj * vv;
                    }
                }
                hw.push(w);
            }
            weights.push(hw);
        }
        let out = match &self.out_proj {
            Some(o) => o.forward_seq(ps, &concat),
            None => concat.clone(),
        };
        let cache = AttentionCache {
            xq: xq.to_vec(),
            xkv: xkv.to_vec(),
            q,
            k,
            v,
            weights,
            concat,
        };
        (out, cache)
    }

    /// Returns `(dL/dxq, dL/dxkv)`.
    pub fn backward(
        &self,
        ps: &ParamSet,
        grads: &mut ParamSet,
        cache: &AttentionCache,
        dout: &[Vec<f64>],
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let dconcat = match &self.out_proj {
            Some(o) => o.backward_seq(ps, grads, &cache.concat, dout),
            None => dout.to_vec(),
        };
        let hd = self.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let nq = cache.q.len();
        let nk = cache.k.len();
        let mut dq = vec![vec![0.0; self.dim]; nq];
        let mut dk = vec![vec![0.0; self.dim]; nk];
        let mut dv = vec![vec![0.0; self.dim]; nk];
        for head in 0..self.heads {
            let r = head * hd..(head + 1) * hd;
            for qi in 0..nq {
                let w = &cache.weights[head][qi];
                let dctx = &dconcat[qi][r.clone()];
                // dL/dw_j = dctx . v_j
                let dw: Vec<f64> = cache
                    .v
                    .iter()
                    .map(|vrow| dctx.iter().zip(&vrow[r.clone()]).map(|(a, b)| a * b).sum())
                    .collect();
                let dot: f64 = dw.iter().zip(w).map(|(a, b)| a * b).sum();
                for j in 0..nk {
                    for (d, g) in dv[j][r.clone()].iter_mut().zip(dctx) {
                        *d += w[j] * g;
                    }
                    let ds = w[j] * (dw[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in r.clone() {
                        dq[qi][c] += ds * cache.k[j][c];
                        dk[j][c] += ds * cache.q[qi][c];
                    }
                }
            }
        }
        let dxq = self.query.backward_seq(ps, grads, &cache.xq, &dq);
        let mut dxkv = self.key.backward_seq(ps, grads, &cache.xkv, &dk);
        let dxv = self.value.backward_seq(ps, grads, &cache.xkv, &dv);
        add_seq(&mut dxkv, &dxv);
        (dxq, dxkv)
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn add_seq(acc: &mut [Vec<f64>], other: &[Vec<f64>]) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}

/// Position-wise two-layer ReLU network.
#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    xs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
}

impl FeedForward {
    pub fn register(ps: &mut ParamSet, name: &str, dim: usize, inner: usize) -> Self {
        FeedForward {
            up: Linear::register(ps, &format!("{name}.up"), dim, inner),
            down: Linear::register(ps, &format!("{name}.down"), inner, dim),
        }
    }

    pub fn init<R: Rng>(&self, ps: &mut ParamSet, rng: &mut R) {
        self.up.init(ps, rng);
        self.down.init(ps, rng);
    }

    pub fn forward(&self, ps: &ParamSet, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, FeedForwardCache) {
        let pre = self.up.forward_seq(ps, xs);
        let act: Vec<Vec<f64>> = pre.iter().map(|p| p.iter().map(|v| v.max(0.0)).collect()).collect();
        let out = self.down.forward_seq(ps, &act);
        (
            out,
            FeedForwardCache {
                xs: xs.to_vec(),
                pre,
                act,
            },
        )
    }

    pub fn backward(
        &self,
        ps: &ParamSet,
        grads: &mut ParamSet,
        cache: &FeedForwardCache,
        dys: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let dact = self.down.backward_seq(ps, grads, &cache.act, dys);
        let dpre: Vec<Vec<f64>> = dact
            .iter()
            .zip(&cache.pre)
            .map(|(d, p)| d.iter().zip(p).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect())
            .collect();
        self.up.backward_seq(ps, grads, &cache.xs, &dpre)
    }
}

/// Pre-norm encoder block: `x + attn(ln(x))`, then `h + ffn(ln(h))`.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub norm_attn: LayerNorm,
    pub attn: Attention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

#[derive(Debug, Clone)]
pub struct EncoderLayerCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    ff: FeedForwardCache,
}

impl EncoderLayer {
    pub fn register(ps: &mut ParamSet, name: &str, dim: usize, heads: usize, inner: usize) -> Self {
        EncoderLayer {
            norm_attn: LayerNorm::register(ps, &format!("{name}.norm_attn"), dim),
            attn: Attention::register(ps, &format!("{name}.attn"), dim, heads, true),
            norm_ff: LayerNorm::register(ps, &format!("{name}.norm_ff"), dim),
            ff: FeedForward::register(ps, &format!("{name}.ff"), dim, inner),
        }
    }

    pub fn init<R: Rng>(&self, ps: &mut ParamSet, rng: &mut R) {
        self.norm_attn.init(ps);
        self.attn.init(ps, rng);
        self.norm_ff.init(ps);
        self.ff.init(ps, rng);
    }

    pub fn forward(&self, ps: &ParamSet, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, EncoderLayerCache) {
        let (z1, ln1) = self.norm_attn.forward(ps, xs);
        let (a, attn) = self.attn.forward(ps, &z1, &z1);
        let mut h = xs.to_vec();
        add_seq(&mut h, &a);
        let (z2, ln2) = self.norm_ff.forward(ps, &h);
        let (f, ff) = self.ff.forward(ps, &z2);
        let mut y = h;
        add_seq(&mut y, &f);
        (y, EncoderLayerCache { ln1, attn, ln2, ff })
    }

    pub fn backward(
        &self,
        ps: &ParamSet,
        grads: &mut ParamSet,
        cache: &EncoderLayerCache,
        dys: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let dz2 = self.ff.backward(ps, grads, &cache.ff, dys);
        let mut dh = dys.to_vec();
        add_seq(&mut dh, &self.norm_ff.backward(ps, grads, &cache.ln2, &dz2));
        let (dq, dkv) = self.attn.backward(ps, grads, &cache.attn, &dh);
        let mut dz1 = dq;
        add_seq(&mut dz1, &dkv);
        let mut dx = dh;
        add_seq(&mut dx, &self.norm_attn.backward(ps, grads, &cache.ln1, &dz1));
        dx
    }
}

/// Sinusoidal position code for position `pos`.
pub fn positional_encoding(pos: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(2.0 * pair / dim as f64);
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Input projection, optional position code, encoder blocks and a final norm.
#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    pub input: Linear,
    pub layers: Vec<EncoderLayer>,
    pub final_norm: LayerNorm,
    pub positional: bool,
}

#[derive(Debug, Clone)]
pub struct TransformerCache {
    xs: Vec<Vec<f64>>,
    layers: Vec<EncoderLayerCache>,
    final_norm: LayerNormCache,
}

impl TransformerEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn register(
        ps: &mut ParamSet,
        name: &str,
        inp: usize,
        dim: usize,
        depth: usize,
        heads: usize,
        inner: usize,
        positional: bool,
    ) -> Self {
        let input = Linear::register(ps, &format!("{name}.input"), inp, dim);
        let layers = (0..depth)
            .map(|l| EncoderLayer::register(ps, &format!("{name}.layer{l}"), dim, heads, inner))
            .collect();
        TransformerEncoder {
            input,
            layers,
            final_norm: LayerNorm::register(ps, &format!("{name}.final_norm"), dim),
            positional,
        }
    }

    pub fn init<R: Rng>(&self, ps: &mut ParamSet, rng: &mut R) {
        self.input.init(ps, rng);
        for l in &self.layers {
            l.init(ps, rng);
        }
        self.final_norm.init(ps);
    }

    pub fn forward(&self, ps: &ParamSet, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, TransformerCache) {
        let mut h = self.input.forward_seq(ps, xs);
        if self.positional {
            for (pos, row) in h.iter_mut().enumerate() {
                for (v, p) in row.iter_mut().zip(positional_encoding(pos, self.input.out)) {
                    *v += p;
                }
            }
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, c) = layer.forward(ps, &h);
            caches.push(c);
            h = next;
        }
        let (out, final_norm) = self.final_norm.forward(ps, &h);
        (
            out,
            TransformerCache {
                xs: xs.to_vec(),
                layers: caches,
                final_norm,
            },
        )
    }

    pub fn backward(
        &self,
        ps: &ParamSet,
        grads: &mut ParamSet,
        cache: &TransformerCache,
        dys: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let mut dh = self.final_norm.backward(ps, grads, &cache.final_norm, dys);
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            dh = layer.backward(ps, grads, c, &dh);
        }
        self.input.backward_seq(ps, grads, &cache.xs, &dh)
    }
}
