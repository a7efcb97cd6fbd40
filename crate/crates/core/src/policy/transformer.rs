//! Pre-LayerNorm causal transformer with learned positional embeddings,
//! GELU (tanh form) MLPs and an untied output head. Weight matrices are
//! stored `[in, out]` row-major so the forward pass is a sequence of
//! contiguous axpy updates. Training-time and decode-time forward passes
//! share the per-row kernels, so cached decoding reproduces full-sequence
//! logits bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_pair, log_softmax, Cursor, Policy, PolicyError, PolicyParams, Vocabulary};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ctx: usize,
    /// Weights are drawn from U(-init_scale, init_scale) / sqrt(fan_in).
    pub init_scale: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self { d_model: 64, n_layers: 2, n_heads: 4, ctx: 256, init_scale: 0.05 }
    }
}

impl TransformerConfig {
    /// A configuration small enough (under 2k parameters) for exhaustive
    /// finite-difference checks.
    pub fn tiny() -> Self {
        Self { d_model: 8, n_layers: 1, n_heads: 2, ctx: 32, init_scale: 0.05 }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.into()));
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.ctx == 0 {
            return bad("transformer dimensions must be positive");
        }
        if self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    b_qkv: usize,
    w_o: usize,
    b_o: usize,
    ln2_g: usize,
    ln2_b: usize,
    w_fc: usize,
    b_fc: usize,
    w_fc2: usize,
    b_fc2: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    d: usize,
    ff: usize,
    v: usize,
    heads: usize,
    wte: usize,
    wpe: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    w_head: usize,
    b_head: usize,
}

fn build_params(cfg: &TransformerConfig, v: usize) -> (PolicyParams, Layout) {
    let d = cfg.d_model;
    let ff = 4 * d;
    let mut shapes: Vec<(String, Vec<usize>)> = vec![("wte".into(), vec![v, d]), ("wpe".into(), vec![cfg.ctx, d])];
    for l in 0..cfg.n_layers {
        for (n, s) in [
            ("ln1_g", vec![d]),
            ("ln1_b", vec![d]),
            ("w_qkv", vec![d, 3 * d]),
            ("b_qkv", vec![3 * d]),
            ("w_o", vec![d, d]),
            ("b_o", vec![d]),
            ("ln2_g", vec![d]),
            ("ln2_b", vec![d]),
            ("w_fc", vec![d, ff]),
            ("b_fc", vec![ff]),
            ("w_fc2", vec![ff, d]),
            ("b_fc2", vec![d]),
        ] {
            shapes.push((format!("h{l}.{n}"), s));
        }
    }
    for (n, s) in [("lnf_g", vec![d]), ("lnf_b", vec![d]), ("w_head", vec![d, v]), ("b_head", vec![v])] {
        shapes.push((n.into(), s));
    }
    let named: Vec<(&str, Vec<usize>)> = shapes.iter().map(|(n, s)| (n.as_str(), s.clone())).collect();
    let params = PolicyParams::from_shapes(&named);
    let off = |name: &str| params.block(name).expect("block exists").offset;
    let layers = (0..cfg.n_layers)
        .map(|l| {
            let o = |n: &str| off(&format!("h{l}.{n}"));
            LayerOffsets {
                ln1_g: o("ln1_g"),
                ln1_b: o("ln1_b"),
                w_qkv: o("w_qkv"),
                b_qkv: o("b_qkv"),
                w_o: o("w_o"),
                b_o: o("b_o"),
                ln2_g: o("ln2_g"),
                ln2_b: o("ln2_b"),
                w_fc: o("w_fc"),
                b_fc: o("b_fc"),
                w_fc2: o("w_fc2"),
                b_fc2: o("b_fc2"),
            }
        })
        .collect();
    let layout = Layout {
        d,
        ff,
        v,
        heads: cfg.n_heads,
        wte: off("wte"),
        wpe: off("wpe"),
        layers,
        lnf_g: off("lnf_g"),
        lnf_b: off("lnf_b"),
        w_head: off("w_head"),
        b_head: off("b_head"),
    };
    (params, layout)
}

#[derive(Clone, Debug)]
pub struct TinyTransformer {
    vocab: Vocabulary,
    config: TransformerConfig,
    params: PolicyParams,
    layout: Layout,
}

impl TinyTransformer {
    pub fn new(vocab: Vocabulary, config: TransformerConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let (mut params, layout) = build_params(&config, vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = config.init_scale;
        for block in &params.blocks.clone() {
            let name = block.name.rsplit('.').next().unwrap_or(&block.name);
            let range = block.range();
            if name.ends_with("_g") {
                params.values[range].fill(1.0);
            } else if name.starts_with("b_") || name.ends_with("_b") {
                continue;
            } else {
                // Embedding tables have no fan-in; matrices are [in, out].
                let fan_in = if name == "wte" || name == "wpe" { 1 } else { block.shape[0] };
                let scale = s / (fan_in as f64).sqrt();
                for v in &mut params.values[range] {
                    *v = rng.gen_range(-scale..scale);
                }
            }
        }
        Ok(Self { vocab, config, params, layout })
    }

    pub(crate) fn from_parts(vocab: Vocabulary, config: TransformerConfig, values: Vec<f64>) -> Result<Self, PolicyError> {
        config.validate()?;
        let (mut params, layout) = build_params(&config, vocab.len());
        if values.len() != params.len() {
            return Err(PolicyError::Checkpoint(format!(
                "expected {} transformer parameters, found {}",
                params.len(),
                values.len()
            )));
        }
        params.values = values;
        Ok(Self { vocab, config, params, layout })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    /// Next-token logits at every position of `tokens`.
    pub fn logits_all(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>, PolicyError> {
        self.vocab.check(tokens)?;
        if tokens.is_empty() || tokens.len() > self.config.ctx {
            return Err(PolicyError::ContextOverflow { len: tokens.len(), ctx: self.config.ctx });
        }
        let cache = forward(&self.layout, &self.params.values, tokens);
        let (d, v) = (self.layout.d, self.layout.v);
        Ok((0..tokens.len())
            .map(|t| {
                let mut row = vec![0.0; v];
                head_row(&self.layout, &self.params.values, &cache.fin[t * d..(t + 1) * d], &mut row);
                row
            })
            .collect())
    }
}

impl Policy for TinyTransformer {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn params(&self) -> &PolicyParams {
        &self.params
    }

    fn params_mut(&mut self) -> &mut PolicyParams {
        &mut self.params
    }

    fn token_logprobs(&self, x: &[u32], y: &[u32]) -> Result<Vec<f64>, PolicyError> {
        check_pair(self, x, y)?;
        let input = [x, &y[..y.len() - 1]].concat();
        let cache = forward(&self.layout, &self.params.values, &input);
        let (d, v) = (self.layout.d, self.layout.v);
        let mut logits = vec![0.0; v];
        Ok(y.iter()
            .enumerate()
            .map(|(j, &tok)| {
                let p = x.len() - 1 + j;
                head_row(&self.layout, &self.params.values, &cache.fin[p * d..(p + 1) * d], &mut logits);
                log_softmax(&logits)[tok as usize]
            })
            .collect())
    }

    fn accumulate_grad(&self, x: &[u32], y: &[u32], coef: f64, grad: &mut [f64]) -> Result<f64, PolicyError> {
        check_pair(self, x, y)?;
        let input = [x, &y[..y.len() - 1]].concat();
        let w = &self.params.values;
        let lay = &self.layout;
        let (d, v) = (lay.d, lay.v);
        let t_len = input.len();
        let cache = forward(lay, w, &input);

        // Head and loss gradient at the prediction positions.
        let mut dfin = vec![0.0; t_len * d];
        let mut logits = vec![0.0; v];
        let mut total = 0.0;
        for (j, &tok) in y.iter().enumerate() {
            let p = x.len() - 1 + j;
            let f = &cache.fin[p * d..(p + 1) * d];
            head_row(lay, w, f, &mut logits);
            let lp = log_softmax(&logits);
            total += lp[tok as usize];
            let mut dl: Vec<f64> = lp.iter().map(|l| -coef * l.exp()).collect();
            dl[tok as usize] += coef;
            linear_bwd_row(f, &w[lay.w_head..lay.w_head + d * v], &dl, d, v, &mut dfin[p * d..(p + 1) * d], grad, lay.w_head, lay.b_head);
        }
        let mut dh = vec![0.0; t_len * d];
        layernorm_bwd(&cache.last_h, &cache.lnf, w, lay.lnf_g, &dfin, d, grad, lay.lnf_g, lay.lnf_b, &mut dh);

        for (l, lo) in lay.layers.iter().enumerate().rev() {
            let c = &cache.layers[l];
            // MLP block: h2 = h1 + gelu(ln2(h1) W_fc + b_fc) W_fc2 + b_fc2
            let mut dg = vec![0.0; t_len * lay.ff];
            linear_bwd(&c.gelu, &w[lo.w_fc2..lo.w_fc2 + lay.ff * d], &dh, lay.ff, d, &mut dg, grad, lo.w_fc2, lo.b_fc2);
            for (g, u) in dg.iter_mut().zip(&c.pre) {
                *g *= gelu_grad(*u);
            }
            let mut dln2 = vec![0.0; t_len * d];
            linear_bwd(&c.ln2.out, &w[lo.w_fc..lo.w_fc + d * lay.ff], &dg, d, lay.ff, &mut dln2, grad, lo.w_fc, lo.b_fc);
            let mut dh1 = dh.clone();
            layernorm_bwd(&c.h1, &c.ln2, w, lo.ln2_g, &dln2, d, grad, lo.ln2_g, lo.ln2_b, &mut dh1);

            // Attention block: h1 = h + attn(ln1(h)) W_o + b_o
            let mut datt = vec![0.0; t_len * d];
            linear_bwd(&c.att, &w[lo.w_o..lo.w_o + d * d], &dh1, d, d, &mut datt, grad, lo.w_o, lo.b_o);
            let mut dqkv = vec![0.0; t_len * 3 * d];
            attention_bwd(lay, c, &datt, t_len, &mut dqkv);
            let mut dln1 = vec![0.0; t_len * d];
            linear_bwd(&c.ln1.out, &w[lo.w_qkv..lo.w_qkv + d * 3 * d], &dqkv, d, 3 * d, &mut dln1, grad, lo.w_qkv, lo.b_qkv);
            let mut dprev = dh1.clone();
            layernorm_bwd(&c.h, &c.ln1, w, lo.ln1_g, &dln1, d, grad, lo.ln1_g, lo.ln1_b, &mut dprev);
            dh = dprev;
        }

        for (t, &tok) in input.iter().enumerate() {
            let row = &dh[t * d..(t + 1) * d];
            axpy(1.0, row, &mut grad[lay.wte + tok as usize * d..lay.wte + (tok as usize + 1) * d]);
            axpy(1.0, row, &mut grad[lay.wpe + t * d..lay.wpe + (t + 1) * d]);
        }
        Ok(total)
    }

    fn cursor(&self, prefix: &[u32]) -> Result<Box<dyn Cursor + '_>, PolicyError> {
        if prefix.is_empty() {
            return Err(PolicyError::ContextOverflow { len: 0, ctx: self.config.ctx });
        }
        let mut c = TransformerCursor {
            model: self,
            keys: vec![Vec::new(); self.layout.layers.len()],
            values: vec![Vec::new(); self.layout.layers.len()],
            len: 0,
            logits: vec![0.0; self.layout.v],
        };
        for &t in prefix {
            c.push(t)?;
        }
        Ok(Box::new(c))
    }

    fn max_len(&self) -> usize {
        self.config.ctx
    }
}

struct LnCache {
    out: Vec<f64>,
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct LayerCache {
    h: Vec<f64>,
    ln1: LnCache,
    qkv: Vec<f64>,
    /// Attention probabilities per head, row-major `[t][u]` for `u <= t`.
    probs: Vec<Vec<f64>>,
    att: Vec<f64>,
    h1: Vec<f64>,
    ln2: LnCache,
    pre: Vec<f64>,
    gelu: Vec<f64>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    last_h: Vec<f64>,
    lnf: LnCache,
    fin: Vec<f64>,
}

fn forward(lay: &Layout, w: &[f64], tokens: &[u32]) -> ForwardCache {
    let d = lay.d;
    let t_len = tokens.len();
    let mut h = vec![0.0; t_len * d];
    for (t, &tok) in tokens.iter().enumerate() {
        embed_row(lay, w, tok, t, &mut h[t * d..(t + 1) * d]);
    }
    let mut layers = Vec::with_capacity(lay.layers.len());
    for lo in &lay.layers {
        let ln1 = layernorm(&h, w, lo.ln1_g, lo.ln1_b, d);
        let mut qkv = vec![0.0; t_len * 3 * d];
        for t in 0..t_len {
            linear_row(&ln1.out[t * d..(t + 1) * d], w, lo.w_qkv, lo.b_qkv, d, 3 * d, &mut qkv[t * 3 * d..(t + 1) * 3 * d]);
        }
        let mut att = vec![0.0; t_len * d];
        let mut probs = vec![vec![0.0; t_len * t_len]; lay.heads];
        let (keys, values) = split_kv(&qkv, d, t_len);
        for t in 0..t_len {
            let q = &qkv[t * 3 * d..t * 3 * d + d];
            for (hh, pr) in probs.iter_mut().enumerate() {
                attend_row(lay, hh, q, &keys, &values, t + 1, &mut att[t * d..(t + 1) * d], &mut pr[t * t_len..t * t_len + t + 1]);
            }
        }
        let mut h1 = h.clone();
        for t in 0..t_len {
            linear_row_acc(&att[t * d..(t + 1) * d], w, lo.w_o, lo.b_o, d, d, &mut h1[t * d..(t + 1) * d]);
        }
        let ln2 = layernorm(&h1, w, lo.ln2_g, lo.ln2_b, d);
        let mut pre = vec![0.0; t_len * lay.ff];
        for t in 0..t_len {
            linear_row(&ln2.out[t * d..(t + 1) * d], w, lo.w_fc, lo.b_fc, d, lay.ff, &mut pre[t * lay.ff..(t + 1) * lay.ff]);
        }
        let gelu_out: Vec<f64> = pre.iter().map(|&u| gelu(u)).collect();
        let mut h2 = h1.clone();
        for t in 0..t_len {
            linear_row_acc(&gelu_out[t * lay.ff..(t + 1) * lay.ff], w, lo.w_fc2, lo.b_fc2, lay.ff, d, &mut h2[t * d..(t + 1) * d]);
        }
        layers.push(LayerCache { h, ln1, qkv, probs, att, h1, ln2, pre, gelu: gelu_out });
        h = h2;
    }
    let lnf = layernorm(&h, w, lay.lnf_g, lay.lnf_b, d);
    let fin = lnf.out.clone();
    ForwardCache { layers, last_h: h, lnf, fin }
}

/// Keys and values laid out `[t][d]` from the fused `[t][3d]` projection.
fn split_kv(qkv: &[f64], d: usize, t_len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut k = Vec::with_capacity(t_len * d);
    let mut v = Vec::with_capacity(t_len * d);
    for t in 0..t_len {
        k.extend_from_slice(&qkv[t * 3 * d + d..t * 3 * d + 2 * d]);
        v.extend_from_slice(&qkv[t * 3 * d + 2 * d..t * 3 * d + 3 * d]);
    }
    (k, v)
}

fn embed_row(lay: &Layout, w: &[f64], tok: u32, pos: usize, out: &mut [f64]) {
    let d = lay.d;
    let e = &w[lay.wte + tok as usize * d..lay.wte + (tok as usize + 1) * d];
    let p = &w[lay.wpe + pos * d..lay.wpe + (pos + 1) * d];
    for ((o, a), b) in out.iter_mut().zip(e).zip(p) {
        *o = a + b;
    }
}

/// Causal attention of one query row over the first `n` cached keys, for
/// head `hh`. Writes the head's slice of `out` and the probabilities.
#[allow(clippy::too_many_arguments)]
fn attend_row(lay: &Layout, hh: usize, q: &[f64], keys: &[f64], values: &[f64], n: usize, out: &mut [f64], probs: &mut [f64]) {
    let d = lay.d;
    let hd = d / lay.heads;
    let lo = hh * hd;
    let scale = 1.0 / (hd as f64).sqrt();
    let qh = &q[lo..lo + hd];
    let mut m = f64::NEG_INFINITY;
    for u in 0..n {
        let s = dot(qh, &keys[u * d + lo..u * d + lo + hd]) * scale;
        probs[u] = s;
        m = m.max(s);
    }
    let mut z = 0.0;
    for p in probs[..n].iter_mut() {
        *p = (*p - m).exp();
        z += *p;
    }
    let o = &mut out[lo..lo + hd];
    o.fill(0.0);
    for u in 0..n {
        probs[u] /= z;
        axpy(probs[u], &values[u * d + lo..u * d + lo + hd], o);
    }
}

fn attention_bwd(lay: &Layout, c: &LayerCache, datt: &[f64], t_len: usize, dqkv: &mut [f64]) {
    let d = lay.d;
    let hd = d / lay.heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let d3 = 3 * d;
    let mut dp = vec![0.0; t_len];
    for hh in 0..lay.heads {
        let lo = hh * hd;
        let probs = &c.probs[hh];
        for t in 0..t_len {
            let dout = &datt[t * d + lo..t * d + lo + hd];
            let p = &probs[t * t_len..t * t_len + t + 1];
            let mut acc = 0.0;
            for u in 0..=t {
                let v = &c.qkv[u * d3 + 2 * d + lo..u * d3 + 2 * d + lo + hd];
                dp[u] = dot(dout, v);
                acc += p[u] * dp[u];
                axpy(p[u], dout, &mut dqkv[u * d3 + 2 * d + lo..u * d3 + 2 * d + lo + hd]);
            }
            let q = c.qkv[t * d3 + lo..t * d3 + lo + hd].to_vec();
            for u in 0..=t {
                let ds = p[u] * (dp[u] - acc) * scale;
                if ds == 0.0 {
                    continue;
                }
                let k = c.qkv[u * d3 + d + lo..u * d3 + d + lo + hd].to_vec();
                axpy(ds, &k, &mut dqkv[t * d3 + lo..t * d3 + lo + hd]);
                axpy(ds, &q, &mut dqkv[u * d3 + d + lo..u * d3 + d + lo + hd]);
            }
        }
    }
}

fn layernorm(x: &[f64], w: &[f64], g: usize, b: usize, d: usize) -> LnCache {
    let rows = x.len() / d;
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for t in 0..rows {
        rstd[t] = layernorm_row(&x[t * d..(t + 1) * d], &w[g..g + d], &w[b..b + d], &mut xhat[t * d..(t + 1) * d], &mut out[t * d..(t + 1) * d]);
    }
    LnCache { out, xhat, rstd }
}

fn layernorm_row(x: &[f64], g: &[f64], b: &[f64], xhat: &mut [f64], out: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        xhat[i] = (x[i] - mean) * rstd;
        out[i] = xhat[i] * g[i] + b[i];
    }
    rstd
}

/// Adds the input gradient of a LayerNorm to `dx` and its parameter
/// gradients to `grad`.
#[allow(clippy::too_many_arguments)]
fn layernorm_bwd(_x: &[f64], c: &LnCache, w: &[f64], g: usize, dy: &[f64], d: usize, grad: &mut [f64], dg: usize, db: usize, dx: &mut [f64]) {
    let gamma = &w[g..g + d];
    let rows = dy.len() / d;
    let mut dxhat = vec![0.0; d];
    for t in 0..rows {
        let dyr = &dy[t * d..(t + 1) * d];
        let xh = &c.xhat[t * d..(t + 1) * d];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..d {
            grad[dg + i] += dyr[i] * xh[i];
            grad[db + i] += dyr[i];
            dxhat[i] = dyr[i] * gamma[i];
            m1 += dxhat[i];
            m2 += dxhat[i] * xh[i];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let r = c.rstd[t];
        for i in 0..d {
            dx[t * d + i] += r * (dxhat[i] - m1 - xh[i] * m2);
        }
    }
}

fn linear_row(x: &[f64], w: &[f64], wo: usize, bo: usize, n_in: usize, n_out: usize, out: &mut [f64]) {
    out.copy_from_slice(&w[bo..bo + n_out]);
    matvec_acc(x, &w[wo..wo + n_in * n_out], n_out, out);
}

fn linear_row_acc(x: &[f64], w: &[f64], wo: usize, bo: usize, n_in: usize, n_out: usize, out: &mut [f64]) {
    let mut tmp = w[bo..bo + n_out].to_vec();
    matvec_acc(x, &w[wo..wo + n_in * n_out], n_out, &mut tmp);
    for (o, t) in out.iter_mut().zip(&tmp) {
        *o += t;
    }
}

fn matvec_acc(x: &[f64], w: &[f64], n_out: usize, out: &mut [f64]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, &w[i * n_out..(i + 1) * n_out], out);
        }
    }
}

fn head_row(lay: &Layout, w: &[f64], f: &[f64], out: &mut [f64]) {
    linear_row(f, w, lay.w_head, lay.b_head, lay.d, lay.v, out);
}

/// Backward of a row-wise linear map over all rows: adds to `dx`, and to
/// the weight and bias gradients at `gw`/`gb`.
#[allow(clippy::too_many_arguments)]
fn linear_bwd(x: &[f64], w: &[f64], dy: &[f64], n_in: usize, n_out: usize, dx: &mut [f64], grad: &mut [f64], gw: usize, gb: usize) {
    let rows = dy.len() / n_out;
    for t in 0..rows {
        linear_bwd_row(
            &x[t * n_in..(t + 1) * n_in],
            w,
            &dy[t * n_out..(t + 1) * n_out],
            n_in,
            n_out,
            &mut dx[t * n_in..(t + 1) * n_in],
            grad,
            gw,
            gb,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn linear_bwd_row(x: &[f64], w: &[f64], dy: &[f64], n_in: usize, n_out: usize, dx: &mut [f64], grad: &mut [f64], gw: usize, gb: usize) {
    axpy(1.0, dy, &mut grad[gb..gb + n_out]);
    for i in 0..n_in {
        let wi = &w[i * n_out..(i + 1) * n_out];
        dx[i] += dot(dy, wi);
        if x[i] != 0.0 {
            axpy(x[i], dy, &mut grad[gw + i * n_out..gw + (i + 1) * n_out]);
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[c * 4 + k] * b[c * 4 + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..n {
        s += a[i] * b[i];
    }
    s
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[derive(Clone)]
struct TransformerCursor<'a> {
    model: &'a TinyTransformer,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
    logits: Vec<f64>,
}

impl Cursor for TransformerCursor<'_> {
    fn logits(&self) -> &[f64] {
        &self.logits
    }

    fn push(&mut self, token: u32) -> Result<(), PolicyError> {
        let m = self.model;
        m.vocab.check(&[token])?;
        if self.len >= m.config.ctx {
            return Err(PolicyError::ContextOverflow { len: self.len + 1, ctx: m.config.ctx });
        }
        let lay = &m.layout;
        let w = &m.params.values;
        let d = lay.d;
        let t = self.len;
        let mut h = vec![0.0; d];
        embed_row(lay, w, token, t, &mut h);
        let mut xhat = vec![0.0; d];
        let mut a = vec![0.0; d];
        let mut qkv = vec![0.0; 3 * d];
        let mut att = vec![0.0; d];
        let mut probs = vec![0.0; t + 1];
        let mut pre = vec![0.0; lay.ff];
        for (l, lo) in lay.layers.iter().enumerate() {
            layernorm_row(&h, &w[lo.ln1_g..lo.ln1_g + d], &w[lo.ln1_b..lo.ln1_b + d], &mut xhat, &mut a);
            linear_row(&a, w, lo.w_qkv, lo.b_qkv, d, 3 * d, &mut qkv);
            self.keys[l].extend_from_slice(&qkv[d..2 * d]);
            self.values[l].extend_from_slice(&qkv[2 * d..3 * d]);
            for hh in 0..lay.heads {
                attend_row(lay, hh, &qkv[..d], &self.keys[l], &self.values[l], t + 1, &mut att, &mut probs);
            }
            linear_row_acc(&att, w, lo.w_o, lo.b_o, d, d, &mut h);
            layernorm_row(&h, &w[lo.ln2_g..lo.ln2_g + d], &w[lo.ln2_b..lo.ln2_b + d], &mut xhat, &mut a);
            linear_row(&a, w, lo.w_fc, lo.b_fc, d, lay.ff, &mut pre);
            for u in pre.iter_mut() {
                *u = gelu(*u);
            }
            linear_row_acc(&pre, w, lo.w_fc2, lo.b_fc2, lay.ff, d, &mut h);
        }
        layernorm_row(&h, &w[lay.lnf_g..lay.lnf_g + d], &w[lay.lnf_b..lay.lnf_b + d], &mut xhat, &mut a);
        head_row(lay, w, &a, &mut self.logits);
        self.len += 1;
        Ok(())
    }

    fn len(&self) -> usize {
        self.len
    }

    fn box_clone(&self) -> Box<dyn Cursor + '_> {
        Box::new(self.clone())
    }
}
