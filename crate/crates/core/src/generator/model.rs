//! Decoder-only transformer over band tokens with class-conditioned
//! adaptive layer norm, plus its hand-written backward pass.
//!
//! Sequence layout follows [`AttentionPlan`]: position 0 is the condition
//! token, positions of band 1 also take the class embedding as input, and
//! band `i > 1` positions take a linear projection of the accumulated
//! lower-band reconstruction resampled to band `i`'s scale. Every band
//! position emits logits over the codebook.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::plan::AttentionPlan;
use crate::bands::{BandSchedule, Interp};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
const MLP_RATIO: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// Codebook size `K` (output vocabulary).
    pub codebook_size: usize,
    /// Latent vector length `C`.
    pub code_dim: usize,
    /// Number of real classes; id `num_classes` is the unconditional class.
    pub num_classes: usize,
    pub schedule: BandSchedule,
    #[serde(default)]
    pub interp: Interp,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::param(format!(
                "embed dim {} must be a positive multiple of head count {}",
                self.dim, self.heads
            )));
        }
        if self.codebook_size == 0 || self.code_dim == 0 {
            return Err(Error::param("codebook size and code dim must be positive"));
        }
        Ok(())
    }

    pub fn uncond_id(&self) -> usize {
        self.num_classes
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Named parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    ada: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct Offsets {
    class_emb: usize,
    in_w: usize,
    in_b: usize,
    pos_emb: usize,
    band_emb: usize,
    layers: Vec<LayerOffsets>,
    final_ada: usize,
    head_w: usize,
    head_b: usize,
}

fn build_layout(cfg: &ModelConfig, total_len: usize) -> (Vec<ParamSpec>, Offsets) {
    let d = cfg.dim;
    let classes = cfg.num_classes + 1;
    let mut specs: Vec<ParamSpec> = Vec::new();
    let mut next = 0;
    let mut add = |name: String, shape: Vec<usize>| {
        let spec = ParamSpec {
            name,
            shape,
            offset: next,
        };
        next += spec.len();
        let off = spec.offset;
        specs.push(spec);
        off
    };
    let class_emb = add("class_emb".into(), vec![classes, d]);
    let in_w = add("in_proj.weight".into(), vec![cfg.code_dim, d]);
    let in_b = add("in_proj.bias".into(), vec![d]);
    let pos_emb = add("pos_emb".into(), vec![total_len, d]);
    let band_emb = add("band_emb".into(), vec![cfg.schedule.len() + 1, d]);
    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let p = |s: &str| format!("layers.{l}.{s}");
        layers.push(LayerOffsets {
            ada: add(p("ada"), vec![classes, 4 * d]),
            wq: add(p("attn.wq"), vec![d, d]),
            bq: add(p("attn.bq"), vec![d]),
            wk: add(p("attn.wk"), vec![d, d]),
            bk: add(p("attn.bk"), vec![d]),
            wv: add(p("attn.wv"), vec![d, d]),
            bv: add(p("attn.bv"), vec![d]),
            wo: add(p("attn.wo"), vec![d, d]),
            bo: add(p("attn.bo"), vec![d]),
            w1: add(p("mlp.w1"), vec![d, MLP_RATIO * d]),
            b1: add(p("mlp.b1"), vec![MLP_RATIO * d]),
            w2: add(p("mlp.w2"), vec![MLP_RATIO * d, d]),
            b2: add(p("mlp.b2"), vec![d]),
        });
    }
    let final_ada = add("final_ada".into(), vec![classes, 2 * d]);
    let head_w = add("head.weight".into(), vec![d, cfg.codebook_size]);
    let head_b = add("head.bias".into(), vec![cfg.codebook_size]);
    (
        specs,
        Offsets {
            class_emb,
            in_w,
            in_b,
            pos_emb,
            band_emb,
            layers,
            final_ada,
            head_w,
            head_b,
        },
    )
}

/// Transformer weights in one flat vector plus the layout describing it.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    plan: AttentionPlan,
    specs: Vec<ParamSpec>,
    offsets: Offsets,
    data: Vec<f64>,
}

impl ModelParams {
    /// All-zero parameters.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let plan = AttentionPlan::new(&config.schedule);
        let (specs, offsets) = build_layout(&config, plan.total_len());
        let n = specs.last().map(|s| s.offset + s.len()).unwrap_or(0);
        Ok(Self {
            config,
            plan,
            specs,
            offsets,
            data: vec![0.0; n],
        })
    }

    /// Seeded Gaussian initialization: linear weights with std
    /// `1/sqrt(fan_in)`, embeddings with std 0.5, biases and AdaLN tables at
    /// zero (so modulation starts as plain layer norm).
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in p.specs.clone() {
            let name = spec.name.as_str();
            let std = if name.ends_with("emb") {
                0.5
            } else if name.contains("bias") || name.contains(".b") || name.contains("ada") {
                0.0
            } else {
                1.0 / (spec.shape[0] as f64).sqrt()
            };
            if std > 0.0 {
                let normal = Normal::new(0.0, std).expect("positive std");
                for v in &mut p.data[spec.range()] {
                    *v = normal.sample(&mut rng);
                }
            }
        }
        Ok(p)
    }

    pub fn from_flat(config: ModelConfig, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if data.len() != p.data.len() {
            return Err(Error::dim(format!(
                "expected {} parameters, got {}",
                p.data.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("parameters must be finite"));
        }
        p.data = data;
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn plan(&self) -> &AttentionPlan {
        &self.plan
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn spec(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of band-token positions (rows of the logit matrix for a full
    /// sequence).
    pub fn band_tokens(&self) -> usize {
        self.plan.total_len() - 1
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class > self.config.num_classes {
            return Err(Error::ClassOutOfRange {
                class,
                classes: self.config.num_classes,
            });
        }
        Ok(())
    }

    /// Logits for band positions `1..len`, row-major `(len - 1) x K`.
    ///
    /// `inputs` holds one `C`-vector per band position (rows for the first
    /// band are ignored) and must cover at least `len - 1` positions. `len`
    /// must end on a band boundary.
    pub fn logits(&self, class: usize, inputs: &[f64], len: usize) -> Result<Vec<f64>> {
        Ok(self.forward(class, inputs, len)?.logits)
    }

    pub fn forward(&self, class: usize, inputs: &[f64], len: usize) -> Result<Forward> {
        self.check_class(class)?;
        if len < 2 || len > self.plan.total_len() || !self.plan.is_boundary(len) {
            return Err(Error::param(format!("sequence length {len} is not a band boundary")));
        }
        let c_dim = self.config.code_dim;
        if inputs.len() < (len - 1) * c_dim {
            return Err(Error::dim(format!(
                "need {} input values for length {len}, got {}",
                (len - 1) * c_dim,
                inputs.len()
            )));
        }
        let d = self.config.dim;
        let w = &self.data;
        let o = &self.offsets;

        let projected = linear(&inputs[..(len - 1) * c_dim], len - 1, &w[o.in_w..], &w[o.in_b..], c_dim, d);
        let mut x = vec![0.0; len * d];
        for p in 0..len {
            let block = self.plan.block_of(p);
            let row = &mut x[p * d..(p + 1) * d];
            let base = if block <= 1 {
                &w[o.class_emb + class * d..o.class_emb + (class + 1) * d]
            } else {
                &projected[(p - 1) * d..p * d]
            };
            let pos = &w[o.pos_emb + p * d..o.pos_emb + (p + 1) * d];
            let band = &w[o.band_emb + block * d..o.band_emb + (block + 1) * d];
            for i in 0..d {
                row[i] = base[i] + pos[i] + band[i];
            }
        }

        let mut layers = Vec::with_capacity(self.config.layers);
        for lo in &o.layers {
            let (cache, out) = self.layer_forward(lo, class, x, len);
            layers.push(cache);
            x = out;
        }

        let fa = &w[o.final_ada + class * 2 * d..o.final_ada + (class + 1) * 2 * d];
        let (xhat_f, rstd_f) = layer_norm(&x, len, d);
        let mod_f = modulate(&xhat_f, len, d, &fa[..d], &fa[d..]);
        let k = self.config.codebook_size;
        let logits = linear(&mod_f[d..], len - 1, &w[o.head_w..], &w[o.head_b..], d, k);
        Ok(Forward {
            class,
            len,
            layers,
            x_final: x,
            xhat_f,
            rstd_f,
            mod_f,
            logits,
        })
    }

    fn layer_forward(&self, lo: &LayerOffsets, class: usize, x_in: Vec<f64>, len: usize) -> (LayerCache, Vec<f64>) {
        let d = self.config.dim;
        let hidden = MLP_RATIO * d;
        let w = &self.data;
        let ada = &w[lo.ada + class * 4 * d..lo.ada + (class + 1) * 4 * d];

        let (xhat1, rstd1) = layer_norm(&x_in, len, d);
        let a1 = modulate(&xhat1, len, d, &ada[..d], &ada[d..2 * d]);
        let q = linear(&a1, len, &w[lo.wq..], &w[lo.bq..], d, d);
        let k = linear(&a1, len, &w[lo.wk..], &w[lo.bk..], d, d);
        let v = linear(&a1, len, &w[lo.wv..], &w[lo.bv..], d, d);
        let (ctx, probs) = self.attention(&q, &k, &v, len);
        let attn_out = linear(&ctx, len, &w[lo.wo..], &w[lo.bo..], d, d);
        let x_mid: Vec<f64> = x_in.iter().zip(&attn_out).map(|(a, b)| a + b).collect();

        let (xhat2, rstd2) = layer_norm(&x_mid, len, d);
        let a2 = modulate(&xhat2, len, d, &ada[2 * d..3 * d], &ada[3 * d..]);
        let u = linear(&a2, len, &w[lo.w1..], &w[lo.b1..], d, hidden);
        let z: Vec<f64> = u.iter().map(|&t| gelu(t)).collect();
        let mlp_out = linear(&z, len, &w[lo.w2..], &w[lo.b2..], hidden, d);
        let out: Vec<f64> = x_mid.iter().zip(&mlp_out).map(|(a, b)| a + b).collect();
        (
            LayerCache {
                xhat1,
                rstd1,
                a1,
                q,
                k,
                v,
                probs,
                ctx,
                xhat2,
                rstd2,
                a2,
                u,
                z,
            },
            out,
        )
    }

    /// Multi-head attention restricted to each query's visible prefix.
    /// Returns the concatenated head outputs and, per `(head, query)`, the
    /// softmax weights over its visible keys.
    fn attention(&self, q: &[f64], k: &[f64], v: &[f64], len: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = self.config.dim;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut ctx = vec![0.0; len * d];
        let mut probs = Vec::with_capacity(self.config.heads * len);
        for h in 0..self.config.heads {
            let off = h * hd;
            for p in 0..len {
                let vis = self.plan.visible(p);
                let qp = &q[p * d + off..p * d + off + hd];
                let mut scores: Vec<f64> = (0..vis)
                    .map(|j| dot(qp, &k[j * d + off..j * d + off + hd]) * scale)
                    .collect();
                softmax_in_place(&mut scores);
                let out = &mut ctx[p * d + off..p * d + off + hd];
                for (j, &pj) in scores.iter().enumerate() {
                    let vj = &v[j * d + off..j * d + off + hd];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += pj * vv;
                    }
                }
                probs.push(scores);
            }
        }
        (ctx, probs)
    }

    /// Gradient of `sum(dlogits * logits)` with respect to every parameter.
    pub fn backward(&self, fwd: &Forward, inputs: &[f64], dlogits: &[f64]) -> Vec<f64> {
        let d = self.config.dim;
        let k = self.config.codebook_size;
        let len = fwd.len;
        let class = fwd.class;
        let w = &self.data;
        let o = &self.offsets;
        let mut g = vec![0.0; self.data.len()];

        // Output head; position 0 produces no logits.
        let mut dmod_f = vec![0.0; len * d];
        {
            let (gw, gb) = split_grad(&mut g, o.head_w, d * k, o.head_b, k);
            let dx = linear_backward(&fwd.mod_f[d..], dlogits, len - 1, &w[o.head_w..], d, k, gw, gb);
            dmod_f[d..].copy_from_slice(&dx);
        }
        let fa = &w[o.final_ada + class * 2 * d..o.final_ada + (class + 1) * 2 * d];
        let mut gfa = vec![0.0; 2 * d];
        let dxhat_f = modulate_backward(&dmod_f, &fwd.xhat_f, len, d, &fa[..d], &mut gfa);
        accumulate(&mut g[o.final_ada + class * 2 * d..], &gfa);
        let mut dx = layer_norm_backward(&dxhat_f, &fwd.xhat_f, &fwd.rstd_f, len, d);

        for (lo, cache) in o.layers.iter().zip(&fwd.layers).rev() {
            dx = self.layer_backward(lo, cache, class, dx, len, &mut g);
        }

        // Embeddings.
        let c_dim = self.config.code_dim;
        let mut dproj = vec![0.0; (len - 1) * d];
        for p in 0..len {
            let block = self.plan.block_of(p);
            let row = &dx[p * d..(p + 1) * d];
            accumulate(&mut g[o.pos_emb + p * d..], row);
            accumulate(&mut g[o.band_emb + block * d..], row);
            if block <= 1 {
                accumulate(&mut g[o.class_emb + class * d..], row);
            } else {
                dproj[(p - 1) * d..p * d].copy_from_slice(row);
            }
        }
        let (gw, gb) = split_grad(&mut g, o.in_w, c_dim * d, o.in_b, d);
        linear_backward(&inputs[..(len - 1) * c_dim], &dproj, len - 1, &w[o.in_w..], c_dim, d, gw, gb);
        g
    }

    fn layer_backward(
        &self,
        lo: &LayerOffsets,
        cache: &LayerCache,
        class: usize,
        dout: Vec<f64>,
        len: usize,
        g: &mut [f64],
    ) -> Vec<f64> {
        let d = self.config.dim;
        let hidden = MLP_RATIO * d;
        let w = &self.data;
        let ada = &w[lo.ada + class * 4 * d..lo.ada + (class + 1) * 4 * d];
        let mut gada = vec![0.0; 4 * d];

        // MLP branch.
        let dz = {
            let (gw, gb) = split_grad(g, lo.w2, hidden * d, lo.b2, d);
            linear_backward(&cache.z, &dout, len, &w[lo.w2..], hidden, d, gw, gb)
        };
        let du: Vec<f64> = dz.iter().zip(&cache.u).map(|(g, &u)| g * gelu_grad(u)).collect();
        let da2 = {
            let (gw, gb) = split_grad(g, lo.w1, d * hidden, lo.b1, hidden);
            linear_backward(&cache.a2, &du, len, &w[lo.w1..], d, hidden, gw, gb)
        };
        let dxhat2 = modulate_backward(&da2, &cache.xhat2, len, d, &ada[2 * d..3 * d], &mut gada[2 * d..]);
        let mut dmid = layer_norm_backward(&dxhat2, &cache.xhat2, &cache.rstd2, len, d);
        for (a, b) in dmid.iter_mut().zip(&dout) {
            *a += b;
        }

        // Attention branch.
        let dctx = {
            let (gw, gb) = split_grad(g, lo.wo, d * d, lo.bo, d);
            linear_backward(&cache.ctx, &dmid, len, &w[lo.wo..], d, d, gw, gb)
        };
        let (dq, dk, dv) = self.attention_backward(cache, &dctx, len);
        let mut da1 = vec![0.0; len * d];
        for (wo, bo, dy) in [(lo.wq, lo.bq, &dq), (lo.wk, lo.bk, &dk), (lo.wv, lo.bv, &dv)] {
            let (gw, gb) = split_grad(g, wo, d * d, bo, d);
            let dx = linear_backward(&cache.a1, dy, len, &w[wo..], d, d, gw, gb);
            accumulate(&mut da1, &dx);
        }
        let dxhat1 = modulate_backward(&da1, &cache.xhat1, len, d, &ada[..d], &mut gada[..2 * d]);
        let mut din = layer_norm_backward(&dxhat1, &cache.xhat1, &cache.rstd1, len, d);
        for (a, b) in din.iter_mut().zip(&dmid) {
            *a += b;
        }
        accumulate(&mut g[lo.ada + class * 4 * d..], &gada);
        din
    }

    fn attention_backward(&self, cache: &LayerCache, dctx: &[f64], len: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.config.dim;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let (q, k, v) = (&cache.q, &cache.k, &cache.v);
        let mut dq = vec![0.0; len * d];
        let mut dk = vec![0.0; len * d];
        let mut dv = vec![0.0; len * d];
        for h in 0..self.config.heads {
            let off = h * hd;
            for p in 0..len {
                let probs = &cache.probs[h * len + p];
                let dout = &dctx[p * d + off..p * d + off + hd];
                let dprob: Vec<f64> = (0..probs.len())
                    .map(|j| dot(dout, &v[j * d + off..j * d + off + hd]))
                    .collect();
                let inner: f64 = probs.iter().zip(&dprob).map(|(a, b)| a * b).sum();
                for (j, (&pj, &dpj)) in probs.iter().zip(&dprob).enumerate() {
                    for (dvv, &go) in dv[j * d + off..j * d + off + hd].iter_mut().zip(dout) {
                        *dvv += pj * go;
                    }
                    let ds = pj * (dpj - inner) * scale;
                    if ds != 0.0 {
                        for i in 0..hd {
                            dq[p * d + off + i] += ds * k[j * d + off + i];
                            dk[j * d + off + i] += ds * q[p * d + off + i];
                        }
                    }
                }
            }
        }
        (dq, dk, dv)
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    class: usize,
    len: usize,
    layers: Vec<LayerCache>,
    #[allow(dead_code)]
    x_final: Vec<f64>,
    xhat_f: Vec<f64>,
    rstd_f: Vec<f64>,
    mod_f: Vec<f64>,
    /// `(len - 1) x K` logits, row-major.
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    xhat1: Vec<f64>,
    rstd1: Vec<f64>,
    a1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<Vec<f64>>,
    ctx: Vec<f64>,
    xhat2: Vec<f64>,
    rstd2: Vec<f64>,
    a2: Vec<f64>,
    u: Vec<f64>,
    z: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

fn split_grad(g: &mut [f64], w_off: usize, w_len: usize, b_off: usize, b_len: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(w_off + w_len <= b_off);
    let (lo, hi) = g.split_at_mut(b_off);
    (&mut lo[w_off..w_off + w_len], &mut hi[..b_len])
}

/// `x W + b` for `rows` input rows; `w` is `n_in x n_out` row-major.
fn linear(x: &[f64], rows: usize, w: &[f64], b: &[f64], n_in: usize, n_out: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        y.extend_from_slice(&b[..n_out]);
        let yr = &mut y[r * n_out..(r + 1) * n_out];
        for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if xi != 0.0 {
                for (yj, wij) in yr.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                    *yj += xi * wij;
                }
            }
        }
    }
    y
}

/// Accumulates `dW += x^T dy`, `db += sum(dy)` and returns `dx = dy W^T`.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    w: &[f64],
    n_in: usize,
    n_out: usize,
    gw: &mut [f64],
    gb: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * n_in];
    for r in 0..rows {
        let dyr = &dy[r * n_out..(r + 1) * n_out];
        accumulate(gb, dyr);
        let xr = &x[r * n_in..(r + 1) * n_in];
        for i in 0..n_in {
            let wi = &w[i * n_out..(i + 1) * n_out];
            dx[r * n_in + i] = dot(dyr, wi);
            let xi = xr[i];
            if xi != 0.0 {
                for (gij, &g) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(dyr) {
                    *gij += xi * g;
                }
            }
        }
    }
    dx
}

/// Row-wise normalization without affine parameters.
fn layer_norm(x: &[f64], rows: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xhat = vec![0.0; rows * d];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = s;
        for (o, v) in xhat[r * d..(r + 1) * d].iter_mut().zip(row) {
            *o = (v - mean) * s;
        }
    }
    (xhat, rstd)
}

fn layer_norm_backward(dxhat: &[f64], xhat: &[f64], rstd: &[f64], rows: usize, d: usize) -> Vec<f64> {
    let mut dx = vec![0.0; rows * d];
    for r in 0..rows {
        let g = &dxhat[r * d..(r + 1) * d];
        let xh = &xhat[r * d..(r + 1) * d];
        let mean_g = g.iter().sum::<f64>() / d as f64;
        let mean_gx = dot(g, xh) / d as f64;
        for i in 0..d {
            dx[r * d + i] = rstd[r] * (g[i] - mean_g - xh[i] * mean_gx);
        }
    }
    dx
}

/// `xhat * (1 + scale) + shift`, shared across rows.
fn modulate(xhat: &[f64], rows: usize, d: usize, scale: &[f64], shift: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * d);
    for r in 0..rows {
        for i in 0..d {
            out.push(xhat[r * d + i] * (1.0 + scale[i]) + shift[i]);
        }
    }
    out
}

/// Returns `dxhat`; accumulates `[dscale | dshift]` into `g_mod`.
fn modulate_backward(dy: &[f64], xhat: &[f64], rows: usize, d: usize, scale: &[f64], g_mod: &mut [f64]) -> Vec<f64> {
    let mut dxhat = vec![0.0; rows * d];
    for r in 0..rows {
        for i in 0..d {
            let g = dy[r * d + i];
            g_mod[i] += g * xhat[r * d + i];
            g_mod[d + i] += g;
            dxhat[r * d + i] = g * (1.0 + scale[i]);
        }
    }
    dxhat
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[inline]
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}
