//! A small decoder-only transformer: learned positions, pre-norm blocks
//! with causal multi-head attention and a GELU MLP, tied output
//! embedding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::tensor::{axpy, col_sum_acc, dot, matmul, matmul_nt, matmul_tn_acc};
use crate::neural::{Param, Tensor};
use crate::real::Real;
use crate::rng;

use super::bpe::PAD;

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GptConfig {
    pub vocab_size: usize,
    pub context: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub mlp_ratio: usize,
}

impl GptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!("width {} is not divisible into {} heads", self.d_model, self.n_heads)));
        }
        if self.context < 2 || self.vocab_size <= PAD as usize || self.mlp_ratio == 0 {
            return Err(Error::InvalidArgument("context, vocabulary or MLP ratio too small".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GptBlock<T: Real = f32> {
    pub ln1_g: Param<T>,
    pub ln1_b: Param<T>,
    /// Fused query/key/value projection `[d, 3d]`.
    pub attn_w: Param<T>,
    pub attn_b: Param<T>,
    pub proj_w: Param<T>,
    pub proj_b: Param<T>,
    pub ln2_g: Param<T>,
    pub ln2_b: Param<T>,
    pub fc_w: Param<T>,
    pub fc_b: Param<T>,
    pub out_w: Param<T>,
    pub out_b: Param<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gpt<T: Real = f32> {
    pub config: GptConfig,
    pub tok: Param<T>,
    pub pos: Param<T>,
    pub blocks: Vec<GptBlock<T>>,
    pub lnf_g: Param<T>,
    pub lnf_b: Param<T>,
}

fn normal<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Param<T> {
    Param::new(Tensor { rows, cols, data: (0..rows * cols).map(|_| T::from_f64(std * rng::standard_normal(rng))).collect() })
}

fn ones<T: Real>(d: usize) -> Param<T> {
    Param::new(Tensor::filled(1, d, T::one()))
}

fn zeros<T: Real>(d: usize) -> Param<T> {
    Param::new(Tensor::zeros(1, d))
}

/// Row-wise layer norm; returns `(y, x̂, 1/σ)`.
fn layer_norm<T: Real>(x: &Tensor<T>, g: &Param<T>, b: &Param<T>) -> (Tensor<T>, Tensor<T>, Vec<T>) {
    let d = x.cols;
    let df = T::from_usize(d);
    let mut y = Tensor::zeros(x.rows, d);
    let mut xhat = Tensor::zeros(x.rows, d);
    let mut inv = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let r = x.row(i);
        let mean = r.iter().copied().sum::<T>() / df;
        let var = r.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / df;
        let s = T::one() / (var + T::from_f64(LN_EPS)).sqrt();
        inv.push(s);
        let (h, o) = (xhat.row_mut(i), &mut y.data[i * d..(i + 1) * d]);
        for j in 0..d {
            h[j] = (r[j] - mean) * s;
            o[j] = g.value.data[j] * h[j] + b.value.data[j];
        }
    }
    (y, xhat, inv)
}

fn layer_norm_backward<T: Real>(dy: &Tensor<T>, xhat: &Tensor<T>, inv: &[T], g: &mut Param<T>, b: &mut Param<T>) -> Tensor<T> {
    let d = dy.cols;
    let df = T::from_usize(d);
    let mut dx = Tensor::zeros(dy.rows, d);
    for i in 0..dy.rows {
        let (gy, h) = (dy.row(i), xhat.row(i));
        let mut s1 = T::zero();
        let mut s2 = T::zero();
        for j in 0..d {
            g.grad.data[j] = g.grad.data[j] + gy[j] * h[j];
            b.grad.data[j] = b.grad.data[j] + gy[j];
            let dh = gy[j] * g.value.data[j];
            s1 = s1 + dh;
            s2 = s2 + dh * h[j];
        }
        let k = inv[i] / df;
        let o = dx.row_mut(i);
        for j in 0..d {
            let dh = gy[j] * g.value.data[j];
            o[j] = k * (df * dh - s1 - h[j] * s2);
        }
    }
    dx
}

fn gelu<T: Real>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4);
    let k = T::from_f64(0.044715);
    T::from_f64(0.5) * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4);
    let k = T::from_f64(0.044715);
    let t = (c * (x + k * x * x * x)).tanh();
    let half = T::from_f64(0.5);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::from_f64(3.0) * k * x * x)
}

fn linear<T: Real>(x: &Tensor<T>, w: &Param<T>, b: &Param<T>) -> Tensor<T> {
    matmul(x, &w.value, Some(&b.value))
}

fn linear_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>, w: &mut Param<T>, b: &mut Param<T>) -> Tensor<T> {
    matmul_tn_acc(x, dy, &mut w.grad);
    col_sum_acc(dy, &mut b.grad);
    matmul_nt(dy, &w.value)
}

struct BlockCache<T: Real> {
    xhat1: Tensor<T>,
    inv1: Vec<T>,
    a: Tensor<T>,
    qkv: Tensor<T>,
    /// Attention weights per (sequence, head), `t × t` row-major.
    probs: Vec<Vec<T>>,
    att: Tensor<T>,
    xhat2: Tensor<T>,
    inv2: Vec<T>,
    m: Tensor<T>,
    f: Tensor<T>,
    h: Tensor<T>,
}

/// Forward state for one batch of equal-length sequences.
pub struct GptCache<T: Real = f32> {
    batch: usize,
    len: usize,
    tokens: Vec<u32>,
    blocks: Vec<BlockCache<T>>,
    xhatf: Tensor<T>,
    invf: Vec<T>,
    xf: Tensor<T>,
}

/// Per-layer keys and values of the prefix generated so far.
#[derive(Debug, Clone, Default)]
pub struct KvCache<T: Real = f32> {
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    len: usize,
}

impl<T: Real> KvCache<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl<T: Real> Gpt<T> {
    pub fn new<R: Rng + ?Sized>(config: GptConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let hidden = d * config.mlp_ratio;
        let resid_std = INIT_STD / libm::sqrt(2.0 * config.n_layers.max(1) as f64);
        let tok = normal(config.vocab_size, d, INIT_STD, rng);
        let pos = normal(config.context, d, INIT_STD, rng);
        let blocks = (0..config.n_layers)
            .map(|_| GptBlock {
                ln1_g: ones(d),
                ln1_b: zeros(d),
                attn_w: normal(d, 3 * d, INIT_STD, rng),
                attn_b: zeros(3 * d),
                proj_w: normal(d, d, resid_std, rng),
                proj_b: zeros(d),
                ln2_g: ones(d),
                ln2_b: zeros(d),
                fc_w: normal(d, hidden, INIT_STD, rng),
                fc_b: zeros(hidden),
                out_w: normal(hidden, d, resid_std, rng),
                out_b: zeros(d),
            })
            .collect();
        Ok(Self { config, tok, pos, blocks, lnf_g: ones(d), lnf_b: zeros(d) })
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("tok", &mut self.tok);
        f("pos", &mut self.pos);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let mut g = |n: &str, p: &mut Param<T>| f(&format!("blocks.{i}.{n}"), p);
            g("ln1.g", &mut b.ln1_g);
            g("ln1.b", &mut b.ln1_b);
            g("attn.w", &mut b.attn_w);
            g("attn.b", &mut b.attn_b);
            g("proj.w", &mut b.proj_w);
            g("proj.b", &mut b.proj_b);
            g("ln2.g", &mut b.ln2_g);
            g("ln2.b", &mut b.ln2_b);
            g("fc.w", &mut b.fc_w);
            g("fc.b", &mut b.fc_b);
            g("out.w", &mut b.out_w);
            g("out.b", &mut b.out_b);
        }
        f("lnf.g", &mut self.lnf_g);
        f("lnf.b", &mut self.lnf_b);
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    fn check_tokens(&self, seqs: &[Vec<u32>]) -> Result<usize> {
        let len = seqs.first().map_or(0, Vec::len);
        if seqs.is_empty() || len == 0 {
            return Err(Error::EmptyInput("token batch"));
        }
        if seqs.iter().any(|s| s.len() != len) {
            return Err(Error::Shape("sequences in a batch must have equal length".into()));
        }
        if len > self.config.context {
            return Err(Error::ContextOverflow { len, context: self.config.context });
        }
        if let Some(&t) = seqs.iter().flatten().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::InvalidArgument(format!("token id {t} outside vocabulary")));
        }
        Ok(len)
    }

    /// Logits `[batch·len, vocab]` for every position of every sequence.
    pub fn forward(&self, seqs: &[Vec<u32>]) -> Result<(Tensor<T>, GptCache<T>)> {
        let len = self.check_tokens(seqs)?;
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).sqrt();
        let batch = seqs.len();
        let n = batch * len;
        let tokens: Vec<u32> = seqs.iter().flatten().copied().collect();
        let mut x = Tensor::zeros(n, d);
        for (i, &t) in tokens.iter().enumerate() {
            let r = x.row_mut(i);
            r.copy_from_slice(self.tok.value.row(t as usize));
            axpy(r, T::one(), self.pos.value.row(i % len));
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let (a, xhat1, inv1) = layer_norm(&x, &blk.ln1_g, &blk.ln1_b);
            let qkv = linear(&a, &blk.attn_w, &blk.attn_b);
            let mut att = Tensor::zeros(n, d);
            let mut probs = Vec::with_capacity(batch * heads);
            for b in 0..batch {
                for h in 0..heads {
                    let mut p = vec![T::zero(); len * len];
                    for i in 0..len {
                        let q = &qkv.row(b * len + i)[h * dh..(h + 1) * dh];
                        let row = &mut p[i * len..i * len + i + 1];
                        for (j, s) in row.iter_mut().enumerate() {
                            *s = dot(q, &qkv.row(b * len + j)[d + h * dh..d + (h + 1) * dh]) * scale;
                        }
                        crate::neural::layers::softmax_in_place(row);
                        let out = &mut att.row_mut(b * len + i)[h * dh..(h + 1) * dh];
                        for (j, &pij) in row.iter().enumerate() {
                            axpy(out, pij, &qkv.row(b * len + j)[2 * d + h * dh..2 * d + (h + 1) * dh]);
                        }
                    }
                    probs.push(p);
                }
            }
            x.add_assign(&linear(&att, &blk.proj_w, &blk.proj_b));
            let (m, xhat2, inv2) = layer_norm(&x, &blk.ln2_g, &blk.ln2_b);
            let f = linear(&m, &blk.fc_w, &blk.fc_b);
            let hact = f.map(gelu);
            x.add_assign(&linear(&hact, &blk.out_w, &blk.out_b));
            caches.push(BlockCache { xhat1, inv1, a, qkv, probs, att, xhat2, inv2, m, f, h: hact });
        }
        let (xf, xhatf, invf) = layer_norm(&x, &self.lnf_g, &self.lnf_b);
        let logits = matmul_nt(&xf, &self.tok.value);
        logits.ensure_finite("transformer logits")?;
        Ok((logits, GptCache { batch, len, tokens, blocks: caches, xhatf, invf, xf }))
    }

    /// Accumulates parameter gradients for `∂L/∂logits`.
    pub fn backward(&mut self, cache: &GptCache<T>, dlogits: &Tensor<T>) -> Result<()> {
        let n = cache.batch * cache.len;
        if dlogits.shape() != [n, self.config.vocab_size] {
            return Err(Error::Shape(format!("logit gradient {:?}", dlogits.shape())));
        }
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).sqrt();
        let len = cache.len;
        matmul_tn_acc(dlogits, &cache.xf, &mut self.tok.grad);
        let dxf = matmul(dlogits, &self.tok.value, None);
        let mut dx = layer_norm_backward(&dxf, &cache.xhatf, &cache.invf, &mut self.lnf_g, &mut self.lnf_b);
        for (blk, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            // MLP branch.
            let dh_act = linear_backward(&c.h, &dx, &mut blk.out_w, &mut blk.out_b);
            let mut df = dh_act;
            for (g, &f) in df.data.iter_mut().zip(&c.f.data) {
                *g = *g * gelu_grad(f);
            }
            let dm = linear_backward(&c.m, &df, &mut blk.fc_w, &mut blk.fc_b);
            dx.add_assign(&layer_norm_backward(&dm, &c.xhat2, &c.inv2, &mut blk.ln2_g, &mut blk.ln2_b));
            // Attention branch.
            let datt = linear_backward(&c.att, &dx, &mut blk.proj_w, &mut blk.proj_b);
            let mut dqkv = Tensor::zeros(n, 3 * d);
            let mut dp = vec![T::zero(); len];
            for b in 0..cache.batch {
                for h in 0..heads {
                    let p = &c.probs[b * heads + h];
                    let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                    for i in 0..len {
                        let go = &datt.row(b * len + i)[qo..qo + dh];
                        let pi = &p[i * len..i * len + i + 1];
                        let mut inner = T::zero();
                        for j in 0..=i {
                            dp[j] = dot(go, &c.qkv.row(b * len + j)[vo..vo + dh]);
                            inner = inner + dp[j] * pi[j];
                            axpy(&mut dqkv.row_mut(b * len + j)[vo..vo + dh], pi[j], go);
                        }
                        for j in 0..=i {
                            let ds = pi[j] * (dp[j] - inner) * scale;
                            if ds == T::zero() {
                                continue;
                            }
                            axpy(&mut dqkv.row_mut(b * len + i)[qo..qo + dh], ds, &c.qkv.row(b * len + j)[ko..ko + dh]);
                            axpy(&mut dqkv.row_mut(b * len + j)[ko..ko + dh], ds, &c.qkv.row(b * len + i)[qo..qo + dh]);
                        }
                    }
                }
            }
            let da = linear_backward(&c.a, &dqkv, &mut blk.attn_w, &mut blk.attn_b);
            dx.add_assign(&layer_norm_backward(&da, &c.xhat1, &c.inv1, &mut blk.ln1_g, &mut blk.ln1_b));
        }
        for (i, &t) in cache.tokens.iter().enumerate() {
            let g = dx.row(i);
            axpy(self.tok.grad.row_mut(t as usize), T::one(), g);
            axpy(self.pos.grad.row_mut(i % len), T::one(), g);
        }
        Ok(())
    }

    /// Logits of the next token after feeding `token` at position
    /// `cache.len()`.
    pub fn step(&self, token: u32, cache: &mut KvCache<T>) -> Result<Vec<T>> {
        let pos = cache.len;
        if pos >= self.config.context {
            return Err(Error::ContextOverflow { len: pos + 1, context: self.config.context });
        }
        if token as usize >= self.config.vocab_size {
            return Err(Error::InvalidArgument(format!("token id {token} outside vocabulary")));
        }
        if cache.keys.is_empty() {
            cache.keys = vec![Vec::new(); self.blocks.len()];
            cache.values = vec![Vec::new(); self.blocks.len()];
        }
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).sqrt();
        let mut x = Tensor::zeros(1, d);
        x.data.copy_from_slice(self.tok.value.row(token as usize));
        axpy(&mut x.data, T::one(), self.pos.value.row(pos));
        for (l, blk) in self.blocks.iter().enumerate() {
            let (a, _, _) = layer_norm(&x, &blk.ln1_g, &blk.ln1_b);
            let qkv = linear(&a, &blk.attn_w, &blk.attn_b);
            cache.keys[l].extend_from_slice(&qkv.data[d..2 * d]);
            cache.values[l].extend_from_slice(&qkv.data[2 * d..]);
            let (keys, values) = (&cache.keys[l], &cache.values[l]);
            let mut att = Tensor::zeros(1, d);
            let mut s = vec![T::zero(); pos + 1];
            for h in 0..heads {
                let q = &qkv.data[h * dh..(h + 1) * dh];
                for (j, sj) in s.iter_mut().enumerate() {
                    *sj = dot(q, &keys[j * d + h * dh..j * d + (h + 1) * dh]) * scale;
                }
                crate::neural::layers::softmax_in_place(&mut s);
                let out = &mut att.data[h * dh..(h + 1) * dh];
                for (j, &pj) in s.iter().enumerate() {
                    axpy(out, pj, &values[j * d + h * dh..j * d + (h + 1) * dh]);
                }
            }
            x.add_assign(&linear(&att, &blk.proj_w, &blk.proj_b));
            let (m, _, _) = layer_norm(&x, &blk.ln2_g, &blk.ln2_b);
            let hact = linear(&m, &blk.fc_w, &blk.fc_b).map(gelu);
            x.add_assign(&linear(&hact, &blk.out_w, &blk.out_b));
        }
        cache.len += 1;
        let (xf, _, _) = layer_norm(&x, &self.lnf_g, &self.lnf_b);
        Ok(matmul_nt(&xf, &self.tok.value).data)
    }
}

/// Mean next-token cross-entropy over positions whose target is not PAD,
/// and its gradient with respect to the logits.
pub fn next_token_loss<T: Real>(logits: &Tensor<T>, seqs: &[Vec<u32>]) -> Result<(T, Tensor<T>)> {
    let len = seqs.first().map_or(0, Vec::len);
    if logits.rows != seqs.len() * len {
        return Err(Error::Shape(format!("{} logit rows for {} tokens", logits.rows, seqs.len() * len)));
    }
    let count = seqs.iter().map(|s| s.iter().skip(1).filter(|&&t| t != PAD).count()).sum::<usize>();
    if count == 0 {
        return Err(Error::EmptyInput("prediction targets"));
    }
    let inv = T::one() / T::from_usize(count);
    let mut grad = Tensor::zeros(logits.rows, logits.cols);
    let mut loss = T::zero();
    for (b, s) in seqs.iter().enumerate() {
        for t in 0..len - 1 {
            let target = s[t + 1];
            if target == PAD {
                continue;
            }
            let row = b * len + t;
            let lsm = crate::neural::log_softmax(logits.row(row));
            loss = loss - lsm[target as usize];
            let g = grad.row_mut(row);
            for (gk, &l) in g.iter_mut().zip(&lsm) {
                *gk = l.exp() * inv;
            }
            g[target as usize] = g[target as usize] - inv;
        }
    }
    Ok((loss * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck;

    fn tiny() -> GptConfig {
        GptConfig { vocab_size: 262, context: 6, d_model: 8, n_heads: 2, n_layers: 2, mlp_ratio: 4 }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut g: Gpt<f64> = Gpt::new(tiny(), &mut rng::seeded(1)).unwrap();
        // Larger init so the check is not dominated by tiny values.
        g.visit_params(&mut |n, p| {
            if n.ends_with(".w") || n == "tok" || n == "pos" {
                p.value.scale(10.0);
            }
        });
        let seqs = vec![vec![256, 10, 11, 259, 257, PAD], vec![256, 3, 4, 5, 260, 257]];
        let eval = |g: &mut Gpt<f64>| {
            let (logits, _) = g.forward(&seqs)?;
            Ok(next_token_loss(&logits, &seqs)?.0)
        };
        let report = gradcheck::check(
            &mut g,
            1e-5,
            1e-6,
            |g| {
                g.zero_grad();
                let (logits, cache) = g.forward(&seqs)?;
                let (loss, dl) = next_token_loss(&logits, &seqs)?;
                g.backward(&cache, &dl)?;
                Ok(loss)
            },
            |g| eval(g),
            |g, f| g.visit_params(f),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-3, "{report:?}");
    }

    #[test]
    fn future_tokens_do_not_leak() {
        let g: Gpt<f32> = Gpt::new(tiny(), &mut rng::seeded(2)).unwrap();
        let a = vec![vec![256, 10, 11, 12, 13, 14]];
        let (la, _) = g.forward(&a).unwrap();
        for t in 1..6 {
            let mut b = a.clone();
            b[0][t] = 200;
            let (lb, _) = g.forward(&b).unwrap();
            for p in 0..t {
                assert_eq!(la.row(p), lb.row(p), "position {p} changed after editing {t}");
            }
            assert_ne!(la.row(t), lb.row(t));
        }
    }

    #[test]
    fn incremental_decoding_matches_full_pass() {
        let g: Gpt<f64> = Gpt::new(tiny(), &mut rng::seeded(3)).unwrap();
        let seq = vec![256, 40, 41, 42, 43];
        let (full, _) = g.forward(&[seq.clone()]).unwrap();
        let mut kv = KvCache::default();
        for (p, &t) in seq.iter().enumerate() {
            let l = g.step(t, &mut kv).unwrap();
            for (a, b) in l.iter().zip(full.row(p)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(g.step(1, &mut kv).is_ok());
        assert!(matches!(g.step(1, &mut kv), Err(Error::ContextOverflow { .. })));
    }

    #[test]
    fn padding_is_masked() {
        let g: Gpt<f64> = Gpt::new(tiny(), &mut rng::seeded(4)).unwrap();
        let short = vec![vec![256, 10, 11, 257]];
        let padded = vec![vec![256, 10, 11, 257, PAD, PAD]];
        let (l1, _) = g.forward(&short).unwrap();
        let (l2, _) = g.forward(&padded).unwrap();
        let a = next_token_loss(&l1, &short).unwrap().0;
        let b = next_token_loss(&l2, &padded).unwrap().0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rejects_long_sequences() {
        let g: Gpt<f32> = Gpt::new(tiny(), &mut rng::seeded(5)).unwrap();
        assert!(matches!(g.forward(&[vec![1; 7]]), Err(Error::ContextOverflow { len: 7, context: 6 })));
        assert!(g.forward(&[vec![1; 3], vec![1; 4]]).is_err());
        assert!(g.forward(&[vec![999]]).is_err());
    }
}
