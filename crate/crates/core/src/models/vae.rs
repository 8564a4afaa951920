//! TVAE and its shared variants STVAE (no per-column δ) and STVAEM
//! (column-name signatures appended to every input row).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normal_tensor, tensor_matrix, ModelKind, NetSize, TabularModel};
use crate::embedding::name_embedding;
use crate::error::{Error, Result};
use crate::neural::losses::softmax_cross_entropy;
use crate::neural::{Adam, AdamConfig, Dense, HeadAct, HeadSpan, Heads, Layer, Mode, Net, Param, Tensor};
use crate::real::Real;
use crate::table::Table;
use crate::transform::{Block, BlockKind, ColumnTransformer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VaeVariant {
    Tvae,
    Stvae,
    Stvaem,
}

impl VaeVariant {
    pub fn kind(self) -> ModelKind {
        match self {
            VaeVariant::Tvae => ModelKind::Tvae,
            VaeVariant::Stvae => ModelKind::Stvae,
            VaeVariant::Stvaem => ModelKind::Stvaem,
        }
    }

    pub fn from_kind(kind: ModelKind) -> Option<Self> {
        match kind {
            ModelKind::Tvae => Some(VaeVariant::Tvae),
            ModelKind::Stvae => Some(VaeVariant::Stvae),
            ModelKind::Stvaem => Some(VaeVariant::Stvaem),
            _ => None,
        }
    }

    pub fn has_delta(self) -> bool {
        self == VaeVariant::Tvae
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Initial value of the TVAE per-column standard deviations.
    pub delta_init: f64,
    /// Lower clamp applied to δ after every update.
    pub delta_min: f64,
    /// Width of each column signature (STVAEM only).
    pub signature_dim: usize,
    /// Weight of the squared α error (STVAE, STVAEM). As a Gaussian
    /// likelihood this is `1 / (2σ²)` for one fixed σ shared by every
    /// column; the default matches σ = `delta_init`.
    #[serde(default = "default_mse_scale")]
    pub mse_scale: f64,
    /// Multiplier on the reconstruction term of the loss.
    #[serde(default = "default_recon_weight")]
    pub recon_weight: f64,
}

fn default_mse_scale() -> f64 {
    50.0
}

fn default_recon_weight() -> f64 {
    2.0
}

impl VaeConfig {
    pub fn with_size(size: NetSize) -> Self {
        Self { hidden: size.hidden(), ..Self::default() }
    }
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            hidden: NetSize::Normal.hidden(),
            latent: 128,
            batch_size: 500,
            adam: AdamConfig::vae(),
            delta_init: 0.1,
            delta_min: 1e-3,
            signature_dim: 32,
            mse_scale: default_mse_scale(),
            recon_weight: default_recon_weight(),
        }
    }
}

/// Where STVAEM column signatures come from.
#[derive(Debug, Clone, Copy)]
pub enum SignatureSource<'a> {
    /// Hashed character n-grams of the column name.
    Hashing,
    /// Precomputed vectors keyed by column name.
    External(&'a BTreeMap<String, Vec<f64>>),
}

/// Per-column signatures concatenated in encoded-column order (numerical
/// columns first, then categorical). Empty when `dim` is 0.
pub fn stvaem_signatures(transformer: &ColumnTransformer, source: SignatureSource<'_>, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(transformer.columns.len() * dim);
    for col in &transformer.columns {
        let v = match source {
            SignatureSource::Hashing => name_embedding(&col.name, dim)?,
            SignatureSource::External(map) => map.get(&col.name).cloned().ok_or_else(|| Error::MissingEmbedding(col.name.clone()))?,
        };
        if v.len() != dim {
            return Err(Error::Shape(format!("embedding of `{}` has {} values, expected {dim}", col.name, v.len())));
        }
        out.extend(v);
    }
    Ok(out)
}

/// Everything the loss and the backward pass need from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeForward<T: Real = f32> {
    pub mu: Tensor<T>,
    pub logvar: Tensor<T>,
    pub sigma: Tensor<T>,
    pub eps: Tensor<T>,
    pub z: Tensor<T>,
    /// Raw decoder outputs.
    pub logits: Tensor<T>,
    /// `tanh` on α spans, softmax on β and d spans.
    pub output: Tensor<T>,
}

/// Batch-averaged loss terms and their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Elbo<T: Real = f32> {
    pub loss: T,
    pub recon: T,
    pub kl: T,
    pub d_logits: Tensor<T>,
    pub d_mu: Tensor<T>,
    pub d_logvar: Tensor<T>,
    pub d_delta: Option<Vec<T>>,
}

/// Negative ELBO averaged over the batch: reconstruction plus
/// `KL(N(μ, σ²) ‖ N(0, I))`, with `σ² = exp(logvar)`.
///
/// Numerical α terms are the Gaussian NLL `½ln(2πδ²) + (α − ᾱ)²/(2δ²)`
/// for TVAE and the squared error `(α̂ − α)²` otherwise; β and d terms are
/// cross-entropies of the raw logits.
pub fn elbo_loss<T: Real>(
    variant: VaeVariant,
    blocks: &[Block],
    logits: &Tensor<T>,
    target: &Tensor<T>,
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    delta: Option<&[T]>,
    mse_scale: f64,
) -> Result<Elbo<T>> {
    if logits.shape() != target.shape() || mu.shape() != logvar.shape() || mu.rows != logits.rows {
        return Err(Error::Shape(format!("logits {:?}, target {:?}, μ {:?}, logvar {:?}", logits.shape(), target.shape(), mu.shape(), logvar.shape())));
    }
    let n_alpha = blocks.iter().filter(|b| b.kind == BlockKind::Alpha).count();
    match (variant.has_delta(), delta) {
        (true, Some(d)) if d.len() == n_alpha => {}
        (true, _) => return Err(Error::InvalidArgument(format!("TVAE needs {n_alpha} δ values"))),
        (false, Some(_)) => return Err(Error::InvalidArgument("δ is only defined for TVAE".into())),
        (false, None) => {}
    }
    let b = logits.rows;
    if b == 0 {
        return Err(Error::EmptyInput("batch"));
    }
    let inv_b = T::one() / T::from_usize(b);
    let half = T::from_f64(0.5);
    let two = T::from_f64(2.0);
    let ln_2pi = T::from_f64(libm::log(2.0 * core::f64::consts::PI));
    let mse = T::from_f64(mse_scale);
    let mut d_logits = Tensor::zeros(logits.rows, logits.cols);
    let mut d_delta = delta.map(|d| vec![T::zero(); d.len()]);
    let mut recon = T::zero();
    for i in 0..b {
        let (l, t) = (logits.row(i), target.row(i));
        let g = d_logits.row_mut(i);
        let mut alpha_idx = 0;
        for blk in blocks {
            let r = blk.span.range();
            match blk.kind {
                BlockKind::Alpha => {
                    let k = r.start;
                    let a_hat = l[k].tanh();
                    let e = a_hat - t[k];
                    let dtanh = T::one() - a_hat * a_hat;
                    match delta {
                        Some(d) => {
                            let s = d[alpha_idx];
                            recon = recon + half * (ln_2pi + two * s.ln()) + e * e / (two * s * s);
                            g[k] = e / (s * s) * dtanh * inv_b;
                            let dd = d_delta.as_mut().unwrap();
                            dd[alpha_idx] = dd[alpha_idx] + (T::one() / s - e * e / (s * s * s)) * inv_b;
                        }
                        None => {
                            recon = recon + mse * e * e;
                            g[k] = two * mse * e * dtanh * inv_b;
                        }
                    }
                    alpha_idx += 1;
                }
                BlockKind::Mode | BlockKind::Category => {
                    let (ce, grad) = softmax_cross_entropy(&l[r.clone()], &t[r.clone()]);
                    recon = recon + ce;
                    for (gk, d) in g[r].iter_mut().zip(grad) {
                        *gk = d * inv_b;
                    }
                }
            }
        }
    }
    let mut kl = T::zero();
    let mut d_mu = Tensor::zeros(mu.rows, mu.cols);
    let mut d_logvar = Tensor::zeros(mu.rows, mu.cols);
    for k in 0..mu.data.len() {
        let (m, lv) = (mu.data[k], logvar.data[k]);
        let s2 = lv.exp();
        kl = kl + half * (m * m + s2 - T::one() - lv);
        d_mu.data[k] = m * inv_b;
        d_logvar.data[k] = half * (s2 - T::one()) * inv_b;
    }
    let recon = recon * inv_b;
    let kl = kl * inv_b;
    Ok(Elbo { loss: recon + kl, recon, kl, d_logits, d_mu, d_logvar, d_delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VaeLosses {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct Vae<T: Real = f32> {
    pub variant: VaeVariant,
    pub config: VaeConfig,
    pub transformer: ColumnTransformer,
    pub encoder: Net<T>,
    pub mu: Dense<T>,
    pub logvar: Dense<T>,
    pub decoder: Net<T>,
    pub heads: Heads<T>,
    /// Per-numerical-column standard deviation (TVAE only), `[1, N_c]`.
    pub delta: Option<Param<T>>,
    /// Row-constant input augmentation (STVAEM only).
    pub signature: Vec<T>,
    pub optimizer: Adam<T>,
}

fn visit_parts<T: Real>(
    encoder: &mut Net<T>,
    mu: &mut Dense<T>,
    logvar: &mut Dense<T>,
    decoder: &mut Net<T>,
    delta: &mut Option<Param<T>>,
    f: &mut dyn FnMut(&str, &mut Param<T>),
) {
    encoder.visit_params("enc.", f);
    f("mu.w", &mut mu.w);
    f("mu.b", &mut mu.b);
    f("logvar.w", &mut logvar.w);
    f("logvar.b", &mut logvar.b);
    decoder.visit_params("dec.", f);
    if let Some(d) = delta {
        f("delta", d);
    }
}

impl<T: Real> Vae<T> {
    /// `signature` must hold one `signature_dim`-wide vector per column
    /// for STVAEM (see [`stvaem_signatures`]) and be empty otherwise.
    pub fn new<R: Rng + ?Sized>(variant: VaeVariant, transformer: ColumnTransformer, config: VaeConfig, signature: Vec<f64>, rng: &mut R) -> Result<Self> {
        if config.hidden.is_empty() || config.latent == 0 || config.batch_size == 0 {
            return Err(Error::InvalidArgument("empty network or batch".into()));
        }
        let expected = if variant == VaeVariant::Stvaem { transformer.columns.len() * config.signature_dim } else { 0 };
        if signature.len() != expected {
            return Err(Error::Shape(format!("signature of width {} for variant {variant:?}, expected {expected}", signature.len())));
        }
        let row = transformer.width;
        let inp = row + signature.len();
        let mut layers = Vec::new();
        let mut d = inp;
        for &h in &config.hidden {
            layers.push(Layer::Dense(Dense::new(d, h, rng)));
            layers.push(Layer::relu());
            d = h;
        }
        let encoder = Net::new(inp, layers);
        let mu = Dense::new(d, config.latent, rng);
        let logvar = Dense::new(d, config.latent, rng);
        let mut layers = Vec::new();
        let mut d = config.latent;
        for &h in &config.hidden {
            layers.push(Layer::Dense(Dense::new(d, h, rng)));
            layers.push(Layer::relu());
            d = h;
        }
        layers.push(Layer::Dense(Dense::new(d, row, rng)));
        let decoder = Net::new(config.latent, layers);
        let spans = transformer
            .blocks()
            .into_iter()
            .map(|b| HeadSpan {
                start: b.span.start,
                width: b.span.width,
                act: if b.kind == BlockKind::Alpha { HeadAct::Tanh } else { HeadAct::Softmax },
            })
            .collect();
        let heads = Heads::new(spans)?;
        let n_num = transformer.numeric_columns().count();
        let delta = variant.has_delta().then(|| Param::new(Tensor::filled(1, n_num, T::from_f64(config.delta_init))));
        let optimizer = Adam::new(config.adam);
        let signature = signature.into_iter().map(T::from_f64).collect();
        Ok(Self { variant, config, transformer, encoder, mu, logvar, decoder, heads, delta, signature, optimizer })
    }

    pub fn row_width(&self) -> usize {
        self.transformer.width
    }

    pub fn input_width(&self) -> usize {
        self.encoder.in_dim
    }

    pub fn with_signature(&self, rows: &Tensor<T>) -> Result<Tensor<T>> {
        if rows.cols != self.row_width() {
            return Err(Error::Shape(format!("batch width {} != row width {}", rows.cols, self.row_width())));
        }
        if self.signature.is_empty() {
            return Ok(rows.clone());
        }
        let mut sig = Tensor::zeros(rows.rows, self.signature.len());
        for i in 0..rows.rows {
            sig.row_mut(i).copy_from_slice(&self.signature);
        }
        Tensor::hcat(&[rows, &sig])
    }

    /// Encodes, reparameterizes with `eps` (drawn from `rng` when `None`)
    /// and decodes.
    pub fn forward<R: Rng + ?Sized>(&mut self, rows: &Tensor<T>, eps: Option<&Tensor<T>>, mode: Mode, rng: &mut R) -> Result<VaeForward<T>> {
        let x = self.with_signature(rows)?;
        let h = self.encoder.forward(&x, mode, rng)?;
        let mu = self.mu.forward(&h)?;
        let logvar = self.logvar.forward(&h)?;
        let sigma = logvar.map(|v| (v * T::from_f64(0.5)).exp());
        let eps = match eps {
            Some(e) if e.shape() == mu.shape() => e.clone(),
            Some(e) => return Err(Error::Shape(format!("ε {:?} vs μ {:?}", e.shape(), mu.shape()))),
            None => normal_tensor(mu.rows, mu.cols, rng),
        };
        let mut z = mu.clone();
        for k in 0..z.data.len() {
            z.data[k] = z.data[k] + sigma.data[k] * eps.data[k];
        }
        let logits = self.decoder.forward(&z, mode, rng)?;
        let output = self.heads.forward(&logits, Mode::Eval, rng)?;
        Ok(VaeForward { mu, logvar, sigma, eps, z, logits, output })
    }

    pub fn loss_of(&self, fwd: &VaeForward<T>, target: &Tensor<T>) -> Result<Elbo<T>> {
        let delta = self.delta.as_ref().map(|d| d.value.data.as_slice());
        let mut elbo = elbo_loss(self.variant, &self.transformer.blocks(), &fwd.logits, target, &fwd.mu, &fwd.logvar, delta, self.config.mse_scale)?;
        let w = T::from_f64(self.config.recon_weight);
        if w != T::one() {
            elbo.loss = w * elbo.recon + elbo.kl;
            elbo.d_logits.scale(w);
            if let Some(d) = elbo.d_delta.as_mut() {
                d.iter_mut().for_each(|v| *v = *v * w);
            }
        }
        Ok(elbo)
    }

    /// Accumulates parameter gradients of `elbo` through the forward pass
    /// that produced `fwd`.
    pub fn backward(&mut self, fwd: &VaeForward<T>, elbo: &Elbo<T>) -> Result<()> {
        let dz = self.decoder.backward(&elbo.d_logits)?;
        let mut d_mu = elbo.d_mu.clone();
        let mut d_lv = elbo.d_logvar.clone();
        let half = T::from_f64(0.5);
        for k in 0..dz.data.len() {
            d_mu.data[k] = d_mu.data[k] + dz.data[k];
            d_lv.data[k] = d_lv.data[k] + dz.data[k] * fwd.eps.data[k] * fwd.sigma.data[k] * half;
        }
        let mut dh = self.mu.backward(&d_mu)?;
        dh.add_assign(&self.logvar.backward(&d_lv)?);
        self.encoder.backward(&dh)?;
        if let (Some(d), Some(g)) = (self.delta.as_mut(), elbo.d_delta.as_ref()) {
            for (a, &b) in d.grad.data.iter_mut().zip(g) {
                *a = *a + b;
            }
        }
        Ok(())
    }

    /// Forward, loss and backward on fixed inputs.
    pub fn objective<R: Rng + ?Sized>(&mut self, rows: &Tensor<T>, eps: Option<&Tensor<T>>, mode: Mode, rng: &mut R) -> Result<Elbo<T>> {
        let fwd = self.forward(rows, eps, mode, rng)?;
        let elbo = self.loss_of(&fwd, rows)?;
        self.backward(&fwd, &elbo)?;
        Ok(elbo)
    }

    pub fn train_batch<R: Rng + ?Sized>(&mut self, rows: &Tensor<T>, rng: &mut R) -> Result<VaeLosses> {
        self.zero_grad();
        let elbo = self.objective(rows, None, Mode::Train, rng)?;
        let losses = VaeLosses { loss: elbo.loss.as_f64(), recon: elbo.recon.as_f64(), kl: elbo.kl.as_f64() };
        if !losses.loss.is_finite() {
            return Err(Error::NonFinite("vae loss"));
        }
        let opt = &mut self.optimizer;
        let mut result = Ok(());
        visit_parts(&mut self.encoder, &mut self.mu, &mut self.logvar, &mut self.decoder, &mut self.delta, &mut |n, p| {
            if result.is_ok() {
                result = opt.update(n, p);
            }
        });
        result?;
        if let Some(d) = self.delta.as_mut() {
            let floor = T::from_f64(self.config.delta_min);
            d.value.data.iter_mut().for_each(|v| *v = v.max(floor));
        }
        Ok(losses)
    }

    /// Loss on `rows` without touching the parameters.
    pub fn evaluate<R: Rng + ?Sized>(&mut self, rows: &Tensor<T>, rng: &mut R) -> Result<VaeLosses> {
        let fwd = self.forward(rows, None, Mode::Eval, rng)?;
        let elbo = self.loss_of(&fwd, rows)?;
        Ok(VaeLosses { loss: elbo.loss.as_f64(), recon: elbo.recon.as_f64(), kl: elbo.kl.as_f64() })
    }

    /// Decodes `z ~ N(0, I)`; discrete blocks are read by argmax.
    pub fn sample<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> Result<Table> {
        let mut out = Tensor::zeros(0, self.row_width());
        let chunk = self.config.batch_size.max(1);
        let mut done = 0;
        while done < n {
            let m = chunk.min(n - done);
            let z = normal_tensor(m, self.config.latent, rng);
            let logits = self.decoder.forward(&z, Mode::Eval, rng)?;
            let rows = self.heads.forward(&logits, Mode::Eval, rng)?;
            out.data.extend_from_slice(&rows.data);
            out.rows += m;
            done += m;
        }
        self.transformer.decode_table("synthetic", &tensor_matrix(&out))
    }

    fn last_decoder_layer(&self) -> usize {
        self.decoder.layers.len() - 1
    }
}

impl<T: Real> TabularModel<T> for Vae<T> {
    fn kind(&self) -> ModelKind {
        self.variant.kind()
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        visit_parts(&mut self.encoder, &mut self.mu, &mut self.logvar, &mut self.decoder, &mut self.delta, f);
    }

    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor<T>)) {}

    /// The encoder input layer, the decoder output layer and δ depend on
    /// the table.
    fn is_head(&self, name: &str) -> bool {
        name.starts_with("enc.0.") || name.starts_with(&format!("dec.{}.", self.last_decoder_layer())) || name == "delta"
    }
}

#[cfg(test)]
#[path = "vae_tests.rs"]
mod tests;
