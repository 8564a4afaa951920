//! Conditional tabular GAN trained with WGAN-GP on packed samples.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_cond_vector, normal_tensor, sample_condition, sample_condition_empirical, sample_real_conditioned, tensor_matrix, CondLayout,
    CondSampler, ModelKind, NetSize, ParamMap, TabularModel, TransferReport,
};
use crate::error::{Error, Result};
use crate::neural::losses::softmax_cross_entropy;
use crate::neural::{Adam, AdamConfig, BatchNorm, Dense, HeadAct, HeadSpan, Heads, Layer, Mode, Net, Param, Tensor};
use crate::real::Real;
use crate::table::Table;
use crate::transform::{BlockKind, ColumnTransformer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtganConfig {
    pub z_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub pac: usize,
    pub batch_size: usize,
    /// Gradient-penalty weight λ.
    pub lambda: f64,
    /// Gumbel-softmax temperature of the discrete heads.
    pub tau: f64,
    pub leaky_slope: f64,
    pub dropout: f64,
    pub adam: AdamConfig,
}

impl CtganConfig {
    pub fn with_size(size: NetSize) -> Self {
        Self { generator_hidden: size.hidden(), critic_hidden: size.hidden(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pac == 0 || self.batch_size == 0 || self.batch_size % self.pac != 0 {
            return Err(Error::InvalidArgument(format!("batch size {} is not a multiple of pac {}", self.batch_size, self.pac)));
        }
        if self.z_dim == 0 {
            return Err(Error::InvalidArgument("z dimension must be positive".into()));
        }
        if !(self.lambda >= 0.0) || !(self.tau > 0.0) || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("lambda, tau or dropout out of range".into()));
        }
        Ok(())
    }
}

impl Default for CtganConfig {
    fn default() -> Self {
        Self {
            z_dim: 128,
            generator_hidden: NetSize::Normal.hidden(),
            critic_hidden: NetSize::Normal.hidden(),
            pac: 10,
            batch_size: 500,
            lambda: 10.0,
            tau: 0.2,
            leaky_slope: 0.2,
            dropout: 0.5,
            adam: AdamConfig::gan(),
        }
    }
}

/// Losses of one batch step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CtganLosses {
    /// `mean C(fake) − mean C(real)`
    pub critic: f64,
    pub penalty: f64,
    /// Adversarial term plus conditional cross-entropy.
    pub generator: f64,
    pub cross_entropy: f64,
}

/// Forward modes of the three parts during an objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepModes {
    pub generator: Mode,
    pub heads: Mode,
    pub critic: Mode,
}

impl StepModes {
    pub const TRAIN: StepModes = StepModes { generator: Mode::Train, heads: Mode::Train, critic: Mode::Train };
    /// Batch statistics in the generator, no noise anywhere.
    pub const DETERMINISTIC: StepModes = StepModes { generator: Mode::Train, heads: Mode::Eval, critic: Mode::Eval };
}

#[derive(Debug, Clone)]
pub struct Ctgan<T: Real = f32> {
    pub config: CtganConfig,
    pub transformer: ColumnTransformer,
    pub layout: CondLayout,
    /// Training-time category counts, used to draw generation conditions.
    pub frequencies: Vec<Vec<f64>>,
    pub generator: Net<T>,
    pub heads: Heads<T>,
    pub critic: Net<T>,
    pub optimizer: Adam<T>,
}

fn head_spans(transformer: &ColumnTransformer, tau: f64) -> Vec<HeadSpan> {
    transformer
        .blocks()
        .into_iter()
        .map(|b| HeadSpan {
            start: b.span.start,
            width: b.span.width,
            act: match b.kind {
                BlockKind::Alpha => HeadAct::Tanh,
                _ => HeadAct::Gumbel { tau },
            },
        })
        .collect()
}

/// `h_{l+1} = h_l ⊕ ReLU(BN(FC(h_l)))` blocks followed by the output layer.
fn build_generator<T: Real, R: Rng + ?Sized>(inp: usize, hidden: &[usize], out: usize, rng: &mut R) -> Net<T> {
    let mut layers = Vec::new();
    let mut d = inp;
    for &h in hidden {
        let inner = Net::new(d, vec![Layer::Dense(Dense::new(d, h, rng)), Layer::BatchNorm(BatchNorm::new(h)), Layer::relu()]);
        layers.push(Layer::ConcatSkip(alloc::boxed::Box::new(inner)));
        d += h;
    }
    layers.push(Layer::Dense(Dense::new(d, out, rng)));
    Net::new(inp, layers)
}

fn build_critic<T: Real, R: Rng + ?Sized>(inp: usize, hidden: &[usize], slope: f64, dropout: f64, rng: &mut R) -> Net<T> {
    let mut layers = Vec::new();
    let mut d = inp;
    for &h in hidden {
        layers.push(Layer::Dense(Dense::new(d, h, rng)));
        layers.push(Layer::leaky_relu(slope));
        layers.push(Layer::dropout(dropout));
        d = h;
    }
    layers.push(Layer::Dense(Dense::new(d, 1, rng)));
    Net::new(inp, layers)
}

/// Packs `[B, R]` rows and `[B, C]` conditions into `[B/pac, pac·(R+C)]`.
pub fn pack_with_cond<T: Real>(rows: &Tensor<T>, cond: &Tensor<T>, pac: usize) -> Result<Tensor<T>> {
    Tensor::hcat(&[rows, cond])?.pack_rows(pac)
}

/// Gradient penalty with explicit interpolation weights `rho` (one per
/// pack). Accumulates `∂penalty/∂θ` into the critic gradients and returns
/// `λ · mean_k (‖∇_r̃ C‖₂ − 1)²`, where the gradient is taken with respect
/// to the row part of each packed sample (the conditions are identical in
/// the real and fake packs and are not interpolated).
#[allow(clippy::too_many_arguments)]
pub fn gradient_penalty_with<T: Real, R: Rng + ?Sized>(
    critic: &mut Net<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    cond: &Tensor<T>,
    pac: usize,
    lambda: f64,
    rho: &[T],
    mode: Mode,
    rng: &mut R,
) -> Result<T> {
    if real.shape() != fake.shape() || cond.rows != real.rows {
        return Err(Error::Shape(format!("real {:?}, fake {:?}, cond {:?}", real.shape(), fake.shape(), cond.shape())));
    }
    if pac == 0 || real.rows % pac != 0 || rho.len() != real.rows / pac {
        return Err(Error::Shape(format!("{} rows, pac {pac}, {} interpolation weights", real.rows, rho.len())));
    }
    let r = real.cols;
    let seg = r + cond.cols;
    let mut mixed = real.clone();
    for i in 0..real.rows {
        let p = rho[i / pac];
        for (m, (&f, &x)) in mixed.row_mut(i).iter_mut().zip(fake.row(i).iter().zip(real.row(i))) {
            *m = p * f + (T::one() - p) * x;
        }
    }
    let packed = pack_with_cond(&mixed, cond, pac)?;
    critic.forward(&packed, mode, rng)?;
    let bp = packed.rows;
    let lam = T::from_f64(lambda);
    let scale = lam / T::from_usize(bp);
    let mut penalty = T::zero();
    critic.input_gradient_backprop(|g| {
        let mut up = Tensor::zeros(g.rows, g.cols);
        for k in 0..g.rows {
            let gk = g.row(k);
            let sq: T = (0..pac).flat_map(|p| gk[p * seg..p * seg + r].iter()).map(|&v| v * v).sum();
            let n = sq.sqrt();
            penalty = penalty + (n - T::one()) * (n - T::one());
            if n > T::zero() {
                let c = scale * T::from_f64(2.0) * (n - T::one()) / n;
                let uk = up.row_mut(k);
                for p in 0..pac {
                    for j in p * seg..p * seg + r {
                        uk[j] = c * gk[j];
                    }
                }
            }
        }
        Ok(up)
    })?;
    Ok(penalty * scale)
}

/// [`gradient_penalty_with`] drawing `ρ ~ U(0, 1)` per pack from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_penalty<T: Real, R: Rng + ?Sized>(
    critic: &mut Net<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    cond: &Tensor<T>,
    pac: usize,
    lambda: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<T> {
    if pac == 0 || real.rows % pac != 0 {
        return Err(Error::Shape(format!("{} rows cannot be packed by {pac}", real.rows)));
    }
    let rho: Vec<T> = (0..real.rows / pac).map(|_| T::from_f64(rng.gen::<f64>())).collect();
    gradient_penalty_with(critic, real, fake, cond, pac, lambda, &rho, mode, rng)
}

/// A batch of conditions: the drawn `(i*, k*)` per row (none in
/// condition-free mode) and the stacked conditional vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CondBatch<T: Real = f32> {
    pub picks: Vec<Option<(usize, usize)>>,
    pub vectors: Tensor<T>,
}

impl<T: Real> CondBatch<T> {
    pub fn from_picks(layout: &CondLayout, picks: Vec<Option<(usize, usize)>>) -> Result<Self> {
        let mut vectors = Tensor::zeros(picks.len(), layout.width);
        for (j, p) in picks.iter().enumerate() {
            if let Some((i, k)) = *p {
                vectors.row_mut(j).copy_from_slice(&build_cond_vector(layout, i, k)?);
            }
        }
        Ok(Self { picks, vectors })
    }
}

impl<T: Real> Ctgan<T> {
    pub fn new<R: Rng + ?Sized>(transformer: ColumnTransformer, frequencies: Vec<Vec<f64>>, config: CtganConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layout = CondLayout::new(&transformer);
        if frequencies.len() != layout.n_columns() || frequencies.iter().zip(&layout.widths).any(|(f, &w)| f.len() != w) {
            return Err(Error::Shape("category frequencies do not match the categorical columns".into()));
        }
        let row = transformer.width;
        let generator = build_generator(config.z_dim + layout.width, &config.generator_hidden, row, rng);
        let critic = build_critic(config.pac * (row + layout.width), &config.critic_hidden, config.leaky_slope, config.dropout, rng);
        let heads = Heads::new(head_spans(&transformer, config.tau))?;
        let optimizer = Adam::new(config.adam);
        Ok(Self { config, transformer, layout, frequencies, generator, heads, critic, optimizer })
    }

    pub fn row_width(&self) -> usize {
        self.transformer.width
    }

    pub fn cond_width(&self) -> usize {
        self.layout.width
    }

    fn n_blocks(&self) -> usize {
        self.config.generator_hidden.len()
    }

    /// Training-by-sampling conditions for `n` rows.
    pub fn draw_conditions<R: Rng + ?Sized>(&self, sampler: &CondSampler, n: usize, rng: &mut R) -> Result<CondBatch<T>> {
        CondBatch::from_picks(&self.layout, (0..n).map(|_| sample_condition(sampler, rng)).collect())
    }

    /// Generator forward pass: `(pre-activation outputs, head outputs)`.
    pub fn generate<R: Rng + ?Sized>(&mut self, z: &Tensor<T>, cond: &Tensor<T>, modes: StepModes, rng: &mut R) -> Result<(Tensor<T>, Tensor<T>)> {
        let input = Tensor::hcat(&[z, cond])?;
        let logits = self.generator.forward(&input, modes.generator, rng)?;
        let out = self.heads.forward(&logits, modes.heads, rng)?;
        Ok((logits, out))
    }

    /// Critic objective `mean C(fake) − mean C(real) + GP` on fixed inputs;
    /// accumulates critic gradients. Returns `(wasserstein term, penalty)`.
    #[allow(clippy::too_many_arguments)]
    pub fn critic_objective<R: Rng + ?Sized>(
        &mut self,
        real: &Tensor<T>,
        fake: &Tensor<T>,
        cond: &Tensor<T>,
        rho: &[T],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(T, T)> {
        let pac = self.config.pac;
        let fake_p = pack_with_cond(fake, cond, pac)?;
        let real_p = pack_with_cond(real, cond, pac)?;
        let bp = fake_p.rows;
        let inv = T::one() / T::from_usize(bp);
        let y_fake = self.critic.forward(&fake_p, mode, rng)?;
        self.critic.backward(&Tensor::filled(bp, 1, inv))?;
        let y_real = self.critic.forward(&real_p, mode, rng)?;
        self.critic.backward(&Tensor::filled(bp, 1, -inv))?;
        let w = (y_fake.sum() - y_real.sum()) * inv;
        let gp = gradient_penalty_with(&mut self.critic, real, fake, cond, pac, self.config.lambda, rho, mode, rng)?;
        Ok((w, gp))
    }

    /// Generator objective `−mean C(fake) + (1/B) Σ CE(d̂_{i*}, m_{i*})` for
    /// fixed noise and conditions; accumulates generator gradients (and,
    /// as a side effect, critic gradients, which callers discard).
    /// Returns `(adversarial term, cross-entropy term)`.
    pub fn generator_objective<R: Rng + ?Sized>(&mut self, z: &Tensor<T>, cond: &CondBatch<T>, modes: StepModes, rng: &mut R) -> Result<(T, T)> {
        let pac = self.config.pac;
        let (logits, fake) = self.generate(z, &cond.vectors, modes, rng)?;
        let fake_p = pack_with_cond(&fake, &cond.vectors, pac)?;
        let bp = fake_p.rows;
        let y = self.critic.forward(&fake_p, modes.critic, rng)?;
        let adv = -y.sum() / T::from_usize(bp);
        let g_in = self.critic.backward(&Tensor::filled(bp, 1, -T::one() / T::from_usize(bp)))?;
        let g_fake = g_in.unpack_rows(pac)?.slice_cols(0, self.row_width());
        let mut g_logits = self.heads.backward(&g_fake)?;
        let b = T::from_usize(z.rows);
        let mut ce = T::zero();
        for (j, pick) in cond.picks.iter().enumerate() {
            let Some((i, k)) = *pick else { continue };
            let span = self.layout.row_spans[i];
            let mut target = vec![T::zero(); span.width];
            target[k] = T::one();
            let (loss, grad) = softmax_cross_entropy(&logits.row(j)[span.range()], &target);
            ce = ce + loss / b;
            for (g, d) in g_logits.row_mut(j)[span.range()].iter_mut().zip(grad) {
                *g = *g + d / b;
            }
        }
        self.generator.backward(&g_logits)?;
        Ok((adv, ce))
    }

    /// One iteration of batch training. `data` is the encoded training
    /// matrix; `rng` drives batch selection, `noise` the latent draws,
    /// dropout and Gumbel noise.
    pub fn train_batch<R: Rng + ?Sized, N: Rng + ?Sized>(
        &mut self,
        data: &Tensor<T>,
        sampler: &CondSampler,
        rng: &mut R,
        noise: &mut N,
    ) -> Result<CtganLosses> {
        if data.rows == 0 {
            return Err(Error::NoDataRows);
        }
        if data.cols != self.row_width() {
            return Err(Error::Shape(format!("data width {} != row width {}", data.cols, self.row_width())));
        }
        let b = self.config.batch_size;
        let pac = self.config.pac;

        // Critic step.
        let cond = self.draw_conditions(sampler, b, rng)?;
        let mut idx = Vec::with_capacity(b);
        for p in &cond.picks {
            idx.push(match *p {
                Some((i, k)) => sample_real_conditioned(sampler, i, k, rng)?,
                None => rng.gen_range(0..data.rows),
            });
        }
        let real = data.gather_rows(&idx);
        let z: Tensor<T> = normal_tensor(b, self.config.z_dim, noise);
        let (_, fake) = self.generate(&z, &cond.vectors, StepModes::TRAIN, noise)?;
        self.critic.zero_grad();
        let rho: Vec<T> = (0..b / pac).map(|_| T::from_f64(noise.gen::<f64>())).collect();
        let (w, gp) = self.critic_objective(&real, &fake, &cond.vectors, &rho, Mode::Train, noise)?;
        self.optimizer.step(&mut self.critic, "critic.")?;

        // Generator step with fresh conditions and noise.
        let cond = self.draw_conditions(sampler, b, rng)?;
        let z: Tensor<T> = normal_tensor(b, self.config.z_dim, noise);
        self.generator.zero_grad();
        let (adv, ce) = self.generator_objective(&z, &cond, StepModes::TRAIN, noise)?;
        self.optimizer.step(&mut self.generator, "gen.")?;
        self.critic.zero_grad();

        let losses = CtganLosses { critic: w.as_f64(), penalty: gp.as_f64(), generator: (adv + ce).as_f64(), cross_entropy: ce.as_f64() };
        if ![losses.critic, losses.penalty, losses.generator].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ctgan losses"));
        }
        Ok(losses)
    }

    fn sample_with<R: Rng + ?Sized>(&mut self, n: usize, mut pick: impl FnMut(&mut R) -> Option<(usize, usize)>, rng: &mut R) -> Result<Table> {
        let mut out = Tensor::zeros(0, self.row_width());
        let chunk = self.config.batch_size.max(1);
        let mut done = 0;
        while done < n {
            let m = chunk.min(n - done);
            let picks = (0..m).map(|_| pick(rng)).collect();
            let cond = CondBatch::<T>::from_picks(&self.layout, picks)?;
            let z = normal_tensor(m, self.config.z_dim, rng);
            let modes = StepModes { generator: Mode::Sample, heads: Mode::Sample, critic: Mode::Eval };
            let (_, rows) = self.generate(&z, &cond.vectors, modes, rng)?;
            out.data.extend_from_slice(&rows.data);
            out.rows += m;
            done += m;
        }
        self.transformer.decode_table("synthetic", &tensor_matrix(&out))
    }

    /// `n` synthetic rows. Conditions follow the training category
    /// frequencies so the marginals are not skewed towards rare categories.
    pub fn sample<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> Result<Table> {
        let sampler = CondSampler::from_counts(self.frequencies.clone());
        self.sample_with(n, |r| sample_condition_empirical(&sampler, r), rng)
    }

    /// `n` rows all generated under the condition `D_column = category`.
    pub fn sample_conditioned<R: Rng + ?Sized>(&mut self, n: usize, column: usize, category: usize, rng: &mut R) -> Result<Table> {
        self.layout.index(column, category)?;
        self.sample_with(n, |_| Some((column, category)), rng)
    }
}

impl<T: Real> TabularModel<T> for Ctgan<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Ctgan
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.generator.visit_params("gen.", f);
        self.critic.visit_params("critic.", f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.generator.visit_buffers("gen.", f);
    }

    /// The critic input layer and the generator output layer depend on
    /// the table width.
    fn is_head(&self, name: &str) -> bool {
        name.starts_with("critic.0.") || name.starts_with(&format!("gen.{}.", self.n_blocks()))
    }

    /// Loads every body parameter. The generator's block weights have
    /// rows for `z`, the condition and the earlier hidden blocks; the `z`
    /// and hidden rows are copied and the condition rows keep their fresh
    /// initialization since their meaning is table specific.
    fn load_body(&mut self, params: &ParamMap<T>) -> TransferReport {
        let mut report = TransferReport::default();
        let z = self.config.z_dim;
        let cond = self.layout.width;
        let n_blocks = self.n_blocks();
        let heads: Vec<String> = {
            let mut names = Vec::new();
            self.visit_params(&mut |n, _| names.push(String::from(n)));
            names.into_iter().filter(|n| self.is_head(n)).collect()
        };
        let block_weights: Vec<String> = (0..n_blocks).map(|i| format!("gen.{i}.0.w")).collect();
        let mut apply = |name: &str, t: &mut Tensor<T>| {
            if heads.iter().any(|h| h == name) {
                report.reinitialized.push(String::from(name));
                return;
            }
            let Some(src) = params.get(name) else {
                report.reinitialized.push(String::from(name));
                return;
            };
            if src.shape() == t.shape() && (!block_weights.iter().any(|b| b == name) || cond == 0) {
                t.clone_from(src);
                report.loaded.push(String::from(name));
                return;
            }
            if block_weights.iter().any(|b| b == name) && src.cols == t.cols && t.rows >= z + cond {
                let hidden = t.rows - z - cond;
                if src.rows >= z + hidden {
                    let old_cond = src.rows - z - hidden;
                    for r in 0..z {
                        t.row_mut(r).copy_from_slice(src.row(r));
                    }
                    for h in 0..hidden {
                        t.row_mut(z + cond + h).copy_from_slice(src.row(z + old_cond + h));
                    }
                    report.partial.push(String::from(name));
                    return;
                }
            }
            report.reinitialized.push(String::from(name));
        };
        self.visit_params(&mut |n, p| apply(n, &mut p.value));
        self.visit_buffers(&mut |n, t| apply(n, t));
        report
    }
}

#[cfg(test)]
#[path = "ctgan_tests.rs"]
mod tests;
