//! Alternating model / generator optimisation, SWAD hookup, baselines and
//! evaluation.
//!
//! Each iteration draws a source batch (equal quota per training domain),
//! synthesises a target batch with the current generator, takes one Adam
//! step on `−ELBO(source) + η·SMCD(target)` for the extractor and head, then
//! one Adam ascent step on `SMCD(target)` for the generator. Every
//! `val_period` iterations the validation loss is fed to SWAD, and training
//! stops once the averaging interval has closed.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Method, TrainConfig};
use crate::data::{DomainDataset, Split};
use crate::fourier::{self, FourierError, HalfAmplitude, HalfSpectrum, Spectrum};
use crate::generator::{
    synthesize_on_tape, GeneratorError, GeneratorParams, ImageShape, SourceSpectra, TargetNoise,
};
use crate::head::{self, argmax_rows, HeadError, HeadVars, VariationalHead};
use crate::losses::{mcd, smcd, LossError};
use crate::nn::{Extractor, ExtractorSpec, ExtractorVars};
use crate::optim::{Adam, AdamState, OptimError};
use crate::rng::{stream, Stream};
use crate::swad::{Phase, SwadError, SwadState};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("no training data: {0}")]
    EmptyDomain(String),
    #[error("non-finite {what} at iteration {iter}")]
    NonFinite { iter: usize, what: &'static str },
    #[error("invalid training setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Swad(#[from] SwadError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Rows per chunk when running the model over a whole dataset.
const EVAL_CHUNK: usize = 512;

/// Feature extractor plus variational head.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub extractor: Extractor,
    pub head: VariationalHead,
    pub shape: ImageShape,
}

impl Model {
    pub fn new(shape: ImageShape, classes: usize, spec: &ExtractorSpec, rng: &mut impl Rng) -> Result<Self> {
        let extractor = Extractor::new(shape, spec, rng);
        let head = VariationalHead::new(classes, extractor.feature_dim(), rng)?;
        Ok(Model { extractor, head, shape })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.extractor.params();
        p.extend(self.head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.extractor.params_mut();
        p.extend(self.head.params_mut());
        p
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// All parameters concatenated: extractor layers, then head mean and
    /// log-variance.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for p in self.params() {
            flat.extend_from_slice(p.data());
        }
        flat
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut at = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.data_mut().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    fn flat_input(&self, images: &Tensor) -> Result<Tensor> {
        let b = images.shape().first().copied().unwrap_or(0);
        Ok(images.clone().reshape(&[b, self.shape.pixels()])?)
    }

    /// Features of `[B, H, W, Ch]` images.
    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.extractor.features(&self.flat_input(images)?)?)
    }

    /// Posterior-mean logits of `[B, H, W, Ch]` images.
    pub fn mean_logits(&self, images: &Tensor) -> Result<Tensor> {
        Ok(head::mean_logits(&self.head, &self.features(images)?)?)
    }

    pub fn predict(&self, images: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.mean_logits(images)?))
    }
}

/// A minibatch of `[B, H, W, Ch]` images.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

/// Everything random that one iteration consumes, drawn up front so the two
/// steps see the same target batch.
#[derive(Clone, Debug)]
pub struct StepInputs {
    pub batch: Batch,
    /// Head weight draws `[n_mc, C, d]` for the ELBO.
    pub head_noise: Tensor,
    /// Head weight draws `[2·pairs, C, d]` for the discrepancy metric.
    pub eval_noise: Tensor,
    /// Generator input and mixup weights.
    pub target_noise: Option<TargetNoise>,
    pub spectra: Option<SourceSpectra>,
    /// Fixed target images for the amplitude-mixup baseline.
    pub mixed: Option<Tensor>,
}

/// Loss values of one model step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub elbo: f64,
    pub nll: f64,
    pub kl: f64,
    /// Discrepancy loss on the target batch (NaN without one).
    pub smcd: f64,
    /// Sampled-head disagreement on the target batch, or on the source batch
    /// when there is no target batch.
    pub disc: f64,
}

/// One per-iteration log record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterLog {
    pub iter: usize,
    pub elbo: f64,
    pub nll: f64,
    pub kl: f64,
    pub smcd: f64,
    pub disc: f64,
    pub gen_smcd: Option<f64>,
    pub val_loss: Option<f64>,
    pub phase: Phase,
    pub t_s: Option<usize>,
    pub t_e: Option<usize>,
    pub l_bar: Option<f64>,
}

/// Draws minibatch indices by walking reshuffled epochs.
#[derive(Clone, Debug)]
struct Sampler {
    order: Vec<usize>,
    at: usize,
}

impl Sampler {
    fn new(n: usize, rng: &mut impl Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Sampler { order, at: 0 }
    }

    fn take(&mut self, k: usize, rng: &mut impl Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.at == self.order.len() {
                self.order.shuffle(rng);
                self.at = 0;
            }
            out.push(self.order[self.at]);
            self.at += 1;
        }
        out
    }
}

fn flip_horizontal(image: &mut [f64], s: ImageShape) {
    for y in 0..s.height {
        for x in 0..s.width / 2 {
            for c in 0..s.channels {
                let a = (y * s.width + x) * s.channels + c;
                let b = (y * s.width + s.width - 1 - x) * s.channels + c;
                image.swap(a, b);
            }
        }
    }
}

struct Rngs {
    data: ChaCha8Rng,
    head: ChaCha8Rng,
    gen: ChaCha8Rng,
    mix: ChaCha8Rng,
    eval: ChaCha8Rng,
}

/// Training state: parameters, optimiser moments and random streams.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Model,
    pub generator: Option<GeneratorParams>,
    pub model_opt: AdamState,
    pub gen_opt: Option<AdamState>,
    adam: Adam,
    half: HalfSpectrum,
    kl_scale: f64,
    train: Vec<DomainDataset>,
    samplers: Vec<Sampler>,
    rngs: Rngs,
}

/// Image shape and class count shared by all training domains.
fn common_layout(domains: &[DomainDataset]) -> Result<(ImageShape, usize)> {
    let first = domains
        .first()
        .ok_or_else(|| TrainError::EmptyDomain("no training domains".into()))?;
    for d in domains {
        if d.is_empty() {
            return Err(TrainError::EmptyDomain(d.name.clone()));
        }
        if d.shape() != first.shape() || d.class_count != first.class_count {
            return Err(TrainError::Setup(format!("domain {} differs in shape or classes", d.name)));
        }
    }
    Ok((first.shape(), first.class_count))
}

impl Trainer {
    pub fn new(cfg: &TrainConfig, train: &[DomainDataset]) -> Result<Self> {
        cfg.validate().map_err(|e| TrainError::Setup(e.to_string()))?;
        let (shape, classes) = common_layout(train)?;
        let mut init = stream(cfg.seed, Stream::Init);
        let model = Model::new(shape, classes, &cfg.extractor, &mut init)?;
        let generator = cfg.method.uses_generator().then(|| {
            let hidden = (cfg.generator_hidden > 0).then_some(cfg.generator_hidden);
            GeneratorParams::new(cfg.method.generator_kind(), shape, hidden, &mut init)
        });
        let model_opt = AdamState::new(model.params());
        let gen_opt = generator.as_ref().map(|g| AdamState::new(g.params()));
        let mut data = stream(cfg.seed, Stream::Data);
        let samplers = train.iter().map(|d| Sampler::new(d.len(), &mut data)).collect();
        let n_train: usize = train.iter().map(DomainDataset::len).sum();
        Ok(Trainer {
            adam: cfg.adam(),
            half: HalfSpectrum::new(shape.height, shape.width),
            kl_scale: cfg.kl_weight / n_train as f64,
            cfg: cfg.clone(),
            model,
            generator,
            model_opt,
            gen_opt,
            train: train.to_vec(),
            samplers,
            rngs: Rngs {
                data,
                head: stream(cfg.seed, Stream::HeadNoise),
                gen: stream(cfg.seed, Stream::GenNoise),
                mix: stream(cfg.seed, Stream::Mixup),
                eval: stream(cfg.seed, Stream::Eval),
            },
        })
    }

    pub fn kl_scale(&self) -> f64 {
        self.kl_scale
    }

    pub fn half_spectrum(&self) -> &HalfSpectrum {
        &self.half
    }

    /// The next source batch: `batch_per_domain` samples from every
    /// training domain, concatenated in domain order.
    pub fn next_batch(&mut self) -> Result<Batch> {
        let k = self.cfg.batch_per_domain;
        let s = self.model.shape;
        let per = s.pixels();
        let mut data = Vec::with_capacity(k * self.train.len() * per);
        let mut labels = Vec::with_capacity(k * self.train.len());
        for (d, sampler) in self.train.iter().zip(&mut self.samplers) {
            for i in sampler.take(k, &mut self.rngs.data) {
                let start = data.len();
                data.extend_from_slice(d.image(i));
                if self.cfg.data.augment_flip && self.rngs.data.gen_bool(0.5) {
                    flip_horizontal(&mut data[start..], s);
                }
                labels.push(d.labels[i]);
            }
        }
        let images = Tensor::new(vec![labels.len(), s.height, s.width, s.channels], data)?;
        Ok(Batch { images, labels })
    }

    /// Draws a batch and all noise for one iteration.
    pub fn draw_inputs(&mut self) -> Result<StepInputs> {
        let batch = self.next_batch()?;
        self.inputs_for(batch)
    }

    /// Draws the noise for one iteration on a given batch.
    pub fn inputs_for(&mut self, batch: Batch) -> Result<StepInputs> {
        let b = batch.labels.len();
        let head_noise = self.model.head.draw_noise(&mut self.rngs.head, self.cfg.n_mc);
        let eval_noise = self.model.head.draw_noise(&mut self.rngs.eval, 2 * self.cfg.eval_pairs);
        let method = self.cfg.method;
        let (mut target_noise, mut spectra, mut mixed) = (None, None, None);
        if method.uses_generator() {
            let noise = TargetNoise::draw(b, self.cfg.alpha_mix, &mut self.rngs.gen, &mut self.rngs.mix)?;
            target_noise = Some(if method.uses_mixup() { noise } else { noise.without_mixup() });
            if method.generator_kind() == crate::generator::GeneratorKind::Amplitude {
                spectra = Some(SourceSpectra::new(&batch.images, &self.half)?);
            }
        } else if method == Method::AmpMixup {
            let source = SourceSpectra::new(&batch.images, &self.half)?;
            mixed = Some(amplitude_mixup(&source, &self.half, self.cfg.alpha_mix, &mut self.rngs.mix)?);
        }
        Ok(StepInputs {
            batch,
            head_noise,
            eval_noise,
            target_noise,
            spectra,
            mixed,
        })
    }

    /// Target images from the current (frozen) generator, or the fixed
    /// mixed batch of the baseline.
    fn target_images(&self, inputs: &StepInputs) -> Result<Option<Tensor>> {
        if let Some(m) = &inputs.mixed {
            return Ok(Some(m.clone()));
        }
        let (Some(gen), Some(noise)) = (&self.generator, &inputs.target_noise) else {
            return Ok(None);
        };
        let tape = Tape::new();
        let vars = gen.bind(&tape, false);
        let images = match &inputs.spectra {
            Some(spectra) => synthesize_on_tape(&tape, &vars, spectra, noise, &self.half)?.0,
            None => pixel_target(&tape, &vars, noise, inputs.batch.labels.len(), self.model.shape)?,
        };
        Ok(Some(images.value()))
    }

    fn target_loss<'t>(&self, hv: &HeadVars<'t>, features: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
        let stats = hv.logit_stats(features)?;
        Ok(if self.cfg.method.unsupervised() {
            mcd(&stats, self.cfg.alpha_conf, self.cfg.mcd_rule)?
        } else {
            smcd(&stats, labels, self.cfg.alpha_conf)?
        })
    }

    /// Builds the model objective on `tape`; returns the loss and report.
    fn model_objective<'t>(
        &self,
        tape: &'t Tape,
        mv: &ExtractorVars<'t>,
        hv: &HeadVars<'t>,
        inputs: &StepInputs,
        target: Option<&Tensor>,
    ) -> Result<(Var<'t>, StepReport)> {
        let labels = &inputs.batch.labels;
        let x = tape.constant(self.model.flat_input(&inputs.batch.images)?);
        let features = mv.forward(x)?;
        let mut report = StepReport {
            smcd: f64::NAN,
            ..StepReport::default()
        };
        let kl = hv.kl_to_prior()?;
        report.kl = kl.item();
        let mut loss;
        let disc_features;
        if self.cfg.method == Method::AmpMixup {
            let t = target.expect("amplitude-mixup batch");
            let ft = mv.forward(tape.constant(self.model.flat_input(t)?))?;
            let both = tape.concat(&[features, ft], 0)?;
            let both_labels: Vec<usize> = labels.iter().chain(labels).copied().collect();
            let nll = hv.expected_nll(both, &both_labels, &inputs.head_noise)?;
            report.nll = nll.item();
            loss = nll.add(kl.mul_scalar(self.kl_scale)?)?;
            disc_features = ft.value();
        } else {
            let nll = hv.expected_nll(features, labels, &inputs.head_noise)?;
            report.nll = nll.item();
            loss = nll.add(kl.mul_scalar(self.kl_scale)?)?;
            disc_features = match target {
                Some(t) => {
                    let ft = mv.forward(tape.constant(self.model.flat_input(t)?))?;
                    // the head is held fixed inside the discrepancy term
                    let d = self.target_loss(&hv.detach(), ft, labels)?;
                    report.smcd = d.item();
                    if self.cfg.eta > 0.0 {
                        loss = loss.add(d.mul_scalar(self.cfg.eta)?)?;
                    }
                    ft.value()
                }
                None => features.value(),
            };
        }
        report.elbo = -(report.nll + self.kl_scale * report.kl);
        report.disc = head::sampled_discrepancy(&self.model.head, &disc_features, &inputs.eval_noise)?;
        Ok((loss, report))
    }

    /// Model loss and its gradients with respect to [`Model::params`],
    /// without updating anything.
    pub fn model_grad(&self, inputs: &StepInputs) -> Result<(f64, Vec<Tensor>, StepReport)> {
        let target = self.target_images(inputs)?;
        let tape = Tape::new();
        let mv = self.model.extractor.bind(&tape, true);
        let hv = self.model.head.bind(&tape, true);
        let (loss, report) = self.model_objective(&tape, &mv, &hv, inputs, target.as_ref())?;
        tape.backward(loss)?;
        let mut leaves: Vec<Var> = mv.layers.iter().flat_map(|&(w, b)| [w, b]).collect();
        leaves.extend([hv.mean, hv.log_var]);
        let grads = leaves
            .iter()
            .map(|v| tape.grad(*v).unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect();
        Ok((loss.item(), grads, report))
    }

    /// One Adam step on the extractor and head. The generator is untouched.
    pub fn model_step(&mut self, inputs: &StepInputs) -> Result<StepReport> {
        let (loss, grads, report) = self.model_grad(inputs)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { iter: 0, what: "model loss" });
        }
        let mut params = self.model.params_mut();
        self.adam.step(&mut self.model_opt, &mut params, &grads)?;
        Ok(report)
    }

    /// Target discrepancy loss and its gradients with respect to the
    /// generator parameters, extractor and head frozen.
    pub fn generator_grad(&self, inputs: &StepInputs) -> Result<Option<(f64, Vec<Tensor>)>> {
        let (Some(gen), Some(noise)) = (&self.generator, &inputs.target_noise) else {
            return Ok(None);
        };
        let tape = Tape::new();
        let gv = gen.bind(&tape, true);
        let images = match &inputs.spectra {
            Some(spectra) => synthesize_on_tape(&tape, &gv, spectra, noise, &self.half)?.0,
            None => pixel_target(&tape, &gv, noise, inputs.batch.labels.len(), self.model.shape)?,
        };
        let b = inputs.batch.labels.len();
        let x = images.reshape(&[b, self.model.shape.pixels()])?;
        let features = self.model.extractor.bind(&tape, false).forward(x)?;
        let hv = self.model.head.bind(&tape, false);
        let d = self.target_loss(&hv, features, &inputs.batch.labels)?;
        tape.backward(d)?;
        let grads = gv
            .layers
            .iter()
            .flat_map(|&(w, b)| [w, b])
            .map(|v| tape.grad(v).unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect();
        Ok(Some((d.item(), grads)))
    }

    /// One Adam ascent step of the generator on the target discrepancy.
    /// Returns the discrepancy before the step, `None` without a generator.
    pub fn generator_step(&mut self, inputs: &StepInputs) -> Result<Option<f64>> {
        let Some((value, grads)) = self.generator_grad(inputs)? else {
            return Ok(None);
        };
        let ascent: Vec<Tensor> = grads
            .into_iter()
            .map(|g| Tensor::from_fn(g.shape(), |i| -g.data()[i]))
            .collect();
        let gen = self.generator.as_mut().expect("checked above");
        let state = self.gen_opt.as_mut().expect("state exists with generator");
        let mut params = gen.params_mut();
        self.adam.step(state, &mut params, &ascent)?;
        Ok(Some(value))
    }

}

fn pixel_target<'t>(
    tape: &'t Tape,
    gen: &crate::generator::GeneratorVars<'t>,
    noise: &TargetNoise,
    b: usize,
    shape: ImageShape,
) -> Result<Var<'t>> {
    let out = gen.forward(tape.constant(noise.eps.clone()))?;
    Ok(out.reshape(&[b, shape.height, shape.width, shape.channels])?)
}

/// Amplitude mixup between each image and a random partner of the batch:
/// `A = A_i + λ(A_j − A_i)`, `λ ~ U[0, alpha_mix)`, with the phase of image
/// `i`. Labels stay those of image `i`.
pub fn amplitude_mixup(
    source: &SourceSpectra,
    half: &HalfSpectrum,
    alpha_mix: f64,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let b = source.len();
    let ImageShape {
        height: h,
        width: w,
        channels: ch,
    } = source.shape;
    let mut partner: Vec<usize> = (0..b).collect();
    partner.shuffle(rng);
    let n = half.len() * ch;
    let rows = source.half_amplitudes.data();
    let mut out = Vec::with_capacity(b * h * w * ch);
    for i in 0..b {
        let lam = alpha_mix * rng.gen::<f64>();
        let (a, p) = (&rows[i * n..(i + 1) * n], &rows[partner[i] * n..(partner[i] + 1) * n]);
        let mixed: Vec<f64> = a.iter().zip(p).map(|(x, y)| x + lam * (y - x)).collect();
        let full = half.half_to_full(&HalfAmplitude::new(ch, mixed)?)?;
        let spec = Spectrum {
            amplitude: full,
            ..source.spectra[i].clone()
        };
        out.extend(fourier::idft2_real(&spec)?.into_data());
    }
    Ok(Tensor::new(vec![b, h, w, ch], out)?)
}

/// Mean posterior-mean NLL over all validation domains.
pub fn validation_loss(model: &Model, val: &[DomainDataset]) -> Result<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for d in val {
        for start in (0..d.len()).step_by(EVAL_CHUNK) {
            let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(d.len())).collect();
            let part = d.subset(&idx);
            let logits = model.mean_logits(&part.images)?;
            let tape = Tape::new();
            let lp = tape.constant(logits).log_softmax()?.pick(&part.labels)?.value();
            total -= lp.data().iter().sum::<f64>();
            count += idx.len();
        }
    }
    if count == 0 {
        return Err(TrainError::EmptyDomain("validation split".into()));
    }
    Ok(total / count as f64)
}

/// Accuracy report for one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub domain: String,
    pub domain_id: usize,
    pub count: usize,
    pub accuracy: f64,
    /// Accuracy per class; NaN for classes absent from the domain.
    pub per_class: Vec<f64>,
    /// Mean disagreement rate of sampled head pairs.
    pub discrepancy: f64,
}

/// Posterior-mean accuracy, per-class accuracy and the mean pairwise
/// disagreement of `pairs` sampled heads.
pub fn evaluate(model: &Model, dataset: &DomainDataset, pairs: usize, rng: &mut impl Rng) -> Result<EvalReport> {
    let noise = model.head.draw_noise(rng, 2 * pairs);
    let c = dataset.class_count;
    let (mut hits, mut per_hits, mut per_count) = (0usize, vec![0usize; c], vec![0usize; c]);
    let mut disc_sum = 0.0;
    for start in (0..dataset.len()).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(dataset.len())).collect();
        let part = dataset.subset(&idx);
        let features = model.features(&part.images)?;
        let preds = argmax_rows(&head::mean_logits(&model.head, &features)?);
        for (p, &y) in preds.iter().zip(&part.labels) {
            per_count[y] += 1;
            if *p == y {
                hits += 1;
                per_hits[y] += 1;
            }
        }
        disc_sum += head::sampled_discrepancy(&model.head, &features, &noise)? * idx.len() as f64;
    }
    let n = dataset.len().max(1) as f64;
    Ok(EvalReport {
        domain: dataset.name.clone(),
        domain_id: dataset.domain_id,
        count: dataset.len(),
        accuracy: hits as f64 / n,
        per_class: per_hits
            .iter()
            .zip(&per_count)
            .map(|(&h, &k)| if k == 0 { f64::NAN } else { h as f64 / k as f64 })
            .collect(),
        discrepancy: disc_sum / n,
    })
}

/// SWAD bookkeeping at the end of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwadSummary {
    pub phase: Phase,
    pub t_s: Option<usize>,
    pub t_e: Option<usize>,
    pub l_bar: Option<f64>,
    pub averaged: Option<(usize, usize)>,
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainedModel {
    /// SWAD-averaged parameters, or the final ones without SWAD.
    pub model: Model,
    pub generator: Option<GeneratorParams>,
    pub logs: Vec<IterLog>,
    pub swad: Option<SwadSummary>,
    pub iterations: usize,
}

pub fn train(cfg: &TrainConfig, split: &Split) -> Result<TrainedModel> {
    train_with(cfg, split, |_| {})
}

/// [`train`], calling `on_iter` after every iteration.
pub fn train_with(cfg: &TrainConfig, split: &Split, mut on_iter: impl FnMut(&IterLog)) -> Result<TrainedModel> {
    if split.val.iter().all(DomainDataset::is_empty) {
        return Err(TrainError::EmptyDomain("validation split".into()));
    }
    let mut trainer = Trainer::new(cfg, &split.train)?;
    let mut swad = if cfg.method.uses_swad() {
        Some(SwadState::new(cfg.swad, cfg.val_period, trainer.model.param_count())?)
    } else {
        None
    };
    let mut logs = Vec::with_capacity(cfg.max_iters);
    let mut iterations = 0;
    for iter in 1..=cfg.max_iters {
        let inputs = trainer.draw_inputs()?;
        let report = trainer.model_step(&inputs).map_err(|e| match e {
            TrainError::NonFinite { what, .. } => TrainError::NonFinite { iter, what },
            other => other,
        })?;
        let gen_smcd = trainer.generator_step(&inputs)?;
        if gen_smcd.is_some_and(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite {
                iter,
                what: "generator loss",
            });
        }
        let val_loss = if iter % cfg.val_period == 0 {
            let v = validation_loss(&trainer.model, &split.val)?;
            if !v.is_finite() {
                return Err(TrainError::NonFinite {
                    iter,
                    what: "validation loss",
                });
            }
            Some(v)
        } else {
            None
        };
        if let Some(s) = swad.as_mut() {
            s.observe(iter, &trainer.model.flatten(), val_loss)?;
        }
        let log = IterLog {
            iter,
            elbo: report.elbo,
            nll: report.nll,
            kl: report.kl,
            smcd: report.smcd,
            disc: report.disc,
            gen_smcd,
            val_loss,
            phase: swad.as_ref().map_or(Phase::Searching, SwadState::phase),
            t_s: swad.as_ref().and_then(SwadState::t_s),
            t_e: swad.as_ref().and_then(SwadState::t_e),
            l_bar: swad.as_ref().and_then(SwadState::l_bar),
        };
        on_iter(&log);
        logs.push(log);
        iterations = iter;
        if swad.as_ref().is_some_and(|s| s.phase() == Phase::Finished) {
            break;
        }
    }
    let mut model = trainer.model.clone();
    let summary = swad.map(|s| {
        model.load_flat(&s.finalize());
        SwadSummary {
            phase: s.phase(),
            t_s: s.t_s(),
            t_e: s.t_e(),
            l_bar: s.l_bar(),
            averaged: s.averaged_range(),
        }
    });
    Ok(TrainedModel {
        model,
        generator: trainer.generator,
        logs,
        swad: summary,
        iterations,
    })
}
