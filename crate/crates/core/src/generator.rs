//! Adversarial amplitude generator and target-batch synthesis.
//!
//! Per source image `x_S` with spectrum `A_S ∠ P_S`: draw `ε ~ N(0, I)`,
//! generate a half-spectrum amplitude `A_G = softplus(W ε + b)`, mix it as
//! `λ A_G + (1 − λ) A_S` with `λ ~ U(0, α)`, and invert against the source
//! phase. The synthesised image keeps the source label.
//!
//! A pixel-space variant (an affine map straight to images) exists for the
//! corresponding ablation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::fourier::{self, FourierError, HalfAmplitude, HalfSpectrum, Spectrum, IMAG_TOLERANCE};
use crate::rng::normals;
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("post-mixup bound must lie in [0, 1], got {0}")]
    BadAlphaMix(f64),
    #[error("mixup coefficient {lam} outside [0, {alpha_mix}]")]
    BadLambda { lam: f64, alpha_mix: f64 },
    #[error("imaginary residual {residual:e} exceeds {tolerance:e}: amplitude lost conjugate symmetry")]
    ImaginaryResidual { residual: f64, tolerance: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, GeneratorError>;

/// Input noise dimension.
pub const NOISE_DIM: usize = 100;

/// Standard deviation of the output-layer weight initialisation.
pub const INIT_WEIGHT_STD: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Non-negative half-spectrum amplitudes mixed with the source amplitude.
    #[default]
    Amplitude,
    /// Raw images, independent of the source batch.
    Pixel,
}

/// Image geometry `[H, W, Ch]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn pixels(&self) -> usize {
        self.height * self.width * self.channels
    }
}

/// Affine layers `(weight [out, in], bias [out])`; hidden layers use relu.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    kind: GeneratorKind,
    shape: ImageShape,
    layers: Vec<(Tensor, Tensor)>,
}

impl GeneratorParams {
    /// Output weights `~ N(0, 0.01²)`, biases zero. A hidden layer, if
    /// requested, is initialised `N(0, 1/in)`.
    pub fn new(kind: GeneratorKind, shape: ImageShape, hidden: Option<usize>, rng: &mut impl Rng) -> Self {
        let out_dim = match kind {
            GeneratorKind::Amplitude => HalfSpectrum::new(shape.height, shape.width).len() * shape.channels,
            GeneratorKind::Pixel => shape.pixels(),
        };
        let mut layers = Vec::new();
        let mut fan_in = NOISE_DIM;
        if let Some(h) = hidden {
            let std = (1.0 / fan_in as f64).sqrt();
            layers.push(affine(h, fan_in, std, rng));
            fan_in = h;
        }
        layers.push(affine(out_dim, fan_in, INIT_WEIGHT_STD, rng));
        GeneratorParams { kind, shape, layers }
    }

    pub fn from_layers(kind: GeneratorKind, shape: ImageShape, layers: Vec<(Tensor, Tensor)>) -> Result<Self> {
        let mut fan_in = NOISE_DIM;
        for (w, b) in &layers {
            if w.shape().len() != 2 || w.shape()[1] != fan_in || b.shape() != [w.shape()[0]] {
                return Err(GeneratorError::Shape(format!(
                    "layer weight {:?} / bias {:?} after fan-in {fan_in}",
                    w.shape(),
                    b.shape()
                )));
            }
            fan_in = w.shape()[0];
        }
        let params = GeneratorParams { kind, shape, layers };
        let expected = params.expected_output_dim();
        if fan_in != expected {
            return Err(GeneratorError::Shape(format!("output dim {fan_in}, expected {expected}")));
        }
        Ok(params)
    }

    fn expected_output_dim(&self) -> usize {
        match self.kind {
            GeneratorKind::Amplitude => HalfSpectrum::new(self.shape.height, self.shape.width).len() * self.shape.channels,
            GeneratorKind::Pixel => self.shape.pixels(),
        }
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").0.shape()[0]
    }

    pub fn layers(&self) -> &[(Tensor, Tensor)] {
        &self.layers
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> GeneratorVars<'t> {
        let leaf = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
        GeneratorVars {
            kind: self.kind,
            layers: self.layers.iter().map(|(w, b)| (leaf(w), leaf(b))).collect(),
        }
    }
}

fn affine(out: usize, fan_in: usize, std: f64, rng: &mut impl Rng) -> (Tensor, Tensor) {
    let normal = Normal::new(0.0, std).expect("positive std");
    (
        Tensor::from_fn(&[out, fan_in], |_| normal.sample(rng)),
        Tensor::zeros(&[out]),
    )
}

/// Generator parameters recorded on a tape.
#[derive(Clone, Debug)]
pub struct GeneratorVars<'t> {
    kind: GeneratorKind,
    pub layers: Vec<(Var<'t>, Var<'t>)>,
}

impl<'t> GeneratorVars<'t> {
    /// Maps noise `[B, 100]` to `[B, out]`; softplus on the output for the
    /// amplitude generator, identity for the pixel one.
    pub fn forward(&self, noise: Var<'t>) -> Result<Var<'t>> {
        let mut x = noise;
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            x = x.matmul_t(*w)?.add(*b)?;
            if i < last {
                x = x.relu()?;
            }
        }
        Ok(match self.kind {
            GeneratorKind::Amplitude => x.softplus()?,
            GeneratorKind::Pixel => x,
        })
    }
}

/// Plain-value generation for noise `[B, 100]`: one half-amplitude per row.
pub fn generate_amplitude(params: &GeneratorParams, eps: &Tensor) -> Result<Vec<HalfAmplitude>> {
    let tape = Tape::new();
    let out = params.bind(&tape, false).forward(tape.constant(eps.clone()))?.value();
    let ch = params.shape.channels;
    let n = out.shape()[1];
    out.data()
        .chunks(n)
        .map(|row| Ok(HalfAmplitude::new(ch, row.to_vec())?))
        .collect()
}

/// `lam · a_gen + (1 − lam) · a_src`, with `lam ∈ [0, alpha_mix] ⊆ [0, 1]`.
pub fn post_mixup(a_gen: &HalfAmplitude, a_src: &HalfAmplitude, alpha_mix: f64, lam: f64) -> Result<HalfAmplitude> {
    check_alpha_mix(alpha_mix)?;
    if !(0.0..=alpha_mix).contains(&lam) {
        return Err(GeneratorError::BadLambda { lam, alpha_mix });
    }
    if a_gen.values.len() != a_src.values.len() || a_gen.channels != a_src.channels {
        return Err(GeneratorError::Shape(format!(
            "mixing {} with {} amplitudes",
            a_gen.values.len(),
            a_src.values.len()
        )));
    }
    let values = a_gen
        .values
        .iter()
        .zip(&a_src.values)
        .map(|(g, s)| mix(*g, *s, lam))
        .collect();
    Ok(HalfAmplitude::new(a_src.channels, values)?)
}

fn mix(gen: f64, src: f64, lam: f64) -> f64 {
    src + lam * (gen - src)
}

fn check_alpha_mix(alpha_mix: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha_mix) {
        Ok(())
    } else {
        Err(GeneratorError::BadAlphaMix(alpha_mix))
    }
}

/// Differentiable mixup of `[B, n]` amplitude rows with per-row `lam`.
pub fn post_mixup_var<'t>(a_gen: Var<'t>, a_src: Var<'t>, lam: &[f64]) -> Result<Var<'t>> {
    Ok(a_gen.sub(a_src)?.scale_rows(lam)?.add(a_src)?)
}

/// Fourier view of a source batch.
#[derive(Clone, Debug)]
pub struct SourceSpectra {
    pub shape: ImageShape,
    pub spectra: Vec<Spectrum>,
    /// `[B, Ch·n_half]`, rows in [`HalfAmplitude`] layout.
    pub half_amplitudes: Tensor,
}

impl SourceSpectra {
    /// Transforms a `[B, H, W, Ch]` batch.
    pub fn new(images: &Tensor, half: &HalfSpectrum) -> Result<Self> {
        let [b, h, w, ch] = images.shape()[..] else {
            return Err(GeneratorError::Shape(format!("images {:?}", images.shape())));
        };
        if (half.height(), half.width()) != (h, w) {
            return Err(GeneratorError::Shape(format!(
                "half-spectrum for {}x{}, images {h}x{w}",
                half.height(),
                half.width()
            )));
        }
        let per = h * w * ch;
        let mut spectra = Vec::with_capacity(b);
        let mut rows = Vec::with_capacity(b * half.len() * ch);
        for i in 0..b {
            let spec = fourier::dft2_raw(&images.data()[i * per..(i + 1) * per], h, w, ch)?;
            rows.extend(half.full_to_half(&spec.amplitude, ch)?.values);
            spectra.push(spec);
        }
        Ok(SourceSpectra {
            shape: ImageShape {
                height: h,
                width: w,
                channels: ch,
            },
            spectra,
            half_amplitudes: Tensor::new(vec![b, half.len() * ch], rows)?,
        })
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }
}

/// Random inputs of one synthesis call: generator noise and mixup weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetNoise {
    /// `[B, 100]`.
    pub eps: Tensor,
    pub lam: Vec<f64>,
}

impl TargetNoise {
    /// `ε` from `gen_rng`; `lam = alpha_mix · u`, `u ~ U[0, 1)` from `mix_rng`.
    pub fn draw(batch: usize, alpha_mix: f64, gen_rng: &mut impl Rng, mix_rng: &mut impl Rng) -> Result<Self> {
        check_alpha_mix(alpha_mix)?;
        let eps = Tensor::new(vec![batch, NOISE_DIM], normals(gen_rng, batch * NOISE_DIM))?;
        let lam = (0..batch).map(|_| alpha_mix * mix_rng.gen::<f64>()).collect();
        Ok(TargetNoise { eps, lam })
    }

    /// Replaces every mixup weight by one, i.e. no mixup.
    pub fn without_mixup(mut self) -> Self {
        self.lam.iter_mut().for_each(|l| *l = 1.0);
        self
    }
}

/// Builds the target images `[B, H, W, Ch]` on `tape`. Gradients reach the
/// generator through the mixup and the inverse transform.
pub fn synthesize_on_tape<'t>(
    tape: &'t Tape,
    gen: &GeneratorVars<'t>,
    source: &SourceSpectra,
    noise: &TargetNoise,
    half: &HalfSpectrum,
) -> Result<(Var<'t>, f64)> {
    let b = source.len();
    if noise.eps.shape() != [b, NOISE_DIM] || noise.lam.len() != b {
        return Err(GeneratorError::Shape(format!(
            "noise {:?} with {} mixup weights for batch {b}",
            noise.eps.shape(),
            noise.lam.len()
        )));
    }
    let ImageShape {
        height: h,
        width: w,
        channels: ch,
    } = source.shape;
    let out = gen.forward(tape.constant(noise.eps.clone()))?;
    match gen.kind {
        GeneratorKind::Pixel => Ok((out.reshape(&[b, h, w, ch])?, 0.0)),
        GeneratorKind::Amplitude => {
            let mixed = post_mixup_var(out, tape.constant(source.half_amplitudes.clone()), &noise.lam)?;
            let full = half.expand(mixed, ch)?;
            let phases: Vec<&Spectrum> = source.spectra.iter().collect();
            let (images, residual) = fourier::polar_to_image(tape, full, &phases)?;
            let max_amp = full.with_value(|a| a.data().iter().copied().fold(0.0, f64::max));
            let tolerance = IMAG_TOLERANCE * max_amp.max(f64::MIN_POSITIVE);
            if residual > tolerance {
                return Err(GeneratorError::ImaginaryResidual { residual, tolerance });
            }
            Ok((images, residual))
        }
    }
}

/// A synthesised target batch.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthBatch {
    /// `[B, H, W, Ch]`.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub imag_residual: f64,
}

/// Plain-value synthesis of a target batch from `[B, H, W, Ch]` source
/// images.
pub fn synthesize_target(
    images: &Tensor,
    labels: &[usize],
    params: &GeneratorParams,
    noise: &TargetNoise,
) -> Result<SynthBatch> {
    let half = HalfSpectrum::new(params.shape.height, params.shape.width);
    let source = SourceSpectra::new(images, &half)?;
    if labels.len() != source.len() {
        return Err(GeneratorError::Shape(format!("{} labels for {} images", labels.len(), source.len())));
    }
    let tape = Tape::new();
    let gen = params.bind(&tape, false);
    let (out, imag_residual) = synthesize_on_tape(&tape, &gen, &source, noise, &half)?;
    Ok(SynthBatch {
        images: out.value(),
        labels: labels.to_vec(),
        imag_residual,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::gradcheck::{max_rel_err, numeric_grad};
    use crate::head::VariationalHead;
    use crate::losses::smcd;

    fn shape(h: usize, w: usize, ch: usize) -> ImageShape {
        ImageShape {
            height: h,
            width: w,
            channels: ch,
        }
    }

    fn random_images(b: usize, s: ImageShape, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[b, s.height, s.width, s.channels], |_| rng.gen_range(0.0..1.0))
    }

    fn noise(b: usize, alpha: f64, seed: u64) -> TargetNoise {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let mut m = ChaCha8Rng::seed_from_u64(seed + 1000);
        TargetNoise::draw(b, alpha, &mut g, &mut m).unwrap()
    }

    #[test]
    fn structured_sources_stay_real_under_large_amplitudes() {
        // Glyph renders have many spectral bins that are exactly zero in
        // theory; their phases must still pair up.
        let styles = crate::data::glyph::default_styles(1);
        let s = shape(32, 32, 1);
        let data: Vec<f64> = (0..4).flat_map(|i| crate::data::glyph::render(&styles[0], 0, i, 32)).collect();
        let images = Tensor::new(vec![4, 32, 32, 1], data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GeneratorParams::new(GeneratorKind::Amplitude, s, None, &mut rng);
        let batch = synthesize_target(&images, &[0, 1, 2, 3], &g, &noise(4, 1.0, 2)).unwrap();
        assert!(batch.imag_residual < 1e-9, "{}", batch.imag_residual);
    }

    #[test]
    fn output_dim_is_half_spectrum_times_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = GeneratorParams::new(GeneratorKind::Amplitude, shape(32, 32, 3), None, &mut rng);
        assert_eq!(g.output_dim(), 514 * 3);
        let g = GeneratorParams::new(GeneratorKind::Pixel, shape(8, 8, 1), Some(20), &mut rng);
        assert_eq!(g.output_dim(), 64);
        assert_eq!(g.layers().len(), 2);
    }

    #[test]
    fn degenerate_weights_give_constant_softplus() {
        let s = shape(4, 4, 1);
        let n = HalfSpectrum::new(4, 4).len();
        let zero = |bias: f64| {
            GeneratorParams::from_layers(
                GeneratorKind::Amplitude,
                s,
                vec![(Tensor::zeros(&[n, NOISE_DIM]), Tensor::filled(&[n], bias))],
            )
            .unwrap()
        };
        let eps = noise(3, 0.5, 1).eps;
        for a in generate_amplitude(&zero(0.0), &eps).unwrap() {
            assert!(a.values.iter().all(|&v| (v - 2f64.ln()).abs() < 1e-15));
        }
        let sp = (1.0f64 + 1.5f64.exp()).ln();
        for a in generate_amplitude(&zero(1.5), &eps).unwrap() {
            assert!(a.values.iter().all(|&v| (v - sp).abs() < 1e-12));
        }
    }

    #[test]
    fn output_gradient_matches_softplus_prime_times_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = GeneratorParams::new(GeneratorKind::Amplitude, shape(4, 4, 1), None, &mut rng);
        let eps = noise(2, 0.5, 3).eps;
        let tape = Tape::new();
        let vars = g.bind(&tape, true);
        let out = vars.forward(tape.constant(eps.clone())).unwrap();
        let loss = out.sum().unwrap();
        tape.backward(loss).unwrap();
        let gw = tape.grad(vars.layers[0].0).unwrap();
        let (w, b) = &g.layers()[0];
        // d/dW[k, i] Σ softplus(z) = Σ_b σ(z_bk) ε_bi
        let (k, i) = (3, 17);
        let mut expected = 0.0;
        for row in 0..2 {
            let z: f64 = (0..NOISE_DIM).map(|j| w.at2(k, j) * eps.at2(row, j)).sum::<f64>() + b.data()[k];
            expected += eps.at2(row, i) / (1.0 + (-z).exp());
        }
        assert!((gw.at2(k, i) - expected).abs() < 1e-12);
        let numeric = numeric_grad(
            |x| {
                let mut p = g.clone();
                *p.params_mut()[0] = x.clone();
                generate_amplitude(&p, &eps).unwrap().iter().flat_map(|a| a.values.clone()).sum()
            },
            w,
            1e-6,
        );
        assert!(max_rel_err(&gw, &numeric, 1e-8) < 1e-5);
    }

    #[test]
    fn post_mixup_endpoints_and_errors() {
        let gen = HalfAmplitude::new(1, vec![1.0, 2.0, 3.0]).unwrap();
        let src = HalfAmplitude::new(1, vec![0.5, 0.25, 9.0]).unwrap();
        assert_eq!(post_mixup(&gen, &src, 0.7, 0.0).unwrap(), src);
        assert_eq!(post_mixup(&gen, &src, 1.0, 1.0).unwrap(), gen);
        let mid = post_mixup(&gen, &src, 1.0, 0.5).unwrap();
        assert_eq!(mid.values, vec![0.75, 1.125, 6.0]);
        assert_eq!(post_mixup(&gen, &src, 1.5, 0.1), Err(GeneratorError::BadAlphaMix(1.5)));
        assert!(matches!(post_mixup(&gen, &src, 0.3, 0.5), Err(GeneratorError::BadLambda { .. })));
        let n = noise(50, 0.0, 4);
        assert!(n.lam.iter().all(|&l| l == 0.0));
        let n = noise(500, 0.4, 4);
        assert!(n.lam.iter().all(|&l| (0.0..0.4).contains(&l)));
    }

    #[test]
    fn zero_alpha_mix_reproduces_source_images() {
        let s = shape(8, 8, 3);
        let images = random_images(4, s, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = GeneratorParams::new(GeneratorKind::Amplitude, s, None, &mut rng);
        let batch = synthesize_target(&images, &[0, 1, 2, 3], &g, &noise(4, 0.0, 7)).unwrap();
        assert!(batch.images.max_abs_diff(&images) < 1e-12);
        assert_eq!(batch.labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn generator_matching_source_amplitude_reproduces_source() {
        let s = shape(4, 4, 1);
        let images = random_images(1, s, 8);
        let half = HalfSpectrum::new(4, 4);
        let target = SourceSpectra::new(&images, &half).unwrap().half_amplitudes;
        // softplus(b) = A_S  ⇔  b = ln(exp(A_S) − 1)
        let bias: Vec<f64> = target.data().iter().map(|a| a.exp_m1().ln()).collect();
        let g = GeneratorParams::from_layers(
            GeneratorKind::Amplitude,
            s,
            vec![(Tensor::zeros(&[half.len(), NOISE_DIM]), Tensor::new(vec![half.len()], bias).unwrap())],
        )
        .unwrap();
        for seed in 0..3 {
            let batch = synthesize_target(&images, &[1], &g, &noise(1, 1.0, seed)).unwrap();
            assert!(batch.images.max_abs_diff(&images) < 1e-9);
        }
    }

    #[test]
    fn zero_generated_amplitude_at_full_mix_gives_black_image() {
        let s = shape(4, 4, 1);
        let images = random_images(2, s, 9);
        let n = HalfSpectrum::new(4, 4).len();
        let g = GeneratorParams::from_layers(
            GeneratorKind::Amplitude,
            s,
            vec![(Tensor::zeros(&[n, NOISE_DIM]), Tensor::filled(&[n], -800.0))],
        )
        .unwrap();
        let batch = synthesize_target(&images, &[0, 0], &g, &noise(2, 1.0, 1).without_mixup()).unwrap();
        assert!(batch.images.data().iter().all(|&x| x.abs() < 1e-300));
    }

    #[test]
    fn synthesis_is_real_and_deterministic() {
        let s = shape(32, 32, 3);
        let images = random_images(3, s, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GeneratorParams::new(GeneratorKind::Amplitude, s, Some(16), &mut rng);
        let a = synthesize_target(&images, &[4, 5, 6], &g, &noise(3, 0.8, 12)).unwrap();
        let b = synthesize_target(&images, &[4, 5, 6], &g, &noise(3, 0.8, 12)).unwrap();
        assert!(a.imag_residual < 1e-9);
        assert_eq!(a, b);
        assert!(a.images.data().iter().zip(b.images.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn pixel_generator_ignores_source() {
        let s = shape(4, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = GeneratorParams::new(GeneratorKind::Pixel, s, None, &mut rng);
        let n = noise(2, 0.5, 14);
        let a = synthesize_target(&random_images(2, s, 1), &[0, 1], &g, &n).unwrap();
        let b = synthesize_target(&random_images(2, s, 2), &[0, 1], &g, &n).unwrap();
        assert_eq!(a.images, b.images);
    }

    /// SMCD of a linear-feature head on synthesised 4×4 targets, as a
    /// function of the generator weight.
    #[test]
    fn smcd_gradient_through_synthesis_matches_finite_differences() {
        let s = shape(4, 4, 1);
        let half = HalfSpectrum::new(4, 4);
        let images = random_images(3, s, 15);
        let labels = [0, 2, 1];
        let source = SourceSpectra::new(&images, &half).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut g = GeneratorParams::new(GeneratorKind::Amplitude, s, None, &mut rng);
        // Larger weights so the generated amplitudes vary visibly.
        g.params_mut()[0].data_mut().iter_mut().for_each(|w| *w *= 50.0);
        let head = VariationalHead::new(3, 16, &mut rng).unwrap();
        let proj = Tensor::from_fn(&[16, 16], |i| ((i * 31) % 17) as f64 / 8.0 - 1.0);
        let tn = noise(3, 0.9, 17);

        let run = |w: &Tensor| {
            let mut p = g.clone();
            *p.params_mut()[0] = w.clone();
            let tape = Tape::new();
            let gen = p.bind(&tape, true);
            let (img, res) = synthesize_on_tape(&tape, &gen, &source, &tn, &half).unwrap();
            assert!(res < 1e-9);
            let feats = img.reshape(&[3, 16]).unwrap().matmul(tape.constant(proj.clone())).unwrap();
            let stats = head.bind(&tape, false).logit_stats(feats).unwrap();
            let loss = smcd(&stats, &labels, 1.96).unwrap();
            let v = loss.item();
            tape.backward(loss).unwrap();
            (v, tape.grad(gen.layers[0].0).unwrap())
        };
        let w0 = g.params()[0].clone();
        let (v, analytic) = run(&w0);
        assert!(v > 0.0, "hinge inactive, test would be vacuous");
        let numeric = numeric_grad(|w| run(w).0, &w0, 1e-6);
        assert!(max_rel_err(&analytic, &numeric, 1e-7) < 1e-3);
    }

    #[test]
    fn zero_alpha_mix_blocks_generator_gradient() {
        let s = shape(4, 4, 1);
        let half = HalfSpectrum::new(4, 4);
        let source = SourceSpectra::new(&random_images(2, s, 18), &half).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let g = GeneratorParams::new(GeneratorKind::Amplitude, s, None, &mut rng);
        let tape = Tape::new();
        let gen = g.bind(&tape, true);
        let (img, _) = synthesize_on_tape(&tape, &gen, &source, &noise(2, 0.0, 20), &half).unwrap();
        let loss = img.square().unwrap().sum().unwrap();
        tape.backward(loss).unwrap();
        for (w, b) in &gen.layers {
            assert!(tape.grad(*w).unwrap().data().iter().all(|&x| x == 0.0));
            assert!(tape.grad(*b).unwrap().data().iter().all(|&x| x == 0.0));
        }
    }
}
