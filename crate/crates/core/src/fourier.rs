//! 2-D discrete Fourier transform, amplitude/phase decomposition and the
//! non-redundant half-spectrum of real images.
//!
//! Conventions: the forward transform is unnormalised, the inverse carries
//! `1/(H·W)`. Images and full spectra use `[H, W, Ch]` row-major layout (with
//! a leading batch axis where batched). A [`HalfAmplitude`] is channel-major:
//! `[Ch, n_half]`.
//!
//! Extents that are powers of two use an iterative radix-2 FFT; any other
//! extent falls back to a direct DFT.

use std::f64::consts::PI;

use thiserror::Error;

use crate::tensor::{self, Backward, Tape, Tensor, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("image must be [H, W, Ch] with H, W >= 2, got {0:?}")]
    BadShape(Vec<usize>),
    #[error("non-finite pixel at flat index {0}")]
    NonFinite(usize),
    #[error("negative amplitude {value} at index {index}")]
    NegativeAmplitude { index: usize, value: f64 },
    #[error("spectrum dimensions disagree: {0}")]
    Inconsistent(String),
    #[error("imaginary residual {residual:e} exceeds tolerance {tolerance:e}")]
    ImaginaryResidual { residual: f64, tolerance: f64 },
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, FourierError>;

/// Relative tolerance on the discarded imaginary part when the input to an
/// inverse transform is expected to be conjugate-symmetric.
pub const IMAG_TOLERANCE: f64 = 1e-6;

fn bit_reverse_permute(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
}

/// In-place 1-D transform. `inverse` flips the twiddle sign; no scaling.
pub fn fft1d(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    debug_assert_eq!(n, im.len());
    if n <= 1 {
        return;
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    if !n.is_power_of_two() {
        let (src_re, src_im) = (re.to_vec(), im.to_vec());
        for k in 0..n {
            let (mut sr, mut si) = (0.0, 0.0);
            for t in 0..n {
                let ang = sign * 2.0 * PI * ((k * t) % n) as f64 / n as f64;
                let (s, c) = ang.sin_cos();
                sr += src_re[t] * c - src_im[t] * s;
                si += src_re[t] * s + src_im[t] * c;
            }
            re[k] = sr;
            im[k] = si;
        }
        return;
    }
    bit_reverse_permute(re, im);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let ang = sign * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (s, c) = (ang * k as f64).sin_cos();
                let (a, b) = (start + k, start + k + half);
                let tr = re[b] * c - im[b] * s;
                let ti = re[b] * s + im[b] * c;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// In-place unnormalised 2-D transform of an `h × w` row-major plane.
pub fn fft2_plane(re: &mut [f64], im: &mut [f64], h: usize, w: usize, inverse: bool) {
    for r in 0..h {
        fft1d(&mut re[r * w..(r + 1) * w], &mut im[r * w..(r + 1) * w], inverse);
    }
    let (mut cr, mut ci) = (vec![0.0; h], vec![0.0; h]);
    for c in 0..w {
        for r in 0..h {
            cr[r] = re[r * w + c];
            ci[r] = im[r * w + c];
        }
        fft1d(&mut cr, &mut ci, inverse);
        for r in 0..h {
            re[r * w + c] = cr[r];
            im[r * w + c] = ci[r];
        }
    }
}

/// Polar form of a 2-D spectrum, `[H, W, Ch]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl Spectrum {
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    fn check(&self) -> Result<()> {
        let n = self.height * self.width * self.channels;
        if self.amplitude.len() != n || self.phase.len() != n {
            return Err(FourierError::Inconsistent(format!(
                "{}x{}x{} with {} amplitudes and {} phases",
                self.height,
                self.width,
                self.channels,
                self.amplitude.len(),
                self.phase.len()
            )));
        }
        Ok(())
    }

    pub fn max_amplitude(&self) -> f64 {
        self.amplitude.iter().copied().fold(0.0, f64::max)
    }
}

fn image_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w, c] if h >= 2 && w >= 2 && c >= 1 => Ok((h, w, c)),
        _ => Err(FourierError::BadShape(shape.to_vec())),
    }
}

/// Forward transform of a real `[H, W, Ch]` image, channel by channel.
pub fn dft2(image: &Tensor) -> Result<Spectrum> {
    let (h, w, ch) = image_dims(image.shape())?;
    dft2_raw(image.data(), h, w, ch)
}

pub(crate) fn dft2_raw(pixels: &[f64], h: usize, w: usize, ch: usize) -> Result<Spectrum> {
    if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
        return Err(FourierError::NonFinite(i));
    }
    let n = h * w;
    let mut amplitude = vec![0.0; n * ch];
    let mut phase = vec![0.0; n * ch];
    let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
    for c in 0..ch {
        for p in 0..n {
            re[p] = pixels[p * ch + c];
            im[p] = 0.0;
        }
        fft2_plane(&mut re, &mut im, h, w, false);
        // The spectrum of a real image is conjugate-symmetric. Rounding breaks
        // that at bins whose true value is zero, where the phase is noise, so
        // each pair shares one amplitude and exactly opposite phases.
        for r in 0..h {
            for col in 0..w {
                let p = r * w + col;
                let q = ((h - r) % h) * w + (w - col) % w;
                if p < q {
                    let a = 0.5 * (re[p].hypot(im[p]) + re[q].hypot(im[q]));
                    let phi = im[p].atan2(re[p]);
                    amplitude[p * ch + c] = a;
                    amplitude[q * ch + c] = a;
                    phase[p * ch + c] = phi;
                    phase[q * ch + c] = -phi;
                } else if p == q {
                    amplitude[p * ch + c] = re[p].abs();
                    phase[p * ch + c] = if re[p] < 0.0 { PI } else { 0.0 };
                }
            }
        }
    }
    Ok(Spectrum {
        height: h,
        width: w,
        channels: ch,
        amplitude,
        phase,
    })
}

/// Result of an inverse transform: the real part and the largest magnitude of
/// the discarded imaginary part.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub image: Tensor,
    pub imag_residual: f64,
}

/// Inverse transform of `amplitude ∠ phase`, keeping the real part.
pub fn idft2(spec: &Spectrum) -> Result<Reconstruction> {
    spec.check()?;
    let (h, w, ch) = (spec.height, spec.width, spec.channels);
    let (pixels, imag_residual) = polar_inverse(&spec.amplitude, &spec.phase, h, w, ch);
    Ok(Reconstruction {
        image: Tensor::new(vec![h, w, ch], pixels)?,
        imag_residual,
    })
}

/// Like [`idft2`] for spectra that must be conjugate-symmetric: fails when
/// the imaginary residual exceeds [`IMAG_TOLERANCE`] times the largest
/// amplitude.
pub fn idft2_real(spec: &Spectrum) -> Result<Tensor> {
    let rec = idft2(spec)?;
    let tolerance = IMAG_TOLERANCE * spec.max_amplitude().max(f64::MIN_POSITIVE);
    if rec.imag_residual > tolerance {
        return Err(FourierError::ImaginaryResidual {
            residual: rec.imag_residual,
            tolerance,
        });
    }
    Ok(rec.image)
}

fn polar_inverse(amplitude: &[f64], phase: &[f64], h: usize, w: usize, ch: usize) -> (Vec<f64>, f64) {
    let n = h * w;
    let scale = 1.0 / n as f64;
    let mut pixels = vec![0.0; n * ch];
    let mut residual: f64 = 0.0;
    let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
    for c in 0..ch {
        for p in 0..n {
            let (s, co) = phase[p * ch + c].sin_cos();
            re[p] = amplitude[p * ch + c] * co;
            im[p] = amplitude[p * ch + c] * s;
        }
        fft2_plane(&mut re, &mut im, h, w, true);
        for p in 0..n {
            pixels[p * ch + c] = re[p] * scale;
            residual = residual.max((im[p] * scale).abs());
        }
    }
    (pixels, residual)
}

/// Swaps quadrants so the zero frequency sits at the centre of an `h × w`
/// plane (display only).
pub fn fftshift(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            out[((u + h / 2) % h) * w + (v + w / 2) % w] = plane[u * w + v];
        }
    }
    out
}

/// Canonical non-redundant frequency set of an `H × W` grid under
/// `(u, v) ↦ (−u mod H, −v mod W)`.
///
/// Representatives are listed in row-major order, each being the
/// lexicographically smaller member of its pair; self-paired bins appear once.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpectrum {
    height: usize,
    width: usize,
    representatives: Vec<(usize, usize)>,
    orbit_of: Vec<usize>,
}

impl HalfSpectrum {
    pub fn new(height: usize, width: usize) -> Self {
        let mut orbit_of = vec![usize::MAX; height * width];
        let mut representatives = Vec::new();
        for u in 0..height {
            for v in 0..width {
                let partner = ((height - u) % height, (width - v) % width);
                if (u, v) <= partner {
                    let idx = representatives.len();
                    representatives.push((u, v));
                    orbit_of[u * width + v] = idx;
                    orbit_of[partner.0 * width + partner.1] = idx;
                }
            }
        }
        HalfSpectrum {
            height,
            width,
            representatives,
            orbit_of,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Entries per channel.
    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    pub fn representatives(&self) -> &[(usize, usize)] {
        &self.representatives
    }

    /// Half-spectrum index of full-grid cell `(u, v)`.
    pub fn orbit_of(&self, u: usize, v: usize) -> usize {
        self.orbit_of[u * self.width + v]
    }

    /// For each cell of a `[H, W, Ch]` full grid, its index in the flat
    /// `[Ch, n_half]` half layout.
    pub fn gather_index(&self, channels: usize) -> Vec<usize> {
        let n = self.len();
        let mut idx = Vec::with_capacity(self.orbit_of.len() * channels);
        for &o in &self.orbit_of {
            for c in 0..channels {
                idx.push(c * n + o);
            }
        }
        idx
    }

    /// Expands to a symmetric `[H, W, Ch]` amplitude image.
    pub fn half_to_full(&self, half: &HalfAmplitude) -> Result<Vec<f64>> {
        if half.values.len() != half.channels * self.len() {
            return Err(FourierError::Inconsistent(format!(
                "half amplitude of length {} for {} channels x {}",
                half.values.len(),
                half.channels,
                self.len()
            )));
        }
        Ok(self
            .gather_index(half.channels)
            .into_iter()
            .map(|i| half.values[i])
            .collect())
    }

    /// Keeps the representative cell of each orbit of a `[H, W, Ch]` image.
    pub fn full_to_half(&self, full: &[f64], channels: usize) -> Result<HalfAmplitude> {
        if full.len() != self.height * self.width * channels {
            return Err(FourierError::Inconsistent(format!(
                "full amplitude of length {} for {}x{}x{channels}",
                full.len(),
                self.height,
                self.width
            )));
        }
        let n = self.len();
        let mut values = vec![0.0; channels * n];
        for (i, &(u, v)) in self.representatives.iter().enumerate() {
            for c in 0..channels {
                values[c * n + i] = full[(u * self.width + v) * channels + c];
            }
        }
        HalfAmplitude::new(channels, values)
    }

    /// Differentiable expansion of a `[B, Ch·n_half]` batch to `[B, H, W, Ch]`.
    pub fn expand<'t>(&self, half: Var<'t>, channels: usize) -> Result<Var<'t>> {
        let b = half.shape()[0];
        let full = half.gather(&self.gather_index(channels))?;
        Ok(full.reshape(&[b, self.height, self.width, channels])?)
    }
}

/// Non-negative amplitudes over the half-spectrum, `[Ch, n_half]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfAmplitude {
    pub channels: usize,
    pub values: Vec<f64>,
}

impl HalfAmplitude {
    pub fn new(channels: usize, values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(FourierError::NegativeAmplitude { index, value });
        }
        Ok(HalfAmplitude { channels, values })
    }
}

struct PolarInverseRule {
    h: usize,
    w: usize,
    ch: usize,
    cos_phase: Vec<f64>,
    sin_phase: Vec<f64>,
}

impl Backward for PolarInverseRule {
    fn backward(&self, _inputs: &[&Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (h, w, ch) = (self.h, self.w, self.ch);
        let n = h * w;
        let scale = 1.0 / n as f64;
        let mut out = vec![0.0; grad.len()];
        let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
        for b in 0..grad.len() / (n * ch) {
            let base = b * n * ch;
            for c in 0..ch {
                for p in 0..n {
                    re[p] = grad[base + p * ch + c];
                    im[p] = 0.0;
                }
                fft2_plane(&mut re, &mut im, h, w, false);
                for p in 0..n {
                    let k = base + p * ch + c;
                    out[k] = scale * (self.cos_phase[k] * re[p] + self.sin_phase[k] * im[p]);
                }
            }
        }
        vec![Some(out)]
    }
}

/// Differentiable `Re(F⁻¹(A ∠ P))` for a batch of amplitudes `[B, H, W, Ch]`
/// against fixed phases (`B` spectra). Returns the images and the largest
/// discarded imaginary magnitude.
pub fn polar_to_image<'t>(tape: &'t Tape, amplitude: Var<'t>, phases: &[&Spectrum]) -> Result<(Var<'t>, f64)> {
    let shape = amplitude.shape();
    let [b, h, w, ch] = shape[..] else {
        return Err(FourierError::BadShape(shape));
    };
    if phases.len() != b
        || phases
            .iter()
            .any(|s| (s.height, s.width, s.channels) != (h, w, ch))
    {
        return Err(FourierError::Inconsistent(format!(
            "{} phase spectra for amplitude batch {shape:?}",
            phases.len()
        )));
    }
    let per = h * w * ch;
    let mut cos_phase = Vec::with_capacity(b * per);
    let mut sin_phase = Vec::with_capacity(b * per);
    for s in phases {
        for &p in &s.phase {
            let (sn, cs) = p.sin_cos();
            cos_phase.push(cs);
            sin_phase.push(sn);
        }
    }
    let (pixels, residual) = amplitude.with_value(|a| {
        let mut pixels = Vec::with_capacity(b * per);
        let mut residual: f64 = 0.0;
        for (i, s) in phases.iter().enumerate() {
            let (px, r) = polar_inverse(&a.data()[i * per..(i + 1) * per], &s.phase, h, w, ch);
            pixels.extend(px);
            residual = residual.max(r);
        }
        (pixels, residual)
    });
    let rule = PolarInverseRule {
        h,
        w,
        ch,
        cos_phase,
        sin_phase,
    };
    let out = tape.custom(
        "polar_to_image",
        &[amplitude],
        Tensor::new(vec![b, h, w, ch], pixels)?,
        Box::new(rule),
    )?;
    Ok((out, residual))
}
