//! Procedural glyph domains: ten seven-segment style digits with per-sample
//! geometric jitter, rendered in several styles.
//!
//! Sample `i` of every domain has the same class and the same jitter, so the
//! domains share their phase structure; the styles (background sinusoid,
//! stroke intensity, blur) mostly alter the amplitude spectrum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DomainDataset;
use crate::tensor::Tensor;

/// Segments lit for each class: a, b, c, d, e, f, g.
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// Segment endpoints on a unit box (x right, y down), `[x0, y0, x1, y1]`.
const SEGMENT_LINES: [[f64; 4]; 7] = [
    [0.0, 0.0, 1.0, 0.0],
    [1.0, 0.0, 1.0, 0.5],
    [1.0, 0.5, 1.0, 1.0],
    [0.0, 1.0, 1.0, 1.0],
    [0.0, 0.5, 0.0, 1.0],
    [0.0, 0.0, 0.0, 0.5],
    [0.0, 0.5, 1.0, 0.5],
];

pub const CLASSES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphStyle {
    pub name: String,
    /// Cycles of the background sinusoid across the image.
    pub background_freq: f64,
    /// Orientation of the sinusoid, degrees.
    pub background_angle: f64,
    /// Peak background level.
    pub background_amp: f64,
    pub intensity: f64,
    /// Box-blur radius in pixels.
    pub blur: usize,
}

/// `n` styles: clean strokes first, then increasingly textured, dimmer and
/// blurrier renderings.
pub fn default_styles(n: usize) -> Vec<GlyphStyle> {
    (0..n)
        .map(|k| {
            let k_f = k as f64;
            GlyphStyle {
                name: format!("style{k}"),
                background_freq: 2.0 + 3.0 * k_f,
                background_angle: 35.0 * k_f,
                background_amp: if k == 0 { 0.0 } else { (0.25 + 0.1 * k_f).min(0.6) },
                intensity: 1.0 - 0.2 * k_f.min(3.0),
                blur: k.min(3),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphSpec {
    pub domains: Vec<GlyphStyle>,
    pub samples_per_domain: usize,
    pub size: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug)]
struct Jitter {
    dx: f64,
    dy: f64,
    scale: f64,
    shear: f64,
    thickness: f64,
}

fn jitter(seed: u64, index: usize) -> Jitter {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    Jitter {
        dx: rng.gen_range(-3.0..3.0),
        dy: rng.gen_range(-3.0..3.0),
        scale: rng.gen_range(0.8..1.1),
        shear: rng.gen_range(-0.25..0.25),
        thickness: rng.gen_range(1.6..3.2),
    }
}

fn segment_distance(px: f64, py: f64, [x0, y0, x1, y1]: [f64; 4]) -> f64 {
    let (vx, vy) = (x1 - x0, y1 - y0);
    let t = (((px - x0) * vx + (py - y0) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
    ((px - x0 - t * vx).powi(2) + (py - y0 - t * vy).powi(2)).sqrt()
}

/// Binary `size × size` mask of class `class` under `j`.
fn render_mask(class: usize, j: Jitter, size: usize) -> Vec<f64> {
    let s = size as f64;
    let (box_w, box_h) = (0.34 * s * j.scale, 0.6 * s * j.scale);
    let (ox, oy) = ((s - box_w) / 2.0 + j.dx, (s - box_h) / 2.0 + j.dy);
    let lines: Vec<[f64; 4]> = SEGMENT_LINES
        .iter()
        .zip(SEGMENTS[class])
        .filter(|(_, on)| *on)
        .map(|(&[x0, y0, x1, y1], _)| {
            let map = |x: f64, y: f64| (ox + box_w * x + j.shear * box_h * (0.5 - y), oy + box_h * y);
            let (a, b) = map(x0, y0);
            let (c, d) = map(x1, y1);
            [a, b, c, d]
        })
        .collect();
    let mut mask = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            if lines.iter().any(|&l| segment_distance(px, py, l) <= j.thickness / 2.0) {
                mask[y * size + x] = 1.0;
            }
        }
    }
    mask
}

fn box_blur(img: &[f64], size: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return img.to_vec();
    }
    let r = radius as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; size * size];
        for y in 0..size {
            for x in 0..size {
                let mut acc = 0.0;
                for k in -r..=r {
                    let (sy, sx) = if horizontal { (y as isize, x as isize + k) } else { (y as isize + k, x as isize) };
                    let sy = sy.clamp(0, size as isize - 1) as usize;
                    let sx = sx.clamp(0, size as isize - 1) as usize;
                    acc += src[sy * size + sx];
                }
                out[y * size + x] = acc / (2 * r + 1) as f64;
            }
        }
        out
    };
    pass(&pass(img, true), false)
}

/// Renders sample `index` (class `index mod 10`) in `style`.
pub fn render(style: &GlyphStyle, seed: u64, index: usize, size: usize) -> Vec<f64> {
    let mask = render_mask(index % CLASSES, jitter(seed, index), size);
    let glyph = box_blur(&mask, size, style.blur);
    let (sin, cos) = style.background_angle.to_radians().sin_cos();
    let omega = 2.0 * std::f64::consts::PI * style.background_freq / size as f64;
    (0..size * size)
        .map(|p| {
            let (y, x) = ((p / size) as f64, (p % size) as f64);
            let bg = style.background_amp * 0.5 * (1.0 + (omega * (x * cos + y * sin)).sin());
            (bg + style.intensity * glyph[p]).clamp(0.0, 1.0)
        })
        .collect()
}

pub fn make_glyph_domains(spec: &GlyphSpec) -> Vec<DomainDataset> {
    let n = spec.samples_per_domain;
    let size = spec.size;
    spec.domains
        .iter()
        .enumerate()
        .map(|(id, style)| {
            let mut data = Vec::with_capacity(n * size * size);
            for i in 0..n {
                data.extend(render(style, spec.seed, i, size));
            }
            DomainDataset {
                name: style.name.clone(),
                domain_id: id,
                images: Tensor::new(vec![n, size, size, 1], data).expect("shape"),
                labels: (0..n).map(|i| i % CLASSES).collect(),
                class_count: CLASSES,
            }
        })
        .collect()
}
