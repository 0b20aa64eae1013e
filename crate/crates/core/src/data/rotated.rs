//! Rotated domains: bilinear rotation about the image centre, zero outside.

use super::DomainDataset;
use crate::tensor::Tensor;

/// Rotates one `h × w × ch` image by `degrees` (counter-clockwise on screen).
pub fn rotate(image: &[f64], h: usize, w: usize, ch: usize, degrees: f64) -> Vec<f64> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let at = |y: isize, x: isize, c: usize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            image[(y as usize * w + x as usize) * ch + c]
        }
    };
    let mut out = vec![0.0; h * w * ch];
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            // inverse map: output pixel ← source location
            let sx = cx + cos * dx - sin * dy;
            let sy = cy + sin * dx + cos * dy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for c in 0..ch {
                let v = (1.0 - fy) * ((1.0 - fx) * at(y0, x0, c) + fx * at(y0, x0 + 1, c))
                    + fy * ((1.0 - fx) * at(y0 + 1, x0, c) + fx * at(y0 + 1, x0 + 1, c));
                out[(y * w + x) * ch + c] = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

pub fn rotate_dataset(base: &DomainDataset, degrees: f64, domain_id: usize) -> DomainDataset {
    let s = base.shape();
    let mut data = Vec::with_capacity(base.images.len());
    for i in 0..base.len() {
        data.extend(rotate(base.image(i), s.height, s.width, s.channels, degrees));
    }
    DomainDataset {
        name: format!("rot{degrees}"),
        domain_id,
        images: Tensor::new(base.images.shape().to_vec(), data).expect("same shape"),
        labels: base.labels.clone(),
        class_count: base.class_count,
    }
}

/// Domain `i` is `bases[i]` rotated by `angles[i]`. Pass the same base
/// repeatedly to rotate one image set to every angle.
pub fn make_rotated_domains(bases: &[DomainDataset], angles: &[f64]) -> Vec<DomainDataset> {
    bases
        .iter()
        .zip(angles)
        .enumerate()
        .map(|(i, (b, &a))| rotate_dataset(b, a, i))
        .collect()
}
