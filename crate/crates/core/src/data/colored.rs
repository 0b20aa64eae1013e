//! Colored-MNIST environments.
//!
//! Binary label `y = [digit < 5]`, flipped with probability 0.25. The colour
//! bit is `y` flipped with the environment's probability, and the digit is
//! drawn into channel `colour` of a two-channel image, the other channel
//! left black.

use rand::Rng;

use super::DomainDataset;
use crate::tensor::Tensor;

pub const LABEL_NOISE: f64 = 0.25;

pub fn make_colored_domains(bases: &[DomainDataset], correlations: &[f64], rng: &mut impl Rng) -> Vec<DomainDataset> {
    bases
        .iter()
        .zip(correlations)
        .enumerate()
        .map(|(id, (base, &env))| colorize(base, env, id, rng))
        .collect()
}

fn colorize(base: &DomainDataset, env: f64, domain_id: usize, rng: &mut impl Rng) -> DomainDataset {
    let s = base.shape();
    let pixels = s.height * s.width;
    let mut data = vec![0.0; base.len() * pixels * 2];
    let mut labels = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut y = usize::from(base.labels[i] < 5);
        if rng.gen_bool(LABEL_NOISE) {
            y ^= 1;
        }
        let color = if rng.gen_bool(env) { y ^ 1 } else { y };
        let img = base.image(i);
        for p in 0..pixels {
            // grey source: first channel only
            data[(i * pixels + p) * 2 + color] = img[p * s.channels];
        }
        labels.push(y);
    }
    DomainDataset {
        name: format!("color{env}"),
        domain_id,
        images: Tensor::new(vec![base.len(), s.height, s.width, 2], data).expect("shape"),
        labels,
        class_count: 2,
    }
}

/// The colour bit of a two-channel image: the channel carrying more ink.
pub fn color_of(image: &[f64]) -> usize {
    let (mut c0, mut c1) = (0.0, 0.0);
    for px in image.chunks(2) {
        c0 += px[0];
        c1 += px[1];
    }
    usize::from(c1 > c0)
}
