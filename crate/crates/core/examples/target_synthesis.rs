//! Synthesises target images from glyph sources with a randomly initialised
//! amplitude generator, for a range of post-mixup bounds, and writes the
//! first image of each batch.
//!
//! ```text
//! cargo run --release --example target_synthesis -- [out_dir]
//! ```

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use agfa::cli::encode_netpbm;
use agfa::data::glyph::{default_styles, make_glyph_domains, GlyphSpec};
use agfa::generator::{synthesize_target, GeneratorKind, GeneratorParams, TargetNoise};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/examples/synthesis".into()));
    std::fs::create_dir_all(&out)?;

    let domains = make_glyph_domains(&GlyphSpec {
        domains: default_styles(1),
        samples_per_domain: 8,
        size: 32,
        seed: 0,
    });
    let source = &domains[0];
    let shape = source.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let generator = GeneratorParams::new(GeneratorKind::Amplitude, shape, None, &mut rng);
    std::fs::write(out.join("source.pgm"), encode_netpbm(source.image(0), shape.height, shape.width, 1))?;

    for alpha_mix in [0.0, 0.25, 0.5, 1.0] {
        let mut gen_rng = ChaCha8Rng::seed_from_u64(2);
        let mut mix_rng = ChaCha8Rng::seed_from_u64(3);
        let noise = TargetNoise::draw(source.len(), alpha_mix, &mut gen_rng, &mut mix_rng)?;
        let batch = synthesize_target(&source.images, &source.labels, &generator, &noise)?;
        let moved = batch.images.max_abs_diff(&source.images);
        println!("alpha_mix {alpha_mix:<4}  max pixel change {moved:.4}  imaginary residual {:.1e}", batch.imag_residual);
        let first = &batch.images.data()[..shape.pixels()];
        std::fs::write(
            out.join(format!("target_alpha{alpha_mix}.pgm")),
            encode_netpbm(first, shape.height, shape.width, 1),
        )?;
    }
    println!("images in {}", out.display());
    Ok(())
}
