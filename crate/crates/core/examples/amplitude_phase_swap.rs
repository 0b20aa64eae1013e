//! Swaps Fourier amplitude and phase between two glyph styles and writes the
//! four images as PGM files.
//!
//! ```text
//! cargo run --release --example amplitude_phase_swap -- [out_dir]
//! ```

use std::path::PathBuf;

use agfa::cli::encode_netpbm;
use agfa::data::glyph::{default_styles, render};
use agfa::fourier::{dft2, idft2, HalfSpectrum, Spectrum};
use agfa::tensor::Tensor;

const SIZE: usize = 32;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/examples/swap".into()));
    std::fs::create_dir_all(&out)?;

    let styles = default_styles(2);
    let a = Tensor::new(vec![SIZE, SIZE, 1], render(&styles[0], 0, 3, SIZE))?;
    let b = Tensor::new(vec![SIZE, SIZE, 1], render(&styles[1], 0, 7, SIZE))?;
    let (sa, sb) = (dft2(&a)?, dft2(&b)?);

    let back = idft2(&sa)?;
    println!("round-trip max error {:.2e}", back.image.max_abs_diff(&a));

    // content (phase) of one image under the style (amplitude) of the other
    let mix = |amp: &Spectrum, phase: &Spectrum| Spectrum {
        amplitude: amp.amplitude.clone(),
        phase: phase.phase.clone(),
        ..amp.clone()
    };
    let a_in_b = idft2(&mix(&sb, &sa))?;
    let b_in_a = idft2(&mix(&sa, &sb))?;
    println!(
        "imaginary residuals after swap: {:.2e}, {:.2e}",
        a_in_b.imag_residual, b_in_a.imag_residual
    );
    println!(
        "{}x{} has {} free amplitude values per channel",
        SIZE,
        SIZE,
        HalfSpectrum::new(SIZE, SIZE).len()
    );

    for (name, img) in [("a", &a), ("b", &b), ("a_phase_b_amp", &a_in_b.image), ("b_phase_a_amp", &b_in_a.image)] {
        let path = out.join(format!("{name}.pgm"));
        std::fs::write(&path, encode_netpbm(img.data(), SIZE, SIZE, 1))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
