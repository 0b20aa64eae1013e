//! Leave-one-style-out training on the procedural glyph dataset, comparing
//! methods on the held-out style.
//!
//! ```text
//! cargo run --release --example glyph_generalisation -- [iters] [method...]
//! ```

use agfa::cli::make_split;
use agfa::config::{Method, TrainConfig};
use agfa::rng::{stream, Stream};
use agfa::trainer::{evaluate, train};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let iters: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);
    let mut methods: Vec<Method> = args.map(|s| s.parse()).collect::<Result<_, _>>()?;
    if methods.is_empty() {
        methods = vec![Method::Erm, Method::ErmSwad, Method::Agfa];
    }

    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/glyph.toml");
    let mut base = TrainConfig::load(&path)?;
    base.max_iters = iters;
    let split = make_split(&base)?;
    println!("target style: {}", split.targets[0].name);
    for method in methods {
        let cfg = TrainConfig { method, ..base.clone() };
        let start = std::time::Instant::now();
        let trained = train(&cfg, &split)?;
        let report = evaluate(&trained.model, &split.targets[0], cfg.eval_pairs, &mut stream(cfg.seed, Stream::Eval))?;
        println!(
            "{:<16} accuracy {:.2}%  discrepancy {:.3}  ({} iters, {:.0}s)",
            method.as_str(),
            100.0 * report.accuracy,
            report.discrepancy,
            trained.iterations,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
