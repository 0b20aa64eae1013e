//! Colored-MNIST or Rotated-MNIST leave-one-domain-out protocol on the
//! bundled MNIST training file.
//!
//! ```text
//! cargo run --release --example mnist_protocols -- colored [method] [key=value...]
//! cargo run --release --example mnist_protocols -- rotated erm max_iters=500
//! ```

use agfa::cli::make_split;
use agfa::config::{Method, TrainConfig};
use agfa::data::bundled_mnist_dir;
use agfa::rng::{stream, Stream};
use agfa::trainer::{evaluate, train};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let which = args.next().unwrap_or_else(|| "colored".into());
    let method: Method = args.next().map(|s| s.parse()).transpose()?.unwrap_or(Method::Agfa);
    let overrides: Vec<String> = args.collect();

    let file = match which.as_str() {
        "colored" => "colored_mnist.toml",
        "rotated" => "rotated_mnist.toml",
        other => return Err(format!("unknown protocol `{other}` (colored or rotated)").into()),
    };
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(file);
    let mut base = TrainConfig::load_with_overrides(Some(&path), &overrides)?;
    base.method = method;
    base.data.mnist_dir = bundled_mnist_dir().display().to_string();

    let mut accs = Vec::new();
    for target in 0..base.data.domain_count() {
        let mut cfg = base.clone();
        cfg.data.domain = target;
        let split = make_split(&cfg)?;
        let start = std::time::Instant::now();
        let trained = train(&cfg, &split)?;
        let report = evaluate(&trained.model, &split.targets[0], cfg.eval_pairs, &mut stream(cfg.seed, Stream::Eval))?;
        println!(
            "{:<10} {:.2}%  ({:.0}s)",
            report.domain,
            100.0 * report.accuracy,
            start.elapsed().as_secs_f64()
        );
        accs.push(report.accuracy);
    }
    println!("mean       {:.2}%", 100.0 * accs.iter().sum::<f64>() / accs.len() as f64);
    Ok(())
}
