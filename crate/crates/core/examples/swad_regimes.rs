//! Feeds a simulated validation curve (improve, plateau, overfit) through the
//! dense weight-averaging state machine and prints where averaging starts and
//! stops.
//!
//! ```text
//! cargo run --example swad_regimes
//! ```

use agfa::swad::{SwadConfig, SwadState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let period = 10;
    let config = SwadConfig { n_s: 3, n_e: 6, r: 1.2 };
    let mut state = SwadState::new(config, period, 1)?;
    let curve = |k: usize| {
        let k = k as f64;
        0.3 + 0.7 * (-k / 6.0).exp() + 0.002 * (k - 25.0).max(0.0).powi(2)
    };
    let mut iter = 0;
    while state.phase() != agfa::swad::Phase::Finished && iter < 1000 {
        iter += 1;
        let val = (iter % period == 0).then(|| curve(iter / period));
        // the "parameter" is the iteration index, so the average is the
        // midpoint of the averaged range
        if let Some(event) = state.observe(iter, &[iter as f64], val)? {
            println!("iter {iter:>4}: {event:?}");
        }
    }
    println!("phase {:?}, averaged iterations {:?}", state.phase(), state.averaged_range());
    println!("average of the iteration index: {:.2}", state.finalize()[0]);
    Ok(())
}
