//! Fits the variational softmax head on fixed features by maximising the
//! ELBO, then reports the KL term, Gaussian logit moments and accuracy.
//!
//! ```text
//! cargo run --release --example bayesian_head
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use agfa::head::{logit_stats, predict, VariationalHead};
use agfa::optim::{Adam, AdamState};
use agfa::tensor::{Tape, Tensor};

const CLASSES: usize = 3;
const DIM: usize = 4;
const N: usize = 300;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let centres: Vec<Vec<f64>> = (0..CLASSES)
        .map(|_| (0..DIM).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let labels: Vec<usize> = (0..N).map(|i| i % CLASSES).collect();
    let features = Tensor::from_rows(
        &labels
            .iter()
            .map(|&y| centres[y].iter().map(|c| c + rng.gen_range(-0.8..0.8)).collect())
            .collect::<Vec<_>>(),
    )?;

    let mut head = VariationalHead::new(CLASSES, DIM, &mut rng)?;
    let adam = Adam {
        lr: 0.05,
        ..Adam::default()
    };
    let mut state = AdamState::new(head.params());
    let kl_scale = 1.0 / N as f64;
    for step in 0..=300 {
        let tape = Tape::new();
        let vars = head.bind(&tape, true);
        let noise = head.draw_noise(&mut rng, 20);
        let elbo = vars.elbo(tape.constant(features.clone()), &labels, &noise, kl_scale)?;
        let loss = elbo.neg()?;
        tape.backward(loss)?;
        let grads = [tape.grad(vars.mean).unwrap(), tape.grad(vars.log_var).unwrap()];
        if step % 50 == 0 {
            println!("step {step:>3}  elbo {:>8.4}  kl {:>7.3}", elbo.item(), vars.kl_to_prior()?.item());
        }
        adam.step(&mut state, &mut head.params_mut(), &grads)?;
    }

    let stats = logit_stats(&head, &features)?;
    println!("first sample: mu {:?}", &stats.mu.data()[..CLASSES]);
    println!("              sigma {:?}", &stats.sigma.data()[..CLASSES]);
    let pred = predict(&head, &features)?;
    let correct = pred.iter().zip(&labels).filter(|(p, y)| p == y).count();
    println!("posterior-mean accuracy {:.3}", correct as f64 / N as f64);
    Ok(())
}
