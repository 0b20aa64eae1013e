//! Bayesian linear classification head with a diagonal Gaussian posterior
//! over the per-class weight vectors.
//!
//! Class `j` has weights `w_j ~ N(m_j, diag(v_j))`; the prior is `N(0, I)`.
//! Given features `φ`, the logit `⟨w_j, φ⟩` is Gaussian with mean `⟨m_j, φ⟩`
//! and variance `Σ_k v_jk φ_k²`. Variances are stored as log-variances.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::rng::normals;
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeadError {
    #[error("head needs at least 2 classes and 1 feature, got {classes}x{dim}")]
    TooSmall { classes: usize, dim: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("expected {expected}, got shape {got:?}")]
    Shape { expected: String, got: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, HeadError>;

/// Initial log-variance of every weight.
pub const INIT_LOG_VAR: f64 = -4.605_170_185_988_091; // ln(1e-2)

#[derive(Clone, Debug, PartialEq)]
pub struct VariationalHead {
    mean: Tensor,
    log_var: Tensor,
}

impl VariationalHead {
    /// `m ~ N(0, 1/d)`, `v = 1e-2`.
    pub fn new(classes: usize, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if classes < 2 || dim < 1 {
            return Err(HeadError::TooSmall { classes, dim });
        }
        let normal = Normal::new(0.0, (1.0 / dim as f64).sqrt()).expect("positive std");
        let mean = Tensor::from_fn(&[classes, dim], |_| normal.sample(rng));
        Ok(VariationalHead {
            mean,
            log_var: Tensor::filled(&[classes, dim], INIT_LOG_VAR),
        })
    }

    pub fn from_parts(mean: Tensor, log_var: Tensor) -> Result<Self> {
        let [classes, dim] = mean.shape()[..] else {
            return Err(HeadError::Shape {
                expected: "[C, d] means".into(),
                got: mean.shape().to_vec(),
            });
        };
        if classes < 2 {
            return Err(HeadError::TooSmall { classes, dim });
        }
        if log_var.shape() != mean.shape() {
            return Err(HeadError::Shape {
                expected: format!("log-variances shaped {:?}", mean.shape()),
                got: log_var.shape().to_vec(),
            });
        }
        Ok(VariationalHead { mean, log_var })
    }

    pub fn classes(&self) -> usize {
        self.mean.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.mean.shape()[1]
    }

    pub fn mean(&self) -> &Tensor {
        &self.mean
    }

    pub fn log_var(&self) -> &Tensor {
        &self.log_var
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.data().iter().map(|l| l.exp()).collect()
    }

    /// Mutable access to `[m, log v]`, in that order.
    pub fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.mean, &mut self.log_var]
    }

    pub fn params(&self) -> [&Tensor; 2] {
        [&self.mean, &self.log_var]
    }

    /// Records the parameters on `tape`, as trainable leaves or constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> HeadVars<'t> {
        let leaf = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        HeadVars {
            mean: leaf(&self.mean),
            log_var: leaf(&self.log_var),
        }
    }

    /// Standard-normal noise for `n` weight draws, shaped `[n, C, d]`.
    pub fn draw_noise(&self, rng: &mut impl Rng, n: usize) -> Tensor {
        let (c, d) = (self.classes(), self.dim());
        Tensor::new(vec![n, c, d], normals(rng, n * c * d)).expect("shape matches length")
    }
}

/// Head parameters recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars<'t> {
    pub mean: Var<'t>,
    pub log_var: Var<'t>,
}

/// Gaussian logit moments, `[B, C]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitStats {
    pub mu: Tensor,
    pub sigma: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct LogitStatsVar<'t> {
    pub mu: Var<'t>,
    pub sigma: Var<'t>,
}

impl LogitStatsVar<'_> {
    pub fn value(&self) -> LogitStats {
        LogitStats {
            mu: self.mu.value(),
            sigma: self.sigma.value(),
        }
    }
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(HeadError::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

impl<'t> HeadVars<'t> {
    fn classes(&self) -> usize {
        self.mean.shape()[0]
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> HeadVars<'t> {
        HeadVars {
            mean: self.mean.detach(),
            log_var: self.log_var.detach(),
        }
    }

    pub fn logit_stats(&self, features: Var<'t>) -> Result<LogitStatsVar<'t>> {
        let mu = features.matmul_t(self.mean)?;
        let var = features.square()?.matmul_t(self.log_var.exp()?)?;
        Ok(LogitStatsVar { mu, sigma: var.sqrt()? })
    }

    /// Reparameterised draws `m + sqrt(v) ⊙ ε` for noise `[n, C, d]`,
    /// returned as `[n·C, d]` (draw-major).
    pub fn sample(&self, noise: &Tensor) -> Result<Var<'t>> {
        let shape = self.mean.shape();
        let [n, c, d] = noise.shape()[..] else {
            return Err(HeadError::Shape {
                expected: "[n, C, d] noise".into(),
                got: noise.shape().to_vec(),
            });
        };
        if [c, d] != shape[..] {
            return Err(HeadError::Shape {
                expected: format!("noise [n, {}, {}]", shape[0], shape[1]),
                got: noise.shape().to_vec(),
            });
        }
        let tape = self.mean.tape();
        let std = self.log_var.mul_scalar(0.5)?.exp()?;
        let w = tape.constant(noise.clone()).mul(std)?.add(self.mean)?;
        Ok(w.reshape(&[n * c, d])?)
    }

    /// `½ Σ (v + m² − 1 − ln v)`.
    pub fn kl_to_prior(&self) -> Result<Var<'t>> {
        let terms = self
            .log_var
            .exp()?
            .add(self.mean.square()?)?
            .sub(self.log_var)?
            .add_scalar(-1.0)?;
        Ok(terms.sum()?.mul_scalar(0.5)?)
    }

    /// Monte-Carlo softmax NLL, averaged over the draws in `noise` and the
    /// batch.
    pub fn expected_nll(&self, features: Var<'t>, labels: &[usize], noise: &Tensor) -> Result<Var<'t>> {
        let c = self.classes();
        check_labels(labels, c)?;
        let b = features.shape()[0];
        if labels.len() != b {
            return Err(HeadError::Shape {
                expected: format!("{} labels", labels.len()),
                got: features.shape(),
            });
        }
        let n = noise.shape()[0];
        let w = self.sample(noise)?;
        let logits = features.matmul_t(w)?.reshape(&[b * n, c])?;
        let targets: Vec<usize> = labels.iter().flat_map(|&l| std::iter::repeat(l).take(n)).collect();
        Ok(logits.log_softmax()?.pick(&targets)?.mean()?.neg()?)
    }

    /// `−(mean NLL + kl_scale · KL)`, to be maximised.
    pub fn elbo(&self, features: Var<'t>, labels: &[usize], noise: &Tensor, kl_scale: f64) -> Result<Var<'t>> {
        let nll = self.expected_nll(features, labels, noise)?;
        let kl = self.kl_to_prior()?.mul_scalar(kl_scale)?;
        Ok(nll.add(kl)?.neg()?)
    }
}

fn check_features(head: &VariationalHead, features: &Tensor) -> Result<()> {
    match features.shape() {
        [_, d] if *d == head.dim() => Ok(()),
        other => Err(HeadError::Shape {
            expected: format!("[B, {}] features", head.dim()),
            got: other.to_vec(),
        }),
    }
}

pub fn logit_stats(head: &VariationalHead, features: &Tensor) -> Result<LogitStats> {
    check_features(head, features)?;
    let tape = Tape::new();
    let stats = head.bind(&tape, false).logit_stats(tape.constant(features.clone()))?;
    Ok(stats.value())
}

/// Weight draws for noise `[n, C, d]`, shaped `[n·C, d]`.
pub fn sample_heads(head: &VariationalHead, noise: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    Ok(head.bind(&tape, false).sample(noise)?.value())
}

pub fn kl_to_prior(head: &VariationalHead) -> f64 {
    head.mean
        .data()
        .iter()
        .zip(head.log_var.data())
        .map(|(m, lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum()
}

pub fn expected_nll(head: &VariationalHead, features: &Tensor, labels: &[usize], noise: &Tensor) -> Result<f64> {
    check_features(head, features)?;
    let tape = Tape::new();
    let nll = head
        .bind(&tape, false)
        .expected_nll(tape.constant(features.clone()), labels, noise)?;
    Ok(nll.item())
}

pub fn elbo(head: &VariationalHead, features: &Tensor, labels: &[usize], noise: &Tensor, kl_scale: f64) -> Result<f64> {
    Ok(-(expected_nll(head, features, labels, noise)? + kl_scale * kl_to_prior(head)))
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(scores: &Tensor) -> Vec<usize> {
    let c = *scores.shape().last().expect("2-D scores");
    scores
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (j, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Posterior-mean prediction: `argmax_j ⟨m_j, φ⟩`.
pub fn predict(head: &VariationalHead, features: &Tensor) -> Result<Vec<usize>> {
    Ok(argmax_rows(&logit_stats(head, features)?.mu))
}

/// Posterior-mean logits `φ · mᵀ`.
pub fn mean_logits(head: &VariationalHead, features: &Tensor) -> Result<Tensor> {
    Ok(logit_stats(head, features)?.mu)
}

/// Mean disagreement rate of the argmax predictions of sampled head pairs.
/// `noise` holds `2·pairs` draws; draw `2p` is paired with `2p + 1`.
pub fn sampled_discrepancy(head: &VariationalHead, features: &Tensor, noise: &Tensor) -> Result<f64> {
    check_features(head, features)?;
    let n = noise.shape()[0];
    let c = head.classes();
    let tape = Tape::new();
    let w = head.bind(&tape, false).sample(noise)?;
    let logits = tape.constant(features.clone()).matmul_t(w)?.value();
    let b = features.shape()[0];
    let preds = argmax_rows(&logits.reshape(&[b * n, c])?);
    let pairs = n / 2;
    let mut disagree = 0usize;
    for row in 0..b {
        for p in 0..pairs {
            disagree += usize::from(preds[row * n + 2 * p] != preds[row * n + 2 * p + 1]);
        }
    }
    Ok(disagree as f64 / (b * pairs).max(1) as f64)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::gradcheck::{max_rel_err, numeric_grad};

    fn head(mean: Vec<f64>, var: Vec<f64>, c: usize, d: usize) -> VariationalHead {
        VariationalHead::from_parts(
            Tensor::new(vec![c, d], mean).unwrap(),
            Tensor::new(vec![c, d], var.iter().map(|v| v.ln()).collect()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn logit_stats_hand_example() {
        let h = head(vec![0.5, -1.0, 0.0, 0.0], vec![0.04, 0.09, 1.0, 1.0], 2, 2);
        let s = logit_stats(&h, &Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap();
        assert!((s.mu.at2(0, 0) + 1.5).abs() < 1e-12);
        assert!((s.sigma.at2(0, 0) - 0.4f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_posterior_and_zero_features() {
        let h = head(vec![0.5, -1.0, 2.0, 1.0], vec![1e-12; 4], 2, 2);
        let s = logit_stats(&h, &Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap();
        assert!(s.sigma.data().iter().all(|&v| v < 1e-5));
        let s = logit_stats(&h, &Tensor::zeros(&[3, 2])).unwrap();
        assert!(s.mu.data().iter().chain(s.sigma.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn feature_dim_mismatch_is_an_error() {
        let h = head(vec![0.0; 4], vec![1.0; 4], 2, 2);
        assert!(matches!(logit_stats(&h, &Tensor::zeros(&[1, 3])), Err(HeadError::Shape { .. })));
    }

    #[test]
    fn zero_noise_draw_is_the_mean() {
        let h = head(vec![0.3, -0.2, 1.0, 4.0], vec![0.5, 2.0, 1.0, 0.1], 2, 2);
        let w = sample_heads(&h, &Tensor::zeros(&[3, 2, 2])).unwrap();
        for draw in 0..3 {
            assert_eq!(&w.data()[draw * 4..draw * 4 + 4], h.mean().data());
        }
    }

    #[test]
    fn logit_moments_match_sampled_heads() {
        let h = head(vec![0.5, -1.0, 0.2, 0.3], vec![0.04, 0.09, 0.5, 0.25], 2, 2);
        let phi = [1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let w = sample_heads(&h, &h.draw_noise(&mut rng, n)).unwrap();
        let stats = logit_stats(&h, &Tensor::from_rows(&[phi.to_vec()]).unwrap()).unwrap();
        for j in 0..2 {
            let (mut s1, mut s2) = (0.0, 0.0);
            for draw in 0..n {
                let row = &w.data()[(draw * 2 + j) * 2..(draw * 2 + j) * 2 + 2];
                let z = row[0] * phi[0] + row[1] * phi[1];
                s1 += z;
                s2 += z * z;
            }
            let mean = s1 / n as f64;
            let var = s2 / n as f64 - mean * mean;
            let (mu, sigma) = (stats.mu.at2(0, j), stats.sigma.at2(0, j));
            assert!((mean - mu).abs() < 3.0 * sigma / 1e3, "class {j} mean {mean} vs {mu}");
            assert!((var / (sigma * sigma) - 1.0).abs() < 0.01, "class {j} var {var}");
        }
    }

    /// `∫ q log(q/p)` by composite Simpson over ±14 standard deviations.
    fn kl_quadrature(m: f64, v: f64) -> f64 {
        let (lo, hi, n) = (m - 14.0 * v.sqrt() - 14.0, m + 14.0 * v.sqrt() + 14.0, 200_000);
        let step = (hi - lo) / n as f64;
        let f = |w: f64| {
            let log_q = -0.5 * (w - m).powi(2) / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
            let log_p = -0.5 * w * w - 0.5 * (2.0 * std::f64::consts::PI).ln();
            log_q.exp() * (log_q - log_p)
        };
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * step);
        }
        acc * step / 3.0
    }

    #[test]
    fn kl_closed_form_examples() {
        assert_eq!(kl_to_prior(&head(vec![0.0; 4], vec![1.0; 4], 2, 2)), 0.0);
        let h = head(vec![1.0, 0.0], vec![1.0, 1.0], 2, 1);
        assert!((kl_to_prior(&h) - 0.5).abs() < 1e-12);
        assert!((kl_quadrature(1.0, 1.0) - 0.5).abs() < 1e-6);
        let h = head(vec![0.0, 0.0, 0.0, 0.0], vec![2.0, 0.5, 1.0, 1.0], 2, 2);
        let expected = 0.5 * ((2.0 - 1.0 - 2f64.ln()) + (0.5 - 1.0 - 0.5f64.ln()));
        assert!((kl_to_prior(&h) - expected).abs() < 1e-12);
        assert!((expected - 0.25).abs() < 0.01);
        let quad = kl_quadrature(0.0, 2.0) + kl_quadrature(0.0, 0.5);
        assert!((quad - expected).abs() < 1e-6);
    }

    #[test]
    fn kl_tape_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = VariationalHead::new(3, 4, &mut rng).unwrap();
        let tape = Tape::new();
        let kl = h.bind(&tape, true).kl_to_prior().unwrap().item();
        assert!((kl - kl_to_prior(&h)).abs() < 1e-12);
        assert!(kl > 0.0);
    }

    #[test]
    fn nll_closed_forms() {
        let h = head(vec![10.0, -10.0], vec![1e-300, 1e-300], 2, 1);
        let noise = Tensor::zeros(&[4, 2, 1]);
        let phi = Tensor::from_rows(&[vec![1.0]]).unwrap();
        let nll = expected_nll(&h, &phi, &[0], &noise).unwrap();
        let expected = (1.0f64 + (-20f64).exp()).ln();
        assert!((nll - expected).abs() < 1e-15);
        assert!((nll - 2.06e-9).abs() < 1e-11);

        let h = head(vec![0.0; 8], vec![1e-300; 8], 4, 2);
        let phi = Tensor::from_rows(&[vec![1.0, -3.0], vec![0.2, 0.0]]).unwrap();
        let nll = expected_nll(&h, &phi, &[3, 1], &Tensor::zeros(&[2, 4, 2])).unwrap();
        assert!((nll - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_label_out_of_range() {
        let h = head(vec![0.0; 4], vec![1.0; 4], 2, 2);
        let r = expected_nll(&h, &Tensor::zeros(&[1, 2]), &[2], &Tensor::zeros(&[1, 2, 2]));
        assert_eq!(r, Err(HeadError::LabelOutOfRange { label: 2, classes: 2 }));
    }

    #[test]
    fn nll_monte_carlo_converges() {
        let h = head(vec![0.4, -0.3, -0.1, 0.5, 0.0, 0.2], vec![0.3, 0.6, 0.2, 0.4, 0.5, 0.1], 3, 2);
        let phi = Tensor::from_rows(&[vec![1.0, 0.5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let small = expected_nll(&h, &phi, &[1], &h.draw_noise(&mut rng, 100_000)).unwrap();
        let large = expected_nll(&h, &phi, &[1], &h.draw_noise(&mut rng, 1_000_000)).unwrap();
        assert!(((small - large) / large).abs() < 0.01);
    }

    #[test]
    fn elbo_is_bounded_by_zero_with_unit_kl_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = VariationalHead::new(3, 4, &mut rng).unwrap();
        let phi = Tensor::from_fn(&[5, 4], |i| (i as f64).sin());
        let noise = h.draw_noise(&mut rng, 10);
        let e = elbo(&h, &phi, &[0, 1, 2, 1, 0], &noise, 1.0).unwrap();
        assert!(e <= 0.0);
        let at_prior = head(vec![0.0; 6], vec![1.0; 6], 3, 2);
        assert_eq!(kl_to_prior(&at_prior), 0.0);
    }

    #[test]
    fn inflating_variance_at_prior_optimum_lowers_elbo() {
        // Zero features: the likelihood ignores v, so the KL term decides.
        let h = head(vec![0.0; 4], vec![1.0; 4], 2, 2);
        let phi = Tensor::zeros(&[2, 2]);
        let noise = Tensor::from_fn(&[8, 2, 2], |i| ((i * 7) % 5) as f64 - 2.0);
        let base = elbo(&h, &phi, &[0, 1], &noise, 1.0).unwrap();
        let wider = head(vec![0.0; 4], vec![1.5; 4], 2, 2);
        assert!(elbo(&wider, &phi, &[0, 1], &noise, 1.0).unwrap() < base);
    }

    #[test]
    fn elbo_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (c, d) = (3, 4);
        let h = VariationalHead::from_parts(
            Tensor::from_fn(&[c, d], |i| ((i * 37) % 11) as f64 / 10.0 - 0.5),
            Tensor::from_fn(&[c, d], |i| ((i * 13) % 7) as f64 / 5.0 - 1.5),
        )
        .unwrap();
        let phi = Tensor::from_fn(&[5, d], |i| ((i * 17) % 9) as f64 / 4.0 - 1.0);
        let labels = [0, 2, 1, 1, 0];
        let noise = h.draw_noise(&mut rng, 6);
        let kl_scale = 0.3;

        let run = |m: &Tensor, lv: &Tensor, f: &Tensor| {
            let tape = Tape::new();
            let (mv, lvv, fv) = (tape.param(m.clone()), tape.param(lv.clone()), tape.param(f.clone()));
            let hv = HeadVars { mean: mv, log_var: lvv };
            let e = hv.elbo(fv, &labels, &noise, kl_scale).unwrap();
            let value = e.item();
            tape.backward(e).unwrap();
            (value, [tape.grad(mv).unwrap(), tape.grad(lvv).unwrap(), tape.grad(fv).unwrap()])
        };
        let (value, grads) = run(h.mean(), h.log_var(), &phi);
        assert!((value - elbo(&h, &phi, &labels, &noise, kl_scale).unwrap()).abs() < 1e-12);
        let num_m = numeric_grad(|x| run(x, h.log_var(), &phi).0, h.mean(), 1e-5);
        let num_lv = numeric_grad(|x| run(h.mean(), x, &phi).0, h.log_var(), 1e-5);
        let num_f = numeric_grad(|x| run(h.mean(), h.log_var(), x).0, &phi, 1e-5);
        assert!(max_rel_err(&grads[0], &num_m, 1e-8) < 1e-4);
        assert!(max_rel_err(&grads[1], &num_lv, 1e-8) < 1e-4);
        assert!(max_rel_err(&grads[2], &num_f, 1e-8) < 1e-4);
    }

    #[test]
    fn predict_ties_and_examples() {
        let h = head(vec![1.0, 3.0, 0.0], vec![1.0; 3], 3, 1);
        assert_eq!(predict(&h, &Tensor::from_rows(&[vec![1.0]]).unwrap()).unwrap(), vec![1]);
        let h = head(vec![2.0, 2.0], vec![1.0; 2], 2, 1);
        assert_eq!(predict(&h, &Tensor::from_rows(&[vec![1.0]]).unwrap()).unwrap(), vec![0]);
    }

    #[test]
    fn predict_matches_majority_vote_when_margins_are_wide() {
        let h = head(vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0], vec![1e-3; 6], 3, 2);
        let phi = Tensor::from_rows(&[vec![4.0, 0.5], vec![-0.5, 3.0], vec![-2.0, -3.0]]).unwrap();
        let pred = predict(&h, &phi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let w = sample_heads(&h, &h.draw_noise(&mut rng, n)).unwrap();
        for (b, &p) in pred.iter().enumerate() {
            let mut votes = [0usize; 3];
            for draw in 0..n {
                let score = |j: usize| {
                    let row = &w.data()[(draw * 3 + j) * 2..(draw * 3 + j) * 2 + 2];
                    row[0] * phi.at2(b, 0) + row[1] * phi.at2(b, 1)
                };
                let best = (0..3).fold(0, |best, j| if score(j) > score(best) { j } else { best });
                votes[best] += 1;
            }
            let winner = (0..3).max_by_key(|&j| votes[j]).unwrap();
            assert_eq!(winner, p);
        }
    }

    #[test]
    fn discrepancy_of_deterministic_head_is_zero() {
        let h = head(vec![1.0, 0.0, 0.0, 1.0], vec![1e-300; 4], 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let phi = Tensor::from_fn(&[6, 2], |i| (i as f64).cos());
        let d = sampled_discrepancy(&h, &phi, &h.draw_noise(&mut rng, 20)).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn discrepancy_of_random_predictors_is_one_minus_one_over_c() {
        // Zero means and unit variances with a single feature: every draw's
        // argmax is uniform over the C classes and independent across draws.
        let c = 4;
        let h = head(vec![0.0; c], vec![1.0; c], c, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let phi = Tensor::filled(&[1, 1], 1.0);
        let d = sampled_discrepancy(&h, &phi, &h.draw_noise(&mut rng, 40_000)).unwrap();
        assert!((d - (1.0 - 1.0 / c as f64)).abs() < 0.02, "{d}");
    }
}
