//! Overfit-aware dense weight averaging.
//!
//! Parameters are observed every iteration and validation losses every `V`
//! iterations. Regime detection runs on validation points `k = 1, 2, …`:
//!
//! - start: the first `k_s` whose loss is ≤ each of the next `N_s − 1`
//!   losses; `l̄` is the mean of those `N_s` losses;
//! - end: at validation point `k`, if the last `N_e` losses all exceed
//!   `r · l̄`, then `k_e = k − N_e`.
//!
//! Iteration bounds are `t_s = (k_s − 1)·V + 1` and `t_e = k_e·V`, and the
//! average covers every iteration in `[t_s, t_e]`. Parameter sums are kept
//! per validation interval, so the start can be applied retroactively and the
//! end truncates exactly.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwadError {
    #[error("invalid averaging config: {0}")]
    Config(String),
    #[error("averaging already finished at iteration {0}")]
    Finished(usize),
    #[error("expected iteration {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },
    #[error("validation loss {state} at iteration {iter} (period {period})")]
    Cadence {
        iter: usize,
        period: usize,
        state: &'static str,
    },
    #[error("parameter vector of length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("non-finite validation loss at iteration {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, SwadError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwadConfig {
    pub n_s: usize,
    pub n_e: usize,
    pub r: f64,
}

impl Default for SwadConfig {
    fn default() -> Self {
        SwadConfig { n_s: 3, n_e: 6, r: 1.3 }
    }
}

impl SwadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 || self.n_e == 0 {
            return Err(SwadError::Config("N_s and N_e must be at least 1".into()));
        }
        if !(self.r > 1.0 && self.r.is_finite()) {
            return Err(SwadError::Config(format!("r must exceed 1, got {}", self.r)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Searching,
    Averaging,
    Finished,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Searching => "searching",
            Phase::Averaging => "averaging",
            Phase::Finished => "finished",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SwadEvent {
    Started { t_s: usize, l_bar: f64 },
    Ended { t_e: usize },
}

#[derive(Clone, Debug)]
struct Segment {
    k: usize,
    sum: Vec<f64>,
    count: usize,
}

#[derive(Clone, Debug)]
pub struct SwadState {
    config: SwadConfig,
    period: usize,
    dim: usize,
    phase: Phase,
    losses: Vec<f64>,
    k_s: Option<usize>,
    k_e: Option<usize>,
    l_bar: Option<f64>,
    last_iter: usize,
    last_params: Vec<f64>,
    open: Segment,
    recent: VecDeque<Segment>,
    committed_sum: Vec<f64>,
    committed_count: usize,
    result: Option<Vec<f64>>,
}

impl SwadState {
    /// `dim` is the flat parameter length; `period` is `V`.
    pub fn new(config: SwadConfig, period: usize, dim: usize) -> Result<Self> {
        config.validate()?;
        if period == 0 {
            return Err(SwadError::Config("validation period must be at least 1".into()));
        }
        Ok(SwadState {
            config,
            period,
            dim,
            phase: Phase::Searching,
            losses: Vec::new(),
            k_s: None,
            k_e: None,
            l_bar: None,
            last_iter: 0,
            last_params: vec![0.0; dim],
            open: Segment {
                k: 1,
                sum: vec![0.0; dim],
                count: 0,
            },
            recent: VecDeque::new(),
            committed_sum: vec![0.0; dim],
            committed_count: 0,
            result: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> SwadConfig {
        self.config
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn t_s(&self) -> Option<usize> {
        self.k_s.map(|k| (k - 1) * self.period + 1)
    }

    pub fn t_e(&self) -> Option<usize> {
        self.k_e.map(|k| k * self.period)
    }

    pub fn l_bar(&self) -> Option<f64> {
        self.l_bar
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn last_iter(&self) -> usize {
        self.last_iter
    }

    /// Records the parameters after iteration `iter` (1-based, consecutive)
    /// and, at multiples of `V`, the validation loss.
    pub fn observe(&mut self, iter: usize, params: &[f64], val_loss: Option<f64>) -> Result<Option<SwadEvent>> {
        if self.phase == Phase::Finished {
            return Err(SwadError::Finished(self.last_iter));
        }
        if iter != self.last_iter + 1 {
            return Err(SwadError::OutOfOrder {
                expected: self.last_iter + 1,
                got: iter,
            });
        }
        if params.len() != self.dim {
            return Err(SwadError::Length {
                expected: self.dim,
                got: params.len(),
            });
        }
        let due = iter % self.period == 0;
        match (due, val_loss) {
            (true, None) => {
                return Err(SwadError::Cadence {
                    iter,
                    period: self.period,
                    state: "missing",
                })
            }
            (false, Some(_)) => {
                return Err(SwadError::Cadence {
                    iter,
                    period: self.period,
                    state: "unexpected",
                })
            }
            (_, Some(l)) if !l.is_finite() => return Err(SwadError::NonFinite(iter)),
            _ => {}
        }
        self.last_iter = iter;
        self.last_params.copy_from_slice(params);
        self.open.sum.iter_mut().zip(params).for_each(|(s, p)| *s += p);
        self.open.count += 1;
        let Some(loss) = val_loss else { return Ok(None) };

        let k = self.open.k;
        let closed = std::mem::replace(
            &mut self.open,
            Segment {
                k: k + 1,
                sum: vec![0.0; self.dim],
                count: 0,
            },
        );
        self.recent.push_back(closed);
        self.losses.push(loss);

        match self.phase {
            Phase::Searching => Ok(self.try_start(k)),
            Phase::Averaging => Ok(self.try_end(k)),
            Phase::Finished => unreachable!(),
        }
    }

    fn try_start(&mut self, k: usize) -> Option<SwadEvent> {
        let n_s = self.config.n_s;
        if k < n_s {
            return None;
        }
        let window = &self.losses[k - n_s..k];
        if window[1..].iter().any(|&l| window[0] > l) {
            while self.recent.len() >= n_s {
                self.recent.pop_front();
            }
            return None;
        }
        let k_s = k - n_s + 1;
        let l_bar = window.iter().sum::<f64>() / n_s as f64;
        self.k_s = Some(k_s);
        self.l_bar = Some(l_bar);
        self.phase = Phase::Averaging;
        self.recent.retain(|s| s.k >= k_s);
        self.spill();
        Some(SwadEvent::Started {
            t_s: self.t_s().expect("just set"),
            l_bar,
        })
    }

    /// Commits segments that can no longer be truncated.
    fn spill(&mut self) {
        while self.recent.len() > self.config.n_e {
            let seg = self.recent.pop_front().expect("non-empty");
            self.commit(&seg);
        }
    }

    fn commit(&mut self, seg: &Segment) {
        self.committed_sum.iter_mut().zip(&seg.sum).for_each(|(c, s)| *c += s);
        self.committed_count += seg.count;
    }

    fn try_end(&mut self, k: usize) -> Option<SwadEvent> {
        let n_e = self.config.n_e;
        let threshold = self.config.r * self.l_bar.expect("averaging has l_bar");
        if k < n_e || !self.losses[k - n_e..k].iter().all(|&l| l > threshold) {
            self.spill();
            return None;
        }
        let k_e = (k - n_e).max(self.k_s.expect("averaging has k_s"));
        self.k_e = Some(k_e);
        for seg in std::mem::take(&mut self.recent) {
            if seg.k <= k_e {
                self.commit(&seg);
            }
        }
        self.result = Some(self.committed_average());
        self.phase = Phase::Finished;
        Some(SwadEvent::Ended {
            t_e: self.t_e().expect("just set"),
        })
    }

    fn committed_average(&self) -> Vec<f64> {
        let n = self.committed_count as f64;
        self.committed_sum.iter().map(|s| s / n).collect()
    }

    /// Iteration range the final parameters average over, if any.
    pub fn averaged_range(&self) -> Option<(usize, usize)> {
        match self.phase {
            Phase::Searching => None,
            Phase::Averaging => Some((self.t_s()?, self.last_iter)),
            Phase::Finished => Some((self.t_s()?, self.t_e()?)),
        }
    }

    /// The averaged parameters: over `[t_s, t_e]` once finished, over
    /// `[t_s, last iteration]` while averaging, and the latest parameters if
    /// no regime was ever entered.
    pub fn finalize(&self) -> Vec<f64> {
        match self.phase {
            Phase::Searching => self.last_params.clone(),
            Phase::Finished => self.result.clone().expect("finished has a result"),
            Phase::Averaging => {
                let mut sum = self.committed_sum.clone();
                let mut count = self.committed_count;
                for seg in self.recent.iter().chain(std::iter::once(&self.open)) {
                    sum.iter_mut().zip(&seg.sum).for_each(|(a, s)| *a += s);
                    count += seg.count;
                }
                sum.iter().map(|s| s / count as f64).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn run(losses: &[f64], period: usize, cfg: SwadConfig, params: impl Fn(usize) -> Vec<f64>) -> (SwadState, Vec<SwadEvent>) {
        let dim = params(1).len();
        let mut state = SwadState::new(cfg, period, dim).unwrap();
        let mut events = Vec::new();
        for iter in 1..=losses.len() * period {
            let val = (iter % period == 0).then(|| losses[iter / period - 1]);
            if let Some(e) = state.observe(iter, &params(iter), val).unwrap() {
                events.push(e);
            }
            if state.phase() == Phase::Finished {
                break;
            }
        }
        (state, events)
    }

    #[test]
    fn hand_traced_sequence() {
        let losses = [
            1.0, 0.9, 0.95, 0.96, 1.0, 1.1, 1.2, 1.0, 1.1, 1.3, 1.3, 1.3, 1.3, 1.3, 1.3, 0.5,
        ];
        let (state, events) = run(&losses, 1, SwadConfig::default(), |t| vec![t as f64]);
        assert_eq!(state.t_s(), Some(2));
        assert!((state.l_bar().unwrap() - 0.936_666_666_666_666_7).abs() < 1e-12);
        assert_eq!(state.t_e(), Some(9));
        assert_eq!(state.last_iter(), 15);
        assert_eq!(events.len(), 2);
        assert!(matches!(events[0], SwadEvent::Started { t_s: 2, .. }));
        assert_eq!(events[1], SwadEvent::Ended { t_e: 9 });
        assert_eq!(state.finalize(), vec![5.5]);
        assert_eq!(state.averaged_range(), Some((2, 9)));
    }

    #[test]
    fn observing_after_finish_is_an_error() {
        let losses = [0.5, 0.6, 0.7, 1.0, 1.0];
        let cfg = SwadConfig { n_s: 2, n_e: 2, r: 1.3 };
        let (mut state, _) = run(&losses, 1, cfg, |_| vec![0.0]);
        assert_eq!(state.phase(), Phase::Finished);
        assert!(matches!(state.observe(6, &[0.0], Some(1.0)), Err(SwadError::Finished(_))));
    }

    #[test]
    fn monotone_decreasing_losses_average_to_the_end() {
        let losses: Vec<f64> = (0..20).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let (state, _) = run(&losses, 1, SwadConfig::default(), |t| vec![t as f64]);
        assert_eq!(state.phase(), Phase::Searching);
        assert_eq!(state.finalize(), vec![20.0]);

        // Flat losses start the regime at once and never end it.
        let (state, _) = run(&[1.0; 12], 1, SwadConfig::default(), |t| vec![t as f64]);
        assert_eq!(state.t_s(), Some(1));
        assert_eq!(state.phase(), Phase::Averaging);
        assert_eq!(state.finalize(), vec![6.5]);
    }

    #[test]
    fn constant_parameters_and_single_point_regime() {
        let losses = [0.5, 0.6, 0.7, 1.0, 1.0];
        let cfg = SwadConfig { n_s: 2, n_e: 2, r: 1.3 };
        let (state, _) = run(&losses, 1, cfg, |_| vec![3.25, -1.0]);
        assert_eq!(state.finalize(), vec![3.25, -1.0]);
        // start at k=1 (l̄ = 0.55), end at k=5 with k_e = 3
        assert_eq!((state.t_s(), state.t_e()), (Some(1), Some(3)));

        let losses = [0.5, 0.5, 1.0, 1.0];
        let cfg = SwadConfig { n_s: 2, n_e: 2, r: 1.3 };
        let (state, _) = run(&losses, 1, cfg, |t| vec![t as f64]);
        assert_eq!((state.t_s(), state.t_e()), (Some(1), Some(2)));
        let losses = [0.5, 0.5, 2.0, 2.0];
        let cfg = SwadConfig { n_s: 2, n_e: 3, r: 1.3 };
        let (state, _) = run(&losses, 1, cfg, |t| vec![t as f64]);
        assert_eq!(state.phase(), Phase::Averaging);
        let cfg = SwadConfig { n_s: 1, n_e: 2, r: 1.3 };
        let (state, _) = run(&[0.5, 2.0, 2.0], 1, cfg, |t| vec![t as f64]);
        assert_eq!((state.t_s(), state.t_e()), (Some(1), Some(1)));
        assert_eq!(state.finalize(), vec![1.0]);
    }

    #[test]
    fn start_depends_only_on_loss_ordering() {
        let base = [3.0, 2.0, 2.5, 2.7, 1.0, 1.5, 1.6, 4.0];
        let cfg = SwadConfig { n_s: 3, n_e: 6, r: 1.3 };
        let (a, _) = run(&base, 1, cfg, |_| vec![0.0]);
        // Strictly increasing transform: cube plus shift.
        let shifted: Vec<f64> = base.iter().map(|l| l * l * l + 10.0).collect();
        let (b, _) = run(&shifted, 1, cfg, |_| vec![0.0]);
        assert_eq!(a.t_s(), Some(2));
        assert_eq!(a.t_s(), b.t_s());
    }

    #[test]
    fn end_depends_on_ratio() {
        // l̄ = 1.0; later losses 1.25 exceed r·l̄ only for r < 1.25.
        let losses = [1.0, 1.0, 1.0, 1.25, 1.25, 1.25];
        let cfg = |r| SwadConfig { n_s: 3, n_e: 3, r };
        let (low, _) = run(&losses, 1, cfg(1.2), |_| vec![0.0]);
        let (high, _) = run(&losses, 1, cfg(1.3), |_| vec![0.0]);
        assert_eq!(low.t_e(), Some(3));
        assert_eq!(high.phase(), Phase::Averaging);
        // An affine shift of the losses moves l̄ and the threshold differently.
        let shifted: Vec<f64> = losses.iter().map(|l| l + 1.0).collect();
        let (shift, _) = run(&shifted, 1, cfg(1.2), |_| vec![0.0]);
        assert_eq!(shift.phase(), Phase::Averaging);
    }

    #[test]
    fn streaming_average_matches_offline_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..50 {
            let period = 1 + trial % 4;
            let n_val = 30;
            let mut l = 1.0;
            let losses: Vec<f64> = (0..n_val)
                .map(|_| {
                    l *= rng.gen_range(0.85..1.25);
                    l
                })
                .collect();
            let snapshots: Vec<Vec<f64>> = (0..=n_val * period)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let cfg = SwadConfig {
                n_s: 1 + trial % 3,
                n_e: 1 + trial % 5,
                r: 1.05 + 0.05 * (trial % 3) as f64,
            };
            let (state, _) = run(&losses, period, cfg, |t| snapshots[t].clone());
            let got = state.finalize();
            let expected = match state.averaged_range() {
                None => snapshots[state.last_iter()].clone(),
                Some((s, e)) => {
                    let n = (e - s + 1) as f64;
                    (0..3)
                        .map(|j| (s..=e).map(|t| snapshots[t][j]).sum::<f64>() / n)
                        .collect()
                }
            };
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-12, "trial {trial}: {got:?} vs {expected:?}");
            }
        }
    }

    #[test]
    fn validation_period_maps_to_iterations() {
        // Same losses as the hand trace, at V = 4.
        let losses = [1.0, 0.9, 0.95, 0.96, 1.0, 1.1, 1.2, 1.0, 1.1, 1.3, 1.3, 1.3, 1.3, 1.3, 1.3];
        let (state, _) = run(&losses, 4, SwadConfig::default(), |t| vec![t as f64]);
        assert_eq!(state.t_s(), Some(5));
        assert_eq!(state.t_e(), Some(36));
        assert_eq!(state.finalize(), vec![20.5]);
    }

    #[test]
    fn cadence_and_order_errors() {
        let mut s = SwadState::new(SwadConfig::default(), 2, 1).unwrap();
        assert!(matches!(s.observe(2, &[0.0], None), Err(SwadError::OutOfOrder { .. })));
        assert!(matches!(s.observe(1, &[0.0], Some(1.0)), Err(SwadError::Cadence { .. })));
        s.observe(1, &[0.0], None).unwrap();
        assert!(matches!(s.observe(2, &[0.0], None), Err(SwadError::Cadence { .. })));
        assert!(matches!(s.observe(2, &[0.0, 1.0], Some(1.0)), Err(SwadError::Length { .. })));
        assert!(matches!(s.observe(2, &[0.0], Some(f64::NAN)), Err(SwadError::NonFinite(2))));
        assert!(SwadState::new(SwadConfig { n_s: 3, n_e: 6, r: 1.0 }, 1, 1).is_err());
    }
}
