//! Wall-clock medians with warmup and automatic inner-loop batching.

use std::collections::BTreeMap;
use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{normalized_loss, EvalError, EvalRecord, Method, SVD_FASTER_TOL};
use crate::convmf::ConvMfModel;
use crate::linalg::{svd_dense, svd_truncated, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub warmup_runs: usize,
    /// At least 5.
    pub measured_runs: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            warmup_runs: 3,
            measured_runs: 11,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.measured_runs < 5 {
            return Err(EvalError::InvalidTiming(format!(
                "measured_runs must be at least 5, got {}",
                self.measured_runs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    /// Median time of one call.
    pub median_ns: f64,
    /// Calls per measured interval; above 1 when a single call is shorter
    /// than 100 timer ticks.
    pub inner_iterations: u64,
}

/// Smallest nonzero step observed between consecutive clock reads.
fn clock_granularity() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

/// Median over `cfg.measured_runs` intervals after `cfg.warmup_runs`
/// untimed calls.
pub fn time_median<F: FnMut()>(cfg: &TimingConfig, mut f: F) -> Result<Timing, EvalError> {
    Ok(time_medians(cfg, &mut [&mut f])?[0])
}

/// [`time_median`] for several closures at once. Measured intervals are taken
/// round-robin, so slow phases of the host hit every closure alike.
pub fn time_medians(cfg: &TimingConfig, jobs: &mut [&mut dyn FnMut()]) -> Result<Vec<Timing>, EvalError> {
    cfg.validate()?;
    let floor = clock_granularity() * 100;
    let mut inner = Vec::with_capacity(jobs.len());
    for f in jobs.iter_mut() {
        for _ in 0..cfg.warmup_runs {
            f();
        }
        let mut n: u64 = 1;
        loop {
            let start = Instant::now();
            for _ in 0..n {
                f();
            }
            if start.elapsed() >= floor || n >= 1 << 30 {
                break;
            }
            n *= 2;
        }
        inner.push(n);
    }
    let mut samples = vec![Vec::with_capacity(cfg.measured_runs); jobs.len()];
    for _ in 0..cfg.measured_runs {
        for ((f, &n), out) in jobs.iter_mut().zip(&inner).zip(&mut samples) {
            let start = Instant::now();
            for _ in 0..n {
                f();
            }
            out.push(start.elapsed().as_nanos() as f64 / n as f64);
        }
    }
    Ok(samples
        .into_iter()
        .zip(inner)
        .map(|(mut v, n)| {
            v.sort_by(f64::total_cmp);
            let mid = v.len() / 2;
            let median = if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) };
            Timing {
                median_ns: median,
                inner_iterations: n,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub shape: (usize, usize),
    pub rank: usize,
    pub method: Method,
    pub timing: Timing,
    /// Normalized loss of the timed factorization.
    pub scaled_loss: f64,
}

impl TimingRecord {
    pub fn to_eval_record(&self, frame_index: usize) -> EvalRecord {
        EvalRecord::new(
            frame_index,
            self.rank,
            self.method,
            self.scaled_loss,
            self.timing.median_ns.round() as u64,
        )
    }
}

/// Times each (rank, method) on `x`. Basic SVD always runs the full
/// decomposition and truncates; network timing is pure inference. Call this
/// from a single thread with nothing else running.
pub fn timing_benchmark(
    x: &Matrix,
    ranks: &[usize],
    methods: &[Method],
    models: &BTreeMap<usize, ConvMfModel>,
    cfg: &TimingConfig,
) -> Result<Vec<TimingRecord>, EvalError> {
    cfg.validate()?;
    let mut cells = Vec::new();
    let mut jobs: Vec<Box<dyn FnMut() + '_>> = Vec::new();
    for &rank in ranks {
        for &method in methods {
            let loss = match method {
                Method::SvdBasic => {
                    let (u, v) = svd_dense(x)?.factors(rank);
                    jobs.push(Box::new(move || {
                        let svd = svd_dense(black_box(x)).expect("checked above");
                        black_box(svd.factors(rank));
                    }));
                    normalized_loss(x, &u, &v)?
                }
                Method::SvdFaster => {
                    let (u, v) = svd_truncated(x, rank, SVD_FASTER_TOL)?.factors(rank);
                    jobs.push(Box::new(move || {
                        let svd = svd_truncated(black_box(x), rank, SVD_FASTER_TOL).expect("checked above");
                        black_box(svd.factors(rank));
                    }));
                    normalized_loss(x, &u, &v)?
                }
                Method::Convmf => {
                    let model = models.get(&rank).ok_or_else(|| EvalError::MissingCheckpoint {
                        rank,
                        available: models.keys().copied().collect(),
                    })?;
                    let pair = model.forward(x)?;
                    jobs.push(Box::new(move || {
                        black_box(model.forward(black_box(x)).expect("checked above"));
                    }));
                    normalized_loss(x, &pair.u, &pair.v)?
                }
                other => {
                    return Err(EvalError::InvalidTiming(format!("{other} is not a timed method")));
                }
            };
            cells.push((rank, method, loss));
        }
    }
    let mut refs: Vec<&mut dyn FnMut()> = jobs.iter_mut().map(|j| &mut **j as &mut dyn FnMut()).collect();
    let timings = time_medians(cfg, &mut refs)?;
    Ok(cells
        .into_iter()
        .zip(timings)
        .map(|((rank, method, scaled_loss), timing)| TimingRecord {
            shape: x.shape(),
            rank,
            method,
            timing,
            scaled_loss,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_closure_gets_batched() {
        let mut calls = 0u64;
        let t = time_median(&TimingConfig::default(), || calls += 1).unwrap();
        assert!(t.inner_iterations > 1);
        assert_eq!(calls, 3 + t.inner_iterations * 11 + (2 * t.inner_iterations - 1));
    }

    #[test]
    fn slow_closure_runs_once_per_sample() {
        let t = time_median(&TimingConfig::default(), || std::thread::sleep(Duration::from_millis(1))).unwrap();
        assert_eq!(t.inner_iterations, 1);
        assert!(t.median_ns >= 1e6);
    }

    #[test]
    fn interleaved_jobs_get_equal_sample_counts() {
        let (mut a, mut b) = (0u64, 0u64);
        let mut fa = || {
            a += 1;
            std::thread::sleep(Duration::from_micros(200));
        };
        let mut fb = || {
            b += 1;
            std::thread::sleep(Duration::from_micros(400));
        };
        let t = time_medians(&TimingConfig::default(), &mut [&mut fa, &mut fb]).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[1].median_ns > t[0].median_ns);
        assert_eq!(a, 3 + t[0].inner_iterations * 12 + (t[0].inner_iterations - 1));
        assert_eq!(b, 3 + t[1].inner_iterations * 12 + (t[1].inner_iterations - 1));
    }

    #[test]
    fn rejects_too_few_runs() {
        let cfg = TimingConfig {
            warmup_runs: 0,
            measured_runs: 4,
        };
        assert!(time_median(&cfg, || {}).is_err());
    }

    #[test]
    fn benchmark_records_every_pair() {
        let x = Matrix::from_fn(12, 20, |i, j| ((i * j) as f64).sin() + 0.1 * i as f64);
        let cfg = TimingConfig {
            warmup_runs: 1,
            measured_runs: 5,
        };
        let recs = timing_benchmark(&x, &[2, 4], &[Method::SvdBasic, Method::SvdFaster], &BTreeMap::new(), &cfg).unwrap();
        assert_eq!(recs.len(), 4);
        assert!((recs[0].scaled_loss - recs[1].scaled_loss).abs() < 1e-8);
        assert!(timing_benchmark(&x, &[2], &[Method::Convmf], &BTreeMap::new(), &cfg).is_err());
    }
}
