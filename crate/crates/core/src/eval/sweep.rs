use std::collections::BTreeMap;
use std::time::Instant;

use super::{calculated_sigma, calculated_u, calculated_v, normalized_loss, EvalError, EvalRecord, Method, SVD_FASTER_TOL};
use crate::convmf::ConvMfModel;
use crate::linalg::{svd_dense, svd_truncated, Matrix};
use crate::vlasov::TimeSeries;

fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos() as u64
}

fn model_for(models: &BTreeMap<usize, ConvMfModel>, rank: usize) -> Result<&ConvMfModel, EvalError> {
    models.get(&rank).ok_or_else(|| EvalError::MissingCheckpoint {
        rank,
        available: models.keys().copied().collect(),
    })
}

/// Every requested (rank, method) on one frame. The dense SVD is computed
/// once and truncated per rank; its wall time is reported for every rank.
/// Calculated-U/V/Σ repair the network output of the same rank.
pub fn evaluate_frame(
    x: &Matrix,
    frame_index: usize,
    ranks: &[usize],
    methods: &[Method],
    models: &BTreeMap<usize, ConvMfModel>,
) -> Result<Vec<EvalRecord>, EvalError> {
    let mut out = Vec::new();
    let dense = if methods.contains(&Method::SvdBasic) {
        let start = Instant::now();
        let svd = svd_dense(x)?;
        Some((svd, elapsed_ns(start)))
    } else {
        None
    };
    for &r in ranks {
        if let Some((svd, ns)) = &dense {
            let (u, v) = svd.factors(r.min(svd.rank()));
            out.push(EvalRecord::new(frame_index, r, Method::SvdBasic, normalized_loss(x, &u, &v)?, *ns));
        }
        if methods.contains(&Method::SvdFaster) {
            let start = Instant::now();
            let svd = svd_truncated(x, r, SVD_FASTER_TOL)?;
            let (u, v) = svd.factors(r);
            let ns = elapsed_ns(start);
            out.push(EvalRecord::new(frame_index, r, Method::SvdFaster, normalized_loss(x, &u, &v)?, ns));
        }
        if !methods.iter().any(|m| m.needs_model()) {
            continue;
        }
        let model = model_for(models, r)?;
        let start = Instant::now();
        let pair = model.forward(x)?;
        let ns = elapsed_ns(start);
        if methods.contains(&Method::Convmf) {
            out.push(EvalRecord::new(frame_index, r, Method::Convmf, normalized_loss(x, &pair.u, &pair.v)?, ns));
        }
        type Repair<'a> = Box<dyn Fn() -> Result<super::Calculated, EvalError> + 'a>;
        let repairs: [(Method, Repair); 3] = [
            (Method::CalcU, Box::new(|| calculated_u(x, &pair.v))),
            (Method::CalcV, Box::new(|| calculated_v(x, &pair.u))),
            (Method::CalcSigma, Box::new(|| calculated_sigma(x, &pair.u, &pair.v))),
        ];
        for (method, solve) in repairs {
            if methods.contains(&method) {
                let start = Instant::now();
                let c = solve()?;
                let mut rec = EvalRecord::new(frame_index, r, method, c.loss, elapsed_ns(start));
                rec.rank_deficient = c.rank_deficient;
                out.push(rec);
            }
        }
    }
    Ok(out)
}

/// Evaluates `frames` of `series` at every rank and method, sorted by
/// `(frame_index, rank, method)`.
pub fn rank_sweep(
    series: &TimeSeries,
    frames: &[usize],
    ranks: &[usize],
    methods: &[Method],
    models: &BTreeMap<usize, ConvMfModel>,
) -> Result<Vec<EvalRecord>, EvalError> {
    if methods.iter().any(|m| m.needs_model()) {
        for &r in ranks {
            model_for(models, r)?;
        }
    }
    let mut out = Vec::new();
    for &f in frames {
        let x = series
            .frames
            .get(f)
            .ok_or_else(|| EvalError::EmptySelection(format!("frame {f} out of range")))?;
        out.extend(evaluate_frame(x, f, ranks, methods, models)?);
    }
    out.sort_by_key(|r| r.sort_key());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankAverage {
    pub rank: usize,
    pub method: Method,
    pub mean_loss: f64,
    pub count: usize,
}

/// Mean scaled loss per (rank, method), ordered by rank then method.
pub fn rank_averages(records: &[EvalRecord]) -> Vec<RankAverage> {
    let mut acc: BTreeMap<(usize, Method), (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry((r.rank, r.method)).or_insert((0.0, 0));
        e.0 += r.scaled_loss;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((rank, method), (sum, count))| RankAverage {
            rank,
            method,
            mean_loss: sum / count as f64,
            count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Equal-width histogram over `[min, max]` of the losses at `rank`, for one
/// method or all. The maximum falls in the last bin.
pub fn loss_histogram(
    records: &[EvalRecord],
    rank: usize,
    method: Option<Method>,
    bins: usize,
) -> Result<Histogram, EvalError> {
    if bins == 0 {
        return Err(EvalError::EmptySelection("bins must be at least 1".into()));
    }
    let losses: Vec<f64> = records
        .iter()
        .filter(|r| r.rank == rank && method.is_none_or(|m| r.method == m))
        .map(|r| r.scaled_loss)
        .collect();
    if losses.is_empty() {
        return Err(EvalError::EmptySelection(format!("no records at rank {rank}")));
    }
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0; bins];
    for l in losses {
        let b = if width > 0.0 {
            (((l - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}
