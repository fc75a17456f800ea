use std::collections::BTreeMap;

use super::{make_split, rank_sweep, EvalError, EvalRecord, Method, Split, SplitMode, SplitSpec};
use crate::convmf::{build_convmf, train, ConvMfModel, Hyperparameters, TrainReport};
use crate::vlasov::TimeSeries;

/// One trained network and its per-frame losses over the whole series.
#[derive(Debug, Clone)]
pub struct SplitExperiment {
    pub model: ConvMfModel,
    pub report: TrainReport,
    pub split: Split,
    /// `convmf` and `svd_basic` records for every frame, in time order.
    pub records: Vec<EvalRecord>,
    /// First held-out frame of a sequential split (`⌈0.7·T⌉` by default).
    pub boundary_index: Option<usize>,
}

impl SplitExperiment {
    /// Mean loss of `method` over the test partition.
    pub fn test_average(&self, method: Method) -> f64 {
        let test: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.method == method && self.split.test.binary_search(&r.frame_index).is_ok())
            .map(|r| r.scaled_loss)
            .collect();
        test.iter().sum::<f64>() / test.len() as f64
    }
}

/// Builds a fresh network from `hyper`, trains it under `split` and scores
/// every frame.
pub fn split_experiment(series: &TimeSeries, hyper: &Hyperparameters, split: &SplitSpec) -> Result<SplitExperiment, EvalError> {
    let parts = make_split(series.len(), split)?;
    let (m, n) = series.shape();
    let mut model = build_convmf(m, n, hyper)?;
    let report = train(&mut model, series, split)?;
    let frames: Vec<usize> = (0..series.len()).collect();
    let models = BTreeMap::from([(hyper.rank, model)]);
    let records = rank_sweep(series, &frames, &[hyper.rank], &[Method::Convmf, Method::SvdBasic], &models)?;
    let model = models.into_values().next().unwrap();
    Ok(SplitExperiment {
        model,
        report,
        boundary_index: (split.mode == SplitMode::Sequential).then(|| split.train_count(series.len())),
        split: parts,
        records,
    })
}

/// Trains on the leading 70 % of frames (plus random-IC frames when
/// `with_random_augment`) and scores the held-out tail.
pub fn extrapolation_experiment(
    series: &TimeSeries,
    hyper: &Hyperparameters,
    with_random_augment: bool,
) -> Result<SplitExperiment, EvalError> {
    let spec = SplitSpec {
        mode: SplitMode::Sequential,
        augment_random_ic: with_random_augment,
        seed: hyper.seed,
        ..SplitSpec::default()
    };
    split_experiment(series, hyper, &spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convmf::ConvSpec;
    use crate::vlasov::{init_landau_strong, run, PhaseSpaceGrid};

    #[test]
    fn boundary_and_floor() {
        let grid = PhaseSpaceGrid::standard(8, 16);
        let ic = init_landau_strong(&grid, 0.5, 0.5).unwrap();
        let ts = run(&ic, &grid, 0.1, 19, 1, "landau-strong").unwrap();
        let hyper = Hyperparameters {
            conv_layers: vec![ConvSpec {
                kernel: 3,
                stride: 1,
                padding: 1,
                dilation: 1,
                out_channels: 1,
            }],
            stem_dims: vec![16],
            fork_dims: vec![12],
            rank: 2,
            epochs: 2,
            batch_size: 4,
            ..Hyperparameters::default()
        };
        let exp = extrapolation_experiment(&ts, &hyper, false).unwrap();
        assert_eq!(exp.boundary_index, Some(14));
        assert_eq!(exp.split.test, vec![17, 18, 19]);
        assert_eq!(exp.records.len(), 2 * 20);
        for pair in exp.records.chunks(2) {
            assert!(pair[1].scaled_loss <= pair[0].scaled_loss + 1e-12);
        }
        assert!(exp.test_average(Method::Convmf) >= exp.test_average(Method::SvdBasic));
    }
}
