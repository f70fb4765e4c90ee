mod common;

use common::{mean, std_error};
use mrad::{
    build_nowa, build_swa, fgn_acf, synthesize_fgn, LrdModel, ScaleConfig, StreamState, TimeSeries,
};
use proptest::prelude::*;

#[test]
fn nowa_level_eight_has_unit_variance() {
    let model = LrdModel::standard(0.9).unwrap();
    let config = ScaleConfig::new(2, 8, 0.9).unwrap();
    let per_seed: Vec<f64> = (0..200)
        .map(|seed| {
            let series = synthesize_fgn(&model, 1 << 14, seed).unwrap();
            let pyramid = build_nowa(&series, config).unwrap();
            let level = &pyramid.level(8).values;
            level.iter().map(|y| y * y).sum::<f64>() / level.len() as f64
        })
        .collect();
    let (m, se) = (mean(&per_seed), std_error(&per_seed));
    assert!((m - 1.0).abs() < 3.0 * se, "mean square {m} ± {se}");
}

#[test]
fn every_swa_level_has_unit_variance() {
    let model = LrdModel::standard(0.75).unwrap();
    let config = ScaleConfig::new(2, 10, 0.75).unwrap();
    let pyramids: Vec<_> = (0..200)
        .map(|seed| build_swa(&synthesize_fgn(&model, 4096, seed).unwrap(), config).unwrap())
        .collect();
    for k in 1..=10 {
        // One fixed interior time per path keeps replicates independent.
        let draws: Vec<f64> = pyramids
            .iter()
            .map(|p| p.value_at(k, 4000).unwrap().powi(2))
            .collect();
        let (m, se) = (mean(&draws), std_error(&draws));
        assert!((m - 1.0).abs() < 3.0 * se, "scale {k}: {m} ± {se}");
    }
}

#[test]
fn nowa_levels_are_self_similar() {
    let h = 0.8;
    let model = LrdModel::standard(h).unwrap();
    let config = ScaleConfig::new(2, 4, h).unwrap();
    let lags = 0..=5usize;
    let mut per_seed: Vec<Vec<f64>> = vec![Vec::new(); 6];
    for seed in 0..200 {
        let pyramid = build_nowa(&synthesize_fgn(&model, 1 << 13, seed).unwrap(), config).unwrap();
        let y = &pyramid.level(4).values;
        for lag in lags.clone() {
            let n = y.len() - lag;
            per_seed[lag].push((0..n).map(|i| y[i] * y[i + lag]).sum::<f64>() / n as f64);
        }
    }
    for lag in lags {
        let target = fgn_acf(&model, lag as u64);
        let (m, se) = (mean(&per_seed[lag]), std_error(&per_seed[lag]));
        assert!(
            (m - target).abs() < 3.0 * se,
            "lag {lag}: {m} vs {target} ± {se}"
        );
    }
}

#[test]
fn level_shift_moves_covering_windows_by_delta_l_to_one_minus_h() {
    let h = 0.9;
    let delta = 0.75;
    let config = ScaleConfig::new(2, 6, h).unwrap();
    let base = synthesize_fgn(&LrdModel::standard(h).unwrap(), 200, 5).unwrap();
    let mut shifted = base.clone();
    for v in &mut shifted.values[49..150] {
        *v += delta;
    }
    let a = build_swa(&base, config).unwrap();
    let b = build_swa(&shifted, config).unwrap();
    for k in 1..=6 {
        let window = config.window(k);
        let expected = delta * (window as f64).powf(1.0 - h);
        for t in (50 + window - 1)..=150 {
            let diff = b.value_at(k, t).unwrap() - a.value_at(k, t).unwrap();
            assert!((diff - expected).abs() < 1e-12, "scale {k} t {t}");
        }
    }
}

#[test]
fn stream_tracks_batch_swa_on_fgn() {
    let config = ScaleConfig::new(2, 12, 0.9).unwrap();
    let series = synthesize_fgn(&LrdModel::standard(0.9).unwrap(), 20_000, 3).unwrap();
    let batch = build_swa(&series, config).unwrap();
    let mut state = StreamState::new(config);
    let mut worst: f64 = 0.0;
    for (i, &x) in series.values.iter().enumerate() {
        let column = state.push(x);
        let expected = batch.column_at(i + 1);
        assert_eq!(column.len(), expected.len());
        for ((k1, v1), (k2, v2)) in column.iter().zip(&expected) {
            assert_eq!(k1, k2);
            worst = worst.max((v1 - v2).abs());
        }
    }
    assert!(worst <= 1e-9, "max discrepancy {worst}");
}

proptest! {
    #[test]
    fn nowa_and_swa_agree_at_block_ends(
        values in prop::collection::vec(-5.0f64..5.0, 16..200),
        base in 2usize..4,
        h in 0.1f64..0.99,
    ) {
        let series = TimeSeries::new(values);
        let m = if base == 2 { 4 } else { 3 };
        let config = ScaleConfig::new(base, m, h).unwrap();
        prop_assume!(series.len() >= config.largest_window());
        let nowa = build_nowa(&series, config).unwrap();
        let swa = build_swa(&series, config).unwrap();
        for k in 1..=m {
            let w = config.window(k);
            for t in (w..=series.len()).step_by(w) {
                prop_assert!((nowa.value_at(k, t).unwrap() - swa.value_at(k, t).unwrap()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn stream_window_sums_equal_trailing_sums(
        values in prop::collection::vec(-3.0f64..3.0, 1..120),
    ) {
        let config = ScaleConfig::new(2, 5, 0.7).unwrap();
        let mut state = StreamState::new(config);
        for (i, &x) in values.iter().enumerate() {
            state.push(x);
            for k in 1..=5 {
                let w = config.window(k);
                if i + 1 >= w {
                    let direct: f64 = values[i + 1 - w..=i].iter().sum();
                    prop_assert!((state.window_sum(k) - direct).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn column_never_reads_out_of_range(len in 1usize..40, m in 1usize..5) {
        let config = ScaleConfig::new(2, m, 0.5).unwrap();
        prop_assume!(len >= config.largest_window());
        let series = TimeSeries::new((0..len).map(|i| i as f64).collect());
        for pyramid in [build_nowa(&series, config).unwrap(), build_swa(&series, config).unwrap()] {
            for t in 1..=len {
                prop_assert!(!pyramid.column_at(t).is_empty());
            }
        }
    }
}
