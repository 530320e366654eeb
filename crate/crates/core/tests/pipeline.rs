use jpa_core::detection::{measure, DetectionConfig, RecordSource};
use jpa_core::gaussian::GaussianState;
use jpa_core::tomography::{
    acquire, estimate, run_experiment, BinningSettings, HistogramSet, MomentSet, StreamingMoments,
};

fn record_moments(records: &[jpa_core::detection::MeasurementRecord]) -> MomentSet {
    let mut m = StreamingMoments::new();
    records.iter().for_each(|r| m.push(r));
    m.moment_set()
}

#[test]
fn vacuum_channels_are_independent() {
    let vac = GaussianState::vacuum(2).unwrap();
    let n = 400_000;
    let recs = measure(&vac, &DetectionConfig::reference(), n, 21, true).unwrap();
    let m = record_moments(&recs);
    for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
        let se = (m.cov[i][i] * m.cov[j][j] / n as f64).sqrt();
        assert!(m.cov[i][j].abs() < 5.0 * se, "({i},{j}) {}", m.cov[i][j]);
    }
}

#[test]
fn pump_off_is_circular_per_channel() {
    let s = GaussianState::two_mode_squeezed(1.78, 0.0).unwrap();
    let n = 400_000;
    let recs = measure(&s, &DetectionConfig::reference(), n, 22, false).unwrap();
    let m = record_moments(&recs);
    for k in 0..2 {
        let (vx, vp) = (m.cov[2 * k][2 * k], m.cov[2 * k + 1][2 * k + 1]);
        let se = vx * (4.0 / n as f64).sqrt();
        assert!(
            (vx - vp).abs() < 5.0 * se,
            "channel {}: {vx} vs {vp}",
            k + 1
        );
    }
}

#[test]
fn histogram_moments_match_streaming_moments() {
    let s = GaussianState::two_mode_squeezed(1.78, 0.0).unwrap();
    let src = RecordSource::new(&s, &DetectionConfig::reference(), true).unwrap();
    let acq = acquire(&src, 500_000, 5, &BinningSettings::default()).unwrap();
    let hist = MomentSet::from_histograms(&acq.histograms).unwrap();
    let direct = acq.streaming.moment_set();
    for i in 0..4 {
        for j in 0..4 {
            let scale = (direct.cov[i][i] * direct.cov[j][j]).sqrt();
            let rel = (hist.cov[i][j] - direct.cov[i][j]).abs() / scale;
            assert!(
                rel < 5e-3,
                "({i},{j}) {} vs {}",
                hist.cov[i][j],
                direct.cov[i][j]
            );
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let s = GaussianState::two_mode_squeezed(1.2, 0.1).unwrap();
    let det = DetectionConfig::reference();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_experiment(&s, &det, 700_000, 77, &BinningSettings::default()).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.on.histograms, b.on.histograms);
    assert_eq!(a.off.histograms, b.off.histograms);
    assert_eq!(a.on.streaming, b.on.streaming);
    assert_eq!(a.estimate.state, b.estimate.state);
}

#[test]
fn shorter_runs_are_prefixes() {
    let s = GaussianState::two_mode_squeezed(0.7, 0.0).unwrap();
    let det = DetectionConfig::reference();
    let long = measure(&s, &det, 200_000, 9, true).unwrap();
    let short = measure(&s, &det, 70_000, 9, true).unwrap();
    assert_eq!(&long[..70_000], &short[..]);
}

#[test]
fn sharded_histograms_merge_to_the_whole() {
    let s = GaussianState::two_mode_squeezed(1.0, 0.0).unwrap();
    let recs = measure(&s, &DetectionConfig::reference(), 80_000, 31, true).unwrap();
    let binning = jpa_core::tomography::Binning::from_records(&recs[..10_000], 128, 6.0).unwrap();
    let whole = HistogramSet::accumulate(&recs, binning);
    let mut merged = HistogramSet::new(binning);
    for shard in recs.chunks(10_000) {
        merged
            .merge(&HistogramSet::accumulate(shard, binning))
            .unwrap();
    }
    assert_eq!(merged, whole);
}

#[test]
fn estimate_recovers_thermal_state_with_unequal_noise() {
    let truth = GaussianState::two_mode_squeezed(1.3, 0.2).unwrap();
    let det = DetectionConfig {
        n_noise: 20.0,
        n_noise_ch2: Some(25.0),
        ..DetectionConfig::reference()
    };
    let exp = run_experiment(&truth, &det, 2_000_000, 8, &BinningSettings::default()).unwrap();
    let e = &exp.estimate;
    assert!(e.state.is_physical() || e.state.uncertainty_min_eigenvalue() > -1e-6);
    assert!((e.fit.r - 1.3).abs() < 0.02, "{}", e.fit.r);
    assert!((e.fit.n_add - 0.2).abs() < 0.05, "{}", e.fit.n_add);
    assert!((e.scale_factors[0] - 1.0).abs() < 0.005);
    assert!((e.scale_factors[1] * 1.02 - 1.0).abs() < 0.005);
}

#[test]
fn estimate_rejects_dead_reference_channel() {
    let s = GaussianState::two_mode_squeezed(1.0, 0.0).unwrap();
    let recs: Vec<_> = measure(&s, &DetectionConfig::reference(), 20_000, 2, true).unwrap();
    let on = HistogramSet::accumulate(
        &recs,
        jpa_core::tomography::Binning::from_records(&recs, 64, 6.0).unwrap(),
    );
    let dead: Vec<_> = recs
        .iter()
        .map(|r| {
            jpa_core::detection::MeasurementRecord::from_quadratures([r.s1.re, r.s1.im, 0.0, 0.0])
        })
        .collect();
    let off = HistogramSet::accumulate(&dead, *on.binning());
    assert!(estimate(&on, &off, [69.0, 69.0]).is_err());
}
