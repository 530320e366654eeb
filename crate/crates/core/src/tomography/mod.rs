//! State estimation from heterodyne records: histograms for pump on and off,
//! scale calibration, noise deconvolution, squeezing fit and Wigner export.

mod fit;
mod histogram;
mod moments;

use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use fit::{fit_squeezing, SqueezingFit};
pub use histogram::{
    AxisBinning, Binning, Histogram2D, HistogramJson, HistogramSet, Quadrature, PAIRS,
};
pub use moments::{moments_from_histogram, MomentSet, PairMoments, StreamingMoments};

use crate::detection::{MeasurementRecord, RecordSource};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, WignerEvaluator, VACUUM_VARIANCE};
use crate::streams::derive_seed;

/// Per-channel scale factors `(g1, g2)` applied to measured quadratures.
pub type ScaleFactors = [f64; 2];

/// Pump-off per-quadrature variance `(2N + 2)/4`: vacuum in `b` plus
/// `N` thermal photons in `h`.
pub fn pump_off_variance(n_noise: f64) -> f64 {
    (2.0 * n_noise + 2.0) / 4.0
}

/// Scale factors that bring the pump-off variances of each channel to
/// [`pump_off_variance`].
pub fn calibrate(moments_off: &MomentSet, n_noise: f64) -> Result<ScaleFactors> {
    calibrate_channels(moments_off, [n_noise, n_noise])
}

pub fn calibrate_channels(moments_off: &MomentSet, n_noise: [f64; 2]) -> Result<ScaleFactors> {
    let mut g = [0.0; 2];
    for (k, gk) in g.iter_mut().enumerate() {
        let measured =
            0.5 * (moments_off.cov[2 * k][2 * k] + moments_off.cov[2 * k + 1][2 * k + 1]);
        if !(measured > 0.0) || !measured.is_finite() {
            return Err(Error::DegenerateReference(format!(
                "channel {} has pump-off variance {measured}",
                k + 1
            )));
        }
        *gk = (pump_off_variance(n_noise[k]) / measured).sqrt();
    }
    Ok(g)
}

/// Covariance of the signal modes `(b1, b2)` from calibrated pump-on and
/// pump-off moments. The detection noise `h` is uncorrelated with `b`, so
/// subtracting the reference removes it; the vacuum variance of `b` present
/// in the reference is added back on the diagonal.
pub fn deconvolve(moments_on: &MomentSet, moments_off: &MomentSet) -> Result<GaussianState> {
    let mut v = DMatrix::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            v[(i, j)] = moments_on.cov[i][j] - moments_off.cov[i][j];
        }
        v[(i, i)] += VACUUM_VARIANCE;
    }
    let v = (&v + v.transpose()) * 0.5;
    let mean = nalgebra::DVector::from_fn(4, |i, _| moments_on.mean[i] - moments_off.mean[i]);
    GaussianState::new(mean, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordCounts {
    pub pump_on: u64,
    pub pump_off: u64,
}

/// Serialized summary of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    /// Row-major 4×4 covariance in `(x1, p1, x2, p2)` order.
    pub v: Vec<f64>,
    pub r_fit: f64,
    pub r_fit_pure: f64,
    pub n_add_fit: f64,
    pub residual: f64,
    pub residual_pure: f64,
    pub witness_d: f64,
    pub scale_factors: ScaleFactors,
    pub n_records: RecordCounts,
}

/// Square evaluation grid `[-half_range, half_range]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerGrid {
    pub half_range: f64,
    pub points: usize,
}

impl WignerGrid {
    pub fn coordinates(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|k| -self.half_range + 2.0 * self.half_range * k as f64 / (n - 1) as f64)
            .collect()
    }
}

/// A 2D marginal Wigner density sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerMap {
    pub name: String,
    pub axes: (Quadrature, Quadrature),
    pub coords: Vec<f64>,
    /// `density[ix * n + iy]`.
    pub density: Vec<f64>,
}

impl WignerMap {
    pub fn evaluate(
        name: &str,
        state: &GaussianState,
        axes: (Quadrature, Quadrature),
        grid: &WignerGrid,
    ) -> Result<Self> {
        if grid.points < 2 || !(grid.half_range > 0.0) {
            return Err(Error::invalid(
                "Wigner grid needs >= 2 points and a positive range",
            ));
        }
        let marginal = state.marginal(axes.0.index(), axes.1.index())?;
        let eval = WignerEvaluator::new(&marginal)?;
        let coords = grid.coordinates();
        let mut density = Vec::with_capacity(coords.len() * coords.len());
        for &x in &coords {
            for &y in &coords {
                density.push(eval.density(&[x, y])?);
            }
        }
        Ok(WignerMap {
            name: name.into(),
            axes,
            coords,
            density,
        })
    }

    pub fn peak(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "{},{},density",
            self.axes.0.label().to_lowercase(),
            self.axes.1.label().to_lowercase()
        )?;
        let n = self.coords.len();
        for (ix, x) in self.coords.iter().enumerate() {
            for (iy, y) in self.coords.iter().enumerate() {
                writeln!(w, "{x},{y},{}", self.density[ix * n + iy])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub result: TomographyResult,
    pub fit: SqueezingFit,
    /// `{x1,p1}` and `{x1,x2}` marginals of the estimate, then the `{x1,x2}`
    /// marginal of the pure two-mode squeezed state at the fitted `r`.
    pub marginals: Vec<WignerMap>,
}

/// Tolerance on `min eig(V + iΩ/4)` before a reconstruction is refused.
pub const UNPHYSICAL_TOLERANCE: f64 = 1e-6;

pub fn reconstruct(
    v: &GaussianState,
    grid: &WignerGrid,
    scale_factors: ScaleFactors,
    n_records: RecordCounts,
) -> Result<Reconstruction> {
    if v.n_modes() != 2 {
        return Err(Error::invalid("reconstruction expects a two-mode state"));
    }
    let min_eig = v.uncertainty_min_eigenvalue();
    if min_eig < -UNPHYSICAL_TOLERANCE {
        return Err(Error::Unphysical {
            min_eigenvalue: min_eig,
        });
    }
    if !v.is_physical() {
        log::warn!("estimated covariance is marginally unphysical (min eigenvalue {min_eig:e})");
    }
    let fit = fit_squeezing(v.cov())?;
    let witness_d = v.witness()?;
    let ideal = GaussianState::two_mode_squeezed(fit.r_pure, 0.0)?;
    use Quadrature::*;
    let marginals = vec![
        WignerMap::evaluate("x1p1", v, (X1, P1), grid)?,
        WignerMap::evaluate("x1x2", v, (X1, X2), grid)?,
        WignerMap::evaluate("ideal_x1x2", &ideal, (X1, X2), grid)?,
    ];
    Ok(Reconstruction {
        result: TomographyResult {
            v: v.cov().transpose().iter().copied().collect(),
            r_fit: fit.r,
            r_fit_pure: fit.r_pure,
            n_add_fit: fit.n_add,
            residual: fit.residual,
            residual_pure: fit.residual_pure,
            witness_d,
            scale_factors,
            n_records,
        },
        fit,
        marginals,
    })
}

/// Histogram layout used by [`acquire`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinningSettings {
    pub bins: usize,
    /// Half range in pilot standard deviations.
    pub n_sigma: f64,
    pub pilot_records: usize,
}

impl Default for BinningSettings {
    fn default() -> Self {
        BinningSettings {
            bins: 128,
            n_sigma: 6.0,
            pilot_records: 10_000,
        }
    }
}

/// Accumulated data of one pump setting.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub histograms: HistogramSet,
    /// Unbinned moments of the same records, for cross-checking.
    pub streaming: StreamingMoments,
}

impl Acquisition {
    pub fn n_records(&self) -> u64 {
        self.histograms.n_total()
    }
}

/// Streams `n` records through histogram and moment accumulators. The
/// binning comes from the first `pilot_records` records of the same stream.
pub fn acquire(
    source: &RecordSource,
    n: usize,
    seed: u64,
    settings: &BinningSettings,
) -> Result<Acquisition> {
    let pilot = source.generate(settings.pilot_records.min(n).max(2), seed);
    let binning = Binning::from_records(&pilot, settings.bins, settings.n_sigma)?;
    acquire_with_binning(source, n, seed, binning)
}

pub fn acquire_with_binning(
    source: &RecordSource,
    n: usize,
    seed: u64,
    binning: Binning,
) -> Result<Acquisition> {
    let (histograms, streaming) = source.fold(
        n,
        seed,
        || (HistogramSet::new(binning), StreamingMoments::new()),
        |(h, m), rec: &MeasurementRecord| {
            h.push(rec);
            m.push(rec);
        },
        |(h, m), (h2, m2)| {
            h.merge(&h2).expect("shards share one binning");
            m.merge(&m2);
        },
    );
    Ok(Acquisition {
        histograms,
        streaming,
    })
}

/// Everything derived from a pump-on / pump-off pair of acquisitions.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub moments_on: MomentSet,
    pub moments_off: MomentSet,
    pub scale_factors: ScaleFactors,
    pub state: GaussianState,
    pub fit: SqueezingFit,
    pub witness_d: f64,
    pub n_records: RecordCounts,
}

/// Histogram moments → calibration → deconvolution → fit.
pub fn estimate(on: &HistogramSet, off: &HistogramSet, n_noise: [f64; 2]) -> Result<Estimate> {
    let raw_on = MomentSet::from_histograms(on)?;
    let raw_off = MomentSet::from_histograms(off)?;
    let scale_factors = calibrate_channels(&raw_off, n_noise)?;
    let moments_on = raw_on.scaled(scale_factors);
    let moments_off = raw_off.scaled(scale_factors);
    let state = deconvolve(&moments_on, &moments_off)?;
    let fit = fit_squeezing(state.cov())?;
    let witness_d = state.witness()?;
    Ok(Estimate {
        moments_on,
        moments_off,
        scale_factors,
        state,
        fit,
        witness_d,
        n_records: RecordCounts {
            pump_on: on.n_total(),
            pump_off: off.n_total(),
        },
    })
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub on: Acquisition,
    pub off: Acquisition,
    pub estimate: Estimate,
}

/// Simulated tomography run: `n_records` with the pump on and as many with
/// it off, from independent streams derived from `seed`.
pub fn run_experiment(
    state: &GaussianState,
    detection: &crate::detection::DetectionConfig,
    n_records: usize,
    seed: u64,
    settings: &BinningSettings,
) -> Result<Experiment> {
    let on_src = RecordSource::new(state, detection, true)?;
    let off_src = RecordSource::new(state, detection, false)?;
    let on = acquire(&on_src, n_records, derive_seed(seed, 1), settings)?;
    let off = acquire(&off_src, n_records, derive_seed(seed, 2), settings)?;
    let estimate = estimate(&on.histograms, &off.histograms, detection.noise_photons())?;
    Ok(Experiment { on, off, estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectionConfig;

    fn moments(cov: [[f64; 4]; 4]) -> MomentSet {
        MomentSet {
            mean: [0.0; 4],
            cov,
            n: 1,
        }
    }

    #[test]
    fn calibration_targets() {
        assert_eq!(pump_off_variance(0.0), 0.5);
        assert_eq!(pump_off_variance(69.0), 35.0);
        let mut c = [[0.0; 4]; 4];
        for i in 0..4 {
            c[i][i] = 35.0;
        }
        let g = calibrate(&moments(c), 69.0).unwrap();
        assert_eq!(g, [1.0, 1.0]);
        c[2][2] = 35.0 * 1.02f64.powi(2);
        c[3][3] = 35.0 * 1.02f64.powi(2);
        let g = calibrate(&moments(c), 69.0).unwrap();
        assert!((g[1] - 1.0 / 1.02).abs() < 1e-12);
        assert!(matches!(
            calibrate(&moments([[0.0; 4]; 4]), 69.0),
            Err(Error::DegenerateReference(_))
        ));
    }

    #[test]
    fn no_pump_deconvolves_to_vacuum() {
        let mut c = [[0.0; 4]; 4];
        for (i, row) in c.iter_mut().enumerate() {
            row[i] = 35.0;
            row[(i + 2) % 4] = 0.3;
        }
        let m = moments(c);
        let v = deconvolve(&m, &m).unwrap();
        assert_eq!(v.cov(), GaussianState::vacuum(2).unwrap().cov());
    }

    #[test]
    fn vacuum_reconstruction_peak() {
        let v = GaussianState::vacuum(2).unwrap();
        let grid = WignerGrid {
            half_range: 2.0,
            points: 41,
        };
        let rec = reconstruct(
            &v,
            &grid,
            [1.0, 1.0],
            RecordCounts {
                pump_on: 0,
                pump_off: 0,
            },
        )
        .unwrap();
        let peak = 2.0 / std::f64::consts::PI;
        assert!((rec.marginals[0].peak() - peak).abs() < 1e-12);
        assert!((rec.marginals[1].peak() - peak).abs() < 1e-12);
        assert!((rec.result.witness_d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn squeezed_marginal_is_diagonal() {
        let v = GaussianState::two_mode_squeezed(1.78, 0.264).unwrap();
        let grid = WignerGrid {
            half_range: 6.0,
            points: 61,
        };
        let rec = reconstruct(
            &v,
            &grid,
            [1.0, 1.0],
            RecordCounts {
                pump_on: 0,
                pump_off: 0,
            },
        )
        .unwrap();
        let m = &rec.marginals[1];
        let n = m.coords.len();
        let at = |ix: usize, iy: usize| m.density[ix * n + iy];
        // along x1 = x2 the density decays slowly, across it quickly
        let c = n / 2;
        assert!(at(c + 10, c + 10) > 100.0 * at(c + 10, c - 10));
    }

    #[test]
    fn unphysical_rejected() {
        let v = GaussianState::centered(DMatrix::identity(4, 4) * 0.1).unwrap();
        let grid = WignerGrid {
            half_range: 1.0,
            points: 5,
        };
        assert!(matches!(
            reconstruct(
                &v,
                &grid,
                [1.0, 1.0],
                RecordCounts {
                    pump_on: 0,
                    pump_off: 0
                }
            ),
            Err(Error::Unphysical { .. })
        ));
    }

    #[test]
    fn small_experiment_recovers_state() {
        let truth = GaussianState::two_mode_squeezed(1.0, 0.5).unwrap();
        let det = DetectionConfig {
            n_noise: 5.0,
            ..DetectionConfig::reference()
        };
        let exp = run_experiment(&truth, &det, 300_000, 9, &BinningSettings::default()).unwrap();
        let est = &exp.estimate;
        assert!((est.scale_factors[1] * 1.02 - 1.0).abs() < 0.01);
        assert!((est.state.cov() - truth.cov()).amax() < 0.05);
        assert!((est.fit.r - 1.0).abs() < 0.02);
        assert_eq!(est.n_records.pump_on, 300_000);
    }
}
