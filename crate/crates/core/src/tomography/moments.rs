//! First and second moments of the measured quadratures, from histograms or
//! streamed directly from records.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::histogram::{Histogram2D, HistogramSet, Quadrature, PAIRS};
use crate::detection::MeasurementRecord;
use crate::error::{Error, Result};

/// Largest tolerated fraction of out-of-range samples.
pub const MAX_OVERFLOW_FRACTION: f64 = 0.01;

/// Moments of the two axes of one histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub mean: [f64; 2],
    /// Sheppard-corrected, clamped at 0.
    pub var: [f64; 2],
    pub cov: f64,
    pub n: u64,
}

/// Moments from bin centres. Variances get Sheppard's correction
/// `-(bin width)²/12`; the covariance is left uncorrected.
pub fn moments_from_histogram(h: &Histogram2D) -> Result<PairMoments> {
    let n = h.in_range();
    if h.n_total() > 0 {
        let fraction = h.overflow() as f64 / h.n_total() as f64;
        if fraction > MAX_OVERFLOW_FRACTION {
            return Err(Error::RangeTooSmall {
                fraction,
                limit: MAX_OVERFLOW_FRACTION,
            });
        }
    }
    if n < 2 {
        return Err(Error::invalid(format!(
            "histogram {}/{} holds {n} in-range samples; need at least 2",
            h.axes().0,
            h.axes().1
        )));
    }
    let (bx, by) = (h.x_binning(), h.y_binning());
    let nf = n as f64;

    // Marginal counts first, then centred sums: avoids cancellation when the
    // range is far from zero.
    let mut cx = vec![0u64; bx.bins];
    let mut cy = vec![0u64; by.bins];
    for ix in 0..bx.bins {
        for iy in 0..by.bins {
            let c = h.count(ix, iy);
            cx[ix] += c;
            cy[iy] += c;
        }
    }
    let mx = cx
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 * bx.center(i))
        .sum::<f64>()
        / nf;
    let my = cy
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 * by.center(i))
        .sum::<f64>()
        / nf;
    let vx = cx
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 * (bx.center(i) - mx).powi(2))
        .sum::<f64>()
        / nf;
    let vy = cy
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 * (by.center(i) - my).powi(2))
        .sum::<f64>()
        / nf;
    let mut sxy = 0.0;
    for ix in 0..bx.bins {
        let dx = bx.center(ix) - mx;
        for iy in 0..by.bins {
            let c = h.count(ix, iy);
            if c != 0 {
                sxy += c as f64 * dx * (by.center(iy) - my);
            }
        }
    }
    Ok(PairMoments {
        mean: [mx, my],
        var: [
            (vx - bx.width().powi(2) / 12.0).max(0.0),
            (vy - by.width().powi(2) / 12.0).max(0.0),
        ],
        cov: sxy / nf,
        n,
    })
}

/// Means and covariance of `(X1, P1, X2, P2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mean: [f64; 4],
    pub cov: [[f64; 4]; 4],
    pub n: u64,
}

impl MomentSet {
    /// Assembles the full set from the six pair histograms. Each quadrature
    /// occurs in three histograms; its mean and variance are averaged over
    /// them.
    pub fn from_histograms(set: &HistogramSet) -> Result<Self> {
        let mut mean = [0.0; 4];
        let mut var = [0.0; 4];
        let mut seen = [0u32; 4];
        let mut cov = [[0.0; 4]; 4];
        for (h, &(a, b)) in set.histograms().iter().zip(PAIRS.iter()) {
            let m = moments_from_histogram(h)?;
            for (k, q) in [a, b].into_iter().enumerate() {
                mean[q.index()] += m.mean[k];
                var[q.index()] += m.var[k];
                seen[q.index()] += 1;
            }
            cov[a.index()][b.index()] = m.cov;
            cov[b.index()][a.index()] = m.cov;
        }
        for k in 0..4 {
            mean[k] /= seen[k] as f64;
            cov[k][k] = var[k] / seen[k] as f64;
        }
        Ok(MomentSet {
            mean,
            cov,
            n: set.n_total(),
        })
    }

    pub fn variance(&self, q: Quadrature) -> f64 {
        self.cov[q.index()][q.index()]
    }

    pub fn covariance(&self, a: Quadrature, b: Quadrature) -> f64 {
        self.cov[a.index()][b.index()]
    }

    pub fn cov_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.cov[i][j])
    }

    /// Rescales channel `k` quadratures by `g[k]`.
    pub fn scaled(&self, g: [f64; 2]) -> MomentSet {
        let s = |i: usize| g[i / 2];
        let mut out = *self;
        for i in 0..4 {
            out.mean[i] *= s(i);
            for j in 0..4 {
                out.cov[i][j] *= s(i) * s(j);
            }
        }
        out
    }
}

/// Mergeable running mean and co-moment matrix (Chan et al. update).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StreamingMoments {
    n: u64,
    mean: Vector4<f64>,
    comoment: Matrix4<f64>,
}

impl StreamingMoments {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, record: &MeasurementRecord) {
        let x = Vector4::from(record.quadratures());
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        let delta2 = x - self.mean;
        self.comoment += delta * delta2.transpose();
    }

    pub fn merge(&mut self, other: &StreamingMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        self.mean += delta * (nb / n);
        self.comoment += other.comoment + delta * delta.transpose() * (na * nb / n);
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Population moments (divided by `n`), matching the histogram route.
    pub fn moment_set(&self) -> MomentSet {
        let n = self.n.max(1) as f64;
        MomentSet {
            mean: self.mean.into(),
            cov: std::array::from_fn(|i| std::array::from_fn(|j| self.comoment[(i, j)] / n)),
            n: self.n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::histogram::AxisBinning;
    use super::*;

    #[test]
    fn single_bin_clamps_variance() {
        let b = AxisBinning::new(0.0, 4.0, 4).unwrap();
        let mut h = Histogram2D::new((Quadrature::X1, Quadrature::P1), b, b);
        for _ in 0..10 {
            h.fill(1.5, 2.5);
        }
        let m = moments_from_histogram(&h).unwrap();
        assert_eq!(m.mean, [1.5, 2.5]);
        assert_eq!(m.var, [0.0, 0.0]);
    }

    #[test]
    fn two_point_mass() {
        let a = 2.0;
        let b = AxisBinning::new(-4.0, 4.0, 8).unwrap();
        let mut h = Histogram2D::new((Quadrature::X1, Quadrature::X2), b, b);
        for _ in 0..50 {
            h.fill(a - 0.5, 0.0 + 0.5);
            h.fill(-a + 0.5, 0.0 + 0.5);
        }
        let m = moments_from_histogram(&h).unwrap();
        // bin centres at ±1.5 carry the mass; Sheppard removes 1/12
        assert!((m.var[0] - (1.5f64.powi(2) - 1.0 / 12.0)).abs() < 1e-12);
        assert!(m.mean[0].abs() < 1e-12);
    }

    #[test]
    fn too_much_overflow() {
        let b = AxisBinning::new(0.0, 1.0, 4).unwrap();
        let mut h = Histogram2D::new((Quadrature::X1, Quadrature::P1), b, b);
        for k in 0..100 {
            h.fill(0.3, if k < 5 { 7.0 } else { 0.3 });
        }
        assert!(matches!(
            moments_from_histogram(&h),
            Err(Error::RangeTooSmall { .. })
        ));
    }

    #[test]
    fn streaming_merge_matches_single_pass() {
        let recs: Vec<MeasurementRecord> = (0..1000)
            .map(|i| {
                let t = i as f64 * 0.37;
                MeasurementRecord::from_quadratures([
                    t.sin() * 3.0,
                    t.cos(),
                    (2.0 * t).sin() + 5.0,
                    t % 1.7,
                ])
            })
            .collect();
        let mut whole = StreamingMoments::new();
        recs.iter().for_each(|r| whole.push(r));
        let mut parts = StreamingMoments::new();
        for chunk in recs.chunks(137) {
            let mut p = StreamingMoments::new();
            chunk.iter().for_each(|r| p.push(r));
            parts.merge(&p);
        }
        let (a, b) = (whole.moment_set(), parts.moment_set());
        for i in 0..4 {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-12 * (1.0 + a.mean[i].abs()));
            for j in 0..4 {
                assert!((a.cov[i][j] - b.cov[i][j]).abs() < 1e-12 * (1.0 + a.cov[i][i]));
            }
        }
        assert_eq!(parts.count(), 1000);
    }

    #[test]
    fn scaling_moments() {
        let mut m = MomentSet {
            mean: [1.0; 4],
            cov: [[1.0; 4]; 4],
            n: 10,
        };
        m = m.scaled([2.0, 3.0]);
        assert_eq!(m.cov[0][0], 4.0);
        assert_eq!(m.cov[0][2], 6.0);
        assert_eq!(m.cov[3][3], 9.0);
        assert_eq!(m.mean[2], 3.0);
    }
}
