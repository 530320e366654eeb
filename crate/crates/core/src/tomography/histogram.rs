//! Two-dimensional quadrature histograms for the six pairs of measured
//! quadratures.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::detection::MeasurementRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrature {
    X1,
    P1,
    X2,
    P2,
}

impl Quadrature {
    pub const ALL: [Quadrature; 4] = [
        Quadrature::X1,
        Quadrature::P1,
        Quadrature::X2,
        Quadrature::P2,
    ];

    /// Position in `(X1, P1, X2, P2)`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn channel(self) -> usize {
        self.index() / 2
    }

    pub fn label(self) -> &'static str {
        match self {
            Quadrature::X1 => "X1",
            Quadrature::P1 => "P1",
            Quadrature::X2 => "X2",
            Quadrature::P2 => "P2",
        }
    }
}

impl fmt::Display for Quadrature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The six histogrammed pairs.
pub const PAIRS: [(Quadrature, Quadrature); 6] = {
    use Quadrature::*;
    [(X1, P1), (X2, P2), (X1, P2), (X2, P1), (X1, X2), (P1, P2)]
};

/// Uniform bins on `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBinning {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl AxisBinning {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::invalid(format!("need at least 2 bins, got {bins}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "invalid histogram range [{lo}, {hi})"
            )));
        }
        Ok(AxisBinning { lo, hi, bins })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / self.bins as f64)
            .collect()
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }

    #[inline]
    pub fn index(&self, v: f64) -> Option<usize> {
        let t = (v - self.lo) / (self.hi - self.lo) * self.bins as f64;
        if t >= 0.0 && t < self.bins as f64 {
            Some(t as usize)
        } else {
            None
        }
    }
}

/// Per-quadrature binning shared by all six histograms of one acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub axes: [AxisBinning; 4],
}

impl Binning {
    pub fn uniform(half_range: f64, bins: usize) -> Result<Self> {
        let axis = AxisBinning::new(-half_range, half_range, bins)?;
        Ok(Binning { axes: [axis; 4] })
    }

    /// `mean ± n_sigma·sd` per quadrature, estimated from `records`.
    pub fn from_records(records: &[MeasurementRecord], bins: usize, n_sigma: f64) -> Result<Self> {
        if records.len() < 2 {
            return Err(Error::invalid(
                "need at least 2 records to choose a binning",
            ));
        }
        let n = records.len() as f64;
        let mut axes = [AxisBinning::new(-1.0, 1.0, bins)?; 4];
        for (k, axis) in axes.iter_mut().enumerate() {
            let mean = records.iter().map(|r| r.quadratures()[k]).sum::<f64>() / n;
            let var = records
                .iter()
                .map(|r| (r.quadratures()[k] - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            let sd = var.sqrt();
            if !(sd > 0.0) {
                return Err(Error::invalid("pilot records have zero spread"));
            }
            *axis = AxisBinning::new(mean - n_sigma * sd, mean + n_sigma * sd, bins)?;
        }
        Ok(Binning { axes })
    }

    pub fn axis(&self, q: Quadrature) -> &AxisBinning {
        &self.axes[q.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    axes: (Quadrature, Quadrature),
    x: AxisBinning,
    y: AxisBinning,
    /// Row-major in x: `counts[ix * y.bins + iy]`.
    counts: Vec<u64>,
    n_total: u64,
    overflow: u64,
}

impl Histogram2D {
    pub fn new(axes: (Quadrature, Quadrature), x: AxisBinning, y: AxisBinning) -> Self {
        Histogram2D {
            axes,
            x,
            y,
            counts: vec![0; x.bins * y.bins],
            n_total: 0,
            overflow: 0,
        }
    }

    pub fn axes(&self) -> (Quadrature, Quadrature) {
        self.axes
    }

    pub fn x_binning(&self) -> &AxisBinning {
        &self.x
    }

    pub fn y_binning(&self) -> &AxisBinning {
        &self.y
    }

    pub fn count(&self, ix: usize, iy: usize) -> u64 {
        self.counts[ix * self.y.bins + iy]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn in_range(&self) -> u64 {
        self.n_total - self.overflow
    }

    pub fn fill(&mut self, x: f64, y: f64) {
        self.fill_index(self.x.index(x), self.y.index(y));
    }

    #[inline]
    fn fill_index(&mut self, ix: Option<usize>, iy: Option<usize>) {
        self.n_total += 1;
        match (ix, iy) {
            (Some(i), Some(j)) => self.counts[i * self.y.bins + j] += 1,
            _ => self.overflow += 1,
        }
    }

    pub fn merge(&mut self, other: &Histogram2D) -> Result<()> {
        if self.axes != other.axes || self.x != other.x || self.y != other.y {
            return Err(Error::invalid(
                "cannot merge histograms with different binning",
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n_total += other.n_total;
        self.overflow += other.overflow;
        Ok(())
    }

    /// Long-format CSV, one row per bin: `x_lo,x_hi,y_lo,y_hi,count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let ex = self.x.edges();
        let ey = self.y.edges();
        writeln!(w, "x_lo,x_hi,y_lo,y_hi,count")?;
        for ix in 0..self.x.bins {
            for iy in 0..self.y.bins {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    ex[ix],
                    ex[ix + 1],
                    ey[iy],
                    ey[iy + 1],
                    self.count(ix, iy)
                )?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> HistogramJson {
        HistogramJson {
            axes: [self.axes.0.label().into(), self.axes.1.label().into()],
            edges_x: self.x.edges(),
            edges_y: self.y.edges(),
            counts: self
                .counts
                .chunks(self.y.bins)
                .map(<[u64]>::to_vec)
                .collect(),
            n_total: self.n_total,
            overflow: self.overflow,
        }
    }
}

/// JSON envelope of a histogram; `counts[ix][iy]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramJson {
    pub axes: [String; 2],
    pub edges_x: Vec<f64>,
    pub edges_y: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
    pub n_total: u64,
    pub overflow: u64,
}

/// The six pair histograms of one pump setting, filled in a single pass.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSet {
    binning: Binning,
    hists: Vec<Histogram2D>,
}

impl HistogramSet {
    pub fn new(binning: Binning) -> Self {
        let hists = PAIRS
            .iter()
            .map(|&(a, b)| Histogram2D::new((a, b), *binning.axis(a), *binning.axis(b)))
            .collect();
        HistogramSet { binning, hists }
    }

    pub fn accumulate(records: &[MeasurementRecord], binning: Binning) -> Self {
        let mut set = Self::new(binning);
        for r in records {
            set.push(r);
        }
        set
    }

    #[inline]
    pub fn push(&mut self, record: &MeasurementRecord) {
        let q = record.quadratures();
        let idx: [Option<usize>; 4] = std::array::from_fn(|k| self.binning.axes[k].index(q[k]));
        for (h, &(a, b)) in self.hists.iter_mut().zip(PAIRS.iter()) {
            h.fill_index(idx[a.index()], idx[b.index()]);
        }
    }

    pub fn merge(&mut self, other: &HistogramSet) -> Result<()> {
        if self.binning != other.binning {
            return Err(Error::invalid(
                "cannot merge histogram sets with different binning",
            ));
        }
        for (a, b) in self.hists.iter_mut().zip(&other.hists) {
            a.merge(b)?;
        }
        Ok(())
    }

    pub fn binning(&self) -> &Binning {
        &self.binning
    }

    pub fn histograms(&self) -> &[Histogram2D] {
        &self.hists
    }

    pub fn get(&self, a: Quadrature, b: Quadrature) -> Option<&Histogram2D> {
        self.hists.iter().find(|h| h.axes == (a, b))
    }

    pub fn n_total(&self) -> u64 {
        self.hists[0].n_total
    }
}
