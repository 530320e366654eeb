//! Two-channel heterodyne detection chain.
//!
//! Each channel picks one sideband of the amplifier output through a digital
//! filter `f1(Δ) = f(Δ - offset)`, `f2(Δ) = f(Δ + offset)` and records the
//! complex amplitude `S = b + h†`, where `h` is the thermal noise mode added
//! by the amplification chain. Down-conversion is not simulated in time;
//! records are drawn directly in the filtered-mode quadratures.

use std::f64::consts::PI;
use std::io::{self, BufRead, Read, Write};

use nalgebra::{DMatrix, Matrix4, Vector4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::device::GainProfile;
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::streams;

const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterShape {
    /// Flat passband of the given width, pump bin zeroed.
    BoxcarNotch,
    /// Hann taper over the passband times a Gaussian notch
    /// `1 - exp(-Δ²/2σ²)`, `σ = width/20`.
    RaisedCosineNotch,
}

/// Parameters for [`design_filter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterDesign {
    /// Channel centre relative to the pump (rad/s).
    pub offset: f64,
    pub shape: FilterShape,
    /// Passband width (rad/s).
    pub width: f64,
    /// Odd number of grid points, centred on the pump.
    pub grid_points: usize,
    /// Half span of the grid; defaults to `offset + 3·width`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_span: Option<f64>,
}

impl FilterDesign {
    /// 10 MHz wide raised-cosine window centred 5 MHz from the pump.
    pub fn reference() -> Self {
        FilterDesign {
            offset: 2.0 * PI * 5e6,
            shape: FilterShape::RaisedCosineNotch,
            width: 2.0 * PI * 10e6,
            grid_points: 4001,
            half_span: None,
        }
    }
}

/// Discretized filter pair on a uniform grid of detunings from the pump.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    offset: f64,
    grid: Vec<f64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
}

impl FilterSpec {
    /// Validates grid layout, normalization `∫|f|² dΔ = 1` and the pump
    /// notch `f1(0) = f2(0) = 0`.
    pub fn new(
        offset: f64,
        grid: Vec<f64>,
        f1: Vec<Complex64>,
        f2: Vec<Complex64>,
    ) -> Result<Self> {
        let n = grid.len();
        if n < 3 || n % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "grid needs an odd number (>= 3) of points, got {n}"
            )));
        }
        if f1.len() != n || f2.len() != n {
            return Err(Error::InvalidGrid(
                "weights and grid differ in length".into(),
            ));
        }
        let step = grid[1] - grid[0];
        if !(step > 0.0) {
            return Err(Error::InvalidGrid("grid must be increasing".into()));
        }
        for k in 0..n {
            if (grid[k] - (k as f64 - (n / 2) as f64) * step).abs() > 1e-9 * step {
                return Err(Error::InvalidGrid(
                    "grid must be uniform and centred on the pump".into(),
                ));
            }
        }
        if grid[n / 2] != 0.0 {
            return Err(Error::InvalidGrid(
                "centre grid point must be exactly 0".into(),
            ));
        }
        let spec = FilterSpec {
            offset,
            grid,
            f1,
            f2,
        };
        for (name, w) in [("f1", &spec.f1), ("f2", &spec.f2)] {
            let norm = spec.integrate(w.iter().map(|f| f.norm_sqr()));
            if (norm - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::UnsupportedFilter(format!(
                    "{name} is not normalized (∫|f|² = {norm})"
                )));
            }
            if w[n / 2] != Complex64::new(0.0, 0.0) {
                return Err(Error::UnsupportedFilter(format!(
                    "{name} does not vanish at the pump frequency"
                )));
            }
        }
        Ok(spec)
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn f1(&self) -> &[Complex64] {
        &self.f1
    }

    pub fn f2(&self) -> &[Complex64] {
        &self.f2
    }

    /// `max |f2(Δ) - f1(-Δ)|` over the grid.
    pub fn mirror_error(&self) -> f64 {
        self.f2
            .iter()
            .zip(self.f1.iter().rev())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Trapezoidal rule on the filter grid.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        let mut sum = 0.0;
        let mut first = None;
        let mut last = 0.0;
        for v in values {
            if first.is_none() {
                first = Some(v);
            }
            sum += v;
            last = v;
        }
        self.step() * (sum - 0.5 * (first.unwrap_or(0.0) + last))
    }
}

pub fn design_filter(design: &FilterDesign) -> Result<FilterSpec> {
    let FilterDesign {
        offset,
        shape,
        width,
        grid_points,
        half_span,
    } = *design;
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::invalid("filter width must be positive"));
    }
    if !(offset > 0.0) || !offset.is_finite() {
        return Err(Error::invalid("filter offset must be positive"));
    }
    if width > 2.0 * offset * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "filter width exceeds twice the offset; the two channels would overlap",
        ));
    }
    let minimum_span = offset + 3.0 * width;
    let half_span = half_span.unwrap_or(minimum_span);
    if half_span < minimum_span * (1.0 - 1e-12) {
        return Err(Error::InvalidGrid(format!(
            "half span {half_span:e} is narrower than offset + 3·width = {minimum_span:e}"
        )));
    }
    if grid_points < 3 || grid_points % 2 == 0 {
        return Err(Error::InvalidGrid(format!(
            "grid_points must be odd and >= 3, got {grid_points}"
        )));
    }
    let half = (grid_points / 2) as i64;
    let step = half_span / half as f64;
    if width / step < 8.0 {
        return Err(Error::InvalidGrid(format!(
            "grid step {step:e} resolves the passband with fewer than 8 points"
        )));
    }
    let grid: Vec<f64> = (-half..=half).map(|k| k as f64 * step).collect();

    let notch_sigma = width / 20.0;
    let window = |delta: f64| -> f64 {
        let x = delta - offset;
        if x.abs() > 0.5 * width {
            return 0.0;
        }
        match shape {
            FilterShape::BoxcarNotch => 1.0,
            FilterShape::RaisedCosineNotch => {
                let taper = 0.5 * (1.0 + (2.0 * PI * x / width).cos());
                let notch = 1.0 - (-delta * delta / (2.0 * notch_sigma * notch_sigma)).exp();
                taper * notch
            }
        }
    };
    let centre = half as usize;
    let mut raw: Vec<f64> = grid.iter().map(|&d| window(d)).collect();
    raw[centre] = 0.0;

    let norm_sq = {
        let tmp = FilterSpec {
            offset,
            grid: grid.clone(),
            f1: Vec::new(),
            f2: Vec::new(),
        };
        tmp.integrate(raw.iter().map(|v| v * v))
    };
    if !(norm_sq > 0.0) {
        return Err(Error::InvalidGrid(
            "passband contains no grid points".into(),
        ));
    }
    let scale = norm_sq.sqrt();
    let f1: Vec<Complex64> = raw.iter().map(|v| Complex64::new(v / scale, 0.0)).collect();
    let f2: Vec<Complex64> = f1.iter().rev().copied().collect();
    FilterSpec::new(offset, grid, f1, f2)
}

/// Squeezing parameter from `cosh²(r) = ∫ |f1(Δ)|² G_Δ dΔ`.
pub fn predicted_r(filter: &FilterSpec, profile: &GainProfile) -> Result<f64> {
    let integral = filter.integrate(
        filter
            .grid
            .iter()
            .zip(&filter.f1)
            .map(|(&d, f)| f.norm_sqr() * profile.gain(d)),
    );
    if integral < 1.0 - 1e-12 {
        return Err(Error::Internal(format!(
            "filtered gain integral {integral} is below 1"
        )));
    }
    // quadrature rounding of ∫|f1|² = 1 is not squeezing
    let excess = integral - 1.0;
    if excess < 1e-12 {
        return Ok(0.0);
    }
    Ok(excess.sqrt().asinh())
}

/// Gaussian state of the filtered modes `(b1, b2)` for a thermal input of
/// `input_thermal` photons per frequency component.
///
/// Every sideband pair `(Δ, -Δ)` is squeezed independently by the amplifier;
/// the filtered second moments are
/// `<b1†b1> = ∫|f1|² [(G-1) + n̄(2G-1)]` and
/// `<b1 b2> = ∫ f1(Δ) f2(-Δ) A_Δ B_Δ (1 + 2n̄)`.
/// With gain that is flat across the passband this is exactly a two-mode
/// squeezed (thermal) state; a gain slope across the passband leaves the
/// correlations slightly below `sinh(2r)/4`.
pub fn output_two_mode_state(
    profile: &GainProfile,
    filter: &FilterSpec,
    input_thermal: f64,
) -> Result<GaussianState> {
    if !(input_thermal >= 0.0) || !input_thermal.is_finite() {
        return Err(Error::invalid("input thermal photon number must be >= 0"));
    }
    if filter.mirror_error() != 0.0 {
        return Err(Error::UnsupportedFilter(
            "channel filters are not mirror images about the pump".into(),
        ));
    }
    let overlap = filter.integrate(
        filter
            .f1
            .iter()
            .zip(&filter.f2)
            .map(|(a, b)| (a * b).norm()),
    );
    if overlap > 1e-12 {
        return Err(Error::UnsupportedFilter(format!(
            "channel filters overlap (∫|f1 f2| = {overlap:e})"
        )));
    }
    let nbar = input_thermal;
    let photons = |w: &[Complex64]| {
        filter.integrate(filter.grid.iter().zip(w).map(|(&d, f)| {
            let g = profile.gain(d);
            f.norm_sqr() * ((g - 1.0) + nbar * (2.0 * g - 1.0))
        }))
    };
    let n1 = photons(&filter.f1);
    let n2 = photons(&filter.f2);
    let n = filter.grid.len();
    let mut corr = Complex64::new(0.0, 0.0);
    // trapezoid weights vanish in effect: filters are zero at the grid ends
    for k in 0..n {
        let (a, b) = profile.coefficients(filter.grid[k]);
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        corr += filter.f1[k] * filter.f2[n - 1 - k] * a * b * (w * (1.0 + 2.0 * nbar));
    }
    corr *= filter.step();

    let d1 = (2.0 * n1 + 1.0) / 4.0;
    let d2 = (2.0 * n2 + 1.0) / 4.0;
    let (re, im) = (corr.re / 2.0, corr.im / 2.0);
    #[rustfmt::skip]
    let cov = DMatrix::from_row_slice(4, 4, &[
        d1,  0.0, re,  im,
        0.0, d1,  im,  -re,
        re,  im,  d2,  0.0,
        im,  -re, 0.0, d2,
    ]);
    GaussianState::centered(cov)
}

/// Detection chain settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Added noise photons of the `h` modes.
    pub n_noise: f64,
    /// Channel-2 override of `n_noise`.
    pub n_noise_ch2: Option<f64>,
    pub gain_ch1: f64,
    pub gain_ch2: f64,
    /// ADC sample period in seconds; metadata only.
    pub sample_period: f64,
    /// LO detuning from the pump (rad/s).
    pub lo_offset: f64,
}

impl DetectionConfig {
    /// 69 noise photons, 10 ns sampling, LOs 5 MHz from the pump and a 2%
    /// gain imbalance on channel 2.
    pub fn reference() -> Self {
        DetectionConfig {
            n_noise: 69.0,
            n_noise_ch2: None,
            gain_ch1: 1.0,
            gain_ch2: 1.02,
            sample_period: 10e-9,
            lo_offset: 2.0 * PI * 5e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for n in [Some(self.n_noise), self.n_noise_ch2].into_iter().flatten() {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(Error::invalid("n_noise must be finite and >= 0"));
            }
        }
        for g in [self.gain_ch1, self.gain_ch2] {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::invalid("channel gains must be positive"));
            }
        }
        if !(self.sample_period > 0.0) {
            return Err(Error::invalid("sample_period must be positive"));
        }
        Ok(())
    }

    pub fn noise_photons(&self) -> [f64; 2] {
        [self.n_noise, self.n_noise_ch2.unwrap_or(self.n_noise)]
    }

    pub fn gains(&self) -> [f64; 2] {
        [self.gain_ch1, self.gain_ch2]
    }
}

/// One complex sample pair from the two channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub s1: Complex64,
    pub s2: Complex64,
}

impl MeasurementRecord {
    /// `(X1, P1, X2, P2)`.
    pub fn quadratures(&self) -> [f64; 4] {
        [self.s1.re, self.s1.im, self.s2.re, self.s2.im]
    }

    pub fn from_quadratures(q: [f64; 4]) -> Self {
        MeasurementRecord {
            s1: Complex64::new(q[0], q[1]),
            s2: Complex64::new(q[2], q[3]),
        }
    }
}

/// Precomputed sampler for the records of one pump setting.
#[derive(Debug, Clone)]
pub struct RecordSource {
    factor: Matrix4<f64>,
    mean: Vector4<f64>,
    noise_sd: [f64; 2],
    gains: [f64; 2],
}

impl RecordSource {
    /// With `pump_on = false` the signal modes are replaced by vacuum.
    pub fn new(state: &GaussianState, config: &DetectionConfig, pump_on: bool) -> Result<Self> {
        config.validate()?;
        if state.n_modes() != 2 {
            return Err(Error::invalid("detection needs a two-mode state"));
        }
        let vacuum;
        let state = if pump_on {
            state
        } else {
            vacuum = GaussianState::vacuum(2)?;
            &vacuum
        };
        let l = state.sampling_factor()?;
        let noise = config.noise_photons();
        Ok(RecordSource {
            factor: Matrix4::from_fn(|i, j| l[(i, j)]),
            mean: Vector4::from_fn(|i, _| state.mean()[i]),
            noise_sd: noise.map(|n| ((2.0 * n + 1.0) / 4.0).sqrt()),
            gains: config.gains(),
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> MeasurementRecord {
        let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let b = self.mean + self.factor * z;
        let mut h = [0.0; 4];
        for (k, hk) in h.iter_mut().enumerate() {
            *hk = self.noise_sd[k / 2] * rng.sample::<f64, _>(StandardNormal);
        }
        // S = b + h†: the conjugated noise mode enters P with a minus sign.
        let [g1, g2] = self.gains;
        MeasurementRecord {
            s1: Complex64::new(g1 * (b[0] + h[0]), g1 * (b[1] - h[1])),
            s2: Complex64::new(g2 * (b[2] + h[2]), g2 * (b[3] - h[3])),
        }
    }

    /// Streams `n` records into an accumulator without materializing them.
    /// The accumulator sees records in index order within each chunk; merges
    /// happen in a fixed order, so results are deterministic per seed.
    pub fn fold<A, I, F, M>(&self, n: usize, seed: u64, init: I, visit: F, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync,
        F: Fn(&mut A, &MeasurementRecord) + Sync,
        M: Fn(&mut A, A),
    {
        streams::fold_chunks(
            n,
            seed,
            init,
            |acc, rng, range| {
                for _ in range {
                    let rec = self.draw(rng);
                    visit(acc, &rec);
                }
            },
            merge,
        )
    }

    pub fn generate(&self, n: usize, seed: u64) -> Vec<MeasurementRecord> {
        streams::collect_chunks(n, seed, |rng, range, out| {
            out.extend(range.map(|_| self.draw(rng)));
        })
    }
}

/// `n` records of `S_k = g_k (b_k + h_k†)`; deterministic per seed.
pub fn measure(
    state: &GaussianState,
    config: &DetectionConfig,
    n: usize,
    seed: u64,
    pump_on: bool,
) -> Result<Vec<MeasurementRecord>> {
    Ok(RecordSource::new(state, config, pump_on)?.generate(n, seed))
}

pub const RECORD_CSV_HEADER: &str = "re_s1,im_s1,re_s2,im_s2";

/// Little-endian f64 quadruples `(re_s1, im_s1, re_s2, im_s2)`.
pub fn write_records_binary<W: Write>(mut w: W, records: &[MeasurementRecord]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(32 * records.len());
    for rec in records {
        for q in rec.quadratures() {
            buf.extend_from_slice(&q.to_le_bytes());
        }
    }
    w.write_all(&buf)
}

pub fn read_records_binary<R: Read>(mut r: R) -> io::Result<Vec<MeasurementRecord>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 32 != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "record stream length is not a multiple of 32 bytes",
        ));
    }
    Ok(bytes
        .chunks_exact(32)
        .map(|c| {
            let q = |k: usize| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().unwrap());
            MeasurementRecord::from_quadratures([q(0), q(1), q(2), q(3)])
        })
        .collect())
}

pub fn write_records_csv<W: Write>(mut w: W, records: &[MeasurementRecord]) -> io::Result<()> {
    writeln!(w, "{RECORD_CSV_HEADER}")?;
    for rec in records {
        let [a, b, c, d] = rec.quadratures();
        writeln!(w, "{a},{b},{c},{d}")?;
    }
    Ok(())
}

pub fn read_records_csv<R: BufRead>(r: R) -> io::Result<Vec<MeasurementRecord>> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == RECORD_CSV_HEADER => {}
        _ => return Err(bad(format!("expected header `{RECORD_CSV_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
        let q: [f64; 4] = vals
            .try_into()
            .map_err(|_| bad(format!("line {}: expected 4 columns", i + 2)))?;
        out.push(MeasurementRecord::from_quadratures(q));
    }
    Ok(out)
}
