//! Flux-tunable Kerr resonator operated as a phase-insensitive parametric
//! amplifier.
//!
//! All angular frequencies are in rad/s. Pump powers are in dBm at the
//! device input.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{self, LmOptions};

const TWO_PI: f64 = 2.0 * PI;

/// Anchor of the phenomenological gain map: the measured peak gain at one
/// pump setting, plus the pump-detuning scale over which gain falls off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainAnchor {
    pub omega_p: f64,
    pub power_dbm: f64,
    pub g0: f64,
    pub detuning_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Resonance at zero flux.
    pub omega_r_max: f64,
    /// Josephson energy at zero flux, E_J/h in Hz.
    pub e_j_max: f64,
    /// Kerr constant K (negative).
    pub kerr_k: f64,
    /// Coupling to the transmission line.
    pub kappa: f64,
    /// Internal loss rate.
    pub gamma_i: f64,
    /// Lumped SQUID inductance participation ratio at zero flux.
    pub participation: f64,
    /// `c` in `sqrt(G0)·B = c·κ`.
    pub gain_bandwidth_const: f64,
    pub gain_anchor: GainAnchor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    pub omega_p: f64,
    pub power_dbm: f64,
    pub critical_omega_p: f64,
    pub critical_power_dbm: f64,
}

impl DeviceParams {
    /// Device values of the reference sample: 6.9 GHz maximum resonance,
    /// κ/2π = 25 MHz, γ_i/2π = 2 MHz, K/ω_r,max = -2.8e-7.
    ///
    /// The peak gain of 144 at the working pump point is not a measured
    /// number; it is chosen so the default filter predicts r ≈ 1.75.
    pub fn reference() -> Self {
        let omega_r_max = TWO_PI * 6.9e9;
        DeviceParams {
            omega_r_max,
            e_j_max: 6.1e12,
            kerr_k: -2.8e-7 * omega_r_max,
            kappa: TWO_PI * 25e6,
            gamma_i: TWO_PI * 2e6,
            participation: 0.02,
            gain_bandwidth_const: 1.0,
            gain_anchor: GainAnchor {
                omega_p: TWO_PI * 6.8834e9,
                power_dbm: -80.8,
                g0: 144.0,
                detuning_width: TWO_PI * 10e6,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.omega_r_max, "omega_r_max")?;
        pos(self.e_j_max, "e_j_max")?;
        pos(self.kappa, "kappa")?;
        pos(self.gain_bandwidth_const, "gain_bandwidth_const")?;
        pos(self.gain_anchor.omega_p, "gain_anchor.omega_p")?;
        pos(
            self.gain_anchor.detuning_width,
            "gain_anchor.detuning_width",
        )?;
        if !(self.gamma_i >= 0.0) || !self.gamma_i.is_finite() {
            return Err(Error::invalid("gamma_i must be >= 0"));
        }
        if !(self.kerr_k < 0.0) || !self.kerr_k.is_finite() {
            return Err(Error::invalid("kerr_k must be negative"));
        }
        if !(self.participation > 0.0 && self.participation < 1.0) {
            return Err(Error::invalid("participation must lie in (0, 1)"));
        }
        if !(self.gain_anchor.g0 > 1.0) || !self.gain_anchor.g0.is_finite() {
            return Err(Error::invalid("gain_anchor.g0 must exceed 1"));
        }
        if !self.gain_anchor.power_dbm.is_finite() {
            return Err(Error::invalid("gain_anchor.power_dbm must be finite"));
        }
        Ok(())
    }

    /// Inductance ratio `p0` with `participation = p0 / (1 + p0)`.
    fn inductance_ratio(&self) -> f64 {
        self.participation / (1.0 - self.participation)
    }
}

impl PumpConfig {
    /// Working point 6.8834 GHz / -80.8 dBm; critical point 6.882 GHz /
    /// -80.6 dBm.
    pub fn reference() -> Self {
        PumpConfig {
            omega_p: TWO_PI * 6.8834e9,
            power_dbm: -80.8,
            critical_omega_p: TWO_PI * 6.882e9,
            critical_power_dbm: -80.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.omega_p, "omega_p"),
            (self.critical_omega_p, "critical_omega_p"),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !self.critical_power_dbm.is_finite() || self.power_dbm.is_nan() {
            return Err(Error::invalid("pump powers must be numbers"));
        }
        Ok(())
    }

    pub fn with_power(&self, power_dbm: f64) -> Self {
        PumpConfig { power_dbm, ..*self }
    }

    pub fn with_frequency(&self, omega_p: f64) -> Self {
        PumpConfig { omega_p, ..*self }
    }
}

/// Lumped flux tuning `ω_r(φ) = ω0 / (1 + p0/|cos πφ|)`, calibrated so that
/// `ω_r(0) = omega_r_max`. `phi` is in units of the flux quantum.
pub fn resonance_frequency(phi: f64, params: &DeviceParams) -> Result<f64> {
    let c = (PI * phi).cos().abs();
    if !(c > 1e-6) {
        return Err(Error::DivergentInductance { phi });
    }
    let p0 = params.inductance_ratio();
    // ratio is exactly 1 at zero flux, so ω_r(0) reproduces omega_r_max bit-for-bit
    let ratio = (1.0 + p0) / (1.0 + p0 / c);
    Ok(params.omega_r_max * ratio)
}

/// Inverse of [`resonance_frequency`] on `φ ∈ [0, 0.5)`.
pub fn flux_for_frequency(omega: f64, params: &DeviceParams) -> Result<f64> {
    if !(omega > 0.0 && omega <= params.omega_r_max) {
        return Err(Error::invalid(format!(
            "frequency {omega} outside the tuning range (0, {}]",
            params.omega_r_max
        )));
    }
    let p0 = params.inductance_ratio();
    let c = p0 / (params.omega_r_max * (1.0 + p0) / omega - 1.0);
    Ok(c.min(1.0).acos() / PI)
}

/// Linear-regime reflection coefficient at zero flux.
pub fn reflection(omega: f64, params: &DeviceParams) -> Complex64 {
    reflection_at_detuning(omega - params.omega_r_max, params)
}

/// `Γ(δ) = ((γ_i - κ)/2 - iδ) / ((γ_i + κ)/2 - iδ)`.
pub fn reflection_at_detuning(delta: f64, params: &DeviceParams) -> Complex64 {
    let num = Complex64::new((params.gamma_i - params.kappa) / 2.0, -delta);
    let den = Complex64::new((params.gamma_i + params.kappa) / 2.0, -delta);
    num / den
}

/// Lorentzian gain `G_Δ = 1 + (G0 - 1) / (1 + (2Δ/B)²)` around the pump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainProfile {
    pub g0: f64,
    /// Full width at half maximum of `G - 1`.
    pub bandwidth: f64,
    pub omega_p: f64,
}

impl GainProfile {
    pub fn new(g0: f64, bandwidth: f64, omega_p: f64) -> Result<Self> {
        if !(g0 >= 1.0) || !g0.is_finite() {
            return Err(Error::invalid(format!("peak gain must be >= 1, got {g0}")));
        }
        if !(bandwidth > 0.0) {
            return Err(Error::invalid(format!(
                "bandwidth must be > 0, got {bandwidth}"
            )));
        }
        Ok(GainProfile {
            g0,
            bandwidth,
            omega_p,
        })
    }

    /// Gain independent of detuning (infinite bandwidth).
    pub fn flat(g: f64) -> Result<Self> {
        Self::new(g, f64::INFINITY, 0.0)
    }

    pub fn gain(&self, delta: f64) -> f64 {
        let u = 2.0 * delta / self.bandwidth;
        1.0 + (self.g0 - 1.0) / (1.0 + u * u)
    }

    /// Scattering coefficients `(A_Δ, B_Δ)` of `b_out = A b_in(Δ) + B b_in†(-Δ)`,
    /// both real and positive.
    pub fn coefficients(&self, delta: f64) -> (Complex64, Complex64) {
        let g = self.gain(delta);
        (
            Complex64::new(g.sqrt(), 0.0),
            Complex64::new((g - 1.0).max(0.0).sqrt(), 0.0),
        )
    }

    /// Output power spectral density for vacuum input plus white detection
    /// noise of `n_noise` photons.
    pub fn psd(&self, delta: f64, n_noise: f64) -> f64 {
        (self.gain(delta) - 1.0) + n_noise
    }
}

/// Phenomenological gain map.
///
/// The normalized drive `e = L(ω_p) · 10^((P - P_crit)/s)` with a Lorentzian
/// detuning factor `L` sets `sqrt(G0) = (1 + e)/(1 - e)`; the power scale `s`
/// is fixed by the calibration anchor. `G0` grows monotonically towards the
/// critical point and the bandwidth follows from `sqrt(G0)·B = c·κ`.
pub fn gain_profile(pump: &PumpConfig, params: &DeviceParams) -> Result<GainProfile> {
    if !(pump.power_dbm < pump.critical_power_dbm) {
        return Err(Error::UnstableRegime {
            power_dbm: pump.power_dbm,
            critical_dbm: pump.critical_power_dbm,
        });
    }
    let anchor = &params.gain_anchor;
    if !(anchor.power_dbm < pump.critical_power_dbm) {
        return Err(Error::invalid(
            "gain anchor must lie below the critical pump power",
        ));
    }
    let detuning = |omega: f64| {
        let x = (omega - pump.critical_omega_p) / anchor.detuning_width;
        1.0 / (1.0 + x * x)
    };
    let sg = anchor.g0.sqrt();
    let e_anchor = (sg - 1.0) / (sg + 1.0);
    let rel = e_anchor / detuning(anchor.omega_p);
    if !(rel < 1.0) {
        return Err(Error::invalid(
            "gain anchor is unreachable at its pump detuning; widen detuning_width",
        ));
    }
    let power_scale = (anchor.power_dbm - pump.critical_power_dbm) / rel.log10();
    let e = detuning(pump.omega_p)
        * 10f64.powf((pump.power_dbm - pump.critical_power_dbm) / power_scale);
    let sqrt_g0 = (1.0 + e) / (1.0 - e);
    let g0 = sqrt_g0 * sqrt_g0;
    GainProfile::new(
        g0,
        params.gain_bandwidth_const * params.kappa / sqrt_g0,
        pump.omega_p,
    )
}

/// Result of [`fit_psd`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdFit {
    pub g0: f64,
    pub bandwidth: f64,
    pub n_noise: f64,
    /// Asymptotic standard errors of `(g0, bandwidth, n_noise)`; absent when
    /// the normal matrix is singular (e.g. `g0` pinned at 1).
    pub std_errors: Option<[f64; 3]>,
    pub residual_rms: f64,
    pub iterations: usize,
}

/// Least-squares fit of `S(Δ) = (g0 - 1)/(1 + (2Δ/B)²) + n_noise`.
pub fn fit_psd(samples: &[(f64, f64)]) -> Result<PsdFit> {
    if samples.len() < 10 {
        return Err(Error::invalid(format!(
            "PSD fit needs at least 10 points, got {}",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|(d, s)| !d.is_finite() || !s.is_finite())
    {
        return Err(Error::invalid("PSD samples must be finite"));
    }
    let first = samples[0].1;
    if samples.iter().all(|&(_, s)| s == first) {
        return Err(Error::FitDegenerate("all PSD values are equal".into()));
    }

    let (p0, span) = initial_psd_guess(samples);
    let m = samples.len();
    let model = |p: &[f64]| {
        let (g0, b, n) = (p[0], p[1], p[2]);
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, 3);
        for (i, &(d, s)) in samples.iter().enumerate() {
            let u = 2.0 * d / b;
            let den = 1.0 + u * u;
            r[i] = (g0 - 1.0) / den + n - s;
            j[(i, 0)] = 1.0 / den;
            j[(i, 1)] = (g0 - 1.0) * 2.0 * u * u / (b * den * den);
            j[(i, 2)] = 1.0;
        }
        (r, j)
    };
    let mut opts = LmOptions::unbounded(3);
    opts.lower = vec![1.0, 1e-9 * span, f64::NEG_INFINITY];
    // a Lorentzian wider than the data is indistinguishable from curvature
    opts.upper = vec![f64::INFINITY, span, f64::INFINITY];
    let out = lsq::levenberg_marquardt(model, &p0, &opts)?;

    let (g0, bandwidth, n_noise) = (out.params[0], out.params[1], out.params[2]);
    if g0 > 1.0 + 1e-9 && span < 3.0 * bandwidth {
        return Err(Error::FitDegenerate(format!(
            "data span {span:e} covers less than 3 fitted bandwidths ({bandwidth:e})"
        )));
    }
    let std_errors = out.standard_errors().map(|e| [e[0], e[1], e[2]]);
    Ok(PsdFit {
        g0,
        bandwidth,
        n_noise,
        std_errors,
        residual_rms: (out.cost / m as f64).sqrt(),
        iterations: out.iterations,
    })
}

/// Floor from the outer quarter of the data, peak height from the maximum,
/// width from the half-maximum crossing.
fn initial_psd_guess(samples: &[(f64, f64)]) -> ([f64; 3], f64) {
    let mut by_offset: Vec<(f64, f64)> = samples.iter().map(|&(d, s)| (d.abs(), s)).collect();
    by_offset.sort_by(|a, b| b.0.total_cmp(&a.0));
    let wings = (samples.len() / 4).max(3);
    let mut floor: Vec<f64> = by_offset[..wings].iter().map(|p| p.1).collect();
    floor.sort_by(f64::total_cmp);
    let n0 = floor[floor.len() / 2];

    let peak = samples
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let height = (peak - n0).max(0.0);
    let half = n0 + height / 2.0;
    let lo = samples.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = samples
        .iter()
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let half_width = samples
        .iter()
        .filter(|p| p.1 >= half)
        .map(|p| p.0.abs())
        .fold(0.0, f64::max);
    let b0 = if half_width > 0.0 {
        2.0 * half_width
    } else {
        span / samples.len() as f64
    };
    ([1.0 + height, b0, n0], span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const MHZ: f64 = TWO_PI * 1e6;

    #[test]
    fn zero_flux_is_exact() {
        let p = DeviceParams::reference();
        let w = resonance_frequency(0.0, &p).unwrap();
        assert_eq!(w, p.omega_r_max);
        assert_eq!(w / TWO_PI, 6.9e9);
    }

    #[test]
    fn quarter_flux_closed_form() {
        let p = DeviceParams::reference();
        let p0 = 0.02 / 0.98;
        let expected = p.omega_r_max * (1.0 + p0) / (1.0 + p0 * 2f64.sqrt());
        let w = resonance_frequency(0.25, &p).unwrap();
        assert!((w - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn half_flux_diverges() {
        let p = DeviceParams::reference();
        assert!(matches!(
            resonance_frequency(0.5, &p),
            Err(Error::DivergentInductance { .. })
        ));
        let w = resonance_frequency(0.5 - 1e-6, &p).unwrap();
        assert!(w < 0.01 * p.omega_r_max);
    }

    #[test]
    fn flux_inverse_round_trip() {
        let p = DeviceParams::reference();
        for phi in [0.0, 0.1, 0.3, 0.45] {
            let w = resonance_frequency(phi, &p).unwrap();
            assert!((flux_for_frequency(w, &p).unwrap() - phi).abs() < 1e-7);
        }
    }

    #[test]
    fn reflection_anchors() {
        let p = DeviceParams::reference();
        let g = reflection(p.omega_r_max, &p);
        assert!((g.re + 23.0 / 27.0).abs() < 1e-12);
        assert!(g.im.abs() < 1e-12);
        let far = reflection_at_detuning(1e15, &p);
        assert!((far - Complex64::new(1.0, 0.0)).norm() < 1e-6);
        let lossless = DeviceParams { gamma_i: 0.0, ..p };
        let g = reflection_at_detuning(0.0, &lossless);
        assert!((g + 1.0).norm() < 1e-15);
        assert!((reflection_at_detuning(3.0 * MHZ, &lossless).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gain_shape() {
        let prof = GainProfile::new(50.0, 3.0 * MHZ, 0.0).unwrap();
        assert_eq!(prof.gain(0.0), 50.0);
        assert!((prof.gain(1.5 * MHZ) - 25.5).abs() < 1e-12);
        assert!((prof.gain(-1.5 * MHZ) - 25.5).abs() < 1e-12);
        assert!((prof.gain(1e15) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coefficients() {
        let prof = GainProfile::flat(4.0).unwrap();
        let (a, b) = prof.coefficients(123.0);
        assert_eq!((a.re, b.re), (2.0, 3f64.sqrt()));
        let prof = GainProfile::new(30.0, MHZ, 0.0).unwrap();
        let (a, b) = prof.coefficients(1e18);
        assert!((a.re - 1.0).abs() < 1e-12 && b.re.abs() < 1e-6);
    }

    #[test]
    fn psd_values() {
        let prof = GainProfile::new(100.0, 2.0 * MHZ, 0.0).unwrap();
        assert_eq!(prof.psd(0.0, 69.0), 99.0 + 69.0);
        assert!((prof.psd(1e15, 69.0) - 69.0).abs() < 1e-9);
        let unity = GainProfile::new(1.0, MHZ, 0.0).unwrap();
        assert_eq!(unity.psd(0.3 * MHZ, 0.0), 0.0);
    }

    #[test]
    fn working_point_gain() {
        let p = DeviceParams::reference();
        let prof = gain_profile(&PumpConfig::reference(), &p).unwrap();
        assert!((prof.g0 - 144.0).abs() < 1e-9 * 144.0);
        assert!((prof.bandwidth - p.kappa / 12.0).abs() < 1e-9 * prof.bandwidth);
    }

    #[test]
    fn gain_off_and_unstable() {
        let p = DeviceParams::reference();
        let pump = PumpConfig::reference();
        let off = gain_profile(&pump.with_power(-400.0), &p).unwrap();
        assert!((off.g0 - 1.0).abs() < 1e-12);
        assert!((off.bandwidth - p.kappa).abs() < 1e-6 * p.kappa);
        assert!(matches!(
            gain_profile(&pump.with_power(-80.6), &p),
            Err(Error::UnstableRegime { .. })
        ));
        assert!(gain_profile(&pump.with_power(-70.0), &p).is_err());
    }

    #[test]
    fn gain_monotone_towards_critical_point() {
        let p = DeviceParams::reference();
        let pump = PumpConfig::reference();
        let mut last = 0.0;
        for k in 0..40 {
            let g = gain_profile(&pump.with_power(-90.0 + 0.23 * k as f64), &p)
                .unwrap()
                .g0;
            assert!(g > last);
            last = g;
        }
        let at = |f: f64| gain_profile(&pump.with_frequency(f), &p).unwrap().g0;
        let c = pump.critical_omega_p;
        assert!(at(c) > at(c + MHZ) && at(c + MHZ) > at(c + 3.0 * MHZ));
        assert!(at(c) > at(c - MHZ));
    }

    fn synthetic(g0: f64, b: f64, n: f64, points: usize) -> Vec<(f64, f64)> {
        let prof = GainProfile::new(g0, b, 0.0).unwrap();
        (0..points)
            .map(|i| {
                let d = -5.0 * b + 10.0 * b * i as f64 / (points - 1) as f64;
                (d, prof.psd(d, n))
            })
            .collect()
    }

    #[test]
    fn psd_fit_noiseless_round_trip() {
        let b = 2.5 * MHZ;
        let fit = fit_psd(&synthetic(100.0, b, 69.0, 200)).unwrap();
        assert!((fit.g0 - 100.0).abs() < 1e-8 * 100.0);
        assert!((fit.bandwidth - b).abs() < 1e-8 * b);
        assert!((fit.n_noise - 69.0).abs() < 1e-8 * 69.0);
    }

    #[test]
    fn psd_fit_noisy_floor() {
        let b = 2.5 * MHZ;
        let clean = synthetic(100.0, b, 69.0, 200);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noisy: Vec<_> = clean
            .iter()
            .map(|&(d, s)| (d, s + noise.sample(&mut rng)))
            .collect();
        let fit = fit_psd(&noisy).unwrap();
        assert!((fit.n_noise - 69.0).abs() < 1.0);
        let se = fit.std_errors.unwrap();
        assert!(se[2] > 0.0 && se[2] < 0.2);
    }

    #[test]
    fn psd_fit_flat_and_degenerate() {
        let flat: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * MHZ, 69.0)).collect();
        assert!(matches!(fit_psd(&flat), Err(Error::FitDegenerate(_))));

        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nearly: Vec<_> = (0..60)
            .map(|i| ((i as f64 - 30.0) * MHZ, 69.0 + noise.sample(&mut rng)))
            .collect();
        match fit_psd(&nearly) {
            Ok(fit) => {
                assert!((fit.n_noise - 69.0).abs() < 0.1);
                assert!(fit.g0 < 1.5);
            }
            Err(e) => assert!(matches!(e, Error::FitDegenerate(_)), "{e}"),
        }
        assert!(fit_psd(&flat[..5]).is_err());
    }
}
