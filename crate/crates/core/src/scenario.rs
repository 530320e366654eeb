//! Batch scenarios: each writes its data files plus `manifest.json` into an
//! output directory. Data files depend only on the configuration and seed.

use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{distorted_state, ExperimentConfig, StateSource};
use crate::detection::{design_filter, output_two_mode_state, predicted_r};
use crate::device::{self, fit_psd, gain_profile};
use crate::error::Error;
use crate::gaussian::GaussianState;
use crate::streams::{chunk_rng, derive_seed};
use crate::tomography::{self, HistogramJson, MomentSet, Quadrature, PAIRS};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    FluxSweep,
    Reflection,
    GainMap,
    Psd,
    Tomography,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::FluxSweep,
        Scenario::Reflection,
        Scenario::GainMap,
        Scenario::Psd,
        Scenario::Tomography,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::FluxSweep => "flux-sweep",
            Scenario::Reflection => "reflection",
            Scenario::GainMap => "gain-map",
            Scenario::Psd => "psd",
            Scenario::Tomography => "tomography",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
                format!(
                    "unknown scenario {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(Error),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            ScenarioError::Numerical(_) => 3,
            ScenarioError::Io { .. } => 4,
        }
    }
}

impl From<Error> for ScenarioError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            ScenarioError::Numerical(e)
        } else {
            ScenarioError::Config(e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_schema: &'static str,
    pub scenario: String,
    pub seed: u64,
    /// SHA-256 of the effective configuration as written to `config.json`.
    pub config_sha256: String,
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
    pub threads: usize,
    pub outputs: Vec<OutputFile>,
    pub summary: Value,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct OutDir {
    root: PathBuf,
    files: Vec<OutputFile>,
}

impl OutDir {
    fn create(root: &Path) -> Result<Self, ScenarioError> {
        fs::create_dir_all(root).map_err(|source| ScenarioError::Io {
            path: root.into(),
            source,
        })?;
        Ok(OutDir {
            root: root.into(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), ScenarioError> {
        let path = self.root.join(name);
        let io_err = |source| ScenarioError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        fs::write(&path, bytes).map_err(io_err)?;
        self.files.push(OutputFile {
            file: name.into(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ScenarioError> {
        let mut s = serde_json::to_string_pretty(value).expect("output serializes");
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs one scenario and writes `manifest.json` last.
pub fn run_scenario(
    scenario: Scenario,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Manifest, ScenarioError> {
    config.validate()?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let mut out = OutDir::create(out_dir)?;
    let config_text = config.to_json();
    out.write("config.json", config_text.as_bytes())?;

    let summary = match scenario {
        Scenario::FluxSweep => flux_sweep(config, &mut out)?,
        Scenario::Reflection => reflection(config, &mut out)?,
        Scenario::GainMap => gain_map(config, &mut out)?,
        Scenario::Psd => psd(config, &mut out)?,
        Scenario::Tomography => tomography_run(config, &mut out)?,
    };

    let mut outputs = out.files.clone();
    outputs.sort_by(|a, b| a.file.cmp(&b.file));
    let manifest = Manifest {
        tool: "jpa-tomo",
        version: env!("CARGO_PKG_VERSION"),
        config_schema: crate::config::SCHEMA,
        scenario: scenario.name().into(),
        seed: config.run.seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        started_unix_s: started,
        wall_clock_s: clock.elapsed().as_secs_f64(),
        threads: threads(),
        outputs,
        summary,
    };
    out.write_json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    })
}

fn flux_sweep(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Value, ScenarioError> {
    let params = cfg.device_params();
    let s = &cfg.run.flux_sweep;
    let mut csv = String::from("phi,frequency_hz\n");
    let mut freqs = Vec::with_capacity(s.points);
    for phi in linspace(s.phi_min, s.phi_max, s.points) {
        let f = device::resonance_frequency(phi, &params)? / TWO_PI;
        writeln!(csv, "{phi},{f}").unwrap();
        freqs.push(f);
    }
    out.write("flux_sweep.csv", csv.as_bytes())?;
    Ok(json!({
        "frequency_at_phi_min_hz": freqs[0],
        "frequency_at_phi_max_hz": freqs[freqs.len() - 1],
        "monotone_decreasing": freqs.windows(2).all(|w| w[1] < w[0]),
    }))
}

fn reflection(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Value, ScenarioError> {
    let params = cfg.device_params();
    let s = &cfg.run.reflection;
    let mut csv = String::from("frequency_hz,detuning_hz,re,im,magnitude,phase_rad\n");
    for d in linspace(-s.span_hz / 2.0, s.span_hz / 2.0, s.points) {
        let g = device::reflection_at_detuning(TWO_PI * d, &params);
        let f = cfg.device.resonance_max_hz + d;
        writeln!(csv, "{f},{d},{},{},{},{}", g.re, g.im, g.norm(), g.arg()).unwrap();
    }
    out.write("reflection.csv", csv.as_bytes())?;
    let g0 = device::reflection_at_detuning(0.0, &params);
    Ok(json!({ "gamma_at_resonance": [g0.re, g0.im] }))
}

fn gain_map(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Value, ScenarioError> {
    let params = cfg.device_params();
    let pump = cfg.pump_config();
    let m = &cfg.run.gain_map;
    let mut csv = String::from("pump_hz,power_dbm,g0,bandwidth_hz\n");
    for fp in linspace(m.pump_min_hz, m.pump_max_hz, m.pump_points) {
        for p in linspace(m.power_min_dbm, m.power_max_dbm, m.power_points) {
            let prof = gain_profile(&pump.with_frequency(TWO_PI * fp).with_power(p), &params)?;
            writeln!(csv, "{fp},{p},{},{}", prof.g0, prof.bandwidth / TWO_PI).unwrap();
        }
    }
    out.write("gain_map.csv", csv.as_bytes())?;

    let working = gain_profile(&pump, &params)?;
    let half = 4.0 * working.bandwidth;
    let mut curve = String::from("detuning_hz,gain\n");
    for d in linspace(-half, half, 401) {
        writeln!(curve, "{},{}", d / TWO_PI, working.gain(d)).unwrap();
    }
    out.write("gain_profile.csv", curve.as_bytes())?;
    Ok(json!({
        "g0": working.g0,
        "bandwidth_hz": working.bandwidth / TWO_PI,
        "sqrt_g0_times_bandwidth_hz": working.g0.sqrt() * working.bandwidth / TWO_PI,
    }))
}

fn psd(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Value, ScenarioError> {
    let profile = gain_profile(&cfg.pump_config(), &cfg.device_params())?;
    let n_noise = cfg.detection.n_noise;
    let s = &cfg.run.psd;
    let noise = Normal::new(0.0, s.noise_sigma)
        .map_err(|e| ScenarioError::Config(format!("run.psd.noise_sigma: {e}")))?;
    let mut rng = chunk_rng(derive_seed(cfg.run.seed, 3), 0);
    let samples: Vec<(f64, f64, f64)> = linspace(-s.span_hz / 2.0, s.span_hz / 2.0, s.points)
        .map(|d| {
            let model = profile.psd(TWO_PI * d, n_noise);
            (d, model, model + noise.sample(&mut rng))
        })
        .collect();
    let fit = fit_psd(
        &samples
            .iter()
            .map(|&(d, _, m)| (TWO_PI * d, m))
            .collect::<Vec<_>>(),
    )?;
    let fitted = device::GainProfile::new(fit.g0, fit.bandwidth, profile.omega_p)?;
    let mut csv = String::from("detuning_hz,psd_model,psd_measured,psd_fit\n");
    for &(d, model, meas) in &samples {
        let f = fitted.psd(TWO_PI * d, fit.n_noise);
        writeln!(csv, "{d},{model},{meas},{f}").unwrap();
    }
    out.write("psd.csv", csv.as_bytes())?;
    let report = json!({
        "truth": {
            "g0": profile.g0,
            "bandwidth_hz": profile.bandwidth / TWO_PI,
            "n_noise": n_noise,
        },
        "fit": {
            "g0": fit.g0,
            "bandwidth_hz": fit.bandwidth / TWO_PI,
            "n_noise": fit.n_noise,
            "std_errors": fit.std_errors.map(|e| json!({
                "g0": e[0],
                "bandwidth_hz": e[1] / TWO_PI,
                "n_noise": e[2],
            })),
            "residual_rms": fit.residual_rms,
            "iterations": fit.iterations,
        },
    });
    out.write_json("psd_fit.json", &report)?;
    Ok(report)
}

/// Signal state described by the configured source.
pub fn source_state(cfg: &ExperimentConfig) -> Result<GaussianState, Error> {
    match cfg.run.source {
        StateSource::Tms { r, n_add } => GaussianState::two_mode_squeezed(r, n_add),
        StateSource::Device { input_thermal } => {
            let profile = gain_profile(&cfg.pump_config(), &cfg.device_params())?;
            let filter = design_filter(&cfg.filter_design())?;
            output_two_mode_state(&profile, &filter, input_thermal)
        }
        src @ StateSource::Distorted { .. } => distorted_state(&src),
    }
}

fn row_major(m: &MomentSet) -> Vec<f64> {
    m.cov.iter().flatten().copied().collect()
}

fn tomography_run(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Value, ScenarioError> {
    let truth = source_state(cfg)?;
    let filter = design_filter(&cfg.filter_design())?;
    let profile = gain_profile(&cfg.pump_config(), &cfg.device_params())?;
    let device_r = predicted_r(&filter, &profile)?;

    let n = usize::try_from(cfg.run.n_records)
        .map_err(|_| ScenarioError::Config("run.n_records too large".into()))?;
    let exp = tomography::run_experiment(
        &truth,
        &cfg.detection_config(),
        n,
        cfg.run.seed,
        &cfg.run.binning,
    )?;
    let est = &exp.estimate;
    let rec = tomography::reconstruct(
        &est.state,
        &cfg.run.wigner,
        est.scale_factors,
        est.n_records,
    )?;

    out.write_json("tomography.json", &rec.result)?;
    out.write_json(
        "moments.json",
        &json!({
            "calibrated_pump_on": row_major(&est.moments_on),
            "calibrated_pump_off": row_major(&est.moments_off),
            "streaming_pump_on_raw": row_major(&exp.on.streaming.moment_set()),
            "streaming_pump_off_raw": row_major(&exp.off.streaming.moment_set()),
            "source_v": truth.cov().transpose().iter().copied().collect::<Vec<_>>(),
        }),
    )?;
    for map in &rec.marginals {
        let mut buf = Vec::new();
        map.write_csv(&mut buf).expect("write to memory");
        out.write(&format!("wigner_{}.csv", map.name), &buf)?;
    }

    let mut envelopes: Vec<Value> = Vec::new();
    for (label, acq) in [("on", &exp.on), ("off", &exp.off)] {
        for (h, &(a, b)) in acq.histograms.histograms().iter().zip(PAIRS.iter()) {
            let mut buf = Vec::new();
            h.write_csv(&mut buf).expect("write to memory");
            out.write(
                &format!("histograms/pump_{label}_{}.csv", pair_name(a, b)),
                &buf,
            )?;
            let env: HistogramJson = h.to_json();
            envelopes.push(json!({ "pump": label, "histogram": env }));
        }
    }
    let compact = serde_json::to_string(&envelopes).expect("histograms serialize") + "\n";
    out.write("histograms.json", compact.as_bytes())?;

    Ok(json!({
        "r_fit": rec.result.r_fit,
        "r_fit_pure": rec.result.r_fit_pure,
        "n_add_fit": rec.result.n_add_fit,
        "witness_d": rec.result.witness_d,
        "scale_factors": rec.result.scale_factors,
        "n_records": rec.result.n_records,
        "predicted_r_device": device_r,
    }))
}

fn pair_name(a: Quadrature, b: Quadrature) -> String {
    format!("{}_{}", a.label(), b.label()).to_lowercase()
}
