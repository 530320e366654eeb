use jpa_web::{gain_curve_data, tomography_data, wigner_grid};

#[test]
fn gain_curve_at_working_point() {
    let c = gain_curve_data(-80.8, 69.0, 201).unwrap();
    assert!((c.g0 - 144.0).abs() < 1e-9);
    assert!((c.bandwidth_hz - 25e6 / 12.0).abs() < 1e-3);
    assert_eq!(c.gain.len(), 201);
    // centre sample sits on the pump
    assert!((c.gain[100] - 144.0).abs() < 1e-9);
    assert!((c.psd[100] - (143.0 + 69.0)).abs() < 1e-9);
    assert!(gain_curve_data(-80.0, 69.0, 201).is_err());
}

#[test]
fn wigner_vacuum_peak() {
    let g = wigner_grid(0.0, 0.0, "x1p1", 1.0, 3).unwrap();
    assert!((g[4] - 2.0 / std::f64::consts::PI).abs() < 1e-12);
    assert!(wigner_grid(0.5, 0.0, "x1x1", 1.0, 3).is_err());
    assert!(wigner_grid(0.5, 0.0, "q1x2", 1.0, 3).is_err());
}

#[test]
fn small_tomography_run() {
    let d = tomography_data(1.0, 0.2, 5.0, 200_000, 3).unwrap();
    assert!((d.result.r_fit - 1.0).abs() < 0.05);
    assert_eq!(d.truth_v.len(), 16);
    assert!(tomography_data(1.0, 0.0, 5.0, 10, 3).is_err());
}
