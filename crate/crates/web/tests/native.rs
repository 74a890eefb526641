use relayfb_web::{capacity_curve_native, phase_curves_native, simulate_native};

#[test]
fn phase_curves_layout_and_values() {
    let curves = phase_curves_native(&[0.0, 0.5, 1.0], 1, 11).unwrap();
    assert_eq!(curves.len(), 33);
    // every curve passes through 1.5 at p = 0.5
    for k in 0..3 {
        assert!((curves[k * 11 + 5] - 1.5).abs() < 1e-12);
    }
    assert!((curves[0] - 2.0).abs() < 1e-12);
    assert!((curves[10] - 1.0).abs() < 1e-12);
    assert!((curves[32] - 2.0).abs() < 1e-12);
}

#[test]
fn phase_curves_many_relays() {
    let curves = phase_curves_native(&[0.3], 4, 3).unwrap();
    assert!((curves[1] - (2.0 - 0.5f64.powi(4))).abs() < 1e-12);
    assert!(phase_curves_native(&[1.2], 1, 5).is_err());
    assert!(phase_curves_native(&[0.2], 1, 1).is_err());
}

#[test]
fn capacity_curve_grows_with_snr() {
    let rates = capacity_curve_native("df", 0.01, 0.9, -10.0, 10.0, 5).unwrap();
    assert_eq!(rates.len(), 5);
    assert!(rates.windows(2).all(|w| w[1] > w[0]));
    let baf = capacity_curve_native("baf", 0.01, 0.9, -10.0, 10.0, 5).unwrap();
    assert!(baf.iter().zip(&rates).all(|(b, d)| b >= d));
}

#[test]
fn capacity_curve_rejects_bad_input() {
    assert!(capacity_curve_native("xf", 0.01, 0.9, 0.0, 1.0, 3).is_err());
    assert!(capacity_curve_native("df", 1.0, 0.9, 0.0, 1.0, 3).is_err());
    assert!(capacity_curve_native("df", 0.1, 1.5, 0.0, 1.0, 3).is_err());
}

#[test]
fn simulate_matches_closed_form() {
    let out = simulate_native(1, "df", 0.0, 0.5, 0.8, 400_000, 3).unwrap();
    let [mean, se, outage, _, closed] = out[..] else {
        panic!()
    };
    assert!((mean - closed).abs() <= 4.0 * se);
    assert!((0.0..=1.0).contains(&outage));
    assert_eq!(
        out,
        simulate_native(1, "df", 0.0, 0.5, 0.8, 400_000, 3).unwrap()
    );
    assert!(simulate_native(3, "af", 0.0, 0.5, 0.8, 1000, 3).unwrap()[4].is_nan());
}

#[test]
fn simulate_rejects_bad_input() {
    assert!(simulate_native(1, "df", 0.0, 0.5, 0.8, 0, 3).is_err());
    assert!(simulate_native(1, "df", 0.0, 0.5, 0.8, 10_000_000, 3).is_err());
    assert!(simulate_native(1, "zz", 0.0, 0.5, 0.8, 10, 3).is_err());
}
