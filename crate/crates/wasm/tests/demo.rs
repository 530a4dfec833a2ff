use flowridge_wasm::{heatmap, mp_curve, risk_curves};

#[test]
fn heatmap_layout_and_range() {
    let h = heatmap(1e-2, 10.0, 6, 0.1, 10.0, 4).unwrap();
    assert_eq!(h.len(), 6 + 4 + 2 * 24);
    let (flow, ridge) = h[10..].split_at(24);
    assert!(flow.iter().chain(ridge).all(|g| (0.0..=1.0).contains(g)));
    // flow gain 1 − e^{−ts} at s = 10, t = 10
    assert!((flow[23] - (1.0 - (-100.0f64).exp())).abs() < 1e-12);
    // ridge gain s/(s+λ) at s = 0.01, λ = 10
    assert!((ridge[0] - 0.01 / 10.01).abs() < 1e-12);
    assert!(heatmap(0.0, 1.0, 3, 1.0, 2.0, 3).is_err());
}

#[test]
fn risk_curves_track_their_limits() {
    let k = 30;
    let r = risk_curves("gaussian", 200, 100, 0.0, 4, 1.0, 1.0, "estimation", k).unwrap();
    assert_eq!(r.len(), 5 * k);
    for i in 0..k {
        assert!((r[k + i] - r[3 * k + i]).abs() < 0.05, "flow at {}", r[i]);
        assert!(
            (r[2 * k + i] - r[4 * k + i]).abs() < 0.05,
            "ridge at {}",
            r[i]
        );
    }
    let correlated = risk_curves("t3", 40, 30, 0.5, 1, 1.0, 1.0, "out-of-sample", k).unwrap();
    assert!(correlated[3 * k..].iter().all(|v| v.is_nan()));
    assert!(risk_curves("cauchy", 10, 10, 0.0, 0, 1.0, 1.0, "estimation", k).is_err());
}

#[test]
fn mp_curve_integrates_to_continuous_mass() {
    let m = 4001;
    let c = mp_curve(2.0, m).unwrap();
    let (a, b, mass0) = (c[0], c[1], c[2]);
    assert!((mass0 - 0.5).abs() < 1e-15);
    let h = (b - a) / (m - 1) as f64;
    let dens = &c[3 + m..];
    let integral: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum();
    assert!((integral - 0.5).abs() < 2e-3, "{integral}");
}
