mod common;

use common::{cole_cole, laplace_log, talbot};
use proptest::prelude::*;
use tricomi_core::bounded_model::{f_bounded, AnchoredParams};
use tricomi_core::hypergeom::{tricomi_u, tricomi_u_integral};
use tricomi_core::kernel::{
    anchored_impulse, anchored_step, impulse_response_f, step_response_g, tricomi_kernel, TimeGrid,
};
use tricomi_core::spectral::{build_density, SpectralDensity};
use tricomi_core::{Complex64, ShapeParams};

fn cc_density() -> SpectralDensity {
    build_density(&ShapeParams::unit(0.5, 1.5).unwrap(), (1e-2, 1e2), 40).unwrap()
}

#[test]
fn talbot_oracle_self_check() {
    // 1/(s+1) <-> e^{-t}; Cole–Cole a = 0.5 at t = 1 from mpmath erfc
    for t in [0.1, 1.0, 5.0] {
        let got = talbot(|s| (s + 1.0).inv(), t, 32);
        assert!((got - (-t).exp()).abs() < 1e-10);
    }
    // 1/sqrt(pi t) - e^t erfc(sqrt t) and 1 - e^t erfc(sqrt t)
    let got = talbot(cole_cole(0.5), 1.0, 32);
    assert!((got - 0.136_606_007_391_949_28).abs() < 1e-9, "{got}");
    let got = talbot(|s| cole_cole(0.5)(s) / s, 1.0, 32);
    assert!((got - 0.572_416_423_844_193).abs() < 1e-9, "{got}");
}

#[test]
fn tricomi_kernel_laplace_consistency() {
    for (a, b, tau) in [
        (0.5, 1.5, 1.0),
        (0.35, 1.7, 1.0),
        (0.8, 1.2, 2.5),
        (1.0, 2.0, 0.3),
    ] {
        let p = ShapeParams::new(a, b, tau).unwrap();
        let k = |t: f64| tricomi_kernel(&p, t).unwrap();
        // head below t0 from the leading power law
        let t0 = 1e-12 * tau;
        let head = tricomi_core::special::rgamma(a) * (t0 / tau).powf(a) / a;
        let got = head + laplace_log(k, 1.0, t0, 80.0, 20000);
        let want = tricomi_u_integral(&p, tau).unwrap();
        let also = tricomi_u(&p, Complex64::new(tau, 0.0)).unwrap().re;
        assert!(((want - also) / want).abs() < 1e-12);
        assert!(
            ((got - want) / want).abs() < 1e-6,
            "a={a} b={b}: {got} vs {want}"
        );
    }
}

#[test]
fn impulse_matches_talbot_oracle() {
    let d = cc_density();
    for t in [0.1, 1.0, 10.0] {
        let f = impulse_response_f(&d, 1.0, t).unwrap();
        let want = talbot(cole_cole(0.5), t, 32);
        assert!(
            ((f.value - want) / want).abs() < 1e-4,
            "t={t}: {} vs {want}",
            f.value
        );
        assert!(!f.warning);
    }
}

#[test]
fn impulse_laplace_round_trip() {
    let d = cc_density();
    let p = d.params;
    for i in 0..10 {
        let s = 10f64.powf(-1.0 + 2.0 * i as f64 / 9.0);
        let f = |t: f64| impulse_response_f(&d, 1.0, t).unwrap().value;
        let t0 = 1e-10;
        let head = step_response_g(&d, 1.0, t0).unwrap().value;
        let got = head + laplace_log(f, s, t0, 60.0 / s, 3000);
        let want = f_bounded(&p, Complex64::new(s, 0.0)).unwrap().re;
        assert!(((got - want) / want).abs() < 1e-4, "s={s}: {got} vs {want}");
    }
}

#[test]
fn step_limits_and_derivative() {
    let d = cc_density();
    assert_eq!(step_response_g(&d, 1.0, 0.0).unwrap().value, 0.0);
    assert!((step_response_g(&d, 1.0, 1e14).unwrap().value - 1.0).abs() < 1e-5);
    let h = 1e-4;
    let dg = (step_response_g(&d, 1.0, 1.0 + h).unwrap().value
        - step_response_g(&d, 1.0, 1.0 - h).unwrap().value)
        / (2.0 * h);
    let f = impulse_response_f(&d, 1.0, 1.0).unwrap().value;
    assert!(((dg - f) / f).abs() < 1e-3);
    let want = talbot(|s| cole_cole(0.5)(s) / s, 1.0, 32);
    let g = step_response_g(&d, 1.0, 1.0).unwrap().value;
    assert!((g - want).abs() < 1e-4, "{g} vs {want}");
}

#[test]
fn anchored_responses() {
    let d = cc_density();
    let an = AnchoredParams::new(2.0, 1.0, d.params).unwrap();
    let imp = anchored_impulse(&an, &d, 1.0).unwrap();
    assert_eq!(imp.direct, 1.0);
    let f = impulse_response_f(&d, 1.0, 1.0).unwrap().value;
    assert!((imp.smooth - f).abs() < 1e-15);
    let want = talbot(|s| (cole_cole(0.5)(s) + 1.0) / s, 1.0, 32);
    let got = anchored_step(&an, &d, 1.0).unwrap().value;
    assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    assert!((anchored_step(&an, &d, 1e14).unwrap().value - 2.0).abs() < 1e-5);
    assert!((anchored_step(&an, &d, 1e-14).unwrap().value - 1.0).abs() < 1e-5);
    assert!(anchored_step(&an, &d, 0.0).is_err());
}

#[test]
fn rejects_bad_inputs() {
    let d = cc_density();
    assert!(impulse_response_f(&d, 1.0, 0.0).is_err());
    assert!(impulse_response_f(&d, -1.0, 1.0).is_err());
    assert!(step_response_g(&d, 1.0, -1.0).is_err());
    assert!(step_response_g(&d, 1.0, f64::NAN).is_err());
}

/// `(-1)^k` times the `k`-th divided difference, normalised by its largest
/// magnitude over the grid, must not be negative beyond roundoff.
fn check_cm(t: &[f64], f: &[f64]) -> std::result::Result<(), String> {
    let mut dd = f.to_vec();
    for k in 1..=3 {
        dd = (0..dd.len() - 1)
            .map(|i| (dd[i + 1] - dd[i]) / (t[i + k] - t[i]))
            .collect();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let scale = dd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(v) = dd.iter().find(|v| sign * **v < -1e-9 * scale) {
            return Err(format!("order {k}: {v}"));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn f_nonnegative_and_completely_monotone(a in 0.1f64..0.95, b in 1.05f64..1.95) {
        let p = ShapeParams::unit(a, b).unwrap();
        let d = build_density(&p, (1e-2, 1e2), 40).unwrap();
        let grid = TimeGrid::log_spaced(1e-3, 1e3, 10).unwrap();
        let f: Vec<f64> = grid.t().iter().map(|t| impulse_response_f(&d, 1.0, *t).unwrap().value).collect();
        prop_assert!(f.iter().all(|v| *v >= 0.0));
        prop_assert!(check_cm(grid.t(), &f).is_ok(), "{:?}", check_cm(grid.t(), &f));
        let k: Vec<f64> = grid.t().iter().map(|t| tricomi_kernel(&p, *t).unwrap()).collect();
        prop_assert!(k.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn step_monotone_and_bounded(a in 0.1f64..0.95, b in 1.05f64..1.95, h0 in 1.0f64..5.0) {
        let p = ShapeParams::unit(a, b).unwrap();
        let d = build_density(&p, (1e-2, 1e2), 40).unwrap();
        let an = AnchoredParams::new(h0, 0.5, p).unwrap();
        let grid = TimeGrid::log_spaced(1e-4, 1e4, 8).unwrap();
        let mut prev = 0.0;
        for t in grid.t() {
            let g = step_response_g(&d, 1.0, *t).unwrap().value;
            prop_assert!(g >= prev - 1e-14 && g <= 1.0 + 1e-9);
            prev = g;
            let s = anchored_step(&an, &d, *t).unwrap().value;
            prop_assert!(s >= 0.5 - 1e-9 && s <= h0 + 1e-9);
        }
    }
}
