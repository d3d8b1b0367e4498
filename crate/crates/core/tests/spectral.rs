use std::f64::consts::PI;

use proptest::prelude::*;
use tricomi_core::bounded_model::f_bounded;
use tricomi_core::spectral::{build_density, rho_f, stieltjes_f, stieltjes_s};
use tricomi_core::{Complex64, ShapeParams};

fn cole_cole_rho(a: f64, x: f64) -> f64 {
    let xa = x.powf(a);
    xa * (PI * a).sin() / (PI * (1.0 + 2.0 * xa * (PI * a).cos() + xa * xa))
}

#[test]
fn cole_cole_closed_form() {
    for a in [0.3, 0.5, 0.8] {
        let p = ShapeParams::unit(a, a + 1.0).unwrap();
        for i in 0..100 {
            let x = 10f64.powf(-5.0 + 10.0 * i as f64 / 99.0);
            let got = rho_f(&p, x).unwrap();
            let want = cole_cole_rho(a, x);
            assert!(
                ((got - want) / want).abs() < 1e-8,
                "a={a} x={x}: {got} vs {want}"
            );
        }
        for x in [0.1, 0.5, 2.0, 10.0] {
            let r = rho_f(&p, x).unwrap() / rho_f(&p, 1.0 / x).unwrap();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn cole_cole_density_normalised_and_reconstructs() {
    let p = ShapeParams::unit(0.5, 1.5).unwrap();
    let d = build_density(&p, (1e-2, 1e2), 40).unwrap();
    assert!(d.norm_defect <= 1e-4);
    assert!(d.rho.iter().all(|r| *r >= 0.0));
    let s1 = stieltjes_s(&d, Complex64::new(1.0, 0.0)).unwrap();
    assert!((s1.re - 0.5).abs() < 1e-4 && s1.im.abs() < 1e-12);
    let z = Complex64::new(1.0, 1.0);
    let lhs = Complex64::new(1.0, 0.0) - z * stieltjes_s(&d, z).unwrap();
    assert!((lhs - f_bounded(&p, z).unwrap()).norm() <= 1e-4);
    // unit mass: z S(z) -> 1 as z -> inf
    let zinf = Complex64::new(1e12, 0.0);
    assert!(((zinf * stieltjes_s(&d, zinf).unwrap()).re - 1.0).abs() < 1e-8);
}

#[test]
fn longer_memory_has_broader_support() {
    let band = (1e-2, 1e2);
    let moderate = build_density(&ShapeParams::unit(0.7, 1.7).unwrap(), band, 40).unwrap();
    let long = build_density(&ShapeParams::unit(0.35, 1.7).unwrap(), band, 40).unwrap();
    let wm = moderate.interquantile_decades(0.05);
    let wl = long.interquantile_decades(0.05);
    assert!(wl > wm, "long {wl} vs moderate {wm}");
}

#[test]
fn tail_laws_beyond_band() {
    for (a, b) in [
        (0.35, 1.7),
        (0.7, 1.7),
        (0.5, 1.3),
        (0.8, 1.6),
        (0.2, 1.45),
        (0.05, 1.5),
    ] {
        let p = ShapeParams::unit(a, b).unwrap();
        let slope = |x: f64| {
            let h = 1.01;
            (rho_f(&p, x * h).unwrap() / rho_f(&p, x / h).unwrap()).ln() / (2.0 * h.ln())
        };
        // one decade beyond each edge of the density window for [1e-2, 1e2] Hz
        let d = build_density(&p, (1e-2, 1e2), 40).unwrap();
        let lf = slope(d.window[0].exp() / 10.0);
        let hf = slope(d.window[1].exp() * 10.0);
        assert!((lf - (b - 1.0)).abs() <= 0.05, "a={a} b={b} lf slope {lf}");
        assert!((hf + a).abs() <= 0.05, "a={a} b={b} hf slope {hf}");
    }
}

#[test]
fn reconstruction_on_axis() {
    let draws = [
        (0.7, 1.7),
        (0.35, 1.7),
        (0.5, 1.2),
        (0.85, 1.9),
        (0.2, 1.45),
    ];
    for (a, b) in draws {
        let p = ShapeParams::unit(a, b).unwrap();
        let d = build_density(&p, (1e-2, 1e2), 40).unwrap();
        for i in 0..20 {
            let w = 2.0 * PI * 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0);
            let z = Complex64::new(0.0, w);
            let want = f_bounded(&p, z).unwrap();
            let got = stieltjes_f(&d, z).unwrap();
            assert!(
                (got - want).norm() / want.norm() <= 1e-4,
                "a={a} b={b} w={w}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn density_nonnegative(a in 0.01f64..0.99, b in 1.001f64..1.999) {
        let p = ShapeParams::unit(a, b).unwrap();
        for i in 0..200 {
            let x = 10f64.powf(-8.0 + 16.0 * i as f64 / 199.0);
            prop_assert!(rho_f(&p, x).unwrap() >= 0.0);
        }
    }

    #[test]
    fn built_densities_normalised(a in 0.05f64..0.95, b in 1.0002f64..1.95) {
        let p = ShapeParams::unit(a, b).unwrap();
        let d = build_density(&p, (1e-2, 1e2), 40).unwrap();
        prop_assert!(d.norm_defect <= 1e-4, "defect {}", d.norm_defect);
        prop_assert!(d.rho.iter().all(|r| *r >= 0.0));
    }
}
