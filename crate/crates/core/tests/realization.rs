mod common;

use common::{cole_cole, laplace_log, talbot};
use proptest::prelude::*;
use tricomi_core::bounded_model::{f_bounded, AnchoredParams};
use tricomi_core::kernel::{step_response_g, TimeGrid};
use tricomi_core::realization::{
    convergence_study, eval_foster, gauss_stieltjes, simulate_step, to_state_space, FosterModel,
};
use tricomi_core::spectral::{build_density, SpectralDensity};
use tricomi_core::{Complex64, Error, ShapeParams};

fn density(a: f64, b: f64) -> SpectralDensity {
    build_density(&ShapeParams::unit(a, b).unwrap(), (1e-2, 1e2), 40).unwrap()
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn single_node_is_log_mean() {
    let d = density(0.35, 1.7);
    let m = gauss_stieltjes(&d, 1).unwrap();
    let dm = d.discrete_measure();
    let mean: f64 = dm.u.iter().zip(&dm.mass).map(|(u, w)| u * w).sum();
    assert_eq!(m.order(), 1);
    assert!((m.nodes[0].ln() - mean).abs() < 1e-12);
    assert!((m.weights[0] - 1.0).abs() < 1e-15);
}

#[test]
fn cole_cole_values() {
    let d = density(0.5, 1.5);
    let m15 = gauss_stieltjes(&d, 15).unwrap();
    assert!((eval_foster(&m15, Complex64::new(1.0, 0.0)).unwrap().re - 0.5).abs() < 1e-3);
    assert!((m15.weight_sum() - 1.0).abs() < 1e-10);
    let m45 = gauss_stieltjes(&d, 45).unwrap();
    let j = Complex64::new(0.0, 1.0);
    assert!(
        rel(
            eval_foster(&m45, j).unwrap(),
            f_bounded(&d.params, j).unwrap()
        ) < 1e-3
    );
    assert_eq!(
        eval_foster(&m45, Complex64::new(0.0, 0.0)).unwrap().re,
        m45.weight_sum()
    );
}

#[test]
fn order_limits() {
    let d = density(0.5, 1.5);
    assert!(matches!(gauss_stieltjes(&d, 0), Err(Error::Domain(_))));
    assert!(matches!(
        gauss_stieltjes(&d, d.len() / 4 + 1),
        Err(Error::Domain(_))
    ));
}

#[test]
fn gauss_exactness_in_log_rate() {
    let d = density(0.35, 1.7);
    let dm = d.discrete_measure();
    for m in [3, 5, 10] {
        let g = gauss_stieltjes(&d, m).unwrap();
        for k in 0..=5i32 {
            let grid: f64 = dm.u.iter().zip(&dm.mass).map(|(u, w)| w * u.powi(k)).sum();
            let scale: f64 =
                dm.u.iter()
                    .zip(&dm.mass)
                    .map(|(u, w)| w * u.abs().powi(k))
                    .sum();
            let gq: f64 = g
                .nodes
                .iter()
                .zip(&g.weights)
                .map(|(x, w)| w * x.ln().powi(k))
                .sum();
            assert!(
                (gq - grid).abs() <= 1e-8 * scale,
                "M={m} k={k}: {gq} vs {grid}"
            );
        }
    }
}

#[test]
fn state_space_equivalence() {
    let d = density(0.7, 1.7);
    let m = gauss_stieltjes(&d, 15).unwrap();
    let tau = 3e-3;
    let ss = to_state_space(&m, tau, None).unwrap();
    assert!(ss.lambda.iter().chain(&ss.r).all(|v| *v > 0.0));
    for i in 0..10 {
        let s = Complex64::from_polar(10f64.powf(-1.0 + 0.7 * i as f64), -1.5 + 0.33 * i as f64);
        let want = eval_foster(&m, s * tau).unwrap();
        assert!((ss.transfer(s) - want).norm() <= 1e-12);
    }
    let an = AnchoredParams::new(3.0, 0.5, d.params).unwrap();
    let ssa = to_state_space(&m, 1.0, Some(&an)).unwrap();
    assert_eq!(ssa.d, 0.5);
    assert!((ssa.transfer(Complex64::new(1e15, 0.0)).re - 0.5).abs() < 1e-9);
    assert!((ssa.transfer(Complex64::new(0.0, 0.0)).re - 3.0).abs() < 1e-10);
    let debye = FosterModel::new(vec![1.0], vec![1.0]).unwrap();
    assert_eq!(to_state_space(&debye, 2.0, None).unwrap().lambda, vec![0.5]);
    assert!(to_state_space(&debye, 0.0, None).is_err());
}

#[test]
fn simulated_step() {
    let d = density(0.5, 1.5);
    let m = gauss_stieltjes(&d, 45).unwrap();
    let ss = to_state_space(&m, 1.0, None).unwrap();
    let grid = TimeGrid::new(vec![1e-300, 1.0, 1e300]).unwrap();
    let y = simulate_step(&ss, &grid);
    assert!(y[0].abs() < 1e-250);
    assert!((y[2] - m.weight_sum()).abs() < 1e-14);
    let want = talbot(|s| cole_cole(0.5)(s) / s, 1.0, 32);
    assert!((y[1] - want).abs() < 2e-3, "{} vs {want}", y[1]);
    let g = step_response_g(&d, 1.0, 1.0).unwrap().value;
    assert!((y[1] - g).abs() < 2e-3);
}

#[test]
fn realised_step_laplace_round_trip() {
    let d = density(0.5, 1.5);
    let m = gauss_stieltjes(&d, 45).unwrap();
    let ss = to_state_space(&m, 1.0, None).unwrap();
    for i in 0..10 {
        let s = 10f64.powf(-1.0 + 2.0 * i as f64 / 9.0);
        let step = |t: f64| simulate_step(&ss, &TimeGrid::new(vec![t]).unwrap())[0];
        // L[f](s) = s L[g](s)
        let got = s * laplace_log(step, s, 1e-12, 60.0 / s, 4000);
        let want = f_bounded(&d.params, Complex64::new(s, 0.0)).unwrap().re;
        assert!(((got - want) / want).abs() < 1e-3, "s={s}: {got} vs {want}");
    }
}

#[test]
fn convergence_regimes() {
    let orders = [5, 15, 45];
    let band = (1e-2, 1e2);
    let moderate = AnchoredParams::new(2.0, 1.0, ShapeParams::unit(0.7, 1.7).unwrap()).unwrap();
    let long = AnchoredParams::new(2.0, 1.0, ShapeParams::unit(0.35, 1.7).unwrap()).unwrap();
    let rm = convergence_study(&moderate, band, &orders).unwrap();
    let rl = convergence_study(&long, band, &orders).unwrap();
    for r in [&rm, &rl] {
        let e: Vec<f64> = r.rows.iter().map(|x| x.max_rel_mag).collect();
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
        assert!(r
            .rows
            .iter()
            .all(|x| x.rms_rel_mag >= 0.0 && x.rms_rel_mag <= x.max_rel_mag));
        assert!(r.rows.iter().all(|x| x.max_phase_err >= 0.0));
    }
    assert!(rm.rows[2].max_rel_mag <= 1e-3, "{:?}", rm.rows[2]);
    assert!(rl.rows[2].max_rel_mag <= 1e-2, "{:?}", rl.rows[2]);
    assert!(rl.rows[0].max_rel_mag > rm.rows[0].max_rel_mag);
    let r5 = &rl.rows[0];
    assert!(r5.poles_in_band < r5.pole_freqs_hz.len());

    let mut buf = Vec::new();
    rm.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    let mut buf = Vec::new();
    rm.write_poles_csv(&mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap().lines().count(),
        1 + 5 + 15 + 45
    );
    assert!(convergence_study(&moderate, band, &[15, 5]).is_err());
}

#[test]
fn models_round_trip_json() {
    let m = gauss_stieltjes(&density(0.7, 1.7), 5).unwrap();
    let back: FosterModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn positive_passive_models(a in 0.05f64..0.95, b in 1.05f64..1.95, m in 1usize..46) {
        let d = density(a, b);
        let g = gauss_stieltjes(&d, m).unwrap();
        prop_assert!(g.nodes.iter().chain(&g.weights).all(|v| *v > 0.0));
        prop_assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
        prop_assert!((g.weight_sum() - 1.0).abs() <= 1e-10);
        for i in 0..=90 {
            let w = 10f64.powf(-4.5 + 0.1 * i as f64);
            prop_assert!(eval_foster(&g, Complex64::new(0.0, w)).unwrap().re >= 0.0);
        }
    }
}
