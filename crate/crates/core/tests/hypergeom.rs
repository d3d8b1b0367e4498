use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use proptest::prelude::*;
use tricomi_core::hypergeom::{cut_boundary, kummer_m, tricomi_u, tricomi_u_integral};
use tricomi_core::{Complex64, Error, ShapeParams};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact partial sum of the Kummer series in rationals.
fn kummer_rational(a: BigRational, b: BigRational, z: BigRational, terms: usize) -> f64 {
    let mut sum = BigRational::one();
    let mut term = BigRational::one();
    for k in 0..terms {
        let kq = ratio(k as i64, 1);
        term = term * (&a + &kq) / ((&b + &kq) * (&kq + BigRational::one())) * &z;
        sum += &term;
    }
    sum.to_f64().unwrap()
}

#[test]
fn kummer_against_exact_rational_series() {
    let cases = [
        (3, 10, 3, 2, 1, 1),
        (3, 10, 3, 2, -3, 1),
        (7, 10, 17, 10, 5, 2),
        (1, 4, 9, 8, -15, 2),
    ];
    for (an, ad, bn, bd, zn, zd) in cases {
        let want = kummer_rational(ratio(an, ad), ratio(bn, bd), ratio(zn, zd), 120);
        let a = an as f64 / ad as f64;
        let b = bn as f64 / bd as f64;
        let z = zn as f64 / zd as f64;
        let got = kummer_m(a, b, c(z, 0.0)).unwrap();
        assert!(
            ((got.re - want) / want).abs() < 1e-13,
            "M({a},{b},{z}) = {} vs {want}",
            got.re
        );
        assert_eq!(got.im, 0.0);
    }
}

#[test]
fn tricomi_against_mpmath() {
    // mpmath hyperu at 30 digits
    let refs = [
        (0.35, 1.7, c(0.01, 0.0), c(13.7384906507017473, 0.0)),
        (
            0.35,
            1.7,
            c(1.0, 1.0),
            c(0.890043435576653571, -0.292562667014034725),
        ),
        (
            0.35,
            1.7,
            c(5.0, 3.0),
            c(0.538057865538622305, -0.10832060865867658),
        ),
        (
            0.35,
            1.7,
            c(-5.0, 3.0),
            c(0.319415895056282364, -0.422341384331636367),
        ),
        (
            0.35,
            1.7,
            c(-20.0, 0.5),
            c(0.160750138267543214, -0.308903717180227941),
        ),
        (
            0.8,
            1.3,
            c(30.0, -20.0),
            c(0.0503294490998510519, 0.0252217741394465492),
        ),
        (
            0.8,
            1.3,
            c(-3.0, -0.01),
            c(-0.379928361431592746, 0.330598114513862238),
        ),
        (
            0.2,
            1.9,
            c(100.0, 50.0),
            c(0.388062971534372208, -0.0363067286174957931),
        ),
        (
            0.6,
            1.1,
            c(-1.5, 0.2),
            c(-0.0255861109740996523, -0.920880407953630047),
        ),
        (0.45, 1.55, c(10.0, 0.0), c(0.35631897977222141, 0.0)),
        (
            0.9,
            1.25,
            c(-40.0, 0.001),
            c(-0.0349073749003823135, -0.0113429770971294482),
        ),
    ];
    for (a, b, z, want) in refs {
        let got = tricomi_u(&ShapeParams::unit(a, b).unwrap(), z).unwrap();
        assert!(rel(got, want) < 1e-12, "U({a},{b},{z}) = {got} vs {want}");
    }
    // b one guard-width from an integer: the connection formula loses about six digits
    let got = tricomi_u(&ShapeParams::unit(0.3, 1.000001).unwrap(), c(0.5, 0.3)).unwrap();
    assert!(rel(got, c(1.07451372127159447, -0.142528272373892947)) < 1e-8);
}

#[test]
fn integer_b_is_a_conditioning_error_where_connection_is_needed() {
    let p = ShapeParams::unit(0.4, 1.0000001).unwrap();
    assert!(matches!(
        tricomi_u(&p, c(-1.0, 0.5)),
        Err(Error::Conditioning(_))
    ));
    assert!(matches!(cut_boundary(&p, 1.0), Err(Error::Conditioning(_))));
}

#[test]
fn debye_exact_everywhere() {
    let p = ShapeParams::unit(1.0, 2.0).unwrap();
    for z in [
        c(1e-4, 0.0),
        c(3.0, -7.0),
        c(-10.0, 1e-3),
        c(-1e3, -1.0),
        c(0.0, 1e-6),
    ] {
        assert!(rel(tricomi_u(&p, z).unwrap(), z.inv()) < 1e-14);
    }
}

fn shape() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..0.95, 1.05f64..1.95)
}

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.log10()..hi.log10()).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn matches_integral_on_positive_axis((a, b) in shape(), z in log_uniform(1e-3, 1e3)) {
        let p = ShapeParams::unit(a, b).unwrap();
        let want = tricomi_u_integral(&p, z).unwrap();
        let got = tricomi_u(&p, c(z, 0.0)).unwrap();
        prop_assert!(((got.re - want) / want).abs() < 1e-8, "U({a},{b},{z}) = {} vs {want}", got.re);
        prop_assert!(got.im.abs() <= 1e-14 * got.re.abs());
    }

    #[test]
    fn exact_subfamily(a in 0.05f64..0.95, r in log_uniform(1e-3, 1e3), phi in -3.1f64..3.1) {
        let z = Complex64::from_polar(r, phi);
        let p = ShapeParams::unit(a, a + 1.0).unwrap();
        let want = (-a * z.ln()).exp();
        prop_assert!(rel(tricomi_u(&p, z).unwrap(), want) < 1e-10);
        let p2 = ShapeParams::unit(a, a + 2.0).unwrap();
        let want2 = want * (c(1.0, 0.0) + z.inv() * a);
        prop_assert!(rel(tricomi_u(&p2, z).unwrap(), want2) < 1e-10);
    }

    #[test]
    fn cut_limit_from_above((a, b) in shape(), x in log_uniform(1e-2, 1e2)) {
        let p = ShapeParams::unit(a, b).unwrap();
        let cb = cut_boundary(&p, x).unwrap();
        let near = tricomi_u(&p, c(-x, 1e-9 * x)).unwrap();
        prop_assert!(rel(near, cb.value()) < 1e-4, "x = {x}: {near} vs {}", cb.value());
        prop_assert!(cb.im < 0.0);
    }

    #[test]
    fn satisfies_kummer_equation((a, b) in shape(), r in log_uniform(1e-2, 1e2), phi in -2.8f64..2.8) {
        let p = ShapeParams::unit(a, b).unwrap();
        let z = Complex64::from_polar(r, phi);
        let h = z * 5e-4;
        let w0 = tricomi_u(&p, z).unwrap();
        let wp = tricomi_u(&p, z + h).unwrap();
        let wm = tricomi_u(&p, z - h).unwrap();
        let d1 = (wp - wm) / (h * 2.0);
        let d2 = (wp - w0 * 2.0 + wm) / (h * h);
        let terms = [z * d2, (c(b, 0.0) - z) * d1, w0 * a];
        let scale = terms.iter().map(|t| t.norm()).fold(0.0, f64::max);
        let resid = terms[0] + terms[1] - terms[2];
        prop_assert!(resid.norm() < 1e-6 * scale, "a={a} b={b} z={z} residual {} scale {scale}", resid.norm());
    }
}
