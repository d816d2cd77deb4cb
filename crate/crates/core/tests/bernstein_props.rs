mod common;

use chaser_core::bernstein::{rational_range_check, PolySegment};
use common::{bern_eval, time_grid};
use proptest::prelude::*;

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, 1..=13)
}

fn poly() -> impl Strategy<Value = PolySegment> {
    (coeffs(), 0.2..5.0f64).prop_map(|(c, t)| PolySegment::new(&c, t).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn endpoints_interpolate(p in poly()) {
        let c = p.coeffs();
        let tol = 1e-15 * c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!((p.evaluate(0.0).unwrap() - c[0]).abs() <= tol);
        prop_assert!((p.evaluate(p.horizon()).unwrap() - c[c.len() - 1]).abs() <= tol);
    }

    #[test]
    fn values_stay_in_coefficient_hull(p in poly()) {
        let (lo, hi) = (p.min_coeff(), p.max_coeff());
        for t in time_grid(p.horizon(), 1000) {
            let v = p.value_at(t);
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn nonnegative_certificate_is_sound(c in prop::collection::vec(-1.0..10.0f64, 1..=13), t in 0.2..5.0f64) {
        let p = PolySegment::new(&c, t).unwrap();
        if p.prove_nonnegative().is_proved() {
            let min = time_grid(t, 1000).map(|s| bern_eval(&c, t, s)).fold(f64::INFINITY, f64::min);
            prop_assert!(min >= -1e-6);
        }
    }

    #[test]
    fn rational_range_certificate_is_sound(
        num in prop::collection::vec(-5.0..5.0f64, 7),
        den in prop::collection::vec(0.0..5.0f64, 7),
        lo in -3.0..0.0f64,
        width in 0.0..6.0f64,
    ) {
        let n = PolySegment::new(&num, 1.0).unwrap();
        let d = PolySegment::new(&den, 1.0).unwrap();
        let hi = lo + width;
        if rational_range_check(&n, &d, lo, hi).unwrap().is_proved() {
            for t in time_grid(1.0, 1000) {
                let dv = bern_eval(&den, 1.0, t);
                if dv > 1e-9 {
                    let r = bern_eval(&num, 1.0, t) / dv;
                    prop_assert!(r >= lo - 1e-6 && r <= hi + 1e-6);
                }
            }
        }
    }

    #[test]
    fn product_commutes_and_splits_agree(p in poly(), q in coeffs(), s in 0.05..0.95f64) {
        let q = PolySegment::new(&q, p.horizon()).unwrap();
        let a = p.multiply(&q).unwrap();
        let b = q.multiply(&p).unwrap();
        let scale = a.coeffs().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
        let cut = s * p.horizon();
        let (l, r) = a.split_at(cut).unwrap();
        prop_assert!((l.value_at(cut) - r.value_at(0.0)).abs() <= 1e-9 * scale);
        prop_assert!((l.definite_integral() + r.definite_integral() - a.definite_integral()).abs() <= 1e-9 * scale * p.horizon());
    }
}
