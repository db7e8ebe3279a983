use cgolab::kato::*;
use cgolab::Error;
use proptest::prelude::*;
use std::f64::consts::PI;

fn bump() -> PotentialSpec {
    PotentialSpec::bump(1.0, 0.5, [0.1, 0.0, -0.05])
}

#[test]
fn ball_indicator_norm_is_two_pi() {
    let r = kato_norm(&PotentialSpec::ball_indicator(1.0), &KatoOptions::default()).unwrap();
    assert!((r.norm - 2.0 * PI).abs() < 0.02 * 2.0 * PI, "{}", r.norm);
    assert!(r.argmax.iter().all(|c| c.abs() < 0.1), "{:?}", r.argmax);
    // Seen from the centre, B(0,1) within radius r contributes 2 pi r^2.
    for &(rad, eta) in &r.modulus {
        assert!((eta - 2.0 * PI * rad * rad).abs() < 0.02 * 2.0 * PI * rad * rad, "{rad} {eta}");
    }
}

#[test]
fn off_centre_value_matches_closed_form() {
    // int_{B(0,1)} dy / |x - y| = 2 pi - (2 pi / 3) |x|^2 for |x| < 1.
    let b = PotentialSpec::ball_indicator(1.0);
    for x in [[0.3, 0.0, 0.0], [0.2, -0.4, 0.1], [0.0, 0.0, 0.9]] {
        let q: f64 = x.iter().map(|c| c * c).sum();
        let (total, _) = sphere_integral(&b, x, &[], &SphereRule::default());
        let exact = 2.0 * PI - 2.0 * PI / 3.0 * q;
        assert!((total - exact).abs() < 1e-8 * exact, "{x:?}: {total} vs {exact}");
    }
}

#[test]
fn zero_potential_has_zero_norm() {
    let r = kato_norm(&PotentialSpec::zero(), &KatoOptions::default()).unwrap();
    assert_eq!(r.norm, 0.0);
    assert!(r.modulus.iter().all(|&(_, e)| e == 0.0));
}

#[test]
fn modulus_is_monotone_and_bounded_by_norm() {
    for v in [bump(), example_potential(3.0).unwrap()] {
        let r = kato_norm(&v, &KatoOptions::default()).unwrap();
        assert!(r.modulus.windows(2).all(|w| w[0].0 > w[1].0 && w[0].1 >= w[1].1), "{:?}", r.modulus);
        assert!(r.modulus.iter().all(|&(_, e)| e <= r.norm));
    }
}

#[test]
fn subadditive_on_disjoint_and_overlapping_sums() {
    let opts = KatoOptions::coarse();
    let a = PotentialSpec::bump(2.0, 0.4, [0.3, 0.0, 0.0]);
    for b in [PotentialSpec::bump(-1.0, 0.3, [-0.4, 0.1, 0.0]), PotentialSpec::ball_indicator(0.5)] {
        let na = kato_norm(&a, &opts).unwrap().norm;
        let nb = kato_norm(&b, &opts).unwrap().norm;
        let nab = kato_norm(&a.plus(&b), &opts).unwrap().norm;
        assert!(nab <= (na + nb) * (1.0 + 1e-3), "{nab} > {na} + {nb}");
    }
}

#[test]
fn example_modulus_follows_log_power() {
    // eta(e^{-T}) ~ C T^{2 - delta}; fit the log-log slope against T.
    let delta = 3.0;
    let ts = [2.0f64, 4.0, 8.0, 16.0];
    let opts = KatoOptions {
        modulus_radii: ts.iter().map(|t| (-t).exp()).collect(),
        ..Default::default()
    };
    let r = kato_norm(&example_potential(delta).unwrap(), &opts).unwrap();
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = r.modulus.iter().map(|&(_, e)| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope - (2.0 - delta)).abs() < 0.3, "slope {slope}");
    assert!(r.norm.is_finite() && r.norm > r.modulus[0].1);
}

#[test]
fn mollification_contracts_and_converges() {
    let v = bump();
    let opts = KatoOptions::coarse();
    let base = kato_norm(&v, &opts).unwrap().norm;
    let mut prev = f64::INFINITY;
    for k in 1..=6 {
        let d = 2f64.powi(-k);
        let m = mollify(&v, d);
        let nm = kato_norm(&m, &opts).unwrap().norm;
        assert!(nm <= base * (1.0 + 1e-3), "delta {d}: {nm} > {base}");
        let diff = kato_norm(&v.plus(&m.scaled(-1.0)), &opts).unwrap().norm;
        assert!(diff < prev, "delta {d}: {diff} >= {prev}");
        prev = diff;
    }
    assert!(prev < 0.05 * base, "{prev} vs {base}");
    assert!(mollify(&PotentialSpec::zero(), 0.25).is_zero());
}

#[test]
fn split_of_bounded_potential_is_trivial() {
    let v = bump();
    let (small, bounded, level) = split_small_bounded(&v, 0.1, &KatoOptions::coarse()).unwrap();
    assert!(small.is_zero());
    assert_eq!(bounded, v);
    assert_eq!(level, None);
}

#[test]
fn split_of_log_singular_potential() {
    let v = example_potential(3.0).unwrap();
    let opts = KatoOptions {
        modulus_radii: Vec::new(),
        ..Default::default()
    };
    let eps = 2.0;
    let (small, bounded, level) = split_small_bounded(&v, eps, &opts).unwrap();
    let m = level.unwrap();
    assert!(kato_norm(&small, &opts).unwrap().norm < eps);
    assert_eq!(bounded.formula.sup_bound(), Some(m));
    // M / 2 is not enough.
    let coarser = Formula::Truncated {
        inner: Box::new(v.formula.clone()),
        level: m / 2.0,
        keep_small: false,
    };
    assert!(kato_norm(&PotentialSpec::new("t", coarser), &opts).unwrap().norm >= eps);
    // Pieces add back up to V away from the axis.
    for x in [[0.1, 0.2, 0.0], [0.0, 0.01, 0.003], [0.3, 1e-4, 0.0]] {
        let s = small.eval(x) + bounded.eval(x);
        assert!((s - v.eval(x)).abs() <= 1e-12 * v.eval(x).abs());
    }
    assert!(matches!(split_small_bounded(&v, -1.0, &opts), Err(Error::Domain(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn norm_is_absolutely_homogeneous(c in -8.0f64..8.0) {
        prop_assume!(c.abs() > 1e-3);
        let opts = KatoOptions::coarse();
        let v = bump();
        let a = kato_norm(&v, &opts).unwrap().norm;
        let b = kato_norm(&v.scaled(c), &opts).unwrap().norm;
        prop_assert!((b - c.abs() * a).abs() < 1e-10 * b.max(1.0));
    }
}
