mod common;

use common::trig_field;
use mlab_core::determinants::poly::{rational, PolyField};
use mlab_core::determinants::{
    hessian_det_fourier, hessian_det_pointwise, jacobian_det_fourier, jacobian_det_pointwise,
    run_identity_suite, symbolic_baer_jerison_check, symbolic_detptau_check, symbolic_piola_check,
};
use mlab_core::grid::{dft_forward, Field, GridSpec};
use num_complex::Complex64;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Evaluates `∂^α f` at `x` by summing the active modes directly.
fn partial_at(f: &Field, alpha: &[usize], x: &[f64]) -> Complex64 {
    let kappa = f.grid().wavenumber();
    let i = Complex64::new(0.0, 1.0);
    dft_forward(f)
        .active_modes()
        .iter()
        .map(|m| {
            let mut c = m.value;
            let mut phase = 0.0;
            for (a, (&k, &xa)) in alpha.iter().zip(m.freq.iter().zip(x)) {
                c *= (i * kappa * k as f64).powu(*a as u32);
                phase += kappa * k as f64 * xa;
            }
            c * Complex64::from_polar(1.0, phase)
        })
        .sum()
}

fn det2(m: [[Complex64; 2]; 2]) -> Complex64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn det3(m: [[Complex64; 3]; 3]) -> Complex64 {
    m[0][0] * det2([[m[1][1], m[1][2]], [m[2][1], m[2][2]]])
        - m[0][1] * det2([[m[1][0], m[1][2]], [m[2][0], m[2][2]]])
        + m[0][2] * det2([[m[1][0], m[1][1]], [m[2][0], m[2][1]]])
}

fn unit(d: usize, axes: &[usize]) -> Vec<usize> {
    let mut a = vec![0; d];
    axes.iter().for_each(|&i| a[i] += 1);
    a
}

#[test]
fn pointwise_jacobian_matches_mode_sum_oracle() {
    let grid = GridSpec::periodic(2, 16).unwrap();
    let (u1, u2) = (trig_field(grid, 3, 1), trig_field(grid, 3, 2));
    let j = jacobian_det_pointwise(&[&u1, &u2]).unwrap();
    let scale = j.max_abs();
    let mut x = vec![0.0; 2];
    for p in (0..j.grid().len()).step_by(7) {
        j.grid().point(p, &mut x);
        let m = [
            [partial_at(&u1, &unit(2, &[0]), &x), partial_at(&u2, &unit(2, &[0]), &x)],
            [partial_at(&u1, &unit(2, &[1]), &x), partial_at(&u2, &unit(2, &[1]), &x)],
        ];
        assert!((j.samples()[p] - det2(m)).norm() <= 1e-12 * scale);
    }
}

#[test]
fn pointwise_hessian_matches_mode_sum_oracle() {
    let grid = GridSpec::periodic(3, 8).unwrap();
    let u = trig_field(grid, 2, 3);
    let h = hessian_det_pointwise(&u).unwrap();
    let scale = h.max_abs();
    let mut x = vec![0.0; 3];
    for p in (0..h.grid().len()).step_by(97) {
        h.grid().point(p, &mut x);
        let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
        for (a, row) in m.iter_mut().enumerate() {
            for (b, e) in row.iter_mut().enumerate() {
                *e = partial_at(&u, &unit(3, &[a, b]), &x);
            }
        }
        assert!((h.samples()[p] - det3(m)).norm() <= 1e-12 * scale);
    }
}

#[test]
fn fourier_determinants_match_pointwise() {
    for (d, n, degree) in [(2usize, 16usize, 3i64), (3, 8, 2)] {
        let grid = GridSpec::periodic(d, n).unwrap();
        for seed in 0..3 {
            let us: Vec<Field> = (0..d).map(|j| trig_field(grid, degree, 10 * seed + j as u64)).collect();
            let refs: Vec<&Field> = us.iter().collect();
            let (f, p) = (jacobian_det_fourier(&refs).unwrap(), jacobian_det_pointwise(&refs).unwrap());
            assert!(f.rel_l2_error(&p).unwrap() <= 1e-9, "jacobian d={d}");
            let (f, p) = (hessian_det_fourier(&us[0]).unwrap(), hessian_det_pointwise(&us[0]).unwrap());
            assert!(f.rel_l2_error(&p).unwrap() <= 1e-9, "hessian d={d}");
        }
    }
}

#[test]
fn jacobian_fourier_is_alternating() {
    let grid = GridSpec::periodic(3, 8).unwrap();
    let us: Vec<Field> = (0..3).map(|j| trig_field(grid, 2, 40 + j)).collect();
    let a = jacobian_det_fourier(&[&us[0], &us[1], &us[2]]).unwrap();
    let b = jacobian_det_fourier(&[&us[2], &us[1], &us[0]]).unwrap();
    let sum = a.add(&b).unwrap();
    assert!(sum.max_abs() <= 1e-13 * a.max_abs());
    let rep = jacobian_det_fourier(&[&us[0], &us[0], &us[2]]).unwrap();
    assert!(rep.max_abs() <= 1e-12 * a.max_abs());
}

#[test]
fn identity_suite_is_exact() {
    let reports = run_identity_suite(&[2, 3, 4], 20, 7).unwrap();
    for r in &reports {
        assert!(r.passed, "{} d={}: {}", r.identity, r.dimension, r.residual);
        assert!(r.instances >= 20 || r.identity == "det_p_tau_sum", "{}", r.identity);
    }
    let ids = |d: usize| reports.iter().filter(|r| r.dimension == d).count();
    assert_eq!((ids(2), ids(3), ids(4)), (11, 10, 3));
}

fn small_poly(d: usize, degree: u32) -> impl Strategy<Value = PolyField> {
    any::<u64>().prop_map(move |s| PolyField::random(d, degree, 6, &mut ChaCha8Rng::seed_from_u64(s)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn piola_holds_for_random_maps(u in proptest::collection::vec(small_poly(3, 2), 3)) {
        prop_assert!(symbolic_piola_check(&u).unwrap().iter().all(|r| r.passed));
    }

    #[test]
    fn baer_jerison_holds_in_two_dimensions(u in small_poly(2, 3)) {
        prop_assert!(symbolic_baer_jerison_check(&u).unwrap().iter().all(|r| r.passed));
    }

    #[test]
    fn det_p_tau_factorizes(seed in any::<u64>(), d in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tau: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            tau.swap(i, rng.gen_range(0..=i));
        }
        let nu: Vec<Vec<BigRational>> = (0..d)
            .map(|_| (0..d).map(|_| rational(rng.gen_range(-6..=6), 1)).collect())
            .collect();
        prop_assert!(symbolic_detptau_check(&tau, &nu).unwrap().passed);
    }
}
