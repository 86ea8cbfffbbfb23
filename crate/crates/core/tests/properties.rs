//! Cross-module properties on randomly generated instances.

use projsep_core::bodies::{difference_cone, Ball, CircularCone, Ellipsoid, GaussianProjection};
use projsep_core::escape::{akf_bounds, plan_multiclass};
use projsep_core::rng;
use projsep_core::separation::{
    decide_disjoint, dual_cone_margin, min_norm_point, nullspace_test, SeparationState, SolverOptions,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut r = rng::stream(seed);
    DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

fn orthogonal(seed: u64, n: usize) -> DMatrix<f64> {
    gaussian(seed, n, n).qr().q()
}

/// Random ellipsoid: center in a box, shape `L L^T / n` with optional rank drop.
fn ellipsoid(seed: u64, n: usize, spread: f64, rank: usize) -> Ellipsoid {
    let l = gaussian(seed, n, rank);
    let c = gaussian(seed ^ 0x9e37, n, 1).column(0) * spread;
    Ellipsoid::new(c, &l * l.transpose() / n as f64).unwrap()
}

fn support(e: &Ellipsoid, u: &DVector<f64>) -> f64 {
    e.support(u).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn support_width_is_nonnegative(seed in any::<u64>(), n in 1usize..6) {
        let e = ellipsoid(seed, n, 3.0, n);
        let u = gaussian(seed.wrapping_add(1), n, 1).column(0).into_owned();
        let reflected = e.reflected();
        // h(-E, u) = h(E, -u): the sum is the width of E along u.
        prop_assert!(support(&e, &u) + support(&reflected, &u) >= -1e-12);
    }

    #[test]
    fn projection_commutes_with_support(seed in any::<u64>(), n in 2usize..7, m in 1usize..7) {
        let m = m.min(n);
        let e = ellipsoid(seed, n, 2.0, n);
        let p = GaussianProjection::new(m, n, seed).unwrap();
        let pe = p.apply(&e).unwrap();
        let u = gaussian(seed.wrapping_add(2), m, 1).column(0).into_owned();
        let pulled = p.matrix().tr_mul(&u);
        let lhs = support(&pe, &u);
        let rhs = support(&e, &pulled);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn difference_cone_is_rigid_motion_invariant(seed in any::<u64>(), n in 2usize..6) {
        let mut r = rng::stream(seed);
        let c1 = gaussian(seed, n, 1).column(0) * 5.0;
        let c2 = gaussian(seed.wrapping_add(1), n, 1).column(0) * 5.0;
        let gap = (&c1 - &c2).norm();
        let r1 = r.random_range(0.05..0.45) * gap;
        let r2 = r.random_range(0.05..0.45) * gap;
        let q = orthogonal(seed.wrapping_add(2), n);
        let t = gaussian(seed.wrapping_add(3), n, 1).column(0).into_owned();
        let base = difference_cone(&Ball::new(c1.clone(), r1).unwrap(), &Ball::new(c2.clone(), r2).unwrap()).unwrap();
        let moved = difference_cone(
            &Ball::new(&q * &c1 + &t, r1).unwrap(),
            &Ball::new(&q * &c2 + &t, r2).unwrap(),
        )
        .unwrap();
        prop_assert!((base.half_angle() - moved.half_angle()).abs() <= 1e-12);
        prop_assert!((&q * base.axis() - moved.axis()).norm() <= 1e-12);
    }

    #[test]
    fn inscribed_ball_lies_inside(seed in any::<u64>(), n in 1usize..5) {
        let e = ellipsoid(seed, n, 1.0, n);
        let ball = e.inscribed_ball().unwrap();
        for k in 0..1000u64 {
            let d = gaussian(seed.wrapping_add(k), n, 1).column(0).into_owned();
            let p = ball.center() + d.normalize() * ball.radius();
            prop_assert!(e.contains(&p, 1e-9));
        }
    }

    #[test]
    fn disjoint_verdicts_carry_sound_certificates(seed in any::<u64>(), n in 2usize..6) {
        let a = ellipsoid(seed, n, 2.0, n);
        let b = ellipsoid(seed.wrapping_add(7), n, 2.0, n);
        let v = decide_disjoint(&a, &b, 1e-7).unwrap();
        match v.state {
            SeparationState::Disjoint => {
                let w = DVector::from_vec(v.certificate.unwrap());
                let top_a = support(&a, &w);
                let bottom_b = -support(&b, &-&w);
                prop_assert!(top_a < bottom_b + 1e-9);
                prop_assert!(dual_cone_margin(&w, &a, &b).unwrap() > 0.0);
            }
            SeparationState::Intersecting => {
                let (x, y) = v.witness.unwrap();
                let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
                prop_assert!(x.norm() <= 1.0 + 1e-12 && y.norm() <= 1.0 + 1e-12);
                let z = a.center() - b.center() + a.shape() * x - b.shape() * y;
                prop_assert!(z.norm() <= 1e-7);
            }
            SeparationState::Indeterminate => {}
        }
    }

    #[test]
    fn verdict_is_symmetric(seed in any::<u64>(), n in 2usize..6) {
        let a = ellipsoid(seed, n, 2.0, n);
        let b = ellipsoid(seed.wrapping_add(11), n, 2.0, n - 1);
        prop_assert_eq!(decide_disjoint(&a, &b, 1e-7).unwrap().state, decide_disjoint(&b, &a, 1e-7).unwrap().state);
    }

    #[test]
    fn min_norm_never_exceeds_start(seed in any::<u64>(), n in 1usize..6) {
        let a = ellipsoid(seed, n, 2.0, n);
        let b = ellipsoid(seed.wrapping_add(3), n, 2.0, n);
        let r = min_norm_point(&a, &b, SolverOptions::for_dim(n)).unwrap();
        prop_assert!(r.norm <= (a.center() - b.center()).norm() + 1e-12);
    }

    #[test]
    fn nullspace_test_ignores_row_operations(seed in any::<u64>(), n in 2usize..9, m in 1usize..9, alpha in 0.05f64..1.5) {
        let m = m.min(n);
        let p = gaussian(seed, m, n);
        let mix = gaussian(seed.wrapping_add(1), m, m);
        prop_assume!(mix.clone().svd(false, false).singular_values.min() > 1e-3);
        let cone = CircularCone::around_first_axis(n, alpha).unwrap();
        let base = nullspace_test(&p, &cone).unwrap();
        let mixed = nullspace_test(&(mix * &p), &cone).unwrap();
        if (base.null_projection_norm - alpha.cos()).abs() > 1e-9 {
            prop_assert_eq!(base.avoids, mixed.avoids);
        }
    }

    #[test]
    fn planner_takes_the_worst_pair(seed in any::<u64>(), k in 2usize..6, p in 0.001f64..0.5) {
        let n = 6;
        let bodies: Vec<Ellipsoid> = (0..k)
            .map(|i| {
                let mut c = DVector::zeros(n);
                c[i] = 30.0;
                let l = gaussian(seed.wrapping_add(i as u64), n, n);
                Ellipsoid::new(c, &l * l.transpose() * 0.1).unwrap()
            })
            .collect();
        let plan = plan_multiclass(&bodies, p).unwrap();
        let worst = plan.per_pair.iter().filter_map(|pp| pp.m_required).max().unwrap_or(0);
        prop_assert_eq!(plan.m, worst);
        let total: f64 = plan.per_pair.iter().map(|pp| pp.eta).sum();
        prop_assert!((total - p).abs() <= 1e-12);
    }

    #[test]
    fn akf_success_rank_exceeds_failure_rank(w in 0.0f64..30.0, n in 10usize..5000, eta in 0.001f64..0.5) {
        let b = akf_bounds(w, n, eta).unwrap();
        prop_assert!(b.m_success > b.m_failure);
    }
}

#[test]
fn verdicts_survive_orthogonal_changes_of_basis() {
    let mut agreed = 0;
    for k in 0..100u64 {
        let n = 3;
        let a = ellipsoid(1000 + k, n, 1.5, n);
        let b = ellipsoid(2000 + k, n, 1.5, n);
        let q = orthogonal(3000 + k, n);
        let rotate = |e: &Ellipsoid| Ellipsoid::new(&q * e.center(), &q * e.shape() * q.transpose()).unwrap();
        let s0 = decide_disjoint(&a, &b, 1e-7).unwrap().state;
        let s1 = decide_disjoint(&rotate(&a), &rotate(&b), 1e-7).unwrap().state;
        assert_eq!(s0, s1, "instance {k}");
        agreed += 1;
    }
    assert_eq!(agreed, 100);
}
