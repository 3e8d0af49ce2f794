mod common;

use rand::Rng;

use common::{bisect, rng};
use gje_core::domain::{self, g_segment_point, g_star_segment_point, ConeLimits, GSegment, TransformFrame};
use gje_core::gconvex::{GAffine, PiecewiseGConvex};
use gje_core::geom::{self, BoxDomain};
use gje_core::GeneratorSpec;

const A: f64 = 0.05;

fn perturbed() -> GeneratorSpec {
    GeneratorSpec::perturbed_scalar(2, A)
}

#[test]
fn classical_segments_are_straight() {
    let s = GeneratorSpec::classical(2);
    assert_eq!(g_segment_point(&s, &[0.0, 0.0], &[1.0, 1.0], &[0.4, 0.1], 0.2, 0.5).unwrap(), vec![0.5, 0.5]);
    let seg = GSegment::new(&perturbed(), &[0.1, 0.2], &[0.9, 0.7], &[0.3, 0.3], 0.1);
    assert_eq!(seg.point(0.0).unwrap(), vec![0.1, 0.2]);
    assert_eq!(seg.point(1.0).unwrap(), vec![0.9, 0.7]);
}

/// With `M = a·I`, `g_y/g_z(x, y0, z0) = c x / (a x·y0 − 1)` and `c = 1 + a z0`,
/// so the segment point is `s·w` for a scalar `s` found by bisection.
#[test]
fn perturbed_segment_against_scalar_bisection() {
    let s = perturbed();
    let mut r = rng(30);
    for _ in 0..50 {
        let xa = vec![r.gen(), r.gen()];
        let xb = vec![r.gen(), r.gen()];
        let y0 = vec![r.gen(), r.gen()];
        let z0: f64 = r.gen_range(-0.5..0.5);
        let theta: f64 = r.gen();
        let c = 1.0 + A * z0;
        let phi = |x: &[f64]| geom::scale(x, c / (A * geom::dot(x, &y0) - 1.0));
        let w = geom::lerp(&phi(&xa), &phi(&xb), theta);
        // x = s w solves s (c − a w·y0) = −1; bisect the scalar equation
        let k = c - A * geom::dot(&w, &y0);
        let sc = bisect(|t| (t * k + 1.0) * k.signum(), -100.0, 100.0);
        let oracle = geom::scale(&w, sc);
        let got = g_segment_point(&s, &xa, &xb, &y0, z0, theta).unwrap();
        assert!(geom::sup_dist(&got, &oracle) < 1e-8, "{got:?} vs {oracle:?}");
    }
}

/// Dual mirror: `g_x(x0, y, g*(x0, y, u0)) = y (1 + a z)`, so `y_θ = t p_θ`.
#[test]
fn perturbed_dual_segment_against_scalar_bisection() {
    let s = perturbed();
    let mut r = rng(31);
    for _ in 0..50 {
        let ya = vec![r.gen(), r.gen()];
        let yb = vec![r.gen(), r.gen()];
        let x0 = vec![r.gen(), r.gen()];
        let u0: f64 = r.gen_range(-0.5..0.5);
        let theta: f64 = r.gen();
        let z_of = |y: &[f64]| (geom::dot(&x0, y) - u0) / (1.0 - A * geom::dot(&x0, y));
        let p = |y: &[f64]| geom::scale(y, 1.0 + A * z_of(y));
        let target = geom::lerp(&p(&ya), &p(&yb), theta);
        let t = bisect(|t| t * (1.0 + A * z_of(&geom::scale(&target, t))) - 1.0, 0.0, 2.0);
        let oracle = geom::scale(&target, t);
        let got = g_star_segment_point(&s, &ya, &yb, &x0, u0, theta).unwrap();
        assert!(geom::sup_dist(&got, &oracle) < 1e-8, "{got:?} vs {oracle:?}");
    }
}

#[test]
fn half_segments_compose() {
    let s = perturbed();
    let (xa, xb, y0, z0) = ([0.1, 0.9], [0.8, 0.2], [0.5, 0.6], 0.3);
    let mid = g_segment_point(&s, &xa, &xb, &y0, z0, 0.5).unwrap();
    let quarter = g_segment_point(&s, &xa, &xb, &y0, z0, 0.25).unwrap();
    let via_half = g_segment_point(&s, &xa, &mid, &y0, z0, 0.5).unwrap();
    assert!(geom::sup_dist(&quarter, &via_half) <= 2e-10);
}

#[test]
fn loeper_scans() {
    let c = GeneratorSpec::classical(2);
    let xs = BoxDomain::cube(2, 0.0, 1.0).lattice(11);
    let thetas: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let rep = domain::loeper_check(&c, &[0.5, 0.5], 0.1, &[0.1, 0.2], &[0.9, 0.6], &xs, &thetas).unwrap();
    assert!(rep.max_violation.abs() <= 1e-12, "{rep:?}");
    let ends = domain::loeper_check(&perturbed(), &[0.5, 0.5], 0.1, &[0.1, 0.2], &[0.9, 0.6], &xs, &[0.0, 1.0]).unwrap();
    assert!(ends.max_violation <= 0.0);

    let s = perturbed();
    let mut r = rng(32);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let x0 = vec![r.gen(), r.gen()];
        let xs: Vec<Vec<f64>> = (0..10).map(|_| vec![r.gen(), r.gen()]).collect();
        let rep = domain::loeper_check(&s, &x0, r.gen_range(-0.5..0.5), &[r.gen(), r.gen()], &[r.gen(), r.gen()], &xs, &[0.25, 0.5, 0.75]).unwrap();
        worst = worst.max(rep.max_violation);
    }
    assert!(worst <= 1e-7, "{worst}");
}

#[test]
fn classical_frame_is_exact_and_normalised() {
    let s = GeneratorSpec::classical(2);
    let f = TransformFrame::new(&s, &[0.3, 0.6], &[0.5, 0.2], 0.1, 0.05).unwrap();
    let q = f.q_of_x(&[0.4, 0.5]);
    assert!((q[0] - 0.1).abs() < 1e-12 && (q[1] + 0.1).abs() < 1e-12);
    let p = f.p_of_y(&[0.7, 0.7]).unwrap();
    assert!((p[0] - 0.2).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    let (rep, _) = f.sample_expansion(0.1, 100, 3).unwrap();
    assert!(rep.max_abs_remainder < 1e-12 && rep.normalization_residual < 1e-9);
}

#[test]
fn frames_converge_as_height_vanishes() {
    let s = perturbed();
    let base = TransformFrame::new(&s, &[0.4, 0.5], &[0.6, 0.3], 0.0, 0.0).unwrap();
    let samples = [([0.05, -0.03], [0.02, 0.04], 0.01), ([-0.04, 0.02], [0.03, -0.05], -0.02)];
    let gap = |h: f64| {
        let f = TransformFrame::new(&s, &[0.4, 0.5], &[0.6, 0.3], 0.0, h).unwrap();
        samples.iter().map(|(q, p, z)| (f.g_bar(q, p, *z).unwrap() - base.g_bar(q, p, *z).unwrap()).abs()).fold(0.0, f64::max)
    };
    let (a, b, c) = (gap(0.04), gap(0.02), gap(0.01));
    assert!(a > b && b > c, "{a} {b} {c}");
    let rate = (b / c).log2();
    assert!((0.8..1.3).contains(&rate), "rate {rate}");
}

#[test]
fn quadratic_cost_remainder_stays_bounded() {
    let s = GeneratorSpec::quadratic_cost(2);
    let f = TransformFrame::new(&s, &[0.4, 0.5], &[0.6, 0.3], 0.0, 0.05).unwrap();
    let c: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|r| f.sample_expansion(*r, 300, 4).unwrap().0.c_max).collect();
    // the cost is classical after a change of variables, so only round-off remains
    assert!(c.iter().all(|v| *v < 1e-8), "{c:?}");
}

#[test]
fn perturbed_frame_normalisation() {
    let f = TransformFrame::new(&perturbed(), &[0.4, 0.5], &[0.6, 0.3], 0.0, 0.05).unwrap();
    let (rep, rows) = f.sample_expansion(0.05, 200, 5).unwrap();
    assert!(rep.normalization_residual < 1e-7, "{rep:?}");
    assert_eq!(rows.len(), 200);
}

fn classical_u() -> PiecewiseGConvex {
    PiecewiseGConvex::primal(vec![
        GAffine::new(vec![0.1, 0.2], 0.0),
        GAffine::new(vec![0.8, 0.3], 0.25),
        GAffine::new(vec![0.4, 0.9], 0.2),
        GAffine::new(vec![0.6, 0.6], 0.15),
    ])
    .unwrap()
}

#[test]
fn classical_sections_are_convex() {
    let s = GeneratorSpec::classical(2);
    let u = classical_u();
    for k in 0..u.len() {
        let rep = domain::section(&s, &u, &u.pieces[k], 0.05, &s.domain_x, 60, 3000, k as u64).unwrap();
        assert!(rep.defect_cells <= 1e-9, "{rep:?}");
    }
}

#[test]
fn contact_set_of_a_strict_support() {
    let s = GeneratorSpec::classical(2);
    // a support with the averaged focus touches only along the ridge
    let u = PiecewiseGConvex::primal(vec![GAffine::new(vec![0.0, 0.0], 0.0), GAffine::new(vec![1.0, 1.0], 1.0)]).unwrap();
    let x = [0.5, 0.5];
    let support = GAffine::new(vec![0.5, 0.5], s.g_star(&x, &[0.5, 0.5], u.value(&s, &x).unwrap()).unwrap());
    let rep = domain::section(&s, &u, &support, 0.0, &s.domain_x, 21, 100, 0).unwrap();
    assert!(rep.count >= 1);
    let grid = s.domain_x.lattice(21);
    for (m, p) in rep.members.iter().zip(&grid) {
        if *m {
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9, "{p:?}");
        }
    }
}

#[test]
fn interval_cone_matches_closed_form() {
    let d = BoxDomain::cube(1, -1.0, 1.0);
    let s = GeneratorSpec::classical(1).with_domains(d.clone(), d);
    let (a, b, h) = (0.25, 0.15, 0.08);
    let f = TransformFrame::new(&s, &[0.0], &[0.0], 0.0, h).unwrap();
    let base = BoxDomain::new(vec![-b], vec![a]).unwrap();
    let rep = domain::g_cone_subgradient(&f, &base, 2, 2, ConeLimits::default()).unwrap();
    assert!((rep.measure - h * (1.0 / a + 1.0 / b)).abs() < 1e-8, "{rep:?}");
    assert_eq!(rep.violations, 0);
}

/// Classical rectangle cone: `∂K(0) = {p : p·c ≤ h for every corner c}`,
/// its area estimated by Monte Carlo membership.
#[test]
fn rectangle_cone_against_monte_carlo() {
    let d = BoxDomain::cube(2, -1.0, 1.0);
    let s = GeneratorSpec::classical(2).with_domains(d.clone(), d);
    let h = 0.1;
    let f = TransformFrame::new(&s, &[0.0, 0.0], &[0.0, 0.0], 0.0, h).unwrap();
    let base = BoxDomain::new(vec![-0.15, -0.2], vec![0.2, 0.1]).unwrap();
    let rep = domain::g_cone_subgradient(&f, &base, 2000, 17, ConeLimits::default()).unwrap();
    let corners = base.corners();
    let mut r = rng(33);
    let (half, n) = (1.2, 400_000);
    let inside = (0..n)
        .filter(|_| {
            let p = [r.gen_range(-half..half), r.gen_range(-half..half)];
            corners.iter().all(|c| geom::dot(&p, c) <= h)
        })
        .count();
    let mc = inside as f64 / n as f64 * (2.0 * half) * (2.0 * half);
    assert!((rep.classical_measure - mc).abs() / mc < 0.02, "{} vs {mc}", rep.classical_measure);
    assert!((rep.measure - rep.classical_measure).abs() / mc < 0.01, "{rep:?}");
    assert_eq!(rep.violations, 0);
}

#[test]
fn cone_limits_are_enforced() {
    let s = GeneratorSpec::classical(2).with_domains(BoxDomain::cube(2, -1.0, 1.0), BoxDomain::cube(2, -1.0, 1.0));
    let f = TransformFrame::new(&s, &[0.0, 0.0], &[0.0, 0.0], 0.0, 0.1).unwrap();
    let too_wide = BoxDomain::new(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
    assert!(domain::g_cone_subgradient(&f, &too_wide, 10, 5, ConeLimits::default()).is_err());
    let off = BoxDomain::new(vec![0.1, 0.1], vec![0.2, 0.2]).unwrap();
    assert!(domain::g_cone_subgradient(&f, &off, 10, 5, ConeLimits::default()).is_err());
}

#[test]
fn quasiconvexity_constants() {
    let c = GeneratorSpec::classical(2);
    let thetas: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
    let rep = domain::quasiconvexity_check(&c, &[0.2, 0.3], &[0.9, 0.8], &[0.1, 0.1], &[0.7, 0.9], 0.1, &thetas).unwrap();
    assert!((rep.m.unwrap() - 1.0).abs() < 1e-9, "{rep:?}");
    let at_zero = domain::quasiconvexity_check(&c, &[0.2, 0.3], &[0.9, 0.8], &[0.1, 0.1], &[0.7, 0.9], 0.1, &[0.0]).unwrap();
    assert!(at_zero.max_left.abs() < 1e-14);

    let s = GeneratorSpec::perturbed_scalar(2, 0.3);
    let coarse: Vec<f64> = (0..=50).map(|k| k as f64 / 50.0).collect();
    let fine: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let a = domain::quasiconvexity_check(&s, &[0.2, 0.3], &[0.9, 0.8], &[0.1, 0.1], &[0.7, 0.9], 0.1, &coarse).unwrap();
    let b = domain::quasiconvexity_check(&s, &[0.2, 0.3], &[0.9, 0.8], &[0.1, 0.1], &[0.7, 0.9], 0.1, &fine).unwrap();
    let (ma, mb) = (a.m.unwrap(), b.m.unwrap());
    assert!(ma.is_finite() && (ma - mb).abs() / mb < 0.05, "{ma} {mb}");
}
