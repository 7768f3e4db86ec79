//! Property suites shared by the invariant tests and the acceptance run.
//! Each suite drives a deterministic proptest runner and reports the first
//! counterexample as a string.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use varifold_decay::dyadic_lattice::Dyadic;
use varifold_decay::example_generator::{build_example, ExampleConfig, SurfaceFunctional};
use varifold_decay::revolved_profile::{
    monte_carlo_integrals, profile_eval, IntegralRequest, PlaneNorm, PlacedSurface, ProfileGeometry,
};
use varifold_decay::scaling_analysis::{scaling_report, scan_b, Membership, ProfileGeometry as Shape, QuantityKind};
use varifold_decay::varifold_core::{
    plane_distance, Canonical, DiscreteVarifold, ExcessKind, FnField, Region, TangentPlane,
};

pub type Suite = fn() -> Result<(), String>;

pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn unit_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 3)
        .prop_filter("nondegenerate", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2)
}

pub fn plane_distance_is_a_metric() -> Result<(), String> {
    check(64, (unit_vector(), unit_vector(), unit_vector()), |(a, b, c)| {
        let (s, t, u) = (
            TangentPlane::from_normal(&a).unwrap(),
            TangentPlane::from_normal(&b).unwrap(),
            TangentPlane::from_normal(&c).unwrap(),
        );
        for norm in [PlaneNorm::Frobenius, PlaneNorm::Operator] {
            let d = |x: &TangentPlane, y: &TangentPlane| plane_distance(x, y, norm).unwrap();
            ensure(d(&s, &s) < 1e-12, || "d(S, S) > 0".into())?;
            ensure((d(&s, &t) - d(&t, &s)).abs() < 1e-12, || "asymmetric".into())?;
            ensure(d(&s, &u) <= d(&s, &t) + d(&t, &u) + 1e-12, || "triangle inequality".into())?;
            let cap = if norm == PlaneNorm::Frobenius { 2f64.sqrt() } else { 1.0 };
            ensure(d(&s, &t) <= cap + 1e-12, || "exceeds hyperplane bound".into())?;
        }
        Ok(())
    })
}

pub fn density_ratio_is_dilation_invariant() -> Result<(), String> {
    check(
        32,
        (0.2f64..3.0, unit_vector(), 0.05f64..1.5, 0.1f64..10.0),
        |(radius, dir, rho, lambda)| {
            let v = DiscreteVarifold::canonical(Canonical::Sphere { n: 2, radius }, 1.0).unwrap();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let x: Vec<f64> = dir.iter().map(|d| radius * d / norm).collect();
            let a = v.density_ratio(&x, rho * radius).unwrap().value();
            let w = v.dilated(lambda).unwrap();
            let lx: Vec<f64> = x.iter().map(|c| lambda * c).collect();
            let b = w.density_ratio(&lx, lambda * rho * radius).unwrap().value();
            ensure((a - b).abs() <= 1e-9 * a.abs().max(1.0), || format!("{a} vs {b}"))
        },
    )
}

pub fn excess_is_monotone_in_radius() -> Result<(), String> {
    let sphere = DiscreteVarifold::canonical(Canonical::Sphere { n: 2, radius: 1.0 }, 1.0).unwrap();
    let plane = TangentPlane::horizontal(2);
    check(32, (0.02f64..1.0, 0.02f64..1.0, 1.0f64..3.0), move |(r1, r2, q)| {
        let (lo, hi) = (r1.min(r2), r1.max(r2));
        let x = [1.0, 0.0, 0.0];
        for kind in [ExcessKind::Height, ExcessKind::Tilt] {
            let e = |r: f64| {
                sphere
                    .excess(&x, &Region::ball(x.to_vec(), r), &plane, q, kind, PlaneNorm::Frobenius)
                    .unwrap()
            };
            let (a, b) = (e(lo), e(hi));
            ensure(a.upper <= b.upper * (1.0 + 1e-9) + 1e-15, || format!("{kind:?}: {a:?} > {b:?}"))?;
        }
        Ok(())
    })
}

pub fn brackets_are_ordered_and_monotone() -> Result<(), String> {
    check(16, (2.1f64..4.0, 1u32..9), |(kappa, i)| {
        let ex = build_example(&ExampleConfig {
            max_level: 14,
            ..ExampleConfig::with_kappa(2, 1.0, kappa)
        })
        .unwrap();
        let x = vec![Dyadic::ZERO; 2];
        for f in [SurfaceFunctional::Mass, SurfaceFunctional::Curvature { p: 1.0 }] {
            let a = ex.cube_bracket(i, &x, &f).unwrap();
            let b = ex.cube_bracket(i + 1, &x, &f).unwrap();
            ensure(a.lower <= a.upper && b.lower <= b.upper, || format!("{f:?}: unordered"))?;
            ensure(b.lower <= a.lower && b.upper <= a.upper, || {
                format!("{f:?}: i = {i} gives {a:?}, i + 1 gives {b:?}")
            })?;
        }
        let r = (-(i as f64)).exp2();
        let center = [0.0, 0.0, 0.0];
        let small = ex.ball_bracket(&center, 0.5 * r, &SurfaceFunctional::Mass).unwrap();
        let large = ex.ball_bracket(&center, r, &SurfaceFunctional::Mass).unwrap();
        ensure(small.lower <= small.upper && large.lower <= large.upper, || "ball unordered".into())?;
        ensure(small.lower <= large.upper, || format!("ball: {small:?} vs {large:?}"))
    })
}

pub fn excess_sets_are_nested() -> Result<(), String> {
    let ex = build_example(&ExampleConfig {
        include_plane: false,
        max_level: 16,
        ..ExampleConfig::default()
    })
    .unwrap();
    check(6, (-0.2f64..0.2, -0.2f64..0.2, 0.0f64..0.05), move |(u, v, h)| {
        let probe = vec![h, u, v];
        let scans = scan_b(&ex, &[probe], &[2, 3, 4, 6], 1.0, 12).unwrap();
        let m = &scans[0].membership;
        for w in m.windows(2) {
            let (outer, inner) = (&w[0].1, &w[1].1);
            if matches!(inner, Membership::Member { .. }) {
                ensure(matches!(outer, Membership::Member { .. }), || {
                    format!("member of B_{} but not B_{}", w[1].0, w[0].0)
                })?;
            }
            if matches!(outer, Membership::NonMember) {
                ensure(matches!(inner, Membership::NonMember), || {
                    format!("outside B_{} but not B_{}", w[0].0, w[1].0)
                })?;
            }
        }
        Ok(())
    })
}

fn smooth_field() -> FnField<impl Fn(&[f64]) -> Vec<f64>, impl Fn(&[f64]) -> Vec<Vec<f64>>> {
    FnField {
        value: |x: &[f64]| vec![x[1].sin() + x[0] * x[2], (x[0] + x[2]).cos(), x[1] * x[1]],
        jacobian: |x: &[f64]| {
            vec![
                vec![x[2], x[1].cos(), x[0]],
                vec![-(x[0] + x[2]).sin(), 0.0, -(x[0] + x[2]).sin()],
                vec![0.0, 2.0 * x[1], 0.0],
            ]
        },
    }
}

/// `|delta mu(eta) + int H . eta - int eta . conormal|` at a resolution.
fn residual(v: &DiscreteVarifold, resolution: usize) -> f64 {
    let eta = smooth_field();
    (v.first_variation(&eta, resolution) + v.mean_curvature_pairing(&eta, resolution)
        - v.boundary_pairing(&eta, resolution))
    .abs()
}

pub fn first_variation_residual_decays() -> Result<(), String> {
    check(12, (0.05f64..1.0, 0.2f64..1.0, 0usize..3), |(tau, scale, shape)| {
        let v = match shape {
            0 => {
                let geom = ProfileGeometry::new(tau, 2).unwrap();
                let mut v = DiscreteVarifold::new(2, 1, 1.0).unwrap();
                v.push_patch(PlacedSurface::new(geom.curve(), 2, vec![0.1, -0.2, 0.3], scale).unwrap())
                    .unwrap();
                v
            }
            1 => DiscreteVarifold::canonical(Canonical::Sphere { n: 2, radius: scale }, 1.0).unwrap(),
            _ => DiscreteVarifold::canonical(Canonical::FlatDisk { n: 2, radius: scale }, 1.0).unwrap(),
        };
        let coarse = residual(&v, 6);
        let fine = residual(&v, 24);
        let mass = v.total_mass().unwrap();
        ensure(fine <= 1e-9 * mass.max(1.0), || format!("residual {fine:e} at resolution 24"))?;
        ensure(fine <= coarse / 16.0 || coarse <= 1e-11, || {
            format!("residual {coarse:e} -> {fine:e} decays slower than second order")
        })
    })
}

pub fn profile_gradients_match_differences() -> Result<(), String> {
    check(64, (0.02f64..1.0, 0.0f64..1.0), |(tau, u)| {
        let g = ProfileGeometry::new(tau, 2).unwrap();
        let s0 = g.plateau_radius();
        // Stay off the rim, where the slope is infinite, and off the joint.
        let s = if u < 0.3 {
            s0 * u / 0.3 * 0.99
        } else {
            s0 + (0.5 - s0) * (0.02 + 0.9 * (u - 0.3) / 0.7)
        };
        let h = 1e-6 * (0.5 - s0);
        let at = |x: f64| profile_eval(&g, x).unwrap();
        let (m, c, p) = (at(s - h), at(s), at(s + h));
        let slope = (p.f - m.f) / (2.0 * h);
        ensure((slope - c.f_prime).abs() <= 1e-5 * (1.0 + c.f_prime.abs()), || {
            format!("slope {slope} vs {} at s = {s}", c.f_prime)
        })?;
        let second = (p.f_prime - m.f_prime) / (2.0 * h);
        let k = -second / (1.0 + c.f_prime * c.f_prime).powf(1.5);
        ensure((k - c.curvature).abs() <= 1e-4 * (1.0 + c.curvature), || {
            format!("curvature {k} vs {} at s = {s}", c.curvature)
        })
    })
}

pub fn runs_are_deterministic() -> Result<(), String> {
    let cfg = ExampleConfig {
        max_level: 12,
        ..ExampleConfig::default()
    };
    let a = build_example(&cfg).map_err(|e| e.to_string())?;
    let b = build_example(&cfg).map_err(|e| e.to_string())?;
    if serde_json::to_string(&a.manifest().unwrap()).unwrap() != serde_json::to_string(&b.manifest().unwrap()).unwrap() {
        return Err("manifests differ".into());
    }
    let geom = ProfileGeometry::new(0.25, 2).unwrap();
    let req = IntegralRequest::default();
    if monte_carlo_integrals(&geom, &req, 10_000, 5).unwrap() != monte_carlo_integrals(&geom, &req, 10_000, 5).unwrap() {
        return Err("Monte-Carlo estimates differ for one seed".into());
    }
    if a.sampled_cloud(3, 64, 8, 9).unwrap() != b.sampled_cloud(3, 64, 8, 9).unwrap() {
        return Err("sampled clouds differ for one seed".into());
    }
    let r1 = scaling_report(&a, QuantityKind::MassMinusPlane, 2, 6, Shape::Ball, None).unwrap();
    let r2 = scaling_report(&b, QuantityKind::MassMinusPlane, 2, 6, Shape::Ball, None).unwrap();
    if serde_json::to_string(&r1).unwrap() != serde_json::to_string(&r2).unwrap() {
        return Err("scaling reports differ".into());
    }
    Ok(())
}

pub fn all_suites() -> Vec<(&'static str, Suite)> {
    vec![
        ("plane distance metric", plane_distance_is_a_metric),
        ("density dilation invariance", density_ratio_is_dilation_invariant),
        ("excess monotone in radius", excess_is_monotone_in_radius),
        ("bracket order and monotonicity", brackets_are_ordered_and_monotone),
        ("B_(i+1) within B_i", excess_sets_are_nested),
        ("first-variation residual order", first_variation_residual_decays),
        ("profile gradient checks", profile_gradients_match_differences),
        ("determinism", runs_are_deterministic),
    ]
}
