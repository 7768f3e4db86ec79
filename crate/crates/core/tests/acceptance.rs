//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

mod common;

use varifold_decay::example_generator::{build_example, derive_parameters, ExampleConfig, SurfaceFunctional};
use varifold_decay::isoperimetric_lab::{iso_quotient, lebesgue_quotient, oracle_comparison, sphere_quotient};
use varifold_decay::revolved_profile::PlaneNorm;
use varifold_decay::scaling_analysis::{
    default_epsilon, dichotomy_ratio, scaling_report, scan_b, DichotomyMeasure, DichotomyVerdict, Membership,
    ProfileGeometry, QuantityKind,
};
use varifold_decay::varifold_core::{Canonical, DiscreteVarifold};
use varifold_decay::Error;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn slope_within(kind: QuantityKind, geometry: ProfileGeometry, target: f64, tol: f64) -> Outcome {
    let ex = build_example(&ExampleConfig::default()).map_err(fail)?;
    let rep = scaling_report(&ex, kind, 2, 8, geometry, Some(tol)).map_err(fail)?;
    let (lo, hi) = (rep.fit.slope_lower, rep.fit.slope_upper);
    ensure(
        (lo - target).abs() <= tol && (hi - target).abs() <= tol,
        format!("{} {geometry:?}: slopes [{lo:.6}, {hi:.6}] vs {target} +- {tol}", rep.label),
    )
}

fn all_of(parts: Vec<Outcome>) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for p in parts {
        match p {
            Ok(s) => lines.push(s),
            Err(s) => {
                ok = false;
                lines.push(format!("[failed] {s}"));
            }
        }
    }
    ensure(ok, lines.join("; "))
}

fn derived_parameters() -> Outcome {
    let d = derive_parameters(&ExampleConfig::default()).map_err(fail)?;
    let threshold = ExampleConfig {
        q2: 2.0,
        ..ExampleConfig::default()
    };
    let ordering = ExampleConfig {
        q2: 4.0,
        ..ExampleConfig::default()
    };
    let t = derive_parameters(&threshold);
    let o = derive_parameters(&ordering);
    ensure(
        d.a == 2.5 && d.b == 1.0 && matches!(t, Err(Error::Threshold(_))) && matches!(o, Err(Error::Ordering { .. })),
        format!("a = {}, b = {}, q2 = 2 -> {t:?}, q2 = 4 -> {o:?}", d.a, d.b),
    )
}

fn mass_slopes() -> Outcome {
    all_of(vec![
        slope_within(QuantityKind::MassMinusPlane, ProfileGeometry::Cube, 5.0, 0.15),
        slope_within(QuantityKind::MassMinusPlane, ProfileGeometry::Ball, 5.0, 0.15),
    ])
}

fn height_slope() -> Outcome {
    slope_within(QuantityKind::Height { q: 3.0 }, ProfileGeometry::Cube, 8.0, 0.2)
}

fn tilt_slopes() -> Outcome {
    all_of(
        [PlaneNorm::Frobenius, PlaneNorm::Operator]
            .into_iter()
            .map(|norm| slope_within(QuantityKind::Tilt { q: 1.0, norm }, ProfileGeometry::Cube, 5.0, 0.2))
            .collect(),
    )
}

fn weighted_measures() -> Outcome {
    let cfg = ExampleConfig {
        s: Some(6.0),
        r: Some(1.5),
        ..ExampleConfig::default()
    };
    let ex = build_example(&cfg).map_err(fail)?;
    let rep = scaling_report(&ex, QuantityKind::WeightedMass { s: 6.0 }, 2, 8, ProfileGeometry::Cube, Some(0.15))
        .map_err(fail)?;
    let slope = ensure(
        rep.pass,
        format!("weighted slopes [{:.6}, {:.6}] vs 6 +- 0.15", rep.fit.slope_lower, rep.fit.slope_upper),
    );
    let power = SurfaceFunctional::WeightedPower { s: 6.0, r: 1.5 };
    let ratios = (1..12)
        .map(|j| Ok(ex.level_density(j + 1, &power)? / ex.level_density(j, &power)?))
        .collect::<Result<Vec<f64>, Error>>()
        .map_err(fail)?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    all_of(vec![
        slope,
        ensure(worst < 1.0, format!("largest weighted-power level ratio {worst:.6}")),
    ])
}

fn curvature_ratio() -> Outcome {
    let configs = [ExampleConfig::default(), ExampleConfig::with_kappa(2, 1.2, 4.0)];
    all_of(
        configs
            .iter()
            .map(|cfg| {
                let ex = build_example(cfg).map_err(fail)?;
                let d = ex.derived;
                let n = d.n as f64;
                let predicted = (n - d.b * d.a * (1.0 - d.p) + (1.0 - n) * d.a).exp2();
                let f = SurfaceFunctional::Curvature { p: d.p };
                let mut worst = 0.0f64;
                for j in 1..12 {
                    let r = ex.level_density(j + 1, &f).map_err(fail)? / ex.level_density(j, &f).map_err(fail)?;
                    worst = worst.max((r - predicted).abs() / predicted);
                }
                ensure(
                    worst <= 1e-9 && predicted < 1.0,
                    format!("p = {}: ratio {predicted:.12}, deviation {worst:.2e}", d.p),
                )
            })
            .collect(),
    )
}

fn isoperimetric_quotients() -> Outcome {
    let mut parts = Vec::new();
    for n in 1..=3 {
        let shape = Canonical::LebesgueBall {
            n,
            radius: 1.0,
            resolution: 16,
        };
        let q = DiscreteVarifold::canonical(shape, 1.0)
            .and_then(|v| iso_quotient(&v))
            .map_err(fail)?
            .quotient;
        let reference = lebesgue_quotient(n);
        parts.push(ensure(
            (q - reference).abs() <= 1e-9,
            format!("lebesgue n = {n}: {q:.12} vs {reference:.12}"),
        ));
    }
    let sphere = |radius: f64| {
        DiscreteVarifold::canonical(Canonical::Sphere { n: 2, radius }, 1.0)
            .and_then(|v| iso_quotient(&v))
            .map(|r| r.quotient)
            .map_err(fail)
    };
    let s1 = sphere(1.0)?;
    let closed = 1.0 / (2.0 * (4.0 * std::f64::consts::PI).sqrt());
    parts.push(ensure(
        (s1 - closed).abs() <= 1e-6 && (sphere_quotient(2) - closed).abs() <= 1e-12,
        format!("sphere n = 2: {s1:.12} vs {closed:.12}"),
    ));
    let mut drift = 0.0f64;
    for lambda in [0.125, 0.5, 3.0, 40.0] {
        drift = drift.max((sphere(lambda)? - s1).abs());
    }
    parts.push(ensure(drift <= 1e-10, format!("dilation drift {drift:.2e}")));
    all_of(parts)
}

fn oracle() -> Outcome {
    let rows = oracle_comparison(0.25, 2, 1_000_000, 20_240_601).map_err(fail)?;
    let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    let detail = rows
        .iter()
        .map(|r| format!("{} {:.3e}", r.quantity, r.relative_error))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(worst <= 0.01, detail)
}

fn dichotomy() -> Outcome {
    let ex = build_example(&ExampleConfig::with_kappa(2, 1.0, 2.25)).map_err(fail)?;
    let cases = [
        (2.125, DichotomyVerdict::BoundedPositive),
        (2.375, DichotomyVerdict::TendsToInfinity),
        (1.875, DichotomyVerdict::TendsToZero),
    ];
    all_of(
        cases
            .iter()
            .map(|&(q, expected)| {
                let rep = dichotomy_ratio(&ex, q, DichotomyMeasure::ComplementOfT, 2, 8, 10.0).map_err(fail)?;
                let spread = rep.bracket.upper / rep.bracket.lower;
                let bounded_ok = expected != DichotomyVerdict::BoundedPositive || spread <= 10.0;
                ensure(
                    rep.verdict == expected && bounded_ok,
                    format!("q = {q}: {:?} (U/L = {spread:.3})", rep.verdict),
                )
            })
            .collect(),
    )
}

fn excess_scan() -> Outcome {
    let cfg = ExampleConfig {
        include_plane: false,
        ..ExampleConfig::default()
    };
    let ex = build_example(&cfg).map_err(fail)?;
    let n = ex.n();
    let epsilon = default_epsilon(lebesgue_quotient(n), n, cfg.p);
    let offsets = [[0.0, 0.0], [0.125, 0.0], [-0.125, 0.0], [0.0, 0.125], [0.0, -0.125]];
    let probes: Vec<Vec<f64>> = offsets.iter().map(|o| vec![0.0, o[0], o[1]]).collect();
    let i_values = [2, 3, 4, 8];
    let on_example = scan_b(&ex, &probes, &i_values, epsilon, 14).map_err(fail)?;
    let window = DiscreteVarifold::canonical(Canonical::PlaneWindow { n, radius: 1.0 }, cfg.p).map_err(fail)?;
    let control = scan_b(&window, &probes, &i_values, epsilon, 14).map_err(fail)?;
    let members = |scans: &[varifold_decay::scaling_analysis::ProbeScan]| {
        scans
            .iter()
            .flat_map(|s| s.membership.iter())
            .filter(|(_, m)| matches!(m, Membership::Member { .. }))
            .count()
    };
    let total = probes.len() * i_values.len();
    let (e, c) = (members(&on_example), members(&control));
    ensure(
        e == total && c == 0,
        format!("example members {e}/{total}, control members {c}/{total}, epsilon {epsilon:.6}"),
    )
}

fn property_suites() -> Outcome {
    all_of(
        common::all_suites()
            .into_iter()
            .map(|(name, suite)| suite().map(|_| name.to_string()).map_err(|e| format!("{name}: {e}")))
            .collect(),
    )
}

#[test]
fn acceptance() {
    let criteria: Vec<Criterion> = vec![
        ("derived parameters and config errors", derived_parameters),
        ("mass decay slope", mass_slopes),
        ("height decay slope", height_slope),
        ("tilt decay slope", tilt_slopes),
        ("weighted measures", weighted_measures),
        ("curvature level ratio", curvature_ratio),
        ("isoperimetric quotients", isoperimetric_quotients),
        ("quadrature against Monte Carlo", oracle),
        ("density ratio dichotomy", dichotomy),
        ("excess set scan", excess_scan),
        ("property suites", property_suites),
    ];
    let mut failures = Vec::new();
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let (label, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{label} [{}] {name}: {detail}", idx + 1);
        if outcome.is_err() {
            failures.push(*name);
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
