//! Isoperimetric quotients, the good-point density bound and the lower
//! density bound, checked numerically.
//!
//! Nothing here asserts an upper bound for the best isoperimetric constant;
//! quotients are recorded, never compared against a claimed optimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::revolved_profile::{
    monte_carlo_integrals, unit_ball_volume, unit_integrals, unit_sphere_area, IntegralRequest, ProfileGeometry,
};
use crate::scaling_analysis::BallMeasures;
use crate::varifold_core::{Bracket, Canonical, DiscreteVarifold};

/// Radii per octave in the good-point scan.
pub const RADII_PER_OCTAVE: u32 = 4;
/// Octaves scanned below the outer radius.
pub const SCAN_OCTAVES: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoResult {
    pub mass: f64,
    pub variation: f64,
    /// `mu({theta >= 1})`.
    pub density_mass: f64,
    pub quotient: f64,
}

impl IsoResult {
    fn from_parts(n: usize, mass: f64, variation: f64, density_mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Degenerate(format!("mass {mass} is not positive and finite")));
        }
        if !(variation > 0.0 && variation.is_finite()) {
            return Err(Error::Degenerate(format!(
                "first variation {variation} is not positive and finite"
            )));
        }
        Ok(Self {
            mass,
            variation,
            density_mass,
            quotient: density_mass / (mass.powf(1.0 / n as f64) * variation),
        })
    }
}

/// `omega_n^(-1/n) / n`, the quotient of a flat ball.
pub fn lebesgue_quotient(n: usize) -> f64 {
    unit_ball_volume(n).powf(-1.0 / n as f64) / n as f64
}

/// `mu({theta >= 1}) / (mu(R^(n+m))^(1/n) ||delta mu||(R^(n+m)))`.
pub fn iso_quotient(v: &DiscreteVarifold) -> Result<IsoResult> {
    IsoResult::from_parts(v.n, v.total_mass()?, v.total_variation()?, v.density_mass()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodPointRow {
    pub radius: f64,
    pub mass: Bracket,
    pub variation: Bracket,
    /// `||delta mu||(B) <= (2 gamma)^(-1) mu(B)^(1 - 1/n)`, certified.
    pub hypothesis: bool,
    /// The hypothesis holds at this and every smaller scanned radius.
    pub in_chain: bool,
    /// `(2 n gamma)^(-n) radius^n`.
    pub bound: f64,
    /// `mu_lower / bound`.
    pub margin: f64,
    /// Present for radii inside the chain.
    pub conclusion: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodPointReport {
    pub point: Vec<f64>,
    pub gamma: f64,
    /// Ascending radii.
    pub rows: Vec<GoodPointRow>,
    /// Smallest scanned radius where the hypothesis is not certified.
    pub first_failing_radius: Option<f64>,
    /// Every in-chain conclusion holds.
    pub passed: bool,
}

fn scan_radii(r_max: f64) -> Vec<f64> {
    let steps = RADII_PER_OCTAVE * SCAN_OCTAVES;
    (0..=steps)
        .rev()
        .map(|k| r_max * (-(k as f64) / RADII_PER_OCTAVE as f64).exp2())
        .collect()
}

fn check_support<V: BallMeasures + ?Sized>(v: &V, a: &[f64], radius: f64) -> Result<()> {
    if v.mass_ball(a, radius)?.upper > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "point {a:?} is outside the support (no mass within {radius:e})"
        )))
    }
}

/// Scans dyadic radii up to `r_max` at `a`. Where the hypothesis holds at
/// every smaller scanned radius, the lower mass bound is checked.
pub fn good_point_check<V: BallMeasures + ?Sized>(
    v: &V,
    a: &[f64],
    r_max: f64,
    gamma: f64,
) -> Result<GoodPointReport> {
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::Domain(format!("radius {r_max} must be positive and finite")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("isoperimetric candidate {gamma} must be positive")));
    }
    v.check_probe(a, r_max)?;
    let radii = scan_radii(r_max);
    check_support(v, a, radii[0])?;

    let n = v.dim() as f64;
    let rows: Vec<(f64, Bracket, Bracket)> = radii
        .par_iter()
        .map(|&r| Ok((r, v.mass_ball(a, r)?, v.variation_ball(a, r)?)))
        .collect::<Result<_>>()?;

    let mut in_chain = true;
    let mut first_failing_radius = None;
    let mut passed = true;
    let mut out = Vec::with_capacity(rows.len());
    for (radius, mass, variation) in rows {
        let hypothesis = variation.upper <= mass.lower.powf(1.0 - 1.0 / n) / (2.0 * gamma);
        if !hypothesis && in_chain {
            in_chain = false;
            first_failing_radius = Some(radius);
        }
        let bound = (2.0 * n * gamma).powf(-n) * radius.powf(n);
        let conclusion = in_chain.then_some(mass.lower >= bound);
        passed &= conclusion.unwrap_or(true);
        out.push(GoodPointRow {
            radius,
            mass,
            variation,
            hypothesis,
            in_chain,
            bound,
            margin: mass.lower / bound,
            conclusion,
        });
    }
    Ok(GoodPointReport {
        point: a.to_vec(),
        gamma,
        rows: out,
        first_failing_radius,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DensityVerdict {
    HypothesesNotEstablished { reason: String },
    /// `mu(B(a, r)) >= (1 - delta) omega_n r^n`, certified by the lower bracket.
    Holds { ratio: f64 },
    /// Even the upper bracket misses the bound.
    Fails { ratio: f64 },
    /// The bracket straddles the bound.
    Undetermined { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCheck {
    pub radius: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    /// `(1 - delta) omega_n r^n`.
    pub target: f64,
    pub verdict: DensityVerdict,
}

/// Evaluates the hypotheses of the lower density bound at `(a, r)` with a
/// supplied `epsilon` and, when they hold, checks its conclusion.
pub fn density_lower_bound_check<V: BallMeasures + ?Sized>(
    v: &V,
    a: &[f64],
    r: f64,
    epsilon: f64,
    delta: f64,
    gamma: f64,
) -> DensityCheck {
    let n = v.dim();
    let target = (1.0 - delta) * unit_ball_volume(n) * r.powi(n as i32);
    let verdict = match density_verdict(v, a, r, epsilon, gamma, target) {
        Ok(v) => v,
        Err(e) => DensityVerdict::HypothesesNotEstablished { reason: e.to_string() },
    };
    DensityCheck {
        radius: r,
        epsilon,
        delta,
        gamma,
        target,
        verdict,
    }
}

fn density_verdict<V: BallMeasures + ?Sized>(
    v: &V,
    a: &[f64],
    r: f64,
    epsilon: f64,
    gamma: f64,
    target: f64,
) -> Result<DensityVerdict> {
    if !(r > 0.0 && epsilon > 0.0) {
        return Err(Error::Domain("radius and epsilon must be positive".into()));
    }
    let chain = good_point_check(v, a, r, gamma)?;
    // The chain must hold strictly below r; the outer row is r itself.
    if let Some(bad) = chain.rows.iter().rev().skip(1).find(|row| !row.hypothesis) {
        return Ok(DensityVerdict::HypothesesNotEstablished {
            reason: format!("good-point hypothesis fails at radius {:e}", bad.radius),
        });
    }
    let mass = v.mass_ball(a, r)?;
    let variation = v.variation_ball(a, r)?;
    let n = v.dim() as f64;
    if variation.upper > epsilon * mass.lower.powf(1.0 - 1.0 / n) {
        return Ok(DensityVerdict::HypothesesNotEstablished {
            reason: format!(
                "variation {:e} exceeds epsilon * mass^(1-1/n) = {:e}",
                variation.upper,
                epsilon * mass.lower.powf(1.0 - 1.0 / n)
            ),
        });
    }
    let denom = target.max(f64::MIN_POSITIVE);
    Ok(if mass.lower >= target {
        DensityVerdict::Holds { ratio: mass.lower / denom }
    } else if mass.upper < target {
        DensityVerdict::Fails { ratio: mass.upper / denom }
    } else {
        DensityVerdict::Undetermined {
            lower: mass.lower,
            upper: mass.upper,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub mass: f64,
    pub variation: f64,
    pub quotient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSweep {
    pub n: usize,
    pub rows: Vec<SweepRow>,
    /// Running maximum of the quotient along the grid.
    pub running_max: Vec<f64>,
    pub lebesgue_quotient: f64,
    /// Observation only: every swept quotient stays at or below the flat
    /// ball value.
    pub all_below_lebesgue: bool,
}

impl ProfileSweep {
    pub fn max_quotient(&self) -> f64 {
        self.running_max.last().copied().unwrap_or(f64::NAN)
    }

    /// `tau,mass,variation,quotient` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,mass,variation,quotient\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.tau, r.mass, r.variation, r.quotient
            ));
        }
        out
    }
}

/// Quotient of the closed unit pillbox for every `tau` of the grid.
pub fn profile_sweep(tau_grid: &[f64], n: usize) -> Result<ProfileSweep> {
    let rows: Vec<SweepRow> = tau_grid
        .par_iter()
        .map(|&tau| {
            let geom = ProfileGeometry::new(tau, n)?;
            let ints = unit_integrals(&geom, &IntegralRequest::default())?;
            // Closed surface of density one: no boundary, full density mass.
            let iso = IsoResult::from_parts(n, ints.mass, ints.curvature_moment, ints.mass)?;
            Ok(SweepRow {
                tau,
                mass: iso.mass,
                variation: iso.variation,
                quotient: iso.quotient,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = f64::NEG_INFINITY;
    let running_max = rows
        .iter()
        .map(|r| {
            best = best.max(r.quotient);
            best
        })
        .collect();
    let lebesgue = lebesgue_quotient(n);
    Ok(ProfileSweep {
        n,
        all_below_lebesgue: rows.iter().all(|r| r.quotient <= lebesgue),
        rows,
        running_max,
        lebesgue_quotient: lebesgue,
    })
}

/// Evenly spaced grid on `(0, 1]` with `count` points ending at 1.
pub fn default_tau_grid(count: usize) -> Vec<f64> {
    (1..=count).map(|k| k as f64 / count as f64).collect()
}

/// `sigma_n^(-1/n) / n` for a round `n` sphere, `sigma_n = H^n(S^n)`.
pub fn sphere_quotient(n: usize) -> f64 {
    unit_sphere_area(n + 1).powf(-1.0 / n as f64) / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedIso {
    pub name: String,
    pub result: IsoResult,
    /// Closed-form quotient.
    pub reference: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub quantity: String,
    pub quadrature: f64,
    pub monte_carlo: f64,
    pub relative_error: f64,
}

/// Quadrature against stratified Monte-Carlo for `A(tau)`, `B_1(tau)` and
/// `C_2(tau)` of the unit pillbox.
pub fn oracle_comparison(tau: f64, n: usize, samples: usize, seed: u64) -> Result<Vec<OracleRow>> {
    let geom = ProfileGeometry::new(tau, n)?;
    let req = IntegralRequest {
        p: 1.0,
        q: 2.0,
        ..IntegralRequest::default()
    };
    let quad = unit_integrals(&geom, &req)?;
    let mc = monte_carlo_integrals(&geom, &req, samples, seed)?;
    let row = |name: &str, a: f64, b: f64| OracleRow {
        quantity: name.to_string(),
        quadrature: a,
        monte_carlo: b,
        relative_error: ((b - a) / a).abs(),
    };
    Ok(vec![
        row("A", quad.mass, mc.mass),
        row("B_1", quad.curvature_moment, mc.curvature_moment),
        row("C_2", quad.tilt_moment, mc.tilt_moment),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsoLabConfig {
    pub n: usize,
    pub grid_points: usize,
    pub oracle_tau: f64,
    pub oracle_samples: usize,
    pub seed: u64,
    /// Relative tolerance on closed-form quotients.
    pub quotient_tolerance: f64,
    /// Relative tolerance of the Monte-Carlo comparison.
    pub oracle_tolerance: f64,
}

impl Default for IsoLabConfig {
    fn default() -> Self {
        Self {
            n: 2,
            grid_points: 32,
            oracle_tau: 0.25,
            oracle_samples: 1_000_000,
            seed: 0,
            quotient_tolerance: 1e-6,
            oracle_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoLabReport {
    pub config: IsoLabConfig,
    pub canonical: Vec<NamedIso>,
    pub sweep: ProfileSweep,
    pub oracle: Vec<OracleRow>,
    /// Largest quotient recorded over canonical shapes and the sweep.
    pub max_recorded: f64,
    pub pass: bool,
}

/// Canonical quotients, the pillbox sweep and the quadrature oracle check.
/// The verdict covers the closed forms and the oracle only; sweep values
/// are recorded as observations.
pub fn iso_lab(config: &IsoLabConfig) -> Result<IsoLabReport> {
    let n = config.n;
    if n < 2 {
        return Err(Error::Config("the lab sweeps hypersurfaces; n must be at least 2".into()));
    }
    let shapes = [
        (
            "lebesgue_ball",
            Canonical::LebesgueBall {
                n,
                radius: 1.0,
                resolution: 16,
            },
            lebesgue_quotient(n),
        ),
        ("flat_disk", Canonical::FlatDisk { n, radius: 1.0 }, lebesgue_quotient(n)),
        ("sphere", Canonical::Sphere { n, radius: 1.0 }, sphere_quotient(n)),
    ];
    let canonical = shapes
        .iter()
        .map(|(name, shape, reference)| {
            let result = iso_quotient(&DiscreteVarifold::canonical(*shape, 1.0)?)?;
            Ok(NamedIso {
                name: name.to_string(),
                result,
                reference: *reference,
                relative_error: ((result.quotient - reference) / reference).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sweep = profile_sweep(&default_tau_grid(config.grid_points.max(1)), n)?;
    let oracle = oracle_comparison(config.oracle_tau, n, config.oracle_samples, config.seed)?;
    let max_recorded = canonical
        .iter()
        .map(|c| c.result.quotient)
        .fold(sweep.max_quotient(), f64::max);
    let pass = canonical.iter().all(|c| c.relative_error <= config.quotient_tolerance)
        && oracle.iter().all(|o| o.relative_error <= config.oracle_tolerance);
    Ok(IsoLabReport {
        config: *config,
        canonical,
        sweep,
        oracle,
        max_recorded,
        pass,
    })
}
