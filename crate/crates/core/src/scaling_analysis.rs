//! Dyadic-radius profiles, power-law fits, excess-set scans and the
//! dichotomy experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_lattice::Dyadic;
use crate::error::{Error, Result};
use crate::example_generator::{ExampleVarifold, SurfaceFunctional, DEFAULT_TAIL_THRESHOLD};
use crate::revolved_profile::PlaneNorm;
use crate::varifold_core::{Bracket, DiscreteVarifold, Region, VarifoldSample};

/// Default slope tolerance for pure power laws.
pub const POWER_LAW_TOLERANCE: f64 = 0.15;

/// Default slope tolerance for height and tilt.
pub const EXCESS_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantityKind {
    /// `mu(region \ T)`.
    MassMinusPlane,
    /// `int dist(xi - x, T)^q dmu`.
    Height { q: f64 },
    /// `int |P_xi - P_T|^q dmu`.
    Tilt { q: f64, norm: PlaneNorm },
    /// `int |H|^p dmu`.
    CurvatureMass { p: f64 },
    /// `int f dmu`.
    WeightedMass { s: f64 },
    /// `int f^r dmu`.
    WeightedPowerMass { s: f64, r: f64 },
}

impl QuantityKind {
    pub fn functional(&self) -> SurfaceFunctional {
        match *self {
            QuantityKind::MassMinusPlane => SurfaceFunctional::Mass,
            QuantityKind::Height { q } => SurfaceFunctional::Height { q },
            QuantityKind::Tilt { q, norm } => SurfaceFunctional::Tilt { q, norm },
            QuantityKind::CurvatureMass { p } => SurfaceFunctional::Curvature { p },
            QuantityKind::WeightedMass { s } => SurfaceFunctional::Weighted { s },
            QuantityKind::WeightedPowerMass { s, r } => SurfaceFunctional::WeightedPower { s, r },
        }
    }

    /// Exponent `e` with `value ~ radius^e` on the example.
    pub fn predicted_exponent(&self, ex: &ExampleVarifold) -> f64 {
        let d = &ex.derived;
        let n = d.n as f64;
        match *self {
            QuantityKind::MassMinusPlane => n + d.kappa,
            QuantityKind::Height { q } => q + n + d.kappa,
            QuantityKind::Tilt { .. } => n + d.lambda,
            QuantityKind::CurvatureMass { p } => d.b * d.a * (1.0 - p) + (n - 1.0) * d.a,
            QuantityKind::WeightedMass { s } => s,
            QuantityKind::WeightedPowerMass { s, r } => (s - n * d.a) * r + n * d.a,
        }
    }

    pub fn default_tolerance(&self) -> f64 {
        match self {
            QuantityKind::Height { .. } | QuantityKind::Tilt { .. } => EXCESS_TOLERANCE,
            _ => POWER_LAW_TOLERANCE,
        }
    }

    /// Checks the exponents against the example's validity ranges.
    pub fn validate(&self, ex: &ExampleVarifold) -> Result<()> {
        let n = ex.n() as f64;
        let bad = |m: String| Err(Error::Config(m));
        match *self {
            QuantityKind::Height { q } | QuantityKind::Tilt { q, .. } if !(q >= 1.0) => {
                bad(format!("exponent q = {q} must be at least 1"))
            }
            QuantityKind::CurvatureMass { p } if !(p >= 1.0 && p < n) => {
                bad(format!("curvature exponent p = {p} outside [1, n)"))
            }
            QuantityKind::WeightedMass { s } if !(s > n) => bad(format!("weight exponent s = {s} must exceed n")),
            QuantityKind::WeightedPowerMass { s, r } if !(r > 1.0 && s > n + (1.0 - 1.0 / r) * ex.derived.kappa) => {
                bad(format!("weight exponents s = {s}, r = {r} violate s > n + (1 - 1/r) alpha2*q2"))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            QuantityKind::MassMinusPlane => "mass_minus_plane".into(),
            QuantityKind::Height { q } => format!("height(q={q})"),
            QuantityKind::Tilt { q, norm } => format!("tilt(q={q},{norm:?})").to_lowercase(),
            QuantityKind::CurvatureMass { p } => format!("curvature_mass(p={p})"),
            QuantityKind::WeightedMass { s } => format!("weighted_mass(s={s})"),
            QuantityKind::WeightedPowerMass { s, r } => format!("weighted_power_mass(s={s},r={r})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileGeometry {
    /// Cubes `C(x, 2^-i)`, bracketed by whole-cell counts.
    #[default]
    Cube,
    /// Closed balls `B(x, 2^-i)`, bracketed surface by surface.
    Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub i: u32,
    pub radius: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per-radius brackets of `kind` about the window center.
pub fn dyadic_profile(
    ex: &ExampleVarifold,
    kind: &QuantityKind,
    i_min: u32,
    i_max: u32,
    geometry: ProfileGeometry,
) -> Result<Vec<ProfileRow>> {
    if i_min > i_max {
        return Err(Error::Config(format!("empty radius range [{i_min}, {i_max}]")));
    }
    kind.validate(ex)?;
    if i_max > ex.max_level() {
        return Err(Error::Tail(format!(
            "i_max = {i_max} exceeds the truncation level {}",
            ex.max_level()
        )));
    }
    let tail = ex.tail_bound(i_max)?;
    if tail > DEFAULT_TAIL_THRESHOLD {
        return Err(Error::Tail(format!(
            "relative tail {tail:.3e} at i = {i_max} exceeds {DEFAULT_TAIL_THRESHOLD:e}; raise max_level"
        )));
    }
    let functional = kind.functional();
    let x: Vec<Dyadic> = ex.window.center.clone();
    let mut ball_center = vec![0.0];
    ball_center.extend(ex.window.center_f64());
    (i_min..=i_max)
        .into_par_iter()
        .map(|i| {
            let radius = (-(i as f64)).exp2();
            let b = match geometry {
                ProfileGeometry::Cube => ex.cube_bracket(i, &x, &functional)?,
                ProfileGeometry::Ball => ex.ball_bracket_surfaces(&ball_center, radius, &functional)?,
            };
            Ok(ProfileRow {
                i,
                radius,
                lower: b.lower,
                upper: b.upper,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope_lower: f64,
    pub slope_upper: f64,
    pub intercept_lower: f64,
    pub intercept_upper: f64,
    /// Largest absolute deviation of `log2 value` from the fitted line.
    pub residual_lower: f64,
    pub residual_upper: f64,
}

/// Least squares line through `(xs, ys)`: `(slope, intercept, max residual)`.
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    (slope, intercept, residual)
}

/// Fits `log2 value = slope * log2 radius + intercept` for each bracket.
pub fn fit_slope(rows: &[ProfileRow]) -> Result<SlopeFit> {
    if rows.len() < 3 {
        return Err(Error::Domain(format!("slope fit needs at least 3 radii, got {}", rows.len())));
    }
    let mut xs = Vec::with_capacity(rows.len());
    let mut lo = Vec::with_capacity(rows.len());
    let mut hi = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        for v in [r.radius, r.lower, r.upper] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::LogDomain { row: k, value: v });
            }
        }
        xs.push(r.radius.log2());
        lo.push(r.lower.log2());
        hi.push(r.upper.log2());
    }
    let (slope_lower, intercept_lower, residual_lower) = ols(&xs, &lo);
    let (slope_upper, intercept_upper, residual_upper) = ols(&xs, &hi);
    Ok(SlopeFit {
        slope_lower,
        slope_upper,
        intercept_lower,
        intercept_upper,
        residual_lower,
        residual_upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub kind: QuantityKind,
    pub label: String,
    pub geometry: ProfileGeometry,
    pub rows: Vec<ProfileRow>,
    pub fit: SlopeFit,
    pub predicted: f64,
    pub tolerance: f64,
    /// Relative truncation error bound at the smallest radius.
    pub tail_bound: f64,
    pub pass: bool,
}

pub fn scaling_report(
    ex: &ExampleVarifold,
    kind: QuantityKind,
    i_min: u32,
    i_max: u32,
    geometry: ProfileGeometry,
    tolerance: Option<f64>,
) -> Result<ScalingReport> {
    let rows = dyadic_profile(ex, &kind, i_min, i_max, geometry)?;
    let fit = fit_slope(&rows)?;
    let predicted = kind.predicted_exponent(ex);
    let tolerance = tolerance.unwrap_or_else(|| kind.default_tolerance());
    let pass = (fit.slope_lower - predicted).abs() <= tolerance
        && (fit.slope_upper - predicted).abs() <= tolerance;
    Ok(ScalingReport {
        label: kind.label(),
        kind,
        geometry,
        rows,
        fit,
        predicted,
        tolerance,
        tail_bound: ex.tail_bound(i_max)?,
        pass,
    })
}

/// Ball measures needed by the excess-set scans.
pub trait BallMeasures: Sync {
    fn dim(&self) -> usize;
    fn exponent(&self) -> f64;
    fn mass_ball(&self, x: &[f64], radius: f64) -> Result<Bracket>;
    fn psi_ball(&self, x: &[f64], radius: f64) -> Result<Bracket>;
    /// `||delta mu||` of the closed ball, whatever the exponent.
    fn variation_ball(&self, x: &[f64], radius: f64) -> Result<Bracket>;
    /// Fails with a margin error unless `B(x, margin)` lies in the domain.
    fn check_probe(&self, x: &[f64], margin: f64) -> Result<()>;
}

impl BallMeasures for ExampleVarifold {
    fn dim(&self) -> usize {
        self.n()
    }

    fn exponent(&self) -> f64 {
        self.config.p
    }

    fn mass_ball(&self, x: &[f64], radius: f64) -> Result<Bracket> {
        self.ball_bracket(x, radius, &SurfaceFunctional::Mass)
    }

    fn psi_ball(&self, x: &[f64], radius: f64) -> Result<Bracket> {
        self.ball_bracket(x, radius, &SurfaceFunctional::Curvature { p: self.config.p })
    }

    fn variation_ball(&self, x: &[f64], radius: f64) -> Result<Bracket> {
        // Closed surfaces over a flat plane: no boundary term.
        self.ball_bracket(x, radius, &SurfaceFunctional::Curvature { p: 1.0 })
    }

    fn check_probe(&self, x: &[f64], margin: f64) -> Result<()> {
        // Reuse the window check of a ball query.
        self.ball_bracket_surfaces(x, margin, &SurfaceFunctional::Mass).map(|_| ())
    }
}

/// A discrete varifold lives in all of `R^(n+m)`; probes need no margin.
impl BallMeasures for DiscreteVarifold {
    fn dim(&self) -> usize {
        self.n
    }

    fn exponent(&self) -> f64 {
        self.p
    }

    fn mass_ball(&self, x: &[f64], radius: f64) -> Result<Bracket> {
        self.mass_in(&Region::ball(x.to_vec(), radius))
    }

    fn psi_ball(&self, x: &[f64], radius: f64) -> Result<Bracket> {
        self.curvature_measure(&Region::ball(x.to_vec(), radius))
    }

    fn variation_ball(&self, x: &[f64], radius: f64) -> Result<Bracket> {
        self.variation_in(&Region::ball(x.to_vec(), radius))
    }

    fn check_probe(&self, x: &[f64], _margin: f64) -> Result<()> {
        if x.len() != self.ambient() {
            return Err(Error::Dimension(format!(
                "probe has {} coordinates, ambient dimension is {}",
                x.len(),
                self.ambient()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Membership {
    /// Certified member, witnessed at `radius`.
    Member { radius: f64 },
    /// Certified non-member on every scanned radius.
    NonMember,
    /// Brackets too wide to decide.
    Undetermined,
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeScan {
    pub probe: Vec<f64>,
    /// `(i, membership in B_i)` per requested `i`.
    pub membership: Vec<(u32, Membership)>,
}

/// Default `epsilon = (2 gamma)^(-p/(n-p))` for a candidate `gamma`.
pub fn default_epsilon(gamma: f64, n: usize, p: f64) -> f64 {
    (2.0 * gamma).powf(-p / (n as f64 - p))
}

/// Membership of probes in `B_i`: `psi(B(x, r)) > eps^(n-p) mu(B(x, r))^(1-p/n)`
/// for some dyadic `r = 2^-k < 1/i` with `k <= k_max`.
pub fn scan_b<V: BallMeasures>(
    v: &V,
    probes: &[Vec<f64>],
    i_values: &[u32],
    epsilon: f64,
    k_max: u32,
) -> Result<Vec<ProbeScan>> {
    let n = v.dim() as f64;
    let p = v.exponent();
    if !(p < n) {
        return Err(Error::Config(format!("B_i scan needs p < n, got p = {p}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain("epsilon must be positive".into()));
    }
    let i_min = *i_values
        .iter()
        .min()
        .ok_or_else(|| Error::Config("no index i requested".into()))?;
    if i_min == 0 {
        return Err(Error::Config("indices i start at 1".into()));
    }
    let factor = epsilon.powf(n - p);
    let expo = 1.0 - p / n;
    probes
        .par_iter()
        .map(|x| {
            v.check_probe(x, 1.0 / i_min as f64)?;
            // Smallest k with 2^-k < 1/i_min.
            let k0 = first_k(i_min);
            let per_k = (k0..=k_max)
                .map(|k| {
                    let r = (-(k as f64)).exp2();
                    let mu = v.mass_ball(x, r)?;
                    let psi = v.psi_ball(x, r)?;
                    let member = psi.lower > factor * mu.upper.powf(expo);
                    let outside = psi.upper <= factor * mu.lower.powf(expo);
                    Ok((k, r, member, outside))
                })
                .collect::<Result<Vec<_>>>()?;
            let membership = i_values
                .iter()
                .map(|&i| {
                    let ki = first_k(i);
                    let relevant: Vec<_> = per_k.iter().filter(|t| t.0 >= ki).collect();
                    let status = if let Some(t) = relevant.iter().find(|t| t.2) {
                        Membership::Member { radius: t.1 }
                    } else if relevant.iter().all(|t| t.3) {
                        Membership::NonMember
                    } else {
                        Membership::Undetermined
                    };
                    (i, status)
                })
                .collect();
            Ok(ProbeScan {
                probe: x.clone(),
                membership,
            })
        })
        .collect()
}

/// Smallest `k` with `2^-k < 1/i`.
fn first_k(i: u32) -> u32 {
    let mut k = 0;
    while (1u64 << k) <= u64::from(i) {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DScan {
    /// Per probe, whether it lies in `D_i(a)` within the scanned radii.
    pub membership: Vec<(Vec<f64>, bool)>,
    /// `(r, mu(D_i(a) cap B(a, r)) / r^(n + alpha q))` over dyadic `r`.
    pub decay: Vec<(f64, f64)>,
}

/// Membership in `D_i(a)`: `int_B(x,r) |f - f(a)|^q dmu > eps mu(B(x, r))`
/// for some dyadic `r < 1/i`, evaluated on the samples of a discrete
/// varifold (patches are discretized). The decay ratios use the samples
/// themselves as the probe set.
#[allow(clippy::too_many_arguments)]
pub fn scan_d<F: Fn(&[f64]) -> f64 + Sync>(
    v: &DiscreteVarifold,
    a: &[f64],
    f: F,
    i: u32,
    epsilon: f64,
    q: f64,
    alpha: f64,
    k_max: u32,
    decay_radii: &[f64],
) -> Result<DScan> {
    if a.len() != v.ambient() {
        return Err(Error::Dimension("base point a has wrong length".into()));
    }
    if i == 0 || !(epsilon > 0.0) || !(q >= 1.0) || !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config("need i >= 1, epsilon > 0, q >= 1, 0 < alpha <= 1".into()));
    }
    let disc = v.discretized(crate::varifold_core::DEFAULT_RESOLUTION);
    let fa = f(a);
    let k0 = first_k(i);
    let in_d = |x: &[f64]| -> bool {
        (k0..=k_max).any(|k| {
            let r2 = (-(k as f64)).exp2().powi(2);
            let (mut mass, mut acc) = (0.0, 0.0);
            for s in disc.samples.iter().filter(|s| dist2(&s.position, x) <= r2) {
                mass += s.weight;
                acc += s.weight * (f(&s.position) - fa).abs().powf(q);
            }
            acc > epsilon * mass
        })
    };
    let flags: Vec<bool> = disc.samples.par_iter().map(|s| in_d(&s.position)).collect();
    let n = v.n as f64;
    let decay = decay_radii
        .iter()
        .map(|&r| {
            let m: f64 = disc
                .samples
                .iter()
                .zip(&flags)
                .filter(|(s, &fl)| fl && dist2(&s.position, a) <= r * r)
                .map(|(s, _): (&VarifoldSample, _)| s.weight)
                .sum();
            (r, m / r.powf(n + alpha * q))
        })
        .collect();
    Ok(DScan {
        membership: disc
            .samples
            .iter()
            .zip(flags)
            .map(|(s, fl)| (s.position.clone(), fl))
            .collect(),
        decay,
    })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomyMeasure {
    /// `nu = f mu` with the weight function, `s = n q`.
    Weighted,
    /// `nu = mu` restricted to the complement of `T`.
    ComplementOfT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomyVerdict {
    BoundedPositive,
    TendsToInfinity,
    TendsToZero,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DichotomyRow {
    pub i: u32,
    pub radius: f64,
    pub ball: Bracket,
    pub cube: Bracket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub q: f64,
    pub measure: DichotomyMeasure,
    pub rows: Vec<DichotomyRow>,
    /// `min lower` and `max upper` of the ball ratios.
    pub bracket: Bracket,
    pub spread_limit: f64,
    /// Fitted slopes of `log2 ratio` against `i` for both brackets.
    pub trend: (f64, f64),
    pub verdict: DichotomyVerdict,
}

/// Minimal certified per-level drift of `log2 ratio` for a trend verdict.
pub const TREND_SLOPE: f64 = 0.25;

/// Regime the ratio should show on the example: the complement of `T`
/// has `nu(B(0, r)) ~ r^(n + kappa)`, the weighted measure `~ r^(n q)`.
pub fn expected_dichotomy_verdict(ex: &ExampleVarifold, q: f64, measure: DichotomyMeasure) -> DichotomyVerdict {
    let n = ex.n() as f64;
    let exponent = match measure {
        DichotomyMeasure::ComplementOfT => n + ex.derived.kappa,
        DichotomyMeasure::Weighted => n * q,
    };
    let gap = n * q - exponent;
    if gap.abs() <= 1e-12 * exponent {
        DichotomyVerdict::BoundedPositive
    } else if gap > 0.0 {
        DichotomyVerdict::TendsToInfinity
    } else {
        DichotomyVerdict::TendsToZero
    }
}

/// `nu(B(a, 2^-i)) / 2^(-i n q)` about the window center, with a cube
/// variant from whole-cell counts.
pub fn dichotomy_ratio(
    ex: &ExampleVarifold,
    q: f64,
    measure: DichotomyMeasure,
    i_min: u32,
    i_max: u32,
    spread_limit: f64,
) -> Result<DichotomyReport> {
    let n = ex.n() as f64;
    if !(q >= 1.0) {
        return Err(Error::Config(format!("q = {q} must be at least 1")));
    }
    if i_max < i_min + 2 {
        return Err(Error::Config("need at least three radii".into()));
    }
    let functional = match measure {
        DichotomyMeasure::ComplementOfT => SurfaceFunctional::Mass,
        DichotomyMeasure::Weighted => {
            let (Some(s), Some(r)) = (ex.config.s, ex.config.r) else {
                return Err(Error::Config("weighted measure needs s and r in the config".into()));
            };
            if ex.derived.kappa != ex.derived.lambda {
                return Err(Error::Config("weighted regime needs alpha1*q1 = alpha2*q2".into()));
            }
            if (s - n * q).abs() > 1e-12 * s {
                return Err(Error::Config(format!("weighted regime needs s = n q = {}, got s = {s}", n * q)));
            }
            let _ = r;
            SurfaceFunctional::Weighted { s }
        }
    };
    let tail = ex.tail_bound(i_max)?;
    if tail > DEFAULT_TAIL_THRESHOLD {
        return Err(Error::Tail(format!("relative tail {tail:.3e} at i = {i_max}")));
    }
    let x = ex.window.center.clone();
    let mut center = vec![0.0];
    center.extend(ex.window.center_f64());
    let rows = (i_min..=i_max)
        .into_par_iter()
        .map(|i| {
            let radius = (-(i as f64)).exp2();
            let norm = (-(i as f64) * n * q).exp2();
            let ball = ex.ball_bracket_surfaces(&center, radius, &functional)?;
            let cube = ex.cube_bracket(i, &x, &functional)?;
            Ok(DichotomyRow {
                i,
                radius,
                ball: Bracket {
                    lower: ball.lower / norm,
                    upper: ball.upper / norm,
                },
                cube: Bracket {
                    lower: cube.lower / norm,
                    upper: cube.upper / norm,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bracket = Bracket {
        lower: rows.iter().map(|r| r.ball.lower).fold(f64::INFINITY, f64::min),
        upper: rows.iter().map(|r| r.ball.upper).fold(0.0, f64::max),
    };
    let profile: Vec<ProfileRow> = rows
        .iter()
        .map(|r| ProfileRow {
            i: r.i,
            // Fit against i, so radius enters as 2^i.
            radius: (r.i as f64).exp2(),
            lower: r.ball.lower,
            upper: r.ball.upper,
        })
        .collect();
    let verdict_fit = fit_slope(&profile);
    let trend = verdict_fit
        .as_ref()
        .map(|f| (f.slope_lower, f.slope_upper))
        .unwrap_or((0.0, 0.0));
    let increasing = rows.windows(2).all(|w| w[1].ball.lower > w[0].ball.upper);
    let decreasing = rows.windows(2).all(|w| w[1].ball.upper < w[0].ball.lower);
    let verdict = if verdict_fit.is_err() {
        DichotomyVerdict::Inconclusive
    } else if increasing && trend.0.min(trend.1) >= TREND_SLOPE {
        DichotomyVerdict::TendsToInfinity
    } else if decreasing && trend.0.max(trend.1) <= -TREND_SLOPE {
        DichotomyVerdict::TendsToZero
    } else if bracket.lower > 0.0 && bracket.upper / bracket.lower <= spread_limit {
        DichotomyVerdict::BoundedPositive
    } else {
        DichotomyVerdict::Inconclusive
    };
    Ok(DichotomyReport {
        q,
        measure,
        rows,
        bracket,
        spread_limit,
        trend,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example_generator::{build_example, ExampleConfig};
    use approx::assert_relative_eq;

    fn rows_from(values: &[(f64, f64)]) -> Vec<ProfileRow> {
        values
            .iter()
            .enumerate()
            .map(|(k, &(lo, hi))| ProfileRow {
                i: k as u32,
                radius: (-(k as f64)).exp2(),
                lower: lo,
                upper: hi,
            })
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let rows = rows_from(&(0..6).map(|i| ((-5.0 * i as f64).exp2(), (-5.0 * i as f64).exp2())).collect::<Vec<_>>());
        let fit = fit_slope(&rows).unwrap();
        assert_relative_eq!(fit.slope_lower, 5.0, epsilon = 1e-12);
        assert!(fit.residual_upper < 1e-12);
    }

    #[test]
    fn constant_data() {
        let fit = fit_slope(&rows_from(&[(3.0, 4.0); 5])).unwrap();
        assert!(fit.slope_lower.abs() < 1e-12 && fit.slope_upper.abs() < 1e-12);
    }

    #[test]
    fn log_domain_and_short_input() {
        assert!(matches!(
            fit_slope(&rows_from(&[(1.0, 1.0), (0.0, 1.0), (1.0, 1.0)])),
            Err(Error::LogDomain { row: 1, .. })
        ));
        assert!(fit_slope(&rows_from(&[(1.0, 1.0), (1.0, 1.0)])).is_err());
    }

    #[test]
    fn bracket_wobble_bound() {
        // Upper bracket wobbles by at most a factor 2 around the lower one.
        let span = 6;
        let data: Vec<(f64, f64)> = (0..=span)
            .map(|i| {
                let base = (-3.0 * i as f64).exp2();
                (base, base * if i % 2 == 0 { 2.0 } else { 1.0 })
            })
            .collect();
        let fit = fit_slope(&rows_from(&data)).unwrap();
        assert!((fit.slope_lower - fit.slope_upper).abs() <= 1.0 / span as f64);
    }

    #[test]
    fn first_k_values() {
        assert_eq!(first_k(1), 1);
        assert_eq!(first_k(2), 2);
        assert_eq!(first_k(3), 2);
        assert_eq!(first_k(4), 3);
    }

    #[test]
    fn mass_profile_ratio_approaches_prediction() {
        let ex = build_example(&ExampleConfig {
            max_level: 14,
            ..ExampleConfig::default()
        })
        .unwrap();
        let rows = dyadic_profile(&ex, &QuantityKind::MassMinusPlane, 2, 6, ProfileGeometry::Cube).unwrap();
        for w in rows.windows(2) {
            let ratio = w[1].upper / w[0].upper;
            assert!((ratio.log2() + 5.0).abs() < 0.1, "{ratio}");
        }
    }

    #[test]
    fn tail_error_for_shallow_truncation() {
        let ex = build_example(&ExampleConfig {
            max_level: 6,
            ..ExampleConfig::default()
        })
        .unwrap();
        let err = dyadic_profile(&ex, &QuantityKind::MassMinusPlane, 2, 6, ProfileGeometry::Cube);
        assert!(matches!(err, Err(Error::Tail(_))));
    }

    #[test]
    fn weighted_regime_mismatch_is_config_error() {
        let ex = build_example(&ExampleConfig {
            max_level: 12,
            ..ExampleConfig::default()
        })
        .unwrap();
        let err = dichotomy_ratio(&ex, 2.0, DichotomyMeasure::Weighted, 2, 5, 10.0);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
