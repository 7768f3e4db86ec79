//! The scaling example: the plane `T = {0} x R^n` together with one small
//! pillbox surface in every slab cell of every level, truncated to a window
//! and a maximal level.
//!
//! Reported numbers come from aggregates (cell counts times per-surface
//! integrals). Sampled clouds exist only as independent oracles.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_lattice::{
    count_cells, enumerate_cells, window_cell_count, CountMode, Dyadic, Window,
};
use crate::error::{Error, Result};
use crate::quadrature::Adaptive;
use crate::revolved_profile::{
    height_moment, sample_surface, unit_ball_volume, unit_integrals, IntegralRequest, PlaneNorm,
    PlacedSurface, ProfileCurve, ProfileGeometry, ProfilePoint, UnitSurfaceIntegrals,
};
use crate::varifold_core::{Bracket, DiscreteVarifold, TangentPlane, VarifoldSample};

pub const DEFAULT_MAX_LEVEL: u32 = 18;

/// Largest admissible relative truncation error for reports.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-3;

/// Straddling surfaces per level integrated exactly; beyond this a level
/// contributes `[0, count * value]`.
const STRADDLE_BUDGET: usize = 20_000;

/// Lattice rows scanned per level for ball classification.
const ROW_BUDGET: u128 = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    /// Center within `T`, `n` coordinates, each a dyadic rational.
    pub center: Vec<f64>,
    /// Dyadic rational half-width.
    pub half_width: f64,
}

fn default_max_level() -> u32 {
    DEFAULT_MAX_LEVEL
}

fn default_true() -> bool {
    true
}

fn default_threshold() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleConfig {
    pub n: usize,
    pub p: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub q1: f64,
    pub q2: f64,
    /// Defaults to the cube of half-width 1 about the origin of `T`.
    #[serde(default)]
    pub window: Option<WindowSpec>,
    #[serde(default = "default_max_level")]
    pub max_level: u32,
    /// Weight exponent `s` of the weight function.
    #[serde(default)]
    pub s: Option<f64>,
    /// Integrability exponent `r` of the weight function.
    #[serde(default)]
    pub r: Option<f64>,
    /// Whether the plane `T` is part of the varifold.
    #[serde(default = "default_true")]
    pub include_plane: bool,
    #[serde(default)]
    pub norm: PlaneNorm,
    /// Tilt level for the superlevel-set measure.
    #[serde(default = "default_threshold")]
    pub tilt_threshold: f64,
}

impl Default for ExampleConfig {
    fn default() -> Self {
        Self {
            n: 2,
            p: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
            q1: 3.0,
            q2: 3.0,
            window: None,
            max_level: DEFAULT_MAX_LEVEL,
            s: None,
            r: None,
            include_plane: true,
            norm: PlaneNorm::Frobenius,
            tilt_threshold: 1.0,
        }
    }
}

impl ExampleConfig {
    /// Configuration with `alpha1 q1 = alpha2 q2 = kappa`.
    pub fn with_kappa(n: usize, p: f64, kappa: f64) -> Self {
        Self {
            n,
            p,
            q1: kappa,
            q2: kappa,
            ..Self::default()
        }
    }

    pub fn kappa(&self) -> f64 {
        self.alpha2 * self.q2
    }

    pub fn lambda(&self) -> f64 {
        self.alpha1 * self.q1
    }

    pub fn window(&self) -> Result<Window> {
        match &self.window {
            None => Window::centered(self.n, Dyadic::integer(1)),
            Some(spec) => {
                if spec.center.len() != self.n {
                    return Err(Error::Config(format!(
                        "window center has {} coordinates, expected n = {}",
                        spec.center.len(),
                        self.n
                    )));
                }
                let center = spec
                    .center
                    .iter()
                    .map(|&c| Dyadic::from_f64(c))
                    .collect::<Result<Vec<_>>>()?;
                Window::new(center, Dyadic::from_f64(spec.half_width)?)
            }
        }
    }

    /// Checks every hypothesis; the error names the violated inequality.
    pub fn validate(&self) -> Result<()> {
        let n = self.n as f64;
        if self.n < 2 {
            return Err(Error::Config(format!("n = {} must be at least 2", self.n)));
        }
        if !(self.p >= 1.0 && self.p < n) {
            return Err(Error::Config(format!("p = {} must satisfy 1 <= p < n = {}", self.p, self.n)));
        }
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} = {v} must lie in (0, 1]")));
            }
        }
        for (name, v) in [("q1", self.q1), ("q2", self.q2)] {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must lie in [1, inf)")));
            }
        }
        let kappa = self.kappa();
        let lambda = self.lambda();
        if kappa > lambda {
            return Err(Error::Ordering { kappa, tilt: lambda });
        }
        let rhs = 1.0 + (kappa / lambda) * (1.0 / n + 1.0 / kappa - 1.0);
        if !(1.0 / self.p > rhs) {
            return Err(Error::Threshold(if kappa == lambda {
                format!(
                    "alpha2*q2 = {kappa} must exceed np/(n-p) = {}",
                    n * self.p / (n - self.p)
                )
            } else {
                format!("1/p = {} must exceed 1 + (alpha2*q2/alpha1*q1)(1/n + 1/(alpha2*q2) - 1) = {rhs}", 1.0 / self.p)
            }));
        }
        if let Some(r) = self.r {
            if !(r > 1.0 && r.is_finite()) {
                return Err(Error::Config(format!("r = {r} must satisfy 1 < r < inf")));
            }
            if self.s.is_none() {
                return Err(Error::Config("r given without s".into()));
            }
        }
        if let Some(s) = self.s {
            let bound = n + (1.0 - 1.0 / self.r.unwrap_or(1.0)) * kappa;
            if !(s > bound && s.is_finite()) {
                return Err(Error::Threshold(format!(
                    "s = {s} must exceed n + (1 - 1/r) alpha2*q2 = {bound}"
                )));
            }
        }
        if self.max_level > crate::dyadic_lattice::MAX_LEVEL {
            return Err(Error::Capacity(format!(
                "max_level {} exceeds {}",
                self.max_level,
                crate::dyadic_lattice::MAX_LEVEL
            )));
        }
        if !(self.tilt_threshold >= 0.0) {
            return Err(Error::Config("tilt_threshold must be nonnegative".into()));
        }
        self.window()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    pub n: usize,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    pub lambda: f64,
}

impl DerivedScales {
    /// `rho_j = 2^(-j a - 2)`.
    pub fn rho(&self, j: u32) -> f64 {
        (-(j as f64) * self.a - 2.0).exp2()
    }

    /// `sigma_j = 2^(-j b a - 2)`.
    pub fn sigma(&self, j: u32) -> f64 {
        (-(j as f64) * self.b * self.a - 2.0).exp2()
    }

    /// `tau_j = sigma_j / rho_j`, computed without cancellation.
    pub fn tau(&self, j: u32) -> f64 {
        (-(j as f64) * (self.b - 1.0) * self.a).exp2()
    }

    /// Placement scale `2 rho_j` of the unit surface.
    pub fn scale(&self, j: u32) -> f64 {
        2.0 * self.rho(j)
    }

    /// Height of the cell centers of level `j`.
    pub fn y_center(&self, j: u32) -> f64 {
        3.0 * (-(j as f64) - 2.0).exp2()
    }

    /// Consecutive-level ratio of mass per unit area of `T`.
    pub fn mass_level_ratio(&self) -> f64 {
        (self.n as f64 * (1.0 - self.a)).exp2()
    }

    /// Consecutive-level ratio of `int |H|^p` per unit area of `T`.
    pub fn curvature_level_ratio(&self) -> f64 {
        let n = self.n as f64;
        (n - self.b * self.a * (1.0 - self.p) + (1.0 - n) * self.a).exp2()
    }

    pub fn level_table(&self, max_level: u32) -> Vec<LevelScales> {
        (0..=max_level)
            .map(|j| LevelScales {
                level: j,
                rho: self.rho(j),
                sigma: self.sigma(j),
                tau: self.tau(j),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelScales {
    pub level: u32,
    pub rho: f64,
    pub sigma: f64,
    pub tau: f64,
}

pub fn derive_parameters(config: &ExampleConfig) -> Result<DerivedScales> {
    config.validate()?;
    let n = config.n as f64;
    let kappa = config.kappa();
    let lambda = config.lambda();
    let a = kappa / n + 1.0;
    let b = (lambda - kappa) / a + 1.0;
    Ok(DerivedScales {
        n: config.n,
        p: config.p,
        a,
        b,
        kappa,
        lambda,
    })
}

/// `2^((n a - s) j)`, the weight on level-`j` surfaces. The weight vanishes
/// on `T`, which callers handle by never applying it there.
pub fn weight_value(derived: &DerivedScales, j: u32, s: f64) -> f64 {
    ((derived.n as f64 * derived.a - s) * j as f64).exp2()
}

/// Bound on the mass of levels beyond `max_level` inside `C(x, 2^-i) \ T`,
/// relative to the level-`i` upper aggregate: each further level carries at
/// most `2^(n(1-a))` times the previous one.
pub fn tail_bound(derived: &DerivedScales, i: u32, max_level: u32) -> Result<f64> {
    if max_level < i {
        return Err(Error::Domain(format!("truncation level {max_level} below report level {i}")));
    }
    let ratio = derived.mass_level_ratio();
    Ok(ratio.powi((max_level - i + 1) as i32) / (1.0 - ratio))
}

/// Odometer step, last axis fastest; false once every index wrapped.
fn advance(index: &mut [i64], ranges: &[(i64, i64)]) -> bool {
    for axis in (0..index.len()).rev() {
        if index[axis] < ranges[axis].1 {
            index[axis] += 1;
            return true;
        }
        index[axis] = ranges[axis].0;
    }
    false
}

/// Functional integrated over each surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "snake_case")]
pub enum SurfaceFunctional {
    Mass,
    /// `int dist(xi - x, T)^q`.
    Height { q: f64 },
    /// `int |P_xi - P_T|^q`.
    Tilt { q: f64, norm: PlaneNorm },
    /// `int |H|^p`, or `||delta mu||` when `p = 1` (closed surfaces).
    Curvature { p: f64 },
    /// `int f`.
    Weighted { s: f64 },
    /// `int f^r`.
    WeightedPower { s: f64, r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAggregate {
    pub level: u32,
    pub rho: f64,
    pub sigma: f64,
    pub tau: f64,
    pub scale: f64,
    pub y_center: f64,
    /// Cells whose closure meets the window.
    pub cells_in_window: u128,
    pub unit: UnitSurfaceIntegrals,
    pub cell_mass: f64,
    pub cell_height: f64,
    pub cell_tilt: f64,
    pub cell_curvature: f64,
    pub cell_weighted: Option<f64>,
    pub level_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleVarifold {
    pub config: ExampleConfig,
    pub derived: DerivedScales,
    pub window: Window,
    pub levels: Vec<LevelAggregate>,
    /// `H^n(T cap window)` when the plane is included, else 0.
    pub plane_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleManifest {
    pub config: ExampleConfig,
    pub derived: DerivedScales,
    pub scales: Vec<LevelScales>,
    pub cells_in_window: Vec<u128>,
    pub level_mass: Vec<f64>,
    pub plane_mass: f64,
    pub mass_level_ratio: f64,
    pub curvature_level_ratio: f64,
    /// `(i, tail_bound(i))` for every report level up to `max_level`.
    pub tail_bounds: Vec<(u32, f64)>,
}

pub fn build_example(config: &ExampleConfig) -> Result<ExampleVarifold> {
    let derived = derive_parameters(config)?;
    let window = config.window()?;
    let levels = (0..=config.max_level)
        .into_par_iter()
        .map(|j| level_aggregate(config, &derived, &window, j))
        .collect::<Result<Vec<_>>>()?;
    let plane_mass = if config.include_plane {
        (2.0 * window.half_width.to_f64()).powi(config.n as i32)
    } else {
        0.0
    };
    Ok(ExampleVarifold {
        config: config.clone(),
        derived,
        window,
        levels,
        plane_mass,
    })
}

fn level_aggregate(
    config: &ExampleConfig,
    derived: &DerivedScales,
    window: &Window,
    j: u32,
) -> Result<LevelAggregate> {
    let geom = ProfileGeometry::new(derived.tau(j), config.n)?;
    let req = IntegralRequest {
        p: config.p,
        q: config.q1,
        norm: config.norm,
        threshold: config.tilt_threshold,
        ..IntegralRequest::default()
    };
    let unit = unit_integrals(&geom, &req)?;
    let scale = derived.scale(j);
    let y_center = derived.y_center(j);
    let sn = scale.powi(config.n as i32);
    let cell_mass = sn * unit.mass;
    let cells_in_window = window_cell_count(window, j)?;
    Ok(LevelAggregate {
        level: j,
        rho: derived.rho(j),
        sigma: derived.sigma(j),
        tau: derived.tau(j),
        scale,
        y_center,
        cells_in_window,
        unit,
        cell_mass,
        cell_height: sn * height_moment(&geom, config.q2, y_center, scale)?,
        cell_tilt: sn * unit.tilt_moment,
        cell_curvature: scale.powf(config.n as f64 - config.p) * unit.curvature_moment,
        cell_weighted: config.s.map(|s| weight_value(derived, j, s) * cell_mass),
        level_mass: cells_in_window as f64 * cell_mass,
    })
}

impl ExampleVarifold {
    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn max_level(&self) -> u32 {
        self.config.max_level
    }

    pub fn level(&self, j: u32) -> Result<&LevelAggregate> {
        self.levels
            .get(j as usize)
            .ok_or_else(|| Error::Domain(format!("level {j} beyond truncation {}", self.max_level())))
    }

    pub fn geometry(&self, j: u32) -> Result<ProfileGeometry> {
        ProfileGeometry::new(self.derived.tau(j), self.n())
    }

    pub fn tail_bound(&self, i: u32) -> Result<f64> {
        tail_bound(&self.derived, i, self.max_level())
    }

    pub fn manifest(&self) -> Result<ExampleManifest> {
        Ok(ExampleManifest {
            config: self.config.clone(),
            derived: self.derived,
            scales: self.derived.level_table(self.max_level()),
            cells_in_window: self.levels.iter().map(|l| l.cells_in_window).collect(),
            level_mass: self.levels.iter().map(|l| l.level_mass).collect(),
            plane_mass: self.plane_mass,
            mass_level_ratio: self.derived.mass_level_ratio(),
            curvature_level_ratio: self.derived.curvature_level_ratio(),
            tail_bounds: (0..=self.max_level())
                .map(|i| Ok((i, self.tail_bound(i)?)))
                .collect::<Result<_>>()?,
        })
    }

    /// Integral of `functional` over one whole level-`j` surface, with the
    /// height measured from a point of `T`.
    pub fn per_cell(&self, j: u32, functional: &SurfaceFunctional) -> Result<f64> {
        let agg = self.level(j)?;
        let geom = self.geometry(j)?;
        let sn = agg.scale.powi(self.n() as i32);
        Ok(match *functional {
            SurfaceFunctional::Mass => agg.cell_mass,
            SurfaceFunctional::Height { q } => sn * height_moment(&geom, q, agg.y_center, agg.scale)?,
            SurfaceFunctional::Tilt { q, norm } => {
                let req = IntegralRequest {
                    q,
                    norm,
                    ..IntegralRequest::default()
                };
                sn * unit_integrals(&geom, &req)?.tilt_moment
            }
            SurfaceFunctional::Curvature { p } => {
                let req = IntegralRequest {
                    p,
                    ..IntegralRequest::default()
                };
                agg.scale.powf(self.n() as f64 - p) * unit_integrals(&geom, &req)?.curvature_moment
            }
            SurfaceFunctional::Weighted { s } => weight_value(&self.derived, j, s) * agg.cell_mass,
            SurfaceFunctional::WeightedPower { s, r } => {
                weight_value(&self.derived, j, s).powf(r) * agg.cell_mass
            }
        })
    }

    /// Level-`j` contribution per unit area of `T`: `(2^(j+1))^n` surfaces
    /// per unit area times the per-surface value.
    pub fn level_density(&self, j: u32, functional: &SurfaceFunctional) -> Result<f64> {
        Ok(((j + 1) as f64 * self.n() as f64).exp2() * self.per_cell(j, functional)?)
    }

    /// Brackets of `functional` over `C(x, 2^-i) \ T` for `x` in `T`:
    /// contained-cell and intersecting-cell aggregates over levels `i..=J`.
    pub fn cube_bracket(&self, i: u32, x: &[Dyadic], functional: &SurfaceFunctional) -> Result<Bracket> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!("point of T needs {} coordinates", self.n())));
        }
        (i..=self.max_level())
            .into_par_iter()
            .map(|j| {
                let v = self.per_cell(j, functional)?;
                let c = count_cells(i, j, x, CountMode::Contained)? as f64;
                let b = count_cells(i, j, x, CountMode::Intersecting)? as f64;
                Ok(Bracket {
                    lower: c * v,
                    upper: b * v,
                })
            })
            .collect::<Result<Vec<Bracket>>>()
            .map(|levels| levels.into_iter().fold(Bracket::default(), |a, b| a + b))
    }

    fn check_margin(&self, center: &[f64], radius: f64) -> Result<()> {
        if center.len() != self.n() + 1 {
            return Err(Error::Dimension(format!(
                "ball center needs {} coordinates",
                self.n() + 1
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("radius {radius} must be positive")));
        }
        let hw = self.window.half_width.to_f64();
        let wc = self.window.center_f64();
        let inside = center[0].abs() + radius <= hw
            && center[1..]
                .iter()
                .zip(&wc)
                .all(|(x, c)| (x - c).abs() + radius <= hw);
        if !inside {
            return Err(Error::Margin(format!(
                "ball of radius {radius} about {center:?} leaves the window"
            )));
        }
        Ok(())
    }

    /// `mu(B(x, r) cap T)` for the plane component.
    pub fn plane_mass_in_ball(&self, center: &[f64], radius: f64) -> f64 {
        if !self.config.include_plane || center[0].abs() > radius {
            return 0.0;
        }
        let r2 = radius * radius - center[0] * center[0];
        unit_ball_volume(self.n()) * r2.powf(self.n() as f64 / 2.0)
    }

    /// Bracket of `functional` over the closed ball `B(center, radius)`,
    /// including the plane where the functional sees it. Surfaces inside or
    /// outside the ball by their bounding box are counted exactly; the
    /// surfaces crossing the sphere are integrated individually.
    pub fn ball_bracket(&self, center: &[f64], radius: f64, functional: &SurfaceFunctional) -> Result<Bracket> {
        let mut total = self.ball_bracket_surfaces(center, radius, functional)?;
        let plane = self.plane_mass_in_ball(center, radius);
        total += Bracket::exact(match functional {
            SurfaceFunctional::Mass => plane,
            SurfaceFunctional::Height { q } => center[0].abs().powf(*q) * plane,
            _ => 0.0,
        });
        Ok(total)
    }

    /// As [`Self::ball_bracket`] but for `mu` restricted to the complement
    /// of `T`. The upper end also bounds the levels beyond truncation.
    pub fn ball_bracket_surfaces(
        &self,
        center: &[f64],
        radius: f64,
        functional: &SurfaceFunctional,
    ) -> Result<Bracket> {
        self.check_margin(center, radius)?;
        let mut total = (0..=self.max_level())
            .into_par_iter()
            .map(|j| self.ball_level(j, center, radius, functional))
            .collect::<Result<Vec<Bracket>>>()?
            .into_iter()
            .fold(Bracket::default(), |a, b| a + b);
        total.upper += self.truncated_tail_in_ball(center, radius, functional);
        Ok(total)
    }

    /// Crude bound for levels beyond `max_level` meeting a ball. Uses the
    /// area bound `2 + 2 n tau` of the unit surface (it bounds a convex
    /// body inside a box of that surface area) and `|H| <= 4/tau + 4(n-1)`.
    fn truncated_tail_in_ball(&self, x: &[f64], radius: f64, functional: &SurfaceFunctional) -> f64 {
        let n = self.n();
        let nf = n as f64;
        let mut tail = 0.0;
        for j in self.max_level() + 1..=self.max_level() + 64 {
            let top = (-(j as f64)).exp2();
            if x[0] - radius > top || x[0] + radius < 0.0 {
                continue;
            }
            let tau = self.derived.tau(j);
            let scale = self.derived.scale(j);
            let step = (-(j as f64) - 1.0).exp2();
            let per_axis = (2.0 * (radius + self.derived.rho(j)) / step).floor() + 1.0;
            let area = scale.powi(n as i32) * (2.0 + 2.0 * nf * tau);
            let per_cell = match *functional {
                SurfaceFunctional::Mass => area,
                SurfaceFunctional::Height { q } => (top + x[0].abs()).powf(q) * area,
                SurfaceFunctional::Tilt { q, .. } => 2f64.powf(q / 2.0) * area,
                SurfaceFunctional::Curvature { p } => {
                    ((4.0 / tau + 4.0 * (nf - 1.0)) / scale).powf(p) * area
                }
                SurfaceFunctional::Weighted { s } => weight_value(&self.derived, j, s) * area,
                SurfaceFunctional::WeightedPower { s, r } => {
                    weight_value(&self.derived, j, s).powf(r) * area
                }
            };
            tail += per_axis.powi(n as i32) * per_cell;
        }
        tail
    }

    fn ball_level(&self, j: u32, x: &[f64], radius: f64, functional: &SurfaceFunctional) -> Result<Bracket> {
        let n = self.n();
        let agg = self.level(j)?;
        let half_h = agg.scale * agg.tau / 2.0;
        let half_c = agg.rho;
        let (ylo, yhi) = (agg.y_center - half_h, agg.y_center + half_h);
        let dy_near = if x[0] < ylo {
            ylo - x[0]
        } else if x[0] > yhi {
            x[0] - yhi
        } else {
            0.0
        };
        if dy_near > radius {
            return Ok(Bracket::default());
        }
        let dy_far = (x[0] - ylo).abs().max((x[0] - yhi).abs());
        let step = (-(j as f64) - 1.0).exp2();
        let r2 = radius * radius;

        // Per-axis index ranges of surfaces whose box can meet the ball.
        let ranges: Vec<(i64, i64)> = x[1..]
            .iter()
            .map(|&c| {
                let lo = ((c - radius - half_c) / step).ceil() as i64;
                let hi = ((c + radius + half_c) / step).floor() as i64;
                (lo, hi)
            })
            .collect();
        let rows: u128 = ranges[..n - 1]
            .iter()
            .map(|(lo, hi)| (hi - lo + 1).max(0) as u128)
            .product();
        let value = self.per_cell(j, functional)?;
        if rows > ROW_BUDGET {
            let boxed: u128 = ranges.iter().map(|(lo, hi)| (hi - lo + 1).max(0) as u128).product();
            return Ok(Bracket {
                lower: 0.0,
                upper: boxed as f64 * value,
            });
        }

        let mut inside: u128 = 0;
        let mut straddlers: Vec<Vec<i64>> = Vec::new();
        let mut straddle_count: u128 = 0;
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return Ok(Bracket::default());
        }
        let mut index: Vec<i64> = ranges[..n - 1].iter().map(|r| r.0).collect();
        let last_c = x[n];
        loop {
            {
                let mut near2 = dy_near * dy_near;
                let mut far2 = dy_far * dy_far;
                for (axis, &k) in index.iter().enumerate() {
                    let d = (k as f64 * step - x[axis + 1]).abs();
                    near2 += (d - half_c).max(0.0).powi(2);
                    far2 += (d + half_c).powi(2);
                }
                if near2 <= r2 {
                    // Intersecting: |c - x| <= sqrt(r2 - near2) + half_c.
                    let reach = (r2 - near2).sqrt() + half_c;
                    let mlo = ((last_c - reach) / step).ceil() as i64;
                    let mhi = ((last_c + reach) / step).floor() as i64;
                    // Inside: |c - x| + half_c <= sqrt(r2 - far2).
                    let (ilo, ihi) = if far2 <= r2 {
                        let reach = (r2 - far2).sqrt() - half_c;
                        if reach >= 0.0 {
                            (((last_c - reach) / step).ceil() as i64, ((last_c + reach) / step).floor() as i64)
                        } else {
                            (1, 0)
                        }
                    } else {
                        (1, 0)
                    };
                    if mlo <= mhi {
                        let mut push = |k: i64| {
                            let mut full = index.clone();
                            full.push(k);
                            straddlers.push(full);
                        };
                        if ilo <= ihi {
                            inside += (ihi - ilo + 1) as u128;
                            let left = (ilo - mlo).max(0) as u128;
                            let right = (mhi - ihi).max(0) as u128;
                            straddle_count += left + right;
                            if straddle_count as usize <= STRADDLE_BUDGET {
                                (mlo..ilo).for_each(&mut push);
                                (ihi + 1..=mhi).for_each(&mut push);
                            }
                        } else {
                            straddle_count += (mhi - mlo + 1) as u128;
                            if straddle_count as usize <= STRADDLE_BUDGET {
                                (mlo..=mhi).for_each(&mut push);
                            }
                        }
                    }
                }
            }
            if !advance(&mut index, &ranges[..n - 1]) {
                break;
            }
        }

        let mut out = Bracket::exact(inside as f64 * value);
        if straddle_count as usize > STRADDLE_BUDGET {
            out.upper += straddle_count as f64 * value;
            return Ok(out);
        }
        // Integrate crossing surfaces once per distinct horizontal offset.
        let mut by_offset: HashMap<u64, (f64, usize)> = HashMap::new();
        for k in &straddlers {
            let d2: f64 = k
                .iter()
                .zip(&x[1..])
                .map(|(&ki, &xi)| (ki as f64 * step - xi).powi(2))
                .sum();
            by_offset.entry(d2.to_bits()).or_insert((d2.sqrt(), 0)).1 += 1;
        }
        let geom = self.geometry(j)?;
        let curve = geom.curve();
        let mut offsets: Vec<(f64, usize)> = by_offset.into_values().collect();
        offsets.sort_by(|a, b| a.0.total_cmp(&b.0));
        let partial: f64 = offsets
            .par_iter()
            .map(|&(d, count)| {
                let v = self.partial_surface(j, &curve, d, x[0], radius, functional)?;
                Ok(v * count as f64)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .sum();
        out += Bracket::exact(partial);
        Ok(out)
    }

    /// Integral over the part of a level-`j` surface inside a ball whose
    /// center has height `x0` and horizontal distance `d` from the axis.
    fn partial_surface(
        &self,
        j: u32,
        curve: &ProfileCurve,
        d: f64,
        x0: f64,
        radius: f64,
        functional: &SurfaceFunctional,
    ) -> Result<f64> {
        let n = self.n();
        let agg = self.level(j)?;
        let mut center = vec![0.0; n + 1];
        center[0] = agg.y_center;
        center[1] = d;
        let surf = PlacedSurface::new(curve.clone(), n, center, agg.scale)?;
        let mut ball = vec![0.0; n + 1];
        ball[0] = x0;
        let quad = Adaptive::default();
        let sc = agg.scale;
        let yc = agg.y_center;
        let ball_center = ball.as_slice();
        match *functional {
            SurfaceFunctional::Mass => surf.integrate_in_ball(ball_center, radius, &quad, |_| 1.0),
            SurfaceFunctional::Height { q } => {
                surf.integrate_in_ball(ball_center, radius, &quad, |pt: &ProfilePoint| {
                    (yc + sc * pt.t - x0).abs().powf(q)
                })
            }
            SurfaceFunctional::Tilt { q, norm } => {
                surf.integrate_in_ball(ball_center, radius, &quad, |pt: &ProfilePoint| pt.tilt(norm).powf(q))
            }
            SurfaceFunctional::Curvature { p } => {
                surf.integrate_in_ball(ball_center, radius, &quad, |pt: &ProfilePoint| {
                    (pt.mean_curvature(n).abs() / sc).powf(p)
                })
            }
            SurfaceFunctional::Weighted { s } => Ok(weight_value(&self.derived, j, s)
                * surf.integrate_in_ball(ball_center, radius, &quad, |_| 1.0)?),
            SurfaceFunctional::WeightedPower { s, r } => Ok(weight_value(&self.derived, j, s).powf(r)
                * surf.integrate_in_ball(ball_center, radius, &quad, |_| 1.0)?),
        }
    }

    /// Monte-Carlo estimate of the level-`j` mass inside the window.
    pub fn monte_carlo_level_mass(&self, j: u32, samples: usize, seed: u64) -> Result<f64> {
        let agg = self.level(j)?;
        let pts = sample_surface(&self.geometry(j)?, samples, seed)?;
        let unit: f64 = pts.iter().map(|s| s.weight).sum();
        Ok(agg.cells_in_window as f64 * agg.scale.powi(self.n() as i32) * unit)
    }

    /// Sampled point cloud of the truncated example up to `levels`: every
    /// surface receives the same stratified unit sample set of its level
    /// (seeded per level), and the plane a midpoint grid of
    /// `plane_resolution` points per axis.
    pub fn sampled_cloud(
        &self,
        levels: u32,
        samples_per_surface: usize,
        plane_resolution: usize,
        seed: u64,
    ) -> Result<DiscreteVarifold> {
        let n = self.n();
        let mut v = DiscreteVarifold::new(n, 1, self.config.p)?;
        for j in 0..=levels.min(self.max_level()) {
            let agg = self.level(j)?;
            let unit = sample_surface(&self.geometry(j)?, samples_per_surface, seed ^ u64::from(j))?;
            let sc = agg.scale;
            for cell in enumerate_cells(&self.window, j)? {
                let c = cell.cube.center();
                for s in &unit {
                    let mut position = Vec::with_capacity(n + 1);
                    position.push(agg.y_center + sc * s.position[0]);
                    position.extend(c.iter().zip(&s.position[1..]).map(|(ci, pi)| ci + sc * pi));
                    v.push_sample(VarifoldSample {
                        position,
                        plane: TangentPlane::from_normal(&s.normal)?,
                        weight: s.weight * sc.powi(n as i32),
                        mean_curvature: Some(s.mean_curvature.iter().map(|h| h / sc).collect()),
                        density: 1.0,
                    })?;
                }
            }
        }
        if self.config.include_plane && plane_resolution > 0 {
            let hw = self.window.half_width.to_f64();
            let wc = self.window.center_f64();
            let h = 2.0 * hw / plane_resolution as f64;
            let plane = TangentPlane::horizontal(n);
            let mut idx = vec![0usize; n];
            'grid: loop {
                let mut position = vec![0.0];
                position.extend(idx.iter().zip(&wc).map(|(&k, c)| c - hw + (k as f64 + 0.5) * h));
                v.push_sample(VarifoldSample {
                    position,
                    plane: plane.clone(),
                    weight: h.powi(n as i32),
                    mean_curvature: Some(vec![0.0; n + 1]),
                    density: 1.0,
                })?;
                for axis in (0..n).rev() {
                    idx[axis] += 1;
                    if idx[axis] < plane_resolution {
                        continue 'grid;
                    }
                    idx[axis] = 0;
                }
                break;
            }
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn small(max_level: u32) -> ExampleVarifold {
        build_example(&ExampleConfig {
            max_level,
            ..ExampleConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn default_parameters() {
        let d = derive_parameters(&ExampleConfig::default()).unwrap();
        assert_eq!(d.a, 2.5);
        assert_eq!(d.b, 1.0);
        assert_eq!(d.tau(7), 1.0);
        assert_eq!(d.rho(0), 0.25);
        assert_eq!(d.rho(2), 2f64.powi(-7));
        assert_eq!(d.mass_level_ratio(), 0.125);
    }

    #[test]
    fn rejects_threshold_and_ordering() {
        let err = derive_parameters(&ExampleConfig::with_kappa(2, 1.0, 2.0)).unwrap_err();
        assert!(matches!(err, Error::Threshold(_)), "{err}");
        let cfg = ExampleConfig {
            q2: 3.0,
            q1: 2.0,
            ..ExampleConfig::default()
        };
        assert!(matches!(derive_parameters(&cfg), Err(Error::Ordering { .. })));
        let bad_s = ExampleConfig {
            s: Some(3.0),
            r: Some(1.5),
            ..ExampleConfig::default()
        };
        assert!(matches!(derive_parameters(&bad_s), Err(Error::Threshold(_))));
        let bad_r = ExampleConfig {
            s: Some(6.0),
            r: Some(1.0),
            ..ExampleConfig::default()
        };
        assert!(matches!(derive_parameters(&bad_r), Err(Error::Config(_))));
    }

    #[test]
    fn weight_values() {
        let d = derive_parameters(&ExampleConfig::default()).unwrap();
        assert_eq!(weight_value(&d, 0, 6.0), 1.0);
        assert_eq!(weight_value(&d, 1, 6.0), 0.5);
    }

    #[test]
    fn tail_bounds() {
        let d = derive_parameters(&ExampleConfig::default()).unwrap();
        let t = tail_bound(&d, 3, 3).unwrap();
        assert_relative_eq!(t, 0.125 / 0.875, max_relative = 1e-15);
        assert!(tail_bound(&d, 2, 40).unwrap() < 1e-30);
        assert!(tail_bound(&d, 5, 4).is_err());
    }

    #[test]
    fn plane_mass_and_containment() {
        let ex = small(6);
        assert_eq!(ex.plane_mass, 4.0);
        for agg in &ex.levels {
            let j = agg.level as i32;
            assert!(agg.rho <= 2f64.powi(-j - 2));
            let half_h = agg.scale * agg.tau / 2.0;
            // Level 0 touches the closed cell, deeper levels sit strictly inside.
            assert!(agg.y_center - half_h >= 2f64.powi(-j - 1));
            assert!(agg.y_center + half_h <= 2f64.powi(-j));
            if j > 0 {
                assert!(agg.rho < 2f64.powi(-j - 2));
            }
        }
    }

    #[test]
    fn curvature_ratio_matches_closed_form() {
        let ex = small(8);
        let f = SurfaceFunctional::Curvature { p: 1.0 };
        for j in 0..8 {
            let r = ex.level_density(j + 1, &f).unwrap() / ex.level_density(j, &f).unwrap();
            assert_relative_eq!(r, ex.derived.curvature_level_ratio(), max_relative = 1e-9);
        }
        assert_relative_eq!(ex.derived.curvature_level_ratio(), 2f64.powf(-0.5), max_relative = 1e-15);
    }

    #[test]
    fn cube_bracket_is_ordered() {
        let ex = small(10);
        let x = vec![Dyadic::ZERO; 2];
        for i in 0..4 {
            let b = ex.cube_bracket(i, &x, &SurfaceFunctional::Mass).unwrap();
            assert!(0.0 < b.lower && b.lower <= b.upper);
        }
    }

    #[test]
    fn ball_bracket_matches_cube_order_and_is_tight() {
        let ex = small(12);
        for i in 2..5 {
            let r = 2f64.powi(-i);
            let b = ex
                .ball_bracket(&[0.0, 0.0, 0.0], r, &SurfaceFunctional::Mass)
                .unwrap();
            assert!(b.lower <= b.upper);
            // The plane disk dominates; the surfaces add a small amount.
            assert!(b.lower >= PI * r * r);
            assert!((b.upper - b.lower) <= 1e-6 * b.upper, "{b:?}");
        }
    }

    #[test]
    fn ball_bracket_margin() {
        let ex = small(6);
        let err = ex.ball_bracket(&[0.0, 0.9, 0.0], 0.2, &SurfaceFunctional::Mass);
        assert!(matches!(err, Err(Error::Margin(_))));
    }

    #[test]
    fn ball_around_single_surface() {
        // A ball holding exactly one level-1 surface and nothing else.
        let ex = build_example(&ExampleConfig {
            max_level: 4,
            include_plane: false,
            ..ExampleConfig::default()
        })
        .unwrap();
        let agg = ex.level(1).unwrap();
        let center = [agg.y_center, 0.0, 0.0];
        let b = ex.ball_bracket(&center, 0.1, &SurfaceFunctional::Mass).unwrap();
        assert_relative_eq!(b.lower, agg.cell_mass, max_relative = 1e-12);
        assert_relative_eq!(b.upper, agg.cell_mass, max_relative = 1e-12);
    }

    #[test]
    fn monte_carlo_level_mass_agrees() {
        let ex = small(3);
        let mc = ex.monte_carlo_level_mass(2, 200_000, 7).unwrap();
        assert_relative_eq!(mc, ex.levels[2].level_mass, max_relative = 0.01);
    }

    #[test]
    fn builds_are_deterministic() {
        assert_eq!(small(8), small(8));
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let text = r#"{"n":2,"p":1,"alpha1":1,"alpha2":1,"q1":3,"q2":3,"bogus":1}"#;
        assert!(serde_json::from_str::<ExampleConfig>(text).is_err());
        let ok = r#"{"n":2,"p":1,"alpha1":1,"alpha2":1,"q1":3,"q2":3}"#;
        assert_eq!(serde_json::from_str::<ExampleConfig>(ok).unwrap(), ExampleConfig::default());
    }
}
