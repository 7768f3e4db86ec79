//! Surfaces of revolution about the height axis.
//!
//! A profile curve lives in the half-plane `(s, t)`, `s >= 0`, where `s` is
//! the distance from the axis and `t` the height. Revolving it through
//! `S^(n-1)` gives an `n` dimensional surface in `R^(n+1)` with area element
//! `n * omega_n * s^(n-1) dl`. All surface integrals of rotation invariant
//! integrands therefore reduce to one-dimensional integrals along the
//! profile.
//!
//! The pillbox profile used by the multiscale example is a flat plateau at
//! height `tau/2`, a quarter circle of radius `tau/4` and a vertical rim
//! segment at `s = 1/2`, mirrored below `t = 0`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{OnceLock, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_checked, gk15, Adaptive};

/// Default Gauss-Legendre order per profile piece.
pub const DEFAULT_ORDER: usize = 48;
/// Relative agreement required between order `N` and `2N`.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let n = n as f64;
    PI.powf(n / 2.0) / statrs::function::gamma::gamma(n / 2.0 + 1.0)
}

/// `H^(n-1)` measure of the unit sphere in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Norm on `Hom(R^(n+m), R^(n+m))` used for plane distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneNorm {
    #[default]
    Frobenius,
    Operator,
}

impl PlaneNorm {
    /// `|P_S - P_T|` for hyperplanes whose normals meet at angle `theta`,
    /// given `sin(theta)`.
    pub fn from_sine(self, sin_theta: f64) -> f64 {
        match self {
            PlaneNorm::Frobenius => std::f64::consts::SQRT_2 * sin_theta.abs(),
            PlaneNorm::Operator => sin_theta.abs(),
        }
    }
}

/// A point on a profile curve together with its differential data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub s: f64,
    pub t: f64,
    /// Outward unit normal `(nu_s, nu_t)`.
    pub normal: [f64; 2],
    /// Signed curvature of the profile, positive when bending away from the
    /// normal.
    pub curvature: f64,
}

impl ProfilePoint {
    /// Scalar mean curvature `kappa + (n-1) nu_s / s` of the revolved
    /// surface at unit scale.
    pub fn mean_curvature(&self, n: usize) -> f64 {
        let rot = if self.s > 0.0 { self.normal[0] / self.s } else { 0.0 };
        self.curvature + (n as f64 - 1.0) * rot
    }

    /// Distance of the tangent plane from the horizontal plane.
    pub fn tilt(&self, norm: PlaneNorm) -> f64 {
        norm.from_sine(self.normal[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfilePiece {
    Segment {
        start: [f64; 2],
        end: [f64; 2],
        /// Outward unit normal, constant along the segment.
        normal: [f64; 2],
    },
    /// Circular arc `center + radius (cos th, sin th)` for `th` running from
    /// `from` to `to`, with outward normal pointing away from the center.
    Arc {
        center: [f64; 2],
        radius: f64,
        from: f64,
        to: f64,
    },
}

impl ProfilePiece {
    /// Total length.
    pub fn length(&self) -> f64 {
        match *self {
            ProfilePiece::Segment { start, end, .. } => {
                ((end[0] - start[0]).powi(2) + (end[1] - start[1]).powi(2)).sqrt()
            }
            ProfilePiece::Arc { radius, from, to, .. } => radius * (to - from).abs(),
        }
    }

    /// Point at parameter `u` in [0, 1], proportional to arc length.
    pub fn eval(&self, u: f64) -> ProfilePoint {
        match *self {
            ProfilePiece::Segment { start, end, normal } => ProfilePoint {
                s: start[0] + u * (end[0] - start[0]),
                t: start[1] + u * (end[1] - start[1]),
                normal,
                curvature: 0.0,
            },
            ProfilePiece::Arc { center, radius, from, to } => {
                let th = from + u * (to - from);
                let (sin, cos) = th.sin_cos();
                ProfilePoint {
                    s: (center[0] + radius * cos).max(0.0),
                    t: center[1] + radius * sin,
                    normal: [cos, sin],
                    curvature: 1.0 / radius,
                }
            }
        }
    }

    /// Parameters in (0, 1) where the piece crosses the circle of radius
    /// `rho` about `q`.
    fn circle_crossings(&self, q: [f64; 2], rho: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match *self {
            ProfilePiece::Segment { start, end, .. } => {
                let d = [end[0] - start[0], end[1] - start[1]];
                let w = [start[0] - q[0], start[1] - q[1]];
                let a = d[0] * d[0] + d[1] * d[1];
                let b = 2.0 * (w[0] * d[0] + w[1] * d[1]);
                let c = w[0] * w[0] + w[1] * w[1] - rho * rho;
                let disc = b * b - 4.0 * a * c;
                if a > 0.0 && disc >= 0.0 {
                    let root = disc.sqrt();
                    out.push((-b - root) / (2.0 * a));
                    out.push((-b + root) / (2.0 * a));
                }
            }
            ProfilePiece::Arc { center, radius, from, to } => {
                let w = [center[0] - q[0], center[1] - q[1]];
                let l = (w[0] * w[0] + w[1] * w[1]).sqrt();
                if l > 0.0 {
                    let k = (rho * rho - l * l - radius * radius) / (2.0 * radius * l);
                    if (-1.0..=1.0).contains(&k) {
                        let psi = w[1].atan2(w[0]);
                        let base = k.acos();
                        for m in -2..=2 {
                            for th in [psi + base, psi - base] {
                                out.push((th + 2.0 * PI * m as f64 - from) / (to - from));
                            }
                        }
                    }
                }
            }
        }
        out.retain(|u| *u > 0.0 && *u < 1.0);
        out.sort_by(f64::total_cmp);
        out
    }

    /// Parameters in (0, 1) where `|nu_s|` equals `level`, for splitting
    /// superlevel integrals.
    fn normal_crossings(&self, level: f64) -> Vec<f64> {
        match *self {
            ProfilePiece::Segment { .. } => Vec::new(),
            ProfilePiece::Arc { from, to, .. } => {
                if !(0.0..=1.0).contains(&level) {
                    return Vec::new();
                }
                let base = level.acos();
                let mut out = Vec::new();
                for k in -2..=2 {
                    for th in [base + 2.0 * PI * k as f64, -base + 2.0 * PI * k as f64] {
                        for cand in [th, th + PI] {
                            let u = (cand - from) / (to - from);
                            if u > 0.0 && u < 1.0 {
                                out.push(u);
                            }
                        }
                    }
                }
                out.sort_by(f64::total_cmp);
                out.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
                out
            }
        }
    }
}

/// Boundary sphere of a revolved surface carrying first variation, e.g. the
/// rim of a flat disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRing {
    pub s: f64,
    pub t: f64,
    /// Outward unit conormal in the profile plane.
    pub conormal: [f64; 2],
}

/// A profile made of pieces plus its variation-carrying boundary rings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub pieces: Vec<ProfilePiece>,
    pub boundary: Vec<BoundaryRing>,
}

impl ProfileCurve {
    /// Closed round sphere of radius `r` about the origin.
    pub fn sphere(r: f64) -> Self {
        Self {
            pieces: vec![ProfilePiece::Arc {
                center: [0.0, 0.0],
                radius: r,
                from: FRAC_PI_2,
                to: -FRAC_PI_2,
            }],
            boundary: Vec::new(),
        }
    }

    /// Flat disk of radius `r` in the plane `t = 0`. When `with_rim` is
    /// false the rim is treated as a cut of an unbounded plane and carries
    /// no variation.
    pub fn flat_disk(r: f64, with_rim: bool) -> Self {
        Self {
            pieces: vec![ProfilePiece::Segment {
                start: [0.0, 0.0],
                end: [r, 0.0],
                normal: [0.0, 1.0],
            }],
            boundary: if with_rim {
                vec![BoundaryRing {
                    s: r,
                    t: 0.0,
                    conormal: [1.0, 0.0],
                }]
            } else {
                Vec::new()
            },
        }
    }

    /// Largest `s` and `|t|` over the curve.
    pub fn extent(&self) -> (f64, f64) {
        let mut smax: f64 = 0.0;
        let mut tmax: f64 = 0.0;
        for piece in &self.pieces {
            match *piece {
                ProfilePiece::Segment { start, end, .. } => {
                    smax = smax.max(start[0]).max(end[0]);
                    tmax = tmax.max(start[1].abs()).max(end[1].abs());
                }
                ProfilePiece::Arc { center, radius, .. } => {
                    smax = smax.max(center[0] + radius);
                    tmax = tmax.max(center[1].abs() + radius);
                }
            }
        }
        (smax, tmax)
    }

    /// `int g dH^n` over the revolved surface at unit scale.
    pub fn integrate<G: Fn(&ProfilePoint) -> f64>(
        &self,
        n: usize,
        order: usize,
        rel_tol: f64,
        what: &str,
        g: G,
    ) -> Result<f64> {
        let sphere = unit_sphere_area(n);
        let mut total = 0.0;
        for piece in &self.pieces {
            let len = piece.length();
            total += gauss_legendre_checked(0.0, 1.0, order, rel_tol, what, |u| {
                let pt = piece.eval(u);
                g(&pt) * sphere * pt.s.powi(n as i32 - 1) * len
            })?;
        }
        Ok(total)
    }

    /// Total `H^(n-1)` measure of the boundary rings at unit scale.
    pub fn boundary_measure(&self, n: usize) -> f64 {
        let sphere = unit_sphere_area(n);
        self.boundary
            .iter()
            .map(|b| sphere * b.s.powi(n as i32 - 1))
            .sum()
    }
}

/// Fraction of `S^(n-1)` on which the first coordinate is at most `c`.
pub fn sphere_fraction_below(n: usize, c: f64) -> f64 {
    if c >= 1.0 {
        return 1.0;
    }
    if c <= -1.0 {
        return 0.0;
    }
    match n {
        1 => {
            // S^0 = {-1, 1}.
            0.5
        }
        2 => 1.0 - c.acos() / PI,
        3 => 0.5 * (1.0 + c),
        _ => {
            let a = (n as f64 - 1.0) / 2.0;
            statrs::function::beta::beta_reg(a, a, 0.5 * (1.0 + c))
        }
    }
}

/// Revolved surface placed in `R^(n+1)`: axis through `center` parallel to
/// the height direction, profile coordinates multiplied by `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedSurface {
    pub curve: ProfileCurve,
    /// Dimension of the surface.
    pub n: usize,
    /// Point on the axis, height coordinate first (length `n + 1`).
    pub center: Vec<f64>,
    pub scale: f64,
}

/// Fraction of the rotation orbit of a profile point that lies in a closed
/// ball.
fn orbit_fraction_in_ball(
    surf: &PlacedSurface,
    s: f64,
    t: f64,
    ball_center: &[f64],
    radius: f64,
) -> f64 {
    let y = surf.center[0] + surf.scale * t;
    let dy = y - ball_center[0];
    let d2: f64 = surf.center[1..]
        .iter()
        .zip(&ball_center[1..])
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let d = d2.sqrt();
    let rs = surf.scale * s;
    let base = dy * dy + d2 + rs * rs;
    let r2 = radius * radius;
    if d == 0.0 || rs == 0.0 {
        return if base <= r2 { 1.0 } else { 0.0 };
    }
    // |e + rs w|^2 = d^2 + rs^2 + 2 rs d <e/d, w>; inside iff <e/d, w> <= c.
    let c = (r2 - base) / (2.0 * rs * d);
    sphere_fraction_below(surf.n, c)
}

impl PlacedSurface {
    pub fn new(curve: ProfileCurve, n: usize, center: Vec<f64>, scale: f64) -> Result<Self> {
        if center.len() != n + 1 {
            return Err(Error::Dimension(format!(
                "surface center has {} coordinates, expected {}",
                center.len(),
                n + 1
            )));
        }
        if !(scale > 0.0) {
            return Err(Error::Domain("placement scale must be positive".into()));
        }
        Ok(Self { curve, n, center, scale })
    }

    /// Axis-aligned bounding box as `(lower, upper)` corners.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let (smax, tmax) = self.curve.extent();
        let mut lo = Vec::with_capacity(self.n + 1);
        let mut hi = Vec::with_capacity(self.n + 1);
        lo.push(self.center[0] - self.scale * tmax);
        hi.push(self.center[0] + self.scale * tmax);
        for c in &self.center[1..] {
            lo.push(c - self.scale * smax);
            hi.push(c + self.scale * smax);
        }
        (lo, hi)
    }

    /// Integral over the part of the placed surface inside the closed ball
    /// of an integrand depending only on the profile point. The integrand
    /// receives unit-scale profile data; callers apply scaling laws.
    pub fn integrate_in_ball<G: Fn(&ProfilePoint) -> f64>(
        &self,
        ball_center: &[f64],
        radius: f64,
        quad: &Adaptive,
        g: G,
    ) -> Result<f64> {
        let sphere = unit_sphere_area(self.n);
        let jac = self.scale.powi(self.n as i32);
        // An orbit meets the ball iff its profile point lies in this disk.
        let d = self.center[1..]
            .iter()
            .zip(&ball_center[1..])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let q = [d / self.scale, (ball_center[0] - self.center[0]) / self.scale];
        let rho = radius / self.scale;
        // The orbit test cancels quantities of size `radius^2` against each
        // other and divides by roughly `scale * d`, so the integrand carries
        // noise of relative size about eps times this ratio.
        let reach = radius + ball_center.iter().chain(&self.center).map(|x| x.abs()).sum::<f64>();
        let noise = 16.0 * f64::EPSILON * reach / self.scale;
        let mut total = 0.0;
        for piece in &self.curve.pieces {
            let len = piece.length();
            // Break also where the whole orbit enters the ball.
            let mut cuts = vec![0.0];
            cuts.extend(piece.circle_crossings(q, rho));
            cuts.extend(piece.circle_crossings([-q[0], q[1]], rho));
            cuts.push(1.0);
            cuts.sort_by(f64::total_cmp);
            let (magnitude, _) = gk15(0.0, 1.0, &mut |u| {
                let pt = piece.eval(u);
                (g(&pt) * sphere * pt.s.powi(self.n as i32 - 1) * len).abs()
            });
            let floor = noise * magnitude;
            for w in cuts.windows(2) {
                let mid = piece.eval(0.5 * (w[0] + w[1]));
                if (mid.s - q[0]).hypot(mid.t - q[1]) > rho {
                    continue;
                }
                let quad = Adaptive {
                    abs_tol: quad.abs_tol.max(floor),
                    ..*quad
                };
                total += quad.integrate(w[0], w[1], |u| {
                    let pt = piece.eval(u);
                    let frac = orbit_fraction_in_ball(self, pt.s, pt.t, ball_center, radius);
                    if frac == 0.0 {
                        return 0.0;
                    }
                    g(&pt) * frac * sphere * pt.s.powi(self.n as i32 - 1) * len
                })?;
            }
        }
        Ok(total * jac)
    }

    /// Boundary-ring measure (scaled) inside the closed ball.
    pub fn boundary_in_ball(&self, ball_center: &[f64], radius: f64) -> f64 {
        let sphere = unit_sphere_area(self.n);
        self.curve
            .boundary
            .iter()
            .map(|b| {
                orbit_fraction_in_ball(self, b.s, b.t, ball_center, radius)
                    * sphere
                    * (self.scale * b.s).powi(self.n as i32 - 1)
            })
            .sum()
    }
}

/// Pillbox geometry with neck parameter `tau` in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileGeometry {
    pub tau: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValue {
    pub f: f64,
    /// `-inf` at the rim where the tangent is vertical.
    pub f_prime: f64,
    pub curvature: f64,
}

impl ProfileGeometry {
    pub fn new(tau: f64, n: usize) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Domain(format!("neck parameter {tau} outside (0, 1]")));
        }
        if n < 2 {
            return Err(Error::Domain(format!("surface dimension {n} must be at least 2")));
        }
        Ok(Self { tau, n })
    }

    pub fn plateau_height(&self) -> f64 {
        self.tau / 2.0
    }

    pub fn rim_height(&self) -> f64 {
        self.tau / 4.0
    }

    pub fn plateau_radius(&self) -> f64 {
        0.5 - self.tau / 4.0
    }

    pub fn arc_radius(&self) -> f64 {
        self.tau / 4.0
    }

    /// Explicit bound on `|H|` at unit scale.
    pub fn curvature_bound(&self) -> f64 {
        4.0 / self.tau + 4.0 * (self.n as f64 - 1.0)
    }

    /// Closed profile: top plateau, top arc, rim, bottom arc, bottom plateau.
    pub fn curve(&self) -> ProfileCurve {
        let s0 = self.plateau_radius();
        let r = self.arc_radius();
        let top = self.plateau_height();
        let rim = self.rim_height();
        ProfileCurve {
            pieces: vec![
                ProfilePiece::Segment {
                    start: [0.0, top],
                    end: [s0, top],
                    normal: [0.0, 1.0],
                },
                ProfilePiece::Arc {
                    center: [s0, rim],
                    radius: r,
                    from: FRAC_PI_2,
                    to: 0.0,
                },
                ProfilePiece::Segment {
                    start: [0.5, rim],
                    end: [0.5, -rim],
                    normal: [1.0, 0.0],
                },
                ProfilePiece::Arc {
                    center: [s0, -rim],
                    radius: r,
                    from: 0.0,
                    to: -FRAC_PI_2,
                },
                ProfilePiece::Segment {
                    start: [s0, -top],
                    end: [0.0, -top],
                    normal: [0.0, -1.0],
                },
            ],
            boundary: Vec::new(),
        }
    }
}

/// Upper profile function `f` on `[0, 1/2]`.
pub fn profile_eval(geom: &ProfileGeometry, s: f64) -> Result<ProfileValue> {
    if !(0.0..=0.5).contains(&s) {
        return Err(Error::Domain(format!("radial coordinate {s} outside [0, 1/2]")));
    }
    let s0 = geom.plateau_radius();
    let r = geom.arc_radius();
    if s <= s0 {
        return Ok(ProfileValue {
            f: geom.plateau_height(),
            f_prime: 0.0,
            curvature: 0.0,
        });
    }
    let ds = s - s0;
    let root = (r * r - ds * ds).max(0.0).sqrt();
    Ok(ProfileValue {
        f: geom.rim_height() + root,
        f_prime: if root > 0.0 { -ds / root } else { f64::NEG_INFINITY },
        curvature: 1.0 / r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSurfaceIntegrals {
    /// `A(tau)`.
    pub mass: f64,
    /// `B_p(tau) = int |H|^p`.
    pub curvature_moment: f64,
    /// `C_q(tau) = int |P_S - P_T|^q`.
    pub tilt_moment: f64,
    /// `H^n{tilt >= threshold}`.
    pub tilt_superlevel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralRequest {
    pub p: f64,
    pub q: f64,
    pub norm: PlaneNorm,
    pub threshold: f64,
    pub order: usize,
}

impl Default for IntegralRequest {
    fn default() -> Self {
        Self {
            p: 1.0,
            q: 1.0,
            norm: PlaneNorm::Frobenius,
            threshold: 1.0,
            order: DEFAULT_ORDER,
        }
    }
}

type CacheKey = (u64, usize, u64, u64, PlaneNorm, u64, usize);

fn cache() -> &'static RwLock<HashMap<CacheKey, UnitSurfaceIntegrals>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, UnitSurfaceIntegrals>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Surface integrals of the unit pillbox. Results are memoized per
/// `(tau, n, p, q, norm, threshold, order)`.
pub fn unit_integrals(geom: &ProfileGeometry, req: &IntegralRequest) -> Result<UnitSurfaceIntegrals> {
    if !(req.p >= 1.0 && req.q >= 1.0) {
        return Err(Error::Domain(format!(
            "exponents p = {}, q = {} must be at least 1",
            req.p, req.q
        )));
    }
    ProfileGeometry::new(geom.tau, geom.n)?;
    let key = (
        geom.tau.to_bits(),
        geom.n,
        req.p.to_bits(),
        req.q.to_bits(),
        req.norm,
        req.threshold.to_bits(),
        req.order,
    );
    if let Some(hit) = cache().read().expect("integral cache poisoned").get(&key) {
        return Ok(*hit);
    }
    let curve = geom.curve();
    let n = geom.n;
    let tol = DEFAULT_QUAD_TOL;
    let mass = curve.integrate(n, req.order, tol, "mass", |_| 1.0)?;
    let curvature_moment = curve.integrate(n, req.order, tol, "curvature moment", |pt| {
        pt.mean_curvature(n).abs().powf(req.p)
    })?;
    let tilt_moment = curve.integrate(n, req.order, tol, "tilt moment", |pt| {
        pt.tilt(req.norm).powf(req.q)
    })?;
    let tilt_superlevel = tilt_superlevel(&curve, n, req)?;
    let out = UnitSurfaceIntegrals {
        mass,
        curvature_moment,
        tilt_moment,
        tilt_superlevel,
    };
    cache()
        .write()
        .expect("integral cache poisoned")
        .insert(key, out);
    Ok(out)
}

fn tilt_superlevel(curve: &ProfileCurve, n: usize, req: &IntegralRequest) -> Result<f64> {
    let sphere = unit_sphere_area(n);
    let level = match req.norm {
        PlaneNorm::Frobenius => req.threshold / std::f64::consts::SQRT_2,
        PlaneNorm::Operator => req.threshold,
    };
    let mut total = 0.0;
    for piece in &curve.pieces {
        let len = piece.length();
        let mut cuts = vec![0.0];
        cuts.extend(piece.normal_crossings(level));
        cuts.push(1.0);
        for w in cuts.windows(2) {
            let mid = piece.eval(0.5 * (w[0] + w[1]));
            if mid.tilt(req.norm) >= req.threshold {
                total += gauss_legendre_checked(w[0], w[1], req.order, DEFAULT_QUAD_TOL, "tilt superlevel", |u| {
                    let pt = piece.eval(u);
                    sphere * pt.s.powi(n as i32 - 1) * len
                })?;
            }
        }
    }
    Ok(total)
}

/// `int |y_center + scale * t|^q dH^n` over the unit pillbox, where `t` is
/// the local height. Multiply by `scale^n` for the placed contribution.
pub fn height_moment(geom: &ProfileGeometry, q: f64, y_center: f64, scale: f64) -> Result<f64> {
    height_moment_with_order(geom, q, y_center, scale, DEFAULT_ORDER)
}

pub fn height_moment_with_order(
    geom: &ProfileGeometry,
    q: f64,
    y_center: f64,
    scale: f64,
    order: usize,
) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(Error::Domain(format!("height exponent {q} must be nonnegative")));
    }
    if !(scale > 0.0) {
        return Err(Error::Domain("scale must be positive".into()));
    }
    if y_center.abs() < scale * geom.plateau_height() {
        return Err(Error::Domain(format!(
            "offset {y_center} does not clear the surface half-height {}",
            scale * geom.plateau_height()
        )));
    }
    geom.curve().integrate(geom.n, order, DEFAULT_QUAD_TOL, "height moment", |pt| {
        (y_center + scale * pt.t).abs().powf(q)
    })
}

/// Quadrature-free sample of a revolved surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub position: Vec<f64>,
    pub normal: Vec<f64>,
    pub mean_curvature: Vec<f64>,
    pub weight: f64,
}

/// Stratified Monte-Carlo samples of the unit pillbox. Each profile piece
/// receives a share of the samples proportional to a crude area estimate;
/// within a piece the arc-length parameter is stratified and the rotation
/// direction drawn uniformly. Weights are unbiased area estimates.
pub fn sample_surface(geom: &ProfileGeometry, count: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    if count == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    sample_curve(&geom.curve(), geom.n, count, seed)
}

pub fn sample_curve(curve: &ProfileCurve, n: usize, count: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sphere = unit_sphere_area(n);
    // Crude area per piece from the midpoint radius; only steers allocation.
    let crude: Vec<f64> = curve
        .pieces
        .iter()
        .map(|p| {
            let mid = p.eval(0.5);
            let far = p.eval(0.0).s.max(p.eval(1.0).s).max(mid.s);
            p.length() * (0.5 * (mid.s + far)).powi(n as i32 - 1) + 1e-12
        })
        .collect();
    let crude_total: f64 = crude.iter().sum();
    let mut shares: Vec<usize> = crude
        .iter()
        .map(|c| ((c / crude_total) * count as f64).floor() as usize)
        .map(|k| k.max(1))
        .collect();
    let assigned: usize = shares.iter().sum();
    if assigned < count {
        let last = shares.len() - 1;
        let widest = (0..shares.len())
            .max_by(|&a, &b| crude[a].total_cmp(&crude[b]))
            .unwrap_or(last);
        shares[widest] += count - assigned;
    }

    let mut out = Vec::with_capacity(shares.iter().sum());
    for (piece, &k) in curve.pieces.iter().zip(&shares) {
        let len = piece.length();
        for idx in 0..k {
            let u = (idx as f64 + rng.random::<f64>()) / k as f64;
            let pt = piece.eval(u);
            let dir = random_direction(&mut rng, n);
            let weight = sphere * pt.s.powi(n as i32 - 1) * len / k as f64;
            let h = pt.mean_curvature(n);
            let mut position = Vec::with_capacity(n + 1);
            let mut normal = Vec::with_capacity(n + 1);
            position.push(pt.t);
            normal.push(pt.normal[1]);
            for w in &dir {
                position.push(pt.s * w);
                normal.push(pt.normal[0] * w);
            }
            let mean_curvature = normal.iter().map(|v| -h * v).collect();
            out.push(SurfaceSample {
                position,
                normal,
                mean_curvature,
                weight,
            });
        }
    }
    Ok(out)
}

/// Monte-Carlo counterpart of [`unit_integrals`] built from
/// [`sample_surface`].
pub fn monte_carlo_integrals(
    geom: &ProfileGeometry,
    req: &IntegralRequest,
    count: usize,
    seed: u64,
) -> Result<UnitSurfaceIntegrals> {
    let samples = sample_surface(geom, count, seed)?;
    let mut out = UnitSurfaceIntegrals {
        mass: 0.0,
        curvature_moment: 0.0,
        tilt_moment: 0.0,
        tilt_superlevel: 0.0,
    };
    for s in &samples {
        let h = s.mean_curvature.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sin_theta = (1.0 - s.normal[0] * s.normal[0]).max(0.0).sqrt();
        let tilt = req.norm.from_sine(sin_theta);
        out.mass += s.weight;
        out.curvature_moment += s.weight * h.powf(req.p);
        out.tilt_moment += s.weight * tilt.powf(req.q);
        if tilt >= req.threshold {
            out.tilt_superlevel += s.weight;
        }
    }
    Ok(out)
}

fn random_direction<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geom(tau: f64) -> ProfileGeometry {
        ProfileGeometry::new(tau, 2).unwrap()
    }

    #[test]
    fn profile_values() {
        let g = geom(0.25);
        let v0 = profile_eval(&g, 0.0).unwrap();
        assert_eq!((v0.f, v0.f_prime, v0.curvature), (0.125, 0.0, 0.0));
        let rim = profile_eval(&g, 0.5).unwrap();
        assert_relative_eq!(rim.f, 0.0625, epsilon = 1e-15);
        // Quarter-turn point of the arc: 45 degrees from the top.
        let s = g.plateau_radius() + g.arc_radius() * (PI / 4.0).sin();
        assert_relative_eq!(profile_eval(&g, s).unwrap().curvature, 16.0);
        assert!(profile_eval(&g, 0.51).is_err());
        assert!(profile_eval(&g, -0.01).is_err());
    }

    #[test]
    fn geometry_invariants() {
        for tau in [1.0, 0.5, 0.01] {
            let g = geom(tau);
            assert_eq!(g.plateau_height(), tau / 2.0);
            assert_eq!(g.rim_height(), tau / 4.0);
            assert!(g.plateau_radius() >= 0.25);
        }
        assert!(ProfileGeometry::new(0.0, 2).is_err());
        assert!(ProfileGeometry::new(1.5, 2).is_err());
        assert!(ProfileGeometry::new(0.5, 1).is_err());
    }

    #[test]
    fn profile_is_concave() {
        let g = geom(0.3);
        let xs: Vec<f64> = (0..=200).map(|k| 0.5 * k as f64 / 200.0).collect();
        let fs: Vec<f64> = xs.iter().map(|&s| profile_eval(&g, s).unwrap().f).collect();
        for w in fs.windows(3) {
            assert!(w[0] + w[2] <= 2.0 * w[1] + 1e-12);
        }
    }

    #[test]
    fn mass_tends_to_double_disk() {
        let req = IntegralRequest::default();
        let a = unit_integrals(&geom(1e-6), &req).unwrap().mass;
        assert_relative_eq!(a, PI / 2.0, max_relative = 1e-5);
    }

    #[test]
    fn mass_closed_form_for_n2() {
        // Plateaus: 2 pi s0^2. Arcs: 2 * 2 pi int_0^{pi/2} (s0 + r sin) r.
        // Rim: 2 pi (1/2) (tau/2).
        let tau = 0.25;
        let g = geom(tau);
        let (s0, r) = (g.plateau_radius(), g.arc_radius());
        let exact = 2.0 * PI * s0 * s0
            + 2.0 * 2.0 * PI * (s0 * r * FRAC_PI_2 + r * r)
            + PI * tau / 2.0;
        let a = unit_integrals(&g, &IntegralRequest::default()).unwrap().mass;
        assert_relative_eq!(a, exact, max_relative = 1e-13);
    }

    #[test]
    fn rim_and_plateau_pointwise() {
        let g = geom(0.25);
        let curve = g.curve();
        let rim = curve.pieces[2].eval(0.3);
        assert_relative_eq!(rim.mean_curvature(2), 2.0);
        assert_relative_eq!(rim.tilt(PlaneNorm::Frobenius), std::f64::consts::SQRT_2);
        assert_relative_eq!(rim.tilt(PlaneNorm::Operator), 1.0);
        let plateau = curve.pieces[0].eval(0.7);
        assert_eq!(plateau.mean_curvature(2), 0.0);
        assert_eq!(plateau.tilt(PlaneNorm::Frobenius), 0.0);
    }

    #[test]
    fn superlevel_contains_rim() {
        let tau = 0.25;
        let req = IntegralRequest {
            threshold: 1.0,
            ..Default::default()
        };
        let r = unit_integrals(&geom(tau), &req).unwrap();
        assert!(r.tilt_superlevel >= 0.125 * PI - 1e-12);
        // Rim plus the arc part with sin >= 1/sqrt 2, which is positive.
        assert!(r.tilt_superlevel > 0.125 * PI + 1e-3);
    }

    #[test]
    fn tilt_moment_vanishes_with_tau() {
        let req = IntegralRequest {
            q: 2.0,
            ..Default::default()
        };
        let mut prev = f64::INFINITY;
        for tau in [0.5, 0.1, 0.01, 0.001] {
            let c = unit_integrals(&geom(tau), &req).unwrap().tilt_moment;
            assert!(c < prev);
            prev = c;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn height_moment_cases() {
        let g = geom(0.25);
        let a = unit_integrals(&g, &IntegralRequest::default()).unwrap().mass;
        assert_relative_eq!(height_moment(&g, 0.0, 1.0, 0.5).unwrap(), a, max_relative = 1e-12);
        let far = height_moment(&g, 3.0, 100.0, 1.0).unwrap();
        assert_relative_eq!(far, 1e6 * a, max_relative = 1e-2);
        let plus = height_moment(&g, 2.5, 0.7, 0.4).unwrap();
        let minus = height_moment(&g, 2.5, -0.7, 0.4).unwrap();
        assert_relative_eq!(plus, minus, max_relative = 1e-12);
        assert!(height_moment(&g, 1.0, 0.01, 1.0).is_err());
    }

    #[test]
    fn sphere_fraction_matches_known_cases() {
        assert_relative_eq!(sphere_fraction_below(2, 0.0), 0.5);
        assert_relative_eq!(sphere_fraction_below(3, 0.5), 0.75);
        // n = 4 through the incomplete beta agrees with direct quadrature
        // of the density (1 - x^2)^(1/2).
        let dens = |x: f64| (1.0 - x * x).max(0.0).sqrt();
        let norm = Adaptive::default().integrate(-1.0, 1.0, dens).unwrap();
        let part = Adaptive::default().integrate(-1.0, 0.3, dens).unwrap();
        assert_relative_eq!(sphere_fraction_below(4, 0.3), part / norm, max_relative = 1e-9);
    }

    #[test]
    fn ball_integration_of_sphere_cap() {
        // Area of the unit 2-sphere within distance rho of a point on it is
        // pi rho^2.
        let surf = PlacedSurface::new(ProfileCurve::sphere(1.0), 2, vec![0.0; 3], 1.0).unwrap();
        for (point, rho) in [(vec![1.0, 0.0, 0.0], 0.3), (vec![0.0, 1.0, 0.0], 0.01)] {
            let a = surf
                .integrate_in_ball(&point, rho, &Adaptive::default(), |_| 1.0)
                .unwrap();
            assert_relative_eq!(a, PI * rho * rho, max_relative = 1e-8);
        }
    }

    #[test]
    fn samples_cover_pillbox() {
        let g = geom(0.25);
        let samples = sample_surface(&g, 20_000, 7).unwrap();
        assert_eq!(samples.len(), 20_000);
        for s in &samples {
            assert!(s.position.iter().all(|x| x.abs() <= 0.5 + 1e-12));
            let nn: f64 = s.normal.iter().map(|x| x * x).sum();
            assert_relative_eq!(nn, 1.0, epsilon = 1e-12);
            assert!(s.weight > 0.0);
        }
        let again = sample_surface(&g, 20_000, 7).unwrap();
        assert_eq!(samples, again);
    }

    #[test]
    fn monte_carlo_matches_quadrature() {
        let g = geom(0.25);
        let req = IntegralRequest {
            q: 2.0,
            ..IntegralRequest::default()
        };
        let exact = unit_integrals(&g, &req).unwrap();
        let mc = monte_carlo_integrals(&g, &req, 100_000, 11).unwrap();
        assert_relative_eq!(mc.mass, exact.mass, max_relative = 0.01);
        assert_relative_eq!(mc.curvature_moment, exact.curvature_moment, max_relative = 0.01);
        assert_relative_eq!(mc.tilt_moment, exact.tilt_moment, max_relative = 0.02);
    }

    #[test]
    fn tiny_ball_on_sphere() {
        // A ball of radius r centered on the unit sphere cuts out area pi r^2.
        let surf = PlacedSurface::new(ProfileCurve::sphere(1.0), 2, vec![0.0; 3], 1.0).unwrap();
        for (c, r) in [([1.0, 0.0, 0.0], 1e-5), ([0.0, 0.6, 0.8], 3e-4)] {
            let a = surf.integrate_in_ball(&c, r, &Adaptive::default(), |_| 1.0).unwrap();
            assert_relative_eq!(a, PI * r * r, max_relative = 1e-6);
        }
    }
}
