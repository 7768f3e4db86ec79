//! Discrete varifolds and their basic functionals.
//!
//! A [`DiscreteVarifold`] is a weighted point cloud (each point carrying a
//! tangent plane, a mean curvature vector and a density) plus an optional
//! list of exact revolved patches. Patches are integrated exactly against
//! balls through the one-dimensional profile reduction, and are discretized
//! into samples only for functionals that need arbitrary test fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{Adaptive, GaussLegendre};
use crate::revolved_profile::{
    unit_ball_volume, unit_sphere_area, PlaneNorm, PlacedSurface, ProfileCurve, ProfilePoint,
    DEFAULT_ORDER, DEFAULT_QUAD_TOL,
};

/// Default relative tolerance for floating point comparisons.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Quadrature resolution used when patches must be turned into samples.
pub const DEFAULT_RESOLUTION: usize = 48;

/// An `n` plane through the origin of `R^(n+m)`, stored as an orthonormal
/// basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentPlane {
    pub ambient: usize,
    pub basis: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl TangentPlane {
    /// Orthonormalizes `vectors` by modified Gram-Schmidt.
    pub fn from_basis(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let ambient = vectors
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Dimension("plane needs at least one basis vector".into()))?;
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != ambient {
                return Err(Error::Dimension("basis vectors of unequal length".into()));
            }
            let mut w = v;
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let len = norm(&w);
            if len < 1e-12 {
                return Err(Error::Degenerate("basis vectors are linearly dependent".into()));
            }
            w.iter_mut().for_each(|x| *x /= len);
            basis.push(w);
        }
        Ok(Self { ambient, basis })
    }

    /// Hyperplane with the given normal.
    pub fn from_normal(normal: &[f64]) -> Result<Self> {
        let len = norm(normal);
        if len < 1e-12 {
            return Err(Error::Degenerate("zero normal vector".into()));
        }
        let nu: Vec<f64> = normal.iter().map(|x| x / len).collect();
        let d = nu.len();
        // Complete nu with the coordinate axes least aligned with it.
        let mut axes: Vec<usize> = (0..d).collect();
        axes.sort_by(|&a, &b| nu[a].abs().total_cmp(&nu[b].abs()));
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
        for &a in axes.iter().take(d - 1) {
            let mut w = vec![0.0; d];
            w[a] = 1.0;
            let c = dot(&w, &nu);
            w.iter_mut().zip(&nu).for_each(|(x, y)| *x -= c * y);
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let l = norm(&w);
            w.iter_mut().for_each(|x| *x /= l);
            basis.push(w);
        }
        Ok(Self { ambient: d, basis })
    }

    /// The whole space `R^n`, used for codimension zero varifolds.
    pub fn full_space(n: usize) -> Self {
        let basis = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        Self { ambient: n, basis }
    }

    /// `{0} x R^n` inside `R^(n+1)`.
    pub fn horizontal(n: usize) -> Self {
        let mut normal = vec![0.0; n + 1];
        normal[0] = 1.0;
        Self::from_normal(&normal).expect("unit normal")
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Orthogonal projection matrix, row major.
    pub fn projection(&self) -> Vec<Vec<f64>> {
        let d = self.ambient;
        let mut p = vec![vec![0.0; d]; d];
        for b in &self.basis {
            for i in 0..d {
                for j in 0..d {
                    p[i][j] += b[i] * b[j];
                }
            }
        }
        p
    }

    /// Distance of a vector from the plane, `|(I - P) v|`.
    pub fn distance(&self, v: &[f64]) -> f64 {
        let tangential: f64 = self.basis.iter().map(|b| dot(v, b).powi(2)).sum();
        (dot(v, v) - tangential).max(0.0).sqrt()
    }

    /// Unit normal of a hyperplane, `None` in higher codimension.
    pub fn normal(&self) -> Option<Vec<f64>> {
        if self.dim() + 1 != self.ambient {
            return None;
        }
        // Project the coordinate axis with the smallest tangential part.
        (0..self.ambient)
            .map(|a| {
                let mut e = vec![0.0; self.ambient];
                e[a] = 1.0;
                for b in &self.basis {
                    let c = b[a];
                    e.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
                e
            })
            .max_by(|x, y| norm(x).total_cmp(&norm(y)))
            .map(|e| {
                let l = norm(&e);
                e.into_iter().map(|x| x / l).collect()
            })
    }
}

/// `|P_S - P_T|` in the selected norm.
pub fn plane_distance(s: &TangentPlane, t: &TangentPlane, which: PlaneNorm) -> Result<f64> {
    if s.ambient != t.ambient {
        return Err(Error::Dimension(format!(
            "planes live in R^{} and R^{}",
            s.ambient, t.ambient
        )));
    }
    let ps = s.projection();
    let pt = t.projection();
    let diff: Vec<Vec<f64>> = ps
        .iter()
        .zip(&pt)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    Ok(match which {
        PlaneNorm::Frobenius => diff.iter().flatten().map(|x| x * x).sum::<f64>().sqrt(),
        PlaneNorm::Operator => symmetric_spectral_radius(diff),
    })
}

/// Largest absolute eigenvalue of a symmetric matrix by cyclic Jacobi
/// rotations.
fn symmetric_spectral_radius(mut a: Vec<Vec<f64>>) -> f64 {
    let d = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| a[i][i].abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarifoldSample {
    pub position: Vec<f64>,
    pub plane: TangentPlane,
    pub weight: f64,
    /// Generalized mean curvature vector, in units of 1/length.
    pub mean_curvature: Option<Vec<f64>>,
    /// `theta^n(mu, x)`.
    pub density: f64,
}

/// Point mass of the singular part of the first variation, with the unit
/// conormal it pairs test fields against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub position: Vec<f64>,
    pub weight: f64,
    pub conormal: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

impl Bracket {
    pub fn exact(v: f64) -> Self {
        Self { lower: v, upper: v }
    }

    pub fn value(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }
}

impl std::ops::Add for Bracket {
    type Output = Bracket;
    fn add(self, o: Bracket) -> Bracket {
        Bracket {
            lower: self.lower + o.lower,
            upper: self.upper + o.upper,
        }
    }
}

impl std::ops::AddAssign for Bracket {
    fn add_assign(&mut self, o: Bracket) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Cube { center: Vec<f64>, half_width: f64 },
}

impl Region {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        Region::Ball { center, radius }
    }

    pub fn cube(center: Vec<f64>, half_width: f64) -> Self {
        Region::Cube { center, half_width }
    }

    pub fn center(&self) -> &[f64] {
        match self {
            Region::Ball { center, .. } | Region::Cube { center, .. } => center,
        }
    }

    pub fn size(&self) -> f64 {
        match self {
            Region::Ball { radius, .. } => *radius,
            Region::Cube { half_width, .. } => *half_width,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= radius * radius
            }
            Region::Cube { center, half_width } => {
                x.iter().zip(center).all(|(a, b)| (a - b).abs() <= *half_width)
            }
        }
    }

    /// Whether an axis-aligned box lies inside, outside, or straddles.
    fn classify_box(&self, lo: &[f64], hi: &[f64]) -> BoxRelation {
        match self {
            Region::Ball { center, radius } => {
                let mut near = 0.0;
                let mut far = 0.0;
                for ((&l, &h), &c) in lo.iter().zip(hi).zip(center) {
                    let dn = if c < l { l - c } else if c > h { c - h } else { 0.0 };
                    let df = (c - l).abs().max((h - c).abs());
                    near += dn * dn;
                    far += df * df;
                }
                if far <= radius * radius {
                    BoxRelation::Inside
                } else if near > radius * radius {
                    BoxRelation::Outside
                } else {
                    BoxRelation::Straddles
                }
            }
            Region::Cube { center, half_width } => {
                let mut inside = true;
                for ((&l, &h), &c) in lo.iter().zip(hi).zip(center) {
                    if h < c - half_width || l > c + half_width {
                        return BoxRelation::Outside;
                    }
                    inside &= l >= c - half_width && h <= c + half_width;
                }
                if inside {
                    BoxRelation::Inside
                } else {
                    BoxRelation::Straddles
                }
            }
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if self.center().len() != d {
            return Err(Error::Dimension(format!(
                "region center has {} coordinates, ambient dimension is {d}",
                self.center().len()
            )));
        }
        if !(self.size() > 0.0) {
            return Err(Error::Domain("region size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BoxRelation {
    Inside,
    Outside,
    Straddles,
}

/// A vector field with its Jacobian `D eta[i][j] = d eta_i / d x_j`.
pub trait TestField {
    fn value(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>>;
}

/// Test field from a pair of closures.
pub struct FnField<V, J> {
    pub value: V,
    pub jacobian: J,
}

impl<V, J> TestField for FnField<V, J>
where
    V: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    fn value(&self, x: &[f64]) -> Vec<f64> {
        (self.value)(x)
    }

    fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (self.jacobian)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcessKind {
    Height,
    Tilt,
}

/// Canonical shapes with closed-form geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Canonical {
    /// Round `n` sphere of radius `radius` in `R^(n+1)` about the origin.
    Sphere { n: usize, radius: f64 },
    /// Flat `n` disk in `{0} x R^n` whose rim carries first variation.
    FlatDisk { n: usize, radius: f64 },
    /// `L^n` restricted to a ball of `R^n` (codimension zero).
    LebesgueBall { n: usize, radius: f64, resolution: usize },
    /// Disk-shaped window of the plane `{0} x R^n` without boundary
    /// variation: the plane is thought to continue outside.
    PlaneWindow { n: usize, radius: f64 },
}

/// Weighted samples plus exact patches, in `R^(n+m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteVarifold {
    pub n: usize,
    pub m: usize,
    /// Curvature exponent selecting `psi`.
    pub p: f64,
    pub samples: Vec<VarifoldSample>,
    pub boundary: Vec<BoundarySample>,
    pub patches: Vec<PlacedSurface>,
}

/// Quadrature of `S^k` in `R^(k+1)`: points and weights summing to the
/// sphere's measure.
pub fn sphere_quadrature(k: usize, resolution: usize) -> Vec<(Vec<f64>, f64)> {
    let raw = match k {
        0 => vec![(vec![-1.0], 1.0), (vec![1.0], 1.0)],
        1 => {
            let m = (2 * resolution).max(4);
            (0..m)
                .map(|i| {
                    let a = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
                    (vec![a.cos(), a.sin()], 2.0 * std::f64::consts::PI / m as f64)
                })
                .collect()
        }
        _ => {
            let lower = sphere_quadrature(k - 1, resolution);
            let rule = GaussLegendre::cached(resolution.max(2));
            let mut out = Vec::with_capacity(rule.order() * lower.len());
            for (theta, w) in rule.mapped(0.0, std::f64::consts::PI) {
                let (st, ct) = theta.sin_cos();
                for (pt, wl) in &lower {
                    let mut x = Vec::with_capacity(k + 1);
                    x.push(ct);
                    x.extend(pt.iter().map(|v| st * v));
                    out.push((x, w * st.powi(k as i32 - 1) * wl));
                }
            }
            out
        }
    };
    // Normalize so the weights sum to the exact sphere measure.
    let total: f64 = raw.iter().map(|r| r.1).sum();
    let exact = unit_sphere_area(k + 1);
    raw.into_iter().map(|(x, w)| (x, w * exact / total)).collect()
}

impl DiscreteVarifold {
    pub fn new(n: usize, m: usize, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("varifold dimension must be positive".into()));
        }
        if !(p >= 1.0 && p <= n as f64) {
            return Err(Error::Domain(format!("curvature exponent {p} outside [1, {n}]")));
        }
        Ok(Self {
            n,
            m,
            p,
            samples: Vec::new(),
            boundary: Vec::new(),
            patches: Vec::new(),
        })
    }

    pub fn ambient(&self) -> usize {
        self.n + self.m
    }

    pub fn push_sample(&mut self, sample: VarifoldSample) -> Result<()> {
        if sample.position.len() != self.ambient() || sample.plane.ambient != self.ambient() {
            return Err(Error::Dimension("sample does not live in the ambient space".into()));
        }
        if sample.plane.dim() != self.n {
            return Err(Error::Dimension(format!(
                "sample plane has dimension {}, expected {}",
                sample.plane.dim(),
                self.n
            )));
        }
        if !(sample.weight > 0.0) {
            return Err(Error::Domain("sample weight must be positive".into()));
        }
        if self.p > 1.0 && sample.mean_curvature.is_none() {
            return Err(Error::Contract(
                "p > 1 requires a mean curvature vector on every sample".into(),
            ));
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn push_patch(&mut self, patch: PlacedSurface) -> Result<()> {
        if self.m != 1 || patch.n != self.n {
            return Err(Error::Dimension("patches are hypersurfaces of matching dimension".into()));
        }
        self.patches.push(patch);
        Ok(())
    }

    /// Builds a canonical shape.
    pub fn canonical(kind: Canonical, p: f64) -> Result<Self> {
        match kind {
            Canonical::Sphere { n, radius } => {
                check_radius(radius)?;
                let mut v = Self::new(n, 1, p)?;
                v.push_patch(PlacedSurface::new(ProfileCurve::sphere(radius), n, vec![0.0; n + 1], 1.0)?)?;
                Ok(v)
            }
            Canonical::FlatDisk { n, radius } => {
                check_radius(radius)?;
                let mut v = Self::new(n, 1, p)?;
                v.push_patch(PlacedSurface::new(
                    ProfileCurve::flat_disk(radius, true),
                    n,
                    vec![0.0; n + 1],
                    1.0,
                )?)?;
                Ok(v)
            }
            Canonical::PlaneWindow { n, radius } => {
                check_radius(radius)?;
                let mut v = Self::new(n, 1, p)?;
                v.push_patch(PlacedSurface::new(
                    ProfileCurve::flat_disk(radius, false),
                    n,
                    vec![0.0; n + 1],
                    1.0,
                )?)?;
                Ok(v)
            }
            Canonical::LebesgueBall { n, radius, resolution } => {
                check_radius(radius)?;
                if p != 1.0 {
                    return Err(Error::Config(
                        "the Lebesgue ball has no mean curvature density; use p = 1".into(),
                    ));
                }
                let mut v = Self::new(n, 0, p)?;
                let plane = TangentPlane::full_space(n);
                let dirs = sphere_quadrature(n - 1, resolution);
                let radial = GaussLegendre::cached(resolution.max(2));
                for (r, wr) in radial.mapped(0.0, radius) {
                    for (dir, wd) in &dirs {
                        v.samples.push(VarifoldSample {
                            position: dir.iter().map(|x| r * x).collect(),
                            plane: plane.clone(),
                            weight: wr * wd * r.powi(n as i32 - 1),
                            mean_curvature: Some(vec![0.0; n]),
                            density: 1.0,
                        });
                    }
                }
                for (dir, wd) in &dirs {
                    v.boundary.push(BoundarySample {
                        position: dir.iter().map(|x| radius * x).collect(),
                        weight: wd * radius.powi(n as i32 - 1),
                        conormal: dir.clone(),
                    });
                }
                Ok(v)
            }
        }
    }

    /// Translate by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.ambient() {
            return Err(Error::Dimension("shift has wrong length".into()));
        }
        let mv = |x: &[f64]| -> Vec<f64> { x.iter().zip(shift).map(|(a, b)| a + b).collect() };
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|s| s.position = mv(&s.position));
        out.boundary.iter_mut().for_each(|s| s.position = mv(&s.position));
        out.patches.iter_mut().for_each(|s| s.center = mv(&s.center));
        Ok(out)
    }

    /// Dilate about the origin by `lambda > 0`.
    pub fn dilated(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Domain("dilation factor must be positive".into()));
        }
        let n = self.n as i32;
        let mut out = self.clone();
        for s in &mut out.samples {
            s.position.iter_mut().for_each(|x| *x *= lambda);
            s.weight *= lambda.powi(n);
            if let Some(h) = &mut s.mean_curvature {
                h.iter_mut().for_each(|x| *x /= lambda);
            }
        }
        for b in &mut out.boundary {
            b.position.iter_mut().for_each(|x| *x *= lambda);
            b.weight *= lambda.powi(n - 1);
        }
        for patch in &mut out.patches {
            patch.center.iter_mut().for_each(|x| *x *= lambda);
            patch.scale *= lambda;
        }
        Ok(out)
    }

    /// Replaces every patch by quadrature samples and boundary samples.
    pub fn discretized(&self, resolution: usize) -> Self {
        let mut out = Self {
            patches: Vec::new(),
            ..self.clone()
        };
        for patch in &self.patches {
            let (samples, boundary) = discretize_patch(patch, resolution);
            out.samples.extend(samples);
            out.boundary.extend(boundary);
        }
        out
    }

    pub fn total_mass(&self) -> Result<f64> {
        let mut total: f64 = self.samples.iter().map(|s| s.weight).sum();
        for patch in &self.patches {
            total += patch_integral(patch, |_| 1.0)?;
        }
        Ok(total)
    }

    /// `mu({theta >= 1})`.
    pub fn density_mass(&self) -> Result<f64> {
        let mut total: f64 = self
            .samples
            .iter()
            .filter(|s| s.density >= 1.0)
            .map(|s| s.weight)
            .sum();
        for patch in &self.patches {
            total += patch_integral(patch, |_| 1.0)?;
        }
        Ok(total)
    }

    /// `||delta mu||(R^(n+m)) = int |H| dmu + ||boundary||`.
    pub fn total_variation(&self) -> Result<f64> {
        let mut total: f64 = self
            .samples
            .iter()
            .map(|s| s.weight * s.mean_curvature.as_deref().map_or(0.0, norm))
            .sum();
        total += self.boundary.iter().map(|b| b.weight).sum::<f64>();
        for patch in &self.patches {
            let n = patch.n;
            total += patch_integral(patch, |pt| pt.mean_curvature(n).abs())? / patch.scale;
            total += patch.curve.boundary_measure(n) * patch.scale.powi(n as i32 - 1);
        }
        Ok(total)
    }

    /// `mu(region)`; patches straddling a cube contribute to the upper end
    /// only.
    pub fn mass_in(&self, region: &Region) -> Result<Bracket> {
        self.patch_functional(region, |_| 1.0)
            .map(|b| b + Bracket::exact(self.sample_sum(region, |s| s.weight)))
    }

    /// `psi(region)`: `||delta mu||` when `p = 1`, `|H|^p mu` otherwise.
    pub fn curvature_measure(&self, region: &Region) -> Result<Bracket> {
        self.curvature_measure_with(region, self.p)
    }

    /// `||delta mu||(region)` irrespective of `p`.
    pub fn variation_in(&self, region: &Region) -> Result<Bracket> {
        self.curvature_measure_with(region, 1.0)
    }

    fn curvature_measure_with(&self, region: &Region, p: f64) -> Result<Bracket> {
        region.check_dim(self.ambient())?;
        let mut from_samples = 0.0;
        for s in self.samples.iter().filter(|s| region.contains(&s.position)) {
            let h = match &s.mean_curvature {
                Some(h) => norm(h),
                None if p == 1.0 => 0.0,
                None => {
                    return Err(Error::Contract(
                        "p > 1 but a sample carries no mean curvature".into(),
                    ))
                }
            };
            from_samples += s.weight * h.powf(p);
        }
        if p == 1.0 {
            from_samples += self
                .boundary
                .iter()
                .filter(|b| region.contains(&b.position))
                .map(|b| b.weight)
                .sum::<f64>();
        }
        let mut total = Bracket::exact(from_samples);
        for patch in &self.patches {
            let n = patch.n;
            let s = patch.scale;
            total += single_patch_functional(patch, region, |pt| (pt.mean_curvature(n).abs() / s).powf(p))?;
            if p == 1.0 {
                total += patch_boundary_in(patch, region);
            }
        }
        Ok(total)
    }

    /// `(delta mu)(eta) = int div_S eta dmu`. Patches are discretized at
    /// `resolution`.
    pub fn first_variation(&self, eta: &dyn TestField, resolution: usize) -> f64 {
        let disc;
        let v = if self.patches.is_empty() {
            self
        } else {
            disc = self.discretized(resolution);
            &disc
        };
        v.samples
            .iter()
            .map(|s| {
                let d = eta.jacobian(&s.position);
                let div: f64 = s
                    .plane
                    .basis
                    .iter()
                    .map(|b| {
                        let db: Vec<f64> = d.iter().map(|row| dot(row, b)).collect();
                        dot(b, &db)
                    })
                    .sum();
                s.weight * div
            })
            .sum()
    }

    /// `int H . eta dmu`.
    pub fn mean_curvature_pairing(&self, eta: &dyn TestField, resolution: usize) -> f64 {
        let disc;
        let v = if self.patches.is_empty() {
            self
        } else {
            disc = self.discretized(resolution);
            &disc
        };
        v.samples
            .iter()
            .filter_map(|s| {
                s.mean_curvature
                    .as_ref()
                    .map(|h| s.weight * dot(h, &eta.value(&s.position)))
            })
            .sum()
    }

    /// `int eta . conormal d||boundary||`.
    pub fn boundary_pairing(&self, eta: &dyn TestField, resolution: usize) -> f64 {
        let disc;
        let v = if self.patches.is_empty() {
            self
        } else {
            disc = self.discretized(resolution);
            &disc
        };
        v.boundary
            .iter()
            .map(|b| b.weight * dot(&b.conormal, &eta.value(&b.position)))
            .sum()
    }

    /// Height or tilt excess over `region` relative to `plane`. For
    /// patches, a horizontal plane allows exact ball integration; other
    /// planes fall back to discretized patches.
    pub fn excess(
        &self,
        x: &[f64],
        region: &Region,
        plane: &TangentPlane,
        q: f64,
        kind: ExcessKind,
        which: PlaneNorm,
    ) -> Result<Bracket> {
        region.check_dim(self.ambient())?;
        if x.len() != self.ambient() || plane.ambient != self.ambient() {
            return Err(Error::Dimension("excess point or plane in wrong space".into()));
        }
        if !(q >= 1.0) {
            return Err(Error::Domain(format!("excess exponent {q} must be at least 1")));
        }
        let integrand = |s: &VarifoldSample| -> Result<f64> {
            let v: Vec<f64> = s.position.iter().zip(x).map(|(a, b)| a - b).collect();
            Ok(match kind {
                ExcessKind::Height => plane.distance(&v).powf(q),
                ExcessKind::Tilt => plane_distance(&s.plane, plane, which)?.powf(q),
            })
        };
        let mut total = 0.0;
        for s in self.samples.iter().filter(|s| region.contains(&s.position)) {
            total += s.weight * integrand(s)?;
        }
        let mut out = Bracket::exact(total);
        let horizontal = plane
            .normal()
            .map(|nu| (nu[0].abs() - 1.0).abs() < 1e-14)
            .unwrap_or(false);
        for patch in &self.patches {
            if horizontal {
                let x0 = x[0];
                let c0 = patch.center[0];
                let sc = patch.scale;
                out += single_patch_functional(patch, region, |pt| match kind {
                    ExcessKind::Height => (c0 + sc * pt.t - x0).abs().powf(q),
                    ExcessKind::Tilt => pt.tilt(which).powf(q),
                })?;
            } else {
                let (samples, _) = discretize_patch(patch, DEFAULT_RESOLUTION);
                let mut part = 0.0;
                for s in samples.iter().filter(|s| region.contains(&s.position)) {
                    part += s.weight * integrand(s)?;
                }
                out += Bracket::exact(part);
            }
        }
        Ok(out)
    }

    /// `mu(B(x, rho)) / (omega_n rho^n)`.
    pub fn density_ratio(&self, x: &[f64], rho: f64) -> Result<Bracket> {
        let m = self.mass_in(&Region::ball(x.to_vec(), rho))?;
        let denom = unit_ball_volume(self.n) * rho.powi(self.n as i32);
        Ok(Bracket {
            lower: m.lower / denom,
            upper: m.upper / denom,
        })
    }

    /// Mass-weighted mean of a sample function over a region. Patches are
    /// discretized first.
    pub fn fint_average<F: Fn(&VarifoldSample) -> f64>(&self, region: &Region, f: F) -> Result<f64> {
        region.check_dim(self.ambient())?;
        let disc;
        let v = if self.patches.is_empty() {
            self
        } else {
            disc = self.discretized(DEFAULT_RESOLUTION);
            &disc
        };
        let (mut mass, mut acc) = (0.0, 0.0);
        for s in v.samples.iter().filter(|s| region.contains(&s.position)) {
            mass += s.weight;
            acc += s.weight * f(s);
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Degenerate("region carries no mass".into()));
        }
        Ok(acc / mass)
    }

    fn sample_sum<F: Fn(&VarifoldSample) -> f64>(&self, region: &Region, f: F) -> f64 {
        self.samples
            .iter()
            .filter(|s| region.contains(&s.position))
            .map(f)
            .sum()
    }

    fn patch_functional<G: Fn(&ProfilePoint) -> f64 + Copy>(
        &self,
        region: &Region,
        g: G,
    ) -> Result<Bracket> {
        region.check_dim(self.ambient())?;
        let mut out = Bracket::default();
        for patch in &self.patches {
            out += single_patch_functional(patch, region, g)?;
        }
        Ok(out)
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("radius {r} must be positive and finite")));
    }
    Ok(())
}

/// `int g dH^n` over a whole placed patch, `g` taking unit-scale profile
/// data.
pub(crate) fn patch_integral<G: Fn(&ProfilePoint) -> f64>(patch: &PlacedSurface, g: G) -> Result<f64> {
    Ok(patch
        .curve
        .integrate(patch.n, DEFAULT_ORDER, DEFAULT_QUAD_TOL, "patch integral", g)?
        * patch.scale.powi(patch.n as i32))
}

fn single_patch_functional<G: Fn(&ProfilePoint) -> f64>(
    patch: &PlacedSurface,
    region: &Region,
    g: G,
) -> Result<Bracket> {
    match region {
        Region::Ball { center, radius } => Ok(Bracket::exact(patch.integrate_in_ball(
            center,
            *radius,
            &Adaptive::default(),
            g,
        )?)),
        Region::Cube { .. } => {
            let (lo, hi) = patch.bounding_box();
            match region.classify_box(&lo, &hi) {
                BoxRelation::Outside => Ok(Bracket::default()),
                BoxRelation::Inside => Ok(Bracket::exact(patch_integral(patch, g)?)),
                BoxRelation::Straddles => Ok(Bracket {
                    lower: 0.0,
                    upper: patch_integral(patch, g)?,
                }),
            }
        }
    }
}

fn patch_boundary_in(patch: &PlacedSurface, region: &Region) -> Bracket {
    match region {
        Region::Ball { center, radius } => Bracket::exact(patch.boundary_in_ball(center, *radius)),
        Region::Cube { .. } => {
            let full = patch.curve.boundary_measure(patch.n) * patch.scale.powi(patch.n as i32 - 1);
            let (lo, hi) = patch.bounding_box();
            match region.classify_box(&lo, &hi) {
                BoxRelation::Outside => Bracket::default(),
                BoxRelation::Inside => Bracket::exact(full),
                BoxRelation::Straddles => Bracket {
                    lower: 0.0,
                    upper: full,
                },
            }
        }
    }
}

/// Quadrature samples of a patch: Gauss-Legendre along each profile piece
/// times a product rule on the rotation sphere.
pub fn discretize_patch(patch: &PlacedSurface, resolution: usize) -> (Vec<VarifoldSample>, Vec<BoundarySample>) {
    let n = patch.n;
    let dirs = sphere_quadrature(n - 1, resolution);
    let rule = GaussLegendre::cached(resolution.max(2));
    let sc = patch.scale;
    let place = |s: f64, t: f64, w: &[f64]| -> Vec<f64> {
        let mut x = Vec::with_capacity(n + 1);
        x.push(patch.center[0] + sc * t);
        x.extend(patch.center[1..].iter().zip(w).map(|(c, wi)| c + sc * s * wi));
        x
    };
    let mut samples = Vec::new();
    for piece in &patch.curve.pieces {
        let len = piece.length();
        for (u, wu) in rule.mapped(0.0, 1.0) {
            let pt = piece.eval(u);
            let h = pt.mean_curvature(n) / sc;
            for (dir, wd) in &dirs {
                let mut normal = Vec::with_capacity(n + 1);
                normal.push(pt.normal[1]);
                normal.extend(dir.iter().map(|w| pt.normal[0] * w));
                let plane = TangentPlane::from_normal(&normal).expect("unit normal");
                samples.push(VarifoldSample {
                    position: place(pt.s, pt.t, dir),
                    plane,
                    weight: wu * len * pt.s.powi(n as i32 - 1) * wd * sc.powi(n as i32),
                    mean_curvature: Some(normal.iter().map(|v| -h * v).collect()),
                    density: 1.0,
                });
            }
        }
    }
    let mut boundary = Vec::new();
    for ring in &patch.curve.boundary {
        for (dir, wd) in &dirs {
            let mut conormal = Vec::with_capacity(n + 1);
            conormal.push(ring.conormal[1]);
            conormal.extend(dir.iter().map(|w| ring.conormal[0] * w));
            boundary.push(BoundarySample {
                position: place(ring.s, ring.t, dir),
                weight: wd * (sc * ring.s).powi(n as i32 - 1),
                conormal,
            });
        }
    }
    (samples, boundary)
}
