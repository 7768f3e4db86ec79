//! Exact dyadic cube families and slab cells.
//!
//! Level `i` cubes have centers on the lattice `2^(-i-1) Z^n` and half-width
//! `2^(-i-2)`. A slab cell of level `j` is `]2^(-j-1), 2^(-j)[ x W` for a level
//! `j` cube `W`; the first ambient coordinate is the height above the plane
//! `T = {0} x R^n`.
//!
//! All comparisons are carried out in `i128` after scaling every coordinate
//! by a common power of two, so boundary cases (touching cells) are decided
//! exactly.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported cell level. Scaled coordinates stay below 2^62.
pub const MAX_LEVEL: u32 = 60;

/// Ball queries square scaled coordinates, which needs a smaller exponent.
const MAX_BALL_SCALE: u32 = 52;

/// Refuses to materialize more cells than this in `enumerate_cells`.
pub const MAX_ENUMERATION: u128 = 50_000_000;

/// A dyadic rational `num * 2^(-exp)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dyadic {
    pub num: i64,
    pub exp: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };

    pub fn new(num: i64, exp: u32) -> Self {
        Self { num, exp }.normalized()
    }

    pub fn integer(v: i64) -> Self {
        Self { num: v, exp: 0 }
    }

    /// `2^(-e)`.
    pub fn pow2_neg(e: u32) -> Self {
        Self { num: 1, exp: e }
    }

    /// Exact conversion; fails unless `x` is a dyadic rational with
    /// denominator at most `2^MAX_LEVEL`.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("{x} is not a finite dyadic rational")));
        }
        for exp in 0..=MAX_LEVEL {
            let scaled = x * 2f64.powi(exp as i32);
            if scaled.fract() == 0.0 && scaled.abs() < 2f64.powi(62) {
                return Ok(Self::new(scaled as i64, exp));
            }
        }
        Err(Error::Domain(format!(
            "{x} is not a dyadic rational with denominator <= 2^{MAX_LEVEL}"
        )))
    }

    fn normalized(mut self) -> Self {
        if self.num == 0 {
            self.exp = 0;
        }
        while self.exp > 0 && self.num % 2 == 0 {
            self.num /= 2;
            self.exp -= 1;
        }
        self
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / 2f64.powi(self.exp as i32)
    }

    pub fn is_positive(self) -> bool {
        self.num > 0
    }

    /// Value scaled by `2^scale`; requires `scale >= exp`.
    fn scaled(self, scale: u32) -> i128 {
        debug_assert!(scale >= self.exp);
        (self.num as i128) << (scale - self.exp)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let s = self.exp.max(other.exp);
        self.scaled(s).cmp(&other.scaled(s))
    }
}

/// A cube of the family `W_level`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub index: Vec<i64>,
}

impl DyadicCube {
    pub fn center(&self) -> Vec<f64> {
        let step = 2f64.powi(-(self.level as i32) - 1);
        self.index.iter().map(|&k| k as f64 * step).collect()
    }

    pub fn half_width(&self) -> f64 {
        2f64.powi(-(self.level as i32) - 2)
    }
}

/// A cell `]2^(-j-1), 2^(-j)[ x cube` of the family `F_j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlabCell {
    pub cube: DyadicCube,
}

impl SlabCell {
    pub fn level(&self) -> u32 {
        self.cube.level
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    /// Center in `R^(n+1)`, height coordinate first.
    pub center: Vec<f64>,
    pub cross_half_width: f64,
    pub slab: (f64, f64),
}

pub fn cell_geometry(cell: &SlabCell) -> CellGeometry {
    let j = cell.level() as i32;
    let mut center = Vec::with_capacity(cell.cube.index.len() + 1);
    center.push(3.0 * 2f64.powi(-j - 2));
    center.extend(cell.cube.center());
    CellGeometry {
        center,
        cross_half_width: 2f64.powi(-j - 2),
        slab: (2f64.powi(-j - 1), 2f64.powi(-j)),
    }
}

/// Cube window `{0} x cube(center, half_width)` restricting a truncated
/// build. The window's own extent in the height direction is
/// `[-half_width, half_width]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// Coordinates of the center within `T` (length `n`).
    pub center: Vec<Dyadic>,
    pub half_width: Dyadic,
}

impl Window {
    pub fn new(center: Vec<Dyadic>, half_width: Dyadic) -> Result<Self> {
        if !half_width.is_positive() {
            return Err(Error::Domain("window half-width must be positive".into()));
        }
        if center.is_empty() {
            return Err(Error::Domain("window center needs at least one coordinate".into()));
        }
        Ok(Self { center, half_width })
    }

    /// Window centered at the origin of `T = R^n`.
    pub fn centered(n: usize, half_width: Dyadic) -> Result<Self> {
        Self::new(vec![Dyadic::ZERO; n], half_width)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center_f64(&self) -> Vec<f64> {
        self.center.iter().map(|d| d.to_f64()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Cells meeting the region (`b_{i,j}`).
    Intersecting,
    /// Cells whose closure lies in the region (`c_{i,j}`).
    Contained,
}

/// Closed region in `R^(n+1)` with dyadic data. Coordinates are ordered
/// height first.
#[derive(Debug, Clone, PartialEq)]
pub enum LatticeRegion {
    Cube { center: Vec<Dyadic>, half_width: Dyadic },
    Ball { center: Vec<Dyadic>, radius: Dyadic },
}

impl LatticeRegion {
    /// Cube `C(x, half_width)` about a point `x` of `T`.
    pub fn cube_on_plane(x: &[Dyadic], half_width: Dyadic) -> Self {
        let mut center = vec![Dyadic::ZERO];
        center.extend_from_slice(x);
        LatticeRegion::Cube { center, half_width }
    }

    pub fn ball_on_plane(x: &[Dyadic], radius: Dyadic) -> Self {
        let mut center = vec![Dyadic::ZERO];
        center.extend_from_slice(x);
        LatticeRegion::Ball { center, radius }
    }

    fn center(&self) -> &[Dyadic] {
        match self {
            LatticeRegion::Cube { center, .. } | LatticeRegion::Ball { center, .. } => center,
        }
    }

    fn size(&self) -> Dyadic {
        match self {
            LatticeRegion::Cube { half_width, .. } => *half_width,
            LatticeRegion::Ball { radius, .. } => *radius,
        }
    }
}

fn check_level(j: u32) -> Result<()> {
    if j > MAX_LEVEL {
        return Err(Error::Capacity(format!(
            "level {j} exceeds the supported maximum {MAX_LEVEL}"
        )));
    }
    Ok(())
}

fn common_scale(j: u32, coords: &[Dyadic], extra: Dyadic) -> u32 {
    coords
        .iter()
        .map(|d| d.exp)
        .chain([extra.exp, j + 2])
        .max()
        .unwrap_or(j + 2)
}

/// Inclusive range of `k` with `|k * step - c| <= reach`, or `None`.
fn lattice_range(c: i128, reach: i128, step: i128) -> Option<(i128, i128)> {
    if reach < 0 {
        return None;
    }
    let lo = (c - reach).div_euclid(step) + i128::from((c - reach).rem_euclid(step) != 0);
    let hi = (c + reach).div_euclid(step);
    (lo <= hi).then_some((lo, hi))
}

fn range_len(r: Option<(i128, i128)>) -> u128 {
    r.map_or(0, |(lo, hi)| (hi - lo + 1) as u128)
}

fn checked_product(factors: impl IntoIterator<Item = u128>) -> Result<u128> {
    factors.into_iter().try_fold(1u128, |acc, f| {
        acc.checked_mul(f)
            .ok_or_else(|| Error::Capacity("cell count overflows u128".into()))
    })
}

/// Slab test in scaled units: `(lo, hi)` is the open height interval of the
/// level, `(a, b)` the closed height interval of a cube region.
fn slab_meets(lo: i128, hi: i128, a: i128, b: i128, mode: CountMode) -> bool {
    match mode {
        CountMode::Intersecting => lo < b && hi > a,
        CountMode::Contained => a <= lo && hi <= b,
    }
}

/// Number of level-`j` cells meeting (or contained in) a region.
pub fn count_in_region(j: u32, region: &LatticeRegion, mode: CountMode) -> Result<u128> {
    check_level(j)?;
    let coords = region.center();
    if coords.len() < 2 {
        return Err(Error::Dimension("region needs height plus at least one plane coordinate".into()));
    }
    let size = region.size();
    if !size.is_positive() {
        return Err(Error::Domain("region size must be positive".into()));
    }
    let scale = common_scale(j, coords, size);
    let step = 1i128 << (scale - j - 1);
    let half = 1i128 << (scale - j - 2);
    let slab_lo = 1i128 << (scale - j - 1);
    let slab_hi = 1i128 << (scale - j);
    let y0 = coords[0].scaled(scale);
    let plane: Vec<i128> = coords[1..].iter().map(|d| d.scaled(scale)).collect();
    let r = size.scaled(scale);

    match region {
        LatticeRegion::Cube { .. } => {
            if !slab_meets(slab_lo, slab_hi, y0 - r, y0 + r, mode) {
                return Ok(0);
            }
            let reach = match mode {
                CountMode::Intersecting => r + half,
                CountMode::Contained => r - half,
            };
            checked_product(plane.iter().map(|&c| range_len(lattice_range(c, reach, step))))
        }
        LatticeRegion::Ball { .. } => {
            if scale > MAX_BALL_SCALE {
                return Err(Error::Capacity(format!(
                    "ball query needs scale 2^{scale}, above 2^{MAX_BALL_SCALE}"
                )));
            }
            let r2 = r * r;
            let budget = match mode {
                CountMode::Intersecting => {
                    let inside = y0 > slab_lo && y0 < slab_hi;
                    let dy = if inside { 0 } else { (slab_lo - y0).max(y0 - slab_hi) };
                    // Open slab: a positive height gap must be strictly inside.
                    if inside {
                        r2
                    } else {
                        r2 - dy * dy - 1
                    }
                }
                CountMode::Contained => {
                    let dy = (y0 - slab_lo).abs().max((y0 - slab_hi).abs());
                    r2 - dy * dy
                }
            };
            if budget < 0 {
                return Ok(0);
            }
            Ok(ball_axes(&plane, budget, step, half, mode))
        }
    }
}

/// Counts lattice tuples whose summed per-axis squared distances fit in
/// `budget`.
fn ball_axes(centers: &[i128], budget: i128, step: i128, half: i128, mode: CountMode) -> u128 {
    let (c, rest) = centers.split_first().expect("at least one axis");
    let bound = isqrt(budget as u128) as i128;
    let reach = match mode {
        CountMode::Intersecting => bound + half,
        CountMode::Contained => bound - half,
    };
    let Some((lo, hi)) = lattice_range(*c, reach, step) else {
        return 0;
    };
    if rest.is_empty() {
        return (hi - lo + 1) as u128;
    }
    let mut total = 0u128;
    for k in lo..=hi {
        let off = (k * step - c).abs();
        let d = match mode {
            CountMode::Intersecting => (off - half).max(0),
            CountMode::Contained => off + half,
        };
        let remaining = budget - d * d;
        if remaining >= 0 {
            total += ball_axes(rest, remaining, step, half, mode);
        }
    }
    total
}

fn isqrt(v: u128) -> u128 {
    if v < 2 {
        return v;
    }
    let mut x = (v as f64).sqrt() as u128;
    while x * x > v {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= v {
        x += 1;
    }
    x
}

/// `b_{i,j}` (intersecting) or `c_{i,j}` (contained) for the cube
/// `C(x, 2^(-i))` about a point `x` of `T`.
pub fn count_cells(i: u32, j: u32, x: &[Dyadic], mode: CountMode) -> Result<u128> {
    check_level(i)?;
    if j < i {
        return Ok(0);
    }
    count_in_region(j, &LatticeRegion::cube_on_plane(x, Dyadic::pow2_neg(i)), mode)
}

/// Range of level-`j` indices per plane axis whose closed cells meet the
/// closed window cube, or `None` when the slab misses the window.
pub fn window_index_ranges(window: &Window, j: u32) -> Result<Option<Vec<(i64, i64)>>> {
    check_level(j)?;
    let scale = common_scale(j, &window.center, window.half_width);
    let h = window.half_width.scaled(scale);
    // Closed slab [2^(-j-1), 2^(-j)] against the closed height range [-h, h].
    if (1i128 << (scale - j - 1)) > h {
        return Ok(None);
    }
    let step = 1i128 << (scale - j - 1);
    let half = 1i128 << (scale - j - 2);
    let mut ranges = Vec::with_capacity(window.dim());
    for c in &window.center {
        match lattice_range(c.scaled(scale), h + half, step) {
            Some((lo, hi)) => {
                let lo = i64::try_from(lo).map_err(|_| Error::Capacity("index below i64".into()))?;
                let hi = i64::try_from(hi).map_err(|_| Error::Capacity("index above i64".into()))?;
                ranges.push((lo, hi));
            }
            None => return Ok(None),
        }
    }
    Ok(Some(ranges))
}

/// Number of level-`j` cells whose closure meets the window.
pub fn window_cell_count(window: &Window, j: u32) -> Result<u128> {
    match window_index_ranges(window, j)? {
        None => Ok(0),
        Some(r) => checked_product(r.iter().map(|(lo, hi)| (hi - lo + 1) as u128)),
    }
}

/// All level-`j` cells whose closure meets the window, in lexicographic
/// index order.
pub fn enumerate_cells(window: &Window, j: u32) -> Result<Vec<SlabCell>> {
    let Some(ranges) = window_index_ranges(window, j)? else {
        return Ok(Vec::new());
    };
    let total = checked_product(ranges.iter().map(|(lo, hi)| (hi - lo + 1) as u128))?;
    if total > MAX_ENUMERATION {
        return Err(Error::Capacity(format!(
            "{total} cells at level {j} exceed the enumeration limit {MAX_ENUMERATION}"
        )));
    }
    let mut cells = Vec::with_capacity(total as usize);
    let mut index: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        cells.push(SlabCell {
            cube: DyadicCube {
                level: j,
                index: index.clone(),
            },
        });
        // Odometer increment, last axis fastest.
        let mut axis = ranges.len();
        loop {
            if axis == 0 {
                return Ok(cells);
            }
            axis -= 1;
            if index[axis] < ranges[axis].1 {
                index[axis] += 1;
                break;
            }
            index[axis] = ranges[axis].0;
        }
    }
}
