//! One-dimensional quadrature rules.
//!
//! Two rules are provided: fixed-order Gauss-Legendre (nodes cached per
//! order) for smooth integrands, and adaptive Gauss-Kronrod 7/15 bisection
//! for integrands with kinks, such as indicator-weighted integrals over the
//! part of a surface that lies inside a ball.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};

/// Nodes and weights of the Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule of the given order by Newton iteration on the
    /// Legendre polynomial, starting from the Tricomi initial guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared, cached rule of the given order.
    pub fn cached(order: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<RwLock<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
        if let Some(rule) = cache.read().expect("quadrature cache poisoned").get(&order) {
            return Arc::clone(rule);
        }
        let rule = Arc::new(GaussLegendre::new(order));
        cache
            .write()
            .expect("quadrature cache poisoned")
            .entry(order)
            .or_insert(rule)
            .clone()
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integrates `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Mapped nodes and weights on [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, w * half))
    }
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if order == 0 {
        return (1.0, 0.0);
    }
    let n = order as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates with order `order` and `2 * order` and fails if the two
/// disagree by more than `rel_tol` relative to the larger magnitude.
pub fn gauss_legendre_checked<F: Fn(f64) -> f64>(
    a: f64,
    b: f64,
    order: usize,
    rel_tol: f64,
    what: &str,
    f: F,
) -> Result<f64> {
    let coarse = GaussLegendre::cached(order).integrate(a, b, &f);
    let fine = GaussLegendre::cached(2 * order).integrate(a, b, &f);
    let scale = coarse.abs().max(fine.abs()).max(f64::MIN_POSITIVE);
    let rel = (fine - coarse).abs() / scale;
    if rel > rel_tol && (fine - coarse).abs() > 1e-300 {
        return Err(Error::Quadrature {
            what: what.to_string(),
            estimate: fine,
            error: (fine - coarse).abs(),
            detail: format!("order {order} vs {} differ by relative {rel:.3e}", 2 * order),
        });
    }
    Ok(fine)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub(crate) fn gk15<F: FnMut(f64) -> f64>(a: f64, b: f64, f: &mut F) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = fc * GK_WEIGHTS_K[7];
    let mut gauss = fc * GK_WEIGHTS_G[3];
    for (j, &x) in GK_NODES[..7].iter().enumerate() {
        let f1 = f(mid - half * x);
        let f2 = f(mid + half * x);
        kronrod += GK_WEIGHTS_K[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += GK_WEIGHTS_G[j / 2] * (f1 + f2);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod integration by repeated bisection of the interval
/// with the largest error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Adaptive {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Adaptive {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

impl Adaptive {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let (v, e) = gk15(a, b, &mut f);
        let mut intervals = vec![(a, b, v, e)];
        let mut total = v;
        let mut err = e;
        while err > self.abs_tol.max(self.rel_tol * total.abs()) {
            if intervals.len() >= self.max_intervals {
                return Err(Error::Quadrature {
                    what: "adaptive Gauss-Kronrod".into(),
                    estimate: total,
                    error: err,
                    detail: format!("interval budget {} exhausted", self.max_intervals),
                });
            }
            let worst = intervals
                .iter()
                .enumerate()
                .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
                .map(|(i, _)| i)
                .expect("non-empty interval list");
            let (lo, hi, v0, e0) = intervals.swap_remove(worst);
            let m = 0.5 * (lo + hi);
            if m <= lo || m >= hi {
                // Interval cannot be split further in floating point.
                intervals.push((lo, hi, v0, 0.0));
                err -= e0;
                continue;
            }
            let (v1, e1) = gk15(lo, m, &mut f);
            let (v2, e2) = gk15(m, hi, &mut f);
            total += v1 + v2 - v0;
            err += e1 + e2 - e0;
            intervals.push((lo, m, v1, e1));
            intervals.push((m, hi, v2, e2));
        }
        // Re-sum to avoid drift from incremental updates.
        Ok(intervals.iter().map(|iv| iv.2).sum())
    }

    /// Integrates over consecutive sub-intervals split at `breaks`, which
    /// must be sorted and lie in [a, b].
    pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        breaks: &[f64],
        mut f: F,
    ) -> Result<f64> {
        let mut total = 0.0;
        let mut lo = a;
        for &x in breaks.iter().filter(|&&x| x > a && x < b) {
            total += self.integrate(lo, x, &mut f)?;
            lo = x;
        }
        total += self.integrate(lo, b, &mut f)?;
        Ok(total)
    }
}
