//! One-dimensional Gauss–Legendre quadrature with global adaptive bisection.
//!
//! Integrands with inverse-square-root (or milder) singularities at interval
//! ends are integrated after the substitution
//! `x = a + (b − a)(3s² − 2s³)`, whose derivative vanishes linearly at both
//! `s = 0` and `s = 1`. Near each end this is the familiar `x = a + u²`
//! change of variables, so `(x − a)^{-1/2}` becomes bounded.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

const MAX_CACHED_ORDER: usize = 128;

impl GaussLegendre {
    /// Newton iteration on the three-term recurrence, Chebyshev initial guess.
    pub fn compute(order: usize) -> GaussLegendre {
        assert!(order >= 1, "gauss-legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let nf = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
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
        GaussLegendre { nodes, weights }
    }

    /// Shared rule for `order ≤ 128`, computed on first use.
    pub fn cached(order: usize) -> &'static GaussLegendre {
        static RULES: [OnceLock<GaussLegendre>; MAX_CACHED_ORDER + 1] =
            [const { OnceLock::new() }; MAX_CACHED_ORDER + 1];
        assert!((1..=MAX_CACHED_ORDER).contains(&order), "order {order} not cached");
        RULES[order].get_or_init(|| GaussLegendre::compute(order))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Plain rule on `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub order: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Cap on the number of live subintervals.
    pub max_intervals: usize,
    /// Maximum bisection depth of any subinterval.
    pub max_depth: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { order: 10, rel_tol: 1e-6, abs_tol: 0.0, max_intervals: 2_000, max_depth: 40 }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(self, rel_tol: f64) -> Self {
        QuadConfig { rel_tol, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl QuadResult {
    pub fn zero() -> Self {
        QuadResult { value: 0.0, error: 0.0, evaluations: 0, converged: true }
    }
}

struct Cell {
    a: f64,
    b: f64,
    depth: u32,
    left: f64,
    right: f64,
    err: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive integration of `f` over the union of the segments
/// `[a_i, b_i]`. Each cell's error is the difference between the rule on
/// the whole cell and on its two halves; the worst cell is bisected until
/// the summed error meets the tolerance.
pub fn adaptive_segments<F: FnMut(f64) -> f64>(
    segments: &[(f64, f64)],
    cfg: &QuadConfig,
    mut f: F,
) -> QuadResult {
    let rule = GaussLegendre::cached(cfg.order);
    let mut evals = 0usize;
    let mut heap = BinaryHeap::new();
    let make = |a: f64, b: f64, whole: f64, depth: u32, evals: &mut usize, f: &mut F| {
        let m = 0.5 * (a + b);
        let left = rule.integrate(a, m, &mut *f);
        let right = rule.integrate(m, b, &mut *f);
        *evals += 2 * rule.order();
        let err = (whole - left - right).abs();
        Cell { a, b, depth, left, right, err }
    };
    for &(a, b) in segments {
        if !(b > a) {
            continue;
        }
        let whole = rule.integrate(a, b, &mut f);
        evals += rule.order();
        heap.push(make(a, b, whole, 0, &mut evals, &mut f));
    }
    let mut converged = true;
    let (mut total, mut err) = heap.iter().fold((0.0, 0.0), |(v, e), c: &Cell| (v + c.left + c.right, e + c.err));
    let mut magnitude: f64 = heap.iter().map(|c: &Cell| c.left.abs() + c.right.abs()).sum();
    loop {
        if !total.is_finite() || !err.is_finite() {
            converged = false;
            break;
        }
        // Differences below a few hundred ulps of the summed magnitudes are
        // rounding noise, not discretization error.
        if err <= cfg.abs_tol.max(cfg.rel_tol * total.abs()).max(256.0 * f64::EPSILON * magnitude) {
            break;
        }
        if heap.len() >= cfg.max_intervals {
            converged = false;
            break;
        }
        let worst = heap.pop().expect("nonempty when error is positive");
        if worst.depth >= cfg.max_depth {
            heap.push(worst);
            converged = false;
            break;
        }
        let m = 0.5 * (worst.a + worst.b);
        let l = make(worst.a, m, worst.left, worst.depth + 1, &mut evals, &mut f);
        let r = make(m, worst.b, worst.right, worst.depth + 1, &mut evals, &mut f);
        total += l.left + l.right + r.left + r.right - worst.left - worst.right;
        err += l.err + r.err - worst.err;
        magnitude += l.left.abs() + l.right.abs() + r.left.abs() + r.right.abs() - worst.left.abs() - worst.right.abs();
        heap.push(l);
        heap.push(r);
    }
    let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), c| (v + c.left + c.right, e + c.err));
    QuadResult { value, error, evaluations: evals, converged }
}

/// Adaptive integration of `f` over `[a, b]`.
pub fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, cfg: &QuadConfig, f: F) -> QuadResult {
    adaptive_segments(&[(a, b)], cfg, f)
}

/// The end-smoothing map of `[0, 1]` onto `[a, b]`: returns `(x, dx/ds)`.
#[inline]
pub fn smooth_ends(a: f64, b: f64, s: f64) -> (f64, f64) {
    let (x, _, _, dx) = smooth_ends_with_offsets(a, b, s);
    (x, dx)
}

/// Like [`smooth_ends`], also returning `x − a` and `b − x` computed without
/// cancellation near the respective end: `(x, x − a, b − x, dx/ds)`.
#[inline]
pub fn smooth_ends_with_offsets(a: f64, b: f64, s: f64) -> (f64, f64, f64, f64) {
    let w = b - a;
    let dx = 6.0 * w * s * (1.0 - s);
    if s < 0.5 {
        let da = w * s * s * (3.0 - 2.0 * s);
        (a + da, da, w - da, dx)
    } else {
        let r = 1.0 - s;
        let db = w * r * r * (3.0 - 2.0 * r);
        (b - db, w - db, db, dx)
    }
}

/// Sorted, deduplicated cut points restricted to `(lo, hi)`, with `lo` and `hi`
/// at the ends. Returns an empty list if `lo >= hi`.
pub fn pieces(lo: f64, hi: f64, cuts: &[f64]) -> Vec<f64> {
    if !(hi > lo) {
        return Vec::new();
    }
    let tiny = 1e-13 * (hi - lo).max(lo.abs().max(hi.abs()) * 1e-3);
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|&c| c > lo + tiny && c < hi - tiny).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= tiny);
    pts
}

/// Offsets of `x` from the range ends, as the offset of the piece plus the
/// offset within it, so that no digits are lost to the magnitude of `x`.
#[inline]
fn range_offsets(pts: &[f64], p: usize, s: f64) -> (f64, f64, f64, f64) {
    let last = pts.len() - 2;
    let (x, da, db, dx) = smooth_ends_with_offsets(pts[p], pts[p + 1], s);
    let lo_off = if p == 0 { da } else { (pts[p] - pts[0]) + da };
    let hi_off = if p == last { db } else { (pts[last + 1] - pts[p + 1]) + db };
    (x, lo_off, hi_off, dx)
}

/// Adaptive integration over `[lo, hi]` split at `cuts`, with the end-smoothing
/// substitution applied on every piece so that integrable inverse-square-root
/// singularities at any cut are harmless. `f` receives `(x, x − lo, hi − x)`;
/// the offsets stay accurate where `x` itself cannot resolve the distance to
/// an end.
pub fn adaptive_pieces_offsets<F: FnMut(f64, f64, f64) -> f64>(
    lo: f64,
    hi: f64,
    cuts: &[f64],
    cfg: &QuadConfig,
    mut f: F,
) -> QuadResult {
    let pts = pieces(lo, hi, cuts);
    if pts.len() < 2 {
        return QuadResult::zero();
    }
    // Piece p occupies s ∈ [p, p + 1].
    let segs: Vec<(f64, f64)> = (0..pts.len() - 1).map(|p| (p as f64, p as f64 + 1.0)).collect();
    adaptive_segments(&segs, cfg, |s| {
        let p = (s.floor() as usize).min(pts.len() - 2);
        let (x, dlo, dhi, dx) = range_offsets(&pts, p, s - p as f64);
        if dx == 0.0 {
            0.0
        } else {
            f(x, dlo, dhi) * dx
        }
    })
}

/// [`adaptive_pieces_offsets`] for integrands that only need `x`.
pub fn adaptive_pieces<F: FnMut(f64) -> f64>(lo: f64, hi: f64, cuts: &[f64], cfg: &QuadConfig, mut f: F) -> QuadResult {
    adaptive_pieces_offsets(lo, hi, cuts, cfg, |x, _, _| f(x))
}

/// Fixed-order composite rule over the same pieces as [`adaptive_pieces_offsets`].
pub fn fixed_pieces_offsets<F: FnMut(f64, f64, f64) -> f64>(lo: f64, hi: f64, cuts: &[f64], order: usize, mut f: F) -> f64 {
    let pts = pieces(lo, hi, cuts);
    if pts.len() < 2 {
        return 0.0;
    }
    let rule = GaussLegendre::cached(order);
    let mut total = 0.0;
    for p in 0..pts.len() - 1 {
        total += rule.integrate(0.0, 1.0, |s| {
            let (x, dlo, dhi, dx) = range_offsets(&pts, p, s);
            f(x, dlo, dhi) * dx
        });
    }
    total
}

/// [`fixed_pieces_offsets`] for integrands that only need `x`.
pub fn fixed_pieces<F: FnMut(f64) -> f64>(lo: f64, hi: f64, cuts: &[f64], order: usize, mut f: F) -> f64 {
    fixed_pieces_offsets(lo, hi, cuts, order, |x, _, _| f(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        for order in [1usize, 2, 5, 10, 33, 64] {
            let rule = GaussLegendre::compute(order);
            let wsum: f64 = rule.weights.iter().sum();
            assert_relative_eq!(wsum, 2.0, epsilon = 1e-13);
            let deg = 2 * order - 1;
            let got = rule.integrate(0.0, 1.0, |x| x.powi(deg as i32));
            assert_relative_eq!(got, 1.0 / (deg as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        let rule = GaussLegendre::cached(17);
        for i in 0..17 {
            assert_relative_eq!(rule.nodes[i], -rule.nodes[16 - i], epsilon = 1e-15);
            if i > 0 {
                assert!(rule.nodes[i] > rule.nodes[i - 1]);
            }
        }
    }

    #[test]
    fn adaptive_handles_peaks() {
        let cfg = QuadConfig::default().with_rel_tol(1e-10);
        let r = adaptive(-1.0, 1.0, &cfg, |x| 1.0 / (1e-4 + x * x));
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!(r.converged);
        assert_relative_eq!(r.value, exact, max_relative = 1e-9);
    }

    #[test]
    fn arcsine_integral_is_pi() {
        let cfg = QuadConfig::default().with_rel_tol(1e-12);
        let (a, b) = (-3.0, 7.5);
        let r = adaptive_pieces(a, b, &[], &cfg, |x| 1.0 / ((x - a) * (b - x)).sqrt());
        assert!(r.converged);
        assert_relative_eq!(r.value, PI, max_relative = 1e-11);
    }

    #[test]
    fn interior_singularity_at_cut() {
        // ∫_{-1}^{1} |x|^{-1/2} dx = 4
        let cfg = QuadConfig::default().with_rel_tol(1e-11);
        let r = adaptive_pieces(-1.0, 1.0, &[0.0], &cfg, |x| x.abs().powf(-0.5));
        assert_relative_eq!(r.value, 4.0, max_relative = 1e-10);
        let f = fixed_pieces(-1.0, 1.0, &[0.0], 12, |x| x.abs().powf(-0.5));
        assert_relative_eq!(f, 4.0, max_relative = 1e-10);
    }

    #[test]
    fn log_singularity_converges() {
        // ∫_0^1 x^{-1/2} ln(1/x) dx = 4
        let cfg = QuadConfig::default().with_rel_tol(1e-10);
        let r = adaptive_pieces(0.0, 1.0, &[], &cfg, |x| -x.ln() / x.sqrt());
        assert_relative_eq!(r.value, 4.0, max_relative = 1e-9);
    }

    #[test]
    fn empty_and_reversed_ranges_are_zero() {
        let cfg = QuadConfig::default();
        assert_eq!(adaptive_pieces(1.0, 1.0, &[], &cfg, |_| 1.0).value, 0.0);
        assert_eq!(adaptive_pieces(2.0, 1.0, &[], &cfg, |_| 1.0).value, 0.0);
        assert_eq!(fixed_pieces(2.0, 1.0, &[], 8, |_| 1.0), 0.0);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let cfg = QuadConfig { max_intervals: 4, rel_tol: 1e-14, ..QuadConfig::default() };
        let r = adaptive(0.0, 1.0, &cfg, |x| (50.0 * x).sin().abs());
        assert!(!r.converged);
        assert!(r.error > 0.0);
    }
}
