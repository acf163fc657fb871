//! Step functions, monotone rearrangement, and numerical checks of the
//! rearrangement and singular-integral inequalities.
//!
//! Step-function computations are exact up to floating-point rounding of the
//! piece widths; with dyadic breakpoints they are exact. The singular
//! integrals are evaluated with the end-smoothing quadrature of [`crate::quad`],
//! cut at every singular or kinked point of the integrand.
//!
//! A bound `LHS ≪ RHS` cannot be verified symbolically. Every lemma report
//! carries the ratio `LHS / RHS`; a sweep establishes that the ratio stays
//! bounded over the sampled parameters and freezes the largest one observed.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quad::{adaptive_pieces, adaptive_pieces_offsets, QuadConfig};
use crate::spectrum::log_prime_unchecked as log_p;

/// A nonnegative piecewise-constant function: `values[i]` on
/// `[breakpoints[i], breakpoints[i + 1])`, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 {
            return invalid(format!(
                "{} breakpoints for {} values; need one more breakpoint than values",
                breakpoints.len(),
                values.len()
            ));
        }
        if breakpoints.iter().any(|x| !x.is_finite()) || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("breakpoints must be finite and strictly increasing");
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("step values must be finite and nonnegative");
        }
        Ok(StepFunction { breakpoints, values })
    }

    /// `1` on `[a, b)`.
    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        StepFunction::new(vec![a, b], vec![1.0])
    }

    pub fn zero() -> Self {
        StepFunction { breakpoints: vec![0.0], values: Vec::new() }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (self.breakpoints[i], self.breakpoints[i + 1], v))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let b = &self.breakpoints;
        if self.values.is_empty() || x < b[0] || x >= b[b.len() - 1] {
            return 0.0;
        }
        let i = b.partition_point(|&p| p <= x) - 1;
        self.values[i]
    }

    pub fn integral(&self) -> f64 {
        self.pieces().map(|(a, b, v)| (b - a) * v).sum()
    }

    /// Measure of the support `{f > 0}`.
    pub fn support_measure(&self) -> f64 {
        self.level_measure(0.0)
    }

    /// `|{f > t}|`.
    pub fn level_measure(&self, t: f64) -> f64 {
        self.pieces().filter(|p| p.2 > t).map(|(a, b, _)| b - a).sum()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, a: f64) -> Result<Self> {
        StepFunction::new(self.breakpoints.clone(), self.values.iter().map(|v| v * a).collect())
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }
}

/// The nonincreasing rearrangement onto `[0, |supp f|)`: pieces with positive
/// value are laid end to end in order of decreasing value (ties keep their
/// original order), and adjacent equal values are merged.
pub fn monotone_rearrange(f: &StepFunction) -> StepFunction {
    let mut pieces: Vec<(f64, f64)> = f.pieces().filter(|p| p.2 > 0.0).map(|(a, b, v)| (b - a, v)).collect();
    pieces.sort_by(|x, y| y.1.total_cmp(&x.1));
    let mut breakpoints = vec![0.0];
    let mut values: Vec<f64> = Vec::new();
    let mut end = 0.0;
    for (w, v) in pieces {
        end += w;
        if values.last() == Some(&v) {
            *breakpoints.last_mut().expect("nonempty") = end;
        } else {
            values.push(v);
            breakpoints.push(end);
        }
    }
    StepFunction { breakpoints, values }
}

/// Largest discrepancy `| |{f > t}| − |{f* > t}| |` over `t` in the value set
/// of `f` and zero.
pub fn equimeasurability_defect(f: &StepFunction, fstar: &StepFunction) -> f64 {
    std::iter::once(0.0)
        .chain(f.values.iter().copied())
        .map(|t| (f.level_measure(t) - fstar.level_measure(t)).abs())
        .fold(0.0, f64::max)
}

fn merged_breakpoints(fs: &[&StepFunction]) -> Vec<f64> {
    let mut pts: Vec<f64> = fs.iter().flat_map(|f| f.breakpoints.iter().copied()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// `∫ ∏ fᵢ`, exact over the common refinement.
pub fn product_integral(fs: &[&StepFunction]) -> f64 {
    let pts = merged_breakpoints(fs);
    pts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (w[1] - w[0]) * fs.iter().map(|f| f.eval(mid)).product::<f64>()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Hardy–Littlewood: `∫ ∏ fᵢ ≤ ∫ ∏ fᵢ*`, both sides exact, with slack
/// `1e-12 · ∏ ‖fᵢ‖_∞ · max |supp fᵢ|`.
pub fn hl_inequality_check(fs: &[StepFunction]) -> Result<HlReport> {
    if fs.len() < 2 {
        return invalid("the Hardy–Littlewood check needs at least two functions");
    }
    let stars: Vec<StepFunction> = fs.iter().map(monotone_rearrange).collect();
    let lhs = product_integral(&fs.iter().collect::<Vec<_>>());
    let rhs = product_integral(&stars.iter().collect::<Vec<_>>());
    let scale = fs.iter().map(|f| f.sup()).product::<f64>() * fs.iter().map(|f| f.support_measure()).fold(0.0, f64::max);
    Ok(HlReport { lhs, rhs, holds: lhs <= rhs + 1e-12 * scale })
}

/// `(f ∗ g)(x) = ∫ f(y) g(x − y) dy`, exact.
pub fn convolve_at(f: &StepFunction, g: &StepFunction, x: f64) -> f64 {
    let mut total = 0.0;
    for (a, b, u) in f.pieces() {
        for (c, d, w) in g.pieces() {
            let lo = a.max(x - d);
            let hi = b.min(x - c);
            if hi > lo {
                total += u * w * (hi - lo);
            }
        }
    }
    total
}

/// `‖f ∗ g‖_∞`. The convolution is piecewise linear with kinks at sums of
/// breakpoints, so the maximum is attained at one of them.
pub fn convolution_sup(f: &StepFunction, g: &StepFunction) -> f64 {
    let mut best: f64 = 0.0;
    for &p in &f.breakpoints {
        for &q in &g.breakpoints {
            best = best.max(convolve_at(f, g, p + q));
        }
    }
    best
}

/// `⟨f*, g*⟩`, which dominates `‖f ∗ g‖_∞`.
pub fn rearranged_pairing(f: &StepFunction, g: &StepFunction) -> f64 {
    product_integral(&[&monotone_rearrange(f), &monotone_rearrange(g)])
}

/// Piecewise polynomial, continuous or not: on `[knots[i], knots[i + 1])` it
/// is `Σ_k coeffs[i][k] (x − knots[i])^k`; zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    knots: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

fn horner(c: &[f64], h: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * h + a)
}

/// Coefficients of `p(h + s)` in powers of `h`, given `p` in powers of `h`.
fn taylor_shift(c: &[f64], s: f64) -> Vec<f64> {
    let mut out = c.to_vec();
    let d = out.len();
    for i in 0..d {
        for j in (i..d - 1).rev() {
            out[j] += s * out[j + 1];
        }
    }
    out
}

impl PiecewisePoly {
    /// The indicator of `[−a, a]`.
    pub fn centered_indicator(a: f64) -> Self {
        PiecewisePoly { knots: vec![-a, a], coeffs: vec![vec![1.0]] }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().map(|c| c.len().saturating_sub(1)).max().unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if self.coeffs.is_empty() || x < k[0] || x > k[k.len() - 1] {
            return 0.0;
        }
        let i = (k.partition_point(|&p| p <= x).max(1) - 1).min(self.coeffs.len() - 1);
        horner(&self.coeffs[i], x - k[i])
    }

    /// Antiderivative from the left end, as `(per-piece constants, per-piece
    /// coefficients)`, together with the total mass.
    fn antiderivative(&self) -> (Vec<Vec<f64>>, f64) {
        let mut out = Vec::with_capacity(self.coeffs.len());
        let mut acc = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let mut a = Vec::with_capacity(c.len() + 1);
            a.push(acc);
            a.extend(c.iter().enumerate().map(|(k, v)| v / (k as f64 + 1.0)));
            acc = horner(&a, self.knots[i + 1] - self.knots[i]);
            out.push(a);
        }
        (out, acc)
    }

    /// `F(x)` given the antiderivative pieces: constant beyond the support.
    fn prim_piece(&self, prim: &[Vec<f64>], total: f64, x: f64) -> (Vec<f64>, f64) {
        let k = &self.knots;
        if x <= k[0] {
            (vec![0.0], x)
        } else if x >= k[k.len() - 1] {
            (vec![total], x)
        } else {
            let i = (k.partition_point(|&p| p <= x) - 1).min(prim.len() - 1);
            (prim[i].clone(), k[i])
        }
    }

    /// `f ∗ 1_{[−a, a]}`, i.e. `F(x + a) − F(x − a)`, exact.
    pub fn convolve_centered_indicator(&self, a: f64) -> PiecewisePoly {
        let (prim, total) = self.antiderivative();
        let mut knots: Vec<f64> = self.knots.iter().flat_map(|&p| [p - a, p + a]).collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut coeffs = Vec::with_capacity(knots.len() - 1);
        for w in knots.windows(2) {
            let (u, v) = (w[0], w[1]);
            let mid = 0.5 * (u + v);
            // On [u, v]: x + a and x − a each stay inside one piece of F.
            let (plus, plus_at) = self.prim_piece(&prim, total, mid + a);
            let (minus, minus_at) = self.prim_piece(&prim, total, mid - a);
            let mut c = taylor_shift(&plus, u + a - plus_at);
            let m = taylor_shift(&minus, u - a - minus_at);
            if c.len() < m.len() {
                c.resize(m.len(), 0.0);
            }
            for (x, y) in c.iter_mut().zip(&m) {
                *x -= y;
            }
            coeffs.push(c);
        }
        PiecewisePoly { knots, coeffs }
    }

    /// Iterated convolution `1_{[−a₁,a₁]} ∗ ⋯ ∗ 1_{[−a_m,a_m]}`.
    pub fn iterated_indicators(half_widths: &[f64]) -> Result<PiecewisePoly> {
        let Some((&first, rest)) = half_widths.split_first() else {
            return invalid("need at least one half-width");
        };
        if half_widths.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return invalid("half-widths must be positive");
        }
        let mut f = PiecewisePoly::centered_indicator(first);
        for &a in rest {
            f = f.convolve_centered_indicator(a);
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvReport {
    pub value_at_zero: f64,
    pub max_value: f64,
    /// Worst violation of `f(0) ≥ f(x)` over the grid and knots.
    pub max_excess: f64,
    /// Worst increase between consecutive points on `[0, ∞)`.
    pub max_increase: f64,
    /// Worst `|f(x) − f(−x)|`.
    pub asymmetry: f64,
    pub holds: bool,
}

/// Evaluates the iterated convolution of centered indicators at `grid`
/// symmetric points covering its support, and at every knot, and checks that
/// it peaks at `0` and is nonincreasing on `[0, ∞)`.
pub fn conv_indicator_max_at_zero(half_widths: &[f64], grid: usize) -> Result<ConvReport> {
    let f = PiecewisePoly::iterated_indicators(half_widths)?;
    let reach: f64 = half_widths.iter().sum();
    let mut xs: Vec<f64> = (0..=grid.max(1)).map(|i| reach * i as f64 / grid.max(1) as f64).collect();
    xs.extend(f.knots().iter().map(|k| k.abs()));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let at0 = f.eval(0.0);
    let vals: Vec<f64> = xs.iter().map(|&x| f.eval(x)).collect();
    let max_value = vals.iter().copied().fold(at0, f64::max);
    let max_excess = vals.iter().map(|v| v - at0).fold(0.0, f64::max);
    let max_increase = vals.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let asymmetry = xs.iter().zip(&vals).map(|(&x, v)| (v - f.eval(-x)).abs()).fold(0.0, f64::max);
    let tol = 1e-12 * max_value.max(f64::MIN_POSITIVE);
    Ok(ConvReport {
        value_at_zero: at0,
        max_value,
        max_excess,
        max_increase,
        asymmetry,
        holds: max_excess <= tol && max_increase <= tol && asymmetry <= tol,
    })
}

/// Outcome of one singular-integral inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Quadrature error estimate of `lhs`.
    pub lhs_error: f64,
    pub converged: bool,
    /// The integration segment is empty, so the inequality holds trivially.
    pub vacuous: bool,
}

impl RatioReport {
    fn new(lhs: f64, lhs_error: f64, rhs: f64, converged: bool) -> Self {
        RatioReport { lhs, rhs, ratio: lhs / rhs, lhs_error, converged, vacuous: false }
    }

    fn vacuous(rhs: f64) -> Self {
        RatioReport { lhs: 0.0, rhs, ratio: 0.0, lhs_error: 0.0, converged: true, vacuous: true }
    }
}

fn lemma_quad() -> QuadConfig {
    QuadConfig { rel_tol: 1e-8, max_intervals: 20_000, max_depth: 60, ..QuadConfig::default() }
}

/// Geometric cuts `lo + (p − lo)·2^{−j}`, `j = 1..=levels`, refining toward
/// `lo`, stopping before the offsets fall below what `lo` can resolve.
fn geometric_toward(lo: f64, p: f64, levels: u32, out: &mut Vec<f64>) {
    let floor = 1e-12 * lo.abs();
    let mut w = p - lo;
    for _ in 0..levels {
        w *= 0.5;
        if w.abs() <= floor {
            break;
        }
        out.push(lo + w);
    }
}

fn geometric_range(a: f64, b: f64, out: &mut Vec<f64>) {
    if a > 0.0 {
        let mut x = a * 2.0;
        while x < b {
            out.push(x);
            x *= 2.0;
        }
    } else {
        geometric_toward(0.0, b, 40, out);
    }
}

fn check_ab(a: f64, b: f64, t: f64) -> Result<()> {
    if !(a >= 0.0 && b > a && b.is_finite() && t > 0.0 && t.is_finite()) {
        return invalid(format!("need 0 <= a < b and T > 0, got a={a}, b={b}, T={t}"));
    }
    Ok(())
}

/// `∫_a^b x^{−1/2} (log′(T/x))^k dx` against `b^{1/2} (log′(T/b))^k`.
pub fn log_average_check(a: f64, b: f64, t: f64, k: u32) -> Result<RatioReport> {
    check_ab(a, b, t)?;
    let mut cuts = Vec::new();
    geometric_range(a, b, &mut cuts);
    let r = adaptive_pieces(a, b, &cuts, &lemma_quad(), |x| log_p(t / x).powi(k as i32) / x.sqrt());
    let rhs = b.sqrt() * log_p(t / b).powi(k as i32);
    Ok(RatioReport::new(r.value, r.error, rhs, r.converged))
}

/// `∫_a^b x^{−1} (log′(T/x))^k dx` against `log(b/a) (log′(T/a))^k`; needs `a > 0`.
pub fn log_average_inverse_check(a: f64, b: f64, t: f64, k: u32) -> Result<RatioReport> {
    check_ab(a, b, t)?;
    if a == 0.0 {
        return invalid("the x^{-1} average diverges at a = 0");
    }
    let mut cuts = Vec::new();
    geometric_range(a, b, &mut cuts);
    let r = adaptive_pieces(a, b, &cuts, &lemma_quad(), |x| log_p(t / x).powi(k as i32) / x);
    let rhs = (b / a).ln() * log_p(t / a).powi(k as i32);
    Ok(RatioReport::new(r.value, r.error, rhs, r.converged))
}

/// Closed form `∫_0^T x^{−1/2} (x + a)^{−1/2} dx = 2 asinh(√(T/a))`.
pub fn inv_sqrt_pair_integral(a: f64, t: f64) -> f64 {
    2.0 * (t / a).sqrt().asinh()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneDSmallReport {
    /// Quadrature value of the integral.
    pub quadrature: f64,
    /// Closed form of the integral.
    pub exact: f64,
    pub rhs: f64,
    /// `exact / log′(T/a)`.
    pub ratio: f64,
}

/// `∫_0^T x^{−1/2} (x + a)^{−1/2} dx ≍ log′(T/a)` for `0 < a ≤ T`.
pub fn lemma_1dsmall_check(a: f64, t: f64) -> Result<OneDSmallReport> {
    if !(a > 0.0 && t >= a && t.is_finite()) {
        return invalid(format!("need 0 < a <= T, got a={a}, T={t}"));
    }
    let mut cuts = vec![a];
    geometric_range(0.0, a.min(t), &mut cuts);
    geometric_range(a, t, &mut cuts);
    let r = adaptive_pieces(0.0, t, &cuts, &lemma_quad(), |x| 1.0 / (x.sqrt() * (x + a).sqrt()));
    let exact = inv_sqrt_pair_integral(a, t);
    let rhs = log_p(t / a);
    Ok(OneDSmallReport { quadrature: r.value, exact, rhs, ratio: exact / rhs })
}

fn log_product(t_scale: f64, ls: &[f64], y: f64) -> f64 {
    ls.iter().map(|&l| log_p(t_scale / (l - y).abs())).product()
}

/// `∫_0^T x^{−1/2}(x+a)^{−1/2}(x+b)^{1/2} ∏ log′(T/|Lᵢ+x|) dx` against
/// `T^{1/2} (log′(b/a))^{k+1}`, `k = L.len()`.
pub fn lemma_1d_check(a: f64, b: f64, t: f64, ls: &[f64]) -> Result<RatioReport> {
    if !(a > 0.0 && b > 0.0 && t.is_finite() && a < t && b < t) || ls.iter().any(|l| !l.is_finite()) {
        return invalid(format!("need 0 < a, b < T and finite L, got a={a}, b={b}, T={t}"));
    }
    let mut cuts = vec![a, b];
    geometric_toward(0.0, a.min(b), 40, &mut cuts);
    geometric_range(a.min(b), t, &mut cuts);
    for &l in ls {
        // log′(T/|L + x|) has an integrable singularity at x = −L.
        let x0 = -l;
        if x0 > 0.0 && x0 < t {
            cuts.push(x0);
            geometric_toward(x0, 0.0_f64.max(x0 - t), 20, &mut cuts);
            geometric_toward(x0, t.min(2.0 * x0), 20, &mut cuts);
        }
    }
    let neg: Vec<f64> = ls.iter().map(|l| -l).collect();
    let r = adaptive_pieces(0.0, t, &cuts, &lemma_quad(), |x| {
        let w = ((x + b) / (x * (x + a))).sqrt();
        w * log_product(t, &neg, x)
    });
    let rhs = t.sqrt() * log_p(b / a).powi(ls.len() as i32 + 1);
    Ok(RatioReport::new(r.value, r.error, rhs, r.converged))
}

/// Parameters of the two-variable segment inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Only used by the four-log bound.
    #[serde(default)]
    pub e: f64,
    pub t_scale: f64,
    pub t: f64,
    #[serde(default)]
    pub ls: Vec<f64>,
}

/// `|x|` floored at the smallest positive normal, for log′ of a ratio whose
/// denominator vanishes at a window edge.
fn floored(x: f64) -> f64 {
    x.abs().max(f64::MIN_POSITIVE)
}

/// The segment `x + y = t`, `x ∈ [A, B]`, `y ∈ [C, D]`, as an `x`-range.
fn segment(p: &SegmentParams) -> (f64, f64) {
    ((p.a).max(p.t - p.d), (p.b).min(p.t - p.c))
}

/// Distances of the segment ends to the four singular lines: at the lower
/// end `x − A` and `D − y`, at the upper end `B − x` and `y − C`. The active
/// constraint at each end contributes an exact zero.
#[derive(Debug, Clone, Copy)]
struct EndGaps {
    a: f64,
    d: f64,
    b: f64,
    c: f64,
}

impl EndGaps {
    fn new(p: &SegmentParams) -> Self {
        let (a, d) = if p.a >= p.t - p.d { (0.0, (p.a + p.d - p.t).max(0.0)) } else { ((p.t - p.d - p.a).max(0.0), 0.0) };
        let (b, c) = if p.b <= p.t - p.c { (0.0, (p.t - p.c - p.b).max(0.0)) } else { ((p.b + p.c - p.t).max(0.0), 0.0) };
        EndGaps { a, d, b, c }
    }

    /// `(|x−A||x−B||y−C||y−D|)^{−1/2}` from the offsets of `x` to the ends.
    fn four_root(&self, dlo: f64, dhi: f64) -> f64 {
        let low = (self.a + dlo) * (self.d + dlo);
        let high = (self.b + dhi) * (self.c + dhi);
        1.0 / (low.sqrt() * high.sqrt())
    }
}

fn validate_segment(p: &SegmentParams, with_e: bool) -> Result<()> {
    let mut order = vec![p.a, p.b, p.c, p.d];
    if with_e {
        order.push(p.e);
    }
    let finite = order.iter().chain([&p.t_scale, &p.t]).all(|x| x.is_finite()) && p.ls.iter().all(|x| x.is_finite());
    if !finite || order.windows(2).any(|w| w[1] < w[0]) {
        return invalid("need finite A <= B <= C <= D (<= E)");
    }
    if !(p.a < p.b && p.c < p.d) {
        return invalid("need A < B and C < D");
    }
    let span = order[order.len() - 1] - p.a;
    if !(p.t_scale >= span && p.t_scale > 0.0) {
        return invalid(format!("need T >= {span} (the spread of the points), got {}", p.t_scale));
    }
    Ok(())
}

fn segment_cuts(p: &SegmentParams, lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut cuts = extra.to_vec();
    // Geometric refinement toward both ends handles near-singular factors
    // whose singular point sits just outside the segment.
    let mid = 0.5 * (lo + hi);
    geometric_toward(lo, mid, 30, &mut cuts);
    geometric_toward(hi, mid, 30, &mut cuts);
    for &l in &p.ls {
        let x0 = p.t - l;
        if x0 > lo && x0 < hi {
            geometric_toward(x0, lo, 20, &mut cuts);
            geometric_toward(x0, hi, 20, &mut cuts);
            cuts.push(x0);
        }
    }
    cuts
}

/// The four-log segment inequality. Over `x + y = t` with `x ∈ [A, B]`,
/// `y ∈ [C, D]`, integrates
/// `(|x−A||x−B||y−C||y−D|)^{−1/2} |x−y|^{1/2} |y−E|^{1/2} ∏ log′(T/|Lᵢ−y|)`
/// against
/// `T |A−B|^{−1/2}|C−D|^{−1/2} [ (log′(|B−C|/|B+C−t|))^{k+1} + (log′(|D−E|/|A+D−t|))^{k+1}
///  + (log′(T/|A+C−t|))^k + (log′(T/|B+D−t|))^k ]`.
pub fn lemma_2d_check(p: &SegmentParams) -> Result<RatioReport> {
    validate_segment(p, true)?;
    let k = p.ls.len() as i32;
    let t = p.t;
    let rhs = p.t_scale / ((p.b - p.a).sqrt() * (p.d - p.c).sqrt())
        * (log_p((p.c - p.b) / floored(p.b + p.c - t)).powi(k + 1)
            + log_p((p.e - p.d) / floored(p.a + p.d - t)).powi(k + 1)
            + log_p(p.t_scale / floored(p.a + p.c - t)).powi(k)
            + log_p(p.t_scale / floored(p.b + p.d - t)).powi(k));
    let (lo, hi) = segment(p);
    if !(hi > lo) {
        return Ok(RatioReport::vacuous(rhs));
    }
    let cuts = segment_cuts(p, lo, hi, &[0.5 * t, t - p.e]);
    let gaps = EndGaps::new(p);
    let r = adaptive_pieces_offsets(lo, hi, &cuts, &lemma_quad(), |x, dlo, dhi| {
        let y = t - x;
        gaps.four_root(dlo, dhi) * (x - y).abs().sqrt() * (y - p.e).abs().sqrt() * log_product(p.t_scale, &p.ls, y)
    });
    Ok(RatioReport::new(r.value, r.error, rhs, r.converged))
}

/// The two-log segment inequality: over the same segment integrates
/// `(|x−A||x−B||y−C||y−D|)^{−1/2}` against
/// `|A−B|^{−1/2}|C−D|^{−1/2} (log′(T/|B+C−t|) + log′(T/|A+D−t|))`.
/// The segment is nonempty only for `A + C ≤ t ≤ B + D`; elsewhere the
/// report is vacuous.
pub fn lemma_2dsmall_check(p: &SegmentParams) -> Result<RatioReport> {
    validate_segment(p, false)?;
    let t = p.t;
    let rhs = 1.0 / ((p.b - p.a).sqrt() * (p.d - p.c).sqrt())
        * (log_p(p.t_scale / floored(p.b + p.c - t)) + log_p(p.t_scale / floored(p.a + p.d - t)));
    let (lo, hi) = segment(p);
    if !(hi > lo) {
        return Ok(RatioReport::vacuous(rhs));
    }
    let cuts = segment_cuts(p, lo, hi, &[]);
    let gaps = EndGaps::new(p);
    let r = adaptive_pieces_offsets(lo, hi, &cuts, &lemma_quad(), |_, dlo, dhi| gaps.four_root(dlo, dhi));
    Ok(RatioReport::new(r.value, r.error, rhs, r.converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn step(b: &[f64], v: &[f64]) -> StepFunction {
        StepFunction::new(b.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn rejects_malformed() {
        assert!(StepFunction::new(vec![0.0, 1.0], vec![]).is_err());
        assert!(StepFunction::new(vec![1.0, 0.0], vec![1.0]).is_err());
        assert!(StepFunction::new(vec![0.0, 1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn rearranges_indicator_to_origin() {
        let f = monotone_rearrange(&StepFunction::indicator(3.0, 7.5).unwrap());
        assert_eq!(f, step(&[0.0, 4.5], &[1.0]));
    }

    #[test]
    fn nonincreasing_is_fixed() {
        let f = step(&[0.0, 1.0, 2.5, 4.0], &[3.0, 2.0, 0.5]);
        assert_eq!(monotone_rearrange(&f), f);
    }

    #[test]
    fn two_step_example() {
        let f = step(&[0.0, 1.0, 3.0, 5.0], &[2.0, 0.0, 1.0]);
        let fs = monotone_rearrange(&f);
        assert_eq!(fs, step(&[0.0, 1.0, 3.0], &[2.0, 1.0]));
        assert_eq!(fs.level_measure(1.5), 1.0);
        assert_eq!(fs.level_measure(0.5), 3.0);
        assert_eq!(equimeasurability_defect(&f, &fs), 0.0);
    }

    #[test]
    fn hl_trivial_cases() {
        let r = hl_inequality_check(&[StepFunction::indicator(0.0, 1.0).unwrap(), StepFunction::indicator(2.0, 3.0).unwrap()]).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 1.0);
        assert!(r.holds);
        let f = step(&[0.0, 1.0, 2.0], &[2.0, 1.0]);
        let r = hl_inequality_check(&[f.clone(), f]).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert!(hl_inequality_check(&[StepFunction::zero()]).is_err());
    }

    #[test]
    fn convolution_at_breakpoints() {
        let f = StepFunction::indicator(0.0, 1.0).unwrap();
        assert_eq!(convolve_at(&f, &f, 1.0), 1.0);
        assert_eq!(convolve_at(&f, &f, 0.5), 0.5);
        assert_eq!(convolution_sup(&f, &f), 1.0);
        assert_eq!(rearranged_pairing(&f, &f), 1.0);
    }

    #[test]
    fn single_indicator_is_flat() {
        let r = conv_indicator_max_at_zero(&[0.7], 50).unwrap();
        assert_eq!(r.value_at_zero, 1.0);
        assert!(r.holds);
    }

    #[test]
    fn tent_from_two_indicators() {
        let f = PiecewisePoly::iterated_indicators(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(f.eval(0.0), 2.0, epsilon = 1e-14);
        assert_relative_eq!(f.eval(1.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(f.eval(-1.5), 0.5, epsilon = 1e-14);
        assert_eq!(f.eval(2.5), 0.0);
        assert!(conv_indicator_max_at_zero(&[1.0, 1.0], 64).unwrap().holds);
    }

    #[test]
    fn iterated_convolution_has_total_mass() {
        // ∫ f = ∏ 2aᵢ, degree m − 1.
        let a = [0.3, 1.1, 0.5, 0.9];
        let f = PiecewisePoly::iterated_indicators(&a).unwrap();
        assert_eq!(f.degree(), 3);
        let (_, total) = f.antiderivative();
        assert_relative_eq!(total, a.iter().map(|x| 2.0 * x).product::<f64>(), max_relative = 1e-13);
        assert!(conv_indicator_max_at_zero(&a, 200).unwrap().holds);
    }

    #[test]
    fn log_average_k0_is_two() {
        let r = log_average_check(0.0, 9.0, 5.0, 0).unwrap();
        assert_relative_eq!(r.lhs, 6.0, max_relative = 1e-9);
        assert_relative_eq!(r.ratio, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn inverse_log_average_k1_closed_form() {
        // ∫_a^b ln(2 + T/x)/x dx: compare with a fine composite rule in ln x.
        let (a, b, t) = (0.5, 400.0, 30.0);
        let r = log_average_inverse_check(a, b, t, 1).unwrap();
        let m = 200_000;
        let (la, lb) = (a.ln(), b.ln());
        let h = (lb - la) / m as f64;
        let mut s = 0.0;
        for i in 0..m {
            let u = la + (i as f64 + 0.5) * h;
            s += (2.0 + t / u.exp()).ln();
        }
        assert_relative_eq!(r.lhs, s * h, max_relative = 1e-8);
        assert!(log_average_inverse_check(0.0, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn one_d_small_equal_endpoints() {
        let r = lemma_1dsmall_check(2.0, 2.0).unwrap();
        assert_relative_eq!(r.exact, 2.0 * (1.0 + 2f64.sqrt()).ln(), max_relative = 1e-14);
        assert_relative_eq!(r.quadrature, r.exact, max_relative = 1e-8);
        assert_relative_eq!(r.ratio, 1.60452, max_relative = 1e-5);
    }

    #[test]
    fn one_d_small_quadrature_tracks_closed_form() {
        for ratio in [1e2, 1e4, 1e8, 1e12] {
            let r = lemma_1dsmall_check(1.0, ratio).unwrap();
            assert_relative_eq!(r.quadrature, r.exact, max_relative = 1e-7);
        }
    }

    #[test]
    fn one_d_equal_parameters_bounded_by_sqrt_integral() {
        let r = lemma_1d_check(0.3, 0.3, 50.0, &[]).unwrap();
        assert!(r.lhs <= 2.0 * 50f64.sqrt() * (1.0 + 1e-9));
        assert!(r.ratio <= 2.0 / 2f64.ln());
    }

    #[test]
    fn segment_examples() {
        let p = SegmentParams { a: -2.0, b: -1.0, c: 1.0, d: 2.0, e: 0.0, t_scale: 10.0, t: 0.3, ls: vec![] };
        let r = lemma_2dsmall_check(&p).unwrap();
        assert!(r.converged && r.ratio.is_finite() && r.ratio > 0.0);
        let outside = SegmentParams { t: 1.5, ..p.clone() };
        assert!(lemma_2dsmall_check(&outside).unwrap().vacuous);
        let bad = SegmentParams { t_scale: 1.0, ..p };
        assert!(lemma_2dsmall_check(&bad).is_err());
    }

    #[test]
    fn two_d_small_segment_matches_arcsine() {
        // With C, D far from the segment, (|y−C||y−D|)^{−1/2} is nearly
        // constant and the rest is the arcsine density.
        let p = SegmentParams { a: 0.0, b: 1.0, c: 1e6, d: 3e6, e: 0.0, t_scale: 4e6, t: 2e6 + 0.5, ls: vec![] };
        let r = lemma_2dsmall_check(&p).unwrap();
        let approx = std::f64::consts::PI / (1e6f64).sqrt() / (1e6f64).sqrt();
        assert_relative_eq!(r.lhs, approx, max_relative = 1e-6);
    }
}
