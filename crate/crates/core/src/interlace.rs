//! Interlacing spectra: the bordered-matrix inverse eigenvalue construction,
//! the transfer Jacobian `J(μ)`, and the exact recursion for `I_n` obtained by
//! pushing Haar measure on `SO(n)` forward to the spectrum `μ` of the leading
//! `(n−1)×(n−1)` block.
//!
//! Integrals over the interlacing region
//! `𝓜 = {μ : λ_i < μ_i < λ_{i+1}}` are computed by nested one-dimensional
//! quadrature: the outermost variable is `t = Σμ_i`, then `μ_1, …, μ_{m−1}`
//! in turn, with `μ_m = t − Σ_{i<m} μ_i`. Every level is split at the values
//! where a vertex of the remaining region is crossed, and each piece is
//! integrated with the end-smoothing substitution, which absorbs the
//! `|λ_i − μ_j|^{-1/2}` singularities of `J`.

use std::cell::Cell;
use std::f64::consts::{FRAC_2_PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{sym_eigen, Matrix, SymMatrix, MAX_DIM};
use crate::quad::{adaptive_pieces_offsets, fixed_pieces_offsets, QuadConfig, QuadResult};
use crate::spectrum::{a_n_values, Spectrum};

/// A spectrum `λ` of length `n` and `μ` of length `n − 1` with
/// `λ_i < μ_i < λ_{i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterlacingPair {
    lambda: Spectrum,
    mu: Spectrum,
}

impl InterlacingPair {
    pub fn new(lambda: Spectrum, mu: Spectrum) -> Result<Self> {
        let n = lambda.dim();
        if n < 2 || mu.dim() + 1 != n {
            return Err(Error::DimensionMismatch { expected: n.saturating_sub(1), found: mu.dim() });
        }
        let (l, m) = (lambda.values(), mu.values());
        for i in 0..n - 1 {
            if !(l[i] < m[i] && m[i] < l[i + 1]) {
                return invalid(format!("not strictly interlacing at position {}: {} < {} < {}", i + 1, l[i], m[i], l[i + 1]));
            }
        }
        Ok(InterlacingPair { lambda, mu })
    }

    pub fn lambda(&self) -> &Spectrum {
        &self.lambda
    }

    pub fn mu(&self) -> &Spectrum {
        &self.mu
    }
}

/// Border of the arrowhead matrix with diagonal `(μ_1, …, μ_{n−1}, z_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorderData {
    pub z: Vec<f64>,
    pub z_n: f64,
}

/// `z_i² = ∏_j |λ_j − μ_i| / ∏_{j≠i} |μ_i − μ_j|` with `z_i > 0`, and
/// `z_n = Σλ − Σμ`.
pub fn fan_pall_border(p: &InterlacingPair) -> BorderData {
    let (l, m) = (p.lambda.values(), p.mu.values());
    let z = (0..m.len())
        .map(|i| {
            let num: f64 = l.iter().map(|lj| (lj - m[i]).abs().ln()).sum();
            let den: f64 = (0..m.len()).filter(|&j| j != i).map(|j| (m[i] - m[j]).abs().ln()).sum();
            (0.5 * (num - den)).exp()
        })
        .collect();
    let z_n = l.iter().sum::<f64>() - m.iter().sum::<f64>();
    BorderData { z, z_n }
}

/// The symmetric arrowhead matrix with leading block `diag(μ)`, last column
/// `(z, z_n)`.
pub fn build_bordered(mu: &Spectrum, b: &BorderData) -> Result<SymMatrix> {
    let m = mu.dim();
    if b.z.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: b.z.len() });
    }
    let n = m + 1;
    let mut a = Matrix::zeros(n);
    for i in 0..m {
        a.set(i, i, mu.values()[i]);
        a.set(i, m, b.z[i]);
        a.set(m, i, b.z[i]);
    }
    a.set(m, m, b.z_n);
    SymMatrix::new(a)
}

/// Eigenvalues of the leading `(n−1)×(n−1)` block, ascending.
pub fn principal_spectrum(x: &SymMatrix) -> Result<Vec<f64>> {
    Ok(sym_eigen(&x.leading_minor()?)?.values)
}

/// `ln J(μ) = Σ_{i<j} ln|μ_i − μ_j| − ½ Σ_{i,j} ln|λ_i − μ_j|`.
pub fn log_jacobian_j(p: &InterlacingPair) -> f64 {
    log_j(p.lambda.values(), p.mu.values())
}

/// `J(μ) = ∏_{i<j} |μ_i − μ_j| / ∏_{i,j} |λ_i − μ_j|^{1/2}`.
pub fn jacobian_j(p: &InterlacingPair) -> f64 {
    log_jacobian_j(p).exp()
}

fn log_j(l: &[f64], m: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            acc += (m[i] - m[j]).abs().ln();
        }
        for lj in l {
            acc -= 0.5 * (lj - m[i]).abs().ln();
        }
    }
    acc
}

/// A point of the interlacing region with the distances
/// `lower_j = μ_j − λ_j` and `upper_j = λ_{j+1} − μ_j` carried separately,
/// so that they stay accurate where `μ_j` sits next to a vertex.
#[derive(Clone, Copy)]
struct Point {
    mu: [f64; MAX_DIM],
    lower: [f64; MAX_DIM],
    upper: [f64; MAX_DIM],
}

impl Point {
    fn new() -> Self {
        Point { mu: [0.0; MAX_DIM], lower: [0.0; MAX_DIM], upper: [0.0; MAX_DIM] }
    }

    fn set(&mut self, j: usize, mu: f64, lower: f64, upper: f64) {
        self.mu[j] = mu;
        self.lower[j] = lower;
        self.upper[j] = upper;
    }
}

/// `J` at a region point. Direct products in the hot loop, falling back to
/// logs when they leave the comfortable floating-point range. Zero where `μ`
/// touches `λ`.
#[inline]
fn j_point(l: &[f64], p: &Point, m: usize) -> f64 {
    let mu = &p.mu[..m];
    let mut num = 1.0;
    let mut den = 1.0;
    for j in 0..m {
        for i in j + 1..m {
            num *= mu[i] - mu[j];
        }
        for (i, li) in l.iter().enumerate() {
            den *= if i == j {
                p.lower[j]
            } else if i == j + 1 {
                p.upper[j]
            } else {
                li - mu[j]
            };
        }
    }
    let den = den.abs();
    if !(den > 0.0) {
        return 0.0;
    }
    let v = num.abs() / den.sqrt();
    if v.is_finite() && den > 1e-280 && den < 1e280 && num.abs() > 1e-280 {
        return v;
    }
    let mut acc = 0.0;
    for j in 0..m {
        for i in j + 1..m {
            acc += (mu[i] - mu[j]).abs().ln();
        }
        for (i, li) in l.iter().enumerate() {
            let d = if i == j {
                p.lower[j]
            } else if i == j + 1 {
                p.upper[j]
            } else {
                li - mu[j]
            };
            acc -= 0.5 * d.abs().ln();
        }
    }
    acc.exp()
}

/// How each level of a nested integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LevelRule {
    Adaptive(QuadConfig),
    /// Composite Gauss–Legendre of this order on each piece.
    Fixed(usize),
}

/// Quadrature budget for integrals over an interlacing region: `outer` drives
/// the top-level `t = Σμ` integral, `inner` every level below it (including
/// the levels of nested recursive calls).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadBudget {
    pub outer: QuadConfig,
    pub inner: LevelRule,
}

impl Default for QuadBudget {
    fn default() -> Self {
        QuadBudget {
            outer: QuadConfig::default(),
            inner: LevelRule::Adaptive(QuadConfig { rel_tol: 1e-7, ..QuadConfig::default() }),
        }
    }
}

impl QuadBudget {
    /// Fully adaptive with the given top-level relative tolerance; inner
    /// levels run 10× tighter.
    pub fn adaptive(rel_tol: f64) -> Self {
        QuadBudget {
            outer: QuadConfig::default().with_rel_tol(rel_tol),
            inner: LevelRule::Adaptive(QuadConfig::default().with_rel_tol(rel_tol * 0.1)),
        }
    }

    /// Adaptive top level, fixed-order rules of `order` below it. This is the
    /// practical setting for the five nested levels of the `n = 4` recursion.
    pub fn fixed_inner(rel_tol: f64, order: usize) -> Self {
        QuadBudget { outer: QuadConfig::default().with_rel_tol(rel_tol), inner: LevelRule::Fixed(order) }
    }

    /// Default used by [`recursive_i`] for dimension `n`.
    pub fn for_recursion(n: usize) -> Self {
        if n >= 4 {
            QuadBudget::fixed_inner(1e-5, 8)
        } else {
            QuadBudget::default()
        }
    }

    fn below(&self) -> QuadBudget {
        match self.inner {
            LevelRule::Adaptive(c) => QuadBudget { outer: c, inner: self.inner },
            LevelRule::Fixed(_) => *self,
        }
    }
}

#[derive(Default)]
struct Tally {
    failed: Cell<bool>,
    evals: Cell<u64>,
}

trait RegionIntegrand {
    fn eval(&self, p: &Point, m: usize, tally: &Tally) -> f64;
    /// Extra cut points for the last free variable `μ_{m−1}` given the
    /// preceding coordinates and `t`.
    fn last_cuts(&self, _prefix: &[f64], _t: f64, _out: &mut Vec<f64>) {}
}

/// The region `λ_i < μ_i < λ_{i+1}` with `t = Σμ` restricted to a window.
struct Region<'a> {
    lam: &'a [f64],
    m: usize,
    /// `low[k] = Σ_{j ≥ k} λ_j`, `high[k] = Σ_{j ≥ k} λ_{j+1}` (0-based).
    low: [f64; MAX_DIM + 1],
    high: [f64; MAX_DIM + 1],
}

impl<'a> Region<'a> {
    fn new(lam: &'a [f64]) -> Self {
        let m = lam.len() - 1;
        let mut low = [0.0; MAX_DIM + 1];
        let mut high = [0.0; MAX_DIM + 1];
        for k in (0..m).rev() {
            low[k] = low[k + 1] + lam[k];
            high[k] = high[k + 1] + lam[k + 1];
        }
        Region { lam, m, low, high }
    }

    /// All sums `Σ_{j ≥ from} v_j` with `v_j ∈ {λ_j, λ_{j+1}}`.
    fn vertex_sums(&self, from: usize, out: &mut Vec<f64>) {
        let k = self.m - from;
        for mask in 0u32..(1 << k) {
            let mut s = 0.0;
            for b in 0..k {
                let j = from + b;
                s += if mask & (1 << b) != 0 { self.lam[j + 1] } else { self.lam[j] };
            }
            out.push(s);
        }
    }

    fn integrate<I: RegionIntegrand>(&self, window: (f64, f64), f: &I, budget: &QuadBudget, tally: &Tally) -> QuadResult {
        let (lam, m) = (self.lam, self.m);
        let lo = self.low[0].max(window.0);
        let hi = self.high[0].min(window.1);
        if !(hi > lo) {
            return QuadResult::zero();
        }
        let mut cuts = Vec::new();
        self.vertex_sums(0, &mut cuts);
        let inner = budget.below();
        let r = adaptive_pieces_offsets(lo, hi, &cuts, &budget.outer, |t, dlo, dhi| {
            if m == 1 {
                let mut p = Point::new();
                let lower = (lo - lam[0]) + dlo;
                let upper = (lam[1] - hi) + dhi;
                p.set(0, t, lower, upper);
                tally.evals.set(tally.evals.get() + 1);
                f.eval(&p, 1, tally)
            } else {
                self.level(1, t, 0.0, Point::new(), f, &inner, tally)
            }
        });
        if !r.converged {
            tally.failed.set(true);
        }
        r
    }

    /// Integrates over `μ_{k−1}` given `μ_0, …, μ_{k−2}` (summing to `sum`).
    #[allow(clippy::too_many_arguments)]
    fn level<I: RegionIntegrand>(
        &self,
        k: usize,
        t: f64,
        sum: f64,
        point: Point,
        f: &I,
        budget: &QuadBudget,
        tally: &Tally,
    ) -> f64 {
        let (lam, m) = (self.lam, self.m);
        let v = k - 1;
        let rest = t - sum;
        let lo_fill = rest - self.high[v + 1];
        let hi_fill = rest - self.low[v + 1];
        let lo = lam[v].max(lo_fill);
        let hi = lam[v + 1].min(hi_fill);
        if !(hi > lo) {
            return 0.0;
        }
        let mut cuts = Vec::new();
        self.vertex_sums(v + 1, &mut cuts);
        for c in cuts.iter_mut() {
            *c = rest - *c;
        }
        if k == m - 1 {
            f.last_cuts(&point.mu[..v], t, &mut cuts);
        }
        let g = |x: f64, dlo: f64, dhi: f64| {
            let mut p = point;
            // Distances measured from the nearer range end keep their relative
            // accuracy next to singular points just inside or outside the range.
            let lower = (lo - lam[v]) + dlo;
            let upper = (lam[v + 1] - hi) + dhi;
            p.set(v, x, lower, upper);
            if k + 1 < m {
                self.level(k + 1, t, sum + x, p, f, budget, tally)
            } else {
                // The last coordinate is pinned by the sum.
                let y = rest - x;
                let lower = (hi_fill - hi) + dhi;
                let upper = (lo - lo_fill) + dlo;
                p.set(m - 1, y, lower, upper);
                tally.evals.set(tally.evals.get() + 1);
                f.eval(&p, m, tally)
            }
        };
        match budget.inner {
            LevelRule::Adaptive(cfg) => {
                let r = adaptive_pieces_offsets(lo, hi, &cuts, &cfg, g);
                if !r.converged {
                    tally.failed.set(true);
                }
                r.value
            }
            LevelRule::Fixed(order) => fixed_pieces_offsets(lo, hi, &cuts, order, g),
        }
    }
}

fn check_regular(s: &Spectrum) -> Result<()> {
    if s.dim() > MAX_DIM {
        return invalid(format!("dimension {} exceeds {MAX_DIM}", s.dim()));
    }
    if !s.is_regular() {
        return invalid(format!("spectrum {s} is not strictly regular"));
    }
    Ok(())
}

struct JOnly<'a> {
    lam: &'a [f64],
}

impl RegionIntegrand for JOnly<'_> {
    fn eval(&self, p: &Point, m: usize, _: &Tally) -> f64 {
        j_point(self.lam, p, m)
    }
}

/// Fixed inner rules carry no error estimate of their own; the difference
/// against a rule two orders lower is added to the top-level estimate.
fn with_order_check(budget: &QuadBudget, mut run: impl FnMut(&QuadBudget) -> QuadResult) -> QuadResult {
    let mut r = run(budget);
    if let LevelRule::Fixed(q) = budget.inner {
        if q > 2 {
            let coarse = run(&QuadBudget { inner: LevelRule::Fixed(q - 2), ..*budget });
            r.error += (r.value - coarse.value).abs();
        }
    }
    r
}

/// `∫_𝓜 J(μ) dμ`. The transfer identity makes this independent of `λ`; it is
/// the reciprocal of the normalization constant `c_n`.
pub fn raw_transfer_integral(s: &Spectrum, budget: &QuadBudget) -> Result<QuadResult> {
    check_regular(s)?;
    if s.dim() < 2 {
        return invalid("need n >= 2");
    }
    let region = Region::new(s.values());
    let tally = Tally::default();
    let integrand = JOnly { lam: s.values() };
    let mut r = with_order_check(budget, |b| region.integrate((f64::NEG_INFINITY, f64::INFINITY), &integrand, b, &tally));
    r.converged &= !tally.failed.get();
    r.evaluations = tally.evals.get() as usize;
    Ok(r)
}

/// `c_n = 1 / ∫_𝓜 J dμ` computed at `λ`.
pub fn normalization_c(s: &Spectrum, budget: &QuadBudget) -> Result<f64> {
    let r = raw_transfer_integral(s, budget)?;
    if !r.converged {
        return Err(Error::QuadratureBudget { value: r.value, error: r.error });
    }
    Ok(1.0 / r.value)
}

/// Largest `n` for which [`recursive_i`] is available.
pub const MAX_RECURSION_DIM: usize = 4;

/// `c_n` for `2 ≤ n ≤ 4`, computed once at an evenly spaced reference
/// spectrum with tight tolerances and cached.
pub fn normalization_constant(n: usize) -> Result<f64> {
    static CACHE: [OnceLock<f64>; MAX_RECURSION_DIM + 1] = [const { OnceLock::new() }; MAX_RECURSION_DIM + 1];
    if !(2..=MAX_RECURSION_DIM).contains(&n) {
        return invalid(format!("normalization constant is cached for 2 <= n <= {MAX_RECURSION_DIM}, got {n}"));
    }
    if let Some(c) = CACHE[n].get() {
        return Ok(*c);
    }
    let reference = Spectrum::new((0..n).map(|i| i as f64 - (n as f64 - 1.0) / 2.0).collect())?;
    let c = normalization_c(&reference, &QuadBudget::adaptive(1e-9))?;
    Ok(*CACHE[n].get_or_init(|| c))
}

/// Exact `I_2(λ; r)`: the fraction of the circle with
/// `2a² cos²(2θ) + (Tr λ)²/2 < r²`, where `a = (λ_2 − λ_1)/2`.
pub fn i2_closed_form(lambda: &[f64], radius: f64) -> f64 {
    let (a, trace) = ((lambda[1] - lambda[0]).abs() / 2.0, lambda[0] + lambda[1]);
    let rho2 = radius * radius - trace * trace / 2.0;
    if !(rho2 > 0.0) {
        return 0.0;
    }
    let rho = rho2.sqrt();
    if a * SQRT_2 <= rho {
        return 1.0;
    }
    FRAC_2_PI * (rho / (a * SQRT_2)).asin()
}

/// Value of an estimate from the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursiveEstimate {
    pub value: f64,
    /// Error estimate of the top-level integral, scaled by `c_n`.
    pub error: f64,
    pub evaluations: u64,
    /// False if any level exhausted its budget.
    pub converged: bool,
}

struct Recursion<'a> {
    lam: &'a [f64],
    rho2: f64,
    budget: QuadBudget,
}

impl RegionIntegrand for Recursion<'_> {
    fn eval(&self, p: &Point, m: usize, tally: &Tally) -> f64 {
        let mu = &p.mu[..m];
        let t: f64 = mu.iter().sum();
        let inner_r2 = self.rho2 - t * t;
        if !(inner_r2 > 0.0) {
            return 0.0;
        }
        let j = j_point(self.lam, p, m);
        if j == 0.0 {
            return 0.0;
        }
        j * rec(mu, inner_r2, &self.budget, tally)
    }

    fn last_cuts(&self, prefix: &[f64], t: f64, out: &mut Vec<f64>) {
        // Where the tracefree part of μ crosses the sphere of the inner radius:
        // inside it the inner probability is identically one.
        let m = self.lam.len() - 1;
        let mf = m as f64;
        let r2 = self.rho2 - t * t - t * t / mf;
        if !(r2 > 0.0) {
            return;
        }
        let p: f64 = prefix.iter().map(|x| x * x).sum();
        let rest = t - prefix.iter().sum::<f64>();
        let c = rest * rest + p - t * t / mf - r2;
        let disc = rest * rest - 2.0 * c;
        if disc > 0.0 {
            let d = disc.sqrt();
            out.push(0.5 * (rest - d));
            out.push(0.5 * (rest + d));
        }
    }
}

/// `I_k(μ; √r2)` for ascending `μ`, any trace.
fn rec(mu: &[f64], r2: f64, budget: &QuadBudget, tally: &Tally) -> f64 {
    let k = mu.len();
    let kf = k as f64;
    let trace: f64 = mu.iter().sum();
    let rho2 = r2 - trace * trace / kf;
    if !(rho2 > 0.0) {
        return 0.0;
    }
    let shift = trace / kf;
    let mut centered = [0.0; MAX_DIM];
    let mut norm2 = 0.0;
    for i in 0..k {
        centered[i] = mu[i] - shift;
        norm2 += centered[i] * centered[i];
    }
    if norm2 < rho2 {
        return 1.0;
    }
    if k == 2 {
        return i2_closed_form(&centered[..2], rho2.sqrt());
    }
    let c = normalization_constant(k).expect("dimension checked by caller");
    let integrand = Recursion { lam: &centered[..k], rho2, budget: budget.below() };
    let region = Region::new(&centered[..k]);
    let w = (rho2 * (kf - 1.0) / kf).sqrt();
    let r = region.integrate((-w, w), &integrand, budget, tally);
    c * r.value
}

/// `I_n(λ; r)` from the transfer identity
/// `I_n(λ; r) = c_n ∫_𝓜 I_{n−1}(μ; √(r² − (Tr λ − Σμ)²)) J(μ) dμ`,
/// recursing down to the closed form at `n = 2`. Spectra with nonzero trace
/// are reduced first.
pub fn recursive_i(s: &Spectrum, radius: f64, budget: &QuadBudget) -> Result<RecursiveEstimate> {
    let n = s.dim();
    if !(2..=MAX_RECURSION_DIM).contains(&n) {
        return invalid(format!("recursion is available for 2 <= n <= {MAX_RECURSION_DIM}, got {n}"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid(format!("radius must be positive, got {radius}"));
    }
    let nf = n as f64;
    let trace = s.trace();
    let rho2 = radius * radius - trace * trace / nf;
    let exact = |value| RecursiveEstimate { value, error: 0.0, evaluations: 0, converged: true };
    if !(rho2 > 0.0) {
        return Ok(exact(0.0));
    }
    let centered: Vec<f64> = s.values().iter().map(|x| x - trace / nf).collect();
    if centered.iter().map(|x| x * x).sum::<f64>() < rho2 {
        return Ok(exact(1.0));
    }
    if n == 2 {
        return Ok(exact(i2_closed_form(&centered, rho2.sqrt())));
    }
    check_regular(s)?;
    let c = normalization_constant(n)?;
    let tally = Tally::default();
    let region = Region::new(&centered);
    let w = (rho2 * (nf - 1.0) / nf).sqrt();
    let run = |b: &QuadBudget| {
        let integrand = Recursion { lam: &centered, rho2, budget: b.below() };
        region.integrate((-w, w), &integrand, b, &tally)
    };
    let r = with_order_check(budget, run);
    Ok(RecursiveEstimate {
        value: c * r.value,
        error: c * r.error,
        evaluations: tally.evals.get(),
        converged: r.converged && !tally.failed.get(),
    })
}

struct AWeighted<'a> {
    lam: &'a [f64],
}

impl RegionIntegrand for AWeighted<'_> {
    fn eval(&self, p: &Point, m: usize, _: &Tally) -> f64 {
        let j = j_point(self.lam, p, m);
        if j == 0.0 {
            0.0
        } else {
            j * a_n_values(&p.mu[..m])
        }
    }
}

/// `J_n(λ) = ∫_{𝓜, |Σμ| < 1} A_{n−1}(μ) J(μ) dμ` for tracefree regular `λ`,
/// `3 ≤ n ≤ 5`.
pub fn j_n_integral(s: &Spectrum, budget: &QuadBudget) -> Result<QuadResult> {
    let n = s.dim();
    if !(3..=5).contains(&n) {
        return invalid(format!("J_n is available for 3 <= n <= 5, got {n}"));
    }
    if !s.is_tracefree() {
        return invalid("J_n needs a tracefree spectrum");
    }
    check_regular(s)?;
    let region = Region::new(s.values());
    let tally = Tally::default();
    let integrand = AWeighted { lam: s.values() };
    let mut r = with_order_check(budget, |b| region.integrate((-1.0, 1.0), &integrand, b, &tally));
    r.converged &= !tally.failed.get();
    r.evaluations = tally.evals.get() as usize;
    Ok(r)
}
