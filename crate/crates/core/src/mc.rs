//! Monte Carlo estimation of `I_n(λ; r) = Prob_k[‖π(k λ kᵀ)‖ < r]` and the
//! paired-sample checks of its structural properties.
//!
//! Every sample is addressed by its index in the Haar stream, and hits are
//! accumulated as integers, so estimates do not depend on the number of
//! worker threads.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::haar::{fill_haar, stream_for, HaarScratch, SamplerConfig};
use crate::linalg::{conjugate, diag_norm, expm_skew, Matrix, Rotation, SymMatrix};
use crate::spectrum::{trace_reduce, Spectrum};

/// Default ceiling for adaptive sample counts.
pub const DEFAULT_SAMPLE_CAP: u64 = 100_000_000;

/// z-value of the two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// How a spectrum was prepared before sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    None,
    TraceReduced,
    /// `|Tr λ| ≥ √n · r`: the probability is exactly zero.
    TraceCutoff,
}

impl Reduction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Reduction::None => "none",
            Reduction::TraceReduced => "trace-reduced",
            Reduction::TraceCutoff => "trace-cutoff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub lambda: Vec<f64>,
    pub radius: f64,
    #[serde(rename = "N")]
    pub total: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub reduction: Reduction,
}

impl MCEstimate {
    fn from_counts(s: &Spectrum, radius: f64, hits: u64, total: u64, seed: u64, reduction: Reduction) -> Self {
        let (ci_low, ci_high) = wilson(hits, total, Z95);
        MCEstimate {
            lambda: s.values().to_vec(),
            radius,
            total,
            hits,
            p_hat: hits as f64 / total as f64,
            ci_low,
            ci_high,
            seed,
            reduction,
        }
    }

    /// Binomial standard error of `p_hat`.
    pub fn std_error(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.total as f64).sqrt()
    }

    /// Wilson interval at another confidence level.
    pub fn interval(&self, confidence: f64) -> (f64, f64) {
        if self.reduction == Reduction::TraceCutoff {
            return (0.0, 0.0);
        }
        wilson(self.hits, self.total, z_value(confidence))
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    /// Full interval width over `p_hat`; infinite when there are no hits.
    pub fn relative_width(&self) -> f64 {
        if self.hits == 0 {
            f64::INFINITY
        } else {
            (self.ci_high - self.ci_low) / self.p_hat
        }
    }
}

/// Two-sided standard normal quantile for `confidence` in (0, 1).
pub fn z_value(confidence: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(0.5 + 0.5 * confidence)
}

/// Wilson score interval for `hits` successes out of `total`.
pub fn wilson(hits: u64, total: u64, z: f64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let nf = total as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if hits == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if hits == total { 1.0 } else { (center + half).clamp(p, 1.0) };
    (lo, hi)
}

/// Runs `per_sample` over sample indices `start..start + count` in chunks of
/// `cfg.batch`, each chunk folded into a fresh copy of `init`. Chunks are
/// returned in index order, so any later reduction is independent of the
/// thread count and scheduling.
pub(crate) fn sample_chunks<T, F>(cfg: &SamplerConfig, start: u64, count: u64, init: &T, per_sample: F) -> Vec<T>
where
    T: Clone + Send + Sync,
    F: Fn(&mut T, &[f64], u64) + Sync,
{
    let n = cfg.n;
    let batch = cfg.batch.max(1) as u64;
    let chunks = count.div_ceil(batch);
    let base = cfg.base_rng();
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = start + c * batch;
            let hi = (lo + batch).min(start + count);
            let mut scratch = HaarScratch::new(n);
            let mut acc = init.clone();
            for idx in lo..hi {
                let mut rng = stream_for(&base, idx);
                fill_haar(n, &mut rng, &mut scratch);
                per_sample(&mut acc, &scratch.q, idx);
            }
            acc
        })
        .collect()
}

/// [`sample_chunks`] folded left to right with `merge`.
pub(crate) fn sample_fold<T, F, M>(cfg: &SamplerConfig, start: u64, count: u64, init: T, per_sample: F, merge: M) -> T
where
    T: Clone + Send + Sync,
    F: Fn(&mut T, &[f64], u64) + Sync,
    M: Fn(T, T) -> T,
{
    sample_chunks(cfg, start, count, &init, per_sample).into_iter().fold(init, merge)
}

/// `‖π(k diag(λ) kᵀ)‖²` for row-major `k`: `(k.λ)_ii = Σ_j k_ij² λ_j`.
#[inline]
pub(crate) fn diag_norm_sq(k: &[f64], lam: &[f64]) -> f64 {
    let n = lam.len();
    let mut acc = 0.0;
    for i in 0..n {
        let row = &k[i * n..(i + 1) * n];
        let mut x = 0.0;
        for j in 0..n {
            x += row[j] * row[j] * lam[j];
        }
        acc += x * x;
    }
    acc
}

/// Hit counts on a common stream for several `(λ, r²)` targets; `λ` is taken
/// as given (unsorted values are the diagonal in that order).
pub(crate) fn count_hits_common(targets: &[(Vec<f64>, f64)], cfg: &SamplerConfig, start: u64, count: u64) -> Vec<u64> {
    sample_fold(
        cfg,
        start,
        count,
        vec![0u64; targets.len()],
        |acc, k, _| {
            for (slot, (lam, r2)) in acc.iter_mut().zip(targets) {
                if diag_norm_sq(k, lam) < *r2 {
                    *slot += 1;
                }
            }
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        },
    )
}

fn check_sampler(s: &Spectrum, cfg: &SamplerConfig) -> Result<()> {
    if cfg.n != s.dim() {
        return Err(Error::DimensionMismatch { expected: cfg.n, found: s.dim() });
    }
    Ok(())
}

/// Spectrum actually sampled for `(λ, r)`: `λ/r` reduced to trace zero.
/// `None` means the probability is exactly zero.
fn prepare(s: &Spectrum, radius: f64) -> Result<(Option<Spectrum>, Reduction)> {
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid(format!("radius must be positive and finite, got {radius}"));
    }
    let scaled = s.scaled(1.0 / radius)?;
    if scaled.is_tracefree() {
        return Ok((Some(scaled), Reduction::None));
    }
    match trace_reduce(&scaled) {
        Some(r) => Ok((Some(r), Reduction::TraceReduced)),
        None => Ok((None, Reduction::TraceCutoff)),
    }
}

/// Monte Carlo estimate of `I_n(λ; r)` from sample indices `0..samples`.
pub fn estimate_i(s: &Spectrum, radius: f64, samples: u64, cfg: &SamplerConfig) -> Result<MCEstimate> {
    check_sampler(s, cfg)?;
    if samples == 0 {
        return invalid("need at least one sample");
    }
    let (prepared, reduction) = prepare(s, radius)?;
    let Some(p) = prepared else {
        return Ok(MCEstimate {
            lambda: s.values().to_vec(),
            radius,
            total: samples,
            hits: 0,
            p_hat: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            seed: cfg.seed,
            reduction,
        });
    };
    let hits = count_hits_common(&[(p.values().to_vec(), 1.0)], cfg, 0, samples)[0];
    Ok(MCEstimate::from_counts(s, radius, hits, samples, cfg.seed, reduction))
}

/// Doubles the sample count (reusing already counted indices) until the
/// relative 95% interval width is at most `target_rel_width` or `cap` samples
/// have been drawn.
pub fn estimate_i_adaptive(
    s: &Spectrum,
    radius: f64,
    initial: u64,
    target_rel_width: f64,
    cap: u64,
    cfg: &SamplerConfig,
) -> Result<MCEstimate> {
    check_sampler(s, cfg)?;
    if !(target_rel_width > 0.0) {
        return invalid("target relative interval width must be positive");
    }
    let initial = initial.max(1).min(cap.max(1));
    let (prepared, reduction) = prepare(s, radius)?;
    let Some(p) = prepared else {
        return estimate_i(s, radius, initial, cfg);
    };
    let target = [(p.values().to_vec(), 1.0)];
    let mut total = initial;
    let mut hits = count_hits_common(&target, cfg, 0, total)[0];
    loop {
        let est = MCEstimate::from_counts(s, radius, hits, total, cfg.seed, reduction);
        if est.relative_width() <= target_rel_width || total >= cap {
            return Ok(est);
        }
        let extra = total.min(cap - total);
        hits += count_hits_common(&target, cfg, total, extra)[0];
        total += extra;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub t: f64,
    pub total: u64,
    pub hits_base: u64,
    pub hits_scaled: u64,
}

impl ScalingReport {
    /// Pointwise domination forces `hits(tλ) ≤ hits(λ)` for `t ≥ 1`.
    pub fn dominated(&self) -> bool {
        self.hits_scaled <= self.hits_base
    }
}

/// Counts hits for `λ` and `tλ` on one common stream.
pub fn scaling_monotonicity_check(s: &Spectrum, t: f64, samples: u64, cfg: &SamplerConfig) -> Result<ScalingReport> {
    check_sampler(s, cfg)?;
    if !(t >= 1.0 && t.is_finite()) {
        return invalid(format!("scaling factor must be >= 1, got {t}"));
    }
    let base = s.values().to_vec();
    let scaled: Vec<f64> = base.iter().map(|x| t * x).collect();
    let h = count_hits_common(&[(base, 1.0), (scaled, 1.0)], cfg, 0, samples);
    Ok(ScalingReport { t, total: samples, hits_base: h[0], hits_scaled: h[1] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub radius: f64,
    pub total: u64,
    /// Hits of `‖π(k.λ)‖ < r`.
    pub hits_radius: u64,
    /// Hits of `‖π(k.(λ/r))‖ < 1`.
    pub hits_unit: u64,
}

impl RadiusReport {
    pub fn identical(&self) -> bool {
        self.hits_radius == self.hits_unit
    }
}

/// Compares the radius-`r` indicator of `λ` with the unit indicator of `λ/r`
/// sample by sample.
pub fn radius_rescale_check(s: &Spectrum, radius: f64, samples: u64, cfg: &SamplerConfig) -> Result<RadiusReport> {
    check_sampler(s, cfg)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid(format!("radius must be positive, got {radius}"));
    }
    let raw = s.values().to_vec();
    let unit: Vec<f64> = raw.iter().map(|x| x / radius).collect();
    let h = count_hits_common(&[(raw, radius * radius), (unit, 1.0)], cfg, 0, samples);
    Ok(RadiusReport { radius, total: samples, hits_radius: h[0], hits_unit: h[1] })
}

/// Two estimates of the same quantity on independent streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub first: MCEstimate,
    pub second: MCEstimate,
    /// `|p₁ − p₂| / √(se₁² + se₂²)`; zero when both estimates are identical.
    pub z_score: f64,
}

impl AgreementReport {
    fn new(first: MCEstimate, second: MCEstimate) -> Self {
        let diff = (first.p_hat - second.p_hat).abs();
        let se = (first.std_error().powi(2) + second.std_error().powi(2)).sqrt();
        let z_score = if diff == 0.0 {
            0.0
        } else if se == 0.0 {
            f64::INFINITY
        } else {
            diff / se
        };
        AgreementReport { first, second, z_score }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z_score <= sigmas
    }
}

/// Lexicographic rank of a permutation of `0..n` (identity has rank 0).
pub fn permutation_rank(perm: &[usize]) -> Result<u64> {
    let n = perm.len();
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return invalid(format!("{perm:?} is not a permutation of 0..{n}"));
        }
        seen[p] = true;
    }
    let mut rank = 0u64;
    for i in 0..n {
        let smaller = perm[i + 1..].iter().filter(|&&q| q < perm[i]).count() as u64;
        rank = rank * (n - i) as u64 + smaller;
    }
    Ok(rank)
}

/// Estimates `I_n` for `λ` and for the diagonal `(λ_{perm(0)}, …)`; the
/// permuted estimate uses the substream keyed by the permutation's rank, so
/// the identity permutation reproduces the first estimate exactly.
pub fn weyl_invariance_check(s: &Spectrum, perm: &[usize], samples: u64, cfg: &SamplerConfig) -> Result<AgreementReport> {
    check_sampler(s, cfg)?;
    if perm.len() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), found: perm.len() });
    }
    let rank = permutation_rank(perm)?;
    let first = estimate_i(s, 1.0, samples, cfg)?;
    let permuted: Vec<f64> = perm.iter().map(|&p| s.values()[p]).collect();
    let sub = cfg.substream(rank);
    let hits = count_hits_common(&[(permuted, 1.0)], &sub, 0, samples)[0];
    let second = MCEstimate::from_counts(s, 1.0, hits, samples, sub.seed, Reduction::None);
    Ok(AgreementReport::new(first, second))
}

/// Samples the raw definition for a spectrum with nonzero trace and compares
/// it with the reduced estimate on an independent stream.
pub fn trace_reduction_check(s: &Spectrum, samples: u64, cfg: &SamplerConfig) -> Result<AgreementReport> {
    check_sampler(s, cfg)?;
    let hits = count_hits_common(&[(s.values().to_vec(), 1.0)], cfg, 0, samples)[0];
    let raw = MCEstimate::from_counts(s, 1.0, hits, samples, cfg.seed, Reduction::None);
    let reduced = estimate_i(s, 1.0, samples, &cfg.substream(1))?;
    Ok(AgreementReport::new(raw, reduced))
}

/// A rotation `k₀` with `π(k₀ λ k₀ᵀ) = 0`, built by repeatedly rotating in
/// a coordinate plane `(i, j)` whose diagonal entries have opposite signs until
/// entry `i` vanishes. Each step zeroes one more diagonal entry, so at most
/// `n − 1` steps are taken.
pub fn soft_lower_bound_witness(s: &Spectrum) -> Result<Rotation> {
    if !s.is_tracefree() {
        return invalid(format!("witness needs a tracefree spectrum, trace is {}", s.trace()));
    }
    let n = s.dim();
    let scale = s.norm();
    let mut k = Rotation::identity(n);
    if scale == 0.0 {
        return Ok(k);
    }
    let tol = 1e-13 * scale;
    let mut x = SymMatrix::from_diag(s.values())?;
    for _ in 0..2 * n {
        let d: Vec<f64> = (0..n).map(|i| x.get(i, i)).collect();
        let Some(i) = (0..n).filter(|&i| d[i].abs() > tol).max_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs())) else {
            break;
        };
        let Some(j) = (0..n)
            .filter(|&j| j != i && d[j] * d[i] < 0.0)
            .max_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()))
        else {
            break;
        };
        // (G X Gᵀ)_ii = ½(x_ii + x_jj) + ½(x_ii − x_jj) cos 2θ + x_ij sin 2θ.
        let (xi, xj, xij) = (d[i], d[j], x.get(i, j));
        let half_diff = 0.5 * (xi - xj);
        let amp = half_diff.hypot(xij);
        let phase = xij.atan2(half_diff);
        let theta = 0.5 * (phase + (-(xi + xj) / (2.0 * amp)).clamp(-1.0, 1.0).acos());
        let g = Rotation::givens(n, i, j, theta)?;
        x = conjugate(&g, &x)?;
        k = g.compose(&k)?;
    }
    let residual = diag_norm(&conjugate(&k, &SymMatrix::from_diag(s.values())?)?);
    if !(residual < 1e-9 * scale) {
        return Err(Error::NotConverged { sweeps: n, off: residual });
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftBallReport {
    pub c: f64,
    /// `c · min(1/100, 1/‖λ‖)`.
    pub ball_radius: f64,
    pub samples: u64,
    pub misses: u64,
    /// Largest `‖π(exp(X) k₀ . λ)‖` seen.
    pub max_diag_norm: f64,
}

impl SoftBallReport {
    pub fn all_hit(&self) -> bool {
        self.misses == 0
    }
}

/// Draws skew-symmetric `X` with `‖X‖_F` equal to the ball radius (the worst
/// case) or uniform below it, and tests whether `exp(X) k₀` lands in the hit set.
pub fn soft_ball_check(s: &Spectrum, k0: &Rotation, c: f64, samples: u64, cfg: &SamplerConfig) -> Result<SoftBallReport> {
    let n = s.dim();
    if k0.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: k0.dim() });
    }
    let norm = s.norm();
    let ball_radius = c * if norm > 0.0 { (1.0 / 100.0f64).min(1.0 / norm) } else { 1.0 / 100.0 };
    let base_orbit = conjugate(k0, &SymMatrix::from_diag(s.values())?)?;
    let base = cfg.base_rng();
    let mut misses = 0;
    let mut max_diag_norm: f64 = 0.0;
    for idx in 0..samples {
        let mut rng = stream_for(&base, idx);
        let mut x = Matrix::zeros(n);
        let mut fro2 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let v: f64 = rng.sample(StandardNormal);
                x.set(i, j, v);
                x.set(j, i, -v);
                fro2 += 2.0 * v * v;
            }
        }
        if fro2 == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let target = if idx % 2 == 0 { ball_radius } else { ball_radius * u };
        let f = target / fro2.sqrt();
        let x = Matrix::from_row_major(x.into_vec().into_iter().map(|v| v * f).collect())?;
        let e = Rotation::new_unchecked(expm_skew(&x), None);
        let dn = diag_norm(&conjugate(&e, &base_orbit)?);
        max_diag_norm = max_diag_norm.max(dn);
        if !(dn < 1.0) {
            misses += 1;
        }
    }
    Ok(SoftBallReport { c, ball_radius, samples, misses, max_diag_norm })
}
