//! Spherical functions on `SL(n, ℝ)` by Monte Carlo over `K = SO(n)`, and
//! their periods over the diagonal flat against a smooth bump.
//!
//! `φ_λ(g) = ∫_K exp(⟨iλ + ρ, H(kg)⟩) dk`, with `H` the Iwasawa projection
//! for `G = N A K`, `N` upper triangular, so `ρᵢ = (n − 2i + 1)/2`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::haar::SamplerConfig;
use crate::linalg::{upper_cholesky_into, Matrix, MAX_DIM};
use crate::mc::sample_chunks;
use crate::quad::GaussLegendre;
use crate::spectrum::{a_n, Spectrum};

/// Largest dimension for [`phi`].
pub const MAX_PHI_DIM: usize = 5;
/// Largest dimension for [`flat_period`].
pub const MAX_PERIOD_DIM: usize = 3;
/// Gauss–Legendre order per axis of the period grid.
pub const PERIOD_GRID_ORDER: usize = 64;

/// Half the sum of the positive roots `eᵢ − eⱼ`, `i < j`.
pub fn rho(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return invalid(format!("rho needs n >= 2, got {n}"));
    }
    Ok((1..=n).map(|i| (n as f64 - 2.0 * i as f64 + 1.0) / 2.0).collect())
}

/// A real spectral parameter with coordinates summing to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpectralParam {
    lam: Vec<f64>,
}

impl SpectralParam {
    pub fn new(lam: Vec<f64>) -> Result<Self> {
        if lam.len() < 2 || lam.iter().any(|x| !x.is_finite()) {
            return invalid("spectral parameter needs at least two finite entries");
        }
        let sum: f64 = lam.iter().sum();
        let scale = lam.iter().map(|x| x.abs()).fold(1.0, f64::max);
        if sum.abs() > 1e-12 * scale {
            return invalid(format!("spectral parameter must sum to zero, sum is {sum}"));
        }
        Ok(SpectralParam { lam })
    }

    pub fn zero(n: usize) -> Self {
        SpectralParam { lam: vec![0.0; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.lam
    }

    pub fn dim(&self) -> usize {
        self.lam.len()
    }

    pub fn negated(&self) -> Self {
        SpectralParam { lam: self.lam.iter().map(|x| -x).collect() }
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.dim()];
        if perm.len() != self.dim() || perm.iter().any(|&p| p >= seen.len() || std::mem::replace(&mut seen[p], true)) {
            return invalid("not a permutation of the coordinates");
        }
        Ok(SpectralParam { lam: perm.iter().map(|&p| self.lam[p]).collect() })
    }

    /// `(1 + ‖λ‖)^{−n+1} L_n(λ)`.
    pub fn decay_bound(&self) -> f64 {
        a_n(&Spectrum::new(self.lam.clone()).expect("finite entries"))
    }
}

impl TryFrom<Vec<f64>> for SpectralParam {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpectralParam::new(v)
    }
}

impl From<SpectralParam> for Vec<f64> {
    fn from(p: SpectralParam) -> Vec<f64> {
        p.lam
    }
}

/// `b(H) = exp(1 − 1/(1 − ‖(H − c)/s‖²))` inside the ball, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpFunction {
    center: Vec<f64>,
    scale: f64,
}

impl BumpFunction {
    pub fn new(center: Vec<f64>, scale: f64) -> Result<Self> {
        SpectralParam::new(center.clone()).map_err(|_| Error::InvalidInput("bump center must be a traceless vector".into()))?;
        if !(scale > 0.0 && scale.is_finite()) {
            return invalid(format!("bump scale must be positive, got {scale}"));
        }
        Ok(BumpFunction { center, scale })
    }

    /// Centered at the origin with the given scale.
    pub fn centered(n: usize, scale: f64) -> Result<Self> {
        BumpFunction::new(vec![0.0; n], scale)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Value at `|u|² = q`, where `u = (H − c)/s`.
    fn profile(q: f64) -> f64 {
        if q < 1.0 {
            (1.0 - 1.0 / (1.0 - q)).exp()
        } else {
            0.0
        }
    }

    pub fn eval(&self, h: &[f64]) -> f64 {
        let q: f64 = h.iter().zip(&self.center).map(|(x, c)| ((x - c) / self.scale).powi(2)).sum();
        Self::profile(q)
    }
}

/// Complex Monte Carlo estimate with component standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub re: f64,
    pub im: f64,
    pub se_re: f64,
    pub se_im: f64,
    pub samples: u64,
}

impl ComplexEstimate {
    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Combined standard error `√(se_re² + se_im²)`.
    pub fn std_error(&self) -> f64 {
        self.se_re.hypot(self.se_im)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    re: f64,
    im: f64,
    re2: f64,
    im2: f64,
}

impl Moments {
    fn push(&mut self, re: f64, im: f64) {
        self.re += re;
        self.im += im;
        self.re2 += re * re;
        self.im2 += im * im;
    }

    fn merge(mut self, o: Moments) -> Moments {
        self.re += o.re;
        self.im += o.im;
        self.re2 += o.re2;
        self.im2 += o.im2;
        self
    }

    fn estimate(&self, m: u64) -> ComplexEstimate {
        let mf = m as f64;
        let (re, im) = (self.re / mf, self.im / mf);
        let var = |s2: f64, mean: f64| if m > 1 { ((s2 / mf - mean * mean) * mf / (mf - 1.0)).max(0.0) } else { 0.0 };
        ComplexEstimate {
            re,
            im,
            se_re: (var(self.re2, re) / mf).sqrt(),
            se_im: (var(self.im2, im) / mf).sqrt(),
            samples: m,
        }
    }
}

/// Row-major `k M kᵀ` for a symmetric `M` given by its entries.
fn gram_of(k: &[f64], m: &[f64], n: usize, out: &mut [f64]) {
    let mut km = [0.0f64; MAX_DIM * MAX_DIM];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += k[i * n + l] * m[l * n + j];
            }
            km[i * n + j] = s;
        }
    }
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for l in 0..n {
                s += km[i * n + l] * k[j * n + l];
            }
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
}

/// `(e^{⟨ρ,H⟩} cos⟨λ,H⟩, e^{⟨ρ,H⟩} sin⟨λ,H⟩)` for `H = H(x)` given the Gram
/// matrix `x xᵀ`.
#[inline]
fn integrand_from_gram(gram: &[f64], n: usize, lam: &[f64], rho: &[f64]) -> Result<(f64, f64)> {
    let mut u = [0.0f64; MAX_DIM * MAX_DIM];
    upper_cholesky_into(gram, n, &mut u[..n * n])?;
    let mut h = [0.0f64; MAX_DIM];
    let mut mean = 0.0;
    for i in 0..n {
        h[i] = u[i * n + i].ln();
        mean += h[i];
    }
    mean /= n as f64;
    let (mut th, mut rh) = (0.0, 0.0);
    for i in 0..n {
        let x = h[i] - mean;
        th += lam[i] * x;
        rh += rho[i] * x;
    }
    let w = rh.exp();
    Ok((w * th.cos(), w * th.sin()))
}

fn check_phi_dim(n: usize, max: usize) -> Result<()> {
    if !(2..=max).contains(&n) {
        return invalid(format!("need 2 <= n <= {max}, got {n}"));
    }
    Ok(())
}

/// Monte Carlo `φ_λ(g)` from Haar samples `0..samples` of `cfg`.
///
/// When `g gᵀ` is exactly the identity, `kg ∈ K` for every `k`, so every
/// sample contributes `e⁰ = 1` and the result is exactly `1`.
pub fn phi(lam: &SpectralParam, g: &Matrix, samples: u64, cfg: &SamplerConfig) -> Result<ComplexEstimate> {
    let n = lam.dim();
    check_phi_dim(n, MAX_PHI_DIM)?;
    if g.dim() != n || cfg.n != n {
        return Err(Error::DimensionMismatch { expected: n, found: if g.dim() != n { g.dim() } else { cfg.n } });
    }
    if samples == 0 {
        return invalid("need at least one sample");
    }
    let det = g.det();
    if !((det - 1.0).abs() < 1e-9) {
        return Err(Error::Singular(format!("phi needs det g = 1, got {det}")));
    }
    let ggt = g.matmul(&g.transpose())?;
    if ggt == Matrix::identity(n) {
        return Ok(ComplexEstimate { re: 1.0, im: 0.0, se_re: 0.0, se_im: 0.0, samples });
    }
    let r = rho(n)?;
    let lamv = lam.values();
    let m = ggt.as_slice();
    let chunks = sample_chunks(cfg, 0, samples, &(Moments::default(), None::<String>), |acc, k, _| {
        if acc.1.is_some() {
            return;
        }
        let mut gram = [0.0f64; MAX_DIM * MAX_DIM];
        gram_of(k, m, n, &mut gram[..n * n]);
        match integrand_from_gram(&gram[..n * n], n, lamv, &r) {
            Ok((re, im)) => acc.0.push(re, im),
            Err(e) => acc.1 = Some(e.to_string()),
        }
    });
    let mut total = Moments::default();
    for (mo, err) in chunks {
        if let Some(e) = err {
            return Err(Error::Singular(e));
        }
        total = total.merge(mo);
    }
    Ok(total.estimate(samples))
}

/// Sample-wise comparison of `φ_λ(g)` with `φ_0(g)` on a common stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub phi_lambda: ComplexEstimate,
    pub phi_zero: ComplexEstimate,
    /// Samples with `|Re z| > w` or `|Im z| > w`, where `w` is the `λ = 0`
    /// integrand.
    pub violations: u64,
}

/// Since `|e^{i⟨λ,H⟩}| = 1`, both components of every sample of `φ_λ` are
/// bounded by the matching sample of `φ_0`, with no rounding slack: the same
/// `w` is multiplied by a cosine and a sine of modulus at most one.
pub fn phi_domination_check(lam: &SpectralParam, g: &Matrix, samples: u64, cfg: &SamplerConfig) -> Result<DominationReport> {
    let n = lam.dim();
    check_phi_dim(n, MAX_PHI_DIM)?;
    if g.dim() != n || cfg.n != n {
        return Err(Error::DimensionMismatch { expected: n, found: g.dim() });
    }
    let r = rho(n)?;
    let zero = vec![0.0; n];
    let ggt = g.matmul(&g.transpose())?;
    let m = ggt.as_slice();
    let lamv = lam.values();
    let init = (Moments::default(), Moments::default(), 0u64, None::<String>);
    let chunks = sample_chunks(cfg, 0, samples, &init, |acc, k, _| {
        let mut gram = [0.0f64; MAX_DIM * MAX_DIM];
        gram_of(k, m, n, &mut gram[..n * n]);
        match (integrand_from_gram(&gram[..n * n], n, lamv, &r), integrand_from_gram(&gram[..n * n], n, &zero, &r)) {
            (Ok((re, im)), Ok((w, _))) => {
                acc.0.push(re, im);
                acc.1.push(w, 0.0);
                if re.abs() > w || im.abs() > w {
                    acc.2 += 1;
                }
            }
            (Err(e), _) | (_, Err(e)) => acc.3 = Some(e.to_string()),
        }
    });
    let (mut a, mut b, mut v) = (Moments::default(), Moments::default(), 0u64);
    for (x, y, c, err) in chunks {
        if let Some(e) = err {
            return Err(Error::Singular(e));
        }
        a = a.merge(x);
        b = b.merge(y);
        v += c;
    }
    Ok(DominationReport { phi_lambda: a.estimate(samples), phi_zero: b.estimate(samples), violations: v })
}

/// Orthonormal basis of the trace-zero hyperplane of `ℝⁿ` (Helmert).
fn traceless_basis(n: usize) -> Vec<Vec<f64>> {
    (1..n)
        .map(|j| {
            let c = 1.0 / ((j * (j + 1)) as f64).sqrt();
            (0..n)
                .map(|i| match i.cmp(&j) {
                    std::cmp::Ordering::Less => c,
                    std::cmp::Ordering::Equal => -(j as f64) * c,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect()
        })
        .collect()
}

/// A grid node inside the bump support: `exp(2H)` and the weight
/// `w · b(H) · scale^{n−1}`.
struct Node {
    e2h: [f64; MAX_DIM],
    weight: f64,
}

fn period_nodes(b: &BumpFunction) -> Vec<Node> {
    let n = b.dim();
    let d = n - 1;
    let rule = GaussLegendre::cached(PERIOD_GRID_ORDER);
    let basis = traceless_basis(n);
    let jac = b.scale().powi(d as i32);
    let mut nodes = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let mut q = 0.0;
        let mut w = jac;
        for &i in &idx {
            q += rule.nodes[i] * rule.nodes[i];
            w *= rule.weights[i];
        }
        let bv = BumpFunction::profile(q);
        if bv > 0.0 {
            let mut e2h = [0.0f64; MAX_DIM];
            for (l, slot) in e2h.iter_mut().enumerate().take(n) {
                let mut h = b.center()[l];
                for (a, &i) in idx.iter().enumerate() {
                    h += b.scale() * rule.nodes[i] * basis[a][l];
                }
                *slot = (2.0 * h).exp();
            }
            nodes.push(Node { e2h, weight: w * bv });
        }
        // Odometer over the tensor grid.
        let mut a = 0;
        loop {
            if a == d {
                return nodes;
            }
            idx[a] += 1;
            if idx[a] < rule.order() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// Period estimate with its decay bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub lambda: Vec<f64>,
    pub period: ComplexEstimate,
    pub grid_points: usize,
    /// `(1 + ‖λ‖)^{−n+1} L_n(λ)`.
    pub bound: f64,
}

impl PeriodEstimate {
    pub fn ratio(&self) -> f64 {
        self.period.abs() / self.bound
    }

    /// The modulus is at least three standard errors away from zero.
    pub fn resolved(&self) -> bool {
        self.period.abs() > 3.0 * self.period.std_error()
    }
}

/// `∫_𝔞 φ_λ(exp H) b(H) dH` on a Gauss–Legendre tensor grid of order 64 per
/// axis over the support of `b`, in orthonormal coordinates of the
/// trace-zero hyperplane. The same Haar samples serve every grid node: each
/// sample `k` yields the full quadrature sum `P_k`, and the estimate is the
/// mean of the `P_k`.
pub fn flat_period(lam: &SpectralParam, b: &BumpFunction, samples: u64, cfg: &SamplerConfig) -> Result<PeriodEstimate> {
    let n = lam.dim();
    check_phi_dim(n, MAX_PERIOD_DIM)?;
    if b.dim() != n || cfg.n != n {
        return Err(Error::DimensionMismatch { expected: n, found: if b.dim() != n { b.dim() } else { cfg.n } });
    }
    if samples == 0 {
        return invalid("need at least one sample");
    }
    let nodes = period_nodes(b);
    let r = rho(n)?;
    let lamv = lam.values();
    let chunks = sample_chunks(cfg, 0, samples, &(Moments::default(), None::<String>), |acc, k, _| {
        if acc.1.is_some() {
            return;
        }
        let (mut pre, mut pim) = (0.0, 0.0);
        let mut gram = [0.0f64; MAX_DIM * MAX_DIM];
        for node in &nodes {
            // k diag(e^{2H}) kᵀ
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += k[i * n + l] * k[j * n + l] * node.e2h[l];
                    }
                    gram[i * n + j] = s;
                    gram[j * n + i] = s;
                }
            }
            match integrand_from_gram(&gram[..n * n], n, lamv, &r) {
                Ok((re, im)) => {
                    pre += node.weight * re;
                    pim += node.weight * im;
                }
                Err(e) => {
                    acc.1 = Some(e.to_string());
                    return;
                }
            }
        }
        acc.0.push(pre, pim);
    });
    let mut total = Moments::default();
    for (mo, err) in chunks {
        if let Some(e) = err {
            return Err(Error::Singular(e));
        }
        total = total.merge(mo);
    }
    Ok(PeriodEstimate {
        lambda: lamv.to_vec(),
        period: total.estimate(samples),
        grid_points: nodes.len(),
        bound: lam.decay_bound(),
    })
}

/// `φ_λ(diag(e^t, e^{−t}))` on `SL(2, ℝ)` by adaptive quadrature over the
/// rotation angle. With `k` the rotation by `θ`, the Iwasawa projection of
/// `k·diag(e^t, e^{−t})` is `(−h, h)` with `h = ½ ln(sin²θ e^{2t} + cos²θ e^{−2t})`.
pub fn phi_sl2_quadrature(lam: &SpectralParam, t: f64) -> Result<(f64, f64)> {
    if lam.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: lam.dim() });
    }
    let (l1, l2) = (lam.values()[0], lam.values()[1]);
    let cfg = crate::quad::QuadConfig::default().with_rel_tol(1e-11);
    let two_pi = 2.0 * std::f64::consts::PI;
    let h = |th: f64| 0.5 * (th.sin().powi(2) * (2.0 * t).exp() + th.cos().powi(2) * (-2.0 * t).exp()).ln();
    let comp = |f: &dyn Fn(f64) -> f64| {
        crate::quad::adaptive_pieces(0.0, two_pi, &[0.5 * std::f64::consts::PI, std::f64::consts::PI, 1.5 * std::f64::consts::PI], &cfg, f).value / two_pi
    };
    let z = |th: f64| {
        let hv = h(th);
        let (h1, h2) = (-hv, hv);
        let w = (0.5 * h1 - 0.5 * h2).exp();
        (w, l1 * h1 + l2 * h2)
    };
    let re = comp(&|th| {
        let (w, a) = z(th);
        w * a.cos()
    });
    let im = comp(&|th| {
        let (w, a) = z(th);
        w * a.sin()
    });
    Ok((re, im))
}

/// `diag(e^{h₁}, …, e^{h_n})` for a traceless `h`.
pub fn flat_element(h: &[f64]) -> Result<Matrix> {
    let sum: f64 = h.iter().sum();
    if sum.abs() > 1e-12 * h.iter().map(|x| x.abs()).fold(1.0, f64::max) {
        return invalid("flat element needs a traceless exponent");
    }
    Ok(Matrix::from_diag(&h.iter().map(|x| x.exp()).collect::<Vec<_>>()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_values() {
        assert_eq!(rho(2).unwrap(), vec![0.5, -0.5]);
        assert_eq!(rho(3).unwrap(), vec![1.0, 0.0, -1.0]);
        assert_eq!(rho(4).unwrap(), vec![1.5, 0.5, -0.5, -1.5]);
        assert!(rho(1).is_err());
    }

    #[test]
    fn spectral_param_validation() {
        assert!(SpectralParam::new(vec![1.0, -1.0]).is_ok());
        assert!(SpectralParam::new(vec![1.0, -0.5]).is_err());
        assert!(SpectralParam::new(vec![1.0]).is_err());
        let p = SpectralParam::new(vec![3.0, -1.0, -2.0]).unwrap();
        assert_eq!(p.permuted(&[2, 0, 1]).unwrap().values(), &[-2.0, 3.0, -1.0]);
        assert!(p.permuted(&[0, 0, 1]).is_err());
    }

    #[test]
    fn bump_values() {
        let b = BumpFunction::centered(2, 1.0).unwrap();
        assert_eq!(b.eval(&[0.0, 0.0]), 1.0);
        assert_eq!(b.eval(&[1.0, -1.0]), 0.0);
        let v = b.eval(&[0.3, -0.3]);
        assert!(v > 0.0 && v < 1.0);
        assert!(BumpFunction::new(vec![1.0, 0.0], 1.0).is_err());
        assert!(BumpFunction::centered(2, 0.0).is_err());
    }

    #[test]
    fn helmert_basis_is_orthonormal_and_traceless() {
        for n in 2..=5 {
            let b = traceless_basis(n);
            for (i, u) in b.iter().enumerate() {
                assert!(u.iter().sum::<f64>().abs() < 1e-15);
                for (j, v) in b.iter().enumerate() {
                    let d: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                    assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn identity_is_exactly_one() {
        for n in 2..=5 {
            let lam = SpectralParam::new((0..n).map(|i| i as f64 - (n as f64 - 1.0) / 2.0).collect()).unwrap();
            let e = phi(&lam, &Matrix::identity(n), 1000, &SamplerConfig::new(1, n)).unwrap();
            assert_eq!((e.re, e.im, e.se_re, e.se_im), (1.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn sl2_quadrature_at_identity() {
        let (re, im) = phi_sl2_quadrature(&SpectralParam::new(vec![3.0, -3.0]).unwrap(), 0.0).unwrap();
        assert!((re - 1.0).abs() < 1e-12 && im.abs() < 1e-12);
    }

    #[test]
    fn period_grid_mass() {
        // Σ weights = ∫ b over the disc; for n = 2 it is the 1-D bump integral.
        let b = BumpFunction::centered(2, 1.0).unwrap();
        let nodes = period_nodes(&b);
        let mass: f64 = nodes.iter().map(|n| n.weight).sum();
        let cfg = crate::quad::QuadConfig::default().with_rel_tol(1e-12);
        let exact = crate::quad::adaptive(-1.0, 1.0, &cfg, |u| BumpFunction::profile(u * u)).value;
        assert!((mass - exact).abs() < 1e-9 * exact, "{mass} {exact}");
    }
}
