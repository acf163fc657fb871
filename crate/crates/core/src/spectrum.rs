//! Ordered spectra, gap/regime analysis and the closed-form density side:
//! `log′`, `L_n`, `β̃`, `A_n` and the reduction of a nonzero-trace spectrum
//! to a tracefree one.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Ascending real spectrum `λ_1 ≤ … ≤ λ_n`, `n ≥ 1`.
///
/// Inputs are sorted on construction; everything defined on spectra here is
/// Weyl invariant, so nothing is lost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Spectrum {
    values: Vec<f64>,
    trace: f64,
}

impl Spectrum {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("spectrum must be non-empty");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("spectrum has non-finite entries");
        }
        values.sort_by(f64::total_cmp);
        let trace = values.iter().sum();
        Ok(Spectrum { values, trace })
    }

    /// Parses `"a,b,c"`.
    pub fn parse(text: &str) -> Result<Self> {
        let vals: std::result::Result<Vec<f64>, _> =
            text.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) => Spectrum::new(v),
            Err(e) => invalid(format!("cannot parse spectrum {text:?}: {e}")),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `|Tr λ| < 1e-12·(1 + ‖λ‖)`.
    pub fn is_tracefree(&self) -> bool {
        self.trace.abs() < 1e-12 * (1.0 + self.norm())
    }

    /// `λ_n − λ_1`.
    pub fn spread(&self) -> f64 {
        self.values[self.dim() - 1] - self.values[0]
    }

    /// Consecutive gaps `d_i = λ_{i+1} − λ_i`.
    pub fn gaps(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Strictly increasing entries.
    pub fn is_regular(&self) -> bool {
        self.values.windows(2).all(|w| w[0] < w[1])
    }

    pub fn scaled(&self, t: f64) -> Result<Spectrum> {
        Spectrum::new(self.values.iter().map(|v| v * t).collect())
    }

    /// `sorted(−λ)`.
    pub fn negated(&self) -> Spectrum {
        Spectrum::new(self.values.iter().rev().map(|v| -v).collect()).expect("finite")
    }

    /// The tracefree part `λ − (Tr λ / n)·1`.
    pub fn tracefree_part(&self) -> Spectrum {
        let shift = self.trace / self.dim() as f64;
        Spectrum::new(self.values.iter().map(|v| v - shift).collect()).expect("finite")
    }
}

impl TryFrom<Vec<f64>> for Spectrum {
    type Error = crate::error::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Spectrum::new(v)
    }
}

impl From<Spectrum> for Vec<f64> {
    fn from(s: Spectrum) -> Vec<f64> {
        s.values
    }
}

impl fmt::Display for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|v| format!("{v}")).collect();
        write!(f, "{}", parts.join(";"))
    }
}

/// `log′ x = ln(2 + x)` for `x ≥ 0`.
pub fn log_prime(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return invalid(format!("log′ needs a nonnegative argument, got {x}"));
    }
    Ok(log_prime_unchecked(x))
}

/// `ln(2 + x)` without the domain check (`+∞` maps to `+∞`).
#[inline]
pub fn log_prime_unchecked(x: f64) -> f64 {
    (2.0 + x).ln()
}

/// The logarithmic factor `L_n(λ)`. For `n ≠ 4` this is
/// `log′(‖λ‖/(1+|λ_2|+|λ_{n−1}|))^{n−2}`; for `n = 4` it carries the extra
/// factor `log′(‖λ‖/(1+|λ_1−λ_2|+|λ_3−λ_4|))`. `L_2 = 1`, `L_1 = 1`.
pub fn l_n(s: &Spectrum) -> f64 {
    l_n_values(s.values())
}

/// [`l_n`] on an already ascending slice.
pub fn l_n_values(v: &[f64]) -> f64 {
    let n = v.len();
    if n <= 2 {
        return 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let main = log_prime_unchecked(norm / (1.0 + v[1].abs() + v[n - 2].abs()));
    let mut out = main.powi(n as i32 - 2);
    if n == 4 {
        out *= log_prime_unchecked(norm / (1.0 + (v[0] - v[1]).abs() + (v[2] - v[3]).abs()));
    }
    out
}

/// `β̃(λ) = ∏_{i<j} (1 + |λ_i − λ_j|)`.
pub fn tilde_beta(s: &Spectrum) -> f64 {
    let v = s.values();
    let mut p = 1.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            p *= 1.0 + (v[i] - v[j]).abs();
        }
    }
    p
}

/// `A_n(λ) = (1 + ‖λ‖)^{−n+1} L_n(λ)`.
pub fn a_n(s: &Spectrum) -> f64 {
    a_n_values(s.values())
}

/// [`a_n`] on an already ascending slice.
pub fn a_n_values(v: &[f64]) -> f64 {
    let n = v.len() as i32;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (1.0 + norm).powi(1 - n) * l_n_values(v)
}

/// Rescales a spectrum to the tracefree problem with the same concentration
/// probability: `I_n(λ) = I_n(λ₀/√(1 − (Tr λ)²/n))`, where `λ₀` is the
/// tracefree part. Returns `None` when `|Tr λ| ≥ √n`, where `I_n(λ) = 0`.
pub fn trace_reduce(s: &Spectrum) -> Option<Spectrum> {
    if s.is_tracefree() {
        return Some(s.clone());
    }
    let n = s.dim() as f64;
    let remaining = 1.0 - s.trace() * s.trace() / n;
    if !(remaining > 0.0) {
        return None;
    }
    let scale = 1.0 / remaining.sqrt();
    let shift = s.trace() / n;
    Some(Spectrum::new(s.values().iter().map(|v| (v - shift) * scale).collect()).expect("finite"))
}

/// The case split of the concentration analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeKind {
    OneGap,
    OneGapExceptional4_2,
    TwoGap,
    #[allow(non_camel_case_types)]
    TwoGapExceptional1_nm1,
    Generic,
}

impl RegimeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeKind::OneGap => "OneGap",
            RegimeKind::OneGapExceptional4_2 => "OneGapExceptional4_2",
            RegimeKind::TwoGap => "TwoGap",
            RegimeKind::TwoGapExceptional1_nm1 => "TwoGapExceptional1_nm1",
            RegimeKind::Generic => "Generic",
        }
    }

    pub fn is_one_gap(&self) -> bool {
        matches!(self, RegimeKind::OneGap | RegimeKind::OneGapExceptional4_2)
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classification of a spectrum. Gap indices are 1-based: gap `i` is
/// `λ_{i+1} − λ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTag {
    pub kind: RegimeKind,
    pub i: usize,
    pub j: Option<usize>,
    pub d: f64,
    pub gaps: Vec<f64>,
}

/// Splits `λ` by its largest gap `d_I`: one-gap when `d_I > (1 − 1/(100n))·d`,
/// two-gap otherwise with `I < J` the two largest gaps. Ties go to the smallest
/// index.
pub fn classify_regime(s: &Spectrum) -> Result<RegimeTag> {
    let n = s.dim();
    if n < 3 {
        return invalid(format!("regime classification needs n >= 3, got {n}"));
    }
    let d = s.spread();
    if !(d > 0.0) {
        return invalid("degenerate spectrum: all eigenvalues equal");
    }
    let gaps = s.gaps();
    let largest = argmax_excluding(&gaps, None);
    let nf = n as f64;
    if gaps[largest] > (1.0 - 1.0 / (100.0 * nf)) * d {
        let i = largest + 1;
        let kind = if n == 4 && i == 2 {
            RegimeKind::OneGapExceptional4_2
        } else {
            RegimeKind::OneGap
        };
        return Ok(RegimeTag { kind, i, j: None, d, gaps });
    }
    let second = argmax_excluding(&gaps, Some(largest));
    let (i, j) = if largest < second {
        (largest + 1, second + 1)
    } else {
        (second + 1, largest + 1)
    };
    let kind = if i == 1 && j == n - 1 {
        RegimeKind::TwoGapExceptional1_nm1
    } else {
        RegimeKind::TwoGap
    };
    Ok(RegimeTag { kind, i, j: Some(j), d, gaps })
}

fn argmax_excluding(v: &[f64], skip: Option<usize>) -> usize {
    let mut best: Option<usize> = None;
    for (idx, &x) in v.iter().enumerate() {
        if Some(idx) == skip {
            continue;
        }
        match best {
            Some(b) if v[b] >= x => {}
            _ => best = Some(idx),
        }
    }
    best.expect("at least two gaps")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sp(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn log_prime_values() {
        assert_relative_eq!(log_prime(0.0).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(log_prime(std::f64::consts::E - 2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(log_prime(98.0).unwrap(), 100f64.ln(), epsilon = 1e-15);
        assert!(log_prime(-1e-3).is_err());
        assert!(log_prime(f64::NAN).is_err());
    }

    #[test]
    fn l_n_examples() {
        let s = sp(&[-100.0, 0.0, 100.0]);
        assert_relative_eq!(l_n(&s), (2.0 + 20000f64.sqrt()).ln(), max_relative = 1e-14);
        assert_relative_eq!(l_n(&s), 4.96584, max_relative = 1e-4);
        assert_eq!(l_n(&sp(&[-10.0, 10.0])), 1.0);
        let s4 = sp(&[-50.0, -50.0, 50.0, 50.0]);
        let main = (2.0f64 + 100.0 / 101.0).ln().powi(2);
        let exc = 102f64.ln();
        assert_relative_eq!(main, 1.19960, max_relative = 1e-4);
        assert_relative_eq!(exc, 4.62497, max_relative = 1e-5);
        assert_relative_eq!(l_n(&s4), main * exc, max_relative = 1e-14);
        assert_relative_eq!(l_n(&s4), 5.54811, max_relative = 1e-4);
    }

    #[test]
    fn l_n_lower_bounds() {
        let ln2 = 2f64.ln();
        for n in 3..=6 {
            let s = Spectrum::new(vec![0.0; n]).unwrap();
            let bound = if n == 4 { ln2.powi(3) } else { ln2.powi(n as i32 - 2) };
            assert!(l_n(&s) >= bound * (1.0 - 1e-15));
        }
    }

    #[test]
    fn tilde_beta_examples() {
        assert_eq!(tilde_beta(&sp(&[0.0, 0.0, 0.0])), 1.0);
        assert_eq!(tilde_beta(&sp(&[-3.5, 3.5])), 8.0);
        assert_eq!(tilde_beta(&sp(&[-1.0, 0.0, 1.0])), 12.0);
    }

    #[test]
    fn a_n_examples() {
        assert_relative_eq!(a_n(&sp(&[0.0, 0.0, 0.0])), 2f64.ln(), max_relative = 1e-15);
        let direct = (2.0 + 20000f64.sqrt()).ln() / (1.0 + 20000f64.sqrt()).powi(2);
        assert_relative_eq!(a_n(&sp(&[-100.0, 0.0, 100.0])), direct, max_relative = 1e-14);
        assert_relative_eq!(a_n(&sp(&[-100.0, 0.0, 100.0])), 2.44830e-4, max_relative = 1e-4);
        assert_relative_eq!(a_n(&sp(&[-10.0, 10.0])), 1.0 / (1.0 + 200f64.sqrt()), max_relative = 1e-14);
        // Hand-rounded reference values carry a few parts in 10⁴ of slack.
        assert_relative_eq!(a_n(&sp(&[-10.0, 10.0])), 0.066057, max_relative = 5e-4);
    }

    #[test]
    fn classify_examples() {
        let a = 5.0;
        let t = classify_regime(&sp(&[-3.0 * a, -a, a, 3.0 * a])).unwrap();
        assert_eq!(t.kind, RegimeKind::TwoGap);
        assert_eq!((t.i, t.j), (1, Some(2)));

        let eps = 1e-3;
        let t = classify_regime(&sp(&[-a, -a + eps, a - eps, a])).unwrap();
        assert_eq!(t.kind, RegimeKind::OneGapExceptional4_2);
        assert_eq!(t.i, 2);

        let t = classify_regime(&sp(&[-a, 0.0, a])).unwrap();
        assert_eq!(t.kind, RegimeKind::TwoGapExceptional1_nm1);
        assert_eq!((t.i, t.j), (1, Some(2)));

        assert!(classify_regime(&sp(&[1.0, 1.0, 1.0])).is_err());
        assert!(classify_regime(&sp(&[-1.0, 1.0])).is_err());
    }

    #[test]
    fn classify_one_gap_generic_index() {
        let t = classify_regime(&sp(&[-20.0, 9.99, 10.0, 10.01])).unwrap();
        assert_eq!(t.kind, RegimeKind::OneGap);
        assert_eq!(t.i, 1);
    }

    #[test]
    fn trace_reduce_examples() {
        let s = sp(&[-1.0, 0.0, 1.0]);
        assert_eq!(trace_reduce(&s).unwrap(), s);
        assert!(trace_reduce(&sp(&[2.0, 2.0, 2.0])).is_none());
        let r = trace_reduce(&sp(&[0.0, 1.0])).unwrap();
        assert_relative_eq!(r.values()[0], -0.5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(r.values()[1], 0.5f64.sqrt(), max_relative = 1e-14);
        // |Tr| = √n exactly: the ball is tangent, probability zero.
        assert!(trace_reduce(&sp(&[1.0, 1.0])).is_none());
    }

    #[test]
    fn spectrum_sorts_and_serializes() {
        let s = sp(&[3.0, -1.0, 2.0]);
        assert_eq!(s.values(), &[-1.0, 2.0, 3.0]);
        assert_eq!(s.trace(), 4.0);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, "[-1.0,2.0,3.0]");
        let back: Spectrum = serde_json::from_str("[2.0, -2.0]").unwrap();
        assert_eq!(back.values(), &[-2.0, 2.0]);
        assert!(serde_json::from_str::<Spectrum>("[]").is_err());
        assert!(Spectrum::parse("1,x").is_err());
    }

    #[test]
    fn regime_serializes_as_strings() {
        assert_eq!(
            serde_json::to_string(&RegimeKind::TwoGapExceptional1_nm1).unwrap(),
            "\"TwoGapExceptional1_nm1\""
        );
    }
}
