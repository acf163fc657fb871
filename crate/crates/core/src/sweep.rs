//! Spectrum families indexed by a scale `T`, and the comparison table of
//! Monte Carlo, recursion, and closed-form quantities along a family.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::haar::SamplerConfig;
use crate::interlace::{j_n_integral, recursive_i, QuadBudget, MAX_RECURSION_DIM};
use crate::mc::{estimate_i_adaptive, MCEstimate};
use crate::spectrum::{a_n, classify_regime, tilde_beta, RegimeKind, RegimeTag, Spectrum};

/// Version tag written in the header of comparison tables.
/// Splitting inside each pair of the one-gap-4-2 family. The one-gap test
/// `d_I > (1 − 1/(100n))·d` needs it below `T/400`, so this stays
/// exceptional for every `T > 4`.
pub const PAIR_SPLIT: f64 = 0.01;

pub const COMPARE_FORMAT: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Generic,
    OneGap,
    #[serde(rename = "one-gap-4-2")]
    OneGap42,
    TwoGap,
    #[serde(rename = "two-gap-1-nm1")]
    TwoGap1Nm1,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Generic, Family::OneGap, Family::OneGap42, Family::TwoGap, Family::TwoGap1Nm1];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Generic => "generic",
            Family::OneGap => "one-gap",
            Family::OneGap42 => "one-gap-4-2",
            Family::TwoGap => "two-gap",
            Family::TwoGap1Nm1 => "two-gap-1-nm1",
        }
    }

    pub fn parse(name: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown family {name:?}")))
    }

    /// Whether a realized regime is the one this family is meant to produce.
    /// Gaps within a factor three never form a single dominant gap, so a
    /// generic spectrum is accepted as any two-gap regime.
    pub fn accepts(&self, kind: RegimeKind) -> bool {
        match self {
            Family::Generic => !kind.is_one_gap(),
            Family::OneGap => kind == RegimeKind::OneGap,
            Family::OneGap42 => kind == RegimeKind::OneGapExceptional4_2,
            Family::TwoGap => kind == RegimeKind::TwoGap,
            Family::TwoGap1Nm1 => kind == RegimeKind::TwoGapExceptional1_nm1,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn centered(v: Vec<f64>) -> Result<Spectrum> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Spectrum::new(v.into_iter().map(|x| x - mean).collect())
}

/// Member of `family` at scale `t`, together with its realized regime.
/// Fails if the spectrum does not land in the family's regime.
pub fn generate(family: Family, n: usize, t: f64, seed: u64) -> Result<(Spectrum, RegimeTag)> {
    if !(3..=crate::linalg::MAX_DIM).contains(&n) {
        return invalid(format!("families need 3 <= n <= {}, got {n}", crate::linalg::MAX_DIM));
    }
    if !(t > 0.0 && t.is_finite()) {
        return invalid(format!("scale must be positive, got {t}"));
    }
    let nf = n as f64;
    let s = match family {
        Family::OneGap => {
            // One eigenvalue at −(n−1)T/n, a tight cluster near T/n.
            let step = t / (1000.0 * nf);
            let mut v = vec![-(nf - 1.0) * t / nf];
            v.extend((0..n - 1).map(|i| t / nf + step * (i as f64 - (nf - 2.0) / 2.0)));
            centered(v)?
        }
        Family::OneGap42 => {
            if n != 4 {
                return invalid("the one-gap-4-2 family exists only for n = 4");
            }
            Spectrum::new(vec![-t, -t + PAIR_SPLIT, t - PAIR_SPLIT, t])?
        }
        Family::TwoGap1Nm1 => {
            // ±T with a unit-spaced middle cluster.
            let mut v = vec![-t, t];
            v.extend((0..n - 2).map(|i| i as f64 - (nf - 3.0) / 2.0));
            Spectrum::new(v)?
        }
        Family::TwoGap => {
            if n < 4 {
                return invalid("a two-gap spectrum off the (1, n−1) pattern needs n >= 4");
            }
            // Gaps (T, T, 1, …, 1): the two largest are the first two.
            let mut v = vec![0.0, t, 2.0 * t];
            for i in 0..n - 3 {
                v.push(2.0 * t + 1.0 + i as f64);
            }
            centered(v)?
        }
        Family::Generic => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t.to_bits());
            let gaps = loop {
                let g: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.5..3.0)).collect();
                let (lo, hi) = g.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
                if hi <= 3.0 * lo {
                    break g;
                }
            };
            let scale = t / gaps.iter().sum::<f64>();
            let mut v = vec![0.0];
            for g in gaps {
                v.push(v[v.len() - 1] + g * scale);
            }
            centered(v)?
        }
    };
    if !s.is_regular() {
        return invalid(format!("{family} at T = {t} is not regular; use a larger scale"));
    }
    let tag = classify_regime(&s)?;
    if !family.accepts(tag.kind) {
        return invalid(format!("{family} at n = {n}, T = {t} realized regime {}, refusing mislabeled family", tag.kind));
    }
    Ok((s, tag))
}

/// A comparison sweep along one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub family: Family,
    pub n: usize,
    pub grid: Vec<f64>,
    pub seed: u64,
    /// Initial Monte Carlo sample count.
    pub samples: u64,
    /// Target relative width of the 95% interval.
    pub target_ci: f64,
    /// Sample cap per row.
    pub budget: u64,
    /// Compute the recursion where available.
    #[serde(default = "yes")]
    pub recursion: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub family: String,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub lambda: String,
    pub regime: String,
    pub i_mc: f64,
    pub i_mc_low: f64,
    pub i_mc_high: f64,
    #[serde(rename = "N")]
    pub samples: u64,
    pub hits: u64,
    pub i_rec: Option<f64>,
    pub i_rec_err: Option<f64>,
    pub j_n: Option<f64>,
    pub j_n_err: Option<f64>,
    pub a_n: f64,
    pub tilde_beta: f64,
    pub ratio_i_a: f64,
    pub ratio_i_a_low: f64,
    pub ratio_i_a_high: f64,
    pub ratio_rec_a: Option<f64>,
    pub ratio_j_a: Option<f64>,
    /// Empty when every estimate met its budget; otherwise `;`-separated reasons.
    pub flags: String,
}

impl CompareRow {
    /// The best available value of `I_n / A_n`: the recursion when present.
    pub fn best_ratio(&self) -> f64 {
        self.ratio_rec_a.unwrap_or(self.ratio_i_a)
    }

    pub fn best_i(&self) -> f64 {
        self.i_rec.unwrap_or(self.i_mc)
    }
}

fn lambda_text(s: &Spectrum) -> String {
    s.values().iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
}

fn compare_row(spec: &SweepSpec, t: f64, index: usize) -> Result<CompareRow> {
    let (s, tag) = generate(spec.family, spec.n, t, spec.seed)?;
    let cfg = SamplerConfig::new(spec.seed, spec.n).substream(index as u64);
    let mc: MCEstimate = estimate_i_adaptive(&s, 1.0, spec.samples, spec.target_ci, spec.budget, &cfg)?;
    let a = a_n(&s);
    let mut flags = Vec::new();
    if mc.relative_width() > spec.target_ci {
        flags.push("mc-budget");
    }
    let (i_rec, i_rec_err) = if spec.recursion && spec.n <= MAX_RECURSION_DIM {
        let r = recursive_i(&s, 1.0, &QuadBudget::for_recursion(spec.n))?;
        if !r.converged {
            flags.push("recursion-budget");
        }
        (Some(r.value), Some(r.error))
    } else {
        (None, None)
    };
    let (j_n, j_n_err) = if spec.n <= 5 {
        let budget = if spec.n >= 4 { QuadBudget::fixed_inner(1e-5, 8) } else { QuadBudget::default() };
        let r = j_n_integral(&s, &budget)?;
        if !r.converged {
            flags.push("j-budget");
        }
        (Some(r.value), Some(r.error))
    } else {
        (None, None)
    };
    Ok(CompareRow {
        family: spec.family.to_string(),
        n: spec.n,
        t,
        lambda: lambda_text(&s),
        regime: tag.kind.to_string(),
        i_mc: mc.p_hat,
        i_mc_low: mc.ci_low,
        i_mc_high: mc.ci_high,
        samples: mc.total,
        hits: mc.hits,
        i_rec,
        i_rec_err,
        j_n,
        j_n_err,
        a_n: a,
        tilde_beta: tilde_beta(&s),
        ratio_i_a: mc.p_hat / a,
        ratio_i_a_low: mc.ci_low / a,
        ratio_i_a_high: mc.ci_high / a,
        ratio_rec_a: i_rec.map(|v| v / a),
        ratio_j_a: j_n.map(|v| v / a),
        flags: flags.join(";"),
    })
}

/// Runs the sweep; rows come back in grid order. Every spectrum is
/// generated and regime-checked before any estimate runs.
pub fn run_compare(spec: &SweepSpec) -> Result<Vec<CompareRow>> {
    if spec.grid.is_empty() {
        return invalid("empty scale grid");
    }
    for &t in &spec.grid {
        generate(spec.family, spec.n, t, spec.seed)?;
    }
    spec.grid.par_iter().enumerate().map(|(i, &t)| compare_row(spec, t, i)).collect()
}

/// Writes the header comment, the column row, and the rows.
pub fn write_compare_csv<W: Write>(rows: &[CompareRow], mut w: W, stamp: &str) -> Result<()> {
    writeln!(w, "# flatlab compare {COMPARE_FORMAT} {stamp}")?;
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Least-squares slope and Pearson correlation of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / sxx, sxy / (sxx * syy).sqrt())
}
