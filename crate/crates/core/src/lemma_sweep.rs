//! Sweeps over the rearrangement checks and the singular-integral
//! inequalities, with comparison against frozen ratio baselines.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::golden::Goldens;
use crate::rearrange::{
    conv_indicator_max_at_zero, convolution_sup, equimeasurability_defect, hl_inequality_check, lemma_1d_check,
    lemma_1dsmall_check, lemma_2d_check, lemma_2dsmall_check, log_average_check, log_average_inverse_check,
    monotone_rearrange, rearranged_pairing, RatioReport, SegmentParams, StepFunction,
};

/// Sweep sizes and grids. Every field has a default, so `{}` is a valid
/// config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaSweepConfig {
    pub seed: u64,
    pub equimeasurability_cases: usize,
    pub hl_triples: usize,
    pub conv_lists: usize,
    pub conv_grid: usize,
    pub pair_cases: usize,
    pub log_average_a: Vec<f64>,
    pub log_average_b_over_a: Vec<f64>,
    pub log_average_t: Vec<f64>,
    pub log_average_max_k: u32,
    /// Decades of `T/a` for the one-dimensional small lemma, step 1/2.
    pub one_d_small_max_decade: u32,
    pub one_d_cases: usize,
    pub two_d_cases: usize,
    pub two_d_small_cases: usize,
    /// Relative regression allowed against golden maxima.
    pub regression_slack: f64,
    /// Golden fixture file; the built-in one when absent.
    pub goldens: Option<std::path::PathBuf>,
}

impl Default for LemmaSweepConfig {
    fn default() -> Self {
        LemmaSweepConfig {
            seed: 20_240_501,
            equimeasurability_cases: 1000,
            hl_triples: 1000,
            conv_lists: 200,
            conv_grid: 256,
            pair_cases: 200,
            log_average_a: vec![0.0, 1e-6, 1e-3, 1.0],
            log_average_b_over_a: vec![10.0, 1e3, 1e6],
            log_average_t: vec![1.0, 1e3, 1e6, 1e9],
            log_average_max_k: 6,
            one_d_small_max_decade: 12,
            one_d_cases: 200,
            two_d_cases: 200,
            two_d_small_cases: 200,
            regression_slack: 0.1,
            goldens: None,
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub lemma: String,
    pub params: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub converged: bool,
    pub vacuous: bool,
}

impl LemmaRow {
    fn from_report(lemma: &str, params: String, r: &RatioReport) -> Self {
        LemmaRow {
            lemma: lemma.to_string(),
            params,
            lhs: r.lhs,
            rhs: r.rhs,
            ratio: r.ratio,
            converged: r.converged,
            vacuous: r.vacuous,
        }
    }
}

/// Counts of failed exact checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HardInvariants {
    pub equimeasurability_failures: usize,
    pub hl_violations: usize,
    pub conv_failures: usize,
    pub pairing_violations: usize,
    pub order_violations: usize,
    pub scaling_violations: usize,
    pub cases: usize,
}

impl HardInvariants {
    pub fn all_pass(&self) -> bool {
        self.equimeasurability_failures
            + self.hl_violations
            + self.conv_failures
            + self.pairing_violations
            + self.order_violations
            + self.scaling_violations
            == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub name: String,
    pub observed: f64,
    pub golden: Option<f64>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSweepOutcome {
    pub rows: Vec<LemmaRow>,
    pub hard: HardInvariants,
    /// Largest ratio per suite.
    pub maxima: BTreeMap<String, f64>,
    /// `[min, max]` of the small one-dimensional ratio.
    pub one_d_small_band: (f64, f64),
}

/// A step function on a dyadic grid, so that widths and level-set measures
/// are exact in floating point.
pub fn random_dyadic_step(rng: &mut ChaCha8Rng) -> StepFunction {
    let pieces = rng.random_range(1..=8usize);
    let mut ticks: Vec<i64> = Vec::with_capacity(pieces + 1);
    while ticks.len() < pieces + 1 {
        let t = rng.random_range(-512..=512i64);
        if !ticks.contains(&t) {
            ticks.push(t);
        }
    }
    ticks.sort_unstable();
    let breakpoints = ticks.iter().map(|&t| t as f64 / 64.0).collect();
    let values = (0..pieces).map(|_| rng.random_range(0..=64u32) as f64 / 16.0).collect();
    StepFunction::new(breakpoints, values).expect("valid by construction")
}

fn log_uniform(rng: &mut ChaCha8Rng, lo_decade: f64, hi_decade: f64) -> f64 {
    10f64.powf(rng.random_range(lo_decade..hi_decade))
}

fn case_rng(seed: u64, suite: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(suite << 32 | i as u64);
    r
}

fn hard_checks(cfg: &LemmaSweepConfig) -> HardInvariants {
    let seed = cfg.seed;
    let equi = (0..cfg.equimeasurability_cases)
        .into_par_iter()
        .filter(|&i| {
            let f = random_dyadic_step(&mut case_rng(seed, 1, i));
            let fs = monotone_rearrange(&f);
            !(equimeasurability_defect(&f, &fs) == 0.0 && fs.is_nonincreasing() && fs.breakpoints()[0] == 0.0)
        })
        .count();
    let hl = (0..cfg.hl_triples)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = case_rng(seed, 2, i);
            let fs: Vec<StepFunction> = (0..3).map(|_| random_dyadic_step(&mut rng)).collect();
            !hl_inequality_check(&fs).expect("three functions").holds
        })
        .count();
    let conv = (0..cfg.conv_lists)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = case_rng(seed, 3, i);
            let m = rng.random_range(1..=6usize);
            let widths: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..2.0)).collect();
            !conv_indicator_max_at_zero(&widths, cfg.conv_grid).expect("positive widths").holds
        })
        .count();
    let (pairing, order, scaling) = (0..cfg.pair_cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed, 4, i);
            let f = random_dyadic_step(&mut rng);
            let g = random_dyadic_step(&mut rng);
            let sup = convolution_sup(&f, &g);
            let pair = rearranged_pairing(&f, &g);
            let pairing_bad = sup > pair + 1e-12 * pair.max(1.0);
            // g dominates f on f's breakpoints when built from f.
            let bump: Vec<f64> = f.values().iter().map(|v| v + rng.random_range(0..=16u32) as f64 / 16.0).collect();
            let h = StepFunction::new(f.breakpoints().to_vec(), bump).expect("nonnegative");
            let (fs, hs) = (monotone_rearrange(&f), monotone_rearrange(&h));
            let grid: Vec<f64> = fs.breakpoints().iter().chain(hs.breakpoints()).copied().collect();
            let order_bad = grid.iter().any(|&x| fs.eval(x) > hs.eval(x));
            let a = [0.5, 3.0, 1.25][i % 3];
            let lhs = monotone_rearrange(&f.scaled(a).expect("positive scale"));
            let rhs = fs.scaled(a).expect("positive scale");
            let scaling_bad = lhs != rhs;
            (pairing_bad as usize, order_bad as usize, scaling_bad as usize)
        })
        .reduce(|| (0, 0, 0), |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2));
    HardInvariants {
        equimeasurability_failures: equi,
        hl_violations: hl,
        conv_failures: conv,
        pairing_violations: pairing,
        order_violations: order,
        scaling_violations: scaling,
        cases: cfg.equimeasurability_cases + cfg.hl_triples + cfg.conv_lists + 3 * cfg.pair_cases,
    }
}

fn params_json<T: Serialize>(p: &T) -> String {
    serde_json::to_string(p).expect("plain data serializes")
}

fn log_average_rows(cfg: &LemmaSweepConfig) -> Vec<LemmaRow> {
    let mut jobs = Vec::new();
    for &a in &cfg.log_average_a {
        for &q in &cfg.log_average_b_over_a {
            let b = if a == 0.0 { q / 10.0 } else { a * q };
            for &t in &cfg.log_average_t {
                for k in 0..=cfg.log_average_max_k {
                    jobs.push((a, b, t, k));
                }
            }
        }
    }
    jobs.par_iter()
        .flat_map_iter(|&(a, b, t, k)| {
            let params = params_json(&serde_json::json!({"a": a, "b": b, "T": t, "k": k}));
            let mut rows = Vec::new();
            if let Ok(r) = log_average_check(a, b, t, k) {
                rows.push(LemmaRow::from_report(&format!("log_average_k{k}"), params.clone(), &r));
            }
            if a > 0.0 {
                if let Ok(r) = log_average_inverse_check(a, b, t, k) {
                    rows.push(LemmaRow::from_report(&format!("log_average_inverse_k{k}"), params, &r));
                }
            }
            rows
        })
        .collect()
}

fn one_d_small_rows(cfg: &LemmaSweepConfig) -> Vec<LemmaRow> {
    (0..=2 * cfg.one_d_small_max_decade)
        .map(|i| {
            let t = 10f64.powf(i as f64 / 2.0);
            let r = lemma_1dsmall_check(1.0, t).expect("valid grid");
            LemmaRow {
                lemma: "1dsmall".into(),
                params: params_json(&serde_json::json!({"a": 1.0, "T": t})),
                lhs: r.exact,
                rhs: r.rhs,
                ratio: r.ratio,
                converged: (r.quadrature - r.exact).abs() <= 1e-6 * r.exact,
                vacuous: false,
            }
        })
        .collect()
}

fn one_d_rows(cfg: &LemmaSweepConfig) -> Vec<LemmaRow> {
    (0..cfg.one_d_cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(cfg.seed, 5, i);
            let t = log_uniform(&mut rng, 0.0, 6.0);
            let a = t * log_uniform(&mut rng, -8.0, -0.01);
            let b = t * log_uniform(&mut rng, -8.0, -0.01);
            let k = i % 4;
            let ls: Vec<f64> = (0..k).map(|_| t * rng.random_range(-2.0..1.0)).collect();
            let r = lemma_1d_check(a, b, t, &ls).expect("valid by construction");
            let params = params_json(&serde_json::json!({"a": a, "b": b, "T": t, "L": ls}));
            LemmaRow::from_report(&format!("1d_k{k}"), params, &r)
        })
        .collect()
}

/// Points `A ≤ B ≤ C ≤ D ≤ E` with random gaps over several decades, and a
/// `t` approaching one of the two window edges geometrically.
fn random_segment(rng: &mut ChaCha8Rng, with_e: bool, k: usize) -> SegmentParams {
    let shift = rng.random_range(-10.0..10.0);
    let mut pts = vec![shift];
    for _ in 0..if with_e { 4 } else { 3 } {
        let last = *pts.last().expect("nonempty");
        pts.push(last + log_uniform(rng, -3.0, 1.0));
    }
    let span = pts[pts.len() - 1] - pts[0];
    let t_scale = span * log_uniform(rng, 0.0, 2.0);
    let (lo, hi) = (pts[0] + pts[2], pts[1] + pts[3]);
    let u = log_uniform(rng, -6.0, 0.0);
    let t = if rng.random_bool(0.5) { lo + u * (hi - lo) } else { hi - u * (hi - lo) };
    let ls = (0..k).map(|_| rng.random_range(pts[0] - t_scale..pts[pts.len() - 1] + t_scale)).collect();
    SegmentParams { a: pts[0], b: pts[1], c: pts[2], d: pts[3], e: if with_e { pts[4] } else { 0.0 }, t_scale, t, ls }
}

fn two_d_rows(cfg: &LemmaSweepConfig) -> Vec<LemmaRow> {
    let mut rows: Vec<LemmaRow> = (0..cfg.two_d_cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(cfg.seed, 6, i);
            let k = i % 3;
            let p = random_segment(&mut rng, true, k);
            let r = lemma_2d_check(&p).expect("valid by construction");
            LemmaRow::from_report(&format!("2d_k{k}"), params_json(&p), &r)
        })
        .collect();
    // Approach to the lower window edge.
    let base = SegmentParams { a: 0.0, b: 1.0, c: 2.0, d: 3.5, e: 5.0, t_scale: 20.0, t: 0.0, ls: vec![1.7] };
    for j in 1..=6 {
        let p = SegmentParams { t: base.a + base.c + 10f64.powi(-j), ..base.clone() };
        let r = lemma_2d_check(&p).expect("valid");
        rows.push(LemmaRow::from_report("2d_edge", params_json(&p), &r));
    }
    rows
}

fn two_d_small_rows(cfg: &LemmaSweepConfig) -> Vec<LemmaRow> {
    let mut rows: Vec<LemmaRow> = (0..cfg.two_d_small_cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(cfg.seed, 7, i);
            let p = random_segment(&mut rng, false, 0);
            let r = lemma_2dsmall_check(&p).expect("valid by construction");
            LemmaRow::from_report("2dsmall", params_json(&p), &r)
        })
        .collect();
    // Shrinking both intervals toward points: A = B and C = D in the limit.
    for j in 1..=4 {
        let w = 10f64.powi(-j);
        let p = SegmentParams { a: -1.0, b: -1.0 + w, c: 1.0, d: 1.0 + w, e: 0.0, t_scale: 10.0, t: 0.3 * w, ls: vec![] };
        let r = lemma_2dsmall_check(&p).expect("valid");
        rows.push(LemmaRow::from_report("2dsmall_point_mass", params_json(&p), &r));
    }
    let sym = SegmentParams { a: -2.0, b: -1.0, c: 1.0, d: 2.0, e: 0.0, t_scale: 10.0, t: 0.25, ls: vec![] };
    rows.push(LemmaRow::from_report("2dsmall", params_json(&sym), &lemma_2dsmall_check(&sym).expect("valid")));
    rows
}

/// Runs every check in the config.
pub fn run_lemma_sweep(cfg: &LemmaSweepConfig) -> LemmaSweepOutcome {
    let hard = hard_checks(cfg);
    let mut rows = log_average_rows(cfg);
    let small = one_d_small_rows(cfg);
    let band = small.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.ratio), hi.max(r.ratio)));
    rows.extend(small);
    rows.extend(one_d_rows(cfg));
    rows.extend(two_d_rows(cfg));
    rows.extend(two_d_small_rows(cfg));
    let mut maxima: BTreeMap<String, f64> = BTreeMap::new();
    for r in &rows {
        let slot = maxima.entry(r.lemma.clone()).or_insert(0.0);
        // A non-finite or unconverged ratio poisons the suite maximum.
        let v = if r.converged { r.ratio } else { f64::INFINITY };
        *slot = if v.is_nan() { f64::INFINITY } else { slot.max(v) };
    }
    LemmaSweepOutcome { rows, hard, maxima, one_d_small_band: band }
}

impl LemmaSweepOutcome {
    /// Suite maxima against frozen baselines: a suite regresses when its
    /// maximum exceeds the golden value by more than `slack`, is not finite,
    /// or has no golden value.
    pub fn regressions(&self, goldens: &Goldens, slack: f64) -> Vec<Regression> {
        let mut out: Vec<Regression> = self
            .maxima
            .iter()
            .map(|(name, &observed)| {
                let golden = goldens.lemma_max_ratio.get(name).copied();
                let ok = observed.is_finite() && golden.is_some_and(|g| observed <= g * (1.0 + slack));
                Regression { name: name.clone(), observed, golden, ok }
            })
            .collect();
        let (lo, hi) = self.one_d_small_band;
        let [glo, ghi] = goldens.one_d_small_band;
        let tol = 1e-9;
        out.push(Regression {
            name: "1dsmall_band_low".into(),
            observed: lo,
            golden: Some(glo),
            ok: (lo - glo).abs() <= tol * glo.abs(),
        });
        out.push(Regression {
            name: "1dsmall_band_high".into(),
            observed: hi,
            golden: Some(ghi),
            ok: (hi - ghi).abs() <= tol * ghi.abs(),
        });
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_steps_are_valid_and_reproducible() {
        let a = random_dyadic_step(&mut case_rng(1, 1, 5));
        let b = random_dyadic_step(&mut case_rng(1, 1, 5));
        assert_eq!(a, b);
        assert!(a.breakpoints().iter().all(|x| (x * 64.0).fract() == 0.0));
    }

    #[test]
    fn small_sweep_runs() {
        let cfg = LemmaSweepConfig {
            equimeasurability_cases: 20,
            hl_triples: 20,
            conv_lists: 10,
            pair_cases: 10,
            log_average_max_k: 1,
            one_d_cases: 8,
            two_d_cases: 6,
            two_d_small_cases: 6,
            ..LemmaSweepConfig::default()
        };
        let out = run_lemma_sweep(&cfg);
        assert!(out.hard.all_pass(), "{:?}", out.hard);
        assert!(out.maxima.values().all(|v| v.is_finite()), "{:?}", out.maxima);
        let again = run_lemma_sweep(&cfg);
        assert_eq!(out, again);
    }

    #[test]
    fn config_defaults_fill_in() {
        let cfg: LemmaSweepConfig = serde_json::from_str(r#"{"hl_triples": 5}"#).unwrap();
        assert_eq!(cfg.hl_triples, 5);
        assert_eq!(cfg.conv_lists, 200);
        assert!(serde_json::from_str::<LemmaSweepConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
