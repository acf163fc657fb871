//! Frozen measured constants: normalization constants of the transfer
//! identity, suite maxima of the inequality ratios, and ratio bands of the
//! regime studies.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// The fixture shipped with the crate.
pub const BUILTIN: &str = include_str!("../fixtures/goldens.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationGoldens {
    /// Relative quadrature tolerance the values were produced with.
    pub rel_tol: f64,
    /// `1/c_n = ∫_𝓜 J dμ`, keyed by `n`.
    pub inverse_c: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goldens {
    pub version: u32,
    pub normalization: NormalizationGoldens,
    pub lemma_max_ratio: BTreeMap<String, f64>,
    pub one_d_small_band: [f64; 2],
    /// `I₃/A₃` over the two-gap `(−T, ·, T)` family.
    pub two_gap_ratio_band: [f64; 2],
}

impl Goldens {
    pub fn builtin() -> Goldens {
        serde_json::from_str(BUILTIN).expect("shipped fixture parses")
    }

    pub fn load(path: &Path) -> Result<Goldens> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn inverse_c(&self, n: usize) -> Option<f64> {
        self.normalization.inverse_c.get(&n.to_string()).copied()
    }
}
