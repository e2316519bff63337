//! Finite-horizon convergence proxy for positive series.
//!
//! Terms are grouped into dyadic blocks `B_j = Σ_{2^j ≤ n < 2^{j+1}} t_n`
//! (complete blocks only). The series is labelled convergent when each of the
//! last [`RATIOS_CHECKED`] block ratios `B_{j+1}/B_j` is at most
//! [`BLOCK_RATIO_LIMIT`]. This is a heuristic proxy, not a proof, and reports
//! say so in their `method` field.

use serde::{Deserialize, Serialize};

pub const BLOCK_RATIO_LIMIT: f64 = 0.9;
pub const RATIOS_CHECKED: usize = 3;
pub const METHOD: &str = "dyadic block-ratio proxy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Convergent,
    Divergent,
    /// Censored mass, or too few complete blocks to judge.
    DivergentOrUnknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    /// `terms[i]` is the term of index `n = i + 1`.
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub block_sums: Vec<f64>,
    pub block_ratios: Vec<f64>,
    pub verdict: Verdict,
    pub method: String,
}

impl SeriesReport {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

fn ratio(prev: f64, next: f64) -> f64 {
    if next == 0.0 {
        0.0
    } else if prev == 0.0 {
        f64::INFINITY
    } else {
        next / prev
    }
}

/// Builds the report for terms indexed from `n = 1`. `censored` forces
/// [`Verdict::DivergentOrUnknown`].
pub fn dyadic_report(terms: Vec<f64>, censored: bool) -> SeriesReport {
    let partial_sums: Vec<f64> = terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    let mut block_sums = Vec::new();
    let mut start = 1usize;
    while 2 * start - 1 <= terms.len() {
        block_sums.push(terms[start - 1..2 * start - 1].iter().sum());
        start *= 2;
    }
    let block_ratios: Vec<f64> = block_sums.windows(2).map(|w| ratio(w[0], w[1])).collect();
    let verdict = if censored || block_ratios.len() < RATIOS_CHECKED {
        Verdict::DivergentOrUnknown
    } else if block_ratios[block_ratios.len() - RATIOS_CHECKED..]
        .iter()
        .all(|&r| r <= BLOCK_RATIO_LIMIT)
    {
        Verdict::Convergent
    } else {
        Verdict::Divergent
    };
    SeriesReport {
        terms,
        partial_sums,
        block_sums,
        block_ratios,
        verdict,
        method: METHOD.to_string(),
    }
}
