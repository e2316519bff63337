//! Concatenated collections built from a backward rate `b`:
//! `U_n = {x : |det Df^n(x)| ≥ b_n}`, first-entry times `u(x)`, chains,
//! greedy chain gluing and the tower-mass series.
//!
//! Membership is a strict log-space comparison with no tolerance. Only
//! [`concatenation_check`] applies slack, because it compares two summation
//! orders of the same orbit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapSystem, Point};
use crate::error::{Error, Result};
use crate::profile::{check_horizon, sample_histogram, TailProfile};
use crate::rates::RateSequence;
use crate::sampling;
use crate::series::{dyadic_report, SeriesReport};
use rand::Rng;

/// Log-space slack when re-verifying the concatenation implication.
pub const CONCATENATION_TOLERANCE: f64 = 1e-8;

fn check_point(system: &MapSystem, x: &Point) -> Result<()> {
    if system.contains(x) {
        Ok(())
    } else {
        Err(Error::Domain(x.coords()))
    }
}

/// `x ∈ U_n`, i.e. `S_n(x) ≥ log b_n`. Degenerate orbits are never members.
pub fn membership_u(system: &MapSystem, x: Point, b: &RateSequence, n: usize) -> Result<bool> {
    b.require_certified()?;
    b.ensure_covers(n)?;
    check_point(system, &x)?;
    Ok(system.cum_log_jac(x, n) >= b.log_at(n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub base: Point,
    /// `u(base)`, `None` when censored at `horizon`.
    pub u_value: Option<usize>,
    pub horizon: usize,
    /// `base, f(base), …, f^{u−1}(base)`; empty when censored.
    pub chain_points: Vec<Point>,
}

pub(crate) fn first_entry_value(system: &MapSystem, x: Point, b: &RateSequence, horizon: usize) -> Option<usize> {
    for (n, (_, sum)) in (1..=horizon).zip(system.forward(x)) {
        if sum >= b.log_at(n) {
            return Some(n);
        }
        if sum == f64::NEG_INFINITY {
            return None;
        }
    }
    None
}

/// `u(x) = min{n ≤ H : x ∈ U_n}` together with the chain it generates.
pub fn first_entry(system: &MapSystem, x: Point, b: &RateSequence, horizon: usize) -> Result<ChainState> {
    b.require_certified()?;
    check_horizon(horizon)?;
    b.ensure_covers(horizon)?;
    check_point(system, &x)?;
    let u_value = first_entry_value(system, x, b, horizon);
    let chain_points = match u_value {
        Some(u) => std::iter::once(x)
            .chain(system.forward(x).map(|(p, _)| p))
            .take(u)
            .collect(),
        None => Vec::new(),
    };
    Ok(ChainState {
        base: x,
        u_value,
        horizon,
        chain_points,
    })
}

/// Lebesgue histogram of `u`, i.e. estimates of `Leb(U*_n) = Leb(u^{-1}(n))`.
pub fn first_entry_profile(
    system: &MapSystem,
    b: &RateSequence,
    horizon: usize,
    samples: u64,
    seed: u64,
) -> Result<TailProfile> {
    b.require_certified()?;
    check_horizon(horizon)?;
    b.ensure_covers(horizon)?;
    let counts = sample_histogram(system, horizon, samples, seed, |x| first_entry_value(system, x, b, horizon));
    Ok(TailProfile::from_counts(&counts, Some(seed)))
}

/// Per-sample first-entry values in index order, for export.
pub fn first_entry_samples(
    system: &MapSystem,
    b: &RateSequence,
    horizon: usize,
    samples: u64,
    seed: u64,
) -> Result<Vec<Option<usize>>> {
    b.require_certified()?;
    check_horizon(horizon)?;
    b.ensure_covers(horizon)?;
    Ok((0..samples)
        .into_par_iter()
        .map(|i| {
            let x = system.sample_uniform(&mut sampling::stream(seed, i));
            first_entry_value(system, x, b, horizon)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub index: u64,
    pub point: Vec<f64>,
    pub n: usize,
    pub m: usize,
    /// `S_{n+m}(x) − log b_{n+m}`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcatenationReport {
    pub triples: u64,
    /// Triples where both `x ∈ U_n` and `f^n(x) ∈ U_m` held.
    pub premises_met: u64,
    pub violations: Vec<Violation>,
}

/// Samples `(x, n, m)` with `n + m ≤ H` and checks
/// `x ∈ U_n ∧ f^n(x) ∈ U_m ⇒ x ∈ U_{n+m}`, computing `S_{n+m}(x)` along the
/// full orbit and `S_m(f^n x)` from a fresh start.
pub fn concatenation_check(
    system: &MapSystem,
    b: &RateSequence,
    samples: u64,
    horizon: usize,
    seed: u64,
) -> Result<ConcatenationReport> {
    b.require_certified()?;
    check_horizon(horizon)?;
    b.ensure_covers(horizon)?;
    if horizon < 2 {
        return Err(Error::Config("concatenation check needs a horizon of at least 2".into()));
    }
    let outcomes: Vec<(bool, Option<Violation>)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::stream(seed, i);
            let x = system.sample_uniform(&mut rng);
            let n = rng.random_range(1..horizon);
            let m = rng.random_range(1..=horizon - n);
            let mut walk = system.forward(x);
            let (fx, s_n) = walk.nth(n - 1).expect("forward orbit is unbounded");
            let s_nm = walk.nth(m - 1).expect("forward orbit is unbounded").1;
            let s_m = system.cum_log_jac(fx, m);
            let premise = s_n >= b.log_at(n) && s_m >= b.log_at(m);
            let margin = s_nm - b.log_at(n + m);
            let violation = (premise && margin < -CONCATENATION_TOLERANCE).then(|| Violation {
                index: i,
                point: x.coords(),
                n,
                m,
                margin,
            });
            (premise, violation)
        })
        .collect();
    let premises_met = outcomes.iter().filter(|(p, _)| *p).count() as u64;
    Ok(ConcatenationReport {
        triples: samples,
        premises_met,
        violations: outcomes.into_iter().filter_map(|(_, v)| v).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainDecomposition {
    /// `u_0, …, u_s`.
    pub segments: Vec<usize>,
    pub total: usize,
    pub target_n: usize,
    /// Whether the orbit point at offset `target_n` lies inside the last chain.
    pub terminal_contains_x: bool,
}

/// Greedy chain gluing along an orbit `z, f(z), f²(z), …`.
///
/// `u_at(j)` returns `u(f^j z)` (or `None` if censored). Chains are stacked
/// from offset 0 until their lengths first cover `target_n`; by the
/// concatenation property `z ∈ U_total` with
/// `target_n ≤ total ≤ target_n + u_s`.
pub fn glue_decomposition<F>(mut u_at: F, target_n: usize) -> Result<ChainDecomposition>
where
    F: FnMut(usize) -> Option<usize>,
{
    if target_n == 0 {
        return Err(Error::Config("gluing target must be positive".into()));
    }
    let mut segments = Vec::new();
    let mut total = 0;
    while total < target_n {
        let u = u_at(total).ok_or(Error::CensoredGlue { offset: total })?;
        debug_assert!(u > 0, "first-entry values are positive");
        segments.push(u);
        total += u;
    }
    Ok(ChainDecomposition {
        segments,
        total,
        target_n,
        terminal_contains_x: total > target_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerMassReport {
    /// `Leb(U*_n)` estimates, `n = 1..=H`.
    pub leb_u_star: Vec<f64>,
    /// Majorised per-`n` terms `Σ_{j<n} min(1, b_j Leb(U*_n))`.
    pub series: SeriesReport,
}

/// Tower-mass series with `Leb(f^j(U*_n))` majorised by
/// `min(1, b_j · Leb(U*_n))`; no image measure is ever estimated directly.
pub fn tower_mass(b: &RateSequence, u_profile: &TailProfile) -> Result<TowerMassReport> {
    b.ensure_covers(u_profile.horizon.saturating_sub(1))?;
    let horizon = u_profile.horizon;
    let log_b: Vec<f64> = (0..horizon).map(|j| b.log_at(j)).collect();
    let terms = (1..=horizon)
        .map(|n| {
            let leb = u_profile.mu(n);
            if leb <= 0.0 {
                return 0.0;
            }
            let ln_leb = leb.ln();
            log_b[..n].iter().map(|lb| (lb + ln_leb).min(0.0).exp()).sum()
        })
        .collect();
    Ok(TowerMassReport {
        leb_u_star: u_profile.mu_hat.clone(),
        series: dyadic_report(terms, u_profile.censored_fraction > 0.0),
    })
}
