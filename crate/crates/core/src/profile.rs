//! Expansion hitting times and their tail sets.
//!
//! `h(x)` is the first `n ≥ 1` with `log|det Df^n(x)| ≥ log a_n`; the tail
//! `Γ_n = {h ≥ n}` is estimated by Monte Carlo under normalised Lebesgue
//! measure. Horizon-censored samples count towards every `Γ_n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapSystem, Point, MAX_ORBIT_HORIZON};
use crate::error::{Error, Result};
use crate::rates::RateSequence;
use crate::regression::{fit_weighted, LineFit};
use crate::sampling;
use crate::series::{dyadic_report, SeriesReport};

/// Smallest Monte Carlo sample accepted by [`estimate_tails`].
pub const MIN_SAMPLES: u64 = 100;
/// First index of the classification window.
pub const FIT_WINDOW_START: usize = 5;
/// Minimum number of surviving samples for an index to enter the window.
pub const MIN_SURVIVORS: f64 = 30.0;
/// Minimum number of positive tail entries needed to classify.
pub const MIN_TAIL_ENTRIES: usize = 10;
/// Minimum window length for the two-parameter fits.
pub const MIN_WINDOW_POINTS: usize = 4;
/// Minimum window length before the stretched form competes.
pub const STRETCHED_MIN_POINTS: usize = 6;
/// Stretched fits must cut the best two-parameter SSE by at least this factor.
pub const STRETCHED_SSE_RATIO: f64 = 0.5;
/// Range of `τ` accepted as a genuinely stretched regime.
pub const STRETCHED_TAU_RANGE: (f64, f64) = (0.1, 0.9);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitTime {
    At(usize),
    Censored(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingResult {
    pub value: HitTime,
    /// `S_h − log a_h` at the hit, or the closest approach when censored.
    pub margin: f64,
}

impl HittingResult {
    pub fn time(&self) -> Option<usize> {
        match self.value {
            HitTime::At(n) => Some(n),
            HitTime::Censored(_) => None,
        }
    }
}

pub(crate) fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 || horizon > MAX_ORBIT_HORIZON {
        return Err(Error::Config(format!(
            "horizon {horizon} outside 1..={MAX_ORBIT_HORIZON}"
        )));
    }
    Ok(())
}

/// First time the orbit of `x` clears the threshold sequence `a`.
pub fn hitting_time(
    system: &MapSystem,
    x: Point,
    a: &RateSequence,
    horizon: usize,
) -> Result<HittingResult> {
    check_horizon(horizon)?;
    a.ensure_covers(horizon)?;
    if !system.contains(&x) {
        return Err(Error::Domain(x.coords()));
    }
    Ok(hitting_time_unchecked(system, x, a, horizon))
}

fn hitting_time_unchecked(system: &MapSystem, x: Point, a: &RateSequence, horizon: usize) -> HittingResult {
    let mut best = f64::NEG_INFINITY;
    for (n, (_, sum)) in (1..=horizon).zip(system.forward(x)) {
        let margin = sum - a.log_at(n);
        if margin >= 0.0 {
            return HittingResult {
                value: HitTime::At(n),
                margin,
            };
        }
        if sum == f64::NEG_INFINITY {
            break;
        }
        best = best.max(margin);
    }
    HittingResult {
        value: HitTime::Censored(horizon),
        margin: best,
    }
}

/// Parallel histogram of an integer statistic over Lebesgue samples. Slot
/// `horizon` collects censored samples.
pub(crate) fn sample_histogram<F>(
    system: &MapSystem,
    horizon: usize,
    samples: u64,
    seed: u64,
    stat: F,
) -> Vec<u64>
where
    F: Fn(Point) -> Option<usize> + Sync,
{
    (0..samples)
        .into_par_iter()
        .fold(
            || vec![0u64; horizon + 1],
            |mut hist, i| {
                let x = system.sample_uniform(&mut sampling::stream(seed, i));
                match stat(x) {
                    Some(n) => hist[n - 1] += 1,
                    None => hist[horizon] += 1,
                }
                hist
            },
        )
        .reduce(
            || vec![0u64; horizon + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Empirical distribution of a hitting-type time over `1..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    pub horizon: usize,
    /// `mu_hat[n-1]` estimates `Leb(h = n)`.
    pub mu_hat: Vec<f64>,
    /// `gamma_tail[n-1]` estimates `Leb(Γ_n)`, censored mass included.
    pub gamma_tail: Vec<f64>,
    pub censored_fraction: f64,
    /// 0 marks a planted, noiseless profile.
    pub sample_size: u64,
    pub seed: Option<u64>,
}

impl TailProfile {
    /// Profile from integer counts; `counts[horizon]` holds the censored count.
    pub fn from_counts(counts: &[u64], seed: Option<u64>) -> Self {
        let horizon = counts.len() - 1;
        let total: u64 = counts.iter().sum();
        let nf = total as f64;
        let censored = counts[horizon];
        let mut suffix = censored;
        let mut gamma_tail = vec![0.0; horizon];
        for n in (0..horizon).rev() {
            suffix += counts[n];
            gamma_tail[n] = suffix as f64 / nf;
        }
        Self {
            horizon,
            mu_hat: counts[..horizon].iter().map(|&c| c as f64 / nf).collect(),
            gamma_tail,
            censored_fraction: censored as f64 / nf,
            sample_size: total,
            seed,
        }
    }

    /// Planted profile from relative masses of `h = 1..=H`, rescaled so the
    /// masses plus `censored` sum to one.
    pub fn from_masses(masses: &[f64], censored: f64) -> Self {
        let sum: f64 = masses.iter().sum();
        let scale = (1.0 - censored) / sum;
        let mu_hat: Vec<f64> = masses.iter().map(|m| m * scale).collect();
        let mut gamma_tail = vec![0.0; mu_hat.len()];
        let mut acc = censored;
        for n in (0..mu_hat.len()).rev() {
            acc += mu_hat[n];
            gamma_tail[n] = acc;
        }
        Self {
            horizon: mu_hat.len(),
            mu_hat,
            gamma_tail,
            censored_fraction: censored,
            sample_size: 0,
            seed: None,
        }
    }

    /// Planted profile with exactly the given tail values. The mass beyond the
    /// horizon is folded into `h = H`; the measure is not renormalised.
    pub fn from_tail(gamma_tail: Vec<f64>) -> Self {
        let h = gamma_tail.len();
        let mu_hat = (0..h)
            .map(|i| gamma_tail[i] - gamma_tail.get(i + 1).copied().unwrap_or(0.0))
            .collect();
        Self {
            horizon: h,
            mu_hat,
            gamma_tail,
            censored_fraction: 0.0,
            sample_size: 0,
            seed: None,
        }
    }

    /// `Leb(Γ_n)` for `1 ≤ n ≤ H`.
    pub fn gamma(&self, n: usize) -> f64 {
        self.gamma_tail[n - 1]
    }

    pub fn mu(&self, n: usize) -> f64 {
        self.mu_hat[n - 1]
    }

    pub fn is_planted(&self) -> bool {
        self.sample_size == 0
    }

    /// Binomial standard error of `gamma_tail(n)`; zero for planted profiles.
    pub fn stderr(&self, n: usize) -> f64 {
        if self.is_planted() {
            return 0.0;
        }
        let g = self.gamma(n);
        (g * (1.0 - g) / self.sample_size as f64).sqrt()
    }

    /// Inverse binomial variance of `log gamma_tail(n)`, `Nγ/(1 − γ)`; unit
    /// weight for planted profiles.
    fn log_weight(&self, n: usize) -> f64 {
        if self.is_planted() {
            return 1.0;
        }
        let g = self.gamma(n);
        self.sample_size as f64 * g / (1.0 - g).max(1.0 / self.sample_size as f64)
    }

    fn window_end(&self) -> usize {
        (1..=self.horizon)
            .rev()
            .find(|&n| {
                let g = self.gamma(n);
                g > 0.0 && (self.is_planted() || g * self.sample_size as f64 >= MIN_SURVIVORS)
            })
            .unwrap_or(0)
    }
}

/// Monte Carlo estimate of the hitting-time tail under normalised Lebesgue.
pub fn estimate_tails(
    system: &MapSystem,
    a: &RateSequence,
    horizon: usize,
    samples: u64,
    seed: u64,
) -> Result<TailProfile> {
    if samples < MIN_SAMPLES {
        return Err(Error::Config(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    check_horizon(horizon)?;
    a.ensure_covers(horizon)?;
    let counts = sample_histogram(system, horizon, samples, seed, |x| {
        hitting_time_unchecked(system, x, a, horizon).time()
    });
    Ok(TailProfile::from_counts(&counts, Some(seed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// `Leb(Γ_n) ≈ C e^{−αn}`.
    Exponential { alpha: f64 },
    /// `Leb(Γ_n) ≈ C e^{−αn^τ}`.
    Stretched { alpha: f64, tau: f64 },
    /// `Leb(Γ_n) ≈ C n^{−α}`.
    Polynomial { alpha: f64 },
    Trivial,
    Undetermined,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Exponential { .. } => "EXPONENTIAL",
            Regime::Stretched { .. } => "STRETCHED",
            Regime::Polynomial { .. } => "POLYNOMIAL",
            Regime::Trivial => "TRIVIAL",
            Regime::Undetermined => "UNDETERMINED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub model: String,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub log_c: f64,
    pub r2: f64,
    pub sse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailClass {
    pub regime: Regime,
    /// Coefficient of determination of the selected fit.
    pub fit_quality: f64,
    pub log_c: Option<f64>,
    pub window: Option<(usize, usize)>,
    pub candidates: Vec<CandidateFit>,
}

impl TailClass {
    fn bare(regime: Regime, fit_quality: f64) -> Self {
        Self {
            regime,
            fit_quality,
            log_c: None,
            window: None,
            candidates: Vec::new(),
        }
    }
}

fn candidate(model: &str, fit: LineFit, tau: Option<f64>) -> CandidateFit {
    CandidateFit {
        model: model.to_string(),
        alpha: -fit.slope,
        tau,
        log_c: fit.intercept,
        r2: fit.r2,
        sse: fit.sse,
    }
}

fn stretched_fit(ns: &[f64], ys: &[f64], ws: &[f64]) -> Option<(f64, LineFit)> {
    let at = |tau: f64| {
        let xs: Vec<f64> = ns.iter().map(|n| n.powf(tau)).collect();
        fit_weighted(&xs, ys, ws)
    };
    let mut best: Option<(f64, LineFit)> = None;
    for k in 5..=95 {
        let tau = k as f64 / 100.0;
        if let Some(f) = at(tau) {
            if best.is_none_or(|(_, b)| f.sse < b.sse) {
                best = Some((tau, f));
            }
        }
    }
    let (tau0, _) = best?;
    // golden-section refinement around the best grid node
    let (mut lo, mut hi) = ((tau0 - 0.01).max(0.05), (tau0 + 0.01).min(0.95));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let sse = |t: f64| at(t).map_or(f64::INFINITY, |f| f.sse);
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (sse(c), sse(d));
    for _ in 0..60 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = sse(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = sse(d);
        }
    }
    let tau = 0.5 * (lo + hi);
    match (at(tau), best) {
        (Some(f), Some((_, b))) if f.sse <= b.sse => Some((tau, f)),
        _ => best,
    }
}

/// Regime selection among exponential, stretched-exponential and polynomial
/// decay of `log gamma_tail(n)` over the window `[5, n_last]`.
///
/// Monte Carlo points are weighted by the inverse variance of
/// `log gamma_tail(n)`. The two-parameter forms compete on residual sum of
/// squares; the three-parameter stretched form only wins when it halves the
/// best two-parameter SSE with `τ` inside [`STRETCHED_TAU_RANGE`].
pub fn classify_tail(profile: &TailProfile) -> TailClass {
    let tail_mass_beyond_one = profile.censored_fraction > 0.0
        || (2..=profile.horizon).any(|n| profile.gamma(n) > 0.0);
    if !tail_mass_beyond_one {
        return TailClass::bare(Regime::Trivial, 1.0);
    }
    let positive = (1..=profile.horizon).filter(|&n| profile.gamma(n) > 0.0).count();
    if positive < MIN_TAIL_ENTRIES {
        return TailClass::bare(Regime::Undetermined, 0.0);
    }
    let end = profile.window_end();
    if end + 1 < FIT_WINDOW_START + MIN_WINDOW_POINTS {
        return TailClass::bare(Regime::Undetermined, 0.0);
    }
    let ns: Vec<f64> = (FIT_WINDOW_START..=end).map(|n| n as f64).collect();
    let ys: Vec<f64> = (FIT_WINDOW_START..=end).map(|n| profile.gamma(n).ln()).collect();
    let log_ns: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ws: Vec<f64> = (FIT_WINDOW_START..=end).map(|n| profile.log_weight(n)).collect();

    let (Some(exp), Some(poly)) = (fit_weighted(&ns, &ys, &ws), fit_weighted(&log_ns, &ys, &ws)) else {
        return TailClass::bare(Regime::Undetermined, 0.0);
    };
    let stretched = if ns.len() >= STRETCHED_MIN_POINTS {
        stretched_fit(&ns, &ys, &ws)
    } else {
        None
    };

    let mut candidates = vec![candidate("EXPONENTIAL", exp, None), candidate("POLYNOMIAL", poly, None)];
    if let Some((tau, f)) = stretched {
        candidates.push(candidate("STRETCHED", f, Some(tau)));
    }

    let (mut regime, mut chosen) = if exp.sse <= poly.sse {
        (Regime::Exponential { alpha: -exp.slope }, exp)
    } else {
        (Regime::Polynomial { alpha: -poly.slope }, poly)
    };
    if let Some((tau, f)) = stretched {
        let (lo, hi) = STRETCHED_TAU_RANGE;
        if f.sse <= STRETCHED_SSE_RATIO * chosen.sse && (lo..=hi).contains(&tau) {
            regime = Regime::Stretched { alpha: -f.slope, tau };
            chosen = f;
        }
    }
    if -chosen.slope <= 0.0 {
        regime = Regime::Undetermined;
    }
    TailClass {
        regime,
        fit_quality: chosen.r2,
        log_c: Some(chosen.intercept),
        window: Some((FIT_WINDOW_START, end)),
        candidates,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    pub p: f64,
    pub series: SeriesReport,
    /// Smallest `K` with `mu_hat(n) ≤ K n^{−p}` on the support.
    pub k_const: f64,
}

/// Partial sums of `Σ n^p mu_hat(n)` and the convergence proxy.
pub fn lp_diagnostic(profile: &TailProfile, p: f64) -> Result<LpReport> {
    if p.is_nan() || p <= 0.0 {
        return Err(Error::Config(format!("L^p exponent must be positive, got {p}")));
    }
    let terms: Vec<f64> = (1..=profile.horizon)
        .map(|n| (n as f64).powf(p) * profile.mu(n))
        .collect();
    let k_const = terms.iter().copied().fold(0.0, f64::max);
    Ok(LpReport {
        p,
        series: dyadic_report(terms, profile.censored_fraction > 0.0),
        k_const,
    })
}
