//! Threshold and backward rate sequences.
//!
//! All sequences are handled through `log_at(n)`, with `log_at(0) = 0`.
//! Certification checks `log b_k + log b_n ≥ log b_{k+n}` exhaustively for
//! `1 ≤ k, n ≤ K_CERT` (or up to the table length for tabulated rates).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{Regime, TailClass, TailProfile};
use crate::series::{dyadic_report, SeriesReport};

/// Exhaustive certification bound.
pub const K_CERT: usize = 2000;
/// Absolute log-space tolerance of the certification check.
pub const CERT_TOLERANCE: f64 = 1e-9;
/// Default share of the theoretical exponent budget given up as margin.
pub const DEFAULT_SLACK: f64 = 0.1;
/// Log-space tolerance of the domination check.
pub const DOMINATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RateFamily {
    /// `e^{cn}`
    Exp { c: f64 },
    /// `e^{c n^τ}`, `0 < τ ≤ 1`
    Stretched { c: f64, tau: f64 },
    /// `(n + 1)^c`
    Poly { c: f64 },
    /// Tabulated `log b_1, …, log b_L`.
    Custom { log_values: Vec<f64> },
}

impl RateFamily {
    pub fn custom_from_values(values: &[f64]) -> Self {
        RateFamily::Custom {
            log_values: values.iter().map(|v| v.ln()).collect(),
        }
    }

    fn justification(&self) -> Option<&'static str> {
        match self {
            RateFamily::Exp { .. } => Some("c(k+n) = ck + cn"),
            RateFamily::Stretched { .. } => Some("n -> n^tau is subadditive for 0 < tau <= 1"),
            RateFamily::Poly { .. } => Some("(k+1)(n+1) >= k+n+1"),
            RateFamily::Custom { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSequence {
    pub family: RateFamily,
    pub certified_submultiplicative: bool,
    /// Largest `k, n` covered by the exhaustive check.
    pub certification_bound: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
}

impl RateSequence {
    /// Validates and certifies a rate. Tabulated rates that fail the
    /// pairwise check come back uncertified rather than as an error.
    pub fn new(family: RateFamily) -> Result<Self> {
        match &family {
            RateFamily::Exp { c } | RateFamily::Poly { c } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::Config(format!("rate constant must be positive, got {c}")));
                }
            }
            RateFamily::Stretched { c, tau } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::Config(format!("rate constant must be positive, got {c}")));
                }
                if !(*tau > 0.0 && *tau <= 1.0) {
                    return Err(Error::Config(format!("stretch exponent must lie in (0, 1], got {tau}")));
                }
            }
            RateFamily::Custom { log_values } => {
                if log_values.is_empty() || log_values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("custom rate table must be non-empty and finite".into()));
                }
                if log_values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Config("custom rate table must be non-decreasing".into()));
                }
            }
        }
        let mut rate = Self {
            justification: family.justification().map(str::to_string),
            family,
            certified_submultiplicative: false,
            certification_bound: 0,
        };
        let bound = match rate.max_index() {
            Some(len) => K_CERT.min(len.saturating_sub(1)),
            None => K_CERT,
        };
        rate.certification_bound = bound;
        rate.certified_submultiplicative = rate.pairwise_check(bound);
        Ok(rate)
    }

    /// Exhaustive submultiplicativity check over `k, n ≤ bound`, `k + n`
    /// within the table.
    fn pairwise_check(&self, bound: usize) -> bool {
        let top = match self.max_index() {
            Some(len) => len.min(2 * bound),
            None => 2 * bound,
        };
        let logs: Vec<f64> = (0..=top).map(|n| self.log_at(n)).collect();
        (1..=bound).all(|k| {
            (1..=bound)
                .take_while(|n| k + n <= top)
                .all(|n| logs[k] + logs[n] >= logs[k + n] - CERT_TOLERANCE)
        })
    }

    /// `log b_n`. Beyond a custom table this is `+∞` (an unreachable
    /// threshold); callers guard with [`RateSequence::ensure_covers`].
    #[inline]
    pub fn log_at(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let nf = n as f64;
        match &self.family {
            RateFamily::Exp { c } => c * nf,
            RateFamily::Stretched { c, tau } => c * nf.powf(*tau),
            RateFamily::Poly { c } => c * (nf + 1.0).ln(),
            RateFamily::Custom { log_values } => log_values.get(n - 1).copied().unwrap_or(f64::INFINITY),
        }
    }

    /// Table length for custom rates, `None` for closed forms.
    pub fn max_index(&self) -> Option<usize> {
        match &self.family {
            RateFamily::Custom { log_values } => Some(log_values.len()),
            _ => None,
        }
    }

    pub fn ensure_covers(&self, horizon: usize) -> Result<()> {
        match self.max_index() {
            Some(len) if len < horizon => Err(Error::RateHorizon {
                requested: horizon,
                available: len,
            }),
            _ => Ok(()),
        }
    }

    pub fn require_certified(&self) -> Result<()> {
        if self.certified_submultiplicative {
            Ok(())
        } else {
            Err(Error::Uncertified)
        }
    }

    /// Growth variable used when fitting: `n`, `n^τ` or `log(n + 1)`.
    pub fn growth_variable(&self, n: usize) -> f64 {
        let nf = n as f64;
        match &self.family {
            RateFamily::Exp { .. } | RateFamily::Custom { .. } => nf,
            RateFamily::Stretched { tau, .. } => nf.powf(*tau),
            RateFamily::Poly { .. } => (nf + 1.0).ln(),
        }
    }

    /// Same family shape with constant `c`; `None` for custom tables.
    pub fn with_constant(&self, c: f64) -> Option<RateFamily> {
        match &self.family {
            RateFamily::Exp { .. } => Some(RateFamily::Exp { c }),
            RateFamily::Stretched { tau, .. } => Some(RateFamily::Stretched { c, tau: *tau }),
            RateFamily::Poly { .. } => Some(RateFamily::Poly { c }),
            RateFamily::Custom { .. } => None,
        }
    }
}

/// `(p − 3)/(p − 1)`, the supremum of admissible `γ` for `h ∈ L^p`.
pub fn gamma_bound(p: f64) -> Result<f64> {
    if p.is_nan() || p <= 3.0 {
        return Err(Error::Hypothesis(format!("integrability exponent must exceed 3, got {p}")));
    }
    Ok((p - 3.0) / (p - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeriveOptions {
    /// Overrides the regime-dependent default `γ`.
    pub gamma: Option<f64>,
    /// Defaults to [`DEFAULT_SLACK`].
    pub slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedRate {
    pub b: RateSequence,
    pub n0: usize,
    pub gamma: f64,
    pub slack: f64,
    /// Last index the domination inequality was checked at.
    pub horizon: usize,
}

fn dominated(b: &RateSequence, a: &RateSequence, profile: &TailProfile, gamma: f64, n: usize) -> bool {
    let g = profile.gamma(n);
    let tail_cap = if g > 0.0 { -gamma * g.ln() } else { f64::INFINITY };
    b.log_at(n) <= a.log_at(n).min(tail_cap) + DOMINATION_TOLERANCE
}

impl DerivedRate {
    /// Re-checks `log b_n ≤ min{log a_n, −γ log Leb(Γ_n)}` on `[n0, horizon]`.
    pub fn check_domination(&self, a: &RateSequence, profile: &TailProfile) -> bool {
        (self.n0..=self.horizon.min(profile.horizon)).all(|n| dominated(&self.b, a, profile, self.gamma, n))
    }
}

/// Default `γ`: 1/2 for (stretched) exponential tails, `(1 − 2/α)/2` for
/// polynomial tails, keeping the series `Σ n Leb(Γ_n)^{1−γ}` summable.
pub fn default_gamma(regime: &Regime) -> f64 {
    match *regime {
        Regime::Polynomial { alpha } => 0.5 * (1.0 - 2.0 / alpha),
        _ => 0.5,
    }
}

/// Backward rate `b` dominated by `min{a_n, Leb(Γ_n)^{−γ}}` from `n0` on.
///
/// Exponential tails give `b = EXP(β)` with `β = (1 − slack)·min(λ, γα)`,
/// stretched tails the stretched analogue with the fitted `τ`, polynomial
/// tails `b = POLY((1 − slack)·γα)` (requires `α > 2`). A trivial tail
/// (`Γ_n` empty for `n ≥ 2`) only constrains `b` by `a`, giving
/// `EXP((1 − slack)·λ)`.
pub fn derive_b(
    a: &RateSequence,
    profile: &TailProfile,
    class: &TailClass,
    options: DeriveOptions,
) -> Result<DerivedRate> {
    let RateFamily::Exp { c: lambda } = a.family else {
        return Err(Error::Config("threshold sequence must be exponential".into()));
    };
    if let Regime::Polynomial { alpha } = class.regime {
        if alpha <= 2.0 {
            return Err(Error::Hypothesis(format!(
                "polynomial tail exponent {alpha} does not exceed 2"
            )));
        }
    }
    let slack = options.slack.unwrap_or(DEFAULT_SLACK);
    if !(0.0..1.0).contains(&slack) {
        return Err(Error::Config(format!("slack must lie in [0, 1), got {slack}")));
    }
    let gamma = options.gamma.unwrap_or_else(|| default_gamma(&class.regime));
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let keep = 1.0 - slack;
    let family = match class.regime {
        Regime::Exponential { alpha } => RateFamily::Exp {
            c: keep * lambda.min(gamma * alpha),
        },
        Regime::Stretched { alpha, tau } => RateFamily::Stretched {
            c: keep * lambda.min(gamma * alpha),
            tau,
        },
        Regime::Polynomial { alpha } => RateFamily::Poly { c: keep * gamma * alpha },
        Regime::Trivial => RateFamily::Exp { c: keep * lambda },
        Regime::Undetermined => {
            return Err(Error::Config("cannot derive a rate from an undetermined tail".into()));
        }
    };
    let b = RateSequence::new(family)?;
    let horizon = profile.horizon;
    if !dominated(&b, a, profile, gamma, horizon) {
        return Err(Error::DerivationFailure { horizon });
    }
    let mut n0 = horizon;
    while n0 > 1 && dominated(&b, a, profile, gamma, n0 - 1) {
        n0 -= 1;
    }
    Ok(DerivedRate {
        b,
        n0,
        gamma,
        slack,
        horizon,
    })
}

/// Partial sums of `Σ n · Leb(Γ_n)^{1−γ}` with the convergence proxy.
pub fn theorem_series(profile: &TailProfile, gamma: f64) -> Result<SeriesReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let terms = (1..=profile.horizon)
        .map(|n| n as f64 * profile.gamma(n).powf(1.0 - gamma))
        .collect();
    Ok(dyadic_report(terms, profile.censored_fraction > 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::classify_tail;
    use crate::series::Verdict;

    fn rate(f: RateFamily) -> RateSequence {
        RateSequence::new(f).unwrap()
    }

    #[test]
    fn make_rate_examples() {
        let e = rate(RateFamily::Exp { c: 0.1 });
        assert!((e.log_at(2) + e.log_at(3) - e.log_at(5)).abs() < 1e-15);
        assert!((e.log_at(5) - 0.5).abs() < 1e-15);
        assert!(e.certified_submultiplicative);
        assert_eq!(e.certification_bound, K_CERT);

        let p = rate(RateFamily::Poly { c: 2.0 });
        assert!(((2.0 * p.log_at(1)).exp() - 16.0).abs() < 1e-12);
        assert!((p.log_at(2).exp() - 9.0).abs() < 1e-12);
        assert!(p.certified_submultiplicative);

        let c = rate(RateFamily::custom_from_values(&[2.0, 3.0, 7.0]));
        assert!(!c.certified_submultiplicative);
        assert!(c.require_certified().is_err());
    }

    #[test]
    fn custom_table_limits() {
        let c = rate(RateFamily::custom_from_values(&[2.0, 3.0, 5.0, 8.0]));
        assert!(c.certified_submultiplicative);
        assert_eq!(c.log_at(5), f64::INFINITY);
        assert!(c.ensure_covers(4).is_ok());
        assert!(matches!(c.ensure_covers(5), Err(Error::RateHorizon { .. })));
        assert!(RateSequence::new(RateFamily::custom_from_values(&[3.0, 2.0])).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(RateSequence::new(RateFamily::Exp { c: 0.0 }).is_err());
        assert!(RateSequence::new(RateFamily::Stretched { c: 1.0, tau: 1.5 }).is_err());
        assert!(RateSequence::new(RateFamily::Stretched { c: 1.0, tau: 0.0 }).is_err());
    }

    #[test]
    fn gamma_bound_examples() {
        assert_eq!(gamma_bound(5.0).unwrap(), 0.5);
        assert!((gamma_bound(3.0001).unwrap() - 0.0001 / 2.0001).abs() < 1e-15);
        assert!(matches!(gamma_bound(3.0), Err(Error::Hypothesis(_))));
    }

    fn exp_tail(alpha: f64, h: usize) -> TailProfile {
        TailProfile::from_tail((1..=h).map(|n| (-alpha * n as f64).exp()).collect())
    }

    #[test]
    fn derive_exponential_example() {
        let a = rate(RateFamily::Exp { c: 0.5 });
        let prof = exp_tail(0.4, 200);
        let class = classify_tail(&prof);
        let d = derive_b(
            &a,
            &prof,
            &class,
            DeriveOptions {
                gamma: Some(0.5),
                slack: Some(0.0),
            },
        )
        .unwrap();
        match d.b.family {
            RateFamily::Exp { c } => assert!((c - 0.2).abs() < 1e-9),
            ref f => panic!("{f:?}"),
        }
        assert_eq!(d.n0, 1);
        assert!(d.check_domination(&a, &prof));
    }

    #[test]
    fn derive_polynomial_example() {
        let a = rate(RateFamily::Exp { c: 0.5 });
        let prof = TailProfile::from_tail((1..=200).map(|n| (n as f64).powi(-4)).collect());
        let class = classify_tail(&prof);
        let d = derive_b(
            &a,
            &prof,
            &class,
            DeriveOptions {
                gamma: Some(0.4),
                slack: None,
            },
        )
        .unwrap();
        match d.b.family {
            RateFamily::Poly { c } => assert!((c - 1.44).abs() < 1e-6),
            ref f => panic!("{f:?}"),
        }
        // brute-force scan of (n+1)^1.44 <= min(e^{0.5n}, n^1.6): fails for n <= 5
        assert_eq!(d.n0, 6);
        assert!(d.check_domination(&a, &prof));
    }

    #[test]
    fn derive_rejects_weak_polynomial_tail() {
        let a = rate(RateFamily::Exp { c: 0.5 });
        let prof = TailProfile::from_tail((1..=200).map(|n| (n as f64).powf(-1.5)).collect());
        let class = TailClass {
            regime: Regime::Polynomial { alpha: 1.5 },
            ..classify_tail(&prof)
        };
        assert!(matches!(
            derive_b(&a, &prof, &class, DeriveOptions::default()),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn derive_trivial_and_undetermined() {
        let a = rate(RateFamily::Exp { c: 0.5 });
        let mut tail = vec![0.0; 30];
        tail[0] = 1.0;
        let prof = TailProfile::from_tail(tail);
        let class = classify_tail(&prof);
        assert_eq!(class.regime, Regime::Trivial);
        let d = derive_b(&a, &prof, &class, DeriveOptions::default()).unwrap();
        assert_eq!(d.b.family, RateFamily::Exp { c: 0.45 });
        assert_eq!(d.n0, 2);

        let und = TailClass {
            regime: Regime::Undetermined,
            ..class
        };
        assert!(matches!(derive_b(&a, &prof, &und, DeriveOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn theorem_series_examples() {
        let masses: Vec<f64> = (1..=255).map(|n| (n as f64).powi(-5)).collect();
        let prof = TailProfile::from_masses(&masses, 0.0);
        assert_eq!(theorem_series(&prof, 0.25).unwrap().verdict, Verdict::Convergent);
        assert_eq!(theorem_series(&prof, 0.6).unwrap().verdict, Verdict::Divergent);
        assert_eq!(theorem_series(&exp_tail(0.4, 200), 0.5).unwrap().verdict, Verdict::Convergent);
        assert!(theorem_series(&prof, 1.0).is_err());
        let censored = TailProfile::from_masses(&masses, 0.01);
        assert_eq!(theorem_series(&censored, 0.25).unwrap().verdict, Verdict::DivergentOrUnknown);
    }
}
